"""Real-time predictive decision support for a metro line: arrival and OD
forecasting from fare-gate taps, capacity-constrained line simulation, and
gate-closure what-if evaluation."""

__version__ = "0.1.0"
