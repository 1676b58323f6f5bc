"""Per-station clustering of daily arrival profiles and the online
nearest-centroid classifier that matches the unfolding day to a pattern."""

from __future__ import annotations

import datetime as dt
import json
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.metrics import silhouette_score

from .core import ConfigError, StationId
from .ingest import DailyProfile


@dataclass
class ClusterSet:
    station: StationId
    k: int
    centroids: np.ndarray              # (k, bins_per_day)
    members: dict[dt.date, int]        # service day -> cluster id

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=float)

    @property
    def day_count(self) -> list[int]:
        counts = [0] * self.k
        for c in self.members.values():
            counts[c] += 1
        return counts

    def to_json(self) -> dict:
        return {
            "station": self.station,
            "k": self.k,
            "centroids": self.centroids.tolist(),
            "members": {d.isoformat(): c for d, c in self.members.items()},
        }

    @classmethod
    def from_json(cls, doc: dict | str) -> "ClusterSet":
        if isinstance(doc, str):
            doc = json.loads(doc)
        return cls(
            station=doc["station"],
            k=int(doc["k"]),
            centroids=np.asarray(doc["centroids"], dtype=float),
            members={dt.date.fromisoformat(d): int(c) for d, c in doc["members"].items()},
        )


@dataclass(frozen=True)
class Classification:
    cluster_id: int
    distances: tuple[float, ...]
    bins_observed: int


def _kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = [X[int(rng.integers(n))]]
    for _ in range(1, k):
        d2 = np.min([np.sum((X - c) ** 2, axis=1) for c in centers], axis=0)
        total = d2.sum()
        if total <= 0:
            centers.append(X[int(rng.integers(n))])
            continue
        centers.append(X[int(rng.choice(n, p=d2 / total))])
    return np.array(centers)


def _lloyd(X: np.ndarray, k: int, rng: np.random.Generator,
           max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    centers = _kmeans_pp_init(X, k, rng)
    assign = np.full(X.shape[0], -1)
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = np.argmin(d2, axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            mask = assign == j
            if mask.any():
                centers[j] = X[mask].mean(axis=0)
            else:
                # re-seed an empty cluster at the farthest point
                centers[j] = X[np.argmax(d2.min(axis=1))]
    # final pass so centroids are exact member means
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    assign = np.argmin(d2, axis=1)
    for j in range(k):
        mask = assign == j
        if mask.any():
            centers[j] = X[mask].mean(axis=0)
    return centers, assign


def cluster_days(profiles: list[DailyProfile], k_range=range(2, 7),
                 seed: int = 0) -> ClusterSet:
    """K-means over one station's daily profiles; k picked by mean silhouette.

    Profiles are sorted by service day before seeding so the fit does not
    depend on input order.
    """
    if len(profiles) < 2:
        raise ConfigError("need at least 2 daily profiles to cluster")
    station = profiles[0].station
    if any(p.station != station for p in profiles):
        raise ConfigError("profiles must all belong to one station")
    profiles = sorted(profiles, key=lambda p: p.service_day)
    X = np.array([p.counts for p in profiles], dtype=float)
    n = X.shape[0]

    candidates = [k for k in k_range if 1 <= k <= n]
    if max(k_range, default=0) > n:
        warnings.warn(f"k_range upper bound clamped to {n} profiles")
    candidates = sorted(set(k for k in candidates if k < n))

    best = None  # (score, k, centers, assign)
    for k in candidates:
        rng = np.random.default_rng(seed)
        centers, assign = _lloyd(X, k, rng)
        if len(set(assign.tolist())) < 2:
            continue
        score = silhouette_score(X, assign)
        if best is None or score > best[0]:
            best = (score, k, centers, assign)

    if best is None:
        # one candidate or degenerate data: fall back to k=1
        centers = X.mean(axis=0, keepdims=True)
        assign = np.zeros(n, dtype=int)
        k = 1
    else:
        _, k, centers, assign = best

    members = {p.service_day: int(c) for p, c in zip(profiles, assign)}
    return ClusterSet(station=station, k=k, centroids=centers, members=members)


def classify_partial(partial: np.ndarray, cluster_set: ClusterSet) -> Classification:
    """Nearest centroid on the observed prefix, per-bin RMS distance."""
    partial = np.asarray(partial, dtype=float)
    b = len(partial)
    if b < 1:
        raise ValueError("need at least one observed bin to classify")
    if b > cluster_set.centroids.shape[1]:
        raise ValueError("partial longer than a day")
    diffs = cluster_set.centroids[:, :b] - partial[None, :]
    dists = np.sqrt((diffs ** 2).sum(axis=1)) / np.sqrt(b)
    return Classification(cluster_id=int(np.argmin(dists)),
                          distances=tuple(float(d) for d in dists),
                          bins_observed=b)


def centroid_value(cluster_set: ClusterSet, cluster_id: int, bin_index: int) -> float:
    if not 0 <= cluster_id < cluster_set.k:
        raise IndexError(f"cluster_id {cluster_id} out of range")
    if not 0 <= bin_index < cluster_set.centroids.shape[1]:
        raise IndexError(f"bin {bin_index} out of range")
    return float(cluster_set.centroids[cluster_id, bin_index])
