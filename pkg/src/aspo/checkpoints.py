"""Checkpoint database: evaluated configurations plus their synthesis artifacts.

Records are kept in insertion order and matched by a weighted squared
distance over per-parameter features: ordinal parameters compare scaled
ranks, categorical parameters contribute a 0/1 mismatch indicator.  The
minimum distance to the database doubles as the evaluation-cost estimate fed
to the acquisition function, and the per-parameter weights are learned by
coordinate descent against observed synthesis times.

Concurrency: single writer (the driver), any number of readers.  Persistence
is an append-friendly JSON-lines file; the artifact handle is an opaque
relative path derived from the configuration hash.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyDatabaseError, InsufficientRecordsError
from .space import CATEGORICAL, ParameterSpace, encode

WEIGHT_GRID = (0.1, 0.5, 1.0, 2.0, 10.0)
LEARN_SWEEPS = 3
LEARN_SUBSET = 20

_EPOCH = "2000-01-01T00:00:00Z"


@dataclass(frozen=True)
class DistanceWeights:
    """Non-negative per-parameter weights, aligned with the space's order."""

    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float))
        if np.any(self.w < 0):
            raise ValueError("weights must be non-negative")
        if not np.any(self.w > 0):
            raise ValueError("weights must not all be zero")

    @classmethod
    def ones(cls, space: ParameterSpace) -> "DistanceWeights":
        return cls(np.ones(len(space)))


@dataclass
class CheckpointRecord:
    config: dict
    encoded: np.ndarray
    metrics: object                  # EvaluationResult
    artifact: str
    synthesis_minutes: float
    inserted_at: str = _EPOCH

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "metrics": self.metrics.to_dict(),
            "synthesis_minutes": self.synthesis_minutes,
            "artifact": self.artifact,
            "inserted_at": self.inserted_at,
        }


def config_features(space: ParameterSpace, cfg: dict) -> np.ndarray:
    """Per-parameter numeric features: scaled rank, or category index.

    Category indices are only ever compared for equality, never subtracted.
    """
    out = np.empty(len(space))
    for i, p in enumerate(space.params):
        out[i] = p.rank_of(cfg[p.name]) if p.kind == CATEGORICAL \
            else p.scaled_rank(cfg[p.name])
    return out


def _is_categorical_mask(space: ParameterSpace) -> np.ndarray:
    return np.array([p.kind == CATEGORICAL for p in space.params])


def _pairwise_terms(space, fa: np.ndarray, fb: np.ndarray) -> np.ndarray:
    cat = _is_categorical_mask(space)
    terms = (fa - fb) ** 2
    terms[..., cat] = (fa[..., cat] != fb[..., cat]).astype(float)
    return terms


def weighted_distance(space: ParameterSpace, x: dict, q: dict,
                      weights: DistanceWeights) -> float:
    """Sum of w_i * feature-difference^2 over the space's parameters."""
    fx = config_features(space, x)
    fq = config_features(space, q)
    return float(np.dot(weights.w, _pairwise_terms(space, fx, fq)))


def artifact_path(space: ParameterSpace, cfg: dict) -> str:
    key = json.dumps([[p.name, cfg[p.name]] for p in space.params])
    return f"artifacts/{hashlib.sha256(key.encode()).hexdigest()[:16]}"


class CheckpointStore:
    """Insertion-ordered map of configurations to checkpoint records."""

    def __init__(self, space: ParameterSpace):
        self.space = space
        self._records: dict[tuple, CheckpointRecord] = {}
        self._features: dict[tuple, np.ndarray] = {}

    def _key(self, cfg: dict) -> tuple:
        return tuple(cfg[p.name] for p in self.space.params)

    def __len__(self) -> int:
        return len(self._records)

    def records(self) -> list[CheckpointRecord]:
        return list(self._records.values())

    def insert(self, record: CheckpointRecord) -> None:
        """Add or refresh a record; re-inserting keeps the original rank."""
        key = self._key(record.config)
        self._records[key] = record
        self._features[key] = config_features(self.space, record.config)

    def lookup(self, cfg: dict) -> CheckpointRecord | None:
        return self._records.get(self._key(cfg))

    def feature_matrix(self) -> np.ndarray:
        return np.stack(list(self._features.values())) \
            if self._features else np.empty((0, len(self.space)))

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as fh:
            for rec in self._records.values():
                fh.write(json.dumps(rec.to_dict()) + "\n")

    @classmethod
    def load(cls, path, space: ParameterSpace) -> "CheckpointStore":
        from .evaluation import EvaluationResult

        store = cls(space)
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            data = json.loads(line)
            store.insert(CheckpointRecord(
                config=data["config"],
                encoded=encode(space, data["config"]),
                metrics=EvaluationResult.from_dict(data["metrics"]),
                artifact=data["artifact"],
                synthesis_minutes=data["synthesis_minutes"],
                inserted_at=data["inserted_at"],
            ))
        return store


def _distances_to_all(store: CheckpointStore, cfg: dict,
                      weights: DistanceWeights) -> np.ndarray:
    F = store.feature_matrix()
    fx = config_features(store.space, cfg)
    terms = _pairwise_terms(store.space, F, fx[None, :])
    return terms @ weights.w


def match_config(store: CheckpointStore, cfg: dict,
                 weights: DistanceWeights) -> CheckpointRecord:
    """Record at minimum weighted distance; ties go to the earliest insert."""
    if len(store) == 0:
        raise EmptyDatabaseError("no checkpoints stored")
    d = _distances_to_all(store, cfg, weights)
    return store.records()[int(np.argmin(d))]


def cost_estimate(store: CheckpointStore, cfg: dict, weights: DistanceWeights,
                  prior: float = 1.0) -> float:
    """Minimum weighted distance to the database; ``prior`` when it is empty."""
    if len(store) == 0:
        return prior
    return float(_distances_to_all(store, cfg, weights).min())


def learn_weights(store: CheckpointStore, synthesis_time_fn, seed: int = 0,
                  grid=WEIGHT_GRID, sweeps: int = LEARN_SWEEPS,
                  subset: int = LEARN_SUBSET) -> DistanceWeights:
    """Pick weights minimizing leave-one-out synthesis time on a sampled subset.

    ``synthesis_time_fn(cfg, reference_record)`` supplies the time model.
    Coordinate descent over a fixed grid, starting from all-ones; a grid value
    is only adopted on strict improvement, so a flat objective returns the
    all-ones vector unchanged.
    """
    records = store.records()
    if len(records) < 3:
        raise InsufficientRecordsError(
            f"weight learning needs >= 3 records, have {len(records)}")
    rng = np.random.default_rng([seed, len(records)])
    if len(records) > subset:
        idx = rng.choice(len(records), size=subset, replace=False)
        sample = [records[i] for i in sorted(idx)]
    else:
        sample = records

    space = store.space
    feats = np.stack([config_features(space, r.config) for r in sample])

    def objective(w_vec: np.ndarray) -> float:
        total = 0.0
        for i, rec in enumerate(sample):
            terms = _pairwise_terms(space, np.delete(feats, i, axis=0),
                                    feats[i][None, :])
            d = terms @ w_vec
            j = int(np.argmin(d))
            ref = sample[j if j < i else j + 1]
            total += synthesis_time_fn(rec.config, ref)
        return total

    w = np.ones(len(space))
    best = objective(w)
    for _ in range(sweeps):
        for i in range(len(space)):
            for g in grid:
                if g == w[i]:
                    continue
                trial = w.copy()
                trial[i] = g
                val = objective(trial)
                if val < best:
                    best = val
                    w = trial
    return DistanceWeights(w)


class RelaxedCost:
    """Smooth surrogate of the cost estimate over the encoded box.

    On snapped points it coincides with ``cost_estimate``: ordinal
    coordinates contribute w*(u - q)^2 and each one-hot block contributes
    (w/2)*sum((u - h)^2), which equals the 0/1 mismatch at vertices.  The
    gradient follows the attaining (nearest) record, earliest insert on ties.
    """

    def __init__(self, store: CheckpointStore, weights: DistanceWeights,
                 prior: float = 1.0):
        self.space = store.space
        self.prior = prior
        records = store.records()
        if records:
            self.Q = np.stack([r.encoded for r in records])
        else:
            self.Q = np.empty((0, store.space.encoded_dim))
        cw = np.empty(store.space.encoded_dim)
        for i, (p, off) in enumerate(store.space.blocks()):
            cw[off:off + p.width] = weights.w[i] / (2.0 if p.kind == CATEGORICAL
                                                    else 1.0)
        self.coord_weights = cw

    def value_and_gradient(self, u: np.ndarray):
        if len(self.Q) == 0:
            return self.prior, np.zeros(self.space.encoded_dim)
        diff = u[None, :] - self.Q
        dists = (diff ** 2) @ self.coord_weights
        i = int(np.argmin(dists))
        grad = 2.0 * self.coord_weights * diff[i]
        return float(dists[i]), grad

    def value(self, u: np.ndarray) -> float:
        return self.value_and_gradient(np.asarray(u, dtype=float))[0]
