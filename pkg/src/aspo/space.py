"""Design spaces and the continuous encoding used by the surrogate model.

A space is an ordered list of parameters, each either categorical (a list of
named options) or ordinal (a strictly increasing list of integers).  A
configuration assigns one admissible value to every parameter.  Configurations
are embedded into [0, 1]^D: a categorical with k options occupies a k-wide
one-hot block, an ordinal occupies a single coordinate holding its scaled rank
rank/(count-1).  ``snap`` projects any point of the box onto the nearest
admissible vertex, which is the representation the covariance kernel sees.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidConfigurationError, InvalidPointError

CATEGORICAL = "categorical"
ORDINAL = "ordinal"

# Encoded coordinates may drift out of [0, 1] by solver roundoff; anything
# beyond speaks of a real bug and is rejected rather than clamped.
_BOX_TOL = 1e-9


@dataclass(frozen=True)
class ParameterDef:
    """One tunable parameter: its kind, admissible values, and default."""

    name: str
    kind: str
    values: tuple
    default: object

    def __post_init__(self):
        if self.kind not in (CATEGORICAL, ORDINAL):
            raise InvalidConfigurationError(
                f"parameter {self.name!r}: unknown kind {self.kind!r}")
        if not self.values:
            raise InvalidConfigurationError(
                f"parameter {self.name!r}: empty value list")
        if len(set(self.values)) != len(self.values):
            raise InvalidConfigurationError(
                f"parameter {self.name!r}: duplicate values")
        if self.kind == ORDINAL:
            if not all(isinstance(v, int) and not isinstance(v, bool)
                       for v in self.values):
                raise InvalidConfigurationError(
                    f"parameter {self.name!r}: ordinal values must be integers")
            if any(b <= a for a, b in zip(self.values, self.values[1:])):
                raise InvalidConfigurationError(
                    f"parameter {self.name!r}: ordinal values must be strictly "
                    "increasing")
        if self.default not in self.values:
            raise InvalidConfigurationError(
                f"parameter {self.name!r}: default {self.default!r} not among "
                "admissible values")

    @property
    def count(self) -> int:
        return len(self.values)

    @property
    def width(self) -> int:
        """Number of encoded coordinates this parameter occupies."""
        return self.count if self.kind == CATEGORICAL else 1

    def rank_of(self, value) -> int:
        return self.values.index(value)

    def scaled_rank(self, value) -> float:
        """Rank mapped to [0, 1]; a single-valued parameter sits at 0."""
        if self.count == 1:
            return 0.0
        return self.rank_of(value) / (self.count - 1)


class ParameterSpace:
    """Ordered collection of parameters plus the derived encoding layout."""

    def __init__(self, params):
        params = tuple(params)
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise InvalidConfigurationError("duplicate parameter names")
        self.params = params
        self._by_name = {p.name: p for p in params}
        offsets = []
        pos = 0
        for p in params:
            offsets.append(pos)
            pos += p.width
        self._offsets = tuple(offsets)
        self.encoded_dim = pos

    def __len__(self) -> int:
        return len(self.params)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def param(self, name: str) -> ParameterDef:
        try:
            return self._by_name[name]
        except KeyError:
            raise InvalidConfigurationError(f"unknown parameter {name!r}") from None

    def block(self, name: str) -> tuple[int, int]:
        """(offset, width) of a parameter's encoded coordinates."""
        p = self.param(name)
        return self._offsets[self.params.index(p)], p.width

    def blocks(self):
        """Yield (param, offset) pairs in declaration order."""
        return zip(self.params, self._offsets)

    def default_configuration(self) -> dict:
        return {p.name: p.default for p in self.params}

    def validate(self, cfg: dict) -> None:
        extra = set(cfg) - set(self._by_name)
        if extra:
            raise InvalidConfigurationError(
                f"unknown parameter(s): {sorted(extra)}")
        for p in self.params:
            if p.name not in cfg:
                raise InvalidConfigurationError(f"missing parameter {p.name!r}")
            if cfg[p.name] not in p.values:
                raise InvalidConfigurationError(
                    f"parameter {p.name!r}: value {cfg[p.name]!r} not admissible")

    def size(self) -> int:
        """Number of distinct configurations."""
        return math.prod(p.count for p in self.params)

    def iter_configurations(self):
        """All configurations in lexicographic order; only for small spaces."""
        for combo in itertools.product(*(p.values for p in self.params)):
            yield {p.name: v for p, v in zip(self.params, combo)}

    def ordinal_values(self, cfg: dict) -> dict:
        """Numeric view of a configuration: ordinal parameter values only."""
        return {p.name: cfg[p.name] for p in self.params if p.kind == ORDINAL}

    @classmethod
    def from_dict(cls, data: dict) -> "ParameterSpace":
        try:
            raw = data["parameters"]
        except (KeyError, TypeError):
            raise InvalidConfigurationError(
                'space definition must contain a "parameters" list') from None
        params = []
        for entry in raw:
            try:
                params.append(ParameterDef(
                    name=entry["name"],
                    kind=entry["kind"],
                    values=tuple(entry["values"]),
                    default=entry["default"],
                ))
            except KeyError as exc:
                raise InvalidConfigurationError(
                    f"space entry missing field {exc}") from None
        return cls(params)

    @classmethod
    def from_json(cls, text: str) -> "ParameterSpace":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidConfigurationError(f"space file: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ParameterSpace":
        return cls.from_json(Path(path).read_text())

    def to_dict(self) -> dict:
        return {"parameters": [
            {"name": p.name, "kind": p.kind, "values": list(p.values),
             "default": p.default}
            for p in self.params
        ]}


def _check_point(space: ParameterSpace, point) -> np.ndarray:
    arr = np.asarray(point, dtype=float)
    if arr.shape != (space.encoded_dim,):
        raise InvalidPointError(
            f"expected dimension {space.encoded_dim}, got shape {arr.shape}")
    if np.any(arr < -_BOX_TOL) or np.any(arr > 1.0 + _BOX_TOL):
        raise InvalidPointError("coordinates outside [0, 1]")
    return arr


def encode(space: ParameterSpace, cfg: dict) -> np.ndarray:
    """Embed a configuration into [0, 1]^D (one-hot blocks + scaled ranks)."""
    space.validate(cfg)
    out = np.zeros(space.encoded_dim)
    for p, off in space.blocks():
        if p.kind == CATEGORICAL:
            out[off + p.rank_of(cfg[p.name])] = 1.0
        else:
            out[off] = p.scaled_rank(cfg[p.name])
    return out


def snap(space: ParameterSpace, point) -> np.ndarray:
    """Project a point of the box onto the nearest admissible vertex.

    Each one-hot block collapses to its arg-max vertex (ties to the lowest
    index); each ordinal coordinate rounds to the nearest scaled rank (ties
    to the lower rank).  Idempotent by construction.
    """
    arr = _check_point(space, point)
    out = np.zeros_like(arr)
    for p, off in space.blocks():
        if p.kind == CATEGORICAL:
            out[off + int(np.argmax(arr[off:off + p.width]))] = 1.0
        elif p.count == 1:
            out[off] = 0.0
        else:
            # ceil(x - 0.5) rounds half-way cases down
            rank = int(np.ceil(arr[off] * (p.count - 1) - 0.5))
            out[off] = rank / (p.count - 1)
    return out


def decode(space: ParameterSpace, point) -> dict:
    """Inverse of ``encode`` after snapping; always yields a valid configuration."""
    snapped = snap(space, point)
    cfg = {}
    for p, off in space.blocks():
        if p.kind == CATEGORICAL:
            cfg[p.name] = p.values[int(np.argmax(snapped[off:off + p.width]))]
        elif p.count == 1:
            cfg[p.name] = p.values[0]
        else:
            cfg[p.name] = p.values[round(snapped[off] * (p.count - 1))]
    return cfg


def relaxed_values(space: ParameterSpace, point):
    """Continuous numeric view of an un-snapped point, for smooth constraints.

    Ordinal coordinates are mapped to parameter units by piecewise-linear
    interpolation along the rank scale.  Returns ``(values, slopes)`` where
    ``slopes[name] = (coordinate index, d value / d coordinate)`` so callers
    can chain gradients back to the encoded box.  Categorical parameters have
    no numeric view and are omitted.
    """
    arr = _check_point(space, point)
    values, slopes = {}, {}
    for p, off in space.blocks():
        if p.kind != ORDINAL:
            continue
        if p.count == 1:
            values[p.name] = float(p.values[0])
            slopes[p.name] = (off, 0.0)
            continue
        pos = float(np.clip(arr[off], 0.0, 1.0)) * (p.count - 1)
        i0 = min(int(pos), p.count - 2)
        frac = pos - i0
        lo, hi = p.values[i0], p.values[i0 + 1]
        values[p.name] = lo + frac * (hi - lo)
        slopes[p.name] = (off, (hi - lo) * (p.count - 1))
    return values, slopes
