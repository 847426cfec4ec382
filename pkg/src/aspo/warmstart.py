"""Orthogonal-array warm start: evenly spread initial configurations.

Strength-2 orthogonal arrays are generated with the Bose construction
OA(s^2, F, s, 2) for a prime level count s; mixed or non-prime level counts
are handled by building the smallest covering prime array and collapsing each
column onto its factor's levels with a seeded, balanced map.  Collapsed
arrays generally lose exact pair balance and are flagged accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constraints import exact_configuration
from .errors import InfeasibleSpaceError
from .space import ParameterSpace

MAX_REJECTION_DRAWS = 100_000


@dataclass
class OrthogonalArray:
    rows: np.ndarray          # (N, F) level indices
    levels: tuple             # per-factor level counts
    strength: int
    exact: bool


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    for d in range(2, int(n ** 0.5) + 1):
        if n % d == 0:
            return False
    return True


def _next_prime(n: int) -> int:
    while not _is_prime(n):
        n += 1
    return n


def _bose(s: int, f: int) -> np.ndarray:
    """OA(s^2, f, s, 2) for prime s and f <= s + 1."""
    i, j = np.divmod(np.arange(s * s), s)
    cols = [i, j]
    for k in range(2, f):
        cols.append((i + (k - 1) * j) % s)
    return np.stack(cols[:f], axis=1)


def pair_balance_deficit(rows: np.ndarray, levels) -> int:
    """Max spread of ordered-pair counts over all column pairs; 0 means exact."""
    worst = 0
    f = rows.shape[1]
    for a in range(f):
        for b in range(a + 1, f):
            counts = np.zeros((levels[a], levels[b]), dtype=int)
            np.add.at(counts, (rows[:, a], rows[:, b]), 1)
            worst = max(worst, int(counts.max() - counts.min()))
    return worst


def generate_oa(level_counts, seed: int = 0) -> OrthogonalArray:
    """Strength-2 array (exact or near) covering the given level counts."""
    levels = tuple(int(c) for c in level_counts)
    if not levels:
        raise ValueError("need at least one factor")
    f = len(levels)
    if f == 1:
        rows = np.arange(levels[0], dtype=int)[:, None]
        return OrthogonalArray(rows, levels, 2, exact=True)

    distinct = set(levels)
    if len(distinct) == 1 and _is_prime(levels[0]) and f <= levels[0] + 1:
        rows = _bose(levels[0], f)
        return OrthogonalArray(rows, levels, 2, exact=True)

    s = _next_prime(max(max(levels), f - 1))
    rows = _bose(s, f)
    rng = np.random.default_rng(seed)
    for col, count in enumerate(levels):
        if count == s:
            continue
        # balanced map: each target level absorbs floor(s/count) or one more
        base, rem = divmod(s, count)
        mapping = np.repeat(np.arange(count), base)
        mapping = np.concatenate([mapping, np.arange(rem)])
        rng.shuffle(mapping)
        rows[:, col] = mapping[rows[:, col]]
    exact = pair_balance_deficit(rows, levels) == 0
    return OrthogonalArray(rows, levels, 2, exact=exact)


def warm_start_configs(space: ParameterSpace, tree, seed: int,
                       budget: int) -> list[dict]:
    """Feasible, distinct configurations for the initial evaluation round.

    Array rows are mapped to configurations and filtered by the exact
    constraint semantics in array order; if fewer than ``budget`` survive,
    seeded rejection sampling tops the list up.
    """
    if budget < 1:
        raise ValueError("warm-start budget must be at least 1")
    oa = generate_oa([p.count for p in space.params], seed)
    chosen: list[dict] = []
    seen: set[tuple] = set()

    def try_add(cfg: dict) -> None:
        key = tuple(cfg[p.name] for p in space.params)
        if key in seen:
            return
        if not exact_configuration(tree, space, cfg):
            return
        seen.add(key)
        chosen.append(cfg)

    for row in oa.rows:
        if len(chosen) >= budget:
            break
        try_add({p.name: p.values[int(level)]
                 for p, level in zip(space.params, row)})

    rng = np.random.default_rng([seed, 1])
    draws = 0
    while len(chosen) < budget:
        if draws >= MAX_REJECTION_DRAWS:
            raise InfeasibleSpaceError(
                f"could not collect {budget} feasible configurations within "
                f"{MAX_REJECTION_DRAWS} draws ({len(chosen)} found)")
        draws += 1
        try_add({p.name: p.values[int(rng.integers(p.count))]
                 for p in space.params})
    return chosen[:budget]
