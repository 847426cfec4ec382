"""Acquisition functions and their constrained maximization.

Expected Improvement (minimization convention) is divided by a cooled
evaluation-cost estimate: candidates far from every stored checkpoint are
expensive to synthesize, so their acquisition value is discounted.  Two
cooling modes are provided:

* ``paper-ratio``: alpha / (lambda(t) * c(x)).  The schedule scales every
  candidate by the same positive factor, so it never changes the argmax;
  the cost penalty stays fully active for the whole run.
* ``exponent``: alpha / c(x) ** lambda(t).  Here the decaying schedule
  genuinely anneals the penalty: early iterations stay near cheap
  (well-matched) regions and the pressure relaxes as t grows.

Maximization runs a multi-start SLSQP ascent over the relaxed encoded box.
Gradients are taken on the un-snapped point (the snap projection is piecewise
constant and carries no gradient); snapping happens only when a local optimum
is emitted as a candidate.  Candidates that fail the exact constraint
semantics are discarded, so every returned configuration is feasible.

Queries whose posterior sigma sits at the duplicate floor (the variance left
at a point that snaps onto a training input) are treated as deterministic:
their EI collapses to max(best - mean, 0), which is zero at the incumbent.
Without this, the tiny-but-positive residual EI at an already-evaluated
design would be amplified by its near-zero cost estimate and the search
would keep re-proposing it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .checkpoints import RelaxedCost
from .constraints import exact_configuration, smooth_gradient, smooth_tree
from .errors import NoFeasibleCandidateError
from .gp import GpModel
from .space import ParameterSpace, decode, encode, relaxed_values, snap
from .warmstart import warm_start_configs

PAPER_RATIO = "paper-ratio"
EXPONENT = "exponent"

#: floor on the cost estimate; a candidate that coincides with a stored
#: checkpoint has distance zero and is short-circuited by the driver anyway
COST_EPS = 1e-6

N_UNIFORM_STARTS = 32
MAX_REJECTION_DRAWS = 100_000


@dataclass
class CoolingSchedule:
    lambda0: float = 1.0
    k: float = 0.1
    mode: str = PAPER_RATIO

    def __post_init__(self):
        if self.lambda0 <= 0:
            raise ValueError("lambda0 must be positive")
        if self.k < 0:
            raise ValueError("decay rate must be non-negative")
        if self.mode not in (PAPER_RATIO, EXPONENT):
            raise ValueError(f"unknown cooling mode {self.mode!r}")


def cooling_factor(schedule: CoolingSchedule, t: float) -> float:
    """lambda(t) = lambda0 * exp(-k t)."""
    if t < 0:
        raise ValueError("iteration index must be non-negative")
    return schedule.lambda0 * math.exp(-schedule.k * t)


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _norm_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z * _INV_SQRT2))


def _norm_pdf(z: float) -> float:
    return _INV_SQRT2PI * math.exp(-0.5 * z * z)


def ei_value(mean: float, sigma: float, best: float) -> float:
    """Closed-form Expected Improvement below ``best`` (minimization)."""
    if sigma <= 0.0:
        return max(best - mean, 0.0)
    z = (best - mean) / sigma
    return (best - mean) * _norm_cdf(z) + sigma * _norm_pdf(z)


def _ei_with_floor(mean, sigma, best, sigma_floor):
    """EI treating at-floor sigma as deterministic (no revisit value).

    In the deterministic branch, improvements smaller than the floor itself
    are interpolation roundoff at an already-evaluated design, not signal;
    they must be zeroed or the near-zero cost estimate of a stored design
    would amplify them past every genuine candidate.
    """
    if sigma <= sigma_floor:
        improvement = best - mean
        return improvement if improvement > sigma_floor else 0.0
    return ei_value(mean, sigma, best)


def expected_improvement(model: GpModel, x, best: float) -> float:
    """EI of an encoded point under the snap-composed posterior."""
    mean, var = model.predict(x)
    return _ei_with_floor(mean, math.sqrt(max(var, 0.0)), best,
                          model.duplicate_sigma_floor())


def cooled_value(alpha: float, cost: float, lam: float, mode: str = PAPER_RATIO,
                 eps: float = COST_EPS) -> float:
    """Combine an acquisition value with a cooled cost estimate."""
    c = max(cost, eps)
    if mode == PAPER_RATIO:
        return alpha / (lam * c)
    if mode == EXPONENT:
        return alpha / c ** lam
    raise ValueError(f"unknown cooling mode {mode!r}")


@dataclass
class AcquisitionContext:
    """Everything the cooled acquisition needs at one BO iteration."""

    model: GpModel
    best_feasible: float
    tree: object = None                       # constraint tree or None
    cost: RelaxedCost | None = None           # None means neutral cost 1.0
    schedule: CoolingSchedule = field(default_factory=CoolingSchedule)
    iteration: int = 0

    def lam(self) -> float:
        return cooling_factor(self.schedule, self.iteration)


def alpha_cool(ctx: AcquisitionContext, x) -> float:
    """Cooled acquisition at an encoded point (snapped first)."""
    q = snap(ctx.model.space, x)
    alpha = expected_improvement(ctx.model, q, ctx.best_feasible)
    cost = ctx.cost.value(q) if ctx.cost is not None else 1.0
    return cooled_value(alpha, cost, ctx.lam(), ctx.schedule.mode)


def _relaxed_objective(ctx: AcquisitionContext):
    """Negated cooled acquisition and gradient over the un-snapped box."""
    model = ctx.model
    best = ctx.best_feasible
    floor = model.duplicate_sigma_floor()
    lam = ctx.lam()
    mode = ctx.schedule.mode

    def fun(u):
        mean, var, dmean, dvar = model.predict_with_gradient(u)
        sigma = math.sqrt(max(var, 0.0))
        if sigma <= floor:
            improvement = best - mean
            if improvement > floor:
                ei, dei = improvement, -dmean
            else:
                ei, dei = 0.0, np.zeros_like(dmean)
        else:
            z = (best - mean) / sigma
            cdf, pdf = _norm_cdf(z), _norm_pdf(z)
            ei = (best - mean) * cdf + sigma * pdf
            dsigma = dvar / (2.0 * sigma)
            dei = -cdf * dmean + pdf * dsigma
        if ctx.cost is not None:
            c, dc = ctx.cost.value_and_gradient(u)
        else:
            c, dc = 1.0, np.zeros_like(u)
        if c < COST_EPS:
            c, dc = COST_EPS, np.zeros_like(u)
        if mode == PAPER_RATIO:
            denom = lam * c
            val = ei / denom
            grad = dei / denom - ei * lam * dc / denom ** 2
        else:
            scale = c ** lam
            val = ei / scale
            grad = (dei - ei * lam * dc / c) / scale
        return -val, -grad

    return fun


def _constraint_spec(space: ParameterSpace, tree):
    """SLSQP inequality dict for smooth_tree >= 0 over the relaxed box.

    The solver asks for the value and the jacobian at the same iterate, so
    the relaxed-value computation is memoized on the point's bytes.
    """
    cache = {"key": None, "values": None, "slopes": None}

    def relaxed_at(u):
        u = np.clip(u, 0.0, 1.0)
        key = u.tobytes()
        if cache["key"] != key:
            values, slopes = relaxed_values(space, u)
            cache.update(key=key, values=values, slopes=slopes)
        return cache["values"], cache["slopes"]

    def fun(u):
        values, _ = relaxed_at(u)
        return float(smooth_tree(tree, values))

    def jac(u):
        values, slopes = relaxed_at(u)
        partials = smooth_gradient(tree, values)
        g = np.zeros(space.encoded_dim)
        for name, dv in partials.items():
            idx, slope = slopes[name]
            g[idx] += dv * slope
        return g

    return {"type": "ineq", "fun": fun, "jac": jac}


#: candidates kept for the discrete polish pass
POLISH_TOP_K = 8


def _polish(ctx: AcquisitionContext, space: ParameterSpace, tree, cfg: dict,
            start_val: float, max_steps: int = 64):
    """Best-improvement walk over feasible single-parameter moves.

    The continuous ascent climbs the relaxed surface, whose maxima often sit
    between vertices of a one-hot block; this discrete pass re-optimizes the
    snapped configuration under the exact (snapped) acquisition.
    """
    current, current_val = cfg, start_val
    for _ in range(max_steps):
        best_move, best_val = None, current_val
        for p in space.params:
            for v in p.values:
                if v == current[p.name]:
                    continue
                cand = dict(current, **{p.name: v})
                if tree is not None and \
                        not exact_configuration(tree, space, cand):
                    continue
                val = alpha_cool(ctx, encode(space, cand))
                if val > best_val:
                    best_val, best_move = val, cand
        if best_move is None:
            break
        current, current_val = best_move, best_val
    return current, current_val


def maximize_acquisition(ctx: AcquisitionContext, space: ParameterSpace, tree,
                         *, seed: int = 0, warm_configs=None,
                         n_uniform: int = N_UNIFORM_STARTS,
                         maxiter: int = 60) -> dict:
    """Best exact-feasible configuration under the cooled acquisition.

    Multi-start constrained local search over the box: each start (the
    warm-start array points plus ``n_uniform`` seeded uniform draws) ascends
    the relaxed surface with SLSQP subject to the smooth constraint
    relaxation, both the start and its local optimum are snapped, snapped
    candidates failing the exact semantics are discarded, and the strongest
    few are polished by feasible single-parameter moves before the highest
    cooled acquisition wins (first on ties).  Falls back to rejection
    sampling when no start yields a feasible candidate.
    """
    if warm_configs is None:
        warm_configs = warm_start_configs(space, None, seed, budget=10)
    rng = np.random.default_rng([seed, ctx.iteration, 2])
    starts = [encode(space, cfg) for cfg in warm_configs]
    starts += list(rng.uniform(size=(n_uniform, space.encoded_dim)))

    objective = _relaxed_objective(ctx)
    constraints = [_constraint_spec(space, tree)] if tree is not None else []

    candidates: list[dict] = []
    seen: set[tuple] = set()

    def add_candidate(u: np.ndarray) -> None:
        cfg = decode(space, u)
        key = tuple(cfg[p.name] for p in space.params)
        if key in seen:
            return
        seen.add(key)
        if tree is not None and not exact_configuration(tree, space, cfg):
            return
        candidates.append(cfg)

    for u0 in starts:
        add_candidate(np.clip(u0, 0.0, 1.0))
        try:
            res = minimize(objective, u0, jac=True, method="SLSQP",
                           bounds=[(0.0, 1.0)] * space.encoded_dim,
                           constraints=constraints,
                           options={"maxiter": maxiter, "ftol": 1e-8})
        except Exception:
            continue
        add_candidate(np.clip(res.x, 0.0, 1.0))

    if candidates:
        scored = [(alpha_cool(ctx, encode(space, cfg)), i, cfg)
                  for i, cfg in enumerate(candidates)]
        scored.sort(key=lambda t: (-t[0], t[1]))
        best_cfg, best_val = None, -np.inf
        for val, _, cfg in scored[:POLISH_TOP_K]:
            polished, polished_val = _polish(ctx, space, tree, cfg, val)
            if polished_val > best_val:
                best_val, best_cfg = polished_val, polished
        return best_cfg

    draw_rng = np.random.default_rng([seed, ctx.iteration, 3])
    for _ in range(MAX_REJECTION_DRAWS):
        cfg = {p.name: p.values[int(draw_rng.integers(p.count))]
               for p in space.params}
        if tree is None or exact_configuration(tree, space, cfg):
            return cfg
    raise NoFeasibleCandidateError(
        "no feasible candidate found by local search or rejection sampling")


def maximize_ei_unconstrained(model: GpModel, space: ParameterSpace,
                              best: float, *, seed: int = 0, iteration: int = 0,
                              warm_configs=None,
                              n_uniform: int = N_UNIFORM_STARTS,
                              maxiter: int = 60) -> dict:
    """Plain EI maximization: no constraints, no cost, no feasibility filter.

    This is the conventional-BO proposal generator used as a baseline; the
    relaxed posterior is ascended with L-BFGS-B and the best snapped vertex
    by EI wins.
    """
    if warm_configs is None:
        warm_configs = warm_start_configs(space, None, seed, budget=10)
    ctx = AcquisitionContext(model=model, best_feasible=best)
    rng = np.random.default_rng([seed, iteration, 2])
    starts = [encode(space, cfg) for cfg in warm_configs]
    starts += list(rng.uniform(size=(n_uniform, space.encoded_dim)))
    objective = _relaxed_objective(ctx)

    best_cfg = None
    best_val = -np.inf
    seen: set[tuple] = set()
    for u0 in starts:
        res = minimize(objective, u0, jac=True, method="L-BFGS-B",
                       bounds=[(0.0, 1.0)] * space.encoded_dim,
                       options={"maxiter": maxiter})
        cfg = decode(space, np.clip(res.x, 0.0, 1.0))
        key = tuple(cfg[p.name] for p in space.params)
        if key in seen:
            continue
        seen.add(key)
        val = expected_improvement(model, encode(space, cfg), best)
        if val > best_val:
            best_val = val
            best_cfg = cfg
    return best_cfg
