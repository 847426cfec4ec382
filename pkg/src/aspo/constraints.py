"""Declarative parameter constraints with two evaluation routes.

A constraint tree is a conjunction (root) of inequality, conditional-interval,
and divisibility leaves, optionally grouped under nested any/all nodes.  Each
tree supports:

* ``exact_tree``   -- discrete Boolean semantics over integer parameter values;
* ``smooth_tree``  -- a differentiable relaxation whose sign agrees with the
  exact semantics at every admissible configuration (non-negative means
  satisfied);
* ``smooth_gradient`` -- the subgradient of the relaxation, used by the
  constrained acquisition solver.

All smooth functions accept scalars or numpy arrays for the parameter values,
so whole grids of configurations can be checked in one call.

Encoding notes.  A conditional "if x1 in [a1,b1] then x2 in [a2,b2]" is
relaxed as ``max(-c1(x1) - m, min(c1(x1), c2(x2)))`` with ``c(v) =
-(v-a)(v-b)``.  The margin ``m`` shifts the vacuous branch strictly below zero
on the condition interval's boundary: without it a value sitting exactly on
``a1`` or ``b1`` would register as vacuously satisfied even when the
consequence fails.  Parsers derive ``m`` from the admissible values of the
condition parameter (half the smallest clearance of any admissible value lying
outside the interval), which keeps the sign of the relaxation exact on the
whole grid.  Strict inequalities are reduced to non-strict ones by subtracting
the smallest positive value the left-hand side attains on the grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintSyntaxError, DomainError, UnknownParameterError
from .space import ORDINAL, ParameterSpace

# |smooth| at or above zero minus this tolerance counts as satisfied; the
# divisibility relaxation evaluates sin at large multiples of pi, which lands
# near -1e-29 instead of 0 in float64.
SIGN_TOL = 1e-9

# Fallback vacuity margin for hand-built conditionals; safe for integer grids
# whose admissible values clear interval endpoints by at least one unit.
_DEFAULT_MARGIN = 0.5


@dataclass(frozen=True)
class Inequality:
    """ka*xa - kb*xb + t >= 0."""

    ka: float
    xa: str
    kb: float
    xb: str
    t: float


@dataclass(frozen=True)
class IntervalAtom:
    """param in [lo, hi]."""

    param: str
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ConstraintSyntaxError(
                f"interval for {self.param!r}: lo {self.lo} > hi {self.hi}")


@dataclass(frozen=True)
class Conditional:
    """If the condition interval holds, the consequence interval must too."""

    condition: IntervalAtom
    consequence: IntervalAtom
    vacuity_margin: float = _DEFAULT_MARGIN


@dataclass(frozen=True)
class Divisibility:
    """xb divides xa (xa mod xb == 0)."""

    xa: str
    xb: str


@dataclass(frozen=True)
class Conj:
    children: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not self.children:
            raise ConstraintSyntaxError("conjunction with no children")


@dataclass(frozen=True)
class Disj:
    children: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not self.children:
            raise ConstraintSyntaxError("disjunction with no children")


def _interval_value(atom: IntervalAtom, v):
    """-(v - lo)(v - hi): non-negative exactly on [lo, hi]."""
    return -(v - atom.lo) * (v - atom.hi)


def smooth_inequality(c: Inequality, values):
    return c.ka * values[c.xa] - c.kb * values[c.xb] + c.t


def smooth_interval_atom(atom: IntervalAtom, v):
    return _interval_value(atom, v)


def _smooth_divisibility(d: Divisibility, values):
    xb = values[d.xb]
    if np.any(np.asarray(xb) == 0):
        raise DomainError(f"divisibility {d.xa!r} by {d.xb!r}: zero divisor")
    return -np.sin(np.pi * values[d.xa] / xb) ** 2


def smooth_tree(tree, values):
    """Smooth constraint value; >= 0 (within SIGN_TOL) means satisfied.

    ``values`` maps parameter names to numbers in parameter units (not encoded
    coordinates); numpy arrays broadcast elementwise.
    """
    if isinstance(tree, Conj):
        return np.minimum.reduce([smooth_tree(c, values) for c in tree.children])
    if isinstance(tree, Disj):
        return np.maximum.reduce([smooth_tree(c, values) for c in tree.children])
    if isinstance(tree, Inequality):
        return smooth_inequality(tree, values)
    if isinstance(tree, Conditional):
        c1 = _interval_value(tree.condition, values[tree.condition.param])
        c2 = _interval_value(tree.consequence, values[tree.consequence.param])
        return np.maximum(-c1 - tree.vacuity_margin, np.minimum(c1, c2))
    if isinstance(tree, Divisibility):
        return _smooth_divisibility(tree, values)
    raise TypeError(f"not a constraint node: {tree!r}")


def smooth_satisfied(value, tol: float = SIGN_TOL):
    """Interpret a smooth constraint value as a Boolean (array)."""
    return np.asarray(value) >= -tol if isinstance(value, np.ndarray) \
        else value >= -tol


def exact_tree(tree, values):
    """Exact discrete semantics over integer parameter values.

    Accepts either a configuration mapping or per-parameter numpy arrays;
    returns a bool (or bool array).
    """
    if isinstance(tree, Conj):
        parts = [exact_tree(c, values) for c in tree.children]
        out = parts[0]
        for p in parts[1:]:
            out = np.logical_and(out, p)
        return out
    if isinstance(tree, Disj):
        parts = [exact_tree(c, values) for c in tree.children]
        out = parts[0]
        for p in parts[1:]:
            out = np.logical_or(out, p)
        return out
    if isinstance(tree, Inequality):
        return smooth_inequality(tree, values) >= 0
    if isinstance(tree, Conditional):
        cond = tree.condition
        cons = tree.consequence
        inside = np.logical_and(values[cond.param] >= cond.lo,
                                values[cond.param] <= cond.hi)
        holds = np.logical_and(values[cons.param] >= cons.lo,
                               values[cons.param] <= cons.hi)
        return np.logical_or(np.logical_not(inside), holds)
    if isinstance(tree, Divisibility):
        xb = values[tree.xb]
        if np.any(np.asarray(xb) == 0):
            raise DomainError(f"divisibility {tree.xa!r} by {tree.xb!r}: zero divisor")
        return values[tree.xa] % xb == 0
    raise TypeError(f"not a constraint node: {tree!r}")


def exact_configuration(tree, space: ParameterSpace, cfg: dict) -> bool:
    """Convenience wrapper: exact semantics on a configuration of a space."""
    if tree is None:
        return True
    return bool(exact_tree(tree, space.ordinal_values(cfg)))


def smooth_gradient(tree, values) -> dict:
    """Subgradient of ``smooth_tree`` with respect to each parameter value.

    At min/max kinks the gradient of the attaining child is used, ties broken
    toward the lowest-index child.  Returns a dict covering every parameter
    mentioned in the tree (zero entries included).
    """
    value, grad = _value_and_gradient(tree, values)
    return grad


def _value_and_gradient(tree, values):
    if isinstance(tree, (Conj, Disj)):
        pairs = [_value_and_gradient(c, values) for c in tree.children]
        best_i = 0
        for i in range(1, len(pairs)):
            v = pairs[i][0]
            # strict comparison keeps the lowest index on ties
            if (v < pairs[best_i][0]) if isinstance(tree, Conj) else (v > pairs[best_i][0]):
                best_i = i
        merged = {}
        for _, g in pairs:
            for k in g:
                merged.setdefault(k, 0.0)
        merged.update(pairs[best_i][1])
        return pairs[best_i][0], merged
    if isinstance(tree, Inequality):
        v = smooth_inequality(tree, values)
        grad = {tree.xa: 0.0, tree.xb: 0.0}
        grad[tree.xa] += tree.ka
        grad[tree.xb] += -tree.kb
        return v, grad
    if isinstance(tree, Conditional):
        cond, cons = tree.condition, tree.consequence
        v1, v2 = values[cond.param], values[cons.param]
        c1 = _interval_value(cond, v1)
        c2 = _interval_value(cons, v2)
        dc1 = -(2 * v1 - cond.lo - cond.hi)
        dc2 = -(2 * v2 - cons.lo - cons.hi)
        vac = -c1 - tree.vacuity_margin
        if c1 <= c2:
            inner, inner_grad = c1, {cond.param: dc1, cons.param: 0.0}
        else:
            inner, inner_grad = c2, {cond.param: 0.0, cons.param: dc2}
        if vac >= inner:
            grad = {cond.param: -dc1, cons.param: 0.0}
            return vac, grad
        return inner, inner_grad
    if isinstance(tree, Divisibility):
        v = _smooth_divisibility(tree, values)
        a, b = values[tree.xa], values[tree.xb]
        s = np.sin(2 * np.pi * a / b)
        return v, {tree.xa: -s * np.pi / b, tree.xb: s * np.pi * a / b ** 2}
    raise TypeError(f"not a constraint node: {tree!r}")


def tree_parameters(tree) -> set:
    """All parameter names a tree mentions."""
    if isinstance(tree, (Conj, Disj)):
        out = set()
        for c in tree.children:
            out |= tree_parameters(c)
        return out
    if isinstance(tree, Inequality):
        return {tree.xa, tree.xb}
    if isinstance(tree, Conditional):
        return {tree.condition.param, tree.consequence.param}
    if isinstance(tree, Divisibility):
        return {tree.xa, tree.xb}
    raise TypeError(f"not a constraint node: {tree!r}")


# --------------------------------------------------------------------------
# parsing


def _require_ordinal(space: ParameterSpace, name, context: str):
    if not isinstance(name, str) or name not in space:
        raise UnknownParameterError(f"{context}: unknown parameter {name!r}")
    p = space.param(name)
    if p.kind != ORDINAL:
        raise ConstraintSyntaxError(
            f"{context}: parameter {name!r} is categorical; numeric constraints "
            "require ordinal parameters")
    return p


def _strictness_offset(space: ParameterSpace, c: Inequality) -> float:
    """Smallest positive value of ka*xa - kb*xb + t over the admissible grid."""
    pa = space.param(c.xa)
    pb = space.param(c.xb)
    va = np.asarray(pa.values, dtype=float)
    vb = np.asarray(pb.values, dtype=float)
    grid = c.ka * va[:, None] - c.kb * vb[None, :] + c.t
    positive = grid[grid > 0]
    if positive.size == 0:
        # no admissible pair satisfies the strict form; any offset keeps it
        # unsatisfiable
        return 1.0
    return float(positive.min())


def _vacuity_margin(space: ParameterSpace, atom: IntervalAtom) -> float:
    """Half the smallest clearance of admissible values outside the interval."""
    p = space.param(atom.param)
    clearances = [-_interval_value(atom, float(v)) for v in p.values
                  if v < atom.lo or v > atom.hi]
    if not clearances:
        return _DEFAULT_MARGIN
    return min(clearances) / 2.0


def _parse_interval(space, data, context) -> IntervalAtom:
    if not isinstance(data, dict) or set(data) != {"param", "in"}:
        raise ConstraintSyntaxError(
            f'{context}: expected {{"param": ..., "in": [lo, hi]}}')
    bounds = data["in"]
    if not isinstance(bounds, (list, tuple)) or len(bounds) != 2:
        raise ConstraintSyntaxError(f"{context}: interval needs [lo, hi]")
    _require_ordinal(space, data["param"], context)
    return IntervalAtom(data["param"], float(bounds[0]), float(bounds[1]))


def _parse_node(space: ParameterSpace, data, path: str):
    if not isinstance(data, dict) or len(data) != 1:
        raise ConstraintSyntaxError(
            f"{path}: each entry must be a single-key object "
            '(one of "all", "any", "ineq", "cond", "div")')
    key, body = next(iter(data.items()))
    context = f"{path}/{key}"
    if key in ("all", "any"):
        if not isinstance(body, list) or not body:
            raise ConstraintSyntaxError(f"{context}: needs a non-empty list")
        children = tuple(_parse_node(space, c, f"{context}[{i}]")
                         for i, c in enumerate(body))
        return Conj(children) if key == "all" else Disj(children)
    if key == "ineq":
        if not isinstance(body, dict):
            raise ConstraintSyntaxError(f"{context}: needs an object")
        allowed = {"ka", "xa", "kb", "xb", "t", "strict"}
        unknown = set(body) - allowed
        if unknown:
            raise ConstraintSyntaxError(f"{context}: unknown fields {sorted(unknown)}")
        try:
            xa, xb = body["xa"], body["xb"]
        except KeyError as exc:
            raise ConstraintSyntaxError(f"{context}: missing field {exc}") from None
        _require_ordinal(space, xa, context)
        _require_ordinal(space, xb, context)
        c = Inequality(ka=float(body.get("ka", 1.0)), xa=xa,
                       kb=float(body.get("kb", 1.0)), xb=xb,
                       t=float(body.get("t", 0.0)))
        if body.get("strict", False):
            c = Inequality(c.ka, c.xa, c.kb, c.xb,
                           c.t - _strictness_offset(space, c))
        return c
    if key == "cond":
        if not isinstance(body, dict) or set(body) != {"if", "then"}:
            raise ConstraintSyntaxError(
                f'{context}: expected {{"if": ..., "then": ...}}')
        condition = _parse_interval(space, body["if"], f"{context}/if")
        consequence = _parse_interval(space, body["then"], f"{context}/then")
        return Conditional(condition, consequence,
                           vacuity_margin=_vacuity_margin(space, condition))
    if key == "div":
        if not isinstance(body, dict) or set(body) != {"xa", "xb"}:
            raise ConstraintSyntaxError(f'{context}: expected {{"xa": ..., "xb": ...}}')
        pa = _require_ordinal(space, body["xa"], context)
        pb = _require_ordinal(space, body["xb"], context)
        for p in (pa, pb):
            if any(v <= 0 for v in p.values):
                raise ConstraintSyntaxError(
                    f"{context}: divisibility needs strictly positive values, "
                    f"parameter {p.name!r} has some <= 0")
        return Divisibility(body["xa"], body["xb"])
    raise ConstraintSyntaxError(f"{path}: unknown constraint kind {key!r}")


def parse_constraints(source, space: ParameterSpace) -> Conj:
    """Parse a constraint document (JSON text or dict) against a space.

    The root must be ``{"all": [...]}``.  Strict inequalities are rewritten
    with a grid-derived offset and conditionals get grid-derived vacuity
    margins, so the smooth relaxation keeps exact signs on the space.
    """
    if isinstance(source, str):
        try:
            data = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ConstraintSyntaxError(
                f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    else:
        data = source
    if not isinstance(data, dict) or set(data) != {"all"}:
        raise ConstraintSyntaxError('top level must be {"all": [...]}')
    node = _parse_node(space, data, "$")
    assert isinstance(node, Conj)
    return node


def load_constraints(path, space: ParameterSpace) -> Conj:
    from pathlib import Path

    return parse_constraints(Path(path).read_text(), space)
