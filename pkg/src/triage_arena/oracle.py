"""Brute-force welfare optimization over discretized allocation spaces.

This module certifies whether competing welfare functionals admit a
common maximizer on a finite grid. The general route is literal
enumeration (every grid point, every functional); the cake verifier
additionally exploits that its welfare functions are separable across
recipients, which gives the same grid answers through small dynamic
programs and stays tractable at fine steps. All verdicts are labelled
grid-certified at their step; nothing here reasons about the continuum.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

from .metrics import gini
from .model import Allocation, ResourceCapacity

__all__ = [
    "WelfareFunctional",
    "DiscretizedSpace",
    "EnumerationBoundExceeded",
    "candidate_count",
    "enumerate_allocations",
    "argmax_set",
    "NondegeneracyReport",
    "PairEvidence",
    "check_nondegeneracy",
    "CakeParams",
    "cake_utilities",
    "functionals_from_utilities",
    "cake_functionals",
    "ClaimResult",
    "CakeVerificationReport",
    "verify_cake_claims",
]

_STEP_TOL = 1e-9


@dataclass(frozen=True)
class WelfareFunctional:
    """A named scalar objective over allocations, always maximized."""

    identifier: str
    evaluator: Callable[[Allocation], float]
    direction: str = "max"

    def __call__(self, alloc: Allocation) -> float:
        return self.evaluator(alloc)


class EnumerationBoundExceeded(RuntimeError):
    def __init__(self, count: int, bound: int):
        super().__init__(
            f"grid has {count} candidate allocations, above the enumeration "
            f"bound of {bound}"
        )
        self.count = count
        self.bound = bound


@dataclass(frozen=True)
class DiscretizedSpace:
    """A finite grid over the feasible allocation polytope.

    Each entry moves in multiples of step; the step must divide every
    supply to within 1e-9. enumeration_bound guards against accidental
    combinatorial blow-ups in the literal-enumeration routines.
    """

    step: float
    capacity: ResourceCapacity
    n: int
    enumeration_bound: int = 5_000_000

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        for supply in self.capacity.supply:
            units = round(supply / self.step)
            if abs(units * self.step - supply) > _STEP_TOL:
                raise ValueError(
                    f"step {self.step} does not divide supply {supply}"
                )

    @property
    def k(self) -> int:
        return self.capacity.k

    @property
    def units(self) -> tuple[int, ...]:
        return tuple(round(s / self.step) for s in self.capacity.supply)


def candidate_count(space: DiscretizedSpace) -> int:
    """Number of grid allocations, via stars and bars per column."""
    total = 1
    for b in space.units:
        total *= math.comb(b + space.n, space.n)
    return total


def _compositions_upto(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """All tuples of `parts` nonnegative ints summing to at most `total`,
    in lexicographic order."""
    if parts == 1:
        for v in range(total + 1):
            yield (v,)
        return
    for v in range(total + 1):
        for rest in _compositions_upto(total - v, parts - 1):
            yield (v,) + rest


def enumerate_allocations(space: DiscretizedSpace) -> Iterator[Allocation]:
    """Yield every grid allocation exactly once, in a deterministic order.

    Raises EnumerationBoundExceeded (with the computed count) before
    yielding anything if the grid is too large.
    """
    count = candidate_count(space)
    if count > space.enumeration_bound:
        raise EnumerationBoundExceeded(count, space.enumeration_bound)
    step = space.step
    columns = [list(_compositions_upto(b, space.n)) for b in space.units]
    for combo in itertools.product(*columns):
        rows = tuple(
            tuple(combo[j][i] * step for j in range(space.k))
            for i in range(space.n)
        )
        yield Allocation(rows)


def argmax_set(
    W: WelfareFunctional, space: DiscretizedSpace, tol: float = 1e-9
) -> list[Allocation]:
    """All grid allocations within tol of the grid maximum, full scan.

    Returned in canonical (row-tuple sorted) order.
    """
    best = None
    kept: list[tuple[float, Allocation]] = []
    for alloc in enumerate_allocations(space):
        value = W(alloc)
        if best is None or value > best:
            best = value
            kept = [(v, a) for v, a in kept if v >= best - tol]
        if value >= best - tol:
            kept.append((value, alloc))
    if best is None:
        raise ValueError("empty allocation space")
    result = [a for v, a in kept if v >= best - tol]
    return sorted(result, key=lambda a: a.rows)


@dataclass(frozen=True)
class PairEvidence:
    first: str
    second: str
    intersects: bool
    only_first: Allocation | None
    only_second: Allocation | None


@dataclass(frozen=True)
class NondegeneracyReport:
    degenerate: bool
    witness: Allocation | None
    argmax_sizes: dict
    pairs: tuple[PairEvidence, ...]
    step: float
    tol: float

    @property
    def label(self) -> str:
        verdict = "degenerate" if self.degenerate else "non-degenerate"
        return f"{verdict} (grid-certified at step {self.step:g})"

    def to_json(self) -> dict:
        return {
            "kind": "nondegeneracy_report",
            "schema_version": 1,
            "degenerate": self.degenerate,
            "witness": self.witness.to_json() if self.witness else None,
            "argmax_sizes": dict(self.argmax_sizes),
            "pairs": [
                {
                    "first": p.first,
                    "second": p.second,
                    "intersects": p.intersects,
                    "only_first": p.only_first.to_json() if p.only_first else None,
                    "only_second": p.only_second.to_json() if p.only_second else None,
                }
                for p in self.pairs
            ],
            "step": self.step,
            "tol": self.tol,
            "label": self.label,
        }


def check_nondegeneracy(
    functionals: Sequence[WelfareFunctional],
    space: DiscretizedSpace,
    tol: float = 1e-9,
) -> NondegeneracyReport:
    """Intersect the argmax sets of two or more welfare functionals.

    Degenerate means some allocation maximizes every functional at once.
    No social optimum is ever selected; the report only describes how
    the optima relate.
    """
    if len(functionals) < 2:
        raise ValueError("need at least two functionals")
    sets = {W.identifier: set(a.rows for a in argmax_set(W, space, tol)) for W in functionals}
    names = [W.identifier for W in functionals]
    common = set.intersection(*sets.values())
    witness = Allocation(sorted(common)[0]) if common else None
    pairs = []
    for a, b in itertools.combinations(names, 2):
        inter = sets[a] & sets[b]
        only_a = sorted(sets[a] - sets[b])
        only_b = sorted(sets[b] - sets[a])
        pairs.append(
            PairEvidence(
                first=a,
                second=b,
                intersects=bool(inter),
                only_first=Allocation(only_a[0]) if only_a else None,
                only_second=Allocation(only_b[0]) if only_b else None,
            )
        )
    return NondegeneracyReport(
        degenerate=bool(common),
        witness=witness,
        argmax_sizes={name: len(s) for name, s in sets.items()},
        pairs=tuple(pairs),
        step=space.step,
        tol=tol,
    )


@dataclass(frozen=True)
class CakeParams:
    """Parameters of the six cake utility functions.

    Roles: alpha is the convex exponent (>1), beta the concave exponent,
    gamma the linear slope, delta the pre-cap slope and lam the quadratic
    harm penalty for the capped recipient, xbar4 the safe cap, xmin the
    minimum meaningful share, epsilon the flat inclusion utility.

    The orderings 0 < gamma < beta < 1 < alpha and positivity are hard
    invariants. The magnitude guards (lam >= 50, xbar4 and xmin <= 0.2)
    can be relaxed with allow_degenerate=True for negative-control runs.
    """

    alpha: float = 2.0
    beta: float = 0.5
    gamma: float = 0.3
    lam: float = 100.0
    xbar4: float = 0.05
    xmin: float = 0.05
    epsilon: float = 0.1
    delta: float = 0.2
    allow_degenerate: bool = False

    def __post_init__(self):
        if not (0 < self.gamma < self.beta < 1 < self.alpha):
            raise ValueError("require 0 < gamma < beta < 1 < alpha")
        if self.epsilon <= 0 or self.delta <= 0:
            raise ValueError("epsilon and delta must be positive")
        if self.xbar4 <= 0 or self.xmin <= 0:
            raise ValueError("xbar4 and xmin must be positive")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if not self.allow_degenerate:
            if self.lam < 50:
                raise ValueError("lam must be at least 50 (or allow_degenerate)")
            if self.xbar4 > 0.2 or self.xmin > 0.2:
                raise ValueError("xbar4 and xmin must be at most 0.2 (or allow_degenerate)")

    @classmethod
    def from_json(cls, obj: dict) -> "CakeParams":
        known = {
            "alpha", "beta", "gamma", "lam", "xbar4", "xmin",
            "epsilon", "delta", "allow_degenerate",
        }
        kwargs = {k: v for k, v in obj.items() if k in known}
        if "lambda" in obj:
            kwargs["lam"] = obj["lambda"]
        return cls(**kwargs)


def cake_utilities(params: CakeParams) -> tuple[Callable[[float], float], ...]:
    """The six scalar utility functions on [0, 1].

    U1 = x^alpha, U2 = x^beta, U3 = gamma x,
    U4 = delta x - lam (x - xbar4)^2 for x above the cap (delta x below),
    U5 = epsilon for any positive share (0 at zero),
    U6 = gamma (x - xmin) at or above the floor (0 below).
    """
    a, b, g = params.alpha, params.beta, params.gamma
    lam, cap, floor = params.lam, params.xbar4, params.xmin
    eps, d = params.epsilon, params.delta

    def u1(x: float) -> float:
        return x ** a

    def u2(x: float) -> float:
        return x ** b

    def u3(x: float) -> float:
        return g * x

    def u4(x: float) -> float:
        penalty = lam * (x - cap) ** 2 if x > cap else 0.0
        return d * x - penalty

    def u5(x: float) -> float:
        return eps if x > 0 else 0.0

    def u6(x: float) -> float:
        return g * (x - floor) if x >= floor else 0.0

    return (u1, u2, u3, u4, u5, u6)


def functionals_from_utilities(
    utilities: Sequence[Callable[[tuple], float]],
    prior_weights: Sequence[float] | None = None,
    include: Sequence[str] = ("util", "egal", "rawls", "prior"),
) -> list[WelfareFunctional]:
    """Build the standard welfare functionals over per-person utilities.

    util sums utilities, egal is the negated concentration index of the
    utility vector, rawls takes the minimum, prior is a weighted sum.
    Each utility is a function of that person's allocation row.
    """
    utilities = list(utilities)

    def values(alloc: Allocation) -> list[float]:
        return [u(row) for u, row in zip(utilities, alloc.rows)]

    built = []
    for name in include:
        if name == "util":
            built.append(WelfareFunctional("util", lambda A, v=values: sum(v(A))))
        elif name == "egal":
            built.append(
                WelfareFunctional(
                    "egal",
                    lambda A, v=values: -gini([max(x, 0.0) for x in v(A)]),
                )
            )
        elif name == "rawls":
            built.append(WelfareFunctional("rawls", lambda A, v=values: min(v(A))))
        elif name == "prior":
            if prior_weights is None:
                raise ValueError("prior requires prior_weights")
            w = tuple(float(x) for x in prior_weights)
            built.append(
                WelfareFunctional(
                    "prior",
                    lambda A, v=values, w=w: sum(wi * x for wi, x in zip(w, v(A))),
                )
            )
        else:
            raise ValueError(f"unknown functional {name!r}")
    return built


def cake_functionals(
    params: CakeParams,
    prior_weights: Sequence[float] | None = None,
    include: Sequence[str] = ("util", "egal", "rawls", "prior"),
) -> list[WelfareFunctional]:
    scalar = cake_utilities(params)
    row_utils = [lambda row, u=u: u(row[0]) for u in scalar]
    return functionals_from_utilities(row_utils, prior_weights, include)


def hospital_functionals(
    cohort,
    metric_config=None,
    include: Sequence[str] = ("util", "egal", "rawls", "prior"),
) -> list[WelfareFunctional]:
    """Welfare functionals over a patient cohort, with per-patient utility
    equal to that patient's need-satisfaction score and prioritarian
    weights taken from the metrics configuration."""
    from .metrics import MetricConfig, WeightKind, cnss, compute_weights

    if metric_config is None:
        metric_config = MetricConfig.default()
    utilities = [
        (lambda row, p=patient: cnss(p, row)) for patient in cohort.patients
    ]
    prior_weights = None
    if "prior" in include:
        prior_weights = compute_weights(
            cohort, WeightKind.PRIORITARIAN, metric_config
        ).weights
    return functionals_from_utilities(utilities, prior_weights, include)


def cake_space(step: float, enumeration_bound: int = 5_000_000) -> DiscretizedSpace:
    return DiscretizedSpace(
        step=step,
        capacity=ResourceCapacity(supply=(1.0,), variant="cake"),
        n=6,
        enumeration_bound=enumeration_bound,
    )


# ---------------------------------------------------------------------------
# Exact grid computations for the cake claims. The cake welfare functions
# are separable across the six recipients, so budget dynamic programs give
# exactly the values a full scan of the unit grid would, at any step.
# Equality with the literal scan is property-tested at coarse steps.


def _tabulate(params: CakeParams, step: float) -> tuple[list[list[float]], int]:
    budget = round(1.0 / step)
    if abs(budget * step - 1.0) > _STEP_TOL:
        raise ValueError(f"step {step} does not divide the unit cake")
    scalar = cake_utilities(params)
    table = [[u(v * step) for v in range(budget + 1)] for u in scalar]
    return table, budget


def _suffix_best(table: list[list[float]], budget: int) -> list[list[float]]:
    """suffix[i][b]: best total utility from persons i..5 with at most b units."""
    n = len(table)
    suffix = [[0.0] * (budget + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row = table[i]
        nxt = suffix[i + 1]
        cur = suffix[i]
        for b in range(budget + 1):
            best = -math.inf
            for v in range(b + 1):
                cand = row[v] + nxt[b - v]
                if cand > best:
                    best = cand
            cur[b] = best
    return suffix


def _backtrack(table: list[list[float]], suffix: list[list[float]], budget: int) -> tuple[int, ...]:
    units = []
    b = budget
    for i in range(len(table)):
        for v in range(b + 1):
            if table[i][v] + suffix[i + 1][b - v] == suffix[i][b]:
                units.append(v)
                b -= v
                break
    return tuple(units)


def _util_grid_analysis(table: list[list[float]], budget: int):
    """Grid max of the utility sum, the corner value, and the best value
    attainable by any allocation other than the all-to-first corner."""
    suffix = _suffix_best(table, budget)
    grid_max = suffix[0][budget]
    corner_value = table[0][budget]
    best_non_corner = -math.inf
    for v0 in range(budget):  # v0 == budget is exactly the corner
        cand = table[0][v0] + suffix[1][budget - v0]
        if cand > best_non_corner:
            best_non_corner = cand
    witness = _backtrack(table, suffix, budget)
    return grid_max, corner_value, best_non_corner, witness


def _rawls_grid_max(table: list[list[float]], budget: int):
    """Largest achievable min-utility on the grid, by threshold feasibility.

    Candidate thresholds are the tabulated utility values themselves; a
    threshold is achievable iff the per-person minimum unit costs fit in
    the budget.
    """
    candidates = sorted({v for row in table for v in row if v > 0}, reverse=True)
    for theta in candidates:
        cost = 0
        units = []
        feasible = True
        for row in table:
            need = next((v for v in range(budget + 1) if row[v] >= theta), None)
            if need is None:
                feasible = False
                break
            units.append(need)
            cost += need
        if feasible and cost <= budget:
            return theta, tuple(units)
    return 0.0, tuple(0 for _ in table)


def _best_util_at_rawls_optimum(
    table: list[list[float]], budget: int, theta: float
) -> tuple[float, tuple[int, ...] | None]:
    """Max utility sum over allocations whose minimum utility is theta,
    i.e. over the rawls argmax set (theta is the rawls grid max)."""
    n = len(table)
    allowed = [[v for v in range(budget + 1) if table[i][v] >= theta] for i in range(n)]
    if any(not a for a in allowed):
        return -math.inf, None
    suffix = [[-math.inf] * (budget + 1) for _ in range(n + 1)]
    suffix[n] = [0.0] * (budget + 1)
    for i in range(n - 1, -1, -1):
        for b in range(budget + 1):
            best = -math.inf
            for v in allowed[i]:
                if v > b:
                    break
                cand = table[i][v] + suffix[i + 1][b - v]
                if cand > best:
                    best = cand
            suffix[i][b] = best
    best = suffix[0][budget]
    if best == -math.inf:
        return best, None
    units = []
    b = budget
    for i in range(n):
        for v in allowed[i]:
            if v <= b and table[i][v] + suffix[i + 1][b - v] == suffix[i][b]:
                units.append(v)
                b -= v
                break
    return best, tuple(units)


@dataclass(frozen=True)
class ClaimResult:
    name: str
    passed: bool
    detail: str
    witness: tuple[float, ...] | None = None

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "detail": self.detail,
            "witness": list(self.witness) if self.witness is not None else None,
        }


@dataclass(frozen=True)
class CakeVerificationReport:
    step: float
    tol: float
    claims: tuple[ClaimResult, ...]
    recheck_tol: float
    recheck_agrees: bool

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.claims)

    @property
    def label(self) -> str:
        return f"grid-certified at step {self.step:g}"

    def to_json(self) -> dict:
        return {
            "kind": "cake_verification_report",
            "schema_version": 1,
            "step": self.step,
            "tol": self.tol,
            "recheck_tol": self.recheck_tol,
            "recheck_agrees": self.recheck_agrees,
            "label": self.label,
            "all_passed": self.all_passed,
            "claims": [c.to_json() for c in self.claims],
        }


def _evaluate_claims(params: CakeParams, step: float, tol: float) -> tuple[ClaimResult, ...]:
    table, budget = _tabulate(params, step)
    grid_max, corner_value, best_non_corner, util_witness = _util_grid_analysis(table, budget)
    corner = tuple(1.0 if i == 0 else 0.0 for i in range(6))

    # (a) the utility-sum argmax is exactly the all-to-first-person corner
    corner_is_max = corner_value >= grid_max - tol
    corner_unique = best_non_corner < corner_value - tol
    if corner_is_max and corner_unique:
        claim_a = ClaimResult(
            "util_argmax_is_corner",
            True,
            f"corner value {corner_value:.9g} beats every other grid point "
            f"(runner-up {best_non_corner:.9g})",
            corner,
        )
    else:
        witness_x = tuple(v * step for v in util_witness)
        claim_a = ClaimResult(
            "util_argmax_is_corner",
            False,
            f"grid max {grid_max:.9g} at {witness_x} vs corner value "
            f"{corner_value:.9g}; corner is "
            + ("tied, not unique" if corner_is_max else "not maximal"),
            witness_x,
        )

    # (b) every maximin-optimal allocation gives person 5 a positive share.
    # A zero share forces that person's utility to 0, so the claim holds
    # exactly when the maximin grid optimum is strictly positive.
    theta, rawls_units = _rawls_grid_max(table, budget)
    rawls_witness = tuple(v * step for v in rawls_units)
    if theta > tol:
        claim_b = ClaimResult(
            "rawls_argmax_requires_inclusion",
            True,
            f"maximin grid optimum {theta:.9g} > 0, so every optimum gives "
            f"person 5 a positive share",
            rawls_witness,
        )
    else:
        claim_b = ClaimResult(
            "rawls_argmax_requires_inclusion",
            False,
            f"maximin grid optimum is {theta:.9g}; allocations with a zero "
            f"share for person 5 are optimal",
            rawls_witness,
        )

    # (c) no allocation maximizes all four welfare functionals at once.
    # It suffices that the utility-sum and maximin argmax sets are disjoint:
    # compare the best utility sum achievable at the maximin optimum with
    # the unconstrained grid max.
    best_at_rawls, shared_units = _best_util_at_rawls_optimum(table, budget, theta)
    if best_at_rawls < grid_max - tol:
        claim_c = ClaimResult(
            "argmax_intersection_empty",
            True,
            f"best utility sum over maximin-optimal allocations is "
            f"{best_at_rawls:.9g}, below the utility grid max {grid_max:.9g}; "
            f"the four argmax sets share no member",
            None,
        )
    else:
        witness_x = (
            tuple(v * step for v in shared_units) if shared_units is not None else None
        )
        claim_c = ClaimResult(
            "argmax_intersection_empty",
            False,
            f"an allocation is optimal for both the utility sum and the "
            f"maximin objective (value {best_at_rawls:.9g})",
            witness_x,
        )
    return (claim_a, claim_b, claim_c)


def verify_cake_claims(
    params: CakeParams, step: float, tol: float = 1e-9, recheck_tol: float = 1e-6
) -> CakeVerificationReport:
    """Check the three cake claims on the grid at the given step.

    Requires step <= min(xbar4, xmin) / 2 so the cap and floor thresholds
    fall on resolvable grid points. The claims are evaluated at tol and
    re-evaluated at recheck_tol to confirm the verdicts are not knife-edge.
    """
    limit = min(params.xbar4, params.xmin) / 2
    if step > limit:
        raise ValueError(
            f"step {step} too coarse to resolve the cap and floor thresholds "
            f"(needs step <= {limit:g})"
        )
    claims = _evaluate_claims(params, step, tol)
    recheck = _evaluate_claims(params, step, recheck_tol)
    agrees = all(a.passed == b.passed for a, b in zip(claims, recheck))
    return CakeVerificationReport(
        step=step,
        tol=tol,
        claims=claims,
        recheck_tol=recheck_tol,
        recheck_agrees=agrees,
    )
