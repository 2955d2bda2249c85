"""Correlation statistics, CHSH evaluation and local-polytope membership.

For the two-setting, binary-outcome scenario the set of correlations
compatible with the friendliness assumptions coincides with the Bell-local
set, so membership questions reduce to the 2x2x2 local polytope: the convex
hull of the 16 deterministic strategy tables.  A behavior lies inside it iff
a joint distribution over all four setting-outcomes exists, iff every one of
the 8 CHSH sign variants stays at or below 2.  Both routes are implemented
(LP feasibility and direct facet evaluation) and cross-checked in tests.

Sign conventions: outcomes are +/-1, setting indices are 1-based, and the
canonical CHSH combination is S = E11 + E12 + E21 - E22 <= 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import qcore
from .models import RunLog, RunRecord, UNDEFINED, ewfs_outcome_tables, lhv_strategies
from .scenario import BRUKNER_EWFS, ScenarioSpec

CHSH_BOUND = 2.0
LP_TOL = 1e-7
SIGNALING_TOL = 1e-6

__all__ = [
    "CHSH_BOUND",
    "EmptyCell",
    "BehaviorTable",
    "ExpectationMatrix",
    "PolytopeVerdict",
    "IdentityCheck",
    "DerivationChainReport",
    "InequalityReport",
    "tabulate",
    "expectations",
    "chsh_value",
    "chsh_variant_value",
    "chsh_max_variant",
    "deterministic_strategy_tables",
    "local_polytope_feasible",
    "analytic_expectations",
    "analytic_quantum_S",
    "verify_derivation_chain",
    "evaluate",
]


class EmptyCell(ValueError):
    """A required setting-pair cell holds no trials."""


def _outcome_index(values: np.ndarray) -> np.ndarray:
    # +1 -> 0, -1 -> 1
    return ((1 - values) // 2).astype(np.int64)


@dataclass
class BehaviorTable:
    """Counts N(a, b | x, y) with derived conditional probabilities."""

    counts: np.ndarray  # (x, y, a, b) with outcome index 0 -> +1, 1 -> -1

    def n(self) -> np.ndarray:
        """Trial totals per setting pair, shape (2, 2)."""
        return self.counts.sum(axis=(2, 3))

    def probs(self) -> np.ndarray:
        n = self.n()[:, :, None, None]
        with np.errstate(invalid="ignore", divide="ignore"):
            p = np.where(n > 0, self.counts / np.maximum(n, 1), np.nan)
        return p

    def empty_pairs(self) -> list[tuple[int, int]]:
        n = self.n()
        return [(x + 1, y + 1) for x in range(2) for y in range(2) if n[x, y] == 0]


@dataclass
class ExpectationMatrix:
    """Correlators E(x, y) with standard errors and per-cell trial counts."""

    values: np.ndarray  # (2, 2)
    errors: np.ndarray  # (2, 2)
    n: np.ndarray  # (2, 2) ints


def _gather(source) -> tuple[np.ndarray, ...]:
    """(x, y, a, b, c, d) arrays from a log, list of logs, or record list."""
    if isinstance(source, RunLog):
        logs = [source]
    else:
        items = list(source)
        if not items:
            empty = np.empty(0, dtype=np.int64)
            return tuple(empty.copy() for _ in range(6))
        if all(isinstance(item, RunRecord) for item in items):
            x = np.array([r.x for r in items], dtype=np.int64)
            y = np.array([r.y for r in items], dtype=np.int64)
            a = np.array([r.a for r in items], dtype=np.int64)
            b = np.array([r.b for r in items], dtype=np.int64)
            c = np.array(
                [UNDEFINED if r.c is None else r.c for r in items], dtype=np.int64
            )
            d = np.array(
                [UNDEFINED if r.d is None else r.d for r in items], dtype=np.int64
            )
            return x, y, a, b, c, d
        if not all(isinstance(item, RunLog) for item in items):
            raise TypeError("expected a RunLog, a list of RunLogs, or RunRecords")
        logs = items
    kinds = {log.kind for log in logs}
    if len(kinds) > 1:
        raise ValueError(f"mixed scenario kinds in one log: {sorted(kinds)}")
    cat = lambda name: np.concatenate(
        [np.asarray(getattr(log, name), dtype=np.int64) for log in logs]
    )
    return cat("x"), cat("y"), cat("a"), cat("b"), cat("c"), cat("d")


def tabulate(source) -> BehaviorTable:
    """Exact outcome counting of a run log into N(a, b | x, y)."""
    x, y, a, b, _, _ = _gather(source)
    counts = np.zeros((2, 2, 2, 2), dtype=np.int64)
    if x.size:
        if x.min() < 1 or x.max() > 2 or y.min() < 1 or y.max() > 2:
            raise ValueError("setting indices outside the two-setting scenario")
        np.add.at(counts, (x - 1, y - 1, _outcome_index(a), _outcome_index(b)), 1)
    return BehaviorTable(counts)


def expectations(table: BehaviorTable) -> ExpectationMatrix:
    n = table.n()
    sign = np.array([[1.0, -1.0], [-1.0, 1.0]])  # a * b per outcome cell
    with np.errstate(invalid="ignore", divide="ignore"):
        e = np.einsum("xyab,ab->xy", table.counts, sign) / np.maximum(n, 1)
    e = np.where(n > 0, e, np.nan)
    # SE of the mean of +/-1 products
    with np.errstate(invalid="ignore", divide="ignore"):
        se = np.sqrt(np.clip(1.0 - e**2, 0.0, None) / np.maximum(n, 1))
    se = np.where(n > 0, se, np.nan)
    return ExpectationMatrix(e, se, n.astype(np.int64))


def _require_full(e: ExpectationMatrix) -> None:
    if (e.n == 0).any():
        empty = [(x + 1, y + 1) for x in range(2) for y in range(2) if e.n[x, y] == 0]
        raise EmptyCell(f"no trials for setting pairs {empty}")


def chsh_value(e: ExpectationMatrix) -> tuple[float, float]:
    """Canonical S = E11 + E12 + E21 - E22 and its quadrature standard error."""
    _require_full(e)
    s = e.values[0, 0] + e.values[0, 1] + e.values[1, 0] - e.values[1, 1]
    return float(s), float(np.sqrt(np.sum(e.errors**2)))


def _variant_signs(variant: int) -> np.ndarray:
    """Sign pattern of CHSH variant 0..7: minus position variant % 4, global
    sign flip for variant >= 4."""
    signs = np.ones(4)
    signs[variant % 4] = -1.0
    if variant >= 4:
        signs = -signs
    return signs.reshape(2, 2)


def chsh_variant_value(e: ExpectationMatrix, variant: int) -> tuple[float, float]:
    _require_full(e)
    signs = _variant_signs(variant)
    return (
        float(np.sum(signs * e.values)),
        float(np.sqrt(np.sum(e.errors**2))),
    )


def chsh_max_variant(e: ExpectationMatrix) -> tuple[float, int]:
    """Maximum over the 8 CHSH sign placements; the local bound is 2 for all."""
    _require_full(e)
    best, best_id = -np.inf, 0
    for variant in range(8):
        value, _ = chsh_variant_value(e, variant)
        if value > best + 1e-15:
            best, best_id = value, variant
    return float(best), best_id


def deterministic_strategy_tables() -> np.ndarray:
    """Behaviors of the 16 deterministic strategies, shape (16, 2, 2, 2, 2)."""
    strat = lhv_strategies()
    tables = np.zeros((16, 2, 2, 2, 2))
    for i in range(16):
        a1, a2, b1, b2 = strat[i]
        a_out = [a1, a2]
        b_out = [b1, b2]
        for x in range(2):
            for y in range(2):
                ia = 0 if a_out[x] == 1 else 1
                ib = 0 if b_out[y] == 1 else 1
                tables[i, x, y, ia, ib] = 1.0
    return tables


def signaling_measure(probs: np.ndarray) -> float:
    """Largest marginal shift of one wing under the other wing's setting."""
    p_a = probs.sum(axis=3)  # P(a | x, y)
    p_b = probs.sum(axis=2)  # P(b | x, y)
    alice = np.abs(p_a[:, 0, :] - p_a[:, 1, :]).max()
    bob = np.abs(p_b[0, :, :] - p_b[1, :, :]).max()
    return float(max(alice, bob))


@dataclass
class PolytopeVerdict:
    """LP membership verdict with the mixing weights as certificate."""

    member: bool
    weights: np.ndarray | None
    residual: float
    tolerance: float
    cause: str | None = None

    def to_dict(self) -> dict:
        return {
            "member": bool(self.member),
            "weights": None if self.weights is None else [float(w) for w in self.weights],
            "residual": float(self.residual),
            "tolerance": float(self.tolerance),
            "cause": self.cause,
        }


def local_polytope_feasible(
    table: BehaviorTable | np.ndarray,
    tol: float = LP_TOL,
    signaling_tol: float = SIGNALING_TOL,
) -> PolytopeVerdict:
    """Can a probability mixture of the 16 deterministic strategies reproduce
    P(a, b | x, y) within ``tol``?  Feasibility certifies the existence of a
    joint distribution over (A1, A2, B1, B2) with the observed marginals.

    Solves min t  s.t.  |V w - p| <= t elementwise, w >= 0, sum w = 1,
    where V stacks the 16 vertex behaviors.
    """
    probs = table.probs() if isinstance(table, BehaviorTable) else np.asarray(table)
    if np.isnan(probs).any():
        raise EmptyCell("behavior table has empty setting-pair cells")
    if signaling_measure(probs) > signaling_tol:
        return PolytopeVerdict(False, None, np.inf, tol, cause="signaling")
    vertices = deterministic_strategy_tables().reshape(16, -1).T  # (16 cells, 16)
    p = probs.reshape(-1)
    n_cells = p.size
    # variables: 16 weights + slack t
    c = np.zeros(17)
    c[16] = 1.0
    a_ub = np.block(
        [[vertices, -np.ones((n_cells, 1))], [-vertices, -np.ones((n_cells, 1))]]
    )
    b_ub = np.concatenate([p, -p])
    a_eq = np.zeros((1, 17))
    a_eq[0, :16] = 1.0
    res = linprog(
        c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0],
        bounds=[(0, None)] * 16 + [(0, None)], method="highs",
    )
    if not res.success:
        return PolytopeVerdict(False, None, np.inf, tol, cause="lp-failure")
    residual = float(res.x[16])
    member = residual <= tol
    return PolytopeVerdict(
        member,
        res.x[:16] if member else None,
        residual,
        tol,
        cause=None if member else "chsh",
    )


# ---------------------------------------------------------------------------
# exact quantum predictions


def analytic_expectations(state: qcore.StateVector, spec: ScenarioSpec) -> np.ndarray:
    """Exact correlators E(x, y) from Born probabilities, no sampling."""
    e = np.empty((spec.n_alice, spec.n_bob))
    if spec.kind == BRUKNER_EWFS:
        tables = ewfs_outcome_tables(spec, state)
        sign = np.array([[1.0, -1.0], [-1.0, 1.0]])
        for (x, y), table in tables.items():
            e[x - 1, y - 1] = float(np.sum(sign * table))
        return e
    for x, angle_a in enumerate(spec.alice_settings):
        pa = qcore.spin_projectors(angle_a)
        for y, angle_b in enumerate(spec.bob_settings):
            pb = qcore.spin_projectors(angle_b)
            joint = [
                qcore.Projector(np.kron(p.matrix, q.matrix)) for p in pa for q in pb
            ]
            probs = qcore.born_probabilities(state, joint).reshape(2, 2)
            e[x, y] = float(probs[0, 0] - probs[0, 1] - probs[1, 0] + probs[1, 1])
    return e


def analytic_quantum_S(
    state: qcore.StateVector, spec: ScenarioSpec, variant: str = "max"
) -> float:
    """Exact CHSH value of quantum predictions for the given scenario.

    ``variant="canonical"`` evaluates E11 + E12 + E21 - E22 as written;
    ``variant="max"`` maximizes over all 8 facet sign placements, which is
    the relevant quantity for polytope membership.
    """
    values = analytic_expectations(state, spec)
    n = np.full((2, 2), 10, dtype=np.int64)
    e = ExpectationMatrix(values, np.zeros((2, 2)), n)
    if variant == "canonical":
        return chsh_value(e)[0]
    if variant == "max":
        return chsh_max_variant(e)[0]
    raise ValueError(f"unknown variant {variant!r}")


# ---------------------------------------------------------------------------
# derivation-chain audit


@dataclass
class IdentityCheck:
    label: str
    lhs: float
    rhs: float
    se: float
    n_lhs: int
    n_rhs: int
    k: float

    @property
    def delta(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def holds(self) -> bool:
        return self.delta <= self.k * self.se + 1e-12


@dataclass
class DerivationChainReport:
    identities: list[IdentityCheck]

    @property
    def all_hold(self) -> bool:
        return all(i.holds for i in self.identities)

    def gap(self, label: str) -> float:
        for i in self.identities:
            if i.label == label:
                return i.delta
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "all_hold": self.all_hold,
            "identities": [
                {
                    "label": i.label,
                    "lhs": i.lhs,
                    "rhs": i.rhs,
                    "delta": i.delta,
                    "se": i.se,
                    "holds": i.holds,
                }
                for i in self.identities
            ],
        }


def _correlator(first, second, mask) -> tuple[float, float, int]:
    n = int(mask.sum())
    if n == 0:
        raise EmptyCell("no trials for a required setting pair")
    prod = (first[mask] * second[mask]).astype(float)
    mean = float(prod.mean())
    se = float(prod.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se, n


def verify_derivation_chain(source, k: float = 3.0) -> DerivationChainReport:
    """Audit the expectation-value identification chain that turns the
    four-observer inequality into the superobserver CHSH inequality.

    Checks, within k standard errors each:
      <CD|22> = <CD|11> = <AB|11>   (setting independence of friends, then
                                     friend/superobserver substitution)
      <CB|22> = <CB|12> = <AB|12>
      <AD|22> = <AD|21> = <AB|21>
    """
    x, y, a, b, c, d = _gather(source)
    required = {(1, 1), (1, 2), (2, 1), (2, 2)}
    present = {(int(xi), int(yi)) for xi, yi in zip(x, y)}
    if not required <= present:
        raise EmptyCell(f"missing setting coverage: {sorted(required - present)}")
    if (c == UNDEFINED).any() or (d == UNDEFINED).any():
        raise ValueError("derivation chain needs defined friend outcomes everywhere")

    sides = {"A": a, "B": b, "C": c, "D": d}

    def corr(pair: str, xv: int, yv: int):
        mask = (x == xv) & (y == yv)
        return _correlator(sides[pair[0]], sides[pair[1]], mask)

    chain = [
        ("nsd:CD22=CD11", ("CD", 2, 2), ("CD", 1, 1)),
        ("aoe:CD11=AB11", ("CD", 1, 1), ("AB", 1, 1)),
        ("lnsd:CB22=CB12", ("CB", 2, 2), ("CB", 1, 2)),
        ("aoe:CB12=AB12", ("CB", 1, 2), ("AB", 1, 2)),
        ("lnsd:AD22=AD21", ("AD", 2, 2), ("AD", 2, 1)),
        ("aoe:AD21=AB21", ("AD", 2, 1), ("AB", 2, 1)),
    ]
    identities = []
    for label, lhs_spec, rhs_spec in chain:
        lhs, se_l, n_l = corr(*lhs_spec)
        rhs, se_r, n_r = corr(*rhs_spec)
        identities.append(
            IdentityCheck(
                label, lhs, rhs, math.sqrt(se_l**2 + se_r**2), n_l, n_r, k
            )
        )
    return DerivationChainReport(identities)


# ---------------------------------------------------------------------------
# one-stop empirical report


@dataclass
class InequalityReport:
    s: float
    se: float
    s_max: float
    s_max_variant: int
    s_max_se: float
    bound: float
    k: float
    violated: bool
    polytope: PolytopeVerdict | None = None

    def to_dict(self) -> dict:
        return {
            "S": self.s,
            "SE": self.se,
            "S_max": self.s_max,
            "S_max_variant": self.s_max_variant,
            "S_max_SE": self.s_max_se,
            "bound": self.bound,
            "k": self.k,
            "violated": bool(self.violated),
            "certificate": None if self.polytope is None else self.polytope.to_dict(),
        }


def evaluate(source, k: float = 3.0, check_polytope: bool = True) -> InequalityReport:
    """Tabulate a log and evaluate CHSH statistics plus polytope membership.

    The membership tolerance widens with the sampling noise of the table
    (k binomial standard errors on the least-populated cell) so finite logs
    of local models are not flagged infeasible by fluctuation alone.
    """
    table = tabulate(source)
    e = expectations(table)
    s, se = chsh_value(e)
    s_max, variant = chsh_max_variant(e)
    _, se_max = chsh_variant_value(e, variant)
    violated = s_max > CHSH_BOUND + k * se_max
    polytope = None
    if check_polytope:
        n_min = int(e.n.min())
        stat_tol = LP_TOL + k * 0.5 / math.sqrt(max(n_min, 1))
        polytope = local_polytope_feasible(
            table, tol=stat_tol, signaling_tol=stat_tol
        )
    return InequalityReport(
        s, se, s_max, variant, se_max, CHSH_BOUND, k, violated, polytope
    )
