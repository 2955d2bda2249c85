"""Pluggable physical models producing one run record per trial.

Four models realize the comparison matrix between frameworks:

* ``unitary-qm``   -- friend measurements are purely unitary; superobserver
  outcomes follow exact Born statistics of the 16-dim entangled lab pair.
  Friend outcomes are only defined on the branches actually opened
  (setting 1); no observer-independent value is assigned otherwise.
* ``collapse``     -- the first measurement objectively collapses the shared
  state.  In the EWFS the friends' z measurements collapse the singlet, and
  the superobservers read the friend's record (setting 1) or see a fair coin
  (setting 2).  In a standard Bell test the collapse happens at the
  superobservers' own spin measurements, reproducing singlet statistics.
* ``toy-theta``    -- hidden-angle model: friend outcomes follow
  P(C=+1)=cos^2(theta), independently per wing, while superobserver outcomes
  in the EWFS mimic a collapse model's quantum correlations.  Direct spin
  measurements (standard Bell) are governed by the angles alone.
* ``lhv``          -- local hidden variables: a deterministic strategy table
  (A1, A2, B1, B2) drawn per trial from a configurable distribution.

Every trial's randomness comes from a fixed window of the keyed stream
(seed, "model:<name>", trial), so records are pure functions of
(seed, trial index) regardless of batching or parallelism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import qcore
from .scenario import (
    BRUKNER_EWFS,
    STANDARD_BELL,
    ScenarioSpec,
    SettingsSampler,
    sample_settings_block,
)
from .streams import uniform_block

MODEL_UNITARY_QM = "unitary-qm"
MODEL_COLLAPSE = "collapse"
MODEL_TOY = "toy-theta"
MODEL_LHV = "lhv"

MODEL_NAMES = (MODEL_UNITARY_QM, MODEL_COLLAPSE, MODEL_TOY, MODEL_LHV)

# Doubles consumed per trial, fixed per model so trial windows never shift.
DRAWS_PER_TRIAL = {
    MODEL_UNITARY_QM: 1,
    MODEL_COLLAPSE: 3,
    MODEL_TOY: 5,
    MODEL_LHV: 1,
}

UNDEFINED = 0  # sentinel for C/D in array form

__all__ = [
    "MODEL_NAMES",
    "MODEL_UNITARY_QM",
    "MODEL_COLLAPSE",
    "MODEL_TOY",
    "MODEL_LHV",
    "UNDEFINED",
    "UnsupportedScenario",
    "RunRecord",
    "RunLog",
    "ToyOptions",
    "TOY_OPTIMAL_CHSH",
    "LhvOptions",
    "lhv_strategies",
    "lhv_exact_expectations",
    "run_trial_unitary_qm",
    "run_trial_collapse",
    "run_trial_toy",
    "run_trial_lhv",
    "run_trials",
    "run_trials_parallel",
    "singlet_joint_probs",
    "ewfs_outcome_tables",
]


class UnsupportedScenario(ValueError):
    """The model cannot run under the requested scenario kind."""


@dataclass(frozen=True)
class RunRecord:
    """One experimental trial.  C/D are None when the model assigns no
    observer-independent friend outcome on that branch."""

    trial: int
    x: int
    y: int
    a: int
    b: int
    c: int | None
    d: int | None
    lam: str = ""


@dataclass
class RunLog:
    """Array-backed list of run records for one (scenario, model) campaign.

    ``c``/``d`` use 0 for undefined; ``lam`` holds model-specific payload
    columns (hidden angles, strategy ids) aligned with trials.
    """

    kind: str
    model: str
    x: np.ndarray
    y: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    lam: dict[str, np.ndarray] = field(default_factory=dict)
    first_trial: int = 0

    def __len__(self) -> int:
        return self.x.size

    @property
    def trials(self) -> np.ndarray:
        return np.arange(self.first_trial, self.first_trial + len(self))

    def lambda_tag(self, i: int) -> str:
        parts = []
        for key in sorted(self.lam):
            v = self.lam[key][i]
            if isinstance(v, (np.floating, float)):
                parts.append(f"{key}={float(v):.17g}")
            else:
                parts.append(f"{key}={int(v)}")
        return ";".join(parts)

    def record(self, i: int) -> RunRecord:
        c = int(self.c[i])
        d = int(self.d[i])
        return RunRecord(
            trial=int(self.first_trial + i),
            x=int(self.x[i]),
            y=int(self.y[i]),
            a=int(self.a[i]),
            b=int(self.b[i]),
            c=None if c == UNDEFINED else c,
            d=None if d == UNDEFINED else d,
            lam=self.lambda_tag(i),
        )

    def records(self):
        return [self.record(i) for i in range(len(self))]

    @classmethod
    def concat(cls, parts: list["RunLog"]) -> "RunLog":
        parts = sorted(parts, key=lambda p: p.first_trial)
        head = parts[0]
        expected = head.first_trial
        for p in parts:
            if p.first_trial != expected or p.kind != head.kind or p.model != head.model:
                raise ValueError("cannot concatenate non-contiguous or mixed logs")
            expected += len(p)
        cat = lambda name: np.concatenate([getattr(p, name) for p in parts])
        lam = {k: np.concatenate([p.lam[k] for p in parts]) for k in head.lam}
        return cls(
            head.kind, head.model,
            cat("x"), cat("y"), cat("a"), cat("b"), cat("c"), cat("d"),
            lam, head.first_trial,
        )


# ---------------------------------------------------------------------------
# model options


@dataclass(frozen=True)
class ToyOptions:
    """Knobs of the hidden-angle model.

    ``*_angles`` map superobserver setting index -> effective spin angle used
    for the EWFS quantum-correlation sampling (setting 1 is the friend's z
    direction, angle 0, by default).  ``theta_after_plus``/``theta_after_minus``
    are the post-measurement angle updates.
    """

    alice_angles: tuple[float, ...] = (0.0, math.pi / 2)
    bob_angles: tuple[float, ...] = (0.0, math.pi / 2)
    theta_after_plus: float = 0.0
    theta_after_minus: float = math.pi / 2


# Angle assignment under which the toy model's EWFS correlations reach the
# maximal quantum CHSH value 2*sqrt(2).
TOY_OPTIMAL_CHSH = ToyOptions(bob_angles=(math.pi / 4, 3 * math.pi / 4))


def _uniform_weights() -> tuple[float, ...]:
    return (1.0 / 16,) * 16


@dataclass(frozen=True)
class LhvOptions:
    """Distribution over the 16 deterministic strategy tables."""

    weights: tuple[float, ...] = field(default_factory=_uniform_weights)

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        object.__setattr__(self, "weights", w)
        if len(w) != 16:
            raise ValueError("need exactly 16 strategy weights")
        if min(w) < 0:
            raise ValueError("strategy weights must be nonnegative")
        if abs(sum(w) - 1.0) > 1e-9:
            raise ValueError("strategy weights must sum to 1 within 1e-9")


def lhv_strategies() -> np.ndarray:
    """All 16 deterministic strategies as rows (A1, A2, B1, B2) of +/-1."""
    bits = ((np.arange(16)[:, None] >> np.arange(3, -1, -1)) & 1)
    return (1 - 2 * bits).astype(np.int8)


def lhv_exact_expectations(weights) -> np.ndarray:
    """Exact correlators E(x, y) of a strategy mixture, by enumeration."""
    w = np.asarray(weights, dtype=float)
    strat = lhv_strategies().astype(float)
    e = np.empty((2, 2))
    for x in (0, 1):
        for y in (0, 1):
            e[x, y] = float(np.sum(w * strat[:, x] * strat[:, 2 + y]))
    return e


# ---------------------------------------------------------------------------
# shared probability tables (computed exactly once per batch)


def singlet_joint_probs(angle_a: float, angle_b: float) -> np.ndarray:
    """2x2 Born table over (A, B) outcomes of joint spin measurements on the
    singlet at the given angles; index 0 -> +1, 1 -> -1."""
    psi = qcore.singlet()
    pa = qcore.spin_projectors(angle_a)
    pb = qcore.spin_projectors(angle_b)
    joint = [qcore.Projector(np.kron(p.matrix, q.matrix)) for p in pa for q in pb]
    return qcore.born_probabilities(psi, joint).reshape(2, 2)


def ewfs_outcome_tables(spec: ScenarioSpec, state: qcore.StateVector) -> dict:
    """Joint (A, B) distribution per setting pair for purely unitary friend
    measurements, from exact 16-dim Born probabilities."""
    lab_state = qcore.lab_pair_state(state)
    tables = {}
    for x, kind_a in enumerate(spec.alice_settings, start=1):
        for y, kind_b in enumerate(spec.bob_settings, start=1):
            probs = qcore.lab_joint_probabilities(lab_state, kind_a, kind_b)
            leak = probs[2, :].sum() + probs[:, 2].sum()
            if leak > 1e-9:
                raise qcore.ContractViolation(
                    "lab state leaked outside the pointer subspace"
                )
            table = probs[:2, :2]
            tables[(x, y)] = table / table.sum()
    return tables


def _sample_discrete(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(cum, u, side="right")
    return np.minimum(idx, cum.size - 1)


def _joint_outcomes(table: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample (A, B) in {+1,-1} jointly from a 2x2 probability table."""
    idx = _sample_discrete(np.cumsum(table.reshape(-1)), u)
    a = np.where(idx // 2 == 0, 1, -1).astype(np.int8)
    b = np.where(idx % 2 == 0, 1, -1).astype(np.int8)
    return a, b


# ---------------------------------------------------------------------------
# batch implementations (trial i is a pure function of row u[i])


def _batch_unitary_qm(spec, xs, ys, u, options=None) -> RunLog:
    if spec.kind != BRUKNER_EWFS:
        raise UnsupportedScenario("unitary-qm only models the EWFS arrangement")
    tables = ewfs_outcome_tables(spec, qcore.brukner_state())
    n = xs.size
    a = np.empty(n, dtype=np.int8)
    b = np.empty(n, dtype=np.int8)
    for (x, y), table in tables.items():
        mask = (xs == x) & (ys == y)
        if mask.any():
            a[mask], b[mask] = _joint_outcomes(table, u[mask, 0])
    c = np.where(xs == 1, a, UNDEFINED).astype(np.int8)
    d = np.where(ys == 1, b, UNDEFINED).astype(np.int8)
    return RunLog(spec.kind, MODEL_UNITARY_QM, xs, ys, a, b, c, d)


def _collapse_bell_tables(spec) -> dict:
    """Per (x, y): Alice's branch probability and Bob's conditional Born
    probabilities on the collapsed state."""
    psi = qcore.singlet()
    eye = qcore.Projector(np.eye(2))
    tables = {}
    for x, angle_a in enumerate(spec.alice_settings, start=1):
        proj_a = [
            qcore.Projector(np.kron(p.matrix, eye.matrix))
            for p in qcore.spin_projectors(angle_a)
        ]
        p_branch = qcore.born_probabilities(psi, proj_a)
        branches = [
            qcore.StateVector(p.matrix @ psi.amplitudes, psi.dims).normalize()
            for p in proj_a
        ]
        for y, angle_b in enumerate(spec.bob_settings, start=1):
            proj_b = [
                qcore.Projector(np.kron(eye.matrix, p.matrix))
                for p in qcore.spin_projectors(angle_b)
            ]
            cond = [qcore.born_probabilities(br, proj_b) for br in branches]
            tables[(x, y)] = (p_branch[0], cond[0][0], cond[1][0])
    return tables


def _batch_collapse(spec, xs, ys, u, options=None) -> RunLog:
    n = xs.size
    if spec.kind == BRUKNER_EWFS:
        # Friends' z measurements collapse the singlet: C is a Born coin,
        # D is fixed by the perfect anticorrelation of the collapsed state.
        c = np.where(u[:, 0] < 0.5, 1, -1).astype(np.int8)
        d = (-c).astype(np.int8)
        coin_a = np.where(u[:, 1] < 0.5, 1, -1).astype(np.int8)
        coin_b = np.where(u[:, 2] < 0.5, 1, -1).astype(np.int8)
        a = np.where(xs == 1, c, coin_a).astype(np.int8)
        b = np.where(ys == 1, d, coin_b).astype(np.int8)
        return RunLog(spec.kind, MODEL_COLLAPSE, xs, ys, a, b, c, d)
    # Standard Bell: Alice's spin measurement collapses nonlocally, Bob
    # measures the collapsed branch.
    tables = _collapse_bell_tables(spec)
    a = np.empty(n, dtype=np.int8)
    b = np.empty(n, dtype=np.int8)
    for (x, y), (p_a_plus, p_b_plus_up, p_b_plus_dn) in tables.items():
        mask = (xs == x) & (ys == y)
        if not mask.any():
            continue
        a_plus = u[mask, 0] < p_a_plus
        p_b_plus = np.where(a_plus, p_b_plus_up, p_b_plus_dn)
        a[mask] = np.where(a_plus, 1, -1)
        b[mask] = np.where(u[mask, 1] < p_b_plus, 1, -1)
    undef = np.full(n, UNDEFINED, dtype=np.int8)
    return RunLog(spec.kind, MODEL_COLLAPSE, xs, ys, a, b, undef, undef.copy())


def _batch_toy(spec, xs, ys, u, options=None) -> RunLog:
    opts = options or ToyOptions()
    n = xs.size
    theta1 = u[:, 0] * math.pi
    theta2 = u[:, 1] * math.pi
    out1 = np.where(u[:, 2] < np.cos(theta1) ** 2, 1, -1).astype(np.int8)
    out2 = np.where(u[:, 3] < np.cos(theta2) ** 2, 1, -1).astype(np.int8)
    post1 = np.where(out1 == 1, opts.theta_after_plus, opts.theta_after_minus)
    post2 = np.where(out2 == 1, opts.theta_after_plus, opts.theta_after_minus)
    lam = {
        "theta1": theta1,
        "theta2": theta2,
        "theta1_post": post1,
        "theta2_post": post2,
    }
    if spec.kind == BRUKNER_EWFS:
        # Friends draw C, D from the hidden angles (uncorrelated wings);
        # superobserver outcomes mimic collapse-model quantum correlations
        # at the configured angles, independently of C and D.
        a = np.empty(n, dtype=np.int8)
        b = np.empty(n, dtype=np.int8)
        for x in range(1, spec.n_alice + 1):
            for y in range(1, spec.n_bob + 1):
                mask = (xs == x) & (ys == y)
                if not mask.any():
                    continue
                table = singlet_joint_probs(
                    opts.alice_angles[x - 1], opts.bob_angles[y - 1]
                )
                a[mask], b[mask] = _joint_outcomes(table, u[mask, 4])
        return RunLog(spec.kind, MODEL_TOY, xs, ys, a, b, out1, out2, lam)
    # Standard Bell: the parties measure the particles directly, so outcomes
    # are governed by the hidden angles alone, ignoring measurement angles.
    undef = np.full(n, UNDEFINED, dtype=np.int8)
    return RunLog(spec.kind, MODEL_TOY, xs, ys, out1, out2, undef, undef.copy(), lam)


def _batch_lhv(spec, xs, ys, u, options=None) -> RunLog:
    if spec.n_alice != 2 or spec.n_bob != 2:
        raise UnsupportedScenario("lhv strategy tables cover two settings per side")
    opts = options or LhvOptions()
    strat = lhv_strategies()
    idx = _sample_discrete(np.cumsum(np.asarray(opts.weights)), u[:, 0])
    a = strat[idx, xs - 1]
    b = strat[idx, 2 + (ys - 1)]
    if spec.kind == BRUKNER_EWFS:
        # Friends report the setting-1 values of the strategy table, so
        # superobserver/friend consistency holds by construction.
        c = strat[idx, 0]
        d = strat[idx, 2]
    else:
        c = np.full(xs.size, UNDEFINED, dtype=np.int8)
        d = c.copy()
    lam = {"strategy": idx.astype(np.int16)}
    return RunLog(spec.kind, MODEL_LHV, xs, ys, a, b, c, d, lam)


_BATCH = {
    MODEL_UNITARY_QM: _batch_unitary_qm,
    MODEL_COLLAPSE: _batch_collapse,
    MODEL_TOY: _batch_toy,
    MODEL_LHV: _batch_lhv,
}


# ---------------------------------------------------------------------------
# public per-trial operations


def _single(model: str, spec, x, y, rng, trial_index, options=None) -> RunRecord:
    u = rng.random((1, DRAWS_PER_TRIAL[model]))
    xs = np.array([x], dtype=np.int8)
    ys = np.array([y], dtype=np.int8)
    log = _BATCH[model](spec, xs, ys, u, options)
    log.first_trial = trial_index
    return log.record(0)


def run_trial_unitary_qm(spec, x, y, rng, trial_index=0) -> RunRecord:
    return _single(MODEL_UNITARY_QM, spec, x, y, rng, trial_index)


def run_trial_collapse(spec, x, y, rng, trial_index=0) -> RunRecord:
    return _single(MODEL_COLLAPSE, spec, x, y, rng, trial_index)


def run_trial_toy(spec, x, y, rng, trial_index=0, options=None) -> RunRecord:
    return _single(MODEL_TOY, spec, x, y, rng, trial_index, options)


def run_trial_lhv(spec, x, y, rng, trial_index=0, options=None) -> RunRecord:
    return _single(MODEL_LHV, spec, x, y, rng, trial_index, options)


# ---------------------------------------------------------------------------
# campaign execution


def model_stream(model: str) -> str:
    return f"model:{model}"


def run_trials(
    spec: ScenarioSpec,
    model: str,
    seed: int,
    sampler: SettingsSampler | None = None,
    options=None,
    first_trial: int = 0,
    n_trials: int | None = None,
) -> RunLog:
    """Run a contiguous block of trials; record i depends only on (seed, i)."""
    if model not in _BATCH:
        raise ValueError(f"unknown model {model!r}")
    if n_trials is None:
        n_trials = spec.trials - first_trial
    sampler = sampler or SettingsSampler(seed=seed)
    xs, ys = sample_settings_block(spec, sampler, n_trials, first_trial)
    u = uniform_block(
        seed, model_stream(model), n_trials, DRAWS_PER_TRIAL[model], first_trial
    )
    log = _BATCH[model](spec, xs.astype(np.int8), ys.astype(np.int8), u, options)
    log.first_trial = first_trial
    return log


def run_trials_parallel(
    spec: ScenarioSpec,
    model: str,
    seed: int,
    sampler: SettingsSampler | None = None,
    options=None,
    chunk_size: int = 100_000,
    max_workers: int = 4,
) -> RunLog:
    """Chunked (optionally threaded) execution; output is identical to the
    sequential run because every chunk re-derives its own stream windows."""
    from concurrent.futures import ThreadPoolExecutor

    starts = list(range(0, spec.trials, chunk_size))
    run = lambda start: run_trials(
        spec, model, seed, sampler, options,
        first_trial=start, n_trials=min(chunk_size, spec.trials - start),
    )
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        parts = list(pool.map(run, starts))
    return RunLog.concat(parts)
