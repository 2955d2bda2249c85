"""Declarative experiment descriptions and setting choice sampling.

Two scenario kinds are supported:

* ``"bell"`` -- a standard Bell test: each party measures its particle
  directly, settings are spin angles in radians.
* ``"ewfs"`` -- the extended Wigner's-friend arrangement: a friend inside
  each lab measures along z first, then the superobserver measures the whole
  lab in the ``Z`` or ``X`` lab basis.  Setting 1 is always the ``Z``
  (same-basis-as-the-friend) measurement.

Settings are sampled from a dedicated random stream keyed
(seed, "settings", trial index), disjoint from every model stream, so the
choice of settings is independent of all hidden state by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .streams import uniform_block

STANDARD_BELL = "bell"
BRUKNER_EWFS = "ewfs"
SETTINGS_STREAM = "settings"

DEFAULT_EWFS_SETTINGS = ("Z", "X")
DEFAULT_BELL_ALICE = (0.0, math.pi / 2)
DEFAULT_BELL_BOB = (math.pi / 4, 3 * math.pi / 4)

__all__ = [
    "STANDARD_BELL",
    "BRUKNER_EWFS",
    "SETTINGS_STREAM",
    "ScenarioSpec",
    "SettingsSampler",
    "default_scenario",
    "sample_settings",
    "sample_settings_block",
]


@dataclass(frozen=True)
class ScenarioSpec:
    """Which experiment to run and each party's measurement menu."""

    kind: str
    alice_settings: tuple
    bob_settings: tuple
    trials: int
    friend_axis: str = "z"

    def __post_init__(self):
        object.__setattr__(self, "alice_settings", tuple(self.alice_settings))
        object.__setattr__(self, "bob_settings", tuple(self.bob_settings))
        if self.kind not in (STANDARD_BELL, BRUKNER_EWFS):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if self.friend_axis != "z":
            raise ValueError("only a z-axis friend measurement is supported")
        for name, settings in (("alice", self.alice_settings), ("bob", self.bob_settings)):
            if len(settings) < 2:
                raise ValueError(f"{name} needs at least two settings")
            if self.kind == BRUKNER_EWFS:
                if any(s not in ("Z", "X") for s in settings):
                    raise ValueError("ewfs settings must be 'Z' or 'X'")
                if settings[0] != "Z":
                    raise ValueError("ewfs setting 1 must be the Z measurement")
            else:
                if not all(isinstance(s, (int, float)) for s in settings):
                    raise ValueError("bell settings must be angles in radians")

    @property
    def n_alice(self) -> int:
        return len(self.alice_settings)

    @property
    def n_bob(self) -> int:
        return len(self.bob_settings)


def default_scenario(kind: str, trials: int) -> ScenarioSpec:
    if kind == BRUKNER_EWFS:
        return ScenarioSpec(kind, DEFAULT_EWFS_SETTINGS, DEFAULT_EWFS_SETTINGS, trials)
    return ScenarioSpec(kind, DEFAULT_BELL_ALICE, DEFAULT_BELL_BOB, trials)


@dataclass(frozen=True)
class SettingsSampler:
    """How per-trial settings are chosen.

    ``uniform`` draws each (X, Y) pair i.i.d. with equal probability from the
    keyed settings stream; ``fixed`` cycles through an explicit sequence.
    """

    mode: str = "uniform"
    seed: int = 0
    sequence: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.mode not in ("uniform", "fixed"):
            raise ValueError(f"unknown sampler mode {self.mode!r}")
        if self.mode == "fixed" and not self.sequence:
            raise ValueError("fixed mode needs a non-empty sequence")
        object.__setattr__(
            self, "sequence", tuple((int(x), int(y)) for x, y in self.sequence)
        )


def sample_settings_block(
    spec: ScenarioSpec,
    sampler: SettingsSampler,
    n_trials: int,
    first_trial: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Settings for trials [first_trial, first_trial + n_trials), 1-based."""
    if first_trial < 0 or first_trial + n_trials > spec.trials:
        raise IndexError("trial range outside spec.trials")
    if sampler.mode == "fixed":
        idx = (np.arange(first_trial, first_trial + n_trials)) % len(sampler.sequence)
        seq = np.asarray(sampler.sequence)
        return seq[idx, 0].copy(), seq[idx, 1].copy()
    u = uniform_block(sampler.seed, SETTINGS_STREAM, n_trials, 1, first_trial)[:, 0]
    pair = np.minimum(
        (u * (spec.n_alice * spec.n_bob)).astype(np.int64),
        spec.n_alice * spec.n_bob - 1,
    )
    return pair // spec.n_bob + 1, pair % spec.n_bob + 1


def sample_settings(
    spec: ScenarioSpec, sampler: SettingsSampler, trial_index: int
) -> tuple[int, int]:
    """The (X, Y) pair of a single trial; pure in (seed, trial_index)."""
    xs, ys = sample_settings_block(spec, sampler, 1, trial_index)
    return int(xs[0]), int(ys[0])
