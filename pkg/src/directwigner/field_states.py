"""Optical states entering the beam splitter and their mixing with the probe.

Mode mismatch is an intensity partition: a fraction ``overlap_xi`` of the
probe intensity interferes with the signal, the remaining ``1 - overlap_xi``
reaches the detector as independent Poissonian light.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Union

import numpy as np

from .errors import DomainError
from .photon_statistics import (
    ProbDist,
    convolve,
    displaced_thermal_dist,
    phase_avg_coherent_dist,
    poisson_dist,
)

TWO_PI = 2 * math.pi


def _nonneg(name, value):
    if not (value >= 0 and math.isfinite(value)):
        raise DomainError(f"{name} must be a finite number >= 0, got {value!r}")


@dataclass(frozen=True)
class Vacuum:
    kind = "vacuum"

    def scaled(self, eta: float) -> "Vacuum":
        return self

    def mean_photons(self) -> float:
        return 0.0


@dataclass(frozen=True)
class Coherent:
    amplitude: float
    phase: float = 0.0
    kind = "coherent"

    def __post_init__(self):
        _nonneg("amplitude", self.amplitude)
        object.__setattr__(self, "amplitude", float(self.amplitude))
        object.__setattr__(self, "phase", float(self.phase) % TWO_PI)

    def scaled(self, eta: float) -> "Coherent":
        return Coherent(math.sqrt(eta) * self.amplitude, self.phase)

    def mean_photons(self) -> float:
        return self.amplitude ** 2


@dataclass(frozen=True)
class Thermal:
    m_th: float
    kind = "thermal"

    def __post_init__(self):
        _nonneg("m_th", self.m_th)
        object.__setattr__(self, "m_th", float(self.m_th))

    def scaled(self, eta: float) -> "Thermal":
        return Thermal(eta * self.m_th)

    def mean_photons(self) -> float:
        return self.m_th


@dataclass(frozen=True)
class PhaseAveragedCoherent:
    amplitude: float
    kind = "phase_averaged"

    def __post_init__(self):
        _nonneg("amplitude", self.amplitude)
        object.__setattr__(self, "amplitude", float(self.amplitude))

    def scaled(self, eta: float) -> "PhaseAveragedCoherent":
        return PhaseAveragedCoherent(math.sqrt(eta) * self.amplitude)

    def mean_photons(self) -> float:
        return self.amplitude ** 2


SignalState = Union[Vacuum, Coherent, Thermal, PhaseAveragedCoherent]

_KINDS = {cls.kind: cls for cls in (Vacuum, Coherent, Thermal, PhaseAveragedCoherent)}


def state_to_dict(state: SignalState) -> dict:
    return {"kind": state.kind, **asdict(state)}


def state_from_dict(d: dict) -> SignalState:
    d = dict(d)
    kind = d.pop("kind", None)
    kind = kind.replace("-", "_") if isinstance(kind, str) else kind
    if kind not in _KINDS:
        raise DomainError(f"unknown state kind {kind!r}; expected one of {sorted(_KINDS)}")
    try:
        return _KINDS[kind](**d)
    except TypeError as exc:
        raise DomainError(f"bad parameters for {kind} state: {exc}") from None


@dataclass(frozen=True)
class ProbeSetting:
    """Coherent probe at the signal's photon level."""

    alpha_mag: float
    phase: float = 0.0
    overlap_xi: float = 1.0

    def __post_init__(self):
        _nonneg("alpha_mag", self.alpha_mag)
        if not 0 <= self.overlap_xi <= 1:
            raise DomainError(f"overlap_xi must lie in [0, 1], got {self.overlap_xi!r}")
        object.__setattr__(self, "alpha_mag", float(self.alpha_mag))
        object.__setattr__(self, "overlap_xi", float(self.overlap_xi))
        object.__setattr__(self, "phase", float(self.phase) % TWO_PI)

    @property
    def matched(self) -> complex:
        return math.sqrt(self.overlap_xi) * self.alpha_mag * np.exp(1j * self.phase)

    @property
    def residual_mean(self) -> float:
        return (1.0 - self.overlap_xi) * self.alpha_mag ** 2

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ProbeSetting":
        return cls(**d)


def _latent_amplitudes(state: SignalState, rng: np.random.Generator, size: int) -> np.ndarray:
    if isinstance(state, Vacuum):
        return np.zeros(size, dtype=complex)
    if isinstance(state, Coherent):
        return np.full(size, state.amplitude * np.exp(1j * state.phase))
    if isinstance(state, Thermal):
        # Glauber P-function of a thermal field: circular complex Gaussian
        s = math.sqrt(state.m_th / 2)
        return s * (rng.standard_normal(size) + 1j * rng.standard_normal(size))
    if isinstance(state, PhaseAveragedCoherent):
        return state.amplitude * np.exp(1j * rng.uniform(0.0, TWO_PI, size))
    raise TypeError(f"not a signal state: {state!r}")


def sample_mixed_photons(state: SignalState, probe: ProbeSetting,
                         rng: np.random.Generator, size: Optional[int] = None):
    """Photon number of the displaced field for one shot, or ``size`` shots.

    Returns an int when ``size`` is None, otherwise an int64 array.
    """
    n = 1 if size is None else size
    a = _latent_amplitudes(state, rng, n)
    matched = rng.poisson(np.abs(a + probe.matched) ** 2)
    residual = rng.poisson(probe.residual_mean, n)
    counts = (matched + residual).astype(np.int64)
    return int(counts[0]) if size is None else counts


def mixed_mean(state: SignalState, probe: ProbeSetting) -> float:
    """Mean photon number of the displaced field."""
    mean = state.mean_photons() + probe.alpha_mag ** 2
    if isinstance(state, Coherent):
        # only the coherent signal has a fixed phase relation to the probe
        mean += 2 * (np.conj(state.amplitude * np.exp(1j * state.phase)) * probe.matched).real
    return float(mean)


def theoretical_mixed_dist(state: SignalState, beta_mag: float, xi: float = 1.0,
                           M: Optional[int] = None, beta_phase: float = 0.0) -> ProbDist:
    """Exact detected-count distribution of the signal mixed with a partly matched probe.

    All inputs are at the detected level: ``state`` carries detected
    parameters (see ``state.scaled(eta)``) and ``beta_mag`` is the detected
    probe amplitude. ``xi = 1`` gives the perfectly overlapped ("uncorrected")
    theory.
    """
    _nonneg("beta_mag", beta_mag)
    if not 0 <= xi <= 1:
        raise DomainError(f"xi must lie in [0, 1], got {xi!r}")
    matched_sq = xi * beta_mag ** 2
    residual = (1 - xi) * beta_mag ** 2

    if isinstance(state, Vacuum):
        core = poisson_dist(matched_sq, M)
    elif isinstance(state, Thermal):
        core = displaced_thermal_dist(state.m_th, matched_sq, M)
    elif isinstance(state, PhaseAveragedCoherent):
        core = phase_avg_coherent_dist(state.amplitude ** 2, matched_sq, M)
    elif isinstance(state, Coherent):
        total = state.amplitude * np.exp(1j * state.phase) + math.sqrt(matched_sq) * np.exp(1j * beta_phase)
        core = poisson_dist(abs(total) ** 2, M)
    else:
        raise TypeError(f"not a signal state: {state!r}")
    if residual == 0:
        return core
    full = convolve(core, poisson_dist(residual, M))
    # with an explicit M the caller wants exactly M + 1 entries
    return full if M is None else ProbDist(full.probs[: M + 1])
