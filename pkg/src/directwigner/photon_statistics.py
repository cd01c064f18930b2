"""Discrete photon-number distributions and the maps acting on them.

Everything here is exact (up to truncation and quadrature tolerances) and
serves as the ground truth that the Monte-Carlo and reconstruction code is
checked against.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats
from scipy.special import gammaln, logsumexp

from .errors import DomainError, QuadratureError, TruncationWarning

TAIL_TOL = 1e-9
PHASE_NODES = 2048
PHASE_CHECK_NODES = 4096
PHASE_CHECK_TOL = 1e-10
HERMITE_NODES = 160

FIDELITY_CONVENTIONS = ("bhattacharyya", "paper_literal")


@dataclass(frozen=True)
class ProbDist:
    """Probabilities of counting m = 0..M photons."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float).ravel()
        if p.size == 0:
            raise DomainError("a distribution needs at least the m = 0 entry")
        if not np.all(np.isfinite(p)):
            raise DomainError("probabilities must be finite")
        if p.min() < 0:
            # rounding in closed forms can leave -1e-17 style residues
            if p.min() < -1e-14:
                raise DomainError(f"negative probability {p.min():.3g}")
            p = np.clip(p, 0.0, None)
        if p.sum() > 1 + 1e-9:
            raise DomainError(f"total probability {p.sum():.12g} exceeds 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def M(self) -> int:
        return self.probs.size - 1

    @property
    def total(self) -> float:
        return float(self.probs.sum())

    def __len__(self):
        return self.probs.size

    def __getitem__(self, m):
        return self.probs[m]

    def padded(self, M: int) -> np.ndarray:
        """Probabilities as an array of length M + 1 (zero-padded or cut)."""
        out = np.zeros(M + 1)
        k = min(M, self.M) + 1
        out[:k] = self.probs[:k]
        return out

    @classmethod
    def delta(cls, m: int, M: Optional[int] = None) -> "ProbDist":
        M = m if M is None else M
        p = np.zeros(M + 1)
        p[m] = 1.0
        return cls(p)

    @classmethod
    def from_counts(cls, counts) -> "ProbDist":
        """Empirical distribution of non-negative integer counts."""
        counts = np.asarray(counts, dtype=np.int64)
        if counts.size == 0:
            raise DomainError("no counts given")
        if counts.min() < 0:
            raise DomainError("counts must be non-negative")
        hist = np.bincount(counts)
        return cls(hist / counts.size)

    # -- serialization ------------------------------------------------------

    def to_csv(self, path) -> None:
        lines = ["m,prob"]
        lines += [f"{m},{p:.17g}" for m, p in enumerate(self.probs)]
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "ProbDist":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        m = data[:, 0].astype(int)
        if not np.array_equal(m, np.arange(m.size)):
            raise DomainError(f"{path}: m column must run 0..M without gaps")
        return cls(data[:, 1])

    def to_dict(self) -> dict:
        return {"M": self.M, "probs": [float(p) for p in self.probs]}

    @classmethod
    def from_dict(cls, d: dict) -> "ProbDist":
        probs = d["probs"]
        if "M" in d and d["M"] != len(probs) - 1:
            raise DomainError("M does not match the number of probabilities")
        return cls(probs)

    def to_json(self, path) -> None:
        # json writes floats with repr, which round-trips exactly
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_json(cls, path) -> "ProbDist":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class Moments:
    mean: float
    variance: float
    mandel_q: Optional[float]
    fano: Optional[float]


def default_truncation(mean: float, variance: float) -> int:
    return int(math.ceil(mean + 10.0 * math.sqrt(variance + 1.0)))


def _check_nonneg(**kw):
    for name, value in kw.items():
        if not value >= 0:
            raise DomainError(f"{name} must be >= 0, got {value!r}")


def _auto_truncate(build, M0: int) -> np.ndarray:
    # heavy (geometric) tails need more than the 10-sigma default
    M = M0
    while True:
        probs = build(M)
        if 1.0 - probs.sum() <= TAIL_TOL or M > 50 * (M0 + 10):
            return probs
        M *= 2


def _finish(probs: np.ndarray, what: str) -> ProbDist:
    tail = 1.0 - probs.sum()
    if tail > TAIL_TOL:
        warnings.warn(
            f"{what}: {tail:.3g} probability beyond M = {probs.size - 1}",
            TruncationWarning,
            stacklevel=3,
        )
    return ProbDist(probs)


def poisson_dist(mu: float, M: Optional[int] = None) -> ProbDist:
    _check_nonneg(mu=mu)
    build = lambda M: stats.poisson.pmf(np.arange(M + 1), mu)
    if M is None:
        return _finish(_auto_truncate(build, default_truncation(mu, mu)), f"poisson({mu})")
    _check_nonneg(M=M)
    return _finish(build(M), f"poisson({mu})")


def thermal_dist(m_th: float, M: Optional[int] = None) -> ProbDist:
    """Bose-Einstein counts with mean ``m_th``."""
    _check_nonneg(m_th=m_th)

    def build(M):
        if m_th == 0:
            return (np.arange(M + 1) == 0).astype(float)
        return _displaced_thermal_probs(m_th, 0.0, M)

    if M is None:
        M = len(_auto_truncate(build, default_truncation(m_th, m_th * (1 + m_th)))) - 1
    _check_nonneg(M=M)
    return _finish(build(M), f"thermal({m_th})")


def _displaced_thermal_closed(m_th: float, disp_sq: float, M: int) -> np.ndarray:
    # Laguerre form m^n/(1+m)^(n+1) e^{-d/(1+m)} L_n(-d/(m(1+m))), expanded so
    # that every term is positive:
    #   p_n = e^{-d/(1+m)}/(1+m) * sum_k C(n,k) q^(n-k) r^k / k!
    # with q = m/(1+m), r = d/(1+m)^2.
    n = np.arange(M + 1)[:, None]
    k = np.arange(M + 1)[None, :]
    valid = k <= n
    nk = np.where(valid, n - k, 0)
    log_q = math.log(m_th / (1 + m_th))
    log_r = math.log(disp_sq) - 2 * math.log1p(m_th)
    log_terms = (
        gammaln(n + 1) - gammaln(k + 1) - gammaln(nk + 1)
        + nk * log_q + k * log_r - gammaln(k + 1)
    )
    log_terms = np.where(valid, log_terms, -np.inf)
    log_p = logsumexp(log_terms, axis=1) - disp_sq / (1 + m_th) - math.log1p(m_th)
    return np.exp(log_p)


def _displaced_thermal_probs(m_th: float, disp_sq: float, M: int) -> np.ndarray:
    n = np.arange(M + 1)
    if m_th == 0:
        return stats.poisson.pmf(n, disp_sq)
    if disp_sq == 0:
        return np.exp(n * math.log(m_th / (1 + m_th)) - math.log1p(m_th))
    return _displaced_thermal_closed(m_th, disp_sq, M)


def _displaced_thermal_quadrature(m_th: float, disp_sq: float, M: int,
                                  nodes: int = HERMITE_NODES) -> np.ndarray:
    # Average Poisson(|beta0 + a|^2) over the Gaussian P-function of the
    # thermal field, a = x + iy with x, y ~ N(0, m_th/2), by tensor Gauss-Hermite.
    t, w = np.polynomial.hermite.hermgauss(nodes)
    s = math.sqrt(m_th)
    x = math.sqrt(disp_sq) + s * t[:, None]
    y = s * t[None, :]
    lam = (x ** 2 + y ** 2).ravel()
    weights = (w[:, None] * w[None, :]).ravel() / math.pi
    pmf = stats.poisson.pmf(np.arange(M + 1)[:, None], lam[None, :])
    return pmf @ weights


def displaced_thermal_dist(m_th: float, disp_sq: float, M: Optional[int] = None,
                           method: str = "closed_form") -> ProbDist:
    """Counts of a thermal field displaced by an amplitude of modulus^2 ``disp_sq``.

    ``method`` selects the Laguerre-series closed form or the Gaussian
    quadrature over the thermal P-function; the two agree to ~1e-8.
    """
    _check_nonneg(m_th=m_th, disp_sq=disp_sq)
    if method not in ("closed_form", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    if M is None:
        mean = m_th + disp_sq
        M0 = default_truncation(mean, mean + m_th ** 2 + 2 * m_th * disp_sq)
        M = len(_auto_truncate(lambda k: _displaced_thermal_probs(m_th, disp_sq, k), M0)) - 1
    _check_nonneg(M=M)
    if method == "quadrature" and m_th > 0:
        probs = _displaced_thermal_quadrature(m_th, disp_sq, M)
    else:
        probs = _displaced_thermal_probs(m_th, disp_sq, M)
    return _finish(probs, f"displaced_thermal({m_th}, {disp_sq})")


def _phase_average(sig_sq, probe_sq, M, nodes):
    phi = 2 * np.pi * np.arange(nodes) / nodes
    lam = sig_sq + probe_sq + 2 * math.sqrt(sig_sq * probe_sq) * np.cos(phi)
    lam = np.clip(lam, 0.0, None)
    return stats.poisson.pmf(np.arange(M + 1)[:, None], lam[None, :]).mean(axis=1)


def phase_avg_coherent_dist(sig_sq: float, probe_sq: float,
                            M: Optional[int] = None) -> ProbDist:
    """Counts of a coherent signal mixed with a probe at uniformly random relative phase."""
    _check_nonneg(sig_sq=sig_sq, probe_sq=probe_sq)
    if M is None:
        mean = sig_sq + probe_sq
        M0 = default_truncation(mean, mean + 2 * sig_sq * probe_sq)
        M = len(_auto_truncate(lambda k: _phase_average(sig_sq, probe_sq, k, PHASE_NODES), M0)) - 1
    _check_nonneg(M=M)
    if sig_sq == 0 or probe_sq == 0:
        return poisson_dist(sig_sq + probe_sq, M)
    # periodic smooth integrand: the trapezoid rule converges spectrally
    coarse = _phase_average(sig_sq, probe_sq, M, PHASE_NODES)
    fine = _phase_average(sig_sq, probe_sq, M, PHASE_CHECK_NODES)
    err = float(np.max(np.abs(fine - coarse)))
    if err > PHASE_CHECK_TOL:
        raise QuadratureError(
            "phase average not converged",
            {"max_abs_diff": err, "nodes": PHASE_NODES, "sig_sq": sig_sq, "probe_sq": probe_sq},
        )
    return _finish(coarse, f"phase_avg_coherent({sig_sq}, {probe_sq})")


def bernoulli_loss(p: ProbDist, eta: float) -> ProbDist:
    """Binomial thinning: each photon survives independently with probability ``eta``."""
    if not 0 <= eta <= 1:
        raise DomainError(f"eta must lie in [0, 1], got {eta!r}")
    if eta == 1:
        return p
    # below this the survival mass M * eta is negligible, and scipy's
    # binomial pmf overflows for eta near the smallest normal double
    if eta < 1e-300:
        probs = np.zeros(p.M + 1)
        probs[0] = p.total
        return ProbDist(probs)
    n = np.arange(p.M + 1)
    kernel = stats.binom.pmf(n[:, None], n[None, :], eta)
    return ProbDist(kernel @ p.probs)


def convolve(p: ProbDist, q: ProbDist) -> ProbDist:
    """Distribution of the sum of two independent counts."""
    return ProbDist(np.convolve(p.probs, q.probs))


def moments(p: ProbDist) -> Moments:
    m = np.arange(p.M + 1)
    mean = float(m @ p.probs)
    variance = max(float((m * m) @ p.probs) - mean ** 2, 0.0)
    if mean > 0:
        fano = variance / mean
        return Moments(mean, variance, fano - 1.0, fano)
    return Moments(mean, variance, None, None)


def fidelity(p: ProbDist, q: ProbDist, convention: str = "bhattacharyya") -> float:
    """Overlap of two count distributions over their common support 0..min(M_p, M_q).

    ``"bhattacharyya"`` is sum sqrt(p q); ``"paper_literal"`` is the bare
    sum p q, which is not a normalized overlap and stays well below 1 for
    broad distributions.
    """
    convention = convention.replace("-", "_")
    k = min(p.M, q.M) + 1
    a, b = p.probs[:k], q.probs[:k]
    if convention == "bhattacharyya":
        return float(np.sum(np.sqrt(a * b)))
    if convention == "paper_literal":
        return float(np.sum(a * b))
    raise ValueError(f"unknown fidelity convention {convention!r}")
