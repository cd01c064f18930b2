"""Wigner-function estimation from detected-photon distributions.

The estimator is the parity of the displaced field,
W(beta) = (2/pi) * sum_m (-1)^m p_m(beta), evaluated directly on detected
photons. Reference surfaces for the implemented classical states and the
loss / mode-mismatch maps live here too.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .calibration import rebin
from .detector import ShotRecord
from .errors import DomainError, QuadratureError
from .field_states import (
    Coherent,
    PhaseAveragedCoherent,
    SignalState,
    Thermal,
    Vacuum,
    state_to_dict,
)
from .photon_statistics import ProbDist

TWO_OVER_PI = 2.0 / math.pi
# below this argument the power series for I0 is used, above it the
# asymptotic expansion (whose smallest term is ~exp(-2x))
_I0_SWITCH = 30.0
_GL_ORDER = 8


@dataclass(frozen=True)
class PhaseSpacePoint:
    beta_re: float
    beta_im: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.beta_re) and math.isfinite(self.beta_im)):
            raise DomainError("phase-space coordinates must be finite")

    @classmethod
    def from_polar(cls, mag: float, phase: float = 0.0) -> "PhaseSpacePoint":
        return cls(mag * math.cos(phase), mag * math.sin(phase))

    @classmethod
    def of(cls, z) -> "PhaseSpacePoint":
        if isinstance(z, cls):
            return z
        z = complex(z)
        return cls(z.real, z.imag)

    @property
    def beta_mag(self) -> float:
        return math.hypot(self.beta_re, self.beta_im)

    def __complex__(self):
        return complex(self.beta_re, self.beta_im)


Point = Union[PhaseSpacePoint, complex, float]


@dataclass(frozen=True)
class WignerSample:
    point: PhaseSpacePoint
    w_est: float
    trunc_bound: float = 0.0
    stderr: float = 0.0
    w_ref: Optional[float] = None

    def __post_init__(self):
        if abs(self.w_est) > TWO_OVER_PI + self.trunc_bound + 1e-12:
            raise DomainError(f"|W| = {abs(self.w_est):.6g} exceeds 2/pi + truncation bound")


@dataclass
class WignerSection:
    """Samples along a one-dimensional cut, ordered by |beta|."""

    samples: List[WignerSample]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        mags = [s.point.beta_mag for s in self.samples]
        if any(b <= a for a, b in zip(mags, mags[1:])):
            raise DomainError("section samples must be strictly ordered by |beta|")

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def beta_mag(self) -> np.ndarray:
        return np.array([s.point.beta_mag for s in self.samples])

    @property
    def w_est(self) -> np.ndarray:
        return np.array([s.w_est for s in self.samples])

    @property
    def w_ref(self) -> np.ndarray:
        return np.array([np.nan if s.w_ref is None else s.w_ref for s in self.samples])

    @property
    def stderr(self) -> np.ndarray:
        return np.array([s.stderr for s in self.samples])

    COLUMNS = ("beta_re", "beta_im", "w_est", "stderr", "trunc_bound", "w_ref")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.COLUMNS)
            for s in self.samples:
                ref = "" if s.w_ref is None else f"{s.w_ref:.17g}"
                writer.writerow([f"{s.point.beta_re:.17g}", f"{s.point.beta_im:.17g}",
                                 f"{s.w_est:.17g}", f"{s.stderr:.17g}",
                                 f"{s.trunc_bound:.17g}", ref])

    @classmethod
    def from_csv(cls, path, meta: Optional[dict] = None) -> "WignerSection":
        samples = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                ref = row.get("w_ref", "")
                samples.append(WignerSample(
                    PhaseSpacePoint(float(row["beta_re"]), float(row["beta_im"])),
                    float(row["w_est"]), float(row.get("trunc_bound") or 0.0),
                    float(row.get("stderr") or 0.0), float(ref) if ref else None))
        return cls(samples, dict(meta or {}))

    def to_dict(self) -> dict:
        rows = []
        for s in self.samples:
            rows.append({"beta_re": s.point.beta_re, "beta_im": s.point.beta_im, "w_est": s.w_est,
                         "stderr": s.stderr, "trunc_bound": s.trunc_bound, "w_ref": s.w_ref})
        return {"meta": self.meta, "samples": rows}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d: dict) -> "WignerSection":
        samples = [WignerSample(PhaseSpacePoint(r["beta_re"], r["beta_im"]), r["w_est"],
                                r["trunc_bound"], r["stderr"], r["w_ref"]) for r in d["samples"]]
        return cls(samples, d.get("meta", {}))


# -- special functions ------------------------------------------------------------


def bessel_i0e(x):
    """Exponentially scaled modified Bessel function exp(-|x|) I0(x)."""
    x = np.abs(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    small = x <= _I0_SWITCH
    if np.any(small):
        xs = x[small]
        q = xs * xs / 4.0
        term = np.ones_like(xs)
        total = np.ones_like(xs)
        k = 0
        while True:
            k += 1
            term = term * q / (k * k)
            total = total + term
            if np.all(term <= 1e-17 * total):
                break
        out[small] = total * np.exp(-xs)
    if np.any(~small):
        xl = x[~small]
        term = np.ones_like(xl)
        total = np.ones_like(xl)
        for k in range(1, 60):
            term = term * (2 * k - 1) ** 2 / (8.0 * k * xl)
            total = total + term
            if np.all(term <= 1e-17 * total):
                break
        out[~small] = total / np.sqrt(2 * math.pi * xl)
    return out[()] if out.ndim == 0 else out


# -- estimator -----------------------------------------------------------------------


def wigner_from_dist(p: ProbDist) -> Tuple[float, float]:
    """Parity estimate of W and a bound on the series truncation error."""
    signs = np.where(np.arange(p.M + 1) % 2 == 0, 1.0, -1.0)
    w = TWO_OVER_PI * float(signs @ p.probs)
    tail = max(1.0 - math.fsum(p.probs), 0.0)
    return w, TWO_OVER_PI * tail


def parity_stderr(w_est: float, n_shots: int) -> float:
    """Standard error of a parity estimate from ``n_shots`` independent shots.

    Each shot contributes +-2/pi, so the estimator is a scaled mean of
    +-1 variables with mean w_est / (2/pi).
    """
    if n_shots < 1:
        return float("nan")
    w_norm = min(abs(w_est) / TWO_OVER_PI, 1.0)
    return TWO_OVER_PI * math.sqrt((1.0 - w_norm ** 2) / n_shots)


# -- analytic references ---------------------------------------------------------------


def analytic_gaussian_wigner(m_th: float, beta0: Point, beta: Point):
    """Non-squeezed Gaussian state with ``m_th`` thermal photons displaced to ``beta0``.

    ``beta`` may also be a complex numpy array.
    """
    if not m_th >= 0:
        raise DomainError(f"m_th must be >= 0, got {m_th!r}")
    width = 2.0 * m_th + 1.0
    b0 = complex(PhaseSpacePoint.of(beta0))
    b = beta if isinstance(beta, np.ndarray) else complex(PhaseSpacePoint.of(beta))
    val = TWO_OVER_PI / width * np.exp(-2.0 * np.abs(b - b0) ** 2 / width)
    return float(val) if np.ndim(val) == 0 else val


def analytic_phase_avg_wigner(beta0_mag: float, beta_mag):
    """Phase-averaged coherent state of detected amplitude ``beta0_mag``, as a function of |beta|."""
    beta_mag = np.asarray(beta_mag, dtype=float)
    if beta0_mag < 0 or np.any(beta_mag < 0):
        raise DomainError("magnitudes must be >= 0")
    # I0(x) exp(-2(b^2 + b0^2)) = i0e(x) exp(-2(b - b0)^2) with x = 4 b b0
    val = TWO_OVER_PI * bessel_i0e(4.0 * beta_mag * beta0_mag) * np.exp(-2.0 * (beta_mag - beta0_mag) ** 2)
    return float(val) if np.ndim(val) == 0 else val


def ideal_wigner(state: SignalState) -> Callable:
    """Wigner function of a detected-level state as a vectorized function of complex beta.

    The probe shifts the field by +beta, so the parity of the mixed field
    samples the state's Wigner function at -beta; for the coherent state
    that puts the centre at minus its amplitude.
    """
    if isinstance(state, Vacuum):
        return lambda b: analytic_gaussian_wigner(0.0, 0.0, np.asarray(b, dtype=complex))
    if isinstance(state, Thermal):
        return lambda b: analytic_gaussian_wigner(state.m_th, 0.0, np.asarray(b, dtype=complex))
    if isinstance(state, PhaseAveragedCoherent):
        return lambda b: analytic_phase_avg_wigner(state.amplitude, np.abs(b))
    if isinstance(state, Coherent):
        centre = -state.amplitude * np.exp(1j * state.phase)
        return lambda b: analytic_gaussian_wigner(0.0, centre, np.asarray(b, dtype=complex))
    raise TypeError(f"not a signal state: {state!r}")


def mismatch_corrected_wigner(w_ideal: Callable, xi: float, beta: Point) -> float:
    """Wigner function seen through a probe of which only intensity fraction ``xi`` is mode matched.

    The matched part displaces by sqrt(xi) beta; the residual probe
    contributes the normalized Gaussian factor exp(-2 (1 - xi) |beta|^2).
    Exact for the intensity-partition model of the mixer.
    """
    if not 0 <= xi <= 1:
        raise DomainError(f"xi must lie in [0, 1], got {xi!r}")
    b = complex(PhaseSpacePoint.of(beta))
    if xi == 1:
        return float(w_ideal(b))
    return float(w_ideal(math.sqrt(xi) * b)) * math.exp(-2.0 * (1.0 - xi) * abs(b) ** 2)


def reference_wigner(state: SignalState, xi: float, beta: Point) -> float:
    """Corrected theory for a detected-level ``state`` at detected displacement ``beta``."""
    return mismatch_corrected_wigner(ideal_wigner(state), xi, beta)


# -- losses -------------------------------------------------------------------------------


def _square_quadrature(f, centre: complex, half: float, panels: int) -> float:
    t, w = np.polynomial.legendre.leggauss(_GL_ORDER)
    edges = np.linspace(-half, half, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    h = 0.5 * (edges[1] - edges[0])
    nodes = (mid[:, None] + h * t[None, :]).ravel()
    weights = np.tile(h * w, panels)
    z = centre + nodes[:, None] + 1j * nodes[None, :]
    return float(weights @ f(z) @ weights)


def loss_smoothed_wigner(w: Callable, eta: float, beta: Point, tol: float = 1e-6,
                         max_panels: int = 256) -> float:
    """Wigner function of the detected field given the photon-level ``w``.

    Convolves w(beta'/sqrt(eta)) with the normalized Gaussian kernel
    (2/(pi(1-eta))) exp(-2|beta - beta'|^2/(1-eta)). The 1/eta Jacobian of
    the change of variable alpha = beta'/sqrt(eta) is included so that the
    result stays normalized. ``w`` must accept complex arrays.

    Integration uses composite Gauss-Legendre panels on a square covering
    the kernel, refined by doubling until two successive refinements agree
    within ``tol``.
    """
    if not 0 < eta <= 1:
        raise DomainError(f"eta must lie in (0, 1], got {eta!r}")
    b = complex(PhaseSpacePoint.of(beta))
    if 1.0 - eta < 1e-6:
        return float(w(np.asarray(b / math.sqrt(eta))))
    spread = 1.0 - eta
    sqrt_eta = math.sqrt(eta)

    def integrand(z):
        kernel = 2.0 / (math.pi * spread) * np.exp(-2.0 * np.abs(z - b) ** 2 / spread)
        return kernel * w(z / sqrt_eta) / eta

    # the kernel is below exp(-40) outside this square
    half = math.sqrt(20.0 * spread)
    history = []
    panels = 4
    while panels <= max_panels:
        history.append(_square_quadrature(integrand, b, half, panels))
        if len(history) >= 3 and abs(history[-1] - history[-2]) < tol / 4 \
                and abs(history[-2] - history[-3]) < tol:
            return history[-1]
        panels *= 2
    raise QuadratureError(
        "loss smoothing did not converge",
        {"estimates": history, "tol": tol, "eta": eta, "beta": b, "max_panels": max_panels},
    )


# -- metrics and sections -------------------------------------------------------------------


def mean_error(section: WignerSection) -> float:
    """Signed mean of (reference - estimate) over the section's points."""
    if len(section) == 0:
        raise DomainError("empty section")
    if any(s.w_ref is None for s in section):
        raise DomainError("every sample needs a reference value")
    return math.fsum(s.w_ref - s.w_est for s in section) / len(section)


def section_from_dists(betas: Sequence[Point], dists: Sequence[ProbDist],
                       state: Optional[SignalState] = None, xi: float = 1.0,
                       n_shots: Optional[Sequence[int]] = None,
                       meta: Optional[dict] = None) -> WignerSection:
    """Section from already-known detected-photon distributions.

    ``state`` (detected level) provides the references; without it the
    samples carry no ``w_ref``.
    """
    if len(betas) != len(dists):
        raise DomainError("need one distribution per phase-space point")
    if len(betas) == 0:
        raise DomainError("empty section")
    samples = []
    for i, (beta, p) in enumerate(zip(betas, dists)):
        point = PhaseSpacePoint.of(beta)
        w, bound = wigner_from_dist(p)
        se = parity_stderr(w, n_shots[i]) if n_shots is not None else 0.0
        ref = reference_wigner(state, xi, point) if state is not None else None
        samples.append(WignerSample(point, w, bound, se, ref))
    samples.sort(key=lambda s: s.point.beta_mag)
    return WignerSection(samples, dict(meta or {}))


def record_beta(rec: ShotRecord) -> PhaseSpacePoint:
    if rec.probe is None or rec.detector is None:
        raise DomainError("record lacks probe/detector metadata needed to place it in phase space")
    return PhaseSpacePoint.from_polar(math.sqrt(rec.detector.eta) * rec.probe.alpha_mag, rec.probe.phase)


def reconstruct_section(records: Sequence[ShotRecord], gamma_hat: float) -> WignerSection:
    """Rebin every record with the calibrated gain and estimate W at its displacement.

    Records must share state, detector and overlap and differ in probe
    amplitude. References use the record's photon-level state scaled to the
    detected level.
    """
    if not records:
        raise DomainError("no records to reconstruct")
    first = records[0]
    if first.state is None or first.detector is None or first.probe is None:
        raise DomainError("records need state, probe and detector metadata")
    for rec in records[1:]:
        if rec.state != first.state:
            raise DomainError("records describe different signal states")
        if rec.detector != first.detector:
            raise DomainError("records were taken with different detector settings")
        if rec.probe is None or rec.probe.overlap_xi != first.probe.overlap_xi:
            raise DomainError("records have different mode overlap")
    mags = sorted(r.probe.alpha_mag for r in records)
    if any(b == a for a, b in zip(mags, mags[1:])):
        raise DomainError("probe amplitudes must be distinct")

    eta = first.detector.eta
    xi = first.probe.overlap_xi
    detected = first.state.scaled(eta)
    return section_from_dists(
        [record_beta(r) for r in records],
        [rebin(r, gamma_hat) for r in records],
        detected, xi, [r.n_shots for r in records],
        meta={"state": state_to_dict(detected), "gamma_hat": gamma_hat, "eta": eta, "xi": xi},
    )
