"""Self-consistent gain calibration and voltage-to-count rebinning.

For a linear detector the Fano factor of the output voltages obeys
F_v = (Q/n) v + gamma across an efficiency sweep of one field, so the
intercept of F_v against the mean voltage is the gain.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .detector import ShotRecord
from .errors import CalibrationError, FitError
from .photon_statistics import ProbDist


@dataclass(frozen=True)
class FanoPoint:
    v_bar: float
    f_v: float
    eta_label: Optional[float] = None
    n_shots: int = 0


@dataclass(frozen=True)
class CalibrationResult:
    gamma_hat: float
    slope_hat: float
    stderr_gamma: float
    stderr_slope: float
    r_squared: float
    points_used: int
    points: List[FanoPoint] = field(default_factory=list, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["points"] = [asdict(p) for p in self.points]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationResult":
        d = dict(d)
        points = [FanoPoint(**p) for p in d.pop("points", [])]
        return cls(**d, points=points)

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "CalibrationResult":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fano_point(rec: ShotRecord) -> FanoPoint:
    v = rec.voltages
    if v.size < 2:
        raise CalibrationError(f"need at least 2 shots for a variance, got {v.size}")
    v_bar = float(v.mean())
    if not v_bar > 0:
        raise CalibrationError(f"mean voltage must be positive, got {v_bar:.4g}")
    eta = rec.detector.eta if rec.detector is not None else None
    return FanoPoint(v_bar, float(v.var(ddof=1)) / v_bar, eta, int(v.size))


def fit_gamma(points: Sequence[FanoPoint]) -> CalibrationResult:
    """Unweighted least-squares line F_v = slope * v_bar + gamma.

    Raises
    ------
    FitError
        Fewer than three points, mean voltages too close together to fix a
        slope, or a non-positive intercept (the failed fit is attached).
    """
    # a canonical order makes the floating-point result permutation invariant
    pts = sorted(points, key=lambda p: (p.v_bar, p.f_v))
    n = len(pts)
    if n < 3:
        raise FitError(f"need at least 3 Fano points, got {n}")
    x = np.array([p.v_bar for p in pts])
    y = np.array([p.f_v for p in pts])
    x_mean, y_mean = x.mean(), y.mean()
    sxx = float(np.sum((x - x_mean) ** 2))
    if sxx <= 1e-12 * max(float(np.sum(x ** 2)), 1e-300):
        raise FitError("mean voltages are (nearly) identical; slope is undetermined")
    slope = float(np.sum((x - x_mean) * (y - y_mean)) / sxx)
    intercept = float(y_mean - slope * x_mean)
    resid = y - (slope * x + intercept)
    rss = float(resid @ resid)
    tss = float(np.sum((y - y_mean) ** 2))
    s2 = rss / (n - 2)
    result = CalibrationResult(
        gamma_hat=intercept,
        slope_hat=slope,
        stderr_gamma=math.sqrt(s2 * (1.0 / n + x_mean ** 2 / sxx)),
        stderr_slope=math.sqrt(s2 / sxx),
        r_squared=1.0 - rss / tss if tss > 0 else 1.0,
        points_used=n,
        points=list(pts),
    )
    if not intercept > 0:
        raise FitError(f"fitted gain {intercept:.4g} is not positive", result)
    return result


def calibrate(records: Iterable[ShotRecord]) -> CalibrationResult:
    """Fano points of an efficiency sweep of one field, then the gain fit."""
    return fit_gamma([fano_point(r) for r in records])


def bin_counts(voltages, gamma_hat: float) -> np.ndarray:
    """Nearest detected-photon number per shot; ties round away from zero, negatives go to 0."""
    if not gamma_hat > 0:
        raise CalibrationError(f"gamma_hat must be > 0, got {gamma_hat!r}")
    x = np.asarray(voltages, dtype=float) / gamma_hat
    m = np.sign(x) * np.floor(np.abs(x) + 0.5)
    return np.clip(m, 0, None).astype(np.int64)


def rebin(rec: ShotRecord, gamma_hat: float) -> ProbDist:
    """Detected-photon distribution of a record: divide by the gain, unit bins."""
    return ProbDist.from_counts(bin_counts(rec.voltages, gamma_hat))
