import math

import numpy as np
import pytest
from scipy import stats

from directwigner.calibration import (
    CalibrationResult,
    FanoPoint,
    bin_counts,
    calibrate,
    fano_point,
    fit_gamma,
    rebin,
)
from directwigner.detector import DetectorModel, ShotRecord, acquire
from directwigner.errors import CalibrationError, FitError
from directwigner.field_states import ProbeSetting, Thermal, Vacuum
from directwigner.photon_statistics import ProbDist, fidelity, poisson_dist

ETAS = np.linspace(0.05, 0.31, 8)


def _sweep(state, probe, gamma=1.0, noise=0.1, n_shots=30000, seed=0):
    seeds = np.random.SeedSequence(seed).generate_state(len(ETAS), dtype=np.uint64)
    return [acquire(state, probe, DetectorModel(float(e), gamma, noise), n_shots, int(s))
            for e, s in zip(ETAS, seeds)]


def test_fano_point_of_constant_voltages():
    p = fano_point(ShotRecord(np.full(100, 2.5)))
    assert p.v_bar == 2.5
    assert p.f_v == 0.0
    assert p.n_shots == 100


def test_fano_point_of_poisson_voltages():
    rng = np.random.default_rng(1)
    v = 2.0 * rng.poisson(3.0, 1_000_000)
    p = fano_point(ShotRecord(v))
    # Fano factor of Poisson counts has relative standard error about sqrt((2 + 1/mu) / N)
    se = 2.0 * math.sqrt((2 + 1 / 3.0) / v.size)
    assert abs(p.f_v - 2.0) <= 3 * se


def test_fano_point_of_thermal_voltages():
    m_bar = 1.5
    rec = acquire(Thermal(m_bar / 0.3), ProbeSetting(0.0), DetectorModel(0.3, 1.0, 0.0), 400_000, seed=6)
    p = fano_point(rec)
    assert p.f_v == pytest.approx(1 + m_bar, rel=0.02)
    assert p.eta_label == 0.3


@pytest.mark.parametrize("voltages", [[1.0], [0.0, 0.0, 0.0], [-1.0, 0.5]])
def test_fano_point_rejects_bad_records(voltages):
    with pytest.raises(CalibrationError):
        fano_point(ShotRecord(voltages))


def test_fit_exact_line():
    pts = [FanoPoint(v, 0.3 * v + 1.7) for v in (0.5, 1.0, 2.0, 3.5, 5.0)]
    res = fit_gamma(pts)
    assert res.gamma_hat == pytest.approx(1.7, abs=1e-12)
    assert res.slope_hat == pytest.approx(0.3, abs=1e-12)
    assert res.stderr_gamma < 1e-10 and res.stderr_slope < 1e-10
    assert res.r_squared == pytest.approx(1.0)
    assert res.points_used == 5


def test_fit_errors():
    with pytest.raises(FitError):
        fit_gamma([FanoPoint(1.0, 1.0), FanoPoint(2.0, 1.0)])
    with pytest.raises(FitError):
        fit_gamma([FanoPoint(1.0, 1.0)] * 4)
    with pytest.raises(FitError) as info:
        fit_gamma([FanoPoint(v, 2 * v - 1) for v in (1.0, 2.0, 3.0)])
    assert info.value.result.gamma_hat == pytest.approx(-1.0)


def test_poisson_sweep_recovers_gain():
    # about 100 photons per pulse before detection
    res = calibrate(_sweep(Vacuum(), ProbeSetting(10.0), seed=3))
    assert abs(res.slope_hat) <= 3 * res.stderr_slope
    assert abs(res.gamma_hat - 1.0) <= 3 * res.stderr_gamma
    assert res.stderr_gamma > 0


def test_thermal_sweep_slope():
    # thermal light has Q = n, so F_v = gamma + v_bar without voltage noise
    res = calibrate(_sweep(Thermal(10.0), ProbeSetting(0.0), noise=0.0, seed=4))
    assert res.slope_hat > 0
    assert abs(res.slope_hat - 1.0) <= 3 * res.stderr_slope
    assert abs(res.gamma_hat - 1.0) <= 3 * res.stderr_gamma


def test_fit_is_permutation_invariant():
    records = _sweep(Vacuum(), ProbeSetting(10.0), n_shots=5000, seed=5)
    pts = [fano_point(r) for r in records]
    base = fit_gamma(pts)
    rng = np.random.default_rng(0)
    for _ in range(5):
        assert fit_gamma([pts[i] for i in rng.permutation(len(pts))]) == base
    shuffled = [ShotRecord(rng.permutation(r.voltages), r.state, r.probe, r.detector) for r in records]
    again = calibrate(shuffled)
    assert again.gamma_hat == pytest.approx(base.gamma_hat, rel=1e-12)
    assert again.slope_hat == pytest.approx(base.slope_hat, rel=1e-10)


def test_result_round_trip(tmp_path):
    res = fit_gamma([FanoPoint(v, 0.1 * v + 1.0 + 0.01 * (-1) ** i, 0.1 * i, 100) for i, v in enumerate(range(1, 6))])
    res.to_json(tmp_path / "cal.json")
    back = CalibrationResult.from_json(tmp_path / "cal.json")
    assert back == res
    assert back.points == res.points


def test_rebin_examples():
    np.testing.assert_array_equal(rebin(ShotRecord([0, 1, 1, 2]), 1.0).probs, [0.25, 0.5, 0.25])
    np.testing.assert_array_equal(bin_counts([-0.7, 0.5, 1.49, 2.5, -0.5], 1.0), [0, 1, 1, 3, 0])
    with pytest.raises(CalibrationError):
        bin_counts([1.0], 0.0)


@pytest.mark.parametrize("gamma", [0.37, 1.0, 2.5, 13.0])
def test_rebin_is_exact_without_noise(gamma):
    rec = acquire(Thermal(4.0), ProbeSetting(1.2), DetectorModel(0.31, gamma, 0.0), 20000, seed=9)
    p = rebin(rec, gamma)
    np.testing.assert_array_equal(p.probs, ProbDist.from_counts(rec.counts).probs)
    assert math.fsum(p.probs) == pytest.approx(1.0, abs=1e-15)


def test_vacuum_rebin_fidelity():
    eta = 0.31
    rec = acquire(Vacuum(), ProbeSetting(math.sqrt(2 / eta)), DetectorModel(eta, 1.0, 0.1), 30000, seed=10)
    assert fidelity(rebin(rec, 1.0), poisson_dist(2.0)) >= 0.999


def test_misbinning_rate_matches_noise_bound():
    gamma, sigma = 1.0, 0.15
    rec = acquire(Vacuum(), ProbeSetting(math.sqrt(10 / 0.31)), DetectorModel(0.31, gamma, sigma),
                  1_000_000, seed=12)
    rate = np.mean(bin_counts(rec.voltages, gamma) != rec.counts)
    bound = 2 * stats.norm.sf(gamma / 2, scale=sigma)
    # bin 0 only mis-bins upward, so the rate sits slightly under the bound
    assert rate <= bound
    assert bound / 1.5 <= rate


def test_rebin_mean_tracks_efficiency():
    eta, m_th = 0.2, 3.0
    rec = acquire(Thermal(m_th), ProbeSetting(1.5, 0.0, 0.8), DetectorModel(eta, 1.3, 0.13), 50000, seed=13)
    m = bin_counts(rec.voltages, 1.3)
    photon_mean = m_th + 1.5 ** 2
    assert abs(m.mean() - eta * photon_mean) <= 4 * m.std() / math.sqrt(m.size)
