import math

import numpy as np
import pytest

from conftest import chi2_pvalue
from directwigner.detector import DetectorModel, ShotRecord, acquire, amplify, detect
from directwigner.errors import DomainError
from directwigner.field_states import PhaseAveragedCoherent, ProbeSetting, Thermal, Vacuum, mixed_mean
from directwigner.photon_statistics import poisson_dist


def test_detect_limits(rng):
    assert detect(7, 1.0, rng) == 7
    assert detect(7, 0.0, rng) == 0


def test_detect_thins_poisson(rng):
    m = detect(rng.poisson(4.0, 1_000_000), 0.31, rng)
    assert chi2_pvalue(m, poisson_dist(1.24).probs) > 0.01


def test_amplify(rng):
    assert amplify(3, 1.0, 0.0, rng) == 3.0
    assert amplify(0, 2.5, 0.0, rng) == 0.0
    v = amplify(np.full(100_000, 5), 2.0, 0.1, rng)
    assert abs(v.mean() - 10.0) <= 3 * 0.1 / math.sqrt(1e5)


def test_detector_defaults_and_validation():
    assert DetectorModel(0.3, 2.0).noise_sigma == pytest.approx(0.2)
    for bad in (dict(eta=0.0), dict(eta=1.2), dict(eta=0.5, gamma=0.0), dict(eta=0.5, noise_sigma=-1)):
        with pytest.raises(DomainError):
            DetectorModel(**bad)


def test_acquire_dark_vacuum_is_pure_noise():
    det = DetectorModel(0.3, 1.0, 0.1)
    rec = acquire(Vacuum(), ProbeSetting(0.0), det, 1000, seed=3)
    assert rec.n_shots == 1000
    assert not rec.counts.any()
    assert abs(rec.voltages.mean()) < 4 * 0.1 / math.sqrt(1000)
    assert rec.voltages.std() == pytest.approx(0.1, rel=0.1)


def test_acquire_is_deterministic():
    args = (Thermal(3.0), ProbeSetting(1.5, 0.2, 0.8), DetectorModel(0.31, 1.3, 0.1), 20000)
    a = acquire(*args, seed=99)
    b = acquire(*args, seed=99)
    np.testing.assert_array_equal(a.voltages, b.voltages)
    c = acquire(*args, seed=99, workers=4)
    np.testing.assert_array_equal(a.voltages, c.voltages)
    assert not np.array_equal(a.voltages, acquire(*args, seed=100).voltages)


def test_acquire_vacuum_mean_voltage():
    # detected probe mean 4 at eta = 0.31
    det = DetectorModel(0.31, 1.0, 0.0)
    rec = acquire(Vacuum(), ProbeSetting(math.sqrt(4 / 0.31)), det, 30000, seed=1)
    assert abs(rec.voltages.mean() - 4.0) <= 3 * math.sqrt(4 / 30000)


def test_noise_free_unit_gain_voltages_are_counts():
    rec = acquire(Thermal(2.0), ProbeSetting(1.0), DetectorModel(0.5, 1.0, 0.0), 5000, seed=5)
    np.testing.assert_array_equal(rec.voltages, rec.counts)


@pytest.mark.parametrize("state", [Vacuum(), Thermal(4.0), PhaseAveragedCoherent(2.0)], ids=lambda s: s.kind)
def test_mean_voltage_is_gamma_eta_photon_mean(state):
    det = DetectorModel(0.31, 1.7, 0.17)
    probe = ProbeSetting(2.5, 0.0, 0.9)
    rec = acquire(state, probe, det, 100_000, seed=11)
    expected = det.gamma * det.eta * mixed_mean(state, probe)
    assert abs(rec.voltages.mean() - expected) <= 4 * rec.voltages.std() / math.sqrt(rec.n_shots)


def test_poisson_fano_equals_gain_without_noise():
    gamma = 2.0
    det = DetectorModel(0.31, gamma, 0.0)
    rec = acquire(Vacuum(), ProbeSetting(10.0), det, 200_000, seed=2)
    v = rec.voltages
    fano = v.var(ddof=1) / v.mean()
    # relative standard error of a Poisson Fano factor is about sqrt(2/N)
    assert abs(fano - gamma) <= 4 * gamma * math.sqrt(2 / v.size)


def test_dark_counts_add_poisson_mean():
    det = DetectorModel(0.5, 1.0, 0.0, dark_mean=0.2)
    rec = acquire(Vacuum(), ProbeSetting(0.0), det, 50000, seed=8)
    assert abs(rec.counts.mean() - 0.2) <= 4 * math.sqrt(0.2 / 50000)


def test_record_round_trip(tmp_path):
    rec = acquire(PhaseAveragedCoherent(1.2), ProbeSetting(0.8, 0.5, 0.91), DetectorModel(0.31), 500, seed=4)
    rec.to_csv(tmp_path / "r.csv")
    rec.to_json(tmp_path / "r.json")
    for back in (ShotRecord.from_csv(tmp_path / "r.csv"), ShotRecord.from_json(tmp_path / "r.json")):
        np.testing.assert_array_equal(back.voltages, rec.voltages)
        assert back.state == rec.state
        assert back.probe == rec.probe
        assert back.detector == rec.detector
        assert back.seed == 4
    lines = (tmp_path / "r.csv").read_text().splitlines()
    keys = [line[2:].split("=")[0] for line in lines if line.startswith("#")]
    assert keys == ["state", "alpha_mag", "phase", "xi", "eta", "gamma_true", "noise_sigma", "dark_mean", "N", "seed"]
    assert len(lines) == len(keys) + 500


def test_foreign_voltage_file_is_ingestible(tmp_path):
    path = tmp_path / "lab.csv"
    path.write_text("# eta=0.2\nvoltage\n0.1\n1.05\n2.0\n")
    rec = ShotRecord.from_csv(path)
    assert rec.n_shots == 3
    assert rec.state is None and rec.detector.eta == 0.2


def test_record_length_mismatch_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# N=5\n1.0\n2.0\n")
    with pytest.raises(DomainError):
        ShotRecord.from_csv(path)
