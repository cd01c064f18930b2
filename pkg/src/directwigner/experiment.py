"""Batch reproduction of the vacuum, phase-averaged and thermal experiments.

A run is described by a :class:`RunConfig`. Signal and probe intensities in
the configuration are *detected* quantities referred to the reference
efficiency ``eta_ref`` (default: the largest efficiency of the sweep), which
is also the efficiency whose records are used for the Wigner section. They
are converted to photon-level values for the simulation.

Every probe setting is recorded at every efficiency of the sweep. The gain
is calibrated on one probe setting: the dedicated ``calibration`` probe when
configured, otherwise the brightest setting of the sweep.
"""
from __future__ import annotations

import copy
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import yaml

from .calibration import CalibrationResult, calibrate, rebin
from .detector import DetectorModel, ShotRecord, acquire
from .errors import ConfigError, DomainError
from .field_states import ProbeSetting, SignalState, state_from_dict, state_to_dict, theoretical_mixed_dist
from .photon_statistics import FIDELITY_CONVENTIONS, ProbDist, fidelity
from .wigner import WignerSection, mean_error, reconstruct_section

MANIFEST = "manifest.json"
CALIBRATION = "calibration.json"
FANO_TABLE = "fano_points.csv"
REPORT = "report.json"
SUMMARY = "summary.json"

DEFAULT_ETAS = [round(float(e), 6) for e in np.linspace(0.05, 0.31, 8)]
SECTION_BETA_SQ = [round(float(b), 6) for b in np.linspace(0.0, 4.0, 15)]

DEFAULT_THRESHOLDS = {"min_fidelity": 0.999, "max_abs_eps": 5e-3, "max_gamma_rel_err": 0.02}

_BASE = {
    "probe": {"beta_sq": SECTION_BETA_SQ, "phase": 0.0, "xi": 1.0},
    "detector": {"etas": DEFAULT_ETAS, "gamma": 1.0, "noise_sigma": 0.1, "dark_mean": 0.0},
    # about 100 photons per pulse before detection
    "calibration": {"beta_sq": 31.0},
    "shots": 30000,
    "seed": 20070312,
    "workers": 1,
    "fidelity": "bhattacharyya",
    "thresholds": DEFAULT_THRESHOLDS,
}

PRESETS = {
    "vacuum": {"state": {"kind": "vacuum"}},
    "phase-averaged": {"state": {"kind": "phase_averaged", "beta0_sq": 1.41}, "probe": {"xi": 0.91}},
    "thermal": {"state": {"kind": "thermal", "m_th": 1.96}, "probe": {"xi": 0.65}},
}

_TOP_KEYS = {"state", "probe", "detector", "calibration", "shots", "seed", "workers", "out",
             "fidelity", "thresholds"}
_SECTION_KEYS = {
    "probe": {"beta_sq", "phase", "xi"},
    "detector": {"etas", "eta_ref", "gamma", "noise_sigma", "dark_mean"},
    "calibration": {"beta_sq"},
    "thresholds": set(DEFAULT_THRESHOLDS) | {"require_correction_gain"},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}", ["preset"])
    return _merge(_BASE, PRESETS[name])


def load_config_file(path) -> dict:
    """Read a YAML or JSON configuration document."""
    text = Path(path).read_text()
    try:
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: cannot parse configuration: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: configuration must be a mapping")
    return data


@dataclass
class RunConfig:
    state_spec: dict
    beta_sq: List[float]
    etas: List[float]
    probe_phase: float = 0.0
    xi: float = 1.0
    eta_ref: Optional[float] = None
    gamma: float = 1.0
    noise_sigma: Optional[float] = None
    dark_mean: float = 0.0
    calibration_beta_sq: Optional[float] = None
    shots: int = 30000
    seed: int = 0
    workers: int = 1
    out: Optional[str] = None
    fidelity: str = "bhattacharyya"
    thresholds: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))

    def __post_init__(self):
        if self.eta_ref is None and self.etas:
            self.eta_ref = max(self.etas)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        """Validate a configuration mapping; all problems are reported together."""
        bad = sorted(f"{k}" for k in d if k not in _TOP_KEYS)
        for section, allowed in _SECTION_KEYS.items():
            sub = d.get(section, {})
            if sub is None:
                continue
            if not isinstance(sub, dict):
                bad.append(section)
                continue
            bad += sorted(f"{section}.{k}" for k in sub if k not in allowed)
        for required in ("state", "probe", "detector"):
            if required not in d:
                bad.append(required)
        if bad:
            raise ConfigError(f"invalid configuration keys: {', '.join(bad)}", bad)

        probe = d["probe"]
        det = d["detector"]
        cal = d.get("calibration") or {}
        cfg = cls(
            state_spec=dict(d["state"]),
            beta_sq=[float(b) for b in probe.get("beta_sq", [])],
            etas=[float(e) for e in det.get("etas", [])],
            probe_phase=float(probe.get("phase", 0.0)),
            xi=float(probe.get("xi", 1.0)),
            eta_ref=det.get("eta_ref"),
            gamma=float(det.get("gamma", 1.0)),
            noise_sigma=det.get("noise_sigma"),
            dark_mean=float(det.get("dark_mean", 0.0)),
            calibration_beta_sq=cal.get("beta_sq"),
            shots=d.get("shots", 30000),
            seed=d.get("seed", 0),
            workers=d.get("workers", 1),
            out=d.get("out"),
            fidelity=d.get("fidelity", "bhattacharyya"),
            thresholds=_merge(DEFAULT_THRESHOLDS, d.get("thresholds") or {}),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        bad = []
        try:
            self.signal_state()
        except (DomainError, ConfigError, TypeError, ValueError):
            bad.append("state")
        if not self.beta_sq or any(not (b >= 0) for b in self.beta_sq):
            bad.append("probe.beta_sq")
        elif len(set(self.beta_sq)) != len(self.beta_sq):
            bad.append("probe.beta_sq")
        if not 0 <= self.xi <= 1:
            bad.append("probe.xi")
        if not self.etas or any(not (0 < e <= 1) for e in self.etas):
            bad.append("detector.etas")
        if self.eta_ref is None or not 0 < self.eta_ref <= 1:
            bad.append("detector.eta_ref")
        elif self.etas and self.eta_ref not in self.etas:
            bad.append("detector.eta_ref")
        if not self.gamma > 0:
            bad.append("detector.gamma")
        if self.noise_sigma is not None and not self.noise_sigma >= 0:
            bad.append("detector.noise_sigma")
        if not self.dark_mean >= 0:
            bad.append("detector.dark_mean")
        if self.calibration_beta_sq is not None and not self.calibration_beta_sq > 0:
            bad.append("calibration.beta_sq")
        if not isinstance(self.shots, int) or self.shots < 2:
            bad.append("shots")
        if not isinstance(self.seed, int) or self.seed < 0:
            bad.append("seed")
        if not isinstance(self.workers, int) or self.workers < 1:
            bad.append("workers")
        if self.fidelity.replace("-", "_") not in FIDELITY_CONVENTIONS:
            bad.append("fidelity")
        if bad:
            raise ConfigError(f"invalid configuration values: {', '.join(bad)}", bad)

    # -- derived quantities -------------------------------------------------------

    def signal_state(self) -> SignalState:
        """Photon-level signal state (configured detected values divided by eta_ref)."""
        spec = dict(self.state_spec)
        kind = str(spec.get("kind", "")).replace("-", "_")
        if "beta0_sq" in spec:
            spec["amplitude"] = math.sqrt(float(spec.pop("beta0_sq")))
        detected = state_from_dict({**spec, "kind": kind})
        if kind == "thermal":
            return type(detected)(detected.m_th / self.eta_ref)
        if kind in ("coherent", "phase_averaged"):
            scale = 1.0 / math.sqrt(self.eta_ref)
            if kind == "coherent":
                return type(detected)(detected.amplitude * scale, detected.phase)
            return type(detected)(detected.amplitude * scale)
        return detected

    def probe_for(self, beta_sq: float) -> ProbeSetting:
        return ProbeSetting(math.sqrt(beta_sq / self.eta_ref), self.probe_phase, self.xi)

    def detector_for(self, eta: float) -> DetectorModel:
        noise = 0.1 * self.gamma if self.noise_sigma is None else self.noise_sigma
        return DetectorModel(eta, self.gamma, noise, self.dark_mean)

    def to_dict(self) -> dict:
        return {
            "state": self.state_spec,
            "probe": {"beta_sq": self.beta_sq, "phase": self.probe_phase, "xi": self.xi},
            "detector": {"etas": self.etas, "eta_ref": self.eta_ref, "gamma": self.gamma,
                         "noise_sigma": self.noise_sigma, "dark_mean": self.dark_mean},
            "calibration": {"beta_sq": self.calibration_beta_sq},
            "shots": self.shots,
            "seed": self.seed,
            "fidelity": self.fidelity,
            "thresholds": self.thresholds,
        }


# -- simulate ----------------------------------------------------------------------------


def _plan(cfg: RunConfig) -> List[dict]:
    plan = []
    settings = [("sweep", i, b) for i, b in enumerate(cfg.beta_sq)]
    if cfg.calibration_beta_sq is not None:
        settings.append(("calibration", len(cfg.beta_sq), float(cfg.calibration_beta_sq)))
    for role, idx, b in settings:
        for j, eta in enumerate(cfg.etas):
            plan.append({"role": role, "setting": idx, "beta_sq": b, "eta": eta,
                         "file": f"records/{role}_{idx:02d}_eta{j:02d}.csv"})
    seeds = np.random.SeedSequence(cfg.seed).generate_state(len(plan), dtype=np.uint64)
    for entry, s in zip(plan, seeds):
        entry["seed"] = int(s)
    return plan


def simulate(cfg: RunConfig, out_dir) -> dict:
    """Write one shot record per (probe setting, efficiency) plus a manifest."""
    out = Path(out_dir)
    (out / "records").mkdir(parents=True, exist_ok=True)
    state = cfg.signal_state()
    plan = _plan(cfg)

    def run(entry):
        probe = cfg.probe_for(entry["beta_sq"])
        return acquire(state, probe, cfg.detector_for(entry["eta"]), cfg.shots, entry["seed"])

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(run, plan))
    else:
        records = [run(e) for e in plan]
    # single writer, in plan order
    for entry, rec in zip(plan, records):
        rec.to_csv(out / entry["file"])
        entry["alpha_mag"] = rec.probe.alpha_mag
        entry["n_shots"] = rec.n_shots

    manifest = {
        "config": cfg.to_dict(),
        "eta_ref": cfg.eta_ref,
        "photon_state": state_to_dict(state),
        "records": plan,
    }
    with open(out / MANIFEST, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def load_manifest(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST
    with open(path) as fh:
        manifest = json.load(fh)
    manifest["_root"] = str(path.parent)
    return manifest


def _load(manifest: dict, entry: dict) -> ShotRecord:
    return ShotRecord.from_csv(Path(manifest["_root"]) / entry["file"])


# -- calibrate ---------------------------------------------------------------------------


def calibration_entries(manifest: dict) -> List[dict]:
    entries = manifest["records"]
    cal = [e for e in entries if e["role"] == "calibration"]
    if not cal:
        brightest = max(e["beta_sq"] for e in entries)
        cal = [e for e in entries if e["role"] == "sweep" and e["beta_sq"] == brightest]
    return cal


def calibrate_manifest(manifest: dict, out_dir=None) -> CalibrationResult:
    """Fit the gain on the calibration probe setting; write result and Fano table."""
    entries = calibration_entries(manifest)
    result = calibrate([_load(manifest, e) for e in entries])
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.to_json(out / CALIBRATION)
        with open(out / FANO_TABLE, "w") as fh:
            fh.write("eta,v_bar,f_v,n_shots\n")
            for p in result.points:
                fh.write(f"{p.eta_label:.17g},{p.v_bar:.17g},{p.f_v:.17g},{p.n_shots}\n")
    return result


# -- reconstruct -------------------------------------------------------------------------


@dataclass
class Reconstruction:
    section: WignerSection
    dists: List[ProbDist]
    fid_corrected: List[float]
    fid_uncorrected: List[float]
    eps: float
    gamma_hat: float

    def report(self, dist_files: Optional[List[str]] = None) -> dict:
        points = []
        for i, s in enumerate(self.section):
            row = {"beta_re": s.point.beta_re, "beta_im": s.point.beta_im,
                   "beta_sq": s.point.beta_mag ** 2, "w_est": s.w_est, "stderr": s.stderr,
                   "w_ref": s.w_ref, "fidelity_corrected": self.fid_corrected[i],
                   "fidelity_uncorrected": self.fid_uncorrected[i]}
            if dist_files:
                row["dist_file"] = dist_files[i]
            points.append(row)
        return {
            "gamma_hat": self.gamma_hat,
            "eps": self.eps,
            "mean_fidelity_corrected": float(np.mean(self.fid_corrected)),
            "mean_fidelity_uncorrected": float(np.mean(self.fid_uncorrected)),
            "min_fidelity_corrected": float(np.min(self.fid_corrected)),
            "meta": self.section.meta,
            "points": points,
        }


def reconstruct_records(records: List[ShotRecord], gamma_hat: float,
                        convention: str = "bhattacharyya") -> Reconstruction:
    section = reconstruct_section(records, gamma_hat)
    by_mag = sorted(records, key=lambda r: r.probe.alpha_mag)
    eta = by_mag[0].detector.eta
    xi = by_mag[0].probe.overlap_xi
    detected = by_mag[0].state.scaled(eta)
    dists, fc, fu = [], [], []
    for rec in by_mag:
        p = rebin(rec, gamma_hat)
        beta = math.sqrt(eta) * rec.probe.alpha_mag
        dists.append(p)
        fc.append(fidelity(p, theoretical_mixed_dist(detected, beta, xi, beta_phase=rec.probe.phase), convention))
        fu.append(fidelity(p, theoretical_mixed_dist(detected, beta, 1.0, beta_phase=rec.probe.phase), convention))
    return Reconstruction(section, dists, fc, fu, mean_error(section), gamma_hat)


def reconstruct_manifest(manifest: dict, gamma_hat: float, out_dir=None,
                         convention: str = "bhattacharyya") -> Reconstruction:
    """Section, per-beta distributions and fidelities from the eta_ref records."""
    eta_ref = manifest["eta_ref"]
    entries = [e for e in manifest["records"] if e["role"] == "sweep" and e["eta"] == eta_ref]
    if not entries:
        raise DomainError(f"manifest has no sweep records at eta_ref = {eta_ref}")
    rec = reconstruct_records([_load(manifest, e) for e in entries], gamma_hat, convention)
    if out_dir is not None:
        out = Path(out_dir)
        (out / "distributions").mkdir(parents=True, exist_ok=True)
        files = []
        for i, p in enumerate(rec.dists):
            name = f"distributions/beta_{i:02d}.csv"
            p.to_csv(out / name)
            files.append(name)
        rec.section.to_csv(out / "section.csv")
        rec.section.to_json(out / "section.json")
        with open(out / REPORT, "w") as fh:
            json.dump(rec.report(files), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return rec


# -- pipeline ------------------------------------------------------------------------------


def check_thresholds(cfg: RunConfig, cal: CalibrationResult, rec: Reconstruction) -> Dict[str, bool]:
    t = cfg.thresholds
    checks = {
        "gamma_rel_err": abs(cal.gamma_hat / cfg.gamma - 1.0) <= t["max_gamma_rel_err"],
        "min_fidelity": min(rec.fid_corrected) >= t["min_fidelity"],
        "abs_eps": abs(rec.eps) <= t["max_abs_eps"],
    }
    if cfg.xi < 1 and t.get("require_correction_gain", True):
        checks["correction_gain"] = float(np.mean(rec.fid_corrected)) >= float(np.mean(rec.fid_uncorrected))
    return checks


def run_pipeline(cfg: RunConfig, out_dir) -> dict:
    """simulate -> calibrate -> reconstruct, then a summary with threshold checks."""
    t0 = time.perf_counter()
    out = Path(out_dir)
    simulate(cfg, out)
    manifest = load_manifest(out)
    cal = calibrate_manifest(manifest, out)
    rec = reconstruct_manifest(manifest, cal.gamma_hat, out, cfg.fidelity)
    checks = check_thresholds(cfg, cal, rec)
    summary = {
        "gamma_hat": cal.gamma_hat,
        "gamma_true": cfg.gamma,
        "gamma_rel_err": cal.gamma_hat / cfg.gamma - 1.0,
        "slope_hat": cal.slope_hat,
        "stderr_slope": cal.stderr_slope,
        "eps": rec.eps,
        "fidelity_convention": cfg.fidelity,
        "fidelity_corrected": rec.fid_corrected,
        "fidelity_uncorrected": rec.fid_uncorrected,
        "beta_sq": [float(b) ** 2 for b in rec.section.beta_mag],
        "thresholds": cfg.thresholds,
        "checks": checks,
        "passed": all(checks.values()),
        "runtime_s": round(time.perf_counter() - t0, 3),
    }
    with open(out / SUMMARY, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary
