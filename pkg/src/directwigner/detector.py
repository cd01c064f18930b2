"""Linear-gain, non photon-resolving detector and shot-record acquisition."""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError
from .field_states import (
    ProbeSetting,
    SignalState,
    sample_mixed_photons,
    state_from_dict,
    state_to_dict,
)

# Shots per independent random stream. Fixed so that the output for a given
# seed does not depend on how many workers run the shards.
SHARD_SIZE = 8192


@dataclass(frozen=True)
class DetectorModel:
    """Overall efficiency ``eta``, gain ``gamma`` (V/photon) and additive noise.

    ``noise_sigma`` defaults to 0.1 gamma.
    """

    eta: float
    gamma: float = 1.0
    noise_sigma: Optional[float] = None
    dark_mean: float = 0.0

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise DomainError(f"eta must lie in (0, 1], got {self.eta!r}")
        if not self.gamma > 0:
            raise DomainError(f"gamma must be > 0, got {self.gamma!r}")
        if self.noise_sigma is None:
            object.__setattr__(self, "noise_sigma", 0.1 * self.gamma)
        if not self.noise_sigma >= 0:
            raise DomainError(f"noise_sigma must be >= 0, got {self.noise_sigma!r}")
        if not self.dark_mean >= 0:
            raise DomainError(f"dark_mean must be >= 0, got {self.dark_mean!r}")


def detect(n, eta: float, rng: np.random.Generator):
    """Binomial photodetection of ``n`` photons (scalar or array)."""
    return rng.binomial(n, eta)


def amplify(m, gamma: float, noise_sigma: float, rng: np.random.Generator):
    """Voltage for ``m`` detected photons: gamma * m plus Gaussian noise."""
    m = np.asarray(m, dtype=float)
    v = gamma * m
    if noise_sigma > 0:
        v = v + rng.normal(0.0, noise_sigma, m.shape)
    return float(v) if v.ndim == 0 else v


@dataclass
class ShotRecord:
    voltages: np.ndarray
    state: Optional[SignalState] = None
    probe: Optional[ProbeSetting] = None
    detector: Optional[DetectorModel] = None
    seed: Optional[int] = None
    # true detected counts; kept only in memory, for diagnostics
    counts: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.voltages = np.asarray(self.voltages, dtype=float).ravel()
        if self.voltages.size < 1:
            raise DomainError("a shot record needs at least one shot")

    @property
    def n_shots(self) -> int:
        return self.voltages.size

    @property
    def beta_mag(self) -> Optional[float]:
        """Detected probe amplitude sqrt(eta) |alpha|, when the metadata allow it."""
        if self.probe is None or self.detector is None:
            return None
        return math.sqrt(self.detector.eta) * self.probe.alpha_mag

    def metadata(self) -> dict:
        meta = {}
        if self.state is not None:
            meta["state"] = state_to_dict(self.state)
        if self.probe is not None:
            meta.update(alpha_mag=self.probe.alpha_mag, phase=self.probe.phase, xi=self.probe.overlap_xi)
        if self.detector is not None:
            meta.update(eta=self.detector.eta, gamma_true=self.detector.gamma,
                        noise_sigma=self.detector.noise_sigma, dark_mean=self.detector.dark_mean)
        meta["N"] = self.n_shots
        if self.seed is not None:
            meta["seed"] = self.seed
        return meta

    # -- file formats -----------------------------------------------------------

    def to_csv(self, path) -> None:
        lines = []
        for key, value in self.metadata().items():
            lines.append(f"# {key}={json.dumps(value, sort_keys=True)}")
        lines.extend(f"{v:.17g}" for v in self.voltages)
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "ShotRecord":
        meta = {}
        values = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    key, sep, value = line[1:].strip().partition("=")
                    if sep:
                        meta[key.strip()] = json.loads(value)
                    continue
                if line.lower() in ("v", "voltage", "voltages"):
                    continue
                values.append(float(line.split(",")[0]))
        rec = cls.from_metadata(np.array(values), meta)
        if "N" in meta and meta["N"] != rec.n_shots:
            raise DomainError(f"{path}: header says N={meta['N']} but {rec.n_shots} voltages found")
        return rec

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({"meta": self.metadata(), "voltages": self.voltages.tolist()}, fh)

    @classmethod
    def from_json(cls, path) -> "ShotRecord":
        with open(path) as fh:
            d = json.load(fh)
        return cls.from_metadata(np.array(d["voltages"], dtype=float), d.get("meta", {}))

    @classmethod
    def from_metadata(cls, voltages, meta: dict) -> "ShotRecord":
        state = state_from_dict(meta["state"]) if "state" in meta else None
        probe = None
        if "alpha_mag" in meta:
            probe = ProbeSetting(meta["alpha_mag"], meta.get("phase", 0.0), meta.get("xi", 1.0))
        detector = None
        if "eta" in meta:
            detector = DetectorModel(meta["eta"], meta.get("gamma_true", 1.0),
                                     meta.get("noise_sigma"), meta.get("dark_mean", 0.0))
        return cls(voltages, state, probe, detector, meta.get("seed"))


def _acquire_shard(state, probe, det, n, seed_seq):
    rng = np.random.default_rng(seed_seq)
    photons = sample_mixed_photons(state, probe, rng, size=n)
    m = detect(photons, det.eta, rng)
    if det.dark_mean > 0:
        m = m + rng.poisson(det.dark_mean, n)
    return m, amplify(m, det.gamma, det.noise_sigma, rng)


def acquire(state: SignalState, probe: ProbeSetting, det: DetectorModel, N: int,
            seed: int, workers: int = 1) -> ShotRecord:
    """Simulate ``N`` laser shots through the full chain mixer -> detector -> amplifier.

    The result is bit-identical for a given ``seed`` whatever ``workers`` is.
    """
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N!r}")
    n_shards = -(-N // SHARD_SIZE)
    sizes = [SHARD_SIZE] * (n_shards - 1) + [N - SHARD_SIZE * (n_shards - 1)]
    streams = np.random.SeedSequence(seed).spawn(n_shards)
    jobs = list(zip(sizes, streams))
    if workers > 1 and n_shards > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: _acquire_shard(state, probe, det, *job), jobs))
    else:
        parts = [_acquire_shard(state, probe, det, *job) for job in jobs]
    counts = np.concatenate([p[0] for p in parts])
    voltages = np.concatenate([np.atleast_1d(p[1]) for p in parts])
    return ShotRecord(voltages, state, probe, det, seed, counts=counts)
