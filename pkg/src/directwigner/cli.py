"""Command line entry point: ``directwigner {simulate,calibrate,reconstruct,pipeline}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiment as ex
from .calibration import CalibrationResult
from .errors import CalibrationError, ConfigError, DomainError, QuadratureError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_ACCEPTANCE = 4

log = logging.getLogger("directwigner")


def _config(args) -> ex.RunConfig:
    if args.preset and args.config:
        raise ConfigError("give either --preset or --config, not both", ["preset", "config"])
    if args.preset:
        data = ex.preset(args.preset)
    elif args.config:
        data = ex.load_config_file(args.config)
    else:
        raise ConfigError("a run needs --preset or --config", ["config"])
    if args.seed is not None:
        data["seed"] = args.seed
    if args.workers is not None:
        data["workers"] = args.workers
    if args.fidelity is not None:
        data["fidelity"] = args.fidelity
    cfg = ex.RunConfig.from_dict(data)
    if args.out is None and cfg.out is None:
        raise ConfigError("no output directory (--out or 'out' in the config)", ["out"])
    return cfg


def _out(args, cfg=None) -> Path:
    return Path(args.out or (cfg.out if cfg else None) or ".")


def _gamma(args, root: Path) -> float:
    if args.gamma is not None:
        try:
            return float(args.gamma)
        except ValueError:
            return CalibrationResult.from_json(args.gamma).gamma_hat
    return CalibrationResult.from_json(root / ex.CALIBRATION).gamma_hat


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _out(args, cfg)
    manifest = ex.simulate(cfg, out)
    log.info("wrote %d records to %s", len(manifest["records"]), out)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    manifest = ex.load_manifest(args.manifest or _out(args))
    out = _out(args) if args.out else Path(manifest["_root"])
    result = ex.calibrate_manifest(manifest, out)
    print(f"gamma_hat = {result.gamma_hat:.6g} +- {result.stderr_gamma:.2g}  "
          f"slope = {result.slope_hat:.4g} +- {result.stderr_slope:.2g}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    manifest = ex.load_manifest(args.manifest or _out(args))
    root = Path(manifest["_root"])
    out = _out(args) if args.out else root
    convention = args.fidelity or manifest["config"].get("fidelity", "bhattacharyya")
    rec = ex.reconstruct_manifest(manifest, _gamma(args, root), out, convention)
    print(f"eps = {rec.eps:.3g}  mean fidelity corrected {sum(rec.fid_corrected) / len(rec.fid_corrected):.6f}"
          f"  uncorrected {sum(rec.fid_uncorrected) / len(rec.fid_uncorrected):.6f}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    summary = ex.run_pipeline(cfg, _out(args, cfg))
    print(json.dumps({k: summary[k] for k in ("gamma_hat", "eps", "checks", "passed", "runtime_s")}))
    return EXIT_OK if summary["passed"] else EXIT_ACCEPTANCE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="directwigner",
        description="Simulate direct-detection Wigner-function reconstruction of pulsed classical light.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, run_config=True):
        p.add_argument("--out", help="output directory")
        p.add_argument("--fidelity", choices=["bhattacharyya", "paper-literal"])
        if run_config:
            p.add_argument("--config", help="YAML or JSON run configuration")
            p.add_argument("--preset", choices=sorted(ex.PRESETS))
            p.add_argument("--seed", type=int)
            p.add_argument("--workers", type=int)
        else:
            p.add_argument("--manifest", help="manifest.json or the directory holding it")

    for name, func, run_config in (("simulate", cmd_simulate, True), ("calibrate", cmd_calibrate, False),
                                   ("reconstruct", cmd_reconstruct, False), ("pipeline", cmd_pipeline, True)):
        p = sub.add_parser(name)
        common(p, run_config)
        if name == "reconstruct":
            p.add_argument("--gamma", help="gain value or path to a calibration JSON")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (CalibrationError, QuadratureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DomainError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
