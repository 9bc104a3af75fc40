"""Command-line front end.

Every stage of the pipeline is independently invocable; `pipeline` is
exactly the stages composed in order. Diagnostics go to stderr, reports
to stdout, machine-readable results to files only.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import fixtures, pipeline
from . import io as eio
from .errors import EngineError, ValidationError


def _add_run_options(parser: argparse.ArgumentParser, *, overlay: bool = False) -> None:
    parser.add_argument("--manifest", required=True, help="run manifest JSON")
    parser.add_argument("--out", help="output directory (overrides manifest output_dir)")
    parser.add_argument("--seed", type=int, help="override the manifest seed")
    parser.add_argument(
        "--lambda",
        dest="sensitivity",
        type=float,
        help="override the attribution sensitivity scalar",
    )
    parser.add_argument(
        "--temperature", type=float, help="override the posterior temperature"
    )
    if overlay:
        parser.add_argument(
            "--overlay",
            metavar="SRC.npy",
            help="source image tensor to alpha-blend under each rendered map",
        )


def _load(args) -> eio.RunManifest:
    manifest = eio.load_manifest(args.manifest)
    return manifest.with_overrides(
        seed=args.seed,
        temperature=args.temperature,
        sensitivity=args.sensitivity,
        output_dir=args.out,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evifuse",
        description=(
            "Fuse per-model attribution maps and validation records into "
            "belief, plausibility, and uncertainty maps."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("weigh", help="derive model weights from validation evidence")
    _add_run_options(p)

    p = sub.add_parser("bpa", help="convert attribution tensors to mass planes")
    _add_run_options(p)

    p = sub.add_parser("fuse", help="combine mass planes into epistemic maps")
    _add_run_options(p)

    p = sub.add_parser("analyze", help="density curves and summary statistics")
    _add_run_options(p)
    p.add_argument("--per-model", action="store_true", help="also emit per-model densities")
    p.add_argument("--csv", action="store_true", help="also export curves as CSV")

    p = sub.add_parser("sweep", help="temperature and sensitivity calibration curves")
    _add_run_options(p)
    p.add_argument("--csv", action="store_true", help="also export sweeps as CSV")

    p = sub.add_parser("render", help="render epistemic maps to PPM images")
    _add_run_options(p, overlay=True)

    p = sub.add_parser("pipeline", help="run all stages in order")
    _add_run_options(p, overlay=True)
    p.add_argument("--dump-masses", action="store_true", help="keep per-model mass tensors")
    p.add_argument("--per-model", action="store_true", help="also emit per-model densities")
    p.add_argument("--csv", action="store_true", help="also export curves as CSV")

    p = sub.add_parser("verify", help="re-check invariants of a completed run directory")
    p.add_argument("--out", required=True, help="run output directory")

    p = sub.add_parser("fixtures", help="synthetic test data")
    fix_sub = p.add_subparsers(dest="fixtures_command", required=True)
    g = fix_sub.add_parser("gen", help="generate tensors, logs, and a manifest")
    g.add_argument("--spec", required=True, help="fixture spec JSON")
    g.add_argument("--out", required=True, help="directory to write the fixture into")

    return parser


def _cmd_pipeline(args) -> int:
    manifest = _load(args)
    summary = pipeline.run_pipeline(
        manifest,
        dump_masses=args.dump_masses,
        per_model=args.per_model,
        csv=args.csv,
        overlay_path=args.overlay,
    )
    weights = " ".join(f"{m}={w:.4f}" for m, w in summary["weights"].items())
    print(f"weights [{summary['provenance']}]: {weights}")
    print(
        "mean belief {mean_belief:.4f}  mean plausibility {mean_plausibility:.4f}  "
        "mean uncertainty {mean_uncertainty:.4f}  mean conflict {mean_conflict:.4f}".format(
            **summary
        )
    )
    print(f"outputs: {summary['output_dir']}")
    return 0


def _cmd_verify(args) -> int:
    report = pipeline.verify_output(args.out)
    for name in sorted(report["checks"]):
        print(f"{name}: max violation {report['checks'][name]:.3e}")
    print(f"all checks within {report['tolerance']:.0e}")
    return 0


def _cmd_fixtures(args) -> int:
    spec = fixtures.spec_from_dict(eio.load_json(args.spec))
    manifest_path = fixtures.write_fixture(spec, args.out)
    print(f"fixture manifest: {manifest_path}")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    args = build_parser().parse_args(argv)
    try:
        if args.command == "weigh":
            stats = pipeline.stage_weigh(_load(args))
            print(f"weights [{stats['provenance']}]: " + " ".join(
                f"{m}={w:.4f}" for m, w in stats["weights"].items()
            ))
        elif args.command == "bpa":
            masses = pipeline.stage_bpa(_load(args), dump=True)
            print(f"wrote {len(masses)} mass tensors")
        elif args.command == "fuse":
            maps = pipeline.stage_fuse(_load(args))
            print(
                f"fused {maps.conflict.steps + 1} models; "
                f"mean uncertainty {float(maps.unc.mean()):.4f}"
            )
        elif args.command == "analyze":
            stats = pipeline.stage_analyze(_load(args), per_model=args.per_model, csv=args.csv)
            print(f"mean conflict {stats['mean_conflict']:.4f}; wrote stats.json")
        elif args.command == "sweep":
            pipeline.stage_sweep(_load(args), csv=args.csv)
            print("wrote sweep_temperature.json and sweep_lambda.json")
        elif args.command == "render":
            pipeline.stage_render(_load(args), overlay_path=args.overlay)
            print("wrote render/ images")
        elif args.command == "pipeline":
            return _cmd_pipeline(args)
        elif args.command == "verify":
            return _cmd_verify(args)
        elif args.command == "fixtures":
            return _cmd_fixtures(args)
        else:  # pragma: no cover - argparse enforces choices
            raise ValidationError(f"unknown command {args.command!r}")
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
