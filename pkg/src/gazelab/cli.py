"""Command-line interface.

Subcommands: generate, prepare, analyze-rf, train, eval, grid, report.
Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

import argparse
import sys
from pathlib import Path

from . import arch
from . import config as cfgmod
from . import dataset as dsmod
from . import grid as gridmod
from . import receptive_field as rfmod
from . import training


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of calling sys.exit(2)."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _build_parser():
    p = _Parser(prog="gazelab", description="Desk-scale gaze estimation experiments")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    g = sub.add_parser("generate",
                       help="render a synthetic raw dataset")
    g.add_argument("--config", required=True, help="config with [synth] and [generate]")

    pr = sub.add_parser("prepare",
                        help="warp raw renders into normalized patches")
    pr.add_argument("--config", required=True, help="config with [prepare]")

    rf = sub.add_parser("analyze-rf",
                        help="print the receptive-field profile of an architecture")
    rf.add_argument("--arch", default="minires", choices=["minires", "poolformer"])
    rf.add_argument("--first-stride", type=int, default=2, help="minires stem stride")
    rf.add_argument("--patch-stride", type=int, default=4, help="poolformer patch stride")
    rf.add_argument("--resolution", type=int, default=64)
    rf.add_argument("--width", type=int, default=16)
    rf.add_argument("--csv", default="", help="also write the profile as CSV here")

    tr = sub.add_parser("train", help="train one configuration")
    tr.add_argument("--config", required=True, help="config with [model]/[train]/[data]")

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True, help="prepared dataset directory")
    ev.add_argument("--out", default="", help="per-sample CSV path")

    gr = sub.add_parser("grid", help="run an experiment grid")
    gr.add_argument("--spec", "--config", dest="spec", required=True,
                    help="grid spec config file")

    rp = sub.add_parser("report",
                        help="render results.csv as a markdown table")
    rp.add_argument("--results", required=True)
    rp.add_argument("--out", default="", help="write markdown here instead of stdout")
    return p


def _cmd_generate(args):
    raw = cfgmod.read_config(args.config)
    unknown = set(raw) - {"synth", "generate"}
    if unknown:
        raise cfgmod.ConfigError(f"unknown config sections: {sorted(unknown)}")
    scfg = dsmod.synth_config_from_section(raw.get("synth", {}))
    gen = cfgmod.apply_schema("generate", raw.get("generate", {}), {
        "n_train": cfgmod.as_int, "n_val": cfgmod.as_int, "n_test": cfgmod.as_int,
        "out_dir": cfgmod.as_str,
    }, defaults={"n_train": 0, "n_val": 0, "n_test": 0})
    if "out_dir" not in gen:
        raise cfgmod.ConfigError("[generate] needs out_dir")
    sets = dsmod.generate_dataset(scfg, gen["n_train"], gen["n_val"], gen["n_test"],
                                  gen["out_dir"])
    for split, ds in sets.items():
        print(f"{split}: {len(ds)} samples -> {ds.root}")
    return 0


def _cmd_prepare(args):
    from . import geometry as geo

    raw = cfgmod.read_config(args.config)
    unknown = set(raw) - {"prepare"}
    if unknown:
        raise cfgmod.ConfigError(f"unknown config sections: {sorted(unknown)}")
    pc = cfgmod.apply_schema("prepare", raw.get("prepare", {}), {
        "raw_dir": cfgmod.as_str, "out_dir": cfgmod.as_str,
        "regions": cfgmod.as_str, "resolution": cfgmod.as_int,
        "eye_resolution": cfgmod.as_int, "eye_focal": cfgmod.as_float,
        "face_focal": cfgmod.as_float,
    }, defaults={"regions": "face", "resolution": 224, "eye_resolution": 128,
                 "eye_focal": 0.0, "face_focal": 0.0})
    for key in ("raw_dir", "out_dir"):
        if key not in pc:
            raise cfgmod.ConfigError(f"[prepare] needs {key}")
    ds = dsmod.load_dataset(pc["raw_dir"])
    face_spec = geo.face_normalization_spec(pc["resolution"], focal=pc["face_focal"] or None)
    eye_spec = None
    if pc["regions"] == "multi":
        eye_spec = geo.eye_normalization_spec(pc["eye_resolution"],
                                              focal=pc["eye_focal"] or None)
    prepared = dsmod.prepare_inputs(ds, pc["out_dir"], regions=pc["regions"],
                                    resolution=pc["resolution"], face_spec=face_spec,
                                    eye_spec=eye_spec,
                                    eye_resolution=pc["eye_resolution"])
    print(f"prepared {len(prepared)} samples -> {prepared.root}")
    return 0


def _cmd_analyze_rf(args):
    if args.arch == "minires":
        model = arch.build_minires(first_stride=args.first_stride,
                                   input_resolution=args.resolution, width=args.width)
    else:
        model = arch.build_poolformer(patch_stride=args.patch_stride,
                                      input_resolution=args.resolution, width=args.width)
    layers = arch.list_layers(model)
    profile = rfmod.rf_profile(layers)
    print(f"# {model.spec.name} (input {args.resolution}x{args.resolution})")
    print(rfmod.profile_table(profile))
    if args.csv:
        Path(args.csv).parent.mkdir(parents=True, exist_ok=True)
        Path(args.csv).write_text(rfmod.profile_csv(profile), encoding="utf-8")
        print(f"csv -> {args.csv}")
    return 0


def _cmd_train(args):
    cfg = training.train_config_from_file(args.config)
    result = training.train(cfg)
    last = result.history[-1]
    print(f"trained {cfg.model.arch} for {len(result.history)} epochs "
          f"in {result.wall_seconds:.1f}s")
    print(f"final train error {last['train_err_deg']:.3f} deg, "
          f"val error {last['val_err_deg']:.3f} deg")
    if result.checkpoint_path:
        print(f"checkpoint -> {result.checkpoint_path}")
        print(f"epoch log  -> {result.log_path}")
    return 0


def _cmd_eval(args):
    from . import checkpoint as ckpt

    model, meta = ckpt.load_checkpoint(args.checkpoint)
    ds = dsmod.load_dataset(args.data)
    res = training.evaluate(model, ds)
    print(f"mean_err_deg {res.mean_deg:.6f}")
    print(f"median_err_deg {res.median_deg:.6f}")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        lines = ["filename,pred_pitch,pred_yaw,true_pitch,true_yaw,error_deg"]
        for s, pred, err in zip(ds.samples, res.predictions, res.errors_deg):
            lines.append(f"{s.filename},{pred[0]!r},{pred[1]!r},"
                         f"{s.pitch!r},{s.yaw!r},{err!r}")
        out.write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"per-sample -> {out}")
    return 0


def _cmd_grid(args):
    spec = gridmod.grid_spec_from_file(args.spec)
    rows = gridmod.run_grid(spec)
    print(gridmod.results_markdown(rows))
    if spec.out_dir:
        print(f"results -> {Path(spec.out_dir) / 'results.csv'}")
    return 0


def _cmd_report(args):
    rows = gridmod.read_results_csv(args.results)
    md = gridmod.results_markdown(rows)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(md, encoding="utf-8")
        print(f"report -> {args.out}")
    else:
        print(md)
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "prepare": _cmd_prepare,
    "analyze-rf": _cmd_analyze_rf,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "grid": _cmd_grid,
    "report": _cmd_report,
}


def cli_dispatch(argv):
    """Run one CLI invocation; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    if not args.command:
        print(parser.format_usage(), file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # runtime failure, distinct from usage errors
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
