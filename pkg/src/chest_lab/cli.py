"""``chest-lab`` command line: bias, tradeoff, validate and plot."""

import argparse
import json
import logging
import sys
from pathlib import Path as FsPath

from .config import load_config, preset_names
from .errors import ChestLabError

log = logging.getLogger("chest_lab")

EXIT_OK, EXIT_ERROR, EXIT_VALIDATION = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # usage errors are ordinary errors (exit 1); 2 is reserved for validation failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _common(sp):
    sp.add_argument("--config", required=True,
                    help="TOML/JSON config file or preset name (%s)" % ", ".join(preset_names()))
    sp.add_argument("--trials", type=int, help="override n_trials")
    sp.add_argument("--seed", type=int, help="override master_seed")
    sp.add_argument("--output-dir", help="override output_dir")
    sp.add_argument("--workers", type=int, help="worker processes (CHEST_LAB_WORKERS wins if set)")


def build_parser():
    p = _Parser(prog="chest-lab", description="Physical-model MIMO channel estimation experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("bias", help="model bias versus number of virtual paths (noiseless, M = Id)")
    _common(sp)
    sp.add_argument("--plot", action="store_true", help="also render SVG charts")

    sp = sub.add_parser("tradeoff", help="joint vs sequential extraction on noisy observations")
    _common(sp)
    sp.add_argument("--plot", action="store_true", help="also render SVG charts")

    sp = sub.add_parser("validate", help="CRB / FIM / Jacobian self-check suite")
    _common(sp)
    sp.add_argument("--no-recenter", action="store_true",
                    help="keep explicit array positions uncentered (demonstrates broken orthogonality)")

    sp = sub.add_parser("plot", help="render SVG charts from experiment CSVs")
    sp.add_argument("csv", nargs="+")
    sp.add_argument("--output-dir", help="directory for the SVGs (default: next to each CSV)")
    return p


def _load(args):
    cfg = load_config(args.config)
    over = {"n_trials": args.trials, "master_seed": args.seed, "output_dir": args.output_dir,
            "workers": args.workers}
    return cfg.with_overrides(**over)


def _plot(files, out_dir=None):
    from .plotting import emit_plots

    for svg, n in emit_plots(files, out_dir):
        print(f"{svg}\t{n} series")


def cmd_bias(args):
    from .experiments import run_bias_experiment

    cfg = _load(args)
    files = run_bias_experiment(cfg)
    for f in files.values():
        print(f)
    if args.plot:
        _plot([files["raw"]])
    return EXIT_OK


def cmd_tradeoff(args):
    from .experiments import run_tradeoff_experiment, read_csv

    cfg = _load(args)
    files = run_tradeoff_experiment(cfg)
    for f in files.values():
        print(f)
    if "timing" in files:
        for row in read_csv(files["timing"]):
            print(f"S={row['S']}: T_joint/T_seq = {float(row['ratio']):.2f}")
    if args.plot:
        _plot([files["raw"]])
    return EXIT_OK


def cmd_validate(args):
    from .validation import run_crb_validation

    cfg = _load(args)
    if args.no_recenter:
        for sc in cfg.scenarios:
            sc.tx.recenter = False
            sc.rx.recenter = False
    report = run_crb_validation(cfg)
    out = FsPath(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "validation.json"
    path.write_text(json.dumps(report, indent=2) + "\n")
    for p in report["properties"]:
        print(f"{'PASS' if p['passed'] else 'FAIL'}  {p['name']}  measured={p['measured']:.3g}")
    print(path)
    return EXIT_OK if report["passed"] else EXIT_VALIDATION


def cmd_plot(args):
    _plot(args.csv, args.output_dir)
    return EXIT_OK


COMMANDS = {"bias": cmd_bias, "tradeoff": cmd_tradeoff, "validate": cmd_validate, "plot": cmd_plot}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ChestLabError, OSError, ValueError) as exc:
        print(f"chest-lab: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
