"""``thermocoh`` command line: run an experiment and write CSV."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys

from . import __version__
from .config import ConfigError, config_hash, load_file, resolve
from .dynamics import NumericalError
from .experiments import RUNNERS

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _floats(text):
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    return vals if len(vals) > 1 else vals[0]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thermocoh", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="experiment", required=True)
    for name in RUNNERS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="TOML file with experiment settings")
        s.add_argument("--out", help="CSV output path (default: stdout)")
        s.add_argument("--seed", type=int)
        s.add_argument("--workers", type=int)
        s.add_argument("--nbar", type=_floats, help="thermal photon number(s), comma separated")
        s.add_argument("--f0", type=_floats, help="dipolar coupling(s) in units of gamma0")
        s.add_argument("--n-atoms", type=int, help="largest N (scaling) or chain length")
        s.add_argument("--collisions", type=int, help="expected collisions per history")
        s.add_argument("--gtau", type=float, help="collision strength g*tau")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def overrides_from_args(args) -> dict:
    o: dict = {}
    if args.seed is not None:
        o["seed"] = args.seed
    if args.workers is not None:
        o["workers"] = args.workers
    if args.out is not None:
        o["out"] = args.out
    model = {}
    if args.nbar is not None:
        model["nbar"] = args.nbar
    if args.f0 is not None:
        model["f0"] = args.f0
    if model:
        o["model"] = model
    if args.n_atoms is not None:
        key = "scaling" if args.experiment == "scaling" else "geometry"
        o[key] = {"n_max" if key == "scaling" else "n_atoms": args.n_atoms}
    col = {}
    if args.collisions is not None:
        col["collisions"] = args.collisions
    if args.gtau is not None:
        col["gtau"] = args.gtau
    if col:
        o["collision"] = col
    return o


def _fmt(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return f"{v:.15g}"
    if hasattr(v, "item"):
        return _fmt(v.item())
    return str(v)


def render_csv(cfg, result) -> str:
    buf = io.StringIO()
    buf.write(f"# thermocoh {__version__}\n")
    buf.write(f"# experiment: {cfg['experiment']}\n")
    buf.write(f"# config_sha256: {config_hash(cfg)}\n")
    buf.write(f"# seed: {cfg['seed']}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(result.columns)
    for row in result.rows:
        w.writerow([_fmt(v) for v in row])
    for line in result.summary:
        buf.write(f"# {line}\n")
    return buf.getvalue()


def run(cfg) -> str:
    return render_csv(cfg, RUNNERS[cfg["experiment"]](cfg))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        file_cfg = load_file(args.config) if args.config else {}
        cfg = resolve(args.experiment, file_cfg, overrides_from_args(args))
        text = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    out = cfg.get("out")
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
