"""Command-line front end.

    cfas lcr --config fig2.json --seed 7 --out lcr.csv
    cfas cdf-sup --length-cm 0.3 --realizations 100000 --format json
    cfas eval --form lcr --n 1 --beta0 1 --betaI 1 --lambda 1 --s 1

Exit status: 0 on success, 2 on usage or configuration errors, 1 on runtime
failures (including an unwritable output path).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import analytics
from .errors import CfasError, InvalidParameterError
from .experiments import EXPERIMENTS, ExperimentConfig, parse_db_range
from .sirproc import ScenarioParams

EVAL_FORMS = ("lcr", "afd", "cdf", "ccdf", "bound", "lcr-envelope", "lcr-equal", "afd-equal",
              "lcr-asym", "afd-asym", "sup-asym", "gamma-ratio")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse normally exits by itself; raising lets main() own the exit code
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cfas", description="Continuous fluid antenna SIR statistics.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", type=Path, help="flat JSON config (ExperimentConfig field names)")
        p.add_argument("--out", type=Path, help="output file (default: derived from command and config)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--seed", type=int)
        p.add_argument("--realizations", type=int)
        p.add_argument("--thresholds-db", metavar="LO:STEP:HI")
        p.add_argument("--model", choices=("jakes2d", "sinc3d"))
        p.add_argument("--ports", type=int)
        p.add_argument("--length-cm", type=float)

    e = sub.add_parser("eval", help="evaluate one closed form and print it")
    e.add_argument("--form", choices=EVAL_FORMS, required=True)
    e.add_argument("--n", type=int, default=1)
    e.add_argument("--beta0", type=float, default=1.0)
    e.add_argument("--betaI", type=float, default=2.0)
    e.add_argument("--lambda", dest="lam", type=float, default=0.01)
    e.add_argument("--s", type=float, default=1.0, help="linear SIR threshold")
    e.add_argument("--r", type=float, help="envelope-ratio threshold (lcr-envelope)")
    e.add_argument("--T", dest="length", type=float, default=None, help="aperture length in meters")
    e.add_argument("--b", type=float, default=None, help="kernel curvature (default: Jakes)")
    e.add_argument("--regime", default=None, help="small_s/large_s or small_t/tail")
    return parser


def load_config(args) -> ExperimentConfig:
    data = {}
    if args.config is not None:
        try:
            text = args.config.read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc.strerror}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args.config} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
    overrides = {
        "seed": args.seed,
        "n_realizations": args.realizations,
        "model": args.model,
        "dfas_ports": args.ports,
        "length_m": None if args.length_cm is None else args.length_cm / 100.0,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    if args.thresholds_db is not None:
        data.pop("thresholds_linear", None)
        data["thresholds_db"] = parse_db_range(args.thresholds_db)
    try:
        return ExperimentConfig.from_dict(data)
    except TypeError as exc:
        raise UsageError(f"bad config value: {exc}") from None


def default_output(command: str, cfg: ExperimentConfig, fmt: str) -> Path:
    digest = hashlib.sha1(json.dumps(cfg.to_dict(), sort_keys=True).encode()).hexdigest()[:10]
    return Path(f"{command}_{digest}.{fmt}")


def _check_writable(path: Path) -> None:
    parent = path.parent if str(path.parent) else Path(".")
    if path.is_dir() or not parent.is_dir() or not os.access(parent, os.W_OK):
        raise OSError(f"cannot write output to {path}")


def evaluate(args) -> float:
    length = args.length if args.length is not None else args.lam
    params = ScenarioParams(args.beta0, args.betaI, args.n, args.lam, length)
    s, b, form = args.s, args.b, args.form
    if form == "lcr":
        return analytics.lcr_closed_form(params, s, b)
    if form == "afd":
        return analytics.afd_closed_form(params, s, b)
    if form == "cdf":
        return analytics.cdf_sir(params, s)
    if form == "ccdf":
        return analytics.ccdf_sir(params, s)
    if form == "bound":
        return analytics.cdf_sup_lower_bound(params, s, b)
    if form == "lcr-envelope":
        r = args.r if args.r is not None else math.sqrt(args.betaI * s / args.beta0)
        return analytics.lcr_envelope_ratio(r, args.n, b if b is not None else math.pi**2 / args.lam**2)
    if form == "lcr-equal":
        return analytics.lcr_special_equal_beta(args.n, args.lam, s)
    if form == "afd-equal":
        return analytics.afd_special_equal_beta(args.n, args.lam, s)
    if form == "gamma-ratio":
        return analytics.gamma_ratio(args.n)
    regime = args.regime
    try:
        if form == "lcr-asym":
            return analytics.lcr_asymptotic(params, s, analytics.Regime(regime or "small_s"), b)
        if form == "afd-asym":
            return analytics.afd_asymptotic(params, s, analytics.Regime(regime or "small_s"), b)
        return analytics.cdf_sup_asymptotic(params, s, analytics.SupRegime(regime or "tail"), b).value
    except ValueError as exc:
        if isinstance(exc, CfasError):
            raise
        raise UsageError(f"unknown regime {regime!r}") from None


def _glue_ranges(argv: Sequence[str]) -> list:
    # argparse reads "-20:1:20" as an option, so attach it to its flag
    out, items = [], list(argv)
    i = 0
    while i < len(items):
        if items[i] == "--thresholds-db" and i + 1 < len(items) and items[i + 1].startswith("-"):
            out.append(f"--thresholds-db={items[i + 1]}")
            i += 2
            continue
        out.append(items[i])
        i += 1
    return out


def parse_and_dispatch(argv: Optional[Sequence[str]] = None) -> int:
    stdout, stderr = sys.stdout, sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(_glue_ranges(sys.argv[1:] if argv is None else argv))
    except UsageError as exc:
        print(parser.format_usage().rstrip(), file=stderr)
        print(exc, file=stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)

    if args.command == "eval":
        try:
            value = evaluate(args)
        except (UsageError, InvalidParameterError) as exc:
            print(f"cfas eval: error: {exc}", file=stderr)
            return 2
        print(f"{float(value):.7g}", file=stdout)
        return 0

    try:
        cfg = load_config(args)
    except (UsageError, InvalidParameterError) as exc:
        print(f"cfas {args.command}: error: {exc}", file=stderr)
        return 2

    out = args.out or default_output(args.command, cfg, args.format)
    try:
        _check_writable(out)
        table = EXPERIMENTS[args.command](cfg)
        table.write(out, args.format)
    except (CfasError, OSError, MemoryError) as exc:
        print(f"cfas {args.command}: error: {exc}", file=stderr)
        return 1
    print(str(out), file=stdout)
    return 0


def main() -> None:
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
