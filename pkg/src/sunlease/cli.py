"""Command-line entry point.

Exit codes: 0 success, 2 usage or invalid argument, 3 data format,
4 numerical, 5 configuration.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import forecast as fc
from .economics import (
    Site,
    Tariff,
    builtin_catalog,
    breakeven_alpha,
    grid_csv,
    lookup,
    payback_grid,
    quote,
    revenue_surface,
)
from .errors import DomainError, SunleaseError
from .simulator import load_config, run
from .solar import GeoLocation, PlantConfig, annual_energy, parse_pvgis_hourly, psh, write_trace

EXIT_USAGE = 2

DEFAULT_ALPHAS = tuple(round(0.1 * k, 1) for k in range(11))
DEFAULT_P_AVG = (25.0, 50.0, 75.0, 100.0, 150.0, 200.0)
DEFAULT_PRICES = (0.005, 0.01, 0.02, 0.04, 0.08)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _kinds(text: str) -> list[str]:
    kinds = [k.strip() for k in text.split(",") if k.strip()]
    bad = [k for k in kinds if k not in fc.KINDS]
    if bad or not kinds:
        raise argparse.ArgumentTypeError(f"unknown kind(s) {bad}; choose from {','.join(fc.KINDS)}")
    return kinds


def _plant_args(p: argparse.ArgumentParser):
    g = p.add_argument_group("plant")
    g.add_argument("--lat", type=float, default=41.53)
    g.add_argument("--lon", type=float, default=2.23)
    g.add_argument("--tilt", type=float, default=0.0)
    g.add_argument("--azimuth", type=float, default=180.0)
    g.add_argument("--p-mpp", type=float, default=1.0, help="kW")
    g.add_argument("--system-loss", type=float, default=0.2261)


def _plant(args) -> PlantConfig:
    return PlantConfig(
        GeoLocation(args.lat, args.lon), tilt=args.tilt, azimuth=args.azimuth,
        p_mpp=args.p_mpp, system_loss=args.system_loss,
    )


def _source_args(p: argparse.ArgumentParser):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", type=Path, help="training-set CSV")
    src.add_argument("--synthetic", type=int, metavar="SEED", help="generate a synthetic set")
    p.add_argument("--n", type=int, default=2000, help="synthetic set size")
    _plant_args(p)


def _hyper_args(p: argparse.ArgumentParser):
    g = p.add_argument_group("hyperparameters")
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--C", dest="C", type=float)
    g.add_argument("--epsilon", type=float)
    g.add_argument("--gamma", type=float)
    g.add_argument("--tol", type=float)
    g.add_argument("--max-iter", type=int)


def _hyper(args) -> dict:
    pairs = {"lambda": args.lam, "C": args.C, "epsilon": args.epsilon, "gamma": args.gamma,
             "tol": args.tol, "max_iter": args.max_iter}
    return {k: v for k, v in pairs.items() if v is not None}


def _dataset(args) -> fc.TrainingSet:
    plant = _plant(args)
    if args.data is not None:
        return fc.TrainingSet.from_csv(args.data.read_text(), plant)
    return fc.synth_dataset(args.synthetic, args.n, plant)


# --- subcommands --------------------------------------------------------------


def cmd_viability(args, out) -> int:
    if args.grid:
        alphas = args.alphas or list(DEFAULT_ALPHAS)
        if args.grid == "revenue":
            site = None
            if args.psh is not None and args.eta_sys is not None:
                site = Site(args.psh, args.eta_sys, args.p_mpp)
            rows = revenue_surface(args.p_avg or list(DEFAULT_P_AVG), args.prices or list(DEFAULT_PRICES),
                                   alphas, args.feed_in, site)
        else:
            if args.psh is None or args.eta_sys is None:
                raise DomainError("--grid payback needs --psh and --eta-sys")
            catalog = builtin_catalog() if args.instance is None else (lookup(args.instance),)
            rows = payback_grid(catalog, alphas, args.p_avg or [], Site(args.psh, args.eta_sys, args.p_mpp),
                                Tariff(r_e=args.feed_in))
        out.write(grid_csv(rows))
        return 0

    if args.instance is not None:
        inst = lookup(args.instance)
        eta_c, label = inst.eta_c, inst.name
        price = inst.v_i if args.price is None else args.price
    else:
        if args.eta_c is None or args.price is None:
            raise DomainError("give --instance NAME, or both --eta-c and --price")
        eta_c, label, price = args.eta_c, "-", args.price
    q = quote(eta_c, price, args.alpha, args.feed_in)
    lines = [
        ("instance", label),
        ("eta_c [inst/kW]", f"{eta_c:g}"),
        ("v_i [EUR/h]", f"{price:g}"),
        ("alpha", f"{args.alpha:g}"),
        ("r_e [EUR/kWh]", f"{args.feed_in:g}"),
        ("R_C [EUR/kWh]", f"{q.r_c:.6g}"),
        ("R_N [EUR/kWh]", f"{q.r_n:.6g}"),
        ("breakeven alpha", f"{breakeven_alpha(eta_c, price, args.feed_in):.6g}"),
    ]
    if args.psh is not None and args.eta_sys is not None:
        energy = annual_energy(args.psh, args.p_mpp, args.eta_sys)
        lines += [
            ("psh [h/yr]", f"{args.psh:g}"),
            ("eta_sys", f"{args.eta_sys:g}"),
            ("p_mpp [kW]", f"{args.p_mpp:g}"),
            ("E_T [kWh/yr]", f"{energy:.2f}"),
            ("A [EUR/yr]", f"{q.r_n * energy:.2f}"),
        ]
    width = max(len(k) for k, _ in lines)
    for k, v in lines:
        out.write(f"{k:<{width}}  {v}\n")
    return 0


def cmd_psh(args, out) -> int:
    samples = parse_pvgis_hourly(args.input.read_bytes())
    if args.trace_out is not None:
        with open(args.trace_out, "w", newline="") as fh:
            write_trace(samples, fh)
    out.write(f"{'period':<7} {'psh':>10} {'mean':>10} {'std':>8}\n")
    for s in psh(samples, args.period):
        out.write(f"{s.period:<7} {s.psh:10.1f} {s.mean:10.1f} {s.std:8.2f}\n")
    return 0


def cmd_forecast_train(args, out) -> int:
    data = _dataset(args)
    model = fc.fit(data, args.kind, _hyper(args) or None)
    text = fc.dumps(model)
    if args.out is None:
        out.write(text)
    else:
        args.out.write_text(text)
        out.write(f"wrote {args.kind} model to {args.out}\n")
    for w in model.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def cmd_forecast_eval(args, out) -> int:
    data = _dataset(args)
    hyper = _hyper(args)
    rows = fc.evaluate(data, args.split, args.kind, {k: hyper for k in args.kind} if hyper else None)
    out.write(fc.metrics_table(rows) + "\n")
    return 0


def cmd_simulate(args, out) -> int:
    report = run(load_config(args.config))
    report.write(args.out)
    alpha = "n/a" if report.measured_alpha is None else f"{report.measured_alpha:.4f}"
    out.write(
        f"slots            {report.slots}\n"
        f"produced [kWh]   {report.total_produced_kwh:.2f}\n"
        f"net [EUR]        {report.net_eur:.2f}\n"
        f"baseline [EUR]   {report.baseline_eur:.2f}\n"
        f"advantage [EUR]  {report.advantage_eur:.2f}\n"
        f"analytic [EUR]   {report.analytic_payback_eur:.2f}\n"
        f"measured alpha   {alpha}\n"
    )
    return 0


def cmd_catalog(args, out) -> int:
    if args.csv:
        out.write("name,vcpu,ram_gb,eta_c,v_i\n")
        for i in builtin_catalog():
            out.write(f"{i.name},{i.vcpu},{i.ram_gb:g},{i.eta_c:g},{i.v_i:g}\n")
        return 0
    out.write(f"{'name':<11} {'vcpu':>4} {'ram_gb':>6} {'eta_c':>6} {'p_avg_w':>8} {'v_i':>8}\n")
    for i in builtin_catalog():
        out.write(f"{i.name:<11} {i.vcpu:4d} {i.ram_gb:6g} {i.eta_c:6.1f} {i.p_avg:8.1f} {i.v_i:8.4f}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sunlease", description="Solar-powered compute leasing toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("viability", help="revenue, payback and breakeven for one configuration")
    who = p.add_mutually_exclusive_group()
    who.add_argument("--eta-c", type=float, help="instances per kW")
    who.add_argument("--instance", help="catalog instance name")
    p.add_argument("--price", type=float, help="EUR per instance-hour")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--feed-in", "--fit-tariff", dest="feed_in", type=float, default=0.05, help="EUR/kWh")
    p.add_argument("--psh", type=float)
    p.add_argument("--eta-sys", type=float)
    p.add_argument("--p-mpp", type=float, default=1.0, help="kW")
    p.add_argument("--grid", choices=("revenue", "payback"), help="emit a CSV grid instead")
    p.add_argument("--alphas", type=_floats)
    p.add_argument("--p-avg", type=_floats, help="average draw per instance, W")
    p.add_argument("--prices", type=_floats)
    p.set_defaults(func=cmd_viability)

    p = sub.add_parser("psh", help="peak sun hours from a PVGIS hourly export")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--period", choices=("year", "month", "day"), default="year")
    p.add_argument("--trace-out", type=Path, help="also write the POA series as a trace CSV")
    p.set_defaults(func=cmd_psh)

    p = sub.add_parser("forecast-train", help="fit one forecaster and write a model file")
    _source_args(p)
    p.add_argument("--kind", choices=fc.KINDS, default="svr")
    p.add_argument("--out", type=Path)
    _hyper_args(p)
    p.set_defaults(func=cmd_forecast_train)

    p = sub.add_parser("forecast-eval", help="chronological train/test comparison of forecasters")
    _source_args(p)
    p.add_argument("--kind", type=_kinds, default=list(fc.KINDS), help="comma-separated")
    p.add_argument("--split", type=float, default=0.8)
    _hyper_args(p)
    p.set_defaults(func=cmd_forecast_eval)

    p = sub.add_parser("simulate", help="run a scenario file")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, default=Path("."))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("catalog", help="list the built-in instance catalog")
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_catalog)
    return parser


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args, out)
    except SunleaseError as exc:
        print(f"sunlease {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ZeroDivisionError, OSError) as exc:
        print(f"sunlease {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, ZeroDivisionError) else 3


if __name__ == "__main__":
    sys.exit(main())
