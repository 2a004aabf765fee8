"""Command-line front end.

Every command writes CSV (or JSON) to ``--out`` together with a
``<out>.manifest.json`` sidecar recording the command, parameters, seed,
package version, output schema and SHA-256 checksums. Without ``--out``
the table goes to stdout and no manifest is written.

Exit codes: 0 success, 2 bad input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import re
import sys
import tempfile

import numpy as np

from . import __version__
from .benchmarks import rf_exponential, rf_pct_grid, sd_vcg_curve
from .distributions import DistributionSpecError, ReducedDistribution, parse_distribution
from .extreme_value import classify_domain, constants_for, NormalizedDistribution
from .finite_market import MarketConfig, mc_ratio
from .lp_design import (
    GridTooLargeError,
    JointSpec,
    LPSolveError,
    build_grid,
    build_lp,
    feasible_point_from,
    solve_lp,
    solve_lp_cutting_plane,
    write_lp_format,
)
from .numerics import NumericalError
from .reduced_design import (
    efficient_reduced_mechanism,
    frechet_cdf,
    frechet_wdstar,
    frechet_wstar,
    residual_surplus,
)

EXIT_BAD_INPUT = 2
EXIT_NUMERICAL = 3
SCHEMA_VERSION = 1

SCHEMAS = {
    "hazard": ["K", "w", "density", "hazard_derivative"],
    "compare": ["k", "rs_sd", "rs_vcg"],
    "frechet-thresholds": ["alpha", "phi_wstar", "phi_wdstar"],
    "rf": ["m1", "m2", "pct_diff"],
    "simulate": ["alpha", "m", "ratio", "stderr"],
    "classify": ["marginal", "family", "alpha"],
}


class BadInput(ValueError):
    pass


# -- parsing helpers ---------------------------------------------------------


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _count(text: str) -> int:
    """Integers written like ``1e5`` are accepted."""
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a count, got {text!r}") from exc
    if value != int(value) or value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return int(value)


_M_EXPR = re.compile(r"^(\d*)m$|^(\d+)$")


def m_expression(text: str, m: int) -> int:
    """``4m`` -> ``4 * m``, ``m`` -> ``m``, ``3`` -> 3."""
    match = _M_EXPR.match(text.strip())
    if match is None:
        raise BadInput(f"cannot read {text!r}; use an integer or a multiple of m such as 4m")
    if match.group(2) is not None:
        return int(match.group(2))
    return int(match.group(1) or 1) * m


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    return repr(x) if math.isfinite(x) else ""


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


# -- commands ------------------------------------------------------------------


def cmd_hazard(args) -> dict:
    G = parse_distribution(args.marginal)
    fam = classify_domain(G)
    w = np.linspace(args.w_min, args.w_max, args.points)
    rows = []
    for k in args.k:
        dist = NormalizedDistribution(ReducedDistribution(G, k), constants_for(G, fam, k))
        inside = (w > dist.support_lower) & (w < dist.support_upper)
        inside &= np.asarray(dist.sf(w)) > 1e-14
        wi = w[inside]
        dens = np.asarray(dist.pdf(wi))
        deriv = np.asarray(dist.hazard_rate_derivative(wi))
        rows += [(k, a, b, c) for a, b, c in zip(wi, dens, deriv)]
    return {"csv": _csv_text(SCHEMAS["hazard"], rows)}


def cmd_compare(args) -> dict:
    G = parse_distribution(args.marginal)
    return {"csv": _csv_text(SCHEMAS["compare"], sd_vcg_curve(G, args.m_bar, args.k_max))}


def cmd_frechet_thresholds(args) -> dict:
    rows = []
    for a in args.alpha:
        rows.append((a, frechet_cdf(a, frechet_wstar(a)), frechet_cdf(a, frechet_wdstar(a))))
    return {"csv": _csv_text(SCHEMAS["frechet-thresholds"], rows)}


def cmd_rf(args) -> dict:
    if args.m1 is not None or args.m2 is not None:
        if args.m1 is None or args.m2 is None:
            raise BadInput("give both --m1 and --m2")
        res = rf_exponential(args.m1, args.m2)
        header = ["m1", "m2", "a", "b", "rs_rf", "rs_sd2", "pct_diff"]
        return {"csv": _csv_text(header, [(args.m1, args.m2, *res)])}
    M1, M2, pct = rf_pct_grid(args.grid)
    rows = zip(M1.ravel(), M2.ravel(), pct.ravel())
    return {"csv": _csv_text(SCHEMAS["rf"], rows)}


def cmd_lp(args) -> dict:
    caps = args.capacities
    marg = [parse_distribution(s) for s in args.marginal]
    if len(marg) == 1:
        marg = marg * len(caps)
    if len(marg) != len(caps):
        raise BadInput("give one marginal, or one per object")
    try:
        joint = JointSpec.parse(args.joint)
    except ValueError as exc:
        raise BadInput(str(exc)) from exc
    env = build_grid(marg, args.n, joint, caps, representative=args.grid_point)
    extra = {}
    if args.mechanism == "lp":
        if args.cutting_plane:
            gm, rounds = solve_lp_cutting_plane(env)
            extra["cutting_plane_rounds"] = rounds
        else:
            lp = build_lp(env)
            gm = solve_lp(lp)
            if args.export_lp:
                buf = io.StringIO()
                write_lp_format(lp, buf)
                extra["lp_text"] = buf.getvalue()
    else:
        gm = feasible_point_from(args.mechanism, env)
    K = env.K
    header = [f"v{k + 1}" for k in range(K)] + [f"x{k + 1}" for k in range(K)] + ["p"]
    rows = [tuple(env.points[i]) + tuple(gm.x[i]) + (gm.p[i],) for i in range(env.size)]
    summary = {
        "mechanism": gm.name,
        "rs": gm.rs,
        "expected_payment": gm.expected_payment,
        "residuals": gm.residuals(),
        "n": env.n,
        "capacities": list(map(float, caps)),
        **{k: v for k, v in extra.items() if k != "lp_text"},
    }
    out = {"columns": header, "csv": _csv_text(header, rows), "json": json.dumps(summary, indent=2, sort_keys=True) + "\n"}
    if "lp_text" in extra:
        out["lp"] = extra["lp_text"]
    return out


def cmd_simulate(args) -> dict:
    rows = []
    for spec in args.marginal:
        G = parse_distribution(spec)
        shape = getattr(G, "shape", getattr(G, "rate", math.nan))
        for m in args.m:
            agents = m_expression(args.agents, m)
            caps = tuple(m_expression(c, m) for c in args.capacities.split(","))
            cfg = MarketConfig(agents, caps, G, args.correlation, args.mix, args.seed)
            res = mc_ratio(cfg, args.trials)
            rows.append((shape, m, res.ratio, res.stderr))
    return {"csv": _csv_text(SCHEMAS["simulate"], rows)}


def cmd_classify(args) -> dict:
    rows = []
    for spec in args.marginal:
        fam = classify_domain(parse_distribution(spec))
        rows.append((spec, fam.tag, math.nan if fam.alpha is None else fam.alpha))
    return {"csv": _csv_text(SCHEMAS["classify"], rows)}


def cmd_mechanism(args) -> dict:
    red = ReducedDistribution(parse_distribution(args.marginal), args.k)
    mech = efficient_reduced_mechanism(red, args.m_bar, method=args.method)
    rs = residual_surplus(red, mech)
    return {"json": json.dumps(mech.to_dict(rs), indent=2) + "\n"}


# -- plumbing ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="moneyburn", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--out", help="output path (stdout if omitted)")
        sp.set_defaults(func=func)
        return sp

    sp = add("hazard", cmd_hazard, "normalized density and hazard derivative of the largest value")
    sp.add_argument("--marginal", default="weibull:0.9")
    sp.add_argument("--k", type=_int_list, default=[1, 2, 4, 16])
    sp.add_argument("--w-min", type=float, default=0.0)
    sp.add_argument("--w-max", type=float, default=4.0)
    sp.add_argument("--points", type=int, default=81)

    sp = add("compare", cmd_compare, "SD and VCG residual surplus against K")
    sp.add_argument("--marginal", default="spareto:2")
    sp.add_argument("--m-bar", type=float, default=0.6)
    sp.add_argument("--k-max", type=int, default=20)

    sp = add("frechet-thresholds", cmd_frechet_thresholds, "Frechet hazard peak and pooling threshold")
    sp.add_argument("--alpha", type=_float_list, default=[1.5, 2.0, 3.0, 5.0, 8.0])

    sp = add("rf", cmd_rf, "random favorites versus serial dictatorship, exponential values")
    sp.add_argument("--grid", type=int, default=50)
    sp.add_argument("--m1", type=float)
    sp.add_argument("--m2", type=float)

    sp = add("lp", cmd_lp, "solve the discretized mechanism LP (CSV heatmap + JSON summary)")
    sp.add_argument("--marginal", action="append", default=None,
                    help="marginal spec; repeat once per object or give one for all")
    sp.add_argument("--n", type=int, default=10)
    sp.add_argument("--capacities", type=_float_list, default=[0.25, 0.25])
    sp.add_argument("--joint", default="product", help="product or within[:mix]")
    sp.add_argument("--mechanism", choices=["lp", "sd", "vcg", "rf"], default="lp")
    sp.add_argument("--grid-point", choices=["mean", "lower", "median"], default="mean")
    sp.add_argument("--cutting-plane", action="store_true")
    sp.add_argument("--export-lp", action="store_true", help="also write <out>.lp")

    sp = add("simulate", cmd_simulate, "Monte Carlo SD/VCG ratio in finite markets")
    sp.add_argument("--marginal", action="append", default=None)
    sp.add_argument("--agents", default="4m")
    sp.add_argument("--capacities", default="m,m")
    sp.add_argument("--m", type=_int_list, default=[1])
    sp.add_argument("--trials", type=_count, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--correlation", choices=["iid", "within", "between"], default="iid")
    sp.add_argument("--mix", type=float, default=0.5)

    sp = add("classify", cmd_classify, "extreme-value domain of attraction")
    sp.add_argument("--marginal", action="append", default=None)

    sp = add("mechanism", cmd_mechanism, "efficient reduced mechanism as JSON")
    sp.add_argument("--marginal", default="frechet:3")
    sp.add_argument("--k", type=int, default=1)
    sp.add_argument("--m-bar", type=float, default=0.5)
    sp.add_argument("--method", choices=["auto", "hull"], default="auto")
    return p


_LIST_DEFAULTS = {"lp": ["exp:1"], "simulate": ["weibull:0.8"], "classify": ["weibull:0.9"]}


def _atomic_write(path: str, text: str) -> str:
    data = text.encode()
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return hashlib.sha256(data).hexdigest()


def _emit(args, outputs: dict) -> None:
    main_key = "csv" if "csv" in outputs else "json"
    if args.out is None:
        sys.stdout.write(outputs[main_key])
        return
    paths = {main_key: args.out}
    for key, ext in (("json", ".json"), ("lp", ".lp")):
        if key in outputs and key != main_key:
            paths[key] = args.out + ext
    checksums = {os.path.basename(paths[k]): _atomic_write(paths[k], outputs[k]) for k in paths}
    params = {k: v for k, v in vars(args).items() if k not in ("func", "out")}
    manifest = {
        "command": args.command,
        "params": params,
        "seed": params.get("seed"),
        "version": __version__,
        "schema": {"version": SCHEMA_VERSION, "columns": outputs.get("columns", SCHEMAS.get(args.command))},
        "outputs": checksums,
    }
    _atomic_write(args.out + ".manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "marginal", "") is None:
        args.marginal = _LIST_DEFAULTS[args.command]
    try:
        outputs = args.func(args)
        _emit(args, outputs)
    except (NumericalError, LPSolveError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (BadInput, DistributionSpecError, GridTooLargeError, ValueError) as exc:
        print(f"bad input: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    return 0


if __name__ == "__main__":
    sys.exit(main())
