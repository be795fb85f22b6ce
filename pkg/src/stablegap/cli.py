"""Command-line entry point: ``stablegap <subcommand> [options]``.

Exit codes: 0 success, 2 invalid configuration, 3 computation failure,
4 acceptance failure.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

from . import acceptance, comparison, kinetics, particles, spectrum
from .errors import ContractError, ParameterError, StableGapError
from .io import render_csv, render_json, write_run_manifest, write_text
from .rates import (
    load_rate_table,
    make_lacunary,
    make_power_law,
    make_q_zero,
    nearest_neighbor,
)

EXIT_OK, EXIT_CONFIG, EXIT_COMPUTE, EXIT_ACCEPT = 0, 2, 3, 4
DEFAULT_SEED = kinetics.DEFAULT_SEED


class ConfigError(ParameterError):
    """A command-line field failed validation; ``field`` names the flag."""

    def __init__(self, field: str, message: str):
        super().__init__(f"--{field}: {message}")
        self.field = field


# --------------------------------------------------------------------------
# parsing helpers
# --------------------------------------------------------------------------


def parse_int_range(text: str, field: str = "n") -> list[int]:
    """``a..b`` (inclusive), ``a..b:s`` (step ``s``) or ``a,b,c``."""
    text = text.strip()
    try:
        if ".." in text:
            span, _, step = text.partition(":")
            lo, hi = (int(v) for v in span.split(".."))
            vals = list(range(lo, hi + 1, int(step) if step else 1))
        else:
            vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(field, f"cannot parse {text!r} as a range") from exc
    if not vals:
        raise ConfigError(field, f"range {text!r} is empty")
    return vals


def parse_float_list(text: str, field: str = "times") -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(field, f"cannot parse {text!r} as numbers") from exc
    if not vals:
        raise ConfigError(field, "no values given")
    return vals


def _rate_from_args(args):
    kind = args.rate
    alpha = args.alpha
    if kind == "power":
        return make_power_law(alpha)
    if kind == "q0":
        return make_q_zero(alpha)
    if kind == "lacunary":
        anchors = args.anchors
        if "," in anchors:
            anchors = tuple(int(v) for v in anchors.split(","))
        else:
            anchors = int(anchors)
        return make_lacunary(alpha, anchors)
    if kind == "nn":
        return nearest_neighbor()
    if kind == "table":
        if not args.table:
            raise ConfigError("table", "a table rate needs --table PATH")
        tail = None if args.tail == "none" else args.tail
        return load_rate_table(args.table, tail=tail, alpha=alpha)
    raise ConfigError("rate", f"unknown rate {kind!r}")


def _add_rate(p: argparse.ArgumentParser, alpha_default: float = 1.0) -> None:
    p.add_argument("--rate", choices=["power", "q0", "lacunary", "table", "nn"], default="power")
    p.add_argument("--alpha", type=float, default=alpha_default)
    p.add_argument("--anchors", default="2", help="anchor exponent k (anchors l^k) or a comma list")
    p.add_argument("--table", help="two-column file z p(z)")
    p.add_argument("--tail", choices=["zero", "power", "none"], default="zero")


def _add_output(p: argparse.ArgumentParser, default_format: str = "csv") -> None:
    p.add_argument("-o", "--output", default="-", help="output file ('-' for stdout)")
    p.add_argument("--format", choices=["csv", "json"], default=default_format)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stablegap", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gap-sweep", help="walk gap on boxes of growing size")
    _add_rate(p)
    p.add_argument("--n", required=True, help="box radii, e.g. 4..64 or 4,8,16")
    p.add_argument("--method", choices=["auto", "dense", "iterative"], default="auto")
    _add_output(p)

    p = sub.add_parser("compare", help="certificate plus empirical Dirichlet-sum ratios")
    _add_rate(p)
    p.add_argument("--K", type=float, default=2.0)
    p.add_argument("--n-max", type=int, default=10_000)
    p.add_argument("--horizon", type=int, default=None)
    _add_output(p, "json")

    p = sub.add_parser("multiscale", help="scale constants and theta for given K and alpha")
    p.add_argument("--K", type=float, default=2.0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--b", type=float, default=None, help="evaluate at this b instead of searching")
    _add_output(p, "json")

    for name, helptext in (("exclusion", "exclusion gaps over (n, ell)"), ("zero-range", "zero-range gaps")):
        p = sub.add_parser(name, help=helptext)
        _add_rate(p)
        p.add_argument("--n", required=True)
        p.add_argument("--ell", default=None, help="particle numbers (default 1..2n)")
        if name == "zero-range":
            p.add_argument("--g", choices=["linear", "indicator", "table"], default="linear")
            p.add_argument("--g-values", default=None, help="comma list g(0),g(1),... for --g table")
        _add_output(p)

    p = sub.add_parser("return-prob", help="exact and Monte Carlo return probabilities")
    _add_rate(p)
    p.add_argument("--times", default="10,30,100")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--L-box", type=int, default=None)
    p.add_argument("--leak-budget", type=float, default=None)
    _add_output(p)

    p = sub.add_parser("verify-all", help="run the acceptance suite")
    p.add_argument("--alpha", type=float, default=None, help="restrict alpha-dependent cases")
    p.add_argument("--criteria", default=None, help="comma list of criterion numbers")
    p.add_argument("--inject-asymmetry", action="store_true", help="perturb one rate to test fault detection")
    _add_output(p, "json")
    return ap


# --------------------------------------------------------------------------
# subcommands; each returns (rows or payload, columns or None, notes)
# --------------------------------------------------------------------------

SPECTRUM_COLUMNS = ["n", "states", "gap", "gap_times_scale", "method", "residual"]
PARTICLE_COLUMNS = ["n", "ell", "states", "gap", "normalized_gap", "method", "residual"]
RETURN_COLUMNS = ["t", "exact_value", "mc_value", "mc_stderr", "leaked_mass"]
RATIO_COLUMNS = ["name", "K", "kappa_hat", "argmax_n"]


def _failure_row(row: dict, exc: Exception) -> dict:
    return {**row, "method": f"failed:{type(exc).__name__}"}


def cmd_gap_sweep(args, rate):
    ns = parse_int_range(args.n, "n")
    if any(n < 1 for n in ns):
        raise ConfigError("n", "box radii must be >= 1")
    sw = spectrum.gap_scaling_sweep(rate, ns, method=args.method, workers=args.workers)
    rows = []
    for r in sw.rows:
        d = r.row()
        if r.error:
            d["method"] = "failed:" + r.error.split(":")[0]
        rows.append(d)
    notes = {"fit_slope": sw.slope, "fit_intercept": sw.intercept, "scaled_min": sw.scaled_min,
             "scaled_max": sw.scaled_max}
    return rows, SPECTRUM_COLUMNS, notes, bool(sw.failures)


def cmd_multiscale(args):
    if args.b is not None:
        params = comparison.compute_constants(args.b, args.alpha, args.K)
    else:
        params = comparison.select_b(args.K, args.alpha)
    return {"params": params.to_dict(), "feasible": params.theta < 1}, None, {}, False


def cmd_compare(args, rate):
    if rate.alpha is None:
        raise ConfigError("alpha", "comparison needs a stability index")
    params = comparison.select_b(args.K, rate.alpha, horizon=args.horizon)
    cert = comparison.certificate_kappa(params, rate)
    fam = comparison.standard_family(args.n_max, args.K)
    rep = comparison.verify_comparison(rate, rate.alpha, fam, args.n_max, cert, workers=args.workers)
    rows = [{"name": r.name, "K": r.K, "kappa_hat": r.kappa_hat, "argmax_n": r.argmax_n} for r in rep.rows]
    if args.format == "json":
        payload = {"certificate": cert.to_dict(), "ratios": rows, "supremum": rep.supremum, "holds": rep.holds}
        return payload, None, {}, False
    notes = {"kappa": cert.kappa, "theta": cert.params.theta, "b": cert.params.b, "m": cert.params.m,
             "label": cert.label, "holds": rep.holds}
    return rows, RATIO_COLUMNS, notes, False


def _ell_values(args, n: int, sites_cap: int | None) -> list[int]:
    if args.ell is None:
        return list(range(1, 2 * n + 1))
    ells = parse_int_range(args.ell, "ell")
    if any(e < 0 for e in ells):
        raise ConfigError("ell", "particle numbers must be >= 0")
    return [e for e in ells if sites_cap is None or e <= sites_cap(n)]


def cmd_exclusion(args, rate):
    ns = parse_int_range(args.n, "n")
    rows, failed = [], False
    for n in ns:
        for ell in _ell_values(args, n, lambda m: 2 * m + 1):
            base = {"n": n, "ell": ell, "states": math.comb(2 * n + 1, ell)}
            try:
                rows.append(particles.exclusion_gap(rate, n, ell).row())
            except StableGapError as exc:
                failed = True
                rows.append(_failure_row(base, exc))
    return rows, PARTICLE_COLUMNS, {}, failed


def _interaction(args):
    if args.g == "linear":
        return particles.linear_interaction()
    if args.g == "indicator":
        return particles.indicator_interaction()
    if not args.g_values:
        raise ConfigError("g-values", "a table interaction needs --g-values")
    return particles.table_interaction(parse_float_list(args.g_values, "g-values"))


def cmd_zero_range(args, rate):
    g = _interaction(args)
    case = particles.classify_interaction(g).case
    ns = parse_int_range(args.n, "n")
    rows, failed = [], False
    for n in ns:
        for ell in _ell_values(args, n, None):
            base = {"n": n, "ell": ell, "states": math.comb(ell + 2 * n, 2 * n)}
            try:
                rows.append(particles.zero_range_gap(rate, g, n, ell, case).row())
            except StableGapError as exc:
                failed = True
                rows.append(_failure_row(base, exc))
    return rows, PARTICLE_COLUMNS, {"interaction_case": case}, failed


def cmd_return_prob(args, rate):
    times = parse_float_list(args.times)
    if any(t < 0 for t in times) or any(b < a for a, b in zip(times, times[1:])):
        raise ConfigError("times", "times must be nonnegative and nondecreasing")
    if args.samples < 0:
        raise ConfigError("samples", "must be >= 0")
    states = kinetics.evolve_grid(rate, times, args.L_box, leak_budget=args.leak_budget)
    if args.samples:
        mc = kinetics.mc_return_probability(rate, times, args.samples, args.seed, workers=args.workers)
        mv, ms = mc.values, mc.stderr
    else:
        mv = ms = [math.nan] * len(times)
    rows = [kinetics.ReturnRow(s.time, s.origin, m, e, s.leaked_mass).row() for s, m, e in zip(states, mv, ms)]
    return rows, RETURN_COLUMNS, {"L_box": states[0].box_radius}, False


def cmd_verify_all(args):
    crit = None
    if args.criteria:
        crit = set(parse_int_range(args.criteria, "criteria"))
    results = acceptance.run_acceptance(args.alpha, crit, args.inject_asymmetry)
    for r in results:
        print(r.line(), file=sys.stderr if args.output == "-" and args.format == "json" else sys.stdout)
    rows = [{"criterion": r.criterion, "case": r.case, "passed": r.passed, "detail": r.detail} for r in results]
    failed = [f"C{r.criterion} {r.case}" for r in results if not r.passed]
    if args.format == "json":
        return {"results": rows, "failed": failed}, None, {}, bool(failed)
    return rows, ["criterion", "case", "passed", "detail"], {}, bool(failed)


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------


def _config(args) -> dict:
    skip = {"output", "workers"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = _config(args)
    t0 = time.perf_counter()
    status = "ok"
    try:
        rate = None
        if hasattr(args, "rate"):
            rate = _rate_from_args(args)
        if getattr(args, "workers", 1) < 1:
            raise ConfigError("workers", "must be >= 1")
        handler = {
            "gap-sweep": lambda: cmd_gap_sweep(args, rate),
            "multiscale": lambda: cmd_multiscale(args),
            "compare": lambda: cmd_compare(args, rate),
            "exclusion": lambda: cmd_exclusion(args, rate),
            "zero-range": lambda: cmd_zero_range(args, rate),
            "return-prob": lambda: cmd_return_prob(args, rate),
            "verify-all": lambda: cmd_verify_all(args),
        }[args.command]
        data, columns, notes, partial = handler()
    except (ParameterError, ContractError) as exc:
        print(f"stablegap: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StableGapError as exc:
        print(f"stablegap: computation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        _maybe_manifest(args, config, t0, "computation-error")
        return EXIT_COMPUTE

    seed = getattr(args, "seed", None)
    if args.format == "csv" and columns is not None:
        text = render_csv(data, columns, config, seed, notes)
    else:
        payload = data if columns is None else {"rows": data, "notes": notes}
        text = render_json(payload, config, seed)
    write_text(args.output, text)
    if args.command == "verify-all":
        status = "acceptance-failed" if partial else "ok"
        code = EXIT_ACCEPT if partial else EXIT_OK
    else:
        status = "partial" if partial else "ok"
        code = EXIT_COMPUTE if partial else EXIT_OK
    _maybe_manifest(args, config, t0, status)
    return code


def _maybe_manifest(args, config, t0, status: str) -> None:
    out = getattr(args, "output", "-")
    if out in (None, "-"):
        return
    write_run_manifest(Path(str(out) + ".manifest.json"), config, getattr(args, "seed", None),
                       {"total": round(time.perf_counter() - t0, 3)}, status)


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
