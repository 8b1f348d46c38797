"""
Command line front end: one subcommand per toolkit operation.

Scalars go to stdout with full precision, series as CSV, configs and
expansions as JSON. Every run records a RunManifest.
"""
import argparse
import csv
import json
import logging
import os
import sys
from datetime import datetime, timezone
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from . import __version__
from .arith_sieve import ConvolutionSpec, convolution_table, lambda_log_sieve
from .combinatorics import (bell_diagram_count, bell_number, complete_bell, partial_bell,
                            partitions)
from .config import load_config, save_config
from .euler_product import a_derivative_closed_form, a_derivative_from_log, faa_di_bruno_check
from .main_terms import assemble_main_term, euler_maclaurin_sum
from .mollifier import mollifier_coefficients, partial_sum_compare
from .optimizer import OptimizationProblem, evaluate_profile, optimize_kappa, parse_free_parameters
from .series_residue import expand_integrand
from .storage import SieveCache
from .utils import (ConfigError, KappaError, fmt_float, parse_cutoff, parse_int_list, parse_multi_index,
                    parse_spec_flag)

logger = logging.getLogger(__name__)

USAGE_EXIT = 2
ERROR_EXIT = 1


class RunManifest(BaseModel):
    """What was run, on which config, by which version."""
    subcommand: str
    flags: Dict[str, object]
    config_digest: Optional[str] = None
    version: str = __version__
    timestamp: str


class UsageError(Exception):
    pass


class KappaArgumentParser(argparse.ArgumentParser):
    """Parser that raises on bad usage instead of exiting."""

    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# output helpers

def _write_csv(header: Sequence[str], rows: Iterable[Sequence], out: Optional[str]):
    if out:
        with open(out, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        logger.info(f"Wrote {out}")
    else:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_text(text: str, out: Optional[str]):
    if out:
        with open(out, "w") as f:
            f.write(text + "\n")
        logger.info(f"Wrote {out}")
    else:
        print(text)


def _cache(args) -> Optional[SieveCache]:
    return SieveCache(args.cache) if getattr(args, "cache", None) else None


def _spec(text: str) -> ConvolutionSpec:
    fields = parse_spec_flag(text)
    return ConvolutionSpec(fields["d"], fields["exponents"], fields["squarefree"])


# ---------------------------------------------------------------------------
# subcommands

def cmd_sieve(args) -> Optional[str]:
    if args.lambda_log is not None:
        if args.out:
            raise UsageError("--out writes the binary cache of a --spec table; use --csv with --lambda-log")
        table = lambda_log_sieve(args.lambda_log, args.n_max)
    elif args.spec:
        spec = _spec(args.spec)
        table = convolution_table(spec, args.n_max, _cache(args))
        if args.out:
            path = SieveCache(args.out).put(spec, table)
            print(path)
    else:
        raise UsageError("sieve needs --spec or --lambda-log")
    if args.csv or not args.out:
        rows = ((n, fmt_float(v)) for n, v in enumerate(table.values, start=1))
        _write_csv(["n", "value"], rows, args.csv)
    return None


def cmd_bell(args) -> Optional[str]:
    if args.diagrams:
        text = str(bell_diagram_count(args.d, args.K))
    elif args.partial is not None:
        n, k = args.partial
        text = partial_bell(n, k).to_text()
    elif args.complete is not None:
        text = complete_bell(args.complete).to_text()
    elif args.number is not None:
        text = str(bell_number(args.number))
    elif args.partitions is not None:
        text = "\n".join(",".join(str(v) for v in item) for item in partitions(args.partitions))
    else:
        raise UsageError("bell needs one of --diagrams, --partial, --complete, --number, --partitions")
    _write_text(text, args.out)
    return None


def cmd_expand(args) -> Optional[str]:
    ell, ellbar = parse_int_list(args.ell), parse_int_list(args.ellbar)
    d = args.d if args.d is not None else len(ell)
    expansion = expand_integrand(d, ell, ellbar, include_A=args.include_A)
    if args.format == "json":
        payload = {"sign": expansion.sign, "ell": list(ell), "ellbar": list(ellbar), "terms": expansion.to_json()}
        text = json.dumps(payload, sort_keys=True, indent=2)
    else:
        text = f"sign {expansion.sign}\n{expansion.to_text()}"
    _write_text(text, args.out)
    return None


def cmd_prime_sum(args) -> Optional[str]:
    index = parse_multi_index(args.index)
    cutoff = parse_cutoff(args.cutoff)
    if args.check:
        closed, fd, err = faa_di_bruno_check(index, args.x, args.step, cutoff, args.kind, args.threads)
        text = f"closed {fmt_float(closed)}\nfinite_difference {fmt_float(fd)}\nabs_error {fmt_float(err)}"
    else:
        evaluate = a_derivative_closed_form if args.kind == "log" else a_derivative_from_log
        result = evaluate(index, args.x, cutoff, not args.no_tail, args.threads)
        text = f"value {fmt_float(result.value)}\ntail {fmt_float(result.tail_estimate)}\ncutoff {result.cutoff}"
    _write_text(text, args.out)
    return None


def cmd_compare_sums(args) -> Optional[str]:
    sums = partial_sum_compare(_spec(args.spec), args.x_max, _cache(args))
    rows = ((x, fmt_float(a), fmt_float(b), fmt_float(diff)) for x, a, b, diff in sums.rows())
    _write_csv(["x", "unrestricted", "restricted", "difference"], rows, args.out)
    return None


def cmd_em_check(args) -> Optional[str]:
    k_vector = parse_int_list(args.k_vector)
    rows = []
    for z in args.z:
        z = float(parse_cutoff(z))
        result = euler_maclaurin_sum(args.k, k_vector, z, np.ones_like, np.ones_like, s=args.s)
        rows.append((int(z), fmt_float(result.exact), fmt_float(result.leading), fmt_float(result.ratio)))
    _write_csv(["z", "exact", "leading", "ratio"], rows, args.out)
    return None


def cmd_kappa_eval(args) -> Optional[str]:
    config = load_config(args.config)
    value = assemble_main_term(config, threads=args.threads, diagnose_A=args.diagnose_A)
    lines = [f"c {fmt_float(value.c)}", f"kappa {fmt_float(value.kappa)}"]
    if value.precision_warning:
        lines.append("precision_warning true")
    if args.breakdown:
        lines.append("left,right,term,contribution,diagnostic")
        for row in value.breakdown:
            diagnostic = "" if row.diagnostic_scale is None else fmt_float(row.diagnostic_scale)
            lines.append(f"{row.pair[0]},{row.pair[1]},{row.label},{fmt_float(row.contribution)},{diagnostic}")
    _write_text("\n".join(lines), args.out)
    return config.digest()


def cmd_kappa_optimize(args) -> Optional[str]:
    config = load_config(args.config)
    params = parse_free_parameters(args.free, config)
    problem = OptimizationProblem(config, params, seed=args.seed, budget=args.budget, restarts=args.restarts)
    result = optimize_kappa(problem, threads=args.threads)
    print(f"kappa {fmt_float(result.best_kappa)}")
    if result.budget_exhausted:
        print("budget_exhausted true")
    if args.out:
        save_config(result.best_config, args.out)
    if args.trace:
        header = ["iteration", "restart", "kappa"] + [p.name for p in params]
        rows = ([row.iteration, row.restart, fmt_float(row.kappa)] + [fmt_float(v) for v in row.parameters]
                for row in result.trace)
        _write_csv(header, rows, args.trace)
    return config.digest()


def cmd_mollify(args) -> Optional[str]:
    config = load_config(args.config)
    for name in ("d", "K"):
        given = getattr(args, name)
        if given is not None and given != getattr(config, name):
            raise ConfigError(f"--{name} {given} does not match {name}={getattr(config, name)} in {args.config}")
    table = mollifier_coefficients(config.mollifier_spec(), args.n_max, args.length, _cache(args))
    _write_csv(["n", "b"], ((n, fmt_float(v)) for n, v in enumerate(table.values, start=1)), args.out)
    return config.digest()


def _grid(text: str) -> List[float]:
    """'a:b:n' for n evenly spaced points, otherwise a comma list."""
    if ":" in text:
        start, stop, count = text.split(":")
        return [float(v) for v in np.linspace(float(start), float(stop), int(count))]
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_kappa_profile(args) -> Optional[str]:
    config = load_config(args.config)
    points = evaluate_profile(config, args.parameter, _grid(args.grid), args.threads)
    rows = ((fmt_float(p.value), fmt_float(p.c), fmt_float(p.kappa)) for p in points)
    _write_csv([args.parameter, "c", "kappa"], rows, args.out)
    return config.digest()


# ---------------------------------------------------------------------------
# grammar

def build_parser() -> KappaArgumentParser:
    parser = KappaArgumentParser(prog="run.py", description="Mollified second moment and kappa toolkit")
    parser.add_argument("--threads", type=int, default=1, help="Worker threads (results do not depend on it)")
    parser.add_argument("--log-level", default="WARNING", type=str.upper,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level (default: WARNING)")
    sub = parser.add_subparsers(dest="subcommand", parser_class=KappaArgumentParser)

    p = sub.add_parser("sieve", help="Table of mu * Lambda_1^{*l_1} * ... as CSV")
    p.add_argument("--spec", help="Convolution spec, e.g. 'd=1,l=2' or 'd=2,l=1-1,sf'")
    p.add_argument("--lambda-log", type=int, metavar="K", help="Table of Lambda(n) log^K n instead of a --spec")
    p.add_argument("--nmax", "--n-max", dest="n_max", type=parse_cutoff, required=True)
    p.add_argument("--cache", help="Directory of the sieve cache")
    p.add_argument("--out", help="Directory receiving the binary cache file")
    p.add_argument("--csv", help="CSV file (default: stdout unless --out is given)")
    p.set_defaults(handler=cmd_sieve)

    p = sub.add_parser("bell", help="Bell polynomials, numbers and diagram counts")
    p.add_argument("--diagrams", action="store_true", help="Count diagrams for --d and --K")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--partial", type=int, nargs=2, metavar=("N", "K"))
    p.add_argument("--complete", type=int, metavar="N")
    p.add_argument("--number", type=int, metavar="N")
    p.add_argument("--partitions", type=int, metavar="K")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_bell)

    p = sub.add_parser("expand", help="Exact residue expansion of the ratio integrand")
    p.add_argument("--d", type=int)
    p.add_argument("--l", "--ell", dest="ell", required=True, help="Exponent vector, e.g. '1,1'")
    p.add_argument("--lbar", "--ellbar", dest="ellbar", required=True)
    p.add_argument("--include-A", dest="include_A", action="store_true", help="Keep A-derivative terms")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.add_argument("--json", dest="format", action="store_const", const="json", help="Same as --format json")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_expand)

    p = sub.add_parser("prime-sum", help="Diagonal derivative of log A (or A) as a prime sum")
    p.add_argument("--index", required=True, help="'1,1' or 'z-orders;w-orders', e.g. '1,2;1,1'")
    p.add_argument("--x", type=float, default=0.0, help="alpha + beta")
    p.add_argument("--cutoff", default="1e6")
    p.add_argument("--kind", choices=["log", "A"], default="log")
    p.add_argument("--no-tail", action="store_true")
    p.add_argument("--check", action="store_true", help="Compare with finite differences")
    p.add_argument("--step", type=float, default=1e-3, help="Finite-difference step")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_prime_sum)

    p = sub.add_parser("compare-sums", help="Restricted vs unrestricted partial sums as CSV")
    p.add_argument("--spec", required=True)
    p.add_argument("--xmax", "--x-max", dest="x_max", type=parse_cutoff, required=True)
    p.add_argument("--cache")
    p.add_argument("--csv", "--out", dest="out", help="CSV file (default: stdout)")
    p.set_defaults(handler=cmd_compare_sums)

    p = sub.add_parser("em-check", help="Euler-Maclaurin exact sum against its leading term (F = H = 1)")
    p.add_argument("--k", type=int, default=1, help="d_k index; 0 means delta")
    p.add_argument("--k-vector", default="", help="Lambda_r powers, e.g. '1' or '0,1'")
    p.add_argument("--z", nargs="+", required=True)
    p.add_argument("--s", type=float, default=-1.0)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_em_check)

    p = sub.add_parser("kappa-eval", help="Main term c and the kappa bound for a config")
    p.add_argument("--config", required=True)
    p.add_argument("--breakdown", action="store_true")
    p.add_argument("--diagnose-A", dest="diagnose_A", action="store_true")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_kappa_eval)

    p = sub.add_parser("kappa-optimize", help="Nelder-Mead search for a larger kappa")
    p.add_argument("--config", required=True)
    p.add_argument("--free", required=True, help="e.g. 'P1:1-4,P2:*,R'")
    p.add_argument("--budget", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=4)
    p.add_argument("--trace", help="CSV file for the evaluation trace")
    p.add_argument("--out", help="Best config as JSON")
    p.set_defaults(handler=cmd_kappa_optimize)

    p = sub.add_parser("mollify", help="Mollifier coefficients b(n) as CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--d", type=int, help="Must match the config")
    p.add_argument("--K", type=int, help="Must match the config")
    p.add_argument("--nmax", "--n-max", dest="n_max", type=parse_cutoff, required=True)
    p.add_argument("--length", type=float, help="Mollifier length N (default: nmax)")
    p.add_argument("--cache")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_mollify)

    p = sub.add_parser("kappa-profile", help="kappa along R, theta or one coefficient")
    p.add_argument("--config", required=True)
    p.add_argument("--parameter", required=True, help="'R', 'theta' or e.g. 'P2:1'")
    p.add_argument("--grid", required=True, help="'start:stop:count' or a comma list")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_kappa_profile)

    return parser


def _manifest(args, digest: Optional[str]) -> RunManifest:
    flags = {key: value for key, value in sorted(vars(args).items()) if key not in ("handler", "subcommand")}
    return RunManifest(
        subcommand=args.subcommand,
        flags=flags,
        config_digest=digest,
        timestamp=datetime.now(timezone.utc).isoformat(),
    )


def write_manifest(manifest: RunManifest, out: Optional[str]):
    """
    Put the manifest next to the primary output, or on stderr as one JSON line.

    A directory output gets kappa-<subcommand>.manifest.json inside it.
    """
    if not out:
        print(manifest.model_dump_json(), file=sys.stderr)
        return
    if os.path.isdir(out):
        path = os.path.join(out, f"kappa-{manifest.subcommand}.manifest.json")
    else:
        path = f"{out}.manifest.json"
    with open(path, "w") as f:
        f.write(manifest.model_dump_json(indent=2) + "\n")
    logger.info(f"Manifest written to {path}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse argv and run one subcommand.

    Returns:
        0 on success, 1 on toolkit errors, 2 on usage errors
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.subcommand is None:
            raise UsageError("no subcommand given")
    except (UsageError, KappaError) as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_help(sys.stderr)
        return USAGE_EXIT

    logging.getLogger().setLevel(args.log_level)
    try:
        digest = args.handler(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_help(sys.stderr)
        return USAGE_EXIT
    except KappaError as e:
        logger.error(f"{args.subcommand} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return ERROR_EXIT

    write_manifest(_manifest(args, digest), getattr(args, "out", None) or getattr(args, "csv", None))
    return 0
