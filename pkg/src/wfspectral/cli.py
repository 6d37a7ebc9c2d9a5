"""Command-line interface.

Every output embeds a manifest (command, parameters, version, input digests)
and carries no timestamps, so equal manifests give byte-identical files.
Parameters may also come from a ``key = value`` file passed with
``--config``; flags on the command line win.

Exit status: 0 success, 2 usage error, 3 numerical or verification failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from collections.abc import Sequence
from fractions import Fraction
from pathlib import Path

from gmpy2 import mpq

from wfspectral import __version__
from wfspectral.analytics import (
    TruncationArtifact,
    absorption_time_moments,
    heterozygosity,
    hitting_face_distribution,
)
from wfspectral.moments import moment_trajectory
from wfspectral.operator import eigenbasis, eigenpolynomial
from wfspectral.polynomial import ONE, ZERO, Q, multi_indices_upto
from wfspectral.simplex import Face, FaceMeasure
from wfspectral.simulate import SimConfig, aggregate, run_replicates
from wfspectral.solution import GlobalSolution, SolveConfig, VerificationError, solve

USAGE, FAILURE = 2, 3

# parameters that never change results and so stay out of the manifest
_UNRECORDED = {"command", "config", "out", "threads", "replicates_out", "func"}
_FILE_INPUTS = ("solution", "report")


class UsageError(ValueError):
    pass


def fmt(x) -> str:
    return repr(float(x))


def parse_rationals(text: str) -> list[mpq]:
    try:
        return [Q(v.strip()) for v in text.split(",") if v.strip()]
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        raise UsageError(f"cannot parse rationals from {text!r}") from exc


def parse_times(text: str) -> list[float]:
    """``a,b,c`` or ``start:stop:step`` (inclusive, computed exactly)."""
    try:
        if ":" in text:
            start, stop, step = (Fraction(v) for v in text.split(":"))
            if step <= 0:
                raise UsageError("time step must be positive")
            out, t = [], start
            while t <= stop:
                out.append(float(t))
                t += step
        else:
            out = [float(Fraction(v.strip())) for v in text.split(",") if v.strip()]
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"cannot parse times from {text!r}") from exc
    if any(t < 0 for t in out):
        raise UsageError("times must be non-negative")
    return out


def parse_index(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.replace("(", "").replace(")", "").split(",") if v.strip())
    except ValueError as exc:
        raise UsageError(f"cannot parse multi-index {text!r}") from exc


def digest(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def manifest(args: argparse.Namespace) -> dict:
    params = {}
    for key, value in sorted(vars(args).items()):
        if key in _UNRECORDED or key in _FILE_INPUTS or value is None:
            continue
        params[key] = value if isinstance(value, (int, str, bool, float)) else str(value)
    inputs = {key: digest(getattr(args, key)) for key in _FILE_INPUTS if getattr(args, key, None)}
    return {"command": args.command, "params": params, "inputs": inputs, "version": __version__}


def manifest_line(m: dict) -> str:
    return "# manifest " + json.dumps(m, sort_keys=True, separators=(",", ":")) + "\n"


def read_manifest(text: str) -> dict:
    for line in text.splitlines():
        if line.startswith("# manifest "):
            return json.loads(line[len("# manifest "):])
    raise UsageError("input carries no manifest")


def csv_text(header: Sequence[str], rows: Sequence[Sequence], m: dict) -> str:
    buf = io.StringIO()
    buf.write(manifest_line(m))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def emit(args: argparse.Namespace, text: str) -> None:
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def load_solution(path: str) -> GlobalSolution:
    try:
        return GlobalSolution.loads(Path(path).read_text())
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read solution file {path}: {exc}") from exc


def solution_from_args(args: argparse.Namespace) -> GlobalSolution:
    if getattr(args, "solution", None):
        return load_solution(args.solution)
    if args.p is None or args.degree is None:
        raise UsageError("give --solution or both --p and --degree")
    return solve(make_solve_config(args))


def make_solve_config(args: argparse.Namespace) -> SolveConfig:
    p = parse_rationals(args.p)
    measure = None
    if getattr(args, "measure", None):
        consts = {}
        for item in args.measure:
            face, _, value = item.partition("=")
            try:
                consts[Face.parse(face)] = Q(value)
            except (ValueError, json.JSONDecodeError) as exc:
                raise UsageError(f"bad --measure entry {item!r}") from exc
        measure = FaceMeasure(consts)
    if args.degree < 0:
        raise UsageError("--degree must be non-negative")
    return SolveConfig.create(p, args.degree, getattr(args, "alleles", None), measure)


# subcommands

def cmd_eigen(args) -> int:
    if args.k is None or args.m is None:
        raise UsageError("--k and --m are required")
    if args.k < 1 or args.m < 0:
        raise UsageError("need k >= 1 and m >= 0")
    if args.alpha:
        alpha = parse_index(args.alpha)
        if len(alpha) != args.k or sum(alpha) != args.m:
            raise UsageError(f"alpha must have {args.k} entries summing to m = {args.m}")
        polys = [eigenpolynomial(args.k, args.m, alpha)]
    else:
        polys = eigenbasis(args.k, args.m)
    emit(args, "".join(f"{e}\n" for e in polys))
    return 0


def cmd_solve(args) -> int:
    if args.p is None or args.degree is None:
        raise UsageError("--p and --degree are required")
    config = make_solve_config(args)
    sol = solve(config)
    text = sol.dumps(manifest(args))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    summary = sys.stderr if not args.out else sys.stdout
    summary.write("mass: exact\nmartingale: exact\n")
    return 0


def _residual(value_at_zero, exact) -> str:
    return fmt(Q(value_at_zero) - Q(exact))


def cmd_evaluate(args) -> int:
    sol = solution_from_args(args)
    times = parse_times(args.times)
    rows = []
    interior = sol.strata.interior
    for face in sol.strata.faces():
        traj = sol.face_probability(face)
        res = _residual(traj.at_zero(), ONE if face == interior else ZERO)
        for t in times:
            rows.append([f"face_probability{face}", fmt(t), fmt(traj(t)), res])
    het = heterozygosity(sol)
    h0 = Q(1)
    for v in sol.p:
        h0 *= v
    for i in range(1, sol.n + 2):
        h0 *= i
    for t in times:
        rows.append(["heterozygosity", fmt(t), fmt(het(t)), _residual(het.at_zero(), h0)])
    mass = sol.total_mass()
    for t in times:
        rows.append(["total_mass", fmt(t), fmt(mass(t)), _residual(mass.at_zero(), ONE)])
    if args.face:
        face = Face.parse(args.face)
        point = [float(v) for v in parse_rationals(args.point or "")]
        for t in times:
            try:
                val = sol.evaluate_density(face, point, t)
            except (KeyError, ValueError) as exc:
                raise UsageError(str(exc)) from exc
            rows.append([f"density{face}@({','.join(map(fmt, point))})", fmt(t), fmt(val), ""])
    emit(args, csv_text(["quantity", "t", "value", "truncation_residual"], rows, manifest(args)))
    return 0


def cmd_moments(args) -> int:
    if args.p is None:
        raise UsageError("--p is required")
    p = parse_rationals(args.p)
    if len(p) < 2 or sum(p) != 1 or any(v <= 0 for v in p):
        raise UsageError("p must be an interior point of the simplex")
    n = len(p) - 1
    alphas = [parse_index(a) for a in args.alpha or []]
    if args.max_degree is not None:
        alphas += [a for a in multi_indices_upto(n, args.max_degree) if a not in alphas]
    if not alphas:
        raise UsageError("give --alpha or --max-degree")
    for a in alphas:
        if len(a) != n or any(e < 0 for e in a):
            raise UsageError(f"alpha {a} must have {n} non-negative entries")
    times = parse_times(args.times)
    rows = []
    for a in alphas:
        traj = moment_trajectory(p[1:], a)
        label = "(" + ",".join(map(str, a)) + ")"
        for t in times:
            rows.append([label, fmt(t), fmt(traj(t))])
    emit(args, csv_text(["alpha", "t", "value"], rows, manifest(args)))
    return 0


def cmd_absorb(args) -> int:
    sol = solution_from_args(args)
    ks = [args.k] if args.k is not None else list(range(sol.n))
    times = parse_times(args.times) if args.times else []
    rows = []
    for k in ks:
        if not 0 <= k < sol.n:
            raise UsageError(f"k must satisfy 0 <= k < {sol.n}")
        rep = absorption_time_moments(sol, k)
        res = fmt(rep.residual)
        for t in times:
            rows.append([f"cdf_k{k}", fmt(t), fmt(rep.cdf(t)), res])
        rows.append([f"mean_k{k}", "-", fmt(rep.mean), res])
        rows.append([f"second_moment_k{k}", "-", fmt(rep.second_moment), res])
        rows.append([f"variance_k{k}", "-", fmt(rep.variance), res])
    emit(args, csv_text(["quantity", "t", "value", "truncation_residual"], rows, manifest(args)))
    return 0


def make_sim_config(args) -> SimConfig:
    if args.popsize is None and args.counts is None:
        raise UsageError("--popsize (with --p) or --counts is required")
    het_times = tuple(parse_times(args.het_times)) if args.het_times else ()
    kw = dict(max_generations=args.generations, replicates=args.replicates,
              base_seed=args.seed, het_times=het_times)
    if args.counts:
        counts = parse_index(args.counts)
        if args.popsize is not None and sum(counts) != args.popsize:
            raise UsageError("--counts must sum to --popsize")
        config = SimConfig(counts, **kw)
    else:
        if args.p is None:
            raise UsageError("--p or --counts is required")
        config = SimConfig.from_frequencies(parse_rationals(args.p), args.popsize, **kw)
    if args.alleles is not None and args.alleles != config.allele_count:
        raise UsageError("--alleles does not match the initial state")
    return config


def cmd_simulate(args) -> int:
    config = make_sim_config(args)
    summaries = run_replicates(config, workers=args.threads)
    report = aggregate(summaries, config.het_times)
    m = manifest(args)
    m["initial_counts"] = list(config.initial_counts)
    rows = [[q, key, level, fmt(est), fmt(se), fmt(lo), fmt(hi), str(n)]
            for q, key, level, est, se, lo, hi, n in report.rows()]
    header = ["quantity", "key", "level", "estimate", "stderr", "ci_low", "ci_high", "n"]
    emit(args, csv_text(header, rows, m))
    if args.replicates_out:
        table = [s.to_row() for s in summaries]
        cols = list(table[0])
        body = [[r.get(c, "") for c in cols] for r in table]
        Path(args.replicates_out).write_text(csv_text(cols, body, m))
    return 0


def _z(est: float, expected: float, se: float) -> float:
    if se > 0 and se != float("inf"):
        return (est - expected) / se
    return float("nan")


def cmd_compare(args) -> int:
    if not args.solution or not args.report:
        raise UsageError("--solution and --report are required")
    sol = load_solution(args.solution)
    text = Path(args.report).read_text()
    meta = read_manifest(text)
    counts = meta.get("initial_counts")
    if meta.get("command") != "simulate" or not counts:
        raise UsageError("report was not produced by the simulate command")
    two_n = sum(counts)
    if len(counts) != sol.n + 1:
        raise UsageError("allele counts of solution and report differ")
    if any(abs(Fraction(c, two_n) - Fraction(str(v))) > Fraction(1, two_n) for c, v in zip(counts, sol.p)):
        raise UsageError("solution and report start from different points")
    rows = list(csv.DictReader(line for line in text.splitlines() if not line.startswith("#")))
    out = []

    def add(quantity, key, spectral, row):
        est, se = float(row["estimate"]), float(row["stderr"])
        z = _z(est, float(spectral), se)
        out.append([quantity, key, fmt(spectral), fmt(est), row["ci_low"], row["ci_high"], fmt(z)])
        return z

    zs = []
    het = heterozygosity(sol)
    absorb = {}
    for row in rows:
        q = row["quantity"]
        if q == "fixation":
            zs.append(add(q, row["key"], sol.vertices[int(row["key"])].trajectory.limit, row))
        elif q == "hitting_face":
            face = Face.parse(row["key"])
            if face.dim + 1 == int(row["level"]):
                zs.append(add(q, f"{row['key']}@{row['level']}",
                              hitting_face_distribution(sol.p, face.alleles), row))
        elif q == "heterozygosity":
            zs.append(add(q, row["level"], het(float(row["level"])), row))
        elif q == "het_log_slope":
            zs.append(add(q, "", -Fraction(sol.n * (sol.n + 1), 2), row))
        elif q == "loss_time_mean":
            k = int(row["level"]) - 1
            if 0 <= k < sol.n:
                if k not in absorb:
                    absorb[k] = absorption_time_moments(sol, k)
                zs.append(add(q, row["level"], absorb[k].mean, row))
    header = ["quantity", "key", "spectral", "mc_estimate", "ci_low", "ci_high", "z"]
    emit(args, csv_text(header, out, manifest(args)))
    worst = max((abs(z) for z in zs if z == z), default=0.0)
    if worst > args.threshold:
        sys.stderr.write(f"max |z| = {worst!r} exceeds {args.threshold!r}\n")
        return FAILURE
    return 0


COMMANDS = {
    "eigen": cmd_eigen,
    "solve": cmd_solve,
    "evaluate": cmd_evaluate,
    "moments": cmd_moments,
    "absorb": cmd_absorb,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wfspectral", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="key = value parameter file (flags win)")
        p.add_argument("--out", help="output file (default: stdout)")
        return p

    p = command("eigen", "print eigenpolynomials of a stratum")
    p.add_argument("--k", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--alpha", help="multi-index, e.g. 1,0")

    def solution_args(p):
        p.add_argument("--p", help="initial frequencies, e.g. 1/3,1/3,1/3")
        p.add_argument("--alleles", type=int)
        p.add_argument("--degree", type=int, help="truncation degree M")
        p.add_argument("--measure", action="append", help="face measure constant, e.g. [0,1]=2")

    p = command("solve", "build and verify the global solution")
    solution_args(p)

    p = command("evaluate", "face probabilities, heterozygosity and densities")
    p.add_argument("--solution")
    solution_args(p)
    p.add_argument("--times", default="0:2:1/10")
    p.add_argument("--face", help="face for density rows, e.g. [0,1]")
    p.add_argument("--point", help="chart point for density rows")

    p = command("moments", "moment trajectories from the moment hierarchy")
    p.add_argument("--p")
    p.add_argument("--alpha", action="append")
    p.add_argument("--max-degree", type=int)
    p.add_argument("--times", default="0:2:1/10")

    p = command("absorb", "absorption-time distribution and moments")
    p.add_argument("--solution")
    solution_args(p)
    p.add_argument("--k", type=int)
    p.add_argument("--times")

    p = command("simulate", "Monte Carlo of the discrete chain")
    p.add_argument("--alleles", type=int)
    p.add_argument("--popsize", type=int, help="number of genes 2N")
    p.add_argument("--p")
    p.add_argument("--counts")
    p.add_argument("--generations", type=int, default=100000)
    p.add_argument("--replicates", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--het-times")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--replicates-out", help="per-replicate CSV")

    p = command("compare", "spectral values against a simulation report")
    p.add_argument("--solution")
    p.add_argument("--report")
    p.add_argument("--threshold", type=float, default=4.0)
    return parser


def read_config(path: str) -> list[str]:
    """Turn a ``key = value`` file into flag tokens."""
    tokens = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for number, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{number}: expected key = value")
        key = "--" + key.strip().lstrip("-").replace("_", "-")
        value = value.strip()
        tokens += [key, value]
    return tokens


def expand_config(argv: list[str]) -> list[str]:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return argv
    at = next((i for i, a in enumerate(argv) if a in COMMANDS), None)
    if at is None:
        return argv
    # config tokens go first so that later command-line flags override them
    return argv[: at + 1] + read_config(known.config) + argv[at + 1:]


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(expand_config(argv))
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ValueError, KeyError, IndexError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return USAGE
    except (VerificationError, TruncationArtifact, ArithmeticError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return FAILURE


if __name__ == "__main__":
    sys.exit(main())
