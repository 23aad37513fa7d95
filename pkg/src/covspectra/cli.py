"""Command-line front end: configuration, seeding, orchestration, serialization.

Subcommands::

    law edges|density|gamma|regularity   deterministic spectral outputs
    sample                               simulate and cache decompositions
    verify rigidity|deloc|edge|bulk|joint|normal
                                         Monte-Carlo experiment reports
    conftest                             conformality hypothesis test

Exit codes: 0 success, 2 verdict failure (CI gating), 1 error.  Result
artifacts embed the config echo, seed and software version; JSON keys are
stable-sorted and CSV column orders frozen, so identical (config, seed)
runs produce bitwise-identical artifacts.  Wall time is reported on
stderr to keep artifacts deterministic.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .conformal import ConformalTestConfig, conformal_test
from .ensembles import (
    EntryLaw,
    decompose,
    load_decompositions,
    replicate_rng,
    sample_matrix,
    save_decompositions,
)
from .errors import ConfigError, CovspectraError
from .mplaw import (
    PopulationSpectrum,
    check_regularity,
    classical_locations,
    density_grid,
    find_spectrum_structure,
)
from .verify import (
    ExperimentConfig,
    Target,
    bulk_universality_experiment,
    delocalization_experiment,
    edge_universality_experiment,
    joint_edge_experiment,
    normal_limit_check,
    rigidity_experiment,
)

SCHEMA_VERSION = 1

_EXPERIMENTS = {
    "rigidity": rigidity_experiment,
    "deloc": delocalization_experiment,
    "edge": edge_universality_experiment,
    "bulk": bulk_universality_experiment,
    "joint": joint_edge_experiment,
    "normal": normal_limit_check,
}


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"missing required field '{key}' in {where}")
    return table[key]


def _load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from None
    schema = cfg.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema {schema} (expected {SCHEMA_VERSION})")
    return cfg


def _spectrum_from(args, cfg: dict) -> PopulationSpectrum:
    table = cfg.get("spectrum")
    if args.sigma is not None:
        sigma = [float(s) for s in args.sigma]
        weights = [float(w) for w in args.weights] if args.weights else [1.0 / len(sigma)] * len(sigma)
        M = args.M if args.M is not None else 1000
        if args.N is not None:
            N = args.N
        elif args.r is not None:
            N = int(round(M * args.r))
        else:
            N = M
        return PopulationSpectrum(sigma=tuple(sigma), weights=tuple(weights), M=int(M), N=int(N))
    if table is None:
        raise ConfigError("missing required field 'spectrum' (or --sigma flags)")
    return PopulationSpectrum.from_config(
        {
            "sigma": _require(table, "sigma", "[spectrum]"),
            "weights": _require(table, "weights", "[spectrum]"),
            "M": _require(table, "M", "[spectrum]"),
            "N": _require(table, "N", "[spectrum]"),
        }
    )


def _threads(args) -> int:
    env = os.environ.get("COVSPECTRA_THREADS")
    if args.threads is not None:
        return max(1, args.threads)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"COVSPECTRA_THREADS is not an integer: {env!r}") from None
    return 1


def _artifact(payload: dict, seed, config_echo: dict) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "tool": {"name": "covspectra", "version": __version__},
        "seed": seed,
        "config": config_echo,
        **payload,
    }


def _emit(args, artifact: dict, csv_rows=None, csv_header=None) -> None:
    if args.format == "csv":
        if csv_rows is None:
            raise ConfigError("this subcommand has no CSV representation")
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(csv_header)
        for row in csv_rows:
            writer.writerow(row)
        text = buf.getvalue()
    else:
        text = json.dumps(artifact, sort_keys=True, indent=2, allow_nan=False) + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Subcommand handlers


def _cmd_law(args, cfg) -> int:
    spec = _spectrum_from(args, cfg)
    structure = find_spectrum_structure(spec)
    config_echo = {"sigma": list(spec.sigma), "weights": list(spec.weights), "M": spec.M, "N": spec.N}
    if args.law_cmd == "edges":
        payload = {
            "results": {
                "edges": list(structure.edges),
                "critical_points": [None if np.isinf(x) else x for x in structure.critical_points],
                "curvatures": list(structure.curvatures),
                "p": structure.p,
                "bulk_counts": list(structure.bulk_counts),
                "zero_atom_mass": structure.zero_atom_mass,
            }
        }
        rows = [
            (j + 1, structure.edges[j], None if np.isinf(structure.critical_points[j]) else structure.critical_points[j], structure.curvatures[j])
            for j in range(2 * structure.p)
        ]
        _emit(args, _artifact(payload, args.seed, config_echo), rows, ("edge", "a", "critical_point", "curvature"))
    elif args.law_cmd == "density":
        lo, hi, n = args.grid
        grid = np.linspace(lo, hi, int(n))
        rho = density_grid(grid, spec)
        payload = {"results": {"E": grid.tolist(), "rho": rho.tolist()}}
        _emit(args, _artifact(payload, args.seed, config_echo), zip(grid.tolist(), rho.tolist()), ("E", "rho"))
    elif args.law_cmd == "gamma":
        rows = []
        out = {}
        bulks = [args.bulk] if args.bulk else range(1, structure.p + 1)
        for k in bulks:
            gam = classical_locations(k, spec, structure).gamma
            out[str(k)] = gam.tolist()
            rows.extend((k, i + 1, g) for i, g in enumerate(gam.tolist()))
        _emit(args, _artifact({"results": {"gamma": out}}, args.seed, config_echo), rows, ("k", "i", "gamma"))
    elif args.law_cmd == "regularity":
        report = check_regularity(spec, structure, tau=args.tau, tau_prime=args.tau_prime)
        payload = {
            "results": {
                "tau": report.tau,
                "tau_prime": report.tau_prime,
                "edges": [
                    {"edge": e.edge, "a": e.a, "min_gap": e.min_gap, "min_pole_distance": e.min_pole_distance, "ok": e.ok}
                    for e in report.edge_checks
                ],
                "bulks": [
                    {"k": b.k, "min_density": b.min_density, "gamma_min": b.gamma_min, "ok": b.ok}
                    for b in report.bulk_checks
                ],
                "edges_regular": report.edges_regular,
                "bulks_regular": report.bulks_regular,
                "gammas_above_tau": report.gammas_above_tau,
                "all_ok": report.all_ok,
            }
        }
        _emit(args, _artifact(payload, args.seed, config_echo))
    return 0


def _cmd_sample(args, cfg) -> int:
    spec = _spectrum_from(args, cfg)
    law = EntryLaw.from_name(args.law)
    if not args.output:
        raise ConfigError("sample requires --output for the binary cache")
    decomps = []
    for rep in range(args.replicates):
        rng = replicate_rng(args.seed, rep)
        X = sample_matrix(law, spec.M, spec.N, rng)
        decomps.append(decompose(X, spec.sigma_diagonal(), seed=args.seed))
    save_decompositions(args.output, decomps)
    sys.stderr.write(f"wrote {len(decomps)} decompositions to {args.output}\n")
    return 0


def _targets_from(cfg: dict) -> tuple:
    rows = cfg.get("experiment", {}).get("targets", [])
    out = []
    for idx, row in enumerate(rows):
        where = f"[[experiment.targets]] entry {idx + 1}"
        out.append(
            Target(
                k=int(_require(row, "k", where)),
                l=int(_require(row, "l", where)),
                side=str(row.get("side", "right_edge")),
                kind=str(_require(row, "kind", where)),
                a=int(_require(row, "a", where)),
                b=int(_require(row, "b", where)),
            )
        )
    return tuple(out)


def _cmd_verify(args, cfg) -> int:
    spec = _spectrum_from(args, cfg)
    exp_cfg = cfg.get("experiment", {})
    law_a = EntryLaw.from_name(args.law_a or exp_cfg.get("law_a", "gaussian"))
    law_b_name = args.law_b or exp_cfg.get("law_b")
    config = ExperimentConfig(
        spec=spec,
        law_a=law_a,
        law_b=EntryLaw.from_name(law_b_name) if law_b_name else None,
        replicates=args.replicates or int(exp_cfg.get("replicates", 2000)),
        seed=args.seed,
        targets=_targets_from(cfg),
        h=int(exp_cfg.get("h", 1)),
        tau=float(exp_cfg.get("tau", 0.1)),
        rigidity_sizes=tuple(exp_cfg.get("sizes", (100, 200, 400, 800))),
        threads=_threads(args),
    )
    report = _EXPERIMENTS[args.verify_cmd](config)
    artifact = _artifact({"results": report.to_json_dict()}, args.seed, report.config)
    rows = list(report.replicate_rows())
    _emit(args, artifact, rows, ("ensemble", "replicate", "observable", "value"))
    sys.stderr.write(
        f"{report.name}: {'PASS' if report.overall_pass else 'FAIL'} "
        f"({sum(s.ok for s in report.stats)}/{len(report.stats)} statistics ok)\n"
    )
    return 0 if report.overall_pass else 2


def _load_data_matrix(path: str) -> np.ndarray:
    if path.endswith(".csv"):
        return np.loadtxt(path, delimiter=",", ndmin=2)
    decomps = load_decompositions(path)
    if not decomps:
        raise ConfigError(f"{path}: empty decomposition cache")
    return decomps[0].reconstruct()


def _cmd_conftest(args, cfg) -> int:
    if not args.data:
        raise ConfigError("missing required field 'data' (path to CSV or cache)")
    data = _load_data_matrix(args.data)
    table = cfg.get("conftest", {})
    config = ConformalTestConfig(
        alpha=args.alpha if args.alpha is not None else float(table.get("alpha", 0.1)),
        K=args.K if args.K is not None else int(table.get("K", 200)),
        R1_size=int(table.get("R1_size", 3)),
        R2_size=int(table.get("R2_size", 3)),
        seed=args.seed,
        normality_test=args.normality_test or table.get("normality_test", "anderson_darling"),
        subsample=table.get("subsample"),
    )
    decision = conformal_test(data, config)
    _emit(args, _artifact({"results": decision.to_json_dict()}, args.seed, decision.config))
    sys.stderr.write(f"conformality H0: {'REJECT' if decision.reject else 'RETAIN'} (A={decision.A}/{decision.pairs})\n")
    return 2 if decision.reject else 0


# ---------------------------------------------------------------------------
# Argument parsing


def _grid(text: str):
    try:
        lo, hi, n = text.split(":")
        return float(lo), float(hi), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be lo:hi:n, got {text!r}") from None


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--seed", type=int, default=0, help="64-bit RNG seed, recorded in the artifact")
    p.add_argument("--threads", type=int, default=None, help="replicate-level threads (env COVSPECTRA_THREADS)")
    p.add_argument("--output", help="artifact path (stdout when omitted)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--sigma", nargs="+", type=float, help="distinct population eigenvalues, descending")
    p.add_argument("--weights", nargs="+", type=float, help="weights matching --sigma (default uniform)")
    p.add_argument("--M", type=int, help="population dimension")
    p.add_argument("--N", type=int, help="sample count")
    p.add_argument("--r", type=float, help="aspect ratio N/M (with --M or the default M=1000)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covspectra",
        description="Deformed Marchenko-Pastur machinery and Monte-Carlo universality checks.",
    )
    parser.add_argument("--version", action="version", version=f"covspectra {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    law = sub.add_parser("law", help="deterministic spectral outputs")
    law_sub = law.add_subparsers(dest="law_cmd", required=True)
    for name, extra in (
        ("edges", None),
        ("density", "grid"),
        ("gamma", "bulk"),
        ("regularity", "tau"),
    ):
        p = law_sub.add_parser(name)
        _add_common(p)
        if extra == "grid":
            p.add_argument("--grid", type=_grid, default=(0.1, 4.0, 100), help="density grid lo:hi:n")
        if extra == "bulk":
            p.add_argument("--bulk", type=int, default=None, help="bulk index (default: all)")
        if extra == "tau":
            p.add_argument("--tau", type=float, default=0.05)
            p.add_argument("--tau-prime", dest="tau_prime", type=float, default=0.01)
        p.set_defaults(handler=_cmd_law)

    sample = sub.add_parser("sample", help="simulate decompositions into a binary cache")
    _add_common(sample)
    sample.add_argument("--law", default="gaussian", choices=("gaussian", "two_moment", "four_moment"))
    sample.add_argument("--replicates", type=int, default=1)
    sample.set_defaults(handler=_cmd_sample)

    verify = sub.add_parser("verify", help="Monte-Carlo experiment reports")
    verify_sub = verify.add_subparsers(dest="verify_cmd", required=True)
    for name in _EXPERIMENTS:
        p = verify_sub.add_parser(name)
        _add_common(p)
        p.add_argument("--law-a", dest="law_a", choices=("gaussian", "two_moment", "four_moment"))
        p.add_argument("--law-b", dest="law_b", choices=("gaussian", "two_moment", "four_moment"))
        p.add_argument("--replicates", type=int, default=None)
        p.set_defaults(handler=_cmd_verify)

    conftest = sub.add_parser("conftest", help="conformality hypothesis test")
    _add_common(conftest)
    conftest.add_argument("--data", help="data matrix: .csv or decomposition cache")
    conftest.add_argument("--alpha", type=float, default=None)
    conftest.add_argument("--K", type=int, default=None)
    conftest.add_argument("--normality-test", dest="normality_test", choices=("shapiro_wilk", "anderson_darling"))
    conftest.set_defaults(handler=_cmd_conftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.perf_counter()
    try:
        cfg = _load_config(args.config) if getattr(args, "config", None) else {}
        code = args.handler(args, cfg)
    except CovspectraError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    sys.stderr.write(f"covspectra {__version__}: done in {time.perf_counter() - started:.2f}s (seed={args.seed})\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
