"""Command-line entry point: reproducible fit / path / simulate / diagnose runs.

Every run reads one config file (see :mod:`coxsieve.config` for the
grammar), applies any command-line overrides, writes its fully-resolved
configuration to ``resolved.cfg`` inside the output directory, and emits
its report files next to it.  Rerunning a ``resolved.cfg`` reproduces the
outputs byte for byte.

Exit codes: 0 success, 1 numerical/domain failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from .basis import build_raw_basis, orthonormalize
from .config import (
    COMMANDS,
    ConfigError,
    RunConfig,
    load_config,
    save_config,
)
from .data import (
    DataFormatError,
    Family,
    censoring_rate,
    load_csv,
    simulate,
)
from .diagnostics import DiagnosticsError, oracle_check, true_coefficients
from .likelihood import LikelihoodError, expand_design
from .riskset import BACKEND
from .select import (
    SelectError,
    SelectionScores,
    extract_estimates,
    score_selection,
    threshold_select,
)
from .solver import SolverError, fit, lambda_path

__all__ = ["main", "run_fit", "run_path", "run_simulate", "run_diagnose"]

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2

_MAX_FAILURE_SHARE = 0.05


def _f(x: float) -> str:
    """Full-precision, locale-independent float rendering for CSV files."""
    return format(float(x), ".17g")


def _cell(value: float | None) -> str:
    return "---" if value is None else f"{value:.3f}"


# ---------------------------------------------------------------------------
# Config resolution
# ---------------------------------------------------------------------------

def _resolve_config(token: str) -> RunConfig:
    """Load a config from a path, falling back to the packaged presets."""
    path = Path(token)
    if path.is_file():
        cfg = load_config(path)
        return _anchor_csv(cfg, path.parent)
    name = token if token.endswith(".cfg") else f"{token}.cfg"
    preset = resources.files(__package__).joinpath("presets", name)
    if preset.is_file():
        with resources.as_file(preset) as real:
            cfg = load_config(real)
            return _anchor_csv(cfg, real.parent)
    raise ConfigError(f"config file not found: {token}")


def _anchor_csv(cfg: RunConfig, base: Path) -> RunConfig:
    """Make a relative csv path independent of the current directory."""
    if cfg.csv is None or Path(cfg.csv).is_absolute():
        return cfg
    return dataclasses.replace(cfg, csv=str((base / cfg.csv).resolve()))


_OVERRIDES = (
    # (argparse dest, config field)
    ("csv", "csv"),
    ("n", "n"),
    ("p", "p"),
    ("q", "q"),
    ("basis_size", "L"),
    ("order", "order"),
    ("penalty", "penalty"),
    ("lam", "lam"),
    ("t_lambda", "t_lambda"),
    ("replications", "replications"),
    ("seed", "seed"),
    ("threads", "threads"),
    ("out", "out_dir"),
    ("path_count", "path_count"),
    ("path_ratio", "path_ratio"),
    ("tol", "tol"),
    ("kkt_tol", "kkt_tol"),
    ("max_iter", "max_iter"),
    ("xi", "xi"),
    ("cone_samples", "cone_samples"),
    ("cone_polish", "cone_polish"),
)


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    changes: dict[str, object] = {}
    for dest, field in _OVERRIDES:
        value = getattr(args, dest, None)
        if value is not None:
            changes[field] = value
    if cfg.command != args.command:
        changes["command"] = args.command
        if cfg.out_dir == f"runs/{cfg.command}" and "out_dir" not in changes:
            changes["out_dir"] = ""  # re-derive the default for the new command
    if not changes:
        return cfg
    try:
        return dataclasses.replace(cfg, **changes)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# Shared model assembly
# ---------------------------------------------------------------------------

def _load_dataset(cfg: RunConfig):
    if cfg.csv is not None:
        return load_csv(cfg.csv, cfg.family)
    return simulate(cfg.truth_spec(), cfg.n, cfg.seed)


def _build_design(cfg: RunConfig, data):
    basis = orthonormalize(build_raw_basis(cfg.L, cfg.order))
    design = expand_design(
        data, basis, penalize_index_intercept=cfg.penalize_index_intercept
    )
    return basis, design


def _selection_line(label: str, sel) -> str:
    s_c = ",".join(map(str, sorted(sel.s_c_hat))) or "-"
    s_n = ",".join(map(str, sorted(sel.s_n_hat))) or "-"
    line = f"{label}: scalar parts [{s_c}]  vector parts [{s_n}]"
    if sel.hierarchy_repaired:
        repaired = ",".join(map(str, sel.hierarchy_repaired))
        line += f"  (hierarchy repaired: {repaired})"
    return line


def _write(path: Path, text: str) -> None:
    path.write_text(text)


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def run_fit(cfg: RunConfig) -> list[Path]:
    """Fit once and write coefficients, function tables, and diagnostics."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = _load_dataset(cfg)
    basis, design = _build_design(cfg, data)
    result = fit(
        design,
        cfg.penalty_spec(),
        tol=cfg.tol,
        kkt_tol=cfg.kkt_tol,
        max_iter=cfg.max_iter,
    )
    estimates = extract_estimates(result.gamma_hat, basis)
    sel_raw = threshold_select(estimates, 0.0)
    sel_thr = threshold_select(estimates, cfg.t_lambda)

    files = [out / "resolved.cfg"]
    save_config(cfg, files[0])

    lines = ["block,covariate,slot,value"]
    for block in design.layout.blocks:
        covariate = "" if block.covariate is None else str(block.covariate)
        for slot in range(block.size):
            value = result.gamma_hat.flat[block.start + slot]
            lines.append(f"{block.label},{covariate},{slot},{_f(value)}")
    files.append(out / "coefficients.csv")
    _write(files[-1], "\n".join(lines) + "\n")

    lines = ["covariate,scalar_estimate,vector_norm,selected_scalar,selected_vector"]
    for j in range(1, design.p + 1):
        lines.append(
            f"{j},{_f(estimates.g_c_hat[j - 1])},{_f(estimates.g_n_norms[j - 1])},"
            f"{int(j in sel_thr.s_c_hat)},{int(j in sel_thr.s_n_hat)}"
        )
    files.append(out / "g_table.csv")
    _write(files[-1], "\n".join(lines) + "\n")

    grid = np.linspace(0.0, 1.0, cfg.grid_points)
    columns = [("t", grid)]
    intercept = estimates.intercept_function()
    if intercept is not None:
        columns.append(("g0", intercept(grid)))
    for j in range(1, design.p + 1):
        columns.append((f"gn_{j}", estimates.vector_function(j)(grid)))
    lines = [",".join(name for name, _ in columns)]
    for i in range(grid.size):
        lines.append(",".join(_f(values[i]) for _, values in columns))
    files.append(out / "g_grid.csv")
    _write(files[-1], "\n".join(lines) + "\n")

    lines = ["time,events,at_risk"]
    for time, ties, at_risk in design.risk_set_table():
        lines.append(f"{_f(time)},{ties:g},{at_risk}")
    files.append(out / "riskset.csv")
    _write(files[-1], "\n".join(lines) + "\n")

    report = [
        f"family: {cfg.family}",
        f"backend: {BACKEND}",
        f"n: {design.n}  events: {int(round(design.status.sum()))}  "
        f"censored share: {censoring_rate(data):.4f}",
        f"basis: L={cfg.L} order={cfg.order}",
        f"penalty: {cfg.penalty}  lambda: {_f(cfg.lam)}",
        f"iterations: {result.iterations}  converged: {result.converged}",
        f"objective: {_f(result.objective)}",
        f"kkt residual: {_f(result.kkt_residual)}",
        _selection_line("selected at t_lambda=0", sel_raw),
        _selection_line(f"selected at t_lambda={cfg.t_lambda:g}", sel_thr),
    ]
    files.append(out / "report.txt")
    _write(files[-1], "\n".join(report) + "\n")
    return files


# ---------------------------------------------------------------------------
# path
# ---------------------------------------------------------------------------

def run_path(cfg: RunConfig) -> list[Path]:
    """Fit a warm-started lambda path and tabulate it."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = _load_dataset(cfg)
    basis, design = _build_design(cfg, data)
    results = lambda_path(
        design,
        cfg.penalty_spec(lam=0.0),
        count=cfg.path_count,
        ratio=cfg.path_ratio,
        tol=cfg.tol,
        kkt_tol=cfg.kkt_tol,
        max_iter=cfg.max_iter,
    )

    files = [out / "resolved.cfg"]
    save_config(cfg, files[0])

    lines = [
        "lambda,objective,kkt_residual,iterations,converged,"
        "selected_scalar,selected_vector"
    ]
    for res in results:
        estimates = extract_estimates(res.gamma_hat, basis)
        sel = threshold_select(estimates, cfg.t_lambda)
        lines.append(
            f"{_f(res.lam)},{_f(res.objective)},{_f(res.kkt_residual)},"
            f"{res.iterations},{int(res.converged)},"
            f"{len(sel.s_c_hat)},{len(sel.s_n_hat)}"
        )
    files.append(out / "path.csv")
    _write(files[-1], "\n".join(lines) + "\n")

    report = [
        f"family: {cfg.family}",
        f"backend: {BACKEND}",
        f"points: {len(results)}  ratio: {cfg.path_ratio:g}",
        f"lambda_max: {_f(results[0].lam)}",
        f"lambda_min: {_f(results[-1].lam)}",
        f"all converged: {all(r.converged for r in results)}",
    ]
    files.append(out / "report.txt")
    _write(files[-1], "\n".join(report) + "\n")
    return files


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _one_replication(cfg: RunConfig, truth, basis, rep: int):
    data = simulate(truth, cfg.n, cfg.seed, replication=rep)
    design = expand_design(
        data, basis, penalize_index_intercept=cfg.penalize_index_intercept
    )
    result = fit(
        design,
        cfg.penalty_spec(),
        tol=cfg.tol,
        kkt_tol=cfg.kkt_tol,
        max_iter=cfg.max_iter,
    )
    estimates = extract_estimates(result.gamma_hat, basis)
    return threshold_select(estimates, 0.0), threshold_select(estimates, cfg.t_lambda)


def _render_score_table(cfg: RunConfig, scored: list[tuple[float, SelectionScores]]) -> str:
    labels = cfg.group_labels()
    first = scored[0][1]
    parts = SelectionScores.PARTS
    name_w = max(16, max(len(f"t_lambda = {t:g}") for t, _ in scored) + 2)
    cell_w = max(11, max(len(first.part_label(part)) for part in parts) + 2)
    group_w = 2 * cell_w

    out = [f"lambda = {cfg.lam:g}   (n = {cfg.n}, replications = {cfg.replications})"]
    header = " " * name_w + "".join(lbl.ljust(group_w) for lbl in labels)
    out.append(header.rstrip())
    for t_value, scores in scored:
        out.append("")
        subcells = "".join(
            scores.part_label(part).ljust(cell_w)
            for _ in labels
            for part in parts
        )
        out.append((f"t_lambda = {t_value:g}".ljust(name_w) + subcells).rstrip())
        for metric in ("failure", "correct", "false"):
            row = metric.capitalize().ljust(name_w)
            for gi in range(len(labels)):
                for part in parts:
                    cell = scores.cells[(gi, part)]
                    row += _cell(getattr(cell, metric)).ljust(cell_w)
            out.append(row.rstrip())
    return "\n".join(out) + "\n"


def run_simulate(cfg: RunConfig) -> list[Path]:
    """Run the replication study and emit the score tables."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    truth = cfg.truth_spec()
    basis = orthonormalize(build_raw_basis(cfg.L, cfg.order))
    grouping = cfg.grouping()

    def attempt(rep: int):
        try:
            return None, _one_replication(cfg, truth, basis, rep)
        except (ValueError, FloatingPointError) as exc:
            return f"replication {rep}: {type(exc).__name__}: {exc}", None

    reps = range(cfg.replications)
    workers = cfg.threads if cfg.threads > 0 else None
    if cfg.threads == 1:
        outcomes = [attempt(rep) for rep in reps]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(attempt, reps))

    failures = [msg for msg, pair in outcomes if pair is None]
    if len(failures) > _MAX_FAILURE_SHARE * cfg.replications:
        raise SolverError(
            f"{len(failures)} of {cfg.replications} replications failed "
            f"(more than {_MAX_FAILURE_SHARE:.0%}): {'; '.join(failures[:5])}"
        )
    pairs = [pair for _, pair in outcomes if pair is not None]
    scored = [
        (0.0, score_selection([raw for raw, _ in pairs], truth, grouping)),
        (
            cfg.t_lambda,
            score_selection([thr for _, thr in pairs], truth, grouping),
        ),
    ]

    files = [out / "resolved.cfg"]
    save_config(cfg, files[0])

    labels = cfg.group_labels()
    lines = ["t_lambda,group,part,metric,value"]
    for t_value, scores in scored:
        for gi, label in enumerate(labels):
            for part in SelectionScores.PARTS:
                cell = scores.cells[(gi, part)]
                for metric in ("failure", "correct", "false"):
                    value = getattr(cell, metric)
                    rendered = "" if value is None else _f(value)
                    lines.append(
                        f"{_f(t_value)},{label},{scores.part_label(part)},"
                        f"{metric},{rendered}"
                    )
    files.append(out / "scores.csv")
    _write(files[-1], "\n".join(lines) + "\n")

    files.append(out / "table.txt")
    _write(files[-1], _render_score_table(cfg, scored))

    if failures:
        files.append(out / "failures.txt")
        _write(files[-1], "\n".join(failures) + "\n")
    return files


# ---------------------------------------------------------------------------
# diagnose
# ---------------------------------------------------------------------------

def run_diagnose(cfg: RunConfig) -> list[Path]:
    """Check the oracle-inequality certificate on one simulated instance."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    truth = cfg.truth_spec()
    data = simulate(truth, cfg.n, cfg.seed)
    basis, design = _build_design(cfg, data)
    gamma_star = true_coefficients(truth, basis, design.layout)
    result = fit(
        design,
        cfg.penalty_spec(),
        tol=cfg.tol,
        kkt_tol=cfg.kkt_tol,
        max_iter=cfg.max_iter,
    )
    report = oracle_check(
        result,
        design,
        gamma_star,
        cfg.xi,
        samples=cfg.cone_samples,
        polish=cfg.cone_polish,
        seed=cfg.seed,
    )

    files = [out / "resolved.cfg"]
    save_config(cfg, files[0])

    files.append(out / "oracle.json")
    _write(files[-1], json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")

    def show(x):
        return "null" if x is None else _f(x)

    text = [
        f"family: {cfg.family}  n: {design.n}  dim: {design.dim}",
        f"lambda: {_f(report.lam)}  score deviation: {_f(report.d_l)}  "
        f"in regime: {report.in_regime}",
        f"support size s0: {report.s0}  spread constant: {_f(report.c_w)}",
        f"compatibility bracket: [{_f(report.kappa_lower)}, {_f(report.kappa_upper)}]",
        f"restricted eigenvalue bracket: [{_f(report.re_lower)}, {_f(report.re_upper)}]",
        f"tau_star: {show(report.tau_star)}  eta_star: {show(report.eta_star)}",
        f"error bound: {show(report.bound)}  achieved error: {_f(report.achieved)}",
        f"cone ratio: {show(report.cone_ratio)}  (membership limit {_f(report.zeta)})",
        f"bound holds: {report.holds}",
    ]
    if report.reason:
        text.append(f"note: {report.reason}")
    files.append(out / "oracle.txt")
    _write(files[-1], "\n".join(text) + "\n")

    grid = np.linspace(0.0, 1.0, cfg.grid_points)
    values = basis.evaluate(grid)
    lines = ["t," + ",".join(f"b{k}" for k in range(1, cfg.L + 1))]
    for i in range(grid.size):
        lines.append(
            ",".join([_f(grid[i])] + [_f(values[i, k]) for k in range(cfg.L)])
        )
    files.append(out / "basis_grid.csv")
    _write(files[-1], "\n".join(lines) + "\n")
    return files


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coxsieve",
        description=(
            "Structure identification in varying-coefficient Cox models: "
            "fit penalized spline-sieve models, trace regularization paths, "
            "replicate selection studies, and check oracle certificates."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "fit": "fit one model and write coefficient and selection reports",
        "path": "fit a warm-started sequence of penalty levels",
        "simulate": "replicate generate-fit-select runs and score them",
        "diagnose": "evaluate the oracle-inequality certificate on one run",
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument(
            "config",
            help="config file path, or the name of a packaged preset "
            "(table1, table2, fit_sample, diagnose_small)",
        )
        sp.add_argument("--out", help="output directory override")
        sp.add_argument("--seed", type=int, help="master seed override")
        sp.add_argument("--threads", type=int, help="worker threads (1 = serial)")
        sp.add_argument("--penalty", choices=("p1", "ph", "group"))
        sp.add_argument("--lambda", dest="lam", type=float, help="penalty level")
        sp.add_argument("--t-lambda", dest="t_lambda", type=float)
        sp.add_argument("--basis-size", dest="basis_size", type=int, metavar="L")
        sp.add_argument("--order", type=int, help="spline order (3 = quadratic)")
        sp.add_argument("--tol", type=float)
        sp.add_argument("--kkt-tol", dest="kkt_tol", type=float)
        sp.add_argument("--max-iter", dest="max_iter", type=int)
        if name in ("fit", "path"):
            sp.add_argument("--csv", help="dataset file override")
        if name in ("fit", "path", "simulate", "diagnose"):
            sp.add_argument("--n", type=int, help="simulated sample size")
        if name == "path":
            sp.add_argument("--path-count", dest="path_count", type=int)
            sp.add_argument("--path-ratio", dest="path_ratio", type=float)
        if name == "simulate":
            sp.add_argument(
                "-R", "--replications", dest="replications", type=int
            )
            sp.add_argument(
                "--n-sweep",
                dest="n_sweep",
                help="comma-separated sample sizes; runs one study per size",
            )
        if name == "diagnose":
            sp.add_argument("--xi", type=float)
            sp.add_argument("--cone-samples", dest="cone_samples", type=int)
            sp.add_argument("--cone-polish", dest="cone_polish", type=int)
    return parser


def _parse_sweep(raw: str) -> list[int]:
    try:
        values = [int(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"--n-sweep expects integers; got {raw!r}") from None
    if not values:
        raise ConfigError("--n-sweep got an empty list")
    return values


_RUNNERS = {
    "fit": run_fit,
    "path": run_path,
    "simulate": run_simulate,
    "diagnose": run_diagnose,
}


def main(argv=None) -> int:
    """CLI entry point; returns the process exit code."""
    args = _build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(_resolve_config(args.config), args)
        sweep = getattr(args, "n_sweep", None)
        if sweep is not None:
            written: list[Path] = []
            for n in _parse_sweep(sweep):
                sub = dataclasses.replace(
                    cfg, n=n, out_dir=f"{cfg.out_dir}/n{n}"
                )
                written.extend(run_simulate(sub))
            base = Path(cfg.out_dir)
            base.mkdir(parents=True, exist_ok=True)
            sweep_file = base / "sweep.txt"
            sweep_file.write_text(
                "\n".join(str(p) for p in written if p.name == "table.txt") + "\n"
            )
            written.append(sweep_file)
        else:
            written = _RUNNERS[cfg.command](cfg)
    except (ConfigError, DataFormatError) as exc:
        print(f"coxsieve: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"coxsieve: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (
        LikelihoodError,
        SolverError,
        SelectError,
        DiagnosticsError,
        FloatingPointError,
        ValueError,
    ) as exc:
        print(f"coxsieve: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
