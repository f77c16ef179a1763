"""Command-line front-end: ``ucoot {solve,robust-sweep,target-shift,outlier-demo}``.

Every command reads an optional JSON config file, applies command-line
overrides, runs, and writes its outputs under ``--out-dir``. Outputs depend
only on the config and ``--seed``.

Exit codes
----------
0 success, 2 bad command line, 3 I/O error, 4 malformed data file,
5 shape mismatch, 6 invalid configuration, 7 degenerate problem.
Failures print one JSON object ``{"error", "message", "exit_code"}`` on
stderr and leave no output files behind.
"""

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .coot import InnerSolver, SolverConfig, WarmStart, bcd_solve
from .core import Dataset, load_dataset, write_matrix_csv
from .datasets import append_uniform_outliers, two_view_mixture
from .exceptions import ConfigurationError, DataFormatError, DegenerateProblemError, DimensionError
from .robustness import SWEEP_COLUMNS, tau_sweep
from .transfer import block_diag_accuracy, class_marginal_tv, label_propagate

__all__ = ["main", "build_parser", "EXIT_CODES"]

EXIT_OK = 0
EXIT_IO = 3
EXIT_FORMAT = 4
EXIT_SHAPE = 5
EXIT_CONFIG = 6
EXIT_DEGENERATE = 7

EXIT_CODES = {
    "io": EXIT_IO,
    "format": EXIT_FORMAT,
    "shape": EXIT_SHAPE,
    "config": EXIT_CONFIG,
    "degenerate": EXIT_DEGENERATE,
}

_SOLVER_KEYS = ("lambda1", "lambda2", "eps", "inner", "outer_max_iter", "outer_tol", "inner_max_iter", "inner_tol", "init")

_DEFAULTS = {
    "solve": {
        "solver": {},
        "source": None,
        "target": None,
        "source_sample_weights": None,
        "source_feature_weights": None,
        "target_sample_weights": None,
        "target_feature_weights": None,
    },
    "robust-sweep": {
        "solver": {"lambda1": 1.0, "lambda2": 1.0, "eps": 1e-2},
        "taus": list(range(1, 11)),
        "n_jobs": 1,
    },
    "target-shift": {
        "solver": {"lambda1": 1.0, "lambda2": 1.0, "eps": 5e-2},
        "rhos": [1.0, 0.6, 0.2],
        "n_trials": 5,
        "n_classes": 10,
        "n_per_class": 20,
        "n_shifted": 4,
        "d1": 12,
        "d2": 8,
        "separation": 3.0,
        "noise": 1.0,
        "n_jobs": 1,
    },
    "outlier-demo": {
        "solver": {"lambda1": 1.0, "lambda2": 1.0, "eps": 5e-2},
        "n_trials": 10,
        "n_classes": 5,
        "n_per_class": 10,
        "d1": 10,
        "d2": 10,
        "separation": 3.0,
        "noise": 1.0,
        "outlier_fraction": 0.05,
        "n_jobs": 1,
    },
}


# ---------------------------------------------------------------- config


def _load_config(path):
    if path is None:
        return {}
    text = Path(path).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    return cfg


_PATH_KEYS = (
    "source",
    "target",
    "source_sample_weights",
    "source_feature_weights",
    "target_sample_weights",
    "target_feature_weights",
)


def _merge(command, file_cfg, args, base=None):
    """Defaults, then the config file, then command-line flags.

    Relative paths in the file are taken relative to the file's directory.
    """
    defaults = _DEFAULTS[command]
    unknown = set(file_cfg) - set(defaults)
    if unknown:
        raise ConfigurationError(f"unknown config keys for {command}: {sorted(unknown)}")
    cfg = {k: (dict(v) if isinstance(v, dict) else v) for k, v in defaults.items()}
    for k, v in file_cfg.items():
        if k == "solver":
            if not isinstance(v, dict):
                raise ConfigurationError("'solver' must be an object")
            bad = set(v) - set(_SOLVER_KEYS)
            if bad:
                raise ConfigurationError(f"unknown solver keys: {sorted(bad)}")
            cfg["solver"].update(v)
        elif k in _PATH_KEYS and v is not None:
            cfg[k] = str(_resolve(v, base))
        else:
            cfg[k] = v
    for k in ("lambda1", "lambda2", "eps", "inner"):
        v = getattr(args, k)
        if v is not None:
            cfg["solver"][k] = v
    for k in ("source", "target", "taus", "rhos", "n_trials", "n_jobs"):
        v = getattr(args, k, None)
        if v is not None and k in cfg:
            cfg[k] = v
    return cfg


def _init_from(value):
    if value is None or value == "product":
        return "product"
    if value == "warm_start":
        return WarmStart()
    if isinstance(value, dict) and set(value) == {"warm_start"}:
        l1, l2 = value["warm_start"]
        return WarmStart(float(l1), float(l2))
    raise ConfigurationError(f"unsupported init {value!r}")


def _float(v, name):
    if isinstance(v, str) and v.lower() in ("inf", "infinity"):
        return math.inf
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{name} must be a number, got {v!r}") from None


def _solver_config(d, **override):
    d = {**d, **override}
    kw = {}
    for k in ("lambda1", "lambda2", "eps", "outer_tol", "inner_tol"):
        if k in d:
            kw[k] = _float(d[k], k)
    for k in ("outer_max_iter", "inner_max_iter"):
        if k in d:
            if not isinstance(d[k], int) or isinstance(d[k], bool):
                raise ConfigurationError(f"{k} must be an integer")
            kw[k] = d[k]
    if "inner" in d:
        try:
            kw["inner"] = InnerSolver(d["inner"])
        except ValueError:
            raise ConfigurationError(f"unknown inner solver {d['inner']!r}") from None
    kw["init"] = _init_from(d.get("init"))
    return SolverConfig(**kw)


def _positive_int(cfg, key, minimum=1):
    v = cfg[key]
    if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
        raise ConfigurationError(f"{key} must be an integer >= {minimum}")
    return v


def _grid(cfg, key):
    v = cfg[key]
    if not isinstance(v, (list, tuple)) or len(v) == 0:
        raise ConfigurationError(f"{key} must be a nonempty list")
    return [_float(x, key) for x in v]


def _resolve(path, base):
    if path is None:
        return None
    p = Path(path)
    return p if p.is_absolute() or base is None else base / p


# ---------------------------------------------------------------- output


def _dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _csv_text(columns, rows):
    def fmt(v):
        if isinstance(v, float):
            return repr(v)
        return str(v)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r[c]) for c in columns])
    return buf.getvalue()


def _write_outputs(out_dir, files):
    """Write ``{name: text | ndarray}`` only after everything is computed."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, content in files.items():
        if isinstance(content, np.ndarray):
            write_matrix_csv(out / name, content)
        else:
            (out / name).write_text(content)


def _map(fn, jobs, n_jobs):
    if n_jobs == 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        futs = [ex.submit(fn, *j) for j in jobs]
        return [f.result() for f in futs]


# ---------------------------------------------------------------- commands


def cmd_solve(cfg, seed):
    """Solve one problem between two CSV datasets.

    Returns the files to write: ``report.json``, ``sample_plan.csv`` and
    ``feature_plan.csv``. The report's ``objective`` is the unregularized
    value; ``regularized_objective`` adds the entropic term.
    """
    if cfg["source"] is None or cfg["target"] is None:
        raise ConfigurationError("solve needs source and target CSV paths")
    config = _solver_config(cfg["solver"])
    A = load_dataset(
        cfg["source"],
        cfg["source_sample_weights"],
        cfg["source_feature_weights"],
    )
    B = load_dataset(
        cfg["target"],
        cfg["target_sample_weights"],
        cfg["target_feature_weights"],
    )
    rep = bcd_solve(A, B, config)
    d = rep.to_dict()
    report = {
        "command": "solve",
        "seed": seed,
        "objective": rep.parts.unregularized,
        "regularized_objective": rep.objective,
        "parts": d["parts"],
        "mass": d["mass"],
        "outer_iters": d["outer_iters"],
        "converged": d["converged"],
        "inner_nonconverged": d["inner_nonconverged"],
        "trace": d["trace"],
        "config": d["config"],
        "shapes": {"source": list(A.shape), "target": list(B.shape)},
    }
    return {
        "report.json": _dump_json(report),
        "sample_plan.csv": np.asarray(rep.sample_plan),
        "feature_plan.csv": np.asarray(rep.feature_plan),
    }


def cmd_robust_sweep(cfg, seed):
    """COOT, UCOOT and both bounds against tau on the cosine instance."""
    taus = _grid(cfg, "taus")
    if any(t < 0 for t in taus):
        raise ConfigurationError("taus must be nonnegative")
    n_jobs = _positive_int(cfg, "n_jobs")
    s = _solver_config(cfg["solver"])
    if s.is_coot:
        raise ConfigurationError("robust-sweep needs finite lambda1/lambda2 for the UCOOT column")
    solver = {
        "inner": s.inner,
        "outer_max_iter": s.outer_max_iter,
        "outer_tol": s.outer_tol,
        "inner_max_iter": s.inner_max_iter,
        "inner_tol": s.inner_tol,
    }
    if s.resolved_inner is InnerSolver.NNPR:
        # the COOT column always needs the scaling solver
        raise ConfigurationError("robust-sweep needs eps > 0 and the scaling solver")
    rows = tau_sweep(taus, (s.lambda1, s.lambda2), s.eps, seed=seed, n_jobs=n_jobs, **solver)
    summary = {"command": "robust-sweep", "seed": seed, "config": s.to_dict(), "n_points": len(rows)}
    return {"robust_sweep.csv": _csv_text(SWEEP_COLUMNS, rows), "report.json": _dump_json(summary)}


def _accuracy(plan, y_source, y_target):
    pred = label_propagate(plan, y_source).labels.labels
    return float(np.mean(pred == y_target))


def _shift_point(A_vals, y1, B_vals, y2, ucfg, ccfg):
    A, B = Dataset(A_vals), Dataset(B_vals)
    out, status = {}, []
    for name, cfg in (("coot", ccfg), ("ucoot", ucfg)):
        try:
            rep = bcd_solve(A, B, cfg)
            out[name] = _accuracy(rep.sample_plan, y1, y2)
            if not rep.converged:
                status.append(f"{name}_nonconverged")
        except (DegenerateProblemError, FloatingPointError) as exc:
            out[name] = math.nan
            status.append(f"{name}_error:{type(exc).__name__}")
    return out["coot"], out["ucoot"], ";".join(status) or "ok"


TARGET_SHIFT_COLUMNS = ("rho", "tv", "coot_acc", "ucoot_acc", "trial", "seed", "status")
TARGET_SHIFT_MEAN_COLUMNS = ("rho", "tv", "coot_acc", "ucoot_acc", "n_trials")


def cmd_target_shift(cfg, seed):
    """Label-propagation accuracy of COOT and UCOOT under class-proportion shift.

    For each trial one source and one balanced target sample are drawn; the
    source keeps ``round(rho * n_per_class)`` samples in ``n_shifted``
    classes fixed per trial, so the rho grid is nested.
    """
    rhos = _grid(cfg, "rhos")
    if any(not 0 < r <= 1 for r in rhos):
        raise ConfigurationError("rhos must lie in (0, 1]")
    n_trials = _positive_int(cfg, "n_trials")
    K = _positive_int(cfg, "n_classes")
    if K < 2:
        raise ConfigurationError("target-shift needs at least two classes")
    npc = _positive_int(cfg, "n_per_class")
    n_shifted = _positive_int(cfg, "n_shifted", minimum=0)
    if n_shifted > K:
        raise ConfigurationError("n_shifted cannot exceed n_classes")
    n_jobs = _positive_int(cfg, "n_jobs")
    ucfg = _solver_config(cfg["solver"])
    if ucfg.is_coot:
        raise ConfigurationError("target-shift needs finite lambda1/lambda2 for UCOOT")
    ccfg = _solver_config(cfg["solver"], lambda1=math.inf, lambda2=math.inf, inner="scaling")
    if ccfg.eps <= 0:
        raise ConfigurationError("target-shift needs eps > 0 for the COOT baseline")

    rng = np.random.default_rng(seed)
    jobs, meta = [], []
    for trial in range(n_trials):
        s = two_view_mixture(
            rng, K, npc, d1=cfg["d1"], d2=cfg["d2"], separation=cfg["separation"], noise=cfg["noise"]
        )
        shifted = rng.choice(K, size=n_shifted, replace=False)
        for rho in rhos:
            keep = np.ones(s.y1.size, dtype=bool)
            n_keep = max(1, int(round(rho * npc)))
            for k in shifted:
                idx = np.flatnonzero(s.y1 == k)
                keep[idx[n_keep:]] = False
            y1 = s.y1[keep]
            jobs.append((s.X1[keep], y1, s.X2, s.y2, ucfg, ccfg))
            meta.append((rho, class_marginal_tv(y1, s.y2), trial))

    results = _map(_shift_point, jobs, n_jobs)
    rows = [
        {"rho": rho, "tv": tv, "coot_acc": c, "ucoot_acc": u, "trial": trial, "seed": seed, "status": st}
        for (rho, tv, trial), (c, u, st) in zip(meta, results)
    ]
    means = []
    for rho in rhos:
        sel = [r for r in rows if r["rho"] == rho]
        means.append(
            {
                "rho": rho,
                "tv": float(np.mean([r["tv"] for r in sel])),
                "coot_acc": float(np.nanmean([r["coot_acc"] for r in sel])),
                "ucoot_acc": float(np.nanmean([r["ucoot_acc"] for r in sel])),
                "n_trials": len(sel),
            }
        )
    summary = {"command": "target-shift", "seed": seed, "config": ucfg.to_dict(), "mean_curve": means}
    return {
        "target_shift.csv": _csv_text(TARGET_SHIFT_COLUMNS, rows),
        "target_shift_mean.csv": _csv_text(TARGET_SHIFT_MEAN_COLUMNS, means),
        "report.json": _dump_json(summary),
    }


OUTLIER_COLUMNS = (
    "trial",
    "ucoot_outlier_mass",
    "coot_outlier_mass",
    "ucoot_block_acc",
    "coot_block_acc",
    "seed",
    "status",
)


def _outlier_point(X1, y1, Y, y2, outliers, ucfg, ccfg):
    A, B = Dataset(X1), Dataset(Y)
    row, status = {}, []
    for name, cfg in (("ucoot", ucfg), ("coot", ccfg)):
        try:
            rep = bcd_solve(A, B, cfg)
            P = rep.sample_plan
            row[f"{name}_outlier_mass"] = float(P[:, outliers].sum() / P.sum())
            row[f"{name}_block_acc"] = block_diag_accuracy(P, y1, y2)
            if not rep.converged:
                status.append(f"{name}_nonconverged")
        except (DegenerateProblemError, FloatingPointError) as exc:
            row[f"{name}_outlier_mass"] = math.nan
            row[f"{name}_block_acc"] = math.nan
            status.append(f"{name}_error:{type(exc).__name__}")
    row["status"] = ";".join(status) or "ok"
    return row


def cmd_outlier_demo(cfg, seed):
    """Sample-outlier rejection on a two-view mixture.

    Uniform-noise rows are appended to the target view and given a label
    of their own, so mass sent to them counts as off-block.
    """
    n_trials = _positive_int(cfg, "n_trials")
    K = _positive_int(cfg, "n_classes")
    if K < 2:
        raise ConfigurationError("outlier-demo needs at least two classes")
    npc = _positive_int(cfg, "n_per_class")
    frac = _float(cfg["outlier_fraction"], "outlier_fraction")
    if not 0 < frac < 1:
        raise ConfigurationError("outlier_fraction must lie in (0, 1)")
    n_jobs = _positive_int(cfg, "n_jobs")
    ucfg = _solver_config(cfg["solver"])
    if ucfg.is_coot:
        raise ConfigurationError("outlier-demo needs finite lambda1/lambda2 for UCOOT")
    ccfg = _solver_config(cfg["solver"], lambda1=math.inf, lambda2=math.inf, inner="scaling")
    if ccfg.eps <= 0:
        raise ConfigurationError("outlier-demo needs eps > 0 for the COOT baseline")

    rng = np.random.default_rng(seed)
    jobs = []
    for _ in range(n_trials):
        s = two_view_mixture(
            rng, K, npc, d1=cfg["d1"], d2=cfg["d2"], separation=cfg["separation"], noise=cfg["noise"]
        )
        Y, out = append_uniform_outliers(rng, s.X2, frac)
        y2 = np.concatenate([s.y2, np.full(out.size, K)])
        jobs.append((s.X1, s.y1, Y, y2, out, ucfg, ccfg))
    rows = _map(_outlier_point, jobs, n_jobs)
    for t, r in enumerate(rows):
        r.update(trial=t, seed=seed)
    wins = sum(r["ucoot_block_acc"] >= r["coot_block_acc"] for r in rows)
    summary = {
        "command": "outlier-demo",
        "seed": seed,
        "config": ucfg.to_dict(),
        "n_trials": n_trials,
        "ucoot_not_worse": wins,
        "max_ucoot_outlier_mass": max(r["ucoot_outlier_mass"] for r in rows),
        "min_coot_outlier_mass": min(r["coot_outlier_mass"] for r in rows),
    }
    return {"outlier_demo.csv": _csv_text(OUTLIER_COLUMNS, rows), "report.json": _dump_json(summary)}


# ---------------------------------------------------------------- entry point


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _lam(text):
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'inf', got {text!r}") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", default=".", help="directory for reports and tables")
    common.add_argument("--lambda1", type=_lam)
    common.add_argument("--lambda2", type=_lam)
    common.add_argument("--eps", type=float)
    common.add_argument("--inner", choices=[s.value for s in InnerSolver])
    common.add_argument("--n-jobs", dest="n_jobs", type=int)

    p = argparse.ArgumentParser(prog="ucoot", description="COOT / unbalanced COOT solvers and experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", parents=[common], help="solve between two CSV matrices")
    s.add_argument("--source", help="source matrix CSV (headerless)")
    s.add_argument("--target", help="target matrix CSV (headerless)")
    s = sub.add_parser("robust-sweep", parents=[common], help="outlier sensitivity sweep over tau")
    s.add_argument("--taus", type=_float_list)
    s = sub.add_parser("target-shift", parents=[common], help="label transfer under class-proportion shift")
    s.add_argument("--rhos", type=_float_list)
    s.add_argument("--n-trials", dest="n_trials", type=int)
    s = sub.add_parser("outlier-demo", parents=[common], help="sample-outlier rejection demo")
    s.add_argument("--n-trials", dest="n_trials", type=int)
    return p


def _fail(code, exc):
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        file_cfg = _load_config(args.config)
        base = Path(args.config).parent if args.config else None
        cfg = _merge(args.command, file_cfg, args, base)
        if args.command == "solve":
            files = cmd_solve(cfg, args.seed)
        elif args.command == "robust-sweep":
            files = cmd_robust_sweep(cfg, args.seed)
        elif args.command == "target-shift":
            files = cmd_target_shift(cfg, args.seed)
        else:
            files = cmd_outlier_demo(cfg, args.seed)
        _write_outputs(args.out_dir, files)
    except (OSError, UnicodeDecodeError) as exc:
        return _fail(EXIT_IO, exc)
    except DataFormatError as exc:
        return _fail(EXIT_FORMAT, exc)
    except DimensionError as exc:
        return _fail(EXIT_SHAPE, exc)
    except ConfigurationError as exc:
        return _fail(EXIT_CONFIG, exc)
    except DegenerateProblemError as exc:
        return _fail(EXIT_DEGENERATE, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
