"""Experiment harness: trend sweeps, bound comparisons and report files.

Every experiment produces a list of :class:`SweepRecord` rows written to
``results.csv`` (fixed column order) and a ``summary.json`` that echoes the
config, repeats the rows and adds verdicts.  Apart from the ``seconds``
column, outputs are a pure function of the config and seed.
"""
from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from . import bounds
from .data import DataMoments, Dataset, estimate_moments, load_dataset, synthesize_dataset
from .errors import ParameterError, ValidationError
from .networks import NetworkSpec, encode, init_weights
from .trainer import (
    PretrainSpec,
    Problem,
    TrainConfig,
    best_of_T,
    estimate_expected_grad_norm,
    pretrain_layers,
    run_many,
)

COLUMNS = ("kind", "index", "params", "empirical", "stderr", "empirical_alt", "stderr_alt",
           "bound", "constants", "violated", "seconds", "seed")
JSON_COLUMNS = ("params", "constants")
FLOAT_COLUMNS = ("empirical", "stderr", "empirical_alt", "stderr_alt", "bound", "seconds")
INT_COLUMNS = ("index", "seed")
SWEEP_KINDS = ("size", "wm-zeta", "depth", "dropout", "pretrain-vs-dropout")
MODES = ("train", "bounds", "plan", "sweep", "datastats")
DESK_CAPS = {"width": 64, "n_iter": 2000, "trajectories": 50}


@dataclass
class SweepRecord:
    kind: str
    index: int
    params: dict
    empirical: float = math.nan
    stderr: float = math.nan
    empirical_alt: float = math.nan
    stderr_alt: float = math.nan
    bound: float = math.nan
    constants: dict = field(default_factory=dict)
    violated: str = ""
    seconds: float = 0.0
    seed: int = 0

    def row(self):
        out = []
        for col in COLUMNS:
            v = getattr(self, col)
            if col in JSON_COLUMNS:
                v = json.dumps(v, sort_keys=True)
            elif col in FLOAT_COLUMNS:
                v = repr(float(v))
            out.append(v)
        return out

    def to_json(self):
        return {c: getattr(self, c) for c in COLUMNS}


def write_records_csv(path, records):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in records:
            w.writerow(r.row())


def read_records_csv(path):
    """Parse ``results.csv`` back into typed dictionaries."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rec = {}
            for col in COLUMNS:
                v = row[col]
                if col in JSON_COLUMNS:
                    v = json.loads(v)
                elif col in FLOAT_COLUMNS:
                    v = float(v)
                elif col in INT_COLUMNS:
                    v = int(v)
                rec[col] = v
            out.append(rec)
    return out


# ------------------------------------------------------------ verdicts


def compare_bound(records):
    """Flag records whose empirical mean minus two standard errors exceeds the bound.

    Records with a non-finite bound (failed preconditions) or no empirical
    value are not checked and are listed under ``excluded``.
    """
    checked, violations, excluded = [], [], []
    for r in records:
        emp, se, b = _get(r, "empirical"), _get(r, "stderr"), _get(r, "bound")
        if not math.isfinite(b) or not math.isfinite(emp):
            excluded.append(_get(r, "index"))
            continue
        se = se if math.isfinite(se) else 0.0
        checked.append(_get(r, "index"))
        if emp - 2.0 * se > b:
            violations.append(_get(r, "index"))
    return {"checked": len(checked), "violation_count": len(violations),
            "violations": violations, "excluded": excluded}


def _get(r, key):
    return r[key] if isinstance(r, dict) else getattr(r, key)


def trend_verdict(x, y):
    """Spearman rank correlation of a swept parameter against the estimate."""
    x, y = list(x), list(y)
    if len(x) < 3 or len(set(x)) < 2:
        return {"verdict": "insufficient points", "points": len(x)}
    rho = float(spearmanr(x, y).statistic)
    if not math.isfinite(rho):
        return {"verdict": "undefined", "points": len(x)}
    verdict = "increasing" if rho > 0 else "decreasing" if rho < 0 else "flat"
    return {"verdict": verdict, "spearman": rho, "points": len(x)}


# ------------------------------------------------------------ data


def make_data(cfg, seed, d_x=None, d_y=None):
    """Build ``(train, eval)`` datasets from a data config section."""
    cfg = dict(cfg or {})
    source = cfg.get("source", "synthetic")
    if source == "synthetic":
        d_x = d_x if d_x is not None else cfg.get("d_x", 10)
        d_y = d_y if d_y is not None else cfg.get("d_y", 0)
        S, S_eval = cfg.get("S", 1000), cfg.get("eval_S", 0)
        target = DataMoments(cfg.get("mu_x", 0.5), cfg.get("tau_x", 0.3))
        full = synthesize_dataset(d_x, d_y, S + S_eval, target, np.random.default_rng([seed, 7919]))
        return full.split(S) if S_eval else (full, full)
    ds = load_dataset(cfg["path"], source, cfg.get("normalization", "none"),
                      cfg.get("label_column"), cfg.get("label_path"))
    if cfg.get("limit"):
        ds = Dataset(ds.inputs[:cfg["limit"]], None if ds.targets is None else ds.targets[:cfg["limit"]],
                     ds.provenance)
    n_eval = cfg.get("eval_S", 0)
    return ds.split(len(ds) - n_eval) if n_eval else (ds, ds)


# ------------------------------------------------------------ sweeps


def grid_points(grid):
    """Expand ``{"points": [...]}`` or a dict of axes (cartesian product)."""
    if not grid:
        return []
    if "points" in grid:
        return [dict(p) for p in grid["points"]]
    names = list(grid)
    axes = [list(grid[n]) for n in names]
    if any(len(a) == 0 for a in axes):
        return []
    return [dict(zip(names, vals)) for vals in np.array(np.meshgrid(*axes, indexing="ij"),
                                                         dtype=object).reshape(len(names), -1).T]


def _py(v):
    return v.item() if isinstance(v, np.generic) else v


def _da_point(params, base, seed, idx):
    d_x, d_h = int(params.get("d_x", base["d_x"])), int(params.get("d_h", base["d_h"]))
    w_m = float(params.get("w_m", base["w_m"]))
    zeta = float(params.get("zeta", base["zeta"]))
    train, ev = make_data(base.get("data"), seed, d_x=d_x, d_y=0)
    spec = NetworkSpec((d_x, d_h), (w_m,), zeta)
    cfg = TrainConfig(base["B"], base["n_iter"], base["gamma"], keep_prob=zeta)
    problem = Problem("da", spec, cfg, train, ev)
    init = init_weights(spec, np.random.default_rng([seed, 104729]))
    est = estimate_expected_grad_norm(problem, base["trajectories"], [seed, idx], init)
    U = bounds.estimate_da_lipschitz(ev.inputs, d_h, w_m, zeta, base["lipschitz_pairs"],
                                     np.random.default_rng([seed, idx, 1]))
    moments = estimate_moments(ev).moments
    rep = bounds.bound_da(d_x, d_h, zeta, w_m, moments, est.initial_objective, base["n_iter"],
                          base["gamma"], base["B"], U.value, U_source=f"estimated ({U.pairs} pairs)")
    return est, rep


def _alpha_at(weights, X, box_limits, gamma):
    """Largest DA gradient-mapping norm^2 over hidden layers for given weights."""
    from .networks import gradient_mapping, loss_and_grad_da
    alpha, H = 0.0, X
    for W, w_m in zip(weights, box_limits):
        _, g = loss_and_grad_da(W, H, None, box_limit=w_m)
        pg = gradient_mapping(W, g, gamma, w_m)
        alpha = max(alpha, float(np.sum(pg * pg)))
        H = encode(W, H)
    return alpha


def _lnn_point(params, base, seed, idx):
    widths = tuple(int(w) for w in params.get("widths", base["widths"]))
    zeta = float(params.get("zeta", base["zeta"]))
    L = len(widths) - 1
    w_hidden = float(params.get("w_m", base["w_m"]))
    boxes = (w_hidden,) * (L - 1) + (None,)
    train, ev = make_data(base.get("data"), seed, d_x=widths[0], d_y=widths[-1])
    spec = NetworkSpec(widths, boxes, zeta)
    gamma = base["gamma"]
    cfg = TrainConfig(base["B"], base["n_iter"], gamma, keep_prob=zeta)
    init_rng = np.random.default_rng([seed, 104729, L])
    pre_iters = int(params.get("pretrain_iters", base.get("pretrain_iters", 0)))
    extra = {}
    if pre_iters > 0 and L >= 2:
        pcfg = TrainConfig(base["B"], pre_iters, base.get("pretrain_gamma", gamma),
                           keep_prob=base.get("pretrain_keep_prob", 0.5), runs=base.get("pretrain_runs", 1))
        pspec = PretrainSpec((pcfg,) * (L - 1), boxes[:-1], math.inf)
        pre = pretrain_layers(spec, pspec, train, init_rng)
        init = pre.weights + init_weights(NetworkSpec(widths[-2:]), init_rng)
        alpha = max(pre.achieved)
        extra["pretrain_achieved"] = pre.achieved
    else:
        init = init_weights(spec, init_rng)
        alpha = _alpha_at(init[:-1], train.inputs, boxes[:-1], gamma)
    problem = Problem("lnn", spec, cfg, train, ev)
    est = estimate_expected_grad_norm(problem, base["trajectories"], [seed, idx], init)
    rep = bounds.bound_pretrain_dropout(widths, gamma, boxes[:-1], alpha, est.initial_objective,
                                        base["n_iter"], base["B"], zeta)
    rep.constants["alpha"] = alpha
    rep.extra.update(extra)
    return est, rep


_PARAM_OF = {
    "size": lambda p, b: p.get("d_x", b["d_x"]) * p.get("d_h", b["d_h"]),
    "wm-zeta": lambda p, b: p.get("w_m", b["w_m"]),
    "depth": lambda p, b: len(p.get("widths", b["widths"])) - 1,
    "dropout": lambda p, b: p.get("zeta", b["zeta"]),
    "pretrain-vs-dropout": lambda p, b: p.get("pretrain_iters", b.get("pretrain_iters", 0)),
}

SWEEP_BASE = {
    "d_x": 32, "d_h": 32, "w_m": 0.05, "zeta": 0.5, "widths": [20, 10, 10, 5],
    "B": 20, "n_iter": 400, "gamma": 0.1, "trajectories": 10, "lipschitz_pairs": 100,
    "data": {"source": "synthetic", "S": 1000, "eval_S": 500, "mu_x": 0.5, "tau_x": 0.3},
}


def check_desk_caps(kind, points, base):
    problems = []
    widths = []
    for p in points:
        if kind in ("size", "wm-zeta"):
            widths += [p.get("d_x", base["d_x"]), p.get("d_h", base["d_h"])]
        else:
            widths += list(p.get("widths", base["widths"]))
    if widths and max(widths) > DESK_CAPS["width"]:
        problems.append(f"width {max(widths)} exceeds desk cap {DESK_CAPS['width']}")
    if base["n_iter"] > DESK_CAPS["n_iter"]:
        problems.append(f"n_iter {base['n_iter']} exceeds desk cap {DESK_CAPS['n_iter']}")
    if base["trajectories"] > DESK_CAPS["trajectories"]:
        problems.append(f"trajectories {base['trajectories']} exceed desk cap {DESK_CAPS['trajectories']}")
    return problems


def sweep_figure_trends(kind, grid, base=None, seed=0, workers=None, budget_seconds=None):
    """Run one trend sweep; returns ``(records, summary)``.

    ``kind`` picks the family: ``size`` and ``wm-zeta`` train box-constrained
    DAs, ``depth``, ``dropout`` and ``pretrain-vs-dropout`` train multi-layer
    nets.  Point ``i`` is seeded by ``(seed, i)``; data and initial weights
    are shared across points with equal shapes.  Points not started within
    ``budget_seconds`` are skipped and the summary is flagged ``partial``.
    """
    if kind not in SWEEP_KINDS:
        raise ParameterError(f"unknown sweep kind {kind!r}; choose from {SWEEP_KINDS}")
    b = dict(SWEEP_BASE)
    b.update(base or {})
    points = grid_points(grid)
    over = check_desk_caps(kind, points, b)
    if over:
        raise ValidationError(over)
    runner = _da_point if kind in ("size", "wm-zeta") else _lnn_point
    start = time.perf_counter()

    def one(item):
        i, p = item
        if budget_seconds is not None and time.perf_counter() - start > budget_seconds:
            return None
        t0 = time.perf_counter()
        est, rep = runner(p, b, seed, i)
        return SweepRecord(kind, i, {k: _py(v) for k, v in p.items()}, est.estimate, est.stderr,
                           est.estimate_alt, est.stderr_alt, rep.bound_value,
                           bounds._jsonable(dict(rep.constants, **rep.extra)),
                           "; ".join(rep.violated_preconditions), time.perf_counter() - t0, seed)

    items = list(enumerate(points))
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(one, items))
    else:
        done = [one(it) for it in items]
    records = [r for r in done if r is not None]
    xs = [_PARAM_OF[kind](r.params, b) for r in records]
    summary = {
        "kind": kind,
        "trend": trend_verdict(xs, [r.empirical for r in records]),
        "trend_alt": trend_verdict(xs, [r.empirical_alt for r in records]),
        "bound_check": compare_bound(records),
        "partial": len(records) < len(points),
        "grids": "default desk-scale grids chosen for this package" if grid is None else "user supplied",
    }
    return records, summary


# ------------------------------------------------------------ config / modes


def load_default_config(name):
    """Read a shipped config (e.g. ``"sweep_size"``) from the package data."""
    text = resources.files("rsgnet").joinpath("configs", f"{name}.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate_config(cfg):
    problems = []
    if not isinstance(cfg, dict):
        raise ValidationError(["config must be a JSON object"])
    mode = cfg.get("mode")
    if mode not in MODES:
        problems.append(f"mode must be one of {MODES}, got {mode!r}")
    if "seed" in cfg and not isinstance(cfg["seed"], int):
        problems.append("seed must be an integer")
    if mode == "train":
        net = cfg.get("network", {})
        if net.get("family") not in ("1nn", "da", "lnn"):
            problems.append("network.family must be 1nn, da or lnn")
        if not net.get("widths") or len(net.get("widths", [])) < 2:
            problems.append("network.widths needs at least two entries")
        tr = cfg.get("training", {})
        for key in ("batch_size", "n_iter", "gamma"):
            if key not in tr:
                problems.append(f"training.{key} is required")
        if net.get("family") == "da" and not (net.get("box_limits") or [None])[0]:
            problems.append("da networks need network.box_limits[0]")
    elif mode == "bounds":
        formulas = cfg.get("bounds", {}).get("formulas", [])
        if not formulas:
            problems.append("bounds.formulas must list at least one formula")
        for f in formulas:
            if f not in bounds.FORMULAS:
                problems.append(f"unknown formula {f!r}")
    elif mode == "plan":
        pl = cfg.get("plan", {})
        if pl.get("formula") not in bounds.FORMULAS:
            problems.append(f"plan.formula must be one of {bounds.FORMULAS}")
        if not pl.get("free"):
            problems.append("plan.free must name at least one variable")
    elif mode == "sweep":
        sw = cfg.get("sweep", {})
        if sw.get("kind") not in SWEEP_KINDS:
            problems.append(f"sweep.kind must be one of {SWEEP_KINDS}")
        grid = sw.get("grid")
        if grid is not None and "points" not in grid:
            known = set(SWEEP_BASE) | {"pretrain_iters"}
            for axis in grid:
                if axis not in known:
                    problems.append(f"sweep axis {axis!r} does not name a sweep parameter")
    if problems:
        raise ValidationError(problems)
    return cfg


def _network(cfg):
    net = cfg["network"]
    return NetworkSpec(tuple(net["widths"]), tuple(net["box_limits"]) if net.get("box_limits") else None,
                       net.get("keep_prob", 1.0), net.get("bias", False))


def _train_config(tr, keep_prob, gamma):
    return TrainConfig(tr["batch_size"], tr["n_iter"], gamma, rho=tr.get("rho", 0.0),
                       keep_prob=keep_prob, runs=tr.get("runs", 1), seed=tr.get("seed", 0),
                       stopping=tr.get("stopping", "uniform"), projection=tr.get("projection", "mapping"))


def _mode_train(cfg, seed, workers):
    spec = _network(cfg)
    family = cfg["network"]["family"]
    tr = cfg["training"]
    train, ev = make_data(cfg.get("data"), seed, d_x=spec.widths[0],
                          d_y=0 if family == "da" else spec.widths[-1])
    init_rng = np.random.default_rng([seed, 104729])
    init, alpha, pre_info = None, 0.0, {}
    if family == "lnn" and cfg.get("pretrain"):
        pc = cfg["pretrain"]
        pcfg = TrainConfig(pc.get("batch_size", tr["batch_size"]), pc["n_iter"], pc["gamma"],
                           keep_prob=pc.get("keep_prob", 0.5), runs=pc.get("runs", 1))
        boxes = tuple(pc.get("box_limits") or spec.box_limits[:-1])
        pre = pretrain_layers(spec, PretrainSpec((pcfg,) * (spec.n_layers - 1), boxes,
                                                 pc.get("alpha", math.inf), pc.get("delta", 0.1)),
                              train, init_rng)
        init = pre.weights + init_weights(NetworkSpec(spec.widths[-2:]), init_rng)
        alpha = max(pre.achieved)
        pre_info = {"achieved": pre.achieved, "status": pre.status, "runs_used": pre.runs_used}
    if init is None:
        init = init_weights(spec, init_rng)
    gamma = tr["gamma"]
    probe = Problem(family, spec, _train_config(tr, spec.keep_prob, 1.0), train, ev)
    f1 = probe.objective(init)
    if gamma == "optimal":
        if family != "1nn":
            raise ValidationError(["gamma='optimal' is only defined for 1nn training"])
        gamma = bounds.optimal_gamma_1nn(tr["batch_size"], f1, spec.widths[0], spec.widths[-1], tr["n_iter"])
    config = _train_config(tr, spec.keep_prob, float(gamma))
    problem = Problem(family, spec, config, train, ev)
    if family == "lnn" and not cfg.get("pretrain") and spec.n_layers >= 2:
        alpha = _alpha_at(init[:-1], train.inputs, spec.box_limits[:-1], gamma)
    rep = _train_bound(family, spec, config, ev, f1, alpha, seed, tr.get("lipschitz_pairs", 200))
    t0 = time.perf_counter()
    runs = run_many(problem, [seed, 1], init, workers)
    per_run = (time.perf_counter() - t0) / len(runs)
    consts = bounds._jsonable(dict(rep.constants, **rep.extra))
    records = [SweepRecord("train", t, {"run": t, "R": r.stopping_iter}, r.grad_norm_sq, math.nan,
                           r.grad_norm_sq_clip, math.nan, rep.bound_value, consts,
                           "; ".join(rep.violated_preconditions), per_run, seed)
               for t, r in enumerate(runs)]
    M = tr.get("trajectories", 0)
    if M:
        t0 = time.perf_counter()
        est = estimate_expected_grad_norm(problem, M, [seed, 2], init, workers)
        records.append(SweepRecord("expected", len(records), {"trajectories": M}, est.estimate, est.stderr,
                                   est.estimate_alt, est.stderr_alt, rep.bound_value, consts,
                                   "; ".join(rep.violated_preconditions), time.perf_counter() - t0, seed))
    best = best_of_T(runs)
    summary = {"best_run": runs.index(best), "best_grad_norm_sq": best.grad_norm_sq,
               "stopping_iters": [r.stopping_iter for r in runs], "gamma": gamma,
               "initial_objective": f1, "bound": rep.to_dict(),
               "bound_check": compare_bound([r for r in records if r.kind == "expected"])}
    if pre_info:
        summary["pretrain"] = pre_info
    return records, summary


def _train_bound(family, spec, config, ev, f1, alpha, seed, pairs=200):
    if family == "1nn":
        d_x, d_y = spec.widths
        if config.rho > 0:
            return bounds.bound_1nn_decreasing(d_x, d_y, f1, config.n_iter, config.gamma, config.rho,
                                               config.batch_size)
        return bounds.bound_1nn_const(d_x, d_y, f1, config.n_iter, config.gamma, config.batch_size)
    if family == "da":
        d_x, d_h = spec.widths
        w_m = spec.box_limits[0]
        U = bounds.estimate_da_lipschitz(ev.inputs, d_h, w_m, config.keep_prob, pairs,
                                         np.random.default_rng([seed, 3]))
        return bounds.bound_da(d_x, d_h, config.keep_prob, w_m, estimate_moments(ev).moments, f1,
                               config.n_iter, config.gamma, config.batch_size, U.value,
                               U_source=f"estimated ({U.pairs} pairs)")
    if spec.n_layers < 2:
        return bounds.bound_1nn_const(spec.widths[0], spec.widths[1], f1, config.n_iter, config.gamma,
                                      config.batch_size)
    rep = bounds.bound_pretrain_dropout(spec.widths, config.gamma, spec.box_limits[:-1], alpha, f1,
                                        config.n_iter, config.batch_size, config.keep_prob)
    rep.constants["alpha"] = alpha
    return rep


def _mode_bounds(cfg, seed):
    b = cfg["bounds"]
    inp = bounds.BoundInputs.from_dict(b.get("inputs", {}))
    records, reports = [], {}
    for i, formula in enumerate(b["formulas"]):
        rep = bounds.evaluate(formula, inp)
        reports[formula] = rep.to_dict()
        params = {"formula": formula}
        for key in ("optimal_gamma", "n_iterations", "sample_size"):
            if getattr(rep, key) is not None:
                params[key] = getattr(rep, key)
        records.append(SweepRecord("bounds", i, params, bound=rep.bound_value,
                                   constants=bounds._jsonable(dict(rep.constants, **rep.extra)),
                                   violated="; ".join(rep.violated_preconditions), seed=seed))
    summary = {"reports": reports}
    for rep in reports.values():
        for key in ("n_iterations", "sample_size"):
            if rep.get(key) is not None:
                summary[key] = rep[key]
    return records, summary


def _mode_plan(cfg, seed):
    pl = cfg["plan"]
    inp = None
    if pl.get("inputs"):
        base = asdict(bounds.DEFAULT_PLAN_INPUTS.get(pl["formula"], bounds.BoundInputs()))
        base.update(pl["inputs"])
        inp = bounds.BoundInputs.from_dict(base)
    target = pl.get("target", math.inf)
    target = math.inf if target is None else float(target)
    res = bounds.plan_hyperparameters(pl["formula"], pl["free"], target, inp, pl.get("grids"))
    records = [SweepRecord("plan", i, {k: _py(v) for k, v in row.items() if k not in ("bound", "violated")},
                           bound=row["bound"], violated=row["violated"], seed=seed)
               for i, row in enumerate(res.table)]
    summary = {"status": res.status, "recommended": {k: _py(v) for k, v in res.recommended.items()},
               "predicted_bound": res.bound}
    return records, summary


def _mode_datastats(cfg, seed):
    train, _ = make_data(cfg.get("data"), seed)
    rep = estimate_moments(train)
    records = [SweepRecord("datastats", j, {"dim": j}, empirical=float(m), seed=seed)
               for j, m in enumerate(rep.dim_means)]
    summary = {"mu_x": rep.mu_x, "tau_x": rep.tau_x, "S": len(train), "d_x": train.d_x,
               "provenance": train.provenance}
    return records, summary


def _mode_sweep(cfg, seed, workers):
    sw = cfg["sweep"]
    base = {k: v for k, v in sw.items() if k not in ("kind", "grid", "budget_seconds")}
    if cfg.get("data"):
        base["data"] = cfg["data"]
    return sweep_figure_trends(sw["kind"], sw.get("grid"), base, seed, workers, sw.get("budget_seconds"))


def _plain(obj):
    """Convert numpy scalars and tuples to JSON-native values (floats stay floats)."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def run_experiment(cfg, out_dir, seed=None, workers=None):
    """Run one config and write ``results.csv`` and ``summary.json`` to ``out_dir``."""
    validate_config(cfg)
    seed = cfg.get("seed", 0) if seed is None else int(seed)
    mode = cfg["mode"]
    if mode == "train":
        records, summary = _mode_train(cfg, seed, workers)
    elif mode == "bounds":
        records, summary = _mode_bounds(cfg, seed)
    elif mode == "plan":
        records, summary = _mode_plan(cfg, seed)
    elif mode == "sweep":
        records, summary = _mode_sweep(cfg, seed, workers)
    else:
        records, summary = _mode_datastats(cfg, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_records_csv(out / "results.csv", records)
    doc = {"mode": mode, "seed": seed, "config": cfg, "summary": summary,
           "records": [r.to_json() for r in records]}
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(_plain(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return doc
