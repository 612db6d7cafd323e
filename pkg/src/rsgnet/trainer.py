"""Randomized-stopping mini-batch SGD for the three network families.

Random streams
--------------
Every training call splits its generator into two children with
``rng.spawn(2)``: the first draws the stopping iteration ``R``, the second
drives the trajectory (initial weights, batch indices, masks, in that
order per iteration).  Consequently the iterate ``W^k`` produced for a
given generator does not depend on which ``R`` was drawn, which is what
lets :func:`estimate_expected_grad_norm` weight every iterate of a single
trajectory by the stopping pmf.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .data import Dataset
from .errors import ConfigurationError, DataError, DivergenceError, ParameterError
from .networks import (
    NetworkSpec,
    add_bias,
    check_keep_prob,
    encode,
    init_weights,
    loss_and_grad_1nn,
    loss_and_grad_da,
    loss_and_grad_lnn,
    predict_lnn,
    project_box,
    projected_gradient,
)
from .stopping import StoppingDistribution, build_stopping, sample_stopping

FAMILIES = ("1nn", "da", "lnn")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings for one RSG run.

    ``gamma`` is the base stepsize; iteration ``k`` uses ``gamma / k**rho``.
    ``layer_gammas`` optionally gives one base stepsize per layer (multi-layer
    training only).  ``stopping`` is ``"uniform"``, ``"stepsize-coupled"`` or
    a prebuilt :class:`StoppingDistribution`.
    """

    batch_size: int
    n_iter: int
    gamma: float
    rho: float = 0.0
    keep_prob: float = 1.0
    runs: int = 1
    seed: int = 0
    stopping: object = "uniform"
    layer_gammas: Optional[tuple] = None
    projection: str = "mapping"
    record_objective: bool = False

    def __post_init__(self):
        if self.batch_size < 1 or self.n_iter < 1 or self.runs < 1:
            raise ParameterError("batch_size, n_iter and runs must all be >= 1")
        if not 0 < self.gamma < math.inf:
            raise ParameterError(f"gamma must be positive and finite, got {self.gamma}")
        if self.rho < 0:
            raise ParameterError(f"rho must be >= 0, got {self.rho}")
        check_keep_prob(self.keep_prob)
        if self.layer_gammas is not None:
            object.__setattr__(self, "layer_gammas", tuple(float(g) for g in self.layer_gammas))
            if any(g <= 0 for g in self.layer_gammas):
                raise ParameterError("layer stepsizes must be positive")
        if isinstance(self.stopping, StoppingDistribution) and self.stopping.n != self.n_iter:
            raise ConfigurationError(
                f"stopping pmf covers {self.stopping.n} iterations, n_iter is {self.n_iter}")

    def stopping_distribution(self) -> StoppingDistribution:
        if isinstance(self.stopping, StoppingDistribution):
            return self.stopping
        return build_stopping(self.stopping, self.n_iter, self.gamma, self.rho)

    def gammas_for(self, n_layers):
        if self.layer_gammas is None:
            return (self.gamma,) * n_layers
        if len(self.layer_gammas) != n_layers:
            raise ConfigurationError(f"{len(self.layer_gammas)} layer stepsizes for {n_layers} layers")
        return self.layer_gammas


@dataclass
class RunResult:
    weights: list
    stopping_iter: int
    grad_norm_sq: float
    grad_norm_sq_clip: float = math.nan
    objective_trace: Optional[np.ndarray] = None
    initial_objective: float = math.nan


@dataclass(frozen=True)
class PretrainSpec:
    """Layer-wise DA pretraining: one config and box limit per hidden layer."""

    layer_configs: tuple
    box_limits: tuple
    target_alpha: float = math.inf
    target_delta: float = 0.1

    def __post_init__(self):
        if not self.target_alpha > 0:
            raise ParameterError(f"alpha must be positive, got {self.target_alpha}")
        if not 0 < self.target_delta < 1:
            raise ParameterError(f"delta_alpha must lie in (0, 1), got {self.target_delta}")
        if len(self.layer_configs) != len(self.box_limits):
            raise ConfigurationError("one box limit per pretrained layer is required")


@dataclass
class PretrainResult:
    weights: list
    achieved: list
    status: str
    runs_used: list = field(default_factory=list)


class Problem:
    """One training problem: data, evaluation set and update/measure rules."""

    def __init__(self, family, spec: NetworkSpec, config: TrainConfig, data: Dataset, eval_data=None):
        if family not in FAMILIES:
            raise ParameterError(f"unknown problem family {family!r}")
        if data is None or len(data) < 1:
            raise DataError("training data is empty")
        eval_data = data if eval_data is None else eval_data
        self.family, self.spec, self.config = family, spec, config
        self.gammas = config.gammas_for(spec.n_layers)
        self.box = spec.box_limits
        self.X = add_bias(data.inputs) if spec.bias else data.inputs
        self.Xe = add_bias(eval_data.inputs) if spec.bias else eval_data.inputs
        if family == "da":
            if spec.n_layers != 1:
                raise ConfigurationError("a denoising autoencoder has exactly one weight matrix")
            if self.box[0] is None:
                raise ConfigurationError("the denoising autoencoder requires a box limit w_m")
            self.Y = self.Ye = None
        else:
            if data.targets is None or eval_data.targets is None:
                raise DataError("supervised training needs targets")
            self.Y, self.Ye = data.targets, eval_data.targets
        if self.X.shape[1] != spec.layer_shapes[0][1]:
            raise ConfigurationError(
                f"data width {data.d_x} does not match network input width {spec.widths[0]}")
        if family == "1nn" and spec.n_layers != 1:
            raise ConfigurationError("single-layer training needs exactly one layer")

    def init(self, rng):
        return init_weights(self.spec, rng)

    def _masks(self, rng):
        zeta = self.config.keep_prob
        if zeta == 1.0:
            return None
        masks = []
        for l in range(self.spec.n_layers):
            d = self.spec.widths[l]
            z = (rng.random(d) < zeta).astype(np.float64)
            if l == 0 and self.spec.bias:
                z = np.append(z, 1.0)
            masks.append(z)
        return masks

    def step(self, params, k, rng):
        """Apply update ``k`` (1-based) and return the new parameter list."""
        cfg = self.config
        idx = rng.integers(0, self.X.shape[0], size=cfg.batch_size)
        X = self.X[idx]
        decay = float(k) ** cfg.rho
        if self.family == "da":
            Z = None
            if cfg.keep_prob < 1.0:
                Z = (rng.random(X.shape) < cfg.keep_prob).astype(np.float64)
            _, g = loss_and_grad_da(params[0], X, Z, box_limit=self.box[0])
            grads = [g]
        elif self.family == "1nn":
            Y = self.Y[idx]
            masks = self._masks(rng)
            if masks is not None:
                X = X * masks[0]
            _, g = loss_and_grad_1nn(params[0], X, Y)
            grads = [g]
        else:
            Y = self.Y[idx]
            _, grads, _ = loss_and_grad_lnn(params, X, Y, self._masks(rng))
        new = []
        for W, g, gamma, w_m in zip(params, grads, self.gammas, self.box):
            W = W - (gamma / decay) * g
            if w_m is not None:
                W = project_box(W, w_m)
            if not np.isfinite(W).all():
                raise DivergenceError(k)
            new.append(W)
        return new

    def eval_grads(self, params):
        if self.family == "da":
            loss, g = loss_and_grad_da(params[0], self.Xe, None, box_limit=self.box[0])
            return loss, [g]
        if self.family == "1nn":
            loss, g = loss_and_grad_1nn(params[0], self.Xe, self.Ye)
            return loss, [g]
        loss, grads, _ = loss_and_grad_lnn(params, self.Xe, self.Ye)
        return loss, grads

    def objective(self, params):
        return self.eval_grads(params)[0]

    def eval_norms(self, params):
        """Squared (projected) gradient norm on the evaluation set, both modes."""
        _, grads = self.eval_grads(params)
        mapping = clip = 0.0
        for W, g, gamma, w_m in zip(params, grads, self.gammas, self.box):
            pm = projected_gradient(W, g, gamma, w_m, "mapping")
            pc = projected_gradient(W, g, gamma, w_m, "clip")
            mapping += float(np.sum(pm * pm))
            clip += float(np.sum(pc * pc))
        if self.config.projection == "clip":
            return clip, mapping
        return mapping, clip


def _as_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _check_init(problem, init):
    shapes = problem.spec.layer_shapes
    params = [np.array(W, dtype=np.float64) for W in init]
    for l, (W, shape) in enumerate(zip(params, shapes)):
        if W.shape != shape:
            raise ConfigurationError(f"initial weights for layer {l + 1} have shape {W.shape}, expected {shape}")
    return params


def _start(problem, init, path_rng):
    if init is None:
        return problem.init(path_rng)
    params = _check_init(problem, init)
    missing = len(problem.spec.layer_shapes) - len(params)
    if missing < 0:
        raise ConfigurationError("more initial weight matrices than layers")
    if missing:
        # pretrained hidden layers only: draw the remaining layers fresh
        tail = NetworkSpec(problem.spec.widths[-missing - 1:], problem.spec.box_limits[-missing:],
                           problem.spec.keep_prob)
        params += init_weights(tail, path_rng)
    return params


def run_rsg(problem: Problem, rng, init=None) -> RunResult:
    """Sample ``R`` from the stopping pmf, perform ``R - 1`` updates, measure ``W^R``."""
    stop_rng, path_rng = _as_rng(rng).spawn(2)
    R = sample_stopping(problem.config.stopping_distribution(), stop_rng)
    params = _start(problem, init, path_rng)
    f1 = problem.objective(params)
    trace = [f1] if problem.config.record_objective else None
    for k in range(1, R):
        params = problem.step(params, k, path_rng)
        if trace is not None:
            trace.append(problem.objective(params))
    norm, norm_alt = problem.eval_norms(params)
    return RunResult(params, R, norm, norm_alt,
                     None if trace is None else np.asarray(trace), f1)


def train_single_rsg(spec, config, data, eval_data=None, rng=None, init=None):
    """Single-layer network; optional input dropout when ``keep_prob < 1``."""
    if spec.n_layers != 1:
        raise ConfigurationError("train_single_rsg needs a one-layer NetworkSpec")
    spec = replace(spec, keep_prob=config.keep_prob)
    return run_rsg(Problem("1nn", spec, config, data, eval_data), rng, init)


def da_spec(d_x, d_h, w_m, keep_prob=1.0):
    return NetworkSpec((d_x, d_h), (w_m,), keep_prob)


def train_da_rsg(spec, config, w_m, data, eval_data=None, rng=None, init=None):
    """Box-constrained denoising autoencoder; ``spec.widths == (d_x, d_h)``."""
    if w_m is None or not w_m > 0:
        raise ParameterError(f"w_m must be positive, got {w_m}")
    spec = NetworkSpec(spec.widths, (w_m,), config.keep_prob)
    return run_rsg(Problem("da", spec, config, data, eval_data), rng, init)


def train_multilayer_rsg(spec, config, data, eval_data=None, rng=None, init=None):
    """Multi-layer network with per-iteration dropout masks on every layer input.

    ``init`` may hold all ``L`` matrices or only the ``L - 1`` pretrained
    hidden layers, in which case the output layer is drawn at random.
    """
    spec = replace(spec, keep_prob=config.keep_prob)
    return run_rsg(Problem("lnn", spec, config, data, eval_data), rng, init)


def best_of_T(runs: Sequence[RunResult]):
    """Run with the smallest ``grad_norm_sq``; earliest index wins ties."""
    if not runs:
        raise ParameterError("best_of_T needs at least one run")
    best = 0
    for t, run in enumerate(runs):
        if run.grad_norm_sq < runs[best].grad_norm_sq:
            best = t
    return runs[best]


def child_generators(seed, n):
    """``n`` independent generators derived from ``seed``."""
    if isinstance(seed, np.random.Generator):
        return seed.spawn(n)
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _map(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def run_many(problem: Problem, seed, init=None, workers=None):
    """``config.runs`` independent RSG runs, returned in run order."""
    gens = child_generators(seed, problem.config.runs)
    return _map(lambda g: run_rsg(problem, g, init), gens, workers)


def solve(problem: Problem, seed, init=None, workers=None):
    """``(best run, all runs)`` over ``config.runs`` independent runs."""
    runs = run_many(problem, seed, init, workers)
    return best_of_T(runs), runs


def pretrain_layers(spec: NetworkSpec, pretrain: PretrainSpec, data: Dataset, rng=None):
    """Greedy layer-wise DA pretraining of the ``L - 1`` hidden layers.

    Layer ``l`` is trained on the deterministic representation produced by
    the already pretrained layers.  Each layer performs up to ``runs``
    independent DA runs, stopping as soon as the best gradient-mapping norm
    reaches ``target_alpha``.  Missing the target is reported through
    ``status == "warning"`` rather than raised.
    """
    L = spec.n_layers
    if L < 2:
        raise ConfigurationError("pretraining needs at least one hidden layer (L >= 2)")
    if len(pretrain.layer_configs) != L - 1:
        raise ConfigurationError(f"{len(pretrain.layer_configs)} pretraining configs for {L - 1} hidden layers")
    layer_gens = child_generators(_as_rng(rng), L - 1)
    H = data.inputs
    weights, achieved, used, status = [], [], [], "ok"
    for l in range(L - 1):
        cfg, w_m = pretrain.layer_configs[l], pretrain.box_limits[l]
        layer_spec = NetworkSpec((spec.widths[l], spec.widths[l + 1]), (w_m,), cfg.keep_prob)
        layer_data = Dataset(H, None, {"source": f"hidden representation {l}"})
        problem = Problem("da", layer_spec, cfg, layer_data)
        best = None
        gens = child_generators(layer_gens[l], cfg.runs)
        n = 0
        for g in gens:
            run = run_rsg(problem, g)
            n += 1
            if best is None or run.grad_norm_sq < best.grad_norm_sq:
                best = run
            if best.grad_norm_sq <= pretrain.target_alpha:
                break
        if best.grad_norm_sq > pretrain.target_alpha:
            status = "warning"
            warnings.warn(f"layer {l + 1} pretraining reached {best.grad_norm_sq:.4g} > alpha="
                          f"{pretrain.target_alpha:.4g}", RuntimeWarning, stacklevel=2)
        weights.append(best.weights[0])
        achieved.append(best.grad_norm_sq)
        used.append(n)
        H = encode(best.weights[0], H)
    return PretrainResult(weights, achieved, status, used)


@dataclass
class GradEstimate:
    estimate: float
    stderr: float
    values: np.ndarray
    estimate_alt: float = math.nan
    stderr_alt: float = math.nan
    curve: Optional[np.ndarray] = None
    initial_objective: float = math.nan

    def __iter__(self):
        yield self.estimate
        yield self.stderr


def _stderr(v):
    return float(np.std(v, ddof=1) / np.sqrt(len(v))) if len(v) > 1 else math.nan


def trajectory_norms(problem: Problem, rng, init=None, weights=None):
    """Squared gradient norms at every iterate ``k = 1..N`` of one trajectory.

    Iterates whose stopping weight is zero are not measured (their entry is
    0).  Returns ``(primary, alternative)`` arrays of length ``N``.
    """
    N = problem.config.n_iter
    pmf = problem.config.stopping_distribution().pmf if weights is None else weights
    _, path_rng = _as_rng(rng).spawn(2)
    params = _start(problem, init, path_rng)
    main, alt = np.zeros(N), np.zeros(N)
    for k in range(1, N + 1):
        if pmf[k - 1] > 0:
            main[k - 1], alt[k - 1] = problem.eval_norms(params)
        if k < N:
            params = problem.step(params, k, path_rng)
    return main, alt


def estimate_expected_grad_norm(problem: Problem, M, seed=None, init=None, workers=None):
    """Estimate ``E_{R, eta} ||grad f(W^R)||^2`` from ``M`` trajectories.

    The expectation over ``R`` is exact (pmf-weighted sum over all iterates
    of each trajectory); the expectation over the data draws is Monte Carlo.
    When ``init`` is omitted one initial point is drawn from ``seed`` and
    shared by all trajectories, so ``D_f`` refers to a single ``W^1``.
    """
    if M < 2:
        raise ParameterError(f"need at least two trajectories, got {M}")
    master = np.random.SeedSequence(seed)
    init_seq, traj_seq = master.spawn(2)
    if init is None:
        init = problem.init(np.random.default_rng(init_seq))
    else:
        init = _start(problem, init, np.random.default_rng(init_seq))
    pmf = problem.config.stopping_distribution().pmf
    gens = [np.random.default_rng(s) for s in traj_seq.spawn(M)]
    results = _map(lambda g: trajectory_norms(problem, g, init, pmf), gens, workers)
    main = np.array([r[0] for r in results])
    alt = np.array([r[1] for r in results])
    vals, vals_alt = main @ pmf, alt @ pmf
    return GradEstimate(float(vals.mean()), _stderr(vals), vals,
                        float(vals_alt.mean()), _stderr(vals_alt),
                        main.mean(axis=0), problem.objective(init))
