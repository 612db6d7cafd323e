"""Closed-form convergence bounds and complexity formulas for RSG training.

All bound functions are pure.  When a stepsize precondition fails they do
not raise; the returned :class:`BoundReport` carries ``bound_value = inf``
and lists the failure in ``violated_preconditions`` so that parameter
sweeps can chart infeasible regions.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .data import DataMoments
from .errors import ParameterError
from .networks import loss_and_grad_da, project_box

COUPLING = 13.0 / 16.0
VAR_1NN = 13.0 / 256.0


@dataclass
class BoundReport:
    formula: str
    bound_value: float
    constants: dict = field(default_factory=dict)
    optimal_gamma: Optional[float] = None
    n_iterations: Optional[int] = None
    sample_size: Optional[int] = None
    violated_preconditions: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def feasible(self):
        return not self.violated_preconditions

    def to_dict(self):
        return _jsonable(asdict(self))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def harmonic(N, theta):
    """Generalized harmonic number ``sum_{i=1}^N i**-theta``."""
    N = int(N)
    if N < 1:
        raise ParameterError(f"N must be >= 1, got {N}")
    terms = np.arange(1, N + 1, dtype=np.float64) ** (-float(theta))
    return math.fsum(np.sort(terms))


def const_e_s(d_x, d_y):
    return 13.0 * d_x * d_y / 256.0


def optimal_gamma_1nn(B, f_W1, d_x, d_y, N):
    """Stepsize balancing the two terms of the constant-step 1-NN bound."""
    if min(B, f_W1, d_x, d_y, N) <= 0:
        raise ParameterError("all inputs to the optimal stepsize must be positive")
    return math.sqrt(B * f_W1 / (const_e_s(d_x, d_y) * N))


def exact_minimizer_1nn(B, D_f, d_x, d_y, N):
    """Exact argmin over gamma of the constant-step 1-NN bound.

    Setting the derivative of ``(A/g + C g) / (1 - a g)`` to zero gives
    ``C g^2 + 2 a A g - A = 0``.
    """
    A, C, a = D_f / N, const_e_s(d_x, d_y) / B, COUPLING
    if A <= 0:
        return 0.0
    return (-a * A + math.sqrt(a * a * A * A + A * C)) / C


def bound_1nn_const(d_x, d_y, D_f, N, gamma, B):
    e_s = const_e_s(d_x, d_y)
    e_g = 1.0 - COUPLING * gamma
    rep = BoundReport("1nn-const", math.inf, {"e_s": e_s, "e_s_gamma": e_g})
    if D_f > 0:
        rep.optimal_gamma = optimal_gamma_1nn(B, D_f, d_x, d_y, N)
        rep.extra["exact_minimizer"] = exact_minimizer_1nn(B, D_f, d_x, d_y, N)
    if not gamma > 0:
        rep.violated_preconditions.append(f"gamma={gamma} must be positive")
    if e_g <= 0:
        rep.violated_preconditions.append(f"gamma={gamma} >= 16/13 makes e_s_gamma <= 0")
    if rep.feasible:
        rep.bound_value = (D_f / (N * gamma) + e_s * gamma / B) / e_g
    return rep


def bound_1nn_decreasing(d_x, d_y, D_f, N, gamma, rho, B):
    e_s = const_e_s(d_x, d_y)
    rep = BoundReport("1nn-decreasing", math.inf, {"e_s": e_s})
    # gamma / k**rho is largest at k = 1
    if not 0 < gamma < 1.0 / COUPLING:
        rep.violated_preconditions.append(f"gamma/k^rho < 16/13 fails at k=1 (gamma={gamma})")
        return rep
    h1, h2 = harmonic(N, rho), harmonic(N, 2 * rho)
    rep.constants.update(H_rho=h1, H_2rho=h2)
    rep.bound_value = 16.0 / (3.0 * h1) * (D_f / gamma + e_s * gamma * h2 / B)
    return rep


def iteration_complexity_1nn(epsilon, delta, T, B, f_W1, d_x, d_y):
    """Iterations for an (epsilon, delta)-solution from T runs: ``(N, delta_bar)``."""
    if not epsilon > 0 or not 0 < delta < 1 or T < 1:
        raise ParameterError("need epsilon > 0, 0 < delta < 1 and T >= 1")
    e_s = const_e_s(d_x, d_y)
    delta_bar = 13.0 * B * epsilon * delta ** (1.0 / T) / (32.0 * e_s)
    n = 4.0 * f_W1 * e_s * (1.0 + delta_bar) ** 2 / (B * delta ** (2.0 / T) * epsilon ** 2)
    return math.ceil(n), delta_bar


def sample_size_from_iterations(N, B, C):
    """Sample size ``S`` with ``S * C ~ B * N`` for ``C`` epochs."""
    if C < 1:
        raise ParameterError(f"epochs must be >= 1, got {C}")
    return math.ceil(B * N / C)


def complexity_1nn(epsilon, delta, T, B, f_W1, d_x, d_y, epochs=None):
    n, delta_bar = iteration_complexity_1nn(epsilon, delta, T, B, f_W1, d_x, d_y)
    rep = BoundReport("1nn-complexity", epsilon, {"e_s": const_e_s(d_x, d_y), "delta_bar": delta_bar},
                      optimal_gamma=optimal_gamma_1nn(B, f_W1, d_x, d_y, n), n_iterations=n)
    if epochs is not None:
        rep.sample_size = sample_size_from_iterations(n, B, epochs)
    return rep


def const_e_da(d_x, d_h, zeta, w_m, moments: DataMoments):
    if not 0 < zeta <= 1:
        raise ParameterError(f"zeta must lie in (0, 1], got {zeta}")
    if not w_m > 0:
        raise ParameterError(f"w_m must be positive, got {w_m}")
    s = zeta * d_x * w_m
    bracket = 1.0 + s / 4.0 * moments.mu_x + (5.0 * zeta / 16.0 - zeta ** 2 / 4.0) * s * s * moments.tau_x
    return d_x * d_h / 16.0 * bracket


def _da_value(D_f, N, gamma, B, U_da, e_da):
    e_g = 1.0 - U_da * gamma / 2.0
    return D_f / (N * gamma * e_g) + e_da / B * (1.0 + 1.0 / e_g)


def bound_da(d_x, d_h, zeta, w_m, moments, D_f, N, gamma, B, U_da, U_source="supplied"):
    e_da = const_e_da(d_x, d_h, zeta, w_m, moments)
    e_g = 1.0 - U_da * gamma / 2.0
    rep = BoundReport("da", math.inf, {"e_da": e_da, "e_da_gamma": e_g, "U_da": U_da},
                      extra={"U_da_source": U_source})
    if D_f > 0 and U_da > 0:
        rep.optimal_gamma = math.sqrt(2.0 * B * D_f / (U_da * e_da * N))
        cap = 2.0 / U_da
        res = minimize_scalar(lambda t: _da_value(D_f, N, cap * math.exp(t), B, U_da, e_da),
                              bounds=(math.log(1e-12), math.log(1 - 1e-12)), method="bounded",
                              options={"xatol": 1e-12})
        rep.extra["exact_minimizer"] = cap * math.exp(res.x)
    if not gamma > 0:
        rep.violated_preconditions.append(f"gamma={gamma} must be positive")
    if e_g <= 0:
        rep.violated_preconditions.append(f"gamma={gamma} >= 2/U_da={2.0 / U_da:.6g}")
    if rep.feasible:
        rep.bound_value = _da_value(D_f, N, gamma, B, U_da, e_da)
    return rep


def _per_layer(value, L, name):
    if np.ndim(value) == 0:
        return [float(value)] * L
    value = [float(v) for v in value]
    if len(value) != L:
        raise ParameterError(f"{name} needs {L} entries, got {len(value)}")
    return value


def _hidden_boxes(w_ms, L):
    if np.ndim(w_ms) == 0:
        return [float(w_ms)] * (L - 1)
    w_ms = list(w_ms)
    if len(w_ms) == L:
        w_ms = w_ms[:-1]
    if len(w_ms) != L - 1 or any(w is None for w in w_ms):
        raise ParameterError(f"need a box limit for each of the {L - 1} hidden layers")
    return [float(w) for w in w_ms]


def const_e_m(widths, gammas, w_ms):
    """Per-layer constants ``e^m_1 .. e^m_L`` for an L-layer network (L >= 2)."""
    d = [int(w) for w in widths]
    L = len(d) - 1
    if L < 2:
        raise ParameterError("const_e_m needs L >= 2; use const_e_s for one layer")
    g = _per_layer(gammas, L, "gammas")
    w = _hidden_boxes(w_ms, L)
    e = [g[l - 1] / 4.0 * d[l - 1] * d[l] * d[l + 1] * w[l - 1] for l in range(1, L)]
    e.append(13.0 * d[L - 1] * d[L] * g[L - 1] ** 2 / 256.0)
    return e


def _multilayer_core(widths, gammas, w_ms, alpha, formula):
    d = [int(x) for x in widths]
    L = len(d) - 1
    g = _per_layer(gammas, L, "gammas")
    w = _hidden_boxes(w_ms, L)
    e = const_e_m(d, g, w)
    terms = [g[L - 1] - COUPLING * g[L - 1] ** 2]
    rep = BoundReport(formula, math.inf)
    if not 0 < g[L - 1] < 1.0 / COUPLING:
        rep.violated_preconditions.append(f"layer {L}: gamma={g[L - 1]} must lie in (0, 16/13)")
    for l in range(1, L):
        c = alpha * d[l + 1] * w[l - 1] / 20.0
        terms.append(g[l - 1] - c * g[l - 1] ** 2)
        if not g[l - 1] > 0 or (c > 0 and g[l - 1] >= 1.0 / c):
            rep.violated_preconditions.append(
                f"layer {l}: gamma={g[l - 1]} violates gamma < 20/(alpha d_{l + 1} w_m)")
    e_g = min(terms)
    rep.constants = {f"e_m_{l + 1}": v for l, v in enumerate(e)}
    rep.constants["e_m_gamma"] = e_g
    return rep, e, e_g, L


def bound_multilayer(widths, gammas, w_ms, alpha, D_f, N, B):
    rep, e, e_g, L = _multilayer_core(widths, gammas, w_ms, alpha, "multilayer")
    if rep.feasible:
        rep.bound_value = (D_f / N + (e[-1] + alpha * sum(e[:-1])) / B) / e_g
    return rep


def bound_pretrain_dropout(widths, gammas, w_ms, alpha, D_f, N, B, zeta):
    if not zeta > 0:
        raise ParameterError(f"zeta must be positive, got {zeta}")
    if zeta > 1:
        raise ParameterError(f"zeta must not exceed 1, got {zeta}")
    rep, e, e_g, L = _multilayer_core(widths, gammas, w_ms, alpha, "pretrain-dropout")
    if rep.feasible:
        first = D_f / (N * e_g * zeta ** 2)
        second = (e[L - 1] / zeta + alpha * e[L - 2] + alpha * zeta * sum(e[:L - 2])) / (e_g * B)
        rep.bound_value = first + second
        rep.extra.update(fit_term=first, variance_term=second)
    return rep


# ------------------------------------------------------------ Lipschitz


@dataclass
class LipschitzEstimate:
    value: float
    pairs: int
    history: np.ndarray


def estimate_lipschitz(grad_fn: Callable, sampler: Callable, M, rng, project: Optional[Callable] = None,
                       radius=1e-4, power_steps=4):
    """Lower estimate of the Lipschitz constant of ``grad_fn``.

    Each of the ``M`` pairs starts at ``W_a = sampler(rng)``; the partner
    ``W_b = W_a + radius * u`` uses a random unit direction ``u`` sharpened
    by ``power_steps`` finite-difference power iterations, then projected
    back onto the feasible set by ``project``.  The estimate is the largest
    ``||g(W_a) - g(W_b)|| / ||W_a - W_b||`` seen; ``history`` is the running
    maximum.  Pairs closer than 1e-12 are resampled.
    """
    if M < 1:
        raise ParameterError(f"need at least one pair, got {M}")
    project = project or (lambda W: W)
    best, hist, count = 0.0, [], 0
    while count < M:
        Wa = sampler(rng)
        ga = grad_fn(Wa)
        u = rng.standard_normal(np.shape(Wa))
        u /= np.linalg.norm(u)
        for _ in range(power_steps):
            v = grad_fn(Wa + radius * u) - ga
            nv = np.linalg.norm(v)
            if nv == 0:
                break
            u = v / nv
        Wb = project(Wa + radius * u)
        dist = np.linalg.norm(Wa - Wb)
        if dist < 1e-12:
            continue
        best = max(best, float(np.linalg.norm(grad_fn(Wb) - ga) / dist))
        hist.append(best)
        count += 1
    return LipschitzEstimate(best, M, np.asarray(hist))


def da_gradient_oracle(X, keep_prob, w_m, rng):
    """Full-data DA gradient with one fixed corruption mask per sample."""
    X = np.asarray(X, dtype=np.float64)
    Z = None if keep_prob >= 1 else (rng.random(X.shape) < keep_prob).astype(np.float64)
    return lambda W: loss_and_grad_da(W, X, Z, box_limit=w_m)[1]


def estimate_da_lipschitz(X, d_h, w_m, keep_prob, M, rng, **kw):
    """``U_da`` estimate over weights drawn uniformly from the box."""
    X = np.asarray(X, dtype=np.float64)
    grad = da_gradient_oracle(X, keep_prob, w_m, rng)
    shape = (d_h, X.shape[1])
    sampler = lambda r: r.uniform(-w_m, w_m, size=shape)
    return estimate_lipschitz(grad, sampler, M, rng, lambda W: project_box(W, w_m), **kw)


# -------------------------------------------------------- dispatch / plan


@dataclass
class BoundInputs:
    """Union of every input the bound formulas consume.

    ``gamma`` may be a scalar or a per-layer sequence; ``w_m`` a scalar or a
    per-hidden-layer sequence.  ``D_f`` defaults to ``f(W^1)`` at the call
    site; ``f_W1`` is used by the stepsize and complexity formulas.
    """

    widths: tuple = (100, 5)
    B: int = 50
    N: int = 1000
    gamma: object = 0.1
    rho: float = 0.0
    D_f: float = 5.0
    f_W1: Optional[float] = None
    w_m: object = 0.1
    zeta: float = 1.0
    alpha: float = 0.0
    U_da: Optional[float] = None
    U_source: str = "supplied"
    mu_x: float = 0.0
    tau_x: float = 0.0
    T: int = 1
    epsilon: float = 0.05
    delta: float = 0.05
    epochs: Optional[int] = None

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown bound inputs: {sorted(unknown)}")
        d = dict(d)
        if "widths" in d:
            d["widths"] = tuple(d["widths"])
        return cls(**d)


FORMULAS = ("1nn-const", "1nn-decreasing", "1nn-complexity", "da", "multilayer", "pretrain-dropout")


def evaluate(formula, inp: BoundInputs) -> BoundReport:
    w = inp.widths
    f1 = inp.D_f if inp.f_W1 is None else inp.f_W1
    if formula == "1nn-const":
        return bound_1nn_const(w[0], w[-1], inp.D_f, inp.N, inp.gamma, inp.B)
    if formula == "1nn-decreasing":
        return bound_1nn_decreasing(w[0], w[-1], inp.D_f, inp.N, inp.gamma, inp.rho, inp.B)
    if formula == "1nn-complexity":
        return complexity_1nn(inp.epsilon, inp.delta, inp.T, inp.B, f1, w[0], w[-1], inp.epochs)
    if formula == "da":
        if inp.U_da is None:
            raise ParameterError("the DA bound needs U_da (supplied or estimated)")
        return bound_da(w[0], w[1], inp.zeta, inp.w_m, DataMoments(inp.mu_x, inp.tau_x),
                        inp.D_f, inp.N, inp.gamma, inp.B, inp.U_da, inp.U_source)
    if formula == "multilayer":
        return bound_multilayer(w, inp.gamma, inp.w_m, inp.alpha, inp.D_f, inp.N, inp.B)
    if formula == "pretrain-dropout":
        return bound_pretrain_dropout(w, inp.gamma, inp.w_m, inp.alpha, inp.D_f, inp.N, inp.B, inp.zeta)
    raise ParameterError(f"unknown formula {formula!r}; choose from {FORMULAS}")


def stepsize_cap(formula, inp: BoundInputs):
    """Largest admissible scalar stepsize for ``formula`` (exclusive)."""
    if formula in ("1nn-const", "1nn-decreasing"):
        return 1.0 / COUPLING
    if formula == "da":
        return 2.0 / inp.U_da
    if formula in ("multilayer", "pretrain-dropout"):
        L = len(inp.widths) - 1
        caps = [1.0 / COUPLING]
        w = _hidden_boxes(inp.w_m, L)
        for l in range(1, L):
            c = inp.alpha * inp.widths[l + 1] * w[l - 1] / 20.0
            if c > 0:
                caps.append(1.0 / c)
        return min(caps)
    raise ParameterError(f"formula {formula!r} has no stepsize")


DEFAULT_GRIDS = {
    "N": [int(round(v)) for v in np.geomspace(1e2, 1e6, 7)],
    "B": [1, 10, 50, 100, 500],
    "zeta": [round(0.1 * i, 1) for i in range(1, 11)],
}

# Worked-example settings used when a plan leaves a quantity unspecified.
DEFAULT_PLAN_INPUTS = {
    "1nn-const": BoundInputs(widths=(100, 5), B=50, N=1000, gamma=0.1, D_f=5.0),
    "1nn-decreasing": BoundInputs(widths=(100, 5), B=50, N=1000, gamma=0.1, rho=0.5, D_f=5.0),
    "da": BoundInputs(widths=(100, 100), B=50, N=1000, gamma=0.005, D_f=5.0, w_m=0.01, zeta=0.5,
                      U_da=100.0, mu_x=0.5, tau_x=0.25),
    "multilayer": BoundInputs(widths=(20, 10, 10, 5), B=50, N=1000, gamma=0.05, D_f=5.0, w_m=0.1,
                              alpha=0.05),
    "pretrain-dropout": BoundInputs(widths=(20, 10, 10, 5), B=50, N=1000, gamma=0.05, D_f=5.0,
                                    w_m=0.1, alpha=0.5, zeta=1.0),
    "1nn-complexity": BoundInputs(widths=(100, 5), B=50, f_W1=5.0, epsilon=0.05, delta=0.05, T=10),
}


@dataclass
class PlanResult:
    status: str
    recommended: dict
    bound: float
    table: list


def gamma_grid(formula, inp, n=20):
    cap = stepsize_cap(formula, inp)
    return [float(g) for g in np.geomspace(cap * 1e-4, cap * (1 - 1e-3), n)]


def plan_hyperparameters(formula, free: Sequence[str], target=math.inf, inputs: Optional[BoundInputs] = None,
                         grids: Optional[dict] = None):
    """Grid search over the ``free`` hyperparameters of a bound formula.

    A grid point is feasible when its preconditions hold and its bound does
    not exceed ``target``.  Among feasible points the cheapest wins: smallest
    ``N``, then smallest ``B``, then smallest predicted bound.  If nothing is
    feasible the point with the smallest bound is returned with status
    ``"infeasible"``.  For ``"1nn-complexity"`` the (epsilon, delta, T)
    target lives in ``inputs`` and ``N`` is derived per batch size.
    """
    free = list(free)
    if not free:
        raise ParameterError("plan needs at least one free variable")
    base = inputs if inputs is not None else DEFAULT_PLAN_INPUTS.get(formula, BoundInputs())
    grids = dict(grids or {})
    axes = []
    for name in free:
        if name in grids:
            axes.append(list(grids[name]))
        elif name == "gamma":
            axes.append(gamma_grid(formula, base))
        elif name in DEFAULT_GRIDS:
            axes.append(DEFAULT_GRIDS[name])
        else:
            raise ParameterError(f"no default grid for {name!r}; pass one explicitly")
    table = []
    for values in itertools.product(*axes):
        point = dict(zip(free, values))
        inp = replace(base, **point)
        rep = evaluate(formula, inp)
        bound = rep.bound_value
        n = rep.n_iterations if rep.n_iterations is not None else inp.N
        row = dict(point, N=n, B=inp.B, bound=bound, feasible=rep.feasible and bound <= target,
                   violated="; ".join(rep.violated_preconditions))
        if formula == "1nn-complexity":
            row["gamma"] = rep.optimal_gamma
        table.append(row)
    ok = [r for r in table if r["feasible"]]
    if ok:
        best = min(ok, key=lambda r: (r["N"], r["B"], r["bound"]))
        status = "ok"
    else:
        valid = [r for r in table if not r["violated"]] or table
        best = min(valid, key=lambda r: (r["bound"], r["N"], r["B"]))
        status = "infeasible"
    return PlanResult(status, dict(best), best["bound"], table)
