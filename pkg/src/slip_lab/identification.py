"""Apex error metrics, the identification cost, a Nelder-Mead simplex
minimiser and k-fold cross-validation of the fitted parameters."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import MaxIterations, TooFewStrides, ZeroNorm
from .flight import ApexState
from .model import PARAM_NAMES, RampTorque, SystemParams
from .return_map import Backend, apex_return_map

DEFAULT_PENALTY = 1000.0
# m_b only scales the equations together with k, d and the torque, so it is
# held fixed by default and the rest is fitted.
DEFAULT_FREE = ("m_t", "k", "d", "d_v_f", "d_h_f", "g")


@dataclass(frozen=True)
class ErrorMetrics:
    e_p: float
    e_v: float
    e_t: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.e_p, self.e_v, self.e_t)

    @property
    def worst(self) -> float:
        return max(self.e_p, self.e_v, self.e_t)


def apex_errors(measured: ApexState, predicted: ApexState) -> ErrorMetrics:
    """Percentage errors of a predicted apex. Positions and times are taken
    relative to the stride's starting apex (which sits at y=0, t=0)."""
    norm_p = math.hypot(measured.z_a, measured.y_a)
    if norm_p == 0 or measured.y_dot_a == 0 or measured.t_a == 0:
        raise ZeroNorm("measured apex has a zero reference quantity")
    e_p = 100.0 * math.hypot(measured.z_a - predicted.z_a, measured.y_a - predicted.y_a) / norm_p
    e_v = 100.0 * abs(measured.y_dot_a - predicted.y_dot_a) / abs(measured.y_dot_a)
    e_t = 100.0 * abs(measured.t_a - predicted.t_a) / abs(measured.t_a)
    return ErrorMetrics(e_p, e_v, e_t)


@dataclass(frozen=True)
class StrideRecord:
    apex0: ApexState
    theta_td: float  # [rad]
    torque: RampTorque
    measured: ApexState  # next apex, relative to apex0
    tag: str = ""


@dataclass
class StrideDataset:
    strides: list[StrideRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.strides)

    def __iter__(self):
        return iter(self.strides)

    def __getitem__(self, i):
        return self.strides[i]

    def subset(self, idx) -> "StrideDataset":
        return StrideDataset([self.strides[i] for i in idx])


def predict(rec: StrideRecord, p: SystemParams, backend=Backend.ORACLE, step: float = 1e-5):
    return apex_return_map(rec.apex0, rec.theta_td, rec.torque, p, backend, step=step)


def stride_errors(
    ds: StrideDataset,
    p: SystemParams,
    backend=Backend.ORACLE,
    penalty: float = DEFAULT_PENALTY,
    step: float = 1e-5,
) -> np.ndarray:
    """(n, 3) array of per-stride errors; failed predictions get ``penalty``
    on every metric."""
    out = np.empty((len(ds), 3))
    for i, rec in enumerate(ds):
        res = predict(rec, p, backend, step)
        if res.ok:
            out[i] = apex_errors(rec.measured, res.next_apex).as_tuple()
        else:
            out[i] = penalty
    return out


def mean_errors(errs: np.ndarray) -> ErrorMetrics:
    m = errs.mean(axis=0)
    return ErrorMetrics(float(m[0]), float(m[1]), float(m[2]))


def cost_from_metrics(m: ErrorMetrics) -> float:
    return math.sqrt(m.e_p**2 + m.e_v**2 + m.e_t**2)


def identification_cost(
    ds: StrideDataset,
    p: SystemParams,
    backend=Backend.ORACLE,
    penalty: float = DEFAULT_PENALTY,
    step: float = 1e-5,
) -> float:
    if len(ds) == 0:
        raise TooFewStrides("empty dataset")
    return cost_from_metrics(mean_errors(stride_errors(ds, p, backend, penalty, step)))


def reject_outliers(
    ds: StrideDataset,
    p: SystemParams,
    max_error: float,
    backend=Backend.ORACLE,
    step: float = 1e-5,
) -> StrideDataset:
    """Keep strides whose worst error under ``p`` is at most ``max_error`` [%]."""
    errs = stride_errors(ds, p, backend, math.inf, step)
    keep = [i for i in range(len(ds)) if errs[i].max() <= max_error]
    return ds.subset(keep)


# -- Nelder-Mead ------------------------------------------------------------


@dataclass(frozen=True)
class NelderMeadOptions:
    x_tol: float = 1e-8
    f_tol: float = 1e-10
    max_iter: int = 2000
    initial_step: float = 0.05  # relative to |x0_i|, absolute if x0_i == 0
    raise_on_max_iter: bool = False


@dataclass(frozen=True)
class NelderMeadResult:
    x: np.ndarray
    fun: float
    n_iter: int
    n_eval: int
    converged: bool
    message: str = ""


def _initial_simplex(x0: np.ndarray, step: float) -> np.ndarray:
    n = x0.size
    simplex = np.tile(x0, (n + 1, 1))
    for i in range(n):
        simplex[i + 1, i] += step * abs(x0[i]) if x0[i] != 0 else step
    return simplex


def nelder_mead(
    f: Callable[[np.ndarray], float],
    x0,
    opts: NelderMeadOptions | None = None,
    simplex: np.ndarray | None = None,
) -> NelderMeadResult:
    """Downhill simplex with reflection 1, expansion 2, contraction 1/2 and
    shrink 1/2.

    Stops when the simplex diameter is below ``x_tol`` and the spread of the
    vertex values is below ``f_tol``. Non-finite objective values are treated
    as +inf, so a step into an infeasible region is simply rejected.
    """
    opts = opts or NelderMeadOptions()
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = x0.size
    n_eval = 0

    def fx(x):
        nonlocal n_eval
        n_eval += 1
        v = float(f(x))
        return v if math.isfinite(v) else math.inf

    pts = _initial_simplex(x0, opts.initial_step) if simplex is None else np.array(simplex, dtype=float)
    if pts.shape != (n + 1, n):
        raise ValueError(f"simplex must have shape {(n + 1, n)}")
    vals = np.array([fx(x) for x in pts])
    if not math.isfinite(vals[0]):
        raise ValueError("objective is not finite at x0")

    alpha, gamma, rho, sigma = 1.0, 2.0, 0.5, 0.5
    it = 0
    converged = False
    message = ""
    while True:
        order = np.argsort(vals, kind="stable")
        pts, vals = pts[order], vals[order]
        diameter = float(np.max(np.linalg.norm(pts[1:] - pts[0], axis=1))) if n else 0.0
        spread = float(vals[-1] - vals[0]) if math.isfinite(vals[-1]) else math.inf
        # both tests: equal values on either side of a minimum give a zero
        # spread long before the simplex has closed in
        if diameter < opts.x_tol and spread < opts.f_tol:
            converged, message = True, "simplex diameter and value spread below tolerance"
            break
        if it >= opts.max_iter:
            message = "maximum iterations reached"
            break
        it += 1

        centroid = pts[:-1].mean(axis=0)
        worst = pts[-1]
        xr = centroid + alpha * (centroid - worst)
        fr = fx(xr)
        if fr < vals[0]:
            xe = centroid + gamma * (xr - centroid)
            fe = fx(xe)
            if fe < fr:
                pts[-1], vals[-1] = xe, fe
            else:
                pts[-1], vals[-1] = xr, fr
            continue
        if fr < vals[-2]:
            pts[-1], vals[-1] = xr, fr
            continue
        if fr < vals[-1]:
            xc = centroid + rho * (xr - centroid)  # outside contraction
            fc = fx(xc)
            if fc <= fr:
                pts[-1], vals[-1] = xc, fc
                continue
        else:
            xc = centroid + rho * (worst - centroid)  # inside contraction
            fc = fx(xc)
            if fc < vals[-1]:
                pts[-1], vals[-1] = xc, fc
                continue
        for i in range(1, n + 1):
            pts[i] = pts[0] + sigma * (pts[i] - pts[0])
            vals[i] = fx(pts[i])

    best = int(np.argmin(vals))
    result = NelderMeadResult(pts[best].copy(), float(vals[best]), it, n_eval, converged, message)
    if not converged and opts.raise_on_max_iter:
        raise MaxIterations(message, result)
    return result


# -- parameter identification -----------------------------------------------


def _check_free(free: Sequence[str]) -> tuple[str, ...]:
    free = tuple(free)
    for name in free:
        if name not in PARAM_NAMES:
            raise ValueError(f"unknown parameter {name!r}")
    return free


def _params_from_log(guess: SystemParams, free: tuple[str, ...], z: np.ndarray) -> SystemParams | None:
    try:
        return guess.with_values(**{name: math.exp(v) for name, v in zip(free, z)})
    except (ValueError, OverflowError):
        return None


@dataclass(frozen=True)
class IdentificationResult:
    params: SystemParams
    cost: float
    optimizer: NelderMeadResult | None


def fit_parameters(
    ds: StrideDataset,
    guess: SystemParams,
    free: Sequence[str] = DEFAULT_FREE,
    backend=Backend.ORACLE,
    penalty: float = DEFAULT_PENALTY,
    step: float = 1e-5,
    opts: NelderMeadOptions | None = None,
) -> IdentificationResult:
    """Minimise the identification cost over the logarithms of the free
    parameters (all of them are positive, which the log keeps feasible)."""
    if len(ds) == 0:
        raise TooFewStrides("empty dataset")
    free = _check_free(free)
    if not free:
        return IdentificationResult(guess, identification_cost(ds, guess, backend, penalty, step), None)
    for name in free:
        if not getattr(guess, name) > 0:
            raise ValueError(f"free parameter {name} must start positive")
    opts = opts or NelderMeadOptions(x_tol=1e-4, f_tol=1e-6, max_iter=400, initial_step=0.1)
    z0 = np.array([math.log(getattr(guess, name)) for name in free])

    def objective(z):
        p = _params_from_log(guess, free, z)
        if p is None:
            return math.inf
        return identification_cost(ds, p, backend, penalty, step)

    # additive steps in log space, i.e. relative steps on the parameters
    simplex = np.tile(z0, (len(free) + 1, 1))
    for i in range(len(free)):
        simplex[i + 1, i] += opts.initial_step
    res = nelder_mead(objective, z0, opts, simplex)
    return IdentificationResult(_params_from_log(guess, free, res.x), res.fun, res)


def identify_parameters(
    ds: StrideDataset,
    guess: SystemParams,
    free: Sequence[str] = DEFAULT_FREE,
    backend=Backend.ORACLE,
    **kwargs,
) -> SystemParams:
    return fit_parameters(ds, guess, free, backend, **kwargs).params


# -- cross-validation -------------------------------------------------------


@dataclass(frozen=True)
class FoldResult:
    fold: int
    params: SystemParams
    train: ErrorMetrics
    test: ErrorMetrics
    train_idx: tuple[int, ...]
    test_idx: tuple[int, ...]
    cost: float


@dataclass(frozen=True)
class CrossValidation:
    folds: list[FoldResult]
    seed: int

    def _stack(self, attr: str) -> np.ndarray:
        return np.array([getattr(f, attr).as_tuple() for f in self.folds])

    def metric_stats(self, which: str = "test") -> tuple[ErrorMetrics, ErrorMetrics]:
        """(mean, std) across folds; std is the population std."""
        a = self._stack(which)
        return ErrorMetrics(*a.mean(axis=0)), ErrorMetrics(*a.std(axis=0))

    def param_stats(self) -> dict[str, tuple[float, float]]:
        out = {}
        for name in PARAM_NAMES:
            v = np.array([getattr(f.params, name) for f in self.folds])
            out[name] = (float(v.mean()), float(v.std()))
        return out


def fold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Seeded uniform shuffle, then contiguous split into k nearly equal folds."""
    if not 2 <= k <= n:
        raise TooFewStrides(f"need 2 <= k <= n, got k={k}, n={n}")
    order = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(order, k)]


def kfold_cross_validate(
    ds: StrideDataset,
    k: int,
    guess: SystemParams,
    free: Sequence[str] = DEFAULT_FREE,
    seed: int = 0,
    backend=Backend.ORACLE,
    penalty: float = DEFAULT_PENALTY,
    step: float = 1e-5,
    opts: NelderMeadOptions | None = None,
    progress: Callable[[FoldResult], None] | None = None,
) -> CrossValidation:
    n = len(ds)
    if n < k or k < 2:
        raise TooFewStrides(f"{n} strides cannot be split into {k} folds")
    folds = []
    all_idx = np.arange(n)
    for i, test_idx in enumerate(fold_indices(n, k, seed)):
        train_idx = np.setdiff1d(all_idx, test_idx)
        train = ds.subset(train_idx)
        fit = fit_parameters(train, guess, free, backend, penalty, step, opts)
        tr = mean_errors(stride_errors(train, fit.params, backend, penalty, step))
        te = mean_errors(stride_errors(ds.subset(test_idx), fit.params, backend, penalty, step))
        fr = FoldResult(i, fit.params, tr, te, tuple(int(j) for j in train_idx), tuple(int(j) for j in test_idx), fit.cost)
        folds.append(fr)
        if progress is not None:
            progress(fr)
    return CrossValidation(folds, seed)


# -- synthetic data ---------------------------------------------------------

# Input ranges of the single-stride experiments.
INPUT_RANGES = {
    "z0": (0.2601, 0.4255),
    "y_dot0": (0.8631, 2.4868),
    "tau0": (3.0, 8.0),
    "theta_td_deg": (10.0, 45.0),
}


def synthetic_dataset(
    p: SystemParams,
    n: int,
    seed: int = 0,
    noise_std: float = 0.0,
    backend=Backend.ORACLE,
    step: float = 1e-5,
    ranges: dict | None = None,
    max_draws: int | None = None,
) -> StrideDataset:
    """Draw uniform inputs in ``ranges`` and keep strides that succeed and
    keep running forward (next apex speed positive). Gaussian noise of
    ``noise_std`` [m] is added to the measured apex positions."""
    ranges = {**INPUT_RANGES, **(ranges or {})}
    rng = np.random.default_rng(seed)
    out = []
    draws = 0
    max_draws = max_draws or 50 * n
    while len(out) < n:
        if draws >= max_draws:
            raise TooFewStrides(f"only {len(out)} valid strides after {draws} draws")
        draws += 1
        z0 = rng.uniform(*ranges["z0"])
        v0 = rng.uniform(*ranges["y_dot0"])
        tau0 = rng.uniform(*ranges["tau0"])
        th = math.radians(rng.uniform(*ranges["theta_td_deg"]))
        # always drawn so the inputs for a seed do not depend on the noise level
        noise = noise_std * rng.standard_normal(2)
        rec = StrideRecord(ApexState(z0, v0), th, RampTorque(tau0), ApexState(1.0, 1.0), f"synthetic-{draws - 1}")
        res = predict(rec, p, backend, step)
        if not res.ok or res.next_apex.y_dot_a <= 0:
            continue
        a = res.next_apex
        measured = ApexState(float(a.z_a + noise[0]), a.y_dot_a, float(a.y_a + noise[1]), a.t_a)
        out.append(StrideRecord(rec.apex0, th, rec.torque, measured, rec.tag))
    return StrideDataset(out)
