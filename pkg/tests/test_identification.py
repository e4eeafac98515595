import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slip_lab.errors import MaxIterations, TooFewStrides, ZeroNorm
from slip_lab.flight import ApexState
from slip_lab.identification import (
    ErrorMetrics,
    NelderMeadOptions,
    StrideDataset,
    apex_errors,
    cost_from_metrics,
    fit_parameters,
    fold_indices,
    identification_cost,
    kfold_cross_validate,
    nelder_mead,
    reject_outliers,
    stride_errors,
    synthetic_dataset,
)
from slip_lab.model import SystemParams


@pytest.fixture(scope="module")
def clean_oracle_data():
    return synthetic_dataset(SystemParams(), 12, seed=3, step=5e-4)


@pytest.fixture(scope="module")
def analytic_data():
    return synthetic_dataset(SystemParams(), 10, seed=1, backend="analytic")


def test_apex_errors_examples():
    m = ApexState(0.3, 2.0, 0.8, 0.4)
    e = apex_errors(m, ApexState(0.3, 2.4, 0.8, 0.4))
    assert e.as_tuple() == pytest.approx((0.0, 20.0, 0.0))
    e = apex_errors(m, ApexState(0.3, 2.0, 0.8, 0.44))
    assert e.e_t == pytest.approx(10.0)
    e = apex_errors(m, ApexState(0.33, 2.0, 0.84, 0.4))
    assert e.e_p == pytest.approx(100 * 0.05 / math.hypot(0.3, 0.8))
    assert cost_from_metrics(ErrorMetrics(5, 5, 5)) == pytest.approx(5 * math.sqrt(3))
    with pytest.raises(ZeroNorm):
        apex_errors(ApexState(0.3, 2.0, 0.8, 0.0), m)


@given(scale=st.floats(0.1, 10), dz=st.floats(-0.05, 0.05), dv=st.floats(-0.5, 0.5))
def test_apex_errors_are_scale_free(scale, dz, dv):
    m = ApexState(0.3, 2.0, 0.8, 0.4)
    p = ApexState(0.3 + dz, 2.0 + dv, 0.8, 0.4)
    a = apex_errors(m, p)
    b = apex_errors(
        ApexState(m.z_a * scale, m.y_dot_a * scale, m.y_a * scale, m.t_a),
        ApexState(p.z_a * scale, p.y_dot_a * scale, p.y_a * scale, p.t_a),
    )
    assert np.allclose(a.as_tuple(), b.as_tuple(), rtol=1e-9, atol=1e-12)


def test_generating_params_fit_their_own_data(clean_oracle_data):
    p = SystemParams()
    assert identification_cost(clean_oracle_data, p, step=5e-4) == pytest.approx(0.0, abs=1e-12)
    assert identification_cost(clean_oracle_data, p.with_values(k=1.2 * p.k), step=5e-4) > 0.1
    rng = np.random.default_rng(0)
    for _ in range(100):
        scale = rng.uniform(0.8, 1.2, size=3)
        q = p.with_values(k=p.k * scale[0], d=p.d * scale[1], g=p.g * scale[2])
        assert identification_cost(clean_oracle_data, q, step=5e-4) >= 0.0


def test_failed_predictions_are_penalised(clean_oracle_data):
    broken = SystemParams(k=5.0)
    errs = stride_errors(clean_oracle_data, broken, penalty=1000.0, step=5e-4)
    assert np.any(errs == 1000.0)
    assert len(reject_outliers(clean_oracle_data, broken, 50.0, step=5e-4)) < len(clean_oracle_data)
    assert len(reject_outliers(clean_oracle_data, SystemParams(), 1e-6, step=5e-4)) == len(clean_oracle_data)


def test_nelder_mead_quadratic_and_rosenbrock():
    res = nelder_mead(lambda x: (x[0] - 3.0) ** 2, [0.0], NelderMeadOptions(x_tol=1e-10, f_tol=1e-16))
    assert res.converged and res.x[0] == pytest.approx(3.0, abs=1e-6)
    rosen = nelder_mead(
        lambda x: 100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2,
        [-1.2, 1.0],
        NelderMeadOptions(x_tol=1e-10, f_tol=1e-16, max_iter=5000, initial_step=0.5),
    )
    assert np.allclose(rosen.x, [1.0, 1.0], atol=1e-4)
    flat = nelder_mead(lambda x: 7.0, [1.0, 2.0])
    assert flat.converged and flat.fun == 7.0


@given(
    center=st.lists(st.floats(-5, 5), min_size=2, max_size=2),
    x0=st.lists(st.floats(-5, 5), min_size=2, max_size=2),
    w=st.floats(0.1, 10),
)
def test_nelder_mead_never_worse_than_start(center, x0, w):
    def f(x):
        return w * (x[0] - center[0]) ** 2 + (x[1] - center[1]) ** 2

    res = nelder_mead(f, x0, NelderMeadOptions(max_iter=50))
    assert res.fun <= f(np.array(x0))


def test_nelder_mead_iteration_limit():
    def f(x):
        return float(np.sum(np.asarray(x) ** 2))

    res = nelder_mead(f, [5.0, 5.0, 5.0], NelderMeadOptions(max_iter=3))
    assert not res.converged and res.n_iter == 3
    with pytest.raises(MaxIterations) as info:
        nelder_mead(f, [5.0, 5.0, 5.0], NelderMeadOptions(max_iter=3, raise_on_max_iter=True))
    assert info.value.result is not None


def test_nelder_mead_handles_non_finite():
    res = nelder_mead(lambda x: math.inf if x[0] < 0 else (x[0] - 1) ** 2, [0.5])
    assert res.x[0] == pytest.approx(1.0, abs=1e-3)


def test_empty_free_set_returns_guess(analytic_data):
    guess = SystemParams(k=5000.0)
    res = fit_parameters(analytic_data, guess, free=(), backend="analytic")
    assert res.params == guess and res.optimizer is None
    with pytest.raises(ValueError):
        fit_parameters(analytic_data, guess, free=("spring",), backend="analytic")
    with pytest.raises(TooFewStrides):
        fit_parameters(StrideDataset(), guess)


def test_fit_recovers_stiffness(analytic_data):
    truth = SystemParams()
    res = fit_parameters(analytic_data, truth.with_values(k=0.8 * truth.k), free=("k",), backend="analytic")
    assert res.params.k == pytest.approx(truth.k, rel=1e-3)
    assert res.cost < 1e-2


@given(n=st.integers(2, 60), data=st.data())
def test_folds_partition_the_strides(n, data):
    k = data.draw(st.integers(2, n))
    folds = fold_indices(n, k, seed=data.draw(st.integers(0, 100)))
    joined = np.sort(np.concatenate(folds))
    assert np.array_equal(joined, np.arange(n))
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1


def test_leave_one_out_is_deterministic(analytic_data):
    guess = SystemParams(k=4000.0)
    run = lambda: kfold_cross_validate(analytic_data, 10, guess, free=("k",), seed=4, backend="analytic")  # noqa: E731
    a, b = run(), run()
    assert len(a.folds) == 10 and all(len(f.test_idx) == 1 for f in a.folds)
    assert [f.params for f in a.folds] == [f.params for f in b.folds]
    mean, _ = a.metric_stats("test")
    assert mean.worst < 0.1
    assert a.param_stats()["k"][0] == pytest.approx(4696.0, rel=1e-3)
    with pytest.raises(TooFewStrides):
        kfold_cross_validate(analytic_data, 11, guess, backend="analytic")


def test_synthetic_noise_only_touches_positions():
    clean = synthetic_dataset(SystemParams(), 5, seed=2, backend="analytic")
    noisy = synthetic_dataset(SystemParams(), 5, seed=2, noise_std=1e-3, backend="analytic")
    for a, b in zip(clean, noisy):
        assert a.measured.y_dot_a == b.measured.y_dot_a and a.measured.t_a == b.measured.t_a
        assert a.measured.z_a != b.measured.z_a
        assert a.measured.y_dot_a > 0
