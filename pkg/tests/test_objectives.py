import math

import numpy as np
import pytest

from ngn.objectives import (
    Dataset,
    ParseError,
    as_point,
    compute_deltas,
    finite_difference_gradient,
    load_libsvm,
    make_blobs_dataset,
    make_linear_regression,
    make_logistic,
    make_nonconvex_sum,
    make_quadratic1d,
    make_two_quadratics,
    write_libsvm,
)


def test_quadratic1d_hand_values():
    obj = make_quadratic1d(2.0, 1.0, 0.3)
    value, grad = obj.component_eval(0, np.array([3.0]))
    assert value == pytest.approx(2.0 * 4.0 / 2.0 + 0.3)  # (lam/2)(x-1)^2 + f*
    assert grad[0] == pytest.approx(2.0 * 2.0)
    assert obj.l_max == 2.0
    assert obj.f_star == 0.3


def test_quadratic1d_validation():
    with pytest.raises(ValueError):
        make_quadratic1d(0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        make_quadratic1d(1.0, 0.0, -0.1)


def test_two_quadratics_metadata():
    obj = make_two_quadratics()
    assert obj.n == 2 and obj.dim == 1
    assert obj.l_max == 1.0 and obj.mu == 1.0
    assert obj.f_star == 0.5 and obj.x_star[0] == 0.0
    # f(x) = ((x-1)^2 + (x+1)^2)/4 = (x^2 + 1)/2
    value, grad = obj.full_eval(np.array([2.0]))
    assert value == pytest.approx(2.5)
    assert grad[0] == pytest.approx(2.0)


def test_two_quadratics_deltas():
    obj = make_two_quadratics()
    delta_int, delta_pos = compute_deltas(obj)
    assert delta_int == pytest.approx(0.5, abs=1e-12)
    assert delta_pos == pytest.approx(0.0, abs=1e-12)


def test_batch_eval_is_mean():
    obj = make_two_quadratics()
    x = np.array([0.7])
    v0, g0 = obj.component_eval(0, x)
    v1, g1 = obj.component_eval(1, x)
    vb, gb = obj.batch_eval([0, 1], x)
    assert vb == pytest.approx((v0 + v1) / 2)
    assert gb[0] == pytest.approx((g0[0] + g1[0]) / 2)


def test_linear_regression_interpolates_without_noise():
    obj = make_linear_regression(4, 20, seed=0, noise_std=0.0)
    assert obj.f_star == pytest.approx(0.0, abs=1e-18)
    assert obj.value(obj.x_star) == pytest.approx(0.0, abs=1e-18)
    grad = obj.gradient(obj.x_star)
    assert np.linalg.norm(grad) < 1e-9


def test_linear_regression_smoothness_constants():
    obj = make_linear_regression(3, 10, seed=1, noise_std=0.2)
    # each component (a^T x - b)^2/2 has Hessian a a^T with norm ||a||^2
    x = np.zeros(3)
    for i in range(obj.n):
        fd = finite_difference_gradient(obj, i, x)
        assert np.allclose(fd, obj.component_eval(i, x)[1], atol=1e-6)
    assert obj.l_max > 0


def test_logistic_gradient_matches_finite_differences():
    data = make_blobs_dataset(n=30, d=4, classes=3, seed=5)
    obj = make_logistic(data, l2=1e-2)
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = rng.standard_normal(obj.dim)
        i = int(rng.integers(obj.n))
        fd = finite_difference_gradient(obj, i, x)
        analytic = obj.component_eval(i, x)[1]
        assert np.linalg.norm(fd - analytic) <= 1e-5 * max(1.0, np.linalg.norm(analytic))
    assert obj.mu == pytest.approx(1e-2)


def test_logistic_values_nonnegative():
    data = make_blobs_dataset(n=20, d=3, classes=2, seed=2)
    obj = make_logistic(data, l2=0.0)
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = rng.standard_normal(obj.dim) * 3
        value, _ = obj.component_eval(int(rng.integers(obj.n)), x)
        assert value >= 0


def test_nonconvex_components_nonnegative_and_smooth():
    obj = make_nonconvex_sum(6, seed=2)
    assert obj.l_max == pytest.approx(1.5)
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.uniform(-5, 5, 1)
        for i in range(obj.n):
            value, _ = obj.component_eval(i, x)
            assert value >= 0


def test_nonconvex_minimum_is_global_on_grid():
    obj = make_nonconvex_sum(8, seed=3)
    grid = np.linspace(obj.x_star[0] - 10, obj.x_star[0] + 10, 2001)
    values = [obj.value(np.array([t])) for t in grid]
    assert obj.f_star <= min(values) + 1e-9
    assert abs(obj.gradient(obj.x_star)[0]) < 1e-7


def test_full_grad_sq_many_matches_loop():
    obj = make_nonconvex_sum(5, seed=1)
    pts = np.linspace(-3, 3, 7).reshape(-1, 1)
    fast = obj.full_grad_sq_many(pts)
    slow = [float(obj.gradient(p) @ obj.gradient(p)) for p in pts]
    assert np.allclose(fast, slow, rtol=1e-12)


def test_as_point_validation():
    assert as_point([1.0, 2.0], 2).shape == (2,)
    with pytest.raises(ValueError):
        as_point([1.0], 2)
    with pytest.raises(ValueError):
        as_point([np.nan, 0.0], 2)


def test_libsvm_round_trip(tmp_path):
    data = make_blobs_dataset(n=25, d=4, classes=3, seed=7)
    path = tmp_path / "blobs.svm"
    write_libsvm(data, path)
    again = load_libsvm(path)
    assert np.array_equal(again.labels, data.labels)
    assert np.array_equal(again.features, data.features)
    assert again.num_classes == data.num_classes


def test_libsvm_parse_error_reports_line(tmp_path):
    path = tmp_path / "bad.svm"
    path.write_text("1 1:0.5\n2 oops\n")
    with pytest.raises(ParseError) as exc:
        load_libsvm(path)
    assert "2" in str(exc.value)


def test_libsvm_empty_file_rejected(tmp_path):
    path = tmp_path / "empty.svm"
    path.write_text("")
    with pytest.raises(ParseError):
        load_libsvm(path)


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(features=np.zeros((3, 2)), labels=np.array([0, 1]), num_classes=2)
    with pytest.raises(ValueError):
        Dataset(features=np.zeros((2, 2)), labels=np.array([0, 5]), num_classes=2)


def test_finite_difference_gradient_on_quadratic():
    obj = make_quadratic1d(1.5, 0.0, 0.0)
    fd = finite_difference_gradient(obj, 0, np.array([2.0]))
    assert fd[0] == pytest.approx(3.0, rel=1e-7)
