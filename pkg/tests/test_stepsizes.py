import math

import numpy as np
import pytest

from ngn.stepsizes import (
    APS,
    GGN,
    NGN,
    AdaGradNorm,
    Armijo,
    ArmijoSearchError,
    Constant,
    NGNAnnealed,
    PolicyError,
    PolyakKnownFStar,
    SPSMax,
    StepObservation,
    parse_call,
    parse_policy,
    stepsize_bounds,
)


def obs(loss, gsq, k=0, comp_min=None):
    return StepObservation(k=k, loss=loss, grad_sq_norm=gsq, component_min=comp_min)


def test_observation_validation():
    with pytest.raises(ValueError):
        StepObservation(k=0, loss=-1.0, grad_sq_norm=0.0)
    with pytest.raises(ValueError):
        StepObservation(k=0, loss=1.0, grad_sq_norm=-1.0)


def test_ngn_hand_value():
    # sigma=1, f=2, g^2=4: 1/(1 + 4/4) = 0.5
    assert NGN(1.0).stepsize(obs(2.0, 4.0)) == pytest.approx(0.5)


def test_ngn_zero_gradient_gives_sigma():
    assert NGN(3.5).stepsize(obs(2.0, 0.0)) == 3.5


def test_ngn_rejects_nonpositive_sigma():
    with pytest.raises(PolicyError):
        NGN(0.0)
    with pytest.raises(PolicyError):
        NGN(-1.0)


def test_ngn_annealed_schedule():
    pol = NGNAnnealed(2.0)
    assert pol.sigma_at(0) == pytest.approx(2.0)
    assert pol.sigma_at(3) == pytest.approx(1.0)
    # with g^2 = 0, gamma equals sigma_k exactly
    assert pol.stepsize(obs(1.0, 0.0, k=3)) == pytest.approx(1.0)
    lin = NGNAnnealed(2.0, schedule="inv_linear")
    assert lin.sigma_at(1) == pytest.approx(1.0)
    with pytest.raises(PolicyError):
        NGNAnnealed(1.0, schedule="exp")


def test_ggn_quadratic_equals_ngn():
    o = obs(2.0, 4.0)
    assert GGN(1.0, "quadratic").stepsize(o) == NGN(1.0).stepsize(o)


def test_ggn_monomial_p2_equals_ngn():
    o = obs(0.7, 2.3)
    assert GGN(1.3, "monomial", p=2.0).stepsize(o) == pytest.approx(
        NGN(1.3).stepsize(o), rel=1e-15)


def test_ggn_neg_log_hand_value():
    # q = 1: gamma = sigma/(1 + sigma g^2); sigma=1, g^2=1 -> 0.5
    assert GGN(1.0, "neg_log").stepsize(obs(5.0, 1.0)) == pytest.approx(0.5)


def test_ggn_rejects_bad_monomial():
    with pytest.raises(PolicyError):
        GGN(1.0, "monomial", p=1.0)
    with pytest.raises(PolicyError):
        GGN(1.0, "cubic")


def test_aps_hand_value_and_stationary_signal():
    assert APS().stepsize(obs(2.0, 4.0)) == pytest.approx(0.5)
    assert APS().stepsize(obs(2.0, 0.0)) is None


def test_sps_max_cap_and_clamp():
    pol = SPSMax(c=1.0, gamma_b=3.0)
    assert pol.stepsize(obs(2.0, 4.0, comp_min=0.0)) == pytest.approx(0.5)
    assert pol.stepsize(obs(100.0, 1.0, comp_min=0.0)) == 3.0  # capped
    assert pol.stepsize(obs(1.0, 0.0, comp_min=0.0)) == 3.0  # zero gradient
    # numerator clamped at zero when loss dips below the component minimum
    assert pol.stepsize(obs(0.5, 4.0, comp_min=1.0)) == 0.0


def test_polyak_known_fstar():
    pol = PolyakKnownFStar(f_star=1.0)
    assert pol.requires_full_batch
    assert pol.stepsize(obs(3.0, 4.0)) == pytest.approx(0.5)
    assert pol.stepsize(obs(3.0, 0.0)) is None


def test_adagrad_norm_hand_values_and_reset():
    pol = AdaGradNorm(eta=1.0, delta0=1.0)
    assert pol.stepsize(obs(1.0, 3.0)) == pytest.approx(0.5)  # 1/sqrt(1+3)
    assert pol.stepsize(obs(1.0, 5.0)) == pytest.approx(1.0 / 3.0)  # 1/sqrt(9)
    pol.reset()
    assert pol.stepsize(obs(1.0, 3.0)) == pytest.approx(0.5)


def test_adagrad_norm_monotone():
    pol = AdaGradNorm(eta=2.0, delta0=0.1)
    rng = np.random.default_rng(0)
    prev = math.inf
    for k in range(200):
        g = pol.stepsize(obs(1.0, float(rng.uniform(0, 10)), k=k))
        assert g <= prev + 1e-15
        prev = g


def test_constant_policy():
    assert Constant(0.25).stepsize(obs(1.0, 1.0)) == 0.25
    with pytest.raises(PolicyError):
        Constant(0.0)


def test_armijo_accepts_sufficient_decrease():
    pol = Armijo()

    def value_fn(p):
        return float(p @ p)

    x = np.array([2.0])
    fx = value_fn(x)
    grad = np.array([4.0])  # gradient of x^2 at 2
    gamma = pol.search(value_fn, x, fx, grad)
    assert gamma > 0
    assert value_fn(x - gamma * grad) <= fx - 1e-4 * gamma * float(grad @ grad)


def test_armijo_zero_gradient_returns_init():
    pol = Armijo(gamma_init=0.7)
    assert pol.search(lambda p: 1.0, np.array([0.0]), 1.0, np.array([0.0])) == 0.7


def test_armijo_exhaustion_raises():
    pol = Armijo()

    def hostile(p):
        return 1e6  # no candidate ever decreases

    with pytest.raises(ArmijoSearchError):
        pol.search(hostile, np.array([1.0]), 0.0, np.array([1.0]))


def test_stepsize_bounds_hand_value():
    lo, hi = stepsize_bounds(1.0, 1.0)
    assert lo == pytest.approx(0.5)
    assert hi == 1.0


def test_parse_policy_grammar():
    assert isinstance(parse_policy("ngn(sigma=3.0)"), NGN)
    assert isinstance(parse_policy("ngn_annealed(sigma0=1.0, schedule=inv_sqrt)"),
                      NGNAnnealed)
    assert isinstance(parse_policy("sps_max(c=1, gamma_b=3, fstar=0)"), SPSMax)
    assert isinstance(parse_policy("adagrad_norm(eta=10, delta0=0.01)"), AdaGradNorm)
    assert isinstance(parse_policy("constant(gamma=0.1)"), Constant)
    assert isinstance(parse_policy("polyak(fstar=0.0)"), PolyakKnownFStar)
    assert isinstance(parse_policy("armijo()"), Armijo)
    assert isinstance(parse_policy("ggn(sigma=1, h=neg_log)"), GGN)
    assert isinstance(parse_policy("aps()"), APS)


def test_parse_policy_errors():
    with pytest.raises(PolicyError):
        parse_policy("warp(speed=9)")
    with pytest.raises(PolicyError):
        parse_policy("ngn()")  # missing sigma
    with pytest.raises(PolicyError):
        parse_policy("ngn(sigma=0)")
    with pytest.raises(PolicyError):
        parse_policy("not a call at all")


def test_parse_call_values():
    name, kw = parse_call("ggn(sigma=2.5, h=neg_log)")
    assert name == "ggn"
    assert kw == {"sigma": 2.5, "h": "neg_log"}
