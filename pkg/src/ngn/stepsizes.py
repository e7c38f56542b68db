"""Stepsize policies behind a single interface.

A policy observes (k, f_i(x^k), ||grad f_i(x^k)||^2) and emits gamma_k > 0,
or None when the observation is stationary (zero gradient where the rule is
undefined); the runner then takes a zero step.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

# Floor applied to the loss inside stepsize formulas only; guards the
# division in the harmonic-mean form. Recorded losses are never modified.
F_FLOOR = 1e-12


class PolicyError(ValueError):
    """Invalid policy parameters or specification string."""


class ArmijoSearchError(RuntimeError):
    """Backtracking exhausted without satisfying sufficient decrease."""

    def __init__(self, last_gamma: float):
        super().__init__(f"no acceptable Armijo step; last trial gamma={last_gamma:.3e}")
        self.last_gamma = last_gamma


@dataclass(slots=True)
class StepObservation:
    k: int
    loss: float
    grad_sq_norm: float
    component_min: Optional[float] = None

    def __post_init__(self):
        if self.loss < 0:
            raise ValueError("loss must be nonnegative")
        if self.grad_sq_norm < 0:
            raise ValueError("grad_sq_norm must be nonnegative")


class StepsizePolicy:
    """Base class; subclasses implement stepsize(obs)."""

    requires_full_batch = False
    requires_component_min = False

    def reset(self) -> None:
        pass

    def sigma_at(self, k: int) -> float:
        """Regularization parameter in effect at step k; NaN if undefined."""
        return float("nan")

    def stepsize(self, obs: StepObservation) -> Optional[float]:
        raise NotImplementedError


def _ngn_formula(sigma: float, loss: float, grad_sq: float) -> float:
    return sigma / (1.0 + sigma * grad_sq / (2.0 * max(loss, F_FLOOR)))


class NGN(StepsizePolicy):
    """gamma = sigma / (1 + sigma * ||g||^2 / (2 f))."""

    def __init__(self, sigma: float):
        if sigma <= 0:
            raise PolicyError("sigma must be positive")
        self.sigma = float(sigma)

    def sigma_at(self, k: int) -> float:
        return self.sigma

    def stepsize(self, obs: StepObservation) -> float:
        return _ngn_formula(self.sigma, obs.loss, obs.grad_sq_norm)


class NGNAnnealed(StepsizePolicy):
    """NGN with decaying sigma_k = sigma0/sqrt(k+1) or sigma0/(k+1)."""

    SCHEDULES = ("inv_sqrt", "inv_linear")

    def __init__(self, sigma0: float, schedule: str = "inv_sqrt"):
        if sigma0 <= 0:
            raise PolicyError("sigma0 must be positive")
        if schedule not in self.SCHEDULES:
            raise PolicyError(f"unknown schedule {schedule!r}")
        self.sigma0 = float(sigma0)
        self.schedule = schedule

    def sigma_at(self, k: int) -> float:
        if self.schedule == "inv_sqrt":
            return self.sigma0 / math.sqrt(k + 1)
        return self.sigma0 / (k + 1)

    def stepsize(self, obs: StepObservation) -> float:
        return _ngn_formula(self.sigma_at(obs.k), obs.loss, obs.grad_sq_norm)


class GGN(StepsizePolicy):
    """Generalized Gauss-Newton stepsize gamma = sigma / (1 + sigma q ||g||^2).

    Curvature factor q depends on the outer function h: quadratic h gives
    q = 1/(2f) (identical to NGN), a degree-p monomial gives q = (p-1)/(p f),
    and negative log-likelihood gives q = 1.
    """

    KINDS = ("quadratic", "monomial", "neg_log")

    def __init__(self, sigma: float, h_kind: str = "quadratic", p: float = 2.0):
        if sigma <= 0:
            raise PolicyError("sigma must be positive")
        if h_kind not in self.KINDS:
            raise PolicyError(f"unknown h kind {h_kind!r}")
        if h_kind == "monomial" and p <= 1:
            raise PolicyError("monomial exponent p must be > 1")
        self.sigma = float(sigma)
        self.h_kind = h_kind
        self.p = float(p)

    def sigma_at(self, k: int) -> float:
        return self.sigma

    def stepsize(self, obs: StepObservation) -> float:
        if self.h_kind == "neg_log":
            q = 1.0
        else:
            f = max(obs.loss, F_FLOOR)
            if self.h_kind == "quadratic":
                q = 1.0 / (2.0 * f)
            else:
                q = (self.p - 1.0) / (self.p * f)
        return self.sigma / (1.0 + self.sigma * q * obs.grad_sq_norm)


class APS(StepsizePolicy):
    """f*-agnostic Polyak stepsize gamma = f / ||g||^2."""

    def stepsize(self, obs: StepObservation) -> Optional[float]:
        if obs.grad_sq_norm == 0.0:
            return None
        return obs.loss / obs.grad_sq_norm


class SPSMax(StepsizePolicy):
    """Capped stochastic Polyak stepsize min{(f - f_i*)/(c ||g||^2), gamma_b}."""

    requires_component_min = True

    def __init__(self, c: float = 1.0, gamma_b: float = 1.0, fstar: float = 0.0):
        if c <= 0 or gamma_b <= 0:
            raise PolicyError("c and gamma_b must be positive")
        self.c = float(c)
        self.gamma_b = float(gamma_b)
        self.default_fstar = float(fstar)

    def stepsize(self, obs: StepObservation) -> float:
        fstar = obs.component_min if obs.component_min is not None else self.default_fstar
        if obs.grad_sq_norm == 0.0:
            return self.gamma_b
        numerator = max(obs.loss - fstar, 0.0)
        return min(numerator / (self.c * obs.grad_sq_norm), self.gamma_b)


class PolyakKnownFStar(StepsizePolicy):
    """Classical Polyak stepsize (f - f*)/||g||^2 on the full objective."""

    requires_full_batch = True

    def __init__(self, f_star: float = 0.0):
        if f_star < 0:
            raise PolicyError("f_star must be nonnegative")
        self.f_star = float(f_star)

    def stepsize(self, obs: StepObservation) -> Optional[float]:
        if obs.grad_sq_norm == 0.0:
            return None
        return max(obs.loss - self.f_star, 0.0) / obs.grad_sq_norm


class AdaGradNorm(StepsizePolicy):
    """Scalar AdaGrad gamma_k = eta / sqrt(delta0^2 + sum of ||g||^2).

    The accumulator includes the current observation before emission, so the
    emitted sequence is monotone nonincreasing.
    """

    def __init__(self, eta: float, delta0: float):
        if eta <= 0 or delta0 <= 0:
            raise PolicyError("eta and delta0 must be positive")
        self.eta = float(eta)
        self.delta0 = float(delta0)
        self._acc = delta0 * delta0

    def reset(self) -> None:
        self._acc = self.delta0 * self.delta0

    def stepsize(self, obs: StepObservation) -> float:
        self._acc += obs.grad_sq_norm
        return self.eta / math.sqrt(self._acc)


class Constant(StepsizePolicy):
    def __init__(self, gamma: float):
        if gamma <= 0:
            raise PolicyError("gamma must be positive")
        self.gamma = float(gamma)

    def stepsize(self, obs: StepObservation) -> float:
        return self.gamma


class Armijo(StepsizePolicy):
    """Backtracking line search with the sufficient-decrease condition.

    Full-batch only; the runner supplies a callback evaluating the full
    objective at trial points.
    """

    requires_full_batch = True
    MAX_BACKTRACKS = 60

    def __init__(self, c1: float = 1e-4, backtrack: float = 0.5, gamma_init: float = 1.0):
        if not 0 < c1 < 1:
            raise PolicyError("c1 must be in (0, 1)")
        if not 0 < backtrack < 1:
            raise PolicyError("backtrack must be in (0, 1)")
        if gamma_init <= 0:
            raise PolicyError("gamma_init must be positive")
        self.c1 = float(c1)
        self.backtrack = float(backtrack)
        self.gamma_init = float(gamma_init)

    def search(
        self,
        value_fn: Callable[[np.ndarray], float],
        x: np.ndarray,
        fx: float,
        grad: np.ndarray,
    ) -> float:
        grad_sq = float(grad @ grad)
        if grad_sq == 0.0:
            return self.gamma_init
        gamma = self.gamma_init
        for _ in range(self.MAX_BACKTRACKS):
            if value_fn(x - gamma * grad) <= fx - self.c1 * gamma * grad_sq:
                return gamma
            gamma *= self.backtrack
        raise ArmijoSearchError(gamma)

    def stepsize(self, obs: StepObservation) -> float:
        raise PolicyError("Armijo requires the runner's full-objective callback")


def stepsize_bounds(sigma: float, l_smooth: float) -> tuple[float, float]:
    """Range [sigma/(1 + sigma L), sigma] of the NGN stepsize on L-smooth f."""
    if sigma <= 0 or l_smooth <= 0:
        raise ValueError("sigma and L must be positive")
    return sigma / (1.0 + sigma * l_smooth), sigma


_CALL_RE = re.compile(r"^\s*([a-zA-Z_][a-zA-Z0-9_]*)\s*\((.*)\)\s*$", re.DOTALL)


def parse_call(text: str) -> tuple[str, dict]:
    """Parse "name(key=value, ...)" into (name, kwargs).

    Values are floats when numeric, bare strings otherwise.
    """
    m = _CALL_RE.match(text)
    if not m:
        raise PolicyError(f"cannot parse call expression {text!r}")
    name, argstr = m.group(1), m.group(2).strip()
    kwargs: dict = {}
    if argstr:
        for part in argstr.split(","):
            if "=" not in part:
                raise PolicyError(f"expected key=value in {part!r}")
            key, value = (s.strip() for s in part.split("=", 1))
            try:
                kwargs[key] = float(value)
            except ValueError:
                kwargs[key] = value.strip("\"'")
    return name, kwargs


def parse_policy(spec: str) -> StepsizePolicy:
    """Build a policy from the config grammar, e.g. "ngn(sigma=3.0)"."""
    name, kw = parse_call(spec)
    try:
        if name == "ngn":
            return NGN(sigma=kw.pop("sigma"))
        if name == "ngn_annealed":
            return NGNAnnealed(sigma0=kw.pop("sigma0"),
                               schedule=kw.pop("schedule", "inv_sqrt"))
        if name == "ggn":
            return GGN(sigma=kw.pop("sigma"), h_kind=kw.pop("h", "quadratic"),
                       p=kw.pop("p", 2.0))
        if name == "aps":
            return APS()
        if name == "sps_max":
            return SPSMax(c=kw.pop("c", 1.0), gamma_b=kw.pop("gamma_b"),
                          fstar=kw.pop("fstar", 0.0))
        if name == "polyak":
            return PolyakKnownFStar(f_star=kw.pop("fstar", 0.0))
        if name == "adagrad_norm":
            return AdaGradNorm(eta=kw.pop("eta"), delta0=kw.pop("delta0"))
        if name == "constant":
            return Constant(gamma=kw.pop("gamma"))
        if name == "armijo":
            return Armijo(c1=kw.pop("c1", 1e-4), backtrack=kw.pop("backtrack", 0.5),
                          gamma_init=kw.pop("gamma_init", 1.0))
    except KeyError as exc:
        raise PolicyError(f"policy {name!r} missing required parameter {exc}")
    raise PolicyError(f"unknown policy {name!r}")
