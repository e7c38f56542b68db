"""Finite-sum objectives: problem suite, dataset ingestion, gradient oracle.

Every objective is an average f(x) = (1/N) sum_i f_i(x) of nonnegative,
smooth components. Objectives are immutable after construction and carry
optional analytic metadata (smoothness constants, minimizers, per-component
minima) used by the theory and verification modules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize


class ParseError(ValueError):
    """Malformed dataset file."""


class SolveError(RuntimeError):
    """An inner deterministic solve failed to reach tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual norm {residual:.3e})")
        self.residual = residual


def as_point(x, dim: Optional[int] = None) -> np.ndarray:
    """Validate and convert to a float64 vector; entries must be finite."""
    p = np.atleast_1d(np.asarray(x, dtype=float))
    if p.ndim != 1:
        raise ValueError(f"point must be a vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("point has non-finite entries")
    if dim is not None and p.shape[0] != dim:
        raise ValueError(f"point has dimension {p.shape[0]}, expected {dim}")
    return p


@dataclass(frozen=True)
class Dataset:
    """Dense classification dataset with contiguous integer labels."""

    features: np.ndarray  # (N, d)
    labels: np.ndarray    # (N,) ints in [0, num_classes)
    num_classes: int

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ValueError("features must be an N x d matrix")
        if len(self.labels) != len(self.features):
            raise ValueError("labels/features length mismatch")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite values")
        if np.any(self.labels < 0) or np.any(self.labels >= self.num_classes):
            raise ValueError("label out of range")


class FiniteSumObjective:
    """f(x) = (1/N) sum_i f_i(x) with per-component evaluation.

    `component` maps (i, x) -> (value, gradient) with value >= 0. A
    vectorized `full_eval` may be supplied for cheap full-objective metrics;
    otherwise the average of component evaluations is used.
    """

    def __init__(
        self,
        n: int,
        dim: int,
        component: Callable[[int, np.ndarray], tuple[float, np.ndarray]],
        *,
        l_i: Optional[np.ndarray] = None,
        mu: Optional[float] = None,
        x_star: Optional[np.ndarray] = None,
        f_star: Optional[float] = None,
        f_i_star: Optional[np.ndarray] = None,
        full_eval: Optional[Callable[[np.ndarray], tuple[float, np.ndarray]]] = None,
        full_grad_sq_many: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        name: str = "",
    ):
        self.n = int(n)
        self.dim = int(dim)
        self._component = component
        self.l_i = None if l_i is None else np.asarray(l_i, dtype=float)
        self.l_max = None if self.l_i is None else float(np.max(self.l_i))
        self.mu = mu
        self.x_star = None if x_star is None else as_point(x_star, dim)
        self.f_star = f_star
        self.f_i_star = None if f_i_star is None else np.asarray(f_i_star, dtype=float)
        self._full_eval = full_eval
        self._full_grad_sq_many = full_grad_sq_many
        self.name = name or type(self).__name__

    def component_eval(self, i: int, x: np.ndarray) -> tuple[float, np.ndarray]:
        value, grad = self._component(i, x)
        return float(value), grad

    def batch_eval(self, indices: Sequence[int], x: np.ndarray) -> tuple[float, np.ndarray]:
        """Mean loss and mean gradient over a batch (treated as one f_i)."""
        if len(indices) == 1:
            return self.component_eval(indices[0], x)
        total = 0.0
        grad = np.zeros(self.dim)
        for i in indices:
            v, g = self._component(i, x)
            total += v
            grad += g
        inv = 1.0 / len(indices)
        return total * inv, grad * inv

    def full_eval(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        if self._full_eval is not None:
            value, grad = self._full_eval(x)
            return float(value), grad
        return self.batch_eval(range(self.n), x)

    def value(self, x: np.ndarray) -> float:
        return self.full_eval(x)[0]

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.full_eval(x)[1]

    def full_grad_sq_many(self, points: np.ndarray) -> np.ndarray:
        """Squared full-gradient norm at each row of `points` (M, d)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self._full_grad_sq_many is not None:
            return np.asarray(self._full_grad_sq_many(points), dtype=float)
        out = np.empty(len(points))
        for m, point in enumerate(points):
            grad = self.full_eval(point)[1]
            out[m] = float(grad @ grad)
        return out


def make_quadratic1d(lam: float, x_star: float, f_star: float) -> FiniteSumObjective:
    """Single 1-d quadratic f(x) = (lam/2)(x - x*)^2 + f*."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    if f_star < 0:
        raise ValueError("f_star must be nonnegative")
    lam = float(lam)
    xs = float(x_star)
    fs = float(f_star)

    def component(i, x):
        d = x[0] - xs
        return 0.5 * lam * d * d + fs, np.array([lam * d])

    return FiniteSumObjective(
        1, 1, component,
        l_i=np.array([lam]), mu=lam,
        x_star=np.array([xs]), f_star=fs, f_i_star=np.array([fs]),
        full_eval=lambda x: component(0, x),
        name="quadratic1d",
    )


def make_two_quadratics() -> FiniteSumObjective:
    """f_1(x) = (x-1)^2/2, f_2(x) = (x+1)^2/2; minimizer 0, f* = 1/2."""
    centers = (1.0, -1.0)

    def component(i, x):
        d = x[0] - centers[i]
        return 0.5 * d * d, np.array([d])

    def full(x):
        return 0.5 * (x[0] * x[0] + 1.0), np.array([x[0]])

    return FiniteSumObjective(
        2, 1, component,
        l_i=np.array([1.0, 1.0]), mu=1.0,
        x_star=np.array([0.0]), f_star=0.5, f_i_star=np.array([0.0, 0.0]),
        full_eval=full,
        name="two_quadratics",
    )


def make_linear_regression(
    d: int, n: int, seed: int, noise_std: float = 0.0
) -> FiniteSumObjective:
    """Least squares on Gaussian features with a hidden planted predictor.

    Components f_i(x) = (a_i^T x - b_i)^2 / 2. With noise_std = 0 the planted
    predictor interpolates. Minimizer is the exact least-squares solution.
    """
    if d < 1 or n < 1:
        raise ValueError("d and n must be >= 1")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, d))
    x_planted = rng.standard_normal(d)
    b = a @ x_planted
    if noise_std > 0:
        b = b + noise_std * rng.standard_normal(n)

    x_star, *_ = np.linalg.lstsq(a, b, rcond=None)
    residual = a @ x_star - b
    f_star = 0.5 * float(residual @ residual) / n
    hess = (a.T @ a) / n
    mu = float(np.linalg.eigvalsh(hess)[0]) if d <= n else 0.0

    def component(i, x):
        r = float(a[i] @ x - b[i])
        return 0.5 * r * r, r * a[i]

    def full(x):
        r = a @ x - b
        return 0.5 * float(r @ r) / n, (a.T @ r) / n

    return FiniteSumObjective(
        n, d, component,
        l_i=np.einsum("ij,ij->i", a, a), mu=max(mu, 0.0),
        x_star=x_star, f_star=f_star, f_i_star=np.zeros(n),
        full_eval=full,
        name="linear_regression",
    )


def _softmax_ce(scores: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Cross-entropy loss and dL/dscores for one sample, numerically stable."""
    shifted = scores - np.max(scores)
    exp = np.exp(shifted)
    probs = exp / np.sum(exp)
    loss = float(np.log(np.sum(exp)) - shifted[label])
    grad = probs.copy()
    grad[label] -= 1.0
    return max(loss, 0.0), grad


def make_logistic(dataset: Dataset, l2: float = 0.0) -> FiniteSumObjective:
    """Softmax cross-entropy of a linear model with optional L2 penalty.

    The point is the C x d weight matrix flattened row-major. Per-component
    smoothness uses the conservative bound ||a_i||^2 + l2.
    """
    if len(dataset.features) == 0:
        raise ValueError("empty dataset")
    if l2 < 0:
        raise ValueError("l2 must be nonnegative")
    a = dataset.features
    y = dataset.labels
    n, d = a.shape
    c = dataset.num_classes
    dim = c * d

    def component(i, x):
        w = x.reshape(c, d)
        loss, dscores = _softmax_ce(w @ a[i], int(y[i]))
        grad = np.outer(dscores, a[i])
        if l2 > 0:
            loss += 0.5 * l2 * float(x @ x)
            grad = grad + l2 * w
        return loss, grad.ravel()

    def full(x):
        w = x.reshape(c, d)
        scores = a @ w.T  # (n, c)
        shifted = scores - scores.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        probs = exp / exp.sum(axis=1, keepdims=True)
        loss = float(np.mean(np.log(exp.sum(axis=1)) - shifted[np.arange(n), y]))
        dscores = probs
        dscores[np.arange(n), y] -= 1.0
        grad = (dscores.T @ a) / n
        if l2 > 0:
            loss += 0.5 * l2 * float(x @ x)
            grad = grad + l2 * w
        return max(loss, 0.0), grad.ravel()

    return FiniteSumObjective(
        n, dim, component,
        l_i=np.einsum("ij,ij->i", a, a) + l2,
        mu=l2 if l2 > 0 else 0.0,
        full_eval=full,
        name="logistic",
    )


def make_nonconvex_sum(n: int, seed: int, eps: float = 0.5) -> FiniteSumObjective:
    """1-d nonconvex, nonnegative components 1 - cos(x - c_i) + (eps/2)(x - c_i)^2.

    Each component is smooth with L_i = 1 + eps. The global minimum of the
    average is located deterministically on a grid plus local refinement.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if eps <= 0:
        raise ValueError("eps must be positive")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-2.0, 2.0, n)

    def component(i, x):
        d = x[0] - centers[i]
        return (1.0 - math.cos(d)) + 0.5 * eps * d * d, np.array([math.sin(d) + eps * d])

    inv_n = 1.0 / n

    def full(x):
        d = x[0] - centers
        value = (1.0 - np.cos(d) + 0.5 * eps * d * d).sum() * inv_n
        grad = (np.sin(d) + eps * d).sum() * inv_n
        return float(value), np.array([grad])

    grid = np.linspace(centers.min() - 2 * math.pi, centers.max() + 2 * math.pi, 4001)
    values = np.mean(
        1.0 - np.cos(grid[:, None] - centers) + 0.5 * eps * (grid[:, None] - centers) ** 2,
        axis=1,
    )
    x0 = grid[int(np.argmin(values))]
    res = optimize.minimize_scalar(
        lambda t: full(np.array([t]))[0],
        bracket=(x0 - 0.1, x0, x0 + 0.1) if values.size else None,
        method="brent",
    )
    x_star = np.array([float(res.x)])
    f_star = float(res.fun)

    def full_grad_sq_many(points):
        d = points[:, 0][:, None] - centers
        grads = (np.sin(d) + eps * d).sum(axis=1) * inv_n
        return grads * grads

    obj = FiniteSumObjective(
        n, 1, component,
        l_i=np.full(n, 1.0 + eps),
        x_star=x_star, f_star=f_star,
        full_eval=full,
        full_grad_sq_many=full_grad_sq_many,
        name="nonconvex_sum",
    )
    return obj


def load_libsvm(path) -> Dataset:
    """Parse LIBSVM sparse text ("label idx:val ...", 1-based indices)."""
    labels_raw: list[float] = []
    rows: list[dict[int, float]] = []
    max_index = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            try:
                label = float(parts[0])
            except ValueError:
                raise ParseError(f"line {lineno}: non-numeric label {parts[0]!r}")
            entries: dict[int, float] = {}
            for token in parts[1:]:
                if ":" not in token:
                    raise ParseError(f"line {lineno}: malformed entry {token!r}")
                idx_s, val_s = token.split(":", 1)
                try:
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise ParseError(f"line {lineno}: non-numeric entry {token!r}")
                if idx < 1:
                    raise ParseError(f"line {lineno}: index {idx} is not 1-based")
                entries[idx] = val
                max_index = max(max_index, idx)
            labels_raw.append(label)
            rows.append(entries)
    if not rows:
        raise ParseError("no samples")
    features = np.zeros((len(rows), max_index))
    for r, entries in enumerate(rows):
        for idx, val in entries.items():
            features[r, idx - 1] = val
    distinct = sorted(set(labels_raw))
    mapping = {v: i for i, v in enumerate(distinct)}
    labels = np.array([mapping[v] for v in labels_raw], dtype=int)
    return Dataset(features=features, labels=labels, num_classes=len(distinct))


def write_libsvm(dataset: Dataset, path) -> None:
    """Write every entry (including zeros) so parse/write round-trips exactly."""
    with open(path, "w") as fh:
        for row, label in zip(dataset.features, dataset.labels):
            entries = " ".join(f"{j + 1}:{float(v)!r}" for j, v in enumerate(row))
            fh.write(f"{int(label)} {entries}\n")


def finite_difference_gradient(
    obj: FiniteSumObjective, i: int, x: np.ndarray, h: float = 1e-6
) -> np.ndarray:
    """Central-difference gradient of component i; independent oracle."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = as_point(x, obj.dim)
    grad = np.empty(obj.dim)
    for j in range(obj.dim):
        step = h * (1.0 + abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += step
        xm[j] -= step
        grad[j] = (obj.component_eval(i, xp)[0] - obj.component_eval(i, xm)[0]) / (2 * step)
    return grad


def _solve_to_stationarity(fun, x0: np.ndarray, tol: float) -> np.ndarray:
    res = optimize.minimize(fun, x0, jac=True, method="L-BFGS-B",
                            options={"gtol": tol, "ftol": 0.0, "maxiter": 20000})
    grad_norm = float(np.linalg.norm(res.jac))
    if grad_norm > 1e-7:
        raise SolveError("inner solve did not converge", grad_norm)
    return np.asarray(res.x, dtype=float)


def compute_deltas(obj: FiniteSumObjective, tol: float = 1e-10) -> tuple[float, float]:
    """Interpolation gap and position gap of a finite-sum objective.

    delta_int = (1/N) sum_i [f_i(x*) - f_i*],  delta_pos = (1/N) sum_i f_i*.
    Uses analytic metadata when present, deterministic solves otherwise.
    """
    if obj.x_star is not None:
        x_star = obj.x_star
    else:
        x_star = _solve_to_stationarity(obj.full_eval, np.zeros(obj.dim), tol)
    if obj.f_i_star is not None:
        f_i_star = obj.f_i_star
    else:
        f_i_star = np.array([
            obj.component_eval(i, _solve_to_stationarity(
                lambda x, i=i: obj.component_eval(i, x), x_star.copy(), tol))[0]
            for i in range(obj.n)
        ])
    at_star = np.array([obj.component_eval(i, x_star)[0] for i in range(obj.n)])
    delta_int = float(np.mean(at_star - f_i_star))
    delta_pos = float(np.mean(f_i_star))
    return max(delta_int, 0.0), max(delta_pos, 0.0)


def make_blobs_dataset(n: int, d: int, classes: int, seed: int, spread: float = 2.0) -> Dataset:
    """Gaussian blobs around random class centers; synthetic classification."""
    if n < classes:
        raise ValueError("need at least one sample per class")
    rng = np.random.default_rng(seed)
    centers = spread * rng.standard_normal((classes, d))
    labels = np.arange(n) % classes
    rng.shuffle(labels)
    features = centers[labels] + rng.standard_normal((n, d))
    return Dataset(features=features, labels=labels, num_classes=classes)
