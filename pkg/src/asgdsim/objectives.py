"""Synthetic objective families with certified constants.

Three families are provided:

* ``QuadraticObjective``   f(x) = 0.5 * ||A x - b||^2 with symmetric A built
  from a prescribed spectrum, so the smoothness constant is known exactly.
* ``LogisticObjective``    logistic loss over a fixed design matrix with
  labels in {-1, +1}; carries certified upper bounds on smoothness and on
  the gradient norm.
* ``HeterogeneousFamily``  per-client tilts f_i(x) = f(x) + c_i . x with the
  tilt vectors summing to zero, so the mean objective stays f.

Gradient noise is modelled separately by ``NoiseModel`` (isotropic Gaussian
with E||noise||^2 equal to sigma^2 exactly, i.e. per-coordinate variance
sigma^2 / dim).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidSpecError, NumericDomainError
from .rng import named_stream

Array = np.ndarray


@dataclass
class QuadraticObjective:
    """Least-squares objective 0.5 * ||A x - b||^2.

    ``smoothness`` is the Lipschitz constant of the gradient, i.e. the
    largest eigenvalue of A^T A, computed on construction.
    """

    matrix_a: Array
    vector_b: Array
    smoothness: float = field(init=False)

    def __post_init__(self):
        self.matrix_a = np.array(self.matrix_a, dtype=float)
        self.vector_b = np.array(self.vector_b, dtype=float)
        if self.matrix_a.ndim != 2 or self.matrix_a.shape[0] != self.matrix_a.shape[1]:
            raise InvalidSpecError(f"matrix_a must be square, got shape {self.matrix_a.shape}")
        if self.vector_b.shape != (self.matrix_a.shape[0],):
            raise InvalidSpecError(
                f"vector_b shape {self.vector_b.shape} does not match matrix of "
                f"order {self.matrix_a.shape[0]}"
            )
        gram = self.matrix_a.T @ self.matrix_a
        self.smoothness = float(np.linalg.eigvalsh(gram)[-1])

    @property
    def dim(self) -> int:
        return self.vector_b.shape[0]

    def value(self, x: Array) -> float:
        r = self.matrix_a @ x - self.vector_b
        return 0.5 * float(r @ r)

    def gradient(self, x: Array) -> Array:
        return self.matrix_a.T @ (self.matrix_a @ x - self.vector_b)

    def value_and_gradient(self, x: Array) -> tuple[float, Array]:
        r = self.matrix_a @ x - self.vector_b
        return 0.5 * float(r @ r), self.matrix_a.T @ r


@dataclass
class LogisticObjective:
    """Mean logistic loss (1/m) sum_j log(1 + exp(-b_j a_j . x)).

    ``smoothness`` is the certified bound (1/(4m)) sum_j ||a_j||^2 and
    ``grad_bound`` is (1/m) sum_j ||a_j||, a uniform bound on ||grad f||.
    """

    features: Array
    labels: Array
    smoothness: float = field(init=False)
    grad_bound: float = field(init=False)

    def __post_init__(self):
        self.features = np.array(self.features, dtype=float)
        self.labels = np.array(self.labels, dtype=float)
        if self.features.ndim != 2:
            raise InvalidSpecError(f"features must be 2-d, got {self.features.ndim}-d")
        m = self.features.shape[0]
        if self.labels.shape != (m,):
            raise InvalidSpecError(
                f"labels shape {self.labels.shape} does not match {m} feature rows"
            )
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise InvalidSpecError("labels must all be -1 or +1")
        row_sq = np.einsum("ij,ij->i", self.features, self.features)
        self.smoothness = float(row_sq.sum() / (4.0 * m))
        self.grad_bound = float(np.sqrt(row_sq).sum() / m)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    def value(self, x: Array) -> float:
        margins = self.labels * (self.features @ x)
        return float(np.logaddexp(0.0, -margins).mean())

    def gradient(self, x: Array) -> Array:
        margins = self.labels * (self.features @ x)
        # sigmoid(-margins), written through tanh for stability at large |margins|
        s = 0.5 * (1.0 - np.tanh(0.5 * margins))
        return -(self.features.T @ (self.labels * s)) / self.n_samples

    def value_and_gradient(self, x: Array) -> tuple[float, Array]:
        margins = self.labels * (self.features @ x)
        value = float(np.logaddexp(0.0, -margins).mean())
        s = 0.5 * (1.0 - np.tanh(0.5 * margins))
        return value, -(self.features.T @ (self.labels * s)) / self.n_samples


@dataclass
class HeterogeneousFamily:
    """Client objectives f_i(x) = f(x) + shifts[i] . x with sum_i shifts[i] = 0.

    The base objective is the mean objective of the family; per-client
    heterogeneity is summarised by ``zeta_per_client`` (the tilt norms) and
    ``zeta_sq`` (their mean square).
    """

    base: QuadraticObjective
    shifts: Array

    def __post_init__(self):
        self.shifts = np.array(self.shifts, dtype=float)
        if self.shifts.ndim != 2 or self.shifts.shape[1] != self.base.dim:
            raise InvalidSpecError(
                f"shifts must have shape (n_clients, {self.base.dim}), got {self.shifts.shape}"
            )
        if self.shifts.shape[0] < 1:
            raise InvalidSpecError("need at least one client")
        total = self.shifts.sum(axis=0)
        scale = max(1.0, float(np.abs(self.shifts).max(initial=0.0)))
        if float(np.abs(total).max(initial=0.0)) > 1e-8 * scale:
            raise InvalidSpecError("client shifts must sum to zero")

    @property
    def n_clients(self) -> int:
        return self.shifts.shape[0]

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def smoothness(self) -> float:
        return self.base.smoothness

    @property
    def zeta_per_client(self) -> Array:
        return np.linalg.norm(self.shifts, axis=1)

    @property
    def zeta_sq(self) -> float:
        return float((self.zeta_per_client**2).mean())

    def value(self, x: Array) -> float:
        return self.base.value(x)

    def gradient(self, x: Array) -> Array:
        return self.base.gradient(x)

    def value_and_gradient(self, x: Array) -> tuple[float, Array]:
        return self.base.value_and_gradient(x)

    def client_value(self, client: int, x: Array) -> float:
        return self.base.value(x) + float(self.shifts[client] @ x)

    def client_gradient(self, client: int, x: Array) -> Array:
        return self.base.gradient(x) + self.shifts[client]


@dataclass(frozen=True)
class NoiseModel:
    """Gradient noise specification.

    ``gaussian-isotropic`` draws have per-coordinate variance sigma^2 / dim,
    so the expected squared norm of a draw is exactly sigma^2.
    """

    sigma: float = 0.0
    distribution: str = "gaussian-isotropic"

    def __post_init__(self):
        if self.sigma < 0:
            raise InvalidSpecError(f"sigma must be non-negative, got {self.sigma}")
        if self.distribution != "gaussian-isotropic":
            raise InvalidSpecError(f"unknown noise distribution {self.distribution!r}")

    def sample(self, dim: int, rng: np.random.Generator) -> Array:
        if self.sigma == 0.0:
            return np.zeros(dim)
        return (self.sigma / math.sqrt(dim)) * rng.standard_normal(dim)


def make_quadratic(dim: int, lambda_min: float, lambda_max: float, seed: int) -> QuadraticObjective:
    """Quadratic instance with eigenvalues of A equally spaced in [lambda_min, lambda_max].

    A = Q diag(lambda) Q^T for a random orthogonal Q (QR of a Gaussian matrix
    with the sign convention that makes the factorisation unique), and b is
    standard normal.  The smoothness constant is lambda_max^2.
    """
    if dim < 2:
        raise InvalidSpecError(f"dim must be at least 2, got {dim}")
    if lambda_min <= 0:
        raise InvalidSpecError(f"lambda_min must be positive, got {lambda_min}")
    if lambda_max < lambda_min:
        raise InvalidSpecError(f"lambda_max={lambda_max} is below lambda_min={lambda_min}")
    stream = named_stream(seed, "objective-gen")
    gauss = stream.standard_normal((dim, dim))
    q, r = np.linalg.qr(gauss)
    q = q * np.sign(np.diag(r))
    eigs = np.linspace(lambda_min, lambda_max, dim)
    a = (q * eigs) @ q.T
    a = 0.5 * (a + a.T)
    b = stream.standard_normal(dim)
    return QuadraticObjective(a, b)


def make_logistic(n_samples: int, dim: int, seed: int) -> LogisticObjective:
    """Logistic instance with standard normal rows and uniform random labels."""
    if n_samples < 1:
        raise InvalidSpecError(f"n_samples must be at least 1, got {n_samples}")
    if dim < 1:
        raise InvalidSpecError(f"dim must be at least 1, got {dim}")
    stream = named_stream(seed, "objective-gen")
    features = stream.standard_normal((n_samples, dim))
    labels = stream.choice(np.array([-1.0, 1.0]), size=n_samples)
    return LogisticObjective(features, labels)


def make_heterogeneous(
    base: QuadraticObjective, n_clients: int, zeta: float, seed: int
) -> HeterogeneousFamily:
    """Family around ``base`` with tilt vectors of root-mean-square norm ``zeta``.

    Raw Gaussian directions are centred so they sum to zero, then rescaled so
    that sqrt(mean ||c_i||^2) equals ``zeta``.  A single client forces a zero
    tilt regardless of ``zeta``.
    """
    if n_clients < 1:
        raise InvalidSpecError(f"n_clients must be at least 1, got {n_clients}")
    if zeta < 0:
        raise InvalidSpecError(f"zeta must be non-negative, got {zeta}")
    dim = base.dim
    if n_clients == 1 or zeta == 0.0:
        return HeterogeneousFamily(base, np.zeros((n_clients, dim)))
    stream = named_stream(seed, "objective-gen")
    raw = stream.standard_normal((n_clients, dim))
    centred = raw - raw.mean(axis=0)
    rms = float(np.sqrt((centred**2).sum(axis=1).mean()))
    if rms == 0.0:
        raise InvalidSpecError("degenerate tilt draw; choose another seed")
    return HeterogeneousFamily(base, centred * (zeta / rms))


def stochastic_gradient(objective, client: int, x: Array, noise: NoiseModel, rng) -> Array:
    """One stochastic gradient of client ``client`` at ``x``.

    For plain (homogeneous) objectives the client index is ignored.  With
    sigma = 0 the return value is exactly the client gradient and the stream
    is not consumed.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NumericDomainError("cannot evaluate a gradient at a non-finite point")
    if isinstance(objective, HeterogeneousFamily):
        g = objective.client_gradient(client, x)
    else:
        g = objective.gradient(x)
    if noise.sigma == 0.0:
        return g
    return g + noise.sample(x.shape[0], rng)


def finite_difference_gradient(fn, x: Array, step: float = 1e-5) -> Array:
    """Central-difference gradient of a scalar function, one coordinate at a time."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = step
        out[i] = (fn(x + e) - fn(x - e)) / (2.0 * step)
    return out


def objective_to_dict(objective) -> dict:
    """Plain-data form of an objective, suitable for JSON round-trips."""
    if isinstance(objective, QuadraticObjective):
        return {
            "family": "quadratic",
            "matrix_a": objective.matrix_a.tolist(),
            "vector_b": objective.vector_b.tolist(),
        }
    if isinstance(objective, LogisticObjective):
        return {
            "family": "logistic",
            "features": objective.features.tolist(),
            "labels": objective.labels.tolist(),
        }
    if isinstance(objective, HeterogeneousFamily):
        return {
            "family": "heterogeneous",
            "base": objective_to_dict(objective.base),
            "shifts": objective.shifts.tolist(),
        }
    raise InvalidSpecError(f"cannot serialize objective of type {type(objective).__name__}")


def objective_from_dict(data: dict):
    family = data.get("family")
    if family == "quadratic":
        return QuadraticObjective(np.array(data["matrix_a"]), np.array(data["vector_b"]))
    if family == "logistic":
        return LogisticObjective(np.array(data["features"]), np.array(data["labels"]))
    if family == "heterogeneous":
        return HeterogeneousFamily(objective_from_dict(data["base"]), np.array(data["shifts"]))
    raise InvalidSpecError(f"unknown objective family {family!r}")


def save_objective(objective, path) -> None:
    """Write an objective to a JSON document that reloads to identical arrays."""
    text = json.dumps(objective_to_dict(objective), sort_keys=True, indent=2) + "\n"
    Path(path).write_text(text)


def load_objective(path):
    return objective_from_dict(json.loads(Path(path).read_text()))
