"""Zero-mean Gaussian-process regression with an isotropic Matérn kernel."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.spatial.distance import cdist
from scipy.special import gamma, kv


class GpFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class GpHyperparams:
    sigma2: float = 1.0
    lengthscale: float = 12.0
    nu: float = 2.5
    jitter: float = 1e-6

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not self.lengthscale > 0:
            raise ValueError(f"lengthscale must be positive, got {self.lengthscale}")
        if self.jitter < 0:
            raise ValueError(f"jitter must be non-negative, got {self.jitter}")
        if self.nu not in (0.5, 1.5, 2.5):
            raise ValueError(f"nu must be 0.5, 1.5 or 2.5, got {self.nu}")


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Observed points ``(u, v, s)`` and their responses."""

    points: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 3)
        ys = np.array(self.responses, dtype=np.float64).reshape(-1)
        if len(pts) != len(ys):
            raise ValueError(f"{len(pts)} points but {len(ys)} responses")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "responses", ys)

    def __len__(self):
        return len(self.responses)

    def deduplicated(self) -> TrainingSet:
        """Drop repeated points; raises if a repeat disagrees on its response."""
        seen: dict[tuple, float] = {}
        keep = []
        for i, (p, y) in enumerate(zip(map(tuple, self.points), self.responses)):
            if p in seen:
                if seen[p] != y:
                    raise ValueError(f"point {p} observed with conflicting responses {seen[p]} and {y}")
                continue
            seen[p] = y
            keep.append(i)
        if len(keep) == len(self):
            return self
        return TrainingSet(self.points[keep], self.responses[keep])


@dataclass(frozen=True, eq=False)
class GpModel:
    training: TrainingSet
    hp: GpHyperparams
    chol: np.ndarray
    alpha: np.ndarray

    def dump_csv(self, directory) -> None:
        """Write K (with jitter), the Cholesky factor and alpha for offline comparison."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        np.savetxt(directory / "K.csv", self.chol @ self.chol.T, delimiter=",", fmt="%.17g")
        np.savetxt(directory / "chol.csv", self.chol, delimiter=",", fmt="%.17g")
        np.savetxt(directory / "alpha.csv", self.alpha, delimiter=",", fmt="%.17g")


@dataclass(frozen=True, eq=False)
class PosteriorPrediction:
    mean: np.ndarray
    std: np.ndarray


def _matern_from_distance(r: np.ndarray, hp: GpHyperparams) -> np.ndarray:
    d = np.asarray(r, dtype=np.float64) / hp.lengthscale
    if hp.nu == 0.5:
        return hp.sigma2 * np.exp(-d)
    if hp.nu == 1.5:
        a = math.sqrt(3.0) * d
        return hp.sigma2 * (1.0 + a) * np.exp(-a)
    a = math.sqrt(5.0) * d
    return hp.sigma2 * (1.0 + a + a * a / 3.0) * np.exp(-a)


def matern_kernel(xi, xj, hp: GpHyperparams = GpHyperparams()) -> float:
    """Covariance between two points (closed form for half-integer nu)."""
    r = float(np.linalg.norm(np.asarray(xi, dtype=np.float64) - np.asarray(xj, dtype=np.float64)))
    return float(_matern_from_distance(r, hp))


def matern_general(r: float, sigma2: float, lengthscale: float, nu: float) -> float:
    """Matérn covariance via the gamma / modified Bessel form.

    Slow reference used to cross-check the closed forms; valid for any nu > 0.
    """
    if r == 0.0:
        return sigma2
    z = math.sqrt(2.0 * nu) * r / lengthscale
    return sigma2 * 2.0 ** (1.0 - nu) / gamma(nu) * z ** nu * kv(nu, z)


def kernel_matrix(a, b, hp: GpHyperparams) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    return _matern_from_distance(cdist(a, b), hp)


def fit(training: TrainingSet, hp: GpHyperparams = GpHyperparams(), retries: int = 3) -> GpModel:
    """Exact GP fit by Cholesky factorisation of ``K + jitter * I``.

    If the factorisation fails the jitter is multiplied by 10, up to
    ``retries`` times; the returned model carries the jitter actually used.
    """
    if len(training) == 0:
        raise ValueError("cannot fit a GP to an empty training set")
    training = training.deduplicated()
    K = kernel_matrix(training.points, training.points, hp)
    jitter = hp.jitter
    for attempt in range(retries + 1):
        try:
            L = cholesky(K + jitter * np.eye(len(K)), lower=True, check_finite=True)
            break
        except np.linalg.LinAlgError:
            if attempt == retries:
                raise GpFitError(
                    f"kernel matrix not positive definite after {retries} jitter escalations "
                    f"(last jitter {jitter:g})"
                ) from None
            jitter = jitter * 10.0 if jitter > 0 else 1e-10
    tmp = solve_triangular(L, training.responses, lower=True)
    alpha = solve_triangular(L.T, tmp, lower=False)
    if jitter != hp.jitter:
        hp = replace(hp, jitter=jitter)
    return GpModel(training, hp, L, alpha)


def predict(model: GpModel, queries, chunk: int = 8192) -> PosteriorPrediction:
    """Posterior mean and standard deviation at each query point.

    Queries are processed in chunks to bound the size of the cross-covariance.
    """
    q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    mean = np.empty(len(q))
    var = np.empty(len(q))
    prior = model.hp.sigma2
    for start in range(0, len(q), chunk):
        part = q[start:start + chunk]
        Ks = kernel_matrix(model.training.points, part, model.hp)
        mean[start:start + chunk] = Ks.T @ model.alpha
        w = solve_triangular(model.chol, Ks, lower=True)
        var[start:start + chunk] = prior - np.einsum("ij,ij->j", w, w)
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(var))):
        raise FloatingPointError("non-finite posterior prediction")
    return PosteriorPrediction(mean, np.sqrt(np.maximum(var, 0.0)))


def log_marginal_likelihood(training: TrainingSet, hp: GpHyperparams = GpHyperparams()) -> float:
    model = fit(training, hp)
    y = model.training.responses
    n = len(y)
    return float(
        -0.5 * y @ model.alpha
        - np.sum(np.log(np.diag(model.chol)))
        - 0.5 * n * math.log(2.0 * math.pi)
    )


def grid_search_hp(
    training: TrainingSet,
    sigma2_grid: Iterable[float],
    lengthscale_grid: Iterable[float],
    base: GpHyperparams = GpHyperparams(),
) -> GpHyperparams:
    """Pick the (sigma2, lengthscale) pair with the largest log marginal likelihood.

    nu and jitter are taken from ``base``. Grid points whose fit fails are skipped.
    """
    best, best_lml = None, -math.inf
    for s2, ls in itertools.product(list(sigma2_grid), list(lengthscale_grid)):
        hp = replace(base, sigma2=float(s2), lengthscale=float(ls))
        try:
            lml = log_marginal_likelihood(training, hp)
        except GpFitError:
            continue
        if lml > best_lml:
            best, best_lml = hp, lml
    if best is None:
        raise GpFitError("every grid point failed to fit")
    return best
