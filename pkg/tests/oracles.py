"""Independent reference computations used by several test modules."""

import math

import mpmath
import numpy as np
from scipy import integrate
from scipy.stats import norm


def matern_bessel_mp(r, sigma2, lengthscale, nu, dps=40):
    """Matérn covariance from its gamma/Bessel definition in high precision."""
    if r == 0:
        return float(sigma2)
    with mpmath.workdps(dps):
        z = mpmath.sqrt(2 * mpmath.mpf(nu)) * mpmath.mpf(r) / lengthscale
        val = sigma2 * 2 ** (1 - mpmath.mpf(nu)) / mpmath.gamma(nu) * z ** nu * mpmath.besselk(nu, z)
        return float(val)


def matern_dense(a, b, hp):
    """Kernel matrix by explicit double loop over the Bessel-free 5/2 formula written out longhand."""
    out = np.empty((len(a), len(b)))
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            r = math.sqrt(sum((p - q) ** 2 for p, q in zip(x, y)))
            t = math.sqrt(5.0) * r / hp.lengthscale
            out[i, j] = hp.sigma2 * (1 + t + 5 * r * r / (3 * hp.lengthscale ** 2)) * math.exp(-t)
    return out


def gp_dense(train_x, train_y, query_x, hp):
    """Posterior mean/std via an explicit matrix inverse."""
    K = matern_dense(train_x, train_x, hp) + hp.jitter * np.eye(len(train_x))
    Kinv = np.linalg.inv(K)
    Ks = matern_dense(train_x, query_x, hp)
    mean = Ks.T @ Kinv @ train_y
    var = hp.sigma2 - np.einsum("ij,ik,kj->j", Ks, Kinv, Ks)
    return mean, np.sqrt(np.maximum(var, 0.0))


def lml_dense(train_x, train_y, hp):
    K = matern_dense(train_x, train_x, hp) + hp.jitter * np.eye(len(train_x))
    sign, logdet = np.linalg.slogdet(K)
    assert sign > 0
    return float(-0.5 * train_y @ np.linalg.solve(K, train_y) - 0.5 * logdet
                 - 0.5 * len(train_y) * math.log(2 * math.pi))


def ei_quadrature(mean, std, y_best):
    """E[max(G - y_best, 0)] for G ~ N(mean, std^2), by numerical integration."""
    if std == 0:
        return max(mean - y_best, 0.0)
    lo = max(y_best, mean - 12 * std)
    val, _ = integrate.quad(lambda g: (g - y_best) * norm.pdf(g, mean, std), lo, mean + 12 * std,
                            epsabs=1e-12, epsrel=1e-12, limit=200)
    return val
