"""Independent reference computations used by the test-suite.

Nothing here calls into the package's sampling paths: expected values come from
grid quadrature, analytic formulas or brute-force linear algebra.
"""

import numpy as np

GRID = np.linspace(-80.0, 40.0, 240_001)


def dy_conditional_log_density(kind, h, z, alpha, kappa, trials=1, v=1.0):
    """Unnormalised log of the full conditional of h given Z (kind 1, 2 or 3)."""
    if kind == 1:
        return (z / v + alpha) * h - (kappa + 1.0 / (2.0 * v)) * h * h
    if kind == 2:
        return (z + alpha) * h - (kappa + trials) * np.logaddexp(0.0, h)
    return (z + alpha) * h - (kappa + 1.0) * np.exp(np.minimum(h, 700.0))


def quadrature_moments(logf, grid=GRID):
    """Mean, variance and fourth central moment of exp(logf) by trapezoidal quadrature."""
    lf = logf(grid)
    w = np.exp(lf - lf.max())
    norm = np.trapezoid(w, grid)
    mean = np.trapezoid(w * grid, grid) / norm
    var = np.trapezoid(w * (grid - mean) ** 2, grid) / norm
    m4 = np.trapezoid(w * (grid - mean) ** 4, grid) / norm
    return mean, var, m4


def conjugate_beta_posterior(X, S, h, sigma2, sigma2_eta, sigma2_xi, sigma2_beta):
    """Exact Gaussian posterior of beta with eta and xi integrated out."""
    n = len(h)
    cov_h = sigma2_eta * S @ S.T + (sigma2_xi + sigma2) * np.eye(n)
    prec_h = np.linalg.inv(cov_h)
    post_prec = X.T @ prec_h @ X + np.eye(X.shape[1]) / sigma2_beta
    post_cov = np.linalg.inv(post_prec)
    return post_cov @ X.T @ prec_h @ h, post_cov


def batch_means_se(x, n_batches=50):
    """Monte Carlo standard error of the mean of an autocorrelated series."""
    x = np.asarray(x, dtype=float)
    m = len(x) // n_batches
    means = x[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return means.std(ddof=1) / np.sqrt(n_batches)
