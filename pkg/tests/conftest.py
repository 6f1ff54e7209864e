"""Shared fixtures and independent reference implementations.

The reference solvers here deliberately take different computational routes
than the package (null-space reduction instead of the bordered system, full
re-assembly instead of rank-one updates) so agreement between the two is a
meaningful check.
"""
from __future__ import annotations

import numpy as np
import pytest
from scipy.linalg import null_space
from scipy.spatial.distance import cdist

from krigplan import GridSpec, Measurement, build_grid
from krigplan.variogram import eval_model


@pytest.fixture
def study_grid() -> GridSpec:
    """The production-sized grid: 12 m-levels x 60 k-levels = 720 points."""
    return GridSpec(m_min=0.5, m_max=6.0, m_stride=0.5,
                    k_min=1.0, k_max=60.0, k_stride=1.0, k_scale=0.1)


@pytest.fixture
def unit_grid_5x5() -> GridSpec:
    return GridSpec(1.0, 5.0, 1.0, 1.0, 5.0, 1.0, k_scale=1.0)


def scaled_points(locations, spec):
    return np.array([(c.m, c.k * spec.k_scale) for c in locations], dtype=float)


def brute_force_weights(gamma_nn: np.ndarray, gamma_target: np.ndarray) -> np.ndarray:
    """Constrained-MSPE minimizer by null-space reduction of the sum-to-one
    constraint: substitute w = w0 + Z u and solve the stationarity system in u."""
    n = len(gamma_target)
    w0 = np.full(n, 1.0 / n)
    if n == 1:
        return w0
    Z = null_space(np.ones((1, n)))
    u = np.linalg.solve(Z.T @ gamma_nn @ Z, Z.T @ (gamma_target - gamma_nn @ w0))
    return w0 + Z @ u


def mspe(weights: np.ndarray, gamma_nn: np.ndarray, gamma_target: np.ndarray) -> float:
    """Prediction MSPE of a unit-sum weight vector under a semivariogram."""
    return float(-(weights @ gamma_nn @ weights) + 2.0 * (weights @ gamma_target))


def semivariance_matrices(measurements, target, model, spec):
    """(gamma_nn, gamma_target) arrays for the reference solvers."""
    pts = scaled_points([m.location for m in measurements], spec)
    gamma_nn = eval_model(model, cdist(pts, pts))
    np.fill_diagonal(gamma_nn, 0.0)
    tp = scaled_points([target], spec)
    gamma_target = eval_model(model, cdist(pts, tp))[:, 0]
    return gamma_nn, gamma_target


def field_covariance(locations, model, spec) -> np.ndarray:
    """Covariance of a stationary Gaussian field whose semivariogram is `model`.

    Cov(h) = (nugget + sill) - gamma(h) for h > 0, variance nugget + sill;
    eval_model already returns 0 at h = 0, so one expression covers both.
    """
    pts = scaled_points(locations, spec)
    total = model.nugget + model.sill
    return total - eval_model(model, cdist(pts, pts))


def random_measurements(rng, spec, count, low=0.5, high=9.0):
    grid = build_grid(spec)
    idx = rng.choice(len(grid), size=count, replace=False)
    return [Measurement(grid[i], float(rng.uniform(low, high))) for i in idx]
