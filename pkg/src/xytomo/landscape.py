"""Loss-surface cross-sections on a random plane through trained parameters.

Given the flattened optimum theta*, two standard-normal directions delta and
eta span a plane; the surface is f(alpha, beta) = L(theta* + alpha delta +
beta eta) with L the training NLL over a fixed evaluation set. Training
checkpoints are mapped into the plane by least squares, with the residual
norm reported so in-plane-ness can be judged (the path is high-dimensional
and generally leaves the plane).
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePlane


@dataclass
class LandscapePlane:
    theta_star: np.ndarray
    delta: np.ndarray
    eta: np.ndarray
    alpha_grid: np.ndarray
    beta_grid: np.ndarray

    def __post_init__(self):
        self.theta_star = np.asarray(self.theta_star, dtype=np.float64)
        self.delta = np.asarray(self.delta, dtype=np.float64)
        self.eta = np.asarray(self.eta, dtype=np.float64)
        if self.delta.shape != self.theta_star.shape or self.eta.shape != self.theta_star.shape:
            raise ValueError("delta and eta must match theta_star in length")
        self.alpha_grid = np.asarray(self.alpha_grid, dtype=np.float64)
        self.beta_grid = np.asarray(self.beta_grid, dtype=np.float64)


def random_directions(n_params: int, rng: np.random.Generator):
    """Two independent standard-normal direction vectors."""
    return rng.standard_normal(n_params), rng.standard_normal(n_params)


def default_grid(half_range: float = 1.0, points: int = 41) -> np.ndarray:
    """Symmetric grid containing 0 (odd point counts keep the origin exact)."""
    return np.linspace(-half_range, half_range, points)


def loss_surface(plane: LandscapePlane, loss_fn) -> np.ndarray:
    """Evaluate f on every grid point; result[i, j] = f(alpha_i, beta_j).

    Grid points are independent, and alpha = beta = 0 evaluates loss_fn at
    theta* itself (no arithmetic applied), so it reproduces the recorded
    training loss exactly.
    """
    out = np.empty((plane.alpha_grid.size, plane.beta_grid.size))
    for i, a in enumerate(plane.alpha_grid):
        for j, bb in enumerate(plane.beta_grid):
            if a == 0.0 and bb == 0.0:
                theta = plane.theta_star
            else:
                theta = plane.theta_star + a * plane.delta + bb * plane.eta
            out[i, j] = loss_fn(theta)
    return out


def project_path(checkpoints, plane: LandscapePlane) -> np.ndarray:
    """Least-squares (alpha, beta) for each checkpoint, with residual norms.

    Solves the 2x2 normal equations of theta_t - theta* ~ alpha delta +
    beta eta; returns rows (alpha, beta, residual_norm). The residual is
    orthogonal to both directions by construction.
    """
    d, e = plane.delta, plane.eta
    gram = np.array([[d @ d, d @ e], [e @ d, e @ e]])
    det = np.linalg.det(gram)
    if det <= 1e-12 * max(d @ d, e @ e) ** 2:
        raise DegeneratePlane("direction vectors are numerically collinear")
    rows = []
    for theta in checkpoints:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != plane.theta_star.shape:
            raise ValueError("checkpoint length does not match theta_star")
        diff = theta - plane.theta_star
        rhs = np.array([d @ diff, e @ diff])
        alpha, beta = np.linalg.solve(gram, rhs)
        residual = diff - alpha * d - beta * e
        rows.append((alpha, beta, float(np.linalg.norm(residual))))
    return np.asarray(rows)
