"""Constant-jerk Kalman filter for recovering velocity (and acceleration)
from 1 kHz position samples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySeries


@dataclass(frozen=True)
class KalmanConfig:
    sigma_w: float = 500.0  # jerk noise intensity
    sigma_v: float = 1e-3  # position noise std [m]
    dt: float = 1e-3  # [s]

    def __post_init__(self):
        if not (self.sigma_w > 0 and self.sigma_v > 0 and self.dt > 0):
            raise ValueError("KalmanConfig entries must be positive")


def transition_matrix(dt: float) -> np.ndarray:
    return np.array([[1.0, dt, dt * dt / 2.0], [0.0, 1.0, dt], [0.0, 0.0, 1.0]])


def process_noise(dt: float, sigma_w: float) -> np.ndarray:
    q = np.array(
        [
            [dt**5 / 20.0, dt**4 / 8.0, dt**3 / 6.0],
            [dt**4 / 8.0, dt**3 / 3.0, dt**2 / 2.0],
            [dt**3 / 6.0, dt**2 / 2.0, dt],
        ]
    )
    return q * sigma_w**2


def measurement_noise(dt: float, sigma_v: float) -> float:
    return sigma_v**2 / dt


OBSERVATION = np.array([1.0, 0.0, 0.0])


def kalman_smooth(positions, cfg: KalmanConfig, x0=None, P0=None) -> np.ndarray:
    """Forward filter over uniformly sampled positions.

    Returns an (n, 3) array of (position, velocity, acceleration) estimates.
    The state starts at zero with zero covariance unless ``x0``/``P0`` are
    given; a zero start needs a transient of a few hundred samples.
    """
    z = np.asarray(positions, dtype=float).ravel()
    if z.size == 0:
        raise EmptySeries("no samples to filter")
    Fd = transition_matrix(cfg.dt)
    Qd = process_noise(cfg.dt, cfg.sigma_w)
    Rd = measurement_noise(cfg.dt, cfg.sigma_v)
    H = OBSERVATION
    x = np.zeros(3) if x0 is None else np.asarray(x0, dtype=float).copy()
    P = np.zeros((3, 3)) if P0 is None else np.asarray(P0, dtype=float).copy()
    out = np.empty((z.size, 3))
    eye = np.eye(3)
    for i, zi in enumerate(z):
        x = Fd @ x
        P = Fd @ P @ Fd.T + Qd
        S = H @ P @ H + Rd
        K = P @ H / S
        x = x + K * (zi - H @ x)
        P = (eye - np.outer(K, H)) @ P
        out[i] = x
    return out


def finite_difference_velocity(positions, dt: float) -> np.ndarray:
    """Backward first difference; the first sample repeats the second."""
    z = np.asarray(positions, dtype=float)
    if z.size < 2:
        raise EmptySeries("need at least two samples")
    v = np.empty_like(z)
    v[1:] = np.diff(z) / dt
    v[0] = v[1]
    return v
