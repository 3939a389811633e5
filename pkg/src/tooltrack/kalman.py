"""Constant-velocity Kalman filter on (cx, cy, aspect, h) box states.

Noise magnitudes follow the usual SORT/DeepSORT convention of scaling with
box height; ``process_noise`` and ``measurement_noise`` multiply those
standard deviations, so setting both to zero gives a noiseless filter.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .track_model import BBox

NDIM = 4
STD_POSITION = 1.0 / 20
STD_VELOCITY = 1.0 / 160

_F = np.eye(2 * NDIM)
_F[:NDIM, NDIM:] = np.eye(NDIM)
_H = np.eye(NDIM, 2 * NDIM)


@dataclass(frozen=True, eq=False)
class KalmanParams:
    mean: np.ndarray
    covariance: np.ndarray
    process_noise: float = 1.0
    measurement_noise: float = 1.0

    def bbox(self) -> BBox:
        return xyah_to_bbox(self.mean[:NDIM])


def bbox_to_xyah(b: BBox) -> np.ndarray:
    cx, cy = b.center
    return np.array([cx, cy, b.w / b.h, b.h], dtype=float)


def xyah_to_bbox(z) -> BBox:
    cx, cy, a, h = (float(v) for v in z[:NDIM])
    w = a * h
    return BBox(cx - w / 2.0, cy - h / 2.0, w, h)


def check_psd(cov: np.ndarray, tol: float = 1e-9) -> None:
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (2 * NDIM, 2 * NDIM) or not np.all(np.isfinite(cov)):
        raise np.linalg.LinAlgError("covariance must be a finite 8x8 matrix")
    scale = max(1.0, float(np.abs(cov).max()))
    if not np.allclose(cov, cov.T, rtol=0, atol=tol * scale):
        raise np.linalg.LinAlgError("covariance not symmetric")
    if np.linalg.eigvalsh(cov).min() < -tol * scale:
        raise np.linalg.LinAlgError("covariance not positive semi-definite")


def kalman_initiate(b: BBox, process_noise: float = 1.0, measurement_noise: float = 1.0) -> KalmanParams:
    z = bbox_to_xyah(b)
    h = z[3]
    std = np.array(
        [
            2 * STD_POSITION * h,
            2 * STD_POSITION * h,
            1e-2,
            2 * STD_POSITION * h,
            10 * STD_VELOCITY * h,
            10 * STD_VELOCITY * h,
            1e-5,
            10 * STD_VELOCITY * h,
        ]
    )
    mean = np.concatenate([z, np.zeros(NDIM)])
    return KalmanParams(mean, np.diag(std**2), process_noise, measurement_noise)


def process_covariance(kp: KalmanParams) -> np.ndarray:
    h = kp.mean[3]
    std = np.array(
        [STD_POSITION * h, STD_POSITION * h, 1e-2, STD_POSITION * h,
         STD_VELOCITY * h, STD_VELOCITY * h, 1e-5, STD_VELOCITY * h]
    ) * kp.process_noise
    return np.diag(std**2)


def measurement_covariance(kp: KalmanParams) -> np.ndarray:
    h = kp.mean[3]
    std = np.array([STD_POSITION * h, STD_POSITION * h, 1e-1, STD_POSITION * h]) * kp.measurement_noise
    return np.diag(std**2)


def kalman_predict(kp: KalmanParams) -> KalmanParams:
    check_psd(kp.covariance)
    mean = _F @ kp.mean
    cov = _F @ kp.covariance @ _F.T + process_covariance(kp)
    return dataclasses.replace(kp, mean=mean, covariance=0.5 * (cov + cov.T))


def kalman_update(kp: KalmanParams, measurement: BBox) -> KalmanParams:
    check_psd(kp.covariance)
    z = bbox_to_xyah(measurement)
    P = kp.covariance
    S = _H @ P @ _H.T + measurement_covariance(kp)
    gain = np.linalg.solve(S, _H @ P).T
    mean = kp.mean + gain @ (z - _H @ kp.mean)
    cov = P - gain @ S @ gain.T
    return dataclasses.replace(kp, mean=mean, covariance=0.5 * (cov + cov.T))


def kalman_affine(kp: KalmanParams, affine: np.ndarray) -> KalmanParams:
    """Map centre position and velocity through a 2x3 camera-motion transform."""
    A = np.asarray(affine, dtype=float)
    L, t = A[:, :2], A[:, 2]
    T = np.eye(2 * NDIM)
    T[0:2, 0:2] = L
    T[4:6, 4:6] = L
    mean = T @ kp.mean
    mean[0:2] += t
    cov = T @ kp.covariance @ T.T
    return dataclasses.replace(kp, mean=mean, covariance=0.5 * (cov + cov.T))
