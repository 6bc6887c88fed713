"""
Geometry helpers on the unit S^4 in R^5: tangent frames, exponential map,
geodesic distance and the stereographic chart
"""
import numpy as np

NORTH = np.array([0.0, 0.0, 0.0, 0.0, 1.0])


def unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def tangent_frames(points: np.ndarray) -> np.ndarray:
    """Orthonormal bases of the tangent spaces, shape (N, 5, 4).

    Uses the Householder reflection sending e5 to x; its first four columns
    span x^perp.
    """
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    v = x - NORTH
    norm = np.linalg.norm(v, axis=1)
    eye = np.eye(5)
    frames = np.broadcast_to(eye[:, :4], (len(x), 5, 4)).copy()
    move = norm > 1e-12
    if np.any(move):
        vm = v[move] / norm[move][:, None]
        h = eye[None] - 2.0 * vm[:, :, None] * vm[:, None, :]
        frames[move] = h[:, :, :4]
    return frames


def exp_map(points: np.ndarray, frames: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """exp_x(B xi) for batches: points (N, 5), frames (N, 5, 4), xi (N, 4)"""
    v = np.einsum("nij,nj->ni", frames, xi)
    r = np.linalg.norm(v, axis=1)
    safe = np.where(r > 0, r, 1.0)
    sinc = np.where(r > 0, np.sin(r) / safe, 1.0)
    out = np.cos(r)[:, None] * points + sinc[:, None] * v
    return unit(out)


def geodesic_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Great-circle distance, stable for nearby points"""
    chord = np.linalg.norm(np.asarray(a) - np.asarray(b), axis=-1)
    return 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))


def stereographic_inverse(center: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Chart centred at `center`: z in R^4 -> (2 B z + (1 - |z|^2) q) / (1 + |z|^2)"""
    q = unit(center)
    frame = tangent_frames(q)[0]
    z = np.atleast_2d(z)
    rsq = np.sum(z * z, axis=1)
    out = (2.0 * z @ frame.T + (1.0 - rsq)[:, None] * q[None, :]) / (1.0 + rsq)[:, None]
    return unit(out)
