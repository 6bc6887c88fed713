"""
Critical points of a prescribed f, their Morse indices and Laplacian signs,
and solvability of the counting system

    m_0 = 1 + k_0,  m_i = k_{i-1} + k_i (1 <= i <= 4),  k_4 = 0

over nonnegative integers, where m_i counts the critical points with
f > 0, Delta f < 0 and index 4 - i. Existence holds when it has no solution.
"""
import itertools
import logging
import sys
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from config import settings
from core.errors import DegenerateFunctionError, IncompleteCriticalSetError, ResolutionError
from core.geometry import exp_map, geodesic_distance, tangent_frames
from core.quadrature import build_grid
from core.spectral import SpectralField, apply_laplacian, evaluate_points
from models.schemas import CriticalPoint, GridSpec, MorseReport
from utils.logging import log_json

logger = logging.getLogger(__name__)

EULER_CHARACTERISTIC = 2


@lru_cache(maxsize=4)
def _stencil(h: float) -> np.ndarray:
    """Chart offsets: center, +h e_i, -h e_i, then (++, +-, -+, --) for each pair i < j"""
    eye = np.eye(4)
    rows = [np.zeros(4)]
    rows += [h * eye[i] for i in range(4)]
    rows += [-h * eye[i] for i in range(4)]
    for i, j in itertools.combinations(range(4), 2):
        for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            rows.append(h * (si * eye[i] + sj * eye[j]))
    stencil = np.array(rows)
    stencil.setflags(write=False)
    return stencil


def chart_derivatives(f: SpectralField, points: np.ndarray,
                      h: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradient (N, 4) and Hessian (N, 4, 4) in exponential charts, plus the frames used.

    At the chart center the coordinate Hessian equals the covariant one.
    """
    h = settings.morse_fd_step if h is None else h
    stencil = _stencil(h)
    n, s = len(points), len(stencil)
    frames = tangent_frames(points)
    pts = exp_map(np.repeat(points, s, axis=0), np.repeat(frames, s, axis=0), np.tile(stencil, (n, 1)))
    vals = f.evaluate(pts).reshape(n, s)
    center, plus, minus = vals[:, 0], vals[:, 1:5], vals[:, 5:9]
    grad = (plus - minus) / (2.0 * h)
    hess = np.zeros((n, 4, 4))
    idx = np.arange(4)
    hess[:, idx, idx] = (plus - 2.0 * center[:, None] + minus) / (h * h)
    col = 9
    for i, j in itertools.combinations(range(4), 2):
        pp, pm, mp, mm = (vals[:, col + k] for k in range(4))
        hess[:, i, j] = hess[:, j, i] = (pp - pm - mp + mm) / (4.0 * h * h)
        col += 4
    return grad, hess, frames


def _newton_step(grad: np.ndarray, hess: np.ndarray) -> np.ndarray:
    evals, evecs = np.linalg.eigh(hess)
    floor = 1e-8
    evals = np.where(np.abs(evals) < floor, np.where(evals < 0, -floor, floor), evals)
    coeffs = np.einsum("nji,nj->ni", evecs, grad) / evals
    xi = -np.einsum("nij,nj->ni", evecs, coeffs)
    norm = np.linalg.norm(xi, axis=1)
    scale = np.minimum(1.0, settings.morse_max_step / np.where(norm > 0, norm, 1.0))
    return xi * scale[:, None]


def _dedupe(points: np.ndarray, tol: float) -> np.ndarray:
    kept: List[np.ndarray] = []
    for p in points:
        if not kept or np.min(geodesic_distance(np.array(kept), p)) > tol:
            kept.append(p)
    return np.array(kept)


def find_critical_points(f: SpectralField, progress: bool = False) -> List[CriticalPoint]:
    """Newton in exponential charts from every node of a coarse grid.

    Raises DegenerateFunctionError for constant f, ResolutionError when more
    than half the seeds fail, and IncompleteCriticalSetError when the indices
    do not add up to the Euler characteristic of S^4.
    """
    compact = f.trimmed(1e-12)
    if compact.band_limit == 0:
        raise DegenerateFunctionError("constant f has no isolated critical points")
    seeds = build_grid(GridSpec(band_limit=settings.morse_seed_band_limit, oversample=1)).nodes
    x = np.array(seeds)
    active = np.ones(len(x), dtype=bool)
    converged = np.zeros(len(x), dtype=bool)

    bar = tqdm(range(settings.morse_max_newton), desc="critical points", unit="it",
               disable=not (progress and sys.stderr.isatty()))
    for _ in bar:
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        grad, hess, frames = chart_derivatives(compact, x[idx])
        done = np.linalg.norm(grad, axis=1) <= settings.morse_grad_tol
        converged[idx[done]] = True
        active[idx[done]] = False
        moving = idx[~done]
        if len(moving) == 0:
            break
        xi = _newton_step(grad[~done], hess[~done])
        x[moving] = exp_map(x[moving], frames[~done], xi)
        bar.set_postfix(active=len(moving))
    bar.close()

    failed = int(np.sum(~converged))
    if failed > len(x) // 2:
        raise ResolutionError(f"Newton did not converge from {failed} of {len(x)} seeds")
    if failed:
        logger.debug(f"{failed} of {len(x)} seeds did not converge")

    unique = _dedupe(x[converged], settings.morse_dedupe_tol)
    points = classify(compact, unique)
    nondegenerate = [p for p in points if not p.degenerate]
    if len(nondegenerate) == len(points):
        euler = sum((-1) ** p.morse_index for p in points)
        if euler != EULER_CHARACTERISTIC:
            raise IncompleteCriticalSetError(
                f"index sum {euler} over {len(points)} critical points, expected {EULER_CHARACTERISTIC}"
            )
    else:
        logger.warning(f"{len(points) - len(nondegenerate)} degenerate critical points; Euler check skipped")
    logger.info(f"Found {len(points)} critical points from {len(x)} seeds")
    return points


def classify(f: SpectralField, locations: np.ndarray) -> List[CriticalPoint]:
    """Gradient, Hessian spectrum, index and exact Laplacian at each location"""
    if len(locations) == 0:
        return []
    grad, hess, _ = chart_derivatives(f, locations)
    evals = np.linalg.eigvalsh(0.5 * (hess + np.transpose(hess, (0, 2, 1))))
    values = f.evaluate(locations)
    laplacian = evaluate_points(apply_laplacian(f), locations)
    out = []
    for i, p in enumerate(locations):
        ev = evals[i]
        out.append(CriticalPoint(
            location=p.tolist(),
            f_value=float(values[i]),
            grad_norm=float(np.linalg.norm(grad[i])),
            hessian_eigenvalues=ev.tolist(),
            morse_index=int(np.sum(ev < 0.0)),
            laplacian_value=float(laplacian[i]),
            degenerate=bool(np.min(np.abs(ev)) < settings.morse_nondegeneracy_tol),
        ))
    out.sort(key=lambda c: (-c.f_value, c.location))
    return out


def _beltrami_laplacian(value: float) -> float:
    return value if settings.laplacian_convention == "beltrami" else -value


def solve_counting_system(m: Sequence[int]) -> Tuple[bool, List[int]]:
    """Forward recursion k_0 = m_0 - 1, k_i = m_i - k_{i-1}; solvable iff all k >= 0 and m_4 = k_3"""
    k = [m[0] - 1]
    for i in range(1, 4):
        k.append(m[i] - k[-1])
    feasible = all(v >= 0 for v in k) and m[4] == k[3]
    return feasible, k


@lru_cache(maxsize=32)
def _k_candidates(bound: int) -> np.ndarray:
    axis = np.arange(bound + 1)
    grids = np.meshgrid(axis, axis, axis, axis, indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def feasibility_bruteforce(m: Sequence[int]) -> Tuple[bool, Optional[List[int]]]:
    """Exhaustive search over 0 <= k_i <= sum(m)"""
    if len(m) != 5 or any(v < 0 for v in m):
        raise ValueError("m must be 5 nonnegative integers")
    k = _k_candidates(int(sum(m)))
    k0, k1, k2, k3 = k.T
    ok = (m[0] == 1 + k0) & (m[1] == k0 + k1) & (m[2] == k1 + k2) & (m[3] == k2 + k3) & (m[4] == k3)
    hits = np.flatnonzero(ok)
    if len(hits) == 0:
        return False, None
    return True, k[hits[0]].tolist() + [0]


def degree_criterion(m: Sequence[int]) -> bool:
    """Feasibility in closed form: alternating sum 1 and every partial k_i >= 0"""
    total = sum((-1) ** i * v for i, v in enumerate(m))
    if total != 1:
        return False
    for i in range(4):
        partial = sum((-1) ** (i - j) * m[j] for j in range(i + 1)) - (-1) ** i
        if partial < 0:
            return False
    return True


def build_report(points: Sequence[CriticalPoint], f: Optional[SpectralField] = None) -> MorseReport:
    """m_i counts over the positive part, k_i feasibility and hypothesis violations.

    When f is given the values at the points are re-read from it, so a shifted f
    can be checked against the same critical set.
    """
    boundary = settings.morse_boundary_tol
    lap_tol = settings.morse_laplacian_tol
    violations: List[str] = []
    m = [0] * 5
    degree_sum = 0
    if f is not None and len(points):
        values = f.evaluate(np.array([p.location for p in points]))
        points = [p.model_copy(update={"f_value": float(v)}) for p, v in zip(points, values)]
    for p in points:
        where = "(" + ", ".join(f"{c:.6f}" for c in p.location) + ")"
        lap = _beltrami_laplacian(p.laplacian_value)
        if abs(p.f_value) <= boundary:
            violations.append(f"f = 0 at critical point {where}")
            continue
        if p.f_value < 0.0:
            continue
        if p.degenerate:
            violations.append(f"degenerate critical point at {where}")
            continue
        if abs(lap) < lap_tol:
            violations.append(f"Laplacian vanishes at critical point {where}")
            continue
        if lap < 0.0:
            m[4 - p.morse_index] += 1
            degree_sum += (-1) ** p.morse_index

    feasible, k_rec = solve_counting_system(m)
    euler = sum((-1) ** p.morse_index for p in points if not p.degenerate)
    report = MorseReport(
        points=list(points),
        m=m,
        k=k_rec + [0] if feasible else None,
        k_recursion=k_rec,
        feasible=feasible,
        condition_satisfied=not feasible,
        degree_sum=degree_sum,
        euler_sum=euler,
        hypothesis_violations=violations,
    )
    log_json(logger, {"morse_report": report})
    return report


def check_function(f: SpectralField, progress: bool = False) -> MorseReport:
    return build_report(find_critical_points(f, progress=progress), f)
