"""Entanglement and squeezing figures of merit.

Negativity is the sum of absolute values of the negative eigenvalues of the
partially transposed two-mode density matrix; the logarithmic negativity is
log2(1 + 2N).  Correlated variances are normalized so the two-mode vacuum
level is 1, and squeezing in dB is -10 log10 of the minimum variance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .fock import DensityOperator, FockCutoff

EIG_ZERO_TOL = 1e-9


def ladder_matrix(cutoff: FockCutoff | int) -> np.ndarray:
    """Single-mode annihilation operator on the truncated basis."""
    n_max = cutoff.n_max if isinstance(cutoff, FockCutoff) else int(cutoff)
    d = n_max + 1
    a = np.zeros((d, d), dtype=np.complex128)
    ns = np.arange(1, d)
    a[ns - 1, ns] = np.sqrt(ns)
    return a


def partial_transpose(rho: DensityOperator) -> np.ndarray:
    """Transpose the second mode's indices; returns a Hermitian matrix."""
    if rho.mode_count != 2:
        raise ValueError("partial transpose requires a two-mode operator")
    d = rho.cutoff.dim
    r = rho.matrix.reshape(d, d, d, d)
    return r.transpose(0, 3, 2, 1).reshape(d * d, d * d)


def _checked_eigvalsh(matrix: np.ndarray, residual_tol: float = 1e-9) -> np.ndarray:
    """Hermitian eigensolve with trace and residual self-checks."""
    vals, vecs = np.linalg.eigh(matrix)
    trace_dev = abs(vals.sum() - matrix.trace().real)
    if trace_dev > 1e-10 * max(1.0, abs(matrix.trace().real)):
        raise ArithmeticError(f"eigenvalue sum deviates from trace by {trace_dev:.3g}")
    residuals = matrix @ vecs - vecs * vals
    worst = np.max(np.linalg.norm(residuals, axis=0))
    if worst > residual_tol * max(1.0, np.abs(vals).max()):
        raise ArithmeticError(f"eigenvector residual {worst:.3g} above tolerance")
    return vals


def negativity(rho: DensityOperator) -> float:
    """Sum of |lambda| over negative partial-transpose eigenvalues.

    Eigenvalues within EIG_ZERO_TOL of zero are treated as truncation noise.
    """
    pt = partial_transpose(rho)
    herm_dev = np.max(np.abs(pt - pt.conj().T))
    if herm_dev > 1e-8:
        raise ValueError(f"partial transpose not Hermitian within tolerance: {herm_dev:.3g}")
    vals = _checked_eigvalsh(0.5 * (pt + pt.conj().T))
    neg = vals[vals < -EIG_ZERO_TOL]
    return float(-neg.sum())


def log_negativity(rho: DensityOperator) -> float:
    return float(np.log2(1.0 + 2.0 * negativity(rho)))


def squeezing_db(min_variance: float) -> float:
    """Squeezing below shot noise in dB; positive means squeezed."""
    if min_variance <= 0:
        raise ValueError(f"variance must be positive, got {min_variance}")
    return float(-10.0 * np.log10(min_variance))


def quadrature_moments(rho: DensityOperator) -> dict:
    """First and second ladder-operator moments needed for quadrature variances."""
    if rho.mode_count != 2:
        raise ValueError("moments are defined for two-mode operators")
    d = rho.cutoff.dim
    a = ladder_matrix(rho.cutoff)
    eye = np.eye(d)
    a1 = np.kron(a, eye)
    a2 = np.kron(eye, a)

    def expect(op):
        return complex(np.einsum("ij,ji->", rho.matrix, op))

    return {
        "a1": expect(a1),
        "a2": expect(a2),
        "n1": expect(a1.conj().T @ a1).real,
        "n2": expect(a2.conj().T @ a2).real,
        "a1a1": expect(a1 @ a1),
        "a2a2": expect(a2 @ a2),
        "a1a2": expect(a1 @ a2),
        "a1a2dag": expect(a1 @ a2.conj().T),
    }


def _variance_from_moments(m: dict, theta1, theta2, sign: int):
    e1 = np.exp(-1j * np.asarray(theta1))
    e2 = np.exp(-1j * np.asarray(theta2))
    mean1 = np.sqrt(2.0) * (m["a1"] * e1).real
    mean2 = np.sqrt(2.0) * (m["a2"] * e2).real
    x1_sq = m["n1"] + 0.5 + (m["a1a1"] * e1 * e1).real
    x2_sq = m["n2"] + 0.5 + (m["a2a2"] * e2 * e2).real
    cross = (m["a1a2"] * e1 * e2).real + (m["a1a2dag"] * e1 / e2).real
    return x1_sq + x2_sq + 2 * sign * cross - (mean1 + sign * mean2) ** 2


def correlated_variance(
    rho: DensityOperator, theta1: float, theta2: float, sign: int = -1
) -> float:
    """Variance of X1(theta1) -/+ X2(theta2), normalized to vacuum level 1.

    sign=-1 selects the quadrature difference, sign=+1 the sum.
    """
    if sign not in (-1, +1):
        raise ValueError("sign must be -1 (difference) or +1 (sum)")
    return float(_variance_from_moments(quadrature_moments(rho), theta1, theta2, sign))


def min_correlated_variance(
    rho: DensityOperator, sign: int = -1, grid_points: int = 1440
) -> tuple[float, float]:
    """Minimum correlated variance over the phase sum, with the minimizing angle.

    The search runs over theta1 = theta2 = theta_sum / 2, which is exhaustive
    for states invariant under opposite phase shifts of the two modes (all
    states produced here); a parabolic refinement sharpens the grid minimum.
    """
    m = quadrature_moments(rho)
    thetas = np.linspace(0.0, 2.0 * np.pi, grid_points, endpoint=False)
    values = _variance_from_moments(m, thetas / 2, thetas / 2, sign)
    i = int(np.argmin(values))
    # Three-point parabolic refinement around the grid minimum.
    left, mid, right = values[i - 1], values[i], values[(i + 1) % grid_points]
    denom = left - 2 * mid + right
    step = thetas[1] - thetas[0]
    if denom > 0:
        offset = 0.5 * (left - right) / denom
        theta_min = thetas[i] + offset * step
        v_min = float(_variance_from_moments(m, theta_min / 2, theta_min / 2, sign))
        if v_min <= mid:
            return v_min, float(theta_min % (2 * np.pi))
    return float(mid), float(thetas[i])


@dataclass
class MetricsReport:
    """Figures of merit for one state; fitted_zeta is present when a
    variance-curve fit supplied it."""

    log_negativity: float
    negativity: float
    min_variance: float
    squeezing_db: float
    fitted_zeta: float | None = None

    def to_json(self) -> str:
        payload = {
            "log_negativity": self.log_negativity,
            "negativity": self.negativity,
            "min_variance": self.min_variance,
            "squeezing_db": self.squeezing_db,
            "fitted_zeta": self.fitted_zeta,
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        payload = json.loads(text)
        return cls(
            log_negativity=payload["log_negativity"],
            negativity=payload["negativity"],
            min_variance=payload["min_variance"],
            squeezing_db=payload["squeezing_db"],
            fitted_zeta=payload.get("fitted_zeta"),
        )


def compute_metrics(rho: DensityOperator, fitted_zeta: float | None = None) -> MetricsReport:
    n = negativity(rho)
    v_min, _ = min_correlated_variance(rho)
    return MetricsReport(
        log_negativity=float(np.log2(1.0 + 2.0 * n)),
        negativity=n,
        min_variance=v_min,
        squeezing_db=squeezing_db(v_min),
        fitted_zeta=fitted_zeta,
    )
