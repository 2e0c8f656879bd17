"""Quadrature statistics of truncated Fock states.

Joint homodyne densities follow the Born rule with the harmonic-oscillator
eigenfunctions psi_n(x) = (2^n n! sqrt(pi))^(-1/2) H_n(x) exp(-x^2/2) and a
local-oscillator phase theta attaching exp(i n theta) to |n>.  In these
units the vacuum has variance 1/2 per mode and the two-mode sum/difference
variance is 1, which is the shot-noise reference used throughout.

Sampling is chained inverse-CDF on a fixed grid: draw x1 from the mode-1
marginal, then x2 from the conditional at (a finely binned) x1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .fock import DensityOperator

GRID_HALF_WIDTH = 8.0
GRID_POINTS = 4096
# Conditioning resolution for the chained draw: x1 is snapped to every
# CONDITIONING_STRIDE-th grid point before the conditional CDF lookup.
CONDITIONING_STRIDE = 4


def default_grid() -> np.ndarray:
    return np.linspace(-GRID_HALF_WIDTH, GRID_HALF_WIDTH, GRID_POINTS)


@dataclass(frozen=True)
class PhasePair:
    """Local-oscillator phases of the two homodyne detectors, in radians."""

    theta1: float
    theta2: float

    def __post_init__(self):
        for theta in (self.theta1, self.theta2):
            if not np.isfinite(theta):
                raise ValueError(f"phase must be finite, got {theta}")
        object.__setattr__(self, "theta1", float(self.theta1) % (2 * np.pi))
        object.__setattr__(self, "theta2", float(self.theta2) % (2 * np.pi))

    @property
    def theta_sum(self) -> float:
        return (self.theta1 + self.theta2) % (2 * np.pi)


def hermite_functions(n_max: int, x: np.ndarray) -> np.ndarray:
    """Orthonormal oscillator eigenfunctions psi_0..psi_n_max at the points x.

    Uses the stable three-term recurrence on psi_n directly,
    psi_{n+1} = sqrt(2/(n+1)) x psi_n - sqrt(n/(n+1)) psi_{n-1},
    which avoids the overflow of raw Hermite polynomials.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max + 1, x.size), dtype=float)
    out[0] = np.pi**-0.25 * np.exp(-0.5 * x**2)
    if n_max >= 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for n in range(1, n_max):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * x * out[n] - np.sqrt(n / (n + 1.0)) * out[n - 1]
    return out


def projector_amplitudes(x: np.ndarray, theta: float, n_max: int) -> np.ndarray:
    """Fock amplitudes <n|x, theta> = psi_n(x) exp(i n theta), shape (n_max+1, len(x))."""
    psi = hermite_functions(n_max, np.atleast_1d(x))
    phases = np.exp(1j * theta * np.arange(n_max + 1))
    return psi * phases[:, None]


def _phase_kernel(rho_dim: int, x: np.ndarray, theta: float) -> np.ndarray:
    """Kernel K[(m, n), j] = psi_m(x_j) psi_n(x_j) exp(i (n - m) theta)."""
    amp = projector_amplitudes(x, theta, rho_dim - 1)
    return np.einsum("mj,nj->mnj", amp.conj(), amp).reshape(rho_dim * rho_dim, -1)


def _two_mode_tensor(rho: DensityOperator) -> np.ndarray:
    """rho reshaped to T[(m1, n1), (m2, n2)]."""
    d = rho.cutoff.dim
    return rho.matrix.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)


def quadrature_pdf_grid(
    rho: DensityOperator,
    phases: PhasePair,
    x1: np.ndarray | None = None,
    x2: np.ndarray | None = None,
) -> np.ndarray:
    """Joint density p(x1, x2) evaluated on the tensor grid x1 x x2."""
    if rho.mode_count != 2:
        raise ValueError("joint quadrature pdf requires a two-mode state")
    xs1 = default_grid() if x1 is None else np.asarray(x1, dtype=float)
    xs2 = default_grid() if x2 is None else np.asarray(x2, dtype=float)
    d = rho.cutoff.dim
    k1 = _phase_kernel(d, xs1, phases.theta1)
    k2 = _phase_kernel(d, xs2, phases.theta2)
    t = _two_mode_tensor(rho)
    values = k1.T @ (t @ k2)
    return values.real


def quadrature_pdf(rho: DensityOperator, phases: PhasePair):
    """Joint density as a callable p(x1, x2) broadcasting over equal-length arrays."""
    if rho.mode_count != 2:
        raise ValueError("joint quadrature pdf requires a two-mode state")
    d = rho.cutoff.dim
    t = _two_mode_tensor(rho)

    def pdf(x1, x2):
        xs1 = np.atleast_1d(np.asarray(x1, dtype=float))
        xs2 = np.atleast_1d(np.asarray(x2, dtype=float))
        if xs1.shape != xs2.shape:
            raise ValueError("x1 and x2 must have the same shape")
        k1 = _phase_kernel(d, xs1.ravel(), phases.theta1)
        k2 = _phase_kernel(d, xs2.ravel(), phases.theta2)
        values = np.einsum("aj,ab,bj->j", k1, t, k2).real
        return values.reshape(xs1.shape) if np.ndim(x1) else float(values[0])

    return pdf


def marginal_pdf(rho: DensityOperator, theta: float, x: np.ndarray) -> np.ndarray:
    """Single-mode homodyne density at phase theta (one-mode operators only)."""
    if rho.mode_count != 1:
        raise ValueError("marginal_pdf expects a single-mode operator; trace out first")
    k = _phase_kernel(rho.cutoff.dim, np.asarray(x, dtype=float), theta)
    return (rho.matrix.reshape(-1) @ k).real


def _cdf_from_pdf(xs: np.ndarray, pdf: np.ndarray) -> np.ndarray:
    """Trapezoid cumulative distribution, clipped at tiny negatives, normalized."""
    p = np.clip(pdf, 0.0, None)
    segments = 0.5 * (p[1:] + p[:-1]) * np.diff(xs)
    cdf = np.concatenate(([0.0], np.cumsum(segments)))
    total = cdf[-1]
    if total <= 0.0 or not np.isfinite(total):
        raise ValueError("degenerate probability density: no mass on the grid")
    cdf /= total
    # Enforce strict monotonicity so inverse interpolation is well defined.
    return np.maximum.accumulate(cdf + np.arange(cdf.size) * 1e-300)


class QuadratureSampler:
    """Inverse-CDF sampler for the joint homodyne density of one state.

    Kernel products are computed once per (state, phases); repeated ``draw``
    calls reuse them, and conditional CDF rows are cached per conditioning
    bin.  Works for two-mode states (chained draw) and single-mode states
    (plain marginal draw).
    """

    def __init__(
        self,
        rho: DensityOperator,
        phases: PhasePair,
        grid: np.ndarray | None = None,
    ):
        self.rho = rho
        self.phases = phases
        self.grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
        d = rho.cutoff.dim
        if rho.mode_count == 1:
            pdf1 = marginal_pdf(rho, phases.theta1, self.grid)
        else:
            reduced = rho.partial_trace(1)
            pdf1 = marginal_pdf(reduced, phases.theta1, self.grid)
            # W[(m1, n1), j] = sum_(m2, n2) T rho K2; one row contraction per
            # conditioning bin then gives the conditional density over x2.
            self._w = _two_mode_tensor(rho) @ _phase_kernel(d, self.grid, phases.theta2)
            self._amp1 = projector_amplitudes(
                self.grid[:: self._stride()], phases.theta1, d - 1
            )
            self._conditional_cache: dict[int, np.ndarray] = {}
        self._cdf1 = _cdf_from_pdf(self.grid, pdf1)

    @staticmethod
    def _stride() -> int:
        return CONDITIONING_STRIDE

    def _conditional_cdf(self, bin_index: int) -> np.ndarray:
        cached = self._conditional_cache.get(bin_index)
        if cached is not None:
            return cached
        a = self._amp1[:, bin_index]
        kernel_row = np.einsum("m,n->mn", a.conj(), a).reshape(-1)
        row = (kernel_row @ self._w).real
        cdf = _cdf_from_pdf(self.grid, row)
        self._conditional_cache[bin_index] = cdf
        return cdf

    def draw(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Return samples with shape (count, modes)."""
        if count < 1:
            raise ValueError(f"sample count must be >= 1, got {count}")
        u1 = rng.random(count)
        x1 = np.interp(u1, self._cdf1, self.grid)
        if self.rho.mode_count == 1:
            return x1[:, None]
        u2 = rng.random(count)
        x2 = np.empty(count)
        stride = self._stride()
        coarse = self.grid[::stride]
        bins = np.clip(
            np.rint((x1 - coarse[0]) / (coarse[1] - coarse[0])).astype(int),
            0,
            coarse.size - 1,
        )
        for b in np.unique(bins):
            mask = bins == b
            x2[mask] = np.interp(u2[mask], self._conditional_cdf(int(b)), self.grid)
        return np.column_stack([x1, x2])


def sample_quadratures(
    rho: DensityOperator,
    phases: PhasePair,
    count: int,
    seed: int | np.random.Generator,
) -> np.ndarray:
    """Draw i.i.d. quadrature samples; deterministic for a fixed seed.

    Returns shape (count, 2) for two-mode states, (count, 1) for one mode.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return QuadratureSampler(rho, phases).draw(count, rng)


def variance_model(zeta: float, eta: float, theta_sum: float, sign: int = -1) -> float:
    """Correlated variance of a two-mode squeezed vacuum after symmetric loss.

    (1 - eta) + eta [cosh(2 zeta) +/- cos(theta1 + theta2) sinh(2 zeta)],
    normalized so the two-mode vacuum level is 1.  sign=-1 is the quadrature
    difference branch, minimized at theta_sum = 0.
    """
    if sign not in (-1, +1):
        raise ValueError("sign must be -1 (difference) or +1 (sum)")
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"transmission must lie in [0, 1], got {eta}")
    if zeta < 0:
        raise ValueError(f"squeezing parameter must be >= 0, got {zeta}")
    return float(
        (1.0 - eta)
        + eta * (np.cosh(2 * zeta) + sign * np.cos(theta_sum) * np.sinh(2 * zeta))
    )


def empirical_variance(samples: np.ndarray, sign: int = -1) -> tuple[float, float]:
    """Sample variance of x1 -/+ x2 with its standard error.

    The error uses the variance-of-variance estimator sqrt(2/(N-1)) * V.
    Normalization is the two-mode vacuum level, which is 1 in these units.
    """
    if sign not in (-1, +1):
        raise ValueError("sign must be -1 (difference) or +1 (sum)")
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected samples with shape (N, 2), got {arr.shape}")
    n = arr.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    combo = arr[:, 0] + sign * arr[:, 1]
    v = float(np.var(combo, ddof=1))
    return v, v * np.sqrt(2.0 / (n - 1))


@dataclass(frozen=True)
class VariancePoint:
    """One point of a correlated-variance curve."""

    theta_sum: float
    sign: int
    variance: float
    stderr: float

    def __post_init__(self):
        if self.sign not in (-1, +1):
            raise ValueError("sign must be -1 or +1")
        if self.variance <= 0 or self.stderr < 0:
            raise ValueError("variance must be positive and stderr nonnegative")


QUADRATURE_CSV_COLUMNS = ("block_id", "pulse_index", "click1", "click2", "theta_sum", "x1", "x2")


def write_quadrature_csv(path, blocks) -> None:
    """Write per-pulse records, one row per pulse, ordered by block then pulse.

    ``blocks`` yields tuples (block_id, click1, click2, theta_sum, samples)
    with samples of shape (N, 2); theta_sum may be NaN when unrecovered.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(QUADRATURE_CSV_COLUMNS)
        for block_id, click1, click2, theta_sum, samples in blocks:
            theta_text = "nan" if not np.isfinite(theta_sum) else format(theta_sum, ".12g")
            for pulse_index, (x1, x2) in enumerate(np.asarray(samples)):
                writer.writerow(
                    [
                        block_id,
                        pulse_index,
                        int(click1),
                        int(click2),
                        theta_text,
                        format(x1, ".12g"),
                        format(x2, ".12g"),
                    ]
                )


def read_quadrature_csv(path) -> dict[str, np.ndarray]:
    """Read the per-pulse CSV back into column arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != QUADRATURE_CSV_COLUMNS:
            raise ValueError(f"unexpected quadrature CSV header: {header}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"no quadrature records in {path}")
    data = np.array(rows, dtype=object)
    return {
        "block_id": data[:, 0].astype(int),
        "pulse_index": data[:, 1].astype(int),
        "click1": data[:, 2].astype(int),
        "click2": data[:, 3].astype(int),
        "theta_sum": data[:, 4].astype(float),
        "x1": data[:, 5].astype(float),
        "x2": data[:, 6].astype(float),
    }
