"""Maximum-likelihood state reconstruction from homodyne samples.

The estimator iterates rho <- N[R rho R] with
R(rho) = sum_j c_j Pi_j / tr(rho Pi_j), where Pi_j is the rank-1 projector
onto the (tensor-product) quadrature eigenstate of sample j and c_j its
multiplicity.  Starting from the maximally mixed state, every iterate stays
Hermitian, positive and trace-one, and the data log-likelihood is
non-decreasing in practice; iteration stops on a relative log-likelihood
tolerance or an iteration cap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError
from .fock import DensityOperator, FockCutoff, as_cutoff
from .homodyne import GRID_HALF_WIDTH, projector_amplitudes

# Equal-width binning of (x1, x2, theta_sum) compresses the projector set;
# engaged automatically only above this sample count.
AUTO_BIN_SAMPLE_LIMIT = 200_000
MAX_PROJECTORS = 10_000
MIN_THETA_BINS = 8
THETA_BIN_WIDTH = np.pi / 24


@dataclass
class ReconstructionOptions:
    cutoff: int = 3
    max_iterations: int = 2000
    tolerance: float = 1e-9
    bin_width: float | None = None  # None selects the automatic policy

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


def homodyne_projector(x: float, theta: float, cutoff: FockCutoff | int) -> np.ndarray:
    """Fock amplitudes <n|x, theta> of the rank-1 quadrature projector."""
    c = as_cutoff(cutoff)
    return projector_amplitudes(np.array([x]), theta, c.n_max)[:, 0]


def _validate_samples(samples: np.ndarray) -> tuple[np.ndarray, int]:
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] not in (2, 4):
        raise ValueError(
            "samples must have shape (N, 2) for one mode (x, theta) or "
            f"(N, 4) for two modes (x1, x2, theta1, theta2); got {arr.shape}"
        )
    if arr.shape[0] < 1:
        raise InsufficientDataError("no samples supplied")
    modes = 1 if arr.shape[1] == 2 else 2
    xs = arr[:, :modes]
    thetas = arr[:, modes:]
    if not np.all(np.isfinite(thetas)):
        raise ValueError("phase annotation missing or non-finite for some samples")
    if not np.all(np.isfinite(xs)) or np.any(np.abs(xs) > GRID_HALF_WIDTH):
        raise ValueError(
            f"quadrature values outside the supported range [-{GRID_HALF_WIDTH}, "
            f"{GRID_HALF_WIDTH}]"
        )
    return arr, modes


def _projector_rows(samples: np.ndarray, modes: int, cutoff: FockCutoff) -> np.ndarray:
    """Row j holds the (tensor) projector amplitudes of sample j."""
    d = cutoff.dim
    a1 = projector_amplitudes(samples[:, 0], 0.0, cutoff.n_max).T
    a1 = a1 * np.exp(1j * np.outer(samples[:, modes], np.arange(d)))
    if modes == 1:
        return a1
    a2 = projector_amplitudes(samples[:, 1], 0.0, cutoff.n_max).T
    a2 = a2 * np.exp(1j * np.outer(samples[:, 3], np.arange(d)))
    return (a1[:, :, None] * a2[:, None, :]).reshape(samples.shape[0], d * d)


def bin_samples(
    samples: np.ndarray, modes: int, max_projectors: int = MAX_PROJECTORS
) -> tuple[np.ndarray, np.ndarray]:
    """Merge samples into equal-width (x, theta-sum) bins.

    Returns (representatives, counts) where each representative carries the
    centroid quadratures of its bin; centroids rather than bin centers keep
    the first moments of the data exact.
    """
    thetas = samples[:, modes:].sum(axis=1)
    theta_ids = np.round(thetas / THETA_BIN_WIDTH).astype(int)
    unique_thetas = np.unique(theta_ids)
    n_x = max(2, int(np.sqrt(max_projectors / max(1, unique_thetas.size))))
    lo, hi = samples[:, :modes].min() - 1e-9, samples[:, :modes].max() + 1e-9
    width = (hi - lo) / n_x

    x_ids = np.floor((samples[:, :modes] - lo) / width).astype(int)
    keys = theta_ids.astype(np.int64)
    for column in range(modes):
        keys = keys * n_x + x_ids[:, column]
    order = np.argsort(keys, kind="stable")
    keys_sorted = keys[order]
    samples_sorted = samples[order]
    boundaries = np.flatnonzero(np.diff(keys_sorted)) + 1
    groups = np.split(np.arange(samples.shape[0]), boundaries)
    reps = np.empty((len(groups), samples.shape[1]))
    counts = np.empty(len(groups))
    for i, idx in enumerate(groups):
        block = samples_sorted[idx]
        reps[i] = block.mean(axis=0)
        # Phases are constant within a bin by construction; keep them exact.
        reps[i, modes:] = block[0, modes:]
        counts[i] = idx.size
    return reps, counts


@dataclass
class ReconstructionResult:
    state: DensityOperator
    log_likelihoods: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    projector_count: int = 0


def maxlik_reconstruct(
    samples: np.ndarray, opts: ReconstructionOptions | None = None
) -> ReconstructionResult:
    """Iterative maximum-likelihood reconstruction from quadrature samples.

    ``samples`` rows are (x, theta) for one mode or (x1, x2, theta1, theta2)
    for two modes.  The log-likelihood history is the mean log density per
    sample, evaluated at each iterate.
    """
    opts = opts or ReconstructionOptions()
    arr, modes = _validate_samples(samples)
    cutoff = as_cutoff(opts.cutoff)

    if opts.bin_width is not None or arr.shape[0] > AUTO_BIN_SAMPLE_LIMIT:
        reps, counts = bin_samples(arr, modes)
    else:
        reps, counts = arr, np.ones(arr.shape[0])

    a = _projector_rows(reps, modes, cutoff)
    weights = counts / counts.sum()
    dim = a.shape[1]
    rho = np.eye(dim, dtype=np.complex128) / dim

    def sample_densities(state: np.ndarray) -> np.ndarray:
        return np.clip(((a.conj() @ state) * a).sum(axis=1).real, 1e-300, None)

    history: list[float] = []
    converged = False
    iterations = 0
    for iterations in range(1, opts.max_iterations + 1):
        probs = sample_densities(rho)
        history.append(float(np.dot(weights, np.log(probs))))
        r = (a * (weights / probs)[:, None]).T @ a.conj()
        r = 0.5 * (r + r.conj().T)
        rho = r @ rho @ r
        rho = 0.5 * (rho + rho.conj().T)
        rho /= rho.trace().real
        if len(history) >= 2:
            prev, curr = history[-2], history[-1]
            if abs(curr - prev) < opts.tolerance * max(1.0, abs(prev)):
                converged = True
                break

    history.append(float(np.dot(weights, np.log(sample_densities(rho)))))
    state = DensityOperator(rho, modes, cutoff)
    return ReconstructionResult(
        state=state,
        log_likelihoods=history,
        iterations=iterations,
        converged=converged,
        projector_count=a.shape[0],
    )


def check_phase_coverage(theta_sums: np.ndarray, min_bins: int = MIN_THETA_BINS) -> None:
    """Refuse datasets whose phase-sum values occupy too few bins.

    With sparse phase coverage the off-diagonal Fock elements are not
    identifiable, so reconstruction from such data is rejected outright.
    """
    finite = theta_sums[np.isfinite(theta_sums)]
    if finite.size == 0:
        raise InsufficientDataError("no recovered phase annotations in the dataset")
    occupied = np.unique(np.round(finite / THETA_BIN_WIDTH).astype(int))
    if occupied.size < min_bins:
        raise InsufficientDataError(
            f"phase coverage too sparse: {occupied.size} distinct phase-sum bins, "
            f"need at least {min_bins}"
        )


def reconstruct_from_records(
    records: dict[str, np.ndarray], opts: ReconstructionOptions | None = None
) -> ReconstructionResult:
    """Reconstruct a two-mode state from per-pulse CSV records.

    Only the phase sum is recoverable from the data, and all states produced
    by this pipeline are invariant under opposite phase shifts of the two
    modes, so the projectors use theta1 = theta2 = theta_sum / 2.
    """
    theta_sum = np.asarray(records["theta_sum"], dtype=float)
    check_phase_coverage(theta_sum)
    keep = np.isfinite(theta_sum)
    samples = np.column_stack(
        [
            np.asarray(records["x1"], dtype=float)[keep],
            np.asarray(records["x2"], dtype=float)[keep],
            theta_sum[keep] / 2.0,
            theta_sum[keep] / 2.0,
        ]
    )
    return maxlik_reconstruct(samples, opts)


def estimate_loss(
    rho: DensityOperator,
    sample_count: int | None = None,
    two_photon_threshold: float = 0.05,
) -> tuple[float, float]:
    """Transmission estimate from a heralded vacuum/single-photon mixture.

    eta_hat = p1 / (p0 + p1).  The uncertainty is the binomial standard error
    for ``sample_count`` heralded events (NaN when no count is given).  States
    with more than ``two_photon_threshold`` population above n = 1 are
    rejected: the estimator is only meaningful for a {0, 1} photon mixture.
    """
    if rho.mode_count != 1:
        raise ValueError("loss estimation expects a single-mode state")
    pops = rho.populations()
    higher = float(pops[2:].sum())
    if higher > two_photon_threshold:
        raise ValueError(
            f"population above the single-photon level is {higher:.4f}, exceeding "
            f"the {two_photon_threshold} threshold; not a vacuum/one-photon mixture"
        )
    p0, p1 = float(pops[0]), float(pops[1])
    if p0 + p1 <= 0:
        raise ValueError("state carries no weight in the {0, 1} photon subspace")
    eta = p1 / (p0 + p1)
    if sample_count is None:
        return eta, float("nan")
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    sigma = float(np.sqrt(max(eta * (1.0 - eta), 0.0) / sample_count))
    return eta, sigma
