"""Two-mode truncated Fock-space states and elementary operators.

Basis ordering is row-major: the two-mode basis element |n1, n2> sits at
flat index ``n1 * (n_max + 1) + n2`` (n1 slow, n2 fast).  Quadratures follow
the convention x = (a + a^dag) / sqrt(2), so the vacuum variance is 1/2 per
mode and the two-mode sum/difference vacuum variance is exactly 1.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import HeraldImpossibleError

TAIL_WARN_THRESHOLD = 1e-10
HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-8


@dataclass(frozen=True)
class FockCutoff:
    """Per-mode photon-number truncation; basis dimension is n_max + 1."""

    n_max: int

    def __post_init__(self):
        if not isinstance(self.n_max, (int, np.integer)) or self.n_max < 1:
            raise ValueError(f"cutoff must be an integer >= 1, got {self.n_max!r}")

    @property
    def dim(self) -> int:
        return self.n_max + 1

    @property
    def dim_two_mode(self) -> int:
        return (self.n_max + 1) ** 2


def as_cutoff(cutoff: FockCutoff | int) -> FockCutoff:
    if isinstance(cutoff, FockCutoff):
        return cutoff
    return FockCutoff(int(cutoff))


def basis_index(n1: int, n2: int, cutoff: FockCutoff | int) -> int:
    """Flat row-major index of |n1, n2>."""
    c = as_cutoff(cutoff)
    if not (0 <= n1 <= c.n_max and 0 <= n2 <= c.n_max):
        raise ValueError(f"photon numbers ({n1}, {n2}) outside cutoff {c.n_max}")
    return n1 * c.dim + n2


@dataclass(frozen=True)
class PureState:
    """Two-mode pure state as a flat complex amplitude array.

    ``weight`` accumulates the squared norms stripped by ``normalize`` so
    heralding probabilities compose multiplicatively along a chain of
    non-unitary operations.
    """

    amplitudes: np.ndarray
    cutoff: FockCutoff
    normalized: bool = True
    weight: float = 1.0

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=np.complex128)
        if amp.shape != (self.cutoff.dim_two_mode,):
            raise ValueError(
                f"amplitude array has shape {amp.shape}, expected "
                f"({self.cutoff.dim_two_mode},) for n_max={self.cutoff.n_max}"
            )
        object.__setattr__(self, "amplitudes", amp)
        if self.normalized and abs(self.norm_sq - 1.0) > 1e-12:
            raise ValueError(f"state flagged normalized but |psi|^2 = {self.norm_sq}")

    @property
    def norm_sq(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def amplitude(self, n1: int, n2: int) -> complex:
        return complex(self.amplitudes[basis_index(n1, n2, self.cutoff)])

    def as_matrix(self) -> np.ndarray:
        """Amplitudes reshaped to (n1, n2)."""
        d = self.cutoff.dim
        return self.amplitudes.reshape(d, d)

    def top_layer_population(self) -> float:
        """Probability weight in the n1 = n_max or n2 = n_max layer."""
        m = np.abs(self.as_matrix()) ** 2
        top = m[-1, :].sum() + m[:, -1].sum() - m[-1, -1]
        norm = m.sum()
        return float(top / norm) if norm > 0 else 0.0


def basis_state(n1: int, n2: int, cutoff: FockCutoff | int) -> PureState:
    """The number state |n1, n2>."""
    c = as_cutoff(cutoff)
    amp = np.zeros(c.dim_two_mode, dtype=np.complex128)
    amp[basis_index(n1, n2, c)] = 1.0
    return PureState(amp, c)


def tmsv_state(zeta: float, cutoff: FockCutoff | int) -> PureState:
    """Two-mode squeezed vacuum with squeezing parameter zeta.

    Amplitudes are sqrt(1 - lambda^2) * lambda^n on |n, n> with
    lambda = tanh(zeta), renormalized within the truncated space.  A warning
    is emitted when the truncated tail mass lambda^(2 (n_max + 1)) is not
    negligible.
    """
    if not np.isfinite(zeta):
        raise ValueError(f"squeezing parameter must be finite, got {zeta}")
    if zeta < 0:
        raise ValueError(f"squeezing parameter must be >= 0, got {zeta}")
    c = as_cutoff(cutoff)
    lam = np.tanh(zeta)
    tail = lam ** (2 * (c.n_max + 1))
    if tail >= TAIL_WARN_THRESHOLD:
        warnings.warn(
            f"cutoff n_max={c.n_max} too small for zeta={zeta}: truncated tail "
            f"mass {tail:.3g} >= {TAIL_WARN_THRESHOLD}",
            stacklevel=2,
        )
    amp = np.zeros(c.dim_two_mode, dtype=np.complex128)
    ns = np.arange(c.dim)
    diag = np.sqrt(1.0 - lam**2) * lam**ns
    amp[ns * c.dim + ns] = diag
    amp /= np.linalg.norm(amp)
    return PureState(amp, c)


def _check_mode(mode: int) -> int:
    if mode not in (1, 2):
        raise ValueError(f"mode must be 1 or 2, got {mode}")
    return mode


def annihilate(state: PureState, mode: int) -> PureState:
    """Apply the ladder operator a on one mode; output is unnormalized.

    The squared norm of the result is the success-probability proxy for the
    corresponding heralded photon subtraction.
    """
    _check_mode(mode)
    d = state.cutoff.dim
    m = state.as_matrix()
    out = np.zeros_like(m)
    ns = np.arange(1, d)
    if mode == 1:
        out[:-1, :] = np.sqrt(ns)[:, None] * m[1:, :]
    else:
        out[:, :-1] = np.sqrt(ns)[None, :] * m[:, 1:]
    return PureState(out.reshape(-1), state.cutoff, normalized=False, weight=state.weight)


def create(state: PureState, mode: int) -> PureState:
    """Apply the raising operator a^dag on one mode (unnormalized output).

    Population at the top truncation layer is discarded.
    """
    _check_mode(mode)
    d = state.cutoff.dim
    m = state.as_matrix()
    out = np.zeros_like(m)
    ns = np.arange(1, d)
    if mode == 1:
        out[1:, :] = np.sqrt(ns)[:, None] * m[:-1, :]
    else:
        out[:, 1:] = np.sqrt(ns)[None, :] * m[:, :-1]
    return PureState(out.reshape(-1), state.cutoff, normalized=False, weight=state.weight)


def phase_shift(state: PureState, mode: int, theta: float) -> PureState:
    """Multiply the amplitude at photon number n by exp(i n theta) on one mode."""
    _check_mode(mode)
    if not np.isfinite(theta):
        raise ValueError(f"phase must be finite, got {theta}")
    d = state.cutoff.dim
    phases = np.exp(1j * theta * np.arange(d))
    m = state.as_matrix()
    out = phases[:, None] * m if mode == 1 else phases[None, :] * m
    return PureState(
        out.reshape(-1), state.cutoff, normalized=state.normalized, weight=state.weight
    )


def normalize(state: PureState) -> PureState:
    """Rescale to unit norm, folding the stripped squared norm into ``weight``."""
    n2 = state.norm_sq
    if n2 <= 0.0:
        raise HeraldImpossibleError("cannot normalize a zero-norm state")
    return PureState(
        state.amplitudes / np.sqrt(n2),
        state.cutoff,
        normalized=True,
        weight=state.weight * n2,
    )


def dual_subtracted_state(zeta: float, cutoff: FockCutoff | int) -> PureState:
    """Normalized a1 a2 |TMSV(zeta)>: amplitudes proportional to (n+1) lambda^n."""
    return normalize(annihilate(annihilate(tmsv_state(zeta, cutoff), 1), 2))


@dataclass(frozen=True)
class DensityOperator:
    """Hermitian trace-one operator over a one- or two-mode truncated basis."""

    matrix: np.ndarray
    mode_count: int
    cutoff: FockCutoff

    def __post_init__(self):
        if self.mode_count not in (1, 2):
            raise ValueError(f"mode_count must be 1 or 2, got {self.mode_count}")
        m = np.asarray(self.matrix, dtype=np.complex128)
        d = self.cutoff.dim**self.mode_count
        if m.shape != (d, d):
            raise ValueError(f"matrix shape {m.shape} does not match dimension {d}")
        herm_dev = np.max(np.abs(m - m.conj().T))
        if herm_dev > HERMITICITY_TOL:
            raise ValueError(f"matrix not Hermitian: max |M - M^dag| = {herm_dev:.3g}")
        tr = m.trace().real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"trace {tr} deviates from 1 beyond {TRACE_TOL}")
        object.__setattr__(self, "matrix", 0.5 * (m + m.conj().T))

    @property
    def dim(self) -> int:
        return self.cutoff.dim**self.mode_count

    def expectation(self, operator: np.ndarray) -> complex:
        return complex(np.trace(self.matrix @ operator))

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.matrix))

    def top_layer_population(self) -> float:
        pops = self.populations()
        if self.mode_count == 1:
            return float(pops[-1])
        d = self.cutoff.dim
        p = pops.reshape(d, d)
        return float(p[-1, :].sum() + p[:, -1].sum() - p[-1, -1])

    def partial_trace(self, keep_mode: int) -> "DensityOperator":
        """Reduce a two-mode operator to one mode (keep_mode is 1 or 2)."""
        if self.mode_count != 2:
            raise ValueError("partial_trace requires a two-mode operator")
        _check_mode(keep_mode)
        d = self.cutoff.dim
        r = self.matrix.reshape(d, d, d, d)
        reduced = np.einsum("mknk->mn", r) if keep_mode == 1 else np.einsum("kmkn->mn", r)
        return DensityOperator(reduced, 1, self.cutoff)

    def validate(self, eig_tol: float = 1e-8) -> None:
        """Raise unless the spectrum is nonnegative within the tolerance."""
        eigs = np.linalg.eigvalsh(self.matrix)
        if eigs.min() < -eig_tol:
            raise ValueError(f"negative eigenvalue {eigs.min():.3g} below -{eig_tol}")


def to_density(state: PureState) -> DensityOperator:
    """Projector |psi><psi| / <psi|psi>."""
    n2 = state.norm_sq
    if n2 <= 0.0:
        raise HeraldImpossibleError("cannot build a density operator from a zero-norm state")
    amp = state.amplitudes / np.sqrt(n2)
    return DensityOperator(np.outer(amp, amp.conj()), 2, state.cutoff)


def truncate_density(rho: DensityOperator, cutoff: FockCutoff | int) -> DensityOperator:
    """Project onto the lower cutoff and renormalize.

    Intended for comparing states at different truncations; the discarded
    mass should be negligible for the comparison to be meaningful.
    """
    new = as_cutoff(cutoff)
    if new.n_max > rho.cutoff.n_max:
        raise ValueError("can only truncate to a smaller cutoff")
    keep = new.dim
    if rho.mode_count == 1:
        block = rho.matrix[:keep, :keep]
    else:
        d = rho.cutoff.dim
        block = (
            rho.matrix.reshape(d, d, d, d)[:keep, :keep, :keep, :keep]
            .reshape(keep * keep, keep * keep)
        )
    trace = block.trace().real
    if trace <= 0:
        raise ValueError("truncation removed all probability mass")
    return DensityOperator(block / trace, rho.mode_count, new)


def _as_density(obj: PureState | DensityOperator) -> DensityOperator:
    return to_density(obj) if isinstance(obj, PureState) else obj


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(matrix)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def fidelity(a: PureState | DensityOperator, b: PureState | DensityOperator) -> float:
    """Uhlmann fidelity; reduces to <psi|rho|psi> when one argument is pure."""
    rho = _as_density(a)
    sigma = _as_density(b)
    if rho.mode_count != sigma.mode_count or rho.cutoff != sigma.cutoff:
        raise ValueError(
            f"dimension mismatch: ({rho.mode_count} modes, n_max={rho.cutoff.n_max}) vs "
            f"({sigma.mode_count} modes, n_max={sigma.cutoff.n_max})"
        )
    s = _psd_sqrt(rho.matrix)
    inner = s @ sigma.matrix @ s
    vals = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    f = float(np.sqrt(np.clip(vals, 0.0, None)).sum() ** 2)
    return float(np.clip(f, 0.0, 1.0))


def density_to_json(rho: DensityOperator) -> str:
    """Serialize to the interchange schema {mode_count, n_max, entries}."""
    entries = [[float(z.real), float(z.imag)] for z in rho.matrix.reshape(-1)]
    return json.dumps(
        {"mode_count": rho.mode_count, "n_max": rho.cutoff.n_max, "entries": entries},
        sort_keys=True,
    )


def density_from_json(text: str) -> DensityOperator:
    payload = json.loads(text)
    mode_count = int(payload["mode_count"])
    cutoff = FockCutoff(int(payload["n_max"]))
    d = cutoff.dim**mode_count
    flat = np.array([complex(re, im) for re, im in payload["entries"]], dtype=np.complex128)
    if flat.size != d * d:
        raise ValueError(f"entry count {flat.size} does not match dimension {d}x{d}")
    return DensityOperator(flat.reshape(d, d), mode_count, cutoff)
