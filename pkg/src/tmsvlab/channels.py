"""Non-unitary evolutions: loss channels and heralded beamsplitter taps.

Loss with transmission eta is the generalized amplitude-damping channel with
Kraus operators

    A_k = sum_n sqrt(C(n, k)) eta^((n-k)/2) (1-eta)^(k/2) |n-k><n|,

one per number of photons leaked to the environment.  A tap is the same
channel with the leaked photons kept: coupling a mode to a vacuum ancilla by
a beamsplitter of transmissivity T into the ancilla produces the branch
operators A_k of loss(1 - T), and a threshold detector on the ancilla
reweights branch k by (1 - eta_d)^k for "no click" or 1 - (1 - eta_d)^k for
"click".  Summing a branch weighting over both modes and renormalizing gives
the conditional state and the pattern probability.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import HeraldImpossibleError
from .fock import DensityOperator, FockCutoff, as_cutoff

CLICK = "click"
NO_CLICK = "no-click"
IGNORE = "ignore"

THRESHOLD = "threshold"
IDEAL_ANNIHILATION = "ideal-annihilation"

ZERO_PROBABILITY = 1e-14


@dataclass(frozen=True)
class LossSpec:
    """Per-mode transmission efficiencies."""

    eta1: float
    eta2: float

    def __post_init__(self):
        for eta in (self.eta1, self.eta2):
            if not 0.0 <= eta <= 1.0:
                raise ValueError(f"transmission must lie in [0, 1], got {eta}")

    @classmethod
    def uniform(cls, eta: float) -> "LossSpec":
        return cls(eta, eta)


@dataclass(frozen=True)
class TapSpec:
    """Beamsplitter tap feeding a single-photon detector.

    ``transmissivity`` is the fraction sent to the detector.  With the
    ideal-annihilation detector model, transmissivity and efficiency are
    ignored and a click applies a bare annihilation operator.
    """

    transmissivity: float
    detector_efficiency: float
    model: str = THRESHOLD

    def __post_init__(self):
        if not 0.0 <= self.transmissivity <= 1.0:
            raise ValueError(f"transmissivity must lie in [0, 1], got {self.transmissivity}")
        if not 0.0 <= self.detector_efficiency <= 1.0:
            raise ValueError(
                f"detector efficiency must lie in [0, 1], got {self.detector_efficiency}"
            )
        if self.model not in (THRESHOLD, IDEAL_ANNIHILATION):
            raise ValueError(f"unknown detector model {self.model!r}")


@dataclass(frozen=True)
class HeraldPattern:
    """Per-mode detector requirement: click, no-click, or ignore."""

    mode1: str
    mode2: str

    def __post_init__(self):
        for req in (self.mode1, self.mode2):
            if req not in (CLICK, NO_CLICK, IGNORE):
                raise ValueError(f"unknown herald requirement {req!r}")

    @property
    def requirements(self) -> tuple[str, str]:
        return (self.mode1, self.mode2)


EXHAUSTIVE_PATTERNS = (
    HeraldPattern(NO_CLICK, NO_CLICK),
    HeraldPattern(CLICK, NO_CLICK),
    HeraldPattern(NO_CLICK, CLICK),
    HeraldPattern(CLICK, CLICK),
)


def loss_kraus(eta: float, cutoff: FockCutoff | int) -> list[np.ndarray]:
    """Kraus operators of the single-mode loss channel, indexed by photons lost."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"transmission must lie in [0, 1], got {eta}")
    c = as_cutoff(cutoff)
    d = c.dim
    ops = []
    for k in range(d):
        a_k = np.zeros((d, d), dtype=np.complex128)
        for n in range(k, d):
            a_k[n - k, n] = np.sqrt(comb(n, k) * eta ** (n - k) * (1.0 - eta) ** k)
        ops.append(a_k)
    return ops


def _embed(op: np.ndarray, mode: int, d: int) -> np.ndarray:
    eye = np.eye(d)
    return np.kron(op, eye) if mode == 1 else np.kron(eye, op)


def _apply_branch_sum(
    matrix: np.ndarray, kraus: list[np.ndarray], weights: np.ndarray, mode: int, d: int
) -> np.ndarray:
    out = np.zeros_like(matrix)
    for w, a_k in zip(weights, kraus):
        if w == 0.0:
            continue
        big = _embed(a_k, mode, d)
        out += w * (big @ matrix @ big.conj().T)
    return out


def loss_channel(rho: DensityOperator, mode: int, eta: float) -> DensityOperator:
    """Pass one mode of a density operator through transmission eta."""
    if mode not in (1, 2):
        raise ValueError(f"mode must be 1 or 2, got {mode}")
    if rho.mode_count != 2:
        raise ValueError("loss_channel expects a two-mode operator")
    kraus = loss_kraus(eta, rho.cutoff)
    out = _apply_branch_sum(rho.matrix, kraus, np.ones(len(kraus)), mode, rho.cutoff.dim)
    return DensityOperator(0.5 * (out + out.conj().T), 2, rho.cutoff)


def apply_loss(rho: DensityOperator, loss: LossSpec) -> DensityOperator:
    return loss_channel(loss_channel(rho, 1, loss.eta1), 2, loss.eta2)


def detector_povm(eta_d: float, cutoff: FockCutoff | int) -> tuple[np.ndarray, np.ndarray]:
    """Threshold-detector POVM (no-click, click) on the truncated basis.

    The no-click element is diagonal with entries (1 - eta_d)^n; the click
    element is its complement, so the pair sums to the identity exactly.
    """
    if not 0.0 <= eta_d <= 1.0:
        raise ValueError(f"detector efficiency must lie in [0, 1], got {eta_d}")
    c = as_cutoff(cutoff)
    no_click = np.diag((1.0 - eta_d) ** np.arange(c.dim)).astype(np.complex128)
    click = np.eye(c.dim, dtype=np.complex128) - no_click
    return no_click, click


def _branch_weights(requirement: str, eta_d: float, d: int) -> np.ndarray:
    """Detector-outcome weight per number of photons diverted into the tap."""
    ks = np.arange(d, dtype=float)
    no_click = (1.0 - eta_d) ** ks
    if requirement == NO_CLICK:
        return no_click
    if requirement == CLICK:
        return 1.0 - no_click
    return np.ones(d)


def _as_tap_pair(tap: TapSpec | tuple[TapSpec, TapSpec]) -> tuple[TapSpec, TapSpec]:
    if isinstance(tap, TapSpec):
        return (tap, tap)
    t1, t2 = tap
    if t1.model != t2.model:
        raise ValueError("both taps must use the same detector model")
    return (t1, t2)


def _ideal_annihilation_herald(
    rho: DensityOperator, pattern: HeraldPattern
) -> tuple[DensityOperator, float]:
    from .metrics import ladder_matrix  # local import to avoid a cycle

    d = rho.cutoff.dim
    a = ladder_matrix(rho.cutoff)
    matrix = rho.matrix
    for mode, req in enumerate(pattern.requirements, start=1):
        if req == CLICK:
            big = _embed(a, mode, d)
            matrix = big @ matrix @ big.conj().T
    prob = float(matrix.trace().real)
    if prob <= ZERO_PROBABILITY:
        raise HeraldImpossibleError(
            f"herald pattern {pattern.requirements} has zero probability"
        )
    out = DensityOperator(0.5 * (matrix + matrix.conj().T) / prob, 2, rho.cutoff)
    return out, prob


def tap_and_herald(
    rho: DensityOperator,
    tap: TapSpec | tuple[TapSpec, TapSpec],
    pattern: HeraldPattern,
) -> tuple[DensityOperator, float]:
    """Condition a two-mode state on a tap-detector click pattern.

    Returns the conditional state and the pattern probability.  With the
    ideal-annihilation model the returned number is not a probability but the
    squared-norm success proxy tr(a rho a^dag) of the applied operators.
    """
    if rho.mode_count != 2:
        raise ValueError("tap_and_herald expects a two-mode operator")
    tap1, tap2 = _as_tap_pair(tap)
    if tap1.model == IDEAL_ANNIHILATION:
        return _ideal_annihilation_herald(rho, pattern)

    d = rho.cutoff.dim
    matrix = rho.matrix
    for mode, (spec, req) in enumerate(zip((tap1, tap2), pattern.requirements), start=1):
        kraus = loss_kraus(1.0 - spec.transmissivity, rho.cutoff)
        weights = _branch_weights(req, spec.detector_efficiency, d)
        matrix = _apply_branch_sum(matrix, kraus, weights, mode, d)
    prob = float(matrix.trace().real)
    if prob <= ZERO_PROBABILITY:
        raise HeraldImpossibleError(
            f"herald pattern {pattern.requirements} has zero probability"
        )
    out = DensityOperator(0.5 * (matrix + matrix.conj().T) / prob, 2, rho.cutoff)
    return out, prob


def herald_probabilities(
    rho: DensityOperator, tap: TapSpec | tuple[TapSpec, TapSpec]
) -> dict[tuple[str, str], float]:
    """Probabilities of the four exhaustive click patterns (threshold model)."""
    probs = {}
    for pattern in EXHAUSTIVE_PATTERNS:
        try:
            _, p = tap_and_herald(rho, tap, pattern)
        except HeraldImpossibleError:
            p = 0.0
        probs[pattern.requirements] = p
    return probs
