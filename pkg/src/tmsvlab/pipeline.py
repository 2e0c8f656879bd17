"""End-to-end experiment replication: state preparation, tap heralding,
downstream loss, blockwise quadrature acquisition, phase recovery,
variance-curve fitting and the summary table.

A run builds the squeezed source state, conditions it on each detector click
pattern, applies the downstream loss, and simulates homodyne acquisition in
blocks: every block has a phase-sum setting drawn from a fixed scan schedule
and a uniformly random phase difference, and heralded-class statistics are
drawn from the exact conditional states rather than by per-pulse rejection
(physical coincidence rates would make that astronomically wasteful; the
rates themselves are reported analytically).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

import numpy as np
from scipy.optimize import curve_fit

from .channels import (
    CLICK,
    IGNORE,
    NO_CLICK,
    THRESHOLD,
    HeraldPattern,
    LossSpec,
    TapSpec,
    apply_loss,
    tap_and_herald,
)
from .errors import ConfigError, InsufficientDataError
from .fock import DensityOperator, to_density, tmsv_state
from .homodyne import (
    PhasePair,
    QuadratureSampler,
    VariancePoint,
    empirical_variance,
    read_quadrature_csv,
    write_quadrature_csv,
)

HERALD_CLASSES = ("none", "one", "both")
_CLASS_PATTERNS = {
    "none": HeraldPattern(NO_CLICK, NO_CLICK),
    "one": HeraldPattern(CLICK, NO_CLICK),
    "both": HeraldPattern(CLICK, CLICK),
}
_CLASS_CLICKS = {"none": (0, 0), "one": (1, 0), "both": (1, 1)}

SCAN_POINTS = 24
MIN_FIT_POINTS = 5
# Recovered phase sums live in [0, pi]; identifiability needs at least half
# of that folded range covered.
MIN_FIT_SPAN = np.pi / 2


@dataclass(frozen=True)
class ExperimentConfig:
    """All knobs of a simulated distillation run."""

    zeta: float = 0.190
    eta: float | tuple[float, float] = 0.42
    tap_t: float = 0.11
    eta_d: float = 0.6
    detector_model: str = THRESHOLD
    cutoff: int = 15
    blocks: int = 24
    pulses_per_block: int = 9500
    samples_per_setting: int = 100_000
    reconstruction_cutoff: int = 3
    seed: int | None = None
    rep_rate_hz: float = 76e6
    pair_probability: float = 0.04
    filter_transmission: float = 0.1

    def loss(self) -> LossSpec:
        if isinstance(self.eta, tuple):
            return LossSpec(*self.eta)
        return LossSpec.uniform(self.eta)

    def tap(self) -> TapSpec:
        return TapSpec(self.tap_t, self.eta_d, self.detector_model)

    def effective_transmission(self) -> float:
        """Mean total photon transmission of the unheralded path (tap included)."""
        loss = self.loss()
        return (1.0 - self.tap_t) * 0.5 * (loss.eta1 + loss.eta2)

    def validate(self) -> "ExperimentConfig":
        try:
            self.loss()
            self.tap()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not np.isfinite(self.zeta) or self.zeta < 0:
            raise ConfigError(f"zeta must be a finite nonnegative number, got {self.zeta}")
        if self.cutoff < 1 or self.reconstruction_cutoff < 1:
            raise ConfigError("cutoffs must be >= 1")
        if self.blocks < 1:
            raise ConfigError("blocks must be >= 1")
        if self.pulses_per_block < 2:
            raise ConfigError("pulses_per_block must be >= 2")
        if self.samples_per_setting < 2:
            raise ConfigError("samples_per_setting must be >= 2")
        for name in ("rep_rate_hz", "pair_probability", "filter_transmission"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        return self

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("a seed is required for simulation")
        return int(self.seed)

    def to_mapping(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(format(v, ".12g") for v in value)
            out[f.name] = value
        return out


_INT_KEYS = {
    "cutoff",
    "blocks",
    "pulses_per_block",
    "samples_per_setting",
    "reconstruction_cutoff",
    "seed",
}
_STR_KEYS = {"detector_model"}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in _STR_KEYS:
        return raw
    if key in _INT_KEYS:
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"key {key!r} expects an integer, got {raw!r}") from exc
    if "," in raw:
        parts = raw.split(",")
        if len(parts) != 2:
            raise ConfigError(f"key {key!r}: expected one value or a pair, got {raw!r}")
        return tuple(float(p) for p in parts)
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"key {key!r} expects a number, got {raw!r}") from exc


def config_from_mapping(mapping: dict) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(mapping) - known
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    values = {}
    for key, value in mapping.items():
        values[key] = _parse_value(key, value) if isinstance(value, str) else value
    return ExperimentConfig(**values).validate()


def read_config_mapping(path) -> dict:
    """Parse the flat key=value configuration format into a raw mapping."""
    mapping = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {text!r}")
            key, _, raw = text.partition("=")
            mapping[key.strip()] = raw.strip()
    return mapping


def load_config(path) -> ExperimentConfig:
    return config_from_mapping(read_config_mapping(path))


def coincidence_rate(
    rep_rate_hz: float,
    pair_probability: float,
    tap_t: float,
    filter_transmission: float,
    eta_d: float,
) -> float:
    """Expected two-detector coincidence rate in Hz.

    Each photon of a pair must be diverted by the tap, survive the spectral
    and spatial filtering, and fire its detector, so the per-pair coincidence
    probability is (T * filter * eta_d)^2.
    """
    per_photon = tap_t * filter_transmission * eta_d
    return rep_rate_hz * pair_probability * per_photon**2


@dataclass
class BlockRecord:
    """One acquisition block of a single herald class."""

    block_id: int
    click1: int
    click2: int
    theta_sum_true: float
    theta_sum: float  # recovered value; NaN when recovery failed
    theta_sigma: float
    samples: np.ndarray


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    states: dict[str, DensityOperator]
    probabilities: dict[str, float]
    tapped_state: DensityOperator
    calibration_state: DensityOperator  # mode-2 reduction, mode-1 click heralded
    calibration_probability: float
    blocks: dict[str, list[BlockRecord]]
    schedule: np.ndarray


def scan_schedule(points: int = SCAN_POINTS) -> np.ndarray:
    return np.linspace(0.0, 2.0 * np.pi, points, endpoint=False)


def phase_from_variance(v_minus: float, zeta: float, eta: float) -> float:
    """Invert the difference-variance law for the phase sum, folded to [0, pi].

    cos(theta_sum) = (cosh 2 zeta + (1 - eta)/eta - V/eta) / sinh 2 zeta,
    clipped to [-1, 1].  Folding loses nothing: the statistics are even and
    2 pi periodic in the phase sum.
    """
    if zeta <= 0:
        raise ValueError("phase recovery needs a nonzero squeezing parameter")
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"transmission must lie in (0, 1], got {eta}")
    cos_est = (np.cosh(2 * zeta) + (1.0 - eta) / eta - v_minus / eta) / np.sinh(2 * zeta)
    return float(np.arccos(np.clip(cos_est, -1.0, 1.0)))


def phase_recovery(
    samples: np.ndarray, zeta: float, eta: float
) -> tuple[float, float]:
    """Estimate the phase sum of a block from its difference-quadrature variance.

    Returns the folded estimate and its propagated standard error; near the
    turning points of the variance curve the inversion saturates and the
    quoted error grows accordingly.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.shape[0] < 100:
        raise InsufficientDataError(
            f"phase recovery needs at least 100 pulses per block, got {arr.shape[0]}"
        )
    v_minus, v_err = empirical_variance(arr, sign=-1)
    theta = phase_from_variance(v_minus, zeta, eta)
    cos_sigma = v_err / (eta * np.sinh(2 * zeta))
    sin_theta = np.sqrt(max(1.0 - np.cos(theta) ** 2, 1e-12))
    return theta, float(cos_sigma / sin_theta)


def exact_conditional_states(
    config: ExperimentConfig,
) -> tuple[dict[str, DensityOperator], dict[str, float], DensityOperator]:
    """Conditional state and herald probability per class, plus the
    tapped-but-unmeasured reference state."""
    source = to_density(tmsv_state(config.zeta, config.cutoff))
    tap = config.tap()
    loss = config.loss()
    states = {}
    probabilities = {}
    for name in HERALD_CLASSES:
        conditional, prob = tap_and_herald(source, tap, _CLASS_PATTERNS[name])
        states[name] = apply_loss(conditional, loss)
        probabilities[name] = prob
    tapped, _ = tap_and_herald(source, tap, HeraldPattern(IGNORE, IGNORE))
    return states, probabilities, apply_loss(tapped, loss)


def tap_compensated_state(config: ExperimentConfig) -> DensityOperator:
    """The unheralded state with the tap removed (transmissivity set to zero):
    the source state through the downstream loss only."""
    source = to_density(tmsv_state(config.zeta, config.cutoff))
    return apply_loss(source, config.loss())


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Simulate the full acquisition: per-class exact states and quadrature blocks.

    All herald classes of a block share the same true local-oscillator
    phases; the block's phase sum is recovered from the unheralded series and
    attached to every class, exactly as the heralded data are phase-annotated
    in the laboratory.
    """
    config = config.validate()
    seed = config.require_seed()
    states, probabilities, tapped = exact_conditional_states(config)

    source = to_density(tmsv_state(config.zeta, config.cutoff))
    calibration, cal_prob = tap_and_herald(
        source, config.tap(), HeraldPattern(CLICK, IGNORE)
    )
    calibration_mode2 = apply_loss(calibration, config.loss()).partial_trace(2)

    schedule = scan_schedule()
    root = np.random.SeedSequence(seed)
    block_seeds = root.spawn(config.blocks)
    eta_eff = config.effective_transmission()

    blocks: dict[str, list[BlockRecord]] = {name: [] for name in HERALD_CLASSES}
    for b in range(config.blocks):
        child = block_seeds[b].spawn(len(HERALD_CLASSES) + 1)
        phase_rng = np.random.default_rng(child[0])
        theta_sum_true = float(schedule[b % schedule.size])
        theta_diff = float(phase_rng.uniform(0.0, 2.0 * np.pi))
        phases = PhasePair(
            0.5 * (theta_sum_true + theta_diff), 0.5 * (theta_sum_true - theta_diff)
        )
        class_samples = {}
        for i, name in enumerate(HERALD_CLASSES):
            rng = np.random.default_rng(child[i + 1])
            sampler = QuadratureSampler(states[name], phases)
            class_samples[name] = sampler.draw(config.pulses_per_block, rng)
        theta_hat, theta_sigma = phase_recovery(
            class_samples["none"], config.zeta, eta_eff
        )
        for name in HERALD_CLASSES:
            click1, click2 = _CLASS_CLICKS[name]
            blocks[name].append(
                BlockRecord(
                    block_id=b,
                    click1=click1,
                    click2=click2,
                    theta_sum_true=theta_sum_true,
                    theta_sum=theta_hat,
                    theta_sigma=theta_sigma,
                    samples=class_samples[name],
                )
            )

    return ExperimentResult(
        config=config,
        states=states,
        probabilities=probabilities,
        tapped_state=tapped,
        calibration_state=calibration_mode2,
        calibration_probability=cal_prob,
        blocks=blocks,
        schedule=schedule,
    )


def _curve_and_phase_sigmas(
    blocks: list[BlockRecord],
) -> tuple[list[VariancePoint], np.ndarray]:
    points = []
    sigmas = []
    for record in sorted(blocks, key=lambda r: r.block_id):
        if not np.isfinite(record.theta_sum):
            continue
        sigma = record.theta_sigma if np.isfinite(record.theta_sigma) else 0.0
        for sign in (-1, +1):
            v, err = empirical_variance(record.samples, sign)
            points.append(VariancePoint(record.theta_sum, sign, v, err))
            sigmas.append(sigma)
    return points, np.array(sigmas)


def build_variance_curve(blocks: list[BlockRecord]) -> list[VariancePoint]:
    """One sum-variance and one difference-variance point per block."""
    return _curve_and_phase_sigmas(blocks)[0]


@dataclass
class VarianceFit:
    zeta: float
    zeta_stderr: float
    eta: float
    chi2: float
    dof: int

    @property
    def chi2_per_dof(self) -> float:
        return self.chi2 / self.dof if self.dof > 0 else float("nan")


def _check_curve(points: list[VariancePoint]) -> None:
    if len(points) < MIN_FIT_POINTS:
        raise InsufficientDataError(
            f"variance fit needs at least {MIN_FIT_POINTS} points, got {len(points)}"
        )
    thetas = np.array([p.theta_sum for p in points])
    span = thetas.max() - thetas.min()
    if span < MIN_FIT_SPAN:
        raise InsufficientDataError(
            f"phase-sum coverage {span:.3f} rad is below the half-range "
            f"{MIN_FIT_SPAN:.3f} rad needed for a variance fit"
        )


def fit_variance_curve(
    points: list[VariancePoint],
    eta: float,
    theta_sigmas: np.ndarray | None = None,
) -> VarianceFit:
    """Weighted least-squares fit of the squeezing parameter, transmission held fixed.

    When per-point phase uncertainties are supplied the fit runs twice: the
    first pass estimates the curve slope, which then inflates each point's
    error with the propagated phase noise before the final pass.  The
    parameter error is the Fisher-information standard error of the fit.
    """
    _check_curve(points)
    thetas = np.array([p.theta_sum for p in points])
    signs = np.array([p.sign for p in points], dtype=float)
    values = np.array([p.variance for p in points])
    errors = np.array([max(p.stderr, 1e-12) for p in points])

    def model(x, zeta):
        th, s = x
        return (1.0 - eta) + eta * (
            np.cosh(2 * zeta) + s * np.cos(th) * np.sinh(2 * zeta)
        )

    def run(sigma):
        popt, pcov = curve_fit(
            model, (thetas, signs), values, p0=[0.2], sigma=sigma, absolute_sigma=True
        )
        return float(popt[0]), float(np.sqrt(pcov[0, 0]))

    zeta_hat, zeta_err = run(errors)
    sigma = errors
    if theta_sigmas is not None:
        slopes = eta * np.sinh(2 * zeta_hat) * np.abs(np.sin(thetas))
        sigma = np.sqrt(errors**2 + (slopes * np.asarray(theta_sigmas)) ** 2)
        zeta_hat, zeta_err = run(sigma)

    residuals = (values - model((thetas, signs), zeta_hat)) / sigma
    chi2 = float(np.sum(residuals**2))
    return VarianceFit(zeta_hat, zeta_err, eta, chi2, len(points) - 1)


def fit_from_blocks(blocks: list[BlockRecord], eta: float) -> VarianceFit:
    points, theta_sigmas = _curve_and_phase_sigmas(blocks)
    return fit_variance_curve(points, eta, theta_sigmas)


def distillation_gain(fit_before: VarianceFit, fit_after: VarianceFit) -> float:
    """Ratio of effective squeezing amplitudes tanh(zeta) after over before."""
    return float(np.tanh(fit_after.zeta) / np.tanh(fit_before.zeta))


def load_blocks_from_csv(path, meta: dict | None = None) -> list[BlockRecord]:
    """Rebuild per-block records from a quadrature CSV.

    Phase-recovery uncertainties are taken from the run metadata when given;
    true phases are not recoverable from the files and are stored as NaN.
    """
    records = read_quadrature_csv(path)
    sigma_by_block = {}
    if meta is not None:
        for entry in meta.get("blocks", []):
            sigma_by_block[int(entry["block_id"])] = float(entry["theta_sigma"])
    blocks = []
    for block_id in np.unique(records["block_id"]):
        mask = records["block_id"] == block_id
        samples = np.column_stack([records["x1"][mask], records["x2"][mask]])
        theta_values = records["theta_sum"][mask]
        blocks.append(
            BlockRecord(
                block_id=int(block_id),
                click1=int(records["click1"][mask][0]),
                click2=int(records["click2"][mask][0]),
                theta_sum_true=float("nan"),
                theta_sum=float(theta_values[0]),
                theta_sigma=sigma_by_block.get(int(block_id), float("nan")),
                samples=samples,
            )
        )
    return blocks


def write_experiment_outputs(result: ExperimentResult, out_dir) -> dict:
    """Write per-class CSVs, exact-state JSONs and the run metadata.

    Output bytes are a pure function of config and seed.
    """
    import os

    from .fock import density_to_json

    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for name in HERALD_CLASSES:
        csv_path = os.path.join(out_dir, f"quadratures_{name}.csv")
        write_quadrature_csv(
            csv_path,
            (
                (r.block_id, r.click1, r.click2, r.theta_sum, r.samples)
                for r in sorted(result.blocks[name], key=lambda r: r.block_id)
            ),
        )
        paths[f"quadratures_{name}"] = csv_path
        state_path = os.path.join(out_dir, f"state_{name}.json")
        with open(state_path, "w") as fh:
            fh.write(density_to_json(result.states[name]))
        paths[f"state_{name}"] = state_path

    cal_path = os.path.join(out_dir, "state_calibration.json")
    with open(cal_path, "w") as fh:
        fh.write(density_to_json(result.calibration_state))
    paths["state_calibration"] = cal_path

    config = result.config
    meta = {
        "config": config.to_mapping(),
        "herald_probabilities": {k: result.probabilities[k] for k in HERALD_CLASSES},
        "calibration_probability": result.calibration_probability,
        "effective_transmission": config.effective_transmission(),
        "coincidence_rate_hz": coincidence_rate(
            config.rep_rate_hz,
            config.pair_probability,
            config.tap_t,
            config.filter_transmission,
            config.eta_d,
        ),
        "scan_schedule": [float(t) for t in result.schedule],
        "phase_distribution": "theta_sum cycles the scan schedule; theta_diff uniform per block",
        "blocks": [
            {
                "block_id": r.block_id,
                "theta_sum_true": r.theta_sum_true,
                "theta_sum_recovered": r.theta_sum,
                "theta_sigma": r.theta_sigma,
            }
            for r in sorted(result.blocks["none"], key=lambda r: r.block_id)
        ],
        "top_layer_population": {
            k: result.states[k].top_layer_population() for k in HERALD_CLASSES
        },
    }
    meta_path = os.path.join(out_dir, "meta.json")
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
    paths["meta"] = meta_path
    return paths
