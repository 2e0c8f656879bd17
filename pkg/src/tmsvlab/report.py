"""Summary table of state parameters before and after distillation.

Four rows: the initial (unheralded) state, the initial state compensated for
the tap beamsplitter, the dual-subtracted state, and the single-subtracted
state.  Three metric columns: squeezing parameter from the variance-curve
fit, maximum squeezing in dB, and logarithmic negativity.  Model-predicted
values (from the exactly computed conditional states) and
reconstruction-derived values are reported side by side.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .fock import DensityOperator
from .metrics import log_negativity, min_correlated_variance, squeezing_db
from .pipeline import (
    ExperimentResult,
    VarianceFit,
    coincidence_rate,
    distillation_gain,
    fit_from_blocks,
    tap_compensated_state,
)

ROW_KEYS = ("initial", "initial_tap_compensated", "dual_subtracted", "single_subtracted")
ROW_LABELS = {
    "initial": "Initial state",
    "initial_tap_compensated": "Initial, tap compensated",
    "dual_subtracted": "Two-mode photon subtraction",
    "single_subtracted": "One-mode photon subtraction",
}
COLUMNS = ("fitted_zeta", "squeezing_db", "log_negativity")


def _cell(value: float | None, stderr: float | None = None) -> dict | None:
    if value is None:
        return None
    return {"value": float(value), "stderr": float(stderr) if stderr is not None else 0.0}


def _fit_squeezing(fit: VarianceFit, eta: float) -> tuple[float, float]:
    """Squeezing in dB at the fitted-model minimum, with propagated error."""
    v_min = (1.0 - eta) + eta * np.exp(-2.0 * fit.zeta)
    dv_dzeta = -2.0 * eta * np.exp(-2.0 * fit.zeta)
    db = squeezing_db(v_min)
    ddb_dv = -10.0 / (v_min * np.log(10.0))
    return db, abs(ddb_dv * dv_dzeta) * fit.zeta_stderr


def _model_metrics(state: DensityOperator) -> dict:
    v_min, _ = min_correlated_variance(state)
    return {
        "log_negativity": log_negativity(state),
        "min_variance": v_min,
        "squeezing_db": squeezing_db(v_min),
    }


@dataclass
class DistillationReport:
    rows: dict
    extras: dict

    def to_json(self) -> str:
        return json.dumps({"rows": self.rows, "extras": self.extras}, sort_keys=True, indent=1)

    def render_text(self) -> str:
        def fmt(cell):
            if cell is None:
                return "N/A"
            return f"{cell['value']:.4f} +- {cell['stderr']:.4f}"

        header = f"{'State':<28} {'zeta (fit)':>20} {'max squeezing dB':>24} {'log-negativity':>24}"
        lines = ["State parameters before and after distillation", "=" * len(header), header,
                 "-" * len(header)]
        for key in ROW_KEYS:
            row = self.rows[key]
            lines.append(
                f"{ROW_LABELS[key]:<28} {fmt(row['fitted_zeta']):>20} "
                f"{fmt(row['squeezing_db']):>24} {fmt(row['log_negativity']):>24}"
            )
        lines.append("-" * len(header))
        lines.append("model vs reconstruction (log-negativity):")
        for key in ROW_KEYS:
            row = self.rows[key]
            model = row["model"]["log_negativity"]
            recon = row.get("reconstructed")
            recon_text = f"{recon['log_negativity']:.4f}" if recon else "N/A"
            lines.append(f"  {ROW_LABELS[key]:<28} model {model:.4f}   reconstructed {recon_text}")
        gain = self.extras.get("log_negativity_gain")
        if gain is not None:
            lines.append(f"distillation gain (E_N dual-subtracted / initial): {gain:.3f}")
        rate = self.extras.get("coincidence_rate_hz")
        if rate is not None:
            lines.append(f"expected coincidence rate: {rate:.1f} Hz")
        return "\n".join(lines) + "\n"


def make_report(
    states: dict[str, DensityOperator],
    compensated_state: DensityOperator,
    fits: dict[str, VarianceFit],
    reconstructions: dict[str, dict] | None = None,
    extras: dict | None = None,
) -> DistillationReport:
    """Assemble the summary table.

    ``states`` maps the herald classes to their exact conditional states;
    ``fits`` holds the variance-curve fits for the "none" and "both" classes;
    ``reconstructions`` optionally maps classes to metric dictionaries
    derived from maximum-likelihood states.
    """
    missing = [k for k in ("none", "one", "both") if k not in states]
    if missing:
        raise ValueError(f"missing herald-class states for report: {missing}")
    if any(k not in fits for k in ("none", "both")):
        raise ValueError("report needs variance fits for the 'none' and 'both' classes")
    reconstructions = reconstructions or {}

    fit_initial = fits["none"]
    fit_dual = fits["both"]
    eta_eff = fit_initial.eta
    # Undoing the tap raises the effective transmission by 1/(1 - T).
    eta_compensated = (extras or {}).get("eta_compensated", eta_eff)

    rows = {}
    row_sources = {
        "initial": (states["none"], fit_initial, eta_eff),
        "initial_tap_compensated": (compensated_state, None, eta_compensated),
        "dual_subtracted": (states["both"], fit_dual, eta_eff),
        "single_subtracted": (states["one"], None, eta_eff),
    }
    for key, (state, fit, eta) in row_sources.items():
        model = _model_metrics(state)
        recon = reconstructions.get(key)
        if fit is not None:
            db, db_err = _fit_squeezing(fit, eta)
            zeta_cell = _cell(fit.zeta, fit.zeta_stderr)
            squeeze_cell = _cell(db, db_err)
        elif key == "initial_tap_compensated":
            zeta_cell = None
            db, db_err = _fit_squeezing(fit_initial, eta)
            squeeze_cell = _cell(db, db_err)
        else:
            zeta_cell = None
            squeeze_cell = None
        en_value = recon["log_negativity"] if recon else model["log_negativity"]
        en_err = recon.get("log_negativity_stderr", 0.0) if recon else 0.0
        rows[key] = {
            "fitted_zeta": zeta_cell,
            "squeezing_db": squeeze_cell,
            "log_negativity": _cell(en_value, en_err),
            "model": model,
            "reconstructed": recon,
        }

    initial_en = rows["initial"]["log_negativity"]["value"]
    dual_en = rows["dual_subtracted"]["log_negativity"]["value"]
    combined_extras = {
        "log_negativity_gain": dual_en / initial_en if initial_en > 0 else float("nan"),
        "squeezing_gain_tanh": distillation_gain(fit_initial, fit_dual),
        "chi2_per_dof": {
            "initial": fit_initial.chi2_per_dof,
            "dual_subtracted": fit_dual.chi2_per_dof,
        },
    }
    if extras:
        combined_extras.update(extras)
    return DistillationReport(rows=rows, extras=combined_extras)


def reconstruction_metrics(
    records: dict[str, np.ndarray],
    cutoffs: tuple[int, ...] = (3, 5),
    max_iterations: int | None = None,
    tolerance: float | None = None,
) -> tuple[dict, dict[int, DensityOperator]]:
    """Maximum-likelihood metrics for one herald class at one or more cutoffs.

    The quoted log-negativity uncertainty is a split-half estimate: the
    dataset is divided by block parity, each half reconstructed separately,
    and half the spread between the two halves reported.  At the listed
    secondary cutoffs only the point values are added.
    """
    from .errors import InsufficientDataError
    from .tomography import ReconstructionOptions, reconstruct_from_records

    def options(cutoff: int) -> ReconstructionOptions:
        opts = ReconstructionOptions(cutoff=cutoff)
        if max_iterations is not None:
            opts.max_iterations = max_iterations
        if tolerance is not None:
            opts.tolerance = tolerance
        return opts

    primary = cutoffs[0]
    result = reconstruct_from_records(records, options(primary))
    states = {primary: result.state}
    v_min, _ = min_correlated_variance(result.state)
    metrics = {
        "log_negativity": log_negativity(result.state),
        "min_variance": v_min,
        "squeezing_db": squeezing_db(v_min),
        "iterations": result.iterations,
        "converged": result.converged,
        "cutoff": primary,
    }

    stderr = 0.0
    block_ids = np.asarray(records["block_id"])
    halves = []
    for parity in (0, 1):
        mask = block_ids % 2 == parity
        halves.append({key: np.asarray(col)[mask] for key, col in records.items()})
    try:
        en_halves = [
            log_negativity(reconstruct_from_records(half, options(primary)).state)
            for half in halves
        ]
        stderr = 0.5 * abs(en_halves[0] - en_halves[1])
    except InsufficientDataError:
        pass  # halves too sparse for a guarded reconstruction; quote zero spread
    metrics["log_negativity_stderr"] = stderr

    for cutoff in cutoffs[1:]:
        extra = reconstruct_from_records(records, options(cutoff))
        states[cutoff] = extra.state
        metrics[f"log_negativity_nmax{cutoff}"] = log_negativity(extra.state)
    return metrics, states


def report_from_result(
    result: ExperimentResult,
    reconstructions: dict[str, dict] | None = None,
) -> DistillationReport:
    """Build the table straight from a simulation result."""
    config = result.config
    eta_eff = config.effective_transmission()
    fits = {
        "none": fit_from_blocks(result.blocks["none"], eta_eff),
        "both": fit_from_blocks(result.blocks["both"], eta_eff),
    }
    loss = config.loss()
    extras = {
        "tap_t": config.tap_t,
        "eta_compensated": 0.5 * (loss.eta1 + loss.eta2),
        "coincidence_rate_hz": coincidence_rate(
            config.rep_rate_hz,
            config.pair_probability,
            config.tap_t,
            config.filter_transmission,
            config.eta_d,
        ),
        "herald_probabilities": result.probabilities,
    }
    return make_report(
        result.states, tap_compensated_state(config), fits, reconstructions, extras
    )
