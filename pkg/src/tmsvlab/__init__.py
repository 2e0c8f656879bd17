"""Truncated-Fock-space simulation and analysis of two-mode squeezed vacuum
distillation by heralded dual photon subtraction."""

from .channels import (
    CLICK,
    IGNORE,
    NO_CLICK,
    HeraldPattern,
    LossSpec,
    TapSpec,
    apply_loss,
    detector_povm,
    herald_probabilities,
    loss_channel,
    tap_and_herald,
)
from .errors import (
    ConfigError,
    HeraldImpossibleError,
    InsufficientDataError,
    TmsvlabError,
)
from .fock import (
    DensityOperator,
    FockCutoff,
    PureState,
    annihilate,
    basis_state,
    create,
    density_from_json,
    density_to_json,
    dual_subtracted_state,
    fidelity,
    normalize,
    phase_shift,
    tmsv_state,
    to_density,
)
from .homodyne import (
    PhasePair,
    QuadratureSampler,
    VariancePoint,
    empirical_variance,
    quadrature_pdf,
    sample_quadratures,
    variance_model,
)
from .metrics import (
    MetricsReport,
    compute_metrics,
    correlated_variance,
    log_negativity,
    min_correlated_variance,
    negativity,
    partial_transpose,
    squeezing_db,
)
from .pipeline import (
    ExperimentConfig,
    coincidence_rate,
    fit_variance_curve,
    load_config,
    phase_recovery,
    run_experiment,
)
from .report import DistillationReport, make_report, report_from_result
from .tomography import (
    ReconstructionOptions,
    estimate_loss,
    maxlik_reconstruct,
    reconstruct_from_records,
)

__version__ = "0.1.0"
