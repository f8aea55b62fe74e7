"""Interval-level latent-trait scaling for categorical survey responses.

Recode integer-coded survey items, fit graded (GRM), unfolding (GGUM), and
nominal (NRM) response models by EM marginal maximum likelihood, score
persons by MAP, compare models with AIC/BIC, and summarize subgroups with
survey-weighted means and confidence intervals.
"""

from .ingest import (
    CodingScheme,
    ColumnSpec,
    RawTable,
    ResponseMatrix,
    apply_coding,
    exclude_all_missing,
    load_csv,
    load_schemes,
    save_schemes,
)
from .classical import ClassicalScores, classical_scores, z_score_b, z_score_w
from .models import (
    GgumItemParams,
    GrmItemParams,
    NrmItemParams,
    category_logprobs,
    category_probs,
    dtheta_category_logprobs,
    ggum_category_probs,
    grm_category_probs,
    grm_cumulative,
    nrm_category_probs,
    person_loglik,
    person_loglik_dtheta,
)
from .estimate import (
    FitResult,
    ItemEntry,
    ParameterSet,
    PersonScore,
    QuadratureGrid,
    export_params,
    fit_em,
    import_params,
    make_grid,
    map_score,
    map_score_all,
    odds,
    odds_ratio,
)
from .compare import (
    DeltaVerdict,
    FitMetrics,
    ModelComparison,
    compare_metrics,
    delta_verdict,
    free_param_count,
    information_criteria,
)
from .analytics import (
    CrossTab,
    GroupSummary,
    OverlapFlags,
    crosstab,
    nonoverlap_flags,
    overall_summary,
    weighted_summary,
)
from .simulate import SimSpec, load_simspec, recovery_report, save_simspec, simulate_responses

__version__ = "0.1.0"
