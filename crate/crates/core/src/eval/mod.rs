//! Evaluation against ground truth and assumption diagnostics.

mod align;
mod diagnostics;
mod info;

pub use align::{align_components, best_permutation, graph_metrics, EvalReport, GraphMetrics};
pub use diagnostics::{
    assumption_margins, diagnostics, oracle_chow_liu, AssumptionFlags, AssumptionMargins,
    DiagnosticsConfig, DiagnosticsReport,
};
pub use info::{concentration_check, mi_perturbation_bound, phi, phi_inverse, ConcentrationResult};
