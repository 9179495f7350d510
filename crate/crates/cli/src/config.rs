use std::path::PathBuf;

use mixgraph::eval::{DiagnosticsReport, EvalReport};
use mixgraph::graphs::Graph;
use mixgraph::model::{GeneratorConfig, DEFAULT_ENUMERATION_CAP};
use mixgraph::pipeline::{ComponentEstimate, FindOptions};
use mixgraph::ranktest::GraphEstimate;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum XiPolicy {
    /// largest log-gap of the pooled pilot statistics
    Gap,
    /// the value passed with --xi
    Fixed,
    /// (ρ_min − ζ)/2 computed on the true model
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub generator: GeneratorConfig,
    pub n: usize,
    pub sample_seed: u64,
    pub model_out: PathBuf,
    pub samples_out: PathBuf,
    pub labels_out: Option<PathBuf>,
    pub diagnostics_out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub samples: Option<PathBuf>,
    /// model file; the statistics source in exact mode, ground truth otherwise
    pub model: Option<PathBuf>,
    pub exact: bool,
    pub enumeration_cap: usize,
    pub r: usize,
    pub eta: usize,
    pub gamma: Option<usize>,
    pub xi_policy: XiPolicy,
    pub xi: Option<f64>,
    pub zeta: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub rotation_seed: u64,
    pub find: FindOptions,
    pub component_graph_threshold: Option<f64>,
}

impl LearnConfig {
    pub fn new(r: usize, eta: usize) -> Self {
        LearnConfig {
            samples: None,
            model: None,
            exact: false,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            r,
            eta,
            gamma: None,
            xi_policy: XiPolicy::Gap,
            xi: None,
            zeta: 0.0,
            delta: 0.05,
            epsilon: 0.1,
            rotation_seed: 0,
            find: FindOptions::new(eta),
            component_graph_threshold: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load_ms: f64,
    pub rank_test_ms: f64,
    pub components_ms: f64,
    pub evaluation_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub ok: bool,
    pub exit_code: i32,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub config: LearnConfig,
    pub status: Status,
    pub warnings: Vec<String>,
    pub timings: Timings,
    pub graph_estimate: Option<GraphEstimate>,
    pub component_estimate: Option<ComponentEstimate>,
    pub component_graphs: Option<Vec<Graph>>,
    pub diagnostics: Option<DiagnosticsReport>,
    pub evaluation: Option<EvalReport>,
}
