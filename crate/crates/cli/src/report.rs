//! Report schemas: the simulation CSV rows, the prediction JSON document
//! and the comparison outputs.

use serde::{Deserialize, Serialize};
use sparse_gof::alternatives::FamilyTag;
use sparse_gof::largedev::SlopeRegime;

use crate::config::ExperimentConfig;

/// One CSV row per (grid point, test, estimate).
///
/// Columns are fixed; optional columns render empty.  `runtime_ms` stays
/// empty unless timings are requested so that identical (config, seed)
/// runs produce byte-identical files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub schema_version: u32,
    pub point_index: usize,
    pub test: String,
    pub kind: String,
    pub method: String,
    pub n: u64,
    pub cells: u64,
    pub lambda: f64,
    pub delta: Option<f64>,
    pub family: String,
    pub threshold_mode: String,
    pub threshold: Option<f64>,
    pub critical_offset: Option<f64>,
    pub p_hat: Option<f64>,
    pub log_p: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub estimate_kind: Option<String>,
    pub replicates: Option<u64>,
    pub slope_empirical: Option<f64>,
    pub slope_predicted: Option<f64>,
    pub regime: Option<String>,
    pub strip_lower_margin: Option<f64>,
    pub strip_upper_margin: Option<f64>,
    pub runtime_ms: Option<u64>,
    pub seed: u64,
    pub error: Option<String>,
}

pub fn regime_label(regime: SlopeRegime) -> &'static str {
    match regime {
        SlopeRegime::ExactQuarter => "exact-quarter",
        SlopeRegime::RhoWeighted => "rho-weighted",
        SlopeRegime::DegenerateO1 => "degenerate-o1",
        SlopeRegime::NeymanPearson => "neyman-pearson",
    }
}

/// Prediction document emitted by `predict`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionReport {
    pub schema_version: u32,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub predictions: Vec<PredictionEntry>,
    pub efficiencies: Vec<EfficiencyEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub point_index: usize,
    pub n: u64,
    pub cells: u64,
    pub lambda: f64,
    pub delta: f64,
    pub family: String,
    pub test: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strip_lower_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strip_upper_margin: Option<f64>,
    /// Refusals (unsupported regimes, open problems) surface here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfficiencyEntry {
    pub kind: String,
    pub first: String,
    pub second: String,
    pub family: String,
    pub lambda_regime: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marker: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn family_label(tag: FamilyTag) -> String {
    tag.to_string()
}

/// Per-point comparison of empirical vs predicted slopes.
#[derive(Debug, Clone, Serialize)]
pub struct ComparePoint {
    pub point_index: usize,
    pub test: String,
    pub n: u64,
    pub cells: u64,
    pub lambda: f64,
    pub slope_empirical: f64,
    pub slope_predicted: Option<f64>,
    pub ratio: Option<f64>,
}

/// Trend summary across n for one test.
#[derive(Debug, Clone, Serialize)]
pub struct CompareTrend {
    pub test: String,
    pub points: usize,
    pub first_ratio: Option<f64>,
    pub final_ratio: Option<f64>,
    pub gap_decreasing: Option<bool>,
}

/// Empirical vs theoretical test-pair efficiency at matched points.
#[derive(Debug, Clone, Serialize)]
pub struct CompareEfficiency {
    pub point_index: usize,
    pub n: u64,
    pub cells: u64,
    pub lambda: f64,
    pub empirical_ratio: f64,
    pub theoretical_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareSummary {
    pub points: Vec<ComparePoint>,
    pub trends: Vec<CompareTrend>,
    pub efficiencies: Vec<CompareEfficiency>,
}
