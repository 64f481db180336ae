//! Experiment configuration: TOML schema, validation and resolution into
//! concrete grid points.

use serde::{Deserialize, Serialize};
use sparse_gof::alternatives::{
    classify_family, AlternativeSpec, DeltaSchedule, DirectionFunction, FamilyTag,
};
use sparse_gof::montecarlo::{Method, SplittingConfig, ThresholdMode};
use sparse_gof::statistics::HFunction;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub budget: u64,
    /// Statistic kernels to run: "chi2", "lr", "empty-cells".
    pub tests: Vec<String>,
    /// Worker cap for concurrent points; 0 means the rayon default.
    #[serde(default)]
    pub workers: usize,
    pub grid: GridConfig,
    pub alternative: AlternativeConfig,
    #[serde(default)]
    pub estimation: EstimationConfig,
}

fn default_seed() -> u64 {
    0
}

fn default_budget() -> u64 {
    100_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: Vec<u64>,
    /// Explicit cell counts paired with `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<u64>>,
    /// Cell-count rule `N = ⌊coef · n^exponent⌋`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells_rule: Option<CellsRule>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellsRule {
    pub coef: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlternativeConfig {
    /// Schedule kind: "power-law", "pitman", "explicit", "fixed".
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<(u64, f64)>>,
    pub direction: DirectionConfig,
    /// "auto" classifies along the grid; otherwise one of
    /// "undetectable", "pitman", "j-o", "j-gamma", "j-bar-1/8", "fixed".
    #[serde(default = "default_family")]
    pub family: String,
}

fn default_family() -> String {
    "auto".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionConfig {
    /// "cosine" or "contrast".
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    /// "naive", "splitting" or "exact".
    #[serde(default = "default_method")]
    pub method: String,
    /// "approx-shift", "exact-oracle" or "empirical".
    #[serde(default = "default_threshold_mode")]
    pub threshold_mode: String,
    #[serde(default = "default_empirical_reps")]
    pub empirical_reps: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// "alpha" or "beta".
    #[serde(default = "default_slope")]
    pub slope: String,
    /// "slope" or "power".
    #[serde(default = "default_mode")]
    pub mode: String,
    /// Critical offsets `c` for power mode.
    #[serde(default)]
    pub critical_values: Vec<f64>,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            method: default_method(),
            threshold_mode: default_threshold_mode(),
            empirical_reps: default_empirical_reps(),
            replications: default_replications(),
            slope: default_slope(),
            mode: default_mode(),
            critical_values: Vec::new(),
        }
    }
}

fn default_method() -> String {
    "naive".into()
}

fn default_threshold_mode() -> String {
    "approx-shift".into()
}

fn default_empirical_reps() -> u64 {
    2_000
}

fn default_replications() -> usize {
    24
}

fn default_slope() -> String {
    "alpha".into()
}

fn default_mode() -> String {
    "slope".into()
}

/// A fully validated experiment ready to run.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub config: ExperimentConfig,
    pub points: Vec<(u64, u64)>,
    pub schedule: DeltaSchedule,
    pub spec: AlternativeSpec,
    pub family: FamilyTag,
    pub tests: Vec<HFunction>,
    pub method: Method,
    pub threshold_mode: ThresholdMode,
    pub splitting: SplittingConfig,
    pub beta_slope: bool,
    pub power_mode: bool,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let config: ExperimentConfig =
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config parse: {e}")))?;
    if config.schema_version != SCHEMA_VERSION {
        return Err(CliError::Validation(format!(
            "schema_version {} unsupported (expected {SCHEMA_VERSION})",
            config.schema_version
        )));
    }
    Ok(config)
}

pub fn kernel_by_name(name: &str) -> Result<HFunction, CliError> {
    HFunction::by_name(name)
        .ok_or_else(|| CliError::Validation(format!("unknown kernel '{name}'")))
}

pub fn resolve(config: ExperimentConfig) -> Result<ResolvedExperiment, CliError> {
    let points = resolve_grid(&config.grid)?;
    if points.is_empty() {
        return Err(CliError::Validation("grid is empty".into()));
    }
    for &(n, cells) in &points {
        if n == 0 || cells == 0 {
            return Err(CliError::Validation(format!(
                "grid point (n={n}, N={cells}) has λ ≤ 0"
            )));
        }
    }

    let schedule = resolve_schedule(&config.alternative)?;
    for &(n, cells) in &points {
        let delta = schedule
            .value(n, cells)
            .map_err(|e| CliError::Validation(format!("schedule invalid at n={n}: {e}")))?;
        if delta < 0.0 {
            return Err(CliError::Validation(format!("δ({n}) = {delta} < 0")));
        }
    }

    let spec = resolve_spec(&config.alternative, schedule.clone())?;
    let family = resolve_family(&config.alternative, &schedule, &points)?;

    let tests = config
        .tests
        .iter()
        .map(|t| kernel_by_name(t))
        .collect::<Result<Vec<_>, _>>()?;
    if tests.is_empty() {
        return Err(CliError::Validation("no tests requested".into()));
    }

    let est = &config.estimation;
    let method = match est.method.as_str() {
        "naive" => Method::Naive,
        "splitting" => Method::Splitting,
        "exact" => Method::Exact,
        other => return Err(CliError::Validation(format!("unknown method '{other}'"))),
    };
    let threshold_mode = match est.threshold_mode.as_str() {
        "approx-shift" => ThresholdMode::ApproxShift,
        "exact-oracle" => ThresholdMode::ExactOracle,
        "empirical" => ThresholdMode::Empirical {
            reps: est.empirical_reps,
        },
        other => {
            return Err(CliError::Validation(format!(
                "unknown threshold mode '{other}'"
            )))
        }
    };
    let beta_slope = match est.slope.as_str() {
        "alpha" => false,
        "beta" => true,
        other => return Err(CliError::Validation(format!("unknown slope '{other}'"))),
    };
    let power_mode = match est.mode.as_str() {
        "slope" => false,
        "power" => true,
        other => return Err(CliError::Validation(format!("unknown mode '{other}'"))),
    };
    if power_mode && est.critical_values.is_empty() {
        return Err(CliError::Validation(
            "power mode needs critical_values".into(),
        ));
    }
    let splitting = SplittingConfig {
        replications: est.replications,
        ..SplittingConfig::default()
    };

    Ok(ResolvedExperiment {
        points,
        schedule,
        spec,
        family,
        tests,
        method,
        threshold_mode,
        splitting,
        beta_slope,
        power_mode,
        config,
    })
}

fn resolve_grid(grid: &GridConfig) -> Result<Vec<(u64, u64)>, CliError> {
    match (&grid.cells, &grid.cells_rule) {
        (Some(cells), None) => {
            if cells.len() != grid.n.len() {
                return Err(CliError::Validation(format!(
                    "grid.cells has {} entries for {} sample sizes",
                    cells.len(),
                    grid.n.len()
                )));
            }
            Ok(grid.n.iter().copied().zip(cells.iter().copied()).collect())
        }
        (None, Some(rule)) => {
            if rule.coef.is_nan() || rule.coef <= 0.0 {
                return Err(CliError::Validation("cells_rule.coef must be > 0".into()));
            }
            Ok(grid
                .n
                .iter()
                .map(|&n| {
                    // nudge before flooring so exact powers like 4096^(1/3)
                    // do not truncate to 15 through f64 rounding
                    let raw = rule.coef * (n as f64).powf(rule.exponent);
                    let cells = (raw * (1.0 + 1e-12)).floor() as u64;
                    (n, cells.max(1))
                })
                .collect())
        }
        (Some(_), Some(_)) => Err(CliError::Validation(
            "grid: give either cells or cells_rule, not both".into(),
        )),
        (None, None) => Err(CliError::Validation(
            "grid: cells or cells_rule required".into(),
        )),
    }
}

fn resolve_schedule(alt: &AlternativeConfig) -> Result<DeltaSchedule, CliError> {
    match alt.kind.as_str() {
        "power-law" => {
            let gamma = alt
                .gamma
                .ok_or_else(|| CliError::Validation("power-law needs gamma".into()))?;
            if gamma.is_nan() || gamma <= 0.0 {
                return Err(CliError::Validation(format!("gamma = {gamma} must be > 0")));
            }
            Ok(DeltaSchedule::PowerLaw { gamma })
        }
        "pitman" => Ok(DeltaSchedule::Pitman),
        "explicit" => {
            let values = alt
                .values
                .clone()
                .ok_or_else(|| CliError::Validation("explicit schedule needs values".into()))?;
            Ok(DeltaSchedule::Explicit { values })
        }
        "fixed" => {
            let value = alt
                .value
                .ok_or_else(|| CliError::Validation("fixed schedule needs value".into()))?;
            Ok(DeltaSchedule::Fixed { value })
        }
        other => Err(CliError::Validation(format!(
            "unknown schedule kind '{other}'"
        ))),
    }
}

fn resolve_spec(
    alt: &AlternativeConfig,
    schedule: DeltaSchedule,
) -> Result<AlternativeSpec, CliError> {
    match alt.direction.kind.as_str() {
        "cosine" => {
            let frequency = alt.direction.frequency.unwrap_or(1);
            let direction = DirectionFunction::cosine(frequency)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            Ok(AlternativeSpec::density(direction, schedule))
        }
        "contrast" => {
            let values = alt.direction.values.clone().ok_or_else(|| {
                CliError::Validation("contrast direction needs values".into())
            })?;
            AlternativeSpec::cell_contrast(values, schedule)
                .map_err(|e| CliError::Validation(e.to_string()))
        }
        other => Err(CliError::Validation(format!(
            "unknown direction kind '{other}'"
        ))),
    }
}

fn resolve_family(
    alt: &AlternativeConfig,
    schedule: &DeltaSchedule,
    points: &[(u64, u64)],
) -> Result<FamilyTag, CliError> {
    match alt.family.as_str() {
        "auto" => {
            if points.len() < 3 {
                return Err(CliError::Validation(
                    "family = \"auto\" needs a grid of ≥ 3 points; set family explicitly".into(),
                ));
            }
            classify_family(schedule, points).map_err(|e| CliError::Validation(e.to_string()))
        }
        "undetectable" => Ok(FamilyTag::Undetectable),
        "pitman" => Ok(FamilyTag::Pitman),
        "j-o" => Ok(FamilyTag::JO),
        "j-gamma" => {
            let gamma = alt
                .gamma
                .ok_or_else(|| CliError::Validation("family j-gamma needs gamma".into()))?;
            Ok(FamilyTag::JGamma { gamma })
        }
        "j-bar-1/8" => Ok(FamilyTag::JBar18),
        "fixed" => Ok(FamilyTag::Fixed),
        other => Err(CliError::Validation(format!("unknown family '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
seed = 7
tests = ["chi2", "lr"]

[grid]
n = [4096, 16384, 65536]
[grid.cells_rule]
coef = 1.0
exponent = 0.3333333333333333

[alternative]
kind = "power-law"
gamma = 0.25
[alternative.direction]
kind = "cosine"
frequency = 1
"#;

    #[test]
    fn minimal_config_resolves() {
        let config = parse_config(MINIMAL).unwrap();
        let resolved = resolve(config).unwrap();
        assert_eq!(resolved.points.len(), 3);
        assert_eq!(resolved.points[0], (4096, 16));
        assert_eq!(resolved.tests.len(), 2);
        // γ = 1/4 on the cube-root rule decays below the Pitman rate
        assert_eq!(resolved.family, FamilyTag::Undetectable);
    }

    #[test]
    fn rejects_unknown_fields_and_kernels() {
        assert!(parse_config("schema_version = 1\nbogus = 2\n").is_err());
        let mut config = parse_config(MINIMAL).unwrap();
        config.tests = vec!["nope".into()];
        assert!(matches!(resolve(config), Err(CliError::Validation(_))));
    }

    #[test]
    fn rejects_wrong_schema_version() {
        let text = MINIMAL.replace("schema_version = 1", "schema_version = 9");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn explicit_cells_must_match_length() {
        let text = r#"
schema_version = 1
tests = ["chi2"]
[grid]
n = [100, 200]
cells = [4]
[alternative]
kind = "fixed"
value = 0.1
family = "fixed"
[alternative.direction]
kind = "cosine"
"#;
        let config = parse_config(text).unwrap();
        assert!(matches!(resolve(config), Err(CliError::Validation(_))));
    }
}
