//! Implementations of the CLI subcommands.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sparse_gof::alternatives::{strip_condition, FamilyTag, DEFAULT_STRIP_SLACK};
use sparse_gof::largedev::{
    predict_alpha_slope, predict_efficiency, EfficiencyKind, EfficiencyValue, LambdaRegime,
    TestId,
};
use sparse_gof::montecarlo::{
    estimate_alpha_slope, estimate_beta_slope, exact_tail, power_at_critical, EstimateOptions,
    Method, SlopePoint, ThresholdMode,
};
use sparse_gof::poisson_moments::moment_summary;
use sparse_gof::statistics::HFunction;
use sparse_gof::Error;

use crate::config::{kernel_by_name, ResolvedExperiment, SCHEMA_VERSION};
use crate::report::{
    family_label, regime_label, ComparePoint, CompareSummary, CompareTrend, EfficiencyEntry,
    PredictionEntry, PredictionReport, ReportRow,
};
use crate::CliError;

fn runtime(e: Error) -> CliError {
    CliError::Runtime(e.to_string())
}

/// `moments`: MomentSummary rows for one kernel over a λ list.
pub fn run_moments(
    kernel: &str,
    lambdas: &[f64],
    cells: u64,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    if lambdas.is_empty() {
        return Err(CliError::Validation("empty λ list".into()));
    }
    let h = kernel_by_name(kernel)?;
    writeln!(out, "kernel,lambda,eh,gamma,sigma2,rho,l3n,truncation_k,tail_bound")
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    for &lambda in lambdas {
        let m = moment_summary(&h, lambda, cells).map_err(runtime)?;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{:e}",
            kernel, lambda, m.eh, m.gamma_coef, m.sigma2, m.rho, m.l3n, m.truncation_bound,
            m.tail_mass_bound
        )
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(())
}

fn test_id_for(h: &HFunction) -> TestId {
    match h.name() {
        "chi2" => TestId::Chi2,
        "lr" => TestId::Lr,
        _ => TestId::Generic(h.clone()),
    }
}

fn strip_margins(
    family: FamilyTag,
    n: u64,
    cells: u64,
) -> (Option<f64>, Option<f64>) {
    if let FamilyTag::JGamma { gamma } = family {
        if let Ok(report) = strip_condition(gamma, n, cells, DEFAULT_STRIP_SLACK) {
            return (Some(report.lower_margin), Some(report.upper_margin));
        }
    }
    (None, None)
}

/// λ regime for the efficiency predictions: growing λ along the grid reads
/// as the λ → ∞ regime, an (almost) constant λ as bounded.
fn lambda_regime(points: &[(u64, u64)]) -> LambdaRegime {
    let first = points[0].0 as f64 / points[0].1 as f64;
    let last = points[points.len() - 1].0 as f64 / points[points.len() - 1].1 as f64;
    if last >= 2.0 * first {
        LambdaRegime::Infinite
    } else {
        LambdaRegime::Finite(last)
    }
}

/// `predict`: one prediction per grid point per test plus pairwise
/// efficiencies; refusals become structured entries.
pub fn run_predict(experiment: &ResolvedExperiment) -> Result<PredictionReport, CliError> {
    let mut predictions = Vec::new();
    for (point_index, &(n, cells)) in experiment.points.iter().enumerate() {
        let delta = experiment
            .schedule
            .value(n, cells)
            .map_err(runtime)?;
        let lambda = n as f64 / cells as f64;
        let (strip_lo, strip_hi) = strip_margins(experiment.family, n, cells);
        for h in &experiment.tests {
            let entry = match predict_alpha_slope(
                &test_id_for(h),
                experiment.family,
                n,
                cells,
                delta,
            ) {
                Ok(pred) => PredictionEntry {
                    point_index,
                    n,
                    cells,
                    lambda,
                    delta,
                    family: family_label(experiment.family),
                    test: h.name().to_string(),
                    regime: Some(regime_label(pred.regime).to_string()),
                    value: pred.value,
                    normalized: pred.normalized,
                    strip_lower_margin: strip_lo,
                    strip_upper_margin: strip_hi,
                    error: None,
                },
                Err(e) => PredictionEntry {
                    point_index,
                    n,
                    cells,
                    lambda,
                    delta,
                    family: family_label(experiment.family),
                    test: h.name().to_string(),
                    regime: None,
                    value: None,
                    normalized: None,
                    strip_lower_margin: strip_lo,
                    strip_upper_margin: strip_hi,
                    error: Some(e.to_string()),
                },
            };
            predictions.push(entry);
        }
    }

    let regime = lambda_regime(&experiment.points);
    let regime_label_str = match regime {
        LambdaRegime::Finite(l) => format!("finite({l})"),
        LambdaRegime::Infinite => "infinite".into(),
    };
    let chi2 = TestId::Chi2;
    let lr = TestId::Lr;
    let mut efficiencies = Vec::new();
    for kind in [EfficiencyKind::AreAlpha, EfficiencyKind::Aie] {
        let kind_label = match kind {
            EfficiencyKind::AreAlpha => "are-alpha",
            EfficiencyKind::Aie => "aie",
        };
        let entry = match predict_efficiency(kind, (&chi2, &lr), experiment.family, regime) {
            Ok(EfficiencyValue::Value { value }) => EfficiencyEntry {
                kind: kind_label.into(),
                first: "chi2".into(),
                second: "lr".into(),
                family: family_label(experiment.family),
                lambda_regime: regime_label_str.clone(),
                value: Some(value),
                marker: None,
                error: None,
            },
            Ok(marker) => EfficiencyEntry {
                kind: kind_label.into(),
                first: "chi2".into(),
                second: "lr".into(),
                family: family_label(experiment.family),
                lambda_regime: regime_label_str.clone(),
                value: None,
                marker: Some(match marker {
                    EfficiencyValue::Zero => "zero".into(),
                    EfficiencyValue::Unbounded => "unbounded".into(),
                    EfficiencyValue::Value { .. } => unreachable!(),
                }),
                error: None,
            },
            Err(e) => EfficiencyEntry {
                kind: kind_label.into(),
                first: "chi2".into(),
                second: "lr".into(),
                family: family_label(experiment.family),
                lambda_regime: regime_label_str.clone(),
                value: None,
                marker: None,
                error: Some(e.to_string()),
            },
        };
        efficiencies.push(entry);
    }

    Ok(PredictionReport {
        schema_version: SCHEMA_VERSION,
        seed: experiment.config.seed,
        config: experiment.config.clone(),
        predictions,
        efficiencies,
    })
}

fn blank_row(experiment: &ResolvedExperiment, point_index: usize, test: &str) -> ReportRow {
    let (n, cells) = experiment.points[point_index];
    ReportRow {
        schema_version: SCHEMA_VERSION,
        point_index,
        test: test.to_string(),
        kind: String::new(),
        method: method_label(experiment.method).into(),
        n,
        cells,
        lambda: n as f64 / cells as f64,
        delta: None,
        family: family_label(experiment.family),
        threshold_mode: threshold_mode_label(experiment.threshold_mode),
        threshold: None,
        critical_offset: None,
        p_hat: None,
        log_p: None,
        ci_low: None,
        ci_high: None,
        estimate_kind: None,
        replicates: None,
        slope_empirical: None,
        slope_predicted: None,
        regime: None,
        strip_lower_margin: None,
        strip_upper_margin: None,
        runtime_ms: None,
        seed: experiment.config.seed,
        error: None,
    }
}

fn method_label(method: Method) -> &'static str {
    match method {
        Method::Naive => "naive",
        Method::Splitting => "splitting",
        Method::Exact => "exact",
    }
}

fn threshold_mode_label(mode: ThresholdMode) -> String {
    match mode {
        ThresholdMode::ApproxShift => "approx-shift".into(),
        ThresholdMode::ExactOracle => "exact-oracle".into(),
        ThresholdMode::Empirical { reps } => format!("empirical({reps})"),
    }
}

/// Rows for one grid point (one per test, or per test × critical value in
/// power mode).  Failures land in the error column.
fn simulate_point(
    experiment: &ResolvedExperiment,
    point_index: usize,
    timings: bool,
) -> Vec<ReportRow> {
    let (n, cells) = experiment.points[point_index];
    let seed = sparse_gof::numeric::derive_seed(experiment.config.seed, point_index as u64);
    let mut rows = Vec::new();
    for h in &experiment.tests {
        let point = SlopePoint {
            n,
            n_cells: cells,
            h: h.clone(),
            family: experiment.family,
        };
        let delta = experiment.schedule.value(n, cells).ok();
        let (strip_lo, strip_hi) = strip_margins(experiment.family, n, cells);

        if experiment.power_mode {
            for &c in &experiment.config.estimation.critical_values {
                let started = Instant::now();
                let mut row = blank_row(experiment, point_index, h.name());
                row.kind = "power".into();
                row.delta = delta;
                row.critical_offset = Some(c);
                row.strip_lower_margin = strip_lo;
                row.strip_upper_margin = strip_hi;
                match power_at_critical(
                    &point,
                    &experiment.spec,
                    c,
                    experiment.config.budget,
                    seed,
                ) {
                    Ok(power) => {
                        row.p_hat = Some(power);
                    }
                    Err(e) => row.error = Some(e.to_string()),
                }
                if timings {
                    row.runtime_ms = Some(started.elapsed().as_millis() as u64);
                }
                rows.push(row);
            }
            continue;
        }

        let started = Instant::now();
        let mut row = blank_row(experiment, point_index, h.name());
        row.kind = if experiment.beta_slope {
            "beta-slope".into()
        } else {
            "alpha-slope".into()
        };
        row.delta = delta;
        row.strip_lower_margin = strip_lo;
        row.strip_upper_margin = strip_hi;
        let opts = EstimateOptions {
            method: experiment.method,
            budget: experiment.config.budget,
            seed,
            threshold_mode: experiment.threshold_mode,
            splitting: experiment.splitting,
        };
        let outcome = if experiment.beta_slope {
            estimate_beta_slope(&point, &experiment.spec, &opts)
        } else {
            estimate_alpha_slope(&point, &experiment.spec, &opts)
        };
        match outcome {
            Ok(out) => {
                row.threshold = Some(out.threshold);
                row.p_hat = Some(out.estimate.p_hat);
                row.log_p = Some(out.estimate.log_p_hat);
                row.ci_low = Some(out.estimate.ci_low);
                row.ci_high = Some(out.estimate.ci_high);
                row.estimate_kind = Some(format!("{:?}", out.estimate.kind).to_lowercase());
                row.replicates = Some(out.estimate.replicates);
                row.slope_empirical = Some(out.slope_empirical);
                row.slope_predicted = out.slope_predicted;
                row.regime = out.regime.map(|r| regime_label(r).to_string());
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        if timings {
            row.runtime_ms = Some(started.elapsed().as_millis() as u64);
        }
        rows.push(row);
    }
    rows
}

/// `simulate`: CSV of report rows, flushed per point, resumable by point
/// index, byte-deterministic for a fixed (config, seed).
pub fn run_simulate(
    experiment: &ResolvedExperiment,
    out_dir: &Path,
    resume: bool,
    timings: bool,
) -> Result<PathBuf, CliError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    let rows_path = out_dir.join("rows.csv");
    let config_path = out_dir.join("config-resolved.toml");

    let done: BTreeSet<usize> = if resume && rows_path.exists() {
        read_rows(&rows_path)?
            .into_iter()
            .map(|r| r.point_index)
            .collect()
    } else {
        BTreeSet::new()
    };

    let echo = toml::to_string_pretty(&experiment.config)
        .map_err(|e| CliError::Runtime(format!("config echo: {e}")))?;
    fs::write(&config_path, echo)
        .map_err(|e| CliError::Runtime(format!("writing config echo: {e}")))?;

    let fresh = !resume || !rows_path.exists();
    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&rows_path)
        .map_err(|e| CliError::Runtime(format!("opening rows.csv: {e}")))?;
    let mut writer = csv::WriterBuilder::new()
        .has_headers(fresh)
        .from_writer(file);

    let pending: Vec<usize> = (0..experiment.points.len())
        .filter(|i| !done.contains(i))
        .collect();
    let chunk = if experiment.config.workers == 0 {
        rayon::current_num_threads().max(1)
    } else {
        experiment.config.workers
    };
    for batch in pending.chunks(chunk.max(1)) {
        let computed: Vec<Vec<ReportRow>> = {
            use rayon::prelude::*;
            batch
                .par_iter()
                .map(|&i| simulate_point(experiment, i, timings))
                .collect()
        };
        for rows in computed {
            for row in rows {
                writer
                    .serialize(row)
                    .map_err(|e| CliError::Runtime(format!("writing row: {e}")))?;
            }
        }
        writer
            .flush()
            .map_err(|e| CliError::Runtime(format!("flushing rows: {e}")))?;
    }
    writer
        .flush()
        .map_err(|e| CliError::Runtime(format!("flushing rows: {e}")))?;
    Ok(rows_path)
}

pub fn read_rows(path: &Path) -> Result<Vec<ReportRow>, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Validation(format!("reading {}: {e}", path.display())))?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| CliError::Validation(format!("bad row in {}: {e}", path.display()))))
        .collect()
}

/// `compare`: joins simulated rows with predictions, emits per-point
/// ratios, per-test trends and empirical-vs-theoretical pair efficiencies.
pub fn run_compare(
    rows: &[ReportRow],
    prediction: &PredictionReport,
    out_dir: Option<&Path>,
) -> Result<CompareSummary, CliError> {
    let mut pred_keys: BTreeSet<(usize, String)> = BTreeSet::new();
    for p in &prediction.predictions {
        pred_keys.insert((p.point_index, p.test.clone()));
    }
    let mut row_keys: BTreeSet<(usize, String)> = BTreeSet::new();
    for r in rows.iter().filter(|r| r.kind.ends_with("slope")) {
        row_keys.insert((r.point_index, r.test.clone()));
    }
    let missing: Vec<_> = row_keys.difference(&pred_keys).cloned().collect();
    let extra: Vec<_> = pred_keys.difference(&row_keys).cloned().collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(CliError::Validation(format!(
            "grid keys do not match: simulated-only {missing:?}, predicted-only {extra:?}"
        )));
    }

    let mut points = Vec::new();
    for row in rows.iter().filter(|r| r.kind.ends_with("slope")) {
        let Some(slope_empirical) = row.slope_empirical else {
            continue;
        };
        let predicted = prediction
            .predictions
            .iter()
            .find(|p| p.point_index == row.point_index && p.test == row.test)
            .and_then(|p| p.value);
        points.push(ComparePoint {
            point_index: row.point_index,
            test: row.test.clone(),
            n: row.n,
            cells: row.cells,
            lambda: row.lambda,
            slope_empirical,
            slope_predicted: predicted,
            ratio: predicted.map(|p| slope_empirical / p),
        });
    }

    let mut trends = Vec::new();
    let tests: BTreeSet<String> = points.iter().map(|p| p.test.clone()).collect();
    for test in &tests {
        let mut series: Vec<&ComparePoint> = points.iter().filter(|p| &p.test == test).collect();
        series.sort_by_key(|p| p.n);
        let ratios: Vec<f64> = series.iter().filter_map(|p| p.ratio).collect();
        let gap_decreasing = if ratios.len() >= 3 {
            let tail = &ratios[ratios.len() - 3..];
            Some((tail[0] - 1.0).abs() > (tail[1] - 1.0).abs()
                && (tail[1] - 1.0).abs() > (tail[2] - 1.0).abs())
        } else {
            None
        };
        trends.push(CompareTrend {
            test: test.clone(),
            points: series.len(),
            first_ratio: ratios.first().copied(),
            final_ratio: ratios.last().copied(),
            gap_decreasing,
        });
    }

    // empirical chi2/lr slope ratio against ρ⁻²(Λ, λ)
    let mut efficiencies = Vec::new();
    let indexes: BTreeSet<usize> = points.iter().map(|p| p.point_index).collect();
    for idx in indexes {
        let chi = points
            .iter()
            .find(|p| p.point_index == idx && p.test == "chi2");
        let lr = points
            .iter()
            .find(|p| p.point_index == idx && p.test == "lr");
        if let (Some(chi), Some(lr)) = (chi, lr) {
            if lr.slope_empirical > 0.0 {
                let rho = moment_summary(
                    &HFunction::log_likelihood_ratio(),
                    chi.lambda,
                    chi.cells,
                )
                .map_err(runtime)?
                .rho;
                efficiencies.push(crate::report::CompareEfficiency {
                    point_index: idx,
                    n: chi.n,
                    cells: chi.cells,
                    lambda: chi.lambda,
                    empirical_ratio: chi.slope_empirical / lr.slope_empirical,
                    theoretical_ratio: 1.0 / (rho * rho),
                });
            }
        }
    }

    let summary = CompareSummary {
        points,
        trends,
        efficiencies,
    };

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        write_csv(&dir.join("compare_points.csv"), &summary.points)?;
        write_csv(&dir.join("compare_trends.csv"), &summary.trends)?;
        write_csv(&dir.join("compare_efficiencies.csv"), &summary.efficiencies)?;
    }
    Ok(summary)
}

fn write_csv<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::Runtime(format!("creating {}: {e}", path.display())))?;
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
    }
    writer
        .flush()
        .map_err(|e| CliError::Runtime(format!("flushing {}: {e}", path.display())))
}

/// `oracle`: exact tail value for a small instance, optionally checked
/// against the Monte Carlo estimators.
#[allow(clippy::too_many_arguments)]
pub fn run_oracle(
    n: u64,
    cells: u64,
    kernel: &str,
    threshold: f64,
    check_estimators: bool,
    budget: u64,
    seed: u64,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let h = kernel_by_name(kernel)?;
    let p = vec![1.0 / cells as f64; cells as usize];
    let exact = exact_tail(n, cells, &p, &h, threshold).map_err(runtime)?;
    writeln!(out, "exact,{}", exact.p_hat).map_err(|e| CliError::Runtime(e.to_string()))?;
    if check_estimators {
        use sparse_gof::montecarlo::estimate_tail;
        for method in [Method::Naive, Method::Splitting] {
            match estimate_tail(n, cells, &p, &h, threshold, method, budget, seed) {
                Ok(est) => {
                    let covered = est.ci_low <= exact.p_hat && exact.p_hat <= est.ci_high;
                    writeln!(
                        out,
                        "{},{},{},{},{}",
                        method_label(method),
                        est.p_hat,
                        est.ci_low,
                        est.ci_high,
                        covered
                    )
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
                }
                Err(e) => {
                    writeln!(out, "{},error,{e}", method_label(method))
                        .map_err(|e| CliError::Runtime(e.to_string()))?;
                }
            }
        }
    }
    Ok(())
}
