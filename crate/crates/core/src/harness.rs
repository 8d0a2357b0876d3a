//! Monte Carlo replications, summary statistics and export.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dgp::{Design, ModelParams, simulate_cross, simulate_panel};
use crate::error::{Error, Result};
use crate::lad::{LadConfig, estimate_lad};
use crate::lad_panel::{NetLayout, PanelLadConfig, estimate_panel_lad};
use crate::mlp::TrainConfig;
use crate::mrc::{MrcConfig, bootstrap_intervals, bootstrap_mrc, estimate_mrc, test_eta_cross};
use crate::ms_panel::{MsConfig, estimate_ms, numerical_bootstrap_ms, test_eta_panel};
use crate::optimizer::SearchSettings;
use crate::par;
use crate::stats::{derive_seed, mean, median};

const STREAM_DATA: u64 = 0xDA7A;
const STREAM_ESTIMATE: u64 = 0xE57;
const STREAM_BOOT: u64 = 0xB007;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Mrc,
    Lad,
    Ms,
    PanelLad,
}

impl Estimator {
    pub fn needs_panel(self) -> bool {
        matches!(self, Estimator::Ms | Estimator::PanelLad)
    }

    pub fn label(self) -> &'static str {
        match self {
            Estimator::Mrc => "mrc",
            Estimator::Lad => "lad",
            Estimator::Ms => "ms",
            Estimator::PanelLad => "panel-lad",
        }
    }
}

/// How MAD is centred: at the truth (default) or at the median estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MadMode {
    #[default]
    Truth,
    Median,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub design: u8,
    pub eta_zero: bool,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub estimator: Estimator,
    /// Bootstrap draws per replication; `None` skips inference.
    pub bootstrap: Option<usize>,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub workers: Option<usize>,
    pub mad_mode: MadMode,
    /// Largest tolerated share of failed replications.
    pub failure_cap: f64,
    pub search: SearchSettings,
    pub mlp: TrainConfig,
    pub net_layout: NetLayout,
    pub lad: LadConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mrc = MrcConfig::default();
        let ms = MsConfig::default();
        RunConfig {
            design: 1,
            eta_zero: false,
            n: 250,
            reps: 100,
            seed: 0,
            estimator: Estimator::Mrc,
            bootstrap: None,
            c1: mrc.c1,
            c2: mrc.c2,
            c3: ms.c3,
            c4: ms.c4,
            workers: None,
            mad_mode: MadMode::Truth,
            failure_cap: 0.02,
            search: SearchSettings::default(),
            mlp: TrainConfig::default(),
            net_layout: NetLayout::default(),
            lad: LadConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn design(&self) -> Result<Design> {
        Ok(Design::new(self.design)?.with_eta_zero(self.eta_zero))
    }

    pub fn validate(&self) -> Result<()> {
        let design = self.design()?;
        if self.reps == 0 {
            return Err(Error::config("reps must be at least 1"));
        }
        if design.is_panel() != self.estimator.needs_panel() {
            return Err(Error::config(format!(
                "estimator {} does not apply to design {}",
                self.estimator.label(),
                self.design
            )));
        }
        if self.bootstrap.is_some() && matches!(self.estimator, Estimator::Lad | Estimator::PanelLad) {
            return Err(Error::config("bootstrap inference is available for mrc and ms only"));
        }
        if let Some(b) = self.bootstrap {
            if b < 10 {
                return Err(Error::config(format!("bootstrap needs B >= 10, got {b}")));
            }
        }
        for (name, c) in [("c1", self.c1), ("c2", self.c2), ("c3", self.c3), ("c4", self.c4)] {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {c}")));
            }
        }
        if !(0.0..=1.0).contains(&self.failure_cap) {
            return Err(Error::config("failure cap must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn mrc_config(&self, seed: u64) -> MrcConfig {
        MrcConfig {
            c1: self.c1,
            c2: self.c2,
            search: self.search.clone(),
            seed,
            bootstrap_b: self.bootstrap.unwrap_or(MrcConfig::default().bootstrap_b),
            ..MrcConfig::default()
        }
    }

    pub fn ms_config(&self, seed: u64) -> MsConfig {
        MsConfig {
            c3: self.c3,
            c4: self.c4,
            search: self.search.clone(),
            seed,
            bootstrap_b: self.bootstrap.unwrap_or(MsConfig::default().bootstrap_b),
            ..MsConfig::default()
        }
    }

    pub fn lad_config(&self, seed: u64) -> LadConfig {
        LadConfig { search: self.search.clone(), seed, ..self.lad.clone() }
    }

    pub fn panel_lad_config(&self, seed: u64) -> PanelLadConfig {
        PanelLadConfig {
            mlp: self.mlp.clone(),
            layout: self.net_layout,
            include_rho_b: self.lad.include_rho_b,
            search: self.search.clone(),
            seed,
        }
    }

    /// Names and true values of the reported parameters.
    pub fn targets(&self) -> (Vec<String>, Vec<f64>) {
        let truth = ModelParams::design_truth();
        match self.estimator {
            Estimator::Mrc | Estimator::Ms => {
                (vec!["beta".into(), "gamma".into()], vec![truth.beta_free[0], truth.gamma_free[0]])
            }
            Estimator::Lad | Estimator::PanelLad => {
                let mut t = truth;
                if self.lad.include_rho_b {
                    t.rho_b = Some(vec![0.0]);
                }
                (t.names(), t.to_vec())
            }
        }
    }
}

/// One replication's estimate and, with inference on, its 95% intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub estimate: Vec<f64>,
    pub intervals: Option<Vec<(f64, f64)>>,
}

/// Simulates and estimates replication `index` of `config`. The sample
/// depends only on `(config.seed, index)`.
pub fn run_replication(config: &RunConfig, index: usize) -> Result<Replication> {
    let design = config.design()?;
    let k = index as u64;
    let data_seed = derive_seed(config.seed, STREAM_DATA, k);
    let est_seed = derive_seed(config.seed, STREAM_ESTIMATE, k);
    let boot_seed = derive_seed(config.seed, STREAM_BOOT, k);
    let (estimate, intervals) = match config.estimator {
        Estimator::Mrc => {
            let sample = simulate_cross(design, config.n, data_seed)?;
            let cfg = config.mrc_config(est_seed);
            let est = estimate_mrc(&sample, &cfg)?;
            let intervals = match config.bootstrap {
                Some(_) => {
                    let (b, g) = bootstrap_intervals(&bootstrap_mrc(&sample, &cfg, boot_seed)?);
                    Some(b.into_iter().chain(g).collect())
                }
                None => None,
            };
            ([est.beta_free, est.gamma_free].concat(), intervals)
        }
        Estimator::Ms => {
            let panel = simulate_panel(design, config.n, data_seed)?;
            let cfg = config.ms_config(est_seed);
            let est = estimate_ms(&panel, &cfg)?;
            let intervals = match config.bootstrap {
                Some(_) => {
                    let nb = numerical_bootstrap_ms(&panel, &cfg, &est, boot_seed)?;
                    Some(nb.beta_ci.into_iter().chain(nb.gamma_ci).collect())
                }
                None => None,
            };
            ([est.beta_free, est.gamma_free].concat(), intervals)
        }
        Estimator::Lad => {
            let sample = simulate_cross(design, config.n, data_seed)?;
            (estimate_lad(&sample, &config.lad_config(est_seed))?.params.to_vec(), None)
        }
        Estimator::PanelLad => {
            let panel = simulate_panel(design, config.n, data_seed)?;
            (estimate_panel_lad(&panel, &config.panel_lad_config(est_seed))?.params.to_vec(), None)
        }
    };
    Ok(Replication { index, estimate, intervals })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub parameter: String,
    pub mbias: f64,
    pub rmse: f64,
    pub med: f64,
    pub mad: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub params: Vec<ParamSummary>,
    pub reps: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamCoverage {
    pub parameter: String,
    pub coverage: f64,
    pub mean_length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub params: Vec<ParamCoverage>,
    pub b: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub summary: ReplicationSummary,
    pub coverage: Option<CoverageSummary>,
    pub replications: Vec<Replication>,
    /// Error messages of failed replications, by index.
    pub failed: Vec<(usize, String)>,
}

/// MBIAS, RMSE, MED and MAD of `estimates − truth`.
pub fn summarize(name: &str, estimates: &[f64], truth: f64, mad_mode: MadMode) -> ParamSummary {
    let err: Vec<f64> = estimates.iter().map(|e| e - truth).collect();
    let med = median(&err);
    let center = match mad_mode {
        MadMode::Truth => 0.0,
        MadMode::Median => med,
    };
    let abs: Vec<f64> = err.iter().map(|e| (e - center).abs()).collect();
    ParamSummary {
        parameter: name.to_string(),
        mbias: mean(&err),
        rmse: mean(&err.iter().map(|e| e * e).collect::<Vec<_>>()).sqrt(),
        med,
        mad: median(&abs),
    }
}

/// Share of intervals containing `truth` and their mean width.
pub fn coverage(name: &str, intervals: &[(f64, f64)], truth: f64) -> ParamCoverage {
    let hits = intervals.iter().filter(|(lo, hi)| *lo <= truth && truth <= *hi).count();
    ParamCoverage {
        parameter: name.to_string(),
        coverage: hits as f64 / intervals.len() as f64,
        mean_length: mean(&intervals.iter().map(|(lo, hi)| hi - lo).collect::<Vec<_>>()),
    }
}

/// Runs all replications (in parallel across replications) and aggregates.
/// Fails when the share of failed replications exceeds the cap.
pub fn run_design(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let results = par::with_workers(config.workers, || par::map_range(config.reps, |k| run_replication(config, k)));
    let mut replications = Vec::new();
    let mut failed = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(rep) => replications.push(rep),
            Err(e) => failed.push((k, e.to_string())),
        }
    }
    if failed.len() as f64 > config.failure_cap * config.reps as f64 || replications.is_empty() {
        return Err(Error::FailureCap { failed: failed.len(), reps: config.reps, cap_pct: 100.0 * config.failure_cap });
    }
    let (names, truth) = config.targets();
    let params = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let est: Vec<f64> = replications.iter().map(|r| r.estimate[j]).collect();
            summarize(name, &est, truth[j], config.mad_mode)
        })
        .collect();
    let coverage = config.bootstrap.map(|b| CoverageSummary {
        params: names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let iv: Vec<(f64, f64)> = replications.iter().filter_map(|r| r.intervals.as_ref().map(|v| v[j])).collect();
                coverage(name, &iv, truth[j])
            })
            .collect(),
        b,
    });
    Ok(RunOutput {
        summary: ReplicationSummary { params, reps: config.reps, failures: failed.len() },
        coverage,
        replications,
        failed,
    })
}

/// Outcome of repeated bundle-effect tests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaRun {
    pub reps: usize,
    pub detections: usize,
    pub rate: f64,
    pub stats: Vec<f64>,
    pub q05: Vec<f64>,
}

/// Runs the bundle-effect test on `config.reps` simulated samples with
/// `b` bootstrap draws each. Cross-sectional designs use the rank
/// correlation estimates, panel designs the maximum score γ̂.
pub fn run_eta_tests(config: &RunConfig, b: usize) -> Result<EtaRun> {
    let design = config.design()?;
    if config.reps == 0 {
        return Err(Error::config("reps must be at least 1"));
    }
    let results = par::with_workers(config.workers, || {
        par::map_range(config.reps, |k| -> Result<(f64, f64, bool)> {
            let kk = k as u64;
            let data_seed = derive_seed(config.seed, STREAM_DATA, kk);
            let est_seed = derive_seed(config.seed, STREAM_ESTIMATE, kk);
            let boot_seed = derive_seed(config.seed, STREAM_BOOT, kk);
            let t = if design.is_panel() {
                let panel = simulate_panel(design, config.n, data_seed)?;
                let cfg = config.ms_config(est_seed);
                let est = estimate_ms(&panel, &cfg)?;
                test_eta_panel(&panel, &est.gamma_free, &cfg, b, boot_seed)?
            } else {
                let sample = simulate_cross(design, config.n, data_seed)?;
                let cfg = config.mrc_config(est_seed);
                let est = estimate_mrc(&sample, &cfg)?;
                test_eta_cross(&sample, &est, &cfg, b, boot_seed)?
            };
            Ok((t.stat, t.q05, t.bundle_effect_detected))
        })
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let detections = rows.iter().filter(|r| r.2).count();
    Ok(EtaRun {
        reps: rows.len(),
        detections,
        rate: detections as f64 / rows.len() as f64,
        stats: rows.iter().map(|r| r.0).collect(),
        q05: rows.iter().map(|r| r.1).collect(),
    })
}

// ---------------------------------------------------------------------------
// Export

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Rounds to six significant digits.
pub fn round6(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.5e}").parse().expect("formatted float parses")
}

/// One exported row: the summary columns plus coverage when present.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportRow {
    pub parameter: String,
    pub mbias: f64,
    pub rmse: f64,
    pub med: f64,
    pub mad: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub coverage: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub length: Option<f64>,
}

pub fn export_rows(summary: &ReplicationSummary, coverage: Option<&CoverageSummary>) -> Vec<ExportRow> {
    summary
        .params
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let cov = coverage.and_then(|c| c.params.get(j));
            ExportRow {
                parameter: p.parameter.clone(),
                mbias: round6(p.mbias),
                rmse: round6(p.rmse),
                med: round6(p.med),
                mad: round6(p.mad),
                coverage: cov.map(|c| round6(c.coverage)),
                length: cov.map(|c| round6(c.mean_length)),
            }
        })
        .collect()
}

/// Writes the summary table: CSV with header
/// `parameter,mbias,rmse,med,mad[,coverage,length]`, or a JSON array of the
/// same rows.
pub fn write_summary<W: Write>(rows: &[ExportRow], format: Format, mut out: W) -> Result<()> {
    match format {
        Format::Csv => {
            let with_cov = rows.iter().any(|r| r.coverage.is_some());
            let mut w = csv::Writer::from_writer(out);
            let mut header = vec!["parameter", "mbias", "rmse", "med", "mad"];
            if with_cov {
                header.extend(["coverage", "length"]);
            }
            w.write_record(&header)?;
            for r in rows {
                let mut rec = vec![r.parameter.clone()];
                rec.extend([r.mbias, r.rmse, r.med, r.mad].iter().map(|v| v.to_string()));
                if with_cov {
                    rec.extend([r.coverage, r.length].iter().map(|v| v.map_or(String::new(), |x| x.to_string())));
                }
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, rows)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn export(summary: &ReplicationSummary, coverage: Option<&CoverageSummary>, path: &Path, format: Format) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_summary(&export_rows(summary, coverage), format, std::io::BufWriter::new(file))
}

/// Parses a file written by [`export`].
pub fn read_summary(path: &Path, format: Format) -> Result<Vec<ExportRow>> {
    let file = std::fs::File::open(path)?;
    match format {
        Format::Json => Ok(serde_json::from_reader(std::io::BufReader::new(file))?),
        Format::Csv => {
            let mut rdr = csv::Reader::from_reader(file);
            let mut rows = Vec::new();
            for rec in rdr.records() {
                let rec = rec?;
                let num = |i: usize| -> Result<Option<f64>> {
                    match rec.get(i) {
                        None | Some("") => Ok(None),
                        Some(s) => s.parse().map(Some).map_err(|_| Error::input(format!("bad number {s:?}"))),
                    }
                };
                let req = |i: usize| num(i)?.ok_or_else(|| Error::input("missing summary column"));
                rows.push(ExportRow {
                    parameter: rec.get(0).unwrap_or_default().to_string(),
                    mbias: req(1)?,
                    rmse: req(2)?,
                    med: req(3)?,
                    mad: req(4)?,
                    coverage: num(5)?,
                    length: num(6)?,
                });
            }
            Ok(rows)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_replication_summary() {
        let s = summarize("beta", &[1.3], 1.0, MadMode::Truth);
        assert_abs_diff_eq!(s.mbias, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(s.rmse, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(s.med, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(s.mad, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn one_pass_reference() {
        let est = [0.7, 1.4, 0.95, 1.2, 0.4, 1.01, 1.33];
        let s = summarize("beta", &est, 1.0, MadMode::Truth);
        let (mut sum, mut sq) = (0.0, 0.0);
        for e in est {
            sum += e - 1.0;
            sq += (e - 1.0) * (e - 1.0);
        }
        let n = est.len() as f64;
        assert_abs_diff_eq!(s.mbias, sum / n, epsilon = 1e-12);
        assert_abs_diff_eq!(s.rmse, (sq / n).sqrt(), epsilon = 1e-12);
        assert!(s.rmse >= s.mbias.abs() && s.mad >= 0.0);
    }

    #[test]
    fn mad_modes() {
        let est = [1.0, 1.5, 2.0];
        assert_abs_diff_eq!(summarize("b", &est, 1.0, MadMode::Truth).mad, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(summarize("b", &est, 1.0, MadMode::Median).mad, 0.5, epsilon = 1e-15);
        let est = [1.0, 1.1, 3.0];
        assert_abs_diff_eq!(summarize("b", &est, 1.0, MadMode::Truth).mad, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(summarize("b", &est, 1.0, MadMode::Median).mad, 0.1, epsilon = 1e-12);
        let est = [1.0, 2.0, 2.2, 2.3];
        assert_abs_diff_eq!(summarize("b", &est, 1.0, MadMode::Truth).mad, 1.1, epsilon = 1e-12);
        assert_abs_diff_eq!(summarize("b", &est, 1.0, MadMode::Median).mad, 0.15, epsilon = 1e-12);
    }

    #[test]
    fn coverage_counts_hits() {
        let c = coverage("g", &[(0.5, 1.5), (1.2, 2.0), (0.0, 1.0)], 1.0);
        assert_abs_diff_eq!(c.coverage, 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.mean_length, (1.0 + 0.8 + 1.0) / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn rounding_keeps_six_digits() {
        assert_eq!(round6(0.123456789), 0.123457);
        assert_eq!(round6(-1234567.0), -1234570.0);
        assert_eq!(round6(0.0), 0.0);
    }

    fn summary() -> ReplicationSummary {
        ReplicationSummary {
            params: vec![
                ParamSummary { parameter: "beta".into(), mbias: 0.0681234567, rmse: 0.534, med: -0.01, mad: 0.25 },
                ParamSummary { parameter: "gamma".into(), mbias: -1e-7, rmse: 0.4, med: 0.0, mad: 0.3 },
            ],
            reps: 10,
            failures: 0,
        }
    }

    #[test]
    fn csv_header_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        export(&summary(), None, &path, Format::Csv).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "parameter,mbias,rmse,med,mad");
        assert_eq!(read_summary(&path, Format::Csv).unwrap(), export_rows(&summary(), None));
    }

    #[test]
    fn coverage_columns_and_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cov = CoverageSummary {
            params: vec![
                ParamCoverage { parameter: "beta".into(), coverage: 0.918, mean_length: 1.492 },
                ParamCoverage { parameter: "gamma".into(), coverage: 0.9, mean_length: 1.1 },
            ],
            b: 99,
        };
        let csv_path = dir.path().join("c.csv");
        export(&summary(), Some(&cov), &csv_path, Format::Csv).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "parameter,mbias,rmse,med,mad,coverage,length");
        assert_eq!(read_summary(&csv_path, Format::Csv).unwrap(), export_rows(&summary(), Some(&cov)));
        let json_path = dir.path().join("c.json");
        export(&summary(), Some(&cov), &json_path, Format::Json).unwrap();
        assert_eq!(read_summary(&json_path, Format::Json).unwrap(), export_rows(&summary(), Some(&cov)));
    }

    #[test]
    fn config_checks() {
        assert!(RunConfig { reps: 0, ..Default::default() }.validate().is_err());
        assert!(RunConfig { design: 3, ..Default::default() }.validate().is_err());
        assert!(RunConfig { estimator: Estimator::Lad, bootstrap: Some(99), ..Default::default() }.validate().is_err());
        assert!(RunConfig { c1: 0.0, ..Default::default() }.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }

    #[test]
    fn replication_is_independent_of_batch() {
        let cfg = RunConfig { n: 60, reps: 3, seed: 5, ..Default::default() };
        let batch = run_design(&cfg).unwrap();
        let alone = run_replication(&cfg, 2).unwrap();
        assert_eq!(batch.replications[2], alone);
        let seq = par::sequential(|| run_design(&cfg).unwrap());
        assert_eq!(seq, batch);
    }

    #[test]
    fn failure_cap_breach() {
        // N below the estimator minimum makes every replication fail.
        let cfg = RunConfig { n: 5, reps: 2, ..Default::default() };
        assert!(matches!(run_design(&cfg), Err(Error::FailureCap { failed: 2, .. })));
    }
}
