use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use bundle_choice::data::{read_cross_csv, read_panel_csv, write_cross_csv, write_panel_csv};
use bundle_choice::dgp::{simulate_cross, simulate_panel};
use bundle_choice::harness::{self, Estimator, Format, MadMode, RunConfig};
use bundle_choice::lad::estimate_lad;
use bundle_choice::lad_panel::estimate_panel_lad;
use bundle_choice::mrc::{bootstrap_intervals, bootstrap_mrc, estimate_mrc, test_eta_cross};
use bundle_choice::ms_panel::{estimate_ms, numerical_bootstrap_ms, test_eta_panel};
use bundle_choice::{ChoiceSample, Error, PanelChoiceSample, Result, par};

#[derive(Parser)]
#[command(name = "bundle-choice", version, about = "Simulate and estimate bundle choice models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a simulated sample as CSV.
    Simulate(Common),
    /// Two-step rank correlation estimates for a cross section.
    EstimateMrc(Common),
    /// Multi-index LAD estimates for a cross section.
    EstimateLad(Common),
    /// Panel maximum score estimates.
    EstimateMs(Common),
    /// Panel LAD estimates with a network first stage.
    EstimatePanelLad(Common),
    /// Bundle-effect test on one sample; with --reps, the detection rate over
    /// that many simulated samples.
    TestEta(Common),
    /// Monte Carlo replications with summary statistics.
    McRun(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum MadArg {
    Truth,
    Median,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Mrc,
    Lad,
    Ms,
    PanelLad,
}

#[derive(Args, Clone)]
struct Common {
    /// Design 1-4 (1, 2 cross-sectional; 3, 4 panel).
    #[arg(long)]
    design: Option<u8>,
    /// Sample size (agents).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    c3: Option<f64>,
    #[arg(long)]
    c4: Option<f64>,
    /// Bootstrap draws.
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Data CSV to estimate on instead of simulating.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Drop the bundle shock from the simulated design.
    #[arg(long)]
    eta_zero: bool,
    #[arg(long, value_enum)]
    mad_mode: Option<MadArg>,
    /// Estimator for mc-run.
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
}

impl Common {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let file = File::open(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = self.design {
            cfg.design = v;
        }
        if let Some(v) = self.n {
            cfg.n = v;
        }
        if let Some(v) = self.reps {
            cfg.reps = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        for (slot, v) in [(&mut cfg.c1, self.c1), (&mut cfg.c2, self.c2), (&mut cfg.c3, self.c3), (&mut cfg.c4, self.c4)] {
            if let Some(v) = v {
                *slot = v;
            }
        }
        if self.bootstrap.is_some() {
            cfg.bootstrap = self.bootstrap;
        }
        if self.eta_zero {
            cfg.eta_zero = true;
        }
        if let Some(m) = self.mad_mode {
            cfg.mad_mode = match m {
                MadArg::Truth => MadMode::Truth,
                MadArg::Median => MadMode::Median,
            };
        }
        if let Some(e) = self.estimator {
            cfg.estimator = match e {
                EstimatorArg::Mrc => Estimator::Mrc,
                EstimatorArg::Lad => Estimator::Lad,
                EstimatorArg::Ms => Estimator::Ms,
                EstimatorArg::PanelLad => Estimator::PanelLad,
            };
        } else if self.design.is_some() && cfg.design()?.is_panel() != cfg.estimator.needs_panel() {
            // A design given on the command line picks the matching sign-based estimator.
            cfg.estimator = if cfg.design()?.is_panel() { Estimator::Ms } else { Estimator::Mrc };
        }
        cfg.design()?;
        Ok(cfg)
    }

    fn format_or(&self, default: Format) -> Format {
        match self.format {
            Some(FormatArg::Json) => Format::Json,
            Some(FormatArg::Csv) => Format::Csv,
            None => default,
        }
    }

    fn sink(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(std::io::stdout().lock()),
        })
    }
}

fn is_panel_csv(path: &Path) -> Result<bool> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr.headers()?.iter().any(|h| h == "t"))
}

fn cross_sample(common: &Common, cfg: &RunConfig) -> Result<ChoiceSample> {
    match &common.input {
        Some(p) => read_cross_csv(File::open(p)?),
        None => {
            let design = cfg.design()?;
            if design.is_panel() {
                return Err(Error::Config(format!("design {} is a panel design", design.id)));
            }
            simulate_cross(design, cfg.n, cfg.seed)
        }
    }
}

fn panel_sample(common: &Common, cfg: &RunConfig) -> Result<PanelChoiceSample> {
    match &common.input {
        Some(p) => read_panel_csv(File::open(p)?),
        None => {
            let design = cfg.design()?;
            if !design.is_panel() {
                return Err(Error::Config(format!("design {} is a cross-sectional design", design.id)));
            }
            simulate_panel(design, cfg.n, cfg.seed)
        }
    }
}

#[derive(Serialize)]
struct EstimateRow {
    parameter: String,
    estimate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    upper: Option<f64>,
}

fn rows(names: &[String], values: &[f64], intervals: Option<&[(f64, f64)]>) -> Vec<EstimateRow> {
    names
        .iter()
        .zip(values)
        .enumerate()
        .map(|(j, (name, v))| EstimateRow {
            parameter: name.clone(),
            estimate: *v,
            lower: intervals.map(|iv| iv[j].0),
            upper: intervals.map(|iv| iv[j].1),
        })
        .collect()
}

fn write_rows(rows: &[EstimateRow], format: Format, mut out: impl Write) -> Result<()> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, rows)?;
            writeln!(out)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            let with_ci = rows.iter().any(|r| r.lower.is_some());
            let mut header = vec!["parameter", "estimate"];
            if with_ci {
                header.extend(["lower", "upper"]);
            }
            w.write_record(&header)?;
            for r in rows {
                let mut rec = vec![r.parameter.clone(), r.estimate.to_string()];
                if with_ci {
                    rec.push(r.lower.map_or(String::new(), |v| v.to_string()));
                    rec.push(r.upper.map_or(String::new(), |v| v.to_string()));
                }
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn index_names(base: &str, len: usize) -> Vec<String> {
    if len == 1 {
        vec![base.to_string()]
    } else {
        (0..len).map(|j| format!("{base}_{}", j + 2)).collect()
    }
}

fn simulate(common: &Common) -> Result<()> {
    let cfg = common.run_config()?;
    if matches!(common.format, Some(FormatArg::Json)) {
        return Err(Error::Config("simulate writes CSV only".into()));
    }
    let design = cfg.design()?;
    let out = common.sink()?;
    if design.is_panel() {
        write_panel_csv(&simulate_panel(design, cfg.n, cfg.seed)?, out)
    } else {
        write_cross_csv(&simulate_cross(design, cfg.n, cfg.seed)?, out)
    }
}

fn estimate_mrc_cmd(common: &Common) -> Result<()> {
    let cfg = common.run_config()?;
    let sample = cross_sample(common, &cfg)?;
    let mcfg = cfg.mrc_config(cfg.seed);
    let est = estimate_mrc(&sample, &mcfg)?;
    let names = [index_names("beta", est.beta_free.len()), index_names("gamma", est.gamma_free.len())].concat();
    let values = [est.beta_free.clone(), est.gamma_free.clone()].concat();
    let intervals = match cfg.bootstrap {
        Some(_) => {
            let (b, g) = bootstrap_intervals(&bootstrap_mrc(&sample, &mcfg, cfg.seed)?);
            Some([b, g].concat())
        }
        None => None,
    };
    write_rows(&rows(&names, &values, intervals.as_deref()), common.format_or(Format::Json), common.sink()?)
}

fn estimate_ms_cmd(common: &Common) -> Result<()> {
    let cfg = common.run_config()?;
    let panel = panel_sample(common, &cfg)?;
    let mcfg = cfg.ms_config(cfg.seed);
    let est = estimate_ms(&panel, &mcfg)?;
    let names = [index_names("beta", est.beta_free.len()), index_names("gamma", est.gamma_free.len())].concat();
    let values = [est.beta_free.clone(), est.gamma_free.clone()].concat();
    let intervals = match cfg.bootstrap {
        Some(_) => {
            let nb = numerical_bootstrap_ms(&panel, &mcfg, &est, cfg.seed)?;
            Some([nb.beta_ci, nb.gamma_ci].concat())
        }
        None => None,
    };
    write_rows(&rows(&names, &values, intervals.as_deref()), common.format_or(Format::Json), common.sink()?)
}

fn estimate_lad_cmd(common: &Common) -> Result<()> {
    let cfg = common.run_config()?;
    let sample = cross_sample(common, &cfg)?;
    let est = estimate_lad(&sample, &cfg.lad_config(cfg.seed))?;
    write_rows(&rows(&est.params.names(), &est.params.to_vec(), None), common.format_or(Format::Json), common.sink()?)
}

fn estimate_panel_lad_cmd(common: &Common) -> Result<()> {
    let cfg = common.run_config()?;
    let panel = panel_sample(common, &cfg)?;
    let est = estimate_panel_lad(&panel, &cfg.panel_lad_config(cfg.seed))?;
    write_rows(&rows(&est.params.names(), &est.params.to_vec(), None), common.format_or(Format::Json), common.sink()?)
}

#[derive(Serialize)]
struct EtaOutput {
    stat: f64,
    q05: f64,
    bundle_effect_detected: bool,
    b: usize,
}

fn test_eta_cmd(common: &Common) -> Result<()> {
    let cfg = common.run_config()?;
    let b = cfg.bootstrap.unwrap_or(299);
    let mut out = common.sink()?;
    if common.input.is_none() && cfg.reps > 1 && common.reps.is_some() {
        let run = harness::run_eta_tests(&cfg, b)?;
        serde_json::to_writer_pretty(&mut out, &run)?;
        writeln!(out)?;
        return Ok(());
    }
    let panel = match &common.input {
        Some(p) => is_panel_csv(p)?,
        None => cfg.design()?.is_panel(),
    };
    let t = if panel {
        let panel = panel_sample(common, &cfg)?;
        let mcfg = cfg.ms_config(cfg.seed);
        let est = estimate_ms(&panel, &mcfg)?;
        test_eta_panel(&panel, &est.gamma_free, &mcfg, b, cfg.seed)?
    } else {
        let sample = cross_sample(common, &cfg)?;
        let mcfg = cfg.mrc_config(cfg.seed);
        let est = estimate_mrc(&sample, &mcfg)?;
        test_eta_cross(&sample, &est, &mcfg, b, cfg.seed)?
    };
    let result = EtaOutput { stat: t.stat, q05: t.q05, bundle_effect_detected: t.bundle_effect_detected, b };
    serde_json::to_writer_pretty(&mut out, &result)?;
    writeln!(out)?;
    Ok(())
}

fn mc_run(common: &Common) -> Result<()> {
    let cfg = common.run_config()?;
    let run = harness::run_design(&cfg)?;
    let rows = harness::export_rows(&run.summary, run.coverage.as_ref());
    harness::write_summary(&rows, common.format_or(Format::Csv), common.sink()?)?;
    if run.summary.failures > 0 {
        eprintln!("{} of {} replications failed", run.summary.failures, run.summary.reps);
    }
    Ok(())
}

fn dispatch(command: &Command) -> Result<()> {
    let common = match command {
        Command::Simulate(c)
        | Command::EstimateMrc(c)
        | Command::EstimateLad(c)
        | Command::EstimateMs(c)
        | Command::EstimatePanelLad(c)
        | Command::TestEta(c)
        | Command::McRun(c) => c,
    };
    par::with_workers(common.workers, || match command {
        Command::Simulate(c) => simulate(c),
        Command::EstimateMrc(c) => estimate_mrc_cmd(c),
        Command::EstimateLad(c) => estimate_lad_cmd(c),
        Command::EstimateMs(c) => estimate_ms_cmd(c),
        Command::EstimatePanelLad(c) => estimate_panel_lad_cmd(c),
        Command::TestEta(c) => test_eta_cmd(c),
        Command::McRun(c) => mc_run(c),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Dimension { .. } => 2,
                Error::FailureCap { .. } => 3,
                _ => 1,
            })
        }
    }
}
