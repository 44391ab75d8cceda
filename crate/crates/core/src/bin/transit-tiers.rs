use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use transit_tiers::bundling::OptimalMode;
use transit_tiers::ced::CedSurplusForm;
use transit_tiers::domain::{CostModelKind, DemandModel};
use transit_tiers::experiment::{self, ExperimentConfig, InputSource, ResultTable};
use transit_tiers::ingest::{self, SynthPreset};
use transit_tiers::market::Market;
use transit_tiers::{Error, Result};

const DEFAULT_SYNTH_FLOWS: usize = 1000;

#[derive(Parser, Debug)]
#[command(
    name = "transit-tiers",
    version,
    about = "Tiered transit pricing experiments"
)]
struct Cli {
    /// TOML file with default settings; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic flow table matched to a preset's moments.
    Synth(Common),
    /// Fit a market and write the fitted flows and parameters.
    Fit(Common),
    /// Capture against the number of bundles for each strategy.
    Capture(Common),
    /// Capture curves across a grid of cost parameters.
    ThetaSweep(Common),
    /// Worst or best profit-weighted capture over parameter grids.
    Sensitivity(Common),
}

#[derive(Clone, Copy, Debug, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Preset {
    EuIsp,
    Cdn,
    Internet2,
}

impl From<Preset> for SynthPreset {
    fn from(p: Preset) -> Self {
        match p {
            Preset::EuIsp => SynthPreset::EuIsp,
            Preset::Cdn => SynthPreset::Cdn,
            Preset::Internet2 => SynthPreset::Internet2,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Mode {
    Full,
    Contiguous,
}

#[derive(Clone, Copy, Debug, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum SurplusForm {
    NetOfPayment,
    UnitPrice,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Flow table (flow_id,demand_mbps,distance_miles,region,dest_type).
    #[arg(long, conflicts_with = "synth_preset")]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    synth_preset: Option<Preset>,
    #[arg(long)]
    n_flows: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// ced or logit.
    #[arg(long)]
    demand_model: Option<String>,
    /// linear, concave, regional or dest-type.
    #[arg(long)]
    cost_model: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    p0: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    s0: Option<f64>,
    /// Range `1..8` (inclusive) or list `1,2,4`.
    #[arg(long)]
    bundles: Option<String>,
    /// Comma-separated strategy names.
    #[arg(long, value_delimiter = ',')]
    strategy: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    theta_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    alpha_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    p0_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    s0_grid: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    optimal_mode: Option<Mode>,
    #[arg(long, value_enum)]
    ced_surplus: Option<SurplusForm>,
    /// Split unlabeled flows into on-net and off-net parts under the
    /// destination-type cost model.
    #[arg(long)]
    split_dest_type: bool,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    input: Option<PathBuf>,
    synth_preset: Option<Preset>,
    n_flows: Option<usize>,
    seed: Option<u64>,
    demand_model: Option<String>,
    cost_model: Option<String>,
    alpha: Option<f64>,
    p0: Option<f64>,
    theta: Option<f64>,
    s0: Option<f64>,
    bundles: Option<BundleSpec>,
    strategy: Option<Vec<String>>,
    theta_grid: Option<Vec<f64>>,
    alpha_grid: Option<Vec<f64>>,
    p0_grid: Option<Vec<f64>>,
    s0_grid: Option<Vec<f64>>,
    optimal_mode: Option<Mode>,
    ced_surplus: Option<SurplusForm>,
    split_dest_type: Option<bool>,
    out: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum BundleSpec {
    Text(String),
    List(Vec<usize>),
}

fn parse_bundles(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("cannot read bundle counts `{s}`"));
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi
            .trim_start_matches('=')
            .trim()
            .parse()
            .map_err(|_| bad())?;
        if lo == 0 || hi < lo {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| bad()))
        .collect()
}

fn load_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Merges flags over the file over the defaults.
fn resolve(flags: Common, file: FileConfig) -> Result<(ExperimentConfig, Option<PathBuf>)> {
    let mut cfg = ExperimentConfig::default();
    let seed = flags.seed.or(file.seed).unwrap_or(0);
    let n_flows = flags
        .n_flows
        .or(file.n_flows)
        .unwrap_or(DEFAULT_SYNTH_FLOWS);
    let input = flags.input.or(if flags.synth_preset.is_some() {
        None
    } else {
        file.input
    });
    cfg.input = match input {
        Some(path) => InputSource::Csv(path),
        None => {
            let preset = flags
                .synth_preset
                .or(file.synth_preset)
                .unwrap_or(Preset::EuIsp);
            InputSource::Synth(SynthPreset::from(preset).moments(n_flows, seed))
        }
    };
    if let Some(m) = flags.demand_model.or(file.demand_model) {
        cfg.demand_model = m.parse::<DemandModel>()?;
    }
    if let Some(k) = flags.cost_model.or(file.cost_model) {
        cfg.cost_model = k.parse::<CostModelKind>()?;
    }
    cfg.alpha = flags.alpha.or(file.alpha).unwrap_or(cfg.alpha);
    cfg.p0 = flags.p0.or(file.p0).unwrap_or(cfg.p0);
    cfg.theta = flags.theta.or(file.theta).unwrap_or(cfg.theta);
    cfg.s0 = flags.s0.or(file.s0).unwrap_or(cfg.s0);
    match (flags.bundles, file.bundles) {
        (Some(s), _) | (None, Some(BundleSpec::Text(s))) => cfg.bundles = parse_bundles(&s)?,
        (None, Some(BundleSpec::List(l))) => cfg.bundles = l,
        (None, None) => {}
    }
    if let Some(names) = flags.strategy.or(file.strategy) {
        cfg.strategies = names
            .iter()
            .map(|n| n.trim().parse())
            .collect::<Result<_>>()?;
    }
    if let Some(g) = flags.theta_grid.or(file.theta_grid) {
        cfg.theta_grid = g;
    }
    cfg.alpha_grid = flags.alpha_grid.or(file.alpha_grid).unwrap_or_default();
    cfg.p0_grid = flags.p0_grid.or(file.p0_grid).unwrap_or_default();
    cfg.s0_grid = flags.s0_grid.or(file.s0_grid).unwrap_or_default();
    if let Some(m) = flags.optimal_mode.or(file.optimal_mode) {
        cfg.optimal_mode = match m {
            Mode::Full => OptimalMode::FullPartition,
            Mode::Contiguous => OptimalMode::ContiguousByCost,
        };
    }
    if let Some(f) = flags.ced_surplus.or(file.ced_surplus) {
        cfg.ced_surplus = match f {
            SurplusForm::NetOfPayment => CedSurplusForm::NetOfPayment,
            SurplusForm::UnitPrice => CedSurplusForm::UnitPrice,
        };
    }
    cfg.split_dest_type = flags.split_dest_type || file.split_dest_type.unwrap_or(false);
    Ok((cfg, flags.out.or(file.out)))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => ingest::write_atomic(path, bytes),
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn emit_table(out: Option<&Path>, table: &ResultTable) -> Result<()> {
    match out {
        Some(path) => table.write(path),
        None => emit(None, &table.to_csv()?),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

enum Task {
    Synth,
    Fit,
    Capture,
    ThetaSweep,
    Sensitivity,
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => load_file(p)?,
        None => FileConfig::default(),
    };
    let (task, flags) = match cli.command {
        Command::Synth(c) => (Task::Synth, c),
        Command::Fit(c) => (Task::Fit, c),
        Command::Capture(c) => (Task::Capture, c),
        Command::ThetaSweep(c) => (Task::ThetaSweep, c),
        Command::Sensitivity(c) => (Task::Sensitivity, c),
    };
    let (cfg, out) = resolve(flags, file)?;
    let out = out.as_deref();
    match task {
        Task::Synth => {
            let InputSource::Synth(m) = &cfg.input else {
                return Err(Error::Config(
                    "synth takes a preset, not an input file".into(),
                ));
            };
            emit(out, &ingest::flows_to_csv(&ingest::synth_generate(m)?)?)
        }
        Task::Fit => {
            let (records, _) = experiment::load_records(&cfg)?;
            let opts = transit_tiers::market::FitOptions {
                split_dest_type: cfg.split_dest_type,
                ced_surplus: cfg.ced_surplus,
                ..Default::default()
            };
            let market = Market::fit(&records, &cfg.params(), &cfg.cost_spec(), &opts)?;
            let flows = ingest::fitted_to_csv(market.flows())?;
            let params = ingest::market_to_csv(market.params(), market.cost_spec())?;
            match out {
                Some(path) => {
                    ingest::write_atomic(path, &flows)?;
                    ingest::write_atomic(&with_suffix(path, ".market.csv"), &params)
                }
                None => emit(None, &flows),
            }
        }
        Task::Capture => emit_table(out, &experiment::run_capture_curve(&cfg)?),
        Task::ThetaSweep => emit_table(out, &experiment::run_theta_sweep(&cfg)?),
        Task::Sensitivity => emit_table(out, &experiment::run_sensitivity_sweep(&cfg)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
