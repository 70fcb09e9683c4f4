//! `sasl`: stage-by-stage or one-shot runs over plain-file artifacts.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sasl_core::data::{write_table_file, ObservationTable, TableSchema};
use sasl_core::elimination::{backward_eliminate, training_design, tune_seed};
use sasl_core::pipeline::{
    fit_final, fold_thresholds, gate_target, load_table, read_final, read_secondary, read_table_bundle, read_tuning,
    run_pipeline, s2_daily_table, secondary_predictions, write_final, write_gate, write_report, write_secondary,
    write_summary, write_synthetic_bundle, write_table_bundle, write_thresholds, write_tuning, RunConfig, TargetRun,
    S2_DAILY_STEM, TABLE_STEM,
};
use sasl_core::s2::ImputationPolicy;
use sasl_core::synthetic::{generate, SyntheticSpec};

#[derive(Parser)]
#[command(name = "sasl", version, about = "Subject-adaptive sparse linear models with gated boosting")]
struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate the daily table; writes table.csv and its schema.
    Prepare(ConfigArgs),
    /// One backward elimination run; writes the trace as JSONL.
    Eliminate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Defaults to the first configured target.
        #[arg(long)]
        target: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to `<output_dir>/<target>/trace_seed<seed>.jsonl`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Elimination over the seed set, scored on chronological folds.
    TuneSeed(TargetArgs),
    /// Plateau threshold search, then the final fit and its labels.
    Thresholds(TargetArgs),
    /// Minute aggregates and boosted-tree secondary predictions.
    S2(TargetArgs),
    /// Confidence gating and disagreement profiles.
    Gate {
        #[command(flatten)]
        args: TargetArgs,
        /// Gate threshold for the selected targets.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Coefficient reports, long predictions and metrics for all targets.
    Report(ConfigArgs),
    /// Every stage in one process.
    Run(ConfigArgs),
    /// Synthetic data from a spec file or a preset.
    Synth {
        #[arg(long, conflicts_with = "preset")]
        spec: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Preset::Fig1)]
        preset: Preset,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Four subjects, one subject-specific slope.
    Fig1,
    /// Ten subjects, six targets, calendar features.
    Lifelike,
    /// Lifelike table plus minute data, aggregate spec and run config.
    Bundle,
}

#[derive(Args, Clone, Default)]
struct TargetArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Restrict to these targets (default: all configured).
    #[arg(long = "target")]
    targets: Vec<String>,
}

/// Flags mirror the config fields and override the config file.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// JSON run config; relative paths inside resolve against its directory.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    minute_data: Option<PathBuf>,
    #[arg(long)]
    aggregate_spec: Option<PathBuf>,
    #[arg(long, value_parser = parse_imputation)]
    imputation: Option<ImputationPolicy>,
    #[arg(long)]
    boundary_hour: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    routine_features: Option<Vec<String>>,
    #[arg(long)]
    archetypes: Option<usize>,
    #[arg(long = "targets", value_delimiter = ',')]
    target_list: Option<Vec<String>>,
    #[arg(long)]
    alpha: Option<f64>,
    /// `0..16` or a comma list.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<SeedList>,
    #[arg(long)]
    stability_delta: Option<f64>,
    #[arg(long)]
    grid_resolution: Option<usize>,
    /// Overrides both the config and `$SASL_OUTPUT_DIR`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug)]
struct SeedList(Vec<u64>);

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("{e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("{e}"))?;
        return Ok(SeedList((a..b).collect()));
    }
    s.split(',')
        .map(|t| t.trim().parse::<u64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<_, _>>()
        .map(SeedList)
}

fn parse_imputation(s: &str) -> Result<ImputationPolicy, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .map_err(|_| format!("`{s}` is not one of forward_fill, zero_fill, drop_day"))
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_path(p).with_context(|| format!("reading config {}", p.display()))?,
            None => RunConfig::default(),
        };
        cfg.apply_env();
        self.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = &self.data {
            cfg.data = v.clone();
        }
        if self.schema.is_some() {
            cfg.schema = self.schema.clone();
        }
        if self.minute_data.is_some() {
            cfg.minute_data = self.minute_data.clone();
        }
        if self.aggregate_spec.is_some() {
            cfg.aggregate_spec = self.aggregate_spec.clone();
        }
        if let Some(v) = self.imputation {
            cfg.imputation = v;
        }
        if let Some(v) = self.boundary_hour {
            cfg.boundary_hour = v;
        }
        if let Some(v) = &self.routine_features {
            cfg.routine_features = v.clone();
        }
        if let Some(v) = self.archetypes {
            cfg.archetypes = v;
        }
        if let Some(v) = &self.target_list {
            cfg.targets = v.clone();
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = &self.seeds {
            cfg.seeds = v.0.clone();
        }
        if let Some(v) = self.stability_delta {
            cfg.stability_delta = v;
        }
        if self.grid_resolution.is_some() {
            cfg.grid_resolution = self.grid_resolution;
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
    }
}

impl TargetArgs {
    fn load(&self) -> Result<(RunConfig, Vec<String>)> {
        let cfg = self.cfg.load()?;
        let targets = if self.targets.is_empty() {
            cfg.targets.clone()
        } else {
            self.targets.clone()
        };
        Ok((cfg, targets))
    }
}

fn prepared(cfg: &RunConfig) -> Result<ObservationTable> {
    read_table_bundle(&cfg.output_dir, TABLE_STEM)
        .context("reading the prepared table (run `sasl prepare` first)")
}

fn target_dir(cfg: &RunConfig, target: &str) -> PathBuf {
    cfg.output_dir.join(target)
}

fn cmd_prepare(args: &ConfigArgs) -> Result<()> {
    let cfg = args.load()?;
    let table = load_table(&cfg).map_err(|e| e.in_stage("preprocess"))?;
    for t in &cfg.targets {
        table.target_index(t).map_err(|e| e.in_stage("preprocess"))?;
    }
    write_table_bundle(&cfg.output_dir, TABLE_STEM, &table)?;
    println!(
        "{} rows, {} subjects, {} features -> {}",
        table.n_rows(),
        table.subjects().len(),
        table.features().len(),
        cfg.output_dir.join(format!("{TABLE_STEM}.csv")).display()
    );
    Ok(())
}

fn cmd_eliminate(args: &ConfigArgs, target: Option<&str>, seed: u64, out: Option<&Path>) -> Result<()> {
    let cfg = args.load()?;
    let target = target.unwrap_or(&cfg.targets[0]).to_string();
    let table = prepared(&cfg)?;
    let (_, x, y) = training_design(&table, &target).map_err(|e| e.in_stage("eliminate"))?;
    let (reduced, trace) =
        backward_eliminate(&x, &y, &cfg.elimination().with_seed(seed)).map_err(|e| e.in_stage("eliminate"))?;
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => target_dir(&cfg, &target).join(format!("trace_seed{seed}.jsonl")),
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    trace.write_jsonl(BufWriter::new(File::create(&path)?))?;
    println!(
        "{target}: removed {}, kept {} -> {}",
        trace.len(),
        reduced.n_cols(),
        path.display()
    );
    Ok(())
}

fn cmd_tune_seed(args: &TargetArgs) -> Result<()> {
    let (cfg, targets) = args.load()?;
    let table = prepared(&cfg)?;
    for t in &targets {
        let tuning = tune_seed(&cfg.seeds, &table, t, &cfg.elimination()).map_err(|e| e.in_stage("tune-seed"))?;
        write_tuning(&target_dir(&cfg, t), &tuning)?;
        println!("{t}: seed {} with {} terms", tuning.best_seed, tuning.layout.columns.len());
    }
    Ok(())
}

fn cmd_thresholds(args: &TargetArgs) -> Result<()> {
    let (cfg, targets) = args.load()?;
    let table = prepared(&cfg)?;
    for t in &targets {
        let dir = target_dir(&cfg, t);
        let tuning = read_tuning(&dir)?;
        let (thr, curve) =
            fold_thresholds(&table, t, &tuning.layout, &cfg.search()).map_err(|e| e.in_stage("thresholds"))?;
        write_thresholds(&dir, &thr, &curve)?;
        let (model, latent, primary) =
            fit_final(&table, t, &tuning.layout, &thr).map_err(|e| e.in_stage("final-fit"))?;
        write_final(&dir, &table, &model, &latent, &primary)?;
        println!("{t}: {}", serde_json::to_string(&thr.cuts)?);
    }
    Ok(())
}

fn cmd_s2(args: &TargetArgs) -> Result<()> {
    let (cfg, targets) = args.load()?;
    let table = prepared(&cfg)?;
    let daily = s2_daily_table(&cfg).map_err(|e| e.in_stage("s2-aggregate"))?;
    if let Some(d) = &daily {
        write_table_bundle(&cfg.output_dir, S2_DAILY_STEM, d)?;
    }
    for t in &targets {
        let sec = secondary_predictions(&table, t, &cfg, daily.as_ref()).map_err(|e| e.in_stage("secondary"))?;
        write_secondary(&target_dir(&cfg, t), &table, &sec)?;
        println!("{t}: secondary from {}", sec.source);
    }
    Ok(())
}

fn cmd_gate(args: &TargetArgs, tau: Option<f64>) -> Result<()> {
    let (mut cfg, targets) = args.load()?;
    if let Some(tau) = tau {
        for t in &targets {
            cfg.gating.thresholds.insert(t.clone(), tau);
        }
        cfg.validate()?;
    }
    let table = prepared(&cfg)?;
    for t in &targets {
        let dir = target_dir(&cfg, t);
        let (_, _, primary) = read_final(&dir)?;
        let sec = read_secondary(&dir)?;
        let (gate, report) =
            gate_target(&table, &primary, &sec, cfg.gating.threshold(t)).map_err(|e| e.in_stage("gate"))?;
        write_gate(&dir, &gate, &report)?;
        println!(
            "{t}: {} disagreements, {} overrides at {}",
            gate.decisions.len(),
            gate.overrides,
            cfg.gating.threshold(t)
        );
    }
    Ok(())
}

fn cmd_report(args: &ConfigArgs) -> Result<()> {
    let cfg = args.load()?;
    let table = prepared(&cfg)?;
    let runs = cfg
        .targets
        .iter()
        .map(|t| TargetRun::read(&table, t, &target_dir(&cfg, t)).map_err(|e| e.in_stage("report")))
        .collect::<Result<Vec<_>, _>>()?;
    for run in &runs {
        write_report(&target_dir(&cfg, &run.target), &run.target, &run.model)?;
    }
    let metrics = write_summary(&cfg, &table, &runs)?;
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    Ok(())
}

fn cmd_run(args: &ConfigArgs) -> Result<()> {
    let cfg = args.load()?;
    let summary = run_pipeline(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&summary.metrics)?);
    Ok(())
}

fn cmd_synth(spec: Option<&Path>, preset: Preset, seed: Option<u64>, out: &Path) -> Result<()> {
    let spec = match (spec, preset) {
        (Some(path), _) => {
            if !path.exists() {
                bail!(sasl_core::Error::DataNotFound(path.to_path_buf()));
            }
            let mut s: SyntheticSpec = serde_json::from_str(&fs::read_to_string(path)?)
                .with_context(|| format!("parsing {}", path.display()))?;
            if let Some(seed) = seed {
                s.rng_seed = seed;
            }
            s
        }
        (None, Preset::Fig1) => SyntheticSpec::fig1(seed.unwrap_or(0)),
        (None, Preset::Lifelike) => SyntheticSpec::lifelike(seed.unwrap_or(0)),
        (None, Preset::Bundle) => {
            let cfg = write_synthetic_bundle(out, seed.unwrap_or(0))?;
            println!("bundle -> {} (config {})", out.display(), out.join("config.json").display());
            log::debug!("resolved data path {}", cfg.data.display());
            return Ok(());
        }
    };
    let (table, truth) = generate(&spec)?;
    fs::create_dir_all(out)?;
    write_table_file(&table, &out.join("data.csv"))?;
    TableSchema::of(&table).write(&out.join("schema.json"))?;
    let mut w = BufWriter::new(File::create(out.join("truth.json"))?);
    serde_json::to_writer_pretty(&mut w, &truth)?;
    println!("{} rows -> {}", table.n_rows(), out.join("data.csv").display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Eliminate {
            cfg,
            target,
            seed,
            out,
        } => cmd_eliminate(cfg, target.as_deref(), *seed, out.as_deref()),
        Command::TuneSeed(a) => cmd_tune_seed(a),
        Command::Thresholds(a) => cmd_thresholds(a),
        Command::S2(a) => cmd_s2(a),
        Command::Gate { args, tau } => cmd_gate(args, *tau),
        Command::Report(a) => cmd_report(a),
        Command::Run(a) => cmd_run(a),
        Command::Synth {
            spec,
            preset,
            seed,
            out,
        } => cmd_synth(spec.as_deref(), *preset, *seed, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // causes already spelled out by their parent are skipped
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
