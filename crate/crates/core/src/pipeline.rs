//! End-to-end run: per target seed tuning, plateau thresholds, final fit,
//! secondary boosted-tree predictions and confidence gating, written to an
//! output directory of plain CSV/JSON/JSONL files.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{
    chrono_split, ingest_csv, read_to_string, ColumnRole, DesignLayout, ObservationTable, RowKey, TableSchema,
    TargetSpec,
};
use crate::elimination::{best_seed_index, tune_seed, EliminationConfig, EliminationTrace, SeedScore, SeedTuning};
use crate::error::{Error, Result};
use crate::gating::{
    disagreement_report, gate_predictions, DisagreementReport, GateDecision, GateOutcome, GatingConfig,
};
use crate::gbdt::{GbdtConfig, OneVsRestGbdt};
use crate::linalg::Matrix;
use crate::model::LinearModel;
use crate::report::{coefficient_profile, coefficients_svg, write_coefficients_csv};
use crate::s2::{
    aggregate_daily, build_archetype_features, kst, read_minute_csv, reindex_analysis_days, run_s2, AggregateSpec,
    ImputationPolicy, S2Config, DEFAULT_BOUNDARY_HOUR,
};
use crate::stats::{macro_f1, mean_std};
use crate::threshold::{
    plateau_curve, search_threshold_binary, search_threshold_ternary, write_curve_csv, CurvePoint, FoldScores,
    SearchConfig, ThresholdSet,
};

pub const DEFAULT_TARGETS: [&str; 6] = ["Q1", "Q2", "Q3", "S1", "S2", "S3"];
pub const OUTPUT_DIR_ENV: &str = "SASL_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Daily observation table (CSV).
    pub data: PathBuf,
    /// Column-role sidecar; inferred from the header when absent.
    pub schema: Option<PathBuf>,
    /// Long-format minute data feeding the S2 aggregates.
    pub minute_data: Option<PathBuf>,
    pub aggregate_spec: Option<PathBuf>,
    pub imputation: ImputationPolicy,
    pub boundary_hour: u32,
    /// Aggregate features averaged per subject for archetype clustering;
    /// empty disables archetypes.
    pub routine_features: Vec<String>,
    pub archetypes: usize,
    pub targets: Vec<String>,
    pub alpha: f64,
    pub seeds: Vec<u64>,
    pub stability_delta: f64,
    pub grid_resolution: Option<usize>,
    pub gating: GatingConfig,
    pub gbdt: GbdtConfig,
    pub s2: S2Config,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::from("data.csv"),
            schema: None,
            minute_data: None,
            aggregate_spec: None,
            imputation: ImputationPolicy::default(),
            boundary_hour: DEFAULT_BOUNDARY_HOUR,
            routine_features: vec![],
            archetypes: 10,
            targets: DEFAULT_TARGETS.iter().map(|t| t.to_string()).collect(),
            alpha: 0.05,
            seeds: (0..16).collect(),
            stability_delta: 0.005,
            grid_resolution: None,
            gating: GatingConfig::default(),
            gbdt: GbdtConfig::default(),
            s2: S2Config::default(),
            output_dir: PathBuf::from("sasl-out"),
        }
    }
}

impl RunConfig {
    /// Reads a JSON config; relative paths are taken relative to the
    /// config file's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(&read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data);
        fix(&mut self.output_dir);
        for p in [&mut self.schema, &mut self.minute_data, &mut self.aggregate_spec].into_iter().flatten() {
            fix(p);
        }
    }

    /// Replaces the output directory with `$SASL_OUTPUT_DIR` when set.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            self.output_dir = PathBuf::from(dir);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::InvalidConfig("target list is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seed set is empty".into()));
        }
        if !(self.stability_delta >= 0.0) {
            return Err(Error::InvalidConfig("stability_delta must be non-negative".into()));
        }
        if self.boundary_hour >= 24 {
            return Err(Error::InvalidConfig("boundary_hour outside 0..24".into()));
        }
        self.elimination().validate()?;
        self.gating.validate()?;
        self.gbdt.validate()
    }

    pub fn elimination(&self) -> EliminationConfig {
        EliminationConfig {
            alpha: self.alpha,
            ..EliminationConfig::default()
        }
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            grid_resolution: self.grid_resolution,
            stability_delta: self.stability_delta,
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        Ok(())
    }
}

/// Schema from the CSV header: `subject` and `timestamp` by name, listed
/// targets as targets, everything else a feature. Columns holding only 0
/// and 1 are indicators.
pub fn infer_schema(path: &Path, targets: &[String]) -> Result<TableSchema> {
    if !path.exists() {
        return Err(Error::DataNotFound(path.to_path_buf()));
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let mut binary = vec![true; header.len()];
    for rec in rdr.records() {
        let rec = rec?;
        for (j, v) in rec.iter().enumerate() {
            if binary[j] && !matches!(v.trim(), "0" | "1" | "0.0" | "1.0") {
                binary[j] = false;
            }
        }
    }
    let mut columns = BTreeMap::new();
    for (j, name) in header.iter().enumerate() {
        let role = match name.as_str() {
            "subject" => ColumnRole::Subject,
            "timestamp" => ColumnRole::Timestamp,
            n if targets.iter().any(|t| t == n) => ColumnRole::Target { classes: None },
            _ => ColumnRole::Feature { indicator: binary[j] },
        };
        columns.insert(name.clone(), role);
    }
    Ok(TableSchema { columns })
}

pub fn load_table(cfg: &RunConfig) -> Result<ObservationTable> {
    let schema = match &cfg.schema {
        Some(p) => TableSchema::from_path(p)?,
        None => infer_schema(&cfg.data, &cfg.targets)?,
    };
    ingest_csv(&cfg.data, &schema)
}

/// Plateau thresholds from fold-wise refits of `layout`: each fold's model
/// is trained on its early/late half and scores the other half.
pub fn fold_thresholds(
    table: &ObservationTable,
    target: &str,
    layout: &DesignLayout,
    search: &SearchConfig,
) -> Result<(ThresholdSet, Vec<CurvePoint>)> {
    let t = table.target_index(target)?;
    let classes = table.targets()[t].classes;
    let labeled = table.subset(&table.labeled_rows(t));
    let (f1, f2) = chrono_split(&labeled)?;
    let mut z = Vec::new();
    let mut y = Vec::new();
    for fold in [&f1, &f2] {
        let model = LinearModel::fit(&labeled, &fold.train, target, layout)?;
        z.push(model.scores(&labeled.subset(&fold.valid))?.z);
        y.push(
            fold.valid
                .iter()
                .map(|&i| labeled.rows()[i].targets[t].expect("labeled"))
                .collect::<Vec<u8>>(),
        );
    }
    let a = FoldScores { z: &z[0], y: &y[0] };
    let b = FoldScores { z: &z[1], y: &y[1] };
    let thr = match classes {
        2 => search_threshold_binary(target, a, b, search)?,
        3 => search_threshold_ternary(target, a, b, search)?,
        c => return Err(Error::InvalidConfig(format!("target `{target}` has {c} classes; expected 2 or 3"))),
    };
    let curve = plateau_curve(&thr, a, b, search.grid_resolution)?;
    Ok((thr, curve))
}

/// Final OLS on every labeled row; latent scores and discretized labels for
/// every row of `table`.
pub fn fit_final(
    table: &ObservationTable,
    target: &str,
    layout: &DesignLayout,
    thr: &ThresholdSet,
) -> Result<(LinearModel, Vec<f64>, Vec<u8>)> {
    let all: Vec<usize> = (0..table.n_rows()).collect();
    let model = LinearModel::fit(table, &all, target, layout)?;
    let z = model.scores(table)?.z;
    let labels = z.iter().map(|&v| thr.cuts.label(v)).collect();
    Ok((model, z, labels))
}

/// Secondary label of rows the secondary model has no prediction for.
pub const NO_OPINION: u8 = u8::MAX;

/// Predictions of the boosted-tree model that backs up one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Secondary {
    pub source: String,
    pub labels: Vec<u8>,
    pub confidence: Vec<f64>,
}

impl Secondary {
    /// Secondary labels with rows lacking an opinion filled from `primary`.
    pub fn effective_labels(&self, primary: &[u8]) -> Vec<u8> {
        self.labels
            .iter()
            .zip(primary)
            .map(|(&s, &p)| if s == NO_OPINION { p } else { s })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, table: &ObservationTable, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["subject", "timestamp", "label", "confidence"])?;
        for ((r, l), c) in table.rows().iter().zip(&self.labels).zip(&self.confidence) {
            w.write_record([r.subject.clone(), r.timestamp.to_string(), l.to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::DataNotFound(path.to_path_buf()));
        }
        let mut rdr = csv::Reader::from_path(path)?;
        let (mut labels, mut confidence) = (Vec::new(), Vec::new());
        for rec in rdr.deserialize::<(String, String, u8, f64)>() {
            let (_, _, l, c) = rec?;
            labels.push(l);
            confidence.push(c);
        }
        Ok(Self {
            source: path.display().to_string(),
            labels,
            confidence,
        })
    }
}

/// Daily aggregates of the configured minute data, with archetype columns
/// when routine features are configured.
pub fn s2_daily_table(cfg: &RunConfig) -> Result<Option<ObservationTable>> {
    let Some(minute_path) = &cfg.minute_data else {
        return Ok(None);
    };
    if !minute_path.exists() {
        return Err(Error::DataNotFound(minute_path.clone()));
    }
    let spec = match &cfg.aggregate_spec {
        Some(p) => AggregateSpec::from_path(p)?,
        None => return Err(Error::InvalidConfig("minute_data needs aggregate_spec".into())),
    };
    let records = read_minute_csv(File::open(minute_path)?, kst())?;
    let days = reindex_analysis_days(&records, cfg.boundary_hour, kst())?;
    let daily = aggregate_daily(&days, &spec, cfg.imputation)?;
    if cfg.routine_features.is_empty() {
        return Ok(Some(daily));
    }
    let (with_archetypes, _) = build_archetype_features(&daily, &cfg.routine_features, cfg.archetypes, cfg.gbdt.rng_seed)?;
    Ok(Some(with_archetypes))
}

fn table_matrix(table: &ObservationTable) -> Result<Matrix> {
    Matrix::from_rows(&table.rows().iter().map(|r| r.features.clone()).collect::<Vec<_>>())
}

/// Secondary predictions for `target`. The S2 target uses the minute
/// aggregates when given; other binary targets use the same ensemble on the
/// daily features; ternary targets use one-vs-rest boosting.
pub fn secondary_predictions(
    table: &ObservationTable,
    target: &str,
    cfg: &RunConfig,
    s2_daily: Option<&ObservationTable>,
) -> Result<Secondary> {
    let t = table.target_index(target)?;
    let spec = table.targets()[t].clone();
    let s2_cfg = S2Config {
        target: target.to_string(),
        gbdt: cfg.gbdt.clone(),
        ..cfg.s2.clone()
    };
    if let (Some(daily), true) = (s2_daily, target == cfg.s2.target) {
        let labels: BTreeMap<RowKey, u8> = table
            .rows()
            .iter()
            .filter_map(|r| r.targets[t].map(|l| (r.key(), l)))
            .collect();
        let daily = daily.with_target(TargetSpec::new(target, spec.classes), &labels)?;
        let out = run_s2(&daily, &s2_cfg)?;
        let by_key: BTreeMap<RowKey, (u8, f64)> = daily
            .rows()
            .iter()
            .zip(&out.predictions)
            .map(|(r, p)| (r.key(), (p.label, p.confidence)))
            .collect();
        let (labels, confidence) = table
            .rows()
            .iter()
            .map(|r| by_key.get(&r.key()).copied().unwrap_or((NO_OPINION, 0.5)))
            .unzip();
        return Ok(Secondary {
            source: "minute_aggregates".into(),
            labels,
            confidence,
        });
    }
    if spec.classes == 2 {
        let out = run_s2(table, &s2_cfg)?;
        return Ok(Secondary {
            source: "daily_features".into(),
            labels: out.labels(),
            confidence: out.confidences(),
        });
    }
    // early stopping watches the late half of each subject's labeled rows
    let rows = table.labeled_rows(t);
    let labeled = table.subset(&rows);
    let (early_late, _) = chrono_split(&labeled)?;
    let x = table_matrix(table)?;
    let pick = |idx: &[usize]| -> (Matrix, Vec<u8>) {
        let global: Vec<usize> = idx.iter().map(|&i| rows[i]).collect();
        let y = global.iter().map(|&i| table.rows()[i].targets[t].expect("labeled")).collect();
        (x.select_rows(&global), y)
    };
    let (tx, ty) = pick(&early_late.train);
    let (vx, vy) = pick(&early_late.valid);
    let model = OneVsRestGbdt::train(&tx, &ty, spec.classes, Some((&vx, &vy)), &cfg.gbdt)?;
    let (labels, confidence) = model.predict(&x)?;
    Ok(Secondary {
        source: "one_vs_rest".into(),
        labels,
        confidence,
    })
}

/// Everything produced for one target.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetRun {
    pub target: String,
    pub tuning: SeedTuning,
    pub thresholds: ThresholdSet,
    pub curve: Vec<CurvePoint>,
    pub model: LinearModel,
    pub latent: Vec<f64>,
    pub primary: Vec<u8>,
    pub secondary: Secondary,
    pub gate: GateOutcome,
    pub disagreement: DisagreementReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMetrics {
    pub best_seed: u64,
    pub seed_score: f64,
    pub terms: usize,
    pub removed: usize,
    pub thresholds: ThresholdSet,
    pub labeled_rows: usize,
    /// In-sample macro-F1 over the labeled rows.
    pub train_macro_f1_primary: f64,
    pub train_macro_f1_final: f64,
    pub disagreements: usize,
    pub overrides: usize,
}

/// Features with nonzero spread, for Z profiles.
fn profile_features(table: &ObservationTable) -> Vec<String> {
    (0..table.features().len())
        .filter(|&j| mean_std(&table.feature_column(j)).1 > 0.0)
        .map(|j| table.features()[j].name.clone())
        .collect()
}

/// Gates `primary` with `secondary` at `tau` and profiles the
/// disagreements.
pub fn gate_target(
    table: &ObservationTable,
    primary: &[u8],
    secondary: &Secondary,
    tau: f64,
) -> Result<(GateOutcome, DisagreementReport)> {
    let second_labels = secondary.effective_labels(primary);
    let gate = gate_predictions(primary, &second_labels, &secondary.confidence, tau)?;
    let disagreement = disagreement_report(primary, &second_labels, table, &profile_features(table))?;
    Ok((gate, disagreement))
}

pub fn run_target(
    table: &ObservationTable,
    target: &str,
    cfg: &RunConfig,
    s2_daily: Option<&ObservationTable>,
) -> Result<TargetRun> {
    let tuning = tune_seed(&cfg.seeds, table, target, &cfg.elimination()).map_err(|e| e.in_stage("tune-seed"))?;
    let (thresholds, curve) =
        fold_thresholds(table, target, &tuning.layout, &cfg.search()).map_err(|e| e.in_stage("thresholds"))?;
    let (model, latent, primary) =
        fit_final(table, target, &tuning.layout, &thresholds).map_err(|e| e.in_stage("final-fit"))?;
    let secondary = secondary_predictions(table, target, cfg, s2_daily).map_err(|e| e.in_stage("secondary"))?;
    let (gate, disagreement) =
        gate_target(table, &primary, &secondary, cfg.gating.threshold(target)).map_err(|e| e.in_stage("gate"))?;
    Ok(TargetRun {
        target: target.to_string(),
        tuning,
        thresholds,
        curve,
        model,
        latent,
        primary,
        secondary,
        gate,
        disagreement,
    })
}

impl TargetRun {
    pub fn metrics(&self, table: &ObservationTable) -> Result<TargetMetrics> {
        let t = table.target_index(&self.target)?;
        let rows = table.labeled_rows(t);
        let y: Vec<u8> = rows.iter().map(|&i| table.rows()[i].targets[t].expect("labeled")).collect();
        let classes: Vec<u8> = (0..table.targets()[t].classes).collect();
        let pick = |v: &[u8]| rows.iter().map(|&i| v[i]).collect::<Vec<u8>>();
        let best = self
            .tuning
            .scores
            .iter()
            .find(|s| s.seed == self.tuning.best_seed)
            .map_or(f64::NAN, |s| s.score);
        Ok(TargetMetrics {
            best_seed: self.tuning.best_seed,
            seed_score: best,
            terms: self.tuning.layout.columns.len(),
            removed: self.tuning.trace.len(),
            thresholds: self.thresholds.clone(),
            labeled_rows: rows.len(),
            train_macro_f1_primary: macro_f1(&pick(&self.primary), &y, &classes)?,
            train_macro_f1_final: macro_f1(&pick(&self.gate.labels), &y, &classes)?,
            disagreements: self.disagreement.total,
            overrides: self.gate.overrides,
        })
    }

    /// Writes the per-target artifacts into `dir`.
    pub fn write(&self, table: &ObservationTable, dir: &Path) -> Result<()> {
        write_tuning(dir, &self.tuning)?;
        write_thresholds(dir, &self.thresholds, &self.curve)?;
        write_final(dir, table, &self.model, &self.latent, &self.primary)?;
        write_secondary(dir, table, &self.secondary)?;
        write_gate(dir, &self.gate, &self.disagreement)?;
        write_report(dir, &self.target, &self.model)
    }

    /// Rebuilds a run from the artifacts in `dir`. The disagreement report
    /// is recomputed.
    pub fn read(table: &ObservationTable, target: &str, dir: &Path) -> Result<Self> {
        let tuning = read_tuning(dir)?;
        let (thresholds, curve) = read_thresholds(dir)?;
        let (model, latent, primary) = read_final(dir)?;
        let secondary = read_secondary(dir)?;
        let gate = read_gate(dir, &primary)?;
        for len in [latent.len(), secondary.labels.len(), gate.labels.len()] {
            if len != table.n_rows() {
                return Err(Error::LengthMismatch(len, table.n_rows()));
            }
        }
        let second_labels = secondary.effective_labels(&primary);
        let disagreement = disagreement_report(&primary, &second_labels, table, &profile_features(table))?;
        Ok(Self {
            target: target.to_string(),
            tuning,
            thresholds,
            curve,
            model,
            latent,
            primary,
            secondary,
            gate,
            disagreement,
        })
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn open(dir: &Path, name: &str) -> Result<BufReader<File>> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(Error::DataNotFound(path));
    }
    Ok(BufReader::new(File::open(path)?))
}

fn write_json<T: Serialize, W: Write>(value: &T, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_csv_rows<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(open(dir, name)?);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Writes `<stem>.csv` and its `<stem>.schema.json` sidecar.
pub fn write_table_bundle(dir: &Path, stem: &str, table: &ObservationTable) -> Result<()> {
    fs::create_dir_all(dir)?;
    crate::data::write_table_file(table, &dir.join(format!("{stem}.csv")))?;
    TableSchema::of(table).write(&dir.join(format!("{stem}.schema.json")))
}

pub fn read_table_bundle(dir: &Path, stem: &str) -> Result<ObservationTable> {
    let schema = TableSchema::from_path(&dir.join(format!("{stem}.schema.json")))?;
    ingest_csv(&dir.join(format!("{stem}.csv")), &schema)
}

/// Stem of the prepared daily table in the output directory.
pub const TABLE_STEM: &str = "table";
/// Stem of the minute aggregates in the output directory.
pub const S2_DAILY_STEM: &str = "s2_daily";

pub fn write_tuning(dir: &Path, tuning: &SeedTuning) -> Result<()> {
    tuning.trace.write_jsonl(create(dir, "trace.jsonl")?)?;
    write_json(&tuning.layout, create(dir, "layout.json")?)?;
    write_seed_scores(&tuning.scores, create(dir, "seed_scores.csv")?)
}

pub fn read_tuning(dir: &Path) -> Result<SeedTuning> {
    let trace = EliminationTrace::read_jsonl(open(dir, "trace.jsonl")?)?;
    let layout: DesignLayout = serde_json::from_reader(open(dir, "layout.json")?)?;
    let scores: Vec<SeedScore> = read_csv_rows(dir, "seed_scores.csv")?;
    if scores.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok(SeedTuning {
        best_seed: scores[best_seed_index(&scores)].seed,
        scores,
        layout,
        trace,
    })
}

pub fn write_thresholds(dir: &Path, thr: &ThresholdSet, curve: &[CurvePoint]) -> Result<()> {
    thr.write_json(create(dir, "thresholds.json")?)?;
    write_curve_csv(curve, create(dir, "plateau.csv")?)
}

pub fn read_thresholds(dir: &Path) -> Result<(ThresholdSet, Vec<CurvePoint>)> {
    let thr = serde_json::from_reader(open(dir, "thresholds.json")?)?;
    Ok((thr, read_csv_rows(dir, "plateau.csv")?))
}

#[derive(Debug, Serialize, Deserialize)]
struct PrimaryRow {
    subject: String,
    timestamp: String,
    latent: f64,
    label: u8,
}

/// Final model (`model.json`) and its per-row latent scores and labels
/// (`primary.csv`).
pub fn write_final(
    dir: &Path,
    table: &ObservationTable,
    model: &LinearModel,
    latent: &[f64],
    primary: &[u8],
) -> Result<()> {
    write_json(model, create(dir, "model.json")?)?;
    let mut w = csv::Writer::from_writer(create(dir, "primary.csv")?);
    for ((r, &z), &l) in table.rows().iter().zip(latent).zip(primary) {
        w.serialize(PrimaryRow {
            subject: r.subject.clone(),
            timestamp: r.timestamp.to_string(),
            latent: z,
            label: l,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_final(dir: &Path) -> Result<(LinearModel, Vec<f64>, Vec<u8>)> {
    let model = serde_json::from_reader(open(dir, "model.json")?)?;
    let rows: Vec<PrimaryRow> = read_csv_rows(dir, "primary.csv")?;
    let (latent, labels) = rows.into_iter().map(|r| (r.latent, r.label)).unzip();
    Ok((model, latent, labels))
}

pub fn write_secondary(dir: &Path, table: &ObservationTable, secondary: &Secondary) -> Result<()> {
    secondary.write_csv(table, create(dir, "secondary.csv")?)?;
    write_json(&secondary.source, create(dir, "secondary_source.json")?)
}

pub fn read_secondary(dir: &Path) -> Result<Secondary> {
    let mut s = Secondary::read_csv(&dir.join("secondary.csv"))?;
    s.source = serde_json::from_reader(open(dir, "secondary_source.json")?)?;
    Ok(s)
}

pub fn write_gate(dir: &Path, gate: &GateOutcome, disagreement: &DisagreementReport) -> Result<()> {
    gate.write_jsonl(create(dir, "decisions.jsonl")?)?;
    for (name, group) in [("zprofile_a.csv", &disagreement.group_a), ("zprofile_b.csv", &disagreement.group_b)] {
        match group {
            Some(p) => p.write_csv(create(dir, name)?)?,
            None => {
                let path = dir.join(name);
                if path.exists() {
                    fs::remove_file(path)?;
                }
            }
        }
    }
    Ok(())
}

/// Replays the decision log over `primary`.
pub fn read_gate(dir: &Path, primary: &[u8]) -> Result<GateOutcome> {
    let mut labels = primary.to_vec();
    let mut decisions = Vec::new();
    for line in open(dir, "decisions.jsonl")?.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let d: GateDecision = serde_json::from_str(&line)?;
        let slot = labels.get_mut(d.row).ok_or(Error::LengthMismatch(d.row, primary.len()))?;
        *slot = d.final_label;
        decisions.push(d);
    }
    let overrides = decisions.iter().filter(|d| d.final_label != d.primary).count();
    Ok(GateOutcome {
        labels,
        decisions,
        overrides,
    })
}

/// Coefficient profile as CSV and SVG.
pub fn write_report(dir: &Path, target: &str, model: &LinearModel) -> Result<()> {
    let profile = coefficient_profile(model);
    write_coefficients_csv(&profile, create(dir, "coefficients.csv")?)?;
    let mut svg = create(dir, "coefficients.svg")?;
    svg.write_all(coefficients_svg(target, &profile).as_bytes())?;
    svg.flush()?;
    Ok(())
}

pub fn write_seed_scores<W: Write>(scores: &[SeedScore], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    for s in scores {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format predictions of every target for every row.
pub fn write_predictions<W: Write>(table: &ObservationTable, runs: &[TargetRun], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["subject", "timestamp", "target", "latent", "primary", "secondary", "confidence", "final"])?;
    for run in runs {
        for (i, r) in table.rows().iter().enumerate() {
            let secondary = match run.secondary.labels[i] {
                NO_OPINION => String::new(),
                l => l.to_string(),
            };
            w.write_record([
                r.subject.clone(),
                r.timestamp.to_string(),
                run.target.clone(),
                run.latent[i].to_string(),
                run.primary[i].to_string(),
                secondary,
                run.secondary.confidence[i].to_string(),
                run.gate.labels[i].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Run-level files: resolved config, long predictions and metrics.
pub fn write_summary(
    cfg: &RunConfig,
    table: &ObservationTable,
    runs: &[TargetRun],
) -> Result<BTreeMap<String, TargetMetrics>> {
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    // recorded relative to the bundle itself
    let recorded = RunConfig {
        output_dir: PathBuf::from("."),
        ..cfg.clone()
    };
    recorded.write_json(&out.join("config.json"))?;
    let mut metrics = BTreeMap::new();
    for run in runs {
        metrics.insert(run.target.clone(), run.metrics(table)?);
    }
    write_predictions(table, runs, create(out, "predictions.csv")?)?;
    write_json(&metrics, create(out, "metrics.json")?)?;
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub metrics: BTreeMap<String, TargetMetrics>,
}

/// Runs every configured target and writes the artifact bundle.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let table = load_table(cfg).map_err(|e| e.in_stage("preprocess"))?;
    for t in &cfg.targets {
        table.target_index(t).map_err(|e| e.in_stage("preprocess"))?;
    }
    let s2_daily = s2_daily_table(cfg).map_err(|e| e.in_stage("s2-aggregate"))?;

    let mut runs = Vec::new();
    for target in &cfg.targets {
        log::info!("target {target}");
        runs.push(run_target(&table, target, cfg, s2_daily.as_ref())?);
    }

    let out = &cfg.output_dir;
    let write = || -> Result<BTreeMap<String, TargetMetrics>> {
        write_table_bundle(out, TABLE_STEM, &table)?;
        if let Some(daily) = &s2_daily {
            write_table_bundle(out, S2_DAILY_STEM, daily)?;
        }
        for run in &runs {
            run.write(&table, &out.join(&run.target))?;
        }
        write_summary(cfg, &table, &runs)
    };
    let metrics = write().map_err(|e| e.in_stage("write"))?;
    Ok(RunSummary {
        output_dir: out.clone(),
        metrics,
    })
}

pub const HELD_OUT_DAYS: usize = 10;

/// Writes a synthetic lifelike bundle (daily table, schema, minute data,
/// aggregate spec and run config) into `dir` and returns the config with
/// paths resolved. The last [`HELD_OUT_DAYS`] days of each subject carry no
/// labels.
pub fn write_synthetic_bundle(dir: &Path, seed: u64) -> Result<RunConfig> {
    use crate::synthetic::{generate, minute_aggregate_spec, minute_trace, SyntheticSpec};
    fs::create_dir_all(dir)?;
    let (full, _) = generate(&SyntheticSpec::lifelike(seed))?;
    // the last `HELD_OUT_DAYS` rows of every subject go unlabeled
    let mut unlabeled = Vec::new();
    for (_, rows) in full.rows_by_subject() {
        unlabeled.extend(rows.iter().rev().take(HELD_OUT_DAYS).copied());
    }
    let mut table = full.clone();
    for spec in full.targets() {
        let t = full.target_index(&spec.name)?;
        let labels: BTreeMap<RowKey, u8> = full
            .rows()
            .iter()
            .enumerate()
            .filter(|(i, _)| !unlabeled.contains(i))
            .filter_map(|(_, r)| r.targets[t].map(|l| (r.key(), l)))
            .collect();
        table = table.with_target(spec.clone(), &labels)?;
    }
    crate::data::write_table_file(&table, &dir.join("daily.csv"))?;
    TableSchema::of(&table).write(&dir.join("schema.json"))?;
    let records = minute_trace(&table, 10, seed)?;
    crate::s2::write_minute_csv(&records, BufWriter::new(File::create(dir.join("minute.csv"))?))?;
    write_json(&minute_aggregate_spec(), BufWriter::new(File::create(dir.join("aggregates.json"))?))?;
    let cfg = RunConfig {
        data: "daily.csv".into(),
        schema: Some("schema.json".into()),
        minute_data: Some("minute.csv".into()),
        aggregate_spec: Some("aggregates.json".into()),
        routine_features: vec!["steps_sum".into(), "night_screen".into()],
        archetypes: 3,
        seeds: (0..4).collect(),
        output_dir: "out".into(),
        ..RunConfig::default()
    };
    cfg.write_json(&dir.join("config.json"))?;
    let mut resolved = cfg;
    resolved.resolve_paths(dir);
    Ok(resolved)
}
