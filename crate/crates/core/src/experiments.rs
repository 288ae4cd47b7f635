//! Experiment drivers: replicated optimization cases, the leave-one-out
//! application-agnostic study, and layer-distribution reports, all emitting
//! byte-reproducible artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::ForestParams;
use crate::objectives::{edp_proxy, ContextConstants, EvalContext, ObjectiveSet};
use crate::pareto::ParetoArchive;
use crate::search::{
    mosa_baseline, moo_stage, random_restart_baseline, MosaSchedule, SearchContext, SearchReport,
};
use crate::topology::{CoreKind, Design, MoveKinds, SystemConfig};
use crate::traffic::{aggregate, generate_synthetic, load_profile, SyntheticSpec, TrafficProfile};

/// Search algorithm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgoId {
    MooStage,
    RandomRestart,
    Mosa,
}

impl std::str::FromStr for AlgoId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moo-stage" => Ok(AlgoId::MooStage),
            "random-restart" => Ok(AlgoId::RandomRestart),
            "mosa" => Ok(AlgoId::Mosa),
            other => Err(Error::Config(format!(
                "algo: unknown algorithm {other:?}; valid: moo-stage, random-restart, mosa"
            ))),
        }
    }
}

/// Where a traffic profile comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrafficSource {
    Synthetic { spec: SyntheticSpec },
    File { path: PathBuf },
}

fn default_neighbor_samples() -> usize {
    256
}

fn default_iter_max() -> usize {
    10
}

/// One experiment: system, objective case, traffic, algorithm, budget, and
/// the seed list for replicated runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub case: u8,
    pub traffic: Vec<TrafficSource>,
    pub algo: AlgoId,
    pub budget: usize,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    #[serde(default = "default_neighbor_samples")]
    pub neighbor_samples: usize,
    #[serde(default = "default_iter_max")]
    pub iter_max: usize,
    #[serde(default)]
    pub constants: ContextConstants,
    #[serde(default)]
    pub mosa: Option<MosaSchedule>,
    #[serde(default)]
    pub forest: Option<ForestParams>,
    #[serde(default)]
    pub record_wall_time: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        ObjectiveSet::from_case(self.case)?;
        if self.traffic.is_empty() {
            return Err(Error::Config("traffic: at least one source required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds: at least one seed required".into()));
        }
        if self.budget == 0 {
            return Err(Error::Config("budget: must be positive".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Materializes every configured traffic source, in order.
pub fn resolve_sources(cfg: &ExperimentConfig) -> Result<Vec<TrafficProfile>> {
    let mut profiles = Vec::with_capacity(cfg.traffic.len());
    for src in &cfg.traffic {
        profiles.push(match src {
            TrafficSource::Synthetic { spec } => generate_synthetic(&cfg.system, spec)?,
            TrafficSource::File { path } => load_profile(path)?,
        });
    }
    for p in &profiles {
        if p.n != cfg.system.tiles() {
            return Err(Error::Config(format!(
                "traffic: profile {:?} has {} cores, system has {} tiles",
                p.label,
                p.n,
                cfg.system.tiles()
            )));
        }
    }
    Ok(profiles)
}

/// Resolves the traffic sources into the experiment's working profile:
/// multiple sources are aggregated into the AVG profile, a single source is
/// used as-is.
pub fn resolve_traffic(cfg: &ExperimentConfig) -> Result<TrafficProfile> {
    let mut profiles = resolve_sources(cfg)?;
    if profiles.len() == 1 {
        Ok(profiles.pop().unwrap())
    } else {
        aggregate(&profiles)
    }
}

/// Assembles the per-seed search context for an experiment.
pub fn build_search_context(
    cfg: &ExperimentConfig,
    traffic: TrafficProfile,
    seed: u64,
) -> Result<SearchContext> {
    let eval = EvalContext::with_constants(cfg.system.clone(), traffic, cfg.constants.clone())?;
    let case = ObjectiveSet::from_case(cfg.case)?;
    let mut ctx = SearchContext::new(eval, case);
    ctx.neighbor_samples = cfg.neighbor_samples;
    ctx.move_kinds = MoveKinds::Both;
    ctx.seed = seed;
    ctx.budget = cfg.budget;
    ctx.iter_max = cfg.iter_max;
    ctx.record_wall_time = cfg.record_wall_time;
    if let Some(f) = &cfg.forest {
        ctx.forest = f.clone();
    }
    Ok(ctx)
}

pub fn run_algorithm(ctx: &SearchContext, algo: AlgoId, mosa: &Option<MosaSchedule>) -> Result<SearchReport> {
    match algo {
        AlgoId::MooStage => moo_stage(ctx),
        AlgoId::RandomRestart => random_restart_baseline(ctx),
        AlgoId::Mosa => mosa_baseline(ctx, mosa.as_ref().unwrap_or(&MosaSchedule::default())),
    }
}

/// One layer of the per-layer histogram.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRow {
    pub layer: usize,
    pub planar_links: usize,
    pub cpu: usize,
    pub gpu: usize,
    pub llc: usize,
}

/// Per-layer distribution of planar links and core kinds, layer 0 nearest
/// the heat sink.
pub fn layer_report(design: &Design) -> Vec<LayerRow> {
    let links = design.planar_links_per_layer();
    let cpu = design.kind_per_layer(CoreKind::Cpu);
    let gpu = design.kind_per_layer(CoreKind::Gpu);
    let llc = design.kind_per_layer(CoreKind::Llc);
    (0..design.layers())
        .map(|z| LayerRow {
            layer: z,
            planar_links: links[z],
            cpu: cpu[z],
            gpu: gpu[z],
            llc: llc[z],
        })
        .collect()
}

/// Index of the archive member minimizing the EDP proxy under `ctx`.
pub fn best_edp_index(archive: &ParetoArchive, ctx: &EvalContext) -> Result<usize> {
    if archive.is_empty() {
        return Err(Error::Domain("cannot pick best-EDP member of an empty archive".into()));
    }
    let mut best = 0;
    let mut best_edp = f64::INFINITY;
    for (i, entry) in archive.entries().iter().enumerate() {
        let e = edp_proxy(&entry.design, ctx)?;
        if e < best_edp {
            best_edp = e;
            best = i;
        }
    }
    Ok(best)
}

/// Outcome of one seeded run within a case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub final_phv: f64,
    pub archive_size: usize,
    pub evaluations_used: usize,
}

/// Aggregate of a replicated case run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseSummary {
    pub case: u8,
    pub algo: AlgoId,
    pub budget: usize,
    pub per_seed: Vec<SeedOutcome>,
    pub median_phv: f64,
    pub iqr_phv: f64,
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Linear-interpolation quantile over a copy of the data.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        v[lo]
    } else {
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::json(path.display().to_string(), e))?;
    json.push('\n');
    write_text(path, &json)
}

pub fn progress_csv(report: &SearchReport) -> String {
    let mut out = String::from("iteration,evaluations_used,phv,archive_size,wall_time\n");
    for p in &report.progress {
        writeln!(
            out,
            "{},{},{},{},{}",
            p.iteration, p.evaluations_used, p.phv, p.archive_size, p.wall_time
        )
        .unwrap();
    }
    out
}

pub fn layers_csv(rows: &[LayerRow]) -> String {
    let mut out = String::from("layer,planar_links,cpu,gpu,llc\n");
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.layer, r.planar_links, r.cpu, r.gpu, r.llc).unwrap();
    }
    out
}

/// Runs the configured case once per seed, writing per-seed artifacts
/// (archive.json, progress.csv, layers.csv for the best-EDP member) and a
/// cross-seed summary.json; returns the summary.
pub fn run_case(cfg: &ExperimentConfig) -> Result<CaseSummary> {
    cfg.validate()?;
    let traffic = resolve_traffic(cfg)?;
    let mut per_seed = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let ctx = build_search_context(cfg, traffic.clone(), seed)?;
        let report = run_algorithm(&ctx, cfg.algo, &cfg.mosa)?;
        let dir = cfg.out_dir.join(format!("seed_{seed}"));
        write_json(&dir.join("archive.json"), &report.archive)?;
        write_text(&dir.join("progress.csv"), &progress_csv(&report))?;
        let best = best_edp_index(&report.archive, &ctx.eval)?;
        let rows = layer_report(&report.archive.entries()[best].design);
        write_text(&dir.join("layers.csv"), &layers_csv(&rows))?;
        per_seed.push(SeedOutcome {
            seed,
            final_phv: report.archive.phv_normalized()?,
            archive_size: report.archive.len(),
            evaluations_used: report.evaluations_used,
        });
    }
    let phvs: Vec<f64> = per_seed.iter().map(|s| s.final_phv).collect();
    let summary = CaseSummary {
        case: cfg.case,
        algo: cfg.algo,
        budget: cfg.budget,
        median_phv: median(&phvs),
        iqr_phv: quantile(&phvs, 0.75) - quantile(&phvs, 0.25),
        per_seed,
    };
    write_json(&cfg.out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// One held-out profile's entry in the leave-one-out study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DegradationEntry {
    pub label: String,
    pub edp_avg: f64,
    pub edp_specific: f64,
    /// (edp_avg - edp_specific) / edp_specific on the held-out profile.
    pub degradation: f64,
}

/// Leave-one-out study results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DegradationReport {
    pub entries: Vec<DegradationEntry>,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

/// Optimizes under `traffic` with every configured seed and returns the
/// best-EDP design over the union of the archives (EDP judged on the same
/// traffic the optimization saw).
fn optimize_best_edp(cfg: &ExperimentConfig, traffic: &TrafficProfile) -> Result<Design> {
    let mut best: Option<(f64, Design)> = None;
    for &seed in &cfg.seeds {
        let ctx = build_search_context(cfg, traffic.clone(), seed)?;
        let report = run_algorithm(&ctx, cfg.algo, &cfg.mosa)?;
        let idx = best_edp_index(&report.archive, &ctx.eval)?;
        let design = report.archive.entries()[idx].design.clone();
        let e = edp_proxy(&design, &ctx.eval)?;
        if best.as_ref().map_or(true, |(b, _)| e < *b) {
            best = Some((e, design));
        }
    }
    Ok(best.expect("at least one seed").1)
}

/// For each profile: optimize on the aggregate of the others (the AVG
/// design) and on the profile itself (equal budgets and seeds), then compare
/// both designs' EDP proxies on the held-out profile.
pub fn leave_one_out(
    profiles: &[TrafficProfile],
    cfg: &ExperimentConfig,
) -> Result<DegradationReport> {
    cfg.validate()?;
    if profiles.len() < 3 {
        return Err(Error::Config(format!(
            "traffic: leave-one-out needs at least 3 profiles, got {}",
            profiles.len()
        )));
    }
    let mut entries = Vec::with_capacity(profiles.len());
    for (i, held_out) in profiles.iter().enumerate() {
        let rest: Vec<TrafficProfile> = profiles
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, p)| p.clone())
            .collect();
        let avg = aggregate(&rest)?;
        let avg_design = optimize_best_edp(cfg, &avg)?;
        let specific_design = optimize_best_edp(cfg, held_out)?;

        let eval_ctx = EvalContext::with_constants(
            cfg.system.clone(),
            held_out.clone(),
            cfg.constants.clone(),
        )?;
        let edp_avg = edp_proxy(&avg_design, &eval_ctx)?;
        let edp_specific = edp_proxy(&specific_design, &eval_ctx)?;
        if edp_specific <= 0.0 {
            return Err(Error::Domain(format!(
                "profile {:?} yields non-positive specific EDP",
                held_out.label
            )));
        }
        entries.push(DegradationEntry {
            label: held_out.label.clone(),
            edp_avg,
            edp_specific,
            degradation: (edp_avg - edp_specific) / edp_specific,
        });
    }
    let ds: Vec<f64> = entries.iter().map(|e| e.degradation).collect();
    let report = DegradationReport {
        mean: ds.iter().sum::<f64>() / ds.len() as f64,
        median: median(&ds),
        max: ds.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        entries,
    };
    write_json(&cfg.out_dir.join("degradation.json"), &report)?;
    Ok(report)
}
