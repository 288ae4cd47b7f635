//! Analytical design objectives: link utilization statistics, CPU-LLC
//! latency, the stacked thermal metric, network energy, and the EDP proxy.
//!
//! All objectives are minimized. Routing is deterministic (see
//! [`crate::topology::RoutingTable`]), so every objective is a pure function
//! of the design and its evaluation context.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{CoreKind, Design, RoutingTable, SystemConfig};
use crate::traffic::TrafficProfile;

/// Identifier of one objective, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ObjectiveId {
    #[serde(rename = "U_MEAN")]
    UMean,
    #[serde(rename = "U_STD")]
    UStd,
    #[serde(rename = "LAT")]
    Lat,
    #[serde(rename = "TEMP")]
    Temp,
    #[serde(rename = "ENERGY")]
    Energy,
}

impl fmt::Display for ObjectiveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ObjectiveId::UMean => "U_MEAN",
            ObjectiveId::UStd => "U_STD",
            ObjectiveId::Lat => "LAT",
            ObjectiveId::Temp => "TEMP",
            ObjectiveId::Energy => "ENERGY",
        };
        write!(f, "{s}")
    }
}

/// An ordered, deduplicated set of objectives; the optimization "case".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectiveSet(Vec<ObjectiveId>);

impl ObjectiveSet {
    pub fn new(mut ids: Vec<ObjectiveId>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::Domain("objective set must be nonempty".into()));
        }
        ids.sort_unstable();
        ids.dedup();
        Ok(ObjectiveSet(ids))
    }

    /// The paper-shaped cases: 1 = {U_MEAN, U_STD}, 2 = + LAT, 3 = + ENERGY,
    /// 4 = {TEMP}, 5 = all five.
    pub fn from_case(case: u8) -> Result<Self> {
        use ObjectiveId::*;
        let ids = match case {
            1 => vec![UMean, UStd],
            2 => vec![UMean, UStd, Lat],
            3 => vec![UMean, UStd, Lat, Energy],
            4 => vec![Temp],
            5 => vec![UMean, UStd, Lat, Temp, Energy],
            other => {
                return Err(Error::Config(format!(
                    "case: {other} is not a valid case id; valid cases are 1-5"
                )))
            }
        };
        ObjectiveSet::new(ids)
    }

    pub fn ids(&self) -> &[ObjectiveId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: ObjectiveId) -> bool {
        self.0.contains(&id)
    }
}

/// Evaluated objective values for one design, keyed by objective id.
/// Serializes as a JSON map.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveVector {
    ids: Vec<ObjectiveId>,
    values: Vec<f64>,
}

impl ObjectiveVector {
    pub fn new(set: &ObjectiveSet, values: Vec<f64>) -> Result<Self> {
        if values.len() != set.len() {
            return Err(Error::Domain(format!(
                "objective vector has {} values for {} objectives",
                values.len(),
                set.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("objective values must be finite".into()));
        }
        Ok(ObjectiveVector { ids: set.ids().to_vec(), values })
    }

    pub fn ids(&self) -> &[ObjectiveId] {
        &self.ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, id: ObjectiveId) -> Option<f64> {
        self.ids.iter().position(|i| *i == id).map(|p| self.values[p])
    }

    pub fn same_keys(&self, other: &ObjectiveVector) -> bool {
        self.ids == other.ids
    }
}

impl Serialize for ObjectiveVector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let map: BTreeMap<ObjectiveId, f64> =
            self.ids.iter().copied().zip(self.values.iter().copied()).collect();
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ObjectiveVector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let map = BTreeMap::<ObjectiveId, f64>::deserialize(deserializer)?;
        let (ids, values) = map.into_iter().unzip();
        Ok(ObjectiveVector { ids, values })
    }
}

/// Per-core-kind static power draw in watts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerModel {
    pub cpu: f64,
    pub gpu: f64,
    pub llc: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        // Placeholder magnitudes reflecting the GPU > CPU > LLC power
        // ordering; override via the context JSON for a real process node.
        PowerModel { cpu: 2.0, gpu: 5.0, llc: 0.8 }
    }
}

impl PowerModel {
    pub fn of(&self, kind: CoreKind) -> f64 {
        match kind {
            CoreKind::Cpu => self.cpu,
            CoreKind::Gpu => self.gpu,
            CoreKind::Llc => self.llc,
        }
    }
}

/// Vertical thermal resistances, layer 1 (index 0) nearest the sink.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThermalModel {
    /// K/W per layer, counted from the sink.
    pub layer_resistances: Vec<f64>,
    /// K/W of the base layer the dies sit on.
    pub base_resistance: f64,
}

impl ThermalModel {
    pub fn uniform(layers: usize) -> Self {
        ThermalModel { layer_resistances: vec![0.4; layers], base_resistance: 0.1 }
    }
}

/// Per-flit energy constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyModel {
    /// Router logic energy per port per flit.
    pub router_port: f64,
    /// Planar link energy per tile pitch per flit.
    pub planar: f64,
    /// Vertical link energy per traversal per flit.
    pub vertical: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel { router_port: 1.0, planar: 1.0, vertical: 0.6 }
    }
}

/// Everything needed to evaluate a design: system parameters, traffic, and
/// the physical constants the excluded simulation tools would normally
/// provide.
#[derive(Debug, Clone)]
pub struct EvalContext {
    pub config: SystemConfig,
    pub traffic: TrafficProfile,
    pub power: PowerModel,
    pub thermal: ThermalModel,
    pub energy: EnergyModel,
}

/// Physical-constant overrides accepted as JSON config.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ContextConstants {
    #[serde(default)]
    pub power: Option<PowerModel>,
    #[serde(default)]
    pub thermal: Option<ThermalModel>,
    #[serde(default)]
    pub energy: Option<EnergyModel>,
}

impl EvalContext {
    pub fn new(config: SystemConfig, traffic: TrafficProfile) -> Result<Self> {
        let layers = config.dims.2;
        let ctx = EvalContext {
            thermal: ThermalModel::uniform(layers),
            power: PowerModel::default(),
            energy: EnergyModel::default(),
            config,
            traffic,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn with_constants(
        config: SystemConfig,
        traffic: TrafficProfile,
        constants: ContextConstants,
    ) -> Result<Self> {
        let mut ctx = EvalContext::new(config, traffic)?;
        if let Some(p) = constants.power {
            ctx.power = p;
        }
        if let Some(t) = constants.thermal {
            ctx.thermal = t;
        }
        if let Some(e) = constants.energy {
            ctx.energy = e;
        }
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.traffic.n != self.config.tiles() {
            return Err(Error::Context(format!(
                "traffic profile has {} cores but the system has {} tiles",
                self.traffic.n,
                self.config.tiles()
            )));
        }
        if self.thermal.layer_resistances.len() != self.config.dims.2 {
            return Err(Error::Context(format!(
                "thermal.layer_resistances has {} entries, expected Z = {}",
                self.thermal.layer_resistances.len(),
                self.config.dims.2
            )));
        }
        for (name, v) in [
            ("power.cpu", self.power.cpu),
            ("power.gpu", self.power.gpu),
            ("power.llc", self.power.llc),
            ("energy.router_port", self.energy.router_port),
            ("energy.planar", self.energy.planar),
            ("energy.vertical", self.energy.vertical),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::Context(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Expected utilization of every link (planar and vertical): U_k = sum over
/// flows of f_ij for each link on the deterministic route.
pub fn link_utilizations(design: &Design, ctx: &EvalContext) -> Result<Vec<f64>> {
    let table = RoutingTable::build(design);
    link_utilizations_with(design, ctx, &table)
}

fn link_utilizations_with(
    design: &Design,
    ctx: &EvalContext,
    table: &RoutingTable,
) -> Result<Vec<f64>> {
    let tiles = design.core_tiles(&ctx.config);
    let n = ctx.traffic.n;
    let mut util = vec![0.0; table.links().len()];
    for src_core in 0..n {
        for dst_core in 0..n {
            let f = ctx.traffic.get(src_core, dst_core);
            if f == 0.0 || src_core == dst_core {
                continue;
            }
            table.walk(tiles[src_core], tiles[dst_core], |_, link_idx| {
                util[link_idx] += f;
            })?;
        }
    }
    Ok(util)
}

/// Population mean and standard deviation of a utilization vector.
pub fn util_stats(util: &[f64]) -> Result<(f64, f64)> {
    if util.is_empty() {
        return Err(Error::Domain("utilization vector is empty".into()));
    }
    let l = util.len() as f64;
    let mean = util.iter().sum::<f64>() / l;
    let var = util.iter().map(|u| (u - mean) * (u - mean)).sum::<f64>() / l;
    Ok((mean, var.sqrt()))
}

/// Average CPU-LLC latency: (1 / (C*M)) * sum over CPU i, LLC j of
/// (r * h_ij + d_ij) * f_ij, with f_ij taken in the CPU -> LLC orientation.
pub fn cpu_llc_latency(design: &Design, ctx: &EvalContext) -> Result<f64> {
    let table = RoutingTable::build(design);
    cpu_llc_latency_with(design, ctx, &table)
}

fn cpu_llc_latency_with(design: &Design, ctx: &EvalContext, table: &RoutingTable) -> Result<f64> {
    let c = ctx.config.n_cpu;
    let m = ctx.config.n_llc;
    if c == 0 || m == 0 {
        return Err(Error::Context("CPU-LLC latency requires at least one CPU and one LLC".into()));
    }
    let tiles = design.core_tiles(&ctx.config);
    let r = ctx.config.router_stages as f64;
    let links = table.links();
    let mut acc = 0.0;
    for cpu in 0..c {
        for llc in c..c + m {
            let f = ctx.traffic.get(cpu, llc);
            if f == 0.0 {
                continue;
            }
            let mut hops = 0usize;
            let mut delay = 0.0;
            table.walk(tiles[cpu], tiles[llc], |_, link_idx| {
                hops += 1;
                delay += links[link_idx].delay;
            })?;
            acc += (r * hops as f64 + delay) * f;
        }
    }
    Ok(acc / (c as f64 * m as f64))
}

/// Per-stack layer temperatures T_{n,k}: vertical heat flow through the
/// resistance stack, layer 1 nearest the sink.
fn stack_temperatures(design: &Design, ctx: &EvalContext) -> Vec<Vec<f64>> {
    let stacks = design.layer_tiles();
    let layers = design.layers();
    let r = &ctx.thermal.layer_resistances;
    let rb = ctx.thermal.base_resistance;
    let mut temps = vec![vec![0.0; layers]; stacks];
    for (stack, row) in temps.iter_mut().enumerate() {
        // prefix_r[i] = R_1 + ... + R_{i+1}
        let mut prefix_r = 0.0;
        let mut weighted = 0.0; // sum_i P_{n,i} * (R_1 + .. + R_i)
        let mut power_sum = 0.0; // sum_i P_{n,i}
        for k in 0..layers {
            prefix_r += r[k];
            let tile = k * stacks + stack;
            let p = ctx.power.of(design.placement[tile]);
            weighted += p * prefix_r;
            power_sum += p;
            row[k] = weighted + rb * power_sum;
        }
    }
    temps
}

/// Comparative thermal metric: (max over stacks and layers of T_{n,k}) times
/// (max over layers of the in-layer temperature spread).
pub fn thermal_metric(design: &Design, ctx: &EvalContext) -> f64 {
    let temps = stack_temperatures(design, ctx);
    let layers = design.layers();
    let mut t_max = 0.0f64;
    let mut spread_max = 0.0f64;
    for k in 0..layers {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in &temps {
            lo = lo.min(row[k]);
            hi = hi.max(row[k]);
        }
        t_max = t_max.max(hi);
        spread_max = spread_max.max(hi - lo);
    }
    t_max * spread_max
}

/// Total network energy: router logic energy over every router on each
/// route (source and destination included, port count = degree + 1 local
/// port) plus per-link energy (planar scaled by link length, vertical flat).
pub fn network_energy(design: &Design, ctx: &EvalContext) -> Result<f64> {
    let table = RoutingTable::build(design);
    network_energy_with(design, ctx, &table)
}

fn network_energy_with(design: &Design, ctx: &EvalContext, table: &RoutingTable) -> Result<f64> {
    let tiles = design.core_tiles(&ctx.config);
    let ports = design.port_counts();
    let links = table.links();
    let er = ctx.energy.router_port;
    let n = ctx.traffic.n;
    let mut total = 0.0;
    for src_core in 0..n {
        for dst_core in 0..n {
            let f = ctx.traffic.get(src_core, dst_core);
            if f == 0.0 || src_core == dst_core {
                continue;
            }
            let src = tiles[src_core];
            let mut router_e = er * ports[src] as f64;
            let mut link_e = 0.0;
            table.walk(src, tiles[dst_core], |next, link_idx| {
                router_e += er * ports[next] as f64;
                let link = links[link_idx];
                if link.vertical {
                    link_e += ctx.energy.vertical;
                } else {
                    link_e += link.delay * ctx.energy.planar;
                }
            })?;
            total += f * (router_e + link_e);
        }
    }
    Ok(total)
}

/// Evaluation of one design with the shared per-call routing pass: the
/// requested objective vector plus the summaries the learner features need.
#[derive(Debug, Clone)]
pub struct DesignEvaluation {
    pub objectives: ObjectiveVector,
    pub utilization: Vec<f64>,
    pub util_mean: f64,
    pub util_max: f64,
    pub mean_cpu_llc_hops: f64,
    pub mean_gpu_llc_hops: f64,
}

/// Evaluates exactly the requested objectives, computing routes once.
pub fn evaluate(design: &Design, ctx: &EvalContext, case: &ObjectiveSet) -> Result<ObjectiveVector> {
    Ok(evaluate_full(design, ctx, case)?.objectives)
}

/// Full evaluation: objectives plus routing-derived feature ingredients.
pub fn evaluate_full(
    design: &Design,
    ctx: &EvalContext,
    case: &ObjectiveSet,
) -> Result<DesignEvaluation> {
    let table = RoutingTable::build(design);
    let util = link_utilizations_with(design, ctx, &table)?;
    let (u_mean, u_std) = util_stats(&util)?;
    let util_max = util.iter().copied().fold(0.0f64, f64::max);

    let mut values = Vec::with_capacity(case.len());
    for id in case.ids() {
        let v = match id {
            ObjectiveId::UMean => u_mean,
            ObjectiveId::UStd => u_std,
            ObjectiveId::Lat => cpu_llc_latency_with(design, ctx, &table)?,
            ObjectiveId::Temp => thermal_metric(design, ctx),
            ObjectiveId::Energy => network_energy_with(design, ctx, &table)?,
        };
        values.push(v);
    }
    let objectives = ObjectiveVector::new(case, values)?;

    let tiles = design.core_tiles(&ctx.config);
    let c = ctx.config.n_cpu;
    let m = ctx.config.n_llc;
    let g = ctx.config.n_gpu;
    let mean_hops = |srcs: std::ops::Range<usize>, dsts: std::ops::Range<usize>| -> f64 {
        let mut total = 0usize;
        let mut count = 0usize;
        for s in srcs {
            for d in dsts.clone() {
                total += table.hop_count(tiles[s], tiles[d]).unwrap_or(0);
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            total as f64 / count as f64
        }
    };
    let mean_cpu_llc_hops = mean_hops(0..c, c..c + m);
    let mean_gpu_llc_hops = mean_hops(c + m..c + m + g, c..c + m);

    Ok(DesignEvaluation {
        objectives,
        utilization: util,
        util_mean: u_mean,
        util_max,
        mean_cpu_llc_hops,
        mean_gpu_llc_hops,
    })
}

/// Energy-delay-product proxy: CPU-LLC latency times network energy.
pub fn edp_proxy(design: &Design, ctx: &EvalContext) -> Result<f64> {
    let table = RoutingTable::build(design);
    let lat = cpu_llc_latency_with(design, ctx, &table)?;
    let energy = network_energy_with(design, ctx, &table)?;
    Ok(lat * energy)
}
