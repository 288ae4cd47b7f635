//! Traffic profiles: synthetic many-to-few generation, leave-one-out AVG
//! aggregation, and CSV ingestion.
//!
//! Rates are flits per cycle, indexed by core id (not tile index): row is the
//! source core, column the destination. Core id 0 is the master CPU.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::SystemConfig;

/// Dense matrix of pairwise interaction frequencies `f_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficProfile {
    pub n: usize,
    /// Row-major n x n, diagonal zero, entries >= 0.
    pub rates: Vec<f64>,
    pub label: String,
}

impl TrafficProfile {
    pub fn zeros(n: usize, label: impl Into<String>) -> Self {
        TrafficProfile { n, rates: vec![0.0; n * n], label: label.into() }
    }

    pub fn get(&self, src: usize, dst: usize) -> f64 {
        self.rates[src * self.n + dst]
    }

    pub fn set(&mut self, src: usize, dst: usize, value: f64) {
        self.rates[src * self.n + dst] = value;
    }

    pub fn total(&self) -> f64 {
        self.rates.iter().sum()
    }

    /// Entries scaled so the matrix sums to one.
    pub fn normalized(&self) -> Result<TrafficProfile> {
        let total = self.total();
        if total <= 0.0 {
            return Err(Error::Aggregation(format!(
                "profile '{}' has zero total traffic and cannot be normalized",
                self.label
            )));
        }
        let mut out = self.clone();
        for v in &mut out.rates {
            *v /= total;
        }
        Ok(out)
    }

    /// Fraction of total traffic on flows touching a core in `group_a` on one
    /// end and `group_b` on the other (either direction).
    pub fn flow_fraction(&self, group_a: &[usize], group_b: &[usize]) -> f64 {
        let total = self.total();
        if total == 0.0 {
            return 0.0;
        }
        let in_a = |c: usize| group_a.contains(&c);
        let in_b = |c: usize| group_b.contains(&c);
        let mut mass = 0.0;
        for s in 0..self.n {
            for d in 0..self.n {
                if (in_a(s) && in_b(d)) || (in_b(s) && in_a(d)) {
                    mass += self.get(s, d);
                }
            }
        }
        mass / total
    }
}

/// Parameters of the synthetic many-to-few generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Fraction of all CPU traffic carried by the master core (CPU id 0).
    #[serde(default = "default_master_share")]
    pub master_cpu_share: f64,
    /// Fraction of total traffic on CORE<->LLC flows (CPU<->LLC plus
    /// GPU<->LLC).
    #[serde(default = "default_core_llc")]
    pub core_llc_fraction: f64,
    /// Fraction of total traffic on CPU<->LLC flows; must not exceed
    /// `core_llc_fraction`.
    #[serde(default = "default_cpu_llc")]
    pub cpu_llc_fraction: f64,
    /// Relative standard deviation of the GPU-LLC rates.
    #[serde(default = "default_jitter")]
    pub gpu_uniformity_jitter: f64,
    /// Aggregate flits per cycle across the whole matrix.
    #[serde(default = "default_intensity")]
    pub total_intensity: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_master_share() -> f64 {
    0.7
}
fn default_core_llc() -> f64 {
    0.85
}
fn default_cpu_llc() -> f64 {
    0.05
}
fn default_jitter() -> f64 {
    0.1
}
fn default_intensity() -> f64 {
    1.0
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            master_cpu_share: default_master_share(),
            core_llc_fraction: default_core_llc(),
            cpu_llc_fraction: default_cpu_llc(),
            gpu_uniformity_jitter: default_jitter(),
            total_intensity: default_intensity(),
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("master_cpu_share", self.master_cpu_share),
            ("core_llc_fraction", self.core_llc_fraction),
            ("cpu_llc_fraction", self.cpu_llc_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::TrafficSpec(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.cpu_llc_fraction > self.core_llc_fraction {
            return Err(Error::TrafficSpec(format!(
                "cpu_llc_fraction ({}) exceeds core_llc_fraction ({})",
                self.cpu_llc_fraction, self.core_llc_fraction
            )));
        }
        if self.gpu_uniformity_jitter < 0.0 {
            return Err(Error::TrafficSpec("gpu_uniformity_jitter must be >= 0".into()));
        }
        if self.total_intensity <= 0.0 {
            return Err(Error::TrafficSpec("total_intensity must be > 0".into()));
        }
        Ok(())
    }
}

/// Generates a synthetic profile with the heterogeneous many-to-few
/// structure: most traffic on CORE<->LLC flows, a master CPU carrying a fixed
/// share of all CPU traffic, near-uniform GPU-LLC rates, and zero CPU<->GPU
/// traffic. Fraction splits hold exactly (the jittered GPU-LLC block is
/// rescaled to its target mass); deterministic per seed.
pub fn generate_synthetic(config: &SystemConfig, spec: &SyntheticSpec) -> Result<TrafficProfile> {
    config.validate()?;
    spec.validate()?;
    let n = config.tiles();
    let cpus: Vec<usize> = (0..config.n_cpu).collect();
    let llcs: Vec<usize> = (config.n_cpu..config.n_cpu + config.n_llc).collect();
    let gpus: Vec<usize> = (config.n_cpu + config.n_llc..n).collect();

    let total = spec.total_intensity;
    let cpu_llc_mass = spec.cpu_llc_fraction * total;
    let gpu_llc_mass = (spec.core_llc_fraction - spec.cpu_llc_fraction) * total;
    let remainder = total - cpu_llc_mass - gpu_llc_mass;

    if cpu_llc_mass > 0.0 && (cpus.is_empty() || llcs.is_empty()) {
        return Err(Error::TrafficSpec("cpu_llc_fraction > 0 requires CPUs and LLCs".into()));
    }
    if gpu_llc_mass > 0.0 && (gpus.is_empty() || llcs.is_empty()) {
        return Err(Error::TrafficSpec("GPU-LLC traffic requires GPUs and LLCs".into()));
    }

    let mut profile = TrafficProfile::zeros(n, "synthetic");

    // CPU<->LLC: the master CPU carries its share exactly, the rest is split
    // uniformly over the remaining CPUs. Each flow is split evenly over both
    // directions.
    if cpu_llc_mass > 0.0 {
        let m = llcs.len() as f64;
        let master_mass = if cpus.len() == 1 { cpu_llc_mass } else { spec.master_cpu_share * cpu_llc_mass };
        let per_pair_master = master_mass / (2.0 * m);
        for &llc in &llcs {
            profile.set(cpus[0], llc, per_pair_master);
            profile.set(llc, cpus[0], per_pair_master);
        }
        if cpus.len() > 1 {
            let others = (cpus.len() - 1) as f64;
            let per_pair = (cpu_llc_mass - master_mass) / (2.0 * m * others);
            for &cpu in &cpus[1..] {
                for &llc in &llcs {
                    profile.set(cpu, llc, per_pair);
                    profile.set(llc, cpu, per_pair);
                }
            }
        }
    }

    // GPU<->LLC: uniform base rate with multiplicative jitter, then rescaled
    // so the block mass is exact.
    if gpu_llc_mass > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let pairs = 2.0 * gpus.len() as f64 * llcs.len() as f64;
        let base = gpu_llc_mass / pairs;
        let mut block_sum = 0.0;
        if spec.gpu_uniformity_jitter > 0.0 {
            let noise = Normal::new(1.0, spec.gpu_uniformity_jitter)
                .map_err(|e| Error::TrafficSpec(e.to_string()))?;
            for &gpu in &gpus {
                for &llc in &llcs {
                    let a = (base * noise.sample(&mut rng)).max(0.0);
                    let b = (base * noise.sample(&mut rng)).max(0.0);
                    profile.set(gpu, llc, a);
                    profile.set(llc, gpu, b);
                    block_sum += a + b;
                }
            }
        } else {
            for &gpu in &gpus {
                for &llc in &llcs {
                    profile.set(gpu, llc, base);
                    profile.set(llc, gpu, base);
                    block_sum += 2.0 * base;
                }
            }
        }
        if block_sum > 0.0 {
            let scale = gpu_llc_mass / block_sum;
            for &gpu in &gpus {
                for &llc in &llcs {
                    profile.set(gpu, llc, profile.get(gpu, llc) * scale);
                    profile.set(llc, gpu, profile.get(llc, gpu) * scale);
                }
            }
        }
    }

    // CORE<->CORE remainder goes to GPU<->GPU (CPU<->GPU is negligible and
    // kept at zero). Falls back to CPU<->CPU on GPU-less systems.
    if remainder > 1e-15 {
        if gpus.len() >= 2 {
            let pairs = (gpus.len() * (gpus.len() - 1)) as f64;
            let per_pair = remainder / pairs;
            for &a in &gpus {
                for &b in &gpus {
                    if a != b {
                        profile.set(a, b, per_pair);
                    }
                }
            }
        } else if cpus.len() >= 2 {
            let pairs = (cpus.len() * (cpus.len() - 1)) as f64;
            let per_pair = remainder / pairs;
            for &a in &cpus {
                for &b in &cpus {
                    if a != b {
                        profile.set(a, b, per_pair);
                    }
                }
            }
        } else {
            return Err(Error::TrafficSpec(
                "core_llc_fraction < 1 requires at least two GPUs or two CPUs to absorb \
                 the CORE<->CORE remainder"
                    .into(),
            ));
        }
    }

    Ok(profile)
}

/// Leave-one-out AVG aggregation: each profile is normalized to unit total,
/// then averaged entrywise. Normalizing first keeps a high-intensity
/// application from dominating the average.
pub fn aggregate(profiles: &[TrafficProfile]) -> Result<TrafficProfile> {
    let first = profiles
        .first()
        .ok_or_else(|| Error::Aggregation("need at least one profile".into()))?;
    let n = first.n;
    for p in profiles {
        if p.n != n {
            return Err(Error::Aggregation(format!(
                "profile '{}' has {} cores, expected {}",
                p.label, p.n, n
            )));
        }
    }
    let mut out = TrafficProfile::zeros(n, "AVG");
    let weight = 1.0 / profiles.len() as f64;
    for p in profiles {
        let norm = p.normalized()?;
        for (o, v) in out.rates.iter_mut().zip(norm.rates.iter()) {
            *o += weight * v;
        }
    }
    Ok(out)
}

/// Writes a profile as CSV: an optional-header comment line, then n rows of n
/// comma-separated decimals. Values are printed in shortest round-trip form,
/// so store/load is bit-exact.
pub fn store_profile(profile: &TrafficProfile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let _ = writeln!(out, "# cores={} label={}", profile.n, profile.label);
    for row in 0..profile.n {
        let line: Vec<String> =
            (0..profile.n).map(|col| format!("{}", profile.get(row, col))).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Parses a profile CSV; see [`store_profile`] for the format.
pub fn load_profile(path: impl AsRef<Path>) -> Result<TrafficProfile> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_profile(&text)
}

pub fn parse_profile(text: &str) -> Result<TrafficProfile> {
    let mut label = String::from("profile");
    let mut declared_n: Option<usize> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let row_no = line_no + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(header) = trimmed.strip_prefix('#') {
            for field in header.split_whitespace() {
                if let Some(v) = field.strip_prefix("cores=") {
                    declared_n = Some(v.parse().map_err(|_| Error::Parse {
                        row: row_no,
                        col: 1,
                        msg: format!("bad cores count '{v}'"),
                    })?);
                } else if let Some(v) = field.strip_prefix("label=") {
                    label = v.to_string();
                }
            }
            continue;
        }
        let mut row = Vec::new();
        for (col_idx, field) in trimmed.split(',').enumerate() {
            let col = col_idx + 1;
            let value: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row: row_no,
                col,
                msg: format!("cannot parse '{}' as a rate", field.trim()),
            })?;
            if value.is_nan() {
                return Err(Error::Parse { row: row_no, col, msg: "rate is NaN".into() });
            }
            if value < 0.0 {
                return Err(Error::Parse {
                    row: row_no,
                    col,
                    msg: format!("negative rate {value}"),
                });
            }
            row.push(value);
        }
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(Error::Parse { row: 1, col: 1, msg: "empty profile".into() });
    }
    for (idx, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Parse {
                row: idx + 1,
                col: row.len(),
                msg: format!("row has {} columns, expected {} (matrix must be square)", row.len(), n),
            });
        }
    }
    if let Some(d) = declared_n {
        if d != n {
            return Err(Error::Parse {
                row: 1,
                col: 1,
                msg: format!("header declares {d} cores but found {n} rows"),
            });
        }
    }
    let mut profile = TrafficProfile { n, rates: rows.concat(), label };
    for i in 0..n {
        profile.set(i, i, 0.0);
    }
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_64() -> SystemConfig {
        SystemConfig::new((4, 4, 4), 8, 16, 40)
    }

    #[test]
    fn default_spec_puts_most_traffic_on_llcs() {
        let config = cfg_64();
        let profile = generate_synthetic(&config, &SyntheticSpec::default()).unwrap();
        let llcs: Vec<usize> = (8..24).collect();
        let others: Vec<usize> = (0..8).chain(24..64).collect();
        let llc_fraction = profile.flow_fraction(&llcs, &others);
        assert!(llc_fraction >= 0.80, "LLC-associated traffic {llc_fraction} < 80%");
    }

    #[test]
    fn zero_jitter_gives_exactly_uniform_gpu_llc() {
        let config = cfg_64();
        let spec = SyntheticSpec { gpu_uniformity_jitter: 0.0, ..Default::default() };
        let profile = generate_synthetic(&config, &spec).unwrap();
        let first = profile.get(24, 8);
        assert!(first > 0.0);
        for gpu in 24..64 {
            for llc in 8..24 {
                assert_eq!(profile.get(gpu, llc), first);
                assert_eq!(profile.get(llc, gpu), first);
            }
        }
    }

    #[test]
    fn fraction_splits_are_exact() {
        let config = cfg_64();
        let spec = SyntheticSpec {
            cpu_llc_fraction: 0.026,
            core_llc_fraction: 0.85,
            total_intensity: 3.5,
            seed: 17,
            ..Default::default()
        };
        let profile = generate_synthetic(&config, &spec).unwrap();
        assert!((profile.total() - 3.5).abs() < 1e-9);
        let cpus: Vec<usize> = (0..8).collect();
        let llcs: Vec<usize> = (8..24).collect();
        let cpu_llc = profile.flow_fraction(&cpus, &llcs) * profile.total();
        assert!((cpu_llc - 0.026 * 3.5).abs() < 1e-9);
    }

    #[test]
    fn master_cpu_carries_its_share_exactly() {
        let config = cfg_64();
        let spec = SyntheticSpec { master_cpu_share: 0.6, seed: 3, ..Default::default() };
        let profile = generate_synthetic(&config, &spec).unwrap();
        let master_mass: f64 = (0..64)
            .map(|other| profile.get(0, other) + profile.get(other, 0))
            .sum();
        let cpu_mass: f64 = (0..8usize)
            .map(|cpu| -> f64 {
                (0..64).map(|other| profile.get(cpu, other) + profile.get(other, cpu)).sum()
            })
            .sum();
        assert!((master_mass / cpu_mass - 0.6).abs() < 1e-9);
    }

    #[test]
    fn generator_is_deterministic_per_seed() {
        let config = cfg_64();
        let spec = SyntheticSpec { seed: 42, ..Default::default() };
        let a = generate_synthetic(&config, &spec).unwrap();
        let b = generate_synthetic(&config, &spec).unwrap();
        assert_eq!(a.rates, b.rates);
        let c = generate_synthetic(&config, &SyntheticSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a.rates, c.rates);
    }

    #[test]
    fn cpu_gpu_traffic_is_zero() {
        let profile = generate_synthetic(&cfg_64(), &SyntheticSpec::default()).unwrap();
        for cpu in 0..8 {
            for gpu in 24..64 {
                assert_eq!(profile.get(cpu, gpu), 0.0);
                assert_eq!(profile.get(gpu, cpu), 0.0);
            }
        }
    }

    #[test]
    fn invalid_fractions_rejected() {
        let config = cfg_64();
        let spec = SyntheticSpec { cpu_llc_fraction: 0.9, core_llc_fraction: 0.8, ..Default::default() };
        assert!(generate_synthetic(&config, &spec).is_err());
        let spec = SyntheticSpec { total_intensity: 0.0, ..Default::default() };
        assert!(generate_synthetic(&config, &spec).is_err());
    }

    #[test]
    fn aggregate_singleton_normalizes() {
        let mut p = TrafficProfile::zeros(3, "p");
        p.set(0, 1, 2.0);
        p.set(1, 2, 6.0);
        let avg = aggregate(std::slice::from_ref(&p)).unwrap();
        assert_eq!(avg.label, "AVG");
        assert!((avg.get(0, 1) - 0.25).abs() < 1e-12);
        assert!((avg.get(1, 2) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn aggregate_identical_profiles_idempotent() {
        let mut p = TrafficProfile::zeros(3, "p");
        p.set(0, 2, 4.0);
        p.set(2, 1, 4.0);
        let avg = aggregate(&[p.clone(), p.clone()]).unwrap();
        let norm = p.normalized().unwrap();
        for (a, b) in avg.rates.iter().zip(norm.rates.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregate_disjoint_support() {
        let mut a = TrafficProfile::zeros(3, "a");
        a.set(0, 1, 2.0);
        let mut b = TrafficProfile::zeros(3, "b");
        b.set(1, 2, 2.0);
        let avg = aggregate(&[a, b]).unwrap();
        assert!((avg.get(0, 1) - 0.5).abs() < 1e-12);
        assert!((avg.get(1, 2) - 0.5).abs() < 1e-12);
        assert!((avg.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn aggregate_dimension_mismatch() {
        let a = TrafficProfile::zeros(3, "a");
        let b = TrafficProfile::zeros(4, "b");
        assert!(matches!(aggregate(&[a, b]), Err(Error::Aggregation(_))));
    }

    #[test]
    fn csv_direct_read() {
        let profile = parse_profile("0,1.5\n0.5,0\n").unwrap();
        assert_eq!(profile.get(0, 1), 1.5);
        assert_eq!(profile.get(1, 0), 0.5);
    }

    #[test]
    fn csv_round_trip_bit_exact() {
        let config = cfg_64();
        let profile = generate_synthetic(&config, &SyntheticSpec { seed: 7, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        store_profile(&profile, &path).unwrap();
        let back = load_profile(&path).unwrap();
        assert_eq!(profile.rates, back.rates);
        assert_eq!(back.label, "synthetic");
    }

    #[test]
    fn ragged_rows_name_the_offender() {
        let err = parse_profile("0,1\n1,0,2\n").unwrap_err();
        match err {
            Error::Parse { row, .. } => assert_eq!(row, 2),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn negative_rate_rejected_with_location() {
        let err = parse_profile("0,1\n-2,0\n").unwrap_err();
        match err {
            Error::Parse { row, col, .. } => {
                assert_eq!(row, 2);
                assert_eq!(col, 1);
            }
            other => panic!("unexpected error {other}"),
        }
    }
}
