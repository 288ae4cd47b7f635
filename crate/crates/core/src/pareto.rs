//! Dominance tests, non-dominated archive maintenance, objective
//! normalization, and Pareto hypervolume (PHV) by recursive objective
//! slicing.
//!
//! All objectives are minimized: PHV is the Lebesgue measure of the region
//! dominated by the point set and bounded by a reference point beyond the
//! nadir.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::ObjectiveVector;
use crate::topology::Design;

/// Margin past the normalized nadir so boundary points still contribute.
pub const REF_MARGIN: f64 = 1.1;

/// Strict Pareto dominance under minimization: `a` dominates `b` iff a <= b
/// componentwise and a < b somewhere.
pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> Result<bool> {
    if !a.same_keys(b) {
        return Err(Error::Domain("dominance test over mismatched objective sets".into()));
    }
    Ok(dominates_raw(a.values(), b.values()))
}

pub(crate) fn dominates_raw(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strict = true;
        }
    }
    strict
}

fn dominates_or_equal(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

/// Running per-objective min/max over every vector ever offered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Bounds {
    pub fn empty(m: usize) -> Self {
        Bounds { min: vec![f64::INFINITY; m], max: vec![f64::NEG_INFINITY; m] }
    }

    pub fn update(&mut self, values: &[f64]) {
        for (i, v) in values.iter().enumerate() {
            self.min[i] = self.min[i].min(*v);
            self.max[i] = self.max[i].max(*v);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min.iter().any(|v| !v.is_finite())
    }

    /// Affine map to [0,1] per objective, clamped; degenerate objectives
    /// (min == max, or nothing observed) map to 0.
    pub fn normalize(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let span = self.max[i] - self.min[i];
                if !span.is_finite() || span <= 0.0 {
                    0.0
                } else {
                    ((v - self.min[i]) / span).clamp(0.0, 1.0)
                }
            })
            .collect()
    }
}

/// One archived design with its evaluated objectives.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub design: Design,
    pub objectives: ObjectiveVector,
}

/// Mutually non-dominated set of designs. Bounds envelope every vector ever
/// offered to `insert`, accepted or not, so normalization is stable across
/// rejections.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParetoArchive {
    entries: Vec<ArchiveEntry>,
    bounds: Bounds,
}

impl ParetoArchive {
    pub fn new(n_objectives: usize) -> Self {
        ParetoArchive { entries: Vec::new(), bounds: Bounds::empty(n_objectives) }
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// Folds another bounds envelope into this archive's.
    pub fn widen_bounds(&mut self, other: &Bounds) {
        self.bounds.update(&other.min);
        self.bounds.update(&other.max);
    }

    pub fn contains_design(&self, design: &Design) -> bool {
        self.entries.iter().any(|e| &e.design == design)
    }

    /// Inserts unless the vector is dominated by (or equal to) an existing
    /// entry; on insert, drops every entry the new vector dominates. Bounds
    /// are updated regardless of acceptance.
    pub fn insert(&mut self, design: Design, objectives: ObjectiveVector) -> Result<bool> {
        if let Some(first) = self.entries.first() {
            if !first.objectives.same_keys(&objectives) {
                return Err(Error::Domain(
                    "archive insert with mismatched objective set".into(),
                ));
            }
        } else if objectives.values().len() != self.bounds.min.len() {
            return Err(Error::Domain(format!(
                "archive built for {} objectives, got {}",
                self.bounds.min.len(),
                objectives.values().len()
            )));
        }
        self.bounds.update(objectives.values());
        let v = objectives.values();
        if self.entries.iter().any(|e| dominates_or_equal(e.objectives.values(), v)) {
            return Ok(false);
        }
        self.entries.retain(|e| !dominates_raw(v, e.objectives.values()));
        self.entries.push(ArchiveEntry { design, objectives });
        Ok(true)
    }

    /// Entry vectors normalized against this archive's own bounds.
    pub fn normalized_points(&self) -> Vec<Vec<f64>> {
        self.normalized_points_with(&self.bounds)
    }

    /// Entry vectors normalized against a caller-supplied bounds snapshot.
    pub fn normalized_points_with(&self, bounds: &Bounds) -> Vec<Vec<f64>> {
        self.entries.iter().map(|e| bounds.normalize(e.objectives.values())).collect()
    }

    /// PHV of the archive under its own bounds with the standard reference
    /// point (1.1 per normalized objective).
    pub fn phv_normalized(&self) -> Result<f64> {
        self.phv_with(&self.bounds)
    }

    /// PHV under a caller-supplied bounds snapshot.
    pub fn phv_with(&self, bounds: &Bounds) -> Result<f64> {
        let pts = self.normalized_points_with(bounds);
        let m = self.bounds.min.len();
        phv(&pts, &vec![REF_MARGIN; m])
    }
}

/// Hypervolume of the union of boxes [p, ref] over all points, by recursive
/// slicing: sort on the first objective, take slabs between consecutive
/// coordinates, and multiply each slab width by the hypervolume of the
/// non-dominated projection onto the remaining objectives.
pub fn phv(points: &[Vec<f64>], ref_point: &[f64]) -> Result<f64> {
    let m = ref_point.len();
    if m == 0 {
        return Err(Error::ReferencePoint("reference point must be nonempty".into()));
    }
    for p in points {
        if p.len() != m {
            return Err(Error::ReferencePoint(format!(
                "point has {} coordinates, reference has {m}",
                p.len()
            )));
        }
        if p.iter().zip(ref_point).any(|(x, r)| x >= r) {
            return Err(Error::ReferencePoint(format!(
                "point {p:?} not strictly below reference {ref_point:?}"
            )));
        }
    }
    let front = pareto_filter(points);
    Ok(hso(&front, ref_point))
}

/// Non-dominated, deduplicated subset of raw points.
fn pareto_filter(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for p in points {
        if kept.iter().any(|k| dominates_or_equal(k, p)) {
            continue;
        }
        kept.retain(|k| !dominates_raw(p, k));
        kept.push(p.clone());
    }
    kept
}

fn hso(front: &[Vec<f64>], ref_point: &[f64]) -> f64 {
    if front.is_empty() {
        return 0.0;
    }
    if ref_point.len() == 1 {
        // Front is non-dominated, so in 1-D it is a single point.
        return ref_point[0] - front.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    }
    let mut sorted: Vec<&Vec<f64>> = front.iter().collect();
    sorted.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
    let sub_ref = &ref_point[1..];
    let mut volume = 0.0;
    let mut active: Vec<Vec<f64>> = Vec::new();
    for (i, p) in sorted.iter().enumerate() {
        // Projection of points seen so far onto the remaining objectives.
        let proj = p[1..].to_vec();
        if !active.iter().any(|k| dominates_or_equal(k, &proj)) {
            active.retain(|k| !dominates_raw(&proj, k));
            active.push(proj);
        }
        let upper = if i + 1 < sorted.len() { sorted[i + 1][0] } else { ref_point[0] };
        let width = upper - p[0];
        if width > 0.0 {
            volume += width * hso(&active, sub_ref);
        }
    }
    volume
}
