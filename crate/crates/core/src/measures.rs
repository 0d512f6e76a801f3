//! Core data types: weighted point sets, sparse couplings, and the cost
//! functionals shared by every solver and embedding.
//!
//! A [`DiscreteMeasure`] is a finite weighted point set in `R^d`; weights are
//! nonnegative and need not sum to one. A [`TransportPlan`] is a sparse list
//! of `(source, target, mass)` triplets; the same type covers balanced
//! couplings (marginals equal to the endpoint weights) and partial couplings
//! (marginals dominated by them). All types are immutable after construction
//! and all operations here are pure functions.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::accum::{kahan_sum, KahanSum};
use crate::error::{Error, Result};

/// Absolute tolerance for all marginal equality/domination checks on masses.
/// Weights are O(1) throughout and solver outputs are rational flows scaled
/// back to floats, so an absolute comparison is appropriate.
pub const MASS_TOL: f64 = 1e-9;

/// A finite weighted point set in `R^d`.
///
/// Zero-weight atoms are allowed and preserved: partial barycentric
/// projections place empty atoms at reference positions, and dropping them
/// would break index alignment with the reference support.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    points: Vec<f64>, // row-major, len n * dim
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Builds a measure from row-major coordinates and per-atom weights.
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMeasure("dimension must be >= 1".into()));
        }
        if weights.is_empty() {
            return Err(Error::InvalidMeasure("measure needs at least one atom".into()));
        }
        if points.len() != weights.len() * dim {
            return Err(Error::InvalidMeasure(format!(
                "{} coordinates do not match {} atoms of dimension {}",
                points.len(),
                weights.len(),
                dim
            )));
        }
        if let Some(bad) = points.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure(format!("non-finite coordinate {bad}")));
        }
        if let Some(bad) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidMeasure(format!("invalid weight {bad}")));
        }
        Ok(Self { dim, points, weights })
    }

    /// Convenience constructor from one coordinate slice per atom.
    pub fn from_rows(rows: &[&[f64]], weights: &[f64]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidMeasure("measure needs at least one atom".into()));
        }
        let dim = rows[0].len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidMeasure("ragged coordinate rows".into()));
        }
        let mut points = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            points.extend_from_slice(r);
        }
        Self::new(dim, points, weights.to_vec())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires at least one atom
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, n: usize) -> &[f64] {
        &self.points[n * self.dim..(n + 1) * self.dim]
    }

    pub fn weight(&self, n: usize) -> f64 {
        self.weights[n]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn points_flat(&self) -> &[f64] {
        &self.points
    }

    /// Total mass, `sum_n w_n`.
    pub fn total_mass(&self) -> f64 {
        kahan_sum(self.weights.iter().copied())
    }

    /// Same support with all weights rescaled so the total mass is `total`.
    pub fn scaled_to_total(&self, total: f64) -> Result<Self> {
        if !total.is_finite() || total < 0.0 {
            return Err(Error::InvalidParameter(format!("target mass {total} must be >= 0")));
        }
        let current = self.total_mass();
        if current <= 0.0 {
            return Err(Error::InvalidMeasure("cannot rescale a zero-mass measure".into()));
        }
        let factor = total / current;
        let weights = self.weights.iter().map(|w| w * factor).collect();
        Self::new(self.dim, self.points.clone(), weights)
    }

    /// Per-coordinate `(min, max)` over the support.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        let mut bbox = vec![(f64::INFINITY, f64::NEG_INFINITY); self.dim];
        for n in 0..self.len() {
            for (k, x) in self.point(n).iter().enumerate() {
                bbox[k].0 = bbox[k].0.min(*x);
                bbox[k].1 = bbox[k].1.max(*x);
            }
        }
        bbox
    }

    /// Squared Euclidean distance between atom `n` of `self` and atom `m` of
    /// `other`.
    pub fn squared_distance(&self, n: usize, other: &DiscreteMeasure, m: usize) -> f64 {
        squared_dist(self.point(n), other.point(m))
    }

    /// Reads the repo-wide point-set CSV format: header `x0,..,x{d-1},w`,
    /// one atom per row.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_csv_str(&text)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty point-set file".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 2 || cols.last() != Some(&"w") {
            return Err(Error::Parse(format!("bad point-set header `{header}`")));
        }
        let dim = cols.len() - 1;
        for (k, c) in cols[..dim].iter().enumerate() {
            if *c != format!("x{k}") {
                return Err(Error::Parse(format!("bad point-set header `{header}`")));
            }
        }
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != dim + 1 {
                return Err(Error::Parse(format!(
                    "row {}: expected {} fields, got {}",
                    i + 2,
                    dim + 1,
                    fields.len()
                )));
            }
            for f in &fields[..dim] {
                points.push(parse_f64(f)?);
            }
            weights.push(parse_f64(fields[dim])?);
        }
        Self::new(dim, points, weights)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for k in 0..self.dim {
            out.push_str(&format!("x{k},"));
        }
        out.push_str("w\n");
        for n in 0..self.len() {
            for x in self.point(n) {
                out.push_str(&format!("{x},"));
            }
            out.push_str(&format!("{}\n", self.weight(n)));
        }
        out
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Parse(format!("not a number: `{s}`")))
}

/// Equality of two point sets *as measures*: atoms within `tol` of each other
/// (in every coordinate) are pooled, and the pooled masses must agree within
/// `tol`. Zero-weight atoms and differing atom orders are ignored, which is
/// the right notion for comparing interpolation outputs against their
/// documented endpoints.
pub fn measures_coincide(a: &DiscreteMeasure, b: &DiscreteMeasure, tol: f64) -> bool {
    if a.dim() != b.dim() {
        return false;
    }
    let mut atoms: Vec<(&[f64], f64)> = Vec::with_capacity(a.len() + b.len());
    for n in 0..a.len() {
        atoms.push((a.point(n), a.weight(n)));
    }
    for n in 0..b.len() {
        atoms.push((b.point(n), -b.weight(n)));
    }
    atoms.sort_by(|x, y| {
        x.0.iter()
            .zip(y.0)
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| *o != std::cmp::Ordering::Equal)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut i = 0;
    while i < atoms.len() {
        let mut j = i;
        let mut net = KahanSum::new();
        while j < atoms.len()
            && atoms[j].0.iter().zip(atoms[i].0).all(|(p, q)| (p - q).abs() <= tol)
        {
            net.add(atoms[j].1);
            j += 1;
        }
        if net.value().abs() > tol {
            return false;
        }
        i = j;
    }
    true
}

#[inline]
pub(crate) fn squared_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// One stored coupling entry; mass is strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanEntry {
    pub source: usize,
    pub target: usize,
    pub mass: f64,
}

/// Sparse nonnegative coupling between a source and a target measure.
///
/// Zero-mass entries are never stored. Whether a plan is balanced or partial
/// is a property of its marginals, checked by the cost functionals, not a tag
/// on the type.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    n_source: usize,
    n_target: usize,
    entries: Vec<PlanEntry>,
}

#[derive(Serialize, Deserialize)]
struct PlanJson {
    n0: usize,
    n1: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TransportPlan {
    /// Builds a plan, dropping exact-zero entries and rejecting negative or
    /// non-finite masses and out-of-range indices.
    pub fn new(n_source: usize, n_target: usize, entries: Vec<PlanEntry>) -> Result<Self> {
        let mut kept = Vec::with_capacity(entries.len());
        for e in entries {
            if e.source >= n_source || e.target >= n_target {
                return Err(Error::InvalidPlan(format!(
                    "entry ({}, {}) outside {}x{} supports",
                    e.source, e.target, n_source, n_target
                )));
            }
            if !e.mass.is_finite() || e.mass < 0.0 {
                return Err(Error::InvalidPlan(format!("invalid entry mass {}", e.mass)));
            }
            if e.mass > 0.0 {
                kept.push(e);
            }
        }
        Ok(Self { n_source, n_target, entries: kept })
    }

    /// Diagonal plan carrying `weights[n]` from atom `n` to atom `n`.
    pub fn diagonal(weights: &[f64]) -> Result<Self> {
        let entries = weights
            .iter()
            .enumerate()
            .map(|(n, w)| PlanEntry { source: n, target: n, mass: *w })
            .collect();
        Self::new(weights.len(), weights.len(), entries)
    }

    pub fn n_source(&self) -> usize {
        self.n_source
    }

    pub fn n_target(&self) -> usize {
        self.n_target
    }

    pub fn entries(&self) -> &[PlanEntry] {
        &self.entries
    }

    /// First marginal: `marginal_source()[n] = sum_m gamma[n, m]`.
    pub fn marginal_source(&self) -> Vec<f64> {
        let mut acc = vec![KahanSum::new(); self.n_source];
        for e in &self.entries {
            acc[e.source].add(e.mass);
        }
        acc.into_iter().map(|a| a.value()).collect()
    }

    /// Second marginal: `marginal_target()[m] = sum_n gamma[n, m]`.
    pub fn marginal_target(&self) -> Vec<f64> {
        let mut acc = vec![KahanSum::new(); self.n_target];
        for e in &self.entries {
            acc[e.target].add(e.mass);
        }
        acc.into_iter().map(|a| a.value()).collect()
    }

    /// Total coupled mass `|gamma|`.
    pub fn total_mass(&self) -> f64 {
        kahan_sum(self.entries.iter().map(|e| e.mass))
    }

    /// A plan is map-induced iff every source row has at most one stored
    /// entry: all mass at an atom goes to a single destination.
    pub fn is_map_induced(&self) -> bool {
        let mut seen = vec![false; self.n_source];
        for e in &self.entries {
            if seen[e.source] {
                return false;
            }
            seen[e.source] = true;
        }
        true
    }

    pub fn to_json_string(&self) -> Result<String> {
        let doc = PlanJson {
            n0: self.n_source,
            n1: self.n_target,
            entries: self.entries.iter().map(|e| (e.source, e.target, e.mass)).collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: PlanJson = serde_json::from_str(text)?;
        let entries = doc
            .entries
            .into_iter()
            .map(|(source, target, mass)| PlanEntry { source, target, mass })
            .collect();
        Self::new(doc.n0, doc.n1, entries)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }
}

/// Whether a partial-plan marginal stays under the endpoint weights, within
/// [`MASS_TOL`].
pub(crate) fn dominated(marginal: &[f64], weights: &[f64]) -> bool {
    marginal.iter().zip(weights).all(|(m, w)| *m <= *w + MASS_TOL)
}

/// Cost-functional parameters: the creation/destruction penalty and whether
/// it applies at all.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub lambda: f64,
    pub kind: CostKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    Balanced,
    Partial,
}

impl CostParams {
    pub fn balanced() -> Self {
        Self { lambda: 0.0, kind: CostKind::Balanced }
    }

    pub fn partial(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self { lambda, kind: CostKind::Partial })
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidParameter(format!("lambda {lambda} must be >= 0")));
    }
    Ok(())
}

/// Pure transport cost of a coupling: `sum ||x0_n - xj_m||^2 gamma[n, m]`.
pub fn plan_cost_ot(
    gamma: &TransportPlan,
    mu0: &DiscreteMeasure,
    muj: &DiscreteMeasure,
) -> Result<f64> {
    if gamma.n_source() != mu0.len() || gamma.n_target() != muj.len() {
        return Err(Error::InvalidPlan(format!(
            "plan shape {}x{} does not match measures {}x{}",
            gamma.n_source(),
            gamma.n_target(),
            mu0.len(),
            muj.len()
        )));
    }
    if mu0.dim() != muj.dim() {
        return Err(Error::InvalidMeasure(format!(
            "dimension mismatch: {} vs {}",
            mu0.dim(),
            muj.dim()
        )));
    }
    let mut acc = KahanSum::new();
    for e in gamma.entries() {
        acc.add(mu0.squared_distance(e.source, muj, e.target) * e.mass);
    }
    Ok(acc.value())
}

/// Partial transport cost: transport term plus the linear penalty
/// `lambda * (|mu0| + |muj| - 2|gamma|)` for destroyed and created mass.
///
/// The coupling must be dominated by both endpoint weight vectors within
/// [`MASS_TOL`].
pub fn plan_cost_opt(
    gamma: &TransportPlan,
    mu0: &DiscreteMeasure,
    muj: &DiscreteMeasure,
    lambda: f64,
) -> Result<f64> {
    check_lambda(lambda)?;
    let transport = plan_cost_ot(gamma, mu0, muj)?;
    if !dominated(&gamma.marginal_source(), mu0.weights()) {
        return Err(Error::InvalidPlan("first marginal exceeds source weights".into()));
    }
    if !dominated(&gamma.marginal_target(), muj.weights()) {
        return Err(Error::InvalidPlan("second marginal exceeds target weights".into()));
    }
    let penalty = mu0.total_mass() + muj.total_mass() - 2.0 * gamma.total_mass();
    Ok(transport + lambda * penalty)
}

/// Truncated squared norm of a displacement field:
/// `sum_n min(||v_n||^2, two_lambda) * weights[n]`.
///
/// `displacements` is row-major `N x dim`, aligned with `weights`.
pub fn truncated_norm_sq(
    displacements: &[f64],
    dim: usize,
    weights: &[f64],
    two_lambda: f64,
) -> f64 {
    assert!(dim >= 1, "dimension must be >= 1");
    assert_eq!(displacements.len(), weights.len() * dim, "field/weight shape mismatch");
    assert!(two_lambda >= 0.0, "truncation threshold must be >= 0");
    let mut acc = KahanSum::new();
    for (n, w) in weights.iter().enumerate() {
        let row = &displacements[n * dim..(n + 1) * dim];
        let norm_sq: f64 = row.iter().map(|x| x * x).sum();
        acc.add(norm_sq.min(two_lambda) * w);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn singleton(x: &[f64], w: f64) -> DiscreteMeasure {
        DiscreteMeasure::from_rows(&[x], &[w]).unwrap()
    }

    #[test]
    fn total_mass_examples() {
        let m = DiscreteMeasure::new(1, vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(m.total_mass(), 1.0);
        let z = DiscreteMeasure::new(1, vec![0.0], vec![0.0]).unwrap();
        assert_eq!(z.total_mass(), 0.0);
        let m3 = DiscreteMeasure::new(1, vec![0.0, 1.0, 2.0], vec![0.2, 0.3, 0.7]).unwrap();
        assert!((m3.total_mass() - 1.2).abs() < 1e-15);
    }

    #[test]
    fn measure_validation() {
        assert!(DiscreteMeasure::new(2, vec![0.0, 0.0], vec![-1.0]).is_err());
        assert!(DiscreteMeasure::new(2, vec![f64::NAN, 0.0], vec![1.0]).is_err());
        assert!(DiscreteMeasure::new(0, vec![], vec![]).is_err());
        assert!(DiscreteMeasure::new(2, vec![0.0], vec![1.0]).is_err());
        // Zero weights are allowed.
        assert!(DiscreteMeasure::new(2, vec![0.0, 0.0], vec![0.0]).is_ok());
    }

    #[test]
    fn plan_cost_ot_examples() {
        let a = singleton(&[0.0, 0.0], 1.0);
        let b = singleton(&[1.0, 0.0], 1.0);
        let plan = TransportPlan::new(
            1,
            1,
            vec![PlanEntry { source: 0, target: 0, mass: 1.0 }],
        )
        .unwrap();
        assert_eq!(plan_cost_ot(&plan, &a, &b).unwrap(), 1.0);

        let empty = TransportPlan::new(1, 1, vec![]).unwrap();
        assert_eq!(plan_cost_ot(&empty, &a, &b).unwrap(), 0.0);

        // {(0->0, 0.5), (1->1, 0.5)} with x0 = (0), (2) and xj = (1), (3).
        let m0 = DiscreteMeasure::new(1, vec![0.0, 2.0], vec![0.5, 0.5]).unwrap();
        let mj = DiscreteMeasure::new(1, vec![1.0, 3.0], vec![0.5, 0.5]).unwrap();
        let diag = TransportPlan::diagonal(&[0.5, 0.5]).unwrap();
        assert!((plan_cost_ot(&diag, &m0, &mj).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn plan_cost_ot_rejects_out_of_range() {
        let a = singleton(&[0.0], 1.0);
        let plan = TransportPlan::new(
            2,
            1,
            vec![PlanEntry { source: 1, target: 0, mass: 1.0 }],
        )
        .unwrap();
        assert!(plan_cost_ot(&plan, &a, &a).is_err());
    }

    #[test]
    fn plan_cost_opt_examples() {
        let a = singleton(&[0.0], 1.0);
        let b = singleton(&[2.0], 1.0);

        // Empty plan: all mass destroyed and created.
        let empty = TransportPlan::new(1, 1, vec![]).unwrap();
        assert_eq!(plan_cost_opt(&empty, &a, &b, 2.0).unwrap(), 4.0);

        // Full coupling of two identical singletons.
        let same = singleton(&[1.0], 1.0);
        let full = TransportPlan::diagonal(&[1.0]).unwrap();
        assert_eq!(plan_cost_opt(&full, &same, &same, 7.3).unwrap(), 0.0);

        // Singleton to singleton at squared distance 4, full mass, lambda 3.
        assert!((plan_cost_opt(&full, &a, &b, 3.0).unwrap() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn plan_cost_opt_rejects_domination_violation() {
        let a = singleton(&[0.0], 0.5);
        let b = singleton(&[1.0], 1.0);
        let plan = TransportPlan::diagonal(&[1.0]).unwrap();
        assert!(plan_cost_opt(&plan, &a, &b, 1.0).is_err());
    }

    #[test]
    fn truncated_norm_examples() {
        assert_eq!(truncated_norm_sq(&[0.0, 0.0], 2, &[1.0], 4.0), 0.0);
        // Single atom, ||v||^2 = 9, truncated at 4.
        assert_eq!(truncated_norm_sq(&[3.0], 1, &[1.0], 4.0), 4.0);
        // ||v1||^2 = 1, ||v2||^2 = 9, weights 0.5 each, threshold 4.
        let v = [1.0, 3.0];
        assert!((truncated_norm_sq(&v, 1, &[0.5, 0.5], 4.0) - 2.5).abs() < 1e-15);
        // Untruncated proxy recovers the plain weighted squared norm.
        assert!((truncated_norm_sq(&v, 1, &[0.5, 0.5], f64::INFINITY) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn plan_marginals_and_map_inducedness() {
        let plan = TransportPlan::new(
            2,
            2,
            vec![
                PlanEntry { source: 0, target: 0, mass: 0.25 },
                PlanEntry { source: 0, target: 1, mass: 0.25 },
                PlanEntry { source: 1, target: 1, mass: 0.5 },
            ],
        )
        .unwrap();
        assert_eq!(plan.marginal_source(), vec![0.5, 0.5]);
        assert_eq!(plan.marginal_target(), vec![0.25, 0.75]);
        assert!((plan.total_mass() - 1.0).abs() < 1e-15);
        assert!(!plan.is_map_induced());
        assert!(TransportPlan::diagonal(&[0.5, 0.5]).unwrap().is_map_induced());
    }

    #[test]
    fn plan_json_round_trip() {
        let plan = TransportPlan::new(
            2,
            3,
            vec![
                PlanEntry { source: 0, target: 2, mass: 0.5 },
                PlanEntry { source: 1, target: 0, mass: 0.25 },
            ],
        )
        .unwrap();
        let text = plan.to_json_string().unwrap();
        assert!(text.contains("\"n0\":2"));
        assert!(text.contains("\"n1\":3"));
        let back = TransportPlan::from_json_str(&text).unwrap();
        assert_eq!(plan, back);
    }

    #[test]
    fn csv_round_trip() {
        let m = DiscreteMeasure::new(
            2,
            vec![0.0, 1.5, -2.25, 3.0, 0.1, 0.2],
            vec![0.5, 0.25, 0.0],
        )
        .unwrap();
        let text = m.to_csv_string();
        assert!(text.starts_with("x0,x1,w\n"));
        let back = DiscreteMeasure::from_csv_str(&text).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn csv_rejects_bad_header() {
        assert!(DiscreteMeasure::from_csv_str("a,b\n1,2\n").is_err());
        assert!(DiscreteMeasure::from_csv_str("x0,x1\n1,2\n").is_err());
    }

    #[test]
    fn cost_params_validation() {
        assert!(CostParams::partial(-1.0).is_err());
        assert!(CostParams::partial(0.0).is_ok());
    }
}
