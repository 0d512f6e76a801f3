//! Displacement-field embeddings of measures with respect to a fixed
//! reference, and the discrepancies computed on them.
//!
//! Embedding a target solves one transport problem against the reference and
//! stores the barycentric displacement field over the reference support.
//! After that, comparing two embedded measures is plain arithmetic in
//! `R^{N0 x d}`; no further solves. That asymmetry (one solve per measure
//! instead of one per pair) is the entire point of the construction.
//!
//! Every embedding carries an opaque identity token of its reference, and the
//! partial variant also pins the penalty `lambda` it was built with. Mixing
//! embeddings across references or penalties is rejected rather than silently
//! misaligned: every formula below assumes shared indexing over the reference
//! support and a shared truncation threshold.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::accum::KahanSum;
use crate::error::{Error, Result};
use crate::measures::{check_lambda, DiscreteMeasure, MASS_TOL};
use crate::projections::{opt_barycentric_projection, ot_barycentric_projection};
use crate::solver_opt::solve_opt;
use crate::solver_ot::solve_ot;

/// Content hash of a reference measure; embeddings built against different
/// references never compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceId(String);

impl ReferenceId {
    pub fn of(measure: &DiscreteMeasure) -> Self {
        let mut h = Sha256::new();
        h.update((measure.dim() as u64).to_le_bytes());
        h.update((measure.len() as u64).to_le_bytes());
        for x in measure.points_flat() {
            h.update(x.to_le_bytes());
        }
        for w in measure.weights() {
            h.update(w.to_le_bytes());
        }
        ReferenceId(hex_string(&h.finalize()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

impl std::fmt::Display for ReferenceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Balanced embedding: the displacement field `u_n = x_hat_n - x0_n` of the
/// barycentric projection, one row per reference atom.
#[derive(Debug, Clone, PartialEq)]
pub struct LotEmbedding {
    dim: usize,
    u: Vec<f64>, // row-major N0 x dim
    reference_id: ReferenceId,
}

/// Partial embedding: displacement field plus the transported-mass weights
/// `p_hat` (row sums of the optimal partial plan) and the projection deficit
/// `|muj| - |projected|`. Atoms with `p_hat_n = 0` have `u_n = 0` by
/// construction: the projection parks them at the reference position.
#[derive(Debug, Clone, PartialEq)]
pub struct LoptEmbedding {
    dim: usize,
    u: Vec<f64>,
    p_hat: Vec<f64>,
    deficit: f64,
    lambda: f64,
    reference_id: ReferenceId,
}

impl LotEmbedding {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.u.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major `N0 x d` displacement matrix.
    pub fn displacements(&self) -> &[f64] {
        &self.u
    }

    pub fn displacement(&self, n: usize) -> &[f64] {
        &self.u[n * self.dim..(n + 1) * self.dim]
    }

    pub fn reference_id(&self) -> &ReferenceId {
        &self.reference_id
    }

    pub fn to_json_string(&self) -> Result<String> {
        let doc = LotJson {
            reference_hash: self.reference_id.as_str().to_string(),
            u: rows_of(&self.u, self.dim),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: LotJson = serde_json::from_str(text)?;
        let (u, dim) = flat_of(&doc.u)?;
        Ok(Self { dim, u, reference_id: ReferenceId(doc.reference_hash) })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }
}

impl LoptEmbedding {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.p_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn displacements(&self) -> &[f64] {
        &self.u
    }

    pub fn displacement(&self, n: usize) -> &[f64] {
        &self.u[n * self.dim..(n + 1) * self.dim]
    }

    /// Transported mass per reference atom; dominated by the reference
    /// weights.
    pub fn p_hat(&self) -> &[f64] {
        &self.p_hat
    }

    /// Target mass unaccounted for by the projection.
    pub fn deficit(&self) -> f64 {
        self.deficit
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn reference_id(&self) -> &ReferenceId {
        &self.reference_id
    }

    pub fn to_json_string(&self) -> Result<String> {
        let doc = LoptJson {
            reference_hash: self.reference_id.as_str().to_string(),
            lambda: self.lambda,
            u: rows_of(&self.u, self.dim),
            p_hat: self.p_hat.clone(),
            deficit: self.deficit,
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: LoptJson = serde_json::from_str(text)?;
        let (u, dim) = flat_of(&doc.u)?;
        if doc.p_hat.len() * dim != u.len() {
            return Err(Error::Parse("p_hat length does not match displacement rows".into()));
        }
        check_lambda(doc.lambda)?;
        Ok(Self {
            dim,
            u,
            p_hat: doc.p_hat,
            deficit: doc.deficit,
            lambda: doc.lambda,
            reference_id: ReferenceId(doc.reference_hash),
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct LotJson {
    reference_hash: String,
    u: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct LoptJson {
    reference_hash: String,
    lambda: f64,
    u: Vec<Vec<f64>>,
    p_hat: Vec<f64>,
    deficit: f64,
}

fn rows_of(flat: &[f64], dim: usize) -> Vec<Vec<f64>> {
    flat.chunks(dim).map(|r| r.to_vec()).collect()
}

fn flat_of(rows: &[Vec<f64>]) -> Result<(Vec<f64>, usize)> {
    if rows.is_empty() {
        return Err(Error::Parse("embedding has no displacement rows".into()));
    }
    let dim = rows[0].len();
    if dim == 0 || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Parse("ragged displacement rows".into()));
    }
    let mut flat = Vec::with_capacity(rows.len() * dim);
    for r in rows {
        flat.extend_from_slice(r);
    }
    Ok((flat, dim))
}

fn displacement_field(
    reference: &DiscreteMeasure,
    projected: &DiscreteMeasure,
) -> Vec<f64> {
    let d = reference.dim();
    let mut u = Vec::with_capacity(reference.len() * d);
    for n in 0..reference.len() {
        let x0 = reference.point(n);
        let xh = projected.point(n);
        for k in 0..d {
            u.push(xh[k] - x0[k]);
        }
    }
    u
}

/// Embeds `target` against `reference`: solves the balanced problem, projects
/// barycentrically, and returns the displacement rows.
pub fn lot_embed(reference: &DiscreteMeasure, target: &DiscreteMeasure) -> Result<LotEmbedding> {
    let sol = solve_ot(reference, target)?;
    let proj = ot_barycentric_projection(reference, target, &sol.plan)?;
    Ok(LotEmbedding {
        dim: reference.dim(),
        u: displacement_field(reference, &proj.measure),
        reference_id: ReferenceId::of(reference),
    })
}

/// Embeds `target` against `reference` in the partial setting: solves
/// `OPT_lambda`, projects, and returns displacements, transported-mass
/// weights, and the projection deficit.
pub fn lopt_embed(
    reference: &DiscreteMeasure,
    target: &DiscreteMeasure,
    lambda: f64,
) -> Result<LoptEmbedding> {
    check_lambda(lambda)?;
    let sol = solve_opt(reference, target, lambda)?;
    let proj = opt_barycentric_projection(reference, target, &sol.plan)?;
    let mut u = displacement_field(reference, &proj.measure);
    let p_hat = proj.measure.weights().to_vec();
    // Empty atoms sit exactly at the reference position; keep their rows
    // bit-exact zero.
    for (n, p) in p_hat.iter().enumerate() {
        if *p == 0.0 {
            for k in 0..reference.dim() {
                u[n * reference.dim() + k] = 0.0;
            }
        }
    }
    Ok(LoptEmbedding {
        dim: reference.dim(),
        u,
        p_hat,
        deficit: proj.deficit,
        lambda,
        reference_id: ReferenceId::of(reference),
    })
}

fn check_same_reference(a: &ReferenceId, b: &ReferenceId) -> Result<()> {
    if a != b {
        return Err(Error::ReferenceMismatch(format!(
            "embeddings built against different references ({} vs {})",
            &a.as_str()[..12],
            &b.as_str()[..12]
        )));
    }
    Ok(())
}

fn check_reference_measure(id: &ReferenceId, reference: &DiscreteMeasure) -> Result<()> {
    let actual = ReferenceId::of(reference);
    if *id != actual {
        return Err(Error::ReferenceMismatch(
            "supplied reference measure is not the one the embeddings were built against".into(),
        ));
    }
    Ok(())
}

/// Squared embedding-space distance: `sum_n ||u^i_n - u^j_n||^2 p0_n`.
///
/// Its square root is a true metric on the embedding space, though the
/// induced quantity on measures is only a discrepancy.
pub fn lot_discrepancy(
    a: &LotEmbedding,
    b: &LotEmbedding,
    reference: &DiscreteMeasure,
) -> Result<f64> {
    check_same_reference(&a.reference_id, &b.reference_id)?;
    check_reference_measure(&a.reference_id, reference)?;
    if a.len() != reference.len() || b.len() != reference.len() || a.dim != b.dim {
        return Err(Error::ReferenceMismatch("embedding shape mismatch".into()));
    }
    let mut acc = KahanSum::new();
    for n in 0..a.len() {
        let (ua, ub) = (a.displacement(n), b.displacement(n));
        let mut d2 = 0.0;
        for k in 0..a.dim {
            let d = ua[k] - ub[k];
            d2 += d * d;
        }
        acc.add(d2 * reference.weight(n));
    }
    Ok(acc.value())
}

/// Partial-transport discrepancy between two embedded measures:
///
/// ```text
/// ||u^i - u^j||^2_{p^i ^ p^j, 2 lambda}        (truncated transport term)
///   + lambda * |p^i - p^j|_1                   (mass mismatch on the support)
///   + lambda * (deficit_i + deficit_j)         (only when include_deficit)
/// ```
///
/// where `p^i ^ p^j` is the elementwise minimum on the shared reference
/// indexing. The deficit correction restores the mass lost by the two
/// projections; switch it on when the value is meant to approximate the exact
/// partial-transport cost between the original measures, leave it off (the
/// default elsewhere in the crate) when comparing embeddings as such.
pub fn lopt_discrepancy(
    a: &LoptEmbedding,
    b: &LoptEmbedding,
    reference: &DiscreteMeasure,
    include_deficit: bool,
) -> Result<f64> {
    check_same_reference(&a.reference_id, &b.reference_id)?;
    check_reference_measure(&a.reference_id, reference)?;
    if a.len() != reference.len() || b.len() != reference.len() || a.dim != b.dim {
        return Err(Error::ReferenceMismatch("embedding shape mismatch".into()));
    }
    if a.lambda != b.lambda {
        return Err(Error::ReferenceMismatch(format!(
            "embeddings built with different lambda ({} vs {})",
            a.lambda, b.lambda
        )));
    }
    let two_lambda = 2.0 * a.lambda;
    let mut transport = KahanSum::new();
    let mut mass_gap = KahanSum::new();
    for n in 0..a.len() {
        let (ua, ub) = (a.displacement(n), b.displacement(n));
        let mut d2 = 0.0;
        for k in 0..a.dim {
            let d = ua[k] - ub[k];
            d2 += d * d;
        }
        transport.add(d2.min(two_lambda) * a.p_hat[n].min(b.p_hat[n]));
        mass_gap.add((a.p_hat[n] - b.p_hat[n]).abs());
    }
    let mut value = transport.value() + a.lambda * mass_gap.value();
    if include_deficit {
        value += a.lambda * (a.deficit + b.deficit);
    }
    Ok(value)
}

/// Verifies the structural invariants the reference's own embedding must
/// satisfy: null displacements, full transported mass, zero deficit.
pub fn is_reference_self_embedding(e: &LoptEmbedding, reference: &DiscreteMeasure) -> bool {
    e.reference_id == ReferenceId::of(reference)
        && e.u.iter().all(|x| x.abs() <= 1e-9)
        && e.p_hat
            .iter()
            .zip(reference.weights())
            .all(|(p, w)| (p - w).abs() <= MASS_TOL)
        && e.deficit.abs() <= MASS_TOL
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::truncated_norm_sq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_cloud(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DiscreteMeasure {
        let pts: Vec<f64> = (0..2 * n).map(|_| rng.gen::<f64>() * scale).collect();
        DiscreteMeasure::new(2, pts, vec![1.0 / n as f64; n]).unwrap()
    }

    #[test]
    fn embedding_the_reference_is_null() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = uniform_cloud(&mut rng, 6, 1.0);
        let lot = lot_embed(&r, &r).unwrap();
        assert!(lot.displacements().iter().all(|x| x.abs() < 1e-9));
        let lopt = lopt_embed(&r, &r, 2.0).unwrap();
        assert!(is_reference_self_embedding(&lopt, &r));
    }

    #[test]
    fn forced_singleton_displacement() {
        let r = DiscreteMeasure::new(2, vec![0.0, 0.0], vec![1.0]).unwrap();
        let t = DiscreteMeasure::new(2, vec![3.0, -4.0], vec![1.0]).unwrap();
        let e = lot_embed(&r, &t).unwrap();
        assert_eq!(e.displacement(0), &[3.0, -4.0]);
    }

    #[test]
    fn lot_norm_matches_projected_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = uniform_cloud(&mut rng, 5, 1.0);
        let t = uniform_cloud(&mut rng, 7, 1.0);
        let e = lot_embed(&r, &t).unwrap();
        let norm = truncated_norm_sq(e.displacements(), 2, r.weights(), f64::INFINITY);
        let sol = solve_ot(&r, &t).unwrap();
        let proj = ot_barycentric_projection(&r, &t, &sol.plan).unwrap();
        let re_solved = solve_ot(&r, &proj.measure).unwrap();
        assert!((norm - re_solved.cost).abs() <= 1e-8, "{norm} vs {}", re_solved.cost);
    }

    #[test]
    fn target_out_of_reach_is_never_transported() {
        let r = DiscreteMeasure::new(2, vec![0.0, 0.0], vec![1.0]).unwrap();
        let t = DiscreteMeasure::new(2, vec![100.0, 100.0], vec![0.7]).unwrap();
        let e = lopt_embed(&r, &t, 1.0).unwrap(); // sqrt(2 lambda) ~ 1.41 reach
        assert_eq!(e.p_hat(), &[0.0]);
        assert_eq!(e.displacement(0), &[0.0, 0.0]);
        assert!((e.deficit() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn discrepancy_of_identical_embeddings() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = uniform_cloud(&mut rng, 5, 1.0);
        let t = uniform_cloud(&mut rng, 5, 1.0);
        let e = lopt_embed(&r, &t, 0.4).unwrap();
        assert_eq!(lopt_discrepancy(&e, &e, &r, false).unwrap(), 0.0);
        let with_deficit = lopt_discrepancy(&e, &e, &r, true).unwrap();
        assert!((with_deficit - 2.0 * 0.4 * e.deficit()).abs() < 1e-12);
    }

    #[test]
    fn discrepancy_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let r = uniform_cloud(&mut rng, 6, 1.0);
        let s = uniform_cloud(&mut rng, 4, 1.0);
        let t = uniform_cloud(&mut rng, 8, 1.0);
        let ea = lopt_embed(&r, &s, 0.6).unwrap();
        let eb = lopt_embed(&r, &t, 0.6).unwrap();
        for deficit in [false, true] {
            let ab = lopt_discrepancy(&ea, &eb, &r, deficit).unwrap();
            let ba = lopt_discrepancy(&eb, &ea, &r, deficit).unwrap();
            assert_eq!(ab, ba);
        }
        let la = lot_embed(&r, &s.scaled_to_total(1.0).unwrap()).unwrap();
        let lb = lot_embed(&r, &t.scaled_to_total(1.0).unwrap()).unwrap();
        assert_eq!(
            lot_discrepancy(&la, &lb, &r).unwrap(),
            lot_discrepancy(&lb, &la, &r).unwrap()
        );
    }

    #[test]
    fn two_singleton_discrepancy_arithmetic() {
        // u^i = (1, 0), u^j = (0, 1), weight 1: squared distance 2.
        let r = DiscreteMeasure::new(2, vec![0.0, 0.0], vec![1.0]).unwrap();
        let ti = DiscreteMeasure::new(2, vec![1.0, 0.0], vec![1.0]).unwrap();
        let tj = DiscreteMeasure::new(2, vec![0.0, 1.0], vec![1.0]).unwrap();
        let ei = lot_embed(&r, &ti).unwrap();
        let ej = lot_embed(&r, &tj).unwrap();
        assert!((lot_discrepancy(&ei, &ej, &r).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn mismatched_references_or_lambdas_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let r1 = uniform_cloud(&mut rng, 4, 1.0);
        let r2 = uniform_cloud(&mut rng, 4, 1.0);
        let t = uniform_cloud(&mut rng, 4, 1.0);
        let e1 = lopt_embed(&r1, &t, 1.0).unwrap();
        let e2 = lopt_embed(&r2, &t, 1.0).unwrap();
        assert!(matches!(
            lopt_discrepancy(&e1, &e2, &r1, false),
            Err(Error::ReferenceMismatch(_))
        ));
        let e3 = lopt_embed(&r1, &t, 2.0).unwrap();
        assert!(matches!(
            lopt_discrepancy(&e1, &e3, &r1, false),
            Err(Error::ReferenceMismatch(_))
        ));
        // Wrong reference measure handed to the discrepancy.
        let e4 = lopt_embed(&r1, &t, 1.0).unwrap();
        assert!(lopt_discrepancy(&e1, &e4, &r2, false).is_err());
    }

    #[test]
    fn deficit_decomposition_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let r = uniform_cloud(&mut rng, 5, 2.0);
        let s = uniform_cloud(&mut rng, 6, 2.0);
        let t = uniform_cloud(&mut rng, 7, 2.0);
        let lambda = 0.3;
        let ea = lopt_embed(&r, &s, lambda).unwrap();
        let eb = lopt_embed(&r, &t, lambda).unwrap();
        let off = lopt_discrepancy(&ea, &eb, &r, false).unwrap();
        let on = lopt_discrepancy(&ea, &eb, &r, true).unwrap();
        assert!((on - off - lambda * (ea.deficit() + eb.deficit())).abs() < 1e-12);
    }

    #[test]
    fn json_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let r = uniform_cloud(&mut rng, 4, 1.0);
        let t = uniform_cloud(&mut rng, 5, 1.0);
        let e = lopt_embed(&r, &t, 0.9).unwrap();
        let text = e.to_json_string().unwrap();
        assert!(text.contains("\"reference_hash\""));
        assert!(text.contains("\"p_hat\""));
        let back = LoptEmbedding::from_json_str(&text).unwrap();
        assert_eq!(e, back);

        let l = lot_embed(&r, &t.scaled_to_total(1.0).unwrap()).unwrap();
        let back = LotEmbedding::from_json_str(&l.to_json_string().unwrap()).unwrap();
        assert_eq!(l, back);
    }
}
