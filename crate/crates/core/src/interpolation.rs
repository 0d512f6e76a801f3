//! The four interpolation curves between measures.
//!
//! Two of them re-solve a transport problem per pair (`ot_geodesic`,
//! `opt_interpolate`) and two are pure arithmetic on precomputed embeddings
//! (`lot_geodesic`, `lopt_interpolate`). That contrast is deliberate: once a
//! family of measures is embedded against a shared reference, any curve
//! between any pair is solver-free.
//!
//! Fading atoms whose weight reaches exactly zero at a boundary are emitted
//! with weight zero rather than dropped, so the atom count of a curve is
//! constant in `t`; that keeps per-frame outputs diffable.

use serde::{Deserialize, Serialize};

use crate::embeddings::{LoptEmbedding, LotEmbedding, ReferenceId};
use crate::error::{Error, Result};
use crate::measures::{check_lambda, DiscreteMeasure};
use crate::projections::{opt_barycentric_projection, ot_barycentric_projection};
use crate::solver_opt::solve_opt;
use crate::solver_ot::solve_ot;

/// Which curve to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolationMode {
    OtGeodesic,
    LotGeodesic,
    OptInterp,
    LoptInterp,
}

impl InterpolationMode {
    pub fn needs_lambda(self) -> bool {
        matches!(self, InterpolationMode::OptInterp | InterpolationMode::LoptInterp)
    }

    pub fn needs_reference(self) -> bool {
        matches!(self, InterpolationMode::LotGeodesic | InterpolationMode::LoptInterp)
    }
}

impl std::fmt::Display for InterpolationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            InterpolationMode::OtGeodesic => "ot_geodesic",
            InterpolationMode::LotGeodesic => "lot_geodesic",
            InterpolationMode::OptInterp => "opt_interp",
            InterpolationMode::LoptInterp => "lopt_interp",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for InterpolationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ot_geodesic" | "ot" => Ok(InterpolationMode::OtGeodesic),
            "lot_geodesic" | "lot" => Ok(InterpolationMode::LotGeodesic),
            "opt_interp" | "opt" => Ok(InterpolationMode::OptInterp),
            "lopt_interp" | "lopt" => Ok(InterpolationMode::LoptInterp),
            other => Err(Error::InvalidParameter(format!("unknown interpolation mode `{other}`"))),
        }
    }
}

/// One point on a curve: the mode, the time, and (for partial modes) the
/// penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationRequest {
    pub mode: InterpolationMode,
    pub t: f64,
    pub lambda: Option<f64>,
}

impl InterpolationRequest {
    pub fn validate(&self) -> Result<()> {
        check_t(self.t)?;
        match (self.mode.needs_lambda(), self.lambda) {
            (true, None) => {
                Err(Error::InvalidParameter(format!("mode {} requires lambda", self.mode)))
            }
            (true, Some(l)) => check_lambda(l),
            (false, _) => Ok(()),
        }
    }
}

fn check_t(t: f64) -> Result<()> {
    if !t.is_finite() || !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!("t = {t} must lie in [0, 1]")));
    }
    Ok(())
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    (1.0 - t) * a + t * b
}

/// Balanced displacement interpolation: solve the transport problem, replace
/// the target by its barycentric projection, and move every atom in a
/// straight line with constant weight.
pub fn ot_geodesic(mui: &DiscreteMeasure, muj: &DiscreteMeasure, t: f64) -> Result<DiscreteMeasure> {
    check_t(t)?;
    let sol = solve_ot(mui, muj)?;
    let proj = ot_barycentric_projection(mui, muj, &sol.plan)?;
    let d = mui.dim();
    let mut points = Vec::with_capacity(mui.len() * d);
    for n in 0..mui.len() {
        let a = mui.point(n);
        let b = proj.measure.point(n);
        for k in 0..d {
            points.push(lerp(a[k], b[k], t));
        }
    }
    DiscreteMeasure::new(d, points, mui.weights().to_vec())
}

/// Geodesic in the embedding space, pushed back to a measure: atoms at
/// `x0_n + (1 - t) u^i_n + t u^j_n` with the reference weights.
pub fn lot_geodesic(
    a: &LotEmbedding,
    b: &LotEmbedding,
    reference: &DiscreteMeasure,
    t: f64,
) -> Result<DiscreteMeasure> {
    check_t(t)?;
    if a.reference_id() != b.reference_id() || *a.reference_id() != ReferenceId::of(reference) {
        return Err(Error::ReferenceMismatch(
            "geodesic endpoints must share the supplied reference".into(),
        ));
    }
    let d = reference.dim();
    let mut points = Vec::with_capacity(reference.len() * d);
    for n in 0..reference.len() {
        let x0 = reference.point(n);
        let (ua, ub) = (a.displacement(n), b.displacement(n));
        for k in 0..d {
            points.push(x0[k] + lerp(ua[k], ub[k], t));
        }
    }
    DiscreteMeasure::new(d, points, reference.weights().to_vec())
}

/// Partial-transport interpolant: the transported part moves in a straight
/// line at constant weight while the untransported source mass fades out in
/// place. Solves the partial problem internally, pivoting on `mui`; the
/// target mass the projection discards is not re-created along the curve.
///
/// Output layout: `N_i` moving atoms followed by `N_i` fading atoms.
pub fn opt_interpolate(
    mui: &DiscreteMeasure,
    muj: &DiscreteMeasure,
    lambda: f64,
    t: f64,
) -> Result<DiscreteMeasure> {
    check_lambda(lambda)?;
    check_t(t)?;
    let sol = solve_opt(mui, muj, lambda)?;
    let proj = opt_barycentric_projection(mui, muj, &sol.plan)?;
    let p_hat = proj.measure.weights();
    let d = mui.dim();
    let n = mui.len();
    let mut points = Vec::with_capacity(2 * n * d);
    let mut weights = Vec::with_capacity(2 * n);
    for i in 0..n {
        let a = mui.point(i);
        let b = proj.measure.point(i);
        for k in 0..d {
            points.push(lerp(a[k], b[k], t));
        }
        weights.push(p_hat[i]);
    }
    for i in 0..n {
        points.extend_from_slice(mui.point(i));
        weights.push((1.0 - t) * (mui.weight(i) - p_hat[i]).max(0.0));
    }
    DiscreteMeasure::new(d, points, weights)
}

/// Embedded partial interpolant, solver-free. With `p = p^i ^ p^j`
/// (elementwise minimum of the transported-mass weights) and
/// `u_t = (1 - t) u^i + t u^j`:
///
/// - indices with `p_k > 0` transport: atom `x0_k + u_t(k)`, weight `p_k`;
/// - indices with `p^i_k > p_k` destroy: atom `x0_k + u^i_k`, weight
///   `(1 - t)(p^i_k - p_k)`;
/// - indices with `p^j_k > p_k` create: atom `x0_k + u^j_k`, weight
///   `t (p^j_k - p_k)`.
///
/// Output layout: transport block, then destroy block, then create block;
/// block membership does not depend on `t`.
pub fn lopt_interpolate(
    a: &LoptEmbedding,
    b: &LoptEmbedding,
    reference: &DiscreteMeasure,
    t: f64,
) -> Result<DiscreteMeasure> {
    check_t(t)?;
    if a.reference_id() != b.reference_id() || *a.reference_id() != ReferenceId::of(reference) {
        return Err(Error::ReferenceMismatch(
            "interpolation endpoints must share the supplied reference".into(),
        ));
    }
    if a.lambda() != b.lambda() {
        return Err(Error::ReferenceMismatch(format!(
            "interpolation endpoints built with different lambda ({} vs {})",
            a.lambda(),
            b.lambda()
        )));
    }
    let d = reference.dim();
    let n = reference.len();
    let (pi, pj) = (a.p_hat(), b.p_hat());
    let mut points = Vec::new();
    let mut weights = Vec::new();
    // Transport block.
    for k in 0..n {
        let p_min = pi[k].min(pj[k]);
        if p_min > 0.0 {
            let x0 = reference.point(k);
            let (ua, ub) = (a.displacement(k), b.displacement(k));
            for c in 0..d {
                points.push(x0[c] + lerp(ua[c], ub[c], t));
            }
            weights.push(p_min);
        }
    }
    // Destroy block: excess of the first endpoint fades out where it sits.
    for k in 0..n {
        let p_min = pi[k].min(pj[k]);
        if pi[k] > p_min {
            let x0 = reference.point(k);
            let ua = a.displacement(k);
            for c in 0..d {
                points.push(x0[c] + ua[c]);
            }
            weights.push((1.0 - t) * (pi[k] - p_min));
        }
    }
    // Create block: excess of the second endpoint fades in.
    for k in 0..n {
        let p_min = pi[k].min(pj[k]);
        if pj[k] > p_min {
            let x0 = reference.point(k);
            let ub = b.displacement(k);
            for c in 0..d {
                points.push(x0[c] + ub[c]);
            }
            weights.push(t * (pj[k] - p_min));
        }
    }
    if weights.is_empty() {
        // Both embeddings transported nothing; the curve is a single null
        // atom at the first reference position.
        points.extend_from_slice(reference.point(0));
        weights.push(0.0);
    }
    DiscreteMeasure::new(d, points, weights)
}
