//! Barycentric projections of a target measure onto a reference support.
//!
//! Given a coupling, each reference atom is replaced by the mass-weighted
//! average of its destinations. The balanced projection keeps the reference
//! weights; the partial projection keeps the coupling's row sums and parks
//! empty atoms at the reference positions so index alignment survives.
//! Projections take the plan explicitly rather than re-solving: the projected
//! measure is determined by the plan, and callers (and tests) must control
//! which optimum is used.

use crate::accum::KahanSum;
use crate::error::{Error, Result};
use crate::measures::{dominated, DiscreteMeasure, TransportPlan, MASS_TOL};

/// A target measure re-expressed over the reference support, atom-for-atom
/// aligned with it. `deficit` is the target mass the coupling never moved,
/// `|muj| - |projected|`; it is zero for balanced projections.
#[derive(Debug, Clone)]
pub struct ProjectedMeasure {
    pub measure: DiscreteMeasure,
    pub deficit: f64,
}

fn check_shapes(
    mu0: &DiscreteMeasure,
    muj: &DiscreteMeasure,
    gamma: &TransportPlan,
) -> Result<()> {
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
    Ok(())
}

/// Accumulates `sum_m gamma[n, m] * x^j_m` per reference atom, compensated.
fn weighted_destinations(
    mu0: &DiscreteMeasure,
    muj: &DiscreteMeasure,
    gamma: &TransportPlan,
) -> Vec<KahanSum> {
    let d = mu0.dim();
    let mut acc = vec![KahanSum::new(); mu0.len() * d];
    for e in gamma.entries() {
        let x = muj.point(e.target);
        for k in 0..d {
            acc[e.source * d + k].add(e.mass * x[k]);
        }
    }
    acc
}

/// Balanced barycentric projection: atom `n` moves to
/// `(1 / p0_n) sum_m gamma[n, m] x^j_m`, keeping weight `p0_n`.
///
/// Requires a balanced plan (both marginals match the endpoint weights within
/// tolerance) and strictly positive reference weights; the average is
/// undefined on a weightless atom.
pub fn ot_barycentric_projection(
    mu0: &DiscreteMeasure,
    muj: &DiscreteMeasure,
    gamma: &TransportPlan,
) -> Result<ProjectedMeasure> {
    check_shapes(mu0, muj, gamma)?;
    if let Some(n) = mu0.weights().iter().position(|w| *w <= 0.0) {
        return Err(Error::InvalidMeasure(format!(
            "reference atom {n} has zero weight; balanced projection is undefined there"
        )));
    }
    let marginal0 = gamma.marginal_source();
    for (n, (g, w)) in marginal0.iter().zip(mu0.weights()).enumerate() {
        if (g - w).abs() > MASS_TOL {
            return Err(Error::InvalidPlan(format!(
                "plan is not balanced at reference atom {n}: marginal {g} vs weight {w}"
            )));
        }
    }
    let marginal1 = gamma.marginal_target();
    for (m, (g, w)) in marginal1.iter().zip(muj.weights()).enumerate() {
        if (g - w).abs() > MASS_TOL {
            return Err(Error::InvalidPlan(format!(
                "plan is not balanced at target atom {m}: marginal {g} vs weight {w}"
            )));
        }
    }

    let d = mu0.dim();
    let acc = weighted_destinations(mu0, muj, gamma);
    let mut points = Vec::with_capacity(mu0.len() * d);
    for n in 0..mu0.len() {
        let inv = 1.0 / mu0.weight(n);
        for k in 0..d {
            points.push(acc[n * d + k].value() * inv);
        }
    }
    let measure = DiscreteMeasure::new(d, points, mu0.weights().to_vec())?;
    Ok(ProjectedMeasure { measure, deficit: 0.0 })
}

/// Partial barycentric projection: atom `n` gets weight
/// `p_hat_n = sum_m gamma[n, m]` and moves to the mass-weighted average
/// destination when `p_hat_n > 0`, staying at the reference position
/// otherwise. The deficit is the target mass the plan never coupled.
pub fn opt_barycentric_projection(
    mu0: &DiscreteMeasure,
    muj: &DiscreteMeasure,
    gamma: &TransportPlan,
) -> Result<ProjectedMeasure> {
    check_shapes(mu0, muj, gamma)?;
    let p_hat = gamma.marginal_source();
    if !dominated(&p_hat, mu0.weights()) {
        return Err(Error::InvalidPlan("first marginal exceeds reference weights".into()));
    }
    if !dominated(&gamma.marginal_target(), muj.weights()) {
        return Err(Error::InvalidPlan("second marginal exceeds target weights".into()));
    }

    let d = mu0.dim();
    let acc = weighted_destinations(mu0, muj, gamma);
    let mut points = Vec::with_capacity(mu0.len() * d);
    for n in 0..mu0.len() {
        if p_hat[n] > 0.0 {
            let inv = 1.0 / p_hat[n];
            for k in 0..d {
                points.push(acc[n * d + k].value() * inv);
            }
        } else {
            points.extend_from_slice(mu0.point(n));
        }
    }
    let weights: Vec<f64> = p_hat.iter().map(|w| w.max(0.0)).collect();
    let measure = DiscreteMeasure::new(d, points, weights)?;
    let deficit = muj.total_mass() - gamma.total_mass();
    Ok(ProjectedMeasure { measure, deficit })
}
