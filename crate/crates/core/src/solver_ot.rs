//! Exact balanced optimal transport between discrete measures, plus a
//! brute-force oracle for tests.
//!
//! The solver quantizes weights to integer units and runs an exact min-cost
//! flow, so the returned plan is a true LP optimum: the identities proved
//! about exact optimizers (projection optimality, geodesic constant speed)
//! hold to rounding precision, which approximate solvers would break.

use crate::error::{Error, Result};
use crate::flow::min_cost_transport;
use crate::measures::{plan_cost_ot, DiscreteMeasure, PlanEntry, TransportPlan, MASS_TOL};

/// Weights are quantized to units of `1e-12` mass. One unit stays far below
/// the `1e-9` marginal tolerance, so per-atom rounding never makes a solver
/// plan violate its own marginal invariants. Total masses up to ~1e6 fit in
/// `i64` at this scale.
pub(crate) const QUANT_SCALE: f64 = 1e12;
pub(crate) const QUANT_UNIT: f64 = 1e-12;

/// Masses below this are quantization residue and are dropped from restricted
/// plans.
pub(crate) const MIN_ENTRY_MASS: f64 = 1e-12;

/// Beyond this total mass the unit grid would overflow `i64`.
pub(crate) const MAX_TOTAL_MASS: f64 = 1e6;

pub(crate) fn check_quantizable(total: f64) -> Result<()> {
    if total > MAX_TOTAL_MASS {
        return Err(Error::InvalidMeasure(format!(
            "total mass {total} exceeds the exact-quantization limit {MAX_TOTAL_MASS}"
        )));
    }
    Ok(())
}

/// A balanced coupling achieving the optimal transport cost.
#[derive(Debug, Clone)]
pub struct OtSolution {
    pub plan: TransportPlan,
    pub cost: f64,
}

/// Largest-remainder quantization: integer unit counts summing exactly to
/// `target_units`, each within about one unit of `w * QUANT_SCALE`.
pub(crate) fn quantize_to_units(weights: &[f64], target_units: i64) -> Vec<i64> {
    let n = weights.len();
    let mut units: Vec<i64> = Vec::with_capacity(n);
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut base_sum: i64 = 0;
    for (i, w) in weights.iter().enumerate() {
        let scaled = w * QUANT_SCALE;
        let base = scaled.floor() as i64;
        units.push(base);
        base_sum += base;
        remainders.push((scaled - base as f64, i));
    }
    let mut deficit = target_units - base_sum;
    if deficit > 0 {
        // Hand out one unit at a time, largest fractional part first.
        remainders.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let per_atom = deficit / n as i64;
        deficit -= per_atom * n as i64;
        if per_atom > 0 {
            for u in units.iter_mut() {
                *u += per_atom;
            }
        }
        for &(_, i) in remainders.iter().take(deficit as usize) {
            units[i] += 1;
        }
    } else if deficit < 0 {
        // Rounding dust can overshoot by a unit or two; take back from the
        // smallest fractional parts that still have mass.
        remainders.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut to_remove = -deficit;
        while to_remove > 0 {
            let before = to_remove;
            for &(_, i) in &remainders {
                if to_remove == 0 {
                    break;
                }
                if units[i] > 0 {
                    units[i] -= 1;
                    to_remove -= 1;
                }
            }
            assert!(to_remove < before, "cannot quantize negative total mass");
        }
    }
    debug_assert_eq!(units.iter().sum::<i64>(), target_units);
    debug_assert!(units.iter().all(|u| *u >= 0));
    units
}

fn check_pair(mu0: &DiscreteMeasure, muj: &DiscreteMeasure) -> Result<(f64, f64)> {
    if mu0.dim() != muj.dim() {
        return Err(Error::InvalidMeasure(format!(
            "dimension mismatch: {} vs {}",
            mu0.dim(),
            muj.dim()
        )));
    }
    let m0 = mu0.total_mass();
    let mj = muj.total_mass();
    if m0 <= 0.0 || mj <= 0.0 {
        return Err(Error::InvalidMeasure("balanced transport needs positive total mass".into()));
    }
    if (m0 - mj).abs() > MASS_TOL * m0.max(mj).max(1.0) {
        return Err(Error::Unbalanced(m0, mj));
    }
    check_quantizable(m0 + mj)?;
    Ok((m0, mj))
}

/// Solves the balanced transportation LP between `mu0` and `muj` under
/// squared Euclidean cost, returning a globally optimal plan and its cost.
///
/// Ties between equal-cost optima break deterministically (lowest index
/// first), so repeated runs reproduce the same plan.
pub fn solve_ot(mu0: &DiscreteMeasure, muj: &DiscreteMeasure) -> Result<OtSolution> {
    let (m0, mj) = check_pair(mu0, muj)?;
    let target_units = (0.5 * (m0 + mj) * QUANT_SCALE).round() as i64;
    let supplies = quantize_to_units(mu0.weights(), target_units);
    let demands = quantize_to_units(muj.weights(), target_units);

    let (n0, n1) = (mu0.len(), muj.len());
    let mut cost = vec![0.0f64; n0 * n1];
    for i in 0..n0 {
        for j in 0..n1 {
            cost[i * n1 + j] = mu0.squared_distance(i, muj, j);
        }
    }

    let flows = min_cost_transport(&supplies, &demands, &cost)?;
    let entries = flows
        .into_iter()
        .map(|(i, j, f)| PlanEntry { source: i, target: j, mass: f as f64 * QUANT_UNIT })
        .collect();
    let plan = TransportPlan::new(n0, n1, entries)?;
    let cost = plan_cost_ot(&plan, mu0, muj)?;
    Ok(OtSolution { plan, cost })
}

const MAX_PERM_ATOMS: usize = 8;
const MAX_ORACLE_UNITS: i64 = 12;

/// Exhaustive oracle for [`solve_ot`]. Accepts either uniform-weight
/// instances with `N0 = Nj <= 8` (permutation enumeration; permutations are
/// the vertices of the balanced polytope there) or instances whose weights
/// are integer multiples of a common unit with at most 12 units total
/// (integral-flow enumeration).
pub fn brute_force_ot(mu0: &DiscreteMeasure, muj: &DiscreteMeasure) -> Result<OtSolution> {
    check_pair(mu0, muj)?;
    if let Some(plan) = permutation_oracle(mu0, muj)? {
        let cost = plan_cost_ot(&plan, mu0, muj)?;
        return Ok(OtSolution { plan, cost });
    }
    if let Some(plan) = integral_flow_oracle(mu0, muj)? {
        let cost = plan_cost_ot(&plan, mu0, muj)?;
        return Ok(OtSolution { plan, cost });
    }
    Err(Error::TooLarge(
        "oracle needs uniform weights with N <= 8 or integer-unit weights with <= 12 units".into(),
    ))
}

fn uniform_weight(weights: &[f64]) -> Option<f64> {
    let w0 = weights[0];
    if w0 > 0.0 && weights.iter().all(|w| (*w - w0).abs() <= 1e-15 * w0) {
        Some(w0)
    } else {
        None
    }
}

fn permutation_oracle(
    mu0: &DiscreteMeasure,
    muj: &DiscreteMeasure,
) -> Result<Option<TransportPlan>> {
    let n = mu0.len();
    if n != muj.len() || n > MAX_PERM_ATOMS {
        return Ok(None);
    }
    let (Some(w0), Some(wj)) = (uniform_weight(mu0.weights()), uniform_weight(muj.weights()))
    else {
        return Ok(None);
    };
    if (w0 - wj).abs() > 1e-12 * w0.max(wj) {
        return Ok(None);
    }

    let mut perm: Vec<usize> = (0..n).collect();
    let mut best_perm = perm.clone();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let c: f64 = p.iter().enumerate().map(|(i, &j)| mu0.squared_distance(i, muj, j)).sum();
        if c < best {
            best = c;
            best_perm.copy_from_slice(p);
        }
    });

    let entries = best_perm
        .iter()
        .enumerate()
        .map(|(i, &j)| PlanEntry { source: i, target: j, mass: w0 })
        .collect();
    Ok(Some(TransportPlan::new(n, n, entries)?))
}

fn permute(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Largest unit `u` such that every weight is an integer multiple of `u`,
/// searched among divisors of the smallest positive weight. `None` when no
/// such unit exists within the oracle's enumeration budget.
pub(crate) fn infer_unit<'a>(weights: impl Iterator<Item = &'a f64>) -> Option<f64> {
    let all: Vec<f64> = weights.copied().collect();
    let min_pos = all.iter().copied().filter(|w| *w > 0.0).fold(f64::INFINITY, f64::min);
    if !min_pos.is_finite() {
        return None;
    }
    let is_integral = |r: f64| (r - r.round()).abs() <= 1e-9 * r.max(1.0);
    for k in 1..=24u32 {
        let unit = min_pos / k as f64;
        if all.iter().all(|w| is_integral(w / unit)) {
            return Some(unit);
        }
    }
    None
}

fn integral_flow_oracle(
    mu0: &DiscreteMeasure,
    muj: &DiscreteMeasure,
) -> Result<Option<TransportPlan>> {
    let Some(unit) =
        infer_unit(mu0.weights().iter().chain(muj.weights().iter()))
    else {
        return Ok(None);
    };
    let row_units: Vec<i64> = mu0.weights().iter().map(|w| (w / unit).round() as i64).collect();
    let col_units: Vec<i64> = muj.weights().iter().map(|w| (w / unit).round() as i64).collect();
    let total: i64 = row_units.iter().sum();
    if total > MAX_ORACLE_UNITS || total != col_units.iter().sum::<i64>() {
        return Ok(None);
    }

    let n1 = muj.len();
    let mut best = f64::INFINITY;
    let mut best_cells: Vec<i64> = Vec::new();
    let mut cells = vec![0i64; mu0.len() * n1];
    enumerate_balanced(
        0,
        &mut row_units.clone(),
        &mut col_units.clone(),
        &mut cells,
        0.0,
        &|i, j| mu0.squared_distance(i, muj, j) * unit,
        &mut |cells, c| {
            if c < best {
                best = c;
                best_cells = cells.to_vec();
            }
        },
    );

    let entries = best_cells
        .iter()
        .enumerate()
        .filter(|(_, q)| **q > 0)
        .map(|(cell, q)| PlanEntry {
            source: cell / n1,
            target: cell % n1,
            mass: *q as f64 * unit,
        })
        .collect();
    Ok(Some(TransportPlan::new(mu0.len(), n1, entries)?))
}

/// Visits every integral matrix with the given row and column unit sums.
fn enumerate_balanced(
    cell: usize,
    row_rem: &mut [i64],
    col_rem: &mut [i64],
    cells: &mut [i64],
    acc: f64,
    unit_cost: &impl Fn(usize, usize) -> f64,
    visit: &mut impl FnMut(&[i64], f64),
) {
    let n1 = col_rem.len();
    if cell == cells.len() {
        if row_rem.iter().all(|r| *r == 0) {
            visit(cells, acc);
        }
        return;
    }
    let (i, j) = (cell / n1, cell % n1);
    // Last column of a row must absorb whatever remains of that row.
    let choices: std::ops::RangeInclusive<i64> = if j == n1 - 1 {
        row_rem[i]..=row_rem[i]
    } else {
        0..=row_rem[i]
    };
    for q in choices {
        if q > col_rem[j] {
            break;
        }
        row_rem[i] -= q;
        col_rem[j] -= q;
        cells[cell] = q;
        enumerate_balanced(
            cell + 1,
            row_rem,
            col_rem,
            cells,
            acc + q as f64 * unit_cost(i, j),
            unit_cost,
            visit,
        );
        cells[cell] = 0;
        row_rem[i] += q;
        col_rem[j] += q;
    }
}
