//! Exact optimal partial transport by reduction to a balanced instance with
//! dummy nodes, plus a brute-force oracle over integral partial plans.
//!
//! The reduction: augment sources with one dummy of mass `|muj|` and targets
//! with one dummy of mass `|mu0|`; real-real arcs cost the squared distance,
//! real-dummy and dummy-real arcs cost `lambda`, dummy-dummy costs zero.
//! Restricting the balanced optimum to real-real entries yields an optimal
//! partial plan, and the balanced optimal value equals the partial optimal
//! value. Correctness of the reduction is checked independently against the
//! enumeration oracle.

use crate::error::{Error, Result};
use crate::flow::min_cost_transport;
use crate::measures::{
    check_lambda, plan_cost_opt, DiscreteMeasure, PlanEntry, TransportPlan,
};
use crate::solver_ot::{
    check_quantizable, infer_unit, quantize_to_units, MIN_ENTRY_MASS, QUANT_SCALE, QUANT_UNIT,
};

/// An optimal partial coupling together with its cost decomposition.
///
/// `destroyed_mass = |mu0| - |gamma|` is reference mass that pays the penalty
/// instead of being transported; `created_mass = |muj| - |gamma|` is target
/// mass that appears without a source.
#[derive(Debug, Clone)]
pub struct OptSolution {
    pub plan: TransportPlan,
    pub cost: f64,
    pub transported_mass: f64,
    pub destroyed_mass: f64,
    pub created_mass: f64,
}

fn check_dims(mu0: &DiscreteMeasure, muj: &DiscreteMeasure) -> Result<()> {
    if mu0.dim() != muj.dim() {
        return Err(Error::InvalidMeasure(format!(
            "dimension mismatch: {} vs {}",
            mu0.dim(),
            muj.dim()
        )));
    }
    Ok(())
}

fn assemble(
    plan: TransportPlan,
    mu0: &DiscreteMeasure,
    muj: &DiscreteMeasure,
    lambda: f64,
) -> Result<OptSolution> {
    let cost = plan_cost_opt(&plan, mu0, muj, lambda)?;
    let transported = plan.total_mass();
    let clamp = |x: f64| if x < 0.0 { 0.0 } else { x };
    Ok(OptSolution {
        cost,
        transported_mass: transported,
        destroyed_mass: clamp(mu0.total_mass() - transported),
        created_mass: clamp(muj.total_mass() - transported),
        plan,
    })
}

/// Solves `OPT_lambda(mu0, muj)`: cheapest combination of transporting mass
/// (squared Euclidean cost) and destroying/creating it (`lambda` per unit on
/// each side). Returns a globally optimal partial plan.
pub fn solve_opt(mu0: &DiscreteMeasure, muj: &DiscreteMeasure, lambda: f64) -> Result<OptSolution> {
    check_lambda(lambda)?;
    check_dims(mu0, muj)?;
    check_quantizable(mu0.total_mass() + muj.total_mass())?;
    let (n0, n1) = (mu0.len(), muj.len());
    let t0 = (mu0.total_mass() * QUANT_SCALE).round() as i64;
    let t1 = (muj.total_mass() * QUANT_SCALE).round() as i64;

    let mut supplies = quantize_to_units(mu0.weights(), t0);
    supplies.push(t1);
    let mut demands = quantize_to_units(muj.weights(), t1);
    demands.push(t0);

    let (rows, cols) = (n0 + 1, n1 + 1);
    let mut cost = vec![0.0f64; rows * cols];
    for i in 0..n0 {
        for j in 0..n1 {
            cost[i * cols + j] = mu0.squared_distance(i, muj, j);
        }
        cost[i * cols + n1] = lambda;
    }
    for j in 0..n1 {
        cost[n0 * cols + j] = lambda;
    }
    // dummy-dummy stays 0

    let flows = min_cost_transport(&supplies, &demands, &cost)?;
    let entries: Vec<PlanEntry> = flows
        .into_iter()
        .filter(|(i, j, _)| *i < n0 && *j < n1)
        .map(|(i, j, f)| PlanEntry { source: i, target: j, mass: f as f64 * QUANT_UNIT })
        .filter(|e| e.mass >= MIN_ENTRY_MASS)
        .collect();
    let plan = TransportPlan::new(n0, n1, entries)?;
    assemble(plan, mu0, muj, lambda)
}

const MAX_OPT_ORACLE_UNITS: i64 = 10;

/// Exhaustive oracle for [`solve_opt`]: enumerates every integral partial
/// plan of an instance whose weights are multiples of a common unit with
/// `(|mu0| + |muj|) / unit <= 10`.
pub fn brute_force_opt(
    mu0: &DiscreteMeasure,
    muj: &DiscreteMeasure,
    lambda: f64,
) -> Result<OptSolution> {
    check_lambda(lambda)?;
    check_dims(mu0, muj)?;
    let unit = infer_unit(mu0.weights().iter().chain(muj.weights().iter())).ok_or_else(|| {
        Error::TooLarge("oracle needs weights that share a common positive unit".into())
    })?;
    let row_units: Vec<i64> = mu0.weights().iter().map(|w| (w / unit).round() as i64).collect();
    let col_units: Vec<i64> = muj.weights().iter().map(|w| (w / unit).round() as i64).collect();
    let total = row_units.iter().sum::<i64>() + col_units.iter().sum::<i64>();
    if total > MAX_OPT_ORACLE_UNITS {
        return Err(Error::TooLarge(format!(
            "oracle caps total mass at {MAX_OPT_ORACLE_UNITS} units, instance has {total}"
        )));
    }

    let n1 = muj.len();
    let mass_penalty = lambda * (mu0.total_mass() + muj.total_mass());
    let mut best = f64::INFINITY;
    let mut best_cells: Vec<i64> = vec![0; mu0.len() * n1];
    let mut cells = vec![0i64; mu0.len() * n1];
    enumerate_partial(
        0,
        &mut row_units.clone(),
        &mut col_units.clone(),
        &mut cells,
        0.0,
        0,
        &|i, j| mu0.squared_distance(i, muj, j) * unit,
        &mut |cells, transport, units| {
            let c = transport + mass_penalty - 2.0 * lambda * units as f64 * unit;
            if c < best {
                best = c;
                best_cells.copy_from_slice(cells);
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
    let plan = TransportPlan::new(mu0.len(), n1, entries)?;
    assemble(plan, mu0, muj, lambda)
}

/// Visits every integral matrix dominated by the row and column unit budgets.
fn enumerate_partial(
    cell: usize,
    row_rem: &mut [i64],
    col_rem: &mut [i64],
    cells: &mut [i64],
    transport: f64,
    units: i64,
    unit_cost: &impl Fn(usize, usize) -> f64,
    visit: &mut impl FnMut(&[i64], f64, i64),
) {
    if cell == cells.len() {
        visit(cells, transport, units);
        return;
    }
    let n1 = col_rem.len();
    let (i, j) = (cell / n1, cell % n1);
    let max_q = row_rem[i].min(col_rem[j]);
    for q in 0..=max_q {
        row_rem[i] -= q;
        col_rem[j] -= q;
        cells[cell] = q;
        enumerate_partial(
            cell + 1,
            row_rem,
            col_rem,
            cells,
            transport + q as f64 * unit_cost(i, j),
            units + q,
            unit_cost,
            visit,
        );
        cells[cell] = 0;
        row_rem[i] += q;
        col_rem[j] += q;
    }
}
