//! Reference selection and dimensionality reduction over embedded measures.
//!
//! The free-support barycenter is the usual fixed-point scheme: project every
//! input onto the current support, then move each support point to the mean
//! of its projected locations. Exact transport subproblems keep the
//! downstream embedding identities clean; no entropic smoothing. PCA runs on
//! flattened displacement fields scaled by `sqrt(p0)` per atom, so Euclidean
//! inner products in the scaled space realize the reference-weighted norm
//! used everywhere else.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::accum::KahanSum;
use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, MASS_TOL};
use crate::projections::ot_barycentric_projection;
use crate::solver_ot::solve_ot;

/// Free-support barycenter of `measures` under the balanced transport cost.
///
/// All inputs must share a total mass. The support is initialized from a
/// seeded subsample of the pooled atoms with uniform weights and iterated
/// `iters` times; the transport objective is nonincreasing along the way.
/// Non-convergence is not an error: `iters` caps the work.
pub fn ot_barycenter(
    measures: &[DiscreteMeasure],
    support_size: usize,
    iters: usize,
    seed: u64,
) -> Result<DiscreteMeasure> {
    let mut bary = barycenter_init(measures, support_size, seed)?;
    for _ in 0..iters {
        bary = barycenter_step(&bary, measures)?;
    }
    Ok(bary)
}

fn barycenter_init(
    measures: &[DiscreteMeasure],
    support_size: usize,
    seed: u64,
) -> Result<DiscreteMeasure> {
    if measures.is_empty() {
        return Err(Error::InvalidParameter("barycenter needs at least one measure".into()));
    }
    if support_size == 0 {
        return Err(Error::InvalidParameter("support size must be >= 1".into()));
    }
    let dim = measures[0].dim();
    let mass = measures[0].total_mass();
    for (i, m) in measures.iter().enumerate() {
        if m.dim() != dim {
            return Err(Error::InvalidMeasure(format!(
                "measure {i} has dimension {} instead of {dim}",
                m.dim()
            )));
        }
        let mi = m.total_mass();
        if (mi - mass).abs() > MASS_TOL * mass.max(mi).max(1.0) {
            return Err(Error::Unbalanced(mass, mi));
        }
    }
    if mass <= 0.0 {
        return Err(Error::InvalidMeasure("barycenter inputs must carry positive mass".into()));
    }

    // Pool every atom and draw the initial support from it.
    let pooled: Vec<&[f64]> = measures
        .iter()
        .flat_map(|m| (0..m.len()).map(move |n| m.point(n)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = if support_size <= pooled.len() {
        let mut idx = sample(&mut rng, pooled.len(), support_size).into_vec();
        idx.sort_unstable();
        idx
    } else {
        use rand::Rng;
        (0..support_size).map(|_| rng.gen_range(0..pooled.len())).collect()
    };
    let mut points = Vec::with_capacity(support_size * dim);
    for p in picks {
        points.extend_from_slice(pooled[p]);
    }
    let weights = vec![mass / support_size as f64; support_size];
    DiscreteMeasure::new(dim, points, weights)
}

fn barycenter_step(
    bary: &DiscreteMeasure,
    measures: &[DiscreteMeasure],
) -> Result<DiscreteMeasure> {
    let dim = bary.dim();
    let mut acc = vec![KahanSum::new(); bary.len() * dim];
    for m in measures {
        let sol = solve_ot(bary, m)?;
        let proj = ot_barycentric_projection(bary, m, &sol.plan)?;
        for s in 0..bary.len() {
            let x = proj.measure.point(s);
            for k in 0..dim {
                acc[s * dim + k].add(x[k]);
            }
        }
    }
    let inv = 1.0 / measures.len() as f64;
    let points: Vec<f64> = acc.into_iter().map(|a| a.value() * inv).collect();
    DiscreteMeasure::new(dim, points, bary.weights().to_vec())
}

/// Sum of balanced transport costs from `bary` to every input; the quantity
/// the fixed-point iteration drives down.
pub fn barycenter_objective(
    bary: &DiscreteMeasure,
    measures: &[DiscreteMeasure],
) -> Result<f64> {
    let mut acc = KahanSum::new();
    for m in measures {
        acc.add(solve_ot(bary, m)?.cost);
    }
    Ok(acc.value())
}

/// Principal components of a set of flattened displacement fields.
///
/// `components` has one orthonormal row per retained component (length
/// `d * N0`), `projections` one row per input vector, and
/// `explained_variance` the matching covariance eigenvalues, nonincreasing.
#[derive(Debug, Clone)]
pub struct PcaResult {
    pub components: Vec<Vec<f64>>,
    pub projections: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

/// PCA over embedded vectors.
///
/// Each row of `vectors` is a flattened `N0 x d` displacement field over the
/// reference support; `weights` are the reference weights (length `N0`).
/// Rows are scaled elementwise by `sqrt(weights[n])` per atom and mean
/// centered; the top `n_components` eigenpairs of the sample covariance
/// (normalized by `K - 1`) are returned. Each component's entry of largest
/// magnitude is made positive so outputs are reproducible.
pub fn pca(vectors: &[Vec<f64>], weights: &[f64], n_components: usize) -> Result<PcaResult> {
    if vectors.is_empty() {
        return Err(Error::InvalidParameter("pca needs at least one vector".into()));
    }
    let k = vectors.len();
    let feat = vectors[0].len();
    if vectors.iter().any(|v| v.len() != feat) {
        return Err(Error::InvalidParameter("pca rows must share a length".into()));
    }
    let n0 = weights.len();
    if n0 == 0 || feat % n0 != 0 {
        return Err(Error::InvalidParameter(format!(
            "row length {feat} is not a multiple of the {n0} reference weights"
        )));
    }
    let dim = feat / n0;
    if n_components > k.min(feat) {
        return Err(Error::InvalidParameter(format!(
            "{n_components} components requested from {k} vectors of length {feat}"
        )));
    }
    let scale: Vec<f64> = weights.iter().map(|w| w.max(0.0).sqrt()).collect();

    // Scale, then center.
    let mut data = DMatrix::<f64>::zeros(k, feat);
    for (i, row) in vectors.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            data[(i, j)] = x * scale[j / dim];
        }
    }
    let mean = data.row_mean();
    for i in 0..k {
        for j in 0..feat {
            data[(i, j)] -= mean[j];
        }
    }

    let denom = if k > 1 { (k - 1) as f64 } else { 1.0 };
    let cov = data.transpose() * &data / denom;
    let eig = cov.symmetric_eigen();

    let mut order: Vec<usize> = (0..feat).collect();
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]).then(a.cmp(b)));
    order.truncate(n_components);

    let mut components = Vec::with_capacity(n_components);
    let mut explained = Vec::with_capacity(n_components);
    for &c in &order {
        let mut row: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
        // Deterministic sign: the entry of largest magnitude is positive.
        let lead = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(_, v)| *v)
            .unwrap_or(1.0);
        if lead < 0.0 {
            for x in &mut row {
                *x = -*x;
            }
        }
        explained.push(eig.eigenvalues[c].max(0.0));
        components.push(row);
    }

    let mut projections = vec![vec![0.0; n_components]; k];
    for i in 0..k {
        for (c, comp) in components.iter().enumerate() {
            let mut acc = KahanSum::new();
            for j in 0..feat {
                acc.add(data[(i, j)] * comp[j]);
            }
            projections[i][c] = acc.value();
        }
    }

    Ok(PcaResult { components, projections, explained_variance: explained })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn cloud(rng: &mut ChaCha8Rng, n: usize, center: &[f64]) -> DiscreteMeasure {
        let pts: Vec<f64> = (0..n)
            .flat_map(|_| {
                let dx: f64 = rng.gen::<f64>() - 0.5;
                let dy: f64 = rng.gen::<f64>() - 0.5;
                [center[0] + dx, center[1] + dy]
            })
            .collect();
        DiscreteMeasure::new(2, pts, vec![1.0 / n as f64; n]).unwrap()
    }

    #[test]
    fn antipodal_singletons_average_to_origin() {
        let a = DiscreteMeasure::new(2, vec![3.0, 0.0], vec![1.0]).unwrap();
        let b = DiscreteMeasure::new(2, vec![-3.0, 0.0], vec![1.0]).unwrap();
        let bary = ot_barycenter(&[a, b], 1, 3, 0).unwrap();
        assert!(bary.point(0)[0].abs() < 1e-12);
        assert!(bary.point(0)[1].abs() < 1e-12);
        assert_eq!(bary.weights(), &[1.0]);
    }

    #[test]
    fn objective_nonincreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let measures: Vec<DiscreteMeasure> =
            (0..3).map(|i| cloud(&mut rng, 8, &[i as f64, 0.0])).collect();
        let mut last = f64::INFINITY;
        for iters in 1..=4 {
            let bary = ot_barycenter(&measures, 6, iters, 9).unwrap();
            let obj = barycenter_objective(&bary, &measures).unwrap();
            assert!(obj <= last + 1e-9, "objective rose: {last} -> {obj}");
            last = obj;
        }
    }

    #[test]
    fn identical_inputs_reach_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = cloud(&mut rng, 6, &[0.0, 0.0]);
        let measures = vec![m.clone(), m.clone(), m];
        let a = ot_barycenter(&measures, 4, 6, 3).unwrap();
        let b = ot_barycenter(&measures, 4, 7, 3).unwrap();
        for s in 0..a.len() {
            for (x, y) in a.point(s).iter().zip(b.point(s)) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn unequal_masses_rejected() {
        let a = DiscreteMeasure::new(1, vec![0.0], vec![1.0]).unwrap();
        let b = DiscreteMeasure::new(1, vec![1.0], vec![2.0]).unwrap();
        assert!(matches!(ot_barycenter(&[a, b], 1, 1, 0), Err(Error::Unbalanced(_, _))));
    }

    #[test]
    fn pca_zero_variance_for_identical_vectors() {
        let rows = vec![vec![1.0, 2.0, 3.0, 4.0]; 5];
        let res = pca(&rows, &[0.5, 0.5], 2).unwrap();
        assert!(res.explained_variance.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn pca_two_points_project_symmetrically() {
        let rows = vec![vec![1.0, 0.0], vec![3.0, 0.0]];
        let res = pca(&rows, &[1.0, 1.0], 1).unwrap();
        let p = &res.projections;
        assert!((p[0][0] + p[1][0]).abs() < 1e-12);
        assert!(p[0][0].abs() > 0.5);
    }

    #[test]
    fn pca_recovers_hand_computed_eigenvalues() {
        // Three orthogonal displacement patterns in R^3 with uniform unit
        // weights. Centered data has covariance diag(a, b, c) with
        // eigenvalues computable by hand.
        let rows = vec![
            vec![2.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.5],
        ];
        let res = pca(&rows, &[1.0, 1.0, 1.0], 3).unwrap();
        // Column means: (2/3, 1/3, 1/6). Centered columns:
        // (4/3,-2/3,-2/3), (-1/3,2/3,-1/3), (-1/6,-1/6,1/3).
        // Covariance (divided by K-1 = 2) computed independently:
        let cols = [
            [4.0 / 3.0, -2.0 / 3.0, -2.0 / 3.0],
            [-1.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0],
            [-1.0 / 6.0, -1.0 / 6.0, 1.0 / 3.0],
        ];
        let mut cov = [[0.0f64; 3]; 3];
        for (r, row) in cov.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|i| cols[r][i] * cols[c][i]).sum::<f64>() / 2.0;
            }
        }
        let m = DMatrix::from_fn(3, 3, |r, c| cov[r][c]);
        let mut expect: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        expect.sort_by(|a, b| b.total_cmp(a));
        for (got, want) in res.explained_variance.iter().zip(&expect) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn pca_reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let k = 6;
        let feat = 8;
        let rows: Vec<Vec<f64>> =
            (0..k).map(|_| (0..feat).map(|_| rng.gen::<f64>()).collect()).collect();
        let weights = vec![0.3, 0.7, 0.5, 0.5];
        let res = pca(&rows, &weights, k.min(feat)).unwrap();

        for (i, a) in res.components.iter().enumerate() {
            for (j, b) in res.components.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-8);
            }
        }
        assert!(res.explained_variance.windows(2).all(|w| w[0] >= w[1] - 1e-12));

        // Reconstruct centered scaled rows from all components.
        let dim = feat / weights.len();
        let scale: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
        let scaled: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().enumerate().map(|(j, x)| x * scale[j / dim]).collect())
            .collect();
        let mut mean = vec![0.0; feat];
        for r in &scaled {
            for (j, x) in r.iter().enumerate() {
                mean[j] += x / k as f64;
            }
        }
        for (i, r) in scaled.iter().enumerate() {
            for j in 0..feat {
                let centered = r[j] - mean[j];
                let rebuilt: f64 = (0..res.components.len())
                    .map(|c| res.projections[i][c] * res.components[c][j])
                    .sum();
                assert!((centered - rebuilt).abs() < 1e-6, "row {i} coord {j}");
            }
        }
    }

    #[test]
    fn pca_invariant_under_row_reordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let rows: Vec<Vec<f64>> =
            (0..5).map(|_| (0..6).map(|_| rng.gen::<f64>()).collect()).collect();
        let weights = vec![1.0, 1.0, 1.0];
        let a = pca(&rows, &weights, 2).unwrap();
        let mut shuffled = rows.clone();
        shuffled.swap(0, 3);
        shuffled.swap(1, 4);
        let b = pca(&shuffled, &weights, 2).unwrap();
        // Projections follow their rows, up to a global sign per component.
        for c in 0..2 {
            let sign = if (a.projections[0][c] - b.projections[3][c]).abs() < 1e-9 {
                1.0
            } else {
                -1.0
            };
            let perm = [3usize, 4, 2, 0, 1]; // where each original row went
            for (orig, moved) in perm.iter().enumerate() {
                assert!(
                    (a.projections[orig][c] - sign * b.projections[*moved][c]).abs() < 1e-8
                );
            }
        }
    }

    #[test]
    fn pca_rejects_too_many_components() {
        let rows = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(pca(&rows, &[1.0], 3).is_err());
    }
}
