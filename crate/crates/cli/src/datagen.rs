//! Synthetic data: Gaussian point-set families and uniform background noise.
//!
//! All sampling is driven by `ChaCha8` with explicit stream splitting, so a
//! seed pins every byte of output regardless of how many objects are drawn
//! or in which order callers consume them: object `i` of a family reads
//! stream `i + 1` of the seed, the reference reads stream `0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use lopt_core::{DiscreteMeasure, Error, Result};

/// `k` Gaussian point sets in the plane plus a reference cloud.
///
/// Means sit equally spaced on the circle of radius `sqrt(3)`; the reference
/// is drawn around the average of the means. Every cloud has `n` atoms of
/// weight `1/n`.
#[derive(Debug, Clone)]
pub struct GaussianFamily {
    pub measures: Vec<DiscreteMeasure>,
    pub reference: DiscreteMeasure,
    pub means: Vec<[f64; 2]>,
}

fn gaussian_cloud(n: usize, mean: [f64; 2], rng: &mut ChaCha8Rng) -> DiscreteMeasure {
    let mut points = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let dx: f64 = rng.sample(StandardNormal);
        let dy: f64 = rng.sample(StandardNormal);
        points.push(mean[0] + dx);
        points.push(mean[1] + dy);
    }
    DiscreteMeasure::new(2, points, vec![1.0 / n as f64; n]).expect("finite gaussian samples")
}

/// Samples a family of unit-covariance Gaussian clouds with mean norms
/// `sqrt(3)` and a reference centered at the mean of the means.
pub fn generate_gaussians(n: usize, k: usize, seed: u64) -> Result<GaussianFamily> {
    if n == 0 || k == 0 {
        return Err(Error::InvalidParameter("need n >= 1 and k >= 1".into()));
    }
    let radius = 3.0f64.sqrt();
    let means: Vec<[f64; 2]> = (0..k)
        .map(|i| {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
            [radius * theta.cos(), radius * theta.sin()]
        })
        .collect();
    let mean_of_means = [
        means.iter().map(|m| m[0]).sum::<f64>() / k as f64,
        means.iter().map(|m| m[1]).sum::<f64>() / k as f64,
    ];

    let measures = means
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            gaussian_cloud(n, *m, &mut rng)
        })
        .collect();
    let reference = {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        gaussian_cloud(n, mean_of_means, &mut rng)
    };
    Ok(GaussianFamily { measures, reference, means })
}

/// Appends `ceil(eta * N)` uniform atoms of weight `1/N` to `measure`, drawn
/// from `bbox` (per-coordinate ranges) or from the measure's own bounding box
/// when none is given. Input atoms and weights are untouched.
pub fn add_noise(
    measure: &DiscreteMeasure,
    eta: f64,
    seed: u64,
    bbox: Option<&[(f64, f64)]>,
) -> Result<DiscreteMeasure> {
    if !eta.is_finite() || eta < 0.0 {
        return Err(Error::InvalidParameter(format!("eta {eta} must be >= 0")));
    }
    let d = measure.dim();
    let own_box;
    let bbox = match bbox {
        Some(b) => {
            if b.len() != d {
                return Err(Error::InvalidParameter(format!(
                    "bounding box has {} ranges for dimension {d}",
                    b.len()
                )));
            }
            if b.iter().any(|(lo, hi)| !lo.is_finite() || !hi.is_finite() || lo > hi) {
                return Err(Error::InvalidParameter("bad bounding box range".into()));
            }
            b
        }
        None => {
            own_box = measure.bounding_box();
            &own_box[..]
        }
    };

    let n = measure.len();
    let extra = (eta * n as f64).ceil() as usize;
    let mut points = measure.points_flat().to_vec();
    let mut weights = measure.weights().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..extra {
        for (lo, hi) in bbox {
            let x = if hi > lo { rng.gen_range(*lo..*hi) } else { *lo };
            points.push(x);
        }
        weights.push(1.0 / n as f64);
    }
    DiscreteMeasure::new(d, points, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn antipodal_means_center_the_reference() {
        let fam = generate_gaussians(200, 2, 5).unwrap();
        assert!((fam.means[0][0] - 3.0f64.sqrt()).abs() < 1e-12);
        assert!((fam.means[1][0] + 3.0f64.sqrt()).abs() < 1e-12);
        // Reference drawn around the origin: its sample mean is near 0.
        let mean_x: f64 = fam
            .reference
            .points_flat()
            .chunks(2)
            .map(|p| p[0])
            .sum::<f64>()
            / 200.0;
        assert!(mean_x.abs() < 0.3, "reference sample mean x = {mean_x}");
    }

    #[test]
    fn single_cloud_uses_its_own_mean() {
        let fam = generate_gaussians(50, 1, 9).unwrap();
        assert_eq!(fam.means.len(), 1);
        let m = fam.means[0];
        let mx: f64 =
            fam.reference.points_flat().chunks(2).map(|p| p[0]).sum::<f64>() / 50.0;
        assert!((mx - m[0]).abs() < 0.6);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_gaussians(20, 3, 123).unwrap();
        let b = generate_gaussians(20, 3, 123).unwrap();
        for (x, y) in a.measures.iter().zip(&b.measures) {
            assert_eq!(x, y);
        }
        assert_eq!(a.reference, b.reference);
        let c = generate_gaussians(20, 3, 124).unwrap();
        assert_ne!(a.measures[0], c.measures[0]);
    }

    #[test]
    fn noise_counts_and_masses() {
        let m = DiscreteMeasure::new(
            2,
            (0..200).map(|i| i as f64 * 0.01).collect(),
            vec![0.01; 100],
        )
        .unwrap();
        let noisy = add_noise(&m, 0.5, 3, None).unwrap();
        assert_eq!(noisy.len(), 150);
        assert!((noisy.total_mass() - 1.5).abs() < 1e-12);
        // Original atoms untouched.
        for i in 0..100 {
            assert_eq!(noisy.point(i), m.point(i));
            assert_eq!(noisy.weight(i), 0.01);
        }
        // Noise stays inside the bounding box.
        let bbox = m.bounding_box();
        for i in 100..150 {
            for (x, (lo, hi)) in noisy.point(i).iter().zip(&bbox) {
                assert!(x >= lo && x <= hi);
            }
        }
    }

    #[test]
    fn zero_eta_is_identity() {
        let m = DiscreteMeasure::new(1, vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(add_noise(&m, 0.0, 1, None).unwrap(), m);
    }

    #[test]
    fn noise_is_deterministic_and_respects_custom_box() {
        let m = DiscreteMeasure::new(2, vec![0.0, 0.0, 1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let a = add_noise(&m, 2.0, 7, Some(&[(5.0, 6.0), (-1.0, 0.0)])).unwrap();
        let b = add_noise(&m, 2.0, 7, Some(&[(5.0, 6.0), (-1.0, 0.0)])).unwrap();
        assert_eq!(a, b);
        for i in 2..a.len() {
            let p = a.point(i);
            assert!(p[0] >= 5.0 && p[0] <= 6.0);
            assert!(p[1] >= -1.0 && p[1] <= 0.0);
        }
    }
}
