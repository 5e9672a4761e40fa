use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{spearman_slices, StatsError};
use crate::error::Result;
use crate::rdm::{check_aligned, rsa_score, Rdm};
use crate::rng::{self, Purpose};

/// Redraw budget per resample before giving up.
pub const MAX_REDRAWS: usize = 1000;

/// Percentile bootstrap interval around a Spearman rho.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCI {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub n_resamples: usize,
    pub seed: u64,
}

/// Linear-interpolation quantile of sorted data (`q` in `[0, 1]`).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Stimulus bootstrap of the RSA score.
///
/// Each resample draws `m` stimuli with replacement and indexes rows and
/// columns of both RDMs with the same draw. Pairs of a stimulus with its own
/// duplicate are dropped; pairs between distinct duplicates keep the copied
/// distance. Draws with fewer than three distinct stimuli, or whose triangles
/// are all tied, are redrawn from the same stream.
pub fn bootstrap_rsa(
    model: &Rdm,
    neural: &Rdm,
    n_resamples: usize,
    seed: u64,
    alpha: f64,
) -> Result<BootstrapCI> {
    check_aligned(model, neural)?;
    let m = model.len();
    if m < 4 {
        return Err(StatsError::TooShort { len: m, min: 4 }.into());
    }
    if n_resamples == 0 {
        return Err(StatsError::InvalidArgument("n_resamples must be >= 1".into()).into());
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")).into());
    }
    let point = rsa_score(model, neural)?;
    let (a, b) = (model.matrix(), neural.matrix());

    let mut rhos = (0..n_resamples)
        .into_par_iter()
        .map(|index| {
            let mut rng = rng::stream(seed, Purpose::Bootstrap, index as u64);
            let mut draw = vec![0usize; m];
            let mut seen = vec![false; m];
            let mut xs = Vec::with_capacity(m * (m - 1) / 2);
            let mut ys = Vec::with_capacity(m * (m - 1) / 2);
            for _ in 0..MAX_REDRAWS {
                seen.iter_mut().for_each(|s| *s = false);
                for d in draw.iter_mut() {
                    *d = rng.random_range(0..m);
                    seen[*d] = true;
                }
                if seen.iter().filter(|&&s| s).count() < 3 {
                    continue;
                }
                xs.clear();
                ys.clear();
                for p in 0..m {
                    for q in (p + 1)..m {
                        let (i, j) = (draw[p], draw[q]);
                        if i != j {
                            xs.push(a[[i, j]]);
                            ys.push(b[[i, j]]);
                        }
                    }
                }
                if let Ok(r) = spearman_slices(&xs, &ys) {
                    return Ok(r);
                }
            }
            Err(StatsError::ResampleCap {
                index,
                attempts: MAX_REDRAWS,
            })
        })
        .collect::<Result<Vec<f64>, StatsError>>()?;

    rhos.sort_by(f64::total_cmp);
    Ok(BootstrapCI {
        point,
        lower: percentile(&rhos, alpha / 2.0),
        upper: percentile(&rhos, 1.0 - alpha / 2.0),
        n_resamples,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdm::{compute_rdm, FeatureMatrix, Provenance};
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_rdm(m: usize, seed: u64) -> Rdm {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = Array2::from_shape_fn((m, 8), |_| StandardNormal.sample(&mut rng));
        let ids = (0..m).map(|i| format!("s{i}")).collect();
        compute_rdm(&FeatureMatrix::new(ids, data, Provenance::default()).unwrap()).unwrap()
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 4.0);
        assert_eq!(percentile(&v, 0.5), 2.5);
    }

    #[test]
    fn self_comparison_is_one() {
        let r = random_rdm(12, 1);
        let ci = bootstrap_rsa(&r, &r, 200, 3, 0.05).unwrap();
        assert_eq!(ci.point, 1.0);
        assert_eq!(ci.upper, 1.0);
        assert_eq!(ci.lower, 1.0);
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let (a, b) = (random_rdm(15, 1), random_rdm(15, 2));
        let c1 = bootstrap_rsa(&a, &b, 500, 42, 0.05).unwrap();
        let c2 = bootstrap_rsa(&a, &b, 500, 42, 0.05).unwrap();
        assert_eq!(c1.lower.to_bits(), c2.lower.to_bits());
        assert_eq!(c1.upper.to_bits(), c2.upper.to_bits());
        let c3 = bootstrap_rsa(&a, &b, 500, 43, 0.05).unwrap();
        assert_ne!(c1.lower.to_bits(), c3.lower.to_bits());
    }

    #[test]
    fn worker_count_does_not_change_result() {
        let (a, b) = (random_rdm(10, 5), random_rdm(10, 6));
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let c1 = one.install(|| bootstrap_rsa(&a, &b, 300, 9, 0.1).unwrap());
        let c2 = many.install(|| bootstrap_rsa(&a, &b, 300, 9, 0.1).unwrap());
        assert_eq!(c1, c2);
    }

    #[test]
    fn independent_rdms_cover_zero() {
        // simulation oracle: independent RDMs have true rho 0
        let mut covered = 0;
        for rep in 0..100u64 {
            let a = random_rdm(20, 1000 + 2 * rep);
            let b = random_rdm(20, 1001 + 2 * rep);
            let ci = bootstrap_rsa(&a, &b, 2000, rep, 0.05).unwrap();
            assert!(ci.lower <= ci.upper);
            if ci.lower <= 0.0 && 0.0 <= ci.upper {
                covered += 1;
            }
        }
        assert!(covered >= 90, "covered {covered}/100");
    }

    #[test]
    fn argument_validation() {
        let a = random_rdm(10, 1);
        let small = random_rdm(3, 1);
        assert!(bootstrap_rsa(&small, &small, 10, 0, 0.05).is_err());
        assert!(bootstrap_rsa(&a, &a, 0, 0, 0.05).is_err());
        assert!(bootstrap_rsa(&a, &a, 10, 0, 1.5).is_err());
        let b = random_rdm(11, 2);
        assert!(bootstrap_rsa(&a, &b, 10, 0, 0.05).is_err());
    }
}
