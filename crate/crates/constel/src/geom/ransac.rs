//! RANSAC estimation of a similarity transform from point correspondences
//! that may contain outliers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{point_line_distance, procrustes, GeomError, SimilarityTransform, Vec3};

/// Controls for [`ransac_transform`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    /// A correspondence is an inlier when the transformed source lands
    /// within this distance of its destination.
    pub inlier_threshold: f64,
    /// Hard cap on sampling rounds; the adaptive schedule usually stops
    /// far earlier.
    pub max_iterations: usize,
    /// Desired probability of having drawn at least one all-inlier sample.
    pub confidence: f64,
    /// Minimum consensus size for success.
    pub min_inliers: usize,
    /// Estimate a scale factor alongside rotation and translation.
    pub with_scale: bool,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            inlier_threshold: 0.05,
            max_iterations: 2000,
            confidence: 0.999,
            min_inliers: 4,
            with_scale: false,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<(), GeomError> {
        if !(self.inlier_threshold.is_finite() && self.inlier_threshold > 0.0) {
            return Err(GeomError::InvalidParameter(format!(
                "inlier_threshold must be > 0, got {}",
                self.inlier_threshold
            )));
        }
        if self.max_iterations == 0 {
            return Err(GeomError::InvalidParameter(
                "max_iterations must be >= 1".into(),
            ));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(GeomError::InvalidParameter(format!(
                "confidence must lie in (0, 1), got {}",
                self.confidence
            )));
        }
        if self.min_inliers < 3 {
            return Err(GeomError::InvalidParameter(
                "min_inliers must be >= 3".into(),
            ));
        }
        Ok(())
    }
}

/// A minimal sample is unusable when its three source points are (nearly)
/// collinear or coincident, relative to the sample's own extent.
fn sample_degenerate(a: Vec3, b: Vec3, c: Vec3) -> bool {
    let d_ab = a.distance(b);
    let d_ac = a.distance(c);
    let d_bc = b.distance(c);
    let diameter = d_ab.max(d_ac).max(d_bc);
    if diameter < 1e-12 {
        return true;
    }
    // Height of the triangle over its longest edge.
    let height = if d_ab >= d_ac && d_ab >= d_bc {
        point_line_distance(c, a, b)
    } else if d_ac >= d_bc {
        point_line_distance(b, a, c)
    } else {
        point_line_distance(a, b, c)
    };
    match height {
        Ok(h) => h < 1e-6 * diameter,
        Err(_) => true,
    }
}

fn count_inliers(
    t: &SimilarityTransform,
    correspondences: &[(Vec3, Vec3)],
    threshold: f64,
) -> Vec<usize> {
    correspondences
        .iter()
        .enumerate()
        .filter(|(_, (s, d))| t.apply(*s).distance(*d) <= threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Robustly fits `dst ≈ T(src)` over `(src, dst)` pairs, returning the
/// refined transform and the ascending indices of its inliers.
///
/// Sampling is driven entirely by `seed`, so repeated calls with identical
/// inputs return identical results. Iteration count adapts to the observed
/// inlier ratio, capped at `params.max_iterations`.
pub fn ransac_transform(
    correspondences: &[(Vec3, Vec3)],
    params: &RansacParams,
    seed: u64,
) -> Result<(SimilarityTransform, Vec<usize>), GeomError> {
    params.validate()?;
    let n = correspondences.len();
    if n < 3 {
        return Err(GeomError::TooFewCorrespondences { got: n, min: 3 });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<usize>, SimilarityTransform)> = None;
    let mut target = params.max_iterations;
    let mut iteration = 0;

    while iteration < target {
        iteration += 1;
        let picks = rand::seq::index::sample(&mut rng, n, 3);
        let (i, j, k) = (picks.index(0), picks.index(1), picks.index(2));
        let (s0, d0) = correspondences[i];
        let (s1, d1) = correspondences[j];
        let (s2, d2) = correspondences[k];
        if sample_degenerate(s0, s1, s2) {
            continue;
        }
        let model = match procrustes(&[s0, s1, s2], &[d0, d1, d2], params.with_scale) {
            Ok(t) => t,
            Err(_) => continue,
        };
        let inliers = count_inliers(&model, correspondences, params.inlier_threshold);
        let improved = match &best {
            None => true,
            Some((b, _)) => inliers.len() > b.len(),
        };
        if improved {
            // Success probability of an all-inlier sample of size 3.
            let w = inliers.len() as f64 / n as f64;
            best = Some((inliers, model));
            let p_good = w * w * w;
            if p_good >= 1.0 - 1e-12 {
                target = iteration;
            } else if p_good > 0.0 {
                let needed = ((1.0 - params.confidence).ln() / (1.0 - p_good).ln()).ceil();
                if needed.is_finite() && needed >= 1.0 {
                    target = target.min(needed as usize).max(iteration);
                }
            }
        }
    }

    let (mut inliers, mut model) = match best {
        Some(b) => (b.0, b.1),
        None => return Err(GeomError::NoConsensus { best: 0, min: params.min_inliers }),
    };

    // Refit on the consensus set until it stabilizes.
    for _ in 0..10 {
        if inliers.len() < 3 {
            break;
        }
        let src: Vec<Vec3> = inliers.iter().map(|&i| correspondences[i].0).collect();
        let dst: Vec<Vec3> = inliers.iter().map(|&i| correspondences[i].1).collect();
        let refit = match procrustes(&src, &dst, params.with_scale) {
            Ok(t) => t,
            Err(_) => break,
        };
        let next = count_inliers(&refit, correspondences, params.inlier_threshold);
        let stable = next == inliers;
        model = refit;
        inliers = next;
        if stable {
            break;
        }
    }

    if inliers.len() < params.min_inliers.max(3) {
        return Err(GeomError::NoConsensus {
            best: inliers.len(),
            min: params.min_inliers,
        });
    }
    Ok((model, inliers))
}
