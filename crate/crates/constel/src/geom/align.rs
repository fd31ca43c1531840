//! Closed-form least-squares alignment of paired point sets (Umeyama's
//! method): finds the similarity transform minimizing Σ ‖dst_i − T(src_i)‖².

use nalgebra::{Matrix3, SymmetricEigen, SVD};

use super::{GeomError, SimilarityTransform, Vec3};

/// Best-fit transform taking `src` onto `dst` in the least-squares sense.
///
/// With `with_scale` false the scale is fixed at 1 (rigid fit). Requires at
/// least 3 pairs and a source set that is neither all-coincident nor
/// collinear; those configurations leave the rotation underdetermined.
pub fn procrustes(
    src: &[Vec3],
    dst: &[Vec3],
    with_scale: bool,
) -> Result<SimilarityTransform, GeomError> {
    if src.len() != dst.len() {
        return Err(GeomError::LengthMismatch {
            src: src.len(),
            dst: dst.len(),
        });
    }
    if src.len() < 3 {
        return Err(GeomError::TooFewCorrespondences {
            got: src.len(),
            min: 3,
        });
    }

    let n = src.len() as f64;
    let mut mu_src = Vec3::ZERO;
    let mut mu_dst = Vec3::ZERO;
    for (&s, &d) in src.iter().zip(dst) {
        mu_src = mu_src + s;
        mu_dst = mu_dst + d;
    }
    mu_src = mu_src / n;
    mu_dst = mu_dst / n;

    // Scatter of the centered source reveals rank deficiency: one dominant
    // eigenvalue means coincident points, two mean a line.
    let mut scatter = Matrix3::zeros();
    let mut var_src = 0.0;
    let mut cov = Matrix3::zeros();
    for (&s, &d) in src.iter().zip(dst) {
        let x = (s - mu_src).to_na();
        let y = (d - mu_dst).to_na();
        scatter += x * x.transpose();
        var_src += x.norm_squared();
        cov += y * x.transpose();
    }
    scatter /= n;
    var_src /= n;
    cov /= n;

    let eig = SymmetricEigen::new(scatter);
    let mut lambda: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    lambda.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if lambda[0] <= 1e-24 {
        return Err(GeomError::DegenerateConfiguration(
            "source points are all coincident".into(),
        ));
    }
    if lambda[1].max(0.0) <= lambda[0] * 1e-18 {
        return Err(GeomError::DegenerateConfiguration(
            "source points are collinear".into(),
        ));
    }

    let svd = SVD::new(cov, true, true);
    let u = svd.u.expect("SVD with u requested");
    let v_t = svd.v_t.expect("SVD with v_t requested");
    let sigma = svd.singular_values;

    // Flip the weakest singular direction if needed to keep det(R) = +1.
    let det_sign = (u * v_t).determinant();
    let mut s_diag = [1.0, 1.0, 1.0];
    if det_sign < 0.0 {
        let mut weakest = 0;
        for i in 1..3 {
            if sigma[i] < sigma[weakest] {
                weakest = i;
            }
        }
        s_diag[weakest] = -1.0;
    }
    let correction = Matrix3::from_diagonal(&nalgebra::Vector3::new(
        s_diag[0], s_diag[1], s_diag[2],
    ));
    let rotation = u * correction * v_t;

    let scale = if with_scale {
        let trace: f64 = (0..3).map(|i| sigma[i] * s_diag[i]).sum();
        let s = trace / var_src;
        if !(s.is_finite() && s > 0.0) {
            return Err(GeomError::DegenerateConfiguration(format!(
                "non-positive best-fit scale {s}"
            )));
        }
        s
    } else {
        1.0
    };

    let translation = mu_dst - Vec3::from_na(rotation * mu_src.to_na() * scale);
    Ok(SimilarityTransform::from_parts(rotation, translation, scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::testutil::{random_points, random_transform};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn alignment_cost(t: &SimilarityTransform, src: &[Vec3], dst: &[Vec3]) -> f64 {
        src.iter()
            .zip(dst)
            .map(|(&s, &d)| t.apply(s).distance(d).powi(2))
            .sum()
    }

    #[test]
    fn identity_for_matching_sets() {
        let pts = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        let t = procrustes(&pts, &pts, true).unwrap();
        for &p in &pts {
            assert!(t.apply(p).distance(p) < 1e-12);
        }
        assert!((t.scale() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recovers_known_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let truth = random_transform(&mut rng, true);
            let src = random_points(&mut rng, 12, 4.0);
            let dst: Vec<Vec3> = src.iter().map(|&p| truth.apply(p)).collect();
            let t = procrustes(&src, &dst, true).unwrap();
            for &p in &src {
                assert!(
                    t.apply(p).distance(truth.apply(p)) < 1e-9,
                    "residual {}",
                    t.apply(p).distance(truth.apply(p))
                );
            }
            assert!((t.scale() - truth.scale()).abs() < 1e-9 * truth.scale());
        }
    }

    #[test]
    fn rigid_fit_keeps_unit_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let truth = random_transform(&mut rng, false);
        let src = random_points(&mut rng, 8, 3.0);
        let dst: Vec<Vec3> = src.iter().map(|&p| truth.apply(p)).collect();
        let t = procrustes(&src, &dst, false).unwrap();
        assert_eq!(t.scale(), 1.0);
        for &p in &src {
            assert!(t.apply(p).distance(truth.apply(p)) < 1e-9);
        }
    }

    #[test]
    fn collinear_source_is_rejected() {
        let src = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(3.0, 0.0, 0.0),
        ];
        let dst = src.clone();
        let r = procrustes(&src, &dst, false);
        assert!(matches!(r, Err(GeomError::DegenerateConfiguration(_))));
    }

    #[test]
    fn coincident_source_is_rejected() {
        let p = Vec3::new(1.0, 1.0, 1.0);
        let src = vec![p, p, p];
        let r = procrustes(&src, &src, false);
        assert!(matches!(r, Err(GeomError::DegenerateConfiguration(_))));
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let a = vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let b = vec![Vec3::ZERO];
        assert!(matches!(
            procrustes(&a, &b, false),
            Err(GeomError::LengthMismatch { .. })
        ));
    }

    // Oracle: no transform from a large random probe family beats the
    // closed-form solution on the least-squares cost.
    #[test]
    fn no_random_probe_beats_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let src = random_points(&mut rng, 10, 3.0);
        // Noisy target so the optimum is not a perfect fit.
        let truth = random_transform(&mut rng, false);
        let dst: Vec<Vec3> = src
            .iter()
            .map(|&p| truth.apply(p) + random_points(&mut rng, 1, 0.05)[0])
            .collect();

        let best = procrustes(&src, &dst, true).unwrap();
        let best_cost = alignment_cost(&best, &src, &dst);
        for _ in 0..1000 {
            let probe = random_transform(&mut rng, true);
            let cost = alignment_cost(&probe, &src, &dst);
            assert!(
                cost + 1e-12 >= best_cost,
                "probe cost {cost} beats closed form {best_cost}"
            );
        }
        // Local perturbations of the optimum must not improve it either.
        use crate::geom::testutil::random_unit;
        use rand::Rng;
        for _ in 0..200 {
            let eps = 1e-4;
            let nudged = SimilarityTransform::new(
                crate::geom::rotation_about_axis(random_unit(&mut rng), eps) * best.rotation(),
                best.translation()
                    + Vec3::new(
                        rng.gen_range(-eps..eps),
                        rng.gen_range(-eps..eps),
                        rng.gen_range(-eps..eps),
                    ),
                best.scale() * (1.0 + rng.gen_range(-eps..eps)),
            )
            .unwrap();
            assert!(alignment_cost(&nudged, &src, &dst) + 1e-12 >= best_cost);
        }
    }
}
