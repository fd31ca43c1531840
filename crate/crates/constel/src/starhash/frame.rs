//! Canonical frame construction and the descriptor built on top of it.

use crate::geom::{
    point_line_distance, rotation_about_axis, rotation_aligning, SimilarityTransform, Vec3,
};

use super::{degeneracy, diagonal, select_ab, theta_max_projection, StarHashError};

/// The similarity transform taking a constellation into its canonical frame,
/// plus the labels that frame was built from.
#[derive(Debug, Clone)]
pub struct CanonicalFrame {
    /// Maps original coordinates into the canonical frame: baseline point A
    /// lands on (0,0,0), B on (1,1,1).
    pub transform: SimilarityTransform,
    /// Index (into the input slice) of baseline point A.
    pub index_a: usize,
    /// Index of baseline point B.
    pub index_b: usize,
    /// Index of the plane star: the point farthest from line AB.
    pub index_plane: usize,
    /// Rotation about the main diagonal applied after baseline alignment,
    /// in (−π, π].
    pub theta: f64,
    /// Plane normal (unit, perpendicular to the diagonal) expressed in the
    /// intermediate frame, after any half-turn disambiguation.
    pub normal: Vec3,
}

/// Invariant coordinates of the k−2 non-baseline stars, flattened in
/// ascending canonical-x order: 3(k−2) numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    code: Vec<f64>,
}

impl Descriptor {
    /// Wraps a raw code; length must be a positive multiple of 3 covering
    /// at least two stars (k ≥ 4), all components finite.
    pub fn from_code(code: Vec<f64>) -> Result<Self, StarHashError> {
        if code.len() < 6 || code.len() % 3 != 0 {
            return Err(StarHashError::InvalidCode(format!(
                "code length {} is not a multiple of 3 covering k >= 4",
                code.len()
            )));
        }
        if code.iter().any(|c| !c.is_finite()) {
            return Err(StarHashError::InvalidCode(
                "code has non-finite components".into(),
            ));
        }
        Ok(Descriptor { code })
    }

    pub fn code(&self) -> &[f64] {
        &self.code
    }

    /// Number of stars in the constellation this code describes.
    pub fn star_count(&self) -> usize {
        self.code.len() / 3 + 2
    }

    pub fn dims(&self) -> usize {
        self.code.len()
    }
}

/// Euclidean distance between two codes of equal dimension.
pub fn descriptor_distance(a: &Descriptor, b: &Descriptor) -> Result<f64, StarHashError> {
    if a.code.len() != b.code.len() {
        return Err(StarHashError::DimensionMismatch {
            a: a.code.len(),
            b: b.code.len(),
        });
    }
    Ok(a.code
        .iter()
        .zip(&b.code)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Builds the canonical frame for `points` (≥ 3, non-degenerate).
///
/// Steps: translate A to the origin and scale the baseline to √3; rotate
/// the baseline onto the main diagonal; rotate about the diagonal by the
/// angle maximizing the plane normal's z-projection; finally add a half
/// turn if the plane star would land with x > y. The result is unique and
/// depends only on the point set, so any rigid/similarity motion of the
/// input yields the same canonical coordinates.
pub fn canonical_frame(points: &[Vec3]) -> Result<CanonicalFrame, StarHashError> {
    if points.len() < 3 {
        return Err(StarHashError::TooFewPoints {
            got: points.len(),
            min: 3,
        });
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(StarHashError::NonFinite);
    }
    if let Some(reason) = degeneracy(points) {
        return Err(StarHashError::Degenerate(reason));
    }

    let (index_a, index_b) = select_ab(points)?;
    let a = points[index_a];
    let b = points[index_b];
    let ab = b - a;
    let baseline = ab.norm();
    let u = diagonal();

    let scale = 3.0f64.sqrt() / baseline;
    let r0 = rotation_aligning(ab / baseline, u);
    let t1 = SimilarityTransform::from_parts(
        r0,
        Vec3::from_na(r0 * (-a).to_na() * scale),
        scale,
    );

    // Plane star: farthest from the baseline; ties break on the smaller
    // original coordinates so the choice is order-independent.
    let mut index_plane = usize::MAX;
    let mut best: Option<(f64, Vec3)> = None;
    for (idx, &p) in points.iter().enumerate() {
        if idx == index_a || idx == index_b {
            continue;
        }
        let d = point_line_distance(p, a, b).expect("baseline is non-degenerate");
        let better = match best {
            None => true,
            Some((bd, bp)) => {
                d > bd || (d == bd && p.lex_cmp(&bp).is_lt())
            }
        };
        if better {
            best = Some((d, p));
            index_plane = idx;
        }
    }

    let c_int = t1.apply(points[index_plane]);
    let mut normal = u
        .cross(c_int)
        .normalized()
        .ok_or(StarHashError::UndefinedNormal)?;
    let mut theta = theta_max_projection(normal)?;

    let rotated = |theta: f64| {
        SimilarityTransform::from_parts(rotation_about_axis(u, theta), Vec3::ZERO, 1.0)
            .compose(&t1)
    };
    let mut transform = rotated(theta);

    // Half-turn disambiguation: the plane star must satisfy x ≤ y.
    let c_canon = transform.apply(points[index_plane]);
    if c_canon.x > c_canon.y {
        theta += std::f64::consts::PI;
        if theta > std::f64::consts::PI {
            theta -= 2.0 * std::f64::consts::PI;
        }
        normal = -normal;
        transform = rotated(theta);
    }

    Ok(CanonicalFrame {
        transform,
        index_a,
        index_b,
        index_plane,
        theta,
        normal,
    })
}

/// Descriptor for a constellation of ≥ 4 points.
pub fn describe(points: &[Vec3]) -> Result<Descriptor, StarHashError> {
    describe_with_frame(points).map(|(d, _, _)| d)
}

/// Like [`describe`], also returning the canonical frame and the member
/// order the code follows: `[A, B, rest sorted by ascending canonical x]`
/// as indices into `points`.
pub fn describe_with_frame(
    points: &[Vec3],
) -> Result<(Descriptor, CanonicalFrame, Vec<usize>), StarHashError> {
    if points.len() < 4 {
        return Err(StarHashError::TooFewPoints {
            got: points.len(),
            min: 4,
        });
    }
    let frame = canonical_frame(points)?;
    let mut rest: Vec<(usize, Vec3)> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != frame.index_a && *i != frame.index_b)
        .map(|(i, &p)| (i, frame.transform.apply(p)))
        .collect();
    rest.sort_by(|(_, p), (_, q)| p.lex_cmp(q));

    let mut order = Vec::with_capacity(points.len());
    order.push(frame.index_a);
    order.push(frame.index_b);
    let mut code = Vec::with_capacity(3 * rest.len());
    for (idx, p) in &rest {
        order.push(*idx);
        code.extend_from_slice(&[p.x, p.y, p.z]);
    }
    let descriptor = Descriptor::from_code(code)?;
    Ok((descriptor, frame, order))
}

/// Transform taking query-cloud coordinates into map-cloud coordinates,
/// assuming both frames canonicalize the same physical constellation:
/// `map_frame⁻¹ ∘ query_frame`.
pub fn induced_transform(
    query_frame: &CanonicalFrame,
    map_frame: &CanonicalFrame,
) -> SimilarityTransform {
    map_frame.transform.invert().compose(&query_frame.transform)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::testutil::{random_points, random_transform};
    use crate::starhash::tests::theta_oracle;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// A quad already in canonical position: A at the origin, B on (1,1,1),
    /// plane star (0.2, 0.6, 0.4) chosen so θ = 0 and x ≤ y hold as-is.
    fn canonical_quad() -> Vec<Vec3> {
        vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(0.2, 0.6, 0.4),
            Vec3::new(0.3, 0.4, 0.2),
        ]
    }

    fn non_degenerate_constellation(rng: &mut ChaCha8Rng, count: usize) -> Vec<Vec3> {
        loop {
            let pts = random_points(rng, count, 2.0);
            if degeneracy(&pts).is_none() && canonical_frame(&pts).is_ok() {
                return pts;
            }
        }
    }

    #[test]
    fn already_canonical_quad_maps_to_itself() {
        let pts = canonical_quad();
        let frame = canonical_frame(&pts).unwrap();
        for &p in &pts {
            let q = frame.transform.apply(p);
            assert!(q.distance(p) < 1e-9, "{p:?} moved to {q:?}");
        }
        assert!(frame.theta.abs() < 1e-9);
        assert_eq!(frame.index_a, 0);
        assert_eq!(frame.index_b, 1);
        assert_eq!(frame.index_plane, 2);
    }

    #[test]
    fn baseline_lands_on_unit_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for count in [4usize, 5, 6, 8] {
            let pts = non_degenerate_constellation(&mut rng, count);
            let frame = canonical_frame(&pts).unwrap();
            let a = frame.transform.apply(pts[frame.index_a]);
            let b = frame.transform.apply(pts[frame.index_b]);
            assert!(a.norm() < 1e-9, "A at {a:?}");
            assert!(b.distance(Vec3::new(1.0, 1.0, 1.0)) < 1e-9, "B at {b:?}");
            let c = frame.transform.apply(pts[frame.index_plane]);
            assert!(c.x <= c.y + 1e-12, "plane star at {c:?}");
        }
    }

    #[test]
    fn rotated_normal_attains_max_z_with_equal_xy() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let pts = non_degenerate_constellation(&mut rng, 5);
            let frame = canonical_frame(&pts).unwrap();
            let rotated =
                Vec3::from_na(rotation_about_axis(diagonal(), frame.theta) * frame.normal.to_na());
            assert!(
                (rotated.x - rotated.y).abs() < 1e-9,
                "rotated normal {rotated:?}"
            );
            assert!(rotated.z > 0.0, "rotated normal {rotated:?}");
            // Max attainable z for a unit vector orthogonal to the diagonal.
            let cap = (2.0f64 / 3.0).sqrt();
            assert!((rotated.z - cap).abs() < 1e-9);
        }
    }

    #[test]
    fn known_quad_matches_hand_computed_coordinates() {
        // A=(0,0,0), B=(2,2,2), C=(2,0,0), D=(1,1,0): baseline is AB with
        // scale 1/2 and no baseline rotation, θ = 5π/6, no half turn.
        let pts = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(2.0, 2.0, 2.0),
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
        ];
        let frame = canonical_frame(&pts).unwrap();
        assert_eq!((frame.index_a, frame.index_b, frame.index_plane), (0, 1, 2));
        assert!((frame.theta - 5.0 * std::f64::consts::PI / 6.0).abs() < 1e-12);
        let c = frame.transform.apply(pts[2]);
        let d = frame.transform.apply(pts[3]);
        assert!(c.distance(Vec3::new(-0.24401, 0.91068, 0.33333)) < 1e-4, "C at {c:?}");
        assert!(d.distance(Vec3::new(0.04466, 0.33333, 0.62201)) < 1e-4, "D at {d:?}");

        let (descriptor, _, order) = describe_with_frame(&pts).unwrap();
        // C has the smaller canonical x, so it comes first.
        assert_eq!(order, vec![0, 1, 2, 3]);
        assert_eq!(descriptor.dims(), 6);
        assert!((descriptor.code()[0] - c.x).abs() < 1e-15);
    }

    /// Independent canonicalization: reuse only the baseline construction,
    /// then find θ by grid search over the z-projection and apply the
    /// half-turn rule directly.
    fn grid_canonical_coords(pts: &[Vec3]) -> Vec<(usize, Vec3)> {
        let (ia, ib) = select_ab(pts).unwrap();
        let a = pts[ia];
        let b = pts[ib];
        let u = diagonal();
        let scale = 3.0f64.sqrt() / a.distance(b);
        let r0 = rotation_aligning((b - a).normalized().unwrap(), u);
        let t1 = SimilarityTransform::from_parts(
            r0,
            Vec3::from_na(r0 * (-a).to_na() * scale),
            scale,
        );
        let mut ic = usize::MAX;
        let mut best = f64::NEG_INFINITY;
        for (i, &p) in pts.iter().enumerate() {
            if i == ia || i == ib {
                continue;
            }
            let d = point_line_distance(p, a, b).unwrap();
            if d > best {
                best = d;
                ic = i;
            }
        }
        let v = u.cross(t1.apply(pts[ic])).normalized().unwrap();
        let mut theta = theta_oracle(v);
        let apply_all = |theta: f64| -> Vec<(usize, Vec3)> {
            let rot = SimilarityTransform::from_parts(
                rotation_about_axis(u, theta),
                Vec3::ZERO,
                1.0,
            );
            pts.iter()
                .enumerate()
                .map(|(i, &p)| (i, rot.apply(t1.apply(p))))
                .collect()
        };
        let mut coords = apply_all(theta);
        let c = coords
            .iter()
            .find(|(i, _)| *i == ic)
            .map(|(_, p)| *p)
            .unwrap();
        if c.x > c.y {
            theta += std::f64::consts::PI;
            coords = apply_all(theta);
        }
        coords
    }

    #[test]
    fn closed_form_matches_grid_canonicalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..15 {
            let pts = non_degenerate_constellation(&mut rng, 5);
            let frame = canonical_frame(&pts).unwrap();
            let oracle = grid_canonical_coords(&pts);
            for (i, expect) in oracle {
                let got = frame.transform.apply(pts[i]);
                assert!(
                    got.distance(expect) < 1e-6,
                    "point {i}: closed {got:?} vs grid {expect:?}"
                );
            }
        }
    }

    #[test]
    fn descriptor_is_invariant_under_similarity_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..20 {
            let pts = non_degenerate_constellation(&mut rng, 5);
            let base = describe(&pts).unwrap();
            let motion = random_transform(&mut rng, true);
            let moved: Vec<Vec3> = pts.iter().map(|&p| motion.apply(p)).collect();
            let transformed = describe(&moved).unwrap();
            let dist = descriptor_distance(&base, &transformed).unwrap();
            assert!(dist < 1e-9, "descriptor drifted by {dist}");
        }
    }

    #[test]
    fn descriptor_ignores_input_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let pts = non_degenerate_constellation(&mut rng, 6);
        let base = describe(&pts).unwrap();
        for _ in 0..10 {
            let mut shuffled = pts.clone();
            shuffled.shuffle(&mut rng);
            let d = describe(&shuffled).unwrap();
            let same_bits = base
                .code()
                .iter()
                .zip(d.code())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same_bits, "permutation changed the code");
        }
    }

    #[test]
    fn distinct_constellations_are_far_apart() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let mut codes = Vec::new();
        for _ in 0..30 {
            codes.push(describe(&non_degenerate_constellation(&mut rng, 5)).unwrap());
        }
        let mut min_sep = f64::INFINITY;
        for i in 0..codes.len() {
            for j in (i + 1)..codes.len() {
                min_sep = min_sep.min(descriptor_distance(&codes[i], &codes[j]).unwrap());
            }
        }
        assert!(min_sep > 0.05, "two random constellations collide: {min_sep}");
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = Descriptor::from_code(vec![0.0; 6]).unwrap();
        let b = Descriptor::from_code(vec![0.0; 9]).unwrap();
        assert!(matches!(
            descriptor_distance(&a, &b),
            Err(StarHashError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn induced_transform_recovers_motion_between_captures() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for with_scale in [false, true] {
            let map_pts = non_degenerate_constellation(&mut rng, 5);
            let motion = random_transform(&mut rng, with_scale);
            let query_pts: Vec<Vec3> = map_pts.iter().map(|&p| motion.apply(p)).collect();
            let map_frame = canonical_frame(&map_pts).unwrap();
            let query_frame = canonical_frame(&query_pts).unwrap();
            let induced = induced_transform(&query_frame, &map_frame);
            // Takes query coordinates back to map coordinates: motion⁻¹.
            let inverse = motion.invert();
            for &q in &query_pts {
                assert!(
                    induced.apply(q).distance(inverse.apply(q)) < 1e-9,
                    "induced transform disagrees with motion inverse"
                );
            }
        }
    }

    #[test]
    fn too_few_points_for_descriptor() {
        let pts = vec![Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0), Vec3::new(0.5, 0.2, 0.1)];
        assert!(matches!(
            describe(&pts),
            Err(StarHashError::TooFewPoints { min: 4, .. })
        ));
    }

    #[test]
    fn collinear_plane_star_is_rejected() {
        let pts = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(2.0, 0.005, 0.0),
            Vec3::new(3.0, 0.0, 0.0),
        ];
        assert!(matches!(
            canonical_frame(&pts),
            Err(StarHashError::Degenerate(_))
        ));
    }
}
