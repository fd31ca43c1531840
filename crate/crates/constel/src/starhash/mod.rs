//! Scale/translation/rotation-invariant constellation descriptors.
//!
//! A constellation of k points is brought into a canonical frame fixed by
//! the point set itself: the most-separated pair is mapped to (0,0,0) and
//! (1,1,1), and the remaining rotational freedom about that diagonal is
//! resolved by maximizing the z-projection of the constellation's plane
//! normal. Coordinates of the other k−2 points in that frame form the
//! descriptor code, so two independently captured copies of the same
//! physical constellation produce (near-)identical codes regardless of the
//! sensor pose or global scale.

mod frame;

pub use frame::{
    canonical_frame, describe, describe_with_frame, descriptor_distance, induced_transform,
    CanonicalFrame, Descriptor,
};

use thiserror::Error;

use crate::geom::{point_line_distance, Vec3};

/// Unit vector along the canonical diagonal (1,1,1)/√3.
pub(crate) fn diagonal() -> Vec3 {
    let c = 3.0f64.sqrt().recip();
    Vec3::new(c, c, c)
}

/// Two points closer than this are treated as the same physical landmark.
pub const COINCIDENT_TOLERANCE: f64 = 1e-9;

/// Constellations whose points all lie within this fraction of the baseline
/// length from the baseline itself carry no usable plane star.
pub const COLLINEARITY_RATIO: f64 = 0.02;

/// Why a point set cannot be canonicalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DegeneracyReason {
    /// Every pairwise distance is below [`COINCIDENT_TOLERANCE`].
    AllCoincident,
    /// Points `i` and `j` coincide within [`COINCIDENT_TOLERANCE`].
    CoincidentPair { i: usize, j: usize },
    /// The largest point-to-baseline distance is below
    /// [`COLLINEARITY_RATIO`] of the baseline length.
    NearlyCollinear { max_offset_ratio: f64 },
}

impl std::fmt::Display for DegeneracyReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DegeneracyReason::AllCoincident => write!(f, "all points coincide"),
            DegeneracyReason::CoincidentPair { i, j } => {
                write!(f, "points {i} and {j} coincide")
            }
            DegeneracyReason::NearlyCollinear { max_offset_ratio } => write!(
                f,
                "points nearly collinear (max offset {max_offset_ratio:.4} of baseline)"
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum StarHashError {
    #[error("need at least {min} points, got {got}")]
    TooFewPoints { got: usize, min: usize },
    #[error("degenerate constellation: {0}")]
    Degenerate(DegeneracyReason),
    #[error("non-finite coordinate in input")]
    NonFinite,
    #[error("plane normal direction undefined (normal parallel to diagonal)")]
    UndefinedNormal,
    #[error("descriptor dimensions differ: {a} vs {b}")]
    DimensionMismatch { a: usize, b: usize },
    #[error("invalid descriptor code: {0}")]
    InvalidCode(String),
}

/// Picks the baseline pair: the two most-separated points, labeled so that
/// A (first index) is the one closer to the centroid of the whole set.
///
/// Distance ties between pairs break on the lexicographically smaller
/// (sorted) endpoint coordinates; the A/B orientation tie breaks toward the
/// lexicographically smaller point. The choice therefore depends only on
/// the set of coordinates, not on input order.
pub fn select_ab(points: &[Vec3]) -> Result<(usize, usize), StarHashError> {
    if points.len() < 2 {
        return Err(StarHashError::TooFewPoints {
            got: points.len(),
            min: 2,
        });
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(StarHashError::NonFinite);
    }

    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d = points[i].distance(points[j]);
            let replace = match best {
                None => true,
                Some((bi, bj, bd)) => {
                    if d > bd {
                        true
                    } else if d < bd {
                        false
                    } else {
                        sorted_pair(points[i], points[j]) < sorted_pair(points[bi], points[bj])
                    }
                }
            };
            if replace {
                best = Some((i, j, d));
            }
        }
    }
    let (i, j, d) = best.expect("at least one pair");
    if d <= COINCIDENT_TOLERANCE {
        return Err(StarHashError::Degenerate(DegeneracyReason::AllCoincident));
    }

    let n = points.len() as f64;
    let centroid = points.iter().fold(Vec3::ZERO, |acc, &p| acc + p) / n;
    let di = points[i].distance(centroid);
    let dj = points[j].distance(centroid);
    let a_first = match di.partial_cmp(&dj).expect("finite distances") {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => points[i].lex_cmp(&points[j]).is_le(),
    };
    Ok(if a_first { (i, j) } else { (j, i) })
}

fn sorted_pair(p: Vec3, q: Vec3) -> ((f64, f64, f64), (f64, f64, f64)) {
    let pt = (p.x, p.y, p.z);
    let qt = (q.x, q.y, q.z);
    if pt <= qt {
        (pt, qt)
    } else {
        (qt, pt)
    }
}

/// Angle of rotation about the diagonal that maximizes the z-component of
/// the rotated plane normal `v`.
///
/// Closed form of the argmax of `v'_z(θ) = v_z cosθ + (√3/3)(v_y−v_x) sinθ`.
/// Fails when `v` leaves that projection constant (`v_z = 0` and
/// `v_y = v_x`), which only happens for normals parallel to the diagonal.
pub fn theta_max_projection(v: Vec3) -> Result<f64, StarHashError> {
    let y = 3.0f64.sqrt() * (v.y - v.x);
    let x = 3.0 * v.z;
    if y == 0.0 && x == 0.0 {
        return Err(StarHashError::UndefinedNormal);
    }
    Ok(y.atan2(x))
}

/// Reports why `points` cannot form a usable constellation, or `None` when
/// they can.
///
/// Degenerate cases: any two points coincide within
/// [`COINCIDENT_TOLERANCE`] (all-coincident reported separately), or every
/// point lies within [`COLLINEARITY_RATIO`] × baseline of the baseline
/// line, leaving the rotational frame unresolved.
pub fn degeneracy(points: &[Vec3]) -> Option<DegeneracyReason> {
    if points.len() < 2 {
        return None;
    }
    let mut coincident: Option<(usize, usize)> = None;
    let mut all_coincident = true;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            if points[i].distance(points[j]) <= COINCIDENT_TOLERANCE {
                if coincident.is_none() {
                    coincident = Some((i, j));
                }
            } else {
                all_coincident = false;
            }
        }
    }
    if all_coincident {
        return Some(DegeneracyReason::AllCoincident);
    }
    if let Some((i, j)) = coincident {
        return Some(DegeneracyReason::CoincidentPair { i, j });
    }

    if points.len() < 3 {
        return None;
    }
    let (a, b) = select_ab(points).ok()?;
    let baseline = points[a].distance(points[b]);
    let mut max_offset = 0.0f64;
    for (idx, &p) in points.iter().enumerate() {
        if idx == a || idx == b {
            continue;
        }
        if let Ok(d) = point_line_distance(p, points[a], points[b]) {
            max_offset = max_offset.max(d);
        }
    }
    let ratio = max_offset / baseline;
    if ratio < COLLINEARITY_RATIO {
        return Some(DegeneracyReason::NearlyCollinear {
            max_offset_ratio: ratio,
        });
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::rotation_about_axis;
    use crate::geom::testutil::random_unit;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn collinear_points_pick_extremes_with_a_nearer_centroid() {
        let pts = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(5.0, 0.0, 0.0),
        ];
        let (a, b) = select_ab(&pts).unwrap();
        // Centroid x = 2: the origin is nearer than (5,0,0).
        assert_eq!((a, b), (0, 2));
    }

    #[test]
    fn square_diagonal_tie_is_deterministic() {
        let pts = [
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 0.0),
        ];
        let (a, b) = select_ab(&pts).unwrap();
        // Both diagonals have length √2; the pair containing the
        // lexicographically smallest endpoint wins, and the centroid tie
        // puts the smaller point first.
        assert_eq!(pts[a], Vec3::new(0.0, 0.0, 0.0));
        assert_eq!(pts[b], Vec3::new(1.0, 1.0, 0.0));
        // Input order must not matter.
        let mut reversed = pts;
        reversed.reverse();
        let (ra, rb) = select_ab(&reversed).unwrap();
        assert_eq!(reversed[ra], pts[a]);
        assert_eq!(reversed[rb], pts[b]);
    }

    #[test]
    fn coincident_points_rejected() {
        let pts = [Vec3::ZERO, Vec3::ZERO];
        assert!(matches!(
            select_ab(&pts),
            Err(StarHashError::Degenerate(DegeneracyReason::AllCoincident))
        ));
    }

    #[test]
    fn theta_example_normal_in_xy_antidiagonal() {
        let s = 2.0f64.sqrt().recip();
        let v = Vec3::new(s, -s, 0.0);
        let theta = theta_max_projection(v).unwrap();
        assert!((theta + PI / 2.0).abs() < 1e-12, "theta {theta}");
    }

    #[test]
    fn theta_example_downward_normal_flips_by_pi() {
        let n = 6.0f64.sqrt();
        let v = Vec3::new(1.0 / n, 1.0 / n, -2.0 / n);
        let theta = theta_max_projection(v).unwrap();
        assert!((theta - PI).abs() < 1e-12, "theta {theta}");
    }

    #[test]
    fn theta_undefined_for_diagonal_normal() {
        assert!(matches!(
            theta_max_projection(Vec3::ZERO),
            Err(StarHashError::UndefinedNormal)
        ));
    }

    /// Grid argmax of the rotated normal's z-component, refined by ternary
    /// search; independent of the closed form.
    pub(crate) fn theta_oracle(v: Vec3) -> f64 {
        let u = diagonal();
        let project = |theta: f64| (rotation_about_axis(u, theta) * v.to_na()).z;
        let steps = 20_000;
        let mut best_theta = 0.0;
        let mut best = f64::NEG_INFINITY;
        for i in 0..steps {
            let theta = -PI + 2.0 * PI * (i as f64) / (steps as f64);
            let val = project(theta);
            if val > best {
                best = val;
                best_theta = theta;
            }
        }
        let width = 2.0 * PI / (steps as f64);
        let (mut lo, mut hi) = (best_theta - width, best_theta + width);
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if project(m1) < project(m2) {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        let theta = 0.5 * (lo + hi);
        // Normalize into (-π, π].
        if theta <= -PI {
            theta + 2.0 * PI
        } else if theta > PI {
            theta - 2.0 * PI
        } else {
            theta
        }
    }

    #[test]
    fn closed_form_matches_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let u = diagonal();
        for _ in 0..25 {
            // A valid plane normal is perpendicular to the diagonal.
            let v = loop {
                let raw = random_unit(&mut rng);
                if let Some(v) = u.cross(raw).normalized() {
                    break v;
                }
            };
            let closed = theta_max_projection(v).unwrap();
            let oracle = theta_oracle(v);
            let diff = (closed - oracle).abs().min(2.0 * PI - (closed - oracle).abs());
            assert!(diff < 1e-6, "closed {closed} vs oracle {oracle}");
        }
    }

    #[test]
    fn collinear_constellation_flagged() {
        let pts = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(2.0, 0.001, 0.0),
            Vec3::new(3.0, 0.0, 0.0),
        ];
        assert!(matches!(
            degeneracy(&pts),
            Some(DegeneracyReason::NearlyCollinear { .. })
        ));
    }

    #[test]
    fn offset_ratio_threshold_is_two_percent() {
        let make = |offset: f64| {
            [
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.5, offset, 0.0),
            ]
        };
        assert!(degeneracy(&make(0.019)).is_some());
        assert!(degeneracy(&make(0.021)).is_none());
    }

    #[test]
    fn coincident_pair_flagged_with_indices() {
        let pts = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.5, 1.0, 0.0),
        ];
        assert_eq!(
            degeneracy(&pts),
            Some(DegeneracyReason::CoincidentPair { i: 1, j: 2 })
        );
    }

    #[test]
    fn healthy_constellation_passes() {
        let pts = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(0.2, 0.6, 0.4),
            Vec3::new(0.3, 0.4, 0.2),
        ];
        assert_eq!(degeneracy(&pts), None);
    }
}
