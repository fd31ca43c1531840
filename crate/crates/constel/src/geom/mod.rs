//! Core 3D geometry: vectors, similarity transforms, closed-form Procrustes
//! alignment and RANSAC-robust transform estimation.
//!
//! Everything here is a pure function over immutable values; all randomness
//! enters through explicit seed parameters.

mod align;
mod ransac;
mod transform;

#[cfg(test)]
pub(crate) mod testutil;

pub use align::procrustes;
pub use ransac::{ransac_transform, RansacParams};
pub use transform::{rotation_about_axis, rotation_aligning, SimilarityTransform};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from geometric estimation routines.
#[derive(Debug, Error)]
pub enum GeomError {
    #[error("degenerate line: endpoints coincide (separation {separation:.3e})")]
    DegenerateLine { separation: f64 },
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("need at least {min} correspondences, got {got}")]
    TooFewCorrespondences { got: usize, min: usize },
    #[error("source and destination lengths differ: {src} vs {dst}")]
    LengthMismatch { src: usize, dst: usize },
    #[error("no consensus: best inlier count {best} below minimum {min}")]
    NoConsensus { best: usize, min: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A 3D point or vector. Components are meters in metric mode, arbitrary
/// units otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3 {
            x: self.y * other.z - self.z * other.y,
            y: self.z * other.x - self.x * other.z,
            z: self.x * other.y - self.y * other.x,
        }
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    /// Unit vector in the same direction, or `None` when the norm underflows.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n < 1e-300 {
            None
        } else {
            Some(self / n)
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub(crate) fn to_na(self) -> nalgebra::Vector3<f64> {
        nalgebra::Vector3::new(self.x, self.y, self.z)
    }

    pub(crate) fn from_na(v: nalgebra::Vector3<f64>) -> Self {
        Vec3::new(v.x, v.y, v.z)
    }

    /// Total order on (x, y, z); used for deterministic tie-breaking.
    pub fn lex_cmp(&self, other: &Vec3) -> std::cmp::Ordering {
        (self.x, self.y, self.z)
            .partial_cmp(&(other.x, other.y, other.z))
            .expect("non-finite coordinate in lexicographic comparison")
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl std::ops::Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Perpendicular distance from `p` to the infinite line through `a` and `b`.
///
/// Fails when the line is degenerate (`a` and `b` closer than 1e-12).
pub fn point_line_distance(p: Vec3, a: Vec3, b: Vec3) -> Result<f64, GeomError> {
    let ab = b - a;
    let len = ab.norm();
    if len < 1e-12 {
        return Err(GeomError::DegenerateLine { separation: len });
    }
    let ap = p - a;
    Ok(ap.cross(ab).norm() / len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn point_on_line_has_zero_distance() {
        let d = point_line_distance(
            Vec3::new(0.5, 0.5, 0.5),
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 1.0),
        )
        .unwrap();
        assert!(d.abs() < 1e-12, "distance {d}");
    }

    #[test]
    fn unit_offset_from_axis() {
        let d = point_line_distance(
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
        )
        .unwrap();
        assert!((d - 1.0).abs() < 1e-12, "distance {d}");
    }

    #[test]
    fn coincident_endpoints_is_an_error() {
        let a = Vec3::new(1.0, 2.0, 3.0);
        let err = point_line_distance(Vec3::new(0.0, 0.0, 0.0), a, a);
        assert!(matches!(err, Err(GeomError::DegenerateLine { .. })));
    }

    fn vec3_strategy(range: f64) -> impl Strategy<Value = Vec3> {
        (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        // Oracle: minimize ||p - (a + t (b - a))|| by grid search over t,
        // refined over three successively finer grids.
        #[test]
        fn matches_dense_grid_minimization(
            p in vec3_strategy(10.0),
            a in vec3_strategy(10.0),
            b in vec3_strategy(10.0),
        ) {
            prop_assume!((a - b).norm() > 1.0);
            let d = point_line_distance(p, a, b).unwrap();

            let eval = |t: f64| (p - (a + (b - a) * t)).norm();
            // |t| of the perpendicular foot is bounded by ~35 for these inputs.
            let (mut lo, mut hi) = (-40.0, 40.0);
            let mut best_t = 0.0;
            for _ in 0..3 {
                let steps = 4000;
                let mut best_val = f64::INFINITY;
                for i in 0..=steps {
                    let t = lo + (hi - lo) * (i as f64) / (steps as f64);
                    let v = eval(t);
                    if v < best_val {
                        best_val = v;
                        best_t = t;
                    }
                }
                let half = (hi - lo) / (steps as f64);
                lo = best_t - half;
                hi = best_t + half;
            }
            let oracle = eval(best_t);
            prop_assert!((d - oracle).abs() < 1e-5, "closed form {d} vs grid {oracle}");
        }
    }
}
