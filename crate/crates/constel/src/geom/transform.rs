//! Similarity transform (rotation, translation, uniform scale) and rotation
//! constructors.

use nalgebra::{Matrix3, Vector3};

use super::{GeomError, Vec3};

/// How far a rotation matrix may drift from orthonormal / det +1 before
/// construction rejects it.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Rigid or similarity transform `p -> scale * R * p + t`.
///
/// The rotation is kept orthonormal with determinant +1; scale is strictly
/// positive. Construct via [`SimilarityTransform::new`] to get validation, or
/// [`SimilarityTransform::identity`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    rotation: Matrix3<f64>,
    translation: Vec3,
    scale: f64,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        SimilarityTransform {
            rotation: Matrix3::identity(),
            translation: Vec3::ZERO,
            scale: 1.0,
        }
    }

    /// Validating constructor: `rotation` must be orthonormal with
    /// determinant +1 within [`ROTATION_TOLERANCE`], `scale` strictly
    /// positive and finite.
    pub fn new(rotation: Matrix3<f64>, translation: Vec3, scale: f64) -> Result<Self, GeomError> {
        let residual = rotation_residual(&rotation);
        if residual > ROTATION_TOLERANCE {
            return Err(GeomError::InvalidParameter(format!(
                "rotation is not orthonormal with det +1 (residual {residual:.3e})"
            )));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(GeomError::InvalidParameter(format!(
                "scale must be finite and > 0, got {scale}"
            )));
        }
        if !translation.is_finite() {
            return Err(GeomError::InvalidParameter(
                "translation has non-finite components".into(),
            ));
        }
        Ok(SimilarityTransform {
            rotation,
            translation,
            scale,
        })
    }

    /// Internal constructor for matrices known orthonormal by construction.
    pub(crate) fn from_parts(rotation: Matrix3<f64>, translation: Vec3, scale: f64) -> Self {
        debug_assert!(
            rotation_residual(&rotation) <= 1e-7,
            "rotation drifted: residual {:.3e}",
            rotation_residual(&rotation)
        );
        SimilarityTransform {
            rotation,
            translation,
            scale,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        Vec3::from_na(self.rotation * p.to_na() * self.scale) + self.translation
    }

    /// `self.compose(&other)` applies `other` first: `(self ∘ other)(p) =
    /// self(other(p))`.
    pub fn compose(&self, other: &SimilarityTransform) -> SimilarityTransform {
        let rotation = self.rotation * other.rotation;
        let translation =
            Vec3::from_na(self.rotation * other.translation.to_na() * self.scale)
                + self.translation;
        SimilarityTransform::from_parts(rotation, translation, self.scale * other.scale)
    }

    pub fn invert(&self) -> SimilarityTransform {
        let inv_rot = self.rotation.transpose();
        let inv_scale = 1.0 / self.scale;
        let translation = Vec3::from_na(inv_rot * (-self.translation).to_na() * inv_scale);
        SimilarityTransform::from_parts(inv_rot, translation, inv_scale)
    }

    /// Rotation angle in radians between this transform's rotation and
    /// `other`'s, ignoring translation and scale.
    pub fn rotation_angle_to(&self, other: &SimilarityTransform) -> f64 {
        let rel = self.rotation * other.rotation.transpose();
        let cos = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        cos.acos()
    }
}

/// Frobenius-norm residual of `R^T R - I` plus the determinant error; zero
/// for a perfect rotation.
pub(crate) fn rotation_residual(rotation: &Matrix3<f64>) -> f64 {
    let gram = rotation.transpose() * rotation;
    let ortho = (gram - Matrix3::identity()).norm();
    let det = (rotation.determinant() - 1.0).abs();
    ortho + det
}

/// Rotation of `angle` radians about a unit `axis` (Rodrigues form).
pub fn rotation_about_axis(axis: Vec3, angle: f64) -> Matrix3<f64> {
    let k = axis.to_na();
    let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    let c = angle.cos();
    let s = angle.sin();
    Matrix3::identity() * c + kx * s + k * k.transpose() * (1.0 - c)
}

/// Smallest rotation taking unit vector `from` onto unit vector `to`.
///
/// The antiparallel case picks a fixed axis orthogonal to `from`, so the
/// result stays deterministic.
pub fn rotation_aligning(from: Vec3, to: Vec3) -> Matrix3<f64> {
    let w = from.cross(to);
    let c = from.dot(to);
    let s2 = w.norm_squared();
    if s2 < 1e-24 {
        if c > 0.0 {
            return Matrix3::identity();
        }
        let helper = if from.x.abs() < 0.9 {
            Vec3::new(1.0, 0.0, 0.0)
        } else {
            Vec3::new(0.0, 1.0, 0.0)
        };
        let axis = from
            .cross(helper)
            .normalized()
            .expect("helper is not parallel to `from`");
        return rotation_about_axis(axis, std::f64::consts::PI);
    }
    let wn = Vector3::new(w.x, w.y, w.z);
    let kx = Matrix3::new(0.0, -wn.z, wn.y, wn.z, 0.0, -wn.x, -wn.y, wn.x, 0.0);
    Matrix3::identity() + kx + kx * kx * ((1.0 - c) / s2)
}
