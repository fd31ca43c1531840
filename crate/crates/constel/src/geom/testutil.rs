//! Shared helpers for geometry tests: seeded random rotations, transforms
//! and point sets.

use nalgebra::Matrix3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{rotation_about_axis, SimilarityTransform, Vec3};

pub(crate) fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if v.norm() > 0.1 && v.norm() <= 1.0 {
            return v.normalized().unwrap();
        }
    }
}

pub(crate) fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let axis = random_unit(rng);
    rotation_about_axis(axis, rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
}

pub(crate) fn random_transform(rng: &mut ChaCha8Rng, with_scale: bool) -> SimilarityTransform {
    let rotation = random_rotation(rng);
    let translation = Vec3::new(
        rng.gen_range(-5.0..5.0),
        rng.gen_range(-5.0..5.0),
        rng.gen_range(-5.0..5.0),
    );
    let scale = if with_scale {
        rng.gen_range(0.1..10.0)
    } else {
        1.0
    };
    SimilarityTransform::new(rotation, translation, scale).unwrap()
}

pub(crate) fn random_points(rng: &mut ChaCha8Rng, count: usize, extent: f64) -> Vec<Vec3> {
    (0..count)
        .map(|_| {
            Vec3::new(
                rng.gen_range(-extent..extent),
                rng.gen_range(-extent..extent),
                rng.gen_range(-extent..extent),
            )
        })
        .collect()
}
