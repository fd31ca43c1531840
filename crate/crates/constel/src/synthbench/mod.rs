//! Synthetic orchard generation, detection perturbation, and the benchmark
//! experiments built on them.

mod experiments;

pub use experiments::{
    matching_experiment, occlusion_noise_experiment, robustness_csv, trajectory_csv,
    trajectory_experiment, MatchingSummary, RobustnessRow, TrajectoryFrame, TrajectoryResult,
    TrajectorySpec,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::constellations::{ConstellationError, FruitPoint, PointCloud};
use crate::geom::{SimilarityTransform, Vec3};
use crate::mapstore::MapError;
use crate::matcher::MatchError;

/// Errors from synthetic generation and experiments.
#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(
        "could not place fruit {fruit} of tree {tree} after {attempts} attempts; \
         relax min_fruit_separation or reduce fruit counts"
    )]
    InfeasibleSpec {
        tree: usize,
        fruit: usize,
        attempts: usize,
    },
    #[error(transparent)]
    Constellation(#[from] ConstellationError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Match(#[from] MatchError),
}

/// Height of canopy centers above the ground plane.
const CANOPY_HEIGHT: f64 = 1.5;

/// Placement attempts per fruit before the spec is declared infeasible.
const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

/// Layout of a synthetic orchard row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrchardSpec {
    /// Trees along the row.
    pub trees: usize,
    /// Mean fruits per tree; actual counts are uniform in mean ± spread.
    pub fruits_per_tree_mean: u32,
    /// Half-width of the per-tree fruit count range.
    pub fruits_per_tree_spread: u32,
    /// Distance between neighboring canopy centers (m).
    pub tree_spacing: f64,
    /// Radius of the spherical canopy each tree's fruits occupy (m).
    pub canopy_radius: f64,
    /// Minimum pairwise distance between any two fruits (m).
    pub min_fruit_separation: f64,
    /// Maximum row extent; (trees − 1) × spacing must fit inside it (m).
    pub row_length: f64,
    pub seed: u64,
}

impl Default for OrchardSpec {
    fn default() -> OrchardSpec {
        OrchardSpec {
            trees: 5,
            fruits_per_tree_mean: 60,
            fruits_per_tree_spread: 10,
            tree_spacing: 2.5,
            canopy_radius: 1.0,
            min_fruit_separation: 0.10,
            row_length: 10.0,
            seed: 0,
        }
    }
}

impl OrchardSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.trees == 0 {
            return Err(SynthError::InvalidSpec("trees must be at least 1".into()));
        }
        if self.fruits_per_tree_mean == 0 {
            return Err(SynthError::InvalidSpec(
                "fruits_per_tree_mean must be at least 1".into(),
            ));
        }
        if self.fruits_per_tree_spread >= self.fruits_per_tree_mean {
            return Err(SynthError::InvalidSpec(format!(
                "fruits_per_tree_spread ({}) must be smaller than the mean ({})",
                self.fruits_per_tree_spread, self.fruits_per_tree_mean
            )));
        }
        for (name, value) in [
            ("tree_spacing", self.tree_spacing),
            ("canopy_radius", self.canopy_radius),
            ("min_fruit_separation", self.min_fruit_separation),
            ("row_length", self.row_length),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(SynthError::InvalidSpec(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        if self.min_fruit_separation >= self.canopy_radius {
            return Err(SynthError::InvalidSpec(format!(
                "min_fruit_separation ({}) must be smaller than canopy_radius ({})",
                self.min_fruit_separation, self.canopy_radius
            )));
        }
        let row_span = (self.trees - 1) as f64 * self.tree_spacing;
        if row_span > self.row_length {
            return Err(SynthError::InvalidSpec(format!(
                "{} trees at {} m spacing span {row_span} m, beyond row_length {}",
                self.trees, self.tree_spacing, self.row_length
            )));
        }
        Ok(())
    }
}

/// Generates a clustered fruit cloud: canopy centers along the x axis at
/// `tree_spacing`, fruits sampled uniformly in each canopy sphere with
/// rejection until every pair of fruits in the cloud is at least
/// `min_fruit_separation` apart. Ids are sequential; frames-seen counts are
/// uniform in 5..=25. Bit-deterministic per seed.
pub fn gen_orchard(spec: &OrchardSpec) -> Result<PointCloud, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut fruits: Vec<FruitPoint> = Vec::new();
    for tree in 0..spec.trees {
        let center = Vec3 {
            x: tree as f64 * spec.tree_spacing,
            y: 0.0,
            z: CANOPY_HEIGHT,
        };
        let low = spec.fruits_per_tree_mean - spec.fruits_per_tree_spread;
        let high = spec.fruits_per_tree_mean + spec.fruits_per_tree_spread;
        let count = rng.gen_range(low..=high);
        for fruit in 0..count {
            let mut placed = false;
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                let r = spec.canopy_radius;
                let offset = Vec3 {
                    x: rng.gen_range(-r..=r),
                    y: rng.gen_range(-r..=r),
                    z: rng.gen_range(-r..=r),
                };
                if offset.norm() > r {
                    continue;
                }
                let position = center + offset;
                if fruits
                    .iter()
                    .any(|f| f.position.distance(position) < spec.min_fruit_separation)
                {
                    continue;
                }
                fruits.push(FruitPoint {
                    id: fruits.len() as u64,
                    position,
                    frames_seen: rng.gen_range(5..=25),
                });
                placed = true;
                break;
            }
            if !placed {
                return Err(SynthError::InfeasibleSpec {
                    tree,
                    fruit: fruit as usize,
                    attempts: MAX_PLACEMENT_ATTEMPTS,
                });
            }
        }
    }
    let cloud = PointCloud::new(format!("orchard-seed{}", spec.seed), fruits, true)?;
    Ok(cloud)
}

/// Degradations applied to a detection cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbSpec {
    /// Fraction of points removed, in [0, 1); exactly round(fraction × N)
    /// points disappear, chosen uniformly without replacement.
    pub occlusion_fraction: f64,
    /// Standard deviation of zero-mean Gaussian noise added independently
    /// per coordinate (m).
    pub noise_std: f64,
    /// Optional rigid/similarity motion applied after occlusion and noise.
    pub transform: Option<SimilarityTransform>,
    pub seed: u64,
}

impl PerturbSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !self.occlusion_fraction.is_finite()
            || !(0.0..1.0).contains(&self.occlusion_fraction)
        {
            return Err(SynthError::InvalidSpec(format!(
                "occlusion_fraction must lie in [0, 1), got {}",
                self.occlusion_fraction
            )));
        }
        if !self.noise_std.is_finite() || self.noise_std < 0.0 {
            return Err(SynthError::InvalidSpec(format!(
                "noise_std must be non-negative and finite, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }
}

/// Applies occlusion, Gaussian position noise, and an optional motion to a
/// cloud, in that order. Survivors keep their ids and frames-seen counts.
/// The result stays metric only if the input was metric and any applied
/// motion preserves scale. Bit-deterministic per seed.
pub fn perturb(cloud: &PointCloud, spec: &PerturbSpec) -> Result<PointCloud, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = cloud.len();
    let removed = ((spec.occlusion_fraction * n as f64).round() as usize).min(n);
    let mut keep = vec![true; n];
    for index in rand::seq::index::sample(&mut rng, n, removed) {
        keep[index] = false;
    }
    let mut survivors: Vec<FruitPoint> = cloud
        .points()
        .iter()
        .zip(&keep)
        .filter(|(_, &kept)| kept)
        .map(|(point, _)| point.clone())
        .collect();
    if spec.noise_std > 0.0 {
        let noise = Normal::new(0.0, spec.noise_std).expect("validated noise std");
        for point in &mut survivors {
            point.position = point.position
                + Vec3 {
                    x: noise.sample(&mut rng),
                    y: noise.sample(&mut rng),
                    z: noise.sample(&mut rng),
                };
        }
    }
    let mut metric = cloud.metric();
    if let Some(motion) = &spec.transform {
        for point in &mut survivors {
            point.position = motion.apply(point.position);
        }
        metric = metric && (motion.scale() - 1.0).abs() <= 1e-12;
    }
    let cloud = PointCloud::new(cloud.source_id(), survivors, metric)?;
    Ok(cloud)
}

/// Splits one base seed into independent per-cell seeds (splitmix64-style
/// finalizer over base ⊕ salt·φ).
pub(crate) fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
