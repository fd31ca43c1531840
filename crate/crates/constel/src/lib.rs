//! Re-identification of sparse 3D landmark clouds across independently
//! captured scenes.
//!
//! The pipeline builds scale/translation/rotation-invariant descriptors for
//! small local constellations of points, stores them in a queryable map, and
//! matches fresh observations against that map to recover point-level
//! correspondences plus a 6-DoF (optionally scaled) pose.

pub mod constellations;
pub mod geom;
mod kdtree;
pub mod mapstore;
pub mod matcher;
pub mod starhash;
pub mod synthbench;

pub use mapstore::{build_map, ConstellationMap, FruitRecord, MapEntry, MapError, FORMAT_VERSION};
pub use matcher::{
    assign_hungarian, clique_filter, complete_matches, estimate_pose, evaluate, match_clouds,
    maximum_clique, vote_correspondences, ConsistencyMode, Correspondence, EvalReport, FixedBitSet,
    MatchError, MatchParams, MatchResult, MatchStage, MatchStats, VoteMatrix,
};
pub use synthbench::{
    gen_orchard, matching_experiment, occlusion_noise_experiment, perturb, robustness_csv,
    trajectory_csv, trajectory_experiment, MatchingSummary, OrchardSpec, PerturbSpec,
    RobustnessRow, SynthError, TrajectoryFrame, TrajectoryResult, TrajectorySpec,
};

pub use constellations::{
    enumerate_constellations, is_degenerate, knn, CloudIndex, Constellation, ConstellationError,
    EnumerationParams, FruitPoint, PointCloud,
};

pub use starhash::{
    canonical_frame, describe, describe_with_frame, descriptor_distance, induced_transform,
    select_ab, theta_max_projection, CanonicalFrame, DegeneracyReason, Descriptor, StarHashError,
};

pub use geom::{
    point_line_distance, procrustes, ransac_transform, rotation_about_axis, rotation_aligning,
    GeomError, RansacParams, SimilarityTransform, Vec3,
};
