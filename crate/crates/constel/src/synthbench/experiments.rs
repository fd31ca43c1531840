//! The three benchmark experiments: occlusion/noise robustness, repeated
//! matching with ground truth, and trajectory estimation along a camera
//! path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::constellations::{EnumerationParams, FruitPoint, PointCloud};
use crate::geom::{SimilarityTransform, Vec3};
use crate::mapstore::{build_map, full_precision};
use crate::matcher::{evaluate, match_clouds, EvalReport, MatchParams};

use super::{derive_seed, gen_orchard, perturb, OrchardSpec, PerturbSpec, SynthError};

/// Aggregated matching error for one (occlusion, noise) grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RobustnessRow {
    pub occlusion_fraction: f64,
    pub noise_std: f64,
    /// Repeats that produced a transform (successful matches).
    pub repeats: usize,
    /// Mean over successful repeats of the average distance between each
    /// original point and its image under the estimated transform; NaN when
    /// every repeat failed.
    pub mean_error: f64,
    /// Sample standard deviation of the per-repeat averages (0 with fewer
    /// than two successes, NaN when all failed).
    pub std_error: f64,
    /// Repeats where matching collapsed.
    pub failures: usize,
}

/// Sweeps an occlusion × noise grid: the map is built once from the clean
/// cloud; each cell perturbs the cloud (no motion, so the true alignment is
/// the identity), matches it back, and measures the mean displacement the
/// estimated transform induces on the original points. Cells run in
/// parallel with seeds derived from `seed`; failed repeats are counted, not
/// fatal. Rows come back in grid order (occlusion-major).
pub fn occlusion_noise_experiment(
    cloud: &PointCloud,
    occlusion_grid: &[f64],
    noise_grid: &[f64],
    repeats: usize,
    enumeration: &EnumerationParams,
    matching: &MatchParams,
    seed: u64,
) -> Result<Vec<RobustnessRow>, SynthError> {
    if occlusion_grid.is_empty() || noise_grid.is_empty() {
        return Err(SynthError::InvalidSpec(
            "occlusion and noise grids must be nonempty".into(),
        ));
    }
    if repeats == 0 {
        return Err(SynthError::InvalidSpec("repeats must be at least 1".into()));
    }
    matching.validate()?;
    let map = build_map(cloud, enumeration)?;

    let cells: Vec<(usize, f64, f64)> = occlusion_grid
        .iter()
        .enumerate()
        .flat_map(|(i, &occ)| {
            noise_grid
                .iter()
                .enumerate()
                .map(move |(j, &noise)| (i * noise_grid.len() + j, occ, noise))
        })
        .collect();

    let rows: Vec<Result<RobustnessRow, SynthError>> = cells
        .par_iter()
        .map(|&(cell_index, occlusion_fraction, noise_std)| {
            let mut errors = Vec::with_capacity(repeats);
            let mut failures = 0usize;
            for repeat in 0..repeats {
                let cell_seed = derive_seed(seed, (cell_index * repeats + repeat) as u64);
                let perturbed = perturb(
                    cloud,
                    &PerturbSpec {
                        occlusion_fraction,
                        noise_std,
                        transform: None,
                        seed: cell_seed,
                    },
                )?;
                let params = MatchParams {
                    seed: derive_seed(cell_seed, 1),
                    ..*matching
                };
                match match_clouds(&perturbed, &map, &params) {
                    Ok(result) => {
                        let mean = cloud
                            .points()
                            .iter()
                            .map(|p| result.transform.apply(p.position).distance(p.position))
                            .sum::<f64>()
                            / cloud.len() as f64;
                        errors.push(mean);
                    }
                    Err(_) => failures += 1,
                }
            }
            let successes = errors.len();
            let (mean_error, std_error) = if successes == 0 {
                (f64::NAN, f64::NAN)
            } else {
                let mean = errors.iter().sum::<f64>() / successes as f64;
                let std = if successes < 2 {
                    0.0
                } else {
                    (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>()
                        / (successes - 1) as f64)
                        .sqrt()
                };
                (mean, std)
            };
            Ok(RobustnessRow {
                occlusion_fraction,
                noise_std,
                repeats: successes,
                mean_error,
                std_error,
                failures,
            })
        })
        .collect();
    rows.into_iter().collect()
}

/// Robustness rows as CSV with the header
/// `occlusion_fraction,noise_std,repeats,mean_error,std_error`.
pub fn robustness_csv(rows: &[RobustnessRow]) -> String {
    let mut out = String::from("occlusion_fraction,noise_std,repeats,mean_error,std_error\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            full_precision(row.occlusion_fraction),
            full_precision(row.noise_std),
            row.repeats,
            full_precision(row.mean_error),
            full_precision(row.std_error),
        ));
    }
    out
}

/// Outcome of [`matching_experiment`]: per-run scores and their means.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchingSummary {
    /// One report per repeat, in run order; failed runs score zero.
    pub runs: Vec<EvalReport>,
    pub mean_precision: f64,
    pub mean_recall: f64,
    /// Runs where matching collapsed entirely.
    pub failures: usize,
}

/// Repeats the cross-scene matching protocol: one clean orchard becomes the
/// map; one fixed perturbed copy of it (same detections every run) is
/// matched back with a different pipeline seed per run and scored against
/// the identity ground truth. Match failures become zero-score runs.
pub fn matching_experiment(
    base: &OrchardSpec,
    perturbation: &PerturbSpec,
    enumeration: &EnumerationParams,
    matching: &MatchParams,
    repeats: usize,
) -> Result<MatchingSummary, SynthError> {
    if repeats == 0 {
        return Err(SynthError::InvalidSpec("repeats must be at least 1".into()));
    }
    matching.validate()?;
    let cloud = gen_orchard(base)?;
    let map = build_map(&cloud, enumeration)?;
    let perturbed = perturb(&cloud, perturbation)?;
    let truth: Vec<(u64, u64)> = perturbed.ids().map(|id| (id, id)).collect();
    let eligible_truth = truth
        .iter()
        .filter(|&&(q, _)| {
            perturbed
                .point(q)
                .is_some_and(|p| p.frames_seen >= enumeration.min_frames)
        })
        .count();

    let runs: Vec<EvalReport> = (0..repeats)
        .into_par_iter()
        .map(|run| {
            let params = MatchParams {
                seed: derive_seed(matching.seed, run as u64),
                ..*matching
            };
            match match_clouds(&perturbed, &map, &params) {
                Ok(result) => evaluate(&result, &truth, &perturbed, &map, enumeration.min_frames),
                Err(_) => EvalReport {
                    true_positives: 0,
                    false_positives: 0,
                    false_negatives: eligible_truth,
                    precision: 0.0,
                    recall: 0.0,
                },
            }
        })
        .collect();
    let failures = runs
        .iter()
        .filter(|r| r.true_positives == 0 && r.false_positives == 0)
        .count();
    let mean_precision = runs.iter().map(|r| r.precision).sum::<f64>() / runs.len() as f64;
    let mean_recall = runs.iter().map(|r| r.recall).sum::<f64>() / runs.len() as f64;
    Ok(MatchingSummary {
        runs,
        mean_precision,
        mean_recall,
        failures,
    })
}

/// A camera path through the orchard plus the detection model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySpec {
    /// World→camera poses, one per frame; scale must be 1.
    pub waypoints: Vec<SimilarityTransform>,
    /// Fruits beyond this camera distance are invisible (m).
    pub visibility_range: f64,
    /// Half-angle of the visibility cone around the camera's +z axis (rad).
    pub fov_half_angle: f64,
    /// Std of Gaussian noise on detected camera-frame positions (m).
    pub detection_noise_std: f64,
    pub seed: u64,
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.waypoints.is_empty() {
            return Err(SynthError::InvalidSpec(
                "at least one waypoint is required".into(),
            ));
        }
        for (i, pose) in self.waypoints.iter().enumerate() {
            if (pose.scale() - 1.0).abs() > 1e-9 {
                return Err(SynthError::InvalidSpec(format!(
                    "waypoint {i} has scale {}, camera poses must be rigid",
                    pose.scale()
                )));
            }
        }
        if !self.visibility_range.is_finite() || self.visibility_range <= 0.0 {
            return Err(SynthError::InvalidSpec(format!(
                "visibility_range must be positive and finite, got {}",
                self.visibility_range
            )));
        }
        if !self.fov_half_angle.is_finite()
            || self.fov_half_angle <= 0.0
            || self.fov_half_angle > std::f64::consts::PI
        {
            return Err(SynthError::InvalidSpec(format!(
                "fov_half_angle must lie in (0, π], got {}",
                self.fov_half_angle
            )));
        }
        if !self.detection_noise_std.is_finite() || self.detection_noise_std < 0.0 {
            return Err(SynthError::InvalidSpec(format!(
                "detection_noise_std must be non-negative and finite, got {}",
                self.detection_noise_std
            )));
        }
        Ok(())
    }

    /// A straight pass along the tree row: camera centers at y = −4 m,
    /// z = 1 m, x sweeping `x_start`..`x_end` over `frames` evenly spaced
    /// frames, looking at the row (+y world) with a 6 m range and a wide
    /// (1.2 rad) cone.
    pub fn linear_path(
        frames: usize,
        x_start: f64,
        x_end: f64,
        detection_noise_std: f64,
        seed: u64,
    ) -> TrajectorySpec {
        // Camera axes in world coordinates: x_cam = +x, y_cam = −z (image
        // "down"), z_cam = +y (optical axis toward the trees).
        let rotation = nalgebra::Matrix3::new(
            1.0, 0.0, 0.0, //
            0.0, 0.0, -1.0, //
            0.0, 1.0, 0.0,
        );
        let waypoints = (0..frames)
            .map(|i| {
                let t = if frames > 1 {
                    i as f64 / (frames - 1) as f64
                } else {
                    0.0
                };
                let center = nalgebra::Vector3::new(
                    x_start + t * (x_end - x_start),
                    -4.0,
                    1.0,
                );
                let translation = -(rotation * center);
                SimilarityTransform::new(
                    rotation,
                    Vec3 {
                        x: translation.x,
                        y: translation.y,
                        z: translation.z,
                    },
                    1.0,
                )
                .expect("axis-aligned camera pose is valid")
            })
            .collect();
        TrajectorySpec {
            waypoints,
            visibility_range: 6.0,
            fov_half_angle: 1.2,
            detection_noise_std,
            seed,
        }
    }
}

/// Localization outcome for one frame; error fields are NaN when the frame
/// could not be localized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryFrame {
    pub frame: usize,
    /// Fruits visible from the waypoint.
    pub visible: usize,
    pub localized: bool,
    /// Signed camera-center error per world axis (m).
    pub tx_err: f64,
    pub ty_err: f64,
    pub tz_err: f64,
    /// Angle between estimated and true camera orientation (rad).
    pub rot_err_rad: f64,
}

/// Full outcome of [`trajectory_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryResult {
    pub frames: Vec<TrajectoryFrame>,
    /// RMS camera-center error over localized frames (m).
    pub translation_rmse: f64,
    /// RMS orientation error over localized frames (rad).
    pub rotation_rmse: f64,
    pub localized_frames: usize,
    /// True world→camera poses, one per frame.
    #[serde(skip_serializing)]
    pub truth_poses: Vec<SimilarityTransform>,
    /// Estimated world→camera poses; None where localization failed.
    #[serde(skip_serializing)]
    pub estimated_poses: Vec<Option<SimilarityTransform>>,
}

/// The camera center of a world→camera pose.
fn camera_center(world_to_camera: &SimilarityTransform) -> Vec3 {
    world_to_camera.invert().apply(Vec3::ZERO)
}

/// Simulates localization along a camera path: per frame, fruits within
/// range and the field-of-view cone are observed in camera coordinates
/// (with optional detection noise), matched against the map built from the
/// orchard, and the camera pose is recovered as the inverse of the
/// estimated camera→world transform. Frames with too few visible fruits or
/// failed matches are recorded as unlocalized rather than aborting.
pub fn trajectory_experiment(
    orchard: &PointCloud,
    trajectory: &TrajectorySpec,
    enumeration: &EnumerationParams,
    matching: &MatchParams,
) -> Result<TrajectoryResult, SynthError> {
    trajectory.validate()?;
    matching.validate()?;
    let map = build_map(orchard, enumeration)?;
    let cos_fov = trajectory.fov_half_angle.cos();

    let mut frames = Vec::with_capacity(trajectory.waypoints.len());
    let mut estimated_poses = Vec::with_capacity(trajectory.waypoints.len());
    for (index, pose) in trajectory.waypoints.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(trajectory.seed, index as u64));
        let noise = (trajectory.detection_noise_std > 0.0)
            .then(|| Normal::new(0.0, trajectory.detection_noise_std).expect("validated std"));
        let mut detections: Vec<FruitPoint> = Vec::new();
        for point in orchard.points() {
            let in_camera = pose.apply(point.position);
            let distance = in_camera.norm();
            if distance > trajectory.visibility_range || distance <= 0.0 {
                continue;
            }
            if in_camera.z / distance < cos_fov {
                continue;
            }
            let mut position = in_camera;
            if let Some(noise) = &noise {
                position = position
                    + Vec3 {
                        x: noise.sample(&mut rng),
                        y: noise.sample(&mut rng),
                        z: noise.sample(&mut rng),
                    };
            }
            detections.push(FruitPoint {
                id: point.id,
                position,
                frames_seen: point.frames_seen,
            });
        }
        let visible = detections.len();

        let mut estimated: Option<SimilarityTransform> = None;
        if visible >= enumeration.k {
            let camera_cloud =
                PointCloud::new(format!("frame-{index}"), detections, true)?;
            let params = MatchParams {
                seed: derive_seed(matching.seed, index as u64),
                ..*matching
            };
            if let Ok(result) = match_clouds(&camera_cloud, &map, &params) {
                // result.transform maps camera→world; the camera pose is
                // its inverse.
                estimated = Some(result.transform.invert());
            }
        }

        let frame = match &estimated {
            Some(est) => {
                let center_err = camera_center(est) - camera_center(pose);
                TrajectoryFrame {
                    frame: index,
                    visible,
                    localized: true,
                    tx_err: center_err.x,
                    ty_err: center_err.y,
                    tz_err: center_err.z,
                    rot_err_rad: est.rotation_angle_to(pose),
                }
            }
            None => TrajectoryFrame {
                frame: index,
                visible,
                localized: false,
                tx_err: f64::NAN,
                ty_err: f64::NAN,
                tz_err: f64::NAN,
                rot_err_rad: f64::NAN,
            },
        };
        frames.push(frame);
        estimated_poses.push(estimated);
    }

    let localized: Vec<&TrajectoryFrame> = frames.iter().filter(|f| f.localized).collect();
    let (translation_rmse, rotation_rmse) = if localized.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let t2 = localized
            .iter()
            .map(|f| f.tx_err * f.tx_err + f.ty_err * f.ty_err + f.tz_err * f.tz_err)
            .sum::<f64>()
            / localized.len() as f64;
        let r2 = localized
            .iter()
            .map(|f| f.rot_err_rad * f.rot_err_rad)
            .sum::<f64>()
            / localized.len() as f64;
        (t2.sqrt(), r2.sqrt())
    };
    Ok(TrajectoryResult {
        localized_frames: localized.len(),
        frames,
        translation_rmse,
        rotation_rmse,
        truth_poses: trajectory.waypoints.clone(),
        estimated_poses,
    })
}

/// Trajectory frames as CSV with the header
/// `frame,tx_err,ty_err,tz_err,rot_err_rad`.
pub fn trajectory_csv(result: &TrajectoryResult) -> String {
    let mut out = String::from("frame,tx_err,ty_err,tz_err,rot_err_rad\n");
    for frame in &result.frames {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            frame.frame,
            full_precision(frame.tx_err),
            full_precision(frame.ty_err),
            full_precision(frame.tz_err),
            full_precision(frame.rot_err_rad),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::testutil::random_transform;

    fn small_orchard(seed: u64) -> OrchardSpec {
        OrchardSpec {
            trees: 3,
            fruits_per_tree_mean: 25,
            fruits_per_tree_spread: 3,
            seed,
            ..OrchardSpec::default()
        }
    }

    fn fast_enumeration() -> EnumerationParams {
        EnumerationParams {
            k: 4,
            n: 6,
            min_frames: 5,
            max_per_anchor: None,
        }
    }

    #[test]
    fn clean_cell_has_negligible_error() {
        let cloud = gen_orchard(&small_orchard(1)).unwrap();
        let rows = occlusion_noise_experiment(
            &cloud,
            &[0.0],
            &[0.0],
            2,
            &fast_enumeration(),
            &MatchParams::default(),
            99,
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].repeats, 2);
        assert_eq!(rows[0].failures, 0);
        assert!(rows[0].mean_error < 1e-9, "error {}", rows[0].mean_error);
    }

    #[test]
    fn heavy_occlusion_stays_stable() {
        let cloud = gen_orchard(&small_orchard(2)).unwrap();
        let rows = occlusion_noise_experiment(
            &cloud,
            &[0.45],
            &[0.0],
            2,
            &fast_enumeration(),
            &MatchParams::default(),
            7,
        )
        .unwrap();
        assert_eq!(rows[0].failures, 0);
        // Noise-free matching should recover the identity transform almost
        // exactly even at 45% occlusion (scene spans ~10 m).
        assert!(rows[0].mean_error < 1e-5, "error {}", rows[0].mean_error);
    }

    #[test]
    fn error_grows_with_noise() {
        let cloud = gen_orchard(&small_orchard(3)).unwrap();
        let rows = occlusion_noise_experiment(
            &cloud,
            &[0.1],
            &[0.0, 0.02],
            2,
            &fast_enumeration(),
            &MatchParams::default(),
            11,
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].mean_error <= rows[1].mean_error);
    }

    #[test]
    fn experiment_rows_are_deterministic_and_ordered() {
        let cloud = gen_orchard(&small_orchard(4)).unwrap();
        let run = || {
            occlusion_noise_experiment(
                &cloud,
                &[0.0, 0.2],
                &[0.0, 0.01],
                1,
                &fast_enumeration(),
                &MatchParams::default(),
                5,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        let grid: Vec<(f64, f64)> = a
            .iter()
            .map(|r| (r.occlusion_fraction, r.noise_std))
            .collect();
        assert_eq!(grid, vec![(0.0, 0.0), (0.0, 0.01), (0.2, 0.0), (0.2, 0.01)]);
    }

    #[test]
    fn robustness_csv_shape() {
        let rows = vec![RobustnessRow {
            occlusion_fraction: 0.1,
            noise_std: 0.01,
            repeats: 3,
            mean_error: 0.005,
            std_error: 0.001,
            failures: 0,
        }];
        let csv = robustness_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "occlusion_fraction,noise_std,repeats,mean_error,std_error"
        );
        let data = lines.next().unwrap();
        assert_eq!(data.split(',').count(), 5);
        assert!(data.contains(",3,"));
    }

    #[test]
    fn matching_experiment_clean_is_perfect() {
        let summary = matching_experiment(
            &small_orchard(5),
            &PerturbSpec {
                occlusion_fraction: 0.0,
                noise_std: 0.0,
                transform: None,
                seed: 0,
            },
            &fast_enumeration(),
            &MatchParams::default(),
            2,
        )
        .unwrap();
        assert_eq!(summary.failures, 0);
        assert_eq!(summary.mean_precision, 1.0);
        assert_eq!(summary.mean_recall, 1.0);
    }

    #[test]
    fn matching_experiment_with_motion_occlusion_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let motion = random_transform(&mut rng, false);
        let summary = matching_experiment(
            &small_orchard(6),
            &PerturbSpec {
                occlusion_fraction: 0.2,
                noise_std: 0.01,
                transform: Some(motion),
                seed: 3,
            },
            &fast_enumeration(),
            &MatchParams::default(),
            3,
        )
        .unwrap();
        assert_eq!(summary.failures, 0);
        assert!(summary.mean_precision >= 0.95, "{summary:?}");
        assert!(summary.mean_recall >= 0.85, "{summary:?}");
        // Same detections, different pipeline seeds: spread stays small.
        let precisions: Vec<f64> = summary.runs.iter().map(|r| r.precision).collect();
        let spread = precisions.iter().cloned().fold(f64::MIN, f64::max)
            - precisions.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 0.02, "precision spread {spread}");
    }

    #[test]
    fn static_waypoint_recovers_pose_exactly() {
        let orchard = gen_orchard(&small_orchard(7)).unwrap();
        let path = TrajectorySpec::linear_path(1, 2.5, 2.5, 0.0, 0);
        let result =
            trajectory_experiment(&orchard, &path, &fast_enumeration(), &MatchParams::default())
                .unwrap();
        assert_eq!(result.frames.len(), 1);
        let frame = &result.frames[0];
        assert!(frame.localized, "frame saw {} fruits", frame.visible);
        assert!(frame.tx_err.abs() < 1e-9);
        assert!(frame.ty_err.abs() < 1e-9);
        assert!(frame.tz_err.abs() < 1e-9);
        assert!(frame.rot_err_rad < 1e-9);
    }

    #[test]
    fn linear_path_stays_accurate_without_noise() {
        let orchard = gen_orchard(&OrchardSpec::default()).unwrap();
        let path = TrajectorySpec::linear_path(6, 0.0, 10.0, 0.0, 1);
        let result =
            trajectory_experiment(&orchard, &path, &fast_enumeration(), &MatchParams::default())
                .unwrap();
        assert_eq!(result.localized_frames, result.frames.len());
        for frame in &result.frames {
            assert!(frame.tx_err.abs() < 0.01, "{frame:?}");
            assert!(frame.ty_err.abs() < 0.01, "{frame:?}");
            assert!(frame.tz_err.abs() < 0.01, "{frame:?}");
            assert!(frame.rot_err_rad < 0.2f64.to_radians(), "{frame:?}");
        }
    }

    #[test]
    fn noisy_path_errors_stay_bounded() {
        let orchard = gen_orchard(&OrchardSpec::default()).unwrap();
        let path = TrajectorySpec::linear_path(6, 0.0, 10.0, 0.01, 2);
        let result =
            trajectory_experiment(&orchard, &path, &fast_enumeration(), &MatchParams::default())
                .unwrap();
        assert_eq!(result.localized_frames, result.frames.len());
        assert!(result.translation_rmse < 0.05, "{}", result.translation_rmse);
        assert!(result.rotation_rmse < 0.05, "{}", result.rotation_rmse);
    }

    #[test]
    fn relative_poses_compose_consistently() {
        let orchard = gen_orchard(&OrchardSpec::default()).unwrap();
        let path = TrajectorySpec::linear_path(4, 1.0, 9.0, 0.0, 3);
        let result =
            trajectory_experiment(&orchard, &path, &fast_enumeration(), &MatchParams::default())
                .unwrap();
        for i in 0..result.frames.len() - 1 {
            let (Some(est_a), Some(est_b)) =
                (&result.estimated_poses[i], &result.estimated_poses[i + 1])
            else {
                panic!("frame {i} or {} not localized", i + 1);
            };
            let est_rel = est_b.compose(&est_a.invert());
            let truth_rel = result.truth_poses[i + 1].compose(&result.truth_poses[i].invert());
            assert!(est_rel.rotation_angle_to(&truth_rel) < 1e-6);
            assert!(
                (est_rel.translation() - truth_rel.translation()).norm() < 0.02,
                "relative translation off at frame {i}"
            );
        }
    }

    #[test]
    fn unseeable_frames_are_sentinels_not_errors() {
        let orchard = gen_orchard(&small_orchard(8)).unwrap();
        // One waypoint far away from the orchard sees nothing.
        let mut path = TrajectorySpec::linear_path(2, 0.0, 5.0, 0.0, 4);
        path.waypoints[1] = TrajectorySpec::linear_path(1, 500.0, 500.0, 0.0, 4).waypoints[0];
        let result =
            trajectory_experiment(&orchard, &path, &fast_enumeration(), &MatchParams::default())
                .unwrap();
        assert!(result.frames[0].localized);
        assert!(!result.frames[1].localized);
        assert_eq!(result.frames[1].visible, 0);
        assert!(result.frames[1].tx_err.is_nan());
        assert_eq!(result.localized_frames, 1);
        let csv = trajectory_csv(&result);
        assert_eq!(csv.lines().next().unwrap(), "frame,tx_err,ty_err,tz_err,rot_err_rad");
        assert!(csv.lines().nth(2).unwrap().contains("NaN"));
    }

    #[test]
    fn trajectory_spec_validation() {
        let good = TrajectorySpec::linear_path(2, 0.0, 5.0, 0.0, 0);
        assert!(good.validate().is_ok());
        let empty = TrajectorySpec { waypoints: vec![], ..good.clone() };
        assert!(matches!(empty.validate(), Err(SynthError::InvalidSpec(_))));
        let bad_range = TrajectorySpec { visibility_range: 0.0, ..good.clone() };
        assert!(matches!(bad_range.validate(), Err(SynthError::InvalidSpec(_))));
        let bad_fov = TrajectorySpec { fov_half_angle: 4.0, ..good.clone() };
        assert!(matches!(bad_fov.validate(), Err(SynthError::InvalidSpec(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scaled = TrajectorySpec {
            waypoints: vec![random_transform(&mut rng, true)],
            ..good
        };
        assert!(matches!(scaled.validate(), Err(SynthError::InvalidSpec(_))));
    }
}
