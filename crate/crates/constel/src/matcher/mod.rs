//! Cross-scene matching: vote on descriptor hits, assign votes one-to-one,
//! keep the largest distance-consistent subset, estimate the aligning
//! transform, and complete matches under it.

mod clique;
mod hungarian;

pub use clique::{clique_filter, maximum_clique, ConsistencyMode};
pub use hungarian::{assign_hungarian, VoteMatrix};

pub use fixedbitset::FixedBitSet;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::constellations::{enumerate_constellations, FruitPoint, PointCloud};
use crate::geom::{GeomError, RansacParams, SimilarityTransform, ransac_transform};
use crate::kdtree::KdTree;
use crate::mapstore::ConstellationMap;
use crate::starhash::describe_with_frame;

/// Errors surfaced by the matching pipeline.
#[derive(Debug, thiserror::Error)]
pub enum MatchError {
    /// Too few distance-consistent correspondences to estimate a pose.
    #[error("only {got} consistent correspondences; at least {min} are needed")]
    InsufficientMatches { got: usize, min: usize },
    #[error("invalid matching parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// Tuning knobs for [`match_clouds`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    /// Descriptor-space radius for candidate lookups.
    pub tau: f64,
    /// Minimum votes for a query↔map pair to enter the assignment.
    pub min_votes: u32,
    /// Pairwise distance agreement tolerance in the consistency filter
    /// (meters in absolute mode, log-ratio units otherwise).
    pub clique_epsilon: f64,
    /// Radius for post-pose match completion; defaults to the robust-fit
    /// inlier threshold when unset.
    pub completion_radius: Option<f64>,
    /// Candidate map entries considered per query constellation.
    pub candidates_m: usize,
    /// Robust pose estimation settings. The scale-solving flag is chosen
    /// from the clouds' metric flags, overriding the value given here.
    pub ransac: RansacParams,
    /// Seed for the robust estimator's sampling.
    pub seed: u64,
    /// Cubic cell edge length for windowed matching of large clouds; unset
    /// matches globally in one pass.
    pub window: Option<f64>,
}

impl Default for MatchParams {
    fn default() -> MatchParams {
        MatchParams {
            tau: 0.05,
            min_votes: 2,
            clique_epsilon: 0.05,
            completion_radius: None,
            candidates_m: 1,
            ransac: RansacParams::default(),
            seed: 0,
            window: None,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<(), MatchError> {
        if !self.tau.is_finite() || self.tau <= 0.0 {
            return Err(MatchError::InvalidParameter(format!(
                "tau must be positive and finite, got {}",
                self.tau
            )));
        }
        if !self.clique_epsilon.is_finite() || self.clique_epsilon <= 0.0 {
            return Err(MatchError::InvalidParameter(format!(
                "clique_epsilon must be positive and finite, got {}",
                self.clique_epsilon
            )));
        }
        if self.candidates_m == 0 {
            return Err(MatchError::InvalidParameter(
                "candidates_m must be at least 1".into(),
            ));
        }
        if let Some(radius) = self.completion_radius {
            if !radius.is_finite() || radius <= 0.0 {
                return Err(MatchError::InvalidParameter(format!(
                    "completion_radius must be positive and finite, got {radius}"
                )));
            }
        }
        if let Some(window) = self.window {
            if !window.is_finite() || window <= 0.0 {
                return Err(MatchError::InvalidParameter(format!(
                    "window must be positive and finite, got {window}"
                )));
            }
        }
        self.ransac.validate()?;
        Ok(())
    }
}

/// Pipeline stage that admitted a correspondence into the result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchStage {
    /// Assigned by vote maximization; pairwise filtering was skipped
    /// (fewer than two candidates in its window).
    Hungarian,
    /// Survived the pairwise distance consistency filter.
    CliqueSurvivor,
    /// Added after pose estimation by proximity under the transform.
    Completed,
}

impl fmt::Display for MatchStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchStage::Hungarian => "hungarian",
            MatchStage::CliqueSurvivor => "clique-survivor",
            MatchStage::Completed => "completed",
        })
    }
}

/// A matched query↔map fruit pair and the stage that admitted it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Correspondence {
    pub query_id: u64,
    pub map_id: u64,
    pub stage: MatchStage,
}

/// Counters and residuals describing a completed match run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchStats {
    /// Constellations enumerated from the query cloud.
    pub query_constellations: usize,
    /// Distinct (query, map) pairs that received at least one vote.
    pub vote_cells: usize,
    /// Pairs selected by the assignment stage.
    pub assigned_pairs: usize,
    /// Pairs surviving the consistency filter (after window merging).
    pub clique_survivors: usize,
    /// Pairs supporting the estimated transform.
    pub ransac_inliers: usize,
    /// Pairs added by completion.
    pub completed_pairs: usize,
    /// Windows that ran the pipeline (1 in global mode).
    pub windows_processed: usize,
    /// Mean distance between transformed query points and their matched
    /// map fruits, over all final correspondences.
    pub mean_residual: f64,
    /// Largest such distance.
    pub max_residual: f64,
}

/// Output of [`match_clouds`].
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Final correspondences, ascending by (query id, map id).
    pub correspondences: Vec<Correspondence>,
    /// Transform taking query positions into the map frame.
    pub transform: SimilarityTransform,
    /// Correspondences that supported the transform during robust fitting.
    pub inlier_pairs: Vec<(u64, u64)>,
    pub stats: MatchStats,
}

/// Precision/recall of a match result against known ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// TP / (TP + FP); 0 when no pairs were predicted.
    pub precision: f64,
    /// TP / (TP + FN); 0 when the ground truth is empty.
    pub recall: f64,
}

/// Accumulates descriptor-hit votes between a query cloud and a map.
///
/// Query constellations are enumerated with the map's own parameters, so
/// both sides describe the same kind of neighborhoods. Each map entry
/// within `tau` of a query descriptor (up to `candidates_m` of them) casts
/// one vote per aligned member pair: stars are matched by their shared
/// canonical ordering.
pub fn vote_correspondences(
    query: &PointCloud,
    map: &ConstellationMap,
    params: &MatchParams,
) -> VoteMatrix {
    vote_with_stats(query, map, params).0
}

fn vote_with_stats(
    query: &PointCloud,
    map: &ConstellationMap,
    params: &MatchParams,
) -> (VoteMatrix, usize) {
    let constellations =
        enumerate_constellations(query, map.params()).expect("map parameters are valid");
    let per_constellation: Vec<Vec<(u64, u64)>> = constellations
        .par_iter()
        .map(|constellation| {
            let positions: Vec<_> = constellation
                .member_ids
                .iter()
                .map(|&id| query.position(id).expect("member exists in cloud"))
                .collect();
            let Ok((descriptor, _, order)) = describe_with_frame(&positions) else {
                return Vec::new();
            };
            let ordered_ids: Vec<u64> = order
                .iter()
                .map(|&i| constellation.member_ids[i])
                .collect();
            let hits = map
                .query_nearest(&descriptor, params.tau, params.candidates_m)
                .expect("descriptor dimensions match the map");
            let mut votes = Vec::with_capacity(hits.len() * ordered_ids.len());
            for (entry, _) in hits {
                for (&q_id, &m_id) in ordered_ids.iter().zip(entry.member_ids.iter()) {
                    votes.push((q_id, m_id));
                }
            }
            votes
        })
        .collect();
    let mut matrix = VoteMatrix::new();
    for votes in &per_constellation {
        for &(q, m) in votes {
            matrix.add_vote(q, m);
        }
    }
    (matrix, constellations.len())
}

/// Robustly fits the transform taking query positions onto map positions
/// from id correspondences, returning it with the supporting pairs.
pub fn estimate_pose(
    correspondences: &[(u64, u64)],
    query: &PointCloud,
    map: &ConstellationMap,
    ransac: &RansacParams,
    seed: u64,
) -> Result<(SimilarityTransform, Vec<(u64, u64)>), MatchError> {
    let mut point_pairs = Vec::with_capacity(correspondences.len());
    let mut id_pairs = Vec::with_capacity(correspondences.len());
    for &(q, m) in correspondences {
        let qp = query.position(q);
        let mp = map.fruit(m).map(|record| record.position);
        debug_assert!(
            qp.is_some() && mp.is_some(),
            "correspondence ({q}, {m}) references unknown ids"
        );
        if let (Some(qp), Some(mp)) = (qp, mp) {
            point_pairs.push((qp, mp));
            id_pairs.push((q, m));
        }
    }
    if point_pairs.len() < 3 {
        return Err(MatchError::InsufficientMatches {
            got: point_pairs.len(),
            min: 3,
        });
    }
    let (transform, inliers) = ransac_transform(&point_pairs, ransac, seed)?;
    Ok((transform, inliers.iter().map(|&i| id_pairs[i]).collect()))
}

/// Greedily pairs still-unmatched query points with still-unmatched map
/// fruits lying within `radius` (inclusive) of their transformed position,
/// closest distances first (ties toward smaller ids). Returns the added
/// pairs ascending by (query id, map id).
pub fn complete_matches(
    transform: &SimilarityTransform,
    matched: &[(u64, u64)],
    query: &PointCloud,
    map: &ConstellationMap,
    radius: f64,
) -> Vec<(u64, u64)> {
    let used_q: HashSet<u64> = matched.iter().map(|&(q, _)| q).collect();
    let used_m: HashSet<u64> = matched.iter().map(|&(_, m)| m).collect();
    let free_map: Vec<(u64, [f64; 3])> = map
        .fruits()
        .filter(|(id, _)| !used_m.contains(id))
        .map(|(id, record)| {
            let p = record.position;
            (id, [p.x, p.y, p.z])
        })
        .collect();
    if free_map.is_empty() {
        return Vec::new();
    }
    let coords: Vec<Vec<f64>> = free_map.iter().map(|(_, p)| p.to_vec()).collect();
    let tree = KdTree::build(3, &coords);

    let mut candidates: Vec<(f64, u64, u64)> = Vec::new();
    for point in query.points() {
        if used_q.contains(&point.id) {
            continue;
        }
        let projected = transform.apply(point.position);
        let hits = tree.within_radius(
            &[projected.x, projected.y, projected.z],
            radius,
            usize::MAX,
        );
        for (index, distance) in hits {
            candidates.push((distance, point.id, free_map[index].0));
        }
    }
    candidates.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("finite distances")
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut taken_q = HashSet::new();
    let mut taken_m = HashSet::new();
    let mut added = Vec::new();
    for (_, q, m) in candidates {
        if taken_q.contains(&q) || taken_m.contains(&m) {
            continue;
        }
        taken_q.insert(q);
        taken_m.insert(m);
        added.push((q, m));
    }
    added.sort_unstable();
    added
}

/// Counters carried out of the vote/assign/filter stages.
struct StageCounts {
    query_constellations: usize,
    vote_cells: usize,
    assigned_pairs: usize,
    windows_processed: usize,
}

/// Runs vote → assign → consistency-filter on one cloud (a window or the
/// whole query) and returns the surviving correspondences, tagged.
fn filter_stage(
    cloud: &PointCloud,
    map: &ConstellationMap,
    params: &MatchParams,
    mode: ConsistencyMode,
    counts: &mut StageCounts,
) -> Vec<Correspondence> {
    let (votes, constellation_count) = vote_with_stats(cloud, map, params);
    counts.query_constellations += constellation_count;
    counts.vote_cells += votes.cell_count();
    let assigned = assign_hungarian(&votes, params.min_votes);
    counts.assigned_pairs += assigned.len();
    counts.windows_processed += 1;
    if assigned.len() >= 2 {
        clique_filter(&assigned, cloud, map, params.clique_epsilon, mode)
            .into_iter()
            .map(|(query_id, map_id)| Correspondence {
                query_id,
                map_id,
                stage: MatchStage::CliqueSurvivor,
            })
            .collect()
    } else {
        // A lone pair has no pairwise evidence to test.
        assigned
            .into_iter()
            .map(|(query_id, map_id)| Correspondence {
                query_id,
                map_id,
                stage: MatchStage::Hungarian,
            })
            .collect()
    }
}

/// Full matching pipeline between a query cloud and a map.
///
/// Stages: descriptor voting, one-to-one assignment, pairwise distance
/// consistency filtering, robust pose estimation, and proximity completion
/// under the estimated transform. When `params.window` is set the first
/// three stages run per cubic cell and the survivors merge (first window
/// wins conflicts) before one global pose fit. Absolute distance
/// consistency and rigid (scale-free) fitting apply only when both clouds
/// are metric; otherwise consistency uses log ratios and the fit solves
/// for scale.
pub fn match_clouds(
    query: &PointCloud,
    map: &ConstellationMap,
    params: &MatchParams,
) -> Result<MatchResult, MatchError> {
    params.validate()?;
    let both_metric = query.metric() && map.metric();
    let mode = if both_metric {
        ConsistencyMode::Absolute
    } else {
        ConsistencyMode::LogRatio
    };
    let ransac = RansacParams {
        with_scale: !both_metric,
        ..params.ransac
    };

    let mut counts = StageCounts {
        query_constellations: 0,
        vote_cells: 0,
        assigned_pairs: 0,
        windows_processed: 0,
    };
    let survivors: Vec<Correspondence> = match params.window {
        None => filter_stage(query, map, params, mode, &mut counts),
        Some(window) => {
            let mut cells: BTreeMap<(i64, i64, i64), Vec<FruitPoint>> = BTreeMap::new();
            for point in query.points() {
                let key = (
                    (point.position.x / window).floor() as i64,
                    (point.position.y / window).floor() as i64,
                    (point.position.z / window).floor() as i64,
                );
                cells.entry(key).or_default().push(point.clone());
            }
            let mut merged: Vec<Correspondence> = Vec::new();
            let mut seen_q: HashSet<u64> = HashSet::new();
            let mut seen_m: HashSet<u64> = HashSet::new();
            for points in cells.into_values() {
                if points.len() < map.params().k {
                    continue;
                }
                let cell_cloud = PointCloud::new(query.source_id(), points, query.metric())
                    .expect("window of a valid cloud is valid");
                for correspondence in
                    filter_stage(&cell_cloud, map, params, mode, &mut counts)
                {
                    if seen_q.contains(&correspondence.query_id)
                        || seen_m.contains(&correspondence.map_id)
                    {
                        continue;
                    }
                    seen_q.insert(correspondence.query_id);
                    seen_m.insert(correspondence.map_id);
                    merged.push(correspondence);
                }
            }
            merged
        }
    };

    let survivor_pairs: Vec<(u64, u64)> = survivors
        .iter()
        .map(|c| (c.query_id, c.map_id))
        .collect();
    if survivor_pairs.len() < 3 {
        return Err(MatchError::InsufficientMatches {
            got: survivor_pairs.len(),
            min: 3,
        });
    }
    let (transform, inlier_pairs) = estimate_pose(&survivor_pairs, query, map, &ransac, params.seed)?;
    let radius = params.completion_radius.unwrap_or(ransac.inlier_threshold);
    let completed = complete_matches(&transform, &survivor_pairs, query, map, radius);

    let mut correspondences = survivors;
    correspondences.extend(completed.iter().map(|&(query_id, map_id)| Correspondence {
        query_id,
        map_id,
        stage: MatchStage::Completed,
    }));
    correspondences.sort_unstable_by_key(|c| (c.query_id, c.map_id));

    let mut mean_residual = 0.0;
    let mut max_residual: f64 = 0.0;
    for c in &correspondences {
        let qp = query.position(c.query_id).expect("matched query id exists");
        let mp = map.fruit(c.map_id).expect("matched map id exists").position;
        let residual = transform.apply(qp).distance(mp);
        mean_residual += residual;
        max_residual = max_residual.max(residual);
    }
    mean_residual /= correspondences.len() as f64;

    let stats = MatchStats {
        query_constellations: counts.query_constellations,
        vote_cells: counts.vote_cells,
        assigned_pairs: counts.assigned_pairs,
        clique_survivors: survivor_pairs.len(),
        ransac_inliers: inlier_pairs.len(),
        completed_pairs: completed.len(),
        windows_processed: counts.windows_processed,
        mean_residual,
        max_residual,
    };
    Ok(MatchResult {
        correspondences,
        transform,
        inlier_pairs,
        stats,
    })
}

/// Scores a match result against ground-truth (query id, map id) pairs.
///
/// Both the truth and the predictions are first restricted to pairs whose
/// endpoints were each seen in at least `min_frames` frames, so rarely
/// observed fruits do not distort the score.
pub fn evaluate(
    result: &MatchResult,
    ground_truth: &[(u64, u64)],
    query: &PointCloud,
    map: &ConstellationMap,
    min_frames: u32,
) -> EvalReport {
    let eligible = |q: u64, m: u64| {
        query.point(q).is_some_and(|p| p.frames_seen >= min_frames)
            && map.fruit(m).is_some_and(|f| f.frames_seen >= min_frames)
    };
    let truth: HashSet<(u64, u64)> = ground_truth
        .iter()
        .copied()
        .filter(|&(q, m)| eligible(q, m))
        .collect();
    let predicted: HashSet<(u64, u64)> = result
        .correspondences
        .iter()
        .map(|c| (c.query_id, c.map_id))
        .filter(|&(q, m)| eligible(q, m))
        .collect();
    let true_positives = predicted.intersection(&truth).count();
    let false_positives = predicted.len() - true_positives;
    let false_negatives = truth.len() - true_positives;
    let ratio = |num: usize, denom: usize| {
        if denom == 0 { 0.0 } else { num as f64 / denom as f64 }
    };
    EvalReport {
        true_positives,
        false_positives,
        false_negatives,
        precision: ratio(true_positives, true_positives + false_positives),
        recall: ratio(true_positives, true_positives + false_negatives),
    }
}
