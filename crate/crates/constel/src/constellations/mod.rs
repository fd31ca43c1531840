//! Point clouds of detected landmarks and enumeration of the local
//! constellations used for matching.
//!
//! Each eligible anchor point contributes the (k−1)-subsets of its n nearest
//! neighbors; duplicate member sets reached from different anchors are kept
//! once (first anchor in ascending-id order wins). Degenerate subsets are
//! dropped. The result is deterministic and independent of input ordering.

use itertools::Itertools;
use rayon::prelude::*;
use thiserror::Error;

use crate::geom::Vec3;
use crate::kdtree::KdTree;
use crate::starhash::{self, describe_with_frame, DegeneracyReason};

#[derive(Debug, Error)]
pub enum ConstellationError {
    #[error("duplicate point id {id}")]
    DuplicateId { id: u64 },
    #[error("non-finite position for point id {id}")]
    NonFinitePosition { id: u64 },
    #[error("unknown point id {id}")]
    UnknownId { id: u64 },
    #[error("need at least {min} points, got {got}")]
    InsufficientPoints { got: usize, min: usize },
    #[error("invalid enumeration parameters: {0}")]
    InvalidParams(String),
}

/// One detected landmark: stable id, 3D position, and the number of capture
/// frames it was observed in (a confidence proxy).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FruitPoint {
    pub id: u64,
    pub position: Vec3,
    pub frames_seen: u32,
}

/// An immutable set of landmarks from one capture session. Points are held
/// sorted by id, so all downstream iteration is order-independent.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    source_id: String,
    metric: bool,
    points: Vec<FruitPoint>,
}

impl PointCloud {
    /// `metric` declares that coordinates are in meters; non-metric clouds
    /// (e.g. monocular reconstructions) carry an unknown global scale.
    pub fn new(
        source_id: impl Into<String>,
        mut points: Vec<FruitPoint>,
        metric: bool,
    ) -> Result<PointCloud, ConstellationError> {
        points.sort_by_key(|p| p.id);
        for pair in points.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(ConstellationError::DuplicateId { id: pair[0].id });
            }
        }
        if let Some(p) = points.iter().find(|p| !p.position.is_finite()) {
            return Err(ConstellationError::NonFinitePosition { id: p.id });
        }
        Ok(PointCloud {
            source_id: source_id.into(),
            metric,
            points,
        })
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn metric(&self) -> bool {
        self.metric
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points in ascending id order.
    pub fn points(&self) -> &[FruitPoint] {
        &self.points
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.points.iter().map(|p| p.id)
    }

    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.points.binary_search_by_key(&id, |p| p.id).ok()
    }

    pub fn point(&self, id: u64) -> Option<&FruitPoint> {
        self.index_of(id).map(|i| &self.points[i])
    }

    pub fn position(&self, id: u64) -> Option<Vec3> {
        self.point(id).map(|p| p.position)
    }

    pub fn positions_of(&self, ids: &[u64]) -> Result<Vec<Vec3>, ConstellationError> {
        ids.iter()
            .map(|&id| {
                self.position(id)
                    .ok_or(ConstellationError::UnknownId { id })
            })
            .collect()
    }
}

/// Spatial index over a cloud for repeated neighbor queries.
pub struct CloudIndex<'a> {
    cloud: &'a PointCloud,
    tree: KdTree,
}

impl<'a> CloudIndex<'a> {
    pub fn new(cloud: &'a PointCloud) -> CloudIndex<'a> {
        let coords: Vec<Vec<f64>> = cloud
            .points()
            .iter()
            .map(|p| vec![p.position.x, p.position.y, p.position.z])
            .collect();
        CloudIndex {
            cloud,
            tree: KdTree::build(3, &coords),
        }
    }

    /// Ids of the `n` nearest neighbors of `query_id` (excluding itself),
    /// ascending by distance with ties broken by id.
    pub fn knn(&self, query_id: u64, n: usize) -> Result<Vec<u64>, ConstellationError> {
        let idx = self
            .cloud
            .index_of(query_id)
            .ok_or(ConstellationError::UnknownId { id: query_id })?;
        if self.cloud.len() < n + 1 {
            return Err(ConstellationError::InsufficientPoints {
                got: self.cloud.len(),
                min: n + 1,
            });
        }
        let p = self.cloud.points()[idx].position;
        let hits = self.tree.nearest(&[p.x, p.y, p.z], n, Some(idx));
        Ok(hits
            .into_iter()
            .map(|(i, _)| self.cloud.points()[i].id)
            .collect())
    }
}

/// Convenience wrapper building a one-shot index; use [`CloudIndex`] for
/// repeated queries.
pub fn knn(cloud: &PointCloud, query_id: u64, n: usize) -> Result<Vec<u64>, ConstellationError> {
    CloudIndex::new(cloud).knn(query_id, n)
}

/// Parameters controlling constellation enumeration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumerationParams {
    /// Stars per constellation (anchor included).
    pub k: usize,
    /// Neighborhood size around each anchor.
    pub n: usize,
    /// Anchors must have been seen in at least this many frames; members
    /// are unrestricted.
    pub min_frames: u32,
    /// Cap on subsets tried per anchor; `None` tries all C(n, k−1).
    pub max_per_anchor: Option<usize>,
}

impl Default for EnumerationParams {
    fn default() -> Self {
        EnumerationParams {
            k: 5,
            n: 10,
            min_frames: 5,
            max_per_anchor: None,
        }
    }
}

impl EnumerationParams {
    pub fn validate(&self) -> Result<(), ConstellationError> {
        if self.k < 4 {
            return Err(ConstellationError::InvalidParams(format!(
                "k must be >= 4, got {}",
                self.k
            )));
        }
        if self.n < self.k - 1 {
            return Err(ConstellationError::InvalidParams(format!(
                "n must be >= k - 1, got n = {} with k = {}",
                self.n, self.k
            )));
        }
        if self.max_per_anchor == Some(0) {
            return Err(ConstellationError::InvalidParams(
                "max_per_anchor must be >= 1 when set".into(),
            ));
        }
        Ok(())
    }
}

/// A k-star subset chosen around an anchor. `member_ids` is in canonical
/// descriptor order: baseline stars A then B, then the remaining stars by
/// ascending canonical x.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constellation {
    pub anchor_id: u64,
    pub member_ids: Vec<u64>,
}

/// Reports why `points` cannot form a usable constellation (`None` = fine):
/// coincident points, or all points within 2% of the baseline length from
/// the baseline line.
pub fn is_degenerate(points: &[Vec3]) -> Option<DegeneracyReason> {
    starhash::degeneracy(points)
}

/// Enumerates all distinct, non-degenerate constellations of `cloud` under
/// `params`. A cloud smaller than k yields an empty list; n is clamped to
/// cloud size − 1 so small clouds still enumerate.
pub fn enumerate_constellations(
    cloud: &PointCloud,
    params: &EnumerationParams,
) -> Result<Vec<Constellation>, ConstellationError> {
    params.validate()?;
    if cloud.len() < params.k {
        return Ok(Vec::new());
    }
    let n_eff = params.n.min(cloud.len() - 1);
    let cap = params.max_per_anchor.unwrap_or(usize::MAX);
    let index = CloudIndex::new(cloud);

    // Pass 1: collect distinct member-id sets, cheap set arithmetic only.
    let mut seen = std::collections::HashSet::new();
    let mut candidates: Vec<(u64, Vec<u64>)> = Vec::new();
    for anchor in cloud.points() {
        if anchor.frames_seen < params.min_frames {
            continue;
        }
        let mut neighbors = index.knn(anchor.id, n_eff)?;
        neighbors.sort_unstable();
        // Lexicographic subsets of the ascending neighbor ids.
        for selection in neighbors.iter().combinations(params.k - 1).take(cap) {
            let mut members: Vec<u64> = selection.into_iter().copied().collect();
            members.push(anchor.id);
            members.sort_unstable();
            if seen.insert(members.clone()) {
                candidates.push((anchor.id, members));
            }
        }
    }

    // Pass 2: canonicalize in parallel; drop degenerate subsets.
    let results: Vec<Option<Constellation>> = candidates
        .par_iter()
        .map(|(anchor_id, members)| {
            let positions: Vec<Vec3> = members
                .iter()
                .map(|&id| cloud.position(id).expect("member came from this cloud"))
                .collect();
            match describe_with_frame(&positions) {
                Ok((_, _, order)) => Some(Constellation {
                    anchor_id: *anchor_id,
                    member_ids: order.iter().map(|&i| members[i]).collect(),
                }),
                Err(_) => None,
            }
        })
        .collect();
    Ok(results.into_iter().flatten().collect())
}
