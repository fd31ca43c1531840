//! Persistent constellation maps: descriptor-indexed constellations plus
//! the fruit table they reference, with canonical JSON serialization.
//!
//! Serialization is byte-deterministic: entries are sorted, floats are
//! written with 17 significant digits (exact f64 round-trip), and a sha256
//! checksum over the canonical body detects corruption.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::constellations::{
    enumerate_constellations, ConstellationError, EnumerationParams, PointCloud,
};
use crate::geom::Vec3;
use crate::kdtree::KdTree;
use crate::starhash::{describe, Descriptor};

/// Version written into and accepted from map files.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("too few points: need at least {need}, got {got}")]
    TooFewPoints { got: usize, need: usize },
    #[error("query descriptor has {query} dims, map stores {map}")]
    DimensionMismatch { query: usize, map: usize },
    #[error("unsupported format version {found} (supported: {supported})")]
    VersionMismatch { found: u64, supported: u32 },
    #[error("malformed map file: {0}")]
    Malformed(String),
    #[error("checksum mismatch: map file is corrupt or was edited")]
    ChecksumFailure,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Constellation(#[from] ConstellationError),
}

/// A landmark as stored in the map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FruitRecord {
    pub position: Vec3,
    pub frames_seen: u32,
}

/// One indexed constellation: its anchor, members in canonical order, and
/// the descriptor code.
#[derive(Debug, Clone, PartialEq)]
pub struct MapEntry {
    pub anchor_id: u64,
    pub member_ids: Vec<u64>,
    pub descriptor: Descriptor,
}

/// A queryable, serializable constellation map.
#[derive(Debug)]
pub struct ConstellationMap {
    params: EnumerationParams,
    source_id: String,
    metric: bool,
    fruits: BTreeMap<u64, FruitRecord>,
    entries: Vec<MapEntry>,
    index: KdTree,
}

impl PartialEq for ConstellationMap {
    fn eq(&self, other: &Self) -> bool {
        // The spatial index is derived state.
        self.params == other.params
            && self.source_id == other.source_id
            && self.metric == other.metric
            && self.fruits == other.fruits
            && self.entries == other.entries
    }
}

impl ConstellationMap {
    fn assemble(
        params: EnumerationParams,
        source_id: String,
        metric: bool,
        fruits: BTreeMap<u64, FruitRecord>,
        mut entries: Vec<MapEntry>,
    ) -> ConstellationMap {
        entries.sort_by(|a, b| {
            (a.anchor_id, &a.member_ids).cmp(&(b.anchor_id, &b.member_ids))
        });
        let dims = 3 * (params.k - 2);
        let codes: Vec<Vec<f64>> = entries
            .iter()
            .map(|e| e.descriptor.code().to_vec())
            .collect();
        ConstellationMap {
            index: KdTree::build(dims, &codes),
            params,
            source_id,
            metric,
            fruits,
            entries,
        }
    }

    pub fn params(&self) -> &EnumerationParams {
        &self.params
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn metric(&self) -> bool {
        self.metric
    }

    /// Entries sorted by (anchor id, member ids).
    pub fn entries(&self) -> &[MapEntry] {
        &self.entries
    }

    pub fn fruits(&self) -> impl Iterator<Item = (u64, &FruitRecord)> {
        self.fruits.iter().map(|(&id, r)| (id, r))
    }

    pub fn fruit(&self, id: u64) -> Option<&FruitRecord> {
        self.fruits.get(&id)
    }

    pub fn fruit_count(&self) -> usize {
        self.fruits.len()
    }

    pub fn descriptor_dims(&self) -> usize {
        3 * (self.params.k - 2)
    }

    /// Up to `m` entries whose descriptors lie within `tau` (inclusive) of
    /// `descriptor`, ascending by distance; exact ties keep ascending entry
    /// index.
    pub fn query_nearest(
        &self,
        descriptor: &Descriptor,
        tau: f64,
        m: usize,
    ) -> Result<Vec<(&MapEntry, f64)>, MapError> {
        if descriptor.dims() != self.descriptor_dims() {
            return Err(MapError::DimensionMismatch {
                query: descriptor.dims(),
                map: self.descriptor_dims(),
            });
        }
        if self.entries.is_empty() || m == 0 {
            return Ok(Vec::new());
        }
        Ok(self
            .index
            .within_radius(descriptor.code(), tau, m)
            .into_iter()
            .map(|(i, d)| (&self.entries[i], d))
            .collect())
    }

    /// Canonical serialization; `checksum` is injected verbatim when given.
    fn to_canonical_string(&self, checksum: Option<&str>) -> String {
        let mut out = String::with_capacity(256 + self.entries.len() * 256);
        out.push_str("{\n");
        out.push_str(&format!("  \"format_version\": {},\n", FORMAT_VERSION));
        if let Some(sum) = checksum {
            out.push_str(&format!("  \"checksum\": \"{sum}\",\n"));
        }
        out.push_str(&format!(
            "  \"params\": {{\"k\": {}, \"n\": {}, \"min_frames\": {}}},\n",
            self.params.k, self.params.n, self.params.min_frames
        ));
        out.push_str(&format!(
            "  \"source\": {{\"source_id\": {}, \"metric\": {}}},\n",
            serde_json::to_string(&self.source_id).expect("string serializes"),
            self.metric
        ));

        if self.fruits.is_empty() {
            out.push_str("  \"fruits\": [],\n");
        } else {
            out.push_str("  \"fruits\": [\n");
            let last = self.fruits.len() - 1;
            for (i, (id, fruit)) in self.fruits.iter().enumerate() {
                out.push_str(&format!(
                    "    {{\"id\": {}, \"x\": {}, \"y\": {}, \"z\": {}, \"frames_seen\": {}}}{}\n",
                    id,
                    full_precision(fruit.position.x),
                    full_precision(fruit.position.y),
                    full_precision(fruit.position.z),
                    fruit.frames_seen,
                    if i == last { "" } else { "," }
                ));
            }
            out.push_str("  ],\n");
        }

        if self.entries.is_empty() {
            out.push_str("  \"entries\": []\n");
        } else {
            out.push_str("  \"entries\": [\n");
            let last = self.entries.len() - 1;
            for (i, entry) in self.entries.iter().enumerate() {
                let members = entry
                    .member_ids
                    .iter()
                    .map(|id| id.to_string())
                    .collect::<Vec<_>>()
                    .join(", ");
                let code = entry
                    .descriptor
                    .code()
                    .iter()
                    .map(|&c| full_precision(c))
                    .collect::<Vec<_>>()
                    .join(", ");
                out.push_str(&format!(
                    "    {{\"anchor\": {}, \"members\": [{}], \"code\": [{}]}}{}\n",
                    entry.anchor_id,
                    members,
                    code,
                    if i == last { "" } else { "," }
                ));
            }
            out.push_str("  ]\n");
        }
        out.push_str("}\n");
        out
    }

    /// Serializes with the checksum over the canonical body.
    pub fn to_json_string(&self) -> String {
        let body = self.to_canonical_string(None);
        let checksum = sha256_hex(body.as_bytes());
        self.to_canonical_string(Some(&checksum))
    }

    pub fn save_to_writer(&self, writer: &mut impl Write) -> Result<(), MapError> {
        writer.write_all(self.to_json_string().as_bytes())?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MapError> {
        let mut file = std::fs::File::create(path)?;
        self.save_to_writer(&mut file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ConstellationMap, MapError> {
        let bytes = std::fs::read(path)?;
        ConstellationMap::load_from_slice(&bytes)
    }

    pub fn load_from_slice(bytes: &[u8]) -> Result<ConstellationMap, MapError> {
        let value: serde_json::Value = serde_json::from_slice(bytes)
            .map_err(|e| MapError::Malformed(format!("invalid JSON: {e}")))?;
        let version = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| MapError::Malformed("missing integer format_version".into()))?;
        if version != FORMAT_VERSION as u64 {
            return Err(MapError::VersionMismatch {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let doc: MapDoc = serde_json::from_value(value)
            .map_err(|e| MapError::Malformed(e.to_string()))?;

        let params = EnumerationParams {
            k: doc.params.k,
            n: doc.params.n,
            min_frames: doc.params.min_frames,
            max_per_anchor: None,
        };
        params
            .validate()
            .map_err(|e| MapError::Malformed(format!("invalid params: {e}")))?;

        let mut fruits = BTreeMap::new();
        for f in &doc.fruits {
            let position = Vec3::new(f.x, f.y, f.z);
            if !position.is_finite() {
                return Err(MapError::Malformed(format!(
                    "non-finite position for fruit {}",
                    f.id
                )));
            }
            if fruits
                .insert(
                    f.id,
                    FruitRecord {
                        position,
                        frames_seen: f.frames_seen,
                    },
                )
                .is_some()
            {
                return Err(MapError::Malformed(format!("duplicate fruit id {}", f.id)));
            }
        }

        let dims = 3 * (params.k - 2);
        let mut entries = Vec::with_capacity(doc.entries.len());
        for (i, e) in doc.entries.iter().enumerate() {
            if e.members.len() != params.k {
                return Err(MapError::Malformed(format!(
                    "entry {i}: {} members, expected k = {}",
                    e.members.len(),
                    params.k
                )));
            }
            if !e.members.contains(&e.anchor) {
                return Err(MapError::Malformed(format!(
                    "entry {i}: anchor {} not among members",
                    e.anchor
                )));
            }
            let mut unique = e.members.clone();
            unique.sort_unstable();
            unique.dedup();
            if unique.len() != e.members.len() {
                return Err(MapError::Malformed(format!("entry {i}: repeated member id")));
            }
            for id in &e.members {
                if !fruits.contains_key(id) {
                    return Err(MapError::Malformed(format!(
                        "entry {i}: member {id} missing from fruit table"
                    )));
                }
            }
            if e.code.len() != dims {
                return Err(MapError::Malformed(format!(
                    "entry {i}: code has {} dims, expected {dims}",
                    e.code.len()
                )));
            }
            let descriptor = Descriptor::from_code(e.code.clone())
                .map_err(|err| MapError::Malformed(format!("entry {i}: {err}")))?;
            entries.push(MapEntry {
                anchor_id: e.anchor,
                member_ids: e.members.clone(),
                descriptor,
            });
        }

        let map = ConstellationMap::assemble(
            params,
            doc.source.source_id,
            doc.source.metric,
            fruits,
            entries,
        );
        let body = map.to_canonical_string(None);
        if sha256_hex(body.as_bytes()) != doc.checksum {
            return Err(MapError::ChecksumFailure);
        }
        Ok(map)
    }
}

/// Builds a map by enumerating and describing all constellations of `cloud`.
pub fn build_map(
    cloud: &PointCloud,
    params: &EnumerationParams,
) -> Result<ConstellationMap, MapError> {
    params.validate()?;
    if cloud.len() < params.k {
        return Err(MapError::TooFewPoints {
            got: cloud.len(),
            need: params.k,
        });
    }
    let constellations = enumerate_constellations(cloud, params)?;
    let entries: Vec<MapEntry> = constellations
        .par_iter()
        .map(|c| {
            let positions: Vec<Vec3> = c
                .member_ids
                .iter()
                .map(|&id| cloud.position(id).expect("member from this cloud"))
                .collect();
            let descriptor =
                describe(&positions).expect("enumeration already filtered degenerates");
            MapEntry {
                anchor_id: c.anchor_id,
                member_ids: c.member_ids.clone(),
                descriptor,
            }
        })
        .collect();

    let fruits: BTreeMap<u64, FruitRecord> = cloud
        .points()
        .iter()
        .map(|p| {
            (
                p.id,
                FruitRecord {
                    position: p.position,
                    frames_seen: p.frames_seen,
                },
            )
        })
        .collect();

    Ok(ConstellationMap::assemble(
        *params,
        cloud.source_id().to_string(),
        cloud.metric(),
        fruits,
        entries,
    ))
}

/// 17-significant-digit scientific notation: round-trips any finite f64.
pub fn full_precision(x: f64) -> String {
    format!("{x:.16e}")
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MapDoc {
    #[allow(dead_code)]
    format_version: u32,
    checksum: String,
    params: ParamsDoc,
    source: SourceDoc,
    fruits: Vec<FruitDoc>,
    entries: Vec<EntryDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsDoc {
    k: usize,
    n: usize,
    min_frames: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceDoc {
    source_id: String,
    metric: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FruitDoc {
    id: u64,
    x: f64,
    y: f64,
    z: f64,
    frames_seen: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryDoc {
    anchor: u64,
    members: Vec<u64>,
    code: Vec<f64>,
}
