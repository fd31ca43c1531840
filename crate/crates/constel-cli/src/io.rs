//! Cloud, correspondence, and pose file formats.

use std::path::Path;

use serde::Deserialize;
use serde_json::json;

use constel::constellations::{FruitPoint, PointCloud};
use constel::geom::Vec3;
use constel::mapstore::full_precision;
use constel::matcher::MatchResult;

pub const CLOUD_HEADER: &str = "id,x,y,z,frames_seen";
pub const MATCHES_HEADER: &str = "query_id,map_id,stage";
pub const GROUND_TRUTH_HEADER: &str = "query_id,map_id";

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CloudDoc {
    source_id: Option<String>,
    metric: bool,
    points: Vec<PointDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PointDoc {
    id: u64,
    x: f64,
    y: f64,
    z: f64,
    frames_seen: u32,
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cloud".to_string())
}

/// Reads a fruit cloud from CSV (`id,x,y,z,frames_seen` header) or JSON
/// (`.json` extension). CSV clouds default to metric units; JSON clouds
/// carry their own flag. `metric_override` (from --metric/--no-metric)
/// wins over both. The source id is the file stem unless the JSON says
/// otherwise.
pub fn read_cloud(path: &Path, metric_override: Option<bool>) -> Result<PointCloud, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let is_json = path
        .extension()
        .is_some_and(|ext| ext.eq_ignore_ascii_case("json"));
    let (source_id, metric, points) = if is_json {
        let doc: CloudDoc = serde_json::from_str(&text)
            .map_err(|e| format!("{}: invalid cloud JSON: {e}", path.display()))?;
        let points = doc
            .points
            .into_iter()
            .map(|p| FruitPoint {
                id: p.id,
                position: Vec3 { x: p.x, y: p.y, z: p.z },
                frames_seen: p.frames_seen,
            })
            .collect();
        (
            doc.source_id.unwrap_or_else(|| file_stem(path)),
            metric_override.unwrap_or(doc.metric),
            points,
        )
    } else {
        (
            file_stem(path),
            metric_override.unwrap_or(true),
            parse_cloud_csv(&text).map_err(|e| format!("{}: {e}", path.display()))?,
        )
    };
    PointCloud::new(source_id, points, metric)
        .map_err(|e| format!("{}: {e}", path.display()))
}

fn parse_cloud_csv(text: &str) -> Result<Vec<FruitPoint>, String> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end_matches('\r') == CLOUD_HEADER => {}
        Some((_, header)) => {
            return Err(format!(
                "expected header `{CLOUD_HEADER}`, found `{}`",
                header.trim_end_matches('\r')
            ));
        }
        None => return Err("empty cloud file".into()),
    }
    let mut points = Vec::new();
    for (lineno, raw) in lines {
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(format!(
                "line {}: expected 5 fields, found {}",
                lineno + 1,
                fields.len()
            ));
        }
        let field = |i: usize, name: &str| -> Result<f64, String> {
            fields[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| format!("line {}: bad {name}: {e}", lineno + 1))
        };
        let id: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|e| format!("line {}: bad id: {e}", lineno + 1))?;
        let frames_seen: u32 = fields[4]
            .trim()
            .parse()
            .map_err(|e| format!("line {}: bad frames_seen: {e}", lineno + 1))?;
        points.push(FruitPoint {
            id,
            position: Vec3 {
                x: field(1, "x")?,
                y: field(2, "y")?,
                z: field(3, "z")?,
            },
            frames_seen,
        });
    }
    Ok(points)
}

/// Cloud as CSV, rows ascending by id, full-precision coordinates.
pub fn cloud_csv(cloud: &PointCloud) -> String {
    let mut out = String::from(CLOUD_HEADER);
    out.push('\n');
    for point in cloud.points() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            point.id,
            full_precision(point.position.x),
            full_precision(point.position.y),
            full_precision(point.position.z),
            point.frames_seen,
        ));
    }
    out
}

/// Correspondences as CSV (`query_id,map_id,stage`), in result order.
pub fn matches_csv(result: &MatchResult) -> String {
    let mut out = String::from(MATCHES_HEADER);
    out.push('\n');
    for c in &result.correspondences {
        out.push_str(&format!("{},{},{}\n", c.query_id, c.map_id, c.stage));
    }
    out
}

/// Estimated pose as a JSON document.
pub fn pose_json(result: &MatchResult) -> String {
    let rotation = result.transform.rotation();
    let rows: Vec<Vec<f64>> = (0..3)
        .map(|i| (0..3).map(|j| rotation[(i, j)]).collect())
        .collect();
    let t = result.transform.translation();
    let value = json!({
        "rotation": rows,
        "translation": [t.x, t.y, t.z],
        "scale": result.transform.scale(),
        "inlier_count": result.inlier_pairs.len(),
    });
    let mut text = serde_json::to_string_pretty(&value).expect("pose serializes");
    text.push('\n');
    text
}

/// Reads ground-truth pairs from CSV with header `query_id,map_id`.
pub fn read_ground_truth(path: &Path) -> Result<Vec<(u64, u64)>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end_matches('\r') == GROUND_TRUTH_HEADER => {}
        Some((_, header)) => {
            return Err(format!(
                "{}: expected header `{GROUND_TRUTH_HEADER}`, found `{}`",
                path.display(),
                header.trim_end_matches('\r')
            ));
        }
        None => return Err(format!("{}: empty ground-truth file", path.display())),
    }
    let mut pairs = Vec::new();
    for (lineno, raw) in lines {
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        let Some((q, m)) = line.split_once(',') else {
            return Err(format!(
                "{}: line {}: expected `query_id,map_id`",
                path.display(),
                lineno + 1
            ));
        };
        let parse = |s: &str| -> Result<u64, String> {
            s.trim().parse().map_err(|e| {
                format!("{}: line {}: bad id: {e}", path.display(), lineno + 1)
            })
        };
        pairs.push((parse(q)?, parse(m)?));
    }
    Ok(pairs)
}
