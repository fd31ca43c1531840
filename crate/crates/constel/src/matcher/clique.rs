//! Pairwise-distance consistency filtering via exact maximum clique.

use fixedbitset::FixedBitSet;

use crate::constellations::PointCloud;
use crate::geom::Vec3;
use crate::mapstore::ConstellationMap;

/// How pairwise distances are compared when building the consistency graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsistencyMode {
    /// Edge when |d_query − d_map| ≤ ε. For clouds sharing a physical unit.
    Absolute,
    /// Edge when |ln(d_query/d_map) − ln ŝ| ≤ ε, with ŝ the median distance
    /// ratio. Tolerates a global scale offset between the clouds.
    LogRatio,
}

/// Distances below this are treated as coincident and never form edges in
/// log-ratio mode.
const MIN_SEPARATION: f64 = 1e-12;

/// Keeps the largest subset of correspondences whose pairwise distances
/// agree between the two clouds, dropping everything else.
///
/// The consistency graph has one vertex per correspondence and an edge where
/// the two induced distances agree within `epsilon` (see [`ConsistencyMode`]).
/// The exact maximum clique wins; among cliques of equal size the one with
/// the smallest total pairwise discrepancy wins, then the lexicographically
/// smallest vertex set. Survivors are returned sorted by (query id, map id).
/// Correspondences referencing unknown ids are dropped.
pub fn clique_filter(
    correspondences: &[(u64, u64)],
    query: &PointCloud,
    map: &ConstellationMap,
    epsilon: f64,
    mode: ConsistencyMode,
) -> Vec<(u64, u64)> {
    let pairs: Vec<(u64, u64, Vec3, Vec3)> = correspondences
        .iter()
        .filter_map(|&(q, m)| {
            let qp = query.position(q);
            let mp = map.fruit(m).map(|record| record.position);
            debug_assert!(
                qp.is_some() && mp.is_some(),
                "correspondence ({q}, {m}) references unknown ids"
            );
            Some((q, m, qp?, mp?))
        })
        .collect();
    let n = pairs.len();
    if n <= 1 {
        return pairs.iter().map(|&(q, m, _, _)| (q, m)).collect();
    }

    let mut d_query = vec![vec![0.0f64; n]; n];
    let mut d_map = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            d_query[i][j] = pairs[i].2.distance(pairs[j].2);
            d_map[i][j] = pairs[i].3.distance(pairs[j].3);
        }
    }

    // In log-ratio mode the per-edge discrepancy is measured against the
    // median log distance ratio, a robust global scale estimate.
    let log_scale = match mode {
        ConsistencyMode::Absolute => 0.0,
        ConsistencyMode::LogRatio => {
            let mut logs: Vec<f64> = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if d_query[i][j] > MIN_SEPARATION && d_map[i][j] > MIN_SEPARATION {
                        logs.push((d_query[i][j] / d_map[i][j]).ln());
                    }
                }
            }
            median(&mut logs).unwrap_or(0.0)
        }
    };

    let mut adjacency = vec![FixedBitSet::with_capacity(n); n];
    let mut discrepancy = vec![vec![f64::INFINITY; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let e = match mode {
                ConsistencyMode::Absolute => (d_query[i][j] - d_map[i][j]).abs(),
                ConsistencyMode::LogRatio => {
                    if d_query[i][j] > MIN_SEPARATION && d_map[i][j] > MIN_SEPARATION {
                        ((d_query[i][j] / d_map[i][j]).ln() - log_scale).abs()
                    } else {
                        f64::INFINITY
                    }
                }
            };
            if e <= epsilon {
                adjacency[i].insert(j);
                adjacency[j].insert(i);
                discrepancy[i][j] = e;
                discrepancy[j][i] = e;
            }
        }
    }

    let clique = maximum_clique(&adjacency, &|i, j| discrepancy[i][j]);
    let mut survivors: Vec<(u64, u64)> =
        clique.iter().map(|&v| (pairs[v].0, pairs[v].1)).collect();
    survivors.sort_unstable();
    survivors
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite log ratios"));
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        Some(values[mid])
    } else {
        Some(0.5 * (values[mid - 1] + values[mid]))
    }
}

struct Champion {
    size: usize,
    total_discrepancy: f64,
    vertices: Vec<usize>,
}

/// Exact maximum clique (Bron–Kerbosch with pivoting over a degeneracy
/// ordering). Ties break toward the smallest total pairwise discrepancy,
/// then the lexicographically smallest sorted vertex set. Returns sorted
/// vertex indices.
pub fn maximum_clique(
    adjacency: &[FixedBitSet],
    discrepancy: &dyn Fn(usize, usize) -> f64,
) -> Vec<usize> {
    let n = adjacency.len();
    if n == 0 {
        return Vec::new();
    }
    let order = degeneracy_order(adjacency);
    let mut rank = vec![0usize; n];
    for (idx, &v) in order.iter().enumerate() {
        rank[v] = idx;
    }
    let mut best = Champion {
        size: 0,
        total_discrepancy: f64::INFINITY,
        vertices: Vec::new(),
    };
    let mut r = Vec::new();
    for &v in &order {
        let mut p = FixedBitSet::with_capacity(n);
        let mut x = FixedBitSet::with_capacity(n);
        for u in adjacency[v].ones() {
            if rank[u] > rank[v] {
                p.insert(u);
            } else {
                x.insert(u);
            }
        }
        r.push(v);
        expand(&mut r, p, x, adjacency, discrepancy, &mut best);
        r.pop();
    }
    best.vertices
}

fn expand(
    r: &mut Vec<usize>,
    mut p: FixedBitSet,
    mut x: FixedBitSet,
    adjacency: &[FixedBitSet],
    discrepancy: &dyn Fn(usize, usize) -> f64,
    best: &mut Champion,
) {
    // Equal sizes still recurse: a same-size clique can win on discrepancy.
    if r.len() + p.count_ones(..) < best.size {
        return;
    }
    if p.is_clear() {
        if x.is_clear() {
            consider(r, discrepancy, best);
        }
        return;
    }
    // Pivot: the candidate covering most of P; its neighbors are skipped.
    let mut pivot = usize::MAX;
    let mut covered = usize::MAX;
    for u in p.ones().chain(x.ones()) {
        let c = p.intersection(&adjacency[u]).count();
        if pivot == usize::MAX || c > covered {
            pivot = u;
            covered = c;
        }
    }
    let candidates: Vec<usize> = p.difference(&adjacency[pivot]).collect();
    for v in candidates {
        let mut np = p.clone();
        np.intersect_with(&adjacency[v]);
        let mut nx = x.clone();
        nx.intersect_with(&adjacency[v]);
        r.push(v);
        expand(r, np, nx, adjacency, discrepancy, best);
        r.pop();
        p.remove(v);
        x.insert(v);
        if r.len() + p.count_ones(..) < best.size {
            return;
        }
    }
}

fn consider(r: &[usize], discrepancy: &dyn Fn(usize, usize) -> f64, best: &mut Champion) {
    let mut vertices = r.to_vec();
    vertices.sort_unstable();
    let mut total = 0.0;
    for i in 0..vertices.len() {
        for j in (i + 1)..vertices.len() {
            total += discrepancy(vertices[i], vertices[j]);
        }
    }
    let wins = vertices.len() > best.size
        || (vertices.len() == best.size
            && (total < best.total_discrepancy
                || (total == best.total_discrepancy && vertices < best.vertices)));
    if wins {
        best.size = vertices.len();
        best.total_discrepancy = total;
        best.vertices = vertices;
    }
}

/// Vertices in degeneracy order (repeatedly remove the minimum-degree
/// vertex; ties toward the smallest index).
fn degeneracy_order(adjacency: &[FixedBitSet]) -> Vec<usize> {
    let n = adjacency.len();
    let mut degree: Vec<usize> = (0..n).map(|v| adjacency[v].count_ones(..)).collect();
    let mut removed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| !removed[v])
            .min_by_key(|&v| (degree[v], v))
            .expect("vertices remain");
        removed[v] = true;
        order.push(v);
        for u in adjacency[v].ones() {
            if !removed[u] {
                degree[u] -= 1;
            }
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellations::{EnumerationParams, FruitPoint};
    use crate::geom::testutil::{random_points, random_transform};
    use crate::mapstore::build_map;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(source: &str, metric: bool, points: &[(u64, Vec3)]) -> PointCloud {
        let fruits: Vec<FruitPoint> = points
            .iter()
            .map(|&(id, position)| FruitPoint {
                id,
                position,
                frames_seen: 10,
            })
            .collect();
        PointCloud::new(source, fruits, metric).expect("valid test cloud")
    }

    fn mini_map(points: &[(u64, Vec3)]) -> ConstellationMap {
        let params = EnumerationParams {
            k: 4,
            n: 3,
            min_frames: 1,
            max_per_anchor: None,
        };
        build_map(&cloud("map", true, points), &params).expect("map builds")
    }

    /// Exhaustive subset scan with identical tie-breaking.
    fn brute_force_clique(
        adjacency: &[FixedBitSet],
        discrepancy: &dyn Fn(usize, usize) -> f64,
    ) -> Vec<usize> {
        let n = adjacency.len();
        assert!(n <= 16);
        let mut best_size = 0usize;
        let mut best_disc = f64::INFINITY;
        let mut best: Vec<usize> = Vec::new();
        for mask in 1u32..(1 << n) {
            let vertices: Vec<usize> = (0..n).filter(|&v| mask & (1 << v) != 0).collect();
            let mut is_clique = true;
            let mut total = 0.0;
            'pairs: for i in 0..vertices.len() {
                for j in (i + 1)..vertices.len() {
                    if !adjacency[vertices[i]].contains(vertices[j]) {
                        is_clique = false;
                        break 'pairs;
                    }
                    total += discrepancy(vertices[i], vertices[j]);
                }
            }
            if !is_clique {
                continue;
            }
            let wins = vertices.len() > best_size
                || (vertices.len() == best_size
                    && (total < best_disc || (total == best_disc && vertices < best)));
            if wins {
                best_size = vertices.len();
                best_disc = total;
                best = vertices;
            }
        }
        best
    }

    #[test]
    fn matches_exhaustive_oracle_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(911);
        for density in [0.2, 0.5, 0.8, 0.95] {
            for _ in 0..10 {
                let n = rng.gen_range(4..13usize);
                let mut adjacency = vec![FixedBitSet::with_capacity(n); n];
                let mut disc = vec![vec![f64::INFINITY; n]; n];
                for i in 0..n {
                    for j in (i + 1)..n {
                        if rng.gen_bool(density) {
                            adjacency[i].insert(j);
                            adjacency[j].insert(i);
                            let e: f64 = rng.gen_range(0.0..1.0);
                            disc[i][j] = e;
                            disc[j][i] = e;
                        }
                    }
                }
                let fast = maximum_clique(&adjacency, &|i, j| disc[i][j]);
                let slow = brute_force_clique(&adjacency, &|i, j| disc[i][j]);
                assert_eq!(fast, slow, "n={n} density={density}");
            }
        }
    }

    #[test]
    fn equal_cliques_resolve_lexicographically() {
        // Two disjoint triangles, all discrepancies zero.
        let n = 6;
        let mut adjacency = vec![FixedBitSet::with_capacity(n); n];
        for &(a, b) in &[(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)] {
            adjacency[a].insert(b);
            adjacency[b].insert(a);
        }
        let clique = maximum_clique(&adjacency, &|_, _| 0.0);
        assert_eq!(clique, vec![0, 1, 2]);
    }

    #[test]
    fn equal_size_prefers_smaller_discrepancy() {
        // The lexicographically later triangle has the smaller total
        // discrepancy and must win.
        let n = 6;
        let mut adjacency = vec![FixedBitSet::with_capacity(n); n];
        for &(a, b) in &[(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)] {
            adjacency[a].insert(b);
            adjacency[b].insert(a);
        }
        let disc = |i: usize, j: usize| if i < 3 && j < 3 { 0.1 } else { 0.01 };
        let clique = maximum_clique(&adjacency, &disc);
        assert_eq!(clique, vec![3, 4, 5]);
    }

    #[test]
    fn consistent_correspondences_survive_inconsistent_drop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let motion = random_transform(&mut rng, false);
        let map_positions = random_points(&mut rng, 10, 8.0);
        let map_points: Vec<(u64, Vec3)> = map_positions
            .iter()
            .enumerate()
            .map(|(i, &p)| (100 + i as u64, p))
            .collect();
        // Queries 0..8 are the motion images of map fruits 100..108;
        // queries 8 and 9 are placed far off so their pairwise distances
        // disagree with every consistent pair.
        let mut query_points: Vec<(u64, Vec3)> = (0..8)
            .map(|i| (i as u64, motion.apply(map_positions[i])))
            .collect();
        query_points.push((8, Vec3 { x: 50.0, y: -40.0, z: 7.0 }));
        query_points.push((9, Vec3 { x: -35.0, y: 60.0, z: -20.0 }));
        let query = cloud("query", true, &query_points);
        let map = mini_map(&map_points);
        let correspondences: Vec<(u64, u64)> = (0..10).map(|i| (i as u64, 100 + i)).collect();
        let survivors = clique_filter(
            &correspondences,
            &query,
            &map,
            0.01,
            ConsistencyMode::Absolute,
        );
        let expected: Vec<(u64, u64)> = (0..8).map(|i| (i as u64, 100 + i)).collect();
        assert_eq!(survivors, expected);
    }

    #[test]
    fn log_ratio_mode_tolerates_global_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let map_positions = random_points(&mut rng, 8, 5.0);
        let map_points: Vec<(u64, Vec3)> = map_positions
            .iter()
            .enumerate()
            .map(|(i, &p)| (200 + i as u64, p))
            .collect();
        let query_points: Vec<(u64, Vec3)> = map_positions
            .iter()
            .enumerate()
            .map(|(i, &p)| (i as u64, p * 3.0))
            .collect();
        let query = cloud("query", false, &query_points);
        let map = mini_map(&map_points);
        let correspondences: Vec<(u64, u64)> = (0..8).map(|i| (i as u64, 200 + i)).collect();
        // Absolute mode rejects almost everything under a 3× scale change.
        let absolute = clique_filter(
            &correspondences,
            &query,
            &map,
            0.05,
            ConsistencyMode::Absolute,
        );
        assert!(absolute.len() < correspondences.len());
        // Log-ratio mode keeps the full set.
        let log_ratio = clique_filter(
            &correspondences,
            &query,
            &map,
            0.05,
            ConsistencyMode::LogRatio,
        );
        assert_eq!(log_ratio, correspondences);
    }

    #[test]
    fn epsilon_boundary_is_inclusive() {
        let query_points = vec![
            (0u64, Vec3 { x: 0.0, y: 0.0, z: 0.0 }),
            (1, Vec3 { x: 1.25, y: 0.0, z: 0.0 }),
            (7, Vec3 { x: 40.0, y: 40.0, z: 1.0 }),
            (8, Vec3 { x: -40.0, y: 40.0, z: 2.0 }),
        ];
        let map_points = vec![
            (100u64, Vec3 { x: 0.0, y: 0.0, z: 0.0 }),
            (101, Vec3 { x: 1.0, y: 0.0, z: 0.0 }),
            (900, Vec3 { x: 30.0, y: -30.0, z: 3.0 }),
            (901, Vec3 { x: -30.0, y: -30.0, z: 4.0 }),
        ];
        let query = cloud("query", true, &query_points);
        let map = mini_map(&map_points);
        let correspondences = vec![(0, 100), (1, 101)];
        // |1.25 − 1.0| = 0.25 exactly (binary-exact values).
        let at_boundary = clique_filter(
            &correspondences,
            &query,
            &map,
            0.25,
            ConsistencyMode::Absolute,
        );
        assert_eq!(at_boundary, correspondences);
        let below = clique_filter(
            &correspondences,
            &query,
            &map,
            0.249,
            ConsistencyMode::Absolute,
        );
        // No edge: two singleton cliques tie on size and discrepancy; the
        // lexicographically first vertex wins.
        assert_eq!(below, vec![(0, 100)]);
    }

    #[test]
    fn single_and_empty_inputs_pass_through() {
        let query_points = vec![
            (0u64, Vec3 { x: 0.0, y: 0.0, z: 0.0 }),
            (1, Vec3 { x: 1.0, y: 2.0, z: 0.0 }),
            (2, Vec3 { x: 2.0, y: 0.0, z: 1.0 }),
            (3, Vec3 { x: 0.0, y: 3.0, z: 2.0 }),
        ];
        let query = cloud("query", true, &query_points);
        let map = mini_map(&query_points);
        assert!(clique_filter(&[], &query, &map, 0.05, ConsistencyMode::Absolute).is_empty());
        let single = clique_filter(&[(2, 2)], &query, &map, 0.05, ConsistencyMode::Absolute);
        assert_eq!(single, vec![(2, 2)]);
    }
}
