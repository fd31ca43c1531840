//! Vote accumulation and globally optimal one-to-one assignment.

use std::collections::HashMap;

/// Sparse query×map vote counts accumulated from descriptor hits.
#[derive(Debug, Clone, Default)]
pub struct VoteMatrix {
    cells: HashMap<(u64, u64), u32>,
}

impl VoteMatrix {
    pub fn new() -> VoteMatrix {
        VoteMatrix::default()
    }

    pub fn add_vote(&mut self, query_id: u64, map_id: u64) {
        *self.cells.entry((query_id, map_id)).or_insert(0) += 1;
    }

    pub fn add(&mut self, query_id: u64, map_id: u64, count: u32) {
        *self.cells.entry((query_id, map_id)).or_insert(0) += count;
    }

    pub fn merge(&mut self, other: &VoteMatrix) {
        for (&(q, m), &count) in &other.cells {
            self.add(q, m, count);
        }
    }

    pub fn votes(&self, query_id: u64, map_id: u64) -> u32 {
        self.cells.get(&(query_id, map_id)).copied().unwrap_or(0)
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total_votes(&self) -> u64 {
        self.cells.values().map(|&v| v as u64).sum()
    }

    /// Cells in ascending (query id, map id) order.
    pub fn iter_sorted(&self) -> Vec<((u64, u64), u32)> {
        let mut cells: Vec<_> = self.cells.iter().map(|(&k, &v)| (k, v)).collect();
        cells.sort_unstable();
        cells
    }
}

const FORBIDDEN: i64 = i64::MAX / 4;

/// One-to-one assignment maximizing total votes over cells with at least
/// `min_votes`; pairs below the threshold are never assigned.
///
/// Reduction: pad the rectangular vote matrix to square with per-row and
/// per-column dummies priced so that leaving a point unmatched is exactly
/// vote-neutral; then run a minimum-cost solver on `max_vote − votes`. Vote
/// ties resolve toward lexicographically smaller (query id, map id) pairs
/// via a sub-unit penalty. Returns pairs sorted by (query id, map id).
pub fn assign_hungarian(votes: &VoteMatrix, min_votes: u32) -> Vec<(u64, u64)> {
    let mut query_ids: Vec<u64> = Vec::new();
    let mut map_ids: Vec<u64> = Vec::new();
    let mut qualifying: Vec<((u64, u64), u32)> = Vec::new();
    for (key, count) in votes.iter_sorted() {
        if count >= min_votes.max(1) {
            qualifying.push((key, count));
            query_ids.push(key.0);
            map_ids.push(key.1);
        }
    }
    if qualifying.is_empty() {
        return Vec::new();
    }
    query_ids.sort_unstable();
    query_ids.dedup();
    map_ids.sort_unstable();
    map_ids.dedup();

    let rows = query_ids.len();
    let cols = map_ids.len();
    let size = rows + cols;
    let max_vote = qualifying.iter().map(|&(_, v)| v).max().unwrap() as i64;
    // Penalties stay below one vote unit in aggregate.
    let scale = (size as i64).pow(3) + 1;

    let mut cost = vec![vec![FORBIDDEN; size]; size];
    for (&(q, m), &v) in qualifying.iter().map(|(k, v)| (k, v)) {
        let i = query_ids.binary_search(&q).expect("row exists");
        let j = map_ids.binary_search(&m).expect("col exists");
        cost[i][j] = (max_vote - v as i64) * scale + (i * cols + j) as i64;
    }
    // A real row or column may opt out via its own dummy at exactly the
    // max vote price; dummy-dummy pairs carry the same price so the total
    // depends only on the votes collected.
    for i in 0..rows {
        cost[i][cols + i] = max_vote * scale;
    }
    for j in 0..cols {
        cost[rows + j][j] = max_vote * scale;
    }
    for i in rows..size {
        for j in cols..size {
            cost[i][j] = max_vote * scale;
        }
    }

    let assignment = solve_min_cost(&cost);
    let mut pairs: Vec<(u64, u64)> = assignment
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < rows && j < cols)
        .map(|(i, &j)| (query_ids[i], map_ids[j]))
        .filter(|&(q, m)| votes.votes(q, m) >= min_votes.max(1))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Minimum-cost perfect assignment on a square matrix (Jonker-style
/// potentials, O(n³)); returns the column chosen for each row.
pub(crate) fn solve_min_cost(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut matched = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![usize::MAX; n];
    for j in 1..=n {
        if matched[j] != 0 {
            assignment[matched[j] - 1] = j - 1;
        }
    }
    assignment
}
