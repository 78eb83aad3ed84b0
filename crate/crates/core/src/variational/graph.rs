//! Longest-path kernel over the DAG of environment sites ordered by x.
//!
//! An edge `i → j` exists when `x_i < x_j` and the chord slope is at most 1 in magnitude;
//! its cost is the entropy of the chord. Node gains and edge costs are combined by a
//! [`Scoring`], and ties in the primary score are broken towards lower total entropy.

use crate::entropy::{entropy_rate, segment_entropy, SLOPE_TOL};
use crate::environment::{Environment, Site};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Scoring {
    /// Multiplier of a node's weight in the primary score.
    pub gain: f64,
    /// Multiplier of an edge's entropy in the primary score.
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Score {
    pub primary: f64,
    /// Accumulated entropy, minimized among equal primaries.
    pub entropy: f64,
}

impl Score {
    const NONE: Score = Score {
        primary: f64::NEG_INFINITY,
        entropy: f64::INFINITY,
    };

    #[inline]
    fn beats(self, other: Score) -> bool {
        self.primary > other.primary
            || (self.primary == other.primary && self.entropy < other.entropy)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Node {
    pub site: Site,
    pub x: f64,
    pub y: f64,
    pub weight: f64,
}

enum Edges {
    /// Predecessor lists with precomputed chord entropies (compressed rows).
    Dense {
        offsets: Vec<usize>,
        pred: Vec<u32>,
        cost: Vec<f64>,
    },
    /// Lattice sites: predecessors are found per column and costs come from a table keyed
    /// by the integer displacement.
    Lattice {
        n: i64,
        coords: Vec<(i64, i64)>,
        column_start: Vec<usize>,
        table: Vec<f64>,
    },
}

pub(crate) struct PathGraph {
    pub nodes: Vec<Node>,
    edges: Edges,
}

pub(crate) struct BestPath {
    pub score: Score,
    /// Node indices from origin to terminal.
    pub nodes: Vec<usize>,
}

#[inline]
fn table_index(dk: i64, dh: i64) -> usize {
    // row dk starts after 2 + 3 + ... + dk entries; column (dh + dk)/2
    ((dk * (dk + 1)) / 2 - 1 + (dh + dk) / 2) as usize
}

impl PathGraph {
    pub fn new(env: &Environment) -> Self {
        let mut nodes: Vec<Node> = env
            .sites()
            .map(|site| {
                let p = env.site_position(site);
                Node {
                    site,
                    x: p.x,
                    y: p.y,
                    weight: env.weight(site),
                }
            })
            .collect();
        match env.lattice_n() {
            Some(n) => {
                let n = i64::from(n);
                let mut keyed: Vec<((i64, i64), Node)> = nodes
                    .into_iter()
                    .map(|nd| (env.lattice_coords(nd.site).expect("lattice site"), nd))
                    .collect();
                keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.site.cmp(&b.1.site)));
                let coords: Vec<(i64, i64)> = keyed.iter().map(|(c, _)| *c).collect();
                let nodes: Vec<Node> = keyed.into_iter().map(|(_, nd)| nd).collect();
                let mut column_start = vec![0usize; n as usize + 2];
                for &(k, _) in &coords {
                    column_start[k as usize + 1] += 1;
                }
                for c in 1..column_start.len() {
                    column_start[c] += column_start[c - 1];
                }
                let nf = n as f64;
                let mut table = Vec::with_capacity(((n + 1) * (n + 2) / 2) as usize);
                for dk in 1..=n {
                    for j in 0..=dk {
                        let dh = 2 * j - dk;
                        table.push(dk as f64 / nf * entropy_rate(dh as f64 / dk as f64));
                    }
                }
                debug_assert_eq!(table.len(), table_index(n, n) + 1);
                PathGraph {
                    nodes,
                    edges: Edges::Lattice {
                        n,
                        coords,
                        column_start,
                        table,
                    },
                }
            }
            None => {
                nodes.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.site.cmp(&b.site)));
                let mut offsets = Vec::with_capacity(nodes.len() + 1);
                let mut pred = Vec::new();
                let mut cost = Vec::new();
                offsets.push(0);
                for (j, b) in nodes.iter().enumerate() {
                    for (i, a) in nodes[..j].iter().enumerate() {
                        let (dx, dy) = (b.x - a.x, b.y - a.y);
                        if dx > 0.0 && dy.abs() <= (1.0 + SLOPE_TOL) * dx {
                            pred.push(i as u32);
                            cost.push(segment_entropy(dx, dy));
                        }
                    }
                    offsets.push(pred.len());
                }
                PathGraph {
                    nodes,
                    edges: Edges::Dense {
                        offsets,
                        pred,
                        cost,
                    },
                }
            }
        }
    }

    pub fn terminal(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Calls `f(i, cost)` for every admissible predecessor `i` of node `j`.
    #[inline]
    pub fn for_each_pred(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        match &self.edges {
            Edges::Dense {
                offsets,
                pred,
                cost,
            } => {
                for e in offsets[j]..offsets[j + 1] {
                    f(pred[e] as usize, cost[e]);
                }
            }
            Edges::Lattice {
                n,
                coords,
                column_start,
                table,
            } => {
                let (kj, hj) = coords[j];
                debug_assert!(kj <= *n);
                for c in 0..kj {
                    let dk = kj - c;
                    let col = &coords[column_start[c as usize]..column_start[c as usize + 1]];
                    let base = column_start[c as usize];
                    let lo = col.partition_point(|&(_, h)| h < hj - dk);
                    let hi = col.partition_point(|&(_, h)| h <= hj + dk);
                    for (off, &(_, h)) in col[lo..hi].iter().enumerate() {
                        f(base + lo + off, table[table_index(dk, hj - h)]);
                    }
                }
            }
        }
    }

    pub fn best_path(&self, scoring: Scoring) -> BestPath {
        let len = self.nodes.len();
        let mut best = vec![Score::NONE; len];
        let mut parent = vec![usize::MAX; len];
        best[0] = Score {
            primary: 0.0,
            entropy: 0.0,
        };
        for j in 1..len {
            let mut cur = Score::NONE;
            let mut arg = usize::MAX;
            self.for_each_pred(j, |i, c| {
                let cand = Score {
                    primary: best[i].primary - scoring.cost * c,
                    entropy: best[i].entropy + c,
                };
                if cand.beats(cur) {
                    cur = cand;
                    arg = i;
                }
            });
            cur.primary += scoring.gain * self.nodes[j].weight;
            best[j] = cur;
            parent[j] = arg;
        }
        let t = self.terminal();
        BestPath {
            score: best[t],
            nodes: trace(&parent, t),
        }
    }

    /// Best path whose polyline keeps sup-distance at least `delta` from `center`.
    ///
    /// The sup-distance of a polyline to `center` is the maximum over its segments of the
    /// per-segment deviation, so a two-state DP (escaped or not) is exact.
    pub fn best_escaping_path(
        &self,
        scoring: Scoring,
        deviation: impl Fn(&Node, &Node) -> f64,
        delta: f64,
    ) -> Option<BestPath> {
        let len = self.nodes.len();
        let mut best = [vec![Score::NONE; len], vec![Score::NONE; len]];
        let mut parent = [vec![(usize::MAX, 0u8); len], vec![(usize::MAX, 0u8); len]];
        best[0][0] = Score {
            primary: 0.0,
            entropy: 0.0,
        };
        for j in 1..len {
            let mut cur = [Score::NONE; 2];
            let mut arg = [(usize::MAX, 0u8); 2];
            let nj = &self.nodes[j];
            self.for_each_pred(j, |i, c| {
                let escapes = deviation(&self.nodes[i], nj) >= delta;
                for from in 0..2u8 {
                    let prev = best[from as usize][i];
                    if prev.primary == f64::NEG_INFINITY {
                        continue;
                    }
                    let to = usize::from(from == 1 || escapes);
                    let cand = Score {
                        primary: prev.primary - scoring.cost * c,
                        entropy: prev.entropy + c,
                    };
                    if cand.beats(cur[to]) {
                        cur[to] = cand;
                        arg[to] = (i, from);
                    }
                }
            });
            for flag in 0..2 {
                if cur[flag].primary > f64::NEG_INFINITY {
                    cur[flag].primary += scoring.gain * nj.weight;
                }
                best[flag][j] = cur[flag];
                parent[flag][j] = arg[flag];
            }
        }
        let t = self.terminal();
        if best[1][t].primary == f64::NEG_INFINITY {
            return None;
        }
        let mut nodes = vec![t];
        let (mut j, mut flag) = (t, 1u8);
        while j != 0 {
            let (i, from) = parent[flag as usize][j];
            nodes.push(i);
            j = i;
            flag = from;
        }
        nodes.reverse();
        Some(BestPath {
            score: best[1][t],
            nodes,
        })
    }
}

fn trace(parent: &[usize], end: usize) -> Vec<usize> {
    let mut path = vec![end];
    let mut j = end;
    while j != 0 {
        j = parent[j];
        path.push(j);
    }
    path.reverse();
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::sample_lattice_environment;

    #[test]
    fn lattice_table_layout() {
        assert_eq!(table_index(1, -1), 0);
        assert_eq!(table_index(1, 1), 1);
        assert_eq!(table_index(2, -2), 2);
        assert_eq!(table_index(2, 2), 4);
        assert_eq!(table_index(3, -3), 5);
    }

    #[test]
    fn lattice_and_dense_edges_agree() {
        let env = sample_lattice_environment(8, 1.0, 4).unwrap();
        let lattice = PathGraph::new(&env);
        for j in 0..lattice.nodes.len() {
            let nj = lattice.nodes[j];
            let mut got = Vec::new();
            lattice.for_each_pred(j, |i, c| got.push((lattice.nodes[i].site, c)));
            let mut want = Vec::new();
            for ni in &lattice.nodes {
                let (dx, dy) = (nj.x - ni.x, nj.y - ni.y);
                if dx > 0.0 && dy.abs() <= dx + 1e-12 {
                    want.push((ni.site, segment_entropy(dx, dy)));
                }
            }
            got.sort_by_key(|a| a.0);
            want.sort_by_key(|a| a.0);
            assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(&want) {
                assert_eq!(g.0, w.0);
                assert!((g.1 - w.1).abs() < 1e-14);
            }
        }
    }
}
