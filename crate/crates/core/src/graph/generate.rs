//! Deterministic graph generators and small named fixtures.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Edge, Graph};
use crate::error::{invalid, Result};

/// Directed path `v0 → v1 → … → vd` with the given node features and unit edge attributes.
pub fn gen_chain(d: usize, states: &[Vec<f64>]) -> Result<Graph> {
    if states.len() != d + 1 {
        return Err(invalid(format!(
            "a chain of length {d} needs {} node states, got {}",
            d + 1,
            states.len()
        )));
    }
    let edges = (0..d).map(|i| Edge::new(i, i + 1, vec![1.0])).collect();
    Graph::from_rows(states, edges, 1, None)
}

/// Class of an edge-task graph: 1 when the first attribute components sum to
/// a positive value, 0 otherwise (ties go to 0).
pub fn edge_task_label(g: &Graph) -> usize {
    let total: f64 = g.edges().iter().map(|e| e.attr[0]).sum();
    usize::from(total > 0.0)
}

/// Binary classification graphs whose label depends on edge attributes only.
///
/// Node features are the constant `[1.0]`; edge attributes are drawn from
/// `{−1, +1}^d_e`. Graphs come in pairs sharing one random structure, the
/// second carrying the negated attributes, and every graph has an odd number
/// of edges. The structure therefore says nothing about the label, and the
/// two members of a pair always have opposite labels.
pub fn gen_edge_task(
    seed: u64,
    count: usize,
    n_range: (usize, usize),
    d_e: usize,
) -> Result<Dataset> {
    if count == 0 {
        return Err(invalid("count must be positive"));
    }
    let (lo, hi) = n_range;
    if lo < 2 || hi < lo {
        return Err(invalid(format!("node range {n_range:?} must satisfy 2 <= min <= max")));
    }
    if d_e == 0 {
        return Err(invalid("edge attribute width must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs = Vec::with_capacity(count);
    while graphs.len() < count {
        let n = rng.gen_range(lo..=hi);
        let mut pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (0..n).filter(move |&v| v != u).map(move |v| (u, v)))
            .collect();
        pairs.shuffle(&mut rng);
        let max_m = pairs.len().min(2 * n);
        let mut m = rng.gen_range(1..=max_m);
        if m % 2 == 0 {
            m -= 1;
        }
        pairs.truncate(m);
        let attrs: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                (0..d_e)
                    .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
                    .collect()
            })
            .collect();
        let features = vec![vec![1.0]; n];
        for sign in [1.0, -1.0] {
            if graphs.len() == count {
                break;
            }
            let edges = pairs
                .iter()
                .zip(&attrs)
                .map(|(&(u, v), a)| Edge::new(u, v, a.iter().map(|x| sign * x).collect()))
                .collect();
            let mut g = Graph::from_rows(&features, edges, d_e, None)?;
            let label = edge_task_label(&g);
            g = g.with_label(Some(label));
            graphs.push(g);
        }
    }
    Dataset::new(graphs, 2)
}

/// Parameters for [`random_graph`].
#[derive(Debug, Clone)]
pub struct RandomGraphSpec {
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub feature_dim: usize,
    pub edge_dim: usize,
    /// Probability of each ordered pair `(u, v)` being an edge.
    pub edge_prob: f64,
    pub self_loops: bool,
    /// Features drawn from `{0, 1, .., levels-1}` when set, else uniform in `[-1, 1]`.
    pub feature_levels: Option<u32>,
}

impl Default for RandomGraphSpec {
    fn default() -> Self {
        Self {
            min_nodes: 1,
            max_nodes: 12,
            feature_dim: 3,
            edge_dim: 2,
            edge_prob: 0.3,
            self_loops: false,
            feature_levels: None,
        }
    }
}

/// Random directed graph; edge attributes uniform in `[-1, 1]`.
pub fn random_graph<R: Rng + ?Sized>(rng: &mut R, spec: &RandomGraphSpec) -> Graph {
    let n = rng.gen_range(spec.min_nodes.max(1)..=spec.max_nodes.max(spec.min_nodes.max(1)));
    let features: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..spec.feature_dim)
                .map(|_| match spec.feature_levels {
                    Some(k) => f64::from(rng.gen_range(0..k.max(1))),
                    None => rng.gen_range(-1.0..=1.0),
                })
                .collect()
        })
        .collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u == v && !spec.self_loops {
                continue;
            }
            if rng.gen_bool(spec.edge_prob) {
                let attr = (0..spec.edge_dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                edges.push(Edge::new(u, v, attr));
            }
        }
    }
    Graph::from_rows(&features, edges, spec.edge_dim, None).expect("generated graph is valid")
}

/// Small undirected graphs with uniform features `[1.0]` and unit edge attributes.
pub mod fixtures {
    use super::{Edge, Graph};

    /// Each pair becomes two antiparallel edges.
    pub fn undirected(n: usize, pairs: &[(usize, usize)]) -> Graph {
        let edges = pairs
            .iter()
            .flat_map(|&(u, v)| [Edge::new(u, v, vec![1.0]), Edge::new(v, u, vec![1.0])])
            .collect();
        Graph::from_rows(&vec![vec![1.0]; n], edges, 1, None).expect("fixture is valid")
    }

    pub fn triangle() -> Graph {
        undirected(3, &[(0, 1), (1, 2), (2, 0)])
    }

    pub fn path(n: usize) -> Graph {
        let pairs: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        undirected(n, &pairs)
    }

    pub fn cycle(n: usize) -> Graph {
        let pairs: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        undirected(n, &pairs)
    }

    pub fn two_triangles() -> Graph {
        undirected(6, &[(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)])
    }

    /// Center 0 joined to `leaves` leaves.
    pub fn star(leaves: usize) -> Graph {
        let pairs: Vec<_> = (1..=leaves).map(|i| (0, i)).collect();
        undirected(leaves + 1, &pairs)
    }

    /// Named fixture lookup used by the command line.
    pub fn by_name(name: &str) -> Option<Graph> {
        match name {
            "triangle" => Some(triangle()),
            "path3" => Some(path(3)),
            "cycle6" => Some(cycle(6)),
            "two-triangles" => Some(two_triangles()),
            _ => None,
        }
    }
}
