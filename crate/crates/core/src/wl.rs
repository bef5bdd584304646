//! 1-dimensional Weisfeiler–Lehman colour refinement.
//!
//! Colours are interned by sorting signatures, never hashed, so they are
//! deterministic and collision-free. Internally a colour is the rank of its
//! signature among all signatures present in the round; that makes the
//! histograms independent of node order, which is what graph comparison
//! needs. [`Coloring`] re-labels them in first-occurrence order for display.

use std::collections::BTreeMap;

use crate::graph::Graph;

/// Per-node colour ids, numbered in order of first occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coloring {
    colors: Vec<usize>,
}

impl Coloring {
    fn from_canonical(labels: &[usize]) -> Self {
        let mut seen = BTreeMap::new();
        let colors = labels
            .iter()
            .map(|&c| {
                let next = seen.len();
                *seen.entry(c).or_insert(next)
            })
            .collect();
        Self { colors }
    }

    pub fn colors(&self) -> &[usize] {
        &self.colors
    }

    pub fn num_colors(&self) -> usize {
        self.colors.iter().max().map_or(0, |&m| m + 1)
    }

    /// Number of nodes per colour, indexed by colour id.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_colors()];
        for &c in &self.colors {
            h[c] += 1;
        }
        h
    }
}

fn rank<K: Ord + Clone>(keys: &[K]) -> (Vec<usize>, usize) {
    let mut distinct = keys.to_vec();
    distinct.sort();
    distinct.dedup();
    let labels = keys
        .iter()
        .map(|k| distinct.binary_search(k).expect("key is present"))
        .collect();
    (labels, distinct.len())
}

fn feature_key(g: &Graph, v: usize) -> Vec<u64> {
    g.node_features().row(v).iter().map(|x| x.to_bits()).collect()
}

/// Refines the disjoint union of `graphs` and returns the canonical labels of
/// every round, starting with the feature bucketing. Stops once the
/// partition is stable (the stable round itself is not repeated) or after
/// `max_iters` rounds.
fn refine_union(graphs: &[&Graph], max_iters: usize) -> (Vec<Vec<usize>>, usize) {
    let offsets: Vec<usize> = graphs
        .iter()
        .scan(0, |acc, g| {
            let o = *acc;
            *acc += g.num_nodes();
            Some(o)
        })
        .collect();
    let mut incoming: Vec<Vec<usize>> = Vec::new();
    let mut keys = Vec::new();
    for (g, &off) in graphs.iter().zip(&offsets) {
        for v in 0..g.num_nodes() {
            // feature width goes first so graphs of different widths never collide
            let mut key = vec![g.feature_dim() as u64];
            key.extend(feature_key(g, v));
            keys.push(key);
            let nb = g.incoming_neighbors(v).expect("node in range");
            incoming.push(nb.iter().map(|&(u, _)| u + off).collect());
        }
    }
    let (mut labels, mut count) = rank(&keys);
    let mut rounds = vec![labels.clone()];
    let mut used = 0;
    while used < max_iters {
        used += 1;
        let sigs: Vec<(usize, Vec<usize>)> = incoming
            .iter()
            .enumerate()
            .map(|(v, nb)| {
                let mut m: Vec<usize> = nb.iter().map(|&u| labels[u]).collect();
                m.sort_unstable();
                (labels[v], m)
            })
            .collect();
        let (next, next_count) = rank(&sigs);
        // refinement never merges, so an unchanged count means an unchanged partition
        if next_count == count {
            break;
        }
        labels = next;
        count = next_count;
        rounds.push(labels.clone());
    }
    (rounds, used)
}

/// Colour refinement of one graph. Returns the final colouring and the
/// number of refinement rounds run, including the round that detected
/// stability.
pub fn wl_refine(g: &Graph, max_iters: usize) -> (Coloring, usize) {
    let (rounds, used) = refine_union(&[g], max_iters);
    let last = rounds.last().expect("initial round");
    (Coloring::from_canonical(last), used)
}

/// Canonical colour histograms of every round up to stabilization. Equal
/// for isomorphic graphs.
pub fn wl_histograms(g: &Graph, max_iters: usize) -> Vec<BTreeMap<usize, usize>> {
    let (rounds, _) = refine_union(&[g], max_iters);
    rounds.iter().map(|r| histogram(r)).collect()
}

fn histogram(labels: &[usize]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for &c in labels {
        *h.entry(c).or_insert(0) += 1;
    }
    h
}

/// Whether 1-WL tells `g1` and `g2` apart: both graphs are refined jointly
/// and their colour histograms compared after every round.
pub fn wl_distinguish(g1: &Graph, g2: &Graph, max_iters: usize) -> bool {
    if g1.num_nodes() != g2.num_nodes() {
        return true;
    }
    let n1 = g1.num_nodes();
    let (rounds, _) = refine_union(&[g1, g2], max_iters);
    rounds
        .iter()
        .any(|r| histogram(&r[..n1]) != histogram(&r[n1..]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures;

    #[test]
    fn triangle_is_one_colour() {
        let (c, rounds) = wl_refine(&fixtures::triangle(), 10);
        assert_eq!(c.colors(), &[0, 0, 0]);
        assert_eq!(rounds, 1);
    }

    #[test]
    fn path_splits_middle() {
        let (c, _) = wl_refine(&fixtures::path(3), 10);
        assert_eq!(c.colors(), &[0, 1, 0]);
        assert_eq!(c.histogram(), vec![2, 1]);
    }

    #[test]
    fn zero_iterations_is_feature_bucketing() {
        let g = Graph::from_rows(&[vec![2.0], vec![1.0], vec![2.0]], vec![], 1, None).unwrap();
        let (c, rounds) = wl_refine(&g, 0);
        assert_eq!(c.colors(), &[0, 1, 0]);
        assert_eq!(rounds, 0);
    }

    #[test]
    fn classic_pairs() {
        let t = fixtures::triangle();
        assert!(!wl_distinguish(&t, &t, 10));
        assert!(wl_distinguish(&t, &fixtures::path(3), 10));
        assert!(!wl_distinguish(&fixtures::cycle(6), &fixtures::two_triangles(), 10));
    }

    #[test]
    fn direction_matters() {
        use crate::graph::Edge;
        let f = vec![vec![1.0]; 3];
        let into = Graph::from_rows(&f, vec![Edge::new(1, 0, vec![1.0]), Edge::new(2, 0, vec![1.0])], 1, None).unwrap();
        let out = Graph::from_rows(&f, vec![Edge::new(0, 1, vec![1.0]), Edge::new(0, 2, vec![1.0])], 1, None).unwrap();
        assert!(wl_distinguish(&into, &out, 5));
    }
}
