//! Standard graph families used by the experiments and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::WeightedGraph;
use crate::error::{Error, Result};

fn need(n: usize, min: usize, what: &str) -> Result<()> {
    if n < min {
        Err(Error::InvalidParameter(format!(
            "{what} needs at least {min} vertices, got {n}"
        )))
    } else {
        Ok(())
    }
}

/// Path `0 – 1 – … – (n-1)` with unit weights.
pub fn path(n: usize) -> Result<WeightedGraph> {
    need(n, 2, "path")?;
    WeightedGraph::from_edges((0..n - 1).map(|i| (i, i + 1, 1.0)))
}

/// Cycle on `n ≥ 3` vertices with unit weights.
pub fn cycle(n: usize) -> Result<WeightedGraph> {
    need(n, 3, "cycle")?;
    WeightedGraph::from_edges((0..n).map(|i| (i, (i + 1) % n, 1.0)))
}

/// `width × height` grid with unit weights; vertex `(x, y)` has index `y * width + x`.
pub fn grid(width: usize, height: usize) -> Result<WeightedGraph> {
    need(width * height, 2, "grid")?;
    let mut edges = Vec::new();
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if x + 1 < width {
                edges.push((i, i + 1, 1.0));
            }
            if y + 1 < height {
                edges.push((i, i + width, 1.0));
            }
        }
    }
    WeightedGraph::from_edges(edges)
}

/// Star `K_{1,leaves}` with centre 0.
pub fn star(leaves: usize) -> Result<WeightedGraph> {
    need(leaves + 1, 2, "star")?;
    WeightedGraph::from_edges((1..=leaves).map(|i| (0, i, 1.0)))
}

/// Heap-ordered binary tree (`parent(i) = (i-1)/2`) with weights uniform in `[0.5, 2)`.
pub fn random_weight_tree(n: usize, seed: u64) -> Result<WeightedGraph> {
    need(n, 2, "tree")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    WeightedGraph::from_edges((1..n).map(|i| (i, (i - 1) / 2, rng.gen_range(0.5..2.0))))
}

/// Unit-weight path with a loop of weight `loop_weight` at every vertex.
pub fn lazy_segment(n: usize, loop_weight: f64) -> Result<WeightedGraph> {
    path(n)?.with_loops(|_, _| loop_weight)
}

/// Adds a loop of weight `m(u)` at every vertex, so that the new kernel is `(I + P)/2`.
pub fn lazy(g: &WeightedGraph) -> Result<WeightedGraph> {
    g.with_loops(|_, m| m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(grid(10, 10).unwrap().len(), 100);
        assert_eq!(grid(10, 10).unwrap().edges().count(), 180);
        assert_eq!(random_weight_tree(63, 1).unwrap().edges().count(), 62);
        assert_eq!(cycle(50).unwrap().edges().count(), 50);
    }

    #[test]
    fn tree_is_seeded() {
        assert_eq!(
            random_weight_tree(15, 9).unwrap(),
            random_weight_tree(15, 9).unwrap()
        );
    }

    #[test]
    fn lazy_doubles_measure() {
        let g = lazy(&cycle(5).unwrap()).unwrap();
        assert!(g.measures().iter().all(|&m| m == 4.0));
        assert_eq!(g.weight(2, 2), 2.0);
    }
}
