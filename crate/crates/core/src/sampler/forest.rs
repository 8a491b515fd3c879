//! Randomized regression forest used as the SMAC surrogate.
//!
//! Each tree is grown on a bootstrap resample. A split picks a uniformly
//! random dimension among those with at least two distinct values in the node,
//! then a uniformly random midpoint between adjacent distinct values. Nodes
//! stop splitting once their targets are constant or nothing is splittable.

use rand::Rng;

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split {
        dim: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf(v) => return *v,
                Node::Split {
                    dim,
                    threshold,
                    left,
                    right,
                } => node = if x[*dim] <= *threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<Node>,
}

impl RandomForest {
    /// Panics if `x` is empty or `x` and `y` differ in length.
    pub fn fit<R: Rng + ?Sized>(
        x: &[Vec<f64>],
        y: &[f64],
        n_trees: usize,
        bootstrap_fraction: f64,
        rng: &mut R,
    ) -> Self {
        assert!(!x.is_empty() && x.len() == y.len());
        let n = x.len();
        let m = ((bootstrap_fraction * n as f64).round() as usize).max(1);
        let trees = (0..n_trees.max(1))
            .map(|_| {
                let sample: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
                grow(x, y, sample, rng)
            })
            .collect();
        Self { trees }
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Mean and population standard deviation of the per-tree predictions.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let preds: Vec<f64> = self.trees.iter().map(|t| t.predict(x)).collect();
        let k = preds.len() as f64;
        let mean = preds.iter().sum::<f64>() / k;
        let var = preds.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / k;
        (mean, var.sqrt())
    }
}

#[allow(clippy::needless_range_loop)]
fn grow<R: Rng + ?Sized>(x: &[Vec<f64>], y: &[f64], rows: Vec<usize>, rng: &mut R) -> Node {
    let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64;
    let first = y[rows[0]];
    if rows.len() < 2 || rows.iter().all(|&r| y[r] == first) {
        return Node::Leaf(mean);
    }
    let dims = x[0].len();
    let mut splittable: Vec<(usize, Vec<f64>)> = Vec::new();
    for d in 0..dims {
        let mut vals: Vec<f64> = rows.iter().map(|&r| x[r][d]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        if vals.len() >= 2 {
            splittable.push((d, vals));
        }
    }
    if splittable.is_empty() {
        return Node::Leaf(mean);
    }
    let (dim, vals) = &splittable[rng.random_range(0..splittable.len())];
    let k = rng.random_range(0..vals.len() - 1);
    let threshold = 0.5 * (vals[k] + vals[k + 1]);
    let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| x[i][*dim] <= threshold);
    Node::Split {
        dim: *dim,
        threshold,
        left: Box::new(grow(x, y, l, rng)),
        right: Box::new(grow(x, y, r, rng)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_observation_single_tree() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = RandomForest::fit(&[vec![1.0, 4.0, 1.0]], &[0.37], 1, 1.0, &mut rng);
        assert_eq!(f.predict(&[1.0, 4.0, 1.0]), (0.37, 0.0));
    }

    #[test]
    fn full_trees_interpolate_distinct_points() {
        // Without bootstrap duplication effects (one tree, many draws) a leaf
        // holds only identical x, so each training point is reproduced when it
        // landed in the resample.
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i % 2) as f64]).collect();
        let y: Vec<f64> = (0..6).map(|i| (i * i) as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = RandomForest::fit(&x, &y, 1, 20.0, &mut rng);
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(f.predict(xi).0, *yi);
        }
    }

    #[test]
    fn std_reflects_tree_disagreement() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = RandomForest::fit(&x, &y, 10, 1.0, &mut rng);
        assert_eq!(f.n_trees(), 10);
        let (m, s) = f.predict(&[4.5]);
        assert!((0.0..=9.0).contains(&m));
        assert!(s >= 0.0);
    }
}
