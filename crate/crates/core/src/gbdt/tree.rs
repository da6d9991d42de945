use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    /// Index into the model's encoded columns.
    pub column: usize,
    pub threshold: f64,
}

/// Symmetric tree: level `l` applies `splits[l]` at every node, and a row's
/// leaf index has bit `l` set iff `value > threshold` at that level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObliviousTree {
    /// Output (class) this tree adds to; always 0 for binary models.
    pub output: usize,
    pub splits: Vec<Split>,
    /// `2^depth` raw leaf values; the ensemble scales them by the learning
    /// rate.
    pub leaf_values: Vec<f64>,
    /// Training rows that landed in each leaf.
    pub leaf_cover: Vec<u64>,
}

impl ObliviousTree {
    pub fn depth(&self) -> usize {
        self.splits.len()
    }

    pub fn leaf_index(&self, columns: &[f64]) -> usize {
        self.splits.iter().enumerate().fold(0, |acc, (l, s)| acc | (usize::from(columns[s.column] > s.threshold) << l))
    }

    pub fn eval(&self, columns: &[f64]) -> f64 {
        self.leaf_values[self.leaf_index(columns)]
    }

    /// Sum of `leaf_cover`.
    pub fn total_cover(&self) -> u64 {
        self.leaf_cover.iter().sum()
    }

    pub fn has_cover(&self) -> bool {
        self.leaf_cover.len() == self.leaf_values.len() && self.total_cover() > 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree() -> ObliviousTree {
        ObliviousTree {
            output: 0,
            splits: vec![Split { column: 0, threshold: 0.5 }, Split { column: 1, threshold: 2.0 }],
            leaf_values: vec![1.0, 2.0, 3.0, 4.0],
            leaf_cover: vec![1, 2, 3, 4],
        }
    }

    #[test]
    fn leaf_bits_follow_levels() {
        let t = tree();
        assert_eq!(t.leaf_index(&[0.0, 0.0]), 0);
        assert_eq!(t.leaf_index(&[1.0, 0.0]), 1);
        assert_eq!(t.leaf_index(&[0.0, 3.0]), 2);
        assert_eq!(t.leaf_index(&[1.0, 3.0]), 3);
        // Equality goes left.
        assert_eq!(t.leaf_index(&[0.5, 2.0]), 0);
        assert_eq!(t.eval(&[1.0, 3.0]), 4.0);
        assert_eq!(t.total_cover(), 10);
    }

    #[test]
    fn level_order_does_not_matter() {
        let t = tree();
        for x in [[0.0, 0.0], [1.0, 0.0], [0.0, 3.0], [1.0, 3.0]] {
            let reversed = t
                .splits
                .iter()
                .enumerate()
                .rev()
                .fold(0, |acc, (l, s)| acc | (usize::from(x[s.column] > s.threshold) << l));
            assert_eq!(reversed, t.leaf_index(&x));
        }
    }
}
