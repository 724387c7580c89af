//! Regression-tree growing over pre-binned columns.
//!
//! Columns are coded once per fit into ordered bins (one bin per distinct
//! value when there are few enough of them, quantile bins otherwise). Each
//! node's split search uses either a per-bin histogram or a sort of the node's
//! codes, whichever is cheaper for the node size. Splits minimize the sum of
//! squared errors of the node targets; for 0/1 targets this is the same
//! ordering as the Gini impurity decrease.

use nalgebra::DMatrix;

use crate::data::column;
use crate::seed::mix;

pub(crate) const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub(crate) struct BinnedColumn {
    codes: Vec<u16>,
    /// Smallest and largest raw value falling in each bin.
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BinnedColumn {
    fn new(values: &[f64], max_bins: usize) -> Self {
        let n = values.len();
        let mut sorted: Vec<f64> = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut uniq: Vec<f64> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for &v in &sorted {
            if uniq.last() == Some(&v) {
                *counts.last_mut().unwrap() += 1;
            } else {
                uniq.push(v);
                counts.push(1);
            }
        }
        // bin_of_uniq[u] = bin holding the u-th distinct value
        let mut bin_of_uniq = Vec::with_capacity(uniq.len());
        if uniq.len() <= max_bins {
            bin_of_uniq.extend(0..uniq.len());
        } else {
            let per_bin = n as f64 / max_bins as f64;
            let mut bin = 0usize;
            let mut cum = 0usize;
            for &c in &counts {
                bin_of_uniq.push(bin);
                cum += c;
                if bin + 1 < max_bins && cum as f64 >= per_bin * (bin + 1) as f64 {
                    bin += 1;
                }
            }
        }
        let n_bins = bin_of_uniq.last().map_or(0, |b| b + 1);
        let mut lower = vec![f64::INFINITY; n_bins];
        let mut upper = vec![f64::NEG_INFINITY; n_bins];
        for (u, &b) in bin_of_uniq.iter().enumerate() {
            lower[b] = lower[b].min(uniq[u]);
            upper[b] = upper[b].max(uniq[u]);
        }
        let codes = values
            .iter()
            .map(|v| {
                let u = uniq
                    .binary_search_by(|probe| probe.total_cmp(v))
                    .expect("value present in its own column");
                bin_of_uniq[u] as u16
            })
            .collect();
        BinnedColumn { codes, lower, upper }
    }

    fn n_bins(&self) -> usize {
        self.lower.len()
    }

    /// Cut point sending bins `..=left` one way and `right..` the other.
    fn threshold(&self, left: usize, right: usize) -> f64 {
        let (a, b) = (self.upper[left], self.lower[right]);
        let mid = a + (b - a) / 2.0;
        if mid >= b {
            a
        } else {
            mid
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BinnedMatrix {
    cols: Vec<BinnedColumn>,
    max_bins: usize,
}

impl BinnedMatrix {
    pub fn new(x: &DMatrix<f64>, max_bins: usize) -> Self {
        assert!((2..=65_536).contains(&max_bins));
        let cols = (0..x.ncols())
            .map(|j| BinnedColumn::new(column(x, j), max_bins))
            .collect();
        BinnedMatrix { cols, max_bins }
    }

    pub fn n_features(&self) -> usize {
        self.cols.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub max_depth: usize,
    /// Nodes with fewer rows are not split.
    pub min_split: usize,
    /// Each child must have at least this many rows.
    pub min_leaf: usize,
    /// Features tried per node; `None` tries every feature.
    pub mtry: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Node {
    pub threshold: f64,
    /// Mean target of the node's rows (the prediction when it is a leaf).
    pub value: f64,
    /// Split-criterion decrease; zero for leaves.
    pub gain: f64,
    /// Training rows (with bootstrap multiplicity) reaching the node.
    pub count: u32,
    pub feature: u32,
    /// Index of the left child; the right child follows it.
    pub left: u32,
}

const BLANK: Node = Node {
    threshold: 0.0,
    value: 0.0,
    gain: 0.0,
    count: 0,
    feature: LEAF,
    left: 0,
};

/// Splitmix stream used for per-node feature sampling. Each node's stream is
/// keyed by its path from the root, so a node's candidate features do not
/// depend on which other nodes were split.
struct NodeRng(u64);

impl NodeRng {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        mix(self.0)
    }

    /// Uniform draw from `lo..hi`.
    fn below(&mut self, lo: usize, hi: usize) -> usize {
        let span = (hi - lo) as u128;
        lo + ((self.next() as u128 * span) >> 64) as usize
    }
}

fn child_key(parent: u64, right: bool) -> u64 {
    mix(parent.wrapping_mul(3).wrapping_add(1 + right as u64))
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Tree {
    pub nodes: Vec<Node>,
}

/// Leaf node id and its slice of the (partitioned) row buffer.
pub(crate) struct LeafRange {
    pub node: usize,
    pub start: usize,
    pub end: usize,
}

impl Tree {
    #[cfg(test)]
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut k = 0usize;
        loop {
            let node = &self.nodes[k];
            if node.feature == LEAF {
                return node.value;
            }
            k = if x[node.feature as usize] <= node.threshold {
                node.left as usize
            } else {
                node.left as usize + 1
            };
        }
    }

    /// Adds `scale * tree(x_i)` to `out[i]` for every row of a column-major matrix.
    pub fn accumulate(&self, x: &DMatrix<f64>, scale: f64, out: &mut [f64]) {
        let n = x.nrows();
        let data = x.as_slice();
        for (i, o) in out.iter_mut().enumerate() {
            let mut k = 0usize;
            loop {
                let node = &self.nodes[k];
                if node.feature == LEAF {
                    *o += scale * node.value;
                    break;
                }
                let v = data[node.feature as usize * n + i];
                k = if v <= node.threshold {
                    node.left as usize
                } else {
                    node.left as usize + 1
                };
            }
        }
    }

    /// The tree with every node of fewer than `min_split` rows made a leaf.
    /// Node order matches a tree grown directly with that threshold.
    pub fn pruned(&self, min_split: usize) -> Tree {
        let mut nodes = vec![Node { feature: LEAF, gain: 0.0, left: 0, threshold: 0.0, ..self.nodes[0] }];
        // (old id, new id), processed in the grower's depth-first order
        let mut stack = vec![(0usize, 0usize)];
        while let Some((old, new)) = stack.pop() {
            let node = self.nodes[old];
            if node.feature == LEAF || (node.count as usize) < min_split {
                continue;
            }
            let left = nodes.len();
            let l = self.nodes[node.left as usize];
            let r = self.nodes[node.left as usize + 1];
            nodes.push(Node { feature: LEAF, gain: 0.0, left: 0, threshold: 0.0, ..l });
            nodes.push(Node { feature: LEAF, gain: 0.0, left: 0, threshold: 0.0, ..r });
            nodes[new] = Node { left: left as u32, ..node };
            stack.push((node.left as usize + 1, left + 1));
            stack.push((node.left as usize, left));
        }
        Tree { nodes }
    }

    /// Adds each split's gain to its feature's entry.
    pub fn add_importance(&self, importance: &mut [f64]) {
        for n in &self.nodes {
            if n.feature != LEAF {
                importance[n.feature as usize] += n.gain;
            }
        }
    }

    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .filter(|n| n.feature != LEAF)
            .map(|n| n.feature as usize)
    }
}

struct Split {
    feature: usize,
    left_bin: usize,
    threshold: f64,
    gain: f64,
}

/// Reusable scratch space for growing many trees on the same binned data.
pub(crate) struct TreeGrower<'a> {
    data: &'a BinnedMatrix,
    params: TreeParams,
    hist_count: Vec<u32>,
    hist_sum: Vec<f64>,
    pairs: Vec<(u16, f64)>,
    features: Vec<usize>,
}

impl<'a> TreeGrower<'a> {
    pub fn new(data: &'a BinnedMatrix, params: TreeParams) -> Self {
        TreeGrower {
            data,
            params,
            hist_count: vec![0; data.max_bins],
            hist_sum: vec![0.0; data.max_bins],
            pairs: Vec::new(),
            features: (0..data.n_features()).collect(),
        }
    }

    /// Grows one tree on `rows` (indices into the binned data, duplicates
    /// allowed) against `targets` indexed by row. `rows` is partitioned in
    /// place so that each returned leaf owns a contiguous slice. Leaf values
    /// are the target means. `key` seeds the per-node feature sampling.
    pub fn grow(&mut self, targets: &[f64], rows: &mut [u32], key: u64, leaves: &mut Vec<LeafRange>) -> Tree {
        leaves.clear();
        let mut nodes = vec![BLANK];
        // (node id, start, end, depth, sampling key)
        let mut stack = vec![(0usize, 0usize, rows.len(), 0usize, key)];
        while let Some((id, start, end, depth, key)) = stack.pop() {
            let slice = &mut rows[start..end];
            let m = slice.len();
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &r in slice.iter() {
                let t = targets[r as usize];
                sum += t;
                sumsq += t * t;
                lo = lo.min(t);
                hi = hi.max(t);
            }
            nodes[id].value = if m > 0 { sum / m as f64 } else { 0.0 };
            nodes[id].count = m as u32;
            let splittable = depth < self.params.max_depth
                && m >= self.params.min_split.max(2)
                && m >= 2 * self.params.min_leaf
                && hi > lo;
            let split = if splittable {
                self.best_split(targets, slice, sum, 1e-12 * sumsq, &mut NodeRng(key))
            } else {
                None
            };
            let Some(split) = split else {
                leaves.push(LeafRange {
                    node: id,
                    start,
                    end,
                });
                continue;
            };
            let codes = &self.data.cols[split.feature].codes;
            let bound = split.left_bin as u16;
            let mut i = 0;
            let mut j = m;
            while i < j {
                if codes[slice[i] as usize] <= bound {
                    i += 1;
                } else {
                    j -= 1;
                    slice.swap(i, j);
                }
            }
            let left = nodes.len();
            nodes.push(BLANK);
            nodes.push(BLANK);
            nodes[id].feature = split.feature as u32;
            nodes[id].threshold = split.threshold;
            nodes[id].gain = split.gain;
            nodes[id].left = left as u32;
            stack.push((left + 1, start + i, end, depth + 1, child_key(key, true)));
            stack.push((left, start, start + i, depth + 1, child_key(key, false)));
        }
        Tree { nodes }
    }

    fn best_split(&mut self, targets: &[f64], rows: &[u32], sum: f64, tol: f64, rng: &mut NodeRng) -> Option<Split> {
        let p = self.features.len();
        let tries = self.params.mtry.map_or(p, |k| k.clamp(1, p));
        if tries < p {
            // partial Fisher-Yates from the identity: the first `tries` entries are the sample
            for (k, f) in self.features.iter_mut().enumerate() {
                *f = k;
            }
            for k in 0..tries {
                let pick = rng.below(k, p);
                self.features.swap(k, pick);
            }
        }
        let m = rows.len();
        let parent = sum * sum / m as f64;
        let mut best: Option<Split> = None;
        for k in 0..tries {
            let f = self.features[k];
            let col = &self.data.cols[f];
            let found = if col.n_bins() <= 4 * m {
                self.scan_histogram(col, targets, rows, sum)
            } else {
                self.scan_sorted(col, targets, rows, sum)
            };
            if let Some((left_bin, right_bin, score)) = found {
                let gain = score - parent;
                // ties keep the earlier candidate
                if gain > tol && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Split {
                        feature: f,
                        left_bin,
                        threshold: col.threshold(left_bin, right_bin),
                        gain,
                    });
                }
            }
        }
        best
    }

    /// Returns (last left bin, first right bin, sumL^2/nL + sumR^2/nR).
    fn scan_histogram(
        &mut self,
        col: &BinnedColumn,
        targets: &[f64],
        rows: &[u32],
        sum: f64,
    ) -> Option<(usize, usize, f64)> {
        let nb = col.n_bins();
        let count = &mut self.hist_count[..nb];
        let hsum = &mut self.hist_sum[..nb];
        count.fill(0);
        hsum.fill(0.0);
        for &r in rows {
            let c = col.codes[r as usize] as usize;
            count[c] += 1;
            hsum[c] += targets[r as usize];
        }
        let m = rows.len();
        let min_leaf = self.params.min_leaf;
        let mut best: Option<(usize, usize, f64)> = None;
        let mut n_left = 0usize;
        let mut s_left = 0.0;
        let mut prev: Option<usize> = None;
        for b in 0..nb {
            if count[b] == 0 {
                continue;
            }
            if let Some(pb) = prev {
                let n_right = m - n_left;
                if n_left >= min_leaf && n_right >= min_leaf {
                    let s_right = sum - s_left;
                    let score = s_left * s_left / n_left as f64 + s_right * s_right / n_right as f64;
                    if best.is_none_or(|(_, _, s)| score > s) {
                        best = Some((pb, b, score));
                    }
                }
            }
            n_left += count[b] as usize;
            s_left += hsum[b];
            prev = Some(b);
        }
        best
    }

    fn scan_sorted(
        &mut self,
        col: &BinnedColumn,
        targets: &[f64],
        rows: &[u32],
        sum: f64,
    ) -> Option<(usize, usize, f64)> {
        self.pairs.clear();
        self.pairs
            .extend(rows.iter().map(|&r| (col.codes[r as usize], targets[r as usize])));
        self.pairs.sort_unstable_by_key(|&(c, _)| c);
        let m = rows.len();
        let min_leaf = self.params.min_leaf;
        let mut best: Option<(usize, usize, f64)> = None;
        let mut s_left = 0.0;
        for i in 0..m - 1 {
            s_left += self.pairs[i].1;
            let (c, next) = (self.pairs[i].0, self.pairs[i + 1].0);
            if c == next {
                continue;
            }
            let n_left = i + 1;
            let n_right = m - n_left;
            if n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            let s_right = sum - s_left;
            let score = s_left * s_left / n_left as f64 + s_right * s_right / n_right as f64;
            if best.is_none_or(|(_, _, s)| score > s) {
                best = Some((c as usize, next as usize, score));
            }
        }
        best
    }
}
