//! Per-keyword weighted zipcode-similarity networks.
//!
//! For one keyword, every zipcode carries a sparse domain→traffic vector.
//! The distance between two zipcodes is the sum of squared traffic
//! differences over the union of their domains, and the edge weight is the
//! inverse distance shifted by one, so weights live in (0, 1] and two
//! identically-targeted zipcodes get weight exactly 1.
//!
//! Pairwise weights are computed independently per pair, so the parallel
//! and sequential kernels produce bit-identical results.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ingest::{Dataset, Zipcode};

/// Sparse domain→traffic vector of one zipcode for one keyword. Zero
/// entries are never stored; looking up an absent domain means traffic 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficVector {
    zipcode: Zipcode,
    entries: BTreeMap<String, f64>,
}

impl TrafficVector {
    /// Builds a vector, dropping non-positive entries to keep the sparse
    /// invariant.
    pub fn new(zipcode: Zipcode, entries: BTreeMap<String, f64>) -> Self {
        let entries = entries.into_iter().filter(|(_, t)| *t > 0.0).collect();
        TrafficVector { zipcode, entries }
    }

    pub fn zipcode(&self) -> Zipcode {
        self.zipcode
    }

    pub fn entries(&self) -> &BTreeMap<String, f64> {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rescales entries to unit L1 norm. Empty vectors stay empty.
    pub fn normalized_l1(&self) -> TrafficVector {
        let sum: f64 = self.entries.values().sum();
        if sum <= 0.0 {
            return self.clone();
        }
        TrafficVector {
            zipcode: self.zipcode,
            entries: self.entries.iter().map(|(d, t)| (d.clone(), t / sum)).collect(),
        }
    }
}

/// Complete weighted graph over the dataset's zipcodes for one keyword.
/// Nodes are sorted lexicographically; edges are stored as a flat
/// upper-triangular array.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    keyword: String,
    nodes: Vec<Zipcode>,
    weights: Vec<f64>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GraphError {
    #[error("unknown keyword `{0}`")]
    UnknownKeyword(String),
    #[error("unknown zipcode {0}")]
    UnknownZipcode(Zipcode),
    #[error("graph needs at least 2 zipcodes (got {0})")]
    TooFewZipcodes(usize),
    #[error("bins must be ≥ 1")]
    ZeroBins,
    #[error("expected {expected} edge weights for {nodes} nodes, got {got}")]
    EdgeCountMismatch { nodes: usize, expected: usize, got: usize },
    #[error("edge weight {weight} at index {index} is outside (0, 1]")]
    WeightOutOfRange { index: usize, weight: f64 },
    #[error("node list must be sorted and free of duplicates")]
    UnsortedNodes,
}

impl SimilarityGraph {
    /// Assembles a graph from parts, enforcing the complete-graph and
    /// weight-range invariants. `weights` is upper-triangular in the order
    /// produced by iterating pairs (i, j) with i < j.
    pub fn from_weights(
        keyword: impl Into<String>,
        nodes: Vec<Zipcode>,
        weights: Vec<f64>,
    ) -> Result<Self, GraphError> {
        if nodes.len() < 2 {
            return Err(GraphError::TooFewZipcodes(nodes.len()));
        }
        if !nodes.windows(2).all(|w| w[0] < w[1]) {
            return Err(GraphError::UnsortedNodes);
        }
        let expected = nodes.len() * (nodes.len() - 1) / 2;
        if weights.len() != expected {
            return Err(GraphError::EdgeCountMismatch {
                nodes: nodes.len(),
                expected,
                got: weights.len(),
            });
        }
        for (index, &weight) in weights.iter().enumerate() {
            if !(weight > 0.0 && weight <= 1.0) {
                return Err(GraphError::WeightOutOfRange { index, weight });
            }
        }
        Ok(SimilarityGraph { keyword: keyword.into(), nodes, weights })
    }

    pub fn keyword(&self) -> &str {
        &self.keyword
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Zipcode] {
        &self.nodes
    }

    pub fn node_index(&self, zipcode: Zipcode) -> Option<usize> {
        self.nodes.binary_search(&zipcode).ok()
    }

    pub fn edge_count(&self) -> usize {
        self.weights.len()
    }

    /// Weight of the edge {i, j}, i ≠ j.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        assert_ne!(i, j, "no self edges in a similarity graph");
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.weights[triangular_index(self.nodes.len(), a, b)]
    }

    /// Edges in lexicographic pair order: (i, j, w) with i < j.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.nodes.len();
        pair_indices(n).map(move |(i, j)| (i, j, self.weights[triangular_index(n, i, j)]))
    }

    /// Sum of incident edge weights of node `i`, accumulated in ascending
    /// neighbor order.
    pub fn weighted_degree(&self, i: usize) -> f64 {
        let mut degree = 0.0;
        for j in 0..self.nodes.len() {
            if j != i {
                degree += self.weight(i, j);
            }
        }
        degree
    }
}

fn triangular_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// Unordered pairs (i, j) with i < j < n, in lexicographic order.
pub fn pair_indices(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// Sparse traffic vector of one (keyword, zipcode) cell.
pub fn traffic_vector(
    dataset: &Dataset,
    keyword: &str,
    zipcode: Zipcode,
) -> Result<TrafficVector, GraphError> {
    if !dataset.has_keyword(keyword) {
        return Err(GraphError::UnknownKeyword(keyword.to_string()));
    }
    if !dataset.zipcodes().contains(&zipcode) {
        return Err(GraphError::UnknownZipcode(zipcode));
    }
    let entries = dataset
        .records_for_keyword_zip(keyword, zipcode)
        .filter(|r| r.traffic > 0.0)
        .map(|r| (r.domain.clone(), r.traffic))
        .collect();
    Ok(TrafficVector { zipcode, entries })
}

/// Squared Euclidean distance between two traffic vectors over the union
/// of their domains. Terms are accumulated in lexicographic domain order,
/// so the result is reproducible bit for bit.
pub fn zip_distance(a: &TrafficVector, b: &TrafficVector) -> f64 {
    let mut sum = 0.0;
    let mut left = a.entries.iter().peekable();
    let mut right = b.entries.iter().peekable();
    loop {
        match (left.peek(), right.peek()) {
            (Some(&(ld, &lt)), Some(&(rd, &rt))) => match ld.cmp(rd) {
                std::cmp::Ordering::Less => {
                    sum += lt * lt;
                    left.next();
                }
                std::cmp::Ordering::Greater => {
                    sum += rt * rt;
                    right.next();
                }
                std::cmp::Ordering::Equal => {
                    let diff = lt - rt;
                    sum += diff * diff;
                    left.next();
                    right.next();
                }
            },
            (Some(&(_, &lt)), None) => {
                sum += lt * lt;
                left.next();
            }
            (None, Some(&(_, &rt))) => {
                sum += rt * rt;
                right.next();
            }
            (None, None) => break,
        }
    }
    sum
}

/// Similarity weight 1 / (distance + 1), strictly decreasing in distance.
/// Identical vectors give exactly 1.
pub fn zip_similarity(a: &TrafficVector, b: &TrafficVector) -> f64 {
    1.0 / (zip_distance(a, b) + 1.0)
}

/// Sequential pairwise-weight kernel: one weight per (i, j) pair, i < j,
/// in lexicographic pair order.
pub fn pairwise_weights_sequential(vectors: &[TrafficVector]) -> Vec<f64> {
    pair_indices(vectors.len())
        .map(|(i, j)| zip_similarity(&vectors[i], &vectors[j]))
        .collect()
}

/// Parallel pairwise-weight kernel. Each pair is computed independently,
/// so the output is bit-identical to the sequential kernel for any worker
/// count.
#[cfg(feature = "parallel")]
pub fn pairwise_weights_parallel(vectors: &[TrafficVector]) -> Vec<f64> {
    use rayon::prelude::*;
    let pairs: Vec<(usize, usize)> = pair_indices(vectors.len()).collect();
    pairs
        .par_iter()
        .map(|&(i, j)| zip_similarity(&vectors[i], &vectors[j]))
        .collect()
}

fn pairwise_weights(vectors: &[TrafficVector]) -> Vec<f64> {
    #[cfg(feature = "parallel")]
    {
        pairwise_weights_parallel(vectors)
    }
    #[cfg(not(feature = "parallel"))]
    {
        pairwise_weights_sequential(vectors)
    }
}

/// Builds the complete similarity graph for one keyword over all dataset
/// zipcodes, with raw traffic values.
pub fn build_graph(dataset: &Dataset, keyword: &str) -> Result<SimilarityGraph, GraphError> {
    build_graph_impl(dataset, keyword, false)
}

/// Like [`build_graph`], but rescales every traffic vector to unit L1 norm
/// first (sensitivity analysis; off by default in the CLI).
pub fn build_graph_normalized(
    dataset: &Dataset,
    keyword: &str,
) -> Result<SimilarityGraph, GraphError> {
    build_graph_impl(dataset, keyword, true)
}

fn build_graph_impl(
    dataset: &Dataset,
    keyword: &str,
    normalize: bool,
) -> Result<SimilarityGraph, GraphError> {
    if !dataset.has_keyword(keyword) {
        return Err(GraphError::UnknownKeyword(keyword.to_string()));
    }
    let nodes: Vec<Zipcode> = dataset.zipcodes().iter().copied().collect();
    if nodes.len() < 2 {
        return Err(GraphError::TooFewZipcodes(nodes.len()));
    }
    // Zipcodes with no records for this keyword stay in as empty vectors:
    // their mutual weight 1 marks them as equally untargeted.
    let mut vectors = Vec::with_capacity(nodes.len());
    for &zipcode in &nodes {
        let v = traffic_vector(dataset, keyword, zipcode)?;
        vectors.push(if normalize { v.normalized_l1() } else { v });
    }
    let weights = pairwise_weights(&vectors);
    Ok(SimilarityGraph { keyword: keyword.to_string(), nodes, weights })
}

/// One histogram bin over (lower, upper], equal-width on [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Equal-width histogram of edge weights over [0, 1], right-inclusive.
/// Counts always sum to the edge count.
pub fn weight_histogram(
    graph: &SimilarityGraph,
    bins: usize,
) -> Result<Vec<HistogramBin>, GraphError> {
    if bins == 0 {
        return Err(GraphError::ZeroBins);
    }
    let mut counts = vec![0usize; bins];
    for &w in &graph.weights {
        let scaled = (w * bins as f64).ceil();
        let idx = if scaled < 1.0 { 0 } else { (scaled as usize - 1).min(bins - 1) };
        counts[idx] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            lower: i as f64 / bins as f64,
            upper: (i + 1) as f64 / bins as f64,
            count,
        })
        .collect())
}
