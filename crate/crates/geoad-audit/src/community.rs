//! Community detection on similarity graphs: weighted modularity and a
//! seeded Leiden implementation (local moving, refinement, aggregation).
//!
//! The algorithm runs single-threaded so identical inputs and seed always
//! produce the identical partition; concurrency happens one level up, across
//! keywords.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::RngExt;
use rand::SeedableRng;
use rand_pcg::Pcg64;
use thiserror::Error;

use crate::demographics::{region_baseline, ShareVector};
use crate::ingest::{Dataset, Zipcode};
use crate::similarity::SimilarityGraph;

/// Outer iterations stop once modularity improves by less than this.
const MIN_IMPROVEMENT: f64 = 1e-12;
/// A move must beat the current best by this margin to be taken.
const GAIN_EPS: f64 = 1e-12;

/// Node-to-community assignment with its quality score and the parameters
/// that produced it. Community ids are contiguous, 0-based, and numbered by
/// first occurrence in node order.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub assignment: Vec<usize>,
    /// Weighted modularity of `assignment`.
    pub quality: f64,
    pub seed: u64,
    pub resolution: f64,
}

impl Partition {
    pub fn community_count(&self) -> usize {
        self.assignment.iter().max().map_or(0, |&m| m + 1)
    }

    /// Node indices grouped by community id.
    pub fn communities(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.community_count()];
        for (node, &c) in self.assignment.iter().enumerate() {
            groups[c].push(node);
        }
        groups
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CommunityError {
    #[error("max_iterations must be ≥ 1")]
    ZeroIterations,
    #[error("resolution must be positive (got {0})")]
    InvalidResolution(f64),
    #[error("community {community} has zero population")]
    EmptyCommunity { community: usize },
    #[error("no demographics for zipcode {0}")]
    MissingDemographics(Zipcode),
}

#[derive(Debug, Clone)]
pub struct LeidenOptions {
    pub resolution: f64,
    pub seed: u64,
    pub max_iterations: usize,
    /// When true (the default), refinement merges are drawn randomly with
    /// probability proportional to quality gain; when false it degenerates
    /// to the deterministic best-gain move.
    pub randomized_refinement: bool,
}

impl Default for LeidenOptions {
    fn default() -> Self {
        LeidenOptions {
            resolution: 1.0,
            seed: 42,
            max_iterations: 100,
            randomized_refinement: true,
        }
    }
}

/// Weighted modularity of an assignment:
/// Q = (1/2m) Σ_ij [A_ij − γ k_i k_j / 2m] δ(c_i, c_j).
///
/// Edge weights are A_ij and weighted degrees are k_i. The assignment must
/// cover every node.
pub fn modularity(graph: &SimilarityGraph, assignment: &[usize], resolution: f64) -> f64 {
    let n = graph.node_count();
    assert_eq!(assignment.len(), n, "assignment must cover every node");
    let communities = assignment.iter().max().map_or(0, |&m| m + 1);
    let mut two_m = 0.0;
    let mut degree = vec![0.0; n];
    let mut intra2 = vec![0.0; communities];
    for (i, j, w) in graph.edges() {
        two_m += 2.0 * w;
        degree[i] += w;
        degree[j] += w;
        if assignment[i] == assignment[j] {
            intra2[assignment[i]] += 2.0 * w;
        }
    }
    let mut comm_degree = vec![0.0; communities];
    for (node, &c) in assignment.iter().enumerate() {
        comm_degree[c] += degree[node];
    }
    let mut q = 0.0;
    for c in 0..communities {
        let frac = comm_degree[c] / two_m;
        q += intra2[c] / two_m - resolution * frac * frac;
    }
    q
}

/// Runs Leiden with randomized refinement. Identical (graph, resolution,
/// seed) always yield the identical partition.
pub fn leiden_partition(
    graph: &SimilarityGraph,
    resolution: f64,
    seed: u64,
    max_iterations: usize,
) -> Result<Partition, CommunityError> {
    let options = LeidenOptions {
        resolution,
        seed,
        max_iterations,
        ..LeidenOptions::default()
    };
    leiden_partition_traced(graph, &options).map(|(partition, _)| partition)
}

pub fn leiden_partition_opts(
    graph: &SimilarityGraph,
    options: &LeidenOptions,
) -> Result<Partition, CommunityError> {
    leiden_partition_traced(graph, options).map(|(partition, _)| partition)
}

/// Like [`leiden_partition_opts`] but also returns the modularity of the
/// flat partition after each outer iteration (non-decreasing).
pub fn leiden_partition_traced(
    graph: &SimilarityGraph,
    options: &LeidenOptions,
) -> Result<(Partition, Vec<f64>), CommunityError> {
    if options.max_iterations == 0 {
        return Err(CommunityError::ZeroIterations);
    }
    if !options.resolution.is_finite() || options.resolution <= 0.0 {
        return Err(CommunityError::InvalidResolution(options.resolution));
    }

    let n0 = graph.node_count();
    let mut rng = Pcg64::seed_from_u64(options.seed);
    let mut level = LevelGraph::from_similarity(graph);
    let mut comm: Vec<usize> = (0..n0).collect();
    let mut flat: Vec<usize> = comm.clone();
    let mut prev_quality = modularity(graph, &flat, options.resolution);
    let mut trace = Vec::new();

    for _ in 0..options.max_iterations {
        let degrees = level.degrees();
        local_move(&level, &mut comm, &degrees, options.resolution, &mut rng);

        flat = project_flat(&level.members, &comm, n0);
        let quality = modularity(graph, &flat, options.resolution);
        trace.push(quality);
        if quality - prev_quality < MIN_IMPROVEMENT {
            break;
        }
        prev_quality = quality;

        let refined = refine(
            &level,
            &comm,
            &degrees,
            options.resolution,
            options.randomized_refinement,
            &mut rng,
        );
        let (next_level, next_comm) = aggregate(&level, &refined, &comm);
        if next_level.len() == level.len() {
            break;
        }
        level = next_level;
        comm = next_comm;
    }

    let quality = modularity(graph, &flat, options.resolution);
    Ok((
        Partition {
            assignment: flat,
            quality,
            seed: options.seed,
            resolution: options.resolution,
        },
        trace,
    ))
}

/// Region baseline restricted to each community's zipcodes, indexed by
/// community id.
pub fn cluster_demographics(
    graph: &SimilarityGraph,
    partition: &Partition,
    dataset: &Dataset,
) -> Result<Vec<ShareVector>, CommunityError> {
    assert_eq!(partition.assignment.len(), graph.node_count());
    let mut groups = vec![Vec::new(); partition.community_count()];
    for (node, &c) in partition.assignment.iter().enumerate() {
        let zipcode = graph.nodes()[node];
        let rows = dataset
            .demographics_for(zipcode)
            .ok_or(CommunityError::MissingDemographics(zipcode))?;
        groups[c].push(rows);
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(community, rows)| {
            region_baseline(rows).map_err(|_| CommunityError::EmptyCommunity { community })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Internal level graph and the three Leiden phases.
// ---------------------------------------------------------------------------

/// One level of the aggregation hierarchy. Self-loops appear once a
/// community is collapsed into a super-node and count twice in its degree.
struct LevelGraph {
    adj: Vec<Vec<(usize, f64)>>,
    self_loop: Vec<f64>,
    two_m: f64,
    /// Original node indices contained in each super-node.
    members: Vec<Vec<usize>>,
}

impl LevelGraph {
    fn from_similarity(graph: &SimilarityGraph) -> Self {
        let n = graph.node_count();
        let mut adj = vec![Vec::with_capacity(n - 1); n];
        for (i, j, w) in graph.edges() {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        for list in &mut adj {
            list.sort_unstable_by_key(|&(u, _)| u);
        }
        let mut two_m = 0.0;
        for list in &adj {
            for &(_, w) in list {
                two_m += w;
            }
        }
        LevelGraph {
            adj,
            self_loop: vec![0.0; n],
            two_m,
            members: (0..n).map(|i| vec![i]).collect(),
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn degrees(&self) -> Vec<f64> {
        (0..self.len())
            .map(|v| {
                let mut k: f64 = 2.0 * self.self_loop[v];
                for &(_, w) in &self.adj[v] {
                    k += w;
                }
                k
            })
            .collect()
    }
}

fn move_gain(weight_to: f64, node_degree: f64, comm_degree: f64, resolution: f64, two_m: f64) -> f64 {
    weight_to - resolution * node_degree * comm_degree / two_m
}

/// Phase 1: greedy local moving in seeded random order, repeated until a
/// full pass makes no move. Nodes may also escape to a fresh singleton
/// community when staying has negative gain.
fn local_move(
    level: &LevelGraph,
    comm: &mut [usize],
    degrees: &[f64],
    resolution: f64,
    rng: &mut Pcg64,
) {
    let n = level.len();
    let mut community_slots = comm.iter().max().map_or(1, |&m| m + 1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut neighbor_weight = vec![0.0; community_slots];
    let mut touched: Vec<usize> = Vec::new();

    loop {
        // Fresh community degrees each pass to keep float drift out of the
        // move decisions.
        let mut comm_degree = vec![0.0; community_slots];
        for v in 0..n {
            comm_degree[comm[v]] += degrees[v];
        }

        let mut moved = false;
        order.shuffle(rng);
        for &v in &order {
            let current = comm[v];
            let node_degree = degrees[v];
            comm_degree[current] -= node_degree;

            for &t in &touched {
                neighbor_weight[t] = 0.0;
            }
            touched.clear();
            for &(u, w) in &level.adj[v] {
                let cu = comm[u];
                if neighbor_weight[cu] == 0.0 {
                    touched.push(cu);
                }
                neighbor_weight[cu] += w;
            }
            touched.sort_unstable();

            let stay_weight = if touched.binary_search(&current).is_ok() {
                neighbor_weight[current]
            } else {
                0.0
            };
            let mut best_comm = current;
            let mut best_gain =
                move_gain(stay_weight, node_degree, comm_degree[current], resolution, level.two_m);
            for &t in &touched {
                if t == current {
                    continue;
                }
                let gain =
                    move_gain(neighbor_weight[t], node_degree, comm_degree[t], resolution, level.two_m);
                if gain > best_gain + GAIN_EPS {
                    best_gain = gain;
                    best_comm = t;
                }
            }
            // A fresh singleton community has gain exactly 0.
            if 0.0 > best_gain + GAIN_EPS {
                best_comm = community_slots;
                community_slots += 1;
                comm_degree.push(0.0);
                neighbor_weight.push(0.0);
            }

            if best_comm != current {
                comm[v] = best_comm;
                moved = true;
            }
            comm_degree[comm[v]] += node_degree;
        }
        if !moved {
            break;
        }
    }
}

/// Phase 2: split every community into well-formed sub-communities. Each
/// node starts as its own sub-community; isolated nodes then merge into a
/// positive-gain sub-community of the same parent, chosen randomly with
/// probability proportional to gain (or by best gain when randomization is
/// off).
fn refine(
    level: &LevelGraph,
    comm: &[usize],
    degrees: &[f64],
    resolution: f64,
    randomized: bool,
    rng: &mut Pcg64,
) -> Vec<usize> {
    let n = level.len();
    let mut refined: Vec<usize> = (0..n).collect();
    let mut sub_degree = degrees.to_vec();
    let mut sub_size = vec![1usize; n];
    let mut weight_to = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for &v in &order {
        if sub_size[refined[v]] != 1 {
            continue;
        }
        let parent = comm[v];
        for &t in &touched {
            weight_to[t] = 0.0;
        }
        touched.clear();
        for &(u, w) in &level.adj[v] {
            if comm[u] != parent {
                continue;
            }
            let su = refined[u];
            if su == refined[v] {
                continue;
            }
            if weight_to[su] == 0.0 {
                touched.push(su);
            }
            weight_to[su] += w;
        }
        touched.sort_unstable();

        let mut candidates: Vec<(usize, f64)> = Vec::with_capacity(touched.len());
        for &s in &touched {
            let gain =
                move_gain(weight_to[s], degrees[v], sub_degree[s], resolution, level.two_m);
            if gain > GAIN_EPS {
                candidates.push((s, gain));
            }
        }
        if candidates.is_empty() {
            continue;
        }

        let target = if randomized {
            let total: f64 = candidates.iter().map(|&(_, g)| g).sum();
            let draw = rng.random_range(0.0..total);
            let mut cumulative = 0.0;
            let mut chosen = candidates[candidates.len() - 1].0;
            for &(s, gain) in &candidates {
                cumulative += gain;
                if draw < cumulative {
                    chosen = s;
                    break;
                }
            }
            chosen
        } else {
            let mut best = candidates[0];
            for &(s, gain) in &candidates[1..] {
                if gain > best.1 + GAIN_EPS {
                    best = (s, gain);
                }
            }
            best.0
        };

        let old = refined[v];
        sub_degree[old] -= degrees[v];
        sub_size[old] -= 1;
        refined[v] = target;
        sub_degree[target] += degrees[v];
        sub_size[target] += 1;
    }
    refined
}

/// Phase 3: collapse refined sub-communities into super-nodes. The next
/// level starts from the (coarser) local-moving communities, not from
/// singletons.
fn aggregate(
    level: &LevelGraph,
    refined: &[usize],
    comm: &[usize],
) -> (LevelGraph, Vec<usize>) {
    let n = level.len();
    let mut sub_ids: Vec<usize> = refined.to_vec();
    sub_ids.sort_unstable();
    sub_ids.dedup();
    let sub_index = |id: usize| sub_ids.binary_search(&id).unwrap();

    let next_n = sub_ids.len();
    let mut members = vec![Vec::new(); next_n];
    let mut self_loop = vec![0.0; next_n];
    let mut parent_of = vec![0usize; next_n];
    for v in 0..n {
        let s = sub_index(refined[v]);
        members[s].extend(level.members[v].iter().copied());
        self_loop[s] += level.self_loop[v];
        parent_of[s] = comm[v];
    }

    let mut cross: std::collections::BTreeMap<(usize, usize), f64> = std::collections::BTreeMap::new();
    for v in 0..n {
        let sv = sub_index(refined[v]);
        for &(u, w) in &level.adj[v] {
            if u <= v {
                continue;
            }
            let su = sub_index(refined[u]);
            if su == sv {
                self_loop[sv] += w;
            } else {
                let key = if sv < su { (sv, su) } else { (su, sv) };
                *cross.entry(key).or_insert(0.0) += w;
            }
        }
    }

    let mut adj = vec![Vec::new(); next_n];
    for (&(a, b), &w) in &cross {
        adj[a].push((b, w));
        adj[b].push((a, w));
    }
    for list in &mut adj {
        list.sort_unstable_by_key(|&(u, _)| u);
    }

    // Renumber the parent communities contiguously for the next level.
    let mut parent_ids = parent_of.clone();
    parent_ids.sort_unstable();
    parent_ids.dedup();
    let next_comm: Vec<usize> = parent_of
        .iter()
        .map(|p| parent_ids.binary_search(p).unwrap())
        .collect();

    (
        LevelGraph {
            adj,
            self_loop,
            two_m: level.two_m,
            members,
        },
        next_comm,
    )
}

/// Maps a super-node assignment back to original nodes and renumbers
/// community ids by first occurrence in node order.
fn project_flat(members: &[Vec<usize>], comm: &[usize], original_n: usize) -> Vec<usize> {
    let mut flat = vec![usize::MAX; original_n];
    for (super_node, contained) in members.iter().enumerate() {
        for &orig in contained {
            flat[orig] = comm[super_node];
        }
    }
    let mut remap: HashMap<usize, usize> = HashMap::new();
    for slot in flat.iter_mut() {
        let next = remap.len();
        *slot = *remap.entry(*slot).or_insert(next);
    }
    flat
}
