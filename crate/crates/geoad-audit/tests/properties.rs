//! Property suite: round-trips, order insensitivity, oracle equivalence and
//! geometric invariants on randomized inputs.

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::RngExt;
use rand::SeedableRng;
use rand_pcg::Pcg64;

use geoad_audit::community::{leiden_partition, modularity};
use geoad_audit::demographics::{region_baseline, relative_shares, ShareMode, ShareVector};
use geoad_audit::ingest::{
    parse_ad_records, parse_demographics, validate_dataset, write_ad_records, write_demographics,
    AdRecord, ValidationMode, ZipDemographics, Zipcode,
};
use geoad_audit::profile::{
    domain_profile, rank_zipcodes, ternary_coordinates, top_zipcodes, RankBy,
};
use geoad_audit::similarity::{
    build_graph, pair_indices, traffic_vector, weight_histogram, zip_distance, zip_similarity,
    SimilarityGraph, TrafficVector,
};
use geoad_audit::Dataset;

fn zipc(code: &str) -> Zipcode {
    Zipcode::parse(code).unwrap()
}

/// Deterministic synthetic dataset: a keyword/zipcode/domain cross product
/// with randomly present records and random field values.
fn synth_dataset(
    zip_ids: &BTreeSet<u32>,
    domain_count: u8,
    keyword_count: u8,
    seed: u64,
) -> (Vec<AdRecord>, Vec<ZipDemographics>) {
    // Keywords include CSV-hostile text on purpose.
    const KEYWORD_POOL: [&str; 4] =
        ["college scholarships", "covid-19", "houses, for rent", "online \"degree\" programs"];
    let mut rng = Pcg64::seed_from_u64(seed);
    let mut records = Vec::new();
    for k in 0..keyword_count {
        let keyword = KEYWORD_POOL[k as usize % KEYWORD_POOL.len()];
        for &zip in zip_ids {
            for d in 0..domain_count {
                // Domain 0 is always present so every zipcode stays in the
                // dataset; the rest is sparse.
                if d > 0 && rng.random_range(0.0..1.0) < 0.3 {
                    continue;
                }
                records.push(AdRecord {
                    keyword: keyword.to_string(),
                    zipcode: zipc(&format!("{zip:05}")),
                    domain: format!("d{d}.example"),
                    rank: rng.random_range(1..=120),
                    visibility: rng.random_range(0.0..1.0),
                    traffic: rng.random_range(0.0..100.0),
                });
            }
        }
    }
    let demographics = zip_ids
        .iter()
        .map(|&zip| {
            let white = rng.random_range(0..5000u64);
            let black = rng.random_range(0..5000u64);
            let asian = rng.random_range(0..5000u64);
            let other = rng.random_range(1..2000u64);
            ZipDemographics {
                zipcode: zipc(&format!("{zip:05}")),
                total: white + black + asian + other,
                white,
                black,
                asian,
                american_indian: 0,
                pacific_islander: 0,
            }
        })
        .collect();
    (records, demographics)
}

fn make_dataset(records: Vec<AdRecord>, demographics: Vec<ZipDemographics>) -> Dataset {
    validate_dataset(records, demographics, ValidationMode::Strict)
        .expect("synthetic datasets are fully covered")
        .0
}

/// Dense distance oracle: explicit union of domain names, iterated in
/// sorted order so the accumulation sequence matches the sparse kernel.
fn dense_distance(a: &TrafficVector, b: &TrafficVector) -> f64 {
    let union: BTreeSet<&String> = a.entries().keys().chain(b.entries().keys()).collect();
    let mut sum = 0.0;
    for domain in union {
        let x = a.entries().get(domain).copied().unwrap_or(0.0);
        let y = b.entries().get(domain).copied().unwrap_or(0.0);
        sum += (x - y) * (x - y);
    }
    sum
}

fn arb_vector(zipcode: &'static str) -> impl Strategy<Value = TrafficVector> {
    prop::collection::btree_map(0u8..10, 0.0f64..100.0, 0..8).prop_map(move |entries| {
        TrafficVector::new(
            zipc(zipcode),
            entries.into_iter().map(|(d, t)| (format!("d{d}.example"), t)).collect(),
        )
    })
}

proptest! {
    #[test]
    fn distance_is_symmetric(a in arb_vector("10001"), b in arb_vector("10002")) {
        prop_assert_eq!(zip_distance(&a, &b).to_bits(), zip_distance(&b, &a).to_bits());
    }

    #[test]
    fn sparse_distance_equals_dense_oracle(a in arb_vector("10001"), b in arb_vector("10002")) {
        prop_assert_eq!(zip_distance(&a, &b).to_bits(), dense_distance(&a, &b).to_bits());
        let expected = 1.0 / (dense_distance(&a, &b) + 1.0);
        prop_assert_eq!(zip_similarity(&a, &b).to_bits(), expected.to_bits());
    }

    #[test]
    fn scaling_away_never_increases_similarity(
        base in arb_vector("10001"),
        deltas in prop::collection::vec(0.0f64..50.0, 10),
        scale in 1.0f64..4.0,
    ) {
        // b = base + delta component-wise; scaling delta moves b strictly
        // away from base in every coordinate.
        let near = TrafficVector::new(
            zipc("10002"),
            (0..10u8)
                .map(|d| {
                    let name = format!("d{d}.example");
                    let t = base.entries().get(&name).copied().unwrap_or(0.0)
                        + deltas[d as usize];
                    (name, t)
                })
                .collect(),
        );
        let far = TrafficVector::new(
            zipc("10003"),
            (0..10u8)
                .map(|d| {
                    let name = format!("d{d}.example");
                    let t = base.entries().get(&name).copied().unwrap_or(0.0)
                        + deltas[d as usize] * scale;
                    (name, t)
                })
                .collect(),
        );
        prop_assert!(zip_similarity(&base, &far) <= zip_similarity(&base, &near) + 1e-15);
    }

    #[test]
    fn dataset_round_trips_through_csv(
        zip_ids in prop::collection::btree_set(0u32..=99999, 2..7),
        domains in 1u8..5,
        keywords in 1u8..4,
        seed in any::<u64>(),
    ) {
        let (records, demographics) = synth_dataset(&zip_ids, domains, keywords, seed);
        prop_assume!(!records.is_empty());
        let dataset = make_dataset(records, demographics);

        let mut ads_csv = Vec::new();
        write_ad_records(dataset.records(), &mut ads_csv).unwrap();
        let mut demos_csv = Vec::new();
        write_demographics(dataset.demographics().values(), &mut demos_csv).unwrap();

        let reparsed = make_dataset(
            parse_ad_records(ads_csv.as_slice()).unwrap(),
            parse_demographics(demos_csv.as_slice()).unwrap(),
        );
        prop_assert_eq!(&dataset, &reparsed);
    }

    #[test]
    fn row_order_never_changes_downstream_results(
        zip_ids in prop::collection::btree_set(0u32..=99999, 2..6),
        domains in 1u8..5,
        seed in any::<u64>(),
        rotate in 1usize..7,
    ) {
        let (records, demographics) = synth_dataset(&zip_ids, domains, 1, seed);
        prop_assume!(records.len() >= 2);
        let mut permuted = records.clone();
        let shift = rotate % permuted.len();
        permuted.rotate_left(shift);
        permuted.reverse();

        let a = make_dataset(records, demographics.clone());
        let b = make_dataset(permuted, demographics);
        let keyword = a.keywords().iter().next().unwrap().clone();

        let graph_a = build_graph(&a, &keyword).unwrap();
        let graph_b = build_graph(&b, &keyword).unwrap();
        prop_assert_eq!(&graph_a, &graph_b);

        for domain in a.domains_for_keyword(&keyword) {
            let baseline = region_baseline(a.demographics().values()).unwrap();
            let pa = domain_profile(&a, &keyword, domain, 3, &baseline, RankBy::Visibility).unwrap();
            let pb = domain_profile(&b, &keyword, domain, 3, &baseline, RankBy::Visibility).unwrap();
            prop_assert_eq!(pa, pb);
        }
    }

    #[test]
    fn histogram_counts_always_sum_to_edge_count(
        zip_ids in prop::collection::btree_set(0u32..=99999, 2..7),
        domains in 1u8..5,
        seed in any::<u64>(),
        bins in 1usize..40,
    ) {
        let (records, demographics) = synth_dataset(&zip_ids, domains, 1, seed);
        prop_assume!(!records.is_empty());
        let dataset = make_dataset(records, demographics);
        let keyword = dataset.keywords().iter().next().unwrap().clone();
        let graph = build_graph(&dataset, &keyword).unwrap();
        let hist = weight_histogram(&graph, bins).unwrap();
        prop_assert_eq!(hist.iter().map(|b| b.count).sum::<usize>(), graph.edge_count());
    }

    #[test]
    fn absolute_shares_never_exceed_relative(
        white in 0u64..5000, black in 0u64..5000, asian in 0u64..5000, other in 0u64..5000,
    ) {
        prop_assume!(white + black + asian > 0);
        let row = ZipDemographics {
            zipcode: zipc("10001"),
            total: white + black + asian + other,
            white, black, asian,
            american_indian: 0,
            pacific_islander: 0,
        };
        let absolute = region_baseline([&row]).unwrap();
        let relative = relative_shares(&absolute).unwrap();
        prop_assert!(absolute.white <= relative.white + 1e-15);
        prop_assert!(absolute.black <= relative.black + 1e-15);
        prop_assert!(absolute.asian <= relative.asian + 1e-15);
        if other == 0 {
            prop_assert!((absolute.white - relative.white).abs() < 1e-12);
        }
    }

    #[test]
    fn eq34_pipeline_matches_bruteforce(
        zip_ids in prop::collection::btree_set(0u32..=99999, 2..10),
        domains in 1u8..5,
        seed in any::<u64>(),
        theta in 1usize..25,
    ) {
        let (records, demographics) = synth_dataset(&zip_ids, domains, 1, seed);
        prop_assume!(!records.is_empty());
        let dataset = make_dataset(records.clone(), demographics.clone());
        let keyword = dataset.keywords().iter().next().unwrap().clone();
        let baseline = region_baseline(dataset.demographics().values()).unwrap();

        for domain in dataset.domains_for_keyword(&keyword) {
            let profile =
                domain_profile(&dataset, &keyword, domain, theta, &baseline, RankBy::Visibility)
                    .unwrap();

            // Independent filter → sort → slice → sum → divide.
            let mut scored: Vec<(Zipcode, f64)> = records
                .iter()
                .filter(|r| r.keyword == keyword && r.domain == domain)
                .map(|r| (r.zipcode, r.visibility))
                .collect();
            scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let take = theta.min(scored.len());
            let top: Vec<Zipcode> = scored[..take].iter().map(|&(z, _)| z).collect();
            let shortfall = scored.len() < theta;
            let (mut white, mut black, mut asian, mut total) = (0u64, 0u64, 0u64, 0u64);
            for z in &top {
                let row = demographics.iter().find(|d| d.zipcode == *z).unwrap();
                white += row.white;
                black += row.black;
                asian += row.asian;
                total += row.total;
            }

            let expected_top: Vec<Zipcode> =
                profile.top_zipcodes.iter().map(|&(z, _)| z).collect();
            prop_assert_eq!(expected_top, top);
            prop_assert_eq!(profile.shortfall, shortfall);
            prop_assert_eq!(profile.counts.white, white);
            prop_assert_eq!(profile.counts.black, black);
            prop_assert_eq!(profile.counts.asian, asian);
            prop_assert_eq!(profile.counts.total, total);
            prop_assert_eq!(
                profile.profile_absolute.white.to_bits(),
                (white as f64 / total as f64).to_bits()
            );
            prop_assert_eq!(
                profile.profile_absolute.black.to_bits(),
                (black as f64 / total as f64).to_bits()
            );
            prop_assert_eq!(
                profile.profile_absolute.asian.to_bits(),
                (asian as f64 / total as f64).to_bits()
            );
            // Tracked categories never exceed the full population.
            let p = &profile.profile_absolute;
            prop_assert!(p.white + p.black + p.asian <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn rank_is_invariant_under_positive_scaling(
        zip_ids in prop::collection::btree_set(0u32..=99999, 2..8),
        seed in any::<u64>(),
        scale in prop::sample::select(vec![0.25f64, 0.5, 2.0, 4.0]),
    ) {
        let (records, demographics) = synth_dataset(&zip_ids, 3, 1, seed);
        prop_assume!(!records.is_empty());
        let scaled: Vec<AdRecord> = records
            .iter()
            .map(|r| AdRecord { visibility: r.visibility * scale, ..r.clone() })
            .collect();
        let a = make_dataset(records, demographics.clone());
        let b = make_dataset(scaled, demographics);
        let keyword = a.keywords().iter().next().unwrap().clone();
        for domain in a.domains_for_keyword(&keyword) {
            let ra = rank_zipcodes(&a, &keyword, domain).unwrap();
            let rb = rank_zipcodes(&b, &keyword, domain).unwrap();
            let za: Vec<Zipcode> = ra.iter().map(|&(z, _)| z).collect();
            let zb: Vec<Zipcode> = rb.iter().map(|&(z, _)| z).collect();
            prop_assert_eq!(za, zb);
            let ta = top_zipcodes(&ra, 4).unwrap();
            let tb = top_zipcodes(&rb, 4).unwrap();
            prop_assert_eq!(ta, tb);
        }
    }

    #[test]
    fn ternary_points_stay_inside_the_triangle(
        white in 0.0f64..1.0, black in 0.0f64..1.0, asian in 0.0f64..1.0,
        bw in 0.01f64..1.0, bb in 0.01f64..1.0, ba in 0.01f64..1.0,
        centered in any::<bool>(),
    ) {
        prop_assume!(white + black + asian > 1e-9);
        let profile = ShareVector { white, black, asian, mode: ShareMode::Absolute };
        let baseline = ShareVector { white: bw, black: bb, asian: ba, mode: ShareMode::Absolute };
        let (x, y) = ternary_coordinates(&profile, &baseline, centered).unwrap();
        // Recover barycentric coordinates and check all are in [0, 1].
        let b = y / (3.0_f64.sqrt() / 2.0);
        let w = x - 0.5 * b;
        let a = 1.0 - w - b;
        for coord in [a, w, b] {
            prop_assert!((-1e-9..=1.0 + 1e-9).contains(&coord), "({x}, {y}) escaped");
        }
    }
}

// Leiden properties run on planted graphs rather than raw proptest noise:
// unstructured random graphs have no ground truth to check against.

#[test]
fn leiden_beats_singletons_on_random_block_graphs() {
    for seed in 0..20u64 {
        let mut rng = Pcg64::seed_from_u64(seed);
        let n = rng.random_range(6..30usize);
        let blocks: Vec<usize> = (0..n).map(|_| rng.random_range(0..3usize)).collect();
        let nodes: Vec<Zipcode> = (0..n).map(|i| zipc(&format!("{:05}", 20000 + i))).collect();
        let weights: Vec<f64> = pair_indices(n)
            .map(|(i, j)| {
                if blocks[i] == blocks[j] {
                    rng.random_range(0.6..1.0)
                } else {
                    rng.random_range(0.01..0.2)
                }
            })
            .collect();
        let graph = SimilarityGraph::from_weights("k", nodes, weights).unwrap();
        let partition = leiden_partition(&graph, 1.0, seed, 100).unwrap();
        let singletons: Vec<usize> = (0..n).collect();
        assert!(
            partition.quality >= modularity(&graph, &singletons, 1.0) - 1e-12,
            "seed {seed}"
        );
    }
}

#[test]
fn leiden_is_equivariant_under_node_relabeling() {
    // The same planted structure expressed with two different zipcode
    // labelings must produce the same communities-as-zipcode-sets.
    let n = 24;
    let intra = 0.9;
    let inter = 0.05;
    let labelings: [Box<dyn Fn(usize) -> u32>; 2] = [
        Box::new(|i| 30000 + i as u32),                    // blocks contiguous
        Box::new(|i| 30000 + ((i % 12) * 2 + i / 12) as u32), // blocks interleaved
    ];
    for label in &labelings {
        let mut tagged: Vec<(Zipcode, usize)> =
            (0..n).map(|i| (zipc(&format!("{:05}", label(i))), i / 12)).collect();
        tagged.sort_by_key(|&(z, _)| z);
        let nodes: Vec<Zipcode> = tagged.iter().map(|&(z, _)| z).collect();
        let weights: Vec<f64> = pair_indices(n)
            .map(|(i, j)| if tagged[i].1 == tagged[j].1 { intra } else { inter })
            .collect();
        let graph = SimilarityGraph::from_weights("k", nodes.clone(), weights).unwrap();
        let partition = leiden_partition(&graph, 1.0, 17, 100).unwrap();

        let mut communities: Vec<BTreeSet<Zipcode>> =
            vec![BTreeSet::new(); partition.community_count()];
        for (node, &c) in partition.assignment.iter().enumerate() {
            communities[c].insert(nodes[node]);
        }
        let recovered: BTreeSet<BTreeSet<Zipcode>> = communities.into_iter().collect();

        let mut planted: Vec<BTreeSet<Zipcode>> = vec![BTreeSet::new(); 2];
        for &(z, block) in &tagged {
            planted[block].insert(z);
        }
        let planted: BTreeSet<BTreeSet<Zipcode>> = planted.into_iter().collect();
        assert_eq!(recovered, planted, "blocks survive relabeling");
    }
}

#[test]
fn permuted_input_rows_leave_traffic_vectors_identical() {
    let (records, demographics) =
        synth_dataset(&(0..6u32).collect(), 4, 2, 99);
    let mut reversed = records.clone();
    reversed.reverse();
    let a = make_dataset(records, demographics.clone());
    let b = make_dataset(reversed, demographics);
    for keyword in a.keywords() {
        for &zip in a.zipcodes() {
            let va = traffic_vector(&a, keyword, zip).unwrap();
            let vb = traffic_vector(&b, keyword, zip).unwrap();
            assert_eq!(va, vb);
        }
    }
}
