//! Audit library for geographically targeted online advertising.
//!
//! The pipeline joins observed ad placements with census demographics at
//! the zipcode level, builds per-keyword zipcode-similarity networks,
//! detects clusters of identically-targeted zipcodes, and scores each
//! advertising domain's racial-demographic target profile against the
//! region baseline.
//!
//! Stages, in order:
//!
//! 1. [`ingest`]: parse and validate the two CSV inputs into a [`Dataset`].
//! 2. [`demographics`]: count vectors, region baselines, share
//!    normalization.
//! 3. [`similarity`]: per-keyword weighted complete graphs over zipcodes.
//! 4. [`community`]: Leiden partitions scored by weighted modularity.
//! 5. [`profile`]: per-domain top-θ target profiles, divergence ratios and
//!    ternary coordinates.
//! 6. [`export`]: deterministic CSV/JSON/GeoJSON writers.
//!
//! With the default `parallel` feature the pairwise-similarity kernel and
//! per-domain profiling fan out through rayon; disabling it swaps in
//! sequential fallbacks with bit-identical output.

pub mod cli;
pub mod community;
pub mod demographics;
pub mod export;
pub mod ingest;
pub mod profile;
pub mod similarity;

pub use community::{leiden_partition, modularity, Partition};
pub use demographics::{DemographicVector, ShareMode, ShareVector};
pub use ingest::{
    parse_ad_records, parse_demographics, validate_dataset, AdRecord, Dataset, ValidationMode,
    ValidationReport, ZipDemographics, Zipcode,
};
pub use profile::{domain_profile, keyword_profiles, DomainProfile, RankBy};
pub use similarity::{build_graph, weight_histogram, SimilarityGraph, TrafficVector};
