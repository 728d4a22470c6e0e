//! Command-line pipeline: config-file/flag resolution, subcommand dispatch
//! and the on-disk output layout.
//!
//! Configuration comes from an optional `key=value` file (path in the
//! `GEOAD_AUDIT_CONFIG` environment variable) overridden by flags; flags
//! always win. Outputs land in `<out>/<keyword-slug>/`, and running the
//! same inputs twice produces byte-identical trees regardless of `--jobs`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::community::{cluster_demographics, leiden_partition, CommunityError, Partition};
use crate::demographics::region_baseline;
use crate::export::{
    write_choropleth, write_domain_table, write_edge_list, write_histogram, write_sidecar,
    ExportError, Overlay, TableFormat,
};
use crate::ingest::{
    parse_ad_records, parse_demographics, validate_dataset, Dataset, IngestError, ValidationMode,
    ValidationReport,
};
use crate::profile::{domain_profile, keyword_profiles, DomainProfile, ProfileError, RankBy};
use crate::similarity::{
    build_graph, build_graph_normalized, weight_histogram, GraphError, SimilarityGraph,
};

pub const CONFIG_ENV_VAR: &str = "GEOAD_AUDIT_CONFIG";
/// Bin count for exported weight histograms.
pub const HISTOGRAM_BINS: usize = 50;
/// Outer-iteration cap for Leiden runs started from the CLI.
pub const MAX_LEIDEN_ITERATIONS: usize = 100;
/// How many domains `all` puts on the map when boundaries are available.
pub const MAP_DOMAINS: usize = 3;

#[derive(Debug, Parser)]
#[command(
    name = "geoad-audit",
    version,
    about = "Audits geo-targeted advertising for demographic bias"
)]
pub struct Cli {
    #[command(flatten)]
    pub options: Options,
    #[command(subcommand)]
    pub command: Command,
}

/// Flag-level overrides; unset flags fall back to the config file, then to
/// built-in defaults.
#[derive(Debug, Default, Args)]
pub struct Options {
    /// Ad-records CSV
    #[arg(long, global = true)]
    pub ads: Option<PathBuf>,
    /// Demographics CSV
    #[arg(long, global = true)]
    pub demographics: Option<PathBuf>,
    /// Zipcode boundaries GeoJSON (enables map output)
    #[arg(long, global = true)]
    pub boundaries: Option<PathBuf>,
    /// Restrict `all` to one keyword
    #[arg(long, global = true)]
    pub keyword: Option<String>,
    /// Top-zipcode cutoff for domain profiles
    #[arg(long, global = true)]
    pub theta: Option<usize>,
    /// Leiden resolution γ
    #[arg(long, global = true)]
    pub resolution: Option<f64>,
    /// Leiden RNG seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Fail validation on zipcodes without demographics
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub strict: Option<bool>,
    /// Score column for zipcode rankings
    #[arg(long, global = true, value_enum)]
    pub rank_by: Option<RankByArg>,
    /// L1-normalize traffic vectors before computing similarities
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub normalize_traffic: Option<bool>,
    /// Concurrent keywords for `all` (0 = auto)
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RankByArg {
    Visibility,
    Traffic,
}

impl From<RankByArg> for RankBy {
    fn from(arg: RankByArg) -> Self {
        match arg {
            RankByArg::Visibility => RankBy::Visibility,
            RankByArg::Traffic => RankBy::Traffic,
        }
    }
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Parse both tables and report coverage mismatches
    Validate,
    /// Export the similarity edge list and weight histogram for a keyword
    Graph { keyword: String },
    /// Detect zipcode communities and their demographics for a keyword
    Communities { keyword: String },
    /// Build the per-domain bias profile table for a keyword
    Profiles { keyword: String },
    /// Write a choropleth GeoJSON for selected domains of a keyword
    Map {
        keyword: String,
        /// Comma-separated domain list
        #[arg(long, value_delimiter = ',', required = true)]
        domains: Vec<String>,
    },
    /// Run every stage for every keyword
    All,
}

/// Fully resolved run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub ads_path: PathBuf,
    pub demographics_path: PathBuf,
    pub boundaries_path: Option<PathBuf>,
    pub keyword: Option<String>,
    pub theta: usize,
    pub resolution: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub strict: bool,
    pub rank_by: RankBy,
    pub normalize_traffic: bool,
    pub jobs: usize,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config `{path}`: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("config: unknown key `{0}`")]
    UnknownKey(String),
    #[error("config: invalid value `{value}` for `{key}`")]
    BadValue { key: &'static str, value: String },
    #[error("missing required input: --ads (or `ads` in the config file)")]
    MissingAds,
    #[error("missing required input: --demographics (or `demographics` in the config file)")]
    MissingDemographics,
    #[error("theta must be ≥ 1")]
    BadTheta,
    #[error("resolution must be positive")]
    BadResolution,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot read `{path}`: {source}")]
    Input { path: PathBuf, source: std::io::Error },
    #[error("cannot write `{path}`: {source}")]
    Output { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: IngestError },
    #[error("validation failed: {0}")]
    Validation(IngestError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Community(#[from] CommunityError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error("keyword `{0}` not present in the dataset")]
    UnknownKeywordFilter(String),
    #[error("the map subcommand requires --boundaries")]
    MissingBoundaries,
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

/// Parses the `key=value` config format: one pair per line, `#` comments
/// and blank lines ignored.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    const KEYS: [&str; 12] = [
        "ads",
        "demographics",
        "boundaries",
        "keyword",
        "theta",
        "resolution",
        "seed",
        "out",
        "strict",
        "rank_by",
        "normalize_traffic",
        "jobs",
    ];
    let mut values = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
        let key = key.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(key));
        }
        values.insert(key, value.trim().to_string());
    }
    Ok(values)
}

fn parse_bool(key: &'static str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(ConfigError::BadValue { key, value: other.to_string() }),
    }
}

impl RunConfig {
    /// Merges flags over file values over defaults, then validates.
    pub fn resolve(
        options: &Options,
        file: &BTreeMap<String, String>,
    ) -> Result<RunConfig, ConfigError> {
        let path_of = |key: &'static str| file.get(key).map(PathBuf::from);
        let ads_path = options
            .ads
            .clone()
            .or_else(|| path_of("ads"))
            .ok_or(ConfigError::MissingAds)?;
        let demographics_path = options
            .demographics
            .clone()
            .or_else(|| path_of("demographics"))
            .ok_or(ConfigError::MissingDemographics)?;
        let boundaries_path = options.boundaries.clone().or_else(|| path_of("boundaries"));
        let keyword = options.keyword.clone().or_else(|| file.get("keyword").cloned());

        let theta = match (&options.theta, file.get("theta")) {
            (Some(v), _) => *v,
            (None, Some(raw)) => raw
                .parse()
                .map_err(|_| ConfigError::BadValue { key: "theta", value: raw.clone() })?,
            (None, None) => 20,
        };
        let resolution = match (&options.resolution, file.get("resolution")) {
            (Some(v), _) => *v,
            (None, Some(raw)) => raw
                .parse()
                .map_err(|_| ConfigError::BadValue { key: "resolution", value: raw.clone() })?,
            (None, None) => 1.0,
        };
        let seed = match (&options.seed, file.get("seed")) {
            (Some(v), _) => *v,
            (None, Some(raw)) => raw
                .parse()
                .map_err(|_| ConfigError::BadValue { key: "seed", value: raw.clone() })?,
            (None, None) => 42,
        };
        let out_dir = options
            .out
            .clone()
            .or_else(|| path_of("out"))
            .unwrap_or_else(|| PathBuf::from("out"));
        let strict = match (&options.strict, file.get("strict")) {
            (Some(v), _) => *v,
            (None, Some(raw)) => parse_bool("strict", raw)?,
            (None, None) => false,
        };
        let rank_by = match (&options.rank_by, file.get("rank_by")) {
            (Some(v), _) => (*v).into(),
            (None, Some(raw)) => match raw.as_str() {
                "visibility" => RankBy::Visibility,
                "traffic" => RankBy::Traffic,
                other => {
                    return Err(ConfigError::BadValue { key: "rank_by", value: other.to_string() })
                }
            },
            (None, None) => RankBy::Visibility,
        };
        let normalize_traffic = match (&options.normalize_traffic, file.get("normalize_traffic")) {
            (Some(v), _) => *v,
            (None, Some(raw)) => parse_bool("normalize_traffic", raw)?,
            (None, None) => false,
        };
        let jobs = match (&options.jobs, file.get("jobs")) {
            (Some(v), _) => *v,
            (None, Some(raw)) => raw
                .parse()
                .map_err(|_| ConfigError::BadValue { key: "jobs", value: raw.clone() })?,
            (None, None) => 0,
        };

        if theta == 0 {
            return Err(ConfigError::BadTheta);
        }
        if !resolution.is_finite() || resolution <= 0.0 {
            return Err(ConfigError::BadResolution);
        }
        Ok(RunConfig {
            ads_path,
            demographics_path,
            boundaries_path,
            keyword,
            theta,
            resolution,
            seed,
            out_dir,
            strict,
            rank_by,
            normalize_traffic,
            jobs,
        })
    }
}

/// Loads the config file named by `GEOAD_AUDIT_CONFIG`, if set.
pub fn load_env_config() -> Result<BTreeMap<String, String>, ConfigError> {
    match std::env::var_os(CONFIG_ENV_VAR) {
        Some(path) => {
            let path = PathBuf::from(path);
            let text = fs::read_to_string(&path)
                .map_err(|source| ConfigError::Read { path: path.clone(), source })?;
            parse_config_text(&text)
        }
        None => Ok(BTreeMap::new()),
    }
}

/// Resolves config and runs the subcommand. The binary maps `Err` to exit
/// status 1; usage errors never reach this point (clap exits with 2).
pub fn execute(cli: &Cli) -> Result<(), RunError> {
    let file = load_env_config()?;
    let config = RunConfig::resolve(&cli.options, &file)?;
    run(&cli.command, &config)
}

pub fn run(command: &Command, config: &RunConfig) -> Result<(), RunError> {
    let (dataset, report) = load_dataset(config)?;
    ensure_dir(&config.out_dir)?;
    match command {
        Command::Validate => {
            let path = config.out_dir.join("validation_report.txt");
            write_file(&path, report.to_string().as_bytes())?;
            print!("{report}");
            Ok(())
        }
        Command::Graph { keyword } => {
            let out = keyword_dir(config, keyword)?;
            run_graph_stage(&dataset, config, keyword, &out).map(|_| ())
        }
        Command::Communities { keyword } => {
            let out = keyword_dir(config, keyword)?;
            let graph = build_keyword_graph(&dataset, config, keyword)?;
            run_communities_stage(&dataset, config, &graph, &out).map(|_| ())
        }
        Command::Profiles { keyword } => {
            let out = keyword_dir(config, keyword)?;
            run_profiles_stage(&dataset, config, keyword, &out).map(|_| ())
        }
        Command::Map { keyword, domains } => {
            let out = keyword_dir(config, keyword)?;
            let boundaries = read_boundaries(config)?;
            let baseline =
                region_baseline(dataset.demographics().values()).map_err(ProfileError::from)?;
            let profiles = domains
                .iter()
                .map(|domain| {
                    domain_profile(&dataset, keyword, domain, config.theta, &baseline, config.rank_by)
                })
                .collect::<Result<Vec<_>, _>>()?;
            run_map_stage(&dataset, &profiles, &boundaries, &out)
        }
        Command::All => run_all(&dataset, &report, config),
    }
}

fn load_dataset(config: &RunConfig) -> Result<(Dataset, ValidationReport), RunError> {
    let ads_bytes = fs::read(&config.ads_path)
        .map_err(|source| RunError::Input { path: config.ads_path.clone(), source })?;
    let records = parse_ad_records(ads_bytes.as_slice())
        .map_err(|source| RunError::Parse { path: config.ads_path.clone(), source })?;
    let demo_bytes = fs::read(&config.demographics_path)
        .map_err(|source| RunError::Input { path: config.demographics_path.clone(), source })?;
    let rows = parse_demographics(demo_bytes.as_slice())
        .map_err(|source| RunError::Parse { path: config.demographics_path.clone(), source })?;
    let mode = if config.strict { ValidationMode::Strict } else { ValidationMode::Permissive };
    validate_dataset(records, rows, mode).map_err(RunError::Validation)
}

fn read_boundaries(config: &RunConfig) -> Result<Vec<u8>, RunError> {
    let path = config.boundaries_path.as_ref().ok_or(RunError::MissingBoundaries)?;
    fs::read(path).map_err(|source| RunError::Input { path: path.clone(), source })
}

fn build_keyword_graph(
    dataset: &Dataset,
    config: &RunConfig,
    keyword: &str,
) -> Result<SimilarityGraph, RunError> {
    let graph = if config.normalize_traffic {
        build_graph_normalized(dataset, keyword)?
    } else {
        build_graph(dataset, keyword)?
    };
    Ok(graph)
}

fn run_graph_stage(
    dataset: &Dataset,
    config: &RunConfig,
    keyword: &str,
    out: &Path,
) -> Result<SimilarityGraph, RunError> {
    let graph = build_keyword_graph(dataset, config, keyword)?;
    let mut edges = Vec::new();
    write_edge_list(&graph, &mut edges)?;
    write_file(&out.join("edges.csv"), &edges)?;

    let histogram = weight_histogram(&graph, HISTOGRAM_BINS)?;
    let mut hist_out = Vec::new();
    write_histogram(&histogram, &mut hist_out)?;
    write_file(&out.join("histogram.csv"), &hist_out)?;
    Ok(graph)
}

fn run_communities_stage(
    dataset: &Dataset,
    config: &RunConfig,
    graph: &SimilarityGraph,
    out: &Path,
) -> Result<Partition, RunError> {
    let partition =
        leiden_partition(graph, config.resolution, config.seed, MAX_LEIDEN_ITERATIONS)?;

    let mut assignment = String::from("zipcode,community\n");
    for (node, zipcode) in graph.nodes().iter().enumerate() {
        assignment.push_str(&format!("{},{}\n", zipcode, partition.assignment[node]));
    }
    write_file(&out.join("partition.csv"), assignment.as_bytes())?;

    let shares = cluster_demographics(graph, &partition, dataset)?;
    let sizes = {
        let mut sizes = vec![0usize; partition.community_count()];
        for &c in &partition.assignment {
            sizes[c] += 1;
        }
        sizes
    };
    let mut table = String::from("community,zipcodes,white_share,black_share,asian_share\n");
    for (community, share) in shares.iter().enumerate() {
        table.push_str(&format!(
            "{},{},{},{},{}\n",
            community, sizes[community], share.white, share.black, share.asian
        ));
    }
    write_file(&out.join("communities.csv"), table.as_bytes())?;
    Ok(partition)
}

fn run_profiles_stage(
    dataset: &Dataset,
    config: &RunConfig,
    keyword: &str,
    out: &Path,
) -> Result<Vec<DomainProfile>, RunError> {
    let baseline =
        region_baseline(dataset.demographics().values()).map_err(ProfileError::from)?;
    let profiles = keyword_profiles(dataset, keyword, config.theta, &baseline, config.rank_by)?;

    let mut csv_out = Vec::new();
    write_domain_table(&profiles, TableFormat::Csv, &mut csv_out)?;
    write_file(&out.join("domains.csv"), &csv_out)?;

    let mut json_out = Vec::new();
    write_domain_table(&profiles, TableFormat::Json, &mut json_out)?;
    write_file(&out.join("domains.json"), &json_out)?;
    Ok(profiles)
}

fn run_map_stage(
    dataset: &Dataset,
    profiles: &[DomainProfile],
    boundaries: &[u8],
    out: &Path,
) -> Result<(), RunError> {
    let overlay = Overlay::Profiles(profiles);
    let (document, missing) = write_choropleth(dataset, boundaries, &overlay)?;
    write_file(&out.join("map.geojson"), document.to_json_string().as_bytes())?;
    let mut sidecar = Vec::new();
    write_sidecar(&missing, &mut sidecar)?;
    write_file(&out.join("map_missing.txt"), &sidecar)?;
    Ok(())
}

/// The domains whose divergence ratios sit farthest from 1 in any
/// category; ties break by domain name.
fn top_domains_by_divergence(profiles: &[DomainProfile], n: usize) -> Vec<&DomainProfile> {
    let deviation = |p: &DomainProfile| {
        let d = &p.divergence;
        (d.white - 1.0)
            .abs()
            .max((d.black - 1.0).abs())
            .max((d.asian - 1.0).abs())
    };
    let mut sorted: Vec<&DomainProfile> = profiles.iter().collect();
    sorted.sort_by(|a, b| {
        deviation(b)
            .partial_cmp(&deviation(a))
            .unwrap()
            .then_with(|| a.domain.cmp(&b.domain))
    });
    sorted.truncate(n);
    sorted
}

fn process_keyword_all(
    dataset: &Dataset,
    config: &RunConfig,
    keyword: &str,
    boundaries: Option<&[u8]>,
    out: &Path,
) -> Result<(), RunError> {
    ensure_dir(out)?;
    let graph = run_graph_stage(dataset, config, keyword, out)?;
    run_communities_stage(dataset, config, &graph, out)?;
    let profiles = run_profiles_stage(dataset, config, keyword, out)?;
    if let Some(boundaries) = boundaries {
        let top = top_domains_by_divergence(&profiles, MAP_DOMAINS);
        let owned: Vec<DomainProfile> = top.into_iter().cloned().collect();
        run_map_stage(dataset, &owned, boundaries, out)?;
    }
    Ok(())
}

fn run_all(
    dataset: &Dataset,
    report: &ValidationReport,
    config: &RunConfig,
) -> Result<(), RunError> {
    write_file(
        &config.out_dir.join("validation_report.txt"),
        report.to_string().as_bytes(),
    )?;

    let keywords: Vec<String> = match &config.keyword {
        Some(filter) => {
            if !dataset.has_keyword(filter) {
                return Err(RunError::UnknownKeywordFilter(filter.clone()));
            }
            vec![filter.clone()]
        }
        None => dataset.keywords().iter().cloned().collect(),
    };
    let slugs = assign_slugs(&keywords);
    let boundaries = match &config.boundaries_path {
        Some(_) => Some(read_boundaries(config)?),
        None => None,
    };

    let process = |keyword: &String| -> Result<(), RunError> {
        let out = config.out_dir.join(&slugs[keyword]);
        process_keyword_all(dataset, config, keyword, boundaries.as_deref(), &out)
    };

    #[cfg(feature = "parallel")]
    let results: Vec<Result<(), RunError>> = {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| RunError::Pool(e.to_string()))?;
        pool.install(|| keywords.par_iter().map(process).collect())
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(), RunError>> = keywords.iter().map(process).collect();

    // First failure in keyword order, independent of scheduling.
    for result in results {
        result?;
    }
    Ok(())
}

/// Filesystem-safe directory name for a keyword: ASCII alphanumerics kept,
/// everything else mapped to `-`. Collisions within one run get a numeric
/// suffix in sorted-keyword order.
pub fn keyword_slug(keyword: &str) -> String {
    let slug: String = keyword
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect();
    if slug.is_empty() {
        "keyword".to_string()
    } else {
        slug
    }
}

fn assign_slugs(keywords: &[String]) -> BTreeMap<String, String> {
    let mut sorted = keywords.to_vec();
    sorted.sort();
    let mut used: BTreeMap<String, usize> = BTreeMap::new();
    let mut slugs = BTreeMap::new();
    for keyword in sorted {
        let base = keyword_slug(&keyword);
        let n = used.entry(base.clone()).or_insert(0);
        *n += 1;
        let slug = if *n == 1 { base } else { format!("{base}-{n}") };
        slugs.insert(keyword, slug);
    }
    slugs
}

fn keyword_dir(config: &RunConfig, keyword: &str) -> Result<PathBuf, RunError> {
    let dir = config.out_dir.join(keyword_slug(keyword));
    ensure_dir(&dir)?;
    Ok(dir)
}

fn ensure_dir(path: &Path) -> Result<(), RunError> {
    fs::create_dir_all(path)
        .map_err(|source| RunError::Output { path: path.to_path_buf(), source })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let mut file = fs::File::create(path)
        .map_err(|source| RunError::Output { path: path.to_path_buf(), source })?;
    file.write_all(bytes)
        .map_err(|source| RunError::Output { path: path.to_path_buf(), source })
}
