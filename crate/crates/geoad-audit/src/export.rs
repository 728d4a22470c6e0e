//! File exports: edge lists, domain tables, histograms, and GeoJSON
//! choropleth documents.
//!
//! Every export is byte-deterministic for identical inputs: rows follow a
//! fixed order and all numbers use the shortest decimal representation that
//! round-trips, so re-parsing reconstructs identical values.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::Serialize;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::community::Partition;
use crate::demographics::share_of_counts;
use crate::ingest::{Dataset, Zipcode};
use crate::profile::DomainProfile;
use crate::similarity::{HistogramBin, SimilarityGraph};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("empty profile set")]
    EmptyProfiles,
    #[error("write failed: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("invalid GeoJSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("boundaries must be a GeoJSON FeatureCollection with a `features` array")]
    NotFeatureCollection,
    #[error("boundary feature {index} is missing a `ZCTA5` or `zipcode` property")]
    MissingZipcodeProperty { index: usize },
    #[error("boundary feature {index} has unusable zipcode property `{value}`")]
    BadZipcodeProperty { index: usize, value: String },
}

/// CSV edge list `source,target,weight` in lexicographic pair order.
/// Weights print in shortest round-trip form, so a uniform graph emits the
/// literal `1`.
pub fn write_edge_list<W: Write>(graph: &SimilarityGraph, mut sink: W) -> Result<(), ExportError> {
    writeln!(sink, "source,target,weight")?;
    let nodes = graph.nodes();
    for (i, j, weight) in graph.edges() {
        writeln!(sink, "{},{},{}", nodes[i], nodes[j], weight)?;
    }
    Ok(())
}

/// CSV histogram `bin_lower,bin_upper,count`.
pub fn write_histogram<W: Write>(bins: &[HistogramBin], mut sink: W) -> Result<(), ExportError> {
    writeln!(sink, "bin_lower,bin_upper,count")?;
    for bin in bins {
        writeln!(sink, "{},{},{}", bin.lower, bin.upper, bin.count)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Json,
}

#[derive(Serialize)]
struct DomainRow<'a> {
    domain: &'a str,
    theta: usize,
    shortfall: bool,
    white_abs: f64,
    black_abs: f64,
    asian_abs: f64,
    white_rel: f64,
    black_rel: f64,
    asian_rel: f64,
    div_white: f64,
    div_black: f64,
    div_asian: f64,
    ternary_x: f64,
    ternary_y: f64,
}

impl<'a> DomainRow<'a> {
    fn from_profile(p: &'a DomainProfile) -> Self {
        DomainRow {
            domain: &p.domain,
            theta: p.theta,
            shortfall: p.shortfall,
            white_abs: p.profile_absolute.white,
            black_abs: p.profile_absolute.black,
            asian_abs: p.profile_absolute.asian,
            white_rel: p.profile_relative.white,
            black_rel: p.profile_relative.black,
            asian_rel: p.profile_relative.asian,
            div_white: p.divergence.white,
            div_black: p.divergence.black,
            div_asian: p.divergence.asian,
            ternary_x: p.ternary.0,
            ternary_y: p.ternary.1,
        }
    }
}

/// Domain table sorted by domain name, as CSV or a JSON array of objects
/// with field names identical to the CSV columns.
pub fn write_domain_table<W: Write>(
    profiles: &[DomainProfile],
    format: TableFormat,
    sink: W,
) -> Result<(), ExportError> {
    if profiles.is_empty() {
        return Err(ExportError::EmptyProfiles);
    }
    let mut sorted: Vec<&DomainProfile> = profiles.iter().collect();
    sorted.sort_by(|a, b| a.domain.cmp(&b.domain));
    let rows: Vec<DomainRow> = sorted.into_iter().map(DomainRow::from_profile).collect();
    match format {
        TableFormat::Csv => {
            let mut writer = csv::Writer::from_writer(sink);
            for row in &rows {
                writer.serialize(row)?;
            }
            writer.flush()?;
        }
        TableFormat::Json => {
            let mut sink = sink;
            serde_json::to_writer_pretty(&mut sink, &rows)?;
            writeln!(sink)?;
        }
    }
    Ok(())
}

/// What gets attached to each choropleth feature besides the zipcode and
/// its demographic shares.
pub enum Overlay<'a> {
    None,
    /// Adds a `community` id to every feature.
    Partition {
        graph: &'a SimilarityGraph,
        partition: &'a Partition,
    },
    /// Adds a `rank` (single profile) or `rank_<domain>` (several) to the
    /// features inside each profile's top-θ set.
    Profiles(&'a [DomainProfile]),
}

/// GeoJSON FeatureCollection of the dataset's zipcodes with overlay
/// properties. Geometries pass through untouched from the boundary input.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoroplethDocument {
    value: Value,
}

impl ChoroplethDocument {
    pub fn as_value(&self) -> &Value {
        &self.value
    }

    pub fn feature_count(&self) -> usize {
        self.value["features"].as_array().map_or(0, Vec::len)
    }

    pub fn to_json_string(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.value).expect("valid document");
        text.push('\n');
        text
    }
}

fn feature_zipcode(feature: &Value, index: usize) -> Result<Zipcode, ExportError> {
    let properties = feature.get("properties").and_then(Value::as_object);
    let raw = properties
        .and_then(|p| p.get("ZCTA5").or_else(|| p.get("zipcode")))
        .ok_or(ExportError::MissingZipcodeProperty { index })?;
    let text = match raw {
        Value::String(s) => s.clone(),
        // Integer codes lose leading zeros; restore them.
        Value::Number(n) if n.is_u64() => format!("{:05}", n.as_u64().unwrap()),
        other => other.to_string(),
    };
    Zipcode::parse(&text).map_err(|_| ExportError::BadZipcodeProperty { index, value: text })
}

/// Builds the choropleth document plus the sidecar list of dataset
/// zipcodes absent from the boundary file. Boundary features outside the
/// dataset are dropped.
pub fn write_choropleth<R: Read>(
    dataset: &Dataset,
    boundaries: R,
    overlay: &Overlay,
) -> Result<(ChoroplethDocument, Vec<Zipcode>), ExportError> {
    let input: Value = serde_json::from_reader(boundaries)?;
    if let Some(kind) = input.get("type").and_then(Value::as_str) {
        if kind != "FeatureCollection" {
            return Err(ExportError::NotFeatureCollection);
        }
    }
    let features = input
        .get("features")
        .and_then(Value::as_array)
        .ok_or(ExportError::NotFeatureCollection)?;

    let mut geometries: BTreeMap<Zipcode, &Value> = BTreeMap::new();
    for (index, feature) in features.iter().enumerate() {
        let zipcode = feature_zipcode(feature, index)?;
        if dataset.zipcodes().contains(&zipcode) {
            // First occurrence wins when a zipcode repeats.
            geometries
                .entry(zipcode)
                .or_insert_with(|| feature.get("geometry").unwrap_or(&Value::Null));
        }
    }

    let mut out_features = Vec::with_capacity(geometries.len());
    for (&zipcode, &geometry) in &geometries {
        let mut properties = Map::new();
        properties.insert("zipcode".into(), Value::String(zipcode.as_str().to_string()));

        // Dataset zipcodes always carry demographics; zero-population rows
        // get null shares.
        if let Some(row) = dataset.demographics_for(zipcode) {
            let shares = share_of_counts(&crate::demographics::demographic_vector(row)).ok();
            let share_value = |f: fn(&crate::demographics::ShareVector) -> f64| {
                shares.as_ref().map_or(Value::Null, |s| json!(f(s)))
            };
            properties.insert("share_white".into(), share_value(|s| s.white));
            properties.insert("share_black".into(), share_value(|s| s.black));
            properties.insert("share_asian".into(), share_value(|s| s.asian));
        }

        match overlay {
            Overlay::None => {}
            Overlay::Partition { graph, partition } => {
                if let Some(node) = graph.node_index(zipcode) {
                    properties.insert("community".into(), json!(partition.assignment[node]));
                }
            }
            Overlay::Profiles(profiles) => {
                for profile in profiles.iter() {
                    if let Some(&(_, rank)) =
                        profile.top_zipcodes.iter().find(|&&(z, _)| z == zipcode)
                    {
                        let key = if profiles.len() == 1 {
                            "rank".to_string()
                        } else {
                            format!("rank_{}", profile.domain)
                        };
                        properties.insert(key, json!(rank));
                    }
                }
            }
        }

        out_features.push(json!({
            "type": "Feature",
            "geometry": geometry.clone(),
            "properties": Value::Object(properties),
        }));
    }

    let missing: Vec<Zipcode> = dataset
        .zipcodes()
        .iter()
        .filter(|z| !geometries.contains_key(z))
        .copied()
        .collect();

    let document = ChoroplethDocument {
        value: json!({
            "type": "FeatureCollection",
            "features": out_features,
        }),
    };
    Ok((document, missing))
}

/// Sidecar report: one zipcode per line.
pub fn write_sidecar<W: Write>(zipcodes: &[Zipcode], mut sink: W) -> Result<(), ExportError> {
    for zipcode in zipcodes {
        writeln!(sink, "{zipcode}")?;
    }
    Ok(())
}
