//! Parsing and validation of the two input tables: ad observations and
//! zipcode demographics.
//!
//! Both tables are flat CSV with fixed headers. Records are held in input
//! order; the validated [`Dataset`] is immutable and safe to share across
//! threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use thiserror::Error;

/// Expected header of the ad-records table.
pub const AD_HEADER: [&str; 6] = ["keyword", "zipcode", "domain", "rank", "visibility", "traffic"];

/// Expected header of the demographics table.
pub const DEMOGRAPHICS_HEADER: [&str; 7] = [
    "zipcode",
    "total",
    "white",
    "black",
    "asian",
    "american_indian",
    "pacific_islander",
];

/// A 5-digit ZCTA code. Leading zeros are significant, so this is text,
/// never an integer.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Zipcode([u8; 5]);

impl Zipcode {
    pub fn parse(s: &str) -> Result<Self, ZipcodeError> {
        let bytes = s.as_bytes();
        if bytes.len() != 5 || !bytes.iter().all(u8::is_ascii_digit) {
            return Err(ZipcodeError(s.to_string()));
        }
        let mut digits = [0u8; 5];
        digits.copy_from_slice(bytes);
        Ok(Zipcode(digits))
    }

    pub fn as_str(&self) -> &str {
        // Always valid UTF-8: construction checks ASCII digits.
        std::str::from_utf8(&self.0).unwrap()
    }
}

#[derive(Debug, Clone, Error)]
#[error("zipcode must be 5 digits (got `{0}`)")]
pub struct ZipcodeError(pub String);

impl fmt::Display for Zipcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for Zipcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Zipcode({})", self.as_str())
    }
}

impl FromStr for Zipcode {
    type Err = ZipcodeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Zipcode::parse(s)
    }
}

/// One observed (keyword, zipcode, domain) tuple with its rank, relative
/// visibility and estimated monthly traffic.
#[derive(Debug, Clone, PartialEq)]
pub struct AdRecord {
    pub keyword: String,
    pub zipcode: Zipcode,
    pub domain: String,
    /// 1 = most visible.
    pub rank: u32,
    pub visibility: f64,
    pub traffic: f64,
}

/// Per-zipcode population counts by racial category. The tracked categories
/// never exceed `total`; the remainder covers other and redacted categories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZipDemographics {
    pub zipcode: Zipcode,
    pub total: u64,
    pub white: u64,
    pub black: u64,
    pub asian: u64,
    pub american_indian: u64,
    pub pacific_islander: u64,
}

impl ZipDemographics {
    fn tracked_sum(&self) -> u64 {
        self.white + self.black + self.asian + self.american_indian + self.pacific_islander
    }
}

/// How [`validate_dataset`] treats ad records whose zipcode has no
/// demographics row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValidationMode {
    /// Any uncovered zipcode fails validation with the full list.
    Strict,
    /// Uncovered records are dropped and counted in the report.
    #[default]
    Permissive,
}

/// Coverage mismatches found while joining the two tables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    /// Zipcodes that appear in ad records but have no demographics row.
    pub missing_demographics: Vec<Zipcode>,
    /// Zipcodes that have demographics but never appear in ad records.
    pub unused_demographics: Vec<Zipcode>,
    /// Ad records dropped under permissive validation.
    pub dropped_records: usize,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.missing_demographics.is_empty()
            && self.unused_demographics.is_empty()
            && self.dropped_records == 0
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return writeln!(f, "ok");
        }
        if !self.missing_demographics.is_empty() {
            writeln!(f, "missing demographics: {}", join_zips(&self.missing_demographics))?;
        }
        if !self.unused_demographics.is_empty() {
            writeln!(f, "unused demographics: {}", join_zips(&self.unused_demographics))?;
        }
        if self.dropped_records > 0 {
            writeln!(f, "dropped records: {}", self.dropped_records)?;
        }
        Ok(())
    }
}

fn join_zips(zips: &[Zipcode]) -> String {
    zips.iter().map(Zipcode::as_str).collect::<Vec<_>>().join(", ")
}

/// The validated, immutable join of ad records and demographics.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<AdRecord>,
    demographics: BTreeMap<Zipcode, ZipDemographics>,
    keywords: BTreeSet<String>,
    zipcodes: BTreeSet<Zipcode>,
    // Lookup indices derived from `records` at build time.
    by_keyword_zip: BTreeMap<String, BTreeMap<Zipcode, Vec<usize>>>,
    by_keyword_domain: BTreeMap<String, BTreeMap<String, Vec<usize>>>,
}

impl Dataset {
    pub fn records(&self) -> &[AdRecord] {
        &self.records
    }

    pub fn demographics(&self) -> &BTreeMap<Zipcode, ZipDemographics> {
        &self.demographics
    }

    pub fn demographics_for(&self, zipcode: Zipcode) -> Option<&ZipDemographics> {
        self.demographics.get(&zipcode)
    }

    /// Distinct keywords observed in the ad records.
    pub fn keywords(&self) -> &BTreeSet<String> {
        &self.keywords
    }

    /// Distinct zipcodes observed in the ad records, in lexicographic order.
    pub fn zipcodes(&self) -> &BTreeSet<Zipcode> {
        &self.zipcodes
    }

    pub fn has_keyword(&self, keyword: &str) -> bool {
        self.keywords.contains(keyword)
    }

    /// Records for one (keyword, zipcode) cell, in input order.
    pub fn records_for_keyword_zip(
        &self,
        keyword: &str,
        zipcode: Zipcode,
    ) -> impl Iterator<Item = &AdRecord> {
        self.by_keyword_zip
            .get(keyword)
            .and_then(|zips| zips.get(&zipcode))
            .into_iter()
            .flatten()
            .map(|&i| &self.records[i])
    }

    /// Records for one (keyword, domain) cell, in input order.
    pub fn records_for_keyword_domain(
        &self,
        keyword: &str,
        domain: &str,
    ) -> impl Iterator<Item = &AdRecord> {
        self.by_keyword_domain
            .get(keyword)
            .and_then(|domains| domains.get(domain))
            .into_iter()
            .flatten()
            .map(|&i| &self.records[i])
    }

    /// Distinct domains bidding on a keyword, in lexicographic order.
    pub fn domains_for_keyword(&self, keyword: &str) -> Vec<&str> {
        self.by_keyword_domain
            .get(keyword)
            .map(|domains| domains.keys().map(String::as_str).collect())
            .unwrap_or_default()
    }

    fn build(records: Vec<AdRecord>, demographics: BTreeMap<Zipcode, ZipDemographics>) -> Self {
        let mut keywords = BTreeSet::new();
        let mut zipcodes = BTreeSet::new();
        let mut by_keyword_zip: BTreeMap<String, BTreeMap<Zipcode, Vec<usize>>> = BTreeMap::new();
        let mut by_keyword_domain: BTreeMap<String, BTreeMap<String, Vec<usize>>> = BTreeMap::new();
        for (i, record) in records.iter().enumerate() {
            keywords.insert(record.keyword.clone());
            zipcodes.insert(record.zipcode);
            by_keyword_zip
                .entry(record.keyword.clone())
                .or_default()
                .entry(record.zipcode)
                .or_default()
                .push(i);
            by_keyword_domain
                .entry(record.keyword.clone())
                .or_default()
                .entry(record.domain.clone())
                .or_default()
                .push(i);
        }
        Dataset {
            records,
            demographics,
            keywords,
            zipcodes,
            by_keyword_zip,
            by_keyword_domain,
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}, column {column}: {message}")]
    Row {
        line: u64,
        column: &'static str,
        message: String,
    },
    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("no records")]
    NoRecords,
    #[error("no demographics")]
    NoDemographics,
    #[error("{}duplicate record for ({keyword}, {zipcode}, {domain})", format_line(*.line))]
    DuplicateRecord {
        line: Option<u64>,
        keyword: String,
        zipcode: Zipcode,
        domain: String,
    },
    #[error("line {line}: duplicate zipcode {zipcode}")]
    DuplicateZipcode { line: u64, zipcode: Zipcode },
    #[error("zipcodes without demographics: {}", join_zips(.0))]
    MissingDemographics(Vec<Zipcode>),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("write failed: {0}")]
    Io(#[from] std::io::Error),
}

fn format_line(line: Option<u64>) -> String {
    match line {
        Some(line) => format!("line {line}: "),
        None => String::new(),
    }
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn check_header(record: &csv::StringRecord, expected: &[&str]) -> Result<(), IngestError> {
    let found: Vec<&str> = record.iter().collect();
    if found != expected {
        return Err(IngestError::Header {
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(())
}

fn field<'r>(
    record: &'r csv::StringRecord,
    index: usize,
    column: &'static str,
) -> Result<&'r str, IngestError> {
    record.get(index).ok_or_else(|| IngestError::Row {
        line: line_of(record),
        column,
        message: format!("missing field `{column}`"),
    })
}

fn parse_zip(record: &csv::StringRecord, index: usize) -> Result<Zipcode, IngestError> {
    let raw = field(record, index, "zipcode")?;
    Zipcode::parse(raw).map_err(|_| IngestError::Row {
        line: line_of(record),
        column: "zipcode",
        message: "zipcode must be 5 digits".to_string(),
    })
}

fn parse_count(
    record: &csv::StringRecord,
    index: usize,
    column: &'static str,
) -> Result<u64, IngestError> {
    let raw = field(record, index, column)?;
    raw.parse::<u64>().map_err(|_| IngestError::Row {
        line: line_of(record),
        column,
        message: format!("{column} must be a non-negative integer (got `{raw}`)"),
    })
}

fn parse_nonneg_real(
    record: &csv::StringRecord,
    index: usize,
    column: &'static str,
) -> Result<f64, IngestError> {
    let raw = field(record, index, column)?;
    let value: f64 = raw.parse().map_err(|_| IngestError::Row {
        line: line_of(record),
        column,
        message: format!("{column} must be a number (got `{raw}`)"),
    })?;
    if !value.is_finite() || value < 0.0 {
        return Err(IngestError::Row {
            line: line_of(record),
            column,
            message: format!("{column} must be a non-negative real (got `{raw}`)"),
        });
    }
    Ok(value)
}

fn expect_fields(record: &csv::StringRecord, count: usize) -> Result<(), IngestError> {
    if record.len() != count {
        return Err(IngestError::Row {
            line: line_of(record),
            column: "row",
            message: format!("expected {count} fields, found {}", record.len()),
        });
    }
    Ok(())
}

/// Parses the ad-records table. Row order is preserved; the
/// (keyword, zipcode, domain) triple must be unique.
pub fn parse_ad_records<R: Read>(source: R) -> Result<Vec<AdRecord>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(IngestError::NoRecords);
    }
    check_header(&headers, &AD_HEADER)?;

    let mut records = Vec::new();
    let mut seen: BTreeSet<(String, Zipcode, String)> = BTreeSet::new();
    for row in reader.records() {
        let row = row?;
        expect_fields(&row, 6)?;
        let keyword = field(&row, 0, "keyword")?.to_string();
        let zipcode = parse_zip(&row, 1)?;
        let domain = field(&row, 2, "domain")?.to_string();
        let rank_raw = field(&row, 3, "rank")?;
        let rank: u32 = rank_raw.parse().map_err(|_| IngestError::Row {
            line: line_of(&row),
            column: "rank",
            message: format!("rank must be a positive integer (got `{rank_raw}`)"),
        })?;
        if rank < 1 {
            return Err(IngestError::Row {
                line: line_of(&row),
                column: "rank",
                message: "rank must be ≥ 1".to_string(),
            });
        }
        let visibility = parse_nonneg_real(&row, 4, "visibility")?;
        let traffic = parse_nonneg_real(&row, 5, "traffic")?;
        if !seen.insert((keyword.clone(), zipcode, domain.clone())) {
            return Err(IngestError::DuplicateRecord {
                line: Some(line_of(&row)),
                keyword,
                zipcode,
                domain,
            });
        }
        records.push(AdRecord {
            keyword,
            zipcode,
            domain,
            rank,
            visibility,
            traffic,
        });
    }
    if records.is_empty() {
        return Err(IngestError::NoRecords);
    }
    Ok(records)
}

/// Parses the demographics table. One row per zipcode; the five tracked
/// category counts must not exceed the total.
pub fn parse_demographics<R: Read>(source: R) -> Result<Vec<ZipDemographics>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(IngestError::NoDemographics);
    }
    check_header(&headers, &DEMOGRAPHICS_HEADER)?;

    let mut rows = Vec::new();
    let mut seen: BTreeSet<Zipcode> = BTreeSet::new();
    for row in reader.records() {
        let row = row?;
        expect_fields(&row, 7)?;
        let zipcode = parse_zip(&row, 0)?;
        if !seen.insert(zipcode) {
            return Err(IngestError::DuplicateZipcode {
                line: line_of(&row),
                zipcode,
            });
        }
        let demographics = ZipDemographics {
            zipcode,
            total: parse_count(&row, 1, "total")?,
            white: parse_count(&row, 2, "white")?,
            black: parse_count(&row, 3, "black")?,
            asian: parse_count(&row, 4, "asian")?,
            american_indian: parse_count(&row, 5, "american_indian")?,
            pacific_islander: parse_count(&row, 6, "pacific_islander")?,
        };
        if demographics.tracked_sum() > demographics.total {
            return Err(IngestError::Row {
                line: line_of(&row),
                column: "total",
                message: format!("category sum exceeds total for zipcode {zipcode}"),
            });
        }
        rows.push(demographics);
    }
    if rows.is_empty() {
        return Err(IngestError::NoDemographics);
    }
    Ok(rows)
}

/// Joins parsed records and demographics into a [`Dataset`], checking that
/// every record zipcode is covered by a demographics row.
pub fn validate_dataset(
    records: Vec<AdRecord>,
    demographics: Vec<ZipDemographics>,
    mode: ValidationMode,
) -> Result<(Dataset, ValidationReport), IngestError> {
    let mut demo_map: BTreeMap<Zipcode, ZipDemographics> = BTreeMap::new();
    for row in demographics {
        if demo_map.insert(row.zipcode, row.clone()).is_some() {
            return Err(IngestError::DuplicateZipcode {
                line: 0,
                zipcode: row.zipcode,
            });
        }
    }
    let mut seen: BTreeSet<(&str, Zipcode, &str)> = BTreeSet::new();
    for record in &records {
        if !seen.insert((&record.keyword, record.zipcode, &record.domain)) {
            return Err(IngestError::DuplicateRecord {
                line: None,
                keyword: record.keyword.clone(),
                zipcode: record.zipcode,
                domain: record.domain.clone(),
            });
        }
    }

    let record_zips: BTreeSet<Zipcode> = records.iter().map(|r| r.zipcode).collect();
    let missing: Vec<Zipcode> = record_zips
        .iter()
        .filter(|z| !demo_map.contains_key(z))
        .copied()
        .collect();
    let unused: Vec<Zipcode> = demo_map
        .keys()
        .filter(|z| !record_zips.contains(z))
        .copied()
        .collect();

    if !missing.is_empty() && mode == ValidationMode::Strict {
        return Err(IngestError::MissingDemographics(missing));
    }

    let (kept, dropped) = if missing.is_empty() {
        (records, 0)
    } else {
        let missing_set: BTreeSet<Zipcode> = missing.iter().copied().collect();
        let before = records.len();
        let kept: Vec<AdRecord> = records
            .into_iter()
            .filter(|r| !missing_set.contains(&r.zipcode))
            .collect();
        let dropped = before - kept.len();
        (kept, dropped)
    };

    let report = ValidationReport {
        missing_demographics: missing,
        unused_demographics: unused,
        dropped_records: dropped,
    };
    Ok((Dataset::build(kept, demo_map), report))
}

/// Serializes ad records back to the ad-CSV schema, preserving order and
/// shortest round-trip numeric formatting.
pub fn write_ad_records<W: Write>(records: &[AdRecord], sink: W) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(AD_HEADER)?;
    for r in records {
        writer.write_record([
            r.keyword.as_str(),
            r.zipcode.as_str(),
            r.domain.as_str(),
            &r.rank.to_string(),
            &r.visibility.to_string(),
            &r.traffic.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Serializes demographics back to the demographics-CSV schema in zipcode
/// order.
pub fn write_demographics<'a, I, W>(rows: I, sink: W) -> Result<(), IngestError>
where
    I: IntoIterator<Item = &'a ZipDemographics>,
    W: Write,
{
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(DEMOGRAPHICS_HEADER)?;
    for d in rows {
        writer.write_record([
            d.zipcode.as_str(),
            &d.total.to_string(),
            &d.white.to_string(),
            &d.black.to_string(),
            &d.asian.to_string(),
            &d.american_indian.to_string(),
            &d.pacific_islander.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const ADS: &str = "keyword,zipcode,domain,rank,visibility,traffic\n\
        college scholarships,10001,cuny.edu,1,0.42,1200\n\
        college scholarships,10002,cuny.edu,2,0.3,800\n";

    const DEMOS: &str = "zipcode,total,white,black,asian,american_indian,pacific_islander\n\
        10001,10000,4500,1900,1200,100,50\n\
        10002,8000,2000,3000,1500,50,25\n";

    #[test]
    fn parses_ad_record_fields() {
        let records = parse_ad_records(ADS.as_bytes()).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].keyword, "college scholarships");
        assert_eq!(records[0].zipcode, Zipcode::parse("10001").unwrap());
        assert_eq!(records[0].domain, "cuny.edu");
        assert_eq!(records[0].rank, 1);
        assert_eq!(records[0].visibility, 0.42);
        assert_eq!(records[0].traffic, 1200.0);
    }

    #[test]
    fn rejects_rank_zero_with_line() {
        let input = "keyword,zipcode,domain,rank,visibility,traffic\n\
            k,10001,a.com,1,0.5,10\n\
            k,10002,a.com,0,0.5,10\n";
        let err = parse_ad_records(input.as_bytes()).unwrap_err();
        match err {
            IngestError::Row { line, column, message } => {
                assert_eq!(line, 3);
                assert_eq!(column, "rank");
                assert_eq!(message, "rank must be ≥ 1");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn rejects_short_zipcode() {
        let input = "keyword,zipcode,domain,rank,visibility,traffic\nk,1001,a.com,1,0.5,10\n";
        let err = parse_ad_records(input.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("zipcode must be 5 digits"), "{err}");
    }

    #[test]
    fn preserves_leading_zero_zipcodes() {
        let input = "keyword,zipcode,domain,rank,visibility,traffic\nk,01001,a.com,1,0.5,10\n";
        let records = parse_ad_records(input.as_bytes()).unwrap();
        assert_eq!(records[0].zipcode.as_str(), "01001");
    }

    #[test]
    fn rejects_duplicate_triple() {
        let input = "keyword,zipcode,domain,rank,visibility,traffic\n\
            k,10001,a.com,1,0.5,10\n\
            k,10001,a.com,2,0.6,20\n";
        let err = parse_ad_records(input.as_bytes()).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("duplicate record"), "{text}");
        assert!(text.contains("(k, 10001, a.com)"), "{text}");
    }

    #[test]
    fn rejects_nonfinite_traffic() {
        let input = "keyword,zipcode,domain,rank,visibility,traffic\nk,10001,a.com,1,0.5,NaN\n";
        assert!(parse_ad_records(input.as_bytes()).is_err());
    }

    #[test]
    fn empty_ads_table_is_an_error() {
        let header_only = "keyword,zipcode,domain,rank,visibility,traffic\n";
        assert!(matches!(
            parse_ad_records(header_only.as_bytes()),
            Err(IngestError::NoRecords)
        ));
        assert!(matches!(parse_ad_records(&b""[..]), Err(IngestError::NoRecords)));
    }

    #[test]
    fn wrong_ads_header_is_an_error() {
        let input = "kw,zipcode,domain,rank,visibility,traffic\nk,10001,a.com,1,0.5,10\n";
        assert!(matches!(parse_ad_records(input.as_bytes()), Err(IngestError::Header { .. })));
    }

    #[test]
    fn parses_demographics_with_remainder() {
        let rows = parse_demographics(DEMOS.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        let first = &rows[0];
        // 10000 - (4500 + 1900 + 1200 + 100 + 50) = 2250 other/redacted
        assert_eq!(first.total - first.tracked_sum(), 2250);
    }

    #[test]
    fn rejects_category_sum_over_total() {
        let input = "zipcode,total,white,black,asian,american_indian,pacific_islander\n\
            10001,5000,6000,0,0,0,0\n";
        let err = parse_demographics(input.as_bytes()).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("category sum exceeds total"), "{text}");
        assert!(text.contains("10001"), "{text}");
    }

    #[test]
    fn empty_demographics_is_an_error() {
        let header_only = "zipcode,total,white,black,asian,american_indian,pacific_islander\n";
        assert!(matches!(
            parse_demographics(header_only.as_bytes()),
            Err(IngestError::NoDemographics)
        ));
    }

    #[test]
    fn rejects_duplicate_demographics_zipcode() {
        let input = "zipcode,total,white,black,asian,american_indian,pacific_islander\n\
            10001,100,10,10,10,0,0\n\
            10001,200,20,20,20,0,0\n";
        assert!(matches!(
            parse_demographics(input.as_bytes()),
            Err(IngestError::DuplicateZipcode { line: 3, .. })
        ));
    }

    #[test]
    fn validate_clean_dataset_has_empty_report() {
        let records = parse_ad_records(ADS.as_bytes()).unwrap();
        let demos = parse_demographics(DEMOS.as_bytes()).unwrap();
        let (dataset, report) = validate_dataset(records, demos, ValidationMode::Strict).unwrap();
        assert!(report.is_empty());
        assert_eq!(dataset.zipcodes().len(), 2);
        assert_eq!(dataset.keywords().len(), 1);
    }

    #[test]
    fn strict_mode_fails_on_uncovered_zipcode() {
        let input = "keyword,zipcode,domain,rank,visibility,traffic\n\
            k,10001,a.com,1,0.5,10\n\
            k,11430,a.com,1,0.5,10\n";
        let records = parse_ad_records(input.as_bytes()).unwrap();
        let demos = parse_demographics(DEMOS.as_bytes()).unwrap();
        let err = validate_dataset(records, demos, ValidationMode::Strict).unwrap_err();
        match err {
            IngestError::MissingDemographics(zips) => {
                assert_eq!(zips, vec![Zipcode::parse("11430").unwrap()]);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn permissive_mode_drops_and_reports() {
        let input = "keyword,zipcode,domain,rank,visibility,traffic\n\
            k,10001,a.com,1,0.5,10\n\
            k,11430,a.com,1,0.5,10\n\
            k,11430,b.com,1,0.5,10\n";
        let records = parse_ad_records(input.as_bytes()).unwrap();
        let demos = parse_demographics(DEMOS.as_bytes()).unwrap();
        let (dataset, report) =
            validate_dataset(records, demos, ValidationMode::Permissive).unwrap();
        assert_eq!(report.dropped_records, 2);
        assert_eq!(report.missing_demographics.len(), 1);
        assert_eq!(report.unused_demographics.len(), 1); // 10002 has no records
        assert_eq!(dataset.records().len(), 1);
        assert!(!dataset.zipcodes().contains(&Zipcode::parse("11430").unwrap()));
    }

    #[test]
    fn csv_round_trip_preserves_dataset() {
        let records = parse_ad_records(ADS.as_bytes()).unwrap();
        let demos = parse_demographics(DEMOS.as_bytes()).unwrap();
        let (dataset, _) =
            validate_dataset(records, demos, ValidationMode::Strict).unwrap();

        let mut ads_out = Vec::new();
        write_ad_records(dataset.records(), &mut ads_out).unwrap();
        let mut demos_out = Vec::new();
        write_demographics(dataset.demographics().values(), &mut demos_out).unwrap();

        let records2 = parse_ad_records(ads_out.as_slice()).unwrap();
        let demos2 = parse_demographics(demos_out.as_slice()).unwrap();
        let (dataset2, _) = validate_dataset(records2, demos2, ValidationMode::Strict).unwrap();
        assert_eq!(dataset, dataset2);
    }
}
