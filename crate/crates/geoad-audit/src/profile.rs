//! Per-domain target-demographic profiles: which zipcodes a domain bids
//! hardest on, the summed demographics of that top set, divergence against
//! the region baseline, and ternary-diagram coordinates.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::demographics::{
    demographic_vector, relative_shares, share_of_counts, DemographicVector, DemographicsError,
    ShareVector,
};
use crate::ingest::{Dataset, ZipDemographics, Zipcode};

/// Which score column orders a domain's zipcodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankBy {
    #[default]
    Visibility,
    Traffic,
}

/// Per-category ratios of profile share to baseline share; > 1 means the
/// domain over-targets that category relative to the region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Divergence {
    pub white: f64,
    pub black: f64,
    pub asian: f64,
}

/// A domain's audited target profile for one keyword.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainProfile {
    pub domain: String,
    pub keyword: String,
    /// Requested cutoff; `top_zipcodes` may be shorter (see `shortfall`).
    pub theta: usize,
    /// (zipcode, rank) with rank 1 = highest score.
    pub top_zipcodes: Vec<(Zipcode, u32)>,
    /// True when the domain appears in fewer than `theta` zipcodes.
    pub shortfall: bool,
    /// Summed demographics over the top zipcodes.
    pub counts: DemographicVector,
    pub profile_absolute: ShareVector,
    pub profile_relative: ShareVector,
    pub divergence: Divergence,
    /// Baseline-centered ternary coordinates.
    pub ternary: (f64, f64),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProfileError {
    #[error("unknown keyword `{0}`")]
    UnknownKeyword(String),
    #[error("domain `{domain}` has no records for keyword `{keyword}`")]
    UnknownDomain { keyword: String, domain: String },
    #[error("theta must be ≥ 1")]
    ZeroTheta,
    #[error("no demographics for zipcode {0}")]
    MissingDemographics(Zipcode),
    #[error("empty target population")]
    EmptyTargetPopulation,
    #[error("empty region")]
    EmptyRegion,
    #[error("no tracked population")]
    NoTrackedPopulation,
    #[error("baseline {category} share is zero")]
    ZeroBaselineComponent { category: &'static str },
}

impl From<DemographicsError> for ProfileError {
    fn from(err: DemographicsError) -> Self {
        match err {
            DemographicsError::EmptyRegion => ProfileError::EmptyRegion,
            DemographicsError::NoTrackedPopulation => ProfileError::NoTrackedPopulation,
        }
    }
}

/// Zipcodes where a domain appears for a keyword, sorted by score
/// descending; ties break lexicographically by zipcode. Rank 1 is the
/// first entry.
pub fn rank_zipcodes(
    dataset: &Dataset,
    keyword: &str,
    domain: &str,
) -> Result<Vec<(Zipcode, f64)>, ProfileError> {
    rank_zipcodes_by(dataset, keyword, domain, RankBy::Visibility)
}

pub fn rank_zipcodes_by(
    dataset: &Dataset,
    keyword: &str,
    domain: &str,
    rank_by: RankBy,
) -> Result<Vec<(Zipcode, f64)>, ProfileError> {
    if !dataset.has_keyword(keyword) {
        return Err(ProfileError::UnknownKeyword(keyword.to_string()));
    }
    let mut scored: Vec<(Zipcode, f64)> = dataset
        .records_for_keyword_domain(keyword, domain)
        .map(|r| {
            let score = match rank_by {
                RankBy::Visibility => r.visibility,
                RankBy::Traffic => r.traffic,
            };
            (r.zipcode, score)
        })
        .collect();
    if scored.is_empty() {
        return Err(ProfileError::UnknownDomain {
            keyword: keyword.to_string(),
            domain: domain.to_string(),
        });
    }
    // Scores are validated finite at ingest, so the ordering is total.
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(scored)
}

/// The top-θ slice of a ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct TopZipcodes {
    pub zipcodes: Vec<Zipcode>,
    /// True when the ranking held fewer than θ zipcodes.
    pub shortfall: bool,
}

pub fn top_zipcodes(
    ranking: &[(Zipcode, f64)],
    theta: usize,
) -> Result<TopZipcodes, ProfileError> {
    if theta == 0 {
        return Err(ProfileError::ZeroTheta);
    }
    let take = theta.min(ranking.len());
    Ok(TopZipcodes {
        zipcodes: ranking[..take].iter().map(|&(z, _)| z).collect(),
        shortfall: ranking.len() < theta,
    })
}

/// Component-wise demographic sum over a zipcode set, total included.
pub fn target_counts(
    zipcodes: &[Zipcode],
    demographics: &BTreeMap<Zipcode, ZipDemographics>,
) -> Result<DemographicVector, ProfileError> {
    let mut sum = DemographicVector::default();
    for &zipcode in zipcodes {
        let row = demographics
            .get(&zipcode)
            .ok_or(ProfileError::MissingDemographics(zipcode))?;
        sum = sum.add(&demographic_vector(row));
    }
    Ok(sum)
}

/// Absolute target shares: each tracked count divided by the all-category
/// total population of the top set.
pub fn target_profile(counts: &DemographicVector) -> Result<ShareVector, ProfileError> {
    share_of_counts(counts).map_err(|_| ProfileError::EmptyTargetPopulation)
}

/// Per-category ratio of profile share to baseline share.
pub fn divergence_ratios(
    profile: &ShareVector,
    baseline: &ShareVector,
) -> Result<Divergence, ProfileError> {
    for (category, share) in [
        ("white", baseline.white),
        ("black", baseline.black),
        ("asian", baseline.asian),
    ] {
        if share <= 0.0 {
            return Err(ProfileError::ZeroBaselineComponent { category });
        }
    }
    Ok(Divergence {
        white: profile.white / baseline.white,
        black: profile.black / baseline.black,
        asian: profile.asian / baseline.asian,
    })
}

/// Maps three-category shares onto the ternary triangle with corners
/// Asian = (0, 0), White = (1, 0), Black = (0.5, √3/2).
///
/// In centered mode each relative share is divided by the matching baseline
/// share and renormalized, which places the baseline itself exactly at the
/// centroid (0.5, √3/6).
pub fn ternary_coordinates(
    profile: &ShareVector,
    baseline: &ShareVector,
    centered: bool,
) -> Result<(f64, f64), ProfileError> {
    let relative = relative_shares(profile)?;
    let (white, black) = if centered {
        for (category, share) in [
            ("white", baseline.white),
            ("black", baseline.black),
            ("asian", baseline.asian),
        ] {
            if share <= 0.0 {
                return Err(ProfileError::ZeroBaselineComponent { category });
            }
        }
        let white = relative.white / baseline.white;
        let black = relative.black / baseline.black;
        let asian = relative.asian / baseline.asian;
        let sum = white + black + asian;
        (white / sum, black / sum)
    } else {
        (relative.white, relative.black)
    };
    let x = white + 0.5 * black;
    let y = (3.0_f64.sqrt() / 2.0) * black;
    Ok((x, y))
}

/// Builds the full profile of one domain: rank, slice the top θ, sum
/// demographics, normalize, compare to the baseline, and place on the
/// centered ternary diagram.
pub fn domain_profile(
    dataset: &Dataset,
    keyword: &str,
    domain: &str,
    theta: usize,
    baseline: &ShareVector,
    rank_by: RankBy,
) -> Result<DomainProfile, ProfileError> {
    let ranking = rank_zipcodes_by(dataset, keyword, domain, rank_by)?;
    let top = top_zipcodes(&ranking, theta)?;
    let counts = target_counts(&top.zipcodes, dataset.demographics())?;
    let profile_absolute = target_profile(&counts)?;
    let profile_relative = relative_shares(&profile_absolute)?;
    let divergence = divergence_ratios(&profile_absolute, baseline)?;
    let ternary = ternary_coordinates(&profile_absolute, baseline, true)?;
    Ok(DomainProfile {
        domain: domain.to_string(),
        keyword: keyword.to_string(),
        theta,
        top_zipcodes: top
            .zipcodes
            .iter()
            .enumerate()
            .map(|(i, &z)| (z, (i + 1) as u32))
            .collect(),
        shortfall: top.shortfall,
        counts,
        profile_absolute,
        profile_relative,
        divergence,
        ternary,
    })
}

/// Profiles every domain bidding on a keyword, sorted by domain name.
/// Domains are independent, so they are evaluated in parallel when the
/// `parallel` feature is on; the output order is fixed either way.
pub fn keyword_profiles(
    dataset: &Dataset,
    keyword: &str,
    theta: usize,
    baseline: &ShareVector,
    rank_by: RankBy,
) -> Result<Vec<DomainProfile>, ProfileError> {
    if !dataset.has_keyword(keyword) {
        return Err(ProfileError::UnknownKeyword(keyword.to_string()));
    }
    let domains = dataset.domains_for_keyword(keyword);

    #[cfg(feature = "parallel")]
    let results: Vec<Result<DomainProfile, ProfileError>> = {
        use rayon::prelude::*;
        domains
            .par_iter()
            .map(|domain| domain_profile(dataset, keyword, domain, theta, baseline, rank_by))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<DomainProfile, ProfileError>> = domains
        .iter()
        .map(|domain| domain_profile(dataset, keyword, domain, theta, baseline, rank_by))
        .collect();

    // Surface the first failure in domain order regardless of scheduling.
    results.into_iter().collect()
}

/// One entry of a per-category domain ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedDomain {
    pub domain: String,
    pub share: f64,
    pub shortfall: bool,
}

/// The top-n domain lists per tracked category.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryTopDomains {
    pub white: Vec<RankedDomain>,
    pub black: Vec<RankedDomain>,
    pub asian: Vec<RankedDomain>,
}

/// For each category, the n domains with the highest absolute profile
/// share; ties break by domain name. Shortfall domains stay in, marked.
pub fn top_domains_by_category(
    dataset: &Dataset,
    keyword: &str,
    theta: usize,
    n: usize,
) -> Result<CategoryTopDomains, ProfileError> {
    let baseline = crate::demographics::region_baseline(dataset.demographics().values())?;
    let profiles = keyword_profiles(dataset, keyword, theta, &baseline, RankBy::Visibility)?;

    let ranked = |share_of: fn(&DomainProfile) -> f64| -> Vec<RankedDomain> {
        let mut order: Vec<&DomainProfile> = profiles.iter().collect();
        order.sort_by(|a, b| {
            share_of(b)
                .partial_cmp(&share_of(a))
                .unwrap()
                .then_with(|| a.domain.cmp(&b.domain))
        });
        order
            .into_iter()
            .take(n)
            .map(|p| RankedDomain {
                domain: p.domain.clone(),
                share: share_of(p),
                shortfall: p.shortfall,
            })
            .collect()
    };

    Ok(CategoryTopDomains {
        white: ranked(|p| p.profile_absolute.white),
        black: ranked(|p| p.profile_absolute.black),
        asian: ranked(|p| p.profile_absolute.asian),
    })
}
