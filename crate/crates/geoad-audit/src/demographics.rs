//! Demographic vectors, region baselines and normalized three-category
//! shares.
//!
//! All shares are expressed over the three tracked categories (white, black,
//! asian). An `Absolute` share divides by the total population including
//! untracked categories; a `Relative` share renormalizes so the three
//! components sum to 1.

use thiserror::Error;

use crate::ingest::ZipDemographics;

/// Tracked-category population counts plus the all-category total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DemographicVector {
    pub white: u64,
    pub black: u64,
    pub asian: u64,
    /// Includes every racial category, tracked or not.
    pub total: u64,
}

impl DemographicVector {
    pub fn add(&self, other: &DemographicVector) -> DemographicVector {
        DemographicVector {
            white: self.white + other.white,
            black: self.black + other.black,
            asian: self.asian + other.asian,
            total: self.total + other.total,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShareMode {
    /// Components divided by the all-category total; they sum to ≤ 1.
    Absolute,
    /// Components renormalized over the three tracked categories; they sum
    /// to 1.
    Relative,
}

/// Population shares for the three tracked categories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShareVector {
    pub white: f64,
    pub black: f64,
    pub asian: f64,
    pub mode: ShareMode,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum DemographicsError {
    #[error("empty region")]
    EmptyRegion,
    #[error("no tracked population")]
    NoTrackedPopulation,
}

/// Projects a demographics row onto the three tracked categories.
pub fn demographic_vector(zip: &ZipDemographics) -> DemographicVector {
    DemographicVector {
        white: zip.white,
        black: zip.black,
        asian: zip.asian,
        total: zip.total,
    }
}

/// Population-weighted absolute shares over a set of zipcodes: raw counts
/// are summed first, then divided by the summed total.
pub fn region_baseline<'a, I>(demographics: I) -> Result<ShareVector, DemographicsError>
where
    I: IntoIterator<Item = &'a ZipDemographics>,
{
    let mut sum = DemographicVector::default();
    for row in demographics {
        sum = sum.add(&demographic_vector(row));
    }
    share_of_counts(&sum)
}

/// Absolute shares of an already-summed count vector.
pub fn share_of_counts(counts: &DemographicVector) -> Result<ShareVector, DemographicsError> {
    if counts.total == 0 {
        return Err(DemographicsError::EmptyRegion);
    }
    let total = counts.total as f64;
    Ok(ShareVector {
        white: counts.white as f64 / total,
        black: counts.black as f64 / total,
        asian: counts.asian as f64 / total,
        mode: ShareMode::Absolute,
    })
}

/// Renormalizes shares over the three tracked categories so they sum to 1.
/// Idempotent on already-relative vectors.
pub fn relative_shares(v: &ShareVector) -> Result<ShareVector, DemographicsError> {
    let sum = v.white + v.black + v.asian;
    if sum <= 0.0 {
        return Err(DemographicsError::NoTrackedPopulation);
    }
    Ok(ShareVector {
        white: v.white / sum,
        black: v.black / sum,
        asian: v.asian / sum,
        mode: ShareMode::Relative,
    })
}
