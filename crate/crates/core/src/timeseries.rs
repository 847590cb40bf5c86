//! Time-of-day usage distributions: `P(t) = N(t) / N_total` over fixed-width
//! bins of the local clock.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use chrono::Timelike;

use crate::calendar::{Day, DayClass};
use crate::ingest::UsageEvent;

pub const MINUTES_PER_DAY: u32 = 1440;
pub const DEFAULT_BIN_WIDTH: u32 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Direction {
    Rental,
    Return,
    Combined,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Rental => "rental",
            Direction::Return => "return",
            Direction::Combined => "combined",
        }
    }

    pub fn count(self, event: &UsageEvent) -> u64 {
        match self {
            Direction::Rental => u64::from(event.rentals),
            Direction::Return => u64::from(event.returns),
            Direction::Combined => event.total(),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unrecognised direction, expected rental, return or combined")]
pub struct ParseDirectionError;

impl FromStr for Direction {
    type Err = ParseDirectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rental" | "rentals" => Ok(Direction::Rental),
            "return" | "returns" => Ok(Direction::Return),
            "combined" | "both" => Ok(Direction::Combined),
            _ => Err(ParseDirectionError),
        }
    }
}

/// Which dates a distribution aggregates over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum DayKey {
    Day(Day),
    Class(DayClass),
}

impl DayKey {
    pub fn matches(self, day: Day) -> bool {
        match self {
            DayKey::Day(d) => d == day,
            DayKey::Class(c) => day.class() == c,
        }
    }
}

impl fmt::Display for DayKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DayKey::Day(d) => d.fmt(f),
            DayKey::Class(c) => c.fmt(f),
        }
    }
}

impl FromStr for DayKey {
    type Err = crate::calendar::ParseDayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<Day>()
            .map(DayKey::Day)
            .or_else(|_| s.parse::<DayClass>().map(DayKey::Class))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DistributionError {
    #[error("bin width {0} does not divide 1440 minutes")]
    BadBinWidth(u32),
    #[error("{bins} probabilities do not match bin width {bin_width}")]
    LengthMismatch { bins: usize, bin_width: u32 },
    #[error("distribution set is inconsistent: {0}")]
    Inconsistent(&'static str),
}

/// Normalised usage over time-of-day bins for one (city, day, direction).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DayDistribution {
    pub city: String,
    pub day: DayKey,
    pub direction: Direction,
    pub bin_width: u32,
    /// `N(t)` per bin.
    pub counts: Vec<u64>,
    /// `N(t) / N_total`; all zero when `total_count == 0`.
    pub probs: Vec<f64>,
    pub total_count: u64,
}

impl DayDistribution {
    /// Builds from raw bin counts. Probabilities are derived, never supplied.
    pub fn from_counts(
        city: impl Into<String>,
        day: DayKey,
        direction: Direction,
        bin_width: u32,
        counts: Vec<u64>,
    ) -> Result<Self, DistributionError> {
        let bins = bin_count(bin_width)?;
        if counts.len() != bins {
            return Err(DistributionError::LengthMismatch {
                bins: counts.len(),
                bin_width,
            });
        }
        let total_count: u64 = counts.iter().sum();
        let probs = if total_count == 0 {
            vec![0.0; bins]
        } else {
            let n = total_count as f64;
            counts.iter().map(|&c| c as f64 / n).collect()
        };
        Ok(Self {
            city: city.into(),
            day,
            direction,
            bin_width,
            counts,
            probs,
            total_count,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.total_count == 0
    }

    pub fn bins(&self) -> usize {
        self.probs.len()
    }

    /// Index of the most probable bin (first on ties), `None` when empty.
    pub fn argmax(&self) -> Option<usize> {
        if self.is_empty() {
            return None;
        }
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        Some(best)
    }
}

pub fn bin_count(bin_width: u32) -> Result<usize, DistributionError> {
    if bin_width == 0 || MINUTES_PER_DAY % bin_width != 0 {
        return Err(DistributionError::BadBinWidth(bin_width));
    }
    Ok((MINUTES_PER_DAY / bin_width) as usize)
}

fn bin_of(event: &UsageEvent, bin_width: u32) -> usize {
    let m = event.minute.hour() * 60 + event.minute.minute();
    (m / bin_width) as usize
}

/// Sums the selected direction's counts of all matching events into bins.
/// Events are instantaneous: a trip's duration is never spread across bins.
pub fn build_distribution(
    events: &[UsageEvent],
    city: &str,
    day_filter: DayKey,
    direction: Direction,
    bin_width: u32,
) -> Result<DayDistribution, DistributionError> {
    let mut counts = vec![0u64; bin_count(bin_width)?];
    for e in events {
        if day_filter.matches(Day::of(e.date())) {
            counts[bin_of(e, bin_width)] += direction.count(e);
        }
    }
    DayDistribution::from_counts(city, day_filter, direction, bin_width, counts)
}

/// The 7 days x {rental, return} distributions for one city, keyed and
/// iterated Mon..Sun, rental before return.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSet {
    pub city: String,
    pub bin_width: u32,
    entries: BTreeMap<(Day, Direction), DayDistribution>,
}

impl DistributionSet {
    pub fn get(&self, day: Day, direction: Direction) -> Option<&DayDistribution> {
        self.entries.get(&(day, direction))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(Day, Direction), &DayDistribution)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Reassembles a set from its fourteen per-day rental and return
    /// distributions, in any order.
    pub fn from_distributions(
        city: &str,
        bin_width: u32,
        dists: impl IntoIterator<Item = DayDistribution>,
    ) -> Result<Self, DistributionError> {
        let mut entries = BTreeMap::new();
        for d in dists {
            let DayKey::Day(day) = d.day else {
                return Err(DistributionError::Inconsistent("day-class entry in a per-day set"));
            };
            if d.direction == Direction::Combined {
                return Err(DistributionError::Inconsistent("combined entries are derived, not stored"));
            }
            if d.bin_width != bin_width || d.city != city {
                return Err(DistributionError::Inconsistent("mixed city or bin width"));
            }
            if entries.insert((day, d.direction), d).is_some() {
                return Err(DistributionError::Inconsistent("duplicate (day, direction)"));
            }
        }
        if entries.len() != 14 {
            return Err(DistributionError::Inconsistent("expected 7 days x {rental, return}"));
        }
        Ok(Self { city: city.into(), bin_width, entries })
    }

    /// One day in any direction; `Combined` sums the rental and return counts.
    pub fn day(&self, day: Day, direction: Direction) -> Option<DayDistribution> {
        if direction != Direction::Combined {
            return self.get(day, direction).cloned();
        }
        let (r, t) = (self.get(day, Direction::Rental)?, self.get(day, Direction::Return)?);
        let counts = r.counts.iter().zip(&t.counts).map(|(a, b)| a + b).collect();
        DayDistribution::from_counts(&self.city, DayKey::Day(day), Direction::Combined, self.bin_width, counts).ok()
    }

    /// The seven days in `direction` (including `Combined`), Mon..Sun.
    pub fn week_of(&self, direction: Direction) -> Vec<DayDistribution> {
        Day::ALL.iter().filter_map(|&d| self.day(d, direction)).collect()
    }

    /// The seven per-day distributions for one direction, Mon..Sun.
    pub fn week(&self, direction: Direction) -> Vec<&DayDistribution> {
        Day::ALL
            .iter()
            .filter_map(|&d| self.get(d, direction))
            .collect()
    }
}

/// Single pass over the events filling all fourteen per-day histograms.
pub fn distribution_set(
    events: &[UsageEvent],
    city: &str,
    bin_width: u32,
) -> Result<DistributionSet, DistributionError> {
    let bins = bin_count(bin_width)?;
    let mut rentals = [(); 7].map(|_| vec![0u64; bins]);
    let mut returns = [(); 7].map(|_| vec![0u64; bins]);
    for e in events {
        let d = Day::of(e.date()) as usize;
        let b = bin_of(e, bin_width);
        rentals[d][b] += u64::from(e.rentals);
        returns[d][b] += u64::from(e.returns);
    }
    let mut entries = BTreeMap::new();
    for (day, (r, t)) in Day::ALL.iter().zip(rentals.into_iter().zip(returns)) {
        for (dir, counts) in [(Direction::Rental, r), (Direction::Return, t)] {
            let dist = DayDistribution::from_counts(city, DayKey::Day(*day), dir, bin_width, counts)?;
            entries.insert((*day, dir), dist);
        }
    }
    Ok(DistributionSet {
        city: city.into(),
        bin_width,
        entries,
    })
}
