//! Per-sample count annotations and their histograms.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};

/// Default additive smoothing applied before binning.
pub const DEFAULT_BETA: u64 = 1;

/// Ground-truth people count for one sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRecord {
    pub id: String,
    pub count: u64,
}

impl CountRecord {
    pub fn new(id: impl Into<String>, count: u64) -> Self {
        Self {
            id: id.into(),
            count,
        }
    }
}

/// Parses CSV text with the header `id,count` into records, preserving row order.
///
/// Counts must be non-negative integers and ids unique. Errors name the
/// 1-based line of the offending row.
pub fn ingest_counts(text: &str) -> Result<Vec<CountRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());

    let mut rows = reader.records();
    match rows.next() {
        Some(Ok(header)) if header.len() == 2 && &header[0] == "id" && &header[1] == "count" => {}
        Some(Ok(_)) => {
            return Err(Error::Parse {
                line: 1,
                message: "expected header `id,count`".into(),
            })
        }
        Some(Err(e)) => return Err(csv_error(e)),
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing header `id,count`".into(),
            })
        }
    }

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for row in rows {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 fields, found {}", row.len()),
            });
        }
        let id = row[0].to_string();
        let count = parse_count(&row[1], line)?;
        if !seen.insert(id.clone()) {
            return Err(validation(format!("line {line}: duplicate id `{id}`")));
        }
        records.push(CountRecord { id, count });
    }
    Ok(records)
}

/// Parses a non-negative integer count; negative values are a validation error.
pub(crate) fn parse_count(field: &str, line: u64) -> Result<u64> {
    let value: i64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("`{field}` is not an integer count"),
    })?;
    if value < 0 {
        return Err(validation(format!("line {line}: negative count {value}")));
    }
    Ok(value as u64)
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Frequencies of integer counts over `[0, max_count]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CountHistogram {
    max_count: u64,
    beta: u64,
    freqs: Vec<u64>,
    #[serde(skip)]
    total: u64,
}

impl CountHistogram {
    /// Builds a histogram from raw frequencies indexed by count.
    pub fn from_freqs(freqs: Vec<u64>) -> Result<Self> {
        Self::with_beta(freqs, 0)
    }

    fn with_beta(freqs: Vec<u64>, beta: u64) -> Result<Self> {
        if freqs.is_empty() {
            return Err(validation("histogram needs at least one count cell"));
        }
        let total = freqs.iter().sum();
        Ok(Self {
            max_count: freqs.len() as u64 - 1,
            beta,
            freqs,
            total,
        })
    }

    pub fn max_count(&self) -> u64 {
        self.max_count
    }

    pub fn freqs(&self) -> &[u64] {
        &self.freqs
    }

    pub fn beta(&self) -> u64 {
        self.beta
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Counts with non-zero frequency, ascending. These are the cells a
    /// partition may start a bin at.
    pub fn occupied(&self) -> Vec<u64> {
        self.freqs
            .iter()
            .enumerate()
            .filter(|(_, &f)| f > 0)
            .map(|(c, _)| c as u64)
            .collect()
    }

    /// Adds `beta` to every cell of `[0, C]`.
    pub fn smooth(&self, beta: u64) -> Self {
        let freqs = self.freqs.iter().map(|f| f + beta).collect();
        Self {
            max_count: self.max_count,
            beta: self.beta + beta,
            freqs,
            total: self.total + beta * (self.max_count + 1),
        }
    }
}

impl<'de> Deserialize<'de> for CountHistogram {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            max_count: u64,
            beta: u64,
            freqs: Vec<u64>,
        }
        let raw = Raw::deserialize(deserializer)?;
        if raw.freqs.len() as u64 != raw.max_count + 1 {
            return Err(serde::de::Error::custom(format!(
                "freqs has {} entries, expected max_count + 1 = {}",
                raw.freqs.len(),
                raw.max_count + 1
            )));
        }
        if raw.freqs.iter().any(|&f| f < raw.beta) {
            return Err(serde::de::Error::custom("a cell is below the recorded smoothing beta"));
        }
        CountHistogram::with_beta(raw.freqs, raw.beta).map_err(serde::de::Error::custom)
    }
}

/// Tallies record counts into a histogram over `[0, C]`, where `C` is the
/// largest observed count or `max_count_override` when that is larger.
pub fn build_histogram(
    records: &[CountRecord],
    max_count_override: Option<u64>,
) -> Result<CountHistogram> {
    let observed = records.iter().map(|r| r.count).max();
    let max_count = match (observed, max_count_override) {
        (None, None) => return Err(Error::Empty("no records to build a histogram from")),
        (Some(obs), Some(c)) if c < obs => {
            return Err(validation(format!(
                "max count override {c} is below the largest observed count {obs}"
            )))
        }
        (_, Some(c)) => c,
        (Some(obs), None) => obs,
    };
    let len = usize::try_from(max_count)
        .ok()
        .and_then(|c| c.checked_add(1))
        .ok_or_else(|| validation(format!("max count {max_count} is too large")))?;
    let mut freqs = vec![0u64; len];
    for r in records {
        freqs[r.count as usize] += 1;
    }
    CountHistogram::from_freqs(freqs)
}
