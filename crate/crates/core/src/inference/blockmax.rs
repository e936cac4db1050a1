//! Block maxima of dated series, restricted to a set of calendar months.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockRule {
    #[default]
    Month,
    Year,
}

/// (year, month); month is `None` for yearly blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct BlockKey {
    pub year: i32,
    pub month: Option<u32>,
}

impl std::fmt::Display for BlockKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.month {
            Some(m) => write!(f, "{:04}-{:02}", self.year, m),
            None => write!(f, "{:04}", self.year),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockMaxima {
    pub blocks: Vec<BlockKey>,
    /// One column per input series, one row per retained block.
    pub columns: Vec<Vec<f64>>,
    /// Blocks with a series that has no finite value in them.
    pub dropped: usize,
}

/// ISO-8601 date (`2001-09-30`) or date-time (`2001-09-30T12:00:00`,
/// `2001-09-30 12:00:00`).
pub fn parse_date(s: &str) -> Result<NaiveDate> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t.date());
        }
    }
    if let Ok(t) = chrono::DateTime::parse_from_rfc3339(s) {
        return Ok(t.date_naive());
    }
    Err(Error::domain(format!("cannot parse `{s}` as an ISO-8601 date")))
}

/// Month numbers from names or numbers (`sep`, `September`, `9`).
pub fn parse_month(s: &str) -> Result<u32> {
    let t = s.trim().to_ascii_lowercase();
    if let Ok(m) = t.parse::<u32>() {
        if (1..=12).contains(&m) {
            return Ok(m);
        }
    }
    const NAMES: [&str; 12] = ["jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec"];
    if t.len() >= 3 {
        if let Some(i) = NAMES.iter().position(|n| t.starts_with(n)) {
            return Ok(i as u32 + 1);
        }
    }
    Err(Error::domain(format!("`{s}` is not a month")))
}

/// Per-block maxima of each column over the dates whose month is in
/// `months`. Non-finite values are treated as missing.
pub fn block_maxima(dates: &[NaiveDate], columns: &[Vec<f64>], months: &BTreeSet<u32>, rule: BlockRule) -> Result<BlockMaxima> {
    if months.is_empty() {
        return Err(Error::domain("the month filter is empty"));
    }
    if let Some(m) = months.iter().find(|m| !(1..=12).contains(*m)) {
        return Err(Error::domain(format!("month {m} is out of range")));
    }
    for c in columns {
        crate::error::check_dim(dates.len(), c.len())?;
    }
    let mut acc: BTreeMap<BlockKey, Vec<f64>> = BTreeMap::new();
    for (r, d) in dates.iter().enumerate() {
        if !months.contains(&d.month()) {
            continue;
        }
        let key = BlockKey { year: d.year(), month: (rule == BlockRule::Month).then_some(d.month()) };
        let slot = acc.entry(key).or_insert_with(|| vec![f64::NEG_INFINITY; columns.len()]);
        for (s, c) in slot.iter_mut().zip(columns) {
            if c[r].is_finite() && c[r] > *s {
                *s = c[r];
            }
        }
    }
    if acc.is_empty() {
        return Err(Error::domain("no observation falls in the selected months"));
    }
    let mut out = BlockMaxima { blocks: Vec::new(), columns: vec![Vec::new(); columns.len()], dropped: 0 };
    for (k, v) in acc {
        if v.iter().any(|x| !x.is_finite()) {
            out.dropped += 1;
            continue;
        }
        out.blocks.push(k);
        for (c, x) in out.columns.iter_mut().zip(v) {
            c.push(x);
        }
    }
    Ok(out)
}
