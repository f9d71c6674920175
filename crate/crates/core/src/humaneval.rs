//! Crowd judgment aggregation: orientation recovery for randomly swapped
//! pairs and the trust-weighted mean `Σ score·trust / Σ trust`.
//!
//! Trusts and aggregates are exact rationals so that the weighted mean is
//! unaffected by rounding; decimal trusts in the TSV input are parsed exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TRUST_FLOOR: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Formality,
    Fluency,
    Meaning,
}

impl Criterion {
    pub fn range(self) -> (i32, i32) {
        match self {
            Criterion::Formality | Criterion::Fluency => (-2, 2),
            Criterion::Meaning => (0, 3),
        }
    }

    /// Pairwise criteria whose sign depends on presentation order.
    pub fn is_directed(self) -> bool {
        !matches!(self, Criterion::Meaning)
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Formality => "formality",
            Criterion::Fluency => "fluency",
            Criterion::Meaning => "meaning",
        })
    }
}

impl FromStr for Criterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "formality" => Ok(Criterion::Formality),
            "fluency" => Ok(Criterion::Fluency),
            "meaning" => Ok(Criterion::Meaning),
            _ => Err(Error::Argument(format!("unknown criterion {s:?}"))),
        }
    }
}

/// The decimal a float was written as: the shortest string that round-trips
/// it, so `0.7` becomes exactly 7/10.
pub fn rational_from_f64(v: f64) -> Option<BigRational> {
    if !v.is_finite() {
        return None;
    }
    parse_decimal(&format!("{v}"))
}

/// Parses a plain decimal (`0.75`, `1`, `.5`) into an exact rational.
pub fn parse_decimal(s: &str) -> Option<BigRational> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
        // Exponent forms and the like fall back to the exact binary value.
        let v: f64 = s.parse().ok()?;
        return BigRational::from_float(v);
    }
    let digits = format!("{int}{frac}");
    let num: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    let den = BigInt::from(10u32).pow(frac.len() as u32);
    let r = BigRational::new(num, den);
    Some(if neg { -r } else { r })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Judgment {
    pub item_id: String,
    pub criterion: Criterion,
    pub score: i32,
    pub trust: BigRational,
    pub swapped: bool,
}

impl Judgment {
    pub fn new(item_id: impl Into<String>, criterion: Criterion, score: i32, trust: BigRational, swapped: bool) -> Result<Self> {
        let item_id = item_id.into();
        let (lo, hi) = criterion.range();
        if !(lo..=hi).contains(&score) {
            return Err(Error::Argument(format!(
                "item {item_id}: {criterion} score {score} outside [{lo}, {hi}]"
            )));
        }
        if trust <= BigRational::zero() || trust > BigRational::from_integer(1.into()) {
            return Err(Error::Argument(format!("item {item_id}: trust must lie in (0, 1]")));
        }
        Ok(Judgment {
            item_id,
            criterion,
            score,
            trust,
            swapped,
        })
    }

    /// Convenience constructor taking the trust as a float.
    pub fn with_f64(item_id: impl Into<String>, criterion: Criterion, score: i32, trust: f64, swapped: bool) -> Result<Self> {
        let t = rational_from_f64(trust).ok_or_else(|| Error::Argument(format!("trust {trust} is not finite")))?;
        Judgment::new(item_id, criterion, score, t, swapped)
    }
}

/// Undoes the random presentation swap of a pairwise judgment.
pub fn reorient(j: &Judgment) -> Judgment {
    let mut out = j.clone();
    if j.criterion.is_directed() && j.swapped {
        out.score = -j.score;
        out.swapped = false;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregateScore {
    pub item_id: String,
    pub criterion: Criterion,
    pub value: BigRational,
    pub n_used: usize,
}

impl AggregateScore {
    pub fn value_f64(&self) -> f64 {
        self.value.to_f64().unwrap_or(f64::NAN)
    }
}

/// Trust-weighted mean of the judgments whose trust exceeds `trust_floor`.
/// A `None` floor keeps every judgment.
pub fn aggregate(judgments: &[Judgment], trust_floor: Option<f64>) -> Result<AggregateScore> {
    let first = judgments
        .first()
        .ok_or_else(|| Error::Argument("no judgments to aggregate".into()))?;
    for j in judgments {
        if j.item_id != first.item_id || j.criterion != first.criterion {
            return Err(Error::Argument(format!(
                "cannot aggregate {}/{} with {}/{}",
                first.item_id, first.criterion, j.item_id, j.criterion
            )));
        }
        if j.criterion.is_directed() && j.swapped {
            return Err(Error::Argument(format!("item {}: judgment not reoriented", j.item_id)));
        }
    }
    let floor = match trust_floor {
        Some(f) => Some(rational_from_f64(f).ok_or_else(|| Error::Argument("trust floor must be finite".into()))?),
        None => None,
    };
    let kept: Vec<&Judgment> = judgments
        .iter()
        .filter(|j| floor.as_ref().is_none_or(|f| &j.trust > f))
        .collect();
    if kept.is_empty() {
        return Err(Error::Aggregation {
            item_id: first.item_id.clone(),
        });
    }
    let mut num = BigRational::zero();
    let mut den = BigRational::zero();
    for j in &kept {
        num += &j.trust * BigRational::from_integer(j.score.into());
        den += &j.trust;
    }
    Ok(AggregateScore {
        item_id: first.item_id.clone(),
        criterion: first.criterion,
        value: num / den,
        n_used: kept.len(),
    })
}

/// Reorients, groups by `(item_id, criterion)` and aggregates every group.
pub fn aggregate_all(judgments: &[Judgment], trust_floor: Option<f64>) -> Result<Vec<AggregateScore>> {
    let mut groups: BTreeMap<(&str, Criterion), Vec<Judgment>> = BTreeMap::new();
    for j in judgments {
        groups.entry((&j.item_id, j.criterion)).or_default().push(reorient(j));
    }
    let groups: Vec<Vec<Judgment>> = groups.into_values().collect();
    groups.par_iter().map(|g| aggregate(g, trust_floor)).collect()
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" => Some(false),
        _ => None,
    }
}

/// Reads `item_id, criterion, score, trust, swapped` rows. A header row
/// starting with `item_id` is skipped.
pub fn read_judgments<R: BufRead>(r: R, source_name: &str) -> Result<Vec<Judgment>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() || (line_no == 1 && line.starts_with("item_id")) {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(Error::parse(source_name, line_no, format!("expected 5 fields, found {}", f.len())));
        }
        let criterion: Criterion = f[1].parse().map_err(|e: Error| Error::parse(source_name, line_no, e.to_string()))?;
        let score: i32 = f[2]
            .parse()
            .map_err(|_| Error::parse(source_name, line_no, format!("bad score {:?}", f[2])))?;
        let trust = parse_decimal(f[3]).ok_or_else(|| Error::parse(source_name, line_no, format!("bad trust {:?}", f[3])))?;
        let swapped = parse_bool(f[4]).ok_or_else(|| Error::parse(source_name, line_no, format!("bad swapped flag {:?}", f[4])))?;
        let j = Judgment::new(f[0], criterion, score, trust, swapped)
            .map_err(|e| Error::parse(source_name, line_no, e.to_string()))?;
        out.push(j);
    }
    Ok(out)
}

/// Writes `item_id, criterion, value, n_used` rows; values use the shortest
/// decimal that round-trips the nearest double.
pub fn write_aggregates<W: Write>(scores: &[AggregateScore], mut w: W) -> Result<()> {
    writeln!(w, "item_id\tcriterion\tvalue\tn_used")?;
    for s in scores {
        writeln!(w, "{}\t{}\t{}\t{}", s.item_id, s.criterion, s.value_f64(), s.n_used)?;
    }
    Ok(())
}
