//! Cross-entropy difference ranking of bitext pairs and the random baseline sample.
//!
//! For the formal target style a pair scores `H_formal(tgt) - H_informal(tgt)`;
//! the informal score is its negation. Lower is closer to the target style.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ngram::NGramModel;
use crate::style::Style;
use crate::textproc::TokenSeq;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitextPair {
    pub id: u64,
    /// Foreign side.
    pub src: TokenSeq,
    /// English side.
    pub tgt: TokenSeq,
}

impl BitextPair {
    pub fn new(id: u64, src: TokenSeq, tgt: TokenSeq) -> Result<Self> {
        if src.is_empty() || tgt.is_empty() {
            return Err(Error::Argument(format!("bitext pair {id} has an empty side")));
        }
        Ok(BitextPair { id, src, tgt })
    }
}

/// Builds pairs from two aligned sides; ids are 1-based line numbers. Pairs
/// with an empty side are skipped.
pub fn zip_bitext(src: Vec<TokenSeq>, tgt: Vec<TokenSeq>) -> Result<Vec<BitextPair>> {
    if src.len() != tgt.len() {
        return Err(Error::Misaligned {
            index: src.len().min(tgt.len()),
        });
    }
    let pairs: Vec<BitextPair> = src
        .into_iter()
        .zip(tgt)
        .enumerate()
        .filter(|(_, (s, t))| !s.is_empty() && !t.is_empty())
        .map(|(i, (s, t))| BitextPair {
            id: i as u64 + 1,
            src: s,
            tgt: t,
        })
        .collect();
    Ok(pairs)
}

/// Drops pairs whose English side already occurred, keeping the first.
pub fn dedup_by_target(pairs: Vec<BitextPair>) -> Vec<BitextPair> {
    let mut seen = HashSet::new();
    pairs
        .into_iter()
        .filter(|p| seen.insert(p.tgt.clone()))
        .collect()
}

/// The two style language models CED compares against.
#[derive(Debug, Clone)]
pub struct StyleLms {
    pub formal: NGramModel,
    pub informal: NGramModel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CedScore {
    pub id: u64,
    pub score: f64,
}

pub fn ced_score(lms: &StyleLms, pair: &BitextPair, target: Style) -> CedScore {
    let diff = lms.formal.cross_entropy(&pair.tgt) - lms.informal.cross_entropy(&pair.tgt);
    let score = match target {
        Style::Formal => diff,
        Style::Informal => -diff,
    };
    CedScore { id: pair.id, score }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleKind {
    Formal,
    Informal,
    Random,
}

impl SampleKind {
    pub fn style(self) -> Option<Style> {
        match self {
            SampleKind::Formal => Some(Style::Formal),
            SampleKind::Informal => Some(Style::Informal),
            SampleKind::Random => None,
        }
    }
}

impl From<Style> for SampleKind {
    fn from(s: Style) -> Self {
        match s {
            Style::Formal => SampleKind::Formal,
            Style::Informal => SampleKind::Informal,
        }
    }
}

impl fmt::Display for SampleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleKind::Formal => "formal",
            SampleKind::Informal => "informal",
            SampleKind::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StyleSample {
    pub style: SampleKind,
    pub pairs: Vec<BitextPair>,
    /// CED score per pair; `None` for random samples.
    pub scores: Vec<Option<f64>>,
    pub requested: usize,
    /// Set when fewer than `requested` pairs were available.
    pub truncated: bool,
}

impl StyleSample {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.pairs.iter().map(|p| p.id).collect()
    }

    /// Tab-separated `id, score, style` lines, one per selected pair.
    pub fn write_manifest<W: Write>(&self, mut w: W) -> Result<()> {
        for (p, s) in self.pairs.iter().zip(&self.scores) {
            match s {
                Some(s) => writeln!(w, "{}\t{s:?}\t{}", p.id, self.style)?,
                None => writeln!(w, "{}\t-\t{}", p.id, self.style)?,
            }
        }
        Ok(())
    }
}

/// Heap entry ordered by (score, id); the heap keeps the N smallest.
struct Ranked {
    score: f64,
    pair: BitextPair,
}

impl Ranked {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then(self.pair.id.cmp(&other.pair.id))
    }
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

struct TopN {
    n: usize,
    heap: BinaryHeap<Ranked>,
}

impl TopN {
    fn new(n: usize) -> Self {
        TopN {
            n,
            heap: BinaryHeap::with_capacity(n + 1),
        }
    }

    fn offer(&mut self, item: Ranked) {
        if self.heap.len() < self.n {
            self.heap.push(item);
        } else if let Some(worst) = self.heap.peek() {
            if item < *worst {
                self.heap.pop();
                self.heap.push(item);
            }
        }
    }

    fn merge(mut self, other: TopN) -> TopN {
        for item in other.heap {
            self.offer(item);
        }
        self
    }

    fn into_sorted(self) -> Vec<Ranked> {
        self.heap.into_sorted_vec()
    }
}

fn finish(style: Style, requested: usize, seen: usize, top: TopN) -> StyleSample {
    let (pairs, scores) = top
        .into_sorted()
        .into_iter()
        .map(|r| (r.pair, Some(r.score)))
        .unzip();
    StyleSample {
        style: style.into(),
        pairs,
        scores,
        requested,
        truncated: seen < requested,
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Argument("sample size must be at least 1".into()));
    }
    Ok(())
}

/// Keeps the `n` pairs with the smallest CED for `style`, using a bounded heap
/// so the pool is never held in memory. Ties go to the smaller id.
pub fn ced_rank_select<I>(bitext: I, lms: &StyleLms, n: usize, style: Style) -> Result<StyleSample>
where
    I: IntoIterator<Item = BitextPair>,
{
    check_n(n)?;
    let mut ids = HashSet::new();
    let mut top = TopN::new(n);
    let mut seen = 0;
    for pair in bitext {
        if !ids.insert(pair.id) {
            return Err(Error::Argument(format!("duplicate bitext id {}", pair.id)));
        }
        seen += 1;
        let score = ced_score(lms, &pair, style).score;
        top.offer(Ranked { score, pair });
    }
    if seen < n {
        log::warn!("requested {n} {style} pairs but the pool holds only {seen}");
    }
    Ok(finish(style, n, seen, top))
}

/// Same selection as [`ced_rank_select`], scoring shards in parallel and
/// merging the per-shard heaps.
pub fn ced_rank_select_parallel(
    bitext: &[BitextPair],
    lms: &StyleLms,
    n: usize,
    style: Style,
) -> Result<StyleSample> {
    check_n(n)?;
    let mut ids = HashSet::with_capacity(bitext.len());
    if let Some(dup) = bitext.iter().find(|p| !ids.insert(p.id)) {
        return Err(Error::Argument(format!("duplicate bitext id {}", dup.id)));
    }
    let top = bitext
        .par_chunks(4096)
        .map(|chunk| {
            let mut top = TopN::new(n);
            for pair in chunk {
                let score = ced_score(lms, pair, style).score;
                top.offer(Ranked {
                    score,
                    pair: pair.clone(),
                });
            }
            top
        })
        .reduce(|| TopN::new(n), TopN::merge);
    Ok(finish(style, n, bitext.len(), top))
}

/// Uniform sample without replacement; the returned order is also random.
pub fn random_select(bitext: &[BitextPair], n: usize, seed: u64) -> Result<StyleSample> {
    check_n(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = n.min(bitext.len());
    let pairs: Vec<BitextPair> = rand::seq::index::sample(&mut rng, bitext.len(), take)
        .into_iter()
        .map(|i| bitext[i].clone())
        .collect();
    Ok(StyleSample {
        style: SampleKind::Random,
        scores: vec![None; pairs.len()],
        pairs,
        requested: n,
        truncated: bitext.len() < n,
    })
}
