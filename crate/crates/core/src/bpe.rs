//! Joint byte-pair encoding.
//!
//! Every word starts as its characters followed by a separate end-of-word
//! marker symbol (`low` is `l o w </w>`). Learning repeatedly merges the most
//! frequent adjacent pair; equal frequencies go to the lexicographically
//! smallest `(left, right)` pair, and learning stops early once no pair occurs
//! at least twice. Protected tokens (the style tags) are never counted and
//! never segmented.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::style::StyleTag;
use crate::textproc::TokenSeq;

pub const DEFAULT_MARKER: &str = "</w>";
const VERSION: &str = "0.2";

#[derive(Debug, Clone)]
pub struct BpeConfig {
    pub num_merges: usize,
    pub marker: String,
    pub protected: BTreeSet<String>,
}

impl Default for BpeConfig {
    fn default() -> Self {
        BpeConfig {
            num_merges: 200,
            marker: DEFAULT_MARKER.to_string(),
            protected: StyleTag::ALL.iter().map(|t| t.token().to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpeModel {
    marker: String,
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
    protected: BTreeSet<String>,
}

fn validate_marker(marker: &str) -> Result<()> {
    if marker.is_empty() || marker.chars().any(char::is_whitespace) {
        return Err(Error::Argument(format!("invalid BPE marker {marker:?}")));
    }
    Ok(())
}

/// Fails if any raw token contains the marker string.
pub fn check_ingestion<'a, I>(corpus: I, marker: &str) -> Result<()>
where
    I: IntoIterator<Item = &'a TokenSeq>,
{
    for (i, seq) in corpus.into_iter().enumerate() {
        if let Some(tok) = seq.iter().find(|t| t.contains(marker)) {
            return Err(Error::Argument(format!(
                "sentence {}: token {tok:?} contains the BPE marker {marker:?}",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Interned symbol table used while learning.
#[derive(Default)]
struct Symbols {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Symbols {
    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(s.to_string());
        self.ids.insert(s.to_string(), id);
        id
    }
}

struct Candidate {
    count: u64,
    left: String,
    right: String,
    pair: (u32, u32),
}

impl Candidate {
    fn key_cmp(&self, other: &Self) -> Ordering {
        // Max-heap: higher count first, then the lexicographically smaller pair.
        self.count
            .cmp(&other.count)
            .then_with(|| other.left.cmp(&self.left))
            .then_with(|| other.right.cmp(&self.right))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

fn merge_in_place(word: &mut Vec<u32>, pair: (u32, u32), merged: u32) {
    let mut out = Vec::with_capacity(word.len());
    let mut i = 0;
    while i < word.len() {
        if i + 1 < word.len() && word[i] == pair.0 && word[i + 1] == pair.1 {
            out.push(merged);
            i += 2;
        } else {
            out.push(word[i]);
            i += 1;
        }
    }
    *word = out;
}

/// Word frequencies over all non-protected tokens, in a deterministic order.
pub fn word_frequencies<'a, I>(corpus: I, protected: &BTreeSet<String>) -> BTreeMap<String, u64>
where
    I: IntoIterator<Item = &'a TokenSeq>,
{
    let mut freq = BTreeMap::new();
    for seq in corpus {
        for tok in seq.iter() {
            if !protected.contains(tok) {
                *freq.entry(tok.clone()).or_default() += 1;
            }
        }
    }
    freq
}

/// Learns up to `config.num_merges` merge operations.
pub fn bpe_learn<'a, I>(corpus: I, config: &BpeConfig) -> Result<BpeModel>
where
    I: IntoIterator<Item = &'a TokenSeq>,
{
    validate_marker(&config.marker)?;
    let corpus: Vec<&TokenSeq> = corpus.into_iter().collect();
    check_ingestion(corpus.iter().copied(), &config.marker)?;
    let freq = word_frequencies(corpus.iter().copied(), &config.protected);
    let merges = learn_merges(&freq, &config.marker, config.num_merges);
    Ok(BpeModel::new(config.marker.clone(), merges, config.protected.clone()))
}

fn learn_merges(freq: &BTreeMap<String, u64>, marker: &str, num_merges: usize) -> Vec<(String, String)> {
    let mut symbols = Symbols::default();
    let marker_id = symbols.intern(marker);
    let mut words: Vec<(Vec<u32>, u64)> = freq
        .iter()
        .map(|(w, &f)| {
            let mut syms: Vec<u32> = w
                .chars()
                .map(|c| symbols.intern(c.encode_utf8(&mut [0; 4])))
                .collect();
            syms.push(marker_id);
            (syms, f)
        })
        .collect();

    let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
    let mut where_: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
    for (wi, (syms, f)) in words.iter().enumerate() {
        for p in syms.windows(2) {
            let pair = (p[0], p[1]);
            *counts.entry(pair).or_default() += f;
            where_.entry(pair).or_default().insert(wi);
        }
    }

    let candidate = |symbols: &Symbols, pair: (u32, u32), count: u64| Candidate {
        count,
        left: symbols.names[pair.0 as usize].clone(),
        right: symbols.names[pair.1 as usize].clone(),
        pair,
    };
    let mut heap: BinaryHeap<Candidate> = counts
        .iter()
        .map(|(&pair, &count)| candidate(&symbols, pair, count))
        .collect();

    let mut merges = Vec::new();
    while merges.len() < num_merges {
        let Some(top) = heap.pop() else { break };
        let current = counts.get(&top.pair).copied().unwrap_or(0);
        if current != top.count {
            continue;
        }
        if top.count < 2 {
            break;
        }
        let pair = top.pair;
        let merged_name = format!("{}{}", top.left, top.right);
        let merged = symbols.intern(&merged_name);
        merges.push((top.left, top.right));

        let mut affected: Vec<usize> = where_
            .get(&pair)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default();
        affected.sort_unstable();
        let mut touched: BTreeSet<(u32, u32)> = BTreeSet::new();
        for wi in affected {
            let (syms, f) = &mut words[wi];
            for p in syms.windows(2) {
                let key = (p[0], p[1]);
                if let Some(c) = counts.get_mut(&key) {
                    *c -= *f;
                }
                touched.insert(key);
            }
            merge_in_place(syms, pair, merged);
            for p in syms.windows(2) {
                let key = (p[0], p[1]);
                *counts.entry(key).or_default() += *f;
                where_.entry(key).or_default().insert(wi);
                touched.insert(key);
            }
        }
        for key in touched {
            let c = counts.get(&key).copied().unwrap_or(0);
            if c == 0 {
                counts.remove(&key);
                where_.remove(&key);
            } else {
                heap.push(candidate(&symbols, key, c));
            }
        }
    }
    merges
}

impl BpeModel {
    pub fn new(marker: String, merges: Vec<(String, String)>, protected: BTreeSet<String>) -> Self {
        let ranks = merges
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        BpeModel {
            marker,
            merges,
            ranks,
            protected,
        }
    }

    pub fn marker(&self) -> &str {
        &self.marker
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn protected(&self) -> &BTreeSet<String> {
        &self.protected
    }

    /// Segments one word into subword symbols; the last symbol carries the marker.
    pub fn encode_word(&self, word: &str) -> Vec<String> {
        let mut syms: Vec<String> = word.chars().map(String::from).collect();
        syms.push(self.marker.clone());
        loop {
            let best = syms
                .windows(2)
                .filter_map(|p| self.ranks.get(&(p[0].clone(), p[1].clone())).copied())
                .min();
            let Some(rank) = best else { break };
            let (left, right) = &self.merges[rank];
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && &syms[i] == left && &syms[i + 1] == right {
                    out.push(format!("{left}{right}"));
                    i += 2;
                } else {
                    out.push(std::mem::take(&mut syms[i]));
                    i += 1;
                }
            }
            syms = out;
        }
        syms
    }

    pub fn encode(&self, seq: &TokenSeq) -> TokenSeq {
        let mut out = TokenSeq::empty();
        for tok in seq.iter() {
            if self.protected.contains(tok) {
                out.push(tok.clone());
            } else {
                for s in self.encode_word(tok) {
                    out.push(s);
                }
            }
        }
        out
    }

    /// Encodes many sentences, memoizing per distinct word.
    pub fn encode_all(&self, seqs: &[TokenSeq]) -> Vec<TokenSeq> {
        let mut cache: HashMap<&str, Vec<String>> = HashMap::new();
        seqs.iter()
            .map(|seq| {
                let mut out = TokenSeq::empty();
                for tok in seq.iter() {
                    if self.protected.contains(tok) {
                        out.push(tok.clone());
                        continue;
                    }
                    let pieces = cache.entry(tok).or_insert_with(|| self.encode_word(tok));
                    for s in pieces.iter() {
                        out.push(s.clone());
                    }
                }
                out
            })
            .collect()
    }

    /// Joins subwords back into words, splitting after every symbol that ends with the marker.
    pub fn decode(&self, seq: &TokenSeq) -> TokenSeq {
        bpe_decode(seq, &self.marker, &self.protected)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "#version: {VERSION} marker: {}", self.marker)?;
        if !self.protected.is_empty() {
            write!(w, " protected:")?;
            for p in &self.protected {
                write!(w, " {p}")?;
            }
        }
        writeln!(w)?;
        for (l, r) in &self.merges {
            writeln!(w, "{l} {r}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<BpeModel> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::parse("bpe codes", 1, "missing header"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.first() != Some(&"#version:") || fields.get(2) != Some(&"marker:") {
            return Err(Error::parse("bpe codes", 1, "expected `#version: V marker: M`"));
        }
        let marker = fields
            .get(3)
            .ok_or_else(|| Error::parse("bpe codes", 1, "missing marker"))?
            .to_string();
        let mut protected = BTreeSet::new();
        if let Some(pos) = fields.iter().position(|f| *f == "protected:") {
            protected.extend(fields[pos + 1..].iter().map(|s| s.to_string()));
        }
        let mut merges = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                    merges.push((l.to_string(), r.to_string()))
                }
                _ => return Err(Error::parse("bpe codes", i + 2, "expected `left right`")),
            }
        }
        Ok(BpeModel::new(marker, merges, protected))
    }
}

/// Inverse of [`BpeModel::encode`]. A trailing subword without the marker is
/// emitted as-is with a warning.
pub fn bpe_decode(seq: &TokenSeq, marker: &str, protected: &BTreeSet<String>) -> TokenSeq {
    let mut out = TokenSeq::empty();
    let mut buf = String::new();
    for tok in seq.iter() {
        if buf.is_empty() && protected.contains(tok) {
            out.push(tok.clone());
            continue;
        }
        match tok.strip_suffix(marker) {
            Some(stem) => {
                buf.push_str(stem);
                if !buf.is_empty() {
                    out.push(std::mem::take(&mut buf));
                }
            }
            None => buf.push_str(tok),
        }
    }
    if !buf.is_empty() {
        log::warn!("dangling subword {buf:?} at end of sequence");
        out.push(buf);
    }
    out
}
