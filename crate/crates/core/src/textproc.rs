//! Text normalization, tokenization and truecasing.
//!
//! All three steps run identically over style corpora and both sides of the
//! bitext. Style tag tokens (`<F>`, `<I>`) pass through every step unmodified.
//!
//! # Normalization table
//!
//! | input                                   | output |
//! |-----------------------------------------|--------|
//! | `“ ” „ ‟ « » ″`                         | `"`    |
//! | `‘ ’ ‚ ‛ ′ ´`                           | `'`    |
//! | `‒ – — ― −`                             | `-`    |
//! | `…`                                     | `...`  |
//! | `，` `。` `：` `；` `！` `？` `（` `）`  | `, . : ; ! ? ( )` |
//! | zero-width space, BOM, soft hyphen      | removed |
//! | any Unicode whitespace run              | one ASCII space |
//!
//! Leading and trailing whitespace is stripped.
//!
//! # Tokenization rules
//!
//! Hyphen splitting is off (`well-known` stays one token). Inside a
//! whitespace-delimited chunk:
//!
//! * a word is a run of alphanumerics, extended across `-` between two
//!   alphanumerics, across `.` or `,` between two digits, and across `'`
//!   between two letters unless what follows the apostrophe is a clitic;
//! * clitics (`'s 't 're 've 'll 'd 'm`, any case) are split off with their
//!   apostrophe: `don't` becomes `don 't`;
//! * a run of periods is one token (`...`);
//! * every other character is a token of its own.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::ops::Deref;

use crate::error::{Error, Result};
use crate::style::is_tag_token;

/// One input sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawLine {
    pub text: String,
    /// 1-based position in the source file.
    pub line_no: usize,
}

impl RawLine {
    pub fn new(text: impl Into<String>, line_no: usize) -> Result<Self> {
        let text = text.into();
        if text.contains('\n') {
            return Err(Error::Argument(format!(
                "line {line_no}: interior newline in raw line"
            )));
        }
        Ok(RawLine { text, line_no })
    }

    pub fn from_bytes(bytes: &[u8], line_no: usize) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|_| Error::Decode { line_no })?;
        RawLine::new(text, line_no)
    }
}

/// Reads one sentence per line, rejecting invalid UTF-8 with the offending line number.
pub fn read_raw_lines<R: Read>(mut reader: R) -> Result<Vec<RawLine>> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    let mut lines = Vec::new();
    if buf.is_empty() {
        return Ok(lines);
    }
    let body = buf.strip_suffix(b"\n").unwrap_or(&buf);
    for (i, raw) in body.split(|&b| b == b'\n').enumerate() {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        lines.push(RawLine::from_bytes(raw, i + 1)?);
    }
    Ok(lines)
}

/// An ordered list of non-empty, whitespace-free tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if let Some(bad) = tokens
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(Error::Argument(format!("invalid token {bad:?}")));
        }
        Ok(TokenSeq(tokens))
    }

    /// Splits an already tokenized line on whitespace.
    pub fn from_line(line: &str) -> Self {
        TokenSeq(line.split_whitespace().map(str::to_string).collect())
    }

    pub fn empty() -> Self {
        TokenSeq(Vec::new())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    pub fn push(&mut self, token: impl Into<String>) {
        let token = token.into();
        debug_assert!(!token.is_empty() && !token.chars().any(char::is_whitespace));
        self.0.push(token);
    }

    /// Returns a copy with `token` inserted at the front.
    pub fn with_prefix(&self, token: &str) -> TokenSeq {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.push(token.to_string());
        v.extend(self.0.iter().cloned());
        TokenSeq(v)
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

impl Deref for TokenSeq {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.join())
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSeq {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenSeq::from_line(
            &iter
                .into_iter()
                .map(Into::into)
                .collect::<Vec<String>>()
                .join(" "),
        )
    }
}

fn map_char(c: char, out: &mut String) {
    match c {
        '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{201F}' | '\u{00AB}' | '\u{00BB}'
        | '\u{2033}' => out.push('"'),
        '\u{2018}' | '\u{2019}' | '\u{201A}' | '\u{201B}' | '\u{2032}' | '\u{00B4}' => {
            out.push('\'')
        }
        '\u{2012}' | '\u{2013}' | '\u{2014}' | '\u{2015}' | '\u{2212}' => out.push('-'),
        '\u{2026}' => out.push_str("..."),
        '\u{FF0C}' => out.push(','),
        '\u{3002}' => out.push('.'),
        '\u{FF1A}' => out.push(':'),
        '\u{FF1B}' => out.push(';'),
        '\u{FF01}' => out.push('!'),
        '\u{FF1F}' => out.push('?'),
        '\u{FF08}' => out.push('('),
        '\u{FF09}' => out.push(')'),
        '\u{200B}' | '\u{FEFF}' | '\u{00AD}' => {}
        c => out.push(c),
    }
}

/// Maps typographic punctuation to ASCII and collapses whitespace. Idempotent.
pub fn normalize(line: &RawLine) -> RawLine {
    RawLine {
        text: normalize_str(&line.text),
        line_no: line.line_no,
    }
}

pub fn normalize_str(text: &str) -> String {
    let mut mapped = String::with_capacity(text.len());
    for c in text.chars() {
        map_char(c, &mut mapped);
    }
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

const CLITICS: [&str; 7] = ["s", "t", "re", "ve", "ll", "d", "m"];

/// If `chars[apos]` starts a clitic, returns the exclusive end of the clitic.
fn clitic_end(chars: &[char], apos: usize) -> Option<usize> {
    let start = apos + 1;
    let mut end = start;
    while end < chars.len() && chars[end].is_alphabetic() {
        end += 1;
    }
    if end == start || (end < chars.len() && chars[end].is_alphanumeric()) {
        return None;
    }
    let letters: String = chars[start..end].iter().collect::<String>().to_lowercase();
    CLITICS.contains(&letters.as_str()).then_some(end)
}

fn tokenize_chunk(chunk: &str, out: &mut Vec<String>) {
    if is_tag_token(chunk) {
        out.push(chunk.to_string());
        return;
    }
    let chars: Vec<char> = chunk.chars().collect();
    let n = chars.len();
    let mut i = 0;
    while i < n {
        let c = chars[i];
        if c.is_alphanumeric() {
            let start = i;
            i += 1;
            while i < n {
                let c = chars[i];
                if c.is_alphanumeric() {
                    i += 1;
                    continue;
                }
                let prev = chars[i - 1];
                let next = chars.get(i + 1).copied();
                let extend = match c {
                    '-' => next.is_some_and(char::is_alphanumeric),
                    '.' | ',' => prev.is_ascii_digit() && next.is_some_and(|n| n.is_ascii_digit()),
                    '\'' => {
                        prev.is_alphabetic()
                            && next.is_some_and(char::is_alphabetic)
                            && clitic_end(&chars, i).is_none()
                    }
                    _ => false,
                };
                if !extend {
                    break;
                }
                i += 1;
            }
            out.push(chars[start..i].iter().collect());
        } else if c == '\'' && (i == 0 || chars[i - 1].is_alphabetic()) {
            match clitic_end(&chars, i) {
                Some(end) => {
                    out.push(chars[i..end].iter().collect());
                    i = end;
                }
                None => {
                    out.push("'".to_string());
                    i += 1;
                }
            }
        } else if c == '.' {
            let start = i;
            while i < n && chars[i] == '.' {
                i += 1;
            }
            out.push(chars[start..i].iter().collect());
        } else {
            out.push(c.to_string());
            i += 1;
        }
    }
}

/// Splits a normalized line into tokens.
pub fn tokenize(line: &RawLine) -> TokenSeq {
    tokenize_str(&line.text)
}

pub fn tokenize_str(text: &str) -> TokenSeq {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        tokenize_chunk(chunk, &mut out);
    }
    TokenSeq(out)
}

/// Index of the sentence-initial token, skipping leading style tags.
fn initial_index(seq: &[String]) -> Option<usize> {
    seq.iter().position(|t| !is_tag_token(t))
}

/// Maps each lowercased token to its most frequent non-sentence-initial surface form.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TruecaseModel {
    // lowercase key -> (surface form, count of that form)
    table: BTreeMap<String, (String, u64)>,
}

impl TruecaseModel {
    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn lookup(&self, token: &str) -> Option<&str> {
        self.table
            .get(&token.to_lowercase())
            .map(|(surface, _)| surface.as_str())
    }

    /// The key to surface-form mapping, without counts.
    pub fn mapping(&self) -> BTreeMap<&str, &str> {
        self.table
            .iter()
            .map(|(k, (v, _))| (k.as_str(), v.as_str()))
            .collect()
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (surface, count) in self.table.values() {
            writeln!(w, "{surface}\t{count}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut table = BTreeMap::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (surface, count) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse("truecase model", i + 1, "expected surface<TAB>count"))?;
            let count: u64 = count
                .parse()
                .map_err(|_| Error::parse("truecase model", i + 1, "bad count"))?;
            table.insert(surface.to_lowercase(), (surface.to_string(), count));
        }
        Ok(TruecaseModel { table })
    }
}

/// Learns the most frequent surface form of each word, ignoring sentence-initial positions.
/// Ties go to the lexicographically smallest form.
pub fn truecase_train<'a, I>(corpus: I) -> TruecaseModel
where
    I: IntoIterator<Item = &'a TokenSeq>,
{
    let mut counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    for seq in corpus {
        let Some(first) = initial_index(seq) else {
            continue;
        };
        for tok in &seq[first + 1..] {
            if is_tag_token(tok) {
                continue;
            }
            *counts
                .entry(tok.to_lowercase())
                .or_default()
                .entry(tok.clone())
                .or_default() += 1;
        }
    }
    let table = counts
        .into_iter()
        .map(|(key, forms)| {
            // BTreeMap iterates forms in ascending order, so strict `>` keeps the smallest on ties.
            let mut best: Option<(String, u64)> = None;
            for (form, n) in forms {
                if best.as_ref().is_none_or(|(_, b)| n > *b) {
                    best = Some((form, n));
                }
            }
            (key, best.expect("non-empty form table"))
        })
        .collect();
    TruecaseModel { table }
}

/// Recases the sentence-initial token; every other token is left alone.
pub fn truecase_apply(model: &TruecaseModel, seq: &TokenSeq) -> TokenSeq {
    let mut out = seq.clone();
    if let Some(i) = initial_index(seq) {
        out.0[i] = match model.lookup(&seq[i]) {
            Some(surface) => surface.to_string(),
            None => seq[i].to_lowercase(),
        };
    }
    out
}

/// normalize, tokenize and truecase in one pass.
pub fn preprocess(model: &TruecaseModel, line: &RawLine) -> TokenSeq {
    truecase_apply(model, &tokenize(&normalize(line)))
}
