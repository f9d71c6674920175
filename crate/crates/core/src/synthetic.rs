//! Synthetic formality data for end-to-end checks.
//!
//! A canonical sentence is generated from templates, each containing at
//! least one contractible word pair. Its formal rendering expands every
//! contraction and capitalizes the first word; the informal rendering
//! contracts greedily from the left and lowercases the first word. The
//! "foreign" side of synthetic bitext is a word-level cipher of the
//! style-neutral canonical form, so it carries no formality signal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ced::BitextPair;
use crate::style::Style;
use crate::textproc::TokenSeq;

/// (first, second, contraction); matching is case-insensitive on `first`.
const CONTRACTIONS: &[(&str, &str, &str)] = &[
    ("I", "am", "I'm"),
    ("you", "are", "you're"),
    ("we", "are", "we're"),
    ("they", "are", "they're"),
    ("he", "is", "he's"),
    ("she", "is", "she's"),
    ("it", "is", "it's"),
    ("I", "will", "I'll"),
    ("you", "will", "you'll"),
    ("we", "will", "we'll"),
    ("they", "will", "they'll"),
    ("do", "not", "don't"),
    ("does", "not", "doesn't"),
    ("is", "not", "isn't"),
    ("are", "not", "aren't"),
    ("can", "not", "can't"),
];

const PRONOUNS: &[(&str, &str, &str)] = &[
    // (pronoun, be, do)
    ("I", "am", "do"),
    ("you", "are", "do"),
    ("we", "are", "do"),
    ("they", "are", "do"),
    ("he", "is", "does"),
    ("she", "is", "does"),
    ("it", "is", "does"),
];
const SINGULAR_NP: &[&str] = &["the dog", "the car", "my friend", "the teacher", "this book", "the movie"];
const PLURAL_NP: &[&str] = &["the kids", "the cars", "my parents", "the students", "these books"];
const ADJECTIVES: &[&str] = &["happy", "tired", "ready", "late", "busy", "hungry", "sure", "right", "new", "good"];
const VERBS: &[&str] = &["like", "see", "want", "need", "know", "visit", "call", "help", "find", "watch"];
const OBJECTS: &[&str] = &[
    "the dog", "the movie", "my friend", "this book", "the car", "her brother", "that song", "the teacher", "our house",
    "the game",
];
const TAILS: &[&str] = &["today", "now", "again", "tonight", "at home", "at work", "very much", "every day"];

fn words(s: &str) -> impl Iterator<Item = String> + '_ {
    s.split(' ').map(str::to_string)
}

fn pick<'a>(rng: &mut impl Rng, xs: &[&'a str]) -> &'a str {
    xs[rng.random_range(0..xs.len())]
}

/// One canonical sentence: expanded contractions, lowercase except `I`, final period.
pub fn canonical_sentence(rng: &mut impl Rng) -> TokenSeq {
    let mut t: Vec<String> = Vec::new();
    let (pron, be, aux_do) = PRONOUNS[rng.random_range(0..PRONOUNS.len())];
    match rng.random_range(0..6) {
        0 => {
            t.extend([pron.to_string(), be.to_string()]);
            if rng.random_bool(0.3) {
                t.push("not".into());
            }
            t.push(pick(rng, ADJECTIVES).into());
        }
        1 => {
            t.extend(words(pick(rng, SINGULAR_NP)));
            t.extend(["is".into(), "not".into(), pick(rng, ADJECTIVES).into()]);
        }
        2 => {
            t.extend(words(pick(rng, PLURAL_NP)));
            t.extend(["are".into(), "not".into(), pick(rng, ADJECTIVES).into()]);
        }
        3 => {
            t.extend([pron.to_string(), aux_do.to_string(), "not".into(), pick(rng, VERBS).into()]);
            t.extend(words(pick(rng, OBJECTS)));
        }
        4 => {
            // `it will` and `he will` have no contraction in the table.
            let (p, _, _) = PRONOUNS[rng.random_range(0..4)];
            t.extend([p.to_string(), "will".into(), pick(rng, VERBS).into()]);
            t.extend(words(pick(rng, OBJECTS)));
        }
        _ => {
            t.extend([pron.to_string(), "can".into(), "not".into(), pick(rng, VERBS).into()]);
            t.extend(words(pick(rng, OBJECTS)));
        }
    }
    if rng.random_bool(0.5) {
        t.extend(words(pick(rng, TAILS)));
    }
    t.push(".".into());
    TokenSeq::new(t).expect("template tokens contain no whitespace")
}

fn eq_word(a: &str, b: &str) -> bool {
    a.eq_ignore_ascii_case(b)
}

fn expand(seq: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(seq.len() + 2);
    for tok in seq {
        match CONTRACTIONS.iter().find(|(_, _, c)| eq_word(c, tok)) {
            Some((a, b, _)) => {
                out.push(a.to_string());
                out.push(b.to_string());
            }
            None => out.push(tok.clone()),
        }
    }
    // Canonical casing: only `I` is capitalized.
    for tok in out.iter_mut() {
        if tok != "I" {
            *tok = tok.to_lowercase();
        }
    }
    out
}

fn contract(seq: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(seq.len());
    let mut i = 0;
    while i < seq.len() {
        if i + 1 < seq.len() {
            if let Some((_, _, c)) = CONTRACTIONS
                .iter()
                .find(|(a, b, _)| eq_word(a, &seq[i]) && eq_word(b, &seq[i + 1]))
            {
                out.push(c.to_string());
                i += 2;
                continue;
            }
        }
        out.push(seq[i].clone());
        i += 1;
    }
    out
}

fn map_first(mut toks: Vec<String>, upper: bool) -> TokenSeq {
    if let Some(first) = toks.first_mut() {
        let mut chars = first.chars();
        if let Some(c) = chars.next() {
            let head: String = if upper { c.to_uppercase().collect() } else { c.to_lowercase().collect() };
            *first = head + chars.as_str();
        }
    }
    TokenSeq::new(toks).expect("tokens stay whitespace-free")
}

/// Expands every contraction and capitalizes the first word.
pub fn formalize(seq: &TokenSeq) -> TokenSeq {
    map_first(expand(seq), true)
}

/// Contracts greedily from the left and lowercases the first word.
pub fn informalize(seq: &TokenSeq) -> TokenSeq {
    map_first(contract(&expand(seq)), false)
}

pub fn render(seq: &TokenSeq, style: Style) -> TokenSeq {
    match style {
        Style::Formal => formalize(seq),
        Style::Informal => informalize(seq),
    }
}

/// Classifies a sentence produced by [`formalize`] or [`informalize`]; `None`
/// when it matches neither pattern.
pub fn detect_style(seq: &TokenSeq) -> Option<Style> {
    let first = seq.first()?.chars().next()?;
    let has_contraction = seq.iter().any(|t| CONTRACTIONS.iter().any(|(_, _, c)| eq_word(c, t)));
    match (first.is_uppercase(), has_contraction) {
        (true, false) => Some(Style::Formal),
        (false, true) => Some(Style::Informal),
        _ => None,
    }
}

/// Deterministic word cipher: reversed lowercase word plus `zu`.
pub fn cipher(seq: &TokenSeq) -> TokenSeq {
    expand(seq)
        .into_iter()
        .map(|w| {
            if w.chars().all(|c| c.is_alphanumeric()) {
                format!("{}zu", w.to_lowercase().chars().rev().collect::<String>())
            } else {
                w
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FtPairs {
    pub canonical: Vec<TokenSeq>,
    pub informal: Vec<TokenSeq>,
    pub formal: Vec<TokenSeq>,
}

pub fn ft_pairs(n: usize, seed: u64) -> FtPairs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let canonical: Vec<TokenSeq> = (0..n).map(|_| canonical_sentence(&mut rng)).collect();
    FtPairs {
        informal: canonical.iter().map(informalize).collect(),
        formal: canonical.iter().map(formalize).collect(),
        canonical,
    }
}

/// Cipher→English pairs whose English side is formal with probability
/// `formal_rate`. Ids start at 1.
pub fn cipher_bitext(n: usize, formal_rate: f64, seed: u64) -> Vec<BitextPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..=n as u64)
        .map(|id| {
            let c = canonical_sentence(&mut rng);
            let style = if rng.random_bool(formal_rate) { Style::Formal } else { Style::Informal };
            BitextPair::new(id, cipher(&c), render(&c, style)).expect("generated sides are non-empty")
        })
        .collect()
}
