//! Smoothed n-gram language models and per-token cross-entropy.
//!
//! Probabilities use interpolated absolute discounting with one discount per
//! order, `D = n1 / (n1 + 2 n2)` from that order's count-of-counts:
//!
//! ```text
//! p(w | h) = max(c(hw) - D, 0) / c(h) + D * N1+(h .) / c(h) * p(w | h')
//! ```
//!
//! The unigram level interpolates with the uniform distribution over the
//! vocabulary (minus `<s>`). The model is stored the way ARPA files store it:
//! the fully interpolated probability of every observed n-gram, plus a backoff
//! weight `D * N1+(h .) / c(h)` for every observed context. `Smoothing::Mle`
//! sets every discount to zero, which yields relative-frequency estimates.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textproc::TokenSeq;

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

const UNK_ID: u32 = 0;
const BOS_ID: u32 = 1;
const EOS_ID: u32 = 2;

/// ARPA's stand-in for log10(0).
const ARPA_LOG_ZERO: f64 = -99.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// Relative frequencies; unseen events get probability zero.
    Mle,
    AbsoluteDiscount,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub order: usize,
    pub min_count: u64,
    pub smoothing: Smoothing,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            order: 3,
            min_count: 1,
            smoothing: Smoothing::AbsoluteDiscount,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    words: Vec<String>,
    index: HashMap<String, u32>,
    /// `probs[k - 1]` holds every listed k-gram.
    probs: Vec<HashMap<Vec<u32>, f64>>,
    /// Backoff weight per context; contexts of every length share the map.
    backoff: HashMap<Vec<u32>, f64>,
    discounts: Vec<f64>,
}

fn reserved_words() -> Vec<String> {
    vec![UNK.to_string(), BOS.to_string(), EOS.to_string()]
}

fn discount_from_counts(counts: &HashMap<Vec<u32>, u64>) -> f64 {
    let n1 = counts.values().filter(|&&c| c == 1).count() as f64;
    let n2 = counts.values().filter(|&&c| c == 2).count() as f64;
    if n1 + 2.0 * n2 == 0.0 {
        0.5
    } else {
        n1 / (n1 + 2.0 * n2)
    }
}

/// Trains a model on tokenized sentences.
pub fn lm_train<'a, I>(corpus: I, config: &LmConfig) -> Result<NGramModel>
where
    I: IntoIterator<Item = &'a TokenSeq>,
{
    if config.order < 1 {
        return Err(Error::Argument("n-gram order must be at least 1".into()));
    }
    let sentences: Vec<&TokenSeq> = corpus.into_iter().collect();
    if sentences.is_empty() {
        return Err(Error::Training("language model corpus is empty".into()));
    }

    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    for s in &sentences {
        for t in s.iter() {
            *freq.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut words = reserved_words();
    words.extend(
        freq.iter()
            .filter(|&(w, &c)| c >= config.min_count && ![UNK, BOS, EOS].contains(w))
            .map(|(w, _)| w.to_string()),
    );
    let index: HashMap<String, u32> = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i as u32))
        .collect();

    let order = config.order;
    let mut counts: Vec<HashMap<Vec<u32>, u64>> = vec![HashMap::new(); order];
    for s in &sentences {
        let mut padded = Vec::with_capacity(s.len() + 2);
        padded.push(BOS_ID);
        padded.extend(s.iter().map(|t| index.get(t).copied().unwrap_or(UNK_ID)));
        padded.push(EOS_ID);
        for i in 1..padded.len() {
            for k in 1..=order.min(i + 1) {
                *counts[k - 1]
                    .entry(padded[i + 1 - k..=i].to_vec())
                    .or_default() += 1;
            }
        }
    }

    let discounts: Vec<f64> = counts
        .iter()
        .map(|c| match config.smoothing {
            Smoothing::Mle => 0.0,
            Smoothing::AbsoluteDiscount => discount_from_counts(c),
        })
        .collect();

    let mut model = NGramModel {
        order,
        words,
        index,
        probs: vec![HashMap::new(); order],
        backoff: HashMap::new(),
        discounts,
    };

    for k in 1..=order {
        let d = model.discounts[k - 1];
        // context -> (total count, distinct continuations)
        let mut ctx: HashMap<&[u32], (u64, u64)> = HashMap::new();
        for (gram, &c) in &counts[k - 1] {
            let e = ctx.entry(&gram[..k - 1]).or_default();
            e.0 += c;
            e.1 += 1;
        }
        let gamma = |h: &[u32]| -> f64 {
            let (total, distinct) = ctx[h];
            d * distinct as f64 / total as f64
        };

        let mut table = HashMap::with_capacity(counts[k - 1].len());
        if k == 1 {
            let uniform = 1.0 / (model.words.len() - 1) as f64;
            let (total, _) = ctx.get(&[][..]).copied().unwrap_or((0, 0));
            let g = gamma(&[]);
            for id in 0..model.words.len() as u32 {
                if id == BOS_ID {
                    continue;
                }
                let c = counts[0].get(&vec![id]).copied().unwrap_or(0) as f64;
                let p = (c - d).max(0.0) / total as f64 + g * uniform;
                table.insert(vec![id], p);
            }
            table.insert(vec![BOS_ID], 0.0);
        } else {
            for (gram, &c) in &counts[k - 1] {
                let h = &gram[..k - 1];
                let total = ctx[h].0 as f64;
                let lower = model.prob_ids(&gram[1..k - 1], gram[k - 1]);
                let p = (c as f64 - d).max(0.0) / total + gamma(h) * lower;
                table.insert(gram.clone(), p);
            }
        }
        model.probs[k - 1] = table;
        if k > 1 {
            for &h in ctx.keys() {
                model.backoff.insert(h.to_vec(), gamma(h));
            }
        }
    }
    Ok(model)
}

impl NGramModel {
    /// A unigram model spreading mass evenly over `tokens`, `</s>` and `<unk>`.
    pub fn uniform<S: AsRef<str>>(tokens: &[S]) -> NGramModel {
        let mut words = reserved_words();
        for t in tokens {
            let t = t.as_ref();
            if !words.iter().any(|w| w == t) {
                words.push(t.to_string());
            }
        }
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        let p = 1.0 / (words.len() - 1) as f64;
        let mut table: HashMap<Vec<u32>, f64> = (0..words.len() as u32)
            .filter(|&id| id != BOS_ID)
            .map(|id| (vec![id], p))
            .collect();
        table.insert(vec![BOS_ID], 0.0);
        NGramModel {
            order: 1,
            words,
            index,
            probs: vec![table],
            backoff: HashMap::new(),
            discounts: vec![0.0],
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn discounts(&self) -> &[f64] {
        &self.discounts
    }

    /// Vocabulary including `<unk>`, `<s>` and `</s>`.
    pub fn vocab(&self) -> &[String] {
        &self.words
    }

    /// Words that can be predicted (the vocabulary minus `<s>`).
    pub fn outcomes(&self) -> impl Iterator<Item = &str> {
        self.words
            .iter()
            .filter(|w| w.as_str() != BOS)
            .map(String::as_str)
    }

    fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    /// Every context with a listed backoff weight, as token strings.
    pub fn contexts(&self) -> Vec<Vec<&str>> {
        let mut out: Vec<Vec<&str>> = self
            .backoff
            .keys()
            .map(|h| h.iter().map(|&i| self.words[i as usize].as_str()).collect())
            .collect();
        out.push(Vec::new());
        out.sort();
        out
    }

    fn prob_ids(&self, history: &[u32], w: u32) -> f64 {
        let keep = history.len().min(self.order - 1);
        let history = &history[history.len() - keep..];
        let mut weight = 1.0;
        let mut key = Vec::with_capacity(history.len() + 1);
        for start in 0..=history.len() {
            let h = &history[start..];
            key.clear();
            key.extend_from_slice(h);
            key.push(w);
            if let Some(&p) = self.probs[h.len()].get(&key) {
                return weight * p;
            }
            if !h.is_empty() {
                weight *= self.backoff.get(h).copied().unwrap_or(1.0);
            }
        }
        // Only reachable for ids outside the vocabulary.
        0.0
    }

    /// `p(word | history)`; the history is given oldest first and may start with `<s>`.
    pub fn prob<S: AsRef<str>>(&self, history: &[S], word: &str) -> f64 {
        let ids: Vec<u32> = history.iter().map(|t| self.id(t.as_ref())).collect();
        self.prob_ids(&ids, self.id(word))
    }

    /// Per-token log2 probabilities of a sentence, ending with the `</s>` position.
    pub fn token_log2_probs(&self, sentence: &TokenSeq) -> Vec<f64> {
        let mut padded = Vec::with_capacity(sentence.len() + 2);
        padded.push(BOS_ID);
        padded.extend(sentence.iter().map(|t| self.id(t)));
        padded.push(EOS_ID);
        (1..padded.len())
            .map(|i| {
                let start = i.saturating_sub(self.order - 1);
                self.prob_ids(&padded[start..i], padded[i]).log2()
            })
            .collect()
    }

    /// Bits per token, counting the `</s>` position. Unseen words score as `<unk>`.
    pub fn cross_entropy(&self, sentence: &TokenSeq) -> f64 {
        let logs = self.token_log2_probs(sentence);
        -logs.iter().sum::<f64>() / logs.len() as f64
    }

    pub fn write_arpa<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# order {}", self.order)?;
        let d: Vec<String> = self.discounts.iter().map(|d| format!("{d:?}")).collect();
        writeln!(w, "# discounts {}", d.join(" "))?;
        writeln!(w)?;
        writeln!(w, "\\data\\")?;
        for (k, table) in self.probs.iter().enumerate() {
            writeln!(w, "ngram {}={}", k + 1, table.len())?;
        }
        for (k, table) in self.probs.iter().enumerate() {
            writeln!(w)?;
            writeln!(w, "\\{}-grams:", k + 1)?;
            let mut entries: Vec<(Vec<&str>, &Vec<u32>, f64)> = table
                .iter()
                .map(|(g, &p)| {
                    (
                        g.iter().map(|&i| self.words[i as usize].as_str()).collect(),
                        g,
                        p,
                    )
                })
                .collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            for (words, ids, p) in entries {
                let lp = if p > 0.0 { p.log10() } else { ARPA_LOG_ZERO };
                write!(w, "{lp:?}\t{}", words.join(" "))?;
                if k + 1 < self.order {
                    if let Some(&bo) = self.backoff.get(ids.as_slice()) {
                        let lbo = if bo > 0.0 { bo.log10() } else { ARPA_LOG_ZERO };
                        write!(w, "\t{lbo:?}")?;
                    }
                }
                writeln!(w)?;
            }
        }
        writeln!(w)?;
        writeln!(w, "\\end\\")?;
        Ok(())
    }

    pub fn read_arpa<R: BufRead>(r: R) -> Result<NGramModel> {
        let err = |line: usize, msg: &str| Error::parse("arpa", line, msg);
        let from_log = |x: f64| if x <= ARPA_LOG_ZERO { 0.0 } else { 10f64.powf(x) };

        let mut discounts = Vec::new();
        let mut declared: Vec<usize> = Vec::new();
        let mut section: Option<usize> = None;
        let mut in_data = false;
        let mut raw: Vec<Vec<(Vec<String>, f64, Option<f64>)>> = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            let trimmed = line.trim();
            if let Some(rest) = trimmed.strip_prefix("# discounts") {
                discounts = rest
                    .split_whitespace()
                    .map(|d| d.parse::<f64>().map_err(|_| err(line_no, "bad discount")))
                    .collect::<Result<_>>()?;
                continue;
            }
            if trimmed.is_empty() || (section.is_none() && !in_data && trimmed != "\\data\\") {
                continue;
            }
            if trimmed == "\\data\\" {
                in_data = true;
                continue;
            }
            if trimmed == "\\end\\" {
                break;
            }
            if let Some(rest) = trimmed.strip_prefix("ngram ") {
                let (k, n) = rest
                    .split_once('=')
                    .ok_or_else(|| err(line_no, "bad ngram count line"))?;
                let k: usize = k.trim().parse().map_err(|_| err(line_no, "bad order"))?;
                let n: usize = n.trim().parse().map_err(|_| err(line_no, "bad count"))?;
                if k != declared.len() + 1 {
                    return Err(err(line_no, "ngram orders must be listed in sequence"));
                }
                declared.push(n);
                raw.push(Vec::new());
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('\\') {
                let k: usize = rest
                    .strip_suffix("-grams:")
                    .and_then(|k| k.parse().ok())
                    .ok_or_else(|| err(line_no, "bad section header"))?;
                if k == 0 || k > declared.len() {
                    return Err(err(line_no, "section for undeclared order"));
                }
                section = Some(k);
                continue;
            }
            let k = section.ok_or_else(|| err(line_no, "entry outside of a section"))?;
            let fields: Vec<&str> = trimmed.split('\t').collect();
            let fields: Vec<&str> = if fields.len() >= 2 {
                fields
            } else {
                trimmed.split_whitespace().collect()
            };
            let (lp, rest) = fields
                .split_first()
                .ok_or_else(|| err(line_no, "empty entry"))?;
            let lp: f64 = lp.parse().map_err(|_| err(line_no, "bad log probability"))?;
            let words: Vec<String>;
            let mut bo = None;
            if rest.len() == 1 {
                words = rest[0].split_whitespace().map(str::to_string).collect();
            } else if rest.len() == 2 && rest[0].split_whitespace().count() == k {
                words = rest[0].split_whitespace().map(str::to_string).collect();
                bo = Some(rest[1].parse::<f64>().map_err(|_| err(line_no, "bad backoff"))?);
            } else {
                // Whitespace-separated layout: k words, optional backoff.
                if rest.len() < k {
                    return Err(err(line_no, "too few words for order"));
                }
                words = rest[..k].iter().map(|s| s.to_string()).collect();
                if rest.len() == k + 1 {
                    bo = Some(rest[k].parse::<f64>().map_err(|_| err(line_no, "bad backoff"))?);
                }
            }
            if words.len() != k {
                return Err(err(line_no, "n-gram length does not match section"));
            }
            raw[k - 1].push((words, lp, bo));
        }
        if declared.is_empty() {
            return Err(err(0, "missing \\data\\ section"));
        }
        for (k, (n, entries)) in declared.iter().zip(&raw).enumerate() {
            if *n != entries.len() {
                return Err(err(0, &format!("order {} declares {n} entries, found {}", k + 1, entries.len())));
            }
        }

        let mut words = reserved_words();
        for (gram, _, _) in &raw[0] {
            if !words.contains(&gram[0]) {
                words.push(gram[0].clone());
            }
        }
        let index: HashMap<String, u32> = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        let order = declared.len();
        let mut probs = vec![HashMap::new(); order];
        let mut backoff = HashMap::new();
        for (k, entries) in raw.into_iter().enumerate() {
            for (gram, lp, bo) in entries {
                let ids: Vec<u32> = gram
                    .iter()
                    .map(|w| {
                        index
                            .get(w)
                            .copied()
                            .ok_or_else(|| err(0, &format!("word {w:?} missing from unigrams")))
                    })
                    .collect::<Result<_>>()?;
                if let Some(bo) = bo {
                    backoff.insert(ids.clone(), from_log(bo));
                }
                probs[k].insert(ids, from_log(lp));
            }
        }
        if discounts.len() != order {
            discounts = vec![0.0; order];
        }
        Ok(NGramModel {
            order,
            words,
            index,
            probs,
            backoff,
            discounts,
        })
    }
}

/// Cross-entropy of `s` under `model`, in bits per token.
pub fn lm_cross_entropy(model: &NGramModel, s: &TokenSeq) -> f64 {
    model.cross_entropy(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(lines: &[&str]) -> Vec<TokenSeq> {
        lines.iter().map(|l| TokenSeq::from_line(l)).collect()
    }

    fn mle(order: usize) -> LmConfig {
        LmConfig {
            order,
            min_count: 1,
            smoothing: Smoothing::Mle,
        }
    }

    fn assert_normalized(m: &NGramModel) {
        for ctx in m.contexts() {
            let total: f64 = m.outcomes().map(|w| m.prob(&ctx, w)).sum();
            assert!((total - 1.0).abs() < 1e-9, "context {ctx:?} sums to {total}");
        }
    }

    #[test]
    fn unigram_two_events() {
        let m = lm_train(&corpus(&["a"]), &mle(1)).unwrap();
        assert_eq!(m.prob::<&str>(&[], "a"), 0.5);
        assert_eq!(m.prob::<&str>(&[], EOS), 0.5);
        assert_eq!(m.prob::<&str>(&[], UNK), 0.0);
        assert_normalized(&m);
    }

    #[test]
    fn bigram_mle_counts() {
        let m = lm_train(&corpus(&["a b", "a a"]), &mle(2)).unwrap();
        for w in ["b", "a", EOS] {
            assert!((m.prob(&["a"], w) - 1.0 / 3.0).abs() < 1e-15);
        }
        let h = m.cross_entropy(&TokenSeq::from_line("a b"));
        assert!((h - (-(1.0f64 / 3.0).log2() / 3.0)).abs() < 1e-12);
        assert!((h - 0.5283).abs() < 1e-4);
        assert_normalized(&m);
    }

    #[test]
    fn uniform_entropy() {
        let m = NGramModel::uniform(&["x", "y", "z"]);
        // x y z </s> <unk>
        let h = m.cross_entropy(&TokenSeq::from_line("x q z"));
        assert!((h - 5f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn empty_sentence_scores_only_eos() {
        let m = lm_train(&corpus(&["a"]), &mle(1)).unwrap();
        assert_eq!(m.token_log2_probs(&TokenSeq::empty()).len(), 1);
        assert_eq!(m.cross_entropy(&TokenSeq::empty()), 1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            lm_train(&corpus(&["a"]), &mle(0)),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            lm_train(&Vec::<TokenSeq>::new(), &mle(2)),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn min_count_maps_rare_to_unk() {
        let cfg = LmConfig {
            order: 2,
            min_count: 2,
            smoothing: Smoothing::AbsoluteDiscount,
        };
        let m = lm_train(&corpus(&["a a b", "a c"]), &cfg).unwrap();
        assert_eq!(m.vocab(), [UNK, BOS, EOS, "a"]);
        assert_eq!(m.prob(&["a"], "b"), m.prob(&["a"], "zzz"));
        assert_normalized(&m);
    }

    #[test]
    fn smoothed_trigram_normalized_and_positive() {
        let m = lm_train(
            &corpus(&["the cat sat", "the dog sat down", "a cat ran", "the cat ran away"]),
            &LmConfig::default(),
        )
        .unwrap();
        assert_normalized(&m);
        assert!(m.discounts().iter().all(|&d| d > 0.0 && d <= 1.0));
        let h = m.cross_entropy(&TokenSeq::from_line("a dog sat on the mat"));
        assert!(h.is_finite() && h > 0.0);
    }

    #[test]
    fn duplicate_corpus_keeps_mle_probabilities() {
        let base = corpus(&["a b c", "b c a a", "c"]);
        let doubled: Vec<TokenSeq> = base.iter().chain(base.iter()).cloned().collect();
        let a = lm_train(&base, &mle(3)).unwrap();
        let b = lm_train(&doubled, &mle(3)).unwrap();
        for ctx in a.contexts() {
            for w in a.outcomes() {
                assert!((a.prob(&ctx, w) - b.prob(&ctx, w)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn arpa_round_trip() {
        let m = lm_train(
            &corpus(&["the cat sat", "the dog sat down", "a cat ran"]),
            &LmConfig::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        m.write_arpa(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\\data\\\nngram 1=10\n"));
        assert!(text.contains("\\3-grams:"));
        let back = NGramModel::read_arpa(&buf[..]).unwrap();
        assert_eq!(back.order(), 3);
        assert_eq!(back.discounts(), m.discounts());
        for s in ["the cat ran", "a dog", "", "zebra sat"] {
            let s = TokenSeq::from_line(s);
            assert!((back.cross_entropy(&s) - m.cross_entropy(&s)).abs() < 1e-9);
        }
    }

    #[test]
    fn arpa_reads_whitespace_layout() {
        let text = "\\data\\\nngram 1=4\nngram 2=2\n\n\\1-grams:\n-0.30103 a -0.5\n-99 <s> 0\n-0.30103 </s>\n-99 <unk>\n\n\\2-grams:\n0 <s> a\n0 a </s>\n\\end\\\n";
        let m = NGramModel::read_arpa(text.as_bytes()).unwrap();
        assert_eq!(m.order(), 2);
        assert!((m.cross_entropy(&TokenSeq::from_line("a")) - 0.0).abs() < 1e-12);
    }
}
