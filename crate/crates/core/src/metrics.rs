//! Case-sensitive corpus BLEU over WMT (mteval-v13a) tokenization, paired
//! bootstrap resampling and the paired t-test.
//!
//! BLEU is unsmoothed: a corpus with any zero n-gram precision scores 0.

use std::collections::HashMap;
use std::sync::LazyLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::textproc::TokenSeq;

pub const MAX_ORDER: usize = 4;

struct WmtRules {
    punct: Regex,
    period_comma_before: Regex,
    period_comma_after: Regex,
    digit_dash: Regex,
    spaces: Regex,
}

// Byte-level Perl `\s` under no locale: space, \t, \n, \x0B, \f, \r.
static RULES: LazyLock<WmtRules> = LazyLock::new(|| WmtRules {
    punct: Regex::new(r"([\x7B-\x7E\x5B-\x60\x20-\x26\x28-\x2B\x3A-\x40\x2F])").unwrap(),
    period_comma_before: Regex::new(r"([^0-9])([\.,])").unwrap(),
    period_comma_after: Regex::new(r"([\.,])([^0-9])").unwrap(),
    digit_dash: Regex::new(r"([0-9])(-)").unwrap(),
    spaces: Regex::new(r"[ \t\n\x0B\x0C\r]+").unwrap(),
});

/// Metric-internal tokenization, identical to the mteval-v13a `tokenization` sub.
pub fn wmt_tokenize_str(text: &str) -> String {
    let r = &*RULES;
    let mut s = text
        .replace("<skipped>", "")
        .replace("-\n", "")
        .replace('\n', " ")
        .replace("&quot;", "\"")
        .replace("&amp;", "&")
        .replace("&lt;", "<")
        .replace("&gt;", ">");
    s = format!(" {s} ");
    s = r.punct.replace_all(&s, " $1 ").into_owned();
    s = r.period_comma_before.replace_all(&s, "$1 $2 ").into_owned();
    s = r.period_comma_after.replace_all(&s, " $1 $2").into_owned();
    s = r.digit_dash.replace_all(&s, "$1 $2 ").into_owned();
    s = r.spaces.replace_all(&s, " ").into_owned();
    s.trim_matches(|c: char| matches!(c, ' ' | '\t' | '\n' | '\x0B' | '\x0C' | '\r'))
        .to_string()
}

pub fn wmt_tokenize(text: &str) -> TokenSeq {
    let s = wmt_tokenize_str(text);
    s.split(' ').filter(|t| !t.is_empty()).collect()
}

/// Hypotheses with one or more references each.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub hypotheses: Vec<String>,
    pub references: Vec<Vec<String>>,
}

impl EvalSet {
    pub fn new(hypotheses: Vec<String>, references: Vec<Vec<String>>) -> Result<Self> {
        if hypotheses.len() != references.len() {
            return Err(Error::Misaligned {
                index: hypotheses.len().min(references.len()),
            });
        }
        if let Some(i) = references.iter().position(Vec::is_empty) {
            return Err(Error::Argument(format!("hypothesis {} has no reference", i + 1)));
        }
        Ok(EvalSet {
            hypotheses,
            references,
        })
    }

    /// Builds a set from reference streams (one `Vec` per reference file).
    pub fn from_streams(hypotheses: Vec<String>, streams: Vec<Vec<String>>) -> Result<Self> {
        if streams.is_empty() {
            return Err(Error::Argument("at least one reference file is required".into()));
        }
        for s in &streams {
            if s.len() != hypotheses.len() {
                return Err(Error::Misaligned {
                    index: s.len().min(hypotheses.len()),
                });
            }
        }
        let refs = (0..hypotheses.len())
            .map(|i| streams.iter().map(|s| s[i].clone()).collect())
            .collect();
        EvalSet::new(hypotheses, refs)
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }
}

/// Sufficient statistics of one or more sentences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl std::ops::AddAssign for BleuStats {
    fn add_assign(&mut self, o: Self) {
        for n in 0..MAX_ORDER {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.hyp_len += o.hyp_len;
        self.ref_len += o.ref_len;
    }
}

fn ngram_counts(toks: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut m = HashMap::new();
    if toks.len() >= n {
        for g in toks.windows(n) {
            *m.entry(g).or_default() += 1;
        }
    }
    m
}

/// Statistics for one hypothesis against its references. Tokenization is
/// applied here; the reference length is the closest one, ties to the shorter.
pub fn sentence_stats(hyp: &str, refs: &[String]) -> BleuStats {
    let h = wmt_tokenize(hyp);
    let rs: Vec<TokenSeq> = refs.iter().map(|r| wmt_tokenize(r)).collect();
    let mut st = BleuStats {
        hyp_len: h.len() as u64,
        ..Default::default()
    };
    let hl = h.len() as i64;
    st.ref_len = rs
        .iter()
        .map(|r| r.len() as i64)
        .min_by_key(|&rl| ((rl - hl).abs(), rl))
        .unwrap_or(0) as u64;
    for n in 1..=MAX_ORDER {
        let hc = ngram_counts(&h, n);
        let mut max_ref: HashMap<&[String], u64> = HashMap::new();
        for r in &rs {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_default();
                *e = (*e).max(c);
            }
        }
        st.totals[n - 1] = h.len().saturating_sub(n - 1) as u64;
        st.matches[n - 1] = hc
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
    }
    st
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    pub bleu: f64,
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl std::fmt::Display for BleuReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let p: Vec<String> = self.precisions.iter().map(|p| format!("{:.1}", 100.0 * p)).collect();
        write!(
            f,
            "BLEU = {:.2}, {} (BP={:.3}, ratio={:.3}, hyp_len={}, ref_len={})",
            self.bleu,
            p.join("/"),
            self.brevity_penalty,
            if self.ref_len == 0 { 0.0 } else { self.hyp_len as f64 / self.ref_len as f64 },
            self.hyp_len,
            self.ref_len
        )
    }
}

pub fn bleu_from_stats(st: &BleuStats) -> BleuReport {
    let mut precisions = [0.0; MAX_ORDER];
    for n in 0..MAX_ORDER {
        if st.totals[n] > 0 {
            precisions[n] = st.matches[n] as f64 / st.totals[n] as f64;
        }
    }
    let brevity_penalty = if st.hyp_len == 0 {
        0.0
    } else if st.hyp_len >= st.ref_len {
        1.0
    } else {
        (1.0 - st.ref_len as f64 / st.hyp_len as f64).exp()
    };
    let bleu = if precisions.iter().all(|&p| p > 0.0) {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
        100.0 * brevity_penalty * log_mean.exp()
    } else {
        0.0
    };
    BleuReport {
        bleu: bleu.min(100.0),
        precisions,
        brevity_penalty,
        hyp_len: st.hyp_len,
        ref_len: st.ref_len,
    }
}

pub fn corpus_stats(set: &EvalSet) -> Vec<BleuStats> {
    set.hypotheses
        .par_iter()
        .zip(&set.references)
        .map(|(h, r)| sentence_stats(h, r))
        .collect()
}

pub fn bleu(set: &EvalSet) -> Result<BleuReport> {
    if set.is_empty() {
        return Err(Error::Argument("BLEU needs at least one sentence".into()));
    }
    let mut total = BleuStats::default();
    for s in corpus_stats(set) {
        total += s;
    }
    Ok(bleu_from_stats(&total))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    /// Fraction of resamples on which A does not beat B.
    pub p_value: f64,
    pub wins_a: usize,
    pub n_samples: usize,
    pub bleu_a: f64,
    pub bleu_b: f64,
}

pub const DEFAULT_BOOTSTRAP_SAMPLES: usize = 1000;

/// Paired bootstrap resampling for "A is better than B". Resample `i` draws
/// from its own ChaCha stream, so the result does not depend on scheduling.
pub fn bootstrap(
    sys_a: &[String],
    sys_b: &[String],
    refs: &[Vec<String>],
    n_samples: usize,
    seed: u64,
) -> Result<BootstrapReport> {
    if n_samples < 100 {
        return Err(Error::Argument(format!("bootstrap needs at least 100 samples, got {n_samples}")));
    }
    if sys_a.len() != sys_b.len() {
        return Err(Error::Misaligned {
            index: sys_a.len().min(sys_b.len()),
        });
    }
    let a = corpus_stats(&EvalSet::new(sys_a.to_vec(), refs.to_vec())?);
    let b = corpus_stats(&EvalSet::new(sys_b.to_vec(), refs.to_vec())?);
    if a.is_empty() {
        return Err(Error::Argument("bootstrap needs at least one sentence".into()));
    }
    Ok(bootstrap_stats(&a, &b, n_samples, seed))
}

pub fn bootstrap_stats(a: &[BleuStats], b: &[BleuStats], n_samples: usize, seed: u64) -> BootstrapReport {
    let len = a.len();
    let wins_a = (0..n_samples)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut sa = BleuStats::default();
            let mut sb = BleuStats::default();
            for _ in 0..len {
                let j = rng.random_range(0..len);
                sa += a[j];
                sb += b[j];
            }
            bleu_from_stats(&sa).bleu > bleu_from_stats(&sb).bleu
        })
        .count();
    let total = |s: &[BleuStats]| {
        let mut t = BleuStats::default();
        for x in s {
            t += *x;
        }
        bleu_from_stats(&t).bleu
    };
    BootstrapReport {
        p_value: (n_samples - wins_a) as f64 / n_samples as f64,
        wins_a,
        n_samples,
        bleu_a: total(a),
        bleu_b: total(b),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestReport {
    pub t: f64,
    pub df: usize,
    pub p_value: f64,
    pub mean_diff: f64,
    /// Set when the differences have zero variance.
    pub degenerate: bool,
}

/// Two-sided paired t-test. Zero-variance differences give p = 1 when the
/// mean difference is zero and p = 0 (flagged, with a warning) otherwise.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTestReport> {
    if a.len() != b.len() {
        return Err(Error::Misaligned {
            index: a.len().min(b.len()),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Argument(format!("the t-test needs at least 2 pairs, got {n}")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    if var == 0.0 {
        if mean == 0.0 {
            return Ok(TTestReport {
                t: 0.0,
                df,
                p_value: 1.0,
                mean_diff: 0.0,
                degenerate: true,
            });
        }
        log::warn!("paired differences have zero variance and mean {mean}; reporting p = 0");
        return Ok(TTestReport {
            t: mean.signum() * f64::INFINITY,
            df,
            p_value: 0.0,
            mean_diff: mean,
            degenerate: true,
        });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Argument(e.to_string()))?;
    let p_value = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(TTestReport {
        t,
        df,
        p_value,
        mean_diff: mean,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn single(h: &[&str], r: &[&str]) -> EvalSet {
        EvalSet::new(s(h), r.iter().map(|x| vec![x.to_string()]).collect()).unwrap()
    }

    #[test]
    fn tokenizer_examples() {
        assert_eq!(wmt_tokenize_str("Good."), "Good .");
        assert_eq!(wmt_tokenize_str("a,b"), "a , b");
        assert_eq!(wmt_tokenize_str("3.14 and 1,000"), "3.14 and 1,000");
        assert_eq!(wmt_tokenize_str("1990-2000 &amp; don't"), "1990 - 2000 & don't");
        assert_eq!(wmt_tokenize_str(""), "");
    }

    #[test]
    fn identity_is_100() {
        let set = single(&["The cat sat .", "Hello there, friend!"], &["The cat sat .", "Hello there, friend!"]);
        assert_eq!(bleu(&set).unwrap().bleu, 100.0);
    }

    #[test]
    fn hand_computed_cases() {
        let r = bleu(&single(&["a b c d e"], &["a b c d f"])).unwrap();
        assert_eq!(r.precisions, [0.8, 0.75, 2.0 / 3.0, 0.5]);
        assert_eq!(r.brevity_penalty, 1.0);
        assert!((r.bleu - 100.0 * 0.2f64.powf(0.25)).abs() < 1e-12);
        assert!((r.bleu - 66.87).abs() < 0.01);
        let r = bleu(&single(&["the cat sat on the mat"], &["the cat is on the mat"])).unwrap();
        assert_eq!(r.precisions[3], 0.0);
        assert_eq!(r.bleu, 0.0);
    }

    #[test]
    fn closest_reference_length_prefers_shorter() {
        let st = sentence_stats("a b c", &s(&["a b", "a b c d", "x"]));
        assert_eq!(st.ref_len, 2);
        let st = sentence_stats("a b c", &s(&["a b c d", "a b c"]));
        assert_eq!(st.ref_len, 3);
    }

    #[test]
    fn multi_reference_clipping_takes_max() {
        let st = sentence_stats("a a a", &s(&["a b", "a a c"]));
        assert_eq!(st.matches[0], 2);
    }

    #[test]
    fn empty_set_and_misalignment_error() {
        assert!(bleu(&EvalSet::new(vec![], vec![]).unwrap()).is_err());
        assert!(EvalSet::new(s(&["a"]), vec![]).is_err());
        assert!(EvalSet::new(s(&["a"]), vec![vec![]]).is_err());
        assert!(EvalSet::from_streams(s(&["a", "b"]), vec![s(&["a"])]).is_err());
    }

    #[test]
    fn bootstrap_identity_and_dominance() {
        let hyps = s(&["the cat sat on the mat", "a dog barked loudly today", "it is raining again here"]);
        let refs: Vec<Vec<String>> = hyps.iter().map(|h| vec![h.clone()]).collect();
        let r = bootstrap(&hyps, &hyps, &refs, 200, 1).unwrap();
        assert_eq!(r.p_value, 1.0);
        let empty = vec![String::new(); 3];
        let r = bootstrap(&hyps, &empty, &refs, 200, 1).unwrap();
        assert_eq!(r.p_value, 0.0);
        assert!(bootstrap(&hyps, &hyps, &refs, 99, 1).is_err());
        assert!(bootstrap(&hyps, &empty[..2], &refs, 100, 1).is_err());
    }

    #[test]
    fn ttest_conventions() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(paired_ttest(&a, &a).unwrap().p_value, 1.0);
        let r = paired_ttest(&[2.0, 3.0, 4.0, 5.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 0.0);
        assert!(paired_ttest(&[1.0], &[2.0]).is_err());
    }

    #[test]
    fn ttest_sleep_data() {
        // Student's sleep data (Cushny and Peebles), drug 2 minus drug 1.
        let g1 = [0.7, -1.6, -0.2, -1.2, -0.1, 3.4, 3.7, 0.8, 0.0, 2.0];
        let g2 = [1.9, 0.8, 1.1, 0.1, -0.1, 4.4, 5.5, 1.6, 4.6, 3.4];
        let r = paired_ttest(&g2, &g1).unwrap();
        assert_eq!(r.df, 9);
        assert!((r.t - 4.0621).abs() < 1e-3, "{}", r.t);
        assert!((r.p_value - 0.002833).abs() < 1e-3, "{}", r.p_value);
    }

    fn corpus() -> impl Strategy<Value = (Vec<String>, Vec<Vec<String>>)> {
        let sent = "[abc]( [abc.,]){0,7}";
        prop::collection::vec((sent, prop::collection::vec(sent, 1..3)), 1..8)
            .prop_map(|v| v.into_iter().unzip())
    }

    proptest! {
        #[test]
        fn bleu_is_bounded_and_order_invariant((h, r) in corpus()) {
            let set = EvalSet::new(h.clone(), r.clone()).unwrap();
            let b = bleu(&set).unwrap().bleu;
            prop_assert!((0.0..=100.0).contains(&b));
            let mut hr: Vec<_> = h.into_iter().zip(r).collect();
            hr.reverse();
            let (h2, r2): (Vec<_>, Vec<_>) = hr.into_iter().unzip();
            prop_assert_eq!(bleu(&EvalSet::new(h2, r2).unwrap()).unwrap().bleu, b);
        }

        #[test]
        fn extra_reference_never_lowers_matches((h, r) in corpus(), extra in "[abc]( [abc]){0,7}") {
            // Clipped counts can only grow; the closest-length choice may move,
            // so the property is checked on the numerators.
            for (hyp, refs) in h.iter().zip(&r) {
                let before = sentence_stats(hyp, refs);
                let mut more = refs.clone();
                more.push(extra.clone());
                let after = sentence_stats(hyp, &more);
                for n in 0..MAX_ORDER {
                    prop_assert!(after.matches[n] >= before.matches[n]);
                }
            }
        }

        #[test]
        fn same_length_extra_reference_never_lowers_bleu((h, r) in corpus(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let before = bleu(&EvalSet::new(h.clone(), r.clone()).unwrap()).unwrap().bleu;
            let mut more = r.clone();
            for (hyp, refs) in h.iter().zip(more.iter_mut()) {
                let len = sentence_stats(hyp, refs).ref_len;
                let extra: Vec<&str> = (0..len).map(|_| ["a", "b", "c"][rand::Rng::random_range(&mut rng, 0..3)]).collect();
                refs.push(extra.join(" "));
            }
            let after = bleu(&EvalSet::new(h, more).unwrap()).unwrap().bleu;
            prop_assert!(after >= before - 1e-9, "{after} < {before}");
        }

        #[test]
        fn bootstrap_directions_overlap((h, r) in corpus(), other in prop::collection::vec("[abc]( [abc]){0,5}", 8)) {
            let b: Vec<String> = other.into_iter().take(h.len()).collect();
            let pa = bootstrap(&h, &b, &r, 100, 3).unwrap().p_value;
            let pb = bootstrap(&b, &h, &r, 100, 3).unwrap().p_value;
            prop_assert!(pa + pb >= 1.0 - 1e-12);
        }
    }
}
