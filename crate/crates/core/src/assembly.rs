//! Training-set assembly: the bidirectional FT data, tagged bilingual samples,
//! and the five training mixes sized by the `k·n` rule.
//!
//! `n` is the number of FT examples (twice the number of FT pairs). Multi-task
//! mixes duplicate FT `k` times and add `k·n` bilingual lines, so both halves
//! of the mix always have the same size.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ced::{ced_rank_select_parallel, random_select, BitextPair, StyleLms, StyleSample};
use crate::error::{Error, Result};
use crate::style::{Style, StyleTag};
use crate::textproc::TokenSeq;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Ft,
    Mt,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Ft => "ft",
            Task::Mt => "mt",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaggedExample {
    pub tag: Option<StyleTag>,
    pub src: TokenSeq,
    pub tgt: TokenSeq,
    pub task: Task,
    /// Where the example came from: `ft`, `formal`, `informal` or `random`.
    pub origin: String,
    /// 1-based line of the FT pair, or the bitext pair id.
    pub line: u64,
}

impl TaggedExample {
    /// Source side as emitted, with the tag as a literal first token.
    pub fn source(&self) -> TokenSeq {
        match self.tag {
            Some(t) => self.src.with_prefix(t.token()),
            None => self.src.clone(),
        }
    }
}

/// Two examples per aligned pair: `<F>` informal→formal, then `<I>` formal→informal.
pub fn build_bidirectional_ft(informal: Vec<TokenSeq>, formal: Vec<TokenSeq>) -> Result<Vec<TaggedExample>> {
    if informal.len() != formal.len() {
        return Err(Error::Misaligned {
            index: informal.len().min(formal.len()),
        });
    }
    let mut out = Vec::with_capacity(2 * informal.len());
    for (i, (inf, form)) in informal.into_iter().zip(formal).enumerate() {
        let line = i as u64 + 1;
        out.push(TaggedExample {
            tag: Some(StyleTag::Formal),
            src: inf.clone(),
            tgt: form.clone(),
            task: Task::Ft,
            origin: "ft".into(),
            line,
        });
        out.push(TaggedExample {
            tag: Some(StyleTag::Informal),
            src: form,
            tgt: inf,
            task: Task::Ft,
            origin: "ft".into(),
            line,
        });
    }
    Ok(out)
}

pub fn tag_bilingual(sample: &StyleSample, tag: StyleTag) -> Result<Vec<TaggedExample>> {
    if sample.style.style() != Some(tag.style()) {
        return Err(Error::Config(format!(
            "cannot tag a {} sample with {}",
            sample.style, tag
        )));
    }
    Ok(mt_examples(sample, Some(tag)))
}

fn mt_examples(sample: &StyleSample, tag: Option<StyleTag>) -> Vec<TaggedExample> {
    sample
        .pairs
        .iter()
        .map(|p| TaggedExample {
            tag,
            src: p.src.clone(),
            tgt: p.tgt.clone(),
            task: Task::Mt,
            origin: sample.style.to_string(),
            line: p.id,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssemblyMode {
    FtOnly,
    ConstraintOnly,
    MultitaskTagStyle,
    MultitaskStyle,
    MultitaskRandom,
}

impl AssemblyMode {
    pub const ALL: [AssemblyMode; 5] = [
        AssemblyMode::FtOnly,
        AssemblyMode::ConstraintOnly,
        AssemblyMode::MultitaskTagStyle,
        AssemblyMode::MultitaskStyle,
        AssemblyMode::MultitaskRandom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AssemblyMode::FtOnly => "ft_only",
            AssemblyMode::ConstraintOnly => "constraint_only",
            AssemblyMode::MultitaskTagStyle => "multitask_tag_style",
            AssemblyMode::MultitaskStyle => "multitask_style",
            AssemblyMode::MultitaskRandom => "multitask_random",
        }
    }

    fn uses_ft(self) -> bool {
        !matches!(self, AssemblyMode::ConstraintOnly)
    }

    fn uses_ced(self) -> bool {
        matches!(
            self,
            AssemblyMode::ConstraintOnly | AssemblyMode::MultitaskTagStyle | AssemblyMode::MultitaskStyle
        )
    }
}

impl fmt::Display for AssemblyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AssemblyMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        AssemblyMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown assembly mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyConfig {
    pub mode: AssemblyMode,
    pub k: usize,
    pub seed: u64,
    /// Bilingual line count for `constraint_only`; defaults to `k·n`.
    #[serde(default)]
    pub mt_size: Option<usize>,
}

impl AssemblyConfig {
    pub fn new(mode: AssemblyMode, k: usize, seed: u64) -> Self {
        AssemblyConfig {
            mode,
            k,
            seed,
            mt_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assembled {
    pub examples: Vec<TaggedExample>,
}

impl Assembled {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn sources(&self) -> Vec<TokenSeq> {
        self.examples.iter().map(TaggedExample::source).collect()
    }

    pub fn targets(&self) -> Vec<TokenSeq> {
        self.examples.iter().map(|e| e.tgt.clone()).collect()
    }

    /// Tab-separated `task, tag, origin, line` rows in output order.
    pub fn write_manifest<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "task\ttag\torigin\tline")?;
        for e in &self.examples {
            let tag = e.tag.map_or("-", |t| t.token());
            writeln!(w, "{}\t{}\t{}\t{}", e.task, tag, e.origin, e.line)?;
        }
        Ok(())
    }

    pub fn write_text<W: Write>(&self, mut src: W, mut tgt: W) -> Result<()> {
        for e in &self.examples {
            writeln!(src, "{}", e.source())?;
            writeln!(tgt, "{}", e.tgt)?;
        }
        Ok(())
    }
}

/// Number of bilingual lines the mode draws for `n` FT examples.
pub fn bilingual_size(config: &AssemblyConfig, n: usize) -> usize {
    match config.mode {
        AssemblyMode::FtOnly => 0,
        AssemblyMode::ConstraintOnly => config.mt_size.unwrap_or(config.k * n),
        _ => config.k * n,
    }
}

fn two_style_samples(pool: &[BitextPair], lms: Option<&StyleLms>, half: usize) -> Result<(StyleSample, StyleSample)> {
    let lms = lms.ok_or_else(|| Error::Config("style language models are required for CED selection".into()))?;
    let formal = ced_rank_select_parallel(pool, lms, half, Style::Formal)?;
    // Tied scores at the cut could otherwise put one pair in both halves.
    let taken: HashSet<u64> = formal.ids().into_iter().collect();
    let rest: Vec<BitextPair> = pool.iter().filter(|p| !taken.contains(&p.id)).cloned().collect();
    let informal = ced_rank_select_parallel(&rest, lms, half, Style::Informal)?;
    Ok((formal, informal))
}

fn check_sizes(config: &AssemblyConfig, n: usize, pool: usize) -> Result<usize> {
    if config.k == 0 {
        return Err(Error::Config("k must be a positive integer".into()));
    }
    if config.mode.uses_ft() && n == 0 {
        return Err(Error::Config(format!("{} needs a non-empty FT set", config.mode)));
    }
    let m = bilingual_size(config, n);
    if config.mode.uses_ced() && m % 2 != 0 {
        return Err(Error::Config(format!(
            "{} splits {m} bilingual lines evenly between two styles; the count must be even",
            config.mode
        )));
    }
    if m > pool {
        let msg = if n > 0 && config.mt_size.is_none() {
            format!(
                "k·n = {m} exceeds the bilingual pool of {pool}; the largest feasible k is {}",
                pool / n
            )
        } else {
            format!("{m} bilingual lines requested but the pool holds {pool}")
        };
        return Err(Error::Config(msg));
    }
    if config.mode == AssemblyMode::ConstraintOnly && m == 0 {
        return Err(Error::Config("constraint_only needs a positive bilingual size".into()));
    }
    Ok(m)
}

/// The bilingual samples a mode draws for `n` FT examples: none, one random
/// sample, or a formal and an informal CED sample (in that order).
pub fn select_bilingual(
    config: &AssemblyConfig,
    n: usize,
    pool: &[BitextPair],
    lms: Option<&StyleLms>,
) -> Result<Vec<StyleSample>> {
    let m = check_sizes(config, n, pool.len())?;
    Ok(match config.mode {
        AssemblyMode::FtOnly => Vec::new(),
        AssemblyMode::MultitaskRandom => vec![random_select(pool, m, config.seed)?],
        _ => {
            let (f, i) = two_style_samples(pool, lms, m / 2)?;
            vec![f, i]
        }
    })
}

/// Combines FT data with already selected samples and shuffles with `config.seed`.
pub fn mix(config: &AssemblyConfig, ft: &[TaggedExample], samples: &[StyleSample]) -> Result<Assembled> {
    let n = ft.len();
    let m = bilingual_size(config, n);
    let got: usize = samples.iter().map(StyleSample::len).sum();
    if got != m {
        return Err(Error::Config(format!("{} expects {m} bilingual lines, got {got}", config.mode)));
    }
    let mut examples = Vec::with_capacity(config.k * n + m);
    if config.mode.uses_ft() {
        let copies = if config.mode == AssemblyMode::FtOnly { 1 } else { config.k };
        for _ in 0..copies {
            examples.extend_from_slice(ft);
        }
    }
    for sample in samples {
        match (config.mode, sample.style.style()) {
            (AssemblyMode::ConstraintOnly | AssemblyMode::MultitaskTagStyle, Some(style)) => {
                examples.extend(tag_bilingual(sample, style.tag())?)
            }
            (AssemblyMode::MultitaskStyle, Some(_)) => examples.extend(mt_examples(sample, None)),
            (AssemblyMode::MultitaskRandom, None) => examples.extend(mt_examples(sample, None)),
            (mode, _) => {
                return Err(Error::Config(format!("{mode} cannot use a {} sample", sample.style)));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    examples.shuffle(&mut rng);
    Ok(Assembled { examples })
}

/// Builds one training mix: [`select_bilingual`] then [`mix`], both seeded
/// with `config.seed`.
pub fn assemble(
    config: &AssemblyConfig,
    ft: &[TaggedExample],
    pool: &[BitextPair],
    lms: Option<&StyleLms>,
) -> Result<Assembled> {
    let samples = select_bilingual(config, ft.len(), pool, lms)?;
    mix(config, ft, &samples)
}
