//! Synthetic end-to-end experiments on tag control.

use std::collections::HashSet;

use fsmt_core::assembly::{assemble, build_bidirectional_ft, AssemblyConfig, AssemblyMode, TaggedExample};
use fsmt_core::ced::StyleLms;
use fsmt_core::synthetic::{canonical_sentence, cipher, cipher_bitext, detect_style, formalize, informalize};
use fsmt_core::{lm_train, LmConfig, Result, Style, StyleTag, TokenSeq};
use fsmt_nmt::beam::{decode_all, Ensemble};
use fsmt_nmt::train::train_replicas;
use fsmt_nmt::{Example, ModelConfig, TrainConfig, TrainOutcome, Vocab};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub ft_pairs: usize,
    pub test_sentences: usize,
    pub dev_pairs: usize,
    pub model: ModelSize,
    pub train: TrainConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct ModelSize {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub dropout_p: f64,
}

/// Canonical sentences not in `seen`, drawn from their own stream.
fn fresh_sentences(n: usize, seen: &HashSet<TokenSeq>, rng: &mut ChaCha8Rng) -> Vec<TokenSeq> {
    let mut out = Vec::with_capacity(n);
    let mut taken = seen.clone();
    while out.len() < n {
        let c = canonical_sentence(rng);
        if taken.insert(c.clone()) {
            out.push(c);
        }
    }
    out
}

fn to_examples(vocab: &Vocab, xs: &[TaggedExample]) -> Vec<Example> {
    xs.iter()
        .map(|x| Example {
            src: vocab.encode(&x.source()),
            tgt: vocab.encode(&x.tgt),
        })
        .collect()
}

fn model_config(vocab: Vocab, size: ModelSize, seed: u64) -> ModelConfig {
    ModelConfig {
        vocab,
        embed_dim: size.embed_dim,
        hidden_dim: size.hidden_dim,
        attention_dim: size.attention_dim,
        dropout_p: size.dropout_p,
        seed,
    }
}

/// Trains `num_replicas` models and decodes with their ensemble.
fn train_and_decode(
    train_set: &[Example],
    dev: &[Example],
    model: ModelConfig,
    config: &TrainConfig,
    inputs: &[TokenSeq],
) -> Result<(Vec<TrainOutcome>, Vec<TokenSeq>)> {
    let outcomes = train_replicas(train_set, dev, &model, config)?;
    let mut ens = Ensemble::new(outcomes.iter().map(|o| &o.best).collect())?;
    ens.log_space = config.ensemble_log_space;
    let v = &model.vocab;
    let src: Vec<Vec<u32>> = inputs.iter().map(|s| v.encode(s)).collect();
    let out = decode_all(&ens, &src, config.beam)?
        .into_iter()
        .map(|h| v.decode(&h.tokens))
        .collect();
    Ok((outcomes, out))
}

fn mean_ppl(outcomes: &[TrainOutcome]) -> f64 {
    outcomes.iter().map(|o| o.best_dev_ppl).sum::<f64>() / outcomes.len() as f64
}

#[derive(Debug, Clone)]
pub struct ControlReport {
    pub correct: usize,
    pub total: usize,
    pub mean_dev_ppl: f64,
    pub updates: usize,
}

impl ControlReport {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// Bidirectional FT on synthetic pairs; each held-out sentence is rewritten
/// both ways and must match the deterministic target exactly.
pub fn tag_control(cfg: &ExperimentConfig) -> Result<ControlReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let train_c: Vec<TokenSeq> = (0..cfg.ft_pairs).map(|_| canonical_sentence(&mut rng)).collect();
    let seen: HashSet<TokenSeq> = train_c.iter().cloned().collect();
    let held = fresh_sentences(cfg.dev_pairs + cfg.test_sentences, &seen, &mut rng);
    let (dev_c, test_c) = held.split_at(cfg.dev_pairs);

    let ft = |cs: &[TokenSeq]| {
        build_bidirectional_ft(cs.iter().map(informalize).collect(), cs.iter().map(formalize).collect())
    };
    let train_ft = ft(&train_c)?;
    let dev_ft = ft(dev_c)?;
    let vocab = Vocab::build(train_ft.iter().flat_map(|x| [&x.src, &x.tgt]));
    let mut inputs = Vec::with_capacity(2 * test_c.len());
    let mut wanted = Vec::with_capacity(2 * test_c.len());
    for c in test_c {
        inputs.push(informalize(c).with_prefix(StyleTag::Formal.token()));
        wanted.push(formalize(c));
        inputs.push(formalize(c).with_prefix(StyleTag::Informal.token()));
        wanted.push(informalize(c));
    }
    let (outcomes, outputs) = train_and_decode(
        &to_examples(&vocab, &train_ft),
        &to_examples(&vocab, &dev_ft),
        model_config(vocab.clone(), cfg.model, cfg.seed),
        &cfg.train,
        &inputs,
    )?;
    Ok(ControlReport {
        correct: outputs.iter().zip(&wanted).filter(|(o, w)| o == w).count(),
        total: wanted.len(),
        mean_dev_ppl: mean_ppl(&outcomes),
        updates: outcomes.iter().map(|o| o.updates).max().unwrap_or(0),
    })
}

#[derive(Debug, Clone)]
pub struct ZeroShotConfig {
    pub base: ExperimentConfig,
    /// Bitext pool size; half formal, half informal on the English side.
    pub pool: usize,
    pub k: usize,
    /// Re-draw every FT tag at random, so tags carry no style information.
    pub shuffle_tags: bool,
}

#[derive(Debug, Clone)]
pub struct ZeroShotReport {
    pub flipped: usize,
    pub total: usize,
    pub mean_dev_ppl: f64,
    pub updates: usize,
    pub training_lines: usize,
}

impl ZeroShotReport {
    pub fn flip_rate(&self) -> f64 {
        self.flipped as f64 / self.total as f64
    }
}

/// FT pairs mixed with untagged cipher→English lines (`multitask_style`).
/// At test time tags are put in front of cipher input, a combination never
/// seen in training; a sentence counts as flipped when `<F>` yields formal
/// output and `<I>` informal output.
pub fn zero_shot(cfg: &ZeroShotConfig) -> Result<ZeroShotReport> {
    let b = &cfg.base;
    let mut rng = ChaCha8Rng::seed_from_u64(b.seed);
    let train_c: Vec<TokenSeq> = (0..b.ft_pairs).map(|_| canonical_sentence(&mut rng)).collect();
    let seen: HashSet<TokenSeq> = train_c.iter().cloned().collect();
    let mut ft = build_bidirectional_ft(
        train_c.iter().map(informalize).collect(),
        train_c.iter().map(formalize).collect(),
    )?;
    if cfg.shuffle_tags {
        for x in ft.iter_mut() {
            x.tag = Some(if rng.random_bool(0.5) { StyleTag::Formal } else { StyleTag::Informal });
        }
    }
    let lms = StyleLms {
        formal: lm_train(ft.iter().filter(|x| detect_style(&x.tgt) == Some(Style::Formal)).map(|x| &x.tgt), &LmConfig::default())?,
        informal: lm_train(ft.iter().filter(|x| detect_style(&x.tgt) == Some(Style::Informal)).map(|x| &x.tgt), &LmConfig::default())?,
    };
    let pool = cipher_bitext(cfg.pool, 0.5, b.seed.wrapping_add(1));
    let mixed = assemble(&AssemblyConfig::new(AssemblyMode::MultitaskStyle, cfg.k, b.seed), &ft, &pool, Some(&lms))?;

    let held = fresh_sentences(b.dev_pairs + b.test_sentences, &seen, &mut rng);
    let (dev_c, test_c) = held.split_at(b.dev_pairs);
    let mut dev = build_bidirectional_ft(dev_c.iter().map(informalize).collect(), dev_c.iter().map(formalize).collect())?;
    dev.shuffle(&mut rng);

    let vocab = Vocab::build(mixed.examples.iter().flat_map(|x| [&x.src, &x.tgt]));

    let mut inputs = Vec::with_capacity(2 * test_c.len());
    for c in test_c {
        let src = cipher(c);
        inputs.push(src.with_prefix(StyleTag::Formal.token()));
        inputs.push(src.with_prefix(StyleTag::Informal.token()));
    }
    let (outcomes, outputs) = train_and_decode(
        &to_examples(&vocab, &mixed.examples),
        &to_examples(&vocab, &dev),
        model_config(vocab.clone(), b.model, b.seed),
        &b.train,
        &inputs,
    )?;
    let flipped = outputs
        .chunks(2)
        .filter(|o| detect_style(&o[0]) == Some(Style::Formal) && detect_style(&o[1]) == Some(Style::Informal))
        .count();
    Ok(ZeroShotReport {
        flipped,
        total: test_c.len(),
        mean_dev_ppl: mean_ppl(&outcomes),
        updates: outcomes.iter().map(|o| o.updates).max().unwrap_or(0),
        training_lines: mixed.len(),
    })
}
