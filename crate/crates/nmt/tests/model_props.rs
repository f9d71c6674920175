use fsmt_core::TokenSeq;
use fsmt_nmt::model::{attention_weights, step_distributions};
use fsmt_nmt::params::Tensor;
use fsmt_nmt::{forward_loss, perplexity, Example, Mode, ModelConfig, Params, Vocab};
use proptest::prelude::*;

fn vocab(n: usize) -> Vocab {
    let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
    Vocab::build(&[TokenSeq::new(words).unwrap()])
}

fn config(v: Vocab, e: usize, h: usize, a: usize) -> ModelConfig {
    ModelConfig {
        embed_dim: e,
        hidden_dim: h,
        attention_dim: a,
        dropout_p: 0.1,
        seed: 5,
        vocab: v,
    }
}

/// Hand count from the architecture: tied embedding, two encoder LSTMs,
/// bridge, MLP attention, decoder LSTM over [emb; tilde], output layer with
/// layer norm, logit bias.
fn closed_form(v: usize, e: usize, h: usize, a: usize) -> usize {
    let d = h;
    let embedding = v * e;
    let encoder = 2 * (4 * h * (e + h) + 4 * h);
    let bridge = d * 2 * h + d;
    let attention = a * 2 * h + a * d + a + a;
    let decoder = 4 * d * (2 * e + d) + 4 * d;
    let output = e * (d + 2 * h) + e + 2 * e;
    embedding + encoder + bridge + attention + decoder + output + v
}

#[test]
fn parameter_count_matches_closed_form() {
    for (n, e, h, a) in [(10, 4, 4, 4), (3, 1, 1, 1), (50, 64, 64, 64), (7, 5, 9, 2)] {
        let p = Params::init(config(vocab(n), e, h, a)).unwrap();
        assert_eq!(p.num_params(), closed_form(n + 5, e, h, a), "{n} {e} {h} {a}");
        assert_eq!(p.get(Tensor::Embedding).len(), (n + 5) * e);
    }
    assert_eq!(closed_form(10, 2, 3, 4), 10 * 2 + 2 * (12 * 5 + 12) + (3 * 6 + 3) + (24 + 12 + 8) + (12 * 7 + 12) + (2 * 9 + 2 + 4) + 10);
}

#[test]
fn untrained_loss_is_near_uniform() {
    let v = vocab(300);
    let n = v.len() as f64;
    let p = Params::init(config(v, 16, 16, 16)).unwrap();
    let batch: Vec<Example> = (0..8)
        .map(|i| Example {
            src: (0..6).map(|k| 5 + ((i * 7 + k * 13) % 300) as u32).collect(),
            tgt: (0..5).map(|k| 5 + ((i * 11 + k * 17) % 300) as u32).collect(),
        })
        .collect();
    let loss = forward_loss(&p, &batch, Mode::Eval).unwrap();
    assert!((loss - n.ln()).abs() / n.ln() < 0.05, "{loss} vs {}", n.ln());
}

#[test]
fn embedding_row_is_the_output_row() {
    let mut p = Params::init(config(vocab(10), 6, 5, 4)).unwrap();
    let ex = Example { src: vec![5, 6, 7], tgt: vec![8, 9] };
    let probe = 12usize;
    let before = step_distributions(&p, &ex);
    let e = p.dims().e;
    for x in &mut p.get_mut(Tensor::Embedding)[probe * e..(probe + 1) * e] {
        *x += 0.5;
    }
    let after = step_distributions(&p, &ex);
    for (b, a) in before.iter().zip(&after) {
        assert!((a[probe] - b[probe]).abs() > 1e-6);
        // Odds between untouched tokens are unaffected.
        let (u, w) = (3, 10);
        assert!(((a[u] / a[w]) / (b[u] / b[w]) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn uniform_model_has_perplexity_v() {
    let mut p = Params::init(config(vocab(20), 4, 4, 4)).unwrap();
    p.get_mut(Tensor::Embedding).fill(0.0);
    let dev = vec![Example { src: vec![5, 6], tgt: vec![7, 8, 9] }, Example { src: vec![], tgt: vec![] }];
    let ppl = perplexity(&p, &dev).unwrap();
    assert!((ppl - 25.0).abs() < 1e-9, "{ppl}");
    assert!(perplexity(&p, &[]).is_err());
}

#[test]
fn perplexity_matches_sentence_accumulation() {
    let p = Params::init(config(vocab(15), 6, 6, 6)).unwrap();
    let dev: Vec<Example> = (0..13)
        .map(|i| Example {
            src: (0..(i % 5)).map(|k| 5 + ((i + k) % 15) as u32).collect(),
            tgt: (0..(i % 4 + 1)).map(|k| 5 + ((2 * i + k) % 15) as u32).collect(),
        })
        .collect();
    let mut nll = 0.0;
    let mut n = 0usize;
    for ex in &dev {
        let mut targets = ex.tgt.clone();
        targets.push(p.config.vocab.eos());
        for (row, y) in step_distributions(&p, ex).iter().zip(&targets) {
            nll -= row[*y as usize].ln();
            n += 1;
        }
    }
    let oracle = (nll / n as f64).exp();
    let ppl = perplexity(&p, &dev).unwrap();
    assert!((ppl - oracle).abs() < 1e-9);
    let single = forward_loss(&p, &dev, Mode::Eval).unwrap().exp();
    assert!((ppl - single).abs() < 1e-12);
    assert!(ppl >= 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attention_rows_sum_to_one(
        src in proptest::collection::vec(0u32..12, 0..10),
        tgt in proptest::collection::vec(0u32..12, 0..8),
        seed in 0u64..1000,
    ) {
        let p = Params::init(ModelConfig { seed, ..config(vocab(7), 5, 4, 3) }).unwrap();
        let ex = Example { src: src.clone(), tgt };
        for row in attention_weights(&p, &ex) {
            prop_assert_eq!(row.len(), src.len() + 1);
            prop_assert!(row.iter().all(|&a| a >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}
