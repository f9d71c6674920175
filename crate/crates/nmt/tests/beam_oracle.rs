use fsmt_core::TokenSeq;
use fsmt_nmt::beam::{beam_search, max_output_len, Ensemble, StepModel};
use fsmt_nmt::{ModelConfig, Params, Vocab};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Distributions indexed by prefix; token 0 is `</s>` and is forced at step 3.
struct Table {
    v: usize,
    seed: u64,
}

impl Table {
    fn dist(&self, prefix: &[u32]) -> Vec<f64> {
        if prefix.len() == 2 {
            let mut d = vec![0.0; self.v];
            d[0] = 1.0;
            return d;
        }
        let key = prefix.iter().fold(self.seed, |h, &t| h.wrapping_mul(31).wrapping_add(t as u64 + 1));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let raw: Vec<f64> = (0..self.v).map(|_| rng.random_range(0.01..1.0)).collect();
        let z: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / z).collect()
    }
}

impl StepModel for Table {
    type State = Vec<u32>;
    fn vocab_size(&self) -> usize {
        self.v
    }
    fn eos(&self) -> u32 {
        0
    }
    fn bos(&self) -> u32 {
        u32::MAX
    }
    fn start(&self, _src: &[u32]) -> Vec<u32> {
        Vec::new()
    }
    fn step(&self, state: &Vec<u32>, prev: u32) -> (Vec<u32>, Vec<f64>) {
        let mut s = state.clone();
        if prev != u32::MAX {
            s.push(prev);
        }
        let d = self.dist(&s);
        (s, d)
    }
}

/// Every sequence that ends in `</s>` within three steps.
fn exhaustive(t: &Table) -> (Vec<u32>, f64) {
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    let mut stack = vec![(Vec::<u32>::new(), 0.0)];
    while let Some((prefix, lp)) = stack.pop() {
        let d = t.dist(&prefix);
        for (tok, p) in d.iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            let score = lp + p.ln();
            if tok == 0 {
                if score > best.1 {
                    best = (prefix.clone(), score);
                }
            } else {
                let mut next = prefix.clone();
                next.push(tok as u32);
                stack.push((next, score));
            }
        }
    }
    best
}

#[test]
fn beam_five_matches_exhaustive_search() {
    for seed in 0..200 {
        let t = Table { v: 3, seed };
        let (tokens, lp) = exhaustive(&t);
        let h = beam_search(&t, &[], 5, 3).unwrap();
        assert!(h.finished);
        assert_eq!(h.tokens, tokens, "seed {seed}");
        assert!((h.log_prob - lp).abs() < 1e-12);
    }
}

fn greedy<M: StepModel>(m: &M, src: &[u32], max_len: usize) -> Vec<u32> {
    let mut state = m.start(src);
    let mut prev = m.bos();
    let mut out = Vec::new();
    for _ in 0..max_len {
        let (s, d) = m.step(&state, prev);
        state = s;
        let best = (0..d.len()).fold(0, |b, i| if d[i] > d[b] { i } else { b }) as u32;
        if best == m.eos() {
            break;
        }
        out.push(best);
        prev = best;
    }
    out
}

fn model(seed: u64) -> Params {
    let words: Vec<String> = (0..12).map(|i| format!("t{i}")).collect();
    let vocab = Vocab::build(&[TokenSeq::new(words).unwrap()]);
    Params::init(ModelConfig {
        embed_dim: 8,
        hidden_dim: 8,
        attention_dim: 8,
        dropout_p: 0.0,
        seed,
        vocab,
    })
    .unwrap()
}

#[test]
fn beam_one_is_greedy() {
    for seed in 0..20 {
        let t = Table { v: 4, seed };
        assert_eq!(beam_search(&t, &[], 1, 3).unwrap().tokens, greedy(&t, &[], 3));
        let p = model(seed);
        let src = vec![5, 6, 7 + (seed % 5) as u32];
        let ens = Ensemble::new(vec![&p]).unwrap();
        let cap = max_output_len(src.len());
        assert_eq!(beam_search(&ens, &src, 1, cap).unwrap().tokens, greedy(&p, &src, cap));
    }
}

#[test]
fn ensemble_of_identical_models_matches_single_model() {
    let p = model(3);
    let ens = Ensemble::new(vec![&p, &p, &p]).unwrap();
    let src = vec![5, 9, 11, 6];
    let (s1, d1) = p.step(&p.start(&src), p.bos());
    let (se, de) = ens.step(&ens.start(&src), p.bos());
    for (a, b) in d1.iter().zip(&de) {
        assert!((a - b).abs() <= 1e-15 * a.max(1e-300), "{a} {b}");
    }
    let (_, d2) = p.step(&s1, 7);
    let (_, d2e) = ens.step(&se, 7);
    assert!(d2.iter().zip(&d2e).all(|(a, b)| (a - b).abs() < 1e-15));
    for beam in [1, 3, 5] {
        let cap = max_output_len(src.len());
        assert_eq!(beam_search(&p, &src, beam, cap).unwrap(), beam_search(&ens, &src, beam, cap).unwrap());
    }
}

#[test]
fn ensemble_is_the_elementwise_mean() {
    let models = [model(1), model(2), model(3)];
    let ens = Ensemble::new(models.iter().collect()).unwrap();
    let src = vec![6, 7];
    let (_, mixed) = ens.step(&ens.start(&src), 1);
    let members: Vec<Vec<f64>> = models.iter().map(|m| m.step(&m.start(&src), 1).1).collect();
    for (i, x) in mixed.iter().enumerate() {
        let mean = (members[0][i] + members[1][i] + members[2][i]) / 3.0;
        assert_eq!(*x, mean);
    }
    let mut geo = Ensemble::new(models.iter().collect()).unwrap();
    geo.log_space = true;
    let (_, g) = geo.step(&geo.start(&src), 1);
    assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(g.iter().zip(&mixed).any(|(a, b)| (a - b).abs() > 1e-9));
}

#[test]
fn empty_source_still_decodes() {
    let p = model(4);
    let h = beam_search(&p, &[], 5, max_output_len(0)).unwrap();
    assert!(h.tokens.len() <= 10);
    assert!(beam_search(&p, &[], 0, 10).is_err());
}

#[test]
fn log_prob_never_increases_along_the_best_path() {
    let p = model(8);
    let src = vec![5, 6, 7, 8];
    let h = beam_search(&p, &src, 4, 12).unwrap();
    let mut state = p.start(&src);
    let mut prev = p.bos();
    let mut lp = 0.0;
    let mut path = h.tokens.clone();
    if h.finished {
        path.push(p.eos());
    }
    for &t in &path {
        let (s, d) = p.step(&state, prev);
        let next = lp + d[t as usize].ln();
        assert!(next <= lp);
        lp = next;
        state = s;
        prev = t;
    }
    assert!((lp - h.log_prob).abs() < 1e-9);
}
