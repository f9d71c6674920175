use std::collections::BTreeMap;

use fsmt_core::assembly::{assemble, build_bidirectional_ft, AssemblyConfig, AssemblyMode, TaggedExample, Task};
use fsmt_core::ced::{BitextPair, StyleLms};
use fsmt_core::{lm_train, LmConfig, StyleTag, TokenSeq};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sentence(rng: &mut ChaCha8Rng, alphabet: &[&str]) -> TokenSeq {
    let len = rng.random_range(1..=6);
    (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
}

struct Fixture {
    ft: Vec<TaggedExample>,
    pool: Vec<BitextPair>,
    lms: StyleLms,
}

fn fixture(pairs: usize, pool_size: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(pairs as u64 * 31 + pool_size);
    let formal = ["we", "do", "not", "Hello", "."];
    let informal = ["u", "dont", "lol", "hey", "!"];
    let inf: Vec<TokenSeq> = (0..pairs).map(|_| sentence(&mut rng, &informal)).collect();
    let form: Vec<TokenSeq> = (0..pairs).map(|_| sentence(&mut rng, &formal)).collect();
    let all: Vec<&str> = formal.iter().chain(&informal).copied().collect();
    let pool = (1..=pool_size)
        .map(|id| BitextPair::new(id, sentence(&mut rng, &["x", "y", "z"]), sentence(&mut rng, &all)).unwrap())
        .collect();
    let cfg = LmConfig::default();
    Fixture {
        lms: StyleLms {
            formal: lm_train(&form, &cfg).unwrap(),
            informal: lm_train(&inf, &cfg).unwrap(),
        },
        ft: build_bidirectional_ft(inf, form).unwrap(),
        pool,
    }
}

fn multiset(examples: &[TaggedExample]) -> BTreeMap<&TaggedExample, usize> {
    let mut m = BTreeMap::new();
    for e in examples {
        *m.entry(e).or_default() += 1;
    }
    m
}

#[test]
fn sizes_follow_the_k_n_rule() {
    for pairs in [1usize, 4, 10] {
        let n = 2 * pairs;
        let f = fixture(pairs, (12 * n) as u64 + 7);
        for k in [1usize, 2, 3, 12] {
            for mode in AssemblyMode::ALL {
                let cfg = AssemblyConfig::new(mode, k, 42);
                let out = assemble(&cfg, &f.ft, &f.pool, Some(&f.lms)).unwrap();
                let ft_count = out.examples.iter().filter(|e| e.task == Task::Ft).count();
                let mt: Vec<&TaggedExample> = out.examples.iter().filter(|e| e.task == Task::Mt).collect();
                let (want_ft, want_mt) = match mode {
                    AssemblyMode::FtOnly => (n, 0),
                    AssemblyMode::ConstraintOnly => (0, k * n),
                    _ => (k * n, k * n),
                };
                assert_eq!((ft_count, mt.len()), (want_ft, want_mt), "{mode} k={k} n={n}");
                let tagged_f = mt.iter().filter(|e| e.tag == Some(StyleTag::Formal)).count();
                let tagged_i = mt.iter().filter(|e| e.tag == Some(StyleTag::Informal)).count();
                match mode {
                    AssemblyMode::ConstraintOnly | AssemblyMode::MultitaskTagStyle => {
                        assert_eq!((tagged_f, tagged_i), (k * n / 2, k * n / 2))
                    }
                    _ => assert_eq!(tagged_f + tagged_i, 0, "{mode}"),
                }
                if mode == AssemblyMode::MultitaskStyle {
                    let formal_origin = mt.iter().filter(|e| e.origin == "formal").count();
                    assert_eq!(formal_origin, k * n / 2);
                    assert!(mt.iter().all(|e| !e.source().iter().any(|t| t == "<F>" || t == "<I>")));
                }
            }
        }
    }
}

#[test]
fn ft_multiplicity_is_exactly_k() {
    let f = fixture(6, 200);
    for k in [1usize, 2, 3, 12] {
        let cfg = AssemblyConfig::new(AssemblyMode::MultitaskRandom, k, 9);
        let out = assemble(&cfg, &f.ft, &f.pool, None).unwrap();
        let ft_part: Vec<TaggedExample> = out.examples.iter().filter(|e| e.task == Task::Ft).cloned().collect();
        // Brute-force concatenation oracle.
        let oracle: Vec<TaggedExample> = (0..k).flat_map(|_| f.ft.iter().cloned()).collect();
        assert_eq!(multiset(&ft_part), multiset(&oracle));
    }
}

#[test]
fn shuffle_is_a_permutation_and_seeded() {
    let f = fixture(8, 100);
    let cfg = AssemblyConfig::new(AssemblyMode::MultitaskTagStyle, 3, 5);
    let a = assemble(&cfg, &f.ft, &f.pool, Some(&f.lms)).unwrap();
    let b = assemble(&cfg, &f.ft, &f.pool, Some(&f.lms)).unwrap();
    assert_eq!(a, b);
    let other = assemble(&AssemblyConfig { seed: 6, ..cfg.clone() }, &f.ft, &f.pool, Some(&f.lms)).unwrap();
    assert_ne!(a.examples, other.examples);
    let mut x = a.examples.clone();
    let mut y = other.examples.clone();
    x.sort();
    y.sort();
    assert_eq!(x, y);
}

#[test]
fn formal_and_informal_selections_are_disjoint() {
    let f = fixture(5, 60);
    let cfg = AssemblyConfig::new(AssemblyMode::MultitaskTagStyle, 6, 1);
    let out = assemble(&cfg, &f.ft, &f.pool, Some(&f.lms)).unwrap();
    let mut ids: Vec<u64> = out.examples.iter().filter(|e| e.task == Task::Mt).map(|e| e.line).collect();
    ids.sort();
    let before = ids.len();
    ids.dedup();
    assert_eq!(ids.len(), before);
}

#[test]
fn infeasible_k_is_rejected() {
    let f = fixture(5, 59);
    let cfg = AssemblyConfig::new(AssemblyMode::MultitaskTagStyle, 6, 1);
    let err = assemble(&cfg, &f.ft, &f.pool, Some(&f.lms)).unwrap_err().to_string();
    assert!(err.contains("largest feasible k is 5"), "{err}");
}
