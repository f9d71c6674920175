use fsmt_core::humaneval::{aggregate_all, read_judgments, write_aggregates, Criterion, Judgment};
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn golden(floor: f64, expected: &str) {
    let input = include_str!("data/humaneval_golden.tsv");
    let js = read_judgments(input.as_bytes(), "golden").unwrap();
    let agg = aggregate_all(&js, Some(floor)).unwrap();
    let mut buf = Vec::new();
    write_aggregates(&agg, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), expected);
}

#[test]
fn golden_without_floor() {
    golden(0.0, include_str!("data/humaneval_golden.floor0.out"));
}

#[test]
fn golden_with_default_floor() {
    golden(0.7, include_str!("data/humaneval_golden.floor07.out"));
}

fn random_set(rng: &mut ChaCha8Rng) -> Vec<Judgment> {
    let mut out = Vec::new();
    for item in 0..rng.random_range(1..6) {
        for criterion in [Criterion::Formality, Criterion::Fluency, Criterion::Meaning] {
            let (lo, hi) = criterion.range();
            for _ in 0..rng.random_range(1..5) {
                // Trusts k/20 for k in 1..=20.
                let trust = BigRational::new(rng.random_range(1..=20).into(), 20.into());
                let score = rng.random_range(lo..=hi);
                out.push(Judgment::new(format!("i{item}"), criterion, score, trust, rng.random_bool(0.5)).unwrap());
            }
        }
    }
    out
}

#[test]
fn trust_scaling_leaves_aggregates_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let set = random_set(&mut rng);
        let base = aggregate_all(&set, None).unwrap();
        // Scale down so every trust stays within (0, 1].
        let c = BigRational::new(rng.random_range(1..=9).into(), rng.random_range(10..=30).into());
        let scaled: Vec<Judgment> = set
            .iter()
            .map(|j| Judgment { trust: &j.trust * &c, ..j.clone() })
            .collect();
        assert_eq!(aggregate_all(&scaled, None).unwrap(), base);
    }
}

#[test]
fn swapping_and_negating_leaves_directed_aggregates_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let set = random_set(&mut rng);
        let base = aggregate_all(&set, Some(0.3));
        let flipped: Vec<Judgment> = set
            .iter()
            .map(|j| {
                if j.criterion == Criterion::Meaning {
                    j.clone()
                } else {
                    Judgment { score: -j.score, swapped: !j.swapped, ..j.clone() }
                }
            })
            .collect();
        match (base, aggregate_all(&flipped, Some(0.3))) {
            (Ok(a), Ok(b)) => assert_eq!(a, b),
            (Err(_), Err(_)) => {}
            (a, b) => panic!("outcomes differ: {a:?} vs {b:?}"),
        }
    }
}

#[test]
fn aggregates_lie_within_input_score_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let set = random_set(&mut rng);
        for a in aggregate_all(&set, None).unwrap() {
            let scores: Vec<i32> = set
                .iter()
                .filter(|j| j.item_id == a.item_id && j.criterion == a.criterion)
                .map(|j| fsmt_core::humaneval::reorient(j).score)
                .collect();
            let lo = BigRational::from_integer((*scores.iter().min().unwrap()).into());
            let hi = BigRational::from_integer((*scores.iter().max().unwrap()).into());
            assert!(lo <= a.value && a.value <= hi);
        }
    }
}
