//! The bundled synthetic demo: a small formality-transfer corpus, a cipher
//! "foreign language" bitext pool, and a pipeline config that runs in
//! well under a minute.

use std::collections::HashSet;
use std::path::Path;

use fsmt_core::synthetic::{canonical_sentence, cipher, cipher_bitext, formalize, ft_pairs, informalize};
use fsmt_core::TokenSeq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::io::write_lines;

pub const FT_PAIRS: usize = 300;
pub const POOL_PAIRS: usize = 1500;
pub const DEV_PAIRS: usize = 30;
pub const TEST_SENTENCES: usize = 40;
const SEED: u64 = 2024;

fn lines(seqs: &[TokenSeq]) -> String {
    seqs.iter().map(|s| format!("{s}\n")).collect()
}

/// `(file name, contents)` for every demo file, `config.json` included.
pub fn demo_files() -> Vec<(String, String)> {
    let ft = ft_pairs(FT_PAIRS, SEED);
    let pool = cipher_bitext(POOL_PAIRS, 0.5, SEED + 1);
    let mut seen: HashSet<TokenSeq> = ft.canonical.iter().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let mut fresh = |n: usize| {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let c = canonical_sentence(&mut rng);
            if seen.insert(c.clone()) {
                out.push(c);
            }
        }
        out
    };
    let dev = fresh(DEV_PAIRS);
    let test = fresh(TEST_SENTENCES);
    let map = |xs: &[TokenSeq], f: fn(&TokenSeq) -> TokenSeq| xs.iter().map(f).collect::<Vec<_>>();

    let config = json!({
        "seed": 7,
        "output_dir": "run",
        "inputs": {
            "ft_informal": "ft.informal",
            "ft_formal": "ft.formal",
            "pool_src": "pool.src",
            "pool_tgt": "pool.tgt",
            "dev_informal": "dev.informal",
            "dev_formal": "dev.formal",
            "test_src": "test.src",
            "test_refs": ["test.ref0", "test.ref1"]
        },
        "lm": { "order": 3 },
        "assembly": { "mode": "multitask_style", "k": 1 },
        "bpe": { "merges": 200 },
        "model": { "embed_dim": 24, "hidden_dim": 24, "attention_dim": 24, "dropout_p": 0.1 },
        "train": {
            "batch_size": 32,
            "checkpoint_interval": 100,
            "patience": 4,
            "max_updates": 300,
            "beam": 3,
            "num_replicas": 2,
            "adam": { "lr": 0.003 }
        },
        "evaluate": { "tags": ["<F>", "<I>"], "bootstrap_samples": 200 }
    });
    let mut config = serde_json::to_string_pretty(&config).expect("config serializes");
    config.push('\n');

    vec![
        ("ft.informal".into(), lines(&ft.informal)),
        ("ft.formal".into(), lines(&ft.formal)),
        ("pool.src".into(), pool.iter().map(|p| format!("{}\n", p.src)).collect()),
        ("pool.tgt".into(), pool.iter().map(|p| format!("{}\n", p.tgt)).collect()),
        ("dev.informal".into(), lines(&map(&dev, informalize))),
        ("dev.formal".into(), lines(&map(&dev, formalize))),
        ("test.src".into(), lines(&map(&test, cipher))),
        ("test.ref0".into(), lines(&map(&test, formalize))),
        ("test.ref1".into(), lines(&map(&test, informalize))),
        ("config.json".into(), config),
    ]
}

pub fn write_demo(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for (name, text) in demo_files() {
        write_lines(&dir.join(&name), [text.trim_end_matches('\n')])?;
    }
    Ok(())
}
