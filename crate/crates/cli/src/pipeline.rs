//! The eight-stage pipeline with content-digest manifests.
//!
//! Every stage reads files and writes files under the output directory. A
//! stage is skipped when the previous manifest shows the same seed, the same
//! configuration fingerprint and the same input digests, and its recorded
//! outputs are still on disk with matching digests.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use fsmt_core::assembly::{build_bidirectional_ft, mix, select_bilingual, Assembled};
use fsmt_core::bpe::{bpe_learn, BpeConfig, BpeModel};
use fsmt_core::ced::{dedup_by_target, zip_bitext, BitextPair, SampleKind, StyleLms, StyleSample};
use fsmt_core::metrics::{bleu, bootstrap, EvalSet};
use fsmt_core::textproc::{normalize, preprocess, tokenize, truecase_train, RawLine};
use fsmt_core::{lm_train, NGramModel, StyleTag, TokenSeq};
use fsmt_nmt::beam::{decode_all, Ensemble};
use fsmt_nmt::checkpoint::{load, save};
use fsmt_nmt::train::{train_replicas, StopReason};
use fsmt_nmt::{Example, ModelConfig, Vocab};
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{validate_config, PipelineConfig};
use crate::error::{CliError, CliResult};
use crate::io::{create, digest, read_lines, read_tokens, write_lines};

pub const MANIFEST: &str = "manifest.json";
pub const TIMINGS: &str = "timings.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Preprocess,
    LmTrain,
    Select,
    Bpe,
    Assemble,
    Train,
    Decode,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Preprocess,
        Stage::LmTrain,
        Stage::Select,
        Stage::Bpe,
        Stage::Assemble,
        Stage::Train,
        Stage::Decode,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Preprocess => "preprocess",
            Stage::LmTrain => "lm-train",
            Stage::Select => "select",
            Stage::Bpe => "bpe",
            Stage::Assemble => "assemble",
            Stage::Train => "train",
            Stage::Decode => "decode",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Stage::ALL.iter().map(|s| s.name()).collect();
            CliError::Validation(format!("unknown stage {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

/// Stage seed: the first eight bytes of SHA-256(global seed LE ‖ stage name).
pub fn derive_seed(global: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub seed: u64,
    /// SHA-256 of the configuration the stage depends on.
    pub fingerprint: String,
    /// `input:<key>` for external files, output-relative paths otherwise.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub seed: u64,
    /// The configuration document as given, minus `output_dir`.
    pub config: Value,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn stage(&self, s: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.name == s.name())
    }

    pub fn read(path: &Path) -> CliResult<RunManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ran,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub name: String,
    pub status: StageStatus,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub manifest: RunManifest,
    pub timings: Vec<StageTiming>,
}

impl RunReport {
    pub fn executed(&self) -> Vec<String> {
        self.timings
            .iter()
            .filter(|t| t.status == StageStatus::Ran)
            .map(|t| t.name.clone())
            .collect()
    }
}

enum Input {
    External(String, PathBuf),
    Internal(String),
}

fn ref_name(i: usize) -> String {
    format!("prep/test.ref{i}")
}

fn tag_label(tag: Option<&str>) -> &'static str {
    match tag.and_then(StyleTag::from_token) {
        Some(StyleTag::Formal) => "F",
        Some(StyleTag::Informal) => "I",
        None => "untagged",
    }
}

fn hyp_name(tag: Option<&str>) -> String {
    format!("decode/hyp.{}.txt", tag_label(tag))
}

fn decode_tags(cfg: &PipelineConfig) -> Vec<Option<&str>> {
    if cfg.evaluate.tags.is_empty() {
        vec![None]
    } else {
        cfg.evaluate.tags.iter().map(|t| Some(t.as_str())).collect()
    }
}

fn internal(names: &[&str]) -> Vec<Input> {
    names.iter().map(|n| Input::Internal(n.to_string())).collect()
}

fn stage_inputs(stage: Stage, cfg: &PipelineConfig) -> Vec<Input> {
    match stage {
        Stage::Preprocess => cfg
            .inputs
            .named()
            .into_iter()
            .map(|(k, p)| Input::External(k, p.to_path_buf()))
            .collect(),
        Stage::LmTrain => internal(&["prep/ft.informal", "prep/ft.formal"]),
        Stage::Select => internal(&[
            "prep/ft.informal",
            "prep/pool.src",
            "prep/pool.tgt",
            "lm/formal.arpa",
            "lm/informal.arpa",
        ]),
        Stage::Bpe => internal(&[
            "prep/ft.informal",
            "prep/ft.formal",
            "prep/pool.src",
            "prep/pool.tgt",
            "select/selection.tsv",
        ]),
        Stage::Assemble => internal(&[
            "prep/ft.informal",
            "prep/ft.formal",
            "prep/pool.src",
            "prep/pool.tgt",
            "prep/dev.informal",
            "prep/dev.formal",
            "prep/test.src",
            "select/selection.tsv",
            "bpe/codes",
        ]),
        Stage::Train => internal(&["data/train.src", "data/train.tgt", "data/dev.src", "data/dev.tgt"]),
        Stage::Decode => {
            let mut v = internal(&["data/test.src", "bpe/codes"]);
            v.extend((0..cfg.train.num_replicas).map(|i| Input::Internal(format!("model/replica{i}.ckpt"))));
            v
        }
        Stage::Evaluate => {
            let mut v: Vec<Input> = decode_tags(cfg).into_iter().map(|t| Input::Internal(hyp_name(t))).collect();
            v.extend((0..cfg.inputs.test_refs.len()).map(|i| Input::Internal(ref_name(i))));
            v
        }
    }
}

fn stage_outputs(stage: Stage, cfg: &PipelineConfig) -> Vec<String> {
    let names: Vec<String> = match stage {
        Stage::Preprocess => {
            let mut v: Vec<String> = [
                "prep/truecase.tsv",
                "prep/ft.informal",
                "prep/ft.formal",
                "prep/pool.src",
                "prep/pool.tgt",
                "prep/dev.informal",
                "prep/dev.formal",
                "prep/test.src",
            ]
            .map(String::from)
            .into();
            v.extend((0..cfg.inputs.test_refs.len()).map(ref_name));
            v
        }
        Stage::LmTrain => vec!["lm/formal.arpa".into(), "lm/informal.arpa".into()],
        Stage::Select => vec!["select/selection.tsv".into()],
        Stage::Bpe => vec!["bpe/codes".into()],
        Stage::Assemble => [
            "data/train.src",
            "data/train.tgt",
            "data/train.manifest.tsv",
            "data/dev.src",
            "data/dev.tgt",
            "data/test.src",
        ]
        .map(String::from)
        .into(),
        Stage::Train => {
            let mut v = vec!["model/vocab.txt".to_string()];
            for i in 0..cfg.train.num_replicas {
                v.push(format!("model/replica{i}.ckpt"));
                v.push(format!("model/replica{i}.log.jsonl"));
            }
            v
        }
        Stage::Decode => decode_tags(cfg).into_iter().map(hyp_name).collect(),
        Stage::Evaluate => vec!["eval/report.json".into()],
    };
    names
}

fn producer(rel: &str, cfg: &PipelineConfig) -> Option<Stage> {
    Stage::ALL
        .into_iter()
        .find(|s| stage_outputs(*s, cfg).iter().any(|o| o == rel))
}

fn fingerprint(stage: Stage, cfg: &PipelineConfig) -> String {
    let v = match stage {
        Stage::Preprocess => json!({}),
        Stage::LmTrain => json!({ "lm": cfg.lm }),
        Stage::Select => json!({ "assembly": cfg.assembly }),
        Stage::Bpe => json!({ "bpe": cfg.bpe }),
        Stage::Assemble => json!({ "assembly": cfg.assembly }),
        Stage::Train => {
            // Decoding settings live in the same section but do not affect training.
            let mut train = json!(cfg.train);
            if let Value::Object(m) = &mut train {
                m.remove("beam");
                m.remove("ensemble_log_space");
            }
            json!({ "model": cfg.model, "train": train })
        }
        Stage::Decode => json!({
            "tags": cfg.evaluate.tags,
            "beam": cfg.train.beam,
            "replicas": cfg.train.num_replicas,
            "log_space": cfg.train.ensemble_log_space,
        }),
        Stage::Evaluate => json!({ "evaluate": cfg.evaluate }),
    };
    hex::encode(Sha256::digest(v.to_string().as_bytes()))
}

struct Ctx<'a> {
    cfg: &'a PipelineConfig,
    out: &'a Path,
}

impl Ctx<'_> {
    fn p(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn tokens(&self, rel: &str) -> CliResult<Vec<TokenSeq>> {
        read_tokens(&self.p(rel))
    }

    fn write_tokens(&self, rel: &str, seqs: &[TokenSeq]) -> CliResult<()> {
        write_lines(&self.p(rel), seqs.iter())
    }

    fn pool(&self) -> CliResult<Vec<BitextPair>> {
        Ok(dedup_by_target(zip_bitext(self.tokens("prep/pool.src")?, self.tokens("prep/pool.tgt")?)?))
    }

    fn bpe(&self) -> CliResult<BpeModel> {
        Ok(BpeModel::read(crate::io::open(&self.p("bpe/codes"))?)?)
    }
}

fn run_preprocess(ctx: &Ctx) -> CliResult<()> {
    let i = &ctx.cfg.inputs;
    let raw = |p: &Path| -> CliResult<Vec<RawLine>> {
        read_lines(p)?
            .into_iter()
            .enumerate()
            .map(|(k, l)| RawLine::new(l, k + 1).map_err(CliError::from))
            .collect()
    };
    let files: Vec<(&str, &Path)> = vec![
        ("prep/ft.informal", &i.ft_informal),
        ("prep/ft.formal", &i.ft_formal),
        ("prep/pool.src", &i.pool_src),
        ("prep/pool.tgt", &i.pool_tgt),
        ("prep/dev.informal", &i.dev_informal),
        ("prep/dev.formal", &i.dev_formal),
        ("prep/test.src", &i.test_src),
    ];
    let mut loaded: Vec<(String, Vec<RawLine>)> = Vec::new();
    for (name, path) in files {
        loaded.push((name.to_string(), raw(path)?));
    }
    for (k, r) in i.test_refs.iter().enumerate() {
        loaded.push((ref_name(k), raw(r)?));
    }
    // The truecaser learns from the training-side text only.
    let training: Vec<TokenSeq> = loaded[..4]
        .iter()
        .flat_map(|(_, lines)| lines.iter().map(|l| tokenize(&normalize(l))))
        .collect();
    let tc = truecase_train(&training);
    let mut w = create(&ctx.p("prep/truecase.tsv"))?;
    tc.write(&mut w)?;
    drop(w);
    for (name, lines) in &loaded {
        let seqs: Vec<TokenSeq> = lines.iter().map(|l| preprocess(&tc, l)).collect();
        ctx.write_tokens(name, &seqs)?;
    }
    Ok(())
}

fn run_lm(ctx: &Ctx) -> CliResult<()> {
    for style in ["formal", "informal"] {
        let corpus = ctx.tokens(&format!("prep/ft.{style}"))?;
        let lm = lm_train(&corpus, &ctx.cfg.lm)?;
        let mut w = create(&ctx.p(&format!("lm/{style}.arpa")))?;
        lm.write_arpa(&mut w)?;
    }
    Ok(())
}

fn read_lm(ctx: &Ctx, style: &str) -> CliResult<NGramModel> {
    Ok(NGramModel::read_arpa(crate::io::open(&ctx.p(&format!("lm/{style}.arpa")))?)?)
}

fn run_select(ctx: &Ctx, seed: u64) -> CliResult<()> {
    let n = 2 * ctx.tokens("prep/ft.informal")?.len();
    let pool = ctx.pool()?;
    let lms = StyleLms {
        formal: read_lm(ctx, "formal")?,
        informal: read_lm(ctx, "informal")?,
    };
    let samples = select_bilingual(&ctx.cfg.assembly.with_seed(seed), n, &pool, Some(&lms))?;
    let mut w = create(&ctx.p("select/selection.tsv"))?;
    use std::io::Write;
    let path = ctx.p("select/selection.tsv");
    writeln!(w, "id\tscore\tsample").map_err(|e| CliError::io(&path, e))?;
    for s in &samples {
        s.write_manifest(&mut w)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))
}

/// Rebuilds the samples from `select/selection.tsv`, in file order.
fn read_selection(ctx: &Ctx, pool: &[BitextPair]) -> CliResult<Vec<StyleSample>> {
    let path = ctx.p("select/selection.tsv");
    let by_id: HashMap<u64, &BitextPair> = pool.iter().map(|p| (p.id, p)).collect();
    let mut samples: Vec<StyleSample> = Vec::new();
    let bad = |line: usize, msg: &str| CliError::Validation(format!("{}:{line}: {msg}", path.display()));
    for (k, line) in read_lines(&path)?.iter().enumerate().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad(k + 1, "expected id, score and sample columns"));
        }
        let id: u64 = f[0].parse().map_err(|_| bad(k + 1, "bad id"))?;
        let score = if f[1] == "-" {
            None
        } else {
            Some(f[1].parse::<f64>().map_err(|_| bad(k + 1, "bad score"))?)
        };
        let kind = match f[2] {
            "formal" => SampleKind::Formal,
            "informal" => SampleKind::Informal,
            "random" => SampleKind::Random,
            _ => return Err(bad(k + 1, "unknown sample kind")),
        };
        let pair = by_id.get(&id).ok_or_else(|| bad(k + 1, "id not in the pool"))?;
        if samples.last().is_none_or(|s| s.style != kind) {
            samples.push(StyleSample {
                style: kind,
                pairs: Vec::new(),
                scores: Vec::new(),
                requested: 0,
                truncated: false,
            });
        }
        let s = samples.last_mut().expect("pushed above");
        s.pairs.push((*pair).clone());
        s.scores.push(score);
        s.requested += 1;
    }
    Ok(samples)
}

fn run_bpe(ctx: &Ctx) -> CliResult<()> {
    let pool = ctx.pool()?;
    let samples = read_selection(ctx, &pool)?;
    let mut corpus = ctx.tokens("prep/ft.informal")?;
    corpus.extend(ctx.tokens("prep/ft.formal")?);
    for s in &samples {
        for p in &s.pairs {
            corpus.push(p.src.clone());
            corpus.push(p.tgt.clone());
        }
    }
    let config = BpeConfig {
        num_merges: ctx.cfg.bpe.merges,
        marker: ctx.cfg.bpe.marker.clone(),
        ..Default::default()
    };
    let model = bpe_learn(&corpus, &config)?;
    let mut w = create(&ctx.p("bpe/codes"))?;
    model.write(&mut w)?;
    Ok(())
}

fn run_assemble(ctx: &Ctx, seed: u64) -> CliResult<()> {
    let ft = build_bidirectional_ft(ctx.tokens("prep/ft.informal")?, ctx.tokens("prep/ft.formal")?)?;
    let pool = ctx.pool()?;
    let samples = read_selection(ctx, &pool)?;
    let mixed: Assembled = mix(&ctx.cfg.assembly.with_seed(seed), &ft, &samples)?;
    let bpe = ctx.bpe()?;
    ctx.write_tokens("data/train.src", &bpe.encode_all(&mixed.sources()))?;
    ctx.write_tokens("data/train.tgt", &bpe.encode_all(&mixed.targets()))?;
    let mut w = create(&ctx.p("data/train.manifest.tsv"))?;
    mixed.write_manifest(&mut w)?;
    drop(w);
    let dev = build_bidirectional_ft(ctx.tokens("prep/dev.informal")?, ctx.tokens("prep/dev.formal")?)?;
    let dev_src: Vec<TokenSeq> = dev.iter().map(|x| x.source()).collect();
    let dev_tgt: Vec<TokenSeq> = dev.iter().map(|x| x.tgt.clone()).collect();
    ctx.write_tokens("data/dev.src", &bpe.encode_all(&dev_src))?;
    ctx.write_tokens("data/dev.tgt", &bpe.encode_all(&dev_tgt))?;
    ctx.write_tokens("data/test.src", &bpe.encode_all(&ctx.tokens("prep/test.src")?))?;
    Ok(())
}

fn examples(vocab: &Vocab, src: &[TokenSeq], tgt: &[TokenSeq]) -> CliResult<Vec<Example>> {
    if src.len() != tgt.len() {
        return Err(fsmt_core::Error::Misaligned {
            index: src.len().min(tgt.len()),
        }
        .into());
    }
    Ok(src
        .iter()
        .zip(tgt)
        .map(|(s, t)| Example {
            src: vocab.encode(s),
            tgt: vocab.encode(t),
        })
        .collect())
}

fn run_train(ctx: &Ctx, seed: u64) -> CliResult<()> {
    let (src, tgt) = (ctx.tokens("data/train.src")?, ctx.tokens("data/train.tgt")?);
    let vocab = Vocab::build(src.iter().chain(&tgt));
    let mut w = create(&ctx.p("model/vocab.txt"))?;
    vocab.write(&mut w)?;
    drop(w);
    let train_set = examples(&vocab, &src, &tgt)?;
    let dev = examples(&vocab, &ctx.tokens("data/dev.src")?, &ctx.tokens("data/dev.tgt")?)?;
    let m = &ctx.cfg.model;
    let model = ModelConfig {
        vocab,
        embed_dim: m.embed_dim,
        hidden_dim: m.hidden_dim,
        attention_dim: m.attention_dim,
        dropout_p: m.dropout_p,
        seed,
    };
    let outcomes = train_replicas(&train_set, &dev, &model, &ctx.cfg.train)?;
    for (i, o) in outcomes.iter().enumerate() {
        save(&o.best, o.best_update as u64, &ctx.p(&format!("model/replica{i}.ckpt")))?;
        let mut w = create(&ctx.p(&format!("model/replica{i}.log.jsonl")))?;
        o.write_log(&mut w)?;
        info!("replica {i}: best dev perplexity {:.4} at update {}", o.best_dev_ppl, o.best_update);
    }
    if let Some((i, o)) = outcomes.iter().enumerate().find(|(_, o)| o.stop == StopReason::Diverged) {
        return Err(fsmt_core::Error::Training(format!(
            "replica {i} diverged; kept its checkpoint from update {}",
            o.best_update
        ))
        .into());
    }
    Ok(())
}

fn run_decode(ctx: &Ctx) -> CliResult<()> {
    let models = (0..ctx.cfg.train.num_replicas)
        .map(|i| Ok(load(&ctx.p(&format!("model/replica{i}.ckpt")))?.params))
        .collect::<CliResult<Vec<_>>>()?;
    let mut ens = Ensemble::new(models.iter().collect())?;
    ens.log_space = ctx.cfg.train.ensemble_log_space;
    let vocab = ens.vocab().clone();
    let bpe = ctx.bpe()?;
    let test = ctx.tokens("data/test.src")?;
    for tag in decode_tags(ctx.cfg) {
        let src: Vec<Vec<u32>> = test
            .iter()
            .map(|s| vocab.encode(&tag.map_or_else(|| s.clone(), |t| s.with_prefix(t))))
            .collect();
        let hyps = decode_all(&ens, &src, ctx.cfg.train.beam)?;
        let text: Vec<TokenSeq> = hyps.iter().map(|h| bpe.decode(&vocab.decode(&h.tokens))).collect();
        ctx.write_tokens(&hyp_name(tag), &text)?;
    }
    Ok(())
}

fn run_evaluate(ctx: &Ctx, seed: u64) -> CliResult<()> {
    let refs = (0..ctx.cfg.inputs.test_refs.len())
        .map(|i| read_lines(&ctx.p(&ref_name(i))))
        .collect::<CliResult<Vec<_>>>()?;
    let mut scores = serde_json::Map::new();
    let mut systems = Vec::new();
    for tag in decode_tags(ctx.cfg) {
        let hyps = read_lines(&ctx.p(&hyp_name(tag)))?;
        let set = EvalSet::from_streams(hyps.clone(), refs.clone())?;
        scores.insert(tag_label(tag).to_string(), serde_json::to_value(bleu(&set)?).expect("report serializes"));
        systems.push((tag_label(tag), hyps, set.references));
    }
    let mut report = json!({ "bleu": scores });
    if systems.len() >= 2 {
        let (a, b) = (&systems[0], &systems[1]);
        let bs = bootstrap(&a.1, &b.1, &a.2, ctx.cfg.evaluate.bootstrap_samples, seed)?;
        report["bootstrap"] = json!({ "a": a.0, "b": b.0, "report": bs });
    }
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    let path = ctx.p("eval/report.json");
    write_lines(&path, [text.trim_end()])
}

fn run_stage(stage: Stage, ctx: &Ctx, seed: u64) -> CliResult<()> {
    match stage {
        Stage::Preprocess => run_preprocess(ctx),
        Stage::LmTrain => run_lm(ctx),
        Stage::Select => run_select(ctx, seed),
        Stage::Bpe => run_bpe(ctx),
        Stage::Assemble => run_assemble(ctx, seed),
        Stage::Train => run_train(ctx, seed),
        Stage::Decode => run_decode(ctx),
        Stage::Evaluate => run_evaluate(ctx, seed),
    }
}

fn input_digests(stage: Stage, ctx: &Ctx) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for input in stage_inputs(stage, ctx.cfg) {
        match input {
            Input::External(key, path) => {
                if !path.is_file() {
                    return Err(CliError::Validation(format!("input {key}: {} does not exist", path.display())));
                }
                out.insert(format!("input:{key}"), digest(&path)?);
            }
            Input::Internal(rel) => {
                let path = ctx.p(&rel);
                if !path.is_file() {
                    let by = producer(&rel, ctx.cfg).map_or("an earlier stage".to_string(), |s| format!("stage {s}"));
                    return Err(CliError::Dependency(format!(
                        "stage {stage} needs {rel}, which is produced by {by}; run that stage first"
                    )));
                }
                out.insert(rel, digest(&path)?);
            }
        }
    }
    Ok(out)
}

fn outputs_match(record: &StageRecord, ctx: &Ctx) -> bool {
    record.outputs.iter().all(|(rel, d)| {
        let p = ctx.p(rel);
        p.is_file() && digest(&p).is_ok_and(|x| &x == d)
    })
}

/// Runs `stages` (all of them when `None`) in dependency order.
pub fn run_pipeline(cfg: &PipelineConfig, doc: &Value, stages: Option<&[Stage]>) -> CliResult<RunReport> {
    let problems = validate_config(cfg);
    if !problems.is_empty() {
        return Err(CliError::Validation(format!("invalid configuration:\n  {}", problems.join("\n  "))));
    }
    let out = cfg.output_dir.as_path();
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let seed = cfg.seed();
    let mut echo = doc.clone();
    if let Value::Object(m) = &mut echo {
        m.remove("output_dir");
    }
    let manifest_path = out.join(MANIFEST);
    let previous = if manifest_path.is_file() { RunManifest::read(&manifest_path).ok() } else { None };
    let mut manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config: echo,
        stages: previous.as_ref().map(|m| m.stages.clone()).unwrap_or_default(),
    };
    let mut wanted: Vec<Stage> = stages.map_or_else(|| Stage::ALL.to_vec(), <[Stage]>::to_vec);
    wanted.sort();
    wanted.dedup();

    let ctx = Ctx { cfg, out };
    let mut timings = Vec::new();
    for stage in wanted {
        let t0 = Instant::now();
        let stage_seed = derive_seed(seed, stage.name());
        let fp = fingerprint(stage, cfg);
        let result = (|| -> CliResult<StageStatus> {
            let inputs = input_digests(stage, &ctx)?;
            let prev = previous.as_ref().and_then(|m| m.stage(stage));
            if let Some(r) = prev {
                if r.seed == stage_seed && r.fingerprint == fp && r.inputs == inputs && outputs_match(r, &ctx) {
                    info!("stage {stage}: up to date");
                    return Ok(StageStatus::Skipped);
                }
            }
            info!("stage {stage}: running");
            run_stage(stage, &ctx, stage_seed)?;
            let mut outputs = BTreeMap::new();
            for rel in stage_outputs(stage, cfg) {
                outputs.insert(rel.clone(), digest(&ctx.p(&rel))?);
            }
            let record = StageRecord {
                name: stage.name().to_string(),
                seed: stage_seed,
                fingerprint: fp.clone(),
                inputs,
                outputs,
            };
            manifest.stages.retain(|r| r.name != stage.name());
            manifest.stages.push(record);
            manifest.stages.sort_by_key(|r| r.name.parse::<Stage>().map_or(usize::MAX, |s| s as usize));
            Ok(StageStatus::Ran)
        })();
        match result {
            Ok(status) => timings.push(StageTiming {
                name: stage.name().to_string(),
                status,
                seconds: t0.elapsed().as_secs_f64(),
            }),
            Err(e) => {
                manifest.write(&manifest_path)?;
                return Err(CliError::Stage {
                    stage: stage.name().to_string(),
                    source: Box::new(e),
                });
            }
        }
    }
    manifest.write(&manifest_path)?;
    let tpath = out.join(TIMINGS);
    let mut text = serde_json::to_string_pretty(&timings).expect("timings serialize");
    text.push('\n');
    std::fs::write(&tpath, text).map_err(|e| CliError::io(&tpath, e))?;
    Ok(RunReport { manifest, timings })
}
