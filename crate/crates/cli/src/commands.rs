//! Argument parsing and the standalone subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fsmt_core::assembly::{assemble, build_bidirectional_ft, AssemblyConfig, AssemblyMode};
use fsmt_core::bpe::{bpe_learn, check_ingestion, BpeConfig, BpeModel, DEFAULT_MARKER};
use fsmt_core::ced::{ced_rank_select_parallel, dedup_by_target, random_select, zip_bitext, StyleLms};
use fsmt_core::humaneval::{aggregate_all, read_judgments, write_aggregates, DEFAULT_TRUST_FLOOR};
use fsmt_core::metrics::{bleu, bootstrap, paired_ttest, EvalSet, DEFAULT_BOOTSTRAP_SAMPLES};
use fsmt_core::textproc::{normalize, preprocess, tokenize, truecase_train, RawLine, TruecaseModel};
use fsmt_core::{lm_train, LmConfig, NGramModel, Smoothing, Style, StyleTag, TokenSeq};
use fsmt_nmt::beam::{decode_all, Ensemble};
use fsmt_nmt::checkpoint::{load, save};
use fsmt_nmt::train::train_replicas;
use fsmt_nmt::{Example, ModelConfig, TrainConfig, Vocab};

use crate::config::{load_config, validate_config};
use crate::error::{CliError, CliResult, ExitCode};
use crate::io::{create, open, read_lines, read_tokens, sink, write_lines};
use crate::pipeline::{run_pipeline, Stage};

#[derive(Debug, Parser)]
#[command(name = "fsmt", version, about = "Formality transfer and formality-sensitive translation toolkit")]
pub struct Cli {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize, tokenize and truecase raw text.
    Preprocess(PreprocessArgs),
    /// Train an n-gram language model and write it as ARPA.
    LmTrain(LmTrainArgs),
    /// Per-sentence cross-entropy (bits/token) under an ARPA model.
    LmScore(LmScoreArgs),
    /// Cross-entropy difference (or random) selection from a bitext pool.
    Select(SelectArgs),
    /// Learn joint BPE merges.
    BpeLearn(BpeLearnArgs),
    /// Segment text with learned merges, or undo segmentation.
    BpeApply(BpeApplyArgs),
    /// Build a tagged multi-task training corpus.
    Assemble(AssembleArgs),
    /// Train attentional encoder-decoder replicas.
    Train(TrainArgs),
    /// Beam-search decoding with one checkpoint or an ensemble.
    Decode(DecodeArgs),
    /// Corpus BLEU against one or more references.
    Bleu(BleuArgs),
    /// Paired bootstrap resampling: is system A better than B?
    Bootstrap(BootstrapArgs),
    /// Two-sided paired t-test over two score columns.
    Ttest(TtestArgs),
    /// Trust-weighted aggregation of crowd judgments.
    HumanevalAggregate(HumanevalArgs),
    /// Run the configured end-to-end pipeline.
    Pipeline(PipelineArgs),
    /// Write the synthetic demo corpus and its config.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Truecasing model to apply; learned from the input when absent.
    #[arg(long)]
    pub truecase_model: Option<PathBuf>,
    /// Where to save a learned truecasing model.
    #[arg(long)]
    pub save_model: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SmoothingArg {
    Mle,
    AbsoluteDiscount,
}

#[derive(Debug, Args)]
pub struct LmTrainArgs {
    /// Tokenized training text, one sentence per line.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    #[arg(long, default_value_t = 1)]
    pub min_count: u64,
    #[arg(long, value_enum, default_value = "absolute-discount")]
    pub smoothing: SmoothingArg,
}

#[derive(Debug, Args)]
pub struct LmScoreArgs {
    #[arg(long)]
    pub lm: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SampleArg {
    Formal,
    Informal,
    Random,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub tgt: PathBuf,
    #[arg(long)]
    pub formal_lm: Option<PathBuf>,
    #[arg(long)]
    pub informal_lm: Option<PathBuf>,
    /// Number of pairs to keep.
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_enum)]
    pub style: SampleArg,
    /// Only used for random samples.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `id, score, style` rows; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write the selected sides to `<prefix>.src` and `<prefix>.tgt`.
    #[arg(long)]
    pub out_prefix: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BpeLearnArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub merges: usize,
    #[arg(long, default_value = DEFAULT_MARKER)]
    pub marker: String,
}

#[derive(Debug, Args)]
pub struct BpeApplyArgs {
    #[arg(long)]
    pub codes: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Join subwords back into words instead of segmenting.
    #[arg(long)]
    pub decode: bool,
}

#[derive(Debug, Args)]
pub struct AssembleArgs {
    #[arg(long)]
    pub ft_informal: PathBuf,
    #[arg(long)]
    pub ft_formal: PathBuf,
    #[arg(long)]
    pub pool_src: Option<PathBuf>,
    #[arg(long)]
    pub pool_tgt: Option<PathBuf>,
    #[arg(long)]
    pub formal_lm: Option<PathBuf>,
    #[arg(long)]
    pub informal_lm: Option<PathBuf>,
    #[arg(long, default_value = "multitask_style")]
    pub mode: AssemblyMode,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long)]
    pub mt_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Writes `<prefix>.src`, `<prefix>.tgt` and `<prefix>.manifest.tsv`.
    #[arg(long)]
    pub out_prefix: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train_src: PathBuf,
    #[arg(long)]
    pub train_tgt: PathBuf,
    #[arg(long)]
    pub dev_src: PathBuf,
    #[arg(long)]
    pub dev_tgt: PathBuf,
    /// Receives vocab.txt, replica{i}.ckpt and replica{i}.log.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden_dim: usize,
    #[arg(long, default_value_t = 64)]
    pub attention_dim: usize,
    #[arg(long, default_value_t = 0.2)]
    pub dropout: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_updates: usize,
    #[arg(long, default_value_t = 200)]
    pub checkpoint_interval: usize,
    #[arg(long, default_value_t = 8)]
    pub patience: usize,
    #[arg(long, default_value_t = 4)]
    pub replicas: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// One checkpoint per ensemble member.
    #[arg(long, required = true, num_args = 1..)]
    pub model: Vec<PathBuf>,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub beam: usize,
    /// Style tag to prepend to every input line.
    #[arg(long)]
    pub tag: Option<String>,
    /// BPE codes: segment the input and join the output.
    #[arg(long)]
    pub codes: Option<PathBuf>,
    /// Average member log-probabilities instead of probabilities.
    #[arg(long)]
    pub log_space: bool,
}

#[derive(Debug, Args)]
pub struct BleuArgs {
    #[arg(long)]
    pub hyp: PathBuf,
    #[arg(long = "ref", required = true, num_args = 1..)]
    pub refs: Vec<PathBuf>,
    /// Print the full report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    #[arg(long)]
    pub sys_a: PathBuf,
    #[arg(long)]
    pub sys_b: PathBuf,
    #[arg(long = "ref", required = true, num_args = 1..)]
    pub refs: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TtestArgs {
    /// One score per line.
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
}

#[derive(Debug, Args)]
pub struct HumanevalArgs {
    /// TSV rows: item_id, criterion, score, trust, swapped.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TRUST_FLOOR)]
    pub trust_floor: f64,
    /// Keep every judgment regardless of trust.
    #[arg(long, conflicts_with = "trust_floor")]
    pub no_floor: bool,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config value, e.g. `--set train.beam=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Comma-separated subset of stages to run.
    #[arg(long, value_delimiter = ',')]
    pub stages: Option<Vec<String>>,
    /// Check the config and exit.
    #[arg(long)]
    pub validate_only: bool,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Parses `args` and runs the command; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::Validation as i32 } else { ExitCode::Success as i32 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli.command) {
        Ok(()) => ExitCode::Success as i32,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code() as i32
        }
    }
}

pub fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::LmTrain(a) => cmd_lm_train(a),
        Command::LmScore(a) => cmd_lm_score(a),
        Command::Select(a) => cmd_select(a),
        Command::BpeLearn(a) => cmd_bpe_learn(a),
        Command::BpeApply(a) => cmd_bpe_apply(a),
        Command::Assemble(a) => cmd_assemble(a),
        Command::Train(a) => cmd_train(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Bleu(a) => cmd_bleu(a),
        Command::Bootstrap(a) => cmd_bootstrap(a),
        Command::Ttest(a) => cmd_ttest(a),
        Command::HumanevalAggregate(a) => cmd_humaneval(a),
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::Demo(a) => crate::demo::write_demo(&a.out_dir),
    }
}

fn wio(path: Option<&Path>) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::io(path.unwrap_or(Path::new("<stdout>")), e)
}

fn raw_lines(path: &Path) -> CliResult<Vec<RawLine>> {
    read_lines(path)?
        .into_iter()
        .enumerate()
        .map(|(i, l)| RawLine::new(l, i + 1).map_err(CliError::from))
        .collect()
}

fn cmd_preprocess(a: PreprocessArgs) -> CliResult<()> {
    let lines = raw_lines(&a.input)?;
    let model = match &a.truecase_model {
        Some(p) => TruecaseModel::read(open(p)?)?,
        None => {
            let toks: Vec<TokenSeq> = lines.iter().map(|l| tokenize(&normalize(l))).collect();
            truecase_train(&toks)
        }
    };
    if let Some(p) = &a.save_model {
        model.write(create(p)?)?;
    }
    let out: Vec<TokenSeq> = lines.iter().map(|l| preprocess(&model, l)).collect();
    write_out(a.output.as_deref(), &out)
}

fn write_out<D: std::fmt::Display>(path: Option<&Path>, lines: &[D]) -> CliResult<()> {
    let mut w = sink(path)?;
    for l in lines {
        writeln!(w, "{l}").map_err(wio(path))?;
    }
    w.flush().map_err(wio(path))
}

fn cmd_lm_train(a: LmTrainArgs) -> CliResult<()> {
    let mut corpus = Vec::new();
    for p in &a.input {
        corpus.extend(read_tokens(p)?);
    }
    let config = LmConfig {
        order: a.order,
        min_count: a.min_count,
        smoothing: match a.smoothing {
            SmoothingArg::Mle => Smoothing::Mle,
            SmoothingArg::AbsoluteDiscount => Smoothing::AbsoluteDiscount,
        },
    };
    let lm = lm_train(&corpus, &config)?;
    lm.write_arpa(create(&a.output)?)?;
    Ok(())
}

fn read_arpa(path: &Path) -> CliResult<NGramModel> {
    Ok(NGramModel::read_arpa(open(path)?)?)
}

fn cmd_lm_score(a: LmScoreArgs) -> CliResult<()> {
    let lm = read_arpa(&a.lm)?;
    let corpus = read_tokens(&a.input)?;
    let mut bits = 0.0;
    let mut tokens = 0usize;
    let mut out = Vec::with_capacity(corpus.len());
    for s in &corpus {
        let lp = lm.token_log2_probs(s);
        bits -= lp.iter().sum::<f64>();
        tokens += lp.len();
        out.push(format!("{}", lm.cross_entropy(s)));
    }
    write_out(a.output.as_deref(), &out)?;
    if tokens > 0 {
        let h = bits / tokens as f64;
        eprintln!("{tokens} tokens, cross-entropy {h:.4} bits/token, perplexity {:.4}", h.exp2());
    }
    Ok(())
}

fn cmd_select(a: SelectArgs) -> CliResult<()> {
    let pool = dedup_by_target(zip_bitext(read_tokens(&a.src)?, read_tokens(&a.tgt)?)?);
    let sample = match a.style {
        SampleArg::Random => random_select(&pool, a.n, a.seed)?,
        SampleArg::Formal | SampleArg::Informal => {
            let need = |p: &Option<PathBuf>, which: &str| {
                p.as_deref()
                    .ok_or_else(|| CliError::Validation(format!("--{which}-lm is required for CED selection")))
                    .and_then(read_arpa)
            };
            let lms = StyleLms {
                formal: need(&a.formal_lm, "formal")?,
                informal: need(&a.informal_lm, "informal")?,
            };
            let style = if matches!(a.style, SampleArg::Formal) { Style::Formal } else { Style::Informal };
            ced_rank_select_parallel(&pool, &lms, a.n, style)?
        }
    };
    if sample.truncated {
        log::warn!("only {} of {} requested pairs were available", sample.len(), a.n);
    }
    let path = a.output.as_deref();
    let mut w = sink(path)?;
    sample.write_manifest(&mut w)?;
    w.flush().map_err(wio(path))?;
    if let Some(prefix) = &a.out_prefix {
        write_lines(&with_ext(prefix, "src"), sample.pairs.iter().map(|p| &p.src))?;
        write_lines(&with_ext(prefix, "tgt"), sample.pairs.iter().map(|p| &p.tgt))?;
    }
    Ok(())
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn cmd_bpe_learn(a: BpeLearnArgs) -> CliResult<()> {
    let mut corpus = Vec::new();
    for p in &a.input {
        corpus.extend(read_tokens(p)?);
    }
    check_ingestion(&corpus, &a.marker)?;
    let config = BpeConfig {
        num_merges: a.merges,
        marker: a.marker,
        ..Default::default()
    };
    let model = bpe_learn(&corpus, &config)?;
    model.write(create(&a.output)?)?;
    Ok(())
}

fn read_codes(path: &Path) -> CliResult<BpeModel> {
    Ok(BpeModel::read(open(path)?)?)
}

fn cmd_bpe_apply(a: BpeApplyArgs) -> CliResult<()> {
    let model = read_codes(&a.codes)?;
    let input = read_tokens(&a.input)?;
    let out: Vec<TokenSeq> = if a.decode {
        input.iter().map(|s| model.decode(s)).collect()
    } else {
        check_ingestion(&input, model.marker())?;
        model.encode_all(&input)
    };
    write_out(a.output.as_deref(), &out)
}

fn cmd_assemble(a: AssembleArgs) -> CliResult<()> {
    let ft = build_bidirectional_ft(read_tokens(&a.ft_informal)?, read_tokens(&a.ft_formal)?)?;
    let pool = match (&a.pool_src, &a.pool_tgt) {
        (Some(s), Some(t)) => dedup_by_target(zip_bitext(read_tokens(s)?, read_tokens(t)?)?),
        (None, None) => Vec::new(),
        _ => return Err(CliError::Validation("--pool-src and --pool-tgt go together".into())),
    };
    let lms = match (&a.formal_lm, &a.informal_lm) {
        (Some(f), Some(i)) => Some(StyleLms {
            formal: read_arpa(f)?,
            informal: read_arpa(i)?,
        }),
        (None, None) => None,
        _ => return Err(CliError::Validation("--formal-lm and --informal-lm go together".into())),
    };
    let config = AssemblyConfig {
        mt_size: a.mt_size,
        ..AssemblyConfig::new(a.mode, a.k, a.seed)
    };
    let out = assemble(&config, &ft, &pool, lms.as_ref())?;
    write_lines(&with_ext(&a.out_prefix, "src"), out.sources())?;
    write_lines(&with_ext(&a.out_prefix, "tgt"), out.targets())?;
    out.write_manifest(create(&with_ext(&a.out_prefix, "manifest.tsv"))?)?;
    eprintln!("{} examples", out.len());
    Ok(())
}

fn to_examples(vocab: &Vocab, src: &[TokenSeq], tgt: &[TokenSeq]) -> CliResult<Vec<Example>> {
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

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let (src, tgt) = (read_tokens(&a.train_src)?, read_tokens(&a.train_tgt)?);
    let vocab = Vocab::build(src.iter().chain(&tgt));
    vocab.write(create(&a.out_dir.join("vocab.txt"))?)?;
    let train_set = to_examples(&vocab, &src, &tgt)?;
    let dev = to_examples(&vocab, &read_tokens(&a.dev_src)?, &read_tokens(&a.dev_tgt)?)?;
    let mut config = TrainConfig {
        batch_size: a.batch_size,
        checkpoint_interval: a.checkpoint_interval,
        patience: a.patience,
        max_updates: a.max_updates,
        num_replicas: a.replicas,
        ..Default::default()
    };
    config.adam.lr = a.lr;
    let model = ModelConfig {
        vocab,
        embed_dim: a.embed_dim,
        hidden_dim: a.hidden_dim,
        attention_dim: a.attention_dim,
        dropout_p: a.dropout,
        seed: a.seed,
    };
    for (i, o) in train_replicas(&train_set, &dev, &model, &config)?.iter().enumerate() {
        save(&o.best, o.best_update as u64, &a.out_dir.join(format!("replica{i}.ckpt")))?;
        o.write_log(create(&a.out_dir.join(format!("replica{i}.log.jsonl")))?)?;
        eprintln!(
            "replica {i}: best dev perplexity {:.4} at update {} ({:?})",
            o.best_dev_ppl, o.best_update, o.stop
        );
    }
    Ok(())
}

fn cmd_decode(a: DecodeArgs) -> CliResult<()> {
    let models = a
        .model
        .iter()
        .map(|p| Ok(load(p)?.params))
        .collect::<CliResult<Vec<_>>>()?;
    let mut ens = Ensemble::new(models.iter().collect())?;
    ens.log_space = a.log_space;
    let vocab = ens.vocab().clone();
    if let Some(t) = &a.tag {
        if StyleTag::from_token(t).is_none() {
            return Err(CliError::Validation(format!("{t:?} is not a style tag")));
        }
    }
    let codes = a.codes.as_deref().map(read_codes).transpose()?;
    let src: Vec<Vec<u32>> = read_tokens(&a.input)?
        .iter()
        .map(|s| {
            let s = codes.as_ref().map_or_else(|| s.clone(), |c| c.encode(s));
            let s = a.tag.as_deref().map_or_else(|| s.clone(), |t| s.with_prefix(t));
            vocab.encode(&s)
        })
        .collect();
    let out: Vec<TokenSeq> = decode_all(&ens, &src, a.beam)?
        .iter()
        .map(|h| {
            let t = vocab.decode(&h.tokens);
            codes.as_ref().map_or(t.clone(), |c| c.decode(&t))
        })
        .collect();
    write_out(a.output.as_deref(), &out)
}

fn eval_set(hyp: &Path, refs: &[PathBuf]) -> CliResult<EvalSet> {
    let streams = refs.iter().map(|r| read_lines(r)).collect::<CliResult<Vec<_>>>()?;
    Ok(EvalSet::from_streams(read_lines(hyp)?, streams)?)
}

fn cmd_bleu(a: BleuArgs) -> CliResult<()> {
    let report = bleu(&eval_set(&a.hyp, &a.refs)?)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        println!("{report}");
    }
    Ok(())
}

fn cmd_bootstrap(a: BootstrapArgs) -> CliResult<()> {
    let set = eval_set(&a.sys_a, &a.refs)?;
    let b = read_lines(&a.sys_b)?;
    let r = bootstrap(&set.hypotheses, &b, &set.references, a.samples, a.seed)?;
    println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
    Ok(())
}

fn read_scores(path: &Path) -> CliResult<Vec<f64>> {
    read_lines(path)?
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Validation(format!("{}:{}: not a number: {l:?}", path.display(), i + 1)))
        })
        .collect()
}

fn cmd_ttest(a: TtestArgs) -> CliResult<()> {
    let r = paired_ttest(&read_scores(&a.a)?, &read_scores(&a.b)?)?;
    println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
    Ok(())
}

fn cmd_humaneval(a: HumanevalArgs) -> CliResult<()> {
    let judgments = read_judgments(open(&a.input)?, &a.input.display().to_string())?;
    let floor = (!a.no_floor).then_some(a.trust_floor);
    let scores = aggregate_all(&judgments, floor)?;
    let path = a.output.as_deref();
    let mut w = sink(path)?;
    write_aggregates(&scores, &mut w)?;
    w.flush().map_err(wio(path))
}

fn cmd_pipeline(a: PipelineArgs) -> CliResult<()> {
    let (config, doc) = load_config(&a.config, &a.overrides)?;
    if a.validate_only {
        let problems = validate_config(&config);
        if problems.is_empty() {
            println!("configuration is valid");
            return Ok(());
        }
        for p in &problems {
            println!("{p}");
        }
        return Err(CliError::Validation(format!("{} problem(s) found", problems.len())));
    }
    let stages = a
        .stages
        .map(|names| names.iter().map(|n| n.parse::<Stage>()).collect::<CliResult<Vec<_>>>())
        .transpose()?;
    let report = run_pipeline(&config, &doc, stages.as_deref())?;
    for t in &report.timings {
        eprintln!("{:<10} {:?} {:.2}s", t.name, t.status, t.seconds);
    }
    Ok(())
}
