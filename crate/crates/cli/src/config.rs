//! Declarative pipeline configuration.
//!
//! A JSON document; relative paths resolve against the file's directory.
//! `key.path=value` overrides are applied to the parsed document before it
//! is checked, so every field can be set from the command line.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use fsmt_core::assembly::{bilingual_size, AssemblyConfig, AssemblyMode};
use fsmt_core::bpe::DEFAULT_MARKER;
use fsmt_core::style::is_tag_token;
use fsmt_core::{LmConfig, StyleTag};
use fsmt_nmt::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::io::read_lines;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub ft_informal: PathBuf,
    pub ft_formal: PathBuf,
    pub pool_src: PathBuf,
    pub pool_tgt: PathBuf,
    pub dev_informal: PathBuf,
    pub dev_formal: PathBuf,
    pub test_src: PathBuf,
    pub test_refs: Vec<PathBuf>,
}

impl Inputs {
    /// (config key, path) for every external file.
    pub fn named(&self) -> Vec<(String, &Path)> {
        let mut v: Vec<(String, &Path)> = vec![
            ("ft_informal".into(), &self.ft_informal),
            ("ft_formal".into(), &self.ft_formal),
            ("pool_src".into(), &self.pool_src),
            ("pool_tgt".into(), &self.pool_tgt),
            ("dev_informal".into(), &self.dev_informal),
            ("dev_formal".into(), &self.dev_formal),
            ("test_src".into(), &self.test_src),
        ];
        for (i, r) in self.test_refs.iter().enumerate() {
            v.push((format!("test_refs.{i}"), r));
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssemblySection {
    pub mode: AssemblyMode,
    pub k: usize,
    pub mt_size: Option<usize>,
}

impl Default for AssemblySection {
    fn default() -> Self {
        AssemblySection {
            mode: AssemblyMode::MultitaskStyle,
            k: 1,
            mt_size: None,
        }
    }
}

impl AssemblySection {
    pub fn with_seed(&self, seed: u64) -> AssemblyConfig {
        AssemblyConfig {
            mode: self.mode,
            k: self.k,
            seed,
            mt_size: self.mt_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BpeSection {
    pub merges: usize,
    pub marker: String,
}

impl Default for BpeSection {
    fn default() -> Self {
        BpeSection {
            merges: 200,
            marker: DEFAULT_MARKER.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub dropout_p: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            embed_dim: 64,
            hidden_dim: 64,
            attention_dim: 64,
            dropout_p: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Tags to decode the test set with; an empty list decodes untagged.
    pub tags: Vec<String>,
    pub bootstrap_samples: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            tags: StyleTag::ALL.iter().map(|t| t.token().to_string()).collect(),
            bootstrap_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub inputs: Inputs,
    #[serde(default)]
    pub lm: LmConfig,
    #[serde(default)]
    pub assembly: AssemblySection,
    #[serde(default)]
    pub bpe: BpeSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub evaluate: EvalSection,
}

impl PipelineConfig {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or_default()
    }

    /// Rebases every relative path onto `base`.
    pub fn resolve(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        let i = &mut self.inputs;
        for p in [
            &mut i.ft_informal,
            &mut i.ft_formal,
            &mut i.pool_src,
            &mut i.pool_tgt,
            &mut i.dev_informal,
            &mut i.dev_formal,
            &mut i.test_src,
        ] {
            fix(p);
        }
        i.test_refs.iter_mut().for_each(fix);
        self
    }
}

/// Parses a `key.path=value` override; the value is JSON when it parses as
/// JSON and a plain string otherwise.
pub fn parse_override(s: &str) -> CliResult<(Vec<String>, Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("override {s:?} is not of the form key.path=value")))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::Validation(format!("override {s:?} has an empty key segment")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.split('.').map(String::from).collect(), value))
}

pub fn apply_override(doc: &mut Value, path: &[String], value: Value) -> CliResult<()> {
    let mut cur = doc;
    for (i, seg) in path.iter().enumerate() {
        let last = i + 1 == path.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(seg.clone(), value);
                    return Ok(());
                }
                map.entry(seg.clone()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| CliError::Validation(format!("{}: {seg:?} is not an array index", path.join("."))))?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| {
                    CliError::Validation(format!("{}: index {idx} out of range (length {len})", path.join(".")))
                })?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(CliError::Validation(format!(
                    "{}: cannot descend into a scalar at {seg:?}",
                    path.join(".")
                )))
            }
        };
    }
    Ok(())
}

/// Parses a config document and applies overrides. Syntax errors carry the
/// line and column; type errors name the offending field.
pub fn parse_config(text: &str, source: &str, overrides: &[String]) -> CliResult<(PipelineConfig, Value)> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| {
        CliError::Validation(format!("{source}:{}:{}: {e}", e.line(), e.column()))
    })?;
    for o in overrides {
        let (path, value) = parse_override(o)?;
        apply_override(&mut doc, &path, value)?;
    }
    let config = serde_json::from_value(doc.clone()).map_err(|e| CliError::Validation(format!("{source}: {e}")))?;
    Ok((config, doc))
}

/// Reads, overrides and resolves a config file. Also returns the document
/// as parsed (before path resolution) for the run manifest.
pub fn load_config(path: &Path, overrides: &[String]) -> CliResult<(PipelineConfig, Value)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let (config, doc) = parse_config(&text, &path.display().to_string(), overrides)?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok((config.resolve(base), doc))
}

/// Every problem found; an empty list means the config is usable. Only
/// reads the filesystem.
pub fn validate_config(config: &PipelineConfig) -> Vec<String> {
    let mut problems = Vec::new();
    if config.seed.is_none() {
        problems.push("seed is not set".to_string());
    }
    let a = &config.assembly;
    if a.k == 0 {
        problems.push("assembly.k must be at least 1: the bilingual sample holds k·n lines for n FT examples".into());
    }
    if a.mt_size.is_some() && a.mode != AssemblyMode::ConstraintOnly {
        problems.push(format!("assembly.mt_size only applies to constraint_only, not {}", a.mode));
    }
    let m = &config.model;
    if m.embed_dim == 0 || m.hidden_dim == 0 || m.attention_dim == 0 {
        problems.push("model dimensions must be at least 1".into());
    }
    if !(0.0..1.0).contains(&m.dropout_p) {
        problems.push(format!("model.dropout_p {} outside [0, 1)", m.dropout_p));
    }
    if let Err(e) = config.train.validate() {
        problems.push(format!("train: {e}"));
    }
    if config.lm.order == 0 {
        problems.push("lm.order must be at least 1".into());
    }
    if config.evaluate.bootstrap_samples < 100 && config.evaluate.tags.len() >= 2 {
        problems.push("evaluate.bootstrap_samples must be at least 100".into());
    }
    let marker = &config.bpe.marker;
    if marker.is_empty() || marker.chars().any(char::is_whitespace) {
        problems.push(format!("bpe.marker {marker:?} must be non-empty and free of whitespace"));
    }
    if is_tag_token(marker) {
        problems.push(format!("bpe.marker {marker:?} collides with a reserved style tag"));
    }
    let mut seen_tags = BTreeSet::new();
    for t in &config.evaluate.tags {
        if !is_tag_token(t) {
            problems.push(format!("evaluate.tags: {t:?} is not a style tag (expected <F> or <I>)"));
        } else if !seen_tags.insert(t) {
            problems.push(format!("evaluate.tags: {t} listed twice"));
        }
    }
    if config.inputs.test_refs.is_empty() {
        problems.push("inputs.test_refs needs at least one reference file".into());
    }

    let mut lines = Vec::new();
    for (name, path) in config.inputs.named() {
        if !path.is_file() {
            problems.push(format!("inputs.{name}: {} does not exist", path.display()));
            continue;
        }
        match read_lines(path) {
            Ok(ls) => {
                scan_reserved(&name, &ls, marker, &mut problems);
                lines.push((name, ls.len()));
            }
            Err(e) => problems.push(format!("inputs.{name}: {e}")),
        }
    }
    let count = |key: &str| lines.iter().find(|(n, _)| n == key).map(|l| l.1);
    let pairs = |a: &str, b: &str, problems: &mut Vec<String>| {
        if let (Some(x), Some(y)) = (count(a), count(b)) {
            if x != y {
                problems.push(format!("inputs.{a} has {x} lines but inputs.{b} has {y}"));
            }
        }
    };
    pairs("ft_informal", "ft_formal", &mut problems);
    pairs("pool_src", "pool_tgt", &mut problems);
    pairs("dev_informal", "dev_formal", &mut problems);
    for i in 0..config.inputs.test_refs.len() {
        pairs("test_src", &format!("test_refs.{i}"), &mut problems);
    }
    if let (Some(ft), Some(pool)) = (count("ft_informal"), count("pool_src")) {
        if a.k > 0 {
            let n = 2 * ft;
            let want = bilingual_size(&a.with_seed(0), n);
            if want > pool {
                problems.push(format!(
                    "assembly needs k·n = {want} bilingual lines but the pool holds {pool}; the largest feasible k is {}",
                    if n > 0 { pool / n } else { 0 }
                ));
            }
            if matches!(a.mode, AssemblyMode::ConstraintOnly | AssemblyMode::MultitaskTagStyle | AssemblyMode::MultitaskStyle)
                && want % 2 != 0
            {
                problems.push(format!("{} splits {want} bilingual lines between two styles; the count must be even", a.mode));
            }
        }
    }
    problems
}

/// Raw text must not contain the BPE marker or the reserved tag tokens.
fn scan_reserved(name: &str, lines: &[String], marker: &str, problems: &mut Vec<String>) {
    if !marker.is_empty() {
        if let Some(i) = lines.iter().position(|l| l.contains(marker)) {
            problems.push(format!(
                "inputs.{name}: line {} contains the BPE marker {marker:?}; raw text must not contain the marker",
                i + 1
            ));
        }
    }
    let tag = lines
        .iter()
        .enumerate()
        .find_map(|(i, l)| l.split_whitespace().find(|t| is_tag_token(t)).map(|t| (i, t)));
    if let Some((i, t)) = tag {
        problems.push(format!("inputs.{name}: line {} uses the reserved tag token {t}", i + 1));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_edit_nested_keys() {
        let mut doc = json!({"train": {"beam": 5}, "inputs": {"test_refs": ["a", "b"]}});
        let (p, v) = parse_override("train.beam=3").unwrap();
        apply_override(&mut doc, &p, v).unwrap();
        let (p, v) = parse_override("inputs.test_refs.1=c").unwrap();
        apply_override(&mut doc, &p, v).unwrap();
        let (p, v) = parse_override("assembly.mode=ft_only").unwrap();
        apply_override(&mut doc, &p, v).unwrap();
        assert_eq!(doc, json!({"train": {"beam": 3}, "inputs": {"test_refs": ["a", "c"]}, "assembly": {"mode": "ft_only"}}));
        assert!(parse_override("novalue").is_err());
        assert!(parse_override("a..b=1").is_err());
        let (p, v) = parse_override("train.beam.x=1").unwrap();
        assert!(apply_override(&mut doc, &p, v).is_err());
    }

    #[test]
    fn syntax_errors_carry_a_location() {
        let err = parse_config("{\n  \"seed\": 1,\n  oops\n}", "c.json", &[]).unwrap_err();
        assert!(err.to_string().starts_with("c.json:3:"), "{err}");
        let err = parse_config("{\"seed\": 1}", "c.json", &[]).unwrap_err();
        assert!(err.to_string().contains("missing field"), "{err}");
    }
}
