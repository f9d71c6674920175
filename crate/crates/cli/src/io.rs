//! Line-oriented file helpers.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use fsmt_core::textproc::read_raw_lines;
use fsmt_core::TokenSeq;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

/// Writes to `path`, or to stdout when `path` is `None`.
pub fn sink(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

/// UTF-8 lines without terminators; invalid UTF-8 names the line.
pub fn read_lines(path: &Path) -> CliResult<Vec<String>> {
    let mut buf = Vec::new();
    open(path)?.read_to_end(&mut buf).map_err(|e| CliError::io(path, e))?;
    let raw = read_raw_lines(&buf[..]).map_err(|e| match e {
        fsmt_core::Error::Decode { line_no } => {
            CliError::Validation(format!("{}: line {line_no}: invalid UTF-8", path.display()))
        }
        other => other.into(),
    })?;
    Ok(raw.into_iter().map(|l| l.text).collect())
}

/// Whitespace-tokenized lines.
pub fn read_tokens(path: &Path) -> CliResult<Vec<TokenSeq>> {
    Ok(read_lines(path)?.iter().map(|l| TokenSeq::from_line(l)).collect())
}

pub fn write_lines<I, S>(path: &Path, lines: I) -> CliResult<()>
where
    I: IntoIterator<Item = S>,
    S: std::fmt::Display,
{
    let mut w = create(path)?;
    for l in lines {
        writeln!(w, "{l}").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn count_lines(path: &Path) -> CliResult<usize> {
    Ok(read_lines(path)?.len())
}

/// Hex SHA-256 of a file's bytes.
pub fn digest(path: &Path) -> CliResult<String> {
    let mut h = Sha256::new();
    let mut r = open(path)?;
    let mut buf = [0u8; 1 << 16];
    loop {
        let k = r.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if k == 0 {
            break;
        }
        h.update(&buf[..k]);
    }
    Ok(hex::encode(h.finalize()))
}
