//! Binary checkpoint container.
//!
//! ```text
//! magic    b"FSMTCKPT"
//! version  u32
//! config   u64 length + UTF-8 JSON (model config with vocabulary)
//! update   u64
//! count    u32 tensors, each:
//!          u32 name length + name, u32 rows, u32 cols, rows*cols f64
//! ```
//!
//! Integers and floats are little-endian.

use std::io::{Read, Write};

use byteorder::{ReadBytesExt, WriteBytesExt, LE};
use fsmt_core::{Error, Result};

use crate::params::{ModelConfig, Params, Tensor};

pub const MAGIC: &[u8; 8] = b"FSMTCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: Params,
    pub update: u64,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Argument(format!("malformed checkpoint: {}", msg.into()))
}

pub fn write_checkpoint<W: Write>(params: &Params, update: u64, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    let config = serde_json::to_vec(&params.config).map_err(std::io::Error::from)?;
    w.write_u64::<LE>(config.len() as u64)?;
    w.write_all(&config)?;
    w.write_u64::<LE>(update)?;
    w.write_u32::<LE>(Tensor::ALL.len() as u32)?;
    let dims = params.dims();
    for t in Tensor::ALL {
        let name = t.name().as_bytes();
        w.write_u32::<LE>(name.len() as u32)?;
        w.write_all(name)?;
        let (r, c) = t.shape(&dims);
        w.write_u32::<LE>(r as u32)?;
        w.write_u32::<LE>(c as u32)?;
        for &x in params.get(t) {
            w.write_f64::<LE>(x)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = r.read_u32::<LE>()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let len = r.read_u64::<LE>()? as usize;
    let mut config = vec![0u8; len];
    r.read_exact(&mut config)?;
    let config: ModelConfig =
        serde_json::from_slice(&config).map_err(|e| bad(format!("config: {e}")))?;
    let update = r.read_u64::<LE>()?;
    let count = r.read_u32::<LE>()? as usize;
    let mut params = Params::init(config)?;
    params.data.fill(f64::NAN);
    let dims = params.dims();
    let mut seen = Vec::with_capacity(count);
    for _ in 0..count {
        let n = r.read_u32::<LE>()? as usize;
        let mut name = vec![0u8; n];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| bad("tensor name is not UTF-8"))?;
        let t = Tensor::from_name(&name).ok_or_else(|| bad(format!("unknown tensor {name}")))?;
        if seen.contains(&t) {
            return Err(bad(format!("duplicate tensor {name}")));
        }
        seen.push(t);
        let shape = (r.read_u32::<LE>()? as usize, r.read_u32::<LE>()? as usize);
        if shape != t.shape(&dims) {
            return Err(bad(format!("{name} has shape {shape:?}, expected {:?}", t.shape(&dims))));
        }
        for x in params.get_mut(t) {
            *x = r.read_f64::<LE>()?;
        }
    }
    if seen.len() != Tensor::ALL.len() {
        return Err(bad("missing tensors"));
    }
    Ok(Checkpoint { params, update })
}

pub fn save(params: &Params, update: u64, path: &std::path::Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_checkpoint(params, update, std::io::BufWriter::new(f))
}

pub fn load(path: &std::path::Path) -> Result<Checkpoint> {
    let f = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(f))
}
