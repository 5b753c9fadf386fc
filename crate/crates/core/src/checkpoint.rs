//! Model checkpoints (SRCK container).
//!
//! Little-endian throughout:
//!
//! ```text
//! "SRCK"                       magic
//! u32 version = 1
//! u32 n_res_blocks, n_features, n_bottleneck, out_channels
//! u64 iteration                completed training iterations
//! u32 flags                    bit 0: Adam state follows the parameters
//! u32 tensor count
//! tensor record × count        in ModelParams::views order
//! [if flag bit 0]
//!   u64 t; f64 beta1, beta2, epsilon
//!   tensor record × count      first moments
//!   tensor record × count      second moments
//! ```
//!
//! A tensor record is `u16 name length, name (UTF-8), u8 rank, u32 dims[rank],
//! f32 data[product(dims)]`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::optim::{AdamHyper, AdamState};

pub const SRCK_MAGIC: [u8; 4] = *b"SRCK";
pub const SRCK_VERSION: u32 = 1;
const FLAG_OPTIMIZER: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub iteration: u64,
    pub optimizer: Option<AdamState<f32>>,
}

impl Checkpoint {
    pub fn new(params: ModelParams<f32>) -> Self {
        Self {
            params,
            iteration: 0,
            optimizer: None,
        }
    }
}

fn write_tensors(out: &mut Vec<u8>, params: &ModelParams<f32>) {
    for v in params.views() {
        out.extend_from_slice(&(v.name.len() as u16).to_le_bytes());
        out.extend_from_slice(v.name.as_bytes());
        out.push(v.dims.len() as u8);
        for &d in &v.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in v.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let p = &ck.params;
    let mut out = Vec::with_capacity(64 + 4 * p.param_count() * if ck.optimizer.is_some() { 3 } else { 1 });
    out.extend_from_slice(&SRCK_MAGIC);
    out.extend_from_slice(&SRCK_VERSION.to_le_bytes());
    let c = p.config;
    for v in [c.n_res_blocks, c.n_features, c.n_bottleneck, c.out_channels] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&ck.iteration.to_le_bytes());
    let flags = if ck.optimizer.is_some() { FLAG_OPTIMIZER } else { 0 };
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&(p.views().len() as u32).to_le_bytes());
    write_tensors(&mut out, p);
    if let Some(st) = &ck.optimizer {
        out.extend_from_slice(&st.t.to_le_bytes());
        for h in [st.hyper.beta1, st.hyper.beta2, st.hyper.epsilon] {
            out.extend_from_slice(&h.to_le_bytes());
        }
        write_tensors(&mut out, &st.m);
        write_tensors(&mut out, &st.v);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            kind: "SRCK",
            offset: self.pos as u64,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                kind: "SRCK",
                offset: self.bytes.len() as u64,
                msg: format!("truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    /// Fills `target` from tensor records, checking names and dims.
    fn read_tensors(&mut self, target: &mut ModelParams<f32>) -> Result<()> {
        for v in target.views_mut() {
            let start = self.pos;
            let len = self.u16("tensor name length")? as usize;
            let name = self.take(len, "tensor name")?;
            if name != v.name.as_bytes() {
                self.pos = start;
                return Err(self.err(format!(
                    "expected tensor `{}`, found `{}`",
                    v.name,
                    String::from_utf8_lossy(name)
                )));
            }
            let rank_pos = self.pos;
            let rank = self.u8("tensor rank")? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(self.u32("tensor dim")? as usize);
            }
            if dims != v.dims {
                self.pos = rank_pos;
                return Err(self.err(format!("tensor `{}` has dims {dims:?}, expected {:?}", v.name, v.dims)));
            }
            let raw = self.take(4 * v.data.len(), "tensor data")?;
            for (x, b) in v.data.iter_mut().zip(raw.chunks_exact(4)) {
                *x = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            }
        }
        Ok(())
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != SRCK_MAGIC {
        r.pos = 0;
        return Err(r.err("bad magic"));
    }
    let version = r.u32("version")?;
    if version != SRCK_VERSION {
        r.pos = 4;
        return Err(r.err(format!("unsupported version {version}")));
    }
    let cfg_pos = r.pos;
    let config = ModelConfig {
        n_res_blocks: r.u32("n_res_blocks")? as usize,
        n_features: r.u32("n_features")? as usize,
        n_bottleneck: r.u32("n_bottleneck")? as usize,
        out_channels: r.u32("out_channels")? as usize,
    };
    // refuse absurd layouts before allocating
    if config.n_res_blocks > 1024 || config.n_features > 1 << 16 || config.out_channels > 1 << 16 {
        r.pos = cfg_pos;
        return Err(r.err(format!("implausible model config {config:?}")));
    }
    let mut params = ModelParams::<f32>::zeros(config).map_err(|e| {
        r.pos = cfg_pos;
        r.err(e.to_string())
    })?;
    let iteration = r.u64("iteration")?;
    let flags = r.u32("flags")?;
    if flags & !FLAG_OPTIMIZER != 0 {
        r.pos -= 4;
        return Err(r.err(format!("unknown flags {flags:#x}")));
    }
    let count = r.u32("tensor count")? as usize;
    if count != params.views().len() {
        r.pos -= 4;
        return Err(r.err(format!("tensor count {count}, expected {}", params.views().len())));
    }
    r.read_tensors(&mut params)?;
    let optimizer = if flags & FLAG_OPTIMIZER != 0 {
        let t = r.u64("adam step")?;
        let hyper = AdamHyper {
            beta1: r.f64("beta1")?,
            beta2: r.f64("beta2")?,
            epsilon: r.f64("epsilon")?,
        };
        let mut st = AdamState::with_hyper(&params, hyper);
        st.t = t;
        r.read_tensors(&mut st.m)?;
        r.read_tensors(&mut st.v)?;
        Some(st)
    } else {
        None
    };
    if r.pos != bytes.len() {
        return Err(r.err(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Checkpoint {
        params,
        iteration,
        optimizer,
    })
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(ck)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// `ckpt_<iteration, 9 digits>.srck`
pub fn checkpoint_file_name(iteration: u64) -> String {
    format!("ckpt_{iteration:09}.srck")
}
