//! Versioned little-endian binary containers for networks, generators and
//! training state.
//!
//! Every value is stored as its exact 64-bit pattern, so a save/load round
//! trip reproduces parameters bit for bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, WignerError};
use crate::network::{Activation, Layer, Mlp};
use crate::pushforward::{InitialDecomposition, InitialState, SignedGenerator, SignedPushforward};
use crate::scalar::Real;

pub const NETWORK_MAGIC: &[u8; 8] = b"WGNNET01";
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"WGNCKPT1";
pub const VERSION: u32 = 1;

#[derive(Debug, Default, Clone)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn len_prefix(&mut self, n: usize) {
        self.u64(n as u64);
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn real<T: Real>(&mut self, v: T) {
        self.f64(v.as_f64());
    }

    /// Length-prefixed array.
    pub fn reals<T: Real>(&mut self, vs: &[T]) {
        self.len_prefix(vs.len());
        for &v in vs {
            self.real(v);
        }
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug)]
pub struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| WignerError::Format(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn expect(&mut self, magic: &[u8]) -> Result<()> {
        if self.take(magic.len())? == magic {
            Ok(())
        } else {
            Err(WignerError::Format("bad magic".into()))
        }
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    /// A length prefix, rejected if it could not fit in the remaining bytes.
    pub fn len_prefix(&mut self, elem_size: usize) -> Result<usize> {
        let n = self.u64()?;
        let remaining = (self.buf.len() - self.pos) as u64;
        if n.saturating_mul(elem_size.max(1) as u64) > remaining {
            return Err(WignerError::Format(format!(
                "length {n} exceeds remaining data"
            )));
        }
        Ok(n as usize)
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub fn real<T: Real>(&mut self) -> Result<T> {
        self.f64().map(T::lit)
    }

    pub fn reals<T: Real>(&mut self) -> Result<Vec<T>> {
        let n = self.len_prefix(8)?;
        (0..n).map(|_| self.real()).collect()
    }

    pub fn is_at_end(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn finish(&self) -> Result<()> {
        if self.is_at_end() {
            Ok(())
        } else {
            Err(WignerError::Format(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )))
        }
    }
}

/// Header (layer count, then `inputs, outputs, activation` per layer)
/// followed by every layer's weights and bias.
pub fn write_mlp<T: Real>(w: &mut ByteWriter, net: &Mlp<T>) {
    w.u32(net.layers().len() as u32);
    for layer in net.layers() {
        w.u32(layer.inputs() as u32);
        w.u32(layer.outputs() as u32);
        w.u8(layer.activation.tag());
    }
    for layer in net.layers() {
        for &v in layer.weights.iter().chain(&layer.bias) {
            w.real(v);
        }
    }
}

pub fn read_mlp<T: Real>(r: &mut ByteReader<'_>) -> Result<Mlp<T>> {
    let n = r.u32()? as usize;
    if n == 0 {
        return Err(WignerError::Format("network without layers".into()));
    }
    let mut shapes = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let inputs = r.u32()? as usize;
        let outputs = r.u32()? as usize;
        shapes.push((inputs, outputs, Activation::from_tag(r.u8()?)?));
    }
    let mut layers = Vec::with_capacity(n);
    for (inputs, outputs, act) in shapes {
        let count = inputs
            .checked_mul(outputs)
            .and_then(|c| c.checked_add(outputs))
            .ok_or_else(|| WignerError::Format("layer too large".into()))?;
        let mut vals = (0..count).map(|_| r.real()).collect::<Result<Vec<T>>>()?;
        let bias = vals.split_off(inputs * outputs);
        if vals.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(WignerError::NonFinite("network parameters"));
        }
        layers.push(Layer::new(inputs, outputs, vals, bias, act)?);
    }
    Mlp::from_layers(layers)
}

/// Stand-alone network container.
pub fn encode_network<T: Real>(net: &Mlp<T>) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(NETWORK_MAGIC);
    w.u32(VERSION);
    write_mlp(&mut w, net);
    w.into_inner()
}

pub fn decode_network<T: Real>(bytes: &[u8]) -> Result<Mlp<T>> {
    let mut r = ByteReader::new(bytes);
    r.expect(NETWORK_MAGIC)?;
    check_version(r.u32()?)?;
    let net = read_mlp(&mut r)?;
    r.finish()?;
    Ok(net)
}

fn check_version(v: u32) -> Result<()> {
    if v == VERSION {
        Ok(())
    } else {
        Err(WignerError::Format(format!("unsupported version {v}")))
    }
}

fn write_decomposition<T: Real>(w: &mut ByteWriter, d: &InitialDecomposition<T>) {
    match d.state() {
        InitialState::Coherent {
            center_x,
            center_p,
            sigma_x,
            sigma_p,
        } => {
            w.u8(0);
            w.reals(center_x);
            w.reals(center_p);
            w.real(*sigma_x);
            w.real(*sigma_p);
        }
        InitialState::FirstExcited {
            dim,
            mass,
            omega,
            hbar,
        } => {
            w.u8(1);
            w.u64(*dim as u64);
            w.real(*mass);
            w.real(*omega);
            w.real(*hbar);
        }
    }
}

fn read_decomposition<T: Real>(r: &mut ByteReader<'_>) -> Result<InitialDecomposition<T>> {
    let state = match r.u8()? {
        0 => InitialState::Coherent {
            center_x: r.reals()?,
            center_p: r.reals()?,
            sigma_x: r.real()?,
            sigma_p: r.real()?,
        },
        1 => InitialState::FirstExcited {
            dim: r.u64()? as usize,
            mass: r.real()?,
            omega: r.real()?,
            hbar: r.real()?,
        },
        tag => {
            return Err(WignerError::Format(format!(
                "unknown decomposition tag {tag}"
            )))
        }
    };
    InitialDecomposition::new(state)
}

/// Everything needed to draw samples from a trained solution.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorCheckpoint<T> {
    pub sp: SignedPushforward<T>,
    pub decomp: InitialDecomposition<T>,
    pub horizon: T,
    pub hbar: T,
    pub mass: T,
}

/// Generator section followed by an optional opaque trainer section.
pub fn encode_checkpoint<T: Real>(ck: &GeneratorCheckpoint<T>, trainer: Option<&[u8]>) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(CHECKPOINT_MAGIC);
    w.u32(VERSION);
    w.u64(ck.sp.dim() as u64);
    w.u64(ck.sp.noise_dim() as u64);
    write_mlp(&mut w, &ck.sp.plus);
    write_mlp(&mut w, &ck.sp.minus);
    w.real(ck.sp.alpha_raw);
    w.u8(ck.sp.alpha_frozen as u8);
    write_decomposition(&mut w, &ck.decomp);
    w.real(ck.horizon);
    w.real(ck.hbar);
    w.real(ck.mass);
    match trainer {
        Some(bytes) => {
            w.u8(1);
            w.len_prefix(bytes.len());
            w.bytes(bytes);
        }
        None => w.u8(0),
    }
    w.into_inner()
}

pub fn decode_checkpoint<T: Real>(
    bytes: &[u8],
) -> Result<(GeneratorCheckpoint<T>, Option<Vec<u8>>)> {
    let mut r = ByteReader::new(bytes);
    r.expect(CHECKPOINT_MAGIC)?;
    check_version(r.u32()?)?;
    let dim = r.u64()? as usize;
    let noise_dim = r.u64()? as usize;
    let plus = read_mlp(&mut r)?;
    let minus = read_mlp(&mut r)?;
    let alpha_raw = r.real()?;
    let alpha_frozen = match r.u8()? {
        0 => false,
        1 => true,
        v => return Err(WignerError::Format(format!("bad flag {v}"))),
    };
    let sp = SignedPushforward::from_parts(dim, noise_dim, plus, minus, alpha_raw, alpha_frozen)?;
    let decomp = read_decomposition(&mut r)?;
    let horizon = r.real()?;
    let hbar = r.real()?;
    let mass = r.real()?;
    let trainer = match r.u8()? {
        0 => None,
        1 => {
            let n = r.len_prefix(1)?;
            Some(r.take(n)?.to_vec())
        }
        v => return Err(WignerError::Format(format!("bad flag {v}"))),
    };
    r.finish()?;
    Ok((
        GeneratorCheckpoint {
            sp,
            decomp,
            horizon,
            hbar,
            mass,
        },
        trainer,
    ))
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    {
        let mut f = fs::File::create(tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}
