//! Binary checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic           8 bytes   "FSNKCKPT"
//! format_version  u32
//! payload_len     u64
//! checksum        32 bytes  SHA-256 of the payload
//! payload         payload_len bytes
//! ```
//!
//! The payload is a flat sequence: config hash (u32 length + UTF-8), epoch
//! (u64), step (u64), rng state (32-byte seed, u64 stream, u128 word
//! position), image encoder, text encoder, optimizer. An encoder is kind (u8),
//! input/hidden/output dims (u64 each), layer count (u32) and per layer the
//! weight shape (two u64) followed by its f64 values in row-major order, then
//! the bias length (u64) and values. The optimizer is step count (u64),
//! learning rate, beta1, beta2, epsilon, weight decay (f64 each), block count
//! (u32) and per block its length (u64), first moments, second moments.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{AdamConfig, Dense, DualEncoder, EncoderKind, EncoderParams, OptimizerState};
use crate::{Error, Result, FORMAT_VERSION};

const MAGIC: &[u8; 8] = b"FSNKCKPT";
const HEADER_LEN: usize = 8 + 4 + 8 + 32;

/// Serializable position of a ChaCha8 generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: DualEncoder,
    pub optimizer: OptimizerState,
    pub config_hash: String,
    pub rng_state: RngState,
    pub epoch: u64,
    pub step: u64,
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for &x in v {
            self.f64(x);
        }
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }

    fn encoder(&mut self, e: &EncoderParams) {
        self.u8(match e.kind {
            EncoderKind::Linear => 0,
            EncoderKind::Mlp1 => 1,
        });
        self.usize(e.input_dim);
        self.usize(e.hidden_dim);
        self.usize(e.output_dim);
        self.u32(e.layers.len() as u32);
        for l in &e.layers {
            self.usize(l.weight.nrows());
            self.usize(l.weight.ncols());
            self.f64s(l.weight.as_slice().expect("standard layout"));
            self.usize(l.bias.len());
            self.f64s(l.bias.as_slice().expect("standard layout"));
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn truncated() -> Error {
    Error::Checksum("payload truncated".into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or_else(truncated)?;
        let s = self.buf.get(self.pos..end).ok_or_else(truncated)?;
        self.pos = end;
        Ok(s)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.array()?))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checksum("length overflow".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if n.saturating_mul(8) > self.buf.len() - self.pos {
            return Err(truncated());
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checksum("config hash is not UTF-8".into()))
    }

    fn encoder(&mut self) -> Result<EncoderParams> {
        let kind = match self.u8()? {
            0 => EncoderKind::Linear,
            1 => EncoderKind::Mlp1,
            k => return Err(Error::Checksum(format!("unknown encoder kind {k}"))),
        };
        let input_dim = self.usize()?;
        let hidden_dim = self.usize()?;
        let output_dim = self.usize()?;
        let n_layers = self.u32()?;
        let mut layers = Vec::new();
        for _ in 0..n_layers {
            let rows = self.usize()?;
            let cols = self.usize()?;
            let weight = Array2::from_shape_vec((rows, cols), self.f64s(rows.saturating_mul(cols))?)
                .map_err(|e| Error::Checksum(e.to_string()))?;
            let n = self.usize()?;
            let bias = Array1::from(self.f64s(n)?);
            layers.push(Dense { weight, bias });
        }
        let enc = EncoderParams {
            kind,
            input_dim,
            hidden_dim,
            output_dim,
            layers,
        };
        enc.validate()
            .map_err(|e| Error::Checksum(e.to_string()))?;
        Ok(enc)
    }
}

fn encode_payload(c: &Checkpoint) -> Vec<u8> {
    let mut w = Writer::default();
    w.str(&c.config_hash);
    w.u64(c.epoch);
    w.u64(c.step);
    w.0.extend_from_slice(&c.rng_state.seed);
    w.u64(c.rng_state.stream);
    w.u128(c.rng_state.word_pos);
    w.encoder(&c.model.image);
    w.encoder(&c.model.text);
    let o = &c.optimizer;
    w.u64(o.step_count);
    let cfg = o.config;
    w.f64s(&[cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon, cfg.weight_decay]);
    w.u32(o.first_moment.len() as u32);
    for (m, v) in o.first_moment.iter().zip(&o.second_moment) {
        w.usize(m.len());
        w.f64s(m);
        w.f64s(v);
    }
    w.0
}

fn decode_payload(buf: &[u8], format_version: u32) -> Result<Checkpoint> {
    let mut r = Reader { buf, pos: 0 };
    let config_hash = r.str()?;
    let epoch = r.u64()?;
    let step = r.u64()?;
    let rng_state = RngState {
        seed: r.array()?,
        stream: r.u64()?,
        word_pos: r.u128()?,
    };
    let image = r.encoder()?;
    let text = r.encoder()?;
    let step_count = r.u64()?;
    let config = AdamConfig {
        learning_rate: r.f64()?,
        beta1: r.f64()?,
        beta2: r.f64()?,
        epsilon: r.f64()?,
        weight_decay: r.f64()?,
    };
    let n_blocks = r.u32()?;
    let mut first_moment = Vec::new();
    let mut second_moment = Vec::new();
    for _ in 0..n_blocks {
        let n = r.usize()?;
        first_moment.push(r.f64s(n)?);
        second_moment.push(r.f64s(n)?);
    }
    if r.pos != buf.len() {
        return Err(Error::Checksum("trailing bytes after payload".into()));
    }
    Ok(Checkpoint {
        format_version,
        model: DualEncoder { image, text },
        optimizer: OptimizerState {
            config,
            step_count,
            first_moment,
            second_moment,
        },
        config_hash,
        rng_state,
        epoch,
        step,
    })
}

pub fn checkpoint_to_bytes(c: &Checkpoint) -> Vec<u8> {
    let payload = encode_payload(c);
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&c.format_version.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&Sha256::digest(&payload));
    out.extend_from_slice(&payload);
    out
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::Checksum("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(truncated());
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let payload = &bytes[HEADER_LEN..];
    if payload.len() as u64 != len {
        return Err(Error::Checksum(format!(
            "payload is {} bytes, header says {len}",
            payload.len()
        )));
    }
    if Sha256::digest(payload).as_slice() != &bytes[20..52] {
        return Err(Error::Checksum("checksum mismatch".into()));
    }
    decode_payload(payload, version)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint_to_bytes(ckpt)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}
