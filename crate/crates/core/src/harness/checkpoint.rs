//! Binary model + replay-buffer container.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "AUIM"  version:u32  members:u32  n_sizes:u32  sizes:[u32; n_sizes]
//! logvar_min:f64  logvar_max:f64
//! state_dim:u32  action_dim:u32  n_angles:u32  angle_dims:[u32; n_angles]
//! input mean, input std, target mean, target std      (f32 each)
//! per member, per layer: W (row-major fan_in x fan_out), b   (f32)
//! count:u64  d_s:u32  d_a:u32
//! per transition: s, a, s_next, reward                  (f32)
//! ```
//!
//! Weights, normalizers, states, actions and rewards are kept at single
//! precision throughout training and acting, so the f32 encoding is
//! lossless.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::buffer::{ReplayBuffer, Transition};
use crate::dynamics::{Dense, EnsembleModel, GaussianNet, LogVarBounds, Normalizer};
use crate::error::{Error, Result};
use crate::types::{ActionVec, StateVec};

pub const MAGIC: &[u8; 4] = b"AUIM";
pub const VERSION: u32 = 1;

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::invalid("value does not fit in u32"))?;
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }

    fn u64(&mut self, v: usize) -> Result<()> {
        Ok(self.0.write_all(&(v as u64).to_le_bytes())?)
    }

    fn f64(&mut self, v: f64) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }

    fn f32s<'a>(&mut self, vals: impl IntoIterator<Item = &'a f64>) -> Result<()> {
        for &v in vals {
            self.0.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }
}

struct Reader<R: Read>(R);

fn corrupt(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::CorruptCheckpoint("unexpected end of file".into())
    } else {
        Error::Io(e)
    }
}

/// Upper bound on any single length field, to reject garbage before
/// allocating.
const MAX_LEN: usize = 1 << 28;

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(corrupt)?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let v = self.u32()?;
        if v > MAX_LEN {
            return Err(Error::CorruptCheckpoint(format!("implausible {what} {v}")));
        }
        Ok(v)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| Ok(f32::from_le_bytes(self.bytes()?) as f64)).collect()
    }

    fn at_end(&mut self) -> Result<bool> {
        let mut b = [0u8; 1];
        Ok(self.0.read(&mut b)? == 0)
    }
}

/// Serialize a model and its replay buffer.
pub fn write_checkpoint<W: Write>(w: W, model: &EnsembleModel, buf: &ReplayBuffer) -> Result<()> {
    let mut w = Writer(io::BufWriter::new(w));
    w.0.write_all(MAGIC)?;
    w.u32(VERSION as usize)?;
    w.u32(model.members().len())?;
    let sizes = model.layer_sizes();
    w.u32(sizes.len())?;
    for &s in &sizes {
        w.u32(s)?;
    }
    let b = model.bounds();
    w.f64(b.min)?;
    w.f64(b.max)?;
    use crate::dynamics::DeltaModel;
    let (ds, da) = (model.state_dim(), model.action_dim());
    w.u32(ds)?;
    w.u32(da)?;
    w.u32(model.angle_dims().len())?;
    for &d in model.angle_dims() {
        w.u32(d)?;
    }
    for norm in [model.input_norm(), model.target_norm()] {
        w.f32s(norm.mean.iter())?;
        w.f32s(norm.std.iter())?;
    }
    for net in model.members() {
        for layer in net.layers() {
            w.f32s(layer.w.iter())?;
            w.f32s(layer.b.iter())?;
        }
    }
    w.u64(buf.len())?;
    w.u32(ds)?;
    w.u32(da)?;
    for tr in buf.iter() {
        if tr.s.dim() != ds || tr.a.dim() != da {
            return Err(Error::DimensionMismatch { expected: ds, got: tr.s.dim() });
        }
        w.f32s(tr.s.iter())?;
        w.f32s(tr.a.iter())?;
        w.f32s(tr.s_next.iter())?;
        w.f32s([tr.reward].iter())?;
    }
    w.0.flush()?;
    Ok(())
}

/// Inverse of [`write_checkpoint`].
pub fn read_checkpoint<R: Read>(r: R) -> Result<(EnsembleModel, ReplayBuffer)> {
    let mut r = Reader(io::BufReader::new(r));
    if &r.bytes::<4>()? != MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::CorruptCheckpoint(format!("unsupported version {version}")));
    }
    let members = r.len("member count")?;
    let n_sizes = r.len("layer count")?;
    if n_sizes < 2 || members < 2 {
        return Err(Error::CorruptCheckpoint("degenerate architecture".into()));
    }
    let sizes = (0..n_sizes).map(|_| r.len("layer size")).collect::<Result<Vec<_>>>()?;
    let bounds = LogVarBounds { min: r.f64()?, max: r.f64()? };
    if !(bounds.min <= bounds.max) {
        return Err(Error::CorruptCheckpoint("invalid log-variance bounds".into()));
    }
    let ds = r.len("state dim")?;
    let da = r.len("action dim")?;
    let n_angles = r.len("angle count")?;
    let angle_dims = (0..n_angles).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let width = ds + n_angles + da;
    if sizes[0] != width || sizes[n_sizes - 1] != 2 * ds {
        return Err(Error::CorruptCheckpoint("layer sizes disagree with dimensions".into()));
    }
    let mut norm = |dim: usize| -> Result<Normalizer> {
        Ok(Normalizer { mean: Array1::from(r.f32s(dim)?), std: Array1::from(r.f32s(dim)?) })
    };
    let input_norm = norm(width)?;
    let target_norm = norm(ds)?;
    let mut nets = Vec::with_capacity(members);
    for _ in 0..members {
        let layers = sizes
            .windows(2)
            .map(|w| {
                let weights = Array2::from_shape_vec((w[0], w[1]), r.f32s(w[0] * w[1])?)
                    .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
                Ok(Dense { w: weights, b: Array1::from(r.f32s(w[1])?) })
            })
            .collect::<Result<Vec<_>>>()?;
        nets.push(GaussianNet::from_layers(layers, bounds)?);
    }
    let model = EnsembleModel::from_parts(ds, da, angle_dims, nets, input_norm, target_norm)
        .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;

    let count = r.u64()?;
    let (bs, ba) = (r.u32()?, r.u32()?);
    if bs != ds || ba != da || count > MAX_LEN as u64 {
        return Err(Error::CorruptCheckpoint("transition block header".into()));
    }
    let mut buf = ReplayBuffer::new();
    let bad = |e: Error| Error::CorruptCheckpoint(e.to_string());
    for _ in 0..count {
        let s = StateVec::new(r.f32s(ds)?).map_err(bad)?;
        let a = ActionVec::new(r.f32s(da)?).map_err(bad)?;
        let s_next = StateVec::new(r.f32s(ds)?).map_err(bad)?;
        let reward = r.f32s(1)?[0];
        buf.push(Transition::new(s, a, s_next, reward).map_err(bad)?);
    }
    if !r.at_end()? {
        return Err(Error::CorruptCheckpoint("trailing bytes".into()));
    }
    Ok((model, buf))
}

pub fn save_checkpoint(path: &Path, model: &EnsembleModel, buf: &ReplayBuffer) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_checkpoint(fs::File::create(path)?, model, buf)
}

pub fn load_checkpoint(path: &Path) -> Result<(EnsembleModel, ReplayBuffer)> {
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(Error::MissingArtifact(path.to_path_buf())),
        Err(e) => return Err(e.into()),
    };
    read_checkpoint(file)
}
