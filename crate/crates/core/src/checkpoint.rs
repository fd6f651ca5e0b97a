//! Versioned binary checkpoints.
//!
//! Layout: one ASCII header line `PCGEN-CHECKPOINT v<version>\n`, then
//! little-endian fields. Strings are a `u32` byte length followed by UTF-8.
//! Matrices are row-major `f64`.
//!
//! ```text
//! u32 n_layers, u64 sizes[n], str activation, f64 nu[n]
//! u64 seed, u32 epochs, str dataset, str preset, f64 lambda_m, lambda_w, lambda_x, u8 decay
//! u32 image_rows, u32 image_cols          (0, 0 for non-image data)
//! u32 n_refs, u32 ref_dim, f64 refs[n_refs * ref_dim]
//! forward[0..n-1], backward[0..n-1]       (shapes implied by sizes)
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{PcError, PcResult};
use crate::network::{Activation, LayerSpec, PcNetwork};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "PCGEN-CHECKPOINT v";

/// Where the weights came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    pub epochs: u32,
    pub dataset: String,
    pub preset: String,
    pub lambda_m: f64,
    pub lambda_w: f64,
    pub lambda_x: f64,
    pub decay: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub sizes: Vec<usize>,
    pub activation: Activation,
    pub nu: Vec<f64>,
    pub forward: Vec<DMatrix<f64>>,
    pub backward: Vec<DMatrix<f64>>,
    pub provenance: Provenance,
    /// `(rows, cols)` when inputs are images.
    pub image_shape: Option<(usize, usize)>,
    /// One reference input per class (exemplars or class means) used to
    /// score generated samples.
    pub references: Vec<DVector<f64>>,
}

impl Checkpoint {
    pub fn from_network(
        net: &PcNetwork,
        provenance: Provenance,
        image_shape: Option<(usize, usize)>,
        references: Vec<DVector<f64>>,
    ) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            sizes: net.sizes(),
            activation: net.activation(),
            nu: net.nu.clone(),
            forward: net.forward.clone(),
            backward: net.backward.clone(),
            provenance,
            image_shape,
            references,
        }
    }

    pub fn network(&self) -> PcResult<PcNetwork> {
        PcNetwork::new(
            LayerSpec::stack(&self.sizes, self.activation),
            self.forward.clone(),
            self.backward.clone(),
            self.nu.clone(),
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(format!("{MAGIC}{}\n", self.version).into_bytes());
        w.u32(self.sizes.len() as u32);
        for &s in &self.sizes {
            w.u64(s as u64);
        }
        w.str(self.activation.tag());
        w.f64s(&self.nu);

        let p = &self.provenance;
        w.u64(p.seed);
        w.u32(p.epochs);
        w.str(&p.dataset);
        w.str(&p.preset);
        w.f64s(&[p.lambda_m, p.lambda_w, p.lambda_x]);
        w.0.push(p.decay as u8);

        let (rows, cols) = self.image_shape.unwrap_or((0, 0));
        w.u32(rows as u32);
        w.u32(cols as u32);
        let ref_dim = self.references.first().map_or(0, |r| r.len());
        w.u32(self.references.len() as u32);
        w.u32(ref_dim as u32);
        for r in &self.references {
            w.f64s(r.as_slice());
        }
        for m in self.forward.iter().chain(&self.backward) {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    w.f64(m[(i, j)]);
                }
            }
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> PcResult<Self> {
        let newline = bytes
            .iter()
            .take(64)
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("missing header line"))?;
        let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| bad("header is not ASCII"))?;
        let version: u32 = header
            .strip_prefix(MAGIC)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(&format!("not a checkpoint (header {header:?})")))?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!(
                "unsupported version {version} (this build reads {CHECKPOINT_VERSION})"
            )));
        }

        let mut r = Reader {
            buf: &bytes[newline + 1..],
        };
        let n = r.u32()? as usize;
        if !(2..=64).contains(&n) {
            return Err(bad(&format!("implausible layer count {n}")));
        }
        let sizes = (0..n)
            .map(|_| r.u64().map(|s| s as usize))
            .collect::<PcResult<Vec<_>>>()?;
        let tag = r.str()?;
        let activation =
            Activation::from_tag(&tag).ok_or_else(|| bad(&format!("unknown activation {tag:?}")))?;
        let nu = r.f64s(n)?;

        let seed = r.u64()?;
        let epochs = r.u32()?;
        let dataset = r.str()?;
        let preset = r.str()?;
        let lambdas = r.f64s(3)?;
        let decay = match r.take(1)?[0] {
            0 => false,
            1 => true,
            b => return Err(bad(&format!("decay flag must be 0 or 1, found {b}"))),
        };

        let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
        let image_shape = (rows > 0 || cols > 0).then_some((rows, cols));
        let n_refs = r.u32()? as usize;
        let ref_dim = r.u32()? as usize;
        let references = (0..n_refs)
            .map(|_| r.f64s(ref_dim).map(DVector::from_vec))
            .collect::<PcResult<Vec<_>>>()?;

        let mut read_mats = |shape: &dyn Fn(usize) -> (usize, usize)| {
            (0..n - 1)
                .map(|i| {
                    let (rows, cols) = shape(i);
                    let data = r.f64s(rows.checked_mul(cols).ok_or_else(|| bad("shape overflow"))?)?;
                    Ok(DMatrix::from_row_slice(rows, cols, &data))
                })
                .collect::<PcResult<Vec<_>>>()
        };
        let forward = read_mats(&|i| (sizes[i + 1], sizes[i]))?;
        let backward = read_mats(&|i| (sizes[i], sizes[i + 1]))?;
        if !r.buf.is_empty() {
            return Err(bad(&format!("{} trailing bytes", r.buf.len())));
        }

        let ckpt = Checkpoint {
            version,
            sizes,
            activation,
            nu,
            forward,
            backward,
            provenance: Provenance {
                seed,
                epochs,
                dataset,
                preset,
                lambda_m: lambdas[0],
                lambda_w: lambdas[1],
                lambda_x: lambdas[2],
                decay,
            },
            image_shape,
            references,
        };
        ckpt.network()?;
        Ok(ckpt)
    }

    pub fn load(path: &Path) -> PcResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| PcError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            PcError::Checkpoint(msg) => PcError::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

fn bad(msg: &str) -> PcError {
    PcError::Checkpoint(msg.to_string())
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
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
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> PcResult<&'a [u8]> {
        if self.buf.len() < n {
            return Err(bad(&format!(
                "truncated: wanted {n} more bytes, {} left",
                self.buf.len()
            )));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }
    fn u32(&mut self) -> PcResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> PcResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> PcResult<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| bad("length overflow"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn str(&mut self) -> PcResult<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| bad("string is not UTF-8"))
    }
}
