//! The GELW weights format.
//!
//! Layout (little-endian): magic `b"GELW"`, version u32 (= 1), then named
//! tensors until end of file, each as: name length u16, UTF-8 name bytes,
//! rank u8, `rank` dims as u32, binary32 payload.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use super::{cast, ParamStore, Scalar};
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"GELW";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn vector(name: impl Into<String>, data: Vec<f32>) -> Self {
        Self {
            name: name.into(),
            dims: vec![data.len()],
            data,
        }
    }

    pub fn matrix<F: Scalar>(name: impl Into<String>, m: &Array2<F>) -> Self {
        let m: Array2<f32> = cast(m);
        Self {
            name: name.into(),
            dims: vec![m.nrows(), m.ncols()],
            data: m.iter().copied().collect(),
        }
    }

    /// View as a matrix; rank-1 tensors become a single row.
    pub fn to_matrix<F: Scalar>(&self) -> Result<Array2<F>> {
        let (r, c) = match self.dims.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            other => {
                return Err(Error::Format(format!(
                    "tensor `{}` has rank {}, expected 1 or 2",
                    self.name,
                    other.len()
                )))
            }
        };
        let m = Array2::from_shape_vec((r, c), self.data.clone())
            .map_err(|e| Error::Format(format!("tensor `{}`: {e}", self.name)))?;
        Ok(cast(&m))
    }
}

/// An ordered list of named tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn push(&mut self, t: Tensor) {
        self.tensors.push(t);
    }

    pub fn push_params<F: Scalar>(&mut self, params: &ParamStore<F>) {
        for p in params.iter() {
            self.push(Tensor::matrix(p.name.clone(), &p.value));
        }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Format(format!("checkpoint has no tensor `{name}`")))
    }

    /// Overwrite every parameter value from the tensor of the same name.
    pub fn load_params<F: Scalar>(&self, params: &mut ParamStore<F>) -> Result<()> {
        for p in params.iter_mut() {
            let m: Array2<F> = self.get(&p.name)?.to_matrix()?;
            if m.dim() != p.value.dim() {
                return Err(Error::Format(format!(
                    "tensor `{}` has shape {:?}, model expects {:?}",
                    p.name,
                    m.dim(),
                    p.value.dim()
                )));
            }
            p.value = m;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        for t in &self.tensors {
            let name = t.name.as_bytes();
            let len = u16::try_from(name.len())
                .map_err(|_| Error::Format(format!("tensor name too long: {}", t.name)))?;
            let rank = u8::try_from(t.dims.len())
                .map_err(|_| Error::Format(format!("tensor `{}` rank too large", t.name)))?;
            if t.dims.iter().product::<usize>() != t.data.len() {
                return Err(Error::Format(format!(
                    "tensor `{}` dims disagree with data",
                    t.name
                )));
            }
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name);
            out.push(rank);
            for &d in &t.dims {
                let d = u32::try_from(d)
                    .map_err(|_| Error::Format(format!("tensor `{}` dim too large", t.name)))?;
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |msg: String| Err(Error::Format(msg));
        if bytes.len() < 8 || &bytes[..4] != WEIGHTS_MAGIC {
            return fail("not a GELW checkpoint".into());
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != WEIGHTS_VERSION {
            return fail(format!("unsupported checkpoint version {version}"));
        }
        let mut cur = Cursor { bytes, at: 8 };
        let mut tensors = Vec::new();
        while cur.at < bytes.len() {
            let len = u16::from_le_bytes(cur.take(2, "name length")?.try_into().unwrap()) as usize;
            let name = String::from_utf8(cur.take(len, "name")?.to_vec())
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let rank = cur.take(1, "rank")?[0] as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(u32::from_le_bytes(cur.take(4, "dims")?.try_into().unwrap()) as usize);
            }
            let n: usize = dims.iter().product();
            let data = cur
                .take(4 * n, &name)?
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            tensors.push(Tensor { name, dims, data });
        }
        Ok(Self { tensors })
    }

    /// Hex SHA-256 of the serialized bytes.
    pub fn id(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_bytes()?);
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.at < n {
            return Err(Error::Format(format!(
                "truncated checkpoint while reading {what}"
            )));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<u64> {
    let path = path.as_ref();
    let bytes = ckpt.to_bytes()?;
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes.len() as u64)
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
