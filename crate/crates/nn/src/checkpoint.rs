//! `CKPT1` container for named complex tensors plus scalar metadata.
//!
//! Layout (little-endian): magic `"CKPT1\0"`; `u32` metadata count, then per
//! entry `u32` key length, UTF-8 key, `f64` value; `u32` tensor count, then a
//! manifest of (`u32` name length, name, `u32` rank, `u32` dims...); finally
//! each tensor's entries as `(f32 re, f32 im)` pairs in manifest order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use kcdm_core::numerics::Real;
use kcdm_core::{Error, Result};

use crate::adam::Adam;
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"CKPT1\0";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, f64>,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Truncated {
            expected: self.pos.saturating_add(n),
            found: self.bytes.len(),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Dimension(format!("invalid UTF-8 name: {e}")))
    }
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_store<F: Real>(store: &ParamStore<F>) -> Self {
        Checkpoint {
            meta: BTreeMap::new(),
            tensors: store.iter().map(|(_, n, t)| (n.to_string(), t.cast())).collect(),
        }
    }

    /// Copies every parameter of `store` from this checkpoint, checking shapes.
    pub fn restore_store<F: Real>(&self, store: &mut ParamStore<F>) -> Result<()> {
        let named: Vec<(String, Tensor<F>)> = self.tensors.iter().map(|(n, t)| (n.clone(), t.cast())).collect();
        store.load_from(&named)
    }

    /// Adds optimizer moments under `adam.m/<name>` and `adam.v/<name>`.
    pub fn add_optimizer<F: Real>(&mut self, store: &ParamStore<F>, adam: &Adam<F>) {
        for (id, name, _) in store.iter() {
            self.tensors.push((format!("adam.m/{name}"), adam.m[id.0].cast()));
            self.tensors.push((format!("adam.v/{name}"), adam.v[id.0].cast()));
        }
        self.meta.insert("adam.step".into(), adam.step as f64);
        self.meta.insert("adam.lr".into(), adam.lr);
    }

    /// Restores optimizer state written by [`Checkpoint::add_optimizer`].
    pub fn restore_optimizer<F: Real>(&self, store: &ParamStore<F>, adam: &mut Adam<F>) -> Result<()> {
        for (id, name, t) in store.iter() {
            for (prefix, slot) in [("adam.m/", &mut adam.m[id.0]), ("adam.v/", &mut adam.v[id.0])] {
                let src = self
                    .tensor(&format!("{prefix}{name}"))
                    .ok_or_else(|| Error::InvalidArgument(format!("checkpoint lacks optimizer state for {name}")))?;
                if src.dims() != t.dims() {
                    return Err(Error::shape(t.dims(), src.dims()));
                }
                *slot = src.cast();
            }
        }
        adam.step = self.meta.get("adam.step").copied().unwrap_or(0.0) as u64;
        Ok(())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn meta(&self, key: &str) -> Option<f64> {
        self.meta.get(key).copied()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        let put_u32 = |buf: &mut Vec<u8>, v: usize| buf.extend_from_slice(&(v as u32).to_le_bytes());
        put_u32(&mut buf, self.meta.len());
        for (k, v) in &self.meta {
            put_u32(&mut buf, k.len());
            buf.extend_from_slice(k.as_bytes());
            buf.extend_from_slice(&v.to_le_bytes());
        }
        put_u32(&mut buf, self.tensors.len());
        for (name, t) in &self.tensors {
            put_u32(&mut buf, name.len());
            buf.extend_from_slice(name.as_bytes());
            put_u32(&mut buf, t.dims().len());
            for &d in t.dims() {
                put_u32(&mut buf, d);
            }
        }
        for (_, t) in &self.tensors {
            for (r, i) in t.re.iter().zip(&t.im) {
                buf.extend_from_slice(&r.to_le_bytes());
                buf.extend_from_slice(&i.to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..6] != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic { expected: "CKPT1\\0" });
        }
        let mut r = Reader { bytes, pos: 6 };
        let mut meta = BTreeMap::new();
        for _ in 0..r.u32()? {
            let key = r.string()?;
            let v = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
            meta.insert(key, v);
        }
        let n = r.u32()?;
        let mut manifest = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let name = r.string()?;
            let rank = r.u32()?;
            if rank > 8 {
                return Err(Error::Dimension(format!("tensor {name} has rank {rank}")));
            }
            let dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            manifest.push((name, dims));
        }
        let mut tensors = Vec::with_capacity(manifest.len());
        for (name, dims) in manifest {
            let len: usize = dims.iter().product();
            let raw = r.take(len.checked_mul(8).ok_or_else(|| Error::Dimension("tensor too large".into()))?)?;
            let mut re = Vec::with_capacity(len);
            let mut im = Vec::with_capacity(len);
            for pair in raw.chunks_exact(8) {
                re.push(f32::from_le_bytes(pair[..4].try_into().expect("4 bytes")));
                im.push(f32::from_le_bytes(pair[4..].try_into().expect("4 bytes")));
            }
            tensors.push((name, Tensor::from_parts(&dims, re, im)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::Dimension(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint { meta, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use kcdm_core::numerics::RngStream;

    fn store() -> ParamStore<f32> {
        let mut rng = RngStream::new(5);
        let mut s = ParamStore::new();
        s.add_uniform("a.w", &[3, 2, 3, 3], 18, &mut rng).unwrap();
        s.add_uniform("a.b", &[3, 1, 1], 1, &mut rng).unwrap();
        s
    }

    #[test]
    fn round_trip_preserves_everything() {
        let s = store();
        let mut ck = Checkpoint::from_store(&s);
        ck.meta.insert("T".into(), 16.0);
        ck.meta.insert("beta_end".into(), 0.25);
        let adam = Adam::new(&s, 1e-3);
        ck.add_optimizer(&s, &adam);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        let mut s2 = store();
        s2.get_mut(crate::params::ParamId(0)).scale_real(0.0);
        back.restore_store(&mut s2).unwrap();
        assert_eq!(s2, s);
        let mut adam2 = Adam::new(&s, 1e-3);
        adam2.step = 7;
        back.restore_optimizer(&s, &mut adam2).unwrap();
        assert_eq!(adam2, adam);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let ck = Checkpoint::from_store(&store());
        let mut rng = RngStream::new(1);
        let mut other = ParamStore::<f32>::new();
        other.add_uniform("a.w", &[3, 2, 1, 1], 2, &mut rng).unwrap();
        assert!(matches!(ck.restore_store(&mut other), Err(Error::Shape { .. })));
    }

    #[test]
    fn corrupt_bytes_are_rejected() {
        let bytes = Checkpoint::from_store(&store()).to_bytes();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Truncated { .. })));
        let mut bad = bytes.clone();
        bad[0] = 0;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::BadMagic { .. })));
    }
}
