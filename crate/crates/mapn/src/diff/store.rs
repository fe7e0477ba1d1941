//! Named parameter storage, binary checkpointing, and the finite-difference
//! gradient checker.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use thiserror::Error;

use crate::diff::{DiffError, DiffValue};
use crate::scalar::Real;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"MAPN";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("parameter {0:?} already registered")]
    Duplicate(String),
    #[error("unknown parameter {0:?}")]
    Unknown(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] io::Error),
    #[error("bad checkpoint: {0}")]
    Format(String),
}

/// Named map of trainable values. Iteration order is the sorted name order,
/// which keeps checkpoints and optimizer passes deterministic.
#[derive(Default)]
pub struct ParamStore<F: Real> {
    map: BTreeMap<String, DiffValue<F>>,
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore { map: BTreeMap::new() }
    }

    /// Register a new trainable tensor under `name`.
    pub fn register(&mut self, name: &str, init: Tensor<F>) -> Result<DiffValue<F>, StoreError> {
        if self.map.contains_key(name) {
            return Err(StoreError::Duplicate(name.to_string()));
        }
        let v = DiffValue::leaf(init);
        self.map.insert(name.to_string(), v.clone());
        Ok(v)
    }

    /// Insert an existing value under `name`, sharing its storage (used to
    /// rebind views of a store; gradients and updates stay shared).
    pub fn adopt(&mut self, name: &str, value: DiffValue<F>) {
        self.map.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<DiffValue<F>> {
        self.map.get(name).cloned()
    }

    pub fn expect(&self, name: &str) -> DiffValue<F> {
        self.map.get(name).cloned().unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DiffValue<F>)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Total number of scalar entries across all parameters.
    pub fn num_scalars(&self) -> usize {
        self.map.values().map(|v| v.data().len()).sum()
    }

    pub fn zero_grad(&self) {
        for v in self.map.values() {
            v.zero_grad();
        }
    }

    /// Serialize all parameters: magic, version, entry count, then per entry
    /// name length, name bytes, rank, dims, row-major little-endian f64.
    pub fn save(&self, mut w: impl Write) -> Result<(), StoreError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.map.len() as u32).to_le_bytes())?;
        for (name, value) in &self.map {
            let bytes = name.as_bytes();
            w.write_all(&(bytes.len() as u32).to_le_bytes())?;
            w.write_all(bytes)?;
            let data = value.data();
            w.write_all(&[data.ndim() as u8])?;
            for &d in data.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &x in data.data() {
                w.write_all(&x.to_f64().unwrap().to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Read a checkpoint written by [`ParamStore::save`].
    pub fn load(mut r: impl Read) -> Result<Self, StoreError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(StoreError::Format(format!("bad magic {magic:?}")));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(StoreError::Format(format!("unsupported version {version}")));
        }
        let count = read_u32(&mut r)? as usize;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|e| StoreError::Format(e.to_string()))?;
            let mut rank = [0u8; 1];
            r.read_exact(&mut rank)?;
            if rank[0] > 3 {
                return Err(StoreError::Format(format!("rank {} too large", rank[0])));
            }
            let mut shape = Vec::with_capacity(rank[0] as usize);
            for _ in 0..rank[0] {
                shape.push(read_u64(&mut r)? as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let mut buf = [0u8; 8];
                r.read_exact(&mut buf)?;
                data.push(
                    F::from_f64(f64::from_le_bytes(buf))
                        .ok_or_else(|| StoreError::Format("payload not representable".into()))?,
                );
            }
            store.register(&name, Tensor::new(shape, data))?;
        }
        Ok(store)
    }

    /// Copy parameter values from another store (names and shapes must match).
    pub fn load_values_from(&self, other: &ParamStore<F>) -> Result<(), StoreError> {
        for (name, value) in &self.map {
            let src = other.map.get(name).ok_or_else(|| StoreError::Unknown(name.clone()))?;
            value.set_data(src.data().clone());
        }
        Ok(())
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32, StoreError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64, StoreError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

/// Compare analytic gradients of `f` against central finite differences.
///
/// Returns the maximum over all parameter entries of
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn grad_check<F: Real>(
    f: impl Fn(&ParamStore<F>) -> DiffValue<F>,
    store: &ParamStore<F>,
    eps: f64,
) -> Result<f64, DiffError> {
    store.zero_grad();
    let root = f(store);
    if !root.data().all_finite() {
        return Err(DiffError::NonFinite("grad_check forward"));
    }
    root.backward()?;
    let analytic: Vec<(String, Tensor<F>)> =
        store.iter().map(|(name, v)| (name.to_string(), v.grad())).collect();

    let mut worst = 0.0f64;
    for (name, grad) in &analytic {
        let value = store.expect(name);
        let base = value.data().clone();
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus.data_mut()[i] = plus.data_mut()[i] + F::from_f64(eps).unwrap();
            value.set_data(plus);
            let fp = f(store).item().to_f64().unwrap();
            let mut minus = base.clone();
            minus.data_mut()[i] = minus.data_mut()[i] - F::from_f64(eps).unwrap();
            value.set_data(minus);
            let fm = f(store).item().to_f64().unwrap();
            value.set_data(base.clone());
            if !fp.is_finite() || !fm.is_finite() {
                return Err(DiffError::NonFinite("grad_check perturbation"));
            }
            let numeric = (fp - fm) / (2.0 * eps);
            let a = grad.data()[i].to_f64().unwrap();
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_and_duplicate() {
        let mut store: ParamStore<f64> = ParamStore::new();
        store.register("w", Tensor::scalar(1.0)).unwrap();
        assert!(matches!(store.register("w", Tensor::scalar(2.0)), Err(StoreError::Duplicate(_))));
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut store: ParamStore<f64> = ParamStore::new();
        store.register("b.vec", Tensor::vector(vec![1.5, -2.0, 0.25])).unwrap();
        store.register("a.mat", Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        store.register("s", Tensor::scalar(-7.0)).unwrap();

        let mut buf = Vec::new();
        store.save(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"MAPN");

        let loaded: ParamStore<f64> = ParamStore::load(&buf[..]).unwrap();
        assert_eq!(loaded.len(), 3);
        for (name, v) in store.iter() {
            let lv = loaded.expect(name);
            assert_eq!(&*lv.data(), &*v.data());
        }
    }

    #[test]
    fn checkpoint_bad_magic_rejected() {
        let buf = b"NOPE\x01\x00\x00\x00\x00\x00\x00\x00".to_vec();
        assert!(matches!(ParamStore::<f64>::load(&buf[..]), Err(StoreError::Format(_))));
    }

    #[test]
    fn grad_check_sigmoid_quarter() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let w = store.register("w", Tensor::scalar(0.0)).unwrap();
        let err = grad_check(|_| w.sigmoid(), &store, 1e-5).unwrap();
        assert!(err < 1e-8, "rel err {err}");
        store.zero_grad();
        let y = w.sigmoid();
        y.backward().unwrap();
        assert!((w.grad().item() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn grad_check_leaky_relu_away_from_kink() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let w = store.register("w", Tensor::vector(vec![1.3, -0.9])).unwrap();
        let err = grad_check(|_| w.leaky_relu(0.01).sum_all(), &store, 1e-5).unwrap();
        assert!(err < 1e-7, "rel err {err}");
    }
}
