//! Named parameter tensors and their flat binary snapshot format.
//!
//! Snapshot layout (little endian): magic `TTPS`, `u32` version, `u32`
//! parameter count, then per parameter: `u32` name length, UTF-8 name,
//! `u32` rank, `u64` per dimension, row-major `f64` data.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

const MAGIC: &[u8; 4] = b"TTPS";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::InvalidArgument(format!(
                "shape {shape:?} does not match {} values",
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: true,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
            requires_grad: true,
        }
    }

    /// (rows, cols) view; vectors are single rows.
    pub fn matrix_shape(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            other => (other[0], other[1..].iter().product()),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
    /// Distance from the output head (0 = head).
    pub depth: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

pub(crate) enum Init {
    Zeros,
    Ones,
    Normal(f64),
    /// Normal with std sqrt(2 / (fan_in + fan_out)).
    Xavier,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub(crate) fn add(&mut self, name: &str, shape: Vec<usize>, init: Init, depth: usize, rng: &mut Rng) -> usize {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        let n: usize = shape.iter().product();
        let data = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Normal(std) => sample(n, std, rng),
            Init::Xavier => {
                let (fi, fo) = (shape[0], shape.get(1).copied().unwrap_or(1));
                sample(n, (2.0 / (fi + fo) as f64).sqrt(), rng)
            }
        };
        self.params.push(Param {
            name: name.to_string(),
            tensor: Tensor {
                shape,
                data,
                requires_grad: true,
            },
            depth,
        });
        self.index.insert(name.to_string(), self.params.len() - 1);
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.position(name).map(|i| &self.params[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.position(name).map(move |i| &mut self.params[i])
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.params.iter().map(|p| p.tensor.len()).collect()
    }

    pub fn n_values(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), i))
            .collect();
    }

    /// Elementwise arithmetic mean of equally structured stores.
    pub fn average(stores: &[&ParamStore]) -> Result<ParamStore> {
        let first = stores
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot average zero parameter sets".into()))?;
        let mut out = (*first).clone();
        let k = stores.len() as f64;
        for (i, p) in out.params.iter_mut().enumerate() {
            for s in &stores[1..] {
                let other = &s.params[i];
                if other.name != p.name || other.tensor.shape != p.tensor.shape {
                    return Err(Error::InvalidArgument(format!("parameter {} differs between snapshots", p.name)));
                }
            }
            for (j, v) in p.tensor.data.iter_mut().enumerate() {
                *v = stores.iter().map(|s| s.params[i].tensor.data[j]).sum::<f64>() / k;
            }
        }
        Ok(out)
    }

    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for p in &self.params {
            let name = p.name.as_bytes();
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name)?;
            w.write_all(&(p.tensor.shape.len() as u32).to_le_bytes())?;
            for &d in &p.tensor.shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in &p.tensor.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a snapshot. Depths are not part of the format; they are taken
    /// from `template` when given (matching by name), else set to 0.
    pub fn read_snapshot<R: Read>(mut r: R, template: Option<&ParamStore>) -> Result<ParamStore> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::InvalidArgument("not a parameter snapshot".into()));
        }
        if read_u32(&mut r)? != VERSION {
            return Err(Error::InvalidArgument("unsupported snapshot version".into()));
        }
        let count = read_u32(&mut r)? as usize;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let rank = read_u32(&mut r)? as usize;
            let shape = (0..rank)
                .map(|_| read_u64(&mut r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            let mut buf = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            let depth = template.and_then(|t| t.get(&name)).map_or(0, |p| p.depth);
            store.params.push(Param {
                name,
                tensor: Tensor::new(shape, data)?,
                depth,
            });
        }
        store.rebuild_index();
        Ok(store)
    }
}

fn sample(n: usize, std: f64, rng: &mut Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, std).expect("valid std");
    (0..n).map(|_| normal.sample(rng)).collect()
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn store(seed: u64) -> ParamStore {
        let mut rng = seeded(seed);
        let mut s = ParamStore::new();
        s.add("a.w", vec![2, 3], Init::Xavier, 1, &mut rng);
        s.add("a.b", vec![3], Init::Zeros, 0, &mut rng);
        s
    }

    #[test]
    fn snapshot_round_trip_is_exact() {
        let s = store(4);
        let mut buf = Vec::new();
        s.write_snapshot(&mut buf).unwrap();
        let back = ParamStore::read_snapshot(buf.as_slice(), Some(&s)).unwrap();
        assert_eq!(back, s);
        assert_eq!(&buf[..4], b"TTPS");
        assert_eq!(buf.len(), 12 + (4 + 3 + 4 + 16 + 48) + (4 + 3 + 4 + 8 + 24));
    }

    #[test]
    fn average_is_elementwise_mean() {
        let mut a = store(1);
        let mut b = store(1);
        let mut c = store(1);
        a.params_mut()[0].tensor.data[0] = 1.0;
        b.params_mut()[0].tensor.data[0] = 2.0;
        c.params_mut()[0].tensor.data[0] = 3.0;
        let avg = ParamStore::average(&[&a, &b, &c]).unwrap();
        assert_eq!(avg.params()[0].tensor.data[0], 2.0);
        let one = ParamStore::average(&[&b]).unwrap();
        assert_eq!(one, b);
    }

    #[test]
    fn same_seed_same_values() {
        assert_eq!(store(9), store(9));
        assert_ne!(store(9), store(10));
    }
}
