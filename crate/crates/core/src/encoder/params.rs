use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};

/// Prefix of every classification-head parameter name.
pub const HEAD_PREFIX: &str = "head.";

/// Named trainable parameters. Names starting with [`HEAD_PREFIX`] belong to
/// the head group, everything else to the encoder group.
#[derive(Debug, Clone)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    device: Device,
    dtype: DType,
}

impl ParamStore {
    pub fn new(device: Device, dtype: DType) -> Self {
        Self {
            vars: BTreeMap::new(),
            device,
            dtype,
        }
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    /// Registers `tensor` under `name` and returns the tracked tensor.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<Tensor> {
        let name = name.into();
        if self.vars.contains_key(&name) {
            return Err(Error::InvalidArgument(format!("parameter '{name}' registered twice")));
        }
        let var = Var::from_tensor(&tensor.to_dtype(self.dtype)?.to_device(&self.device)?)?;
        let t = var.as_tensor().clone();
        self.vars.insert(name, var);
        Ok(t)
    }

    pub fn get(&self, name: &str) -> Result<Tensor> {
        self.vars
            .get(name)
            .map(|v| v.as_tensor().clone())
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter '{name}'")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_head(name: &str) -> bool {
        name.starts_with(HEAD_PREFIX)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// Deep copy of every parameter value.
    pub fn snapshot(&self) -> Result<BTreeMap<String, Tensor>> {
        self.vars
            .iter()
            .map(|(k, v)| Ok((k.clone(), v.as_tensor().copy()?.detach())))
            .collect()
    }

    /// Overwrites parameter values in place from a snapshot with the same names.
    pub fn restore(&self, snapshot: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, var) in &self.vars {
            let t = snapshot
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("snapshot lacks '{name}'")))?;
            if t.dims() != var.dims() {
                return Err(Error::Shape(format!(
                    "parameter '{name}': expected {:?}, snapshot has {:?}",
                    var.dims(),
                    t.dims()
                )));
            }
            var.set(&t.to_dtype(self.dtype)?)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map: std::collections::HashMap<String, Tensor> = self.snapshot()?.into_iter().collect();
        candle_core::safetensors::save(&map, path)?;
        Ok(())
    }
}

/// Loads a safetensors file as a name → tensor map on the CPU.
pub fn load_safetensors(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    Ok(candle_core::safetensors::load(path, &Device::Cpu)?.into_iter().collect())
}

/// Seeded parameter initializer.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn normal(&mut self, shape: &[usize], std: f64) -> Result<Tensor> {
        let n = shape.iter().product();
        let dist = Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let data: Vec<f64> = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        Ok(Tensor::from_vec(data, shape, &Device::Cpu)?)
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform(&mut self, shape: &[usize], bound: f64) -> Result<Tensor> {
        let n = shape.iter().product();
        if bound <= 0.0 {
            return Ok(Tensor::zeros(shape, DType::F64, &Device::Cpu)?);
        }
        let dist = Uniform::new_inclusive(-bound, bound).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let data: Vec<f64> = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        Ok(Tensor::from_vec(data, shape, &Device::Cpu)?)
    }

    /// Zero-mean uniform scaled by fan-in: bound `1/sqrt(fan_in)`.
    pub fn fan_in_uniform(&mut self, shape: &[usize], fan_in: usize) -> Result<Tensor> {
        self.uniform(shape, 1.0 / (fan_in.max(1) as f64).sqrt())
    }

    pub fn zeros(shape: &[usize]) -> Result<Tensor> {
        Ok(Tensor::zeros(shape, DType::F64, &Device::Cpu)?)
    }

    pub fn ones(shape: &[usize]) -> Result<Tensor> {
        Ok(Tensor::ones(shape, DType::F64, &Device::Cpu)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_restore_and_groups() {
        let mut store = ParamStore::new(Device::Cpu, DType::F32);
        let mut init = Initializer::new(1);
        store.insert("encoder.w", init.normal(&[2, 3], 0.02).unwrap()).unwrap();
        let h = store.insert("head.b", Initializer::zeros(&[3]).unwrap()).unwrap();
        assert!(store.insert("head.b", Initializer::zeros(&[3]).unwrap()).is_err());
        assert!(ParamStore::is_head("head.b") && !ParamStore::is_head("encoder.w"));

        let snap = store.snapshot().unwrap();
        let var = store.iter().find(|(n, _)| *n == "head.b").unwrap().1;
        var.set(&Tensor::ones(3, DType::F32, &Device::Cpu).unwrap()).unwrap();
        // the handle returned by insert sees in-place updates
        assert_eq!(h.to_vec1::<f32>().unwrap(), vec![1.0; 3]);
        store.restore(&snap).unwrap();
        assert_eq!(h.to_vec1::<f32>().unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn initializer_is_seeded() {
        let a = Initializer::new(7).normal(&[4], 1.0).unwrap().to_vec1::<f64>().unwrap();
        let b = Initializer::new(7).normal(&[4], 1.0).unwrap().to_vec1::<f64>().unwrap();
        assert_eq!(a, b);
        let u = Initializer::new(3).fan_in_uniform(&[100], 4).unwrap().to_vec1::<f64>().unwrap();
        assert!(u.iter().all(|x| x.abs() <= 0.5));
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ParamStore::new(Device::Cpu, DType::F64);
        store.insert("a", Initializer::new(0).normal(&[2, 2], 1.0).unwrap()).unwrap();
        let p = dir.path().join("w.safetensors");
        store.save(&p).unwrap();
        let map = load_safetensors(&p).unwrap();
        assert_eq!(
            map["a"].to_vec2::<f64>().unwrap(),
            store.get("a").unwrap().to_vec2::<f64>().unwrap()
        );
        assert!(load_safetensors(&dir.path().join("missing")).is_err());
    }
}
