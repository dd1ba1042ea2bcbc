use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Tensor, Var};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    Ones,
    Uniform(f32),
    /// Glorot uniform over the last two dimensions (`out`, `in`).
    XavierUniform,
}

/// Named trainable parameters.
#[derive(Default)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn param(&mut self, name: &str, shape: &[usize], init: Init, rng: &mut Rng) -> Result<Tensor> {
        if self.vars.contains_key(name) {
            return Err(Error::Config(format!("parameter `{name}` defined twice")));
        }
        let numel: usize = shape.iter().product();
        let data: Vec<f32> = match init {
            Init::Zeros => vec![0.0; numel],
            Init::Ones => vec![1.0; numel],
            Init::Uniform(bound) => (0..numel).map(|_| rng.random_range(-bound..=bound)).collect(),
            Init::XavierUniform => {
                let (fan_out, fan_in) = match shape {
                    [o, i] => (*o, *i),
                    [.., o, i] => (*o, *i),
                    [n] => (*n, *n),
                    [] => (1, 1),
                };
                let bound = (6.0 / (fan_in + fan_out) as f32).sqrt();
                (0..numel).map(|_| rng.random_range(-bound..=bound)).collect()
            }
        };
        let tensor = Tensor::from_vec(data, shape, &super::device())?;
        let var = Var::from_tensor(&tensor)?;
        let t = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(t)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn parameter_count(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map: HashMap<String, Tensor> = self
            .vars
            .iter()
            .map(|(k, v)| (k.clone(), v.as_tensor().detach()))
            .collect();
        candle_core::safetensors::save(&map, path)?;
        Ok(())
    }

    /// Overwrites every parameter with the tensor of the same name.
    pub fn load(&self, path: &Path) -> Result<()> {
        let map = candle_core::safetensors::load(path, &super::device())?;
        for (name, var) in &self.vars {
            let src = map
                .get(name)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks parameter `{name}`")))?;
            if src.dims() != var.dims() {
                return Err(Error::Dimension(format!(
                    "parameter `{name}`: checkpoint {:?} vs model {:?}",
                    src.dims(),
                    var.dims()
                )));
            }
            var.set(&src.to_dtype(DType::F32)?)?;
        }
        Ok(())
    }

    /// Copies parameters under `prefix` from a checkpoint. Matrices with fewer
    /// rows in the checkpoint fill the leading rows only, which is how an
    /// embedding table extended by new tokens is initialized.
    pub fn load_prefix_extending(&self, path: &Path, prefix: &str) -> Result<usize> {
        let map = candle_core::safetensors::load(path, &super::device())?;
        let mut copied = 0;
        for (name, var) in self.vars.iter().filter(|(n, _)| n.starts_with(prefix)) {
            let Some(src) = map.get(name) else { continue };
            let src = src.to_dtype(DType::F32)?;
            if src.dims() == var.dims() {
                var.set(&src)?;
            } else if src.rank() == 2
                && src.dim(1)? == var.dim(1)?
                && src.dim(0)? < var.dim(0)?
            {
                let rows = src.dim(0)?;
                let tail = var.as_tensor().narrow(0, rows, var.dim(0)? - rows)?.detach();
                var.set(&Tensor::cat(&[&src, &tail], 0)?)?;
            } else {
                return Err(Error::Dimension(format!(
                    "parameter `{name}`: checkpoint {:?} vs model {:?}",
                    src.dims(),
                    var.dims()
                )));
            }
            copied += 1;
        }
        Ok(copied)
    }

    /// Copies every parameter named `{from}...` in `other` onto
    /// `{to}...` here. Shapes must agree.
    pub fn copy_prefix_from(&self, other: &ParamStore, from: &str, to: &str) -> Result<usize> {
        let mut copied = 0;
        for (name, src) in other.vars.iter().filter(|(n, _)| n.starts_with(from)) {
            let target = format!("{to}{}", &name[from.len()..]);
            let Some(dst) = self.vars.get(&target) else { continue };
            if dst.dims() != src.dims() {
                return Err(Error::Dimension(format!(
                    "parameter `{target}`: source {:?} vs target {:?}",
                    src.dims(),
                    dst.dims()
                )));
            }
            dst.set(&src.as_tensor().detach().copy()?)?;
            copied += 1;
        }
        Ok(copied)
    }

    /// Snapshot of all parameter values, used for equality checks.
    pub fn snapshot(&self) -> Result<BTreeMap<String, Vec<f32>>> {
        self.vars
            .iter()
            .map(|(k, v)| Ok((k.clone(), v.as_tensor().flatten_all()?.to_vec1::<f32>()?)))
            .collect()
    }
}
