//! Named parameter storage, checkpoint I/O and initializers.

use super::graph::{Graph, Scalar, Tensor};
use crate::container::{read_container, write_container, ArrayData};
use crate::error::{Error, Result};
use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::BTreeMap;
use std::path::Path;

/// Parameters by name, deterministically ordered.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<S: Scalar> {
    map: BTreeMap<String, ArrayD<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self {
            map: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, value: ArrayD<S>) {
        assert!(
            self.map.insert(name.to_string(), value).is_none(),
            "duplicate parameter {name}"
        );
    }

    pub fn get(&self, name: &str) -> &ArrayD<S> {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut ArrayD<S> {
        self.map
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn names(&self) -> Vec<String> {
        self.map.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn n_values(&self) -> usize {
        self.map.values().map(|a| a.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ArrayD<S>)> {
        self.map.iter()
    }

    /// Bind a parameter into a graph as a leaf node.
    pub fn bind(&self, g: &mut Graph<S>, name: &str, trainable: bool) -> Tensor {
        g.param(name, self.get(name).clone(), trainable)
    }

    /// Checkpoints are stored as f32 containers keyed by parameter name.
    pub fn save(&self, dir: &Path, meta: serde_json::Value) -> Result<()> {
        let arrays: Vec<(String, ArrayData)> = self
            .map
            .iter()
            .map(|(k, v)| (k.clone(), ArrayData::F32(v.mapv(|x| x.dbl() as f32))))
            .collect();
        let refs: Vec<(&str, ArrayData)> = arrays
            .iter()
            .map(|(k, v)| (k.as_str(), v.clone()))
            .collect();
        write_container(dir, &refs, meta)
    }

    pub fn load(dir: &Path) -> Result<(Self, serde_json::Value)> {
        if !dir.join("manifest.json").exists() {
            return Err(Error::MissingCheckpoint(dir.display().to_string()));
        }
        let (arrays, meta) = read_container(dir)?;
        let mut store = Self::new();
        for (name, data) in arrays {
            let f = data.as_f32()?;
            store.insert(&name, f.mapv(|x| S::of(x as f64)));
        }
        Ok((store, meta))
    }
}

/// Kaiming-style normal init scaled by fan-in.
pub fn kaiming<S: Scalar>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> ArrayD<S> {
    let std = (2.0 / fan_in as f64).sqrt();
    let mut a = ArrayD::<S>::zeros(IxDyn(shape));
    for v in a.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = S::of(z * std);
    }
    a
}

pub fn normal<S: Scalar>(shape: &[usize], std: f64, rng: &mut impl Rng) -> ArrayD<S> {
    let mut a = ArrayD::<S>::zeros(IxDyn(shape));
    for v in a.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = S::of(z * std);
    }
    a
}

pub fn zeros<S: Scalar>(shape: &[usize]) -> ArrayD<S> {
    ArrayD::zeros(IxDyn(shape))
}

pub fn ones<S: Scalar>(shape: &[usize]) -> ArrayD<S> {
    ArrayD::from_elem(IxDyn(shape), S::one())
}

/// Adam with global-norm gradient clipping.
pub struct Adam<S: Scalar> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
    step: u64,
    m: BTreeMap<String, ArrayD<S>>,
    v: BTreeMap<String, ArrayD<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(lr: f64, clip_norm: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn update(&mut self, store: &mut ParamStore<S>, grads: &BTreeMap<String, ArrayD<S>>) {
        self.step += 1;
        // global-norm clip
        let mut sq = 0.0f64;
        for g in grads.values() {
            for &x in g.iter() {
                let xf = x.dbl();
                sq += xf * xf;
            }
        }
        let norm = sq.sqrt();
        let scale = if self.clip_norm > 0.0 && norm > self.clip_norm {
            self.clip_norm / norm
        } else {
            1.0
        };

        let b1 = S::of(self.beta1);
        let b2 = S::of(self.beta2);
        let one = S::one();
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let lr_t = S::of(self.lr * bc2.sqrt() / bc1);
        let eps = S::of(self.eps);
        let sc = S::of(scale);

        for (name, grad) in grads {
            let p = store.get_mut(name);
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(p.raw_dim()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(p.raw_dim()));
            ndarray::Zip::from(p)
                .and(m)
                .and(v)
                .and(grad)
                .for_each(|p, m, v, &g| {
                    let g = g * sc;
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    *p = *p - lr_t * *m / (v.sqrt() + eps);
                });
        }
    }
}
