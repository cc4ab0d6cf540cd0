//! Minimal reverse-mode autodiff tape over `ndarray` arrays.
//!
//! A [`Graph`] records one forward pass; [`Graph::backward`] walks the tape
//! in reverse and accumulates gradients. Nodes whose ancestors contain no
//! trainable parameter are skipped, and backward closures are told which
//! parent gradients are actually needed so frozen-weight passes stay cheap.

use ndarray::{ArrayD, IxDyn};
use std::collections::BTreeMap;

/// Element type of the engine; f64 for gradient checks, f32 for training.
pub trait Scalar: ndarray::NdFloat + ndarray::LinalgScalar + Send + Sync + 'static {
    /// lossy from-f64 (names avoid clashing with `num_traits` casts)
    fn of(x: f64) -> Self;
    fn dbl(self) -> f64;
}

impl Scalar for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn dbl(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn dbl(self) -> f64 {
        self
    }
}

/// Handle to a node in the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tensor(pub(crate) usize);

pub struct BackCtx<'a, S: Scalar> {
    pub grad: &'a ArrayD<S>,
    pub inputs: Vec<&'a ArrayD<S>>,
    pub output: &'a ArrayD<S>,
    /// which parent gradients the caller will use
    pub needs: &'a [bool],
}

type BackFn<S> = Box<dyn Fn(&BackCtx<'_, S>) -> Vec<Option<ArrayD<S>>>>;

struct NodeMeta<S: Scalar> {
    parents: Vec<usize>,
    backward: Option<BackFn<S>>,
    requires_grad: bool,
}

pub struct Graph<S: Scalar> {
    values: Vec<ArrayD<S>>,
    meta: Vec<NodeMeta<S>>,
    params: Vec<(usize, String)>,
    grad_enabled: bool,
}

impl<S: Scalar> Graph<S> {
    pub fn new(grad_enabled: bool) -> Self {
        Self {
            values: Vec::new(),
            meta: Vec::new(),
            params: Vec::new(),
            grad_enabled,
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn value(&self, t: Tensor) -> &ArrayD<S> {
        &self.values[t.0]
    }

    pub fn shape(&self, t: Tensor) -> &[usize] {
        self.values[t.0].shape()
    }

    pub(crate) fn push(
        &mut self,
        value: ArrayD<S>,
        parents: Vec<usize>,
        backward: Option<BackFn<S>>,
    ) -> Tensor {
        let requires_grad = self.grad_enabled
            && backward.is_some()
            && parents.iter().any(|&p| self.meta[p].requires_grad);
        let backward = if requires_grad { backward } else { None };
        self.values.push(value);
        self.meta.push(NodeMeta {
            parents,
            backward,
            requires_grad,
        });
        Tensor(self.values.len() - 1)
    }

    /// Constant input; gradients never flow into it.
    pub fn input(&mut self, value: ArrayD<S>) -> Tensor {
        self.values.push(value);
        self.meta.push(NodeMeta {
            parents: Vec::new(),
            backward: None,
            requires_grad: false,
        });
        Tensor(self.values.len() - 1)
    }

    /// Named parameter leaf. `trainable` marks whether gradients should be
    /// collected for it this pass.
    pub fn param(&mut self, name: &str, value: ArrayD<S>, trainable: bool) -> Tensor {
        self.values.push(value);
        self.meta.push(NodeMeta {
            parents: Vec::new(),
            backward: None,
            requires_grad: self.grad_enabled && trainable,
        });
        let id = self.values.len() - 1;
        self.params.push((id, name.to_string()));
        Tensor(id)
    }

    /// Reverse pass from a scalar loss; returns gradients of all trainable
    /// parameter leaves by name.
    pub fn backward(&mut self, loss: Tensor) -> BTreeMap<String, ArrayD<S>> {
        assert!(self.grad_enabled, "backward on a no-grad graph");
        assert_eq!(
            self.values[loss.0].len(),
            1,
            "backward expects a scalar loss"
        );
        let n = self.values.len();
        let mut grads: Vec<Option<ArrayD<S>>> = vec![None; n];
        grads[loss.0] = Some(ArrayD::from_elem(
            self.values[loss.0].raw_dim(),
            S::one(),
        ));
        for i in (0..=loss.0).rev() {
            if !self.meta[i].requires_grad {
                continue;
            }
            let Some(grad_out) = grads[i].take() else {
                continue;
            };
            let Some(back) = self.meta[i].backward.as_ref() else {
                grads[i] = Some(grad_out); // parameter leaf: keep it
                continue;
            };
            let parents = self.meta[i].parents.clone();
            let needs: Vec<bool> = parents
                .iter()
                .map(|&p| self.meta[p].requires_grad)
                .collect();
            let ctx = BackCtx {
                grad: &grad_out,
                inputs: parents.iter().map(|&p| &self.values[p]).collect(),
                output: &self.values[i],
                needs: &needs,
            };
            let contribs = back(&ctx);
            debug_assert_eq!(contribs.len(), parents.len());
            for (slot, contrib) in parents.iter().zip(contribs) {
                if !self.meta[*slot].requires_grad {
                    continue;
                }
                let Some(c) = contrib else { continue };
                debug_assert_eq!(
                    c.shape(),
                    self.values[*slot].shape(),
                    "gradient shape mismatch into node {slot}"
                );
                match &mut grads[*slot] {
                    Some(acc) => *acc += &c,
                    g @ None => *g = Some(c),
                }
            }
        }
        let mut out = BTreeMap::new();
        for (id, name) in &self.params {
            if self.meta[*id].requires_grad {
                if let Some(g) = grads[*id].take() {
                    out.insert(name.clone(), g);
                }
            }
        }
        out
    }
}

/// Sum `grad` down to `shape` (inverting a broadcast).
pub(crate) fn reduce_to_shape<S: Scalar>(grad: &ArrayD<S>, shape: &[usize]) -> ArrayD<S> {
    let mut g = grad.clone();
    // collapse leading extra axes
    while g.ndim() > shape.len() {
        g = g.sum_axis(ndarray::Axis(0));
    }
    for ax in 0..shape.len() {
        if g.shape()[ax] != shape[ax] {
            debug_assert_eq!(shape[ax], 1, "cannot reduce axis {ax}");
            g = g.sum_axis(ndarray::Axis(ax)).insert_axis(ndarray::Axis(ax));
        }
    }
    g.into_shape_with_order(IxDyn(shape))
        .expect("reduced to target shape")
}
