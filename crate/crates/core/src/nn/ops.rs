//! Differentiable operations on the graph.

use super::graph::{reduce_to_shape, Graph, Scalar, Tensor};
use ndarray::{ArrayD, Axis, Ix2, Ix3, IxDyn};

impl<S: Scalar> Graph<S> {
    /// Elementwise add with numpy-style broadcasting of `b` onto `a`.
    pub fn add(&mut self, a: Tensor, b: Tensor) -> Tensor {
        let (va, vb) = (self.value(a), self.value(b));
        let out = va + vb;
        let (sa, sb) = (va.shape().to_vec(), vb.shape().to_vec());
        self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(move |ctx| {
                vec![
                    ctx.needs[0].then(|| reduce_to_shape(ctx.grad, &sa)),
                    ctx.needs[1].then(|| reduce_to_shape(ctx.grad, &sb)),
                ]
            })),
        )
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Tensor {
        let nb = self.scale(b, -1.0);
        self.add(a, nb)
    }

    /// Elementwise product with broadcasting.
    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Tensor {
        let (va, vb) = (self.value(a), self.value(b));
        let out = va * vb;
        let (sa, sb) = (va.shape().to_vec(), vb.shape().to_vec());
        self.push(
            out,
            vec![a.0, b.0],
            Some(Box::new(move |ctx| {
                vec![
                    ctx.needs[0].then(|| reduce_to_shape(&(ctx.grad * ctx.inputs[1]), &sa)),
                    ctx.needs[1].then(|| reduce_to_shape(&(ctx.grad * ctx.inputs[0]), &sb)),
                ]
            })),
        )
    }

    pub fn scale(&mut self, a: Tensor, c: f64) -> Tensor {
        let k = S::of(c);
        let out = self.value(a).mapv(|v| v * k);
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |ctx| vec![Some(ctx.grad.mapv(|g| g * k))])),
        )
    }

    pub fn silu(&mut self, a: Tensor) -> Tensor {
        let out = self.value(a).mapv(|x| x / (S::one() + (-x).exp()));
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |ctx| {
                let x = ctx.inputs[0];
                let d = x.mapv(|x| {
                    let s = S::one() / (S::one() + (-x).exp());
                    s * (S::one() + x * (S::one() - s))
                });
                vec![Some(ctx.grad * &d)]
            })),
        )
    }

    pub fn sigmoid(&mut self, a: Tensor) -> Tensor {
        let out = self.value(a).mapv(|x| S::one() / (S::one() + (-x).exp()));
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |ctx| {
                let d = ctx.output.mapv(|y| y * (S::one() - y));
                vec![Some(ctx.grad * &d)]
            })),
        )
    }

    pub fn relu(&mut self, a: Tensor) -> Tensor {
        let out = self.value(a).mapv(|x| x.max(S::zero()));
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |ctx| {
                let mask = ctx.inputs[0].mapv(|x| if x > S::zero() { S::one() } else { S::zero() });
                vec![Some(ctx.grad * &mask)]
            })),
        )
    }

    pub fn reshape(&mut self, a: Tensor, shape: &[usize]) -> Tensor {
        let orig = self.value(a).shape().to_vec();
        let out = self
            .value(a)
            .to_owned()
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape: element count mismatch");
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |ctx| {
                vec![Some(
                    ctx.grad
                        .to_owned()
                        .as_standard_layout()
                        .to_owned()
                        .into_shape_with_order(IxDyn(&orig))
                        .unwrap(),
                )]
            })),
        )
    }

    pub fn permute(&mut self, a: Tensor, axes: &[usize]) -> Tensor {
        let out = self
            .value(a)
            .view()
            .permuted_axes(IxDyn(axes))
            .as_standard_layout()
            .to_owned();
        let mut inverse = vec![0usize; axes.len()];
        for (i, &ax) in axes.iter().enumerate() {
            inverse[ax] = i;
        }
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |ctx| {
                vec![Some(
                    ctx.grad
                        .view()
                        .permuted_axes(IxDyn(&inverse))
                        .as_standard_layout()
                        .to_owned(),
                )]
            })),
        )
    }

    pub fn concat(&mut self, axis: usize, parts: &[Tensor]) -> Tensor {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|t| self.value(*t).view()).collect();
        let out = ndarray::concatenate(Axis(axis), &views).expect("concat shapes");
        let sizes: Vec<usize> = parts
            .iter()
            .map(|t| self.value(*t).shape()[axis])
            .collect();
        self.push(
            out,
            parts.iter().map(|t| t.0).collect(),
            Some(Box::new(move |ctx| {
                let mut offset = 0;
                sizes
                    .iter()
                    .enumerate()
                    .map(|(i, &sz)| {
                        let piece = ctx
                            .grad
                            .slice_axis(Axis(axis), ndarray::Slice::from(offset..offset + sz))
                            .to_owned();
                        offset += sz;
                        ctx.needs[i].then_some(piece)
                    })
                    .collect()
            })),
        )
    }

    pub fn slice_axis(&mut self, a: Tensor, axis: usize, start: usize, end: usize) -> Tensor {
        let out = self
            .value(a)
            .slice_axis(Axis(axis), ndarray::Slice::from(start..end))
            .to_owned();
        let full = self.value(a).raw_dim();
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |ctx| {
                let mut g = ArrayD::<S>::zeros(full.clone());
                g.slice_axis_mut(Axis(axis), ndarray::Slice::from(start..end))
                    .assign(ctx.grad);
                vec![Some(g)]
            })),
        )
    }

    /// Repeat along an axis (tile); gradient sums the copies.
    pub fn repeat_axis(&mut self, a: Tensor, axis: usize, times: usize) -> Tensor {
        let views: Vec<_> = (0..times).map(|_| self.value(a).view()).collect();
        let out = ndarray::concatenate(Axis(axis), &views).expect("repeat shapes");
        let size = self.value(a).shape()[axis];
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |ctx| {
                let mut acc: Option<ArrayD<S>> = None;
                for k in 0..times {
                    let piece = ctx
                        .grad
                        .slice_axis(Axis(axis), ndarray::Slice::from(k * size..(k + 1) * size))
                        .to_owned();
                    match &mut acc {
                        Some(g) => *g += &piece,
                        None => acc = Some(piece),
                    }
                }
                vec![acc]
            })),
        )
    }

    /// Mean over all elements; returns a rank-0 tensor.
    pub fn mean_all(&mut self, a: Tensor) -> Tensor {
        let n = self.value(a).len();
        let m = self.value(a).sum() / S::of(n as f64);
        let shape = self.value(a).raw_dim();
        self.push(
            ArrayD::from_elem(IxDyn(&[]), m),
            vec![a.0],
            Some(Box::new(move |ctx| {
                let g = ctx.grad.iter().next().copied().unwrap_or(S::zero())
                    / S::of(n as f64);
                vec![Some(ArrayD::from_elem(shape.clone(), g))]
            })),
        )
    }

    /// x @ w + b on the last axis: x (..., K) with w (K, M).
    pub fn linear(&mut self, x: Tensor, w: Tensor, b: Option<Tensor>) -> Tensor {
        let xs = self.value(x).shape().to_vec();
        let k = *xs.last().expect("linear needs >= 1 axis");
        let wv = self.value(w).view().into_dimensionality::<Ix2>().unwrap();
        assert_eq!(wv.shape()[0], k, "linear: K mismatch");
        let m = wv.shape()[1];
        let n: usize = xs[..xs.len() - 1].iter().product();
        let x2 = self
            .value(x)
            .to_owned()
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order(IxDyn(&[n, k]))
            .unwrap()
            .into_dimensionality::<Ix2>()
            .unwrap();
        let mut y2 = x2.dot(&wv);
        if let Some(bt) = b {
            let bv = self.value(bt).view().into_dimensionality::<ndarray::Ix1>().unwrap();
            y2 += &bv;
        }
        let mut out_shape = xs[..xs.len() - 1].to_vec();
        out_shape.push(m);
        let out = y2.into_dyn().into_shape_with_order(IxDyn(&out_shape)).unwrap();
        let mut parents = vec![x.0, w.0];
        if let Some(bt) = b {
            parents.push(bt.0);
        }
        let xs_cl = xs.clone();
        self.push(
            out,
            parents,
            Some(Box::new(move |ctx| {
                let g2 = ctx
                    .grad
                    .to_owned()
                    .as_standard_layout()
                    .to_owned()
                    .into_shape_with_order(IxDyn(&[n, m]))
                    .unwrap()
                    .into_dimensionality::<Ix2>()
                    .unwrap();
                let x2 = ctx.inputs[0]
                    .to_owned()
                    .as_standard_layout()
                    .to_owned()
                    .into_shape_with_order(IxDyn(&[n, k]))
                    .unwrap()
                    .into_dimensionality::<Ix2>()
                    .unwrap();
                let wv = ctx.inputs[1].view().into_dimensionality::<Ix2>().unwrap();
                let mut grads: Vec<Option<ArrayD<S>>> = Vec::with_capacity(ctx.inputs.len());
                grads.push(ctx.needs[0].then(|| {
                    g2.dot(&wv.t())
                        .into_dyn()
                        .into_shape_with_order(IxDyn(&xs_cl))
                        .unwrap()
                }));
                grads.push(ctx.needs[1].then(|| x2.t().dot(&g2).into_dyn()));
                if ctx.inputs.len() == 3 {
                    grads.push(ctx.needs[2].then(|| g2.sum_axis(Axis(0)).into_dyn()));
                }
                grads
            })),
        )
    }

    /// Batched matmul: (B, N, K) x (B, K, M) -> (B, N, M).
    pub fn batched_matmul(&mut self, a: Tensor, b: Tensor) -> Tensor {
        let av = self.value(a).view().into_dimensionality::<Ix3>().unwrap();
        let bv = self.value(b).view().into_dimensionality::<Ix3>().unwrap();
        let (bs, n, k) = (av.shape()[0], av.shape()[1], av.shape()[2]);
        assert_eq!(bv.shape()[0], bs);
        assert_eq!(bv.shape()[1], k, "batched_matmul: K mismatch");
        let m = bv.shape()[2];
        let mut out = ndarray::Array3::<S>::zeros((bs, n, m));
        for i in 0..bs {
            let prod = av.index_axis(Axis(0), i).dot(&bv.index_axis(Axis(0), i));
            out.index_axis_mut(Axis(0), i).assign(&prod);
        }
        self.push(
            out.into_dyn(),
            vec![a.0, b.0],
            Some(Box::new(move |ctx| {
                let g = ctx.grad.view().into_dimensionality::<Ix3>().unwrap();
                let av = ctx.inputs[0].view().into_dimensionality::<Ix3>().unwrap();
                let bv = ctx.inputs[1].view().into_dimensionality::<Ix3>().unwrap();
                let da = ctx.needs[0].then(|| {
                    let mut da = ndarray::Array3::<S>::zeros((bs, n, k));
                    for i in 0..bs {
                        let d = g
                            .index_axis(Axis(0), i)
                            .dot(&bv.index_axis(Axis(0), i).t());
                        da.index_axis_mut(Axis(0), i).assign(&d);
                    }
                    da.into_dyn()
                });
                let db = ctx.needs[1].then(|| {
                    let mut db = ndarray::Array3::<S>::zeros((bs, k, m));
                    for i in 0..bs {
                        let d = av
                            .index_axis(Axis(0), i)
                            .t()
                            .dot(&g.index_axis(Axis(0), i));
                        db.index_axis_mut(Axis(0), i).assign(&d);
                    }
                    db.into_dyn()
                });
                vec![da, db]
            })),
        )
    }

    /// Softmax over the last axis.
    pub fn softmax_last(&mut self, a: Tensor) -> Tensor {
        let v = self.value(a);
        let last = v.ndim() - 1;
        let mut out = v.to_owned();
        for mut lane in out.lanes_mut(Axis(last)) {
            let max = lane.iter().cloned().fold(S::neg_infinity(), S::max);
            lane.mapv_inplace(|x| (x - max).exp());
            let sum = lane.sum();
            lane.mapv_inplace(|x| x / sum);
        }
        self.push(
            out,
            vec![a.0],
            Some(Box::new(move |ctx| {
                let y = ctx.output;
                let gy = ctx.grad * y;
                let mut dot = gy.sum_axis(Axis(last));
                let dshape: Vec<usize> = {
                    let mut s = dot.shape().to_vec();
                    s.push(1);
                    s
                };
                let dotb = dot
                    .view_mut()
                    .into_shape_with_order(IxDyn(&dshape))
                    .unwrap()
                    .to_owned();
                let gx = &gy - &(y * &dotb);
                vec![Some(gx)]
            })),
        )
    }

    /// Nearest-neighbor 2x upsample of (N, C, H, W).
    pub fn upsample_nearest2x(&mut self, a: Tensor) -> Tensor {
        let v = self
            .value(a)
            .view()
            .into_dimensionality::<ndarray::Ix4>()
            .unwrap();
        let (n, c, h, w) = (v.shape()[0], v.shape()[1], v.shape()[2], v.shape()[3]);
        let mut out = ndarray::Array4::<S>::zeros((n, c, h * 2, w * 2));
        for ni in 0..n {
            for ci in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        let val = v[[ni, ci, y, x]];
                        out[[ni, ci, 2 * y, 2 * x]] = val;
                        out[[ni, ci, 2 * y, 2 * x + 1]] = val;
                        out[[ni, ci, 2 * y + 1, 2 * x]] = val;
                        out[[ni, ci, 2 * y + 1, 2 * x + 1]] = val;
                    }
                }
            }
        }
        self.push(
            out.into_dyn(),
            vec![a.0],
            Some(Box::new(move |ctx| {
                let g = ctx
                    .grad
                    .view()
                    .into_dimensionality::<ndarray::Ix4>()
                    .unwrap();
                let mut dx = ndarray::Array4::<S>::zeros((n, c, h, w));
                for ni in 0..n {
                    for ci in 0..c {
                        for y in 0..h {
                            for x in 0..w {
                                dx[[ni, ci, y, x]] = g[[ni, ci, 2 * y, 2 * x]]
                                    + g[[ni, ci, 2 * y, 2 * x + 1]]
                                    + g[[ni, ci, 2 * y + 1, 2 * x]]
                                    + g[[ni, ci, 2 * y + 1, 2 * x + 1]];
                            }
                        }
                    }
                }
                vec![Some(dx.into_dyn())]
            })),
        )
    }

    /// Nearest-neighbor integer-factor upsample of (N, C, H, W).
    pub fn upsample_nearest(&mut self, a: Tensor, factor: usize) -> Tensor {
        assert!(factor >= 1);
        let mut t = a;
        let mut f = factor;
        // factor out 2x steps; odd remainders use the generic path below
        while f % 2 == 0 && f > 1 {
            t = self.upsample_nearest2x(t);
            f /= 2;
        }
        if f > 1 {
            t = self.upsample_nearest_odd(t, f);
        }
        t
    }

    fn upsample_nearest_odd(&mut self, a: Tensor, factor: usize) -> Tensor {
        let v = self
            .value(a)
            .view()
            .into_dimensionality::<ndarray::Ix4>()
            .unwrap();
        let (n, c, h, w) = (v.shape()[0], v.shape()[1], v.shape()[2], v.shape()[3]);
        let mut out = ndarray::Array4::<S>::zeros((n, c, h * factor, w * factor));
        for ni in 0..n {
            for ci in 0..c {
                for y in 0..h * factor {
                    for x in 0..w * factor {
                        out[[ni, ci, y, x]] = v[[ni, ci, y / factor, x / factor]];
                    }
                }
            }
        }
        self.push(
            out.into_dyn(),
            vec![a.0],
            Some(Box::new(move |ctx| {
                let g = ctx
                    .grad
                    .view()
                    .into_dimensionality::<ndarray::Ix4>()
                    .unwrap();
                let mut dx = ndarray::Array4::<S>::zeros((n, c, h, w));
                for ni in 0..n {
                    for ci in 0..c {
                        for y in 0..h * factor {
                            for x in 0..w * factor {
                                dx[[ni, ci, y / factor, x / factor]] += g[[ni, ci, y, x]];
                            }
                        }
                    }
                }
                vec![Some(dx.into_dyn())]
            })),
        )
    }

    /// Select rows of a 2D tensor; duplicates allowed.
    pub fn gather_rows(&mut self, a: Tensor, idx: Vec<usize>) -> Tensor {
        let v = self.value(a).view().into_dimensionality::<Ix2>().unwrap();
        let cols = v.shape()[1];
        let rows = v.shape()[0];
        let mut out = ndarray::Array2::<S>::zeros((idx.len(), cols));
        for (i, &r) in idx.iter().enumerate() {
            out.row_mut(i).assign(&v.row(r));
        }
        self.push(
            out.into_dyn(),
            vec![a.0],
            Some(Box::new(move |ctx| {
                let g = ctx.grad.view().into_dimensionality::<Ix2>().unwrap();
                let mut dx = ndarray::Array2::<S>::zeros((rows, cols));
                for (i, &r) in idx.iter().enumerate() {
                    let mut row = dx.row_mut(r);
                    row += &g.row(i);
                }
                vec![Some(dx.into_dyn())]
            })),
        )
    }

    /// Scatter rows of a 2D tensor into a zero (rows x cols) canvas.
    pub fn scatter_rows(&mut self, a: Tensor, idx: Vec<usize>, rows: usize) -> Tensor {
        let v = self.value(a).view().into_dimensionality::<Ix2>().unwrap();
        let cols = v.shape()[1];
        assert_eq!(v.shape()[0], idx.len());
        let mut out = ndarray::Array2::<S>::zeros((rows, cols));
        for (i, &r) in idx.iter().enumerate() {
            let mut row = out.row_mut(r);
            row += &v.row(i);
        }
        self.push(
            out.into_dyn(),
            vec![a.0],
            Some(Box::new(move |ctx| {
                let g = ctx.grad.view().into_dimensionality::<Ix2>().unwrap();
                let mut dx = ndarray::Array2::<S>::zeros((idx.len(), cols));
                for (i, &r) in idx.iter().enumerate() {
                    dx.row_mut(i).assign(&g.row(r));
                }
                vec![Some(dx.into_dyn())]
            })),
        )
    }
}
