//! 2D convolution via im2col + GEMM, batch-parallel with deterministic
//! gradient accumulation order.

use super::graph::{Graph, Scalar, Tensor};
use ndarray::{Array2, Array3, Array4, ArrayView3, Axis, Ix1, Ix4};
use rayon::prelude::*;

fn out_size(h: usize, k: usize, stride: usize, pad: usize) -> usize {
    (h + 2 * pad - k) / stride + 1
}

/// (cin, h, w) -> (ho*wo, cin*kh*kw)
fn im2col<S: Scalar>(
    x: &ArrayView3<S>,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Array2<S> {
    let (cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let ho = out_size(h, kh, stride, pad);
    let wo = out_size(w, kw, stride, pad);
    let mut col = Array2::<S>::zeros((ho * wo, cin * kh * kw));
    for oy in 0..ho {
        for ox in 0..wo {
            let row = oy * wo + ox;
            let mut j = 0usize;
            for c in 0..cin {
                for ky in 0..kh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        j += kw;
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            col[[row, j]] = x[[c, iy as usize, ix as usize]];
                        }
                        j += 1;
                    }
                }
            }
        }
    }
    col
}

/// (ho*wo, cin*kh*kw) -> (cin, h, w), scatter-add transpose of im2col
fn col2im<S: Scalar>(
    dcol: &Array2<S>,
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Array3<S> {
    let ho = out_size(h, kh, stride, pad);
    let wo = out_size(w, kw, stride, pad);
    let mut dx = Array3::<S>::zeros((cin, h, w));
    for oy in 0..ho {
        for ox in 0..wo {
            let row = oy * wo + ox;
            let mut j = 0usize;
            for c in 0..cin {
                for ky in 0..kh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        j += kw;
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dx[[c, iy as usize, ix as usize]] += dcol[[row, j]];
                        }
                        j += 1;
                    }
                }
            }
        }
    }
    dx
}

impl<S: Scalar> Graph<S> {
    /// conv2d on (N, Cin, H, W) with weights (Cout, Cin, kh, kw).
    pub fn conv2d(
        &mut self,
        x: Tensor,
        w: Tensor,
        b: Option<Tensor>,
        stride: usize,
        pad: usize,
    ) -> Tensor {
        let xv = self.value(x).view().into_dimensionality::<Ix4>().unwrap();
        let wv = self.value(w).view().into_dimensionality::<Ix4>().unwrap();
        let (n, cin, h, wd) = (xv.shape()[0], xv.shape()[1], xv.shape()[2], xv.shape()[3]);
        let (cout, wcin, kh, kw) = (wv.shape()[0], wv.shape()[1], wv.shape()[2], wv.shape()[3]);
        assert_eq!(cin, wcin, "conv2d: channel mismatch");
        let ho = out_size(h, kh, stride, pad);
        let wo = out_size(wd, kw, stride, pad);
        let w2 = wv
            .to_owned()
            .into_shape_with_order((cout, cin * kh * kw))
            .unwrap();
        let bias = b.map(|bt| {
            self.value(bt)
                .view()
                .into_dimensionality::<Ix1>()
                .unwrap()
                .to_owned()
        });

        let slices: Vec<Array3<S>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let col = im2col(&xv.index_axis(Axis(0), i), kh, kw, stride, pad);
                let y2 = col.dot(&w2.t()); // (ho*wo, cout)
                let mut y = y2
                    .t()
                    .as_standard_layout()
                    .to_owned()
                    .into_shape_with_order((cout, ho, wo))
                    .unwrap();
                if let Some(bias) = &bias {
                    for c in 0..cout {
                        let bv = bias[c];
                        y.index_axis_mut(Axis(0), c).mapv_inplace(|v| v + bv);
                    }
                }
                y
            })
            .collect();
        let mut out = Array4::<S>::zeros((n, cout, ho, wo));
        for (i, s) in slices.into_iter().enumerate() {
            out.index_axis_mut(Axis(0), i).assign(&s);
        }

        let mut parents = vec![x.0, w.0];
        if let Some(bt) = b {
            parents.push(bt.0);
        }
        self.push(
            out.into_dyn(),
            parents,
            Some(Box::new(move |ctx| {
                let g = ctx.grad.view().into_dimensionality::<Ix4>().unwrap();
                let xv = ctx.inputs[0].view().into_dimensionality::<Ix4>().unwrap();
                let wv = ctx.inputs[1].view().into_dimensionality::<Ix4>().unwrap();
                let w2 = wv
                    .to_owned()
                    .into_shape_with_order((cout, cin * kh * kw))
                    .unwrap();
                let need_x = ctx.needs[0];
                let need_w = ctx.needs[1];

                // per-sample contributions in parallel, reduced in index order
                let per_sample: Vec<(Option<Array3<S>>, Option<Array2<S>>)> = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let g2 = g
                            .index_axis(Axis(0), i)
                            .to_owned()
                            .into_shape_with_order((cout, ho * wo))
                            .unwrap(); // (cout, ho*wo)
                        let dx = need_x.then(|| {
                            let dcol = g2.t().dot(&w2); // (ho*wo, ck)
                            col2im(&dcol, cin, h, wd, kh, kw, stride, pad)
                        });
                        let dw = need_w.then(|| {
                            let col = im2col(&xv.index_axis(Axis(0), i), kh, kw, stride, pad);
                            g2.dot(&col) // (cout, ck)
                        });
                        (dx, dw)
                    })
                    .collect();

                let mut dx_full = need_x.then(|| Array4::<S>::zeros((n, cin, h, wd)));
                let mut dw_acc = need_w.then(|| Array2::<S>::zeros((cout, cin * kh * kw)));
                for (i, (dx, dw)) in per_sample.into_iter().enumerate() {
                    if let (Some(full), Some(dx)) = (dx_full.as_mut(), dx) {
                        full.index_axis_mut(Axis(0), i).assign(&dx);
                    }
                    if let (Some(acc), Some(dw)) = (dw_acc.as_mut(), dw) {
                        *acc += &dw;
                    }
                }
                let mut grads: Vec<Option<ndarray::ArrayD<S>>> = vec![
                    dx_full.map(|a| a.into_dyn()),
                    dw_acc.map(|a| {
                        a.into_shape_with_order((cout, cin, kh, kw))
                            .unwrap()
                            .into_dyn()
                    }),
                ];
                if ctx.inputs.len() == 3 {
                    grads.push(ctx.needs[2].then(|| {
                        let mut db = ndarray::Array1::<S>::zeros(cout);
                        for c in 0..cout {
                            db[c] = g.index_axis(Axis(1), c).sum();
                        }
                        db.into_dyn()
                    }));
                }
                grads
            })),
        )
    }
}
