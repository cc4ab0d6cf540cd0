//! Group normalization with a hand-derived backward, finite-difference
//! verified in the engine tests.

use super::graph::{Graph, Scalar, Tensor};
use ndarray::{Array1, Array4, Ix1, Ix4};

impl<S: Scalar> Graph<S> {
    /// GroupNorm over (N, C, H, W) with per-channel affine params.
    pub fn group_norm(
        &mut self,
        x: Tensor,
        gamma: Tensor,
        beta: Tensor,
        groups: usize,
        eps: f64,
    ) -> Tensor {
        let xv = self.value(x).view().into_dimensionality::<Ix4>().unwrap();
        let (n, c, h, w) = (xv.shape()[0], xv.shape()[1], xv.shape()[2], xv.shape()[3]);
        assert_eq!(c % groups, 0, "channels must divide into groups");
        let cg = c / groups;
        let m = cg * h * w;
        let gv = self.value(gamma).view().into_dimensionality::<Ix1>().unwrap().to_owned();
        let bv = self.value(beta).view().into_dimensionality::<Ix1>().unwrap().to_owned();
        let epss = S::of(eps);

        let mut out = Array4::<S>::zeros((n, c, h, w));
        for ni in 0..n {
            for g in 0..groups {
                let c0 = g * cg;
                let mut mean = S::zero();
                for ci in c0..c0 + cg {
                    mean = mean + xv.slice(ndarray::s![ni, ci, .., ..]).sum();
                }
                mean = mean / S::of(m as f64);
                let mut var = S::zero();
                for ci in c0..c0 + cg {
                    for y in 0..h {
                        for xx in 0..w {
                            let d = xv[[ni, ci, y, xx]] - mean;
                            var = var + d * d;
                        }
                    }
                }
                var = var / S::of(m as f64);
                let inv_std = S::one() / (var + epss).sqrt();
                for ci in c0..c0 + cg {
                    for y in 0..h {
                        for xx in 0..w {
                            let xh = (xv[[ni, ci, y, xx]] - mean) * inv_std;
                            out[[ni, ci, y, xx]] = gv[ci] * xh + bv[ci];
                        }
                    }
                }
            }
        }

        self.push(
            out.into_dyn(),
            vec![x.0, gamma.0, beta.0],
            Some(Box::new(move |ctx| {
                let g = ctx.grad.view().into_dimensionality::<Ix4>().unwrap();
                let xv = ctx.inputs[0].view().into_dimensionality::<Ix4>().unwrap();
                let gv = ctx.inputs[1].view().into_dimensionality::<Ix1>().unwrap();

                let mut dx = ctx.needs[0].then(|| Array4::<S>::zeros((n, c, h, w)));
                let mut dgamma = Array1::<S>::zeros(c);
                let mut dbeta = Array1::<S>::zeros(c);
                let mf = S::of(m as f64);

                for ni in 0..n {
                    for grp in 0..groups {
                        let c0 = grp * cg;
                        let mut mean = S::zero();
                        for ci in c0..c0 + cg {
                            mean = mean + xv.slice(ndarray::s![ni, ci, .., ..]).sum();
                        }
                        mean = mean / mf;
                        let mut var = S::zero();
                        for ci in c0..c0 + cg {
                            for y in 0..h {
                                for xx in 0..w {
                                    let d = xv[[ni, ci, y, xx]] - mean;
                                    var = var + d * d;
                                }
                            }
                        }
                        var = var / mf;
                        let inv_std = S::one() / (var + epss).sqrt();

                        // accumulate affine grads and the two group sums
                        let mut sum_dxh = S::zero();
                        let mut sum_dxh_xh = S::zero();
                        for ci in c0..c0 + cg {
                            for y in 0..h {
                                for xx in 0..w {
                                    let xh = (xv[[ni, ci, y, xx]] - mean) * inv_std;
                                    let go = g[[ni, ci, y, xx]];
                                    dgamma[ci] = dgamma[ci] + go * xh;
                                    dbeta[ci] = dbeta[ci] + go;
                                    let dxh = go * gv[ci];
                                    sum_dxh = sum_dxh + dxh;
                                    sum_dxh_xh = sum_dxh_xh + dxh * xh;
                                }
                            }
                        }
                        if let Some(dx) = dx.as_mut() {
                            for ci in c0..c0 + cg {
                                for y in 0..h {
                                    for xx in 0..w {
                                        let xh = (xv[[ni, ci, y, xx]] - mean) * inv_std;
                                        let dxh = g[[ni, ci, y, xx]] * gv[ci];
                                        dx[[ni, ci, y, xx]] = inv_std
                                            * (dxh - (sum_dxh + xh * sum_dxh_xh) / mf);
                                    }
                                }
                            }
                        }
                    }
                }
                vec![
                    dx.map(|a| a.into_dyn()),
                    ctx.needs[1].then(|| dgamma.into_dyn()),
                    ctx.needs[2].then(|| dbeta.into_dyn()),
                ]
            })),
        )
    }
}
