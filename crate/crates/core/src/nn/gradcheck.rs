//! Central finite-difference gradient oracle, independent of every backward
//! implementation: it only re-evaluates the forward loss.

use super::graph::Scalar;
use super::params::ParamStore;
use ndarray::ArrayD;
use std::collections::BTreeMap;

/// Result of a gradient check over a set of parameters.
#[derive(Debug, Clone)]
pub struct GradCheck {
    /// worst relative error across all checked elements
    pub max_rel_err: f64,
    pub n_checked: usize,
}

/// Compare analytic gradients against central finite differences of
/// `loss_fn`. Relative error per element is |a - n| / max(|a|, |n|, floor).
pub fn finite_diff_check<S, F>(
    store: &ParamStore<S>,
    analytic: &BTreeMap<String, ArrayD<S>>,
    loss_fn: F,
    h: f64,
    floor: f64,
) -> GradCheck
where
    S: Scalar,
    F: Fn(&ParamStore<S>) -> f64,
{
    let mut max_rel = 0.0f64;
    let mut n_checked = 0usize;
    for (name, grad) in analytic {
        let base = store.get(name).clone();
        let mut probe = store.clone();
        for (i, &a) in grad.iter().enumerate() {
            let orig = base.as_slice().unwrap()[i];
            {
                let arr = probe.get_mut(name);
                arr.as_slice_mut().unwrap()[i] = orig + S::of(h);
            }
            let fp = loss_fn(&probe);
            {
                let arr = probe.get_mut(name);
                arr.as_slice_mut().unwrap()[i] = orig - S::of(h);
            }
            let fm = loss_fn(&probe);
            {
                let arr = probe.get_mut(name);
                arr.as_slice_mut().unwrap()[i] = orig;
            }
            let numeric = (fp - fm) / (2.0 * h);
            let a = a.dbl();
            let denom = a.abs().max(numeric.abs()).max(floor);
            let rel = (a - numeric).abs() / denom;
            if rel > max_rel {
                max_rel = rel;
            }
            n_checked += 1;
        }
    }
    GradCheck {
        max_rel_err: max_rel,
        n_checked,
    }
}
