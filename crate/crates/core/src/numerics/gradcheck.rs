//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::Rng;

use super::{Tape, Tensor, Var};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
    /// `(parameter, element)` with the largest error.
    pub worst: Option<(usize, usize)>,
    /// Analytic and numeric derivative at `worst`.
    pub worst_values: Option<(f64, f64)>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares `analytic(p, e)` against `(f(x+h) − f(x−h)) / 2h` for every
/// coordinate, where `eval(p, e, delta)` evaluates the function with
/// element `e` of parameter `p` shifted by `delta`.
pub fn compare_central_differences(
    coords: &[(usize, usize)],
    h: f64,
    analytic: impl Fn(usize, usize) -> f64,
    mut eval: impl FnMut(usize, usize, f64) -> Result<f64>,
) -> Result<GradCheck> {
    let mut report = GradCheck {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
        worst_values: None,
    };
    for &(p, e) in coords {
        let numeric = (eval(p, e, h)? - eval(p, e, -h)?) / (2.0 * h);
        let a = analytic(p, e);
        let err = relative_error(a, numeric);
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some((p, e));
            report.worst_values = Some((a, numeric));
        }
        report.checked += 1;
    }
    Ok(report)
}

/// Every coordinate of every parameter.
pub fn all_coords(sizes: &[usize]) -> Vec<(usize, usize)> {
    sizes
        .iter()
        .enumerate()
        .flat_map(|(p, &n)| (0..n).map(move |e| (p, e)))
        .collect()
}

/// `count` distinct coordinates drawn uniformly over all elements.
pub fn sample_coords<R: Rng + ?Sized>(sizes: &[usize], count: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let total: usize = sizes.iter().sum();
    let mut picks = sample(rng, total, count.min(total)).into_vec();
    picks.sort_unstable();
    picks
        .into_iter()
        .map(|mut flat| {
            let mut p = 0;
            while flat >= sizes[p] {
                flat -= sizes[p];
                p += 1;
            }
            (p, flat)
        })
        .collect()
}

/// Checks the gradient of the scalar built by `f` with respect to `params`
/// (all coordinates when `coords` is `None`). Every parameter is bound
/// with gradient tracking regardless of its `requires_grad` flag.
pub fn grad_check<F>(params: &[Tensor], h: f64, coords: Option<&[(usize, usize)]>, f: F) -> Result<GradCheck>
where
    F: for<'t> Fn(&mut Tape<'t>, &[Var]) -> Result<Var>,
{
    let sizes: Vec<usize> = params.iter().map(Tensor::numel).collect();
    let owned;
    let coords = match coords {
        Some(c) => c,
        None => {
            owned = all_coords(&sizes);
            &owned
        }
    };

    let analytic: Vec<Vec<f64>> = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.param(p, true)).collect();
        let out = f(&mut tape, &vars)?;
        tape.backward(out)?;
        vars.iter()
            .zip(&sizes)
            .map(|(v, &n)| tape.grad(*v).map_or_else(|| vec![0.0; n], <[f64]>::to_vec))
            .collect()
    };

    let mut work: Vec<Tensor> = params.to_vec();
    compare_central_differences(
        coords,
        h,
        |p, e| analytic[p][e],
        |p, e, delta| {
            let original = work[p].data[e];
            work[p].data[e] = original + delta;
            let value = {
                let mut tape = Tape::new();
                let vars: Vec<Var> = work.iter().map(|t| tape.param(t, false)).collect();
                let out = f(&mut tape, &vars)?;
                tape.scalar(out)
            };
            work[p].data[e] = original;
            Ok(value)
        },
    )
}
