use super::graph::{Graph, Var};
use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// maxᵢ |analytic − numeric| / max(1e-8, |analytic| + |numeric|)
    pub max_rel_error: f64,
    /// (parameter index, flat entry) of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
}

/// Compares reverse-mode gradients of a scalar function against central
/// differences with step `h`, over every entry of every parameter.
///
/// `f` receives the graph and one node per parameter (in `params` order)
/// and must return a 1×1 node.
pub fn gradient_check<F>(params: &[Matrix], h: f64, f: F) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&mut Graph<'g>, &[Var]) -> Var,
{
    gradient_check_strided(params, h, 1, f)
}

/// Like [`gradient_check`] but only checks every `stride`-th entry of each
/// parameter (always including the first).
pub fn gradient_check_strided<F>(params: &[Matrix], h: f64, stride: usize, f: F) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&mut Graph<'g>, &[Var]) -> Var,
{
    if !(h > 0.0) {
        return Err(Error::Contract(format!("finite-difference step must be positive, got {h}")));
    }
    let stride = stride.max(1);

    let analytic: Vec<Matrix> = {
        let mut g = Graph::new();
        let leaves: Vec<Var> = params.iter().map(|m| g.leaf(m.clone())).collect();
        let loss = f(&mut g, &leaves);
        let grads = g.backward(loss)?;
        leaves
            .iter()
            .map(|&v| grads.wrt_or_zeros(v, g.value(v).shape()))
            .collect()
    };

    let eval = |work: &[Matrix]| -> Result<f64> {
        let mut g = Graph::new();
        let inputs: Vec<Var> = work.iter().map(|m| g.constant(m.clone())).collect();
        let out = f(&mut g, &inputs);
        let v = g.scalar(out);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric("non-finite function value during finite differences".into()))
        }
    };

    let mut work: Vec<Matrix> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for p in 0..work.len() {
        for k in (0..work[p].len()).step_by(stride) {
            let orig = work[p].as_slice()[k];
            work[p].as_mut_slice()[k] = orig + h;
            let plus = eval(&work)?;
            work[p].as_mut_slice()[k] = orig - h;
            let minus = eval(&work)?;
            work[p].as_mut_slice()[k] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[p].as_slice()[k];
            if !a.is_finite() {
                return Err(Error::Numeric(format!("non-finite analytic gradient at param {p}, entry {k}")));
            }
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            report.checked += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((p, k));
            }
        }
    }
    Ok(report)
}

/// Shifts entries that sit within `margin` of zero away from it, so relu
/// kinks are not straddled by a finite-difference step.
pub fn nudge_from_zero(m: &mut Matrix, margin: f64) {
    for v in m.as_mut_slice() {
        if v.abs() < margin {
            *v = if *v < 0.0 { -margin } else { margin };
        }
    }
}
