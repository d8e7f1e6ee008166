use super::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Compare analytic gradients against central differences with step `h`.
///
/// `loss` evaluates the scalar loss at the current parameter values; when
/// its second argument is true it must also accumulate gradients into the
/// store. Frozen parameters are skipped.
pub fn grad_check<L>(params: &mut ParamStore<f64>, mut loss: L, h: f64) -> Result<GradCheckReport>
where
    L: FnMut(&mut ParamStore<f64>, bool) -> Result<f64>,
{
    let finite = |v: f64| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numerical("grad_check: non-finite loss".into()))
        }
    };
    params.zero_grad();
    finite(loss(params, true)?)?;
    let analytic: Vec<_> = params.iter().map(|p| p.grad.clone()).collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for pi in 0..params.len() {
        let id = super::ParamId(pi);
        if params.param(id).frozen {
            continue;
        }
        let n = params.value(id).len();
        for j in 0..n {
            let orig = params.value(id).as_slice().unwrap()[j];
            params.value_mut(id).as_slice_mut().unwrap()[j] = orig + h;
            let plus = finite(loss(params, false)?)?;
            params.value_mut(id).as_slice_mut().unwrap()[j] = orig - h;
            let minus = finite(loss(params, false)?)?;
            params.value_mut(id).as_slice_mut().unwrap()[j] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[pi].as_slice().unwrap()[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((params.param(id).name.clone(), j));
            }
        }
    }
    params.zero_grad();
    Ok(report)
}
