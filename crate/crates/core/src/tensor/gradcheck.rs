use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use crate::error::Result;
use crate::rng::SeedStreams;

/// Denominator floor for relative errors, so gradients that are
/// numerically zero are compared on an absolute scale.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares reverse-mode gradients of the scalar built by `f` against
/// central differences `(f(x+eps) - f(x-eps)) / 2eps` for every entry of
/// the parameters in `wrt` (all parameters when empty).
pub fn grad_check<F>(params: &ParamStore<f64>, wrt: &[ParamId], eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<Var>,
{
    check_with(params, wrt, eps, |p| Graph::new(p), f)
}

/// [`grad_check`] on training-mode graphs; every evaluation reuses the
/// same dropout stream so masks stay fixed across perturbations.
pub fn grad_check_training<F>(params: &ParamStore<f64>, wrt: &[ParamId], eps: f64, seed: u64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<Var>,
{
    let streams = SeedStreams::new(seed);
    check_with(params, wrt, eps, |p| Graph::training(p, streams.stream("dropout")), f)
}

fn check_with<B, F>(params: &ParamStore<f64>, wrt: &[ParamId], eps: f64, build: B, f: F) -> Result<GradCheckReport>
where
    B: for<'p> Fn(&'p ParamStore<f64>) -> Graph<'p, f64>,
    F: Fn(&mut Graph<'_, f64>) -> Result<Var>,
{
    let eval = |store: &ParamStore<f64>| -> Result<f64> {
        let mut g = build(store);
        let y = f(&mut g)?;
        Ok(g.value(y).item())
    };
    let mut g = build(params);
    let y = f(&mut g)?;
    let grads = g.backward(y)?;
    drop(g);

    let ids: Vec<ParamId> = if wrt.is_empty() { params.ids().collect() } else { wrt.to_vec() };
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
    };
    for id in ids {
        let analytic = grads.get(id);
        for i in 0..params.get(id).len() {
            let x0 = params.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = x0 + eps;
            let up = eval(&work)?;
            work.get_mut(id).data_mut()[i] = x0 - eps;
            let down = eval(&work)?;
            work.get_mut(id).data_mut()[i] = x0;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.map_or(0.0, |g| g[i]);
            report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
            report.max_rel_error = report.max_rel_error.max(relative_error(a, numeric));
            report.checked += 1;
        }
    }
    Ok(report)
}
