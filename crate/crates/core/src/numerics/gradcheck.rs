//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;

use super::graph::{Graph, Var};
use super::param::{ParamId, ParamStore};
use super::real::Real;
use super::rng::{stream_rng, Stream};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Coordinates probed per parameter; `None` probes every coordinate.
    pub probes: Option<usize>,
    pub step: f64,
    pub tolerance: f64,
    /// Lower bound of the relative-error denominator, so gradients that are
    /// numerically zero are compared in absolute terms.
    pub denominator_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            probes: None,
            step: 1e-5,
            tolerance: 1e-4,
            denominator_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub probed: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
    pub worst: Option<(String, usize)>,
    pub probed: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

fn eval<T, F>(f: &mut F, store: &ParamStore<T>) -> Result<T>
where
    T: Real,
    F: FnMut(&mut Graph<T>, &ParamStore<T>) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = f(&mut g, store)?;
    Ok(g.scalar(loss))
}

/// Compares the analytic gradient of `loss_fn` against central differences
/// for the parameters in `ids`. The closure must be deterministic: any
/// recorded dropout, or two evaluations that disagree, is rejected.
pub fn grad_check<T, F>(
    store: &mut ParamStore<T>,
    ids: &[ParamId],
    mut loss_fn: F,
    opts: GradCheckOptions,
) -> Result<GradCheckReport>
where
    T: Real,
    F: FnMut(&mut Graph<T>, &ParamStore<T>) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = loss_fn(&mut g, store)?;
    if g.is_stochastic() {
        return Err(Error::Nondeterministic("closure applies training-mode dropout"));
    }
    g.check_finite()?;
    let base = g.scalar(loss);
    if eval(&mut loss_fn, store)? != base {
        return Err(Error::Nondeterministic("two evaluations disagree"));
    }
    for &id in ids {
        store.zero_grad(id);
    }
    g.backward(loss, store)?;
    drop(g);

    let mut rng = stream_rng(opts.seed, Stream::GradCheck);
    let h = T::from_f64(opts.step);
    let mut report = GradCheckReport {
        params: Vec::new(),
        max_rel_error: 0.0,
        worst: None,
        probed: 0,
        tolerance: opts.tolerance,
    };

    for &id in ids {
        let n = store.value(id).len();
        let coords: Vec<usize> = match opts.probes {
            Some(p) if p < n => sample(&mut rng, n, p).into_vec(),
            _ => (0..n).collect(),
        };
        let analytic = store.grad(id).clone();
        let mut check = ParamCheck {
            name: store.name(id).to_string(),
            probed: coords.len(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
        };
        for &c in &coords {
            let orig = store.value(id).as_slice().expect("standard layout")[c];
            store.value_mut(id).as_slice_mut().expect("standard layout")[c] = orig + h;
            let plus = eval(&mut loss_fn, store)?;
            store.value_mut(id).as_slice_mut().expect("standard layout")[c] = orig - h;
            let minus = eval(&mut loss_fn, store)?;
            store.value_mut(id).as_slice_mut().expect("standard layout")[c] = orig;

            let numeric = (plus - minus).to_f64() / (2.0 * opts.step);
            let a = analytic.as_slice().expect("standard layout")[c].to_f64();
            let rel = relative_error(a, numeric, opts.denominator_floor);
            check.max_abs_error = check.max_abs_error.max((a - numeric).abs());
            if rel > check.max_rel_error {
                check.max_rel_error = rel;
            }
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                if rel >= report.max_rel_error {
                    report.worst = Some((check.name.clone(), c));
                }
            }
        }
        report.probed += coords.len();
        report.params.push(check);
    }
    Ok(report)
}
