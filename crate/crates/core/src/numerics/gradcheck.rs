//! Central-difference verification of autodiff gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Module, Result};

use super::graph::{Graph, Var};
use super::params::{Bound, ParamStore};
use super::tensor::Real;

/// A scalar function of a parameter set, evaluable at any precision.
pub trait Objective {
    fn eval<T: Real>(&self, g: &mut Graph<T>, params: &Bound) -> Result<Var>;
}

/// Finite-difference stencil used by the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stencil {
    /// `(f(θ+ε) − f(θ−ε)) / 2ε`
    #[default]
    Central,
    /// `(f(θ−2ε) − 8f(θ−ε) + 8f(θ+ε) − f(θ+2ε)) / 12ε`; truncation error
    /// O(ε⁴), which permits larger steps and less cancellation.
    Central4,
}

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub eps: f64,
    pub stencil: Stencil,
    /// Denominator floor for the relative error; below it the error is
    /// effectively absolute.
    pub abs_floor: f64,
    /// Multiply `abs_floor` by `max(1, |loss|)`. Finite-difference rounding
    /// and low-precision accumulation noise both grow with the loss value,
    /// so an unscaled floor cannot judge exactly-cancelling gradients of a
    /// summed loss.
    pub scale_floor_by_loss: bool,
    /// Coordinates checked per parameter tensor; larger tensors are sampled.
    pub max_coords: usize,
    pub seed: u64,
    /// Reject the whole point when a relu input lies within this multiple
    /// of `eps` of zero. `None` keeps the point and relies on the
    /// per-coordinate crossing test alone.
    pub kink_margin: Option<f64>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { eps: 1e-5, stencil: Stencil::Central, abs_floor: 1e-6, max_coords: usize::MAX, seed: 0, kink_margin: Some(10.0), scale_floor_by_loss: false }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    /// Coordinates whose perturbation moved some relu input across zero;
    /// their differences straddle a kink and are not compared.
    pub kink_excluded: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    /// Set when a relu pre-activation sits within the kink margin; such
    /// points are excluded rather than failed and `params` is empty.
    pub kink_flagged: bool,
    pub relu_margin: Option<f64>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn kink_excluded(&self) -> usize {
        self.params.iter().map(|p| p.kink_excluded).sum()
    }

    pub fn passes(&self, tol: f64) -> bool {
        !self.kink_flagged && self.max_rel_err() < tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

struct Eval {
    value: f64,
    margin: Option<f64>,
    pattern: Vec<bool>,
}

fn eval_loss<T: Real, F: Objective>(f: &F, params: &ParamStore<T>) -> Result<Eval> {
    let mut g = Graph::new();
    let bound = params.bind_frozen(&mut g);
    let loss = f.eval(&mut g, &bound)?;
    let value = g.value(loss).item()?.to_f64().unwrap_or(f64::NAN);
    Ok(Eval { value, margin: g.relu_margin(), pattern: g.relu_pattern().to_vec() })
}

/// Compares autodiff gradients computed at precision `A` against central
/// differences `(f(θ+ε) − f(θ−ε)) / 2ε` evaluated at precision `O`.
///
/// The parameters are cast from `A` to `O` before differencing, so with
/// `A = f32, O = f64` the oracle is evaluated at exactly the same point.
pub fn grad_check<A: Real, O: Real, F: Objective>(
    f: &F,
    params: &ParamStore<A>,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if opts.eps <= 0.0 {
        return Err(Error::contract(Module::Numerics, "grad_check step must be positive"));
    }

    let mut g = Graph::<A>::new();
    let bound = params.bind(&mut g);
    let loss = f.eval(&mut g, &bound)?;
    if g.value(loss).len() != 1 {
        return Err(Error::contract(Module::Numerics, "grad_check objective must be scalar"));
    }
    let first = g.value(loss).item()?;
    let second = eval_loss(f, params)?.value;
    if first.to_f64() != Some(second) {
        return Err(Error::contract(
            Module::Numerics,
            "objective is not deterministic (is dropout enabled?)",
        ));
    }

    let mut oracle_params: ParamStore<O> = params.cast();
    let base = eval_loss(f, &oracle_params)?;
    let relu_margin = match (g.relu_margin(), base.margin) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    if let (Some(m), Some(k)) = (relu_margin, opts.kink_margin) {
        if m < k * opts.eps {
            return Ok(GradCheckReport { params: Vec::new(), kink_flagged: true, relu_margin });
        }
    }

    let floor = if opts.scale_floor_by_loss { opts.abs_floor * base.value.abs().max(1.0) } else { opts.abs_floor };
    g.backward(loss)?;
    let grads = params.collect_grads(&g, &bound);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let names: Vec<String> = params.names().map(str::to_owned).collect();
    let mut checks = Vec::with_capacity(names.len());
    for (pi, name) in names.iter().enumerate() {
        let len = grads[pi].len();
        let coords: Vec<usize> = if len <= opts.max_coords {
            (0..len).collect()
        } else {
            let mut c = sample(&mut rng, len, opts.max_coords).into_vec();
            c.sort_unstable();
            c
        };
        let mut check = ParamCheck {
            name: name.clone(),
            checked: 0,
            kink_excluded: 0,
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for &ci in &coords {
            let orig = oracle_params.tensor_at_mut(pi).data()[ci];
            let mut numeric = None;
            // a step that moves a relu input across zero straddles a kink;
            // retry with smaller steps before giving up on the coordinate
            for shrink in [1.0, 0.1, 0.01] {
                let h = opts.eps * shrink;
                let mut crossed = false;
                let mut at = |offset: f64| -> Result<f64> {
                    oracle_params.tensor_at_mut(pi).data_mut()[ci] = orig + O::lit(h * offset);
                    let e = eval_loss(f, &oracle_params)?;
                    crossed |= e.pattern != base.pattern;
                    Ok(e.value)
                };
                let d = match opts.stencil {
                    Stencil::Central => (at(1.0)? - at(-1.0)?) / (2.0 * h),
                    Stencil::Central4 => (at(-2.0)? - 8.0 * at(-1.0)? + 8.0 * at(1.0)? - at(2.0)?) / (12.0 * h),
                };
                if !crossed {
                    numeric = Some(d);
                    break;
                }
            }
            oracle_params.tensor_at_mut(pi).data_mut()[ci] = orig;
            let Some(numeric) = numeric else {
                check.kink_excluded += 1;
                continue;
            };
            check.checked += 1;

            let analytic = grads[pi][ci].to_f64().unwrap_or(f64::NAN);
            let err = relative_error(analytic, numeric, floor);
            if err > check.max_rel_err || err.is_nan() {
                check.max_rel_err = if err.is_nan() { f64::INFINITY } else { err };
                check.worst_index = ci;
                check.analytic = analytic;
                check.numeric = numeric;
            }
        }
        checks.push(check);
    }
    Ok(GradCheckReport { params: checks, kink_flagged: false, relu_margin })
}
