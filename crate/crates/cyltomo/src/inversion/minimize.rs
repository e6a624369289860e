//! Projected gradient descent on the feasible set.

use serde::{Deserialize, Serialize};

use super::field::SemiDiscreteField;
use super::functional::Functional;
use super::lift::project_feasible;
use super::InversionError;

/// Consecutive objective increases tolerated in fixed-step mode.
pub const MAX_INCREASES: usize = 10;

/// Halvings tried per iteration before the step is declared unusable.
pub const MAX_BACKTRACKS: usize = 80;

/// Parameters of the feasible set and of the descent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibleSetParams {
    /// Norm bound; monitored, never projected.
    pub m_bound: f64,
    /// Lower bound on `tau_r`; samples of `u` are kept at or above `c^2`.
    pub c: f64,
    pub lambda: f64,
    /// Initial (and maximal) step.
    pub gamma: f64,
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Halve the step on increase; otherwise take fixed steps.
    pub backtracking: bool,
}

impl Default for FeasibleSetParams {
    fn default() -> Self {
        FeasibleSetParams {
            m_bound: 1e3,
            c: 0.01 / (0.01f64 * 0.01 + 1.0).sqrt(),
            lambda: 3.0,
            gamma: 0.1,
            grad_tol: 1e-2,
            max_iters: 2000,
            backtracking: true,
        }
    }
}

impl FeasibleSetParams {
    pub fn validate(&self) -> Result<(), InversionError> {
        let ok = self.m_bound > 0.0
            && self.c > 0.0
            && self.lambda >= 0.0
            && self.gamma > 0.0
            && self.gamma < 1.0
            && self.grad_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(InversionError::Mismatch(format!("invalid descent parameters {self:?}")))
        }
    }

    /// Floor applied to the samples of `u`.
    pub fn u_floor(&self) -> f64 {
        self.c * self.c
    }
}

/// Per-iteration record; entry `k` describes the iterate after `k` steps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub j: Vec<f64>,
    pub grad_norm: Vec<f64>,
    /// Step length used to reach the iterate (0 for the start).
    pub step: Vec<f64>,
    pub clamped_fraction: Vec<f64>,
    /// Set once the interior `L2` norm exceeded the bound `M`.
    pub norm_bound_exceeded: bool,
    /// Clamp degeneracy was reported at some iterate.
    pub degenerate: bool,
}

impl History {
    pub fn iterations(&self) -> usize {
        self.j.len().saturating_sub(1)
    }
}

/// Outcome of [`minimize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub v: SemiDiscreteField,
    pub history: History,
    /// Gradient norm fell below `grad_tol`.
    pub converged: bool,
}

/// Called after every iteration with the iteration count, the iterate and the history.
pub type Observer<'a> = &'a mut dyn FnMut(usize, &SemiDiscreteField, &History);

/// Runs `V_k = P(V_{k-1} - gamma grad J(V_{k-1}))` from `v0`, where `P` pins the
/// end planes and lifts `u` samples to `c^2`.
///
/// With backtracking, a rejected step is halved until `J` does not increase and
/// the next iteration restarts from twice the accepted step, capped at `gamma`.
/// The stopping norm is the interior `L2` norm of the gradient. `history`
/// continues a previous run when resuming from a checkpoint.
pub fn minimize(
    functional: &Functional,
    v0: &SemiDiscreteField,
    params: &FeasibleSetParams,
    history: Option<History>,
    mut observer: Option<Observer<'_>>,
) -> Result<Minimum, InversionError> {
    params.validate()?;
    if v0.grid != functional.grid || v0.n != functional.n() {
        return Err(InversionError::Mismatch("start field does not match the functional".into()));
    }
    let mut v = v0.clone();
    project_feasible(functional, &mut v);
    let mut history = history.unwrap_or_default();
    let start = history.iterations();
    let (mut eval, mut grad) = functional.value_and_gradient(&v);
    let mut gnorm = grad.interior_l2();
    if !eval.j.is_finite() || !grad.is_finite() {
        return Err(InversionError::NonFinite(start));
    }
    if history.j.is_empty() {
        record(&mut history, &v, eval.j, gnorm, 0.0, eval.clamped_fraction, eval.degenerate, params);
    }
    let mut step = match history.step.last() {
        Some(&last) if params.backtracking && last > 0.0 => (2.0 * last).min(params.gamma),
        _ => params.gamma,
    };
    let mut increases = 0usize;
    for it in start..params.max_iters {
        if gnorm < params.grad_tol {
            return Ok(Minimum { v, history, converged: true });
        }
        let mut trial = step;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut cand = v.axpy(-trial, &grad);
            project_feasible(functional, &mut cand);
            let e = functional.value(&cand);
            if !e.j.is_finite() {
                if !params.backtracking {
                    return Err(InversionError::NonFinite(it + 1));
                }
                trial *= 0.5;
                continue;
            }
            if !params.backtracking {
                increases = if e.j > eval.j { increases + 1 } else { 0 };
                if increases >= MAX_INCREASES {
                    return Err(InversionError::Step(increases));
                }
                accepted = Some(cand);
                break;
            }
            if e.j <= eval.j {
                accepted = Some(cand);
                break;
            }
            trial *= 0.5;
        }
        let Some(next) = accepted else {
            return Err(InversionError::Step(MAX_BACKTRACKS));
        };
        v = next;
        let (e, g) = functional.value_and_gradient(&v);
        if !e.j.is_finite() || !g.is_finite() {
            return Err(InversionError::NonFinite(it + 1));
        }
        eval = e;
        grad = g;
        gnorm = grad.interior_l2();
        record(&mut history, &v, eval.j, gnorm, trial, eval.clamped_fraction, eval.degenerate, params);
        if params.backtracking {
            step = (2.0 * trial).min(params.gamma);
        }
        if let Some(obs) = observer.as_mut() {
            obs(it + 1, &v, &history);
        }
    }
    let converged = gnorm < params.grad_tol;
    Ok(Minimum { v, history, converged })
}

#[allow(clippy::too_many_arguments)]
fn record(
    history: &mut History,
    v: &SemiDiscreteField,
    j: f64,
    gnorm: f64,
    step: f64,
    clamped: f64,
    degenerate: bool,
    params: &FeasibleSetParams,
) {
    history.j.push(j);
    history.grad_norm.push(gnorm);
    history.step.push(step);
    history.clamped_fraction.push(clamped);
    history.degenerate |= degenerate;
    if v.interior_l2() > params.m_bound {
        history.norm_bound_exceeded = true;
    }
}
