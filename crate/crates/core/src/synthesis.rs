//! Safety and reachability controllers for abstract control modules, and their
//! refinement to concrete states through the state quantizers.
//!
//! Blocking inputs lose: a control is admissible only where the abstraction is
//! nonblocking, and every successor must satisfy the goal (nondeterminism is
//! adversarial).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridError, Quantizer};
use crate::module::{ControlModule, ModuleError};
use crate::predicate::{FrozenPredicate, Predicate, PredicateError, Variable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error(transparent)]
    OutOfGrid(#[from] GridError),
    #[error("no control is admissible for every cell containing {point:?}")]
    OutOfControllerDomain { point: Vec<f64> },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Module(#[from] ModuleError),
    #[error(transparent)]
    Predicate(#[from] PredicateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Safety,
    Reach,
}

#[derive(Debug, Clone)]
pub struct Controller {
    /// Name of the control module it was synthesized for.
    pub system: String,
    pub objective: Objective,
    pub states: Vec<Variable>,
    pub controls: Vec<Variable>,
    /// `C(x̂, u)`.
    pub predicate: Predicate,
    /// `∃u C`.
    pub domain: Predicate,
    /// Reach only: `levels[k]` holds the states first reached after `k` steps
    /// of the backward iteration (`levels[0]` is the target).
    pub levels: Vec<Predicate>,
    pub iterations: usize,
}

impl Controller {
    /// Number of abstract states in the domain.
    pub fn domain_size(&self) -> Result<u128, SynthesisError> {
        Ok(self.domain.count_sat(&self.states)?)
    }

    /// Step index of a state (reach controllers), by position in `levels`.
    pub fn step_index(&self, state: &[u64]) -> Option<usize> {
        let ids: Vec<_> = self.states.iter().map(|v| v.id()).collect();
        let val = |id| ids.iter().position(|&i| i == id).map_or(0, |k| state[k]);
        self.levels.iter().position(|l| l.eval(val))
    }
}

/// `NB(x̂, u) ∧ ∀x̂′ (F̂(x̂, u, x̂′) ⟹ Z(x̂′))`.
pub fn controlled_pre(sys: &ControlModule, z: &Predicate) -> Result<Predicate, SynthesisError> {
    let next = sys.next_states();
    let z_next = z.rename(&sys.prime())?;
    let all_succ_ok = sys.transitions().implies(&z_next)?.forall(next)?;
    Ok(sys.module().nonblocking()?.and(&all_succ_ok)?)
}

fn states_domain(sys: &ControlModule) -> Result<Predicate, SynthesisError> {
    Ok(sys.module().context().domain(sys.states())?)
}

/// Greatest fixed point of `W ↦ Safe ∧ ∃u cpre(W)`.
pub fn solve_safety(sys: &ControlModule, safe: &Predicate) -> Result<Controller, SynthesisError> {
    let safe = safe.and(&states_domain(sys)?)?;
    let mut w = safe.clone();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let next = safe.and(&controlled_pre(sys, &w)?.exists(sys.controls())?)?;
        if next.equivalent(&w)? {
            break;
        }
        w = next;
    }
    let predicate = safe.and(&controlled_pre(sys, &w)?)?;
    let domain = predicate.exists(sys.controls())?;
    log::info!("safety: {} iterations", iterations);
    Ok(Controller {
        system: sys.module().name().to_string(),
        objective: Objective::Safety,
        states: sys.states().to_vec(),
        controls: sys.controls().to_vec(),
        predicate,
        domain,
        levels: Vec::new(),
        iterations,
    })
}

/// Least fixed point of `W ↦ Target ∨ ∃u cpre(W)` with a min-step policy:
/// each state keeps the controls that were admissible when it first entered
/// `W`, reduced to the smallest one.
pub fn solve_reach(sys: &ControlModule, target: &Predicate) -> Result<Controller, SynthesisError> {
    let target = target.and(&states_domain(sys)?)?;
    let nb = sys.module().nonblocking()?;
    let mut w = target.clone();
    let mut levels = vec![target.clone()];
    let mut policy = smallest_control(&target.and(&nb)?, sys.controls())?;
    loop {
        let pre = controlled_pre(sys, &w)?;
        let fresh = pre.exists(sys.controls())?.and(&w.not()?)?;
        if fresh.is_unsat() {
            break;
        }
        policy = policy.or(&smallest_control(&pre.and(&fresh)?, sys.controls())?)?;
        w = w.or(&fresh)?;
        levels.push(fresh);
    }
    let iterations = levels.len();
    let domain = policy.exists(sys.controls())?;
    log::info!("reach: {} levels", iterations);
    Ok(Controller {
        system: sys.module().name().to_string(),
        objective: Objective::Reach,
        states: sys.states().to_vec(),
        controls: sys.controls().to_vec(),
        predicate: policy,
        domain,
        levels,
        iterations,
    })
}

/// Restricts `p` so that, for every assignment of its other variables, the
/// controls take their lexicographically smallest admissible value (first
/// control most significant).
fn smallest_control(p: &Predicate, controls: &[Variable]) -> Result<Predicate, SynthesisError> {
    let ctx = p.context();
    let mut p = p.clone();
    for u in controls {
        let mut chosen = ctx.bottom();
        let mut covered = ctx.bottom();
        for v in 0..u.domain_size() {
            let slice = p.and(&ctx.eq_const(u, v)?)?;
            if slice.is_unsat() {
                continue;
            }
            chosen = chosen.or(&slice.and(&covered.not()?)?)?;
            covered = covered.or(&slice.exists(std::slice::from_ref(u))?)?;
        }
        p = chosen;
    }
    Ok(p)
}

/// Whether every closed-loop successor of `C` lies in `domain ∧ safe`.
pub fn safety_closed(sys: &ControlModule, c: &Controller, safe: &Predicate) -> Result<bool, SynthesisError> {
    let good = c.domain.and(safe)?.rename(&sys.prime())?;
    let loop_ = c.predicate.and(sys.transitions())?;
    Ok(loop_.entails(&good)?)
}

/// Concrete controller: quantize the state, then admit a control only if every
/// related abstract state admits it.
#[derive(Debug, Clone)]
pub struct RefinedController {
    quantizers: Vec<Quantizer>,
    frozen: FrozenPredicate,
    control_values: Vec<Vec<u64>>,
}

pub fn refine_controller(c: &Controller, quantizers: &[Quantizer]) -> Result<RefinedController, SynthesisError> {
    if quantizers.len() != c.states.len() {
        return Err(SynthesisError::Invalid(format!(
            "{} quantizers for {} state variables",
            quantizers.len(),
            c.states.len()
        )));
    }
    for (q, v) in quantizers.iter().zip(&c.states) {
        if q.cell_count() as u128 != v.domain_size() {
            return Err(SynthesisError::Invalid(format!(
                "`{}` has {} values but its grid has {} cells",
                v.name(),
                v.domain_size(),
                q.cell_count()
            )));
        }
    }
    if c.domain.is_unsat() {
        return Err(SynthesisError::Invalid("controller is empty".into()));
    }
    let vars: Vec<Variable> = c.states.iter().chain(&c.controls).cloned().collect();
    let mut control_values = vec![Vec::new()];
    for u in &c.controls {
        control_values = control_values
            .into_iter()
            .flat_map(|p| {
                (0..u.domain_size() as u64).map(move |x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    Ok(RefinedController {
        quantizers: quantizers.to_vec(),
        frozen: c.predicate.freeze(&vars),
        control_values,
    })
}

impl RefinedController {
    /// Admissible control tuples at concrete state `x`.
    pub fn admissible(&self, x: &[f64]) -> Result<Vec<Vec<u64>>, SynthesisError> {
        if x.len() != self.quantizers.len() {
            return Err(SynthesisError::Invalid(format!(
                "state has {} components, expected {}",
                x.len(),
                self.quantizers.len()
            )));
        }
        let mut cells = vec![Vec::new()];
        for (q, &p) in self.quantizers.iter().zip(x) {
            let here = q.quantize(p)?;
            cells = cells
                .into_iter()
                .flat_map(|c: Vec<u64>| {
                    here.iter().map(move |&k| {
                        let mut d = c.clone();
                        d.push(k as u64);
                        d
                    })
                })
                .collect();
        }
        let allowed: Vec<Vec<u64>> = self
            .control_values
            .iter()
            .filter(|u| {
                cells.iter().all(|cell| {
                    let mut row = cell.clone();
                    row.extend(u.iter());
                    self.frozen.eval(&row)
                })
            })
            .cloned()
            .collect();
        if allowed.is_empty() {
            return Err(SynthesisError::OutOfControllerDomain { point: x.to_vec() });
        }
        Ok(allowed)
    }
}

#[cfg(test)]
mod tests;
