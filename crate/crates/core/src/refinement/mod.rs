//! Executable checks that one module approximates another.
//!
//! `M̂` approximates `M` under strict quantizers `Qi`, `Qo` when
//!
//! * `Qi(i, î) ∧ NB_M̂(î) ⟹ NB_M(i)` (abstract nonblocking is safe), and
//! * `Qi(i, î) ∧ NB_M̂(î) ∧ M(i, o) ∧ Qo(o, ô) ⟹ M̂(î, ô)` (abstract outputs cover).
//!
//! For finite concrete modules both are decided exactly; continuous modules
//! are only falsified on a sample grid (see [`falsify`]).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::module::{ControlModule, FiniteModule, ModuleError};
use crate::predicate::{Context, Predicate, PredicateError, Variable};

mod harness;
mod sampled;

pub use harness::{composition_harness, hiding_harness, HarnessOptions, HarnessStats, HideVariant, CompositionVariant, TrialRecord};
pub use sampled::{falsify, finitize, FalsifyOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefinementError {
    #[error("quantizer for `{0}` is not strict")]
    StrictnessError(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Module(#[from] ModuleError),
    #[error(transparent)]
    Predicate(#[from] PredicateError),
}

impl From<crate::grid::GridError> for RefinementError {
    fn from(e: crate::grid::GridError) -> Self {
        RefinementError::Invalid(e.to_string())
    }
}

/// A concrete module, its candidate abstraction and the quantizers relating them.
#[derive(Debug, Clone)]
pub struct AbstractionClaim {
    pub concrete: FiniteModule,
    pub abstraction: FiniteModule,
    /// Over the concrete and abstract inputs.
    pub q_in: Predicate,
    /// Over the concrete and abstract outputs.
    pub q_out: Predicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Which half of the approximation condition is violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    /// The abstraction accepts an input whose concrete counterpart blocks.
    Nonblocking,
    /// A concrete output is missing from the abstract output set.
    Overapprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    ConcreteInput,
    AbstractInput,
    ConcreteOutput,
    AbstractOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub role: Role,
    pub name: String,
    /// Concrete value, or the index of a finite/abstract value.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Vec<Binding>>,
    /// Sampling step for falsification runs; `None` for exact checks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    fn pass(notes: Vec<String>) -> Self {
        CheckReport {
            verdict: Verdict::Pass,
            condition: None,
            counterexample: None,
            resolution: None,
            notes,
        }
    }

    fn fail(condition: Condition, cex: Vec<Binding>) -> Self {
        CheckReport {
            verdict: Verdict::Fail,
            condition: Some(condition),
            counterexample: Some(cex),
            resolution: None,
            notes: Vec::new(),
        }
    }
}

/// Variables in order with duplicates (by id) removed.
fn dedup(vars: impl IntoIterator<Item = Variable>) -> Vec<Variable> {
    let mut out: Vec<Variable> = Vec::new();
    for v in vars {
        if !out.iter().any(|w| w.id() == v.id()) {
            out.push(v);
        }
    }
    out
}

/// `∀ w ∃ ŵ Q(w, ŵ)` over the domain of `w`.
pub fn is_strict(q: &Predicate, concrete: &[Variable], abstract_: &[Variable]) -> Result<bool, RefinementError> {
    let ctx = q.context();
    let only_abstract: Vec<Variable> = abstract_
        .iter()
        .filter(|a| !concrete.iter().any(|c| c.id() == a.id()))
        .cloned()
        .collect();
    let covered = q.exists(&only_abstract)?;
    Ok(ctx.domain(concrete)?.entails(&covered)?)
}

impl AbstractionClaim {
    fn check_context(&self) -> Result<&Context, RefinementError> {
        let ctx = self.concrete.context();
        for p in [self.abstraction.constraint(), &self.q_in, &self.q_out] {
            if !p.context().same(ctx) {
                return Err(RefinementError::TypeMismatch(
                    "claim mixes predicate contexts".into(),
                ));
            }
        }
        Ok(ctx)
    }

    fn check_strict(&self) -> Result<(), RefinementError> {
        if !is_strict(&self.q_in, self.concrete.inputs(), self.abstraction.inputs())? {
            return Err(RefinementError::StrictnessError(names(self.concrete.inputs())));
        }
        if !is_strict(&self.q_out, self.concrete.outputs(), self.abstraction.outputs())? {
            return Err(RefinementError::StrictnessError(names(self.concrete.outputs())));
        }
        Ok(())
    }

    /// Interface variables in `(i, î, o, ô)` order with roles, shared ones once.
    fn roles(&self) -> Vec<(Role, Variable)> {
        let groups = [
            (Role::ConcreteInput, self.concrete.inputs()),
            (Role::AbstractInput, self.abstraction.inputs()),
            (Role::ConcreteOutput, self.concrete.outputs()),
            (Role::AbstractOutput, self.abstraction.outputs()),
        ];
        let mut out: Vec<(Role, Variable)> = Vec::new();
        for (role, vars) in groups {
            for v in vars {
                if !out.iter().any(|(_, w)| w.id() == v.id()) {
                    out.push((role, v.clone()));
                }
            }
        }
        out
    }

    /// Replays a counterexample through the predicates; true iff it violates
    /// the reported condition.
    pub fn replays(&self, report: &CheckReport) -> bool {
        let (Some(cond), Some(cex)) = (report.condition, &report.counterexample) else {
            return false;
        };
        let ctx = self.concrete.context();
        let mut values = std::collections::HashMap::new();
        for b in cex {
            match ctx.var(&b.name) {
                Ok(v) => {
                    values.insert(v.id(), b.value as u64);
                }
                Err(_) => return false,
            }
        }
        let val = |id| values.get(&id).copied().unwrap_or(0);
        let (Ok(nb_m), Ok(nb_a)) = (self.concrete.nonblocking(), self.abstraction.nonblocking()) else {
            return false;
        };
        let premise = self.q_in.eval(val) && nb_a.eval(val);
        match cond {
            Condition::Nonblocking => premise && !nb_m.eval(val),
            Condition::Overapprox => {
                premise
                    && self.concrete.constraint().eval(val)
                    && self.q_out.eval(val)
                    && !self.abstraction.constraint().eval(val)
            }
        }
    }
}

fn names(vars: &[Variable]) -> String {
    vars.iter().map(|v| v.name()).collect::<Vec<_>>().join(", ")
}

/// Decides both approximation conditions exactly for a finite concrete module.
pub fn check_abstraction(claim: &AbstractionClaim) -> Result<CheckReport, RefinementError> {
    claim.check_context()?;
    claim.check_strict()?;
    let roles = claim.roles();
    let witness = |p: &Predicate, upto: usize| -> Result<Option<Vec<Binding>>, RefinementError> {
        let vars: Vec<Variable> = roles.iter().take(upto).map(|(_, v)| v.clone()).collect();
        Ok(p.pick_sat(&vars)?.map(|row| {
            roles
                .iter()
                .zip(row)
                .map(|((role, v), x)| Binding {
                    role: *role,
                    name: v.name().to_string(),
                    value: x as f64,
                })
                .collect()
        }))
    };
    let n_inputs = roles
        .iter()
        .filter(|(r, _)| matches!(r, Role::ConcreteInput | Role::AbstractInput))
        .count();

    let nb_m = claim.concrete.nonblocking()?;
    let nb_a = claim.abstraction.nonblocking()?;
    let premise = claim.q_in.and(&nb_a)?;
    let bad_nb = premise.and(&nb_m.not()?)?;
    if let Some(cex) = witness(&bad_nb, n_inputs)? {
        return Ok(CheckReport::fail(Condition::Nonblocking, cex));
    }
    let bad_out = premise
        .and(claim.concrete.constraint())?
        .and(&claim.q_out)?
        .and(&claim.abstraction.constraint().not()?)?;
    if let Some(cex) = witness(&bad_out, roles.len())? {
        return Ok(CheckReport::fail(Condition::Overapprox, cex));
    }

    // Allowed but worth knowing: the abstraction rejects inputs the concrete accepts.
    let mut notes = Vec::new();
    let stricter = claim.q_in.and(&nb_a.not()?)?.and(&nb_m)?;
    if !stricter.is_unsat() {
        let vars: Vec<Variable> = roles.iter().take(n_inputs).map(|(_, v)| v.clone()).collect();
        let n = stricter.count_sat(&vars)?;
        notes.push(format!(
            "{n} related input pairs block abstractly although the concrete module accepts them"
        ));
    }
    Ok(CheckReport::pass(notes))
}

/// Checks a feedback refinement relation between control modules: the
/// abstraction claim with input quantizer `Qx ∧ (u = û)` and output quantizer
/// `Qx` on the successor states.
///
/// `q_x` relates concrete states to abstract states; controls are paired by
/// position and must have equal domains.
pub fn check_frr(
    concrete: &ControlModule,
    abstraction: &ControlModule,
    q_x: &Predicate,
) -> Result<CheckReport, RefinementError> {
    let claim = frr_claim(concrete, abstraction, q_x)?;
    check_abstraction(&claim)
}

/// The abstraction claim induced by a feedback refinement check.
pub fn frr_claim(
    concrete: &ControlModule,
    abstraction: &ControlModule,
    q_x: &Predicate,
) -> Result<AbstractionClaim, RefinementError> {
    let ctx = concrete.module().context();
    let (cu, au) = (concrete.controls(), abstraction.controls());
    if cu.len() != au.len() {
        return Err(RefinementError::TypeMismatch(format!(
            "{} concrete controls but {} abstract controls",
            cu.len(),
            au.len()
        )));
    }
    let mut q_u = ctx.top();
    for (c, a) in cu.iter().zip(au) {
        if c.domain_size() != a.domain_size() {
            return Err(RefinementError::TypeMismatch(format!(
                "control `{}` has {} values but `{}` has {}",
                c.name(),
                c.domain_size(),
                a.name(),
                a.domain_size()
            )));
        }
        if c.id() != a.id() {
            q_u = q_u.and(&ctx.eq_vars(c, a)?)?;
        }
    }
    let mut mapping = concrete.prime();
    mapping.extend(abstraction.prime());
    let q_next = q_x.rename(&mapping)?;
    Ok(AbstractionClaim {
        concrete: concrete.module().clone(),
        abstraction: abstraction.module().clone(),
        q_in: q_x.and(&q_u)?,
        q_out: q_next,
    })
}

/// The tightest abstraction of a finite module under `q_in`/`q_out`: an
/// abstract input is nonblocking iff every related concrete input is, and then
/// reaches every abstract output related to some concrete successor.
pub fn tightest_abstraction(
    name: &str,
    concrete: &FiniteModule,
    abs_inputs: &[Variable],
    abs_outputs: &[Variable],
    q_in: &Predicate,
    q_out: &Predicate,
) -> Result<FiniteModule, RefinementError> {
    let (ci, co) = (concrete.inputs(), concrete.outputs());
    let only = |vars: &[Variable], not_in: &[Variable]| -> Vec<Variable> {
        vars.iter().filter(|v| !not_in.iter().any(|w| w.id() == v.id())).cloned().collect()
    };
    let ci_hidden = only(ci, abs_inputs);
    let co_hidden = only(co, abs_outputs);
    let nb = q_in.implies(&concrete.nonblocking()?)?.forall(&ci_hidden)?;
    let image = q_in
        .and(concrete.constraint())?
        .and(q_out)?
        .exists(&dedup(ci_hidden.iter().chain(&co_hidden).cloned()))?;
    Ok(FiniteModule::new(name, abs_inputs, abs_outputs, nb.and(&image)?)?)
}
