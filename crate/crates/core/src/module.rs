//! Modules as `(inputs, outputs, constraint)` triples, with composition that
//! propagates blocking inputs upstream, collection composition, and hiding.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::predicate::{Context, Predicate, PredicateError, VarId, Variable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModuleError {
    #[error("algebraic loop between modules: {}", .0.join(" -> "))]
    AlgebraicLoop(Vec<String>),
    #[error("`{0}` is an output of more than one module")]
    OutputClash(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("`{0}` is not an output of the module")]
    NotAnOutput(String),
    #[error("invalid state pairing: {0}")]
    PairingError(String),
    #[error("malformed module `{module}`: {msg}")]
    Malformed { module: String, msg: String },
    #[error(transparent)]
    Predicate(#[from] PredicateError),
}

#[derive(Debug, Clone)]
pub struct FiniteModule {
    name: String,
    inputs: Vec<Variable>,
    outputs: Vec<Variable>,
    constraint: Predicate,
}

/// Atomic members of `vars`, in declaration order.
fn atomic(ctx: &Context, vars: &[Variable]) -> Vec<Variable> {
    ctx.atoms(vars).into_iter().map(|a| ctx.variable_by_id(a)).collect()
}

fn ids(vars: &[Variable]) -> BTreeSet<VarId> {
    vars.iter().map(|v| v.id()).collect()
}

fn by_ids(ctx: &Context, set: &BTreeSet<VarId>) -> Vec<Variable> {
    set.iter().map(|&a| ctx.variable_by_id(a)).collect()
}

fn names(vars: &[Variable]) -> String {
    vars.iter().map(|v| v.name()).collect::<Vec<_>>().join(", ")
}

impl FiniteModule {
    /// Composite variables are expanded into their atomic members.
    pub fn new(name: &str, inputs: &[Variable], outputs: &[Variable], constraint: Predicate) -> Result<Self, ModuleError> {
        let ctx = constraint.context().clone();
        ctx.check_vars(inputs)?;
        ctx.check_vars(outputs)?;
        let inputs = atomic(&ctx, inputs);
        let outputs = atomic(&ctx, outputs);
        let (i, o) = (ids(&inputs), ids(&outputs));
        if let Some(&shared) = i.intersection(&o).next() {
            return Err(ModuleError::Malformed {
                module: name.to_string(),
                msg: format!("`{}` is both an input and an output", ctx.variable_by_id(shared).name()),
            });
        }
        for s in constraint.support_ids() {
            if !i.contains(&s) && !o.contains(&s) {
                return Err(ModuleError::Malformed {
                    module: name.to_string(),
                    msg: format!("constraint depends on `{}`, which is not in its interface", ctx.variable_by_id(s).name()),
                });
            }
        }
        Ok(FiniteModule {
            name: name.to_string(),
            inputs,
            outputs,
            constraint,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn renamed(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn inputs(&self) -> &[Variable] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Variable] {
        &self.outputs
    }

    pub fn constraint(&self) -> &Predicate {
        &self.constraint
    }

    pub fn context(&self) -> &Context {
        self.constraint.context()
    }

    /// Inputs followed by outputs.
    pub fn interface(&self) -> Vec<Variable> {
        self.inputs.iter().chain(self.outputs.iter()).cloned().collect()
    }

    /// `∃ outputs. constraint` — the inputs that admit at least one output.
    pub fn nonblocking(&self) -> Result<Predicate, ModuleError> {
        Ok(self.constraint.exists(&self.outputs)?)
    }

    /// Number of (input, output) assignments satisfying the constraint.
    pub fn transition_count(&self) -> Result<u128, ModuleError> {
        Ok(self.constraint.count_sat(&self.interface())?)
    }

    /// Number of blocking input assignments.
    pub fn blocking_count(&self) -> Result<u128, ModuleError> {
        Ok(self.nonblocking()?.not()?.count_sat(&self.inputs)?)
    }

    fn feeds(&self, other: &FiniteModule) -> bool {
        let o = ids(&self.outputs);
        other.inputs.iter().any(|v| o.contains(&v.id()))
    }
}

/// Series/parallel composition. When only `m2` feeds `m1`, the operands are
/// swapped; feedback in both directions is an algebraic loop.
pub fn compose2(m1: &FiniteModule, m2: &FiniteModule) -> Result<FiniteModule, ModuleError> {
    if !m1.context().same(m2.context()) {
        return Err(ModuleError::TypeMismatch(format!(
            "`{}` and `{}` live in different predicate contexts",
            m1.name, m2.name
        )));
    }
    let (o1, o2) = (ids(&m1.outputs), ids(&m2.outputs));
    if let Some(&clash) = o1.intersection(&o2).next() {
        return Err(ModuleError::OutputClash(m1.context().variable_by_id(clash).name().to_string()));
    }
    let (up, down) = match (m1.feeds(m2), m2.feeds(m1)) {
        (true, true) => return Err(ModuleError::AlgebraicLoop(vec![m1.name.clone(), m2.name.clone(), m1.name.clone()])),
        (false, true) => (m2, m1),
        _ => (m1, m2),
    };
    let ctx = up.context();
    let o_up = ids(&up.outputs);
    let mut inputs: BTreeSet<VarId> = ids(&up.inputs);
    inputs.extend(down.inputs.iter().map(|v| v.id()).filter(|a| !o_up.contains(a)));
    let mut outputs = o_up.clone();
    outputs.extend(ids(&down.outputs));

    let both = up.constraint.and(&down.constraint)?;
    let constraint = if up.feeds(down) {
        // ∀o12 (M1 ⟹ NB_M2); only o1 occurs in the body.
        let guard = up.constraint.implies(&down.nonblocking()?)?.forall(&up.outputs)?;
        both.and(&guard)?
    } else {
        both
    };
    Ok(FiniteModule {
        name: format!("{}*{}", up.name, down.name),
        inputs: by_ids(ctx, &inputs),
        outputs: by_ids(ctx, &outputs),
        constraint,
    })
}

/// Module dependency graph: `a → b` iff an output of `a` is an input of `b`.
#[derive(Debug, Clone)]
pub struct DependencyGraph {
    names: Vec<String>,
    edges: BTreeMap<usize, BTreeSet<usize>>,
}

impl DependencyGraph {
    pub fn new(modules: &[FiniteModule]) -> Self {
        let mut edges: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for (a, ma) in modules.iter().enumerate() {
            for (b, mb) in modules.iter().enumerate() {
                if a != b && ma.feeds(mb) {
                    edges.entry(a).or_default().insert(b);
                }
            }
        }
        DependencyGraph {
            names: modules.iter().map(|m| m.name.clone()).collect(),
            edges,
        }
    }

    pub fn successors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.get(&v).into_iter().flat_map(|s| s.iter().copied())
    }

    /// Topological order, ties broken by module name (then position).
    pub fn topo_order(&self) -> Result<Vec<usize>, ModuleError> {
        let n = self.names.len();
        let mut indeg = vec![0usize; n];
        for v in 0..n {
            for w in self.successors(v) {
                indeg[w] += 1;
            }
        }
        let mut ready: BTreeSet<(&str, usize)> =
            (0..n).filter(|&v| indeg[v] == 0).map(|v| (self.names[v].as_str(), v)).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(&first) = ready.iter().next() {
            ready.remove(&first);
            let v = first.1;
            order.push(v);
            for w in self.successors(v) {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    ready.insert((self.names[w].as_str(), w));
                }
            }
        }
        if order.len() < n {
            return Err(ModuleError::AlgebraicLoop(self.find_cycle(&indeg)));
        }
        Ok(order)
    }

    fn find_cycle(&self, indeg: &[usize]) -> Vec<String> {
        // Every unsorted vertex keeps an unsorted predecessor, so walking
        // predecessors must eventually revisit a vertex.
        let alive = |v: usize| indeg[v] > 0;
        let pred = |v: usize| (0..indeg.len()).find(|&p| alive(p) && self.successors(p).any(|w| w == v));
        let mut path = vec![(0..indeg.len()).find(|&v| alive(v)).expect("some vertex is unsorted")];
        loop {
            let v = *path.last().unwrap();
            let p = pred(v).expect("unsorted vertex has an unsorted predecessor");
            if let Some(pos) = path.iter().position(|&q| q == p) {
                // Edges run path[k + 1] → path[k]; list the cycle forwards.
                let mut cyc = vec![self.names[p].clone()];
                cyc.extend(path[pos + 1..].iter().rev().map(|&q| self.names[q].clone()));
                cyc.push(self.names[p].clone());
                return cyc;
            }
            path.push(p);
        }
    }
}

/// Composes a collection: sorts topologically, then folds from the most
/// downstream module, `F := compose2(M_sj, F)`.
pub fn compose_all(modules: &[FiniteModule]) -> Result<FiniteModule, ModuleError> {
    let first = modules
        .first()
        .ok_or_else(|| ModuleError::Malformed {
            module: String::new(),
            msg: "cannot compose an empty collection".into(),
        })?;
    let mut seen: BTreeMap<VarId, &str> = BTreeMap::new();
    for m in modules {
        if !m.context().same(first.context()) {
            return Err(ModuleError::TypeMismatch(format!(
                "`{}` lives in a different predicate context",
                m.name
            )));
        }
        for o in &m.outputs {
            if seen.insert(o.id(), &m.name).is_some() {
                return Err(ModuleError::OutputClash(o.name().to_string()));
            }
        }
    }
    let order = DependencyGraph::new(modules).topo_order()?;
    let mut it = order.iter().rev();
    let mut acc = modules[*it.next().unwrap()].clone();
    for &k in it {
        acc = compose2(&modules[k], &acc)?;
    }
    Ok(acc)
}

/// Existentially quantifies the outputs `w`.
pub fn hide(m: &FiniteModule, w: &[Variable]) -> Result<FiniteModule, ModuleError> {
    let ctx = m.context();
    let w = atomic(ctx, w);
    let o = ids(&m.outputs);
    for v in &w {
        if !o.contains(&v.id()) {
            return Err(ModuleError::NotAnOutput(v.name().to_string()));
        }
    }
    let hidden = ids(&w);
    Ok(FiniteModule {
        name: m.name.clone(),
        inputs: m.inputs.clone(),
        outputs: m.outputs.iter().filter(|v| !hidden.contains(&v.id())).cloned().collect(),
        constraint: m.constraint.exists(&w)?,
    })
}

/// A module with inputs `x ∪ u` and outputs `x′`, with `x ↔ x′` paired.
#[derive(Debug, Clone)]
pub struct ControlModule {
    module: FiniteModule,
    states: Vec<Variable>,
    next: Vec<Variable>,
    controls: Vec<Variable>,
}

impl ControlModule {
    pub fn module(&self) -> &FiniteModule {
        &self.module
    }

    pub fn states(&self) -> &[Variable] {
        &self.states
    }

    pub fn next_states(&self) -> &[Variable] {
        &self.next
    }

    pub fn controls(&self) -> &[Variable] {
        &self.controls
    }

    pub fn transitions(&self) -> &Predicate {
        self.module.constraint()
    }

    /// `(x′, x)` renaming pairs.
    pub fn unprime(&self) -> Vec<(Variable, Variable)> {
        self.next.iter().cloned().zip(self.states.iter().cloned()).collect()
    }

    /// `(x, x′)` renaming pairs.
    pub fn prime(&self) -> Vec<(Variable, Variable)> {
        self.states.iter().cloned().zip(self.next.iter().cloned()).collect()
    }
}

/// Validates `m` as a control module. `pairing` lists `(x, x′)`; every output
/// must be some `x′` and every input an `x` or a control.
pub fn as_control(m: &FiniteModule, pairing: &[(Variable, Variable)]) -> Result<ControlModule, ModuleError> {
    let ctx = m.context();
    let mut states = Vec::new();
    let mut next = Vec::new();
    for (x, xp) in pairing {
        let (ax, axp) = (atomic(ctx, std::slice::from_ref(x)), atomic(ctx, std::slice::from_ref(xp)));
        if ax.len() != axp.len() {
            return Err(ModuleError::PairingError(format!(
                "`{}` and `{}` have different shapes",
                x.name(),
                xp.name()
            )));
        }
        for (a, b) in ax.into_iter().zip(axp) {
            if a.domain_size() != b.domain_size() {
                return Err(ModuleError::PairingError(format!(
                    "dom({}) has {} values but dom({}) has {}",
                    a.name(),
                    a.domain_size(),
                    b.name(),
                    b.domain_size()
                )));
            }
            states.push(a);
            next.push(b);
        }
    }
    let (o, np) = (ids(&m.outputs), ids(&next));
    if let Some(v) = m.outputs.iter().find(|v| !np.contains(&v.id())) {
        return Err(ModuleError::PairingError(format!("output `{}` is not paired with a state", v.name())));
    }
    if let Some(v) = next.iter().find(|v| !o.contains(&v.id())) {
        return Err(ModuleError::PairingError(format!("`{}` is not an output of `{}`", v.name(), m.name)));
    }
    let s = ids(&states);
    let controls: Vec<Variable> = m.inputs.iter().filter(|v| !s.contains(&v.id())).cloned().collect();
    let mut module = m.clone();
    // States that the dynamics ignore still belong to the interface.
    let mut inputs = ids(&m.inputs);
    inputs.extend(s.iter().copied());
    module.inputs = by_ids(ctx, &inputs);
    Ok(ControlModule {
        module,
        states,
        next,
        controls,
    })
}

/// Module whose constraint holds on the value tuples (inputs then outputs,
/// composites expanded) accepted by `rel`. For small explicit relations.
pub fn from_relation(
    ctx: &Context,
    name: &str,
    inputs: &[Variable],
    outputs: &[Variable],
    rel: impl FnMut(&[u64]) -> bool,
) -> Result<FiniteModule, ModuleError> {
    let all: Vec<Variable> = inputs.iter().chain(outputs).cloned().collect();
    let constraint = ctx.from_fn(&all, rel)?;
    FiniteModule::new(name, inputs, outputs, constraint)
}

/// Debug helper: `name(i; o)`.
pub fn signature(m: &FiniteModule) -> String {
    format!("{}({}; {})", m.name, names(&m.inputs), names(&m.outputs))
}
