//! Predicates over finite, bit-encoded variables.
//!
//! A [`Context`] owns the decision-diagram store and the variable table.
//! Every [`Predicate`] is a handle into exactly one context. Variables with a
//! domain size that is not a power of two are encoded in `ceil(log2 n)` bits;
//! the unused codes are kept false in every predicate that mentions the
//! variable, so counting and universal quantification follow set semantics.

mod bdd;
pub mod dump;

use std::cell::{Ref, RefCell, RefMut};
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

use bdd::{Edge, Level, Manager};

pub use dump::{read_dump, write_dump, DiagramFile, DiagramVar, DumpError, FrozenPredicate};

/// Index of an atomic variable inside its context.
pub type VarId = u32;

/// Default cap on live decision-diagram nodes (about 1.6 GB of node storage).
pub const DEFAULT_MAX_NODES: usize = 100_000_000;

/// Environment variable that overrides [`DEFAULT_MAX_NODES`].
pub const MAX_NODES_ENV: &str = "COMPABS_MAX_NODES";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PredicateError {
    #[error("variable name `{0}` is already declared")]
    NameClash(String),
    #[error("invalid bundle: {0}")]
    InvalidBundle(String),
    #[error("operands belong to different predicate contexts")]
    ContextMismatch,
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("predicate depends on `{0}`, which is not among the counted variables")]
    SupportError(String),
    #[error("value {value} is outside the domain of `{var}` (size {size})")]
    ValueOutOfRange { var: String, value: u64, size: u64 },
    #[error("domain size must be positive")]
    EmptyDomain,
    #[error("decision-diagram node limit exceeded (raise {MAX_NODES_ENV} to allow more)")]
    NodeLimit,
    #[error("satisfying-assignment count does not fit in 128 bits")]
    CountOverflow,
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
}

pub type Result<T, E = PredicateError> = std::result::Result<T, E>;

static NEXT_CONTEXT_ID: AtomicU64 = AtomicU64::new(1);

struct VarInfo {
    name: Arc<str>,
    domain_size: u64,
    /// Bit levels, most significant first.
    levels: Vec<Level>,
    /// `value < domain_size`, or the constant true for power-of-two domains.
    domain: Edge,
}

struct Store {
    id: u64,
    mgr: Manager,
    vars: Vec<VarInfo>,
    by_name: HashMap<Arc<str>, VarId>,
    next_level: Level,
    level_owner: Vec<VarId>,
}

/// A finite variable, or a bundle of them.
///
/// Composite variables are ordered lists of atomic members; their domain is
/// the product of the member domains, with the first member most significant.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Variable {
    ctx: u64,
    name: Arc<str>,
    members: Arc<[VarId]>,
    sizes: Arc<[u64]>,
    bits: u32,
}

impl fmt::Debug for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.name, self.domain_size())
    }
}

impl Variable {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of abstract values. Composite domains multiply; saturates at `u128::MAX`.
    pub fn domain_size(&self) -> u128 {
        self.sizes
            .iter()
            .fold(1u128, |acc, &s| acc.saturating_mul(s as u128))
    }

    pub fn bit_width(&self) -> u32 {
        self.bits
    }

    pub fn is_composite(&self) -> bool {
        self.members.len() != 1
    }

    pub fn members(&self) -> &[VarId] {
        &self.members
    }

    pub fn id(&self) -> VarId {
        debug_assert!(!self.is_composite());
        self.members[0]
    }

    fn atomic_size(&self) -> u64 {
        self.sizes[0]
    }
}

/// Owner of a decision-diagram store and its variables. Cheap to clone.
#[derive(Clone)]
pub struct Context {
    inner: Rc<RefCell<Store>>,
}

impl Default for Context {
    fn default() -> Self {
        Self::new()
    }
}

fn bits_for(size: u64) -> u32 {
    if size <= 1 {
        0
    } else {
        64 - (size - 1).leading_zeros()
    }
}

impl Context {
    pub fn new() -> Self {
        let cap = std::env::var(MAX_NODES_ENV)
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(DEFAULT_MAX_NODES);
        Self::with_node_limit(cap)
    }

    pub fn with_node_limit(max_nodes: usize) -> Self {
        let store = Store {
            id: NEXT_CONTEXT_ID.fetch_add(1, Ordering::Relaxed),
            mgr: Manager::new(max_nodes),
            vars: Vec::new(),
            by_name: HashMap::new(),
            next_level: 0,
            level_owner: Vec::new(),
        };
        Context {
            inner: Rc::new(RefCell::new(store)),
        }
    }

    fn store(&self) -> Ref<'_, Store> {
        self.inner.borrow()
    }

    fn store_mut(&self) -> RefMut<'_, Store> {
        self.inner.borrow_mut()
    }

    pub fn id(&self) -> u64 {
        self.store().id
    }

    pub fn same(&self, other: &Context) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    fn node_limit_err(&self) -> PredicateError {
        PredicateError::NodeLimit
    }

    /// Declares one atomic variable whose bits follow every bit allocated so far.
    pub fn declare(&self, name: &str, domain_size: u64) -> Result<Variable> {
        Ok(self
            .declare_interleaved(&[(name, domain_size)])?
            .pop()
            .expect("one variable"))
    }

    /// Declares several variables with their bits interleaved, most significant
    /// bit first. Use this for variables that appear together in relations,
    /// e.g. a state and its successor.
    pub fn declare_interleaved(&self, specs: &[(&str, u64)]) -> Result<Vec<Variable>> {
        let mut seen = BTreeSet::new();
        {
            let st = self.store();
            for &(name, size) in specs {
                if size == 0 {
                    return Err(PredicateError::EmptyDomain);
                }
                if st.by_name.contains_key(name) || !seen.insert(name) {
                    return Err(PredicateError::NameClash(name.to_string()));
                }
            }
        }
        let widths: Vec<u32> = specs.iter().map(|&(_, s)| bits_for(s)).collect();
        let max_w = widths.iter().copied().max().unwrap_or(0);
        let mut st = self.store_mut();
        let first_id = st.vars.len() as VarId;
        let mut levels: Vec<Vec<Level>> = vec![Vec::new(); specs.len()];
        for round in 0..max_w {
            for (k, &w) in widths.iter().enumerate() {
                // Align most significant bits; narrower variables start later.
                if round >= max_w - w {
                    let l = st.next_level;
                    st.next_level += 1;
                    st.level_owner.push(first_id + k as VarId);
                    levels[k].push(l);
                }
            }
        }
        let mut out = Vec::with_capacity(specs.len());
        for (k, &(name, size)) in specs.iter().enumerate() {
            let id = first_id + k as VarId;
            let lv = std::mem::take(&mut levels[k]);
            let domain = if size.is_power_of_two() || size == 1 {
                Edge::ONE
            } else {
                let e = less_than(&mut st.mgr, &lv, size)
                    .map_err(|_| PredicateError::NodeLimit)?;
                st.mgr.inc_ref(e);
                e
            };
            let name: Arc<str> = Arc::from(name);
            st.vars.push(VarInfo {
                name: name.clone(),
                domain_size: size,
                levels: lv,
                domain,
            });
            st.by_name.insert(name.clone(), id);
            out.push(Variable {
                ctx: st.id,
                name,
                members: Arc::from(vec![id]),
                sizes: Arc::from(vec![size]),
                bits: widths[k],
            });
        }
        Ok(out)
    }

    /// Looks up a declared atomic variable by name.
    pub fn var(&self, name: &str) -> Result<Variable> {
        let st = self.store();
        let id = *st
            .by_name
            .get(name)
            .ok_or_else(|| PredicateError::UnknownVariable(name.to_string()))?;
        Ok(self.atomic_of(&st, id))
    }

    fn atomic_of(&self, st: &Store, id: VarId) -> Variable {
        let info = &st.vars[id as usize];
        Variable {
            ctx: st.id,
            name: info.name.clone(),
            members: Arc::from(vec![id]),
            sizes: Arc::from(vec![info.domain_size]),
            bits: info.levels.len() as u32,
        }
    }

    pub fn variable_by_id(&self, id: VarId) -> Variable {
        let st = self.store();
        self.atomic_of(&st, id)
    }

    /// All atomic variables in declaration order.
    pub fn variables(&self) -> Vec<Variable> {
        let st = self.store();
        (0..st.vars.len() as VarId)
            .map(|i| self.atomic_of(&st, i))
            .collect()
    }

    /// Bundles variables into one composite. A single variable is returned as is.
    pub fn bundle(&self, vars: &[Variable]) -> Result<Variable> {
        if vars.len() == 1 {
            return Ok(vars[0].clone());
        }
        let mut members = Vec::new();
        let mut sizes = Vec::new();
        let mut seen = BTreeSet::new();
        let mut bits = 0;
        let id = self.id();
        for v in vars {
            if v.ctx != id {
                return Err(PredicateError::ContextMismatch);
            }
            for (&m, &s) in v.members.iter().zip(v.sizes.iter()) {
                if !seen.insert(m) {
                    return Err(PredicateError::InvalidBundle(format!(
                        "`{}` appears more than once",
                        self.variable_by_id(m).name()
                    )));
                }
                members.push(m);
                sizes.push(s);
            }
            bits += v.bits;
        }
        let name = vars
            .iter()
            .map(|v| v.name().to_string())
            .collect::<Vec<_>>()
            .join("∪");
        Ok(Variable {
            ctx: id,
            name: Arc::from(name),
            members: Arc::from(members),
            sizes: Arc::from(sizes),
            bits,
        })
    }

    /// Fails with [`PredicateError::ContextMismatch`] unless every variable
    /// was declared in this context.
    pub fn check_vars(&self, vars: &[Variable]) -> Result<()> {
        let id = self.id();
        if vars.iter().any(|v| v.ctx != id) {
            return Err(PredicateError::ContextMismatch);
        }
        Ok(())
    }

    fn wrap(&self, edge: Edge, scope: VarSet) -> Predicate {
        self.store_mut().mgr.inc_ref(edge);
        Predicate {
            ctx: self.clone(),
            edge,
            scope,
        }
    }

    pub fn top(&self) -> Predicate {
        self.wrap(Edge::ONE, VarSet::empty())
    }

    pub fn bottom(&self) -> Predicate {
        self.wrap(Edge::ZERO, VarSet::empty())
    }

    /// Every in-range assignment of `vars`: `⊤` unless some domain size is
    /// not a power of two.
    pub fn domain(&self, vars: &[Variable]) -> Result<Predicate> {
        self.check_vars(vars)?;
        let atoms = self.atoms(vars);
        let e = {
            let mut st = self.store_mut();
            Context::domain_edge(&mut st, atoms.iter().copied())
        };
        let e = e.map_err(|_| PredicateError::NodeLimit)?;
        Ok(self.wrap(e, VarSet::from_members(&atoms)))
    }

    /// `v == value` for an atomic or composite variable (mixed-radix value).
    pub fn eq_const(&self, v: &Variable, value: u128) -> Result<Predicate> {
        self.check_vars(std::slice::from_ref(v))?;
        let digits = split_value(v, value)?;
        let mut st = self.store_mut();
        st.mgr.maybe_gc();
        let mut acc = Edge::ONE;
        for (&m, &d) in v.members.iter().zip(digits.iter()).rev() {
            let levels = st.vars[m as usize].levels.clone();
            let cube = value_cube(&mut st.mgr, &levels, d).map_err(|_| PredicateError::NodeLimit)?;
            acc = st.mgr.and(acc, cube).map_err(|_| PredicateError::NodeLimit)?;
        }
        drop(st);
        Ok(self.wrap(acc, VarSet::from_members(&v.members)))
    }

    /// `v ∈ {values}` for an atomic variable.
    pub fn in_set(&self, v: &Variable, values: &[u64]) -> Result<Predicate> {
        let mut acc = self.bottom();
        for &x in values {
            acc = acc.or(&self.eq_const(v, x as u128)?)?;
        }
        if values.is_empty() {
            // Keep the variable in scope so the result still talks about it.
            acc = self.wrap(Edge::ZERO, VarSet::from_members(&v.members));
        }
        Ok(acc)
    }

    /// `lo ≤ v ≤ hi` for an atomic variable; empty when `lo > hi`.
    pub fn in_range(&self, v: &Variable, lo: u64, hi: u64) -> Result<Predicate> {
        self.check_vars(std::slice::from_ref(v))?;
        if v.is_composite() {
            return Err(PredicateError::TypeMismatch(format!(
                "range predicate needs an atomic variable, got `{}`",
                v.name()
            )));
        }
        let size = v.atomic_size();
        let scope = VarSet::from_members(&v.members);
        if lo > hi || lo >= size {
            return Ok(self.wrap(Edge::ZERO, scope));
        }
        let hi = hi.min(size - 1);
        let mut st = self.store_mut();
        st.mgr.maybe_gc();
        let levels = st.vars[v.id() as usize].levels.clone();
        let below_hi = less_than(&mut st.mgr, &levels, hi + 1).map_err(|_| PredicateError::NodeLimit)?;
        let below_lo = less_than(&mut st.mgr, &levels, lo).map_err(|_| PredicateError::NodeLimit)?;
        let e = st
            .mgr
            .and(below_hi, below_lo.not())
            .map_err(|_| PredicateError::NodeLimit)?;
        drop(st);
        Ok(self.wrap(e, scope))
    }

    /// `a == b` for two atomic variables with equal domain sizes.
    pub fn eq_vars(&self, a: &Variable, b: &Variable) -> Result<Predicate> {
        self.check_vars(&[a.clone(), b.clone()])?;
        if a.is_composite() || b.is_composite() {
            let ma = a.members.len();
            if ma != b.members.len() {
                return Err(PredicateError::TypeMismatch(format!(
                    "`{}` and `{}` have different shapes",
                    a.name(),
                    b.name()
                )));
            }
            let mut acc = self.top();
            for (&x, &y) in a.members.iter().zip(b.members.iter()) {
                acc = acc.and(&self.eq_vars(&self.variable_by_id(x), &self.variable_by_id(y))?)?;
            }
            return Ok(acc);
        }
        if a.atomic_size() != b.atomic_size() {
            return Err(PredicateError::TypeMismatch(format!(
                "`{}` has {} values but `{}` has {}",
                a.name(),
                a.atomic_size(),
                b.name(),
                b.atomic_size()
            )));
        }
        let mut st = self.store_mut();
        st.mgr.maybe_gc();
        let la = st.vars[a.id() as usize].levels.clone();
        let lb = st.vars[b.id() as usize].levels.clone();
        let dom = st.vars[a.id() as usize].domain;
        let mut acc = dom;
        for (&x, &y) in la.iter().zip(lb.iter()) {
            let vx = st.mgr.var(x).map_err(|_| PredicateError::NodeLimit)?;
            let vy = st.mgr.var(y).map_err(|_| PredicateError::NodeLimit)?;
            let same = st.mgr.ite(vx, vy, vy.not()).map_err(|_| PredicateError::NodeLimit)?;
            acc = st.mgr.and(acc, same).map_err(|_| PredicateError::NodeLimit)?;
        }
        drop(st);
        Ok(self.wrap(acc, VarSet::from_members(&[a.id(), b.id()])))
    }

    /// Builds a predicate by enumerating every assignment of `vars`.
    ///
    /// `f` sees values in the order of `vars` (composites expanded). Intended
    /// for small domains (tests, brute-force oracles, finitized concrete
    /// modules).
    pub fn from_fn(&self, vars: &[Variable], mut f: impl FnMut(&[u64]) -> bool) -> Result<Predicate> {
        self.check_vars(vars)?;
        let atoms = self.ordered_atoms(vars);
        let sizes: Vec<u64> = atoms.iter().map(|&a| self.store().vars[a as usize].domain_size).collect();
        let mut rows = Vec::new();
        let mut current = vec![0u64; atoms.len()];
        if sizes.iter().all(|&s| s > 0) {
            loop {
                if f(&current) {
                    rows.push(current.clone());
                }
                if !advance(&mut current, &sizes) {
                    break;
                }
            }
        }
        self.from_rows(&atoms, &rows)
    }

    /// Builds the disjunction of the given full assignments to `vars`
    /// (values in the order of `vars`, composites expanded).
    pub fn from_assignments(&self, vars: &[Variable], rows: &[Vec<u64>]) -> Result<Predicate> {
        self.check_vars(vars)?;
        let atoms = self.ordered_atoms(vars);
        for r in rows {
            for (&a, &x) in atoms.iter().zip(r.iter()) {
                let info_size = self.store().vars[a as usize].domain_size;
                if x >= info_size {
                    return Err(PredicateError::ValueOutOfRange {
                        var: self.variable_by_id(a).name().to_string(),
                        value: x,
                        size: info_size,
                    });
                }
            }
        }
        self.from_rows(&atoms, rows)
    }

    fn from_rows(&self, atoms: &[VarId], rows: &[Vec<u64>]) -> Result<Predicate> {
        let mut st = self.store_mut();
        st.mgr.maybe_gc();
        let levels: Vec<Vec<Level>> = atoms.iter().map(|&a| st.vars[a as usize].levels.clone()).collect();
        let mut terms = Vec::with_capacity(rows.len());
        for r in rows {
            let mut acc = Edge::ONE;
            for (lv, &x) in levels.iter().zip(r.iter()) {
                let c = value_cube(&mut st.mgr, lv, x).map_err(|_| PredicateError::NodeLimit)?;
                acc = st.mgr.and(acc, c).map_err(|_| PredicateError::NodeLimit)?;
            }
            terms.push(acc);
        }
        let e = balanced_or(&mut st.mgr, terms).map_err(|_| PredicateError::NodeLimit)?;
        drop(st);
        Ok(self.wrap(e, VarSet::from_members(atoms)))
    }

    /// Conjunction of `cube_k ∧ body_k` terms, combined by disjunction.
    ///
    /// The terms are pairwise combined as a balanced tree, which keeps the
    /// intermediate diagrams small when the cubes partition an input grid.
    pub fn disjoin_all(&self, parts: Vec<Predicate>) -> Result<Predicate> {
        let mut level = parts;
        if level.is_empty() {
            return Ok(self.bottom());
        }
        while level.len() > 1 {
            let mut next = Vec::with_capacity(level.len().div_ceil(2));
            let mut it = level.into_iter();
            while let Some(a) = it.next() {
                match it.next() {
                    Some(b) => next.push(a.or(&b)?),
                    None => next.push(a),
                }
            }
            level = next;
        }
        Ok(level.pop().expect("nonempty"))
    }

    /// Expands composite variables into their atomic members, keeping the
    /// caller's order and dropping repeats.
    pub fn ordered_atoms(&self, vars: &[Variable]) -> Vec<VarId> {
        let mut out: Vec<VarId> = Vec::new();
        for a in vars.iter().flat_map(|v| v.members.iter().copied()) {
            if !out.contains(&a) {
                out.push(a);
            }
        }
        out
    }

    /// Expands composite variables into their atomic members (deduplicated, declaration order).
    pub fn atoms(&self, vars: &[Variable]) -> Vec<VarId> {
        let set: BTreeSet<VarId> = vars.iter().flat_map(|v| v.members.iter().copied()).collect();
        set.into_iter().collect()
    }

    fn levels_of(&self, atoms: &[VarId]) -> Vec<Level> {
        let st = self.store();
        let mut lv: Vec<Level> = atoms
            .iter()
            .flat_map(|&a| st.vars[a as usize].levels.iter().copied())
            .collect();
        lv.sort_unstable();
        lv
    }

    /// Conjunction of domain constraints for non-power-of-two atoms.
    fn domain_edge(st: &mut Store, atoms: impl IntoIterator<Item = VarId>) -> Result<Edge, bdd::NodeLimit> {
        let mut acc = Edge::ONE;
        for a in atoms {
            let d = st.vars[a as usize].domain;
            if d != Edge::ONE {
                acc = st.mgr.and(acc, d)?;
            }
        }
        Ok(acc)
    }

    /// Live node count of the whole store.
    pub fn live_nodes(&self) -> usize {
        self.store().mgr.live_nodes()
    }

    pub fn peak_nodes(&self) -> usize {
        self.store().mgr.peak_nodes()
    }

    /// Forces a garbage collection pass.
    pub fn collect_garbage(&self) {
        self.store_mut().mgr.gc();
    }
}

fn advance(current: &mut [u64], sizes: &[u64]) -> bool {
    for k in (0..current.len()).rev() {
        current[k] += 1;
        if current[k] < sizes[k] {
            return true;
        }
        current[k] = 0;
    }
    false
}

fn split_value(v: &Variable, value: u128) -> Result<Vec<u64>> {
    let total = v.domain_size();
    if value >= total {
        return Err(PredicateError::ValueOutOfRange {
            var: v.name().to_string(),
            value: value.min(u64::MAX as u128) as u64,
            size: total.min(u64::MAX as u128) as u64,
        });
    }
    let mut digits = vec![0u64; v.sizes.len()];
    let mut rest = value;
    for k in (0..v.sizes.len()).rev() {
        let s = v.sizes[k] as u128;
        digits[k] = (rest % s) as u64;
        rest /= s;
    }
    Ok(digits)
}

fn value_cube(m: &mut Manager, levels: &[Level], value: u64) -> Result<Edge, bdd::NodeLimit> {
    let w = levels.len();
    let mut acc = Edge::ONE;
    for (k, &l) in levels.iter().enumerate().rev() {
        let bit = (value >> (w - 1 - k)) & 1 == 1;
        acc = if bit {
            m.mk(l, Edge::ZERO, acc)?
        } else {
            m.mk(l, acc, Edge::ZERO)?
        };
    }
    Ok(acc)
}

/// `value(levels) < bound` with `levels` most significant first.
fn less_than(m: &mut Manager, levels: &[Level], bound: u64) -> Result<Edge, bdd::NodeLimit> {
    let w = levels.len();
    if w < 64 && bound >= (1u64 << w) {
        return Ok(Edge::ONE);
    }
    if bound == 0 {
        return Ok(Edge::ZERO);
    }
    // Scan from the least significant bit upwards.
    let mut acc = Edge::ZERO; // strict comparison: equal is not less
    for (k, &l) in levels.iter().enumerate().rev() {
        let bit = (bound >> (w - 1 - k)) & 1 == 1;
        acc = if bit {
            // v_bit = 0 → less; v_bit = 1 → depends on the rest.
            m.mk(l, Edge::ONE, acc)?
        } else {
            m.mk(l, acc, Edge::ZERO)?
        };
    }
    Ok(acc)
}

fn balanced_or(m: &mut Manager, mut terms: Vec<Edge>) -> Result<Edge, bdd::NodeLimit> {
    if terms.is_empty() {
        return Ok(Edge::ZERO);
    }
    while terms.len() > 1 {
        let mut next = Vec::with_capacity(terms.len().div_ceil(2));
        for pair in terms.chunks(2) {
            next.push(if pair.len() == 2 { m.or(pair[0], pair[1])? } else { pair[0] });
        }
        terms = next;
    }
    Ok(terms[0])
}

/// Sorted set of atomic variable ids.
#[derive(Clone, Debug, PartialEq, Eq)]
struct VarSet(Rc<[VarId]>);

impl VarSet {
    fn empty() -> Self {
        VarSet(Rc::from(Vec::new()))
    }
    fn from_members(m: &[VarId]) -> Self {
        let mut v = m.to_vec();
        v.sort_unstable();
        v.dedup();
        VarSet(Rc::from(v))
    }
    fn union(&self, other: &VarSet) -> VarSet {
        if Rc::ptr_eq(&self.0, &other.0) || other.0.is_empty() {
            return self.clone();
        }
        if self.0.is_empty() {
            return other.clone();
        }
        let mut v: Vec<VarId> = self.0.iter().chain(other.0.iter()).copied().collect();
        v.sort_unstable();
        v.dedup();
        VarSet(Rc::from(v))
    }
    fn minus(&self, other: &[VarId]) -> VarSet {
        VarSet(Rc::from(
            self.0.iter().copied().filter(|x| !other.contains(x)).collect::<Vec<_>>(),
        ))
    }
    fn sym_diff(&self, other: &VarSet) -> Vec<VarId> {
        let a: BTreeSet<VarId> = self.0.iter().copied().collect();
        let b: BTreeSet<VarId> = other.0.iter().copied().collect();
        a.symmetric_difference(&b).copied().collect()
    }
    fn difference(&self, other: &VarSet) -> Vec<VarId> {
        self.0.iter().copied().filter(|x| !other.0.contains(x)).collect()
    }
}

/// A canonical boolean function over variables of one [`Context`].
pub struct Predicate {
    ctx: Context,
    edge: Edge,
    /// Variables this predicate may depend on; padding codes of these are false.
    scope: VarSet,
}

impl Clone for Predicate {
    fn clone(&self) -> Self {
        self.ctx.store_mut().mgr.inc_ref(self.edge);
        Predicate {
            ctx: self.ctx.clone(),
            edge: self.edge,
            scope: self.scope.clone(),
        }
    }
}

impl Drop for Predicate {
    fn drop(&mut self) {
        if let Ok(mut st) = self.ctx.inner.try_borrow_mut() {
            st.mgr.dec_ref(self.edge);
        }
    }
}

impl fmt::Debug for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.edge {
            Edge::ONE => write!(f, "Predicate(⊤)"),
            Edge::ZERO => write!(f, "Predicate(⊥)"),
            e => write!(f, "Predicate(#{}, {} nodes)", e.raw(), self.node_count()),
        }
    }
}

impl PartialEq for Predicate {
    /// Handle equality. For predicates whose variable scopes differ only by
    /// non-power-of-two variables, prefer [`Predicate::equivalent`].
    fn eq(&self, other: &Self) -> bool {
        self.ctx.same(&other.ctx) && self.edge == other.edge
    }
}

impl Eq for Predicate {}

impl Predicate {
    pub fn context(&self) -> &Context {
        &self.ctx
    }

    fn same_ctx(&self, other: &Predicate) -> Result<()> {
        if self.ctx.same(&other.ctx) {
            Ok(())
        } else {
            Err(PredicateError::ContextMismatch)
        }
    }

    fn lift<T>(&self, r: Result<T, bdd::NodeLimit>) -> Result<T> {
        r.map_err(|_| self.ctx.node_limit_err())
    }

    pub fn and(&self, other: &Predicate) -> Result<Predicate> {
        self.same_ctx(other)?;
        let e = {
            let mut st = self.ctx.store_mut();
            st.mgr.maybe_gc();
            st.mgr.and(self.edge, other.edge)
        };
        let e = self.lift(e)?;
        Ok(self.ctx.wrap(e, self.scope.union(&other.scope)))
    }

    pub fn or(&self, other: &Predicate) -> Result<Predicate> {
        self.same_ctx(other)?;
        let pad = self.scope.sym_diff(&other.scope);
        let e = {
            let mut st = self.ctx.store_mut();
            st.mgr.maybe_gc();
            (|| {
                let d = Context::domain_edge(&mut st, pad)?;
                let e = st.mgr.or(self.edge, other.edge)?;
                st.mgr.and(e, d)
            })()
        };
        let e = self.lift(e)?;
        Ok(self.ctx.wrap(e, self.scope.union(&other.scope)))
    }

    pub fn not(&self) -> Result<Predicate> {
        let e = {
            let mut st = self.ctx.store_mut();
            st.mgr.maybe_gc();
            let scope = self.scope.0.to_vec();
            (|| {
                let d = Context::domain_edge(&mut st, scope)?;
                st.mgr.and(self.edge.not(), d)
            })()
        };
        let e = self.lift(e)?;
        Ok(self.ctx.wrap(e, self.scope.clone()))
    }

    /// `¬self ∨ other`.
    pub fn implies(&self, other: &Predicate) -> Result<Predicate> {
        self.not()?.or(other)
    }

    /// `self ⇔ other` as a predicate.
    pub fn iff(&self, other: &Predicate) -> Result<Predicate> {
        self.implies(other)?.and(&other.implies(self)?)
    }

    fn quant_atoms(&self, vars: &[Variable]) -> Result<Vec<VarId>> {
        self.ctx.check_vars(vars)?;
        Ok(self.ctx.atoms(vars))
    }

    /// Existential projection of `vars`. Absent variables are ignored.
    pub fn exists(&self, vars: &[Variable]) -> Result<Predicate> {
        let atoms = self.quant_atoms(vars)?;
        self.exists_atoms(&atoms)
    }

    fn exists_atoms(&self, atoms: &[VarId]) -> Result<Predicate> {
        let levels = self.ctx.levels_of(atoms);
        let e = {
            let mut st = self.ctx.store_mut();
            st.mgr.maybe_gc();
            (|| {
                let cube = st.mgr.cube(&levels)?;
                st.mgr.exists(self.edge, cube)
            })()
        };
        let e = self.lift(e)?;
        Ok(self.ctx.wrap(e, self.scope.minus(atoms)))
    }

    /// Universal projection of `vars` over their valid values.
    pub fn forall(&self, vars: &[Variable]) -> Result<Predicate> {
        let atoms = self.quant_atoms(vars)?;
        let levels = self.ctx.levels_of(&atoms);
        let e = {
            let mut st = self.ctx.store_mut();
            st.mgr.maybe_gc();
            (|| {
                let d = Context::domain_edge(&mut st, atoms.iter().copied())?;
                let cube = st.mgr.cube(&levels)?;
                let r = st.mgr.and_exists(d, self.edge.not(), cube)?;
                Ok(r.not())
            })()
        };
        let e = self.lift(e)?;
        Ok(self.ctx.wrap(e, self.scope.minus(&atoms)))
    }

    /// `∃vars (self ∧ other)` computed in one pass.
    pub fn and_exists(&self, other: &Predicate, vars: &[Variable]) -> Result<Predicate> {
        self.same_ctx(other)?;
        let atoms = self.quant_atoms(vars)?;
        let levels = self.ctx.levels_of(&atoms);
        let e = {
            let mut st = self.ctx.store_mut();
            st.mgr.maybe_gc();
            (|| {
                let cube = st.mgr.cube(&levels)?;
                st.mgr.and_exists(self.edge, other.edge, cube)
            })()
        };
        let e = self.lift(e)?;
        Ok(self
            .ctx
            .wrap(e, self.scope.union(&other.scope).minus(&atoms)))
    }

    /// Substitutes variables. Each replacement must have the same domain size
    /// as the variable it replaces and must not already occur in the predicate.
    pub fn rename(&self, mapping: &[(Variable, Variable)]) -> Result<Predicate> {
        if mapping.is_empty() {
            return Ok(self.clone());
        }
        let mut level_map = HashMap::new();
        let mut atom_map = HashMap::new();
        for (old, new) in mapping {
            self.ctx.check_vars(&[old.clone(), new.clone()])?;
            if old.members.len() != new.members.len() {
                return Err(PredicateError::TypeMismatch(format!(
                    "cannot rename `{}` to `{}`: different shapes",
                    old.name(),
                    new.name()
                )));
            }
            for (&o, &n) in old.members.iter().zip(new.members.iter()) {
                let st = self.ctx.store();
                let (oi, ni) = (&st.vars[o as usize], &st.vars[n as usize]);
                if oi.domain_size != ni.domain_size {
                    return Err(PredicateError::TypeMismatch(format!(
                        "`{}` has {} values but `{}` has {}",
                        oi.name, oi.domain_size, ni.name, ni.domain_size
                    )));
                }
                for (&a, &b) in oi.levels.iter().zip(ni.levels.iter()) {
                    level_map.insert(a, b);
                }
                atom_map.insert(o, n);
            }
        }
        let targets: BTreeSet<VarId> = atom_map.values().copied().collect();
        for &t in &targets {
            if self.scope.0.contains(&t) && !atom_map.contains_key(&t) {
                return Err(PredicateError::TypeMismatch(format!(
                    "rename target `{}` already occurs in the predicate",
                    self.ctx.variable_by_id(t).name()
                )));
            }
        }
        let e = {
            let mut st = self.ctx.store_mut();
            st.mgr.maybe_gc();
            st.mgr.rename(self.edge, &level_map)
        };
        let e = self.lift(e)?;
        let scope: Vec<VarId> = self
            .scope
            .0
            .iter()
            .map(|a| atom_map.get(a).copied().unwrap_or(*a))
            .collect();
        Ok(self.ctx.wrap(e, VarSet::from_members(&scope)))
    }

    /// Logical equivalence over the valid values of both scopes.
    pub fn equivalent(&self, other: &Predicate) -> Result<bool> {
        self.same_ctx(other)?;
        if self.scope == other.scope || self.edge == other.edge {
            return Ok(self.edge == other.edge);
        }
        let extra_self = other.scope.difference(&self.scope);
        let extra_other = self.scope.difference(&other.scope);
        let mut st = self.ctx.store_mut();
        st.mgr.maybe_gc();
        let r = (|| {
            let d1 = Context::domain_edge(&mut st, extra_self)?;
            let d2 = Context::domain_edge(&mut st, extra_other)?;
            let a = st.mgr.and(self.edge, d1)?;
            let b = st.mgr.and(other.edge, d2)?;
            Ok(a == b)
        })();
        drop(st);
        self.lift(r)
    }

    /// `self ⟹ other` holds for every valid assignment.
    pub fn entails(&self, other: &Predicate) -> Result<bool> {
        self.implies(other)?.is_tautology()
    }

    pub fn is_tautology(&self) -> Result<bool> {
        let mut st = self.ctx.store_mut();
        let scope = self.scope.0.to_vec();
        let d = Context::domain_edge(&mut st, scope);
        drop(st);
        Ok(self.edge == self.lift(d)?)
    }

    pub fn is_unsat(&self) -> bool {
        self.edge == Edge::ZERO
    }

    pub fn is_true(&self) -> bool {
        self.edge == Edge::ONE
    }

    /// Atomic variables the predicate actually depends on, declaration order.
    pub fn support(&self) -> Vec<Variable> {
        self.support_ids()
            .into_iter()
            .map(|a| self.ctx.variable_by_id(a))
            .collect()
    }

    pub fn support_ids(&self) -> Vec<VarId> {
        let st = self.ctx.store();
        let set: BTreeSet<VarId> = st
            .mgr
            .support(self.edge)
            .into_iter()
            .map(|l| st.level_owner[l as usize])
            .collect();
        set.into_iter().collect()
    }

    /// Decision-diagram nodes reachable from this predicate.
    pub fn node_count(&self) -> usize {
        self.ctx.store().mgr.node_count(self.edge)
    }

    /// Exact number of satisfying assignments over the product of `vars`' domains.
    pub fn count_sat(&self, vars: &[Variable]) -> Result<u128> {
        self.ctx.check_vars(vars)?;
        let atoms = self.ctx.atoms(vars);
        for s in self.support_ids() {
            if !atoms.contains(&s) {
                return Err(PredicateError::SupportError(
                    self.ctx.variable_by_id(s).name().to_string(),
                ));
            }
        }
        let levels = self.ctx.levels_of(&atoms);
        let mut st = self.ctx.store_mut();
        let e = (|| {
            let d = Context::domain_edge(&mut st, atoms.iter().copied())?;
            st.mgr.and(self.edge, d)
        })();
        let e = e.map_err(|_| PredicateError::NodeLimit)?;
        st.mgr.sat_count(e, &levels).ok_or(PredicateError::CountOverflow)
    }

    /// Evaluates the predicate on a total assignment of its support.
    ///
    /// `value` maps atomic ids to values; unlisted atoms read as 0.
    pub fn eval(&self, value: impl Fn(VarId) -> u64) -> bool {
        let st = self.ctx.store();
        st.mgr.eval(self.edge, |l| {
            let owner = st.level_owner[l as usize];
            let info = &st.vars[owner as usize];
            let pos = info.levels.iter().position(|&x| x == l).expect("owned level");
            let w = info.levels.len();
            (value(owner) >> (w - 1 - pos)) & 1 == 1
        })
    }

    /// Satisfying assignments over `vars`, values in the order of `vars`
    /// (composites expanded), rows sorted lexicographically.
    pub fn enumerate_sat(&self, vars: &[Variable]) -> Result<Vec<Vec<u64>>> {
        self.sat_rows(vars, usize::MAX)
    }

    /// Some satisfying assignment over `vars` (the lexicographically first in
    /// diagram order), or `None` when unsatisfiable.
    pub fn pick_sat(&self, vars: &[Variable]) -> Result<Option<Vec<u64>>> {
        Ok(self.sat_rows(vars, 1)?.pop())
    }

    fn sat_rows(&self, vars: &[Variable], limit: usize) -> Result<Vec<Vec<u64>>> {
        self.ctx.check_vars(vars)?;
        let atoms = self.ctx.atoms(vars);
        for s in self.support_ids() {
            if !atoms.contains(&s) {
                return Err(PredicateError::SupportError(
                    self.ctx.variable_by_id(s).name().to_string(),
                ));
            }
        }
        let infos: Vec<(Vec<Level>, u64)> = {
            let st = self.ctx.store();
            atoms
                .iter()
                .map(|&a| (st.vars[a as usize].levels.clone(), st.vars[a as usize].domain_size))
                .collect()
        };
        let mut out = Vec::new();
        let mut prefix = Vec::with_capacity(atoms.len());
        let mut st = self.ctx.store_mut();
        st.mgr.maybe_gc();
        let r = enumerate_rec(&mut st.mgr, self.edge, &infos, &mut prefix, &mut out, limit);
        drop(st);
        self.lift(r)?;
        let order = self.ctx.ordered_atoms(vars);
        if order != atoms {
            let pos: Vec<usize> = order
                .iter()
                .map(|a| atoms.iter().position(|b| b == a).expect("same atoms"))
                .collect();
            for row in out.iter_mut() {
                *row = pos.iter().map(|&p| row[p]).collect();
            }
            out.sort_unstable();
        }
        Ok(out)
    }

    /// Read-only snapshot that can be shared across threads. Values passed to
    /// [`FrozenPredicate::eval`] follow the order of `vars` (composites expanded).
    pub fn freeze(&self, vars: &[Variable]) -> FrozenPredicate {
        dump::freeze(self, vars)
    }

    pub(crate) fn edge(&self) -> Edge {
        self.edge
    }
}

fn enumerate_rec(
    m: &mut Manager,
    f: Edge,
    infos: &[(Vec<Level>, u64)],
    prefix: &mut Vec<u64>,
    out: &mut Vec<Vec<u64>>,
    limit: usize,
) -> Result<(), bdd::NodeLimit> {
    if f == Edge::ZERO || out.len() >= limit {
        return Ok(());
    }
    let k = prefix.len();
    if k == infos.len() {
        debug_assert_eq!(f, Edge::ONE);
        out.push(prefix.clone());
        return Ok(());
    }
    let (levels, size) = &infos[k];
    let w = levels.len();
    for x in 0..*size {
        let assign: HashMap<Level, bool> = levels
            .iter()
            .enumerate()
            .map(|(i, &l)| (l, (x >> (w - 1 - i)) & 1 == 1))
            .collect();
        let g = m.restrict(f, &assign)?;
        if g == Edge::ZERO {
            continue;
        }
        prefix.push(x);
        enumerate_rec(m, g, infos, prefix, out, limit)?;
        if out.len() >= limit {
            prefix.pop();
            return Ok(());
        }
        prefix.pop();
    }
    Ok(())
}
