//! Text dumps, structural serialization, and thread-shareable snapshots.
//!
//! Text dump (small predicates only):
//!
//! ```text
//! vars x1:32 u1:4
//! x1=0 u1=2
//! x1=3 u1=1
//! ```
//!
//! The header lists atomic variables with their domain sizes; every further
//! line is one satisfying assignment with fields in header order. Lines are
//! sorted lexicographically by value tuple.
//!
//! Structural form ([`DiagramFile`]) stores the decision-diagram nodes and a
//! per-variable bit layout, so it can be re-imported into a context that
//! declares the same variables in a different order.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::bdd::{Edge, Level};
use super::{Context, Predicate, PredicateError, VarId, Variable};

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("malformed dump: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Predicate(#[from] PredicateError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn fmt_err(msg: impl Into<String>) -> DumpError {
    DumpError::Format(msg.into())
}

/// Writes the text dump of `p` over `vars`.
pub fn write_dump(p: &Predicate, vars: &[Variable], mut out: impl Write) -> Result<(), DumpError> {
    let ctx = p.context();
    let atoms = ctx.ordered_atoms(vars);
    let header: Vec<String> = atoms
        .iter()
        .map(|&a| {
            let v = ctx.variable_by_id(a);
            format!("{}:{}", v.name(), v.domain_size())
        })
        .collect();
    writeln!(out, "vars {}", header.join(" "))?;
    let names: Vec<String> = atoms
        .iter()
        .map(|&a| ctx.variable_by_id(a).name().to_string())
        .collect();
    for row in p.enumerate_sat(vars)? {
        let fields: Vec<String> = names
            .iter()
            .zip(row.iter())
            .map(|(n, x)| format!("{n}={x}"))
            .collect();
        writeln!(out, "{}", fields.join(" "))?;
    }
    Ok(())
}

/// Reads a text dump into `ctx`. Every listed variable must already be
/// declared with the same domain size.
pub fn read_dump(ctx: &Context, input: impl BufRead) -> Result<(Vec<Variable>, Predicate), DumpError> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| fmt_err("empty dump"))??;
    let rest = header
        .strip_prefix("vars")
        .ok_or_else(|| fmt_err("missing `vars` header"))?;
    let mut vars = Vec::new();
    for field in rest.split_whitespace() {
        let (name, size) = field
            .rsplit_once(':')
            .ok_or_else(|| fmt_err(format!("bad header field `{field}`")))?;
        let size: u64 = size
            .parse()
            .map_err(|_| fmt_err(format!("bad domain size in `{field}`")))?;
        let v = ctx.var(name)?;
        if v.domain_size() != size as u128 {
            return Err(fmt_err(format!(
                "`{name}` has {} values in the context but {size} in the dump",
                v.domain_size()
            )));
        }
        vars.push(v);
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != vars.len() {
            return Err(fmt_err(format!(
                "line {}: expected {} fields, found {}",
                k + 2,
                vars.len(),
                fields.len()
            )));
        }
        let mut row = Vec::with_capacity(vars.len());
        for (f, v) in fields.iter().zip(vars.iter()) {
            let (name, val) = f
                .split_once('=')
                .ok_or_else(|| fmt_err(format!("line {}: bad field `{f}`", k + 2)))?;
            if name != v.name() {
                return Err(fmt_err(format!(
                    "line {}: expected `{}`, found `{name}`",
                    k + 2,
                    v.name()
                )));
            }
            let val: u64 = val
                .parse()
                .map_err(|_| fmt_err(format!("line {}: bad value `{val}`", k + 2)))?;
            row.push(val);
        }
        rows.push(row);
    }
    let p = ctx.from_assignments(&vars, &rows)?;
    Ok((vars, p))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DiagramVar {
    pub name: String,
    pub size: u64,
    /// Levels of this variable's bits in the exporting context, MSB first.
    pub levels: Vec<Level>,
}

/// Structural serialization of one predicate.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DiagramFile {
    pub variables: Vec<DiagramVar>,
    /// `(level, lo, hi)`; child references index this list plus one (0 is the
    /// terminal), complement flag in the low bit.
    pub nodes: Vec<(Level, u32, u32)>,
    pub root: u32,
}

impl DiagramFile {
    pub fn export(p: &Predicate, vars: &[Variable]) -> Result<Self, DumpError> {
        let ctx = p.context();
        let atoms = ctx.atoms(vars);
        for s in p.support_ids() {
            if !atoms.contains(&s) {
                return Err(PredicateError::SupportError(ctx.variable_by_id(s).name().to_string()).into());
            }
        }
        let st = ctx.store();
        let variables = atoms
            .iter()
            .map(|&a| {
                let info = &st.vars[a as usize];
                DiagramVar {
                    name: info.name.to_string(),
                    size: info.domain_size,
                    levels: info.levels.clone(),
                }
            })
            .collect();
        let (nodes, roots) = st.mgr.export(&[p.edge()]);
        Ok(DiagramFile {
            variables,
            nodes,
            root: roots[0],
        })
    }

    /// Rebuilds the predicate in `ctx`, matching variables by name.
    pub fn import(&self, ctx: &Context) -> Result<(Vec<Variable>, Predicate), DumpError> {
        let mut remap: HashMap<Level, Level> = HashMap::new();
        let mut vars = Vec::new();
        let mut atoms: Vec<VarId> = Vec::new();
        {
            for dv in &self.variables {
                let v = ctx.var(&dv.name)?;
                if v.domain_size() != dv.size as u128 {
                    return Err(fmt_err(format!(
                        "`{}` has {} values in the context but {} in the file",
                        dv.name,
                        v.domain_size(),
                        dv.size
                    )));
                }
                let st = ctx.store();
                let levels = &st.vars[v.id() as usize].levels;
                if levels.len() != dv.levels.len() {
                    return Err(fmt_err(format!("bit width mismatch for `{}`", dv.name)));
                }
                for (&old, &new) in dv.levels.iter().zip(levels.iter()) {
                    remap.insert(old, new);
                }
                atoms.push(v.id());
                vars.push(v.clone());
            }
        }
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for &(level, lo, hi) in &self.nodes {
            let l = *remap
                .get(&level)
                .ok_or_else(|| fmt_err(format!("node at unknown level {level}")))?;
            nodes.push((l, lo, hi));
        }
        let edge = {
            let mut st = ctx.store_mut();
            st.mgr.maybe_gc();
            st.mgr.import(&nodes, &[self.root]).map_err(|e| match e {
                super::bdd::ImportError::NodeLimit => DumpError::Predicate(PredicateError::NodeLimit),
                other => fmt_err(format!("{other:?}")),
            })?[0]
        };
        let p = ctx.wrap(edge, super::VarSet::from_members(&atoms));
        // Re-impose the padding invariant in case the file came from elsewhere.
        let p = p.and(&ctx.domain_of(&vars)?)?;
        Ok((vars, p))
    }
}

impl Context {
    /// Conjunction of the domain constraints of `vars` (true for power-of-two domains).
    pub fn domain_of(&self, vars: &[Variable]) -> Result<Predicate, PredicateError> {
        let atoms = self.atoms(vars);
        let e = {
            let mut st = self.store_mut();
            Context::domain_edge(&mut st, atoms.iter().copied())
                .map_err(|_| PredicateError::NodeLimit)?
        };
        Ok(self.wrap(e, super::VarSet::from_members(&atoms)))
    }
}

/// Immutable copy of a predicate's diagram that can be evaluated from any thread.
#[derive(Debug, Clone)]
pub struct FrozenPredicate {
    nodes: Vec<(Level, u32, u32)>,
    root: u32,
    /// Level → (position in the variable list, bit shift).
    bit_of: HashMap<Level, (usize, u32)>,
    names: Vec<String>,
}

pub(super) fn freeze(p: &Predicate, vars: &[Variable]) -> FrozenPredicate {
    let ctx = p.context();
    let mut atoms: Vec<VarId> = Vec::new();
    for a in vars.iter().flat_map(|v| v.members().iter().copied()) {
        if !atoms.contains(&a) {
            atoms.push(a);
        }
    }
    let st = ctx.store();
    let mut bit_of = HashMap::new();
    let mut names = Vec::new();
    for (pos, &a) in atoms.iter().enumerate() {
        let info = &st.vars[a as usize];
        let w = info.levels.len() as u32;
        for (k, &l) in info.levels.iter().enumerate() {
            bit_of.insert(l, (pos, w - 1 - k as u32));
        }
        names.push(info.name.to_string());
    }
    let (nodes, roots) = st.mgr.export(&[p.edge()]);
    FrozenPredicate {
        nodes,
        root: roots[0],
        bit_of,
        names,
    }
}

impl FrozenPredicate {
    /// Variable names, in the order `eval` expects values.
    pub fn variables(&self) -> &[String] {
        &self.names
    }

    /// Evaluates on values aligned with [`FrozenPredicate::variables`].
    /// Levels outside the frozen variable list read as 0.
    pub fn eval(&self, values: &[u64]) -> bool {
        let mut e = self.root;
        loop {
            let idx = (e >> 1) as usize;
            if idx == 0 {
                return e & 1 == 0;
            }
            let (level, lo, hi) = self.nodes[idx - 1];
            let bit = match self.bit_of.get(&level) {
                Some(&(pos, shift)) => (values[pos] >> shift) & 1 == 1,
                None => false,
            };
            let child = if bit { hi } else { lo };
            e = child ^ (e & 1);
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len() + 1
    }
}

#[allow(dead_code)]
fn _assert_send_sync() {
    fn check<T: Send + Sync>() {}
    check::<FrozenPredicate>();
    let _ = Edge::ONE;
}
