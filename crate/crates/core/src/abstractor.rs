//! Grid-traversal abstraction of a concrete module from a box oracle.
//!
//! For every abstract input cell the oracle bounds the image of the cell's
//! box. If that bound leaves the region covered by an output grid the cell is
//! left blocking; otherwise it gains transitions to every output cell the
//! bound meets. Oracle evaluation is data-parallel; the decision diagram is
//! built on the calling thread.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::expr::{Interval, Oracle, OracleError};
use crate::grid::Quantizer;
use crate::module::{FiniteModule, ModuleError};
use crate::par;
use crate::predicate::{Context, Predicate, PredicateError, Variable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AbstractionError {
    #[error("quantizer for `{0}` does not cover its domain")]
    StrictnessError(String),
    #[error("job `{job}`: {msg}")]
    Job { job: String, msg: String },
    #[error("time budget exhausted after {cells_done} of {cells_total} cells")]
    TimeBudgetExceeded { cells_done: u128, cells_total: u128 },
    #[error(transparent)]
    Predicate(#[from] PredicateError),
    #[error(transparent)]
    Module(#[from] ModuleError),
}

const MAX_DIAGNOSTICS: usize = 16;

/// One abstract variable together with the quantizer relating it to its
/// concrete counterpart.
#[derive(Debug, Clone)]
pub struct GridVar {
    pub quantizer: Quantizer,
    pub var: Variable,
}

#[derive(Debug, Clone)]
pub struct AbstractionJob {
    pub name: String,
    /// In the order of the oracle's inputs.
    pub inputs: Vec<GridVar>,
    /// In the order of the oracle's outputs.
    pub outputs: Vec<GridVar>,
    pub oracle: Oracle,
    /// Per-output tolerance: the concrete module relates `o` to `i` when
    /// `|o − F(i)| ≤ band`. Empty means zero for every output.
    pub band: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AbstractOptions {
    pub parallel: bool,
    /// Cells evaluated per parallel batch; also the granularity of deadline checks.
    pub batch: usize,
    pub deadline: Option<Instant>,
}

impl Default for AbstractOptions {
    fn default() -> Self {
        AbstractOptions {
            parallel: par::available(),
            batch: 1 << 16,
            deadline: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct JobStats {
    pub cells: u128,
    pub blocking: u128,
    /// Blocking cells caused by possible partiality of the concrete function.
    pub undefined: u128,
    /// Blocking cells on which the oracle itself failed.
    pub failed: u128,
    /// First few oracle failures, as `cell <k>: <message>`.
    pub diagnostics: Vec<String>,
    pub transitions: u128,
    pub nodes: usize,
    pub seconds: f64,
}

/// Oracle verdict for one input cell.
#[derive(Debug, Clone, PartialEq)]
enum Cell {
    Escapes,
    Undefined,
    Failed(OracleError),
    /// Per output: inclusive range of cell indices (uniform grids) or explicit list.
    Targets(Vec<Targets>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Targets {
    Range(usize, usize),
    List(Vec<usize>),
}

impl Targets {
    fn len(&self) -> u128 {
        match self {
            Targets::Range(a, b) => (b - a + 1) as u128,
            Targets::List(v) => v.len() as u128,
        }
    }
}

impl AbstractionJob {
    fn validate(&self) -> Result<(), AbstractionError> {
        let bad = |msg: String| AbstractionError::Job {
            job: self.name.clone(),
            msg,
        };
        if self.inputs.len() != self.oracle.inputs().len() {
            return Err(bad(format!(
                "{} input quantizers for {} oracle inputs",
                self.inputs.len(),
                self.oracle.inputs().len()
            )));
        }
        if self.outputs.len() != self.oracle.outputs().len() {
            return Err(bad(format!(
                "{} output quantizers for {} oracle outputs",
                self.outputs.len(),
                self.oracle.outputs().len()
            )));
        }
        if !self.band.is_empty() && self.band.len() != self.outputs.len() {
            return Err(bad("band needs one entry per output".into()));
        }
        if self.band.iter().any(|b| !(*b >= 0.0)) {
            return Err(bad("band entries must be nonnegative".into()));
        }
        for g in self.inputs.iter().chain(&self.outputs) {
            if g.var.domain_size() != g.quantizer.cell_count() as u128 {
                return Err(bad(format!(
                    "`{}` has {} values but its grid has {} cells",
                    g.var.name(),
                    g.var.domain_size(),
                    g.quantizer.cell_count()
                )));
            }
            if !g.quantizer.check_strict() {
                return Err(AbstractionError::StrictnessError(g.quantizer.var().to_string()));
            }
        }
        Ok(())
    }

    /// Number of abstract input cells.
    pub fn cell_count(&self) -> u128 {
        self.inputs.iter().map(|g| g.quantizer.cell_count() as u128).product()
    }

    fn cell_of(&self, mut k: u128, out: &mut [usize]) {
        for (slot, g) in out.iter_mut().zip(&self.inputs).rev() {
            let n = g.quantizer.cell_count() as u128;
            *slot = (k % n) as usize;
            k /= n;
        }
    }

    fn evaluate(&self, k: u128) -> Cell {
        let mut idx = vec![0usize; self.inputs.len()];
        self.cell_of(k, &mut idx);
        let bx: Vec<Interval> = idx
            .iter()
            .zip(&self.inputs)
            .map(|(&c, g)| g.quantizer.concretize(c).expect("cell in range"))
            .collect();
        let image = match self.oracle.image(&bx) {
            Ok(b) => b,
            Err(OracleError::UndefinedOnBox) => return Cell::Undefined,
            Err(e) => return Cell::Failed(e),
        };
        let mut targets = Vec::with_capacity(image.len());
        for (j, (b, g)) in image.iter().zip(&self.outputs).enumerate() {
            let band = self.band.get(j).copied().unwrap_or(0.0);
            let b = if band > 0.0 {
                Interval::new(
                    crate::expr::sub_down(b.lo, band),
                    crate::expr::add_up(b.hi, band),
                )
            } else {
                *b
            };
            let q = &g.quantizer;
            if q.is_identity() {
                let hits = q.cells_meeting(&b);
                if hits.is_empty() {
                    return Cell::Escapes;
                }
                targets.push(Targets::List(hits));
            } else {
                if !q.region().contains_interval(&b) {
                    return Cell::Escapes;
                }
                let hits = q.cells_meeting(&b);
                debug_assert!(!hits.is_empty());
                targets.push(Targets::Range(hits[0], *hits.last().unwrap()));
            }
        }
        Cell::Targets(targets)
    }
}

/// Builds the relation bottom-up over the mixed-radix tree of input cells
/// (first input at the root), caching cell constraints and leaf predicates.
struct Builder<'a> {
    ctx: &'a Context,
    job: &'a AbstractionJob,
    radix: Vec<usize>,
    input_eq: Vec<Vec<Option<Predicate>>>,
    targets: HashMap<(usize, Targets), Predicate>,
    leaves: HashMap<Vec<Targets>, Predicate>,
}

impl<'a> Builder<'a> {
    fn new(ctx: &'a Context, job: &'a AbstractionJob) -> Self {
        Builder {
            ctx,
            job,
            radix: job.inputs.iter().map(|g| g.quantizer.cell_count()).collect(),
            input_eq: job.inputs.iter().map(|g| vec![None; g.quantizer.cell_count()]).collect(),
            targets: HashMap::new(),
            leaves: HashMap::new(),
        }
    }

    fn input(&mut self, i: usize, c: usize) -> Result<Predicate, PredicateError> {
        if let Some(p) = &self.input_eq[i][c] {
            return Ok(p.clone());
        }
        let p = self.ctx.eq_const(&self.job.inputs[i].var, c as u128)?;
        self.input_eq[i][c] = Some(p.clone());
        Ok(p)
    }

    fn output(&mut self, j: usize, t: &Targets) -> Result<Predicate, PredicateError> {
        if let Some(p) = self.targets.get(&(j, t.clone())) {
            return Ok(p.clone());
        }
        let v = &self.job.outputs[j].var;
        let p = match t {
            Targets::Range(a, b) => self.ctx.in_range(v, *a as u64, *b as u64)?,
            Targets::List(l) => self.ctx.in_set(v, &l.iter().map(|&c| c as u64).collect::<Vec<_>>())?,
        };
        self.targets.insert((j, t.clone()), p.clone());
        Ok(p)
    }

    fn leaf(&mut self, cell: &Cell) -> Result<Predicate, PredicateError> {
        let ts = match cell {
            Cell::Targets(ts) => ts,
            _ => return Ok(self.ctx.bottom()),
        };
        if let Some(p) = self.leaves.get(ts) {
            return Ok(p.clone());
        }
        let mut acc = self.ctx.top();
        for (j, t) in ts.iter().enumerate() {
            acc = acc.and(&self.output(j, t)?)?;
        }
        self.leaves.insert(ts.clone(), acc.clone());
        Ok(acc)
    }

    /// Relation restricted to the cells below one node at depth `d`; `cells`
    /// holds that node's verdicts in order.
    fn subtree(&mut self, d: usize, cells: &[Cell]) -> Result<Predicate, PredicateError> {
        if d == self.radix.len() {
            return self.leaf(&cells[0]);
        }
        let r = self.radix[d];
        let stride = cells.len() / r;
        // Group children with identical relations: `x_d ∈ S ∧ P` per group.
        let mut groups: Vec<(Predicate, Vec<u64>)> = Vec::new();
        for c in 0..r {
            let p = self.subtree(d + 1, &cells[c * stride..(c + 1) * stride])?;
            if p.is_unsat() {
                continue;
            }
            match groups.iter_mut().find(|g| g.0 == p) {
                Some(g) => g.1.push(c as u64),
                None => groups.push((p, vec![c as u64])),
            }
        }
        let mut parts = Vec::with_capacity(groups.len());
        for (p, cs) in groups {
            let sel = if cs.len() == 1 {
                self.input(d, cs[0] as usize)?
            } else {
                self.ctx.in_set(&self.job.inputs[d].var, &cs)?
            };
            parts.push(sel.and(&p)?);
        }
        self.ctx.disjoin_all(parts)
    }

    /// Conjunction of the input constraints fixing the first `prefix.len()` inputs.
    fn prefix_cube(&mut self, prefix: &[usize]) -> Result<Predicate, PredicateError> {
        let mut acc = self.ctx.top();
        for (i, &c) in prefix.iter().enumerate().rev() {
            acc = acc.and(&self.input(i, c)?)?;
        }
        Ok(acc)
    }
}

/// Abstracts one module into `ctx` (where the job's variables live).
pub fn abstract_module(
    ctx: &Context,
    job: &AbstractionJob,
    opts: &AbstractOptions,
) -> Result<(FiniteModule, JobStats), AbstractionError> {
    job.validate()?;
    let start = Instant::now();
    let total = job.cell_count();
    let mut stats = JobStats {
        cells: total,
        ..JobStats::default()
    };
    let mut b = Builder::new(ctx, job);
    let mut acc = ctx.bottom();

    // Split the inputs into a prefix enumerated in order and a suffix whose
    // subtrees (at most `batch` cells each, unless one axis alone is larger)
    // are built in one piece.
    let batch = opts.batch.max(1) as u128;
    let n = b.radix.len();
    let mut split = n;
    let mut block: u128 = 1;
    while split > 0 && (split == n || block * b.radix[split - 1] as u128 <= batch) {
        block *= b.radix[split - 1] as u128;
        split -= 1;
    }
    let blocks_per_batch = (batch / block).max(1);
    let mut prefix = vec![0usize; split];
    let mut done: u128 = 0;
    while done < total {
        if let Some(d) = opts.deadline {
            if Instant::now() >= d {
                return Err(AbstractionError::TimeBudgetExceeded {
                    cells_done: done,
                    cells_total: total,
                });
            }
        }
        let count = ((total - done) / block).min(blocks_per_batch);
        let n_cells = (count * block) as usize;
        let base = done;
        let verdicts = par::map_range(n_cells, opts.parallel, |k| job.evaluate(base + k as u128));
        for (k, v) in verdicts.iter().enumerate() {
            let cell = base + k as u128;
            match v {
                Cell::Escapes => stats.blocking += 1,
                Cell::Undefined => {
                    stats.blocking += 1;
                    stats.undefined += 1;
                }
                Cell::Failed(e) => {
                    stats.blocking += 1;
                    stats.failed += 1;
                    log::warn!("{}: oracle failed on cell {cell}: {e}", job.name);
                    if stats.diagnostics.len() < MAX_DIAGNOSTICS {
                        stats.diagnostics.push(format!("cell {cell}: {e}"));
                    }
                }
                Cell::Targets(ts) => stats.transitions += ts.iter().map(Targets::len).product::<u128>(),
            }
            if (cell + 1) % 1000 == 0 {
                log::info!(
                    "{}: cells_done={} blocking_count={} transition_count={} dd_nodes={}",
                    job.name,
                    cell + 1,
                    stats.blocking,
                    stats.transitions,
                    ctx.live_nodes()
                );
            }
        }
        let mut parts = Vec::with_capacity(count as usize);
        for chunk in verdicts.chunks(block as usize) {
            let sub = b.subtree(split, chunk)?;
            if !sub.is_unsat() {
                parts.push(b.prefix_cube(&prefix)?.and(&sub)?);
            }
            // Advance the prefix odometer.
            for i in (0..split).rev() {
                prefix[i] += 1;
                if prefix[i] < b.radix[i] {
                    break;
                }
                prefix[i] = 0;
            }
        }
        acc = acc.or(&ctx.disjoin_all(parts)?)?;
        done += n_cells as u128;
    }
    let inputs: Vec<Variable> = job.inputs.iter().map(|g| g.var.clone()).collect();
    let outputs: Vec<Variable> = job.outputs.iter().map(|g| g.var.clone()).collect();
    stats.nodes = acc.node_count();
    stats.seconds = start.elapsed().as_secs_f64();
    let m = FiniteModule::new(&job.name, &inputs, &outputs, acc)?;
    Ok((m, stats))
}

/// Abstracts independent jobs. Each result equals the corresponding
/// [`abstract_module`] call; one failing job does not affect the others.
pub fn abstract_many(
    ctx: &Context,
    jobs: &[AbstractionJob],
    opts: &AbstractOptions,
) -> Vec<Result<(FiniteModule, JobStats), AbstractionError>> {
    jobs.iter().map(|j| abstract_module(ctx, j, opts)).collect()
}

/// Time left before `deadline`, if any.
pub fn remaining(deadline: Option<Instant>) -> Option<Duration> {
    deadline.map(|d| d.saturating_duration_since(Instant::now()))
}
