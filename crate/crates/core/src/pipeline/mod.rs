//! End-to-end driver: abstract every module of a [`SystemSpec`], compose,
//! hide latents, and optionally check and synthesize.

mod artifact;
pub mod bench;
mod spec;

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstractor::{abstract_module, AbstractOptions, AbstractionError, AbstractionJob, GridVar, JobStats};
use crate::expr::{Expr, Interval, Oracle};
use crate::module::{as_control, compose_all, hide, ControlModule, FiniteModule, ModuleError};
use crate::predicate::{Context, Predicate, PredicateError, Variable};
use crate::refinement::{falsify, CheckReport, FalsifyOptions, RefinementError};
use crate::synthesis::{solve_reach, solve_safety, Objective, SynthesisError};

pub use artifact::{read_artifact, stats, write_artifact, ArtifactStats, ModuleArtifact};
pub use spec::{load_spec, parse_spec, ControlSpec, LoadedSpec, ModuleSpec, OracleChoice, OutputSpec, SystemSpec};

#[derive(Debug, Error)]
pub enum PipelineError {
    /// The spec violates the schema or a composition precondition; `path` is a
    /// JSON pointer into the spec.
    #[error("{path}: {msg}")]
    Validation { path: String, msg: String },
    #[error("{path}: algebraic loop {}", cycle.join(" -> "))]
    AlgebraicLoop { path: String, cycle: Vec<String> },
    #[error("{path}: quantizer for `{var}` does not cover its domain")]
    NonStrict { path: String, var: String },
    #[error("{stage}: {source}")]
    Abstraction { stage: String, source: AbstractionError },
    #[error("{stage}: {source}")]
    Module { stage: String, source: ModuleError },
    #[error("{stage}: {source}")]
    Refinement { stage: String, source: RefinementError },
    #[error("{stage}: {source}")]
    Synthesis { stage: String, source: SynthesisError },
    #[error(transparent)]
    Predicate(#[from] PredicateError),
    #[error("malformed artifact: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    /// Schema, wiring or strictness problem in the input spec.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            PipelineError::Validation { .. } | PipelineError::AlgebraicLoop { .. } | PipelineError::NonStrict { .. }
        )
    }

    pub fn is_budget(&self) -> bool {
        matches!(
            self,
            PipelineError::Abstraction {
                source: AbstractionError::TimeBudgetExceeded { .. },
                ..
            }
        )
    }
}

fn stage_module(stage: &str) -> impl FnOnce(ModuleError) -> PipelineError + '_ {
    move |source| PipelineError::Module {
        stage: stage.to_string(),
        source,
    }
}

/// A goal for the synthesis stage: states whose cells lie inside the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisRequest {
    pub objective: Objective,
    /// `(state, lower, upper)`; unlisted states are unconstrained.
    pub region: Vec<(String, f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub parallel: bool,
    /// Outputs to hide; `None` hides the spec's latents.
    pub hide: Option<Vec<String>>,
    /// Falsify the composed abstraction against the flattened concrete system
    /// with this many samples per cell width.
    pub check_divisions: Option<usize>,
    pub synthesize: Option<SynthesisRequest>,
    pub out_dir: Option<PathBuf>,
    pub deadline: Option<Instant>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            parallel: crate::par::available(),
            hide: None,
            check_divisions: None,
            synthesize: None,
            out_dir: None,
            deadline: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleReport {
    pub name: String,
    #[serde(flatten)]
    pub stats: JobStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposedReport {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub input_cells: u128,
    pub blocking: u128,
    pub transitions: u128,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub objective: Objective,
    pub goal_states: u128,
    pub domain_states: u128,
    pub total_states: u128,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub system: String,
    /// `compositional` or `monolithic`.
    pub mode: String,
    pub modules: Vec<ModuleReport>,
    /// Abstract input cells visited by the grid traversals.
    pub cells_traversed: u128,
    pub composed: ComposedReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesis: Option<SynthesisReport>,
    pub peak_nodes: usize,
    /// Wall-clock times; the only field that varies between identical runs.
    pub stages: Vec<StageTime>,
}

/// A loaded spec with its variables declared in a fresh predicate context.
pub struct Session {
    pub spec: LoadedSpec,
    pub ctx: Context,
}

/// Results of the compositional stages.
pub struct Compositional {
    pub modules: Vec<(FiniteModule, JobStats)>,
    /// Composition of all modules, with the requested outputs hidden.
    pub composed: FiniteModule,
    pub control: Option<ControlModule>,
    pub stages: Vec<StageTime>,
}

impl Session {
    pub fn new(spec: LoadedSpec) -> Result<Self, PipelineError> {
        let ctx = Context::new();
        for group in declaration_groups(&spec) {
            let sizes: Vec<(&str, u64)> = group
                .iter()
                .map(|v| (v.as_str(), spec.quantizer(v).cell_count() as u64))
                .collect();
            ctx.declare_interleaved(&sizes)?;
        }
        Ok(Session { spec, ctx })
    }

    pub fn var(&self, name: &str) -> Result<Variable, PipelineError> {
        Ok(self.ctx.var(name)?)
    }

    fn grid_var(&self, name: &str) -> Result<GridVar, PipelineError> {
        Ok(GridVar {
            quantizer: self.spec.quantizer(name).clone(),
            var: self.var(name)?,
        })
    }

    /// One abstraction job per module.
    pub fn jobs(&self) -> Result<Vec<AbstractionJob>, PipelineError> {
        self.spec
            .spec
            .modules
            .iter()
            .enumerate()
            .map(|(k, m)| {
                Ok(AbstractionJob {
                    name: m.name.clone(),
                    inputs: m.inputs.iter().map(|v| self.grid_var(v)).collect::<Result<_, _>>()?,
                    outputs: m.outputs.iter().map(|o| self.grid_var(&o.var)).collect::<Result<_, _>>()?,
                    oracle: self.spec.oracle(k)?,
                    band: m.outputs.iter().map(|o| o.band).collect(),
                })
            })
            .collect()
    }

    fn hidden(&self, hide: Option<&[String]>) -> Vec<String> {
        hide.map_or_else(|| self.spec.spec.latents.clone(), <[String]>::to_vec)
    }

    /// The whole network as one concrete module: visible outputs with every
    /// hidden variable substituted by its defining expression.
    pub fn monolithic_job(&self, hide: Option<&[String]>) -> Result<AbstractionJob, PipelineError> {
        let hidden: BTreeSet<String> = self.hidden(hide).into_iter().collect();
        let mut defs: HashMap<String, Expr> = HashMap::new();
        let mut visible = Vec::new();
        for (k, m) in self.spec.spec.modules.iter().enumerate() {
            for (o, e) in m.outputs.iter().zip(&self.spec.exprs[k]) {
                if hidden.contains(&o.var) {
                    defs.insert(o.var.clone(), e.clone());
                } else {
                    visible.push((o.var.clone(), e.clone()));
                }
            }
        }
        if self.spec.spec.modules.iter().any(|m| m.outputs.iter().any(|o| o.band != 0.0)) {
            return Err(PipelineError::Validation {
                path: "/modules".into(),
                msg: "cannot flatten modules with output bands".into(),
            });
        }
        // The wiring is acyclic, so repeated substitution terminates.
        let flatten = |mut e: Expr| {
            while e.variables().iter().any(|v| defs.contains_key(v)) {
                e = e.substitute(&defs);
            }
            e
        };
        let outputs: Vec<Expr> = visible.iter().map(|v| flatten(v.1.clone())).collect();
        let produced = self.spec.outputs();
        let mut inputs: Vec<String> = Vec::new();
        for q in &self.spec.spec.variables {
            let used = self.spec.spec.modules.iter().any(|m| m.inputs.contains(&q.var));
            if used && !produced.contains(q.var.as_str()) {
                inputs.push(q.var.clone());
            }
        }
        if let Some(c) = &self.spec.spec.control {
            for (x, _) in &c.states {
                if !inputs.contains(x) {
                    inputs.push(x.clone());
                }
            }
        }
        // Cell enumeration follows the declaration order of the context.
        inputs.sort_by_key(|v| self.ctx.var(v).map(|v| v.id()).unwrap_or(u32::MAX as _));
        let names: Vec<&str> = inputs.iter().map(String::as_str).collect();
        let dom: Vec<Interval> = names.iter().map(|v| self.spec.domain(v)).collect();
        let oracle = Oracle::monotone_or_interval(&names, outputs, &dom, 0x5eed).map_err(|e| PipelineError::Validation {
            path: "/modules".into(),
            msg: e.to_string(),
        })?;
        Ok(AbstractionJob {
            name: format!("{}_monolithic", self.spec.spec.name),
            inputs: inputs.iter().map(|v| self.grid_var(v)).collect::<Result<_, _>>()?,
            outputs: visible.iter().map(|v| self.grid_var(&v.0)).collect::<Result<_, _>>()?,
            oracle,
            band: Vec::new(),
        })
    }

    fn abstract_opts(opts: &PipelineOptions) -> AbstractOptions {
        AbstractOptions {
            parallel: opts.parallel,
            deadline: opts.deadline,
            ..AbstractOptions::default()
        }
    }

    /// Abstracts every module, composes them and hides the latents.
    pub fn compositional(&self, opts: &PipelineOptions) -> Result<Compositional, PipelineError> {
        let mut stages = Vec::new();
        let t = Instant::now();
        let aopts = Self::abstract_opts(opts);
        let mut modules = Vec::new();
        for job in self.jobs()? {
            let r = abstract_module(&self.ctx, &job, &aopts).map_err(|source| PipelineError::Abstraction {
                stage: format!("abstract `{}`", job.name),
                source,
            })?;
            log::info!(
                "abstracted `{}`: {} cells, {} transitions, {} blocking, {:.2}s",
                job.name,
                r.1.cells,
                r.1.transitions,
                r.1.blocking,
                r.1.seconds
            );
            modules.push(r);
        }
        stages.push(StageTime {
            stage: "abstract".into(),
            seconds: t.elapsed().as_secs_f64(),
        });

        let t = Instant::now();
        let ms: Vec<FiniteModule> = modules.iter().map(|m| m.0.clone()).collect();
        let all = compose_all(&ms).map_err(stage_module("compose"))?;
        stages.push(StageTime {
            stage: "compose".into(),
            seconds: t.elapsed().as_secs_f64(),
        });

        let t = Instant::now();
        let hidden = self
            .hidden(opts.hide.as_deref())
            .iter()
            .map(|v| self.var(v))
            .collect::<Result<Vec<_>, _>>()?;
        let composed = hide(&all, &hidden)
            .map_err(stage_module("hide"))?
            .renamed(&self.spec.spec.name);
        stages.push(StageTime {
            stage: "hide".into(),
            seconds: t.elapsed().as_secs_f64(),
        });

        let control = match &self.spec.spec.control {
            Some(c) => {
                let pairing = c
                    .states
                    .iter()
                    .map(|(x, xp)| Ok((self.var(x)?, self.var(xp)?)))
                    .collect::<Result<Vec<_>, PipelineError>>()?;
                Some(as_control(&composed, &pairing).map_err(stage_module("control"))?)
            }
            None => None,
        };
        Ok(Compositional {
            modules,
            composed,
            control,
            stages,
        })
    }

    /// Abstracts the flattened network in one grid traversal.
    pub fn monolithic(&self, opts: &PipelineOptions) -> Result<(FiniteModule, JobStats), PipelineError> {
        let job = self.monolithic_job(opts.hide.as_deref())?;
        log::info!("monolithic traversal over {} cells", job.cell_count());
        abstract_module(&self.ctx, &job, &Self::abstract_opts(opts)).map_err(|source| PipelineError::Abstraction {
            stage: "abstract monolithic".into(),
            source,
        })
    }

    /// States whose cells lie inside the request's box.
    pub fn region(&self, region: &[(String, f64, f64)]) -> Result<Predicate, PipelineError> {
        let mut p = self.ctx.top();
        for (k, (v, lo, hi)) in region.iter().enumerate() {
            let q = self.spec.quantizer(v);
            let want = Interval::new(*lo, *hi);
            let cells: Vec<u64> = (0..q.cell_count())
                .filter(|&c| q.concretize(c).map(|b| want.contains_interval(&b)).unwrap_or(false))
                .map(|c| c as u64)
                .collect();
            if cells.is_empty() {
                return Err(PipelineError::Validation {
                    path: format!("/region/{k}"),
                    msg: format!("no cell of `{v}` lies inside [{lo}, {hi}]"),
                });
            }
            p = p.and(&self.ctx.in_set(&self.var(v)?, &cells)?)?;
        }
        Ok(p)
    }
}

/// Variable groups in declaration order: explicit `order` groups first, then
/// the latents (shared by many modules, so they go on top), then the remaining
/// variables, each state interleaved with its successor.
fn declaration_groups(spec: &LoadedSpec) -> Vec<Vec<String>> {
    let mut groups: Vec<Vec<String>> = spec.spec.order.clone();
    let mut placed: BTreeSet<String> = groups.iter().flatten().cloned().collect();
    for l in &spec.spec.latents {
        if placed.insert(l.clone()) {
            groups.push(vec![l.clone()]);
        }
    }
    let partner: HashMap<&str, &str> = spec
        .spec
        .control
        .iter()
        .flat_map(|c| c.states.iter())
        .flat_map(|(x, xp)| [(x.as_str(), xp.as_str()), (xp.as_str(), x.as_str())])
        .collect();
    for q in &spec.spec.variables {
        if placed.contains(&q.var) {
            continue;
        }
        let mut g = vec![q.var.clone()];
        if let Some(&p) = partner.get(q.var.as_str()) {
            if !placed.contains(p) {
                g.push(p.to_string());
            }
        }
        placed.extend(g.iter().cloned());
        groups.push(g);
    }
    groups
}

fn composed_report(m: &FiniteModule) -> Result<ComposedReport, PipelineError> {
    let cells: u128 = m.inputs().iter().map(|v| v.domain_size()).product();
    Ok(ComposedReport {
        inputs: m.inputs().iter().map(|v| v.name().to_string()).collect(),
        outputs: m.outputs().iter().map(|v| v.name().to_string()).collect(),
        input_cells: cells,
        blocking: m.blocking_count().map_err(stage_module("count"))?,
        transitions: m.transition_count().map_err(stage_module("count"))?,
        nodes: m.constraint().node_count(),
    })
}

fn write_outputs(
    session: &Session,
    dir: &std::path::Path,
    modules: &[&FiniteModule],
    composed: &FiniteModule,
    report: &RunReport,
) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir.join("modules"))?;
    std::fs::write(dir.join("spec.json"), serde_json::to_string_pretty(&session.spec.spec)? + "\n")?;
    for m in modules {
        write_artifact(session, m, &dir.join("modules").join(format!("{}.json", m.name())))?;
    }
    write_artifact(session, composed, &dir.join("composed.json"))?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)? + "\n")?;
    Ok(())
}

/// Compositional pipeline: abstract → compose → hide → (check) → (synthesize).
pub fn run_pipeline(spec: &LoadedSpec, opts: &PipelineOptions) -> Result<RunReport, PipelineError> {
    let session = Session::new(spec.clone())?;
    let comp = session.compositional(opts)?;
    let mut stages = comp.stages.clone();

    let check = match opts.check_divisions {
        Some(divisions) => {
            let t = Instant::now();
            let job = session.monolithic_job(opts.hide.as_deref())?;
            let fo = FalsifyOptions {
                divisions,
                parallel: opts.parallel,
            };
            let r = falsify(&job, &comp.composed, &fo).map_err(|source| PipelineError::Refinement {
                stage: "check".into(),
                source,
            })?;
            stages.push(StageTime {
                stage: "check".into(),
                seconds: t.elapsed().as_secs_f64(),
            });
            Some(r)
        }
        None => None,
    };

    let synthesis = match &opts.synthesize {
        Some(req) => {
            let t = Instant::now();
            let sys = comp.control.as_ref().ok_or_else(|| PipelineError::Validation {
                path: "/control".into(),
                msg: "synthesis needs a control pairing".into(),
            })?;
            let goal = session.region(&req.region)?;
            let syn = |source| PipelineError::Synthesis {
                stage: "synthesize".into(),
                source,
            };
            let c = match req.objective {
                Objective::Safety => solve_safety(sys, &goal),
                Objective::Reach => solve_reach(sys, &goal),
            }
            .map_err(syn)?;
            let states = sys.states();
            let all = session.ctx.domain(states)?;
            stages.push(StageTime {
                stage: "synthesize".into(),
                seconds: t.elapsed().as_secs_f64(),
            });
            Some(SynthesisReport {
                objective: req.objective,
                goal_states: goal.and(&all)?.count_sat(states)?,
                domain_states: c.domain_size().map_err(syn)?,
                total_states: all.count_sat(states)?,
                iterations: c.iterations,
            })
        }
        None => None,
    };

    let report = RunReport {
        system: spec.spec.name.clone(),
        mode: "compositional".into(),
        modules: comp
            .modules
            .iter()
            .map(|(m, s)| ModuleReport {
                name: m.name().to_string(),
                stats: s.clone(),
            })
            .collect(),
        cells_traversed: comp.modules.iter().map(|m| m.1.cells).sum(),
        composed: composed_report(&comp.composed)?,
        check,
        synthesis,
        peak_nodes: session.ctx.peak_nodes(),
        stages,
    };
    if let Some(dir) = &opts.out_dir {
        let ms: Vec<&FiniteModule> = comp.modules.iter().map(|m| &m.0).collect();
        write_outputs(&session, dir, &ms, &comp.composed, &report)?;
    }
    Ok(report)
}

/// Abstracts the flattened network directly; fails with a budget error when
/// `opts.deadline` passes first.
pub fn run_monolithic(spec: &LoadedSpec, opts: &PipelineOptions) -> Result<RunReport, PipelineError> {
    let session = Session::new(spec.clone())?;
    let t = Instant::now();
    let (m, s) = session.monolithic(opts)?;
    let report = RunReport {
        system: spec.spec.name.clone(),
        mode: "monolithic".into(),
        modules: vec![ModuleReport {
            name: m.name().to_string(),
            stats: s.clone(),
        }],
        cells_traversed: s.cells,
        composed: composed_report(&m)?,
        check: None,
        synthesis: None,
        peak_nodes: session.ctx.peak_nodes(),
        stages: vec![StageTime {
            stage: "abstract".into(),
            seconds: t.elapsed().as_secs_f64(),
        }],
    };
    if let Some(dir) = &opts.out_dir {
        write_outputs(&session, dir, &[], &m, &report)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests;
