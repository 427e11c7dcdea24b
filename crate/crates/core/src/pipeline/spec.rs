//! System specifications: JSON schema, loading and validation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::expr::{parse_with, Expr, Interval, Oracle};
use crate::grid::{Quantizer, QuantizerSpec};
use crate::module::{DependencyGraph, FiniteModule, ModuleError};
use crate::predicate::Context;

/// A network of concrete modules wired by shared variable names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub name: String,
    /// One quantizer per variable; its `var` is the variable name.
    pub variables: Vec<QuantizerSpec>,
    pub modules: Vec<ModuleSpec>,
    /// Outputs hidden after composition.
    #[serde(default)]
    pub latents: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlSpec>,
    /// Variable order for the decision diagrams: each group is declared with
    /// interleaved bits. Unlisted variables follow in declaration order, each
    /// state next to its successor.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub order: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleSpec {
    pub name: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<OutputSpec>,
    #[serde(default)]
    pub oracle: OracleChoice,
    /// Lipschitz matrix (`[output][input]`), for `oracle: "lipschitz"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub var: String,
    pub expr: String,
    /// The concrete module relates `var` to every value within `band` of `expr`.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub band: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleChoice {
    /// Monotone if validation succeeds, otherwise interval extension.
    #[default]
    Auto,
    Monotone,
    Interval,
    Lipschitz,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    /// `[x, x′]` pairs.
    pub states: Vec<(String, String)>,
}

/// A spec that passed validation, with parsed expressions and quantizers.
#[derive(Debug, Clone)]
pub struct LoadedSpec {
    pub spec: SystemSpec,
    pub quantizers: BTreeMap<String, Quantizer>,
    /// Parsed right-hand sides, per module, per output.
    pub exprs: Vec<Vec<Expr>>,
}

fn invalid(path: impl Into<String>, msg: impl Into<String>) -> PipelineError {
    PipelineError::Validation {
        path: path.into(),
        msg: msg.into(),
    }
}

/// Converts a `serde_path_to_error` path (`modules[2].name`) to a JSON pointer.
fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut s = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => s.push_str(&format!("/{index}")),
            Segment::Map { key } => s.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => s.push_str(&format!("/{variant}")),
            Segment::Unknown => s.push_str("/?"),
        }
    }
    s
}

pub fn load_spec(path: &Path) -> Result<LoadedSpec, PipelineError> {
    let text = std::fs::read_to_string(path)?;
    parse_spec(&text)
}

pub fn parse_spec(text: &str) -> Result<LoadedSpec, PipelineError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let spec: SystemSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = pointer(e.path());
        let inner = e.into_inner();
        if inner.is_syntax() || inner.is_eof() {
            invalid("", inner.to_string())
        } else {
            invalid(path, inner.to_string())
        }
    })?;
    validate(spec)
}

impl LoadedSpec {
    pub fn quantizer(&self, var: &str) -> &Quantizer {
        &self.quantizers[var]
    }

    /// Variables declared as module outputs.
    pub fn outputs(&self) -> BTreeSet<&str> {
        self.spec
            .modules
            .iter()
            .flat_map(|m| m.outputs.iter().map(|o| o.var.as_str()))
            .collect()
    }

    /// Concrete-domain box of a variable, used for monotonicity validation.
    pub fn domain(&self, var: &str) -> Interval {
        let q = self.quantizer(var);
        match q.values() {
            Some(v) => Interval::new(
                v.iter().copied().fold(f64::INFINITY, f64::min),
                v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ),
            None => q.region(),
        }
    }

    /// Builds module `k`'s oracle.
    pub fn oracle(&self, k: usize) -> Result<Oracle, PipelineError> {
        let m = &self.spec.modules[k];
        let at = format!("/modules/{k}");
        let inputs: Vec<&str> = m.inputs.iter().map(String::as_str).collect();
        let exprs = self.exprs[k].clone();
        let dom: Vec<Interval> = m.inputs.iter().map(|v| self.domain(v)).collect();
        let seed = 0x5eed ^ k as u64;
        let o = match m.oracle {
            OracleChoice::Auto => Oracle::monotone_or_interval(&inputs, exprs, &dom, seed),
            OracleChoice::Monotone => Oracle::monotone(&inputs, exprs, &dom, seed),
            OracleChoice::Interval => Oracle::interval(&inputs, exprs),
            OracleChoice::Lipschitz => {
                let l = m
                    .lipschitz
                    .clone()
                    .ok_or_else(|| invalid(format!("{at}/lipschitz"), "lipschitz oracle needs a matrix"))?;
                Oracle::lipschitz(&inputs, exprs, l)
            }
        };
        o.map_err(|e| invalid(format!("{at}/oracle"), e.to_string()))
    }
}

fn validate(spec: SystemSpec) -> Result<LoadedSpec, PipelineError> {
    if spec.name.is_empty() {
        return Err(invalid("/name", "empty name"));
    }
    let mut quantizers = BTreeMap::new();
    for (k, qs) in spec.variables.iter().enumerate() {
        let at = format!("/variables/{k}");
        let q = Quantizer::from_spec(qs).map_err(|e| invalid(&at, e.to_string()))?;
        if !q.check_strict() {
            return Err(PipelineError::NonStrict { path: at, var: qs.var.clone() });
        }
        if quantizers.insert(qs.var.clone(), q).is_some() {
            return Err(invalid(format!("{at}/var"), format!("`{}` declared twice", qs.var)));
        }
    }
    let known = |v: &str, at: String| {
        if quantizers.contains_key(v) {
            Ok(())
        } else {
            Err(invalid(at, format!("undeclared variable `{v}`")))
        }
    };

    let mut producer: HashMap<&str, usize> = HashMap::new();
    let mut names = BTreeSet::new();
    let mut exprs = Vec::new();
    for (k, m) in spec.modules.iter().enumerate() {
        let at = format!("/modules/{k}");
        if !names.insert(m.name.as_str()) {
            return Err(invalid(format!("{at}/name"), format!("duplicate module name `{}`", m.name)));
        }
        if m.outputs.is_empty() {
            return Err(invalid(format!("{at}/outputs"), "a module needs at least one output"));
        }
        let mut seen = BTreeSet::new();
        for (i, v) in m.inputs.iter().enumerate() {
            known(v, format!("{at}/inputs/{i}"))?;
            if !seen.insert(v.as_str()) {
                return Err(invalid(format!("{at}/inputs/{i}"), format!("`{v}` listed twice")));
            }
        }
        let ins: Vec<&str> = m.inputs.iter().map(String::as_str).collect();
        let mut parsed = Vec::new();
        for (j, o) in m.outputs.iter().enumerate() {
            let oat = format!("{at}/outputs/{j}");
            known(&o.var, format!("{oat}/var"))?;
            if seen.contains(o.var.as_str()) {
                return Err(invalid(format!("{oat}/var"), format!("`{}` is both input and output", o.var)));
            }
            if let Some(&other) = producer.get(o.var.as_str()) {
                return Err(invalid(
                    format!("{oat}/var"),
                    format!("`{}` is already an output of `{}`", o.var, spec.modules[other].name),
                ));
            }
            producer.insert(&o.var, k);
            if !(o.band >= 0.0) {
                return Err(invalid(format!("{oat}/band"), "band must be nonnegative"));
            }
            parsed.push(parse_with(&o.expr, &ins).map_err(|e| invalid(format!("{oat}/expr"), e.to_string()))?);
        }
        if m.oracle == OracleChoice::Lipschitz && m.lipschitz.is_none() {
            return Err(invalid(format!("{at}/lipschitz"), "lipschitz oracle needs a matrix"));
        }
        if m.oracle != OracleChoice::Lipschitz && m.lipschitz.is_some() {
            return Err(invalid(format!("{at}/lipschitz"), "matrix given for a non-lipschitz oracle"));
        }
        exprs.push(parsed);
    }

    // Wiring: build throwaway modules and reuse the composition checks.
    let ctx = Context::new();
    for (v, q) in &quantizers {
        ctx.declare(v, q.cell_count() as u64)?;
    }
    let shells = spec
        .modules
        .iter()
        .map(|m| {
            let ins = m.inputs.iter().map(|v| ctx.var(v)).collect::<Result<Vec<_>, _>>()?;
            let outs = m.outputs.iter().map(|o| ctx.var(&o.var)).collect::<Result<Vec<_>, _>>()?;
            FiniteModule::new(&m.name, &ins, &outs, ctx.top()).map_err(|e| invalid("/modules", e.to_string()))
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    if let Err(ModuleError::AlgebraicLoop(cycle)) = DependencyGraph::new(&shells).topo_order() {
        return Err(PipelineError::AlgebraicLoop {
            path: "/modules".into(),
            cycle,
        });
    }

    for (k, l) in spec.latents.iter().enumerate() {
        if !producer.contains_key(l.as_str()) {
            return Err(invalid(format!("/latents/{k}"), format!("`{l}` is not a module output")));
        }
    }
    if let Some(c) = &spec.control {
        let latents: BTreeSet<&str> = spec.latents.iter().map(String::as_str).collect();
        let mut nexts = BTreeSet::new();
        for (k, (x, xp)) in c.states.iter().enumerate() {
            let at = format!("/control/states/{k}");
            known(x, format!("{at}/0"))?;
            known(xp, format!("{at}/1"))?;
            if producer.contains_key(x.as_str()) {
                return Err(invalid(format!("{at}/0"), format!("state `{x}` is a module output")));
            }
            if !producer.contains_key(xp.as_str()) || latents.contains(xp.as_str()) {
                return Err(invalid(format!("{at}/1"), format!("`{xp}` is not a visible module output")));
            }
            let (qx, qxp) = (&quantizers[x], &quantizers[xp]);
            if qx.cell_count() != qxp.cell_count() {
                return Err(invalid(
                    at,
                    format!("`{x}` has {} cells but `{xp}` has {}", qx.cell_count(), qxp.cell_count()),
                ));
            }
            nexts.insert(xp.as_str());
        }
        for v in producer.keys() {
            if !latents.contains(v) && !nexts.contains(v) {
                return Err(invalid("/control", format!("output `{v}` is neither hidden nor a successor state")));
            }
        }
    }
    let mut listed = BTreeSet::new();
    for (g, group) in spec.order.iter().enumerate() {
        for (k, v) in group.iter().enumerate() {
            known(v, format!("/order/{g}/{k}"))?;
            if !listed.insert(v.as_str()) {
                return Err(invalid(format!("/order/{g}/{k}"), format!("`{v}` listed twice")));
            }
        }
    }
    Ok(LoadedSpec {
        spec,
        quantizers,
        exprs,
    })
}
