//! Module artifacts: a JSON document holding the interface, the quantizers,
//! the variable layout and the structural decision-diagram dump.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{declaration_groups, PipelineError, Session};
use crate::grid::QuantizerSpec;
use crate::module::FiniteModule;
use crate::predicate::{Context, DiagramFile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleArtifact {
    pub name: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Declaration groups (interleaved bits), `(name, domain size)`.
    pub layout: Vec<Vec<(String, u64)>>,
    pub quantizers: Vec<QuantizerSpec>,
    pub diagram: DiagramFile,
}

pub fn write_artifact(session: &Session, m: &FiniteModule, path: &Path) -> Result<(), PipelineError> {
    let iface = m.interface();
    let names: Vec<&str> = iface.iter().map(|v| v.name()).collect();
    let layout: Vec<Vec<(String, u64)>> = declaration_groups(&session.spec)
        .into_iter()
        .map(|g| {
            g.into_iter()
                .filter(|v| names.contains(&v.as_str()))
                .map(|v| {
                    let n = session.spec.quantizer(&v).cell_count() as u64;
                    (v, n)
                })
                .collect::<Vec<_>>()
        })
        .filter(|g| !g.is_empty())
        .collect();
    let art = ModuleArtifact {
        name: m.name().to_string(),
        inputs: m.inputs().iter().map(|v| v.name().to_string()).collect(),
        outputs: m.outputs().iter().map(|v| v.name().to_string()).collect(),
        layout,
        quantizers: names.iter().map(|v| session.spec.quantizer(v).to_spec()).collect(),
        diagram: DiagramFile::export(m.constraint(), &iface).map_err(|e| PipelineError::Format(e.to_string()))?,
    };
    std::fs::write(path, serde_json::to_string(&art)? + "\n")?;
    Ok(())
}

/// Loads an artifact into a fresh context.
pub fn read_artifact(path: &Path) -> Result<(Context, FiniteModule), PipelineError> {
    let text = std::fs::read_to_string(path)?;
    let art: ModuleArtifact = serde_json::from_str(&text).map_err(|e| PipelineError::Format(e.to_string()))?;
    let ctx = Context::new();
    for g in &art.layout {
        let g: Vec<(&str, u64)> = g.iter().map(|(n, s)| (n.as_str(), *s)).collect();
        ctx.declare_interleaved(&g)
            .map_err(|e| PipelineError::Format(e.to_string()))?;
    }
    let (_, p) = art
        .diagram
        .import(&ctx)
        .map_err(|e| PipelineError::Format(e.to_string()))?;
    let lookup = |names: &[String]| {
        names
            .iter()
            .map(|n| ctx.var(n).map_err(|_| PipelineError::Format(format!("`{n}` missing from the layout"))))
            .collect::<Result<Vec<_>, _>>()
    };
    let (ins, outs) = (lookup(&art.inputs)?, lookup(&art.outputs)?);
    let m = FiniteModule::new(&art.name, &ins, &outs, p).map_err(|e| PipelineError::Format(e.to_string()))?;
    Ok((ctx, m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactStats {
    pub name: String,
    pub transitions: u128,
    pub nodes: usize,
    pub input_cells: u128,
    pub blocking: u128,
    pub blocking_fraction: f64,
}

pub fn stats(path: &Path) -> Result<ArtifactStats, PipelineError> {
    let (_ctx, m) = read_artifact(path)?;
    let count = |e: crate::module::ModuleError| PipelineError::Format(e.to_string());
    let input_cells: u128 = m.inputs().iter().map(|v| v.domain_size()).product();
    let blocking = m.blocking_count().map_err(count)?;
    Ok(ArtifactStats {
        name: m.name().to_string(),
        transitions: m.transition_count().map_err(count)?,
        nodes: m.constraint().node_count(),
        input_cells,
        blocking,
        blocking_fraction: blocking as f64 / input_cells as f64,
    })
}
