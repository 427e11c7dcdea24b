//! Quantization relations between continuous intervals and finite grids.
//!
//! Cells are closed balls `|w − center| ≤ η/2` clipped to the concrete
//! domain, so a point on a cell boundary belongs to both neighbours.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Interval;
use crate::predicate::{Context, Predicate, PredicateError, Variable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("{point} is outside the domain of `{var}`")]
    OutOfDomain { var: String, point: f64 },
    #[error("cell {cell} out of range for `{var}` ({cells} cells)")]
    BadCell { var: String, cell: usize, cells: usize },
    #[error("invalid quantizer for `{var}`: {msg}")]
    Invalid { var: String, msg: String },
    #[error(transparent)]
    Predicate(#[from] PredicateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousDomain {
    pub lower: f64,
    pub upper: f64,
}

impl ContinuousDomain {
    pub fn new(lower: f64, upper: f64) -> Self {
        assert!(lower <= upper, "empty domain [{lower}, {upper}]");
        ContinuousDomain { lower, upper }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn interval(&self) -> Interval {
        Interval::new(self.lower, self.upper)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuantizerKind {
    Uniform {
        eta: f64,
        anchor: f64,
        cells: usize,
        domain: ContinuousDomain,
    },
    /// Discrete variable; abstract index `k` stands for `values[k]`.
    Identity { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quantizer {
    var: String,
    kind: QuantizerKind,
}

/// JSON form: `{"var", "kind": "uniform"|"identity", "lower", "upper", "eta",
/// "anchor", "cells"}`, plus `"values"` for identity quantizers. For uniform
/// grids any of `anchor` (default `lower + η/2`) and `cells` (default enough
/// to reach `upper`) may be omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerSpec {
    pub var: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl Quantizer {
    /// Uniform grid with centers `anchor + c·η`, `0 ≤ c < cells`.
    ///
    /// Every cell must meet the domain; strictness (coverage) is checked
    /// separately by [`Quantizer::check_strict`].
    pub fn uniform(var: &str, domain: ContinuousDomain, eta: f64, anchor: f64, cells: usize) -> Result<Self, GridError> {
        let bad = |msg: String| GridError::Invalid {
            var: var.to_string(),
            msg,
        };
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(bad(format!("eta must be positive, got {eta}")));
        }
        if cells == 0 {
            return Err(bad("at least one cell is required".into()));
        }
        if !anchor.is_finite() || !domain.lower.is_finite() || !domain.upper.is_finite() {
            return Err(bad("bounds and anchor must be finite".into()));
        }
        let q = Quantizer {
            var: var.to_string(),
            kind: QuantizerKind::Uniform {
                eta,
                anchor,
                cells,
                domain,
            },
        };
        for c in [0, cells - 1] {
            let (lo, hi) = q.ball(c);
            if hi < domain.lower || lo > domain.upper {
                return Err(bad(format!("cell {c} [{lo}, {hi}] lies outside [{}, {}]", domain.lower, domain.upper)));
            }
        }
        Ok(q)
    }

    /// `cells` unit-free cells tiling `[lower, upper]` exactly.
    pub fn tiling(var: &str, lower: f64, upper: f64, cells: usize) -> Result<Self, GridError> {
        let mut eta = (upper - lower) / cells as f64;
        let mut anchor = lower + eta / 2.0;
        // Rounding can leave the outer edges a few ulps inside the domain.
        loop {
            let q = Self::uniform(var, ContinuousDomain::new(lower, upper), eta, anchor, cells)?;
            if q.ball(0).0 > lower {
                anchor = anchor.next_down();
            } else if q.ball(cells - 1).1 < upper {
                eta = eta.next_up();
            } else {
                return Ok(q);
            }
        }
    }

    pub fn identity(var: &str, values: Vec<f64>) -> Result<Self, GridError> {
        let bad = |msg: &str| GridError::Invalid {
            var: var.to_string(),
            msg: msg.to_string(),
        };
        if values.is_empty() {
            return Err(bad("identity quantizer needs at least one value"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(bad("values must be finite"));
        }
        for (i, a) in values.iter().enumerate() {
            if values[..i].contains(a) {
                return Err(bad("values must be distinct"));
            }
        }
        Ok(Quantizer {
            var: var.to_string(),
            kind: QuantizerKind::Identity { values },
        })
    }

    pub fn from_spec(s: &QuantizerSpec) -> Result<Self, GridError> {
        let bad = |msg: String| GridError::Invalid {
            var: s.var.clone(),
            msg,
        };
        match s.kind.as_str() {
            "identity" => {
                let values = s.values.clone().ok_or_else(|| bad("identity quantizer needs `values`".into()))?;
                if s.eta.is_some() || s.anchor.is_some() {
                    return Err(bad("identity quantizers take no `eta`/`anchor`".into()));
                }
                if let Some(n) = s.cells {
                    if n != values.len() {
                        return Err(bad(format!("`cells` = {n} but {} values listed", values.len())));
                    }
                }
                let q = Self::identity(&s.var, values)?;
                if let (Some(lo), Some(hi)) = (s.lower, s.upper) {
                    if q.values().unwrap().iter().any(|&v| v < lo || v > hi) {
                        return Err(bad("a value lies outside [lower, upper]".into()));
                    }
                }
                Ok(q)
            }
            "uniform" => {
                if s.values.is_some() {
                    return Err(bad("uniform quantizers take no `values`".into()));
                }
                let lower = s.lower.ok_or_else(|| bad("missing `lower`".into()))?;
                let upper = s.upper.ok_or_else(|| bad("missing `upper`".into()))?;
                if !(lower <= upper) {
                    return Err(bad(format!("lower {lower} > upper {upper}")));
                }
                let eta = s.eta.ok_or_else(|| bad("missing `eta`".into()))?;
                if !(eta > 0.0) {
                    return Err(bad(format!("eta must be positive, got {eta}")));
                }
                let anchor = s.anchor.unwrap_or(lower + eta / 2.0);
                let cells = match s.cells {
                    Some(n) => n,
                    None => {
                        let reach = ((upper - anchor - eta / 2.0) / eta).ceil().max(0.0);
                        reach as usize + 1
                    }
                };
                Self::uniform(&s.var, ContinuousDomain::new(lower, upper), eta, anchor, cells)
            }
            other => Err(bad(format!("unknown kind `{other}` (expected `uniform` or `identity`)"))),
        }
    }

    pub fn to_spec(&self) -> QuantizerSpec {
        match &self.kind {
            QuantizerKind::Uniform {
                eta,
                anchor,
                cells,
                domain,
            } => QuantizerSpec {
                var: self.var.clone(),
                kind: "uniform".into(),
                lower: Some(domain.lower),
                upper: Some(domain.upper),
                eta: Some(*eta),
                anchor: Some(*anchor),
                cells: Some(*cells),
                values: None,
            },
            QuantizerKind::Identity { values } => QuantizerSpec {
                var: self.var.clone(),
                kind: "identity".into(),
                lower: None,
                upper: None,
                eta: None,
                anchor: None,
                cells: Some(values.len()),
                values: Some(values.clone()),
            },
        }
    }

    pub fn var(&self) -> &str {
        &self.var
    }

    pub fn kind(&self) -> &QuantizerKind {
        &self.kind
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, QuantizerKind::Identity { .. })
    }

    pub fn values(&self) -> Option<&[f64]> {
        match &self.kind {
            QuantizerKind::Identity { values } => Some(values),
            _ => None,
        }
    }

    /// Number of abstract values (size of the abstract variable's domain).
    pub fn cell_count(&self) -> usize {
        match &self.kind {
            QuantizerKind::Uniform { cells, .. } => *cells,
            QuantizerKind::Identity { values } => values.len(),
        }
    }

    /// Concrete region covered by the cells: the domain for uniform grids,
    /// the value hull for identity quantizers.
    pub fn region(&self) -> Interval {
        match &self.kind {
            QuantizerKind::Uniform { domain, .. } => domain.interval(),
            QuantizerKind::Identity { values } => {
                let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Interval::new(lo, hi)
            }
        }
    }

    pub fn center(&self, cell: usize) -> Result<f64, GridError> {
        self.check_cell(cell)?;
        Ok(match &self.kind {
            QuantizerKind::Uniform { eta, anchor, .. } => anchor + cell as f64 * eta,
            QuantizerKind::Identity { values } => values[cell],
        })
    }

    fn check_cell(&self, cell: usize) -> Result<(), GridError> {
        if cell >= self.cell_count() {
            return Err(GridError::BadCell {
                var: self.var.clone(),
                cell,
                cells: self.cell_count(),
            });
        }
        Ok(())
    }

    /// Unclipped closed ball of a uniform cell.
    fn ball(&self, c: usize) -> (f64, f64) {
        match &self.kind {
            // Neighbours share the exact same boundary float, so rounding can't
            // open a gap between them.
            QuantizerKind::Uniform { eta, anchor, .. } => {
                let edge = |k: f64| anchor + k * eta;
                (edge(c as f64 - 0.5), edge(c as f64 + 0.5))
            }
            QuantizerKind::Identity { values } => (values[c], values[c]),
        }
    }

    /// Closed concretization of `cell`, clipped to the domain.
    pub fn concretize(&self, cell: usize) -> Result<Interval, GridError> {
        self.check_cell(cell)?;
        let (lo, hi) = self.ball(cell);
        Ok(match &self.kind {
            QuantizerKind::Uniform { domain, .. } => Interval::new(lo.max(domain.lower), hi.min(domain.upper)),
            QuantizerKind::Identity { .. } => Interval::new(lo, hi),
        })
    }

    /// Range of uniform cells whose unclipped ball may meet `[lo, hi]`.
    fn candidate_range(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        match &self.kind {
            QuantizerKind::Uniform {
                eta, anchor, cells, ..
            } => {
                let first = ((lo - anchor) / eta - 0.5).floor() - 1.0;
                let last = ((hi - anchor) / eta + 0.5).ceil() + 1.0;
                let first = first.max(0.0).min(*cells as f64) as usize;
                let last = (last + 1.0).max(0.0).min(*cells as f64) as usize;
                first..last.max(first)
            }
            QuantizerKind::Identity { values } => 0..values.len(),
        }
    }

    /// All cells whose concretization contains `point`.
    pub fn quantize(&self, point: f64) -> Result<Vec<usize>, GridError> {
        let out_of_domain = || GridError::OutOfDomain {
            var: self.var.clone(),
            point,
        };
        match &self.kind {
            QuantizerKind::Uniform { domain, .. } => {
                if !domain.contains(point) {
                    return Err(out_of_domain());
                }
                Ok(self
                    .candidate_range(point, point)
                    .filter(|&c| self.concretize(c).expect("in range").contains(point))
                    .collect())
            }
            QuantizerKind::Identity { values } => match values.iter().position(|&v| v == point) {
                Some(k) => Ok(vec![k]),
                None => Err(out_of_domain()),
            },
        }
    }

    /// Cells whose closed concretization meets the closed interval `b`.
    pub fn cells_meeting(&self, b: &Interval) -> Vec<usize> {
        self.candidate_range(b.lo, b.hi)
            .filter(|&c| self.concretize(c).expect("in range").intersects(b))
            .collect()
    }

    /// Whether the cells cover the whole concrete domain.
    pub fn check_strict(&self) -> bool {
        match &self.kind {
            QuantizerKind::Identity { .. } => true,
            QuantizerKind::Uniform { cells, domain, .. } => {
                let mut reached = domain.lower;
                let mut started = false;
                for c in 0..*cells {
                    let (lo, hi) = self.ball(c);
                    if hi < domain.lower || lo > domain.upper {
                        continue;
                    }
                    if lo > reached {
                        return false;
                    }
                    started = true;
                    reached = reached.max(hi);
                }
                started && reached >= domain.upper
            }
        }
    }

    /// Relation between sample indices (`sample_var`, one value per entry of
    /// `samples`) and abstract cells (`abstract_var`).
    pub fn relation_predicate(
        &self,
        ctx: &Context,
        samples: &[f64],
        sample_var: &Variable,
        abstract_var: &Variable,
    ) -> Result<Predicate, GridError> {
        if sample_var.domain_size() != samples.len() as u128 {
            return Err(GridError::Invalid {
                var: self.var.clone(),
                msg: format!(
                    "`{}` has {} values but {} samples were given",
                    sample_var.name(),
                    sample_var.domain_size(),
                    samples.len()
                ),
            });
        }
        if abstract_var.domain_size() != self.cell_count() as u128 {
            return Err(GridError::Invalid {
                var: self.var.clone(),
                msg: format!(
                    "`{}` has {} values but the grid has {} cells",
                    abstract_var.name(),
                    abstract_var.domain_size(),
                    self.cell_count()
                ),
            });
        }
        let mut rows = Vec::new();
        for (s, &x) in samples.iter().enumerate() {
            for c in self.quantize(x)? {
                rows.push(vec![s as u64, c as u64]);
            }
        }
        Ok(ctx.from_assignments(&[sample_var.clone(), abstract_var.clone()], &rows)?)
    }
}

/// Component-wise relation of a bundled quantizer: the conjunction of the
/// components' relation predicates.
pub fn composite_relation(
    ctx: &Context,
    parts: &[(&Quantizer, &[f64], &Variable, &Variable)],
) -> Result<Predicate, GridError> {
    let mut acc = ctx.top();
    for (q, samples, s, a) in parts {
        acc = acc.and(&q.relation_predicate(ctx, samples, s, a)?)?;
    }
    Ok(acc)
}
