//! Checks against a continuous concrete module, through dense sampling.

use crate::abstractor::{AbstractionJob, GridVar};
use crate::expr::Value;
use crate::grid::{Quantizer, QuantizerKind};
use crate::module::FiniteModule;
use crate::par;
use crate::predicate::{Context, Variable};

use super::{AbstractionClaim, Binding, CheckReport, Condition, RefinementError, Role};

#[derive(Debug, Clone)]
pub struct FalsifyOptions {
    /// Samples per cell width along each uniform axis (10 gives a step of η/10).
    pub divisions: usize,
    pub parallel: bool,
}

impl Default for FalsifyOptions {
    fn default() -> Self {
        FalsifyOptions {
            divisions: 10,
            parallel: par::available(),
        }
    }
}

/// Sample points of a quantizer's concrete domain: every value of an identity
/// quantizer, otherwise a grid of step `η / divisions` including both bounds.
pub fn sample_points(q: &Quantizer, divisions: usize) -> Vec<f64> {
    match q.kind() {
        QuantizerKind::Identity { values } => values.clone(),
        QuantizerKind::Uniform { eta, domain, .. } => {
            let step = eta / divisions.max(1) as f64;
            let n = ((domain.upper - domain.lower) / step).round() as usize;
            let mut pts: Vec<f64> = (0..=n).map(|k| (domain.lower + k as f64 * step).min(domain.upper)).collect();
            if *pts.last().unwrap() < domain.upper {
                pts.push(domain.upper);
            }
            pts.dedup();
            pts
        }
    }
}

fn step_of(q: &Quantizer, divisions: usize) -> Option<f64> {
    match q.kind() {
        QuantizerKind::Uniform { eta, .. } => Some(eta / divisions.max(1) as f64),
        QuantizerKind::Identity { .. } => None,
    }
}

/// Concrete outputs `o` with `|o − y| ≤ band` inside the output domain, as
/// sample points: the exact values `y`, `y ± band` when admissible, and the
/// sample grid in between.
fn output_samples(q: &Quantizer, y: f64, band: f64, divisions: usize) -> Vec<f64> {
    let within = |o: f64| (o - y).abs() <= band;
    match q.kind() {
        QuantizerKind::Identity { values } => values.iter().copied().filter(|&o| within(o)).collect(),
        QuantizerKind::Uniform { domain, .. } => {
            let lo = (y - band).max(domain.lower);
            let hi = (y + band).min(domain.upper);
            let mut out = Vec::new();
            if lo > hi {
                return out;
            }
            for o in [y, lo, hi] {
                if domain.contains(o) && within(o) {
                    out.push(o);
                }
            }
            if band > 0.0 {
                let step = step_of(q, divisions).unwrap();
                let first = (lo / step).ceil() as i64;
                let last = (hi / step).floor() as i64;
                for k in first..=last {
                    let o = k as f64 * step;
                    if domain.contains(o) && within(o) {
                        out.push(o);
                    }
                }
            }
            out.sort_by(f64::total_cmp);
            out.dedup();
            out
        }
    }
}

/// Searches for a violation of the approximation conditions between the
/// job's concrete module `|o − F(i)| ≤ band` and `abstraction` over a
/// product grid of input samples. Passing means "no counterexample found at
/// this resolution", not a proof.
pub fn falsify(
    job: &AbstractionJob,
    abstraction: &FiniteModule,
    opts: &FalsifyOptions,
) -> Result<CheckReport, RefinementError> {
    for g in job.inputs.iter().chain(&job.outputs) {
        if !g.quantizer.check_strict() {
            return Err(RefinementError::StrictnessError(g.quantizer.var().to_string()));
        }
    }
    let in_vars: Vec<Variable> = job.inputs.iter().map(|g| g.var.clone()).collect();
    let out_vars: Vec<Variable> = job.outputs.iter().map(|g| g.var.clone()).collect();
    let all: Vec<Variable> = in_vars.iter().chain(&out_vars).cloned().collect();
    let frozen = abstraction.constraint().freeze(&all);
    let nb = abstraction.nonblocking()?.freeze(&in_vars);

    let axes: Vec<Vec<f64>> = job.inputs.iter().map(|g| sample_points(&g.quantizer, opts.divisions)).collect();
    let total: u128 = axes.iter().map(|a| a.len() as u128).product();
    let total = usize::try_from(total).map_err(|_| RefinementError::Invalid("sample grid too large".into()))?;
    let band = |j: usize| job.band.get(j).copied().unwrap_or(0.0);

    // Violation at sample `k`, if any.
    let check = |k: usize| -> Option<(Condition, Vec<Binding>)> {
        let mut point = vec![0.0; axes.len()];
        let mut r = k;
        for (slot, axis) in point.iter_mut().zip(&axes).rev() {
            *slot = axis[r % axis.len()];
            r /= axis.len();
        }
        let cells: Vec<Vec<usize>> = job
            .inputs
            .iter()
            .zip(&point)
            .map(|(g, &p)| g.quantizer.quantize(p).unwrap_or_default())
            .collect();
        let image: Vec<Value> = job.oracle.eval(&point);
        let outs: Option<Vec<Vec<f64>>> = image
            .iter()
            .enumerate()
            .map(|(j, y)| y.real().map(|y| output_samples(&job.outputs[j].quantizer, y, band(j), opts.divisions)))
            .collect();
        let concrete_blocks = outs.as_ref().map_or(true, |o| o.iter().any(Vec::is_empty));
        for abs_in in product(&cells) {
            let abs_in: Vec<u64> = abs_in.iter().map(|&c| c as u64).collect();
            if !nb.eval(&abs_in) {
                continue;
            }
            let bind_inputs = || {
                let mut b = Vec::new();
                for (g, &p) in job.inputs.iter().zip(&point) {
                    b.push(binding(Role::ConcreteInput, g.quantizer.var(), p));
                }
                for (g, &c) in job.inputs.iter().zip(&abs_in) {
                    b.push(binding(Role::AbstractInput, g.var.name(), c as f64));
                }
                b
            };
            if concrete_blocks {
                return Some((Condition::Nonblocking, bind_inputs()));
            }
            let outs = outs.as_ref().unwrap();
            // The concrete relation is a product over outputs, so every
            // combination of related output cells must be present.
            let out_cells: Vec<Vec<(usize, f64)>> = job
                .outputs
                .iter()
                .zip(outs)
                .map(|(g, os)| {
                    let mut cs: Vec<(usize, f64)> = Vec::new();
                    for &o in os {
                        for c in g.quantizer.quantize(o).unwrap_or_default() {
                            if !cs.iter().any(|&(d, _)| d == c) {
                                cs.push((c, o));
                            }
                        }
                    }
                    cs
                })
                .collect();
            for combo in product(&out_cells) {
                let mut row = abs_in.clone();
                row.extend(combo.iter().map(|&(c, _)| c as u64));
                if !frozen.eval(&row) {
                    let mut b = bind_inputs();
                    for (g, &(_, o)) in job.outputs.iter().zip(&combo) {
                        b.push(binding(Role::ConcreteOutput, g.quantizer.var(), o));
                    }
                    for (g, &(c, _)) in job.outputs.iter().zip(&combo) {
                        b.push(binding(Role::AbstractOutput, g.var.name(), c as f64));
                    }
                    return Some((Condition::Overapprox, b));
                }
            }
        }
        None
    };

    let batch = 1 << 14;
    let mut start = 0;
    while start < total {
        let n = (total - start).min(batch);
        let found = par::map_range(n, opts.parallel, |k| check(start + k));
        if let Some((cond, cex)) = found.into_iter().flatten().next() {
            let mut r = CheckReport::fail(cond, cex);
            r.resolution = Some(opts.divisions as f64);
            return Ok(r);
        }
        start += n;
    }
    let mut r = CheckReport::pass(vec![format!(
        "no counterexample found over {total} input samples at 1/{} of a cell width",
        opts.divisions
    )]);
    r.resolution = Some(opts.divisions as f64);
    Ok(r)
}

fn binding(role: Role, name: &str, value: f64) -> Binding {
    Binding {
        role,
        name: name.to_string(),
        value,
    }
}

fn product<T: Copy>(sets: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out = vec![Vec::new()];
    for s in sets {
        out = out
            .into_iter()
            .flat_map(|p| {
                s.iter().map(move |&x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    out
}

/// Finite stand-in for the job's continuous module: each concrete variable is
/// replaced by a finite set of sample points (inputs on a grid of step
/// `η / divisions`; outputs on that grid plus every exact image and band end),
/// and the claim relates those samples to the abstraction through the
/// quantizers. New sample variables `<var>~` are declared in `ctx`.
pub fn finitize(
    ctx: &Context,
    job: &AbstractionJob,
    abstraction: &FiniteModule,
    divisions: usize,
) -> Result<AbstractionClaim, RefinementError> {
    let axes: Vec<Vec<f64>> = job.inputs.iter().map(|g| sample_points(&g.quantizer, divisions)).collect();
    let band = |j: usize| job.band.get(j).copied().unwrap_or(0.0);

    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    for a in &axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                a.iter().map(move |&x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    // Output samples per input point, then the union per output axis.
    let per_point: Vec<Option<Vec<Vec<f64>>>> = points
        .iter()
        .map(|p| {
            job.oracle
                .eval(p)
                .iter()
                .enumerate()
                .map(|(j, y)| y.real().map(|y| output_samples(&job.outputs[j].quantizer, y, band(j), divisions)))
                .collect()
        })
        .collect();
    let mut out_axes: Vec<Vec<f64>> = job.outputs.iter().map(|g| sample_points(&g.quantizer, divisions)).collect();
    for os in per_point.iter().flatten() {
        for (axis, o) in out_axes.iter_mut().zip(os) {
            axis.extend(o);
        }
    }
    for axis in out_axes.iter_mut() {
        axis.sort_by(f64::total_cmp);
        axis.dedup();
    }

    let declare = |g: &GridVar, n: usize| ctx.declare(&format!("{}~", g.var.name()), n as u64);
    let in_s: Vec<Variable> = job.inputs.iter().zip(&axes).map(|(g, a)| declare(g, a.len())).collect::<Result<_, _>>()?;
    let out_s: Vec<Variable> = job
        .outputs
        .iter()
        .zip(&out_axes)
        .map(|(g, a)| declare(g, a.len()))
        .collect::<Result<_, _>>()?;

    let index = |axis: &[f64], x: f64| axis.binary_search_by(|p| p.total_cmp(&x)).expect("sample present") as u64;
    let mut rows = Vec::new();
    for (p, os) in points.iter().zip(&per_point) {
        let Some(os) = os else { continue };
        let prefix: Vec<u64> = p.iter().zip(&axes).map(|(&x, a)| index(a, x)).collect();
        let choices: Vec<Vec<u64>> = os.iter().zip(&out_axes).map(|(o, a)| o.iter().map(|&x| index(a, x)).collect()).collect();
        for combo in product(&choices) {
            let mut row = prefix.clone();
            row.extend(combo);
            rows.push(row);
        }
    }
    let all: Vec<Variable> = in_s.iter().chain(&out_s).cloned().collect();
    let constraint = ctx.from_assignments(&all, &rows)?;
    let concrete = FiniteModule::new(&format!("{}~", job.name), &in_s, &out_s, constraint)?;

    let relation = |gs: &[GridVar], ss: &[Variable], axes: &[Vec<f64>]| -> Result<_, RefinementError> {
        let mut acc = ctx.top();
        for ((g, s), a) in gs.iter().zip(ss).zip(axes) {
            acc = acc.and(&g.quantizer.relation_predicate(ctx, a, s, &g.var)?)?;
        }
        Ok(acc)
    };
    Ok(AbstractionClaim {
        concrete,
        abstraction: abstraction.clone(),
        q_in: relation(&job.inputs, &in_s, &axes)?,
        q_out: relation(&job.outputs, &out_s, &out_axes)?,
    })
}
