//! Randomized property harnesses for composition and hiding of abstractions.
//!
//! Each trial builds random finite concrete modules (biased toward partial
//! constraints so that blocking actually happens), random strict quantizers
//! and sound abstractions, then checks that the abstraction relation survives
//! series composition or output hiding.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::module::{compose2, hide, FiniteModule};
use crate::par;
use crate::predicate::{Context, Predicate, Variable};

use super::{check_abstraction, tightest_abstraction, AbstractionClaim, CheckReport, RefinementError};

#[derive(Debug, Clone)]
pub struct HarnessOptions {
    pub trials: usize,
    /// Upper bound on the bit width of every generated variable.
    pub max_bits: u32,
    pub seed: u64,
    pub parallel: bool,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        HarnessOptions {
            trials: 1000,
            max_bits: 3,
            seed: 0,
            parallel: par::available(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositionVariant {
    /// Sound component abstractions.
    Sound,
    /// The downstream abstraction accepts some input its concrete module blocks on.
    UnsoundDownstream,
    /// The downstream concrete module is `⊥`.
    BottomDownstream,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    /// Domain sizes of the concrete variables, then the abstract ones.
    pub sizes: Vec<u64>,
    /// Whether each component abstraction passed its own check.
    pub components_ok: Vec<bool>,
    pub report: CheckReport,
    /// A component failed its own check, so the composed check is not covered
    /// by the composition guarantee.
    pub precondition_violated: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HarnessStats {
    pub trials: usize,
    pub passed: usize,
    pub failed: usize,
    pub precondition_violations: usize,
    /// Trials whose composed claim failed although every component passed.
    pub guarantee_failures: usize,
}

impl HarnessStats {
    fn merge(records: &[TrialRecord]) -> Self {
        let mut s = HarnessStats {
            trials: records.len(),
            ..Self::default()
        };
        for r in records {
            if r.passed {
                s.passed += 1;
            } else {
                s.failed += 1;
            }
            if r.precondition_violated {
                s.precondition_violations += 1;
            } else if !r.passed {
                s.guarantee_failures += 1;
            }
        }
        s
    }
}

/// Random predicate over `vars` with satisfying density drawn from [0.3, 0.7].
fn random_pred(ctx: &Context, vars: &[Variable], rng: &mut ChaCha8Rng) -> Result<Predicate, RefinementError> {
    let density: f64 = rng.gen_range(0.3..0.7);
    let mut bits = Vec::new();
    let total: u64 = vars.iter().map(|v| v.domain_size() as u64).product();
    for _ in 0..total {
        bits.push(rng.gen_bool(density));
    }
    let sizes: Vec<u64> = vars.iter().map(|v| v.domain_size() as u64).collect();
    Ok(ctx.from_fn(vars, |v| {
        let k = v.iter().zip(&sizes).fold(0u64, |acc, (&x, &n)| acc * n + x);
        bits[k as usize]
    })?)
}

/// Random strict quantizer: every concrete value relates to one abstract value,
/// sometimes two, and every abstract value is used when possible.
fn random_quantizer(ctx: &Context, w: &Variable, wh: &Variable, rng: &mut ChaCha8Rng) -> Result<Predicate, RefinementError> {
    let (n, m) = (w.domain_size() as u64, wh.domain_size() as u64);
    let mut rel = vec![Vec::new(); n as usize];
    for (c, r) in rel.iter_mut().enumerate() {
        // Monotone-ish base assignment so covers look like overlapping intervals.
        let base = (c as u64 * m) / n.max(1);
        r.push(base.min(m - 1));
        if rng.gen_bool(0.3) {
            r.push(rng.gen_range(0..m));
        }
    }
    Ok(ctx.from_fn(&[w.clone(), wh.clone()], |v| rel[v[0] as usize].contains(&v[1]))?)
}

fn random_size(rng: &mut ChaCha8Rng, max_bits: u32) -> u64 {
    rng.gen_range(1..=(1u64 << max_bits.max(1)))
}

/// Sound abstraction of `m`, possibly coarsened by blocking extra abstract
/// inputs and adding extra transitions (both preserve soundness).
fn sound_abstraction(
    name: &str,
    m: &FiniteModule,
    ai: &[Variable],
    ao: &[Variable],
    q_in: &Predicate,
    q_out: &Predicate,
    rng: &mut ChaCha8Rng,
) -> Result<FiniteModule, RefinementError> {
    let ctx = m.context();
    let tight = tightest_abstraction(name, m, ai, ao, q_in, q_out)?;
    let mut c = tight.constraint().clone();
    if rng.gen_bool(0.5) {
        let all: Vec<Variable> = ai.iter().chain(ao).cloned().collect();
        let extra = random_pred(ctx, &all, rng)?.and(&random_pred(ctx, &all, rng)?)?;
        c = c.or(&extra.and(&tight.nonblocking()?)?)?;
    }
    if rng.gen_bool(0.5) {
        let drop = random_pred(ctx, ai, rng)?.and(&random_pred(ctx, ai, rng)?)?;
        c = c.and(&drop.not()?)?;
    }
    Ok(FiniteModule::new(name, ai, ao, c)?)
}

fn run_trials<F>(opts: &HarnessOptions, sink: Option<&mut dyn Write>, trial: F) -> Result<HarnessStats, RefinementError>
where
    F: Fn(usize, u64) -> Result<TrialRecord, RefinementError> + Sync + Send,
{
    let seeds: Vec<u64> = {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        (0..opts.trials).map(|_| rng.gen()).collect()
    };
    let records = par::map_range(opts.trials, opts.parallel, |t| trial(t, seeds[t]));
    let records: Vec<TrialRecord> = records.into_iter().collect::<Result<_, _>>()?;
    if let Some(w) = sink {
        for r in &records {
            let line = serde_json::to_string(r).map_err(|e| RefinementError::Invalid(e.to_string()))?;
            writeln!(w, "{line}").map_err(|e| RefinementError::Invalid(e.to_string()))?;
        }
    }
    for r in records.iter().filter(|r| !r.passed && !r.precondition_violated) {
        log::error!(
            "trial {} (seed {}) failed: {}",
            r.trial,
            r.seed,
            serde_json::to_string(&r.report).unwrap_or_default()
        );
    }
    Ok(HarnessStats::merge(&records))
}

/// Series composition: abstractions of `M1: x → k ∪ y` and `M2: j ∪ y → z`
/// compose into an abstraction of `M1 ∘ M2` with quantizers `Qx ∧ Qj` on the
/// inputs and `Qk ∧ Qy ∧ Qz` on the outputs.
pub fn composition_harness(
    opts: &HarnessOptions,
    variant: CompositionVariant,
    sink: Option<&mut dyn Write>,
) -> Result<HarnessStats, RefinementError> {
    run_trials(opts, sink, |t, seed| composition_trial(t, seed, opts.max_bits, variant))
}

fn composition_trial(trial: usize, seed: u64, max_bits: u32, variant: CompositionVariant) -> Result<TrialRecord, RefinementError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ctx = Context::new();
    let names = ["x", "k", "y", "j", "z"];
    let sizes: Vec<u64> = (0..10).map(|_| random_size(&mut rng, max_bits)).collect();
    let conc: Vec<Variable> = names.iter().zip(&sizes).map(|(n, &s)| ctx.declare(n, s)).collect::<Result<_, _>>()?;
    let abst: Vec<Variable> = names
        .iter()
        .zip(&sizes[5..])
        .map(|(n, &s)| ctx.declare(&format!("{n}^"), s))
        .collect::<Result<_, _>>()?;
    let [x, k, y, j, z] = [0, 1, 2, 3, 4].map(|i| conc[i].clone());
    let [xh, kh, yh, jh, zh] = [0, 1, 2, 3, 4].map(|i| abst[i].clone());
    let q: Vec<Predicate> = conc
        .iter()
        .zip(&abst)
        .map(|(c, a)| random_quantizer(&ctx, c, a, &mut rng))
        .collect::<Result<_, _>>()?;
    let [qx, qk, qy, qj, qz] = [0, 1, 2, 3, 4].map(|i| q[i].clone());

    let m1 = FiniteModule::new("m1", &[x.clone()], &[k.clone(), y.clone()], random_pred(&ctx, &[x.clone(), k.clone(), y.clone()], &mut rng)?)?;
    let c2 = match variant {
        CompositionVariant::BottomDownstream => ctx.bottom(),
        _ => random_pred(&ctx, &[j.clone(), y.clone(), z.clone()], &mut rng)?,
    };
    let m2 = FiniteModule::new("m2", &[j.clone(), y.clone()], &[z.clone()], c2)?;

    let (q1_in, q1_out) = (qx.clone(), qk.and(&qy)?);
    let (q2_in, q2_out) = (qj.and(&qy)?, qz.clone());
    let a1 = sound_abstraction("m1^", &m1, &[xh.clone()], &[kh.clone(), yh.clone()], &q1_in, &q1_out, &mut rng)?;
    let mut a2 = sound_abstraction("m2^", &m2, &[jh.clone(), yh.clone()], &[zh.clone()], &q2_in, &q2_out, &mut rng)?;
    if variant == CompositionVariant::UnsoundDownstream {
        // Accept every abstract input with every output: unsound wherever m2 blocks.
        let all = ctx.domain(&[jh.clone(), yh.clone(), zh.clone()])?;
        a2 = FiniteModule::new("m2^", &[jh.clone(), yh.clone()], &[zh.clone()], all)?;
    }

    let c1 = check_abstraction(&AbstractionClaim {
        concrete: m1.clone(),
        abstraction: a1.clone(),
        q_in: q1_in,
        q_out: q1_out,
    })?;
    let c2 = check_abstraction(&AbstractionClaim {
        concrete: m2.clone(),
        abstraction: a2.clone(),
        q_in: q2_in,
        q_out: q2_out,
    })?;
    let composed = AbstractionClaim {
        concrete: compose2(&m1, &m2)?,
        abstraction: compose2(&a1, &a2)?,
        q_in: qx.and(&qj)?,
        q_out: qk.and(&qy)?.and(&qz)?,
    };
    let report = check_abstraction(&composed)?;
    if !report.passed() {
        debug_assert!(composed.replays(&report));
    }
    let components_ok = vec![c1.passed(), c2.passed()];
    let precondition_violated = components_ok.contains(&false);
    Ok(TrialRecord {
        trial,
        seed,
        sizes,
        passed: report.passed(),
        components_ok,
        report,
        precondition_violated,
    })
}

/// How many of the outputs the hiding trial quantifies away.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HideVariant {
    Some,
    None,
    All,
}

/// Output hiding: for `M̂ ⪯ M` with outputs `o1 ∪ o2`, `∃ô2 M̂ ⪯ ∃o2 M` under
/// the quantizer of `o1`.
pub fn hiding_harness(
    opts: &HarnessOptions,
    variant: HideVariant,
    sink: Option<&mut dyn Write>,
) -> Result<HarnessStats, RefinementError> {
    run_trials(opts, sink, |t, seed| hiding_trial(t, seed, opts.max_bits, variant))
}

fn hiding_trial(trial: usize, seed: u64, max_bits: u32, variant: HideVariant) -> Result<TrialRecord, RefinementError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ctx = Context::new();
    let names = ["i", "o1", "o2"];
    let sizes: Vec<u64> = (0..6).map(|_| random_size(&mut rng, max_bits)).collect();
    let conc: Vec<Variable> = names.iter().zip(&sizes).map(|(n, &s)| ctx.declare(n, s)).collect::<Result<_, _>>()?;
    let abst: Vec<Variable> = names
        .iter()
        .zip(&sizes[3..])
        .map(|(n, &s)| ctx.declare(&format!("{n}^"), s))
        .collect::<Result<_, _>>()?;
    let q: Vec<Predicate> = conc
        .iter()
        .zip(&abst)
        .map(|(c, a)| random_quantizer(&ctx, c, a, &mut rng))
        .collect::<Result<_, _>>()?;
    let m = FiniteModule::new("m", &conc[..1], &conc[1..], random_pred(&ctx, &conc, &mut rng)?)?;
    let q_out = q[1].and(&q[2])?;
    let a = sound_abstraction("m^", &m, &abst[..1], &abst[1..], &q[0], &q_out, &mut rng)?;
    let base = check_abstraction(&AbstractionClaim {
        concrete: m.clone(),
        abstraction: a.clone(),
        q_in: q[0].clone(),
        q_out: q_out.clone(),
    })?;

    let (hidden, kept_q): (Vec<usize>, Predicate) = match variant {
        HideVariant::Some => (vec![2], q[1].clone()),
        HideVariant::None => (vec![], q_out.clone()),
        HideVariant::All => (vec![1, 2], ctx.top()),
    };
    let wc: Vec<Variable> = hidden.iter().map(|&h| conc[h].clone()).collect();
    let wa: Vec<Variable> = hidden.iter().map(|&h| abst[h].clone()).collect();
    let claim = AbstractionClaim {
        concrete: hide(&m, &wc)?,
        abstraction: hide(&a, &wa)?,
        q_in: q[0].clone(),
        q_out: kept_q,
    };
    let report = check_abstraction(&claim)?;
    Ok(TrialRecord {
        trial,
        seed,
        sizes,
        passed: report.passed(),
        components_ok: vec![base.passed()],
        precondition_violated: !base.passed(),
        report,
    })
}
