//! Acceptance suite: one test per criterion, each printing a single
//! `PASS`/`FAIL` line with its wall time against the allowed budget.
//!
//! Criteria run one at a time (a shared lock) so the reported times are not
//! inflated by each other.

use std::collections::BTreeSet;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use compabs::abstractor::{abstract_module, AbstractOptions, AbstractionError, AbstractionJob, GridVar};
use compabs::expr::{parse, Interval, Oracle};
use compabs::grid::Quantizer;
use compabs::module::{as_control, compose2, from_relation, hide};
use compabs::pipeline::bench::bench_spec;
use compabs::pipeline::{parse_spec, run_monolithic, PipelineError, PipelineOptions, Session};
use compabs::predicate::{Context, Predicate, Variable};
use compabs::refinement::{
    check_abstraction, finitize, composition_harness, hiding_harness, HarnessOptions, HideVariant, CompositionVariant,
};
use compabs::synthesis::{safety_closed, solve_reach, solve_safety};

static SERIAL: Mutex<()> = Mutex::new(());

/// Runs one criterion and prints its verdict line; panics on failure or when
/// the budget is exceeded.
fn criterion(name: &str, budget: Duration, body: impl FnOnce() -> Result<String, String>) {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(body));
    let elapsed = start.elapsed();
    let outcome = match outcome {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    };
    let outcome = outcome.and_then(|detail| {
        if elapsed <= budget {
            Ok(detail)
        } else {
            Err(format!("{detail}; over budget"))
        }
    });
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d.as_str()),
        Err(d) => ("FAIL", d.as_str()),
    };
    println!(
        "{tag} {name} [{:.2}s / {:.0}s] {detail}",
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    if let Err(e) = outcome {
        panic!("{name}: {e}");
    }
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn sequential_opts() -> AbstractOptions {
    AbstractOptions {
        parallel: false,
        ..AbstractOptions::default()
    }
}

/// Integer variable over `[lo, hi]`; value index `k` stands for `lo + k`.
fn int_var(ctx: &Context, name: &str, lo: i64, hi: i64) -> Variable {
    ctx.declare(name, (hi - lo + 1) as u64).unwrap()
}

/// `|out − f| ≤ 1/2` for a defined `f`.
fn rounds_to(out: i64, f: Option<f64>) -> bool {
    matches!(f, Some(y) if (out as f64 - y).abs() <= 0.5)
}

#[test]
fn sqrt_composition_example() {
    criterion("sqrt-composition", secs(1), || {
        let ctx = Context::new();
        let x = int_var(&ctx, "x", -4, 8);
        let y = int_var(&ctx, "y", -6, 10);
        let z = int_var(&ctx, "z", 0, 4);
        let m1 = from_relation(&ctx, "m1", &[x.clone()], &[y.clone()], |v| {
            ((v[1] as i64 - 6) - (v[0] as i64 - 4)).abs() <= 2
        })
        .unwrap();
        let m2 = from_relation(&ctx, "m2", &[y.clone()], &[z.clone()], |v| {
            let yv = v[0] as i64 - 6;
            rounds_to(v[1] as i64, (yv >= 0).then(|| (yv as f64).sqrt()))
        })
        .unwrap();
        let nb = compose2(&m1, &m2).unwrap().nonblocking().unwrap();
        let want = ctx.from_fn(&[x.clone()], |v| v[0] as i64 - 4 >= 2).unwrap();
        ensure(nb.equivalent(&want).unwrap(), "NB(M1 * M2) differs from x >= 2")?;
        Ok("NB(M1*M2) = (x >= 2)".into())
    });
}

fn identity_var(ctx: &Context, name: &str, lo: i64, hi: i64) -> GridVar {
    let q = Quantizer::identity(name, (lo..=hi).map(|v| v as f64).collect()).unwrap();
    GridVar {
        var: ctx.declare(name, q.cell_count() as u64).unwrap(),
        quantizer: q,
    }
}

fn tiling_var(ctx: &Context, name: &str, lo: f64, hi: f64, cells: usize) -> GridVar {
    let q = Quantizer::tiling(name, lo, hi, cells).unwrap();
    GridVar {
        var: ctx.declare(name, cells as u64).unwrap(),
        quantizer: q,
    }
}

#[test]
fn nonblocking_identities() {
    criterion("nonblocking-identities", secs(1), || {
        let ctx = Context::new();
        let x = identity_var(&ctx, "x", -4, 8);
        let z = tiling_var(&ctx, "z", 0.0, 4.0, 4);
        let job = AbstractionJob {
            name: "sqrt".into(),
            inputs: vec![x.clone()],
            outputs: vec![z],
            oracle: Oracle::interval(&["x"], vec![parse("sqrt(x)").unwrap()]).unwrap(),
            band: vec![],
        };
        let (m, _) = abstract_module(&ctx, &job, &sequential_opts()).unwrap();
        let want = ctx.from_fn(&[x.var.clone()], |v| v[0] as i64 - 4 >= 0).unwrap();
        ensure(m.nonblocking().unwrap().equivalent(&want).unwrap(), "NB(sqrt) differs from x >= 0")?;

        let a = identity_var(&ctx, "a", -3, 3);
        let b = identity_var(&ctx, "b", -3, 3);
        let q = tiling_var(&ctx, "q", -3.0, 3.0, 6);
        let job = AbstractionJob {
            name: "div".into(),
            inputs: vec![a, b.clone()],
            outputs: vec![q],
            oracle: Oracle::interval(&["a", "b"], vec![parse("a / b").unwrap()]).unwrap(),
            band: vec![],
        };
        let (m, _) = abstract_module(&ctx, &job, &sequential_opts()).unwrap();
        let want = ctx.from_fn(&[b.var.clone()], |v| v[0] as i64 - 3 != 0).unwrap();
        ensure(m.nonblocking().unwrap().equivalent(&want).unwrap(), "NB(div) differs from y != 0")?;
        Ok("NB(sqrt) = (x >= 0), NB(div) = (y != 0)".into())
    });
}

#[test]
fn composed_nonblocking_formula() {
    criterion("composed-nonblocking-formula", secs(30), || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..1000 {
            let ctx = Context::new();
            let sizes: Vec<u64> = (0..4).map(|_| rng.gen_range(1..=8)).collect();
            let [x, j, y, z] = ["x", "j", "y", "z"].map(|n| n.to_string());
            let vars: Vec<Variable> = [&x, &j, &y, &z]
                .iter()
                .zip(&sizes)
                .map(|(n, &s)| ctx.declare(n, s).unwrap())
                .collect();
            let (d1, d2) = (rng.gen_range(0.2..0.9), rng.gen_range(0.2..0.9));
            let t1: Vec<bool> = (0..sizes[0] * sizes[2]).map(|_| rng.gen_bool(d1)).collect();
            let t2: Vec<bool> = (0..sizes[1] * sizes[2] * sizes[3]).map(|_| rng.gen_bool(d2)).collect();
            let r1 = |xv: u64, yv: u64| t1[(xv * sizes[2] + yv) as usize];
            let r2 = |jv: u64, yv: u64, zv: u64| t2[((jv * sizes[2] + yv) * sizes[3] + zv) as usize];
            let m1 = from_relation(&ctx, "m1", &[vars[0].clone()], &[vars[2].clone()], |v| r1(v[0], v[1])).unwrap();
            let m2 = from_relation(&ctx, "m2", &[vars[1].clone(), vars[2].clone()], &[vars[3].clone()], |v| {
                r2(v[0], v[1], v[2])
            })
            .unwrap();
            let nb = compose2(&m1, &m2).unwrap().nonblocking().unwrap();

            // ∃o12 (M1 ∧ M2) ∧ ∀o12 (M1 ⟹ NB_M2), with o12 = {y, z}.
            let o12 = [vars[2].clone(), vars[3].clone()];
            let both = m1.constraint().and(m2.constraint()).unwrap().exists(&o12).unwrap();
            let guard = m1.constraint().implies(&m2.nonblocking().unwrap()).unwrap().forall(&o12).unwrap();
            let formula = both.and(&guard).unwrap();
            ensure(nb.equivalent(&formula).unwrap(), format!("trial {trial}: formula mismatch"))?;

            // Independent enumeration of the same set.
            let ins = [vars[0].clone(), vars[1].clone()];
            let rows = nb.enumerate_sat(&ins).unwrap();
            let mut want = Vec::new();
            for xv in 0..sizes[0] {
                for jv in 0..sizes[1] {
                    let some = (0..sizes[2]).any(|yv| r1(xv, yv) && (0..sizes[3]).any(|zv| r2(jv, yv, zv)));
                    let all = (0..sizes[2]).all(|yv| !r1(xv, yv) || (0..sizes[3]).any(|zv| r2(jv, yv, zv)));
                    if some && all {
                        want.push(vec![xv, jv]);
                    }
                }
            }
            ensure(rows == want, format!("trial {trial}: enumeration mismatch"))?;
        }
        Ok("1000 random pairs agree".into())
    });
}

#[test]
fn series_composition_harness() {
    criterion("series-composition-harness", secs(300), || {
        let opts = HarnessOptions {
            trials: 1000,
            seed: 2,
            ..HarnessOptions::default()
        };
        let s = composition_harness(&opts, CompositionVariant::Sound, None).map_err(|e| e.to_string())?;
        ensure(s.trials == 1000, format!("{} trials ran", s.trials))?;
        ensure(
            s.failed == 0 && s.guarantee_failures == 0 && s.precondition_violations == 0,
            format!("{s:?}"),
        )?;
        Ok(format!("{} trials, 0 failures", s.trials))
    });
}

#[test]
fn output_hiding_harness() {
    criterion("output-hiding-harness", secs(120), || {
        let mut total = 0;
        for (k, (v, trials)) in [(HideVariant::Some, 400), (HideVariant::None, 300), (HideVariant::All, 300)]
            .into_iter()
            .enumerate()
        {
            let opts = HarnessOptions {
                trials,
                seed: 3 + k as u64,
                ..HarnessOptions::default()
            };
            let s = hiding_harness(&opts, v, None).map_err(|e| e.to_string())?;
            ensure(s.failed == 0 && s.guarantee_failures == 0, format!("{v:?}: {s:?}"))?;
            total += s.trials;
        }
        ensure(total == 1000, format!("{total} trials ran"))?;
        Ok(format!("{total} trials, 0 failures"))
    });
}

/// A random nondecreasing scalar expression and its domain.
fn random_monotone(rng: &mut ChaCha8Rng) -> (String, f64, f64) {
    let lo = rng.gen_range(-4.0..4.0f64).round();
    let hi = lo + rng.gen_range(2.0..12.0f64).round();
    let a = rng.gen_range(0.1..2.0f64);
    let b = rng.gen_range(-3.0..3.0f64);
    let e = match rng.gen_range(0..5) {
        0 => format!("{a} * x + {b}"),
        1 => format!("glog(-5, 5, {}, {a} * x + {b})", rng.gen_range(0.2..2.0f64)),
        2 => format!("sqrt({a} * (x - {lo}) + 0.5) + {b}"),
        3 => format!("exp({} * x) + {b}", rng.gen_range(0.05..0.3f64)),
        _ => format!("min({a} * x, {b}) + max(x, {})", lo + 1.0),
    };
    (e, lo, hi)
}

#[test]
fn grid_abstraction_soundness() {
    criterion("grid-abstraction-soundness", secs(300), || {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut blocking = 0;
        for sys in 0..50 {
            let (e, lo, hi) = random_monotone(&mut rng);
            let ctx = Context::new();
            let x = tiling_var(&ctx, "x", lo, hi, rng.gen_range(4..=64));
            // Exact range at the ends, widened (or, sometimes, cut short).
            let expr = parse(&e).unwrap();
            let f = |v: f64| expr.eval(&[("x".to_string(), v)].into()).unwrap().real().unwrap();
            let (flo, fhi) = (f(lo), f(hi));
            let pad = (fhi - flo).max(1.0) * rng.gen_range(-0.1..0.3);
            let y = tiling_var(&ctx, "y", flo - pad.abs(), fhi + pad, rng.gen_range(4..=64));
            let dom = [Interval::new(lo, hi)];
            let job = AbstractionJob {
                name: format!("sys{sys}"),
                inputs: vec![x],
                outputs: vec![y],
                oracle: Oracle::monotone(&["x"], vec![expr.clone()], &dom, sys).map_err(|err| format!("{e}: {err}"))?,
                band: vec![],
            };
            let (m, stats) = abstract_module(&ctx, &job, &AbstractOptions::default()).unwrap();
            blocking += stats.blocking;
            let claim = finitize(&ctx, &job, &m, 10).map_err(|err| err.to_string())?;
            let r = check_abstraction(&claim).map_err(|err| err.to_string())?;
            ensure(r.passed(), format!("system {sys} ({e}): {r:?}"))?;
        }
        Ok(format!("50 systems sound ({blocking} blocking cells in total)"))
    });
}

#[test]
fn gain_inverse_adds_nondeterminism() {
    criterion("gain-inverse", secs(10), || {
        // Concrete: integer grids, relations from the exact gains.
        let ctx = Context::new();
        let x = int_var(&ctx, "x", -4, 4);
        let y = int_var(&ctx, "y", -12, 12);
        let z = int_var(&ctx, "z", -4, 4);
        let g3 = from_relation(&ctx, "g3", &[x.clone()], &[y.clone()], |v| {
            rounds_to(v[1] as i64 - 12, Some(3.0 * (v[0] as i64 - 4) as f64))
        })
        .unwrap();
        let g13 = from_relation(&ctx, "g13", &[y.clone()], &[z.clone()], |v| {
            rounds_to(v[1] as i64 - 4, Some((v[0] as i64 - 12) as f64 / 3.0))
        })
        .unwrap();
        let concrete = hide(&compose2(&g3, &g13).unwrap(), &[y.clone()]).unwrap();
        ensure(
            concrete.constraint().equivalent(&ctx.eq_vars(&z, &x).unwrap()).unwrap(),
            "concrete compose+hide is not z == x",
        )?;

        // Abstract: unit cells on [-4, 4] and [-12, 12].
        let ctx = Context::new();
        let xa = tiling_var(&ctx, "x", -4.0, 4.0, 8);
        let ya = tiling_var(&ctx, "y", -12.0, 12.0, 24);
        let za = tiling_var(&ctx, "z", -4.0, 4.0, 8);
        let gain = |name: &str, i: &GridVar, o: &GridVar, e: &str| AbstractionJob {
            name: name.into(),
            inputs: vec![i.clone()],
            outputs: vec![o.clone()],
            oracle: Oracle::interval(&[i.quantizer.var()], vec![parse(e).unwrap()]).unwrap(),
            band: vec![],
        };
        let (a3, _) = abstract_module(&ctx, &gain("g3", &xa, &ya, "3 * x"), &sequential_opts()).unwrap();
        let (a13, _) = abstract_module(&ctx, &gain("g13", &ya, &za, "y / 3"), &sequential_opts()).unwrap();
        let composed = hide(&compose2(&a3, &a13).unwrap(), &[ya.var.clone()]).unwrap();
        let ident = ctx.eq_vars(&za.var, &xa.var).unwrap();
        let c = composed.constraint();
        ensure(ident.entails(c).unwrap(), "abstract identity is not contained")?;
        ensure(!c.entails(&ident).unwrap(), "containment is not strict")?;
        let vars = [xa.var.clone(), za.var.clone()];
        Ok(format!(
            "{} abstract transitions vs {} for the identity",
            c.count_sat(&vars).unwrap(),
            ident.count_sat(&vars).unwrap()
        ))
    });
}

fn load_bench(n: usize) -> Session {
    let text = serde_json::to_string(&bench_spec(n)).unwrap();
    Session::new(parse_spec(&text).unwrap()).unwrap()
}

/// Compositional vs monolithic at desk scale, in one predicate context.
fn bench_desk(n: usize) -> Result<String, String> {
    let s = load_bench(n);
    let opts = PipelineOptions::default();
    let t = Instant::now();
    let comp = s.compositional(&opts).map_err(|e| e.to_string())?;
    let comp_secs = t.elapsed().as_secs_f64();
    ensure(comp_secs < 60.0, format!("compositional run took {comp_secs:.1}s"))?;

    let (mono, stats) = s.monolithic(&opts).map_err(|e| e.to_string())?;
    let expected = (32u128 * 4).pow(n as u32);
    ensure(stats.cells == expected, format!("monolithic traversed {} cells, expected {expected}", stats.cells))?;
    let module_cells: u128 = comp.modules.iter().map(|m| m.1.cells).sum();
    let closed_form = n as u128 * 32 * 4 * 32
        + s.spec.spec.modules[n..]
            .iter()
            .map(|m| 32u128.pow(m.inputs.len() as u32))
            .sum::<u128>();
    ensure(module_cells == closed_form, "compositional cell count differs from the closed form")?;

    let c = &comp.composed;
    ensure(
        c.inputs().iter().map(|v| v.id()).collect::<BTreeSet<_>>()
            == mono.inputs().iter().map(|v| v.id()).collect::<BTreeSet<_>>(),
        "interfaces differ",
    )?;
    let (nb_c, nb_m) = (c.nonblocking().unwrap(), mono.nonblocking().unwrap());
    ensure(nb_c.entails(&nb_m).unwrap(), "compositional blocking set misses a monolithic blocking input")?;
    let joint = nb_c.and(&nb_m).unwrap();
    ensure(
        mono.constraint().and(&joint).unwrap().entails(c.constraint()).unwrap(),
        "a monolithic transition is missing from the compositional abstraction",
    )?;
    Ok(format!(
        "compositional {:.2}s, {} vs {} transitions, {} monolithic cells",
        comp_secs,
        c.transition_count().unwrap(),
        mono.transition_count().unwrap(),
        stats.cells
    ))
}

#[test]
fn benchmark_desk_scale() {
    criterion("benchmark-n2", secs(120), || bench_desk(2));
    criterion("benchmark-n3", secs(180), || bench_desk(3));
}

#[test]
fn benchmark_n6_compositional() {
    criterion("benchmark-n6-compositional", secs(1800), || {
        let s = load_bench(6);
        let comp = s.compositional(&PipelineOptions::default()).map_err(|e| e.to_string())?;
        ensure(comp.modules.len() == 9, format!("{} modules", comp.modules.len()))?;
        let t = comp.composed.transition_count().unwrap();
        ensure((1e13..=1e16).contains(&(t as f64)), format!("{t} transitions"))?;
        Ok(format!("{t} transitions ({:.2e}), peak {} nodes", t as f64, s.ctx.peak_nodes()))
    });
}

#[test]
fn benchmark_n6_monolithic_exceeds_budget() {
    criterion("benchmark-n6-monolithic-budget", secs(660), || {
        let spec = parse_spec(&serde_json::to_string(&bench_spec(6)).unwrap()).unwrap();
        let opts = PipelineOptions {
            deadline: Some(Instant::now() + secs(600)),
            ..PipelineOptions::default()
        };
        match run_monolithic(&spec, &opts) {
            Err(PipelineError::Abstraction {
                source: AbstractionError::TimeBudgetExceeded { cells_done, cells_total },
                ..
            }) => {
                ensure(cells_total == 128u128.pow(6), format!("{cells_total} cells in total"))?;
                Ok(format!("stopped after {cells_done} of {cells_total} cells"))
            }
            Err(e) => Err(format!("unexpected error: {e}")),
            Ok(_) => Err("monolithic run finished within the budget".into()),
        }
    });
}

#[test]
fn synthesis_on_three_states() {
    criterion("synthesis-three-states", secs(1), || {
        // 0 -a-> {1}, 0 -b-> {0, 2}; 1 -a-> {1}, 1 -b-> {}; 2 -a-> {2}, 2 -b-> {0}
        let edges: [[&[u64]; 2]; 3] = [[&[1], &[0, 2]], [&[1], &[]], [&[2], &[0]]];
        let ctx = Context::new();
        let v = ctx.declare_interleaved(&[("x", 3), ("x'", 3)]).unwrap();
        let (x, xp) = (v[0].clone(), v[1].clone());
        let u = ctx.declare("u", 2).unwrap();
        let f = from_relation(&ctx, "f", &[x.clone(), u.clone()], &[xp.clone()], |a| {
            edges[a[0] as usize][a[1] as usize].contains(&a[2])
        })
        .unwrap();
        let sys = as_control(&f, &[(x.clone(), xp)]).unwrap();
        let states = |p: &Predicate| -> Vec<u64> { p.enumerate_sat(&[x.clone()]).unwrap().into_iter().map(|r| r[0]).collect() };
        let set = |s: &[u64]| ctx.in_set(&x, s).unwrap();
        let cpre_ok = |s: usize, w: &[u64]| {
            (0..2).any(|a| {
                let succ = edges[s][a];
                !succ.is_empty() && succ.iter().all(|y| w.contains(y))
            })
        };

        for safe in [vec![0, 1], vec![0, 2], vec![1, 2], vec![0, 1, 2], vec![2]] {
            let mut w = safe.clone();
            loop {
                let next: Vec<u64> = w.iter().copied().filter(|&s| cpre_ok(s as usize, &w)).collect();
                if next == w {
                    break;
                }
                w = next;
            }
            let c = solve_safety(&sys, &set(&safe)).unwrap();
            ensure(states(&c.domain) == w, format!("safety {safe:?}: {:?} vs {w:?}", states(&c.domain)))?;
            ensure(safety_closed(&sys, &c, &set(&safe)).unwrap(), format!("safety {safe:?} not closed"))?;
        }

        for target in [vec![1], vec![2], vec![0], vec![1, 2]] {
            let mut w = target.clone();
            loop {
                let fresh: Vec<u64> = (0..3u64).filter(|s| !w.contains(s) && cpre_ok(*s as usize, &w)).collect();
                if fresh.is_empty() {
                    break;
                }
                w.extend(fresh);
                w.sort();
            }
            let c = solve_reach(&sys, &set(&target)).unwrap();
            ensure(states(&c.domain) == w, format!("reach {target:?}: {:?} vs {w:?}", states(&c.domain)))?;
            for row in c.predicate.enumerate_sat(&[x.clone(), u.clone()]).unwrap() {
                let k = c.step_index(&[row[0]]).unwrap();
                if k == 0 {
                    continue;
                }
                let succ = edges[row[0] as usize][row[1] as usize];
                ensure(!succ.is_empty(), "policy picks a blocking control")?;
                for &y in succ {
                    ensure(
                        matches!(c.step_index(&[y]), Some(j) if j < k),
                        format!("reach {target:?}: no progress from {}", row[0]),
                    )?;
                }
            }
        }
        Ok("safety and reach domains match the game iteration".into())
    });
}

fn brute_count(p: &Predicate, vars: &[Variable]) -> u128 {
    let sizes: Vec<u64> = vars.iter().map(|v| v.domain_size() as u64).collect();
    let total: u64 = sizes.iter().product();
    let ids: Vec<_> = vars.iter().map(|v| v.id()).collect();
    (0..total)
        .filter(|&k| {
            let mut vals = vec![0u64; sizes.len()];
            let mut r = k;
            for (slot, &s) in vals.iter_mut().zip(&sizes).rev() {
                *slot = r % s;
                r /= s;
            }
            p.eval(|id| ids.iter().position(|&i| i == id).map_or(0, |k| vals[k]))
        })
        .count() as u128
}

#[test]
fn predicate_engine_laws() {
    criterion("predicate-laws", secs(30), || {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for case in 0..300 {
            let ctx = Context::new();
            // Up to 12 bits in total, mostly non-power-of-two domains.
            let mut vars = Vec::new();
            let mut bits = 0;
            while vars.len() < 4 {
                let size: u64 = rng.gen_range(1..=12);
                let w = 64 - (size.max(2) - 1).leading_zeros();
                if bits + w > 12 {
                    break;
                }
                bits += w;
                vars.push(ctx.declare(&format!("v{}", vars.len()), size).unwrap());
            }
            let total: u128 = vars.iter().map(|v| v.domain_size()).product();
            let (da, db) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let a = ctx.from_fn(&vars, |_| rng.gen_bool(da)).unwrap();
            let b = ctx.from_fn(&vars, |_| rng.gen_bool(db)).unwrap();
            let q = &vars[..rng.gen_range(1..=vars.len())];

            // Quantifier duality.
            let lhs = a.exists(q).unwrap().not().unwrap();
            let rhs = a.not().unwrap().forall(q).unwrap();
            ensure(lhs.equivalent(&rhs).unwrap(), format!("case {case}: ¬∃ ≠ ∀¬"))?;
            let lhs = a.forall(q).unwrap().not().unwrap();
            let rhs = a.not().unwrap().exists(q).unwrap();
            ensure(lhs.equivalent(&rhs).unwrap(), format!("case {case}: ¬∀ ≠ ∃¬"))?;

            // Inclusion–exclusion, against enumeration.
            let (ca, cb) = (a.count_sat(&vars).unwrap(), b.count_sat(&vars).unwrap());
            let cor = a.or(&b).unwrap().count_sat(&vars).unwrap();
            let cand = a.and(&b).unwrap().count_sat(&vars).unwrap();
            ensure(cor + cand == ca + cb, format!("case {case}: inclusion-exclusion"))?;
            ensure(ca == brute_count(&a, &vars) && cand == brute_count(&a.and(&b).unwrap(), &vars), format!("case {case}: count"))?;

            // Padding codes are never satisfying.
            ensure(a.not().unwrap().count_sat(&vars).unwrap() == total - ca, format!("case {case}: padding in ¬a"))?;
            ensure(ctx.top().count_sat(&vars).unwrap() == total, format!("case {case}: padding in ⊤"))?;
            let ex = a.not().unwrap().exists(q).unwrap();
            let rest: Vec<Variable> = vars[q.len()..].to_vec();
            ensure(ex.count_sat(&rest).unwrap() == brute_count(&ex, &rest), format!("case {case}: padding in ∃"))?;
        }
        Ok("300 random predicates, up to 12 bits".into())
    });
}
