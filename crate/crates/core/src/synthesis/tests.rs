use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::module::{as_control, from_relation};
use crate::predicate::Context;

/// Explicit system: `edges[x][u]` lists the successors (empty = blocking).
struct Explicit {
    n: u64,
    m: u64,
    edges: Vec<Vec<Vec<u64>>>,
}

fn build(ctx: &Context, e: &Explicit) -> ControlModule {
    let x = ctx.declare("x", e.n).unwrap();
    let u = ctx.declare("u", e.m).unwrap();
    let xp = ctx.declare("x'", e.n).unwrap();
    let f = from_relation(ctx, "f", &[x.clone(), u], &[xp.clone()], |v| {
        e.edges[v[0] as usize][v[1] as usize].contains(&v[2])
    })
    .unwrap();
    as_control(&f, &[(x, xp)]).unwrap()
}

fn states_of(c: &Context, p: &Predicate) -> Vec<u64> {
    let x = c.var("x").unwrap();
    p.enumerate_sat(&[x]).unwrap().into_iter().map(|r| r[0]).collect()
}

fn set(ctx: &Context, xs: &[u64]) -> Predicate {
    ctx.in_set(&ctx.var("x").unwrap(), xs).unwrap()
}

fn random_explicit(seed: u64) -> Explicit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=16u64);
    let m = rng.gen_range(1..=4u64);
    let d: f64 = rng.gen_range(0.05..0.4);
    let edges = (0..n)
        .map(|_| (0..m).map(|_| (0..n).filter(|_| rng.gen_bool(d)).collect()).collect())
        .collect();
    Explicit { n, m, edges }
}

/// Explicit game iteration for safety.
fn brute_safety(e: &Explicit, safe: &[bool]) -> Vec<u64> {
    let mut w: Vec<bool> = safe.to_vec();
    loop {
        let next: Vec<bool> = (0..e.n as usize)
            .map(|x| {
                safe[x]
                    && (0..e.m as usize).any(|u| {
                        let s = &e.edges[x][u];
                        !s.is_empty() && s.iter().all(|&y| w[y as usize])
                    })
            })
            .collect();
        if next == w {
            return (0..e.n).filter(|&x| w[x as usize]).collect();
        }
        w = next;
    }
}

#[test]
fn pre_of_top_and_bottom() {
    let ctx = Context::new();
    let sys = build(
        &ctx,
        &Explicit {
            n: 3,
            m: 2,
            edges: vec![vec![vec![1], vec![]], vec![vec![0, 2], vec![2]], vec![vec![], vec![]]],
        },
    );
    let nb = sys.module().nonblocking().unwrap();
    assert!(controlled_pre(&sys, &ctx.top()).unwrap().equivalent(&nb).unwrap());
    assert!(controlled_pre(&sys, &ctx.bottom()).unwrap().is_unsat());
}

#[test]
fn pre_on_two_state_toy() {
    // 0 -u0-> {0, 1}, 0 -u1-> {1}, 1 -u0-> {}, 1 -u1-> {0}
    let e = Explicit {
        n: 2,
        m: 2,
        edges: vec![vec![vec![0, 1], vec![1]], vec![vec![], vec![0]]],
    };
    let ctx = Context::new();
    let sys = build(&ctx, &e);
    let (x, u) = (ctx.var("x").unwrap(), ctx.var("u").unwrap());
    for z in [vec![0], vec![1], vec![0, 1]] {
        let pre = controlled_pre(&sys, &set(&ctx, &z)).unwrap();
        let got = pre.enumerate_sat(&[x.clone(), u.clone()]).unwrap();
        let mut expect = Vec::new();
        for xs in 0..2u64 {
            for us in 0..2u64 {
                let s = &e.edges[xs as usize][us as usize];
                if !s.is_empty() && s.iter().all(|y| z.contains(y)) {
                    expect.push(vec![xs, us]);
                }
            }
        }
        assert_eq!(got, expect, "Z = {z:?}");
    }
}

#[test]
fn safety_examples() {
    let ctx = Context::new();
    let loops = build(
        &ctx,
        &Explicit {
            n: 3,
            m: 1,
            edges: vec![vec![vec![0]], vec![vec![1]], vec![vec![2]]],
        },
    );
    let c = solve_safety(&loops, &ctx.top()).unwrap();
    assert_eq!(c.domain_size().unwrap(), 3);
    assert!(solve_safety(&loops, &ctx.bottom()).unwrap().domain.is_unsat());

    // State 1 can only leave Safe = {0, 1}; state 0 can stay.
    let ctx = Context::new();
    let sys = build(
        &ctx,
        &Explicit {
            n: 3,
            m: 2,
            edges: vec![vec![vec![0], vec![1]], vec![vec![2], vec![2]], vec![vec![2], vec![2]]],
        },
    );
    let safe = set(&ctx, &[0, 1]);
    let c = solve_safety(&sys, &safe).unwrap();
    assert_eq!(states_of(&ctx, &c.domain), vec![0]);
    // Only u = 0 keeps state 0 safe.
    let rows = c.predicate.enumerate_sat(&[ctx.var("x").unwrap(), ctx.var("u").unwrap()]).unwrap();
    assert_eq!(rows, vec![vec![0, 0]]);
    assert!(safety_closed(&sys, &c, &safe).unwrap());
}

#[test]
fn reach_examples() {
    let ctx = Context::new();
    // chain 0 -> 1 -> 2, island 3 (self loop), 2 stays.
    let sys = build(
        &ctx,
        &Explicit {
            n: 4,
            m: 2,
            edges: vec![
                vec![vec![1], vec![3]],
                vec![vec![0], vec![2]],
                vec![vec![2], vec![2]],
                vec![vec![3], vec![3]],
            ],
        },
    );
    let target = set(&ctx, &[2]);
    let c = solve_reach(&sys, &target).unwrap();
    assert_eq!(states_of(&ctx, &c.domain), vec![0, 1, 2]);
    let rows = c.predicate.enumerate_sat(&[ctx.var("x").unwrap(), ctx.var("u").unwrap()]).unwrap();
    assert_eq!(rows, vec![vec![0, 0], vec![1, 1], vec![2, 0]]);
    assert_eq!(c.step_index(&[0]), Some(2));
    assert_eq!(c.step_index(&[1]), Some(1));
    assert_eq!(c.step_index(&[2]), Some(0));
    assert_eq!(c.step_index(&[3]), None);

    let all = solve_reach(&sys, &ctx.top()).unwrap();
    assert_eq!(all.domain_size().unwrap(), 4);
    assert_eq!(all.levels.len(), 1);
}

#[test]
fn refine_with_identity_quantizer() {
    let ctx = Context::new();
    let sys = build(
        &ctx,
        &Explicit {
            n: 3,
            m: 2,
            edges: vec![vec![vec![0], vec![1]], vec![vec![2], vec![2]], vec![vec![2], vec![2]]],
        },
    );
    let c = solve_safety(&sys, &set(&ctx, &[0, 1])).unwrap();
    let q = Quantizer::identity("x", vec![10.0, 20.0, 30.0]).unwrap();
    let r = refine_controller(&c, &[q]).unwrap();
    assert_eq!(r.admissible(&[10.0]).unwrap(), vec![vec![0]]);
    assert!(matches!(r.admissible(&[20.0]), Err(SynthesisError::OutOfControllerDomain { .. })));
    assert!(matches!(r.admissible(&[15.0]), Err(SynthesisError::OutOfGrid(_))));
}

#[test]
fn refine_intersects_on_cell_boundaries() {
    let ctx = Context::new();
    // Two cells; cell 0 allows u ∈ {0, 1}, cell 1 allows u = 1 only, or nothing
    // in common in the second system.
    for (edges, at_boundary) in [
        (vec![vec![vec![0], vec![0]], vec![vec![], vec![1]]], Some(vec![vec![1]])),
        (vec![vec![vec![0], vec![]], vec![vec![], vec![1]]], None),
    ] {
        let ctx2 = Context::new();
        let sys = build(&ctx2, &Explicit { n: 2, m: 2, edges });
        let c = solve_safety(&sys, &ctx2.top()).unwrap();
        let q = Quantizer::tiling("x", 0.0, 2.0, 2).unwrap();
        let r = refine_controller(&c, &[q]).unwrap();
        match at_boundary {
            Some(u) => assert_eq!(r.admissible(&[1.0]).unwrap(), u),
            None => assert!(matches!(r.admissible(&[1.0]), Err(SynthesisError::OutOfControllerDomain { .. }))),
        }
        assert!(r.admissible(&[0.5]).is_ok());
        assert!(matches!(r.admissible(&[2.5]), Err(SynthesisError::OutOfGrid(_))));
    }
    let _ = ctx;
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn safety_matches_game_iteration(seed in any::<u64>(), mask in any::<u16>()) {
        let e = random_explicit(seed);
        let ctx = Context::new();
        let sys = build(&ctx, &e);
        let safe_v: Vec<bool> = (0..e.n).map(|x| mask >> x & 1 == 1).collect();
        let safe_set: Vec<u64> = (0..e.n).filter(|&x| safe_v[x as usize]).collect();
        let safe = set(&ctx, &safe_set);
        let c = solve_safety(&sys, &safe).unwrap();
        prop_assert_eq!(states_of(&ctx, &c.domain), brute_safety(&e, &safe_v));
        prop_assert!(safety_closed(&sys, &c, &safe).unwrap());
        // Monotone in Safe.
        let bigger = safe.or(&set(&ctx, &[0])).unwrap();
        let c2 = solve_safety(&sys, &bigger).unwrap();
        prop_assert!(c.domain.entails(&c2.domain).unwrap());
    }

    #[test]
    fn reach_policy_makes_progress(seed in any::<u64>(), t in 0u64..16) {
        let e = random_explicit(seed);
        let ctx = Context::new();
        let sys = build(&ctx, &e);
        let target = set(&ctx, &[t % e.n]);
        let c = solve_reach(&sys, &target).unwrap();
        let (x, u, xp) = (ctx.var("x").unwrap(), ctx.var("u").unwrap(), ctx.var("x'").unwrap());
        let rows = c.predicate.enumerate_sat(&[x.clone(), u.clone()]).unwrap();
        // Deterministic policy: one control per state.
        let mut seen = std::collections::BTreeSet::new();
        for r in &rows {
            prop_assert!(seen.insert(r[0]));
        }
        for r in rows {
            let k = c.step_index(&[r[0]]).unwrap();
            if k == 0 {
                continue;
            }
            let succ = &e.edges[r[0] as usize][r[1] as usize];
            prop_assert!(!succ.is_empty());
            for &y in succ {
                let j = c.step_index(&[y]);
                prop_assert!(matches!(j, Some(j) if j < k), "x={} u={} y={} k={} j={:?}", r[0], r[1], y, k, j);
            }
            // Smallest admissible control at first entry.
            for smaller in 0..r[1] {
                let s = &e.edges[r[0] as usize][smaller as usize];
                let ok = !s.is_empty() && s.iter().all(|&y| matches!(c.step_index(&[y]), Some(j) if j < k));
                prop_assert!(!ok);
            }
        }
        let _ = xp;
    }
}
