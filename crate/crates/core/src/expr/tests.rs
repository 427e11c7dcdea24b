use std::collections::HashMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn env(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn v(n: &str) -> Box<Expr> {
    Box::new(Expr::var(n))
}

#[test]
fn parses_square_root_dynamics() {
    let e = parse("sqrt(3*x1) - u2 + u1").unwrap();
    let want = Expr::Add(
        Box::new(Expr::Sub(
            Box::new(Expr::Sqrt(Box::new(Expr::Mul(Box::new(Expr::Const(3.0)), v("x1"))))),
            v("u2"),
        )),
        v("u1"),
    );
    assert_eq!(e, want);
}

#[test]
fn parses_saturated_update() {
    let e = parse("glog(0,32,0.2, x + u + 0.2*(x - l1))").unwrap();
    match &e {
        Expr::Glog { a, b, rate, arg } => {
            assert_eq!((*a, *b, *rate), (0.0, 32.0, 0.2));
            assert_eq!(arg.variables(), vec!["x", "u", "l1"]);
        }
        other => panic!("unexpected tree {other:?}"),
    }
}

#[test]
fn syntax_errors_carry_positions() {
    match parse("x +") {
        Err(ExprError::Syntax { line: 1, col: 4, .. }) => {}
        other => panic!("{other:?}"),
    }
    match parse("a +\n  * b") {
        Err(ExprError::Syntax { line: 2, col: 3, .. }) => {}
        other => panic!("{other:?}"),
    }
    assert!(matches!(parse("(x"), Err(ExprError::Syntax { .. })));
    assert!(matches!(parse("x $ y"), Err(ExprError::Syntax { col: 3, .. })));
}

#[test]
fn rejects_unknown_names_and_bad_glog() {
    assert!(matches!(
        parse_with("x + y", &["x"]),
        Err(ExprError::UnknownIdentifier { ref name, col: 5, .. }) if name == "y"
    ));
    assert!(matches!(parse("tan(x)"), Err(ExprError::UnknownFunction { .. })));
    assert!(matches!(parse("min(x)"), Err(ExprError::Arity { expected: 2, found: 1, .. })));
    assert!(matches!(parse("glog(32, 0, 0.2, x)"), Err(ExprError::InvalidGlog { .. })));
    assert!(matches!(parse("glog(1, 1, 0.2, x)"), Err(ExprError::InvalidGlog { .. })));
    assert!(matches!(parse("glog(0, 1, -0.2, x)"), Err(ExprError::InvalidGlog { .. })));
    assert!(matches!(parse("glog(0, y, 1, x)"), Err(ExprError::InvalidGlog { .. })));
}

#[test]
fn printing_round_trips() {
    for text in [
        "sqrt(3*x1) - u2 + u1",
        "a - (b - c)",
        "a / (b * c)",
        "-(a + b) * -2.5",
        "-(-2)",
        "-(2)",
        "x - -3e-7",
        "glog(-1, 2.5, 0.2, x + u + 0.2*(x - l1))",
        "min(max(a, b), exp(-x)) / cos(sin(x'))",
        "1e300 * .5",
    ] {
        let e = parse(text).unwrap();
        let printed = e.to_string();
        assert_eq!(parse(&printed).unwrap(), e, "{text} -> {printed}");
    }
}

#[test]
fn point_evaluation() {
    let g = parse("glog(0,32,0.2, x)").unwrap();
    assert_eq!(g.eval(&env(&[("x", 16.0)])).unwrap(), Value::Real(16.0));
    let at32 = g.eval(&env(&[("x", 32.0)])).unwrap().real().unwrap();
    // Independent form of the same logistic: 32 / (1 + e^{-3.2}).
    assert!((at32 - 32.0 / (1.0 + (-3.2f64).exp())).abs() < 1e-12);
    // The commonly quoted ≈30.7476 agrees only to about 1e-3.
    assert!((at32 - 30.7476).abs() < 1e-3);
    let s = parse("sqrt(x)").unwrap();
    assert_eq!(s.eval(&env(&[("x", -1.0)])).unwrap(), Value::Undefined);
    assert_eq!(parse("x / y").unwrap().eval(&env(&[("x", 1.0), ("y", 0.0)])).unwrap(), Value::Undefined);
    assert_eq!(
        s.eval(&env(&[])),
        Err(ExprError::UnboundVariable("x".into()))
    );
}

#[test]
fn lipschitz_examples() {
    let o = Oracle::lipschitz(&["x"], vec![parse("3*x").unwrap()], vec![vec![3.0]]).unwrap();
    // c = 0.5, F(c) = 1.5, L·r = 1.5.
    assert_eq!(o.lipschitz_box(&[Interval::new(0.0, 1.0)]).unwrap(), vec![Interval::new(0.0, 3.0)]);
    let id = Oracle::lipschitz(&["x"], vec![parse("x").unwrap()], vec![vec![1.0]]).unwrap();
    assert_eq!(id.lipschitz_box(&[Interval::new(2.0, 4.0)]).unwrap(), vec![Interval::new(2.0, 4.0)]);
    let sq = Oracle::lipschitz(&["x"], vec![parse("sqrt(x)").unwrap()], vec![vec![1.0]]).unwrap();
    assert_eq!(sq.lipschitz_box(&[Interval::new(-2.0, -1.0)]), Err(OracleError::UndefinedOnBox));
    assert!(matches!(
        Oracle::lipschitz(&["x"], vec![parse("x").unwrap()], vec![vec![-1.0]]),
        Err(OracleError::BadLipschitz)
    ));
}

#[test]
fn monotone_examples() {
    let dom = [Interval::new(0.0, 32.0)];
    let o = Oracle::monotone(&["x"], vec![parse("glog(0,32,0.2,x)").unwrap()], &dom, 1).unwrap();
    let b = o.monotone_box(&dom).unwrap()[0];
    let lo = 32.0 / (1.0 + 3.2f64.exp());
    let hi = 32.0 / (1.0 + (-3.2f64).exp());
    assert!(b.contains(lo) && b.contains(hi));
    assert!(b.width() - (hi - lo) < 1e-12);
    assert!((b.lo - 1.2524).abs() < 1e-3 && (b.hi - 30.7476).abs() < 1e-3);
    let id = Oracle::monotone(&["x"], vec![parse("x").unwrap()], &dom, 1).unwrap();
    assert_eq!(id.monotone_box(&[Interval::new(3.0, 7.5)]).unwrap(), vec![Interval::new(3.0, 7.5)]);
    assert!(matches!(
        Oracle::monotone(&["x"], vec![parse("-x").unwrap()], &dom, 1),
        Err(OracleError::NotMonotone { .. })
    ));
    let down = Oracle::monotone_or_interval(&["x", "y"], vec![parse("y - x").unwrap()], &[dom[0], dom[0]], 1).unwrap();
    assert_eq!(down.kind(), &OracleKind::Signed(vec![vec![-1, 1]]));
    let b = down.image(&[Interval::new(1.0, 2.0), Interval::new(5.0, 9.0)]).unwrap()[0];
    assert_eq!(b, Interval::new(3.0, 8.0));
    let fallback = Oracle::monotone_or_interval(&["x"], vec![parse("sin(x)").unwrap()], &dom, 1).unwrap();
    assert_eq!(fallback.kind(), &OracleKind::Interval);
}

#[test]
fn interval_examples() {
    let sq = Oracle::interval(&["x"], vec![parse("x*x").unwrap()]).unwrap();
    assert_eq!(sq.interval_box(&[Interval::new(-1.0, 2.0)]).unwrap(), vec![Interval::new(-2.0, 4.0)]);
    let add = Oracle::interval(&["x", "y"], vec![parse("x + y").unwrap()]).unwrap();
    assert_eq!(
        add.interval_box(&[Interval::new(0.0, 1.0), Interval::new(2.0, 3.0)]).unwrap(),
        vec![Interval::new(2.0, 4.0)]
    );
    let div = Oracle::interval(&["x", "y"], vec![parse("x / y").unwrap()]).unwrap();
    assert_eq!(
        div.interval_box(&[Interval::new(0.0, 1.0), Interval::new(-1.0, 1.0)]),
        Err(OracleError::UndefinedOnBox)
    );
}

#[test]
fn average_of_top_cells_stays_in_range() {
    let o = Oracle::interval(&["a", "b", "c"], vec![parse("(a + b + c)/3").unwrap()]).unwrap();
    let top = Interval::new(31.0, 32.0);
    let r = o.interval_box(&[top, top, top]).unwrap()[0];
    assert_eq!(r.hi, 32.0);
}

#[test]
fn affine_lipschitz_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let k: f64 = rng.gen_range(-4.0..4.0);
        let c: f64 = rng.gen_range(-2.0..2.0);
        let e = Expr::Add(Box::new(Expr::Mul(Box::new(Expr::Const(k)), v("x"))), Box::new(Expr::Const(c)));
        let o = Oracle::lipschitz(&["x"], vec![e], vec![vec![k.abs()]]).unwrap();
        let a: f64 = rng.gen_range(-5.0..5.0);
        let b = a + rng.gen_range(0.0..3.0);
        let got = o.lipschitz_box(&[Interval::new(a, b)]).unwrap()[0];
        let (ya, yb) = (k * a + c, k * b + c);
        let exact = Interval::new(ya.min(yb), ya.max(yb));
        assert!((got.lo - exact.lo).abs() < 1e-9 && (got.hi - exact.hi).abs() < 1e-9);
    }
}

/// Random expressions over `x` and `y`, biased toward total operators.
fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-3.0f64..3.0).prop_map(Expr::Const),
        Just(Expr::var("x")),
        Just(Expr::var("y")),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Div(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Min(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Max(Box::new(a), Box::new(b))),
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            inner.clone().prop_map(|a| Expr::Sqrt(Box::new(a))),
            inner.clone().prop_map(|a| Expr::Exp(Box::new(Expr::Mul(Box::new(Expr::Const(0.3)), Box::new(a))))),
            inner.clone().prop_map(|a| Expr::Sin(Box::new(a))),
            inner.clone().prop_map(|a| Expr::Cos(Box::new(a))),
            inner.prop_map(|a| Expr::Glog { a: -2.0, b: 5.0, rate: 0.7, arg: Box::new(a) }),
        ]
    })
}

fn within(b: &Interval, y: f64) -> bool {
    let slack = 1e-9 * (1.0 + y.abs());
    b.lo - slack <= y && y <= b.hi + slack
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn interval_extension_is_sound(e in arb_expr(), x0 in -4.0f64..4.0, y0 in -4.0f64..4.0,
                                    wx in 0.0f64..2.0, wy in 0.0f64..2.0, seed in any::<u64>()) {
        let o = Oracle::interval(&["x", "y"], vec![e]).unwrap();
        let bx = [Interval::new(x0, x0 + wx), Interval::new(y0, y0 + wy)];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match o.interval_box(&bx) {
            Ok(out) => {
                for _ in 0..100 {
                    let p = [rng.gen_range(bx[0].lo..=bx[0].hi), rng.gen_range(bx[1].lo..=bx[1].hi)];
                    // A sound enclosure also means the function is defined on the box.
                    match o.eval(&p)[0] {
                        Value::Real(y) if y.is_finite() => prop_assert!(within(&out[0], y), "{} at {:?} ∉ {:?}", y, p, out[0]),
                        Value::Real(_) => {}
                        Value::Undefined => prop_assert!(false, "undefined at {:?} inside a defined box", p),
                    }
                }
            }
            Err(OracleError::UndefinedOnBox) => {}
            Err(other) => prop_assert!(false, "{}", other),
        }
    }

    #[test]
    fn monotone_and_lipschitz_are_sound(k in 0.0f64..3.0, c in -2.0f64..2.0, a in -4.0f64..4.0,
                                        w in 0.0f64..3.0, seed in any::<u64>()) {
        // k·x + glog(...) is nondecreasing with Lipschitz constant k + rate·(b − a)/4.
        let text = format!("{k:?}*x + glog(-1, 3, 0.8, x + {c:?})");
        let e = parse(&text).unwrap();
        let dom = [Interval::new(-10.0, 10.0)];
        let m = Oracle::monotone(&["x"], vec![e.clone()], &dom, seed).unwrap();
        let l = Oracle::lipschitz(&["x"], vec![e.clone()], vec![vec![k + 0.8 * 4.0 / 4.0]]).unwrap();
        let i = Oracle::interval(&["x"], vec![e]).unwrap();
        let bx = [Interval::new(a, a + w)];
        let (mb, lb, ib) = (m.monotone_box(&bx).unwrap()[0], l.lipschitz_box(&bx).unwrap()[0], i.interval_box(&bx).unwrap()[0]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let p = rng.gen_range(bx[0].lo..=bx[0].hi);
            let y = m.eval(&[p])[0].real().unwrap();
            prop_assert!(within(&mb, y) && within(&lb, y) && within(&ib, y));
        }
        // Containment chain interval ⊇ monotone on monotone expressions.
        prop_assert!(ib.lo <= mb.lo + 1e-12 && mb.hi <= ib.hi + 1e-12);
    }
}
