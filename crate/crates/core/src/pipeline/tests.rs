use super::bench::bench_spec;
use super::*;

fn load(spec: &SystemSpec) -> LoadedSpec {
    parse_spec(&serde_json::to_string(spec).unwrap()).unwrap()
}

#[test]
fn bench_shape() {
    let s = load(&bench_spec(6));
    assert_eq!(s.spec.modules.len(), 9);
    assert_eq!(s.spec.latents, vec!["l1", "l2", "l3"]);
    let u = s.quantizer("u3");
    assert!(u.is_identity());
    assert_eq!(u.values().unwrap(), &[-2.0, -1.0, 1.0, 2.0]);
    let avg2 = s.spec.modules.iter().find(|m| m.outputs[0].var == "l2").unwrap();
    assert_eq!(avg2.inputs, vec!["x1", "x2", "x3"]);
    let avg1 = s.spec.modules.iter().find(|m| m.outputs[0].var == "l1").unwrap();
    assert_eq!(avg1.outputs[0].expr, "(l2 + l3) / 2");

    let s2 = load(&bench_spec(2));
    assert_eq!(s2.spec.modules.len(), 3);
    assert_eq!(s2.spec.latents, vec!["l1"]);
    for n in [1, 4, 5, 7, 9] {
        let s = load(&bench_spec(n));
        assert_eq!(s.spec.modules.iter().filter(|m| m.name.starts_with('f')).count(), n);
    }
}

#[test]
fn averaging_tree_is_exact() {
    // The flattened mean must equal the arithmetic mean for every N.
    for n in 1..=9 {
        let s = Session::new(load(&bench_spec(n))).unwrap();
        let mut defs = HashMap::new();
        for (k, m) in s.spec.spec.modules.iter().enumerate() {
            defs.insert(m.outputs[0].var.clone(), s.spec.exprs[k][0].clone());
        }
        let mut e = defs["l1"].clone();
        while e.variables().iter().any(|v| v.starts_with('l')) {
            e = e.substitute(&defs);
        }
        let env: HashMap<String, f64> = (1..=n).map(|i| (format!("x{i}"), (i * i) as f64)).collect();
        let mean = (1..=n).map(|i| (i * i) as f64).sum::<f64>() / n as f64;
        let got = e.eval(&env).unwrap().real().unwrap();
        assert!((got - mean).abs() < 1e-9, "n={n}: {got} vs {mean}");
    }
}

#[test]
fn validation_errors_carry_pointers() {
    let mut s = bench_spec(2);
    s.modules[0].outputs[0].expr = "x1 + y".into();
    let e = parse_spec(&serde_json::to_string(&s).unwrap()).unwrap_err();
    assert!(matches!(&e, PipelineError::Validation { path, .. } if path == "/modules/0/outputs/0/expr"), "{e}");

    let e = parse_spec(r#"{"name": "a", "variables": [], "modules": [{"name": 3}]}"#).unwrap_err();
    assert!(matches!(&e, PipelineError::Validation { path, .. } if path == "/modules/0/name"), "{e}");

    let e = parse_spec("{").unwrap_err();
    assert!(e.is_validation());

    let mut s = bench_spec(2);
    s.modules[1].outputs[0].var = "x1'".into();
    let e = parse_spec(&serde_json::to_string(&s).unwrap()).unwrap_err();
    assert!(matches!(&e, PipelineError::Validation { path, .. } if path == "/modules/1/outputs/0/var"), "{e}");

    let mut s = bench_spec(2);
    s.variables[0].cells = Some(10);
    let e = parse_spec(&serde_json::to_string(&s).unwrap()).unwrap_err();
    assert!(matches!(&e, PipelineError::NonStrict { path, .. } if path == "/variables/0"), "{e}");
}

#[test]
fn cycle_is_rejected_at_load() {
    let text = r#"{
        "name": "loop",
        "variables": [
            {"var": "a", "kind": "uniform", "lower": 0, "upper": 4, "eta": 1},
            {"var": "b", "kind": "uniform", "lower": 0, "upper": 4, "eta": 1}
        ],
        "modules": [
            {"name": "m1", "inputs": ["a"], "outputs": [{"var": "b", "expr": "a"}]},
            {"name": "m2", "inputs": ["b"], "outputs": [{"var": "a", "expr": "b"}]}
        ]
    }"#;
    match parse_spec(text).unwrap_err() {
        PipelineError::AlgebraicLoop { cycle, .. } => {
            assert_eq!(cycle.first(), cycle.last());
            assert!(cycle.contains(&"m1".to_string()) && cycle.contains(&"m2".to_string()));
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn single_module_monolithic_equals_compositional() {
    let text = r#"{
        "name": "one",
        "variables": [
            {"var": "x", "kind": "uniform", "lower": 0, "upper": 8, "eta": 1},
            {"var": "y", "kind": "uniform", "lower": 0, "upper": 8, "eta": 0.5}
        ],
        "modules": [{"name": "f", "inputs": ["x"], "outputs": [{"var": "y", "expr": "sqrt(8*x)"}]}]
    }"#;
    let s = Session::new(parse_spec(text).unwrap()).unwrap();
    let opts = PipelineOptions::default();
    let comp = s.compositional(&opts).unwrap();
    let (mono, stats) = s.monolithic(&opts).unwrap();
    assert_eq!(stats.cells, 8);
    assert!(comp.composed.constraint().equivalent(mono.constraint()).unwrap());
}

#[test]
fn n2_pipeline_with_check_and_artifacts() {
    let spec = load(&bench_spec(2));
    let dir = tempfile::tempdir().unwrap();
    let opts = PipelineOptions {
        check_divisions: Some(10),
        synthesize: Some(SynthesisRequest {
            objective: Objective::Safety,
            region: vec![("x1".into(), 4.0, 28.0), ("x2".into(), 4.0, 28.0)],
        }),
        out_dir: Some(dir.path().to_path_buf()),
        ..PipelineOptions::default()
    };
    let r = run_pipeline(&spec, &opts).unwrap();
    assert_eq!(r.cells_traversed, 2 * 32 * 4 * 32 + 32 * 32);
    assert_eq!(r.composed.inputs, vec!["u1", "x1", "u2", "x2"]);
    assert_eq!(r.composed.outputs, vec!["x1'", "x2'"]);
    assert!(r.check.as_ref().unwrap().passed(), "{:?}", r.check);
    let syn = r.synthesis.as_ref().unwrap();
    assert!(syn.domain_states > 0 && syn.domain_states <= syn.goal_states);

    let st = stats(&dir.path().join("composed.json")).unwrap();
    assert_eq!(st.transitions, r.composed.transitions);
    assert_eq!(st.nodes, r.composed.nodes);
    assert_eq!(st.blocking, r.composed.blocking);
    for m in &r.modules {
        let st = stats(&dir.path().join("modules").join(format!("{}.json", m.name))).unwrap();
        assert_eq!(st.transitions, m.stats.transitions);
    }

    // Determinism: a second run writes identical artifacts and counts.
    let dir2 = tempfile::tempdir().unwrap();
    let r2 = run_pipeline(
        &spec,
        &PipelineOptions {
            out_dir: Some(dir2.path().to_path_buf()),
            ..opts.clone()
        },
    )
    .unwrap();
    assert_eq!(r2.composed, r.composed);
    let counts = |r: &RunReport| -> Vec<(u128, u128, usize)> {
        r.modules.iter().map(|m| (m.stats.transitions, m.stats.blocking, m.stats.nodes)).collect()
    };
    assert_eq!(counts(&r2), counts(&r));
    for f in ["spec.json", "composed.json", "modules/f1.json", "modules/avg1.json"] {
        let a = std::fs::read(dir.path().join(f)).unwrap();
        let b = std::fs::read(dir2.path().join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn hide_flag_controls_interface() {
    let spec = load(&bench_spec(2));
    let s = Session::new(spec).unwrap();
    let keep = PipelineOptions {
        hide: Some(vec![]),
        ..PipelineOptions::default()
    };
    // Without hiding, the latent stays an output and the pairing fails.
    assert!(matches!(s.compositional(&keep), Err(PipelineError::Module { .. })));
    let c = s.compositional(&PipelineOptions::default()).unwrap();
    assert!(c.composed.interface().iter().all(|v| v.name() != "l1"));
}

#[test]
fn artifact_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
        "name": "empty",
        "variables": [
            {"var": "x", "kind": "uniform", "lower": 0, "upper": 4, "eta": 1},
            {"var": "y", "kind": "uniform", "lower": 0, "upper": 4, "eta": 1}
        ],
        "modules": [{"name": "f", "inputs": ["x"], "outputs": [{"var": "y", "expr": "x + 100"}]}]
    }"#;
    let s = Session::new(parse_spec(text).unwrap()).unwrap();
    let c = s.compositional(&PipelineOptions::default()).unwrap();
    let p = dir.path().join("empty.json");
    write_artifact(&s, &c.composed, &p).unwrap();
    let st = stats(&p).unwrap();
    assert_eq!(st.transitions, 0);
    assert_eq!(st.blocking_fraction, 1.0);

    let full = std::fs::read_to_string(&p).unwrap();
    std::fs::write(&p, &full[..full.len() / 2]).unwrap();
    assert!(matches!(stats(&p), Err(PipelineError::Format(_))));
}
