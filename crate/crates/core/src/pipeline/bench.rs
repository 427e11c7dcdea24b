//! The coupled-logistic benchmark: `N` scalar states driven towards their
//! average through a saturating update,
//!
//! ```text
//! x_i' = glog(0, 32, 0.2, x_i + u_i + 0.2·(x_i − l1)),   u_i ∈ {−2, −1, 1, 2},
//! ```
//!
//! where `l1` is the mean of all states, computed by a tree of partial
//! averages (at `N = 6`: `l2 = (x1+x2+x3)/3`, `l3 = (x4+x5+x6)/3`,
//! `l1 = (l2+l3)/2`). States and latents use 32 unit cells on `[0, 32]`
//! centred at `0.5 + c`.

use crate::grid::QuantizerSpec;

use super::spec::{ControlSpec, ModuleSpec, OracleChoice, OutputSpec, SystemSpec};

pub const BOUND: f64 = 32.0;
pub const CELLS: usize = 32;
pub const GAIN: f64 = 0.2;
pub const RATE: f64 = 0.2;
pub const CONTROLS: [f64; 4] = [-2.0, -1.0, 1.0, 2.0];

fn grid(var: &str) -> QuantizerSpec {
    QuantizerSpec {
        var: var.into(),
        kind: "uniform".into(),
        lower: Some(0.0),
        upper: Some(BOUND),
        eta: Some(BOUND / CELLS as f64),
        anchor: Some(BOUND / CELLS as f64 / 2.0),
        cells: Some(CELLS),
        values: None,
    }
}

/// Averaging tree node: leaves are state indices.
enum Node {
    Leaf(Vec<usize>),
    Split(Box<Node>, Box<Node>),
}

fn tree(states: &[usize]) -> Node {
    if states.len() <= 3 {
        Node::Leaf(states.to_vec())
    } else {
        let (a, b) = states.split_at(states.len().div_ceil(2));
        Node::Split(Box::new(tree(a)), Box::new(tree(b)))
    }
}

fn leaves(n: &Node) -> usize {
    match n {
        Node::Leaf(s) => s.len(),
        Node::Split(a, b) => leaves(a) + leaves(b),
    }
}

/// Spec of the benchmark with `n ≥ 1` states.
pub fn bench_spec(n: usize) -> SystemSpec {
    assert!(n >= 1, "the benchmark needs at least one state");
    let x = |i: usize| format!("x{i}");
    let mut variables = Vec::new();
    for i in 1..=n {
        variables.push(grid(&x(i)));
    }
    for i in 1..=n {
        variables.push(QuantizerSpec {
            var: format!("u{i}"),
            kind: "identity".into(),
            lower: None,
            upper: None,
            eta: None,
            anchor: None,
            cells: None,
            values: Some(CONTROLS.to_vec()),
        });
    }

    // Name internal nodes breadth-first: l1 is the root.
    let mut averages = Vec::new();
    let mut latents = Vec::new();
    let mut queue = std::collections::VecDeque::from([(tree(&(1..=n).collect::<Vec<_>>()), 1usize)]);
    let mut next = 2;
    while let Some((node, id)) = queue.pop_front() {
        let l = format!("l{id}");
        latents.push(l.clone());
        let (inputs, expr) = match node {
            Node::Leaf(s) => {
                let ins: Vec<String> = s.iter().map(|&i| x(i)).collect();
                let expr = format!("({}) / {}", ins.join(" + "), ins.len());
                (ins, expr)
            }
            Node::Split(a, b) => {
                let (na, nb) = (leaves(&a), leaves(&b));
                let mut ins = Vec::new();
                for child in [a, b] {
                    match *child {
                        Node::Leaf(ref s) if s.len() == 1 => ins.push(x(s[0])),
                        other => {
                            ins.push(format!("l{next}"));
                            queue.push_back((other, next));
                            next += 1;
                        }
                    }
                }
                let expr = if na == nb {
                    format!("({} + {}) / 2", ins[0], ins[1])
                } else {
                    format!("({na}*{} + {nb}*{}) / {}", ins[0], ins[1], na + nb)
                };
                (ins, expr)
            }
        };
        averages.push(ModuleSpec {
            name: format!("avg{id}"),
            inputs,
            outputs: vec![OutputSpec {
                var: l,
                expr,
                band: 0.0,
            }],
            oracle: OracleChoice::Monotone,
            lipschitz: None,
        });
    }
    latents.sort_by_key(|l| l[1..].parse::<usize>().unwrap());
    averages.sort_by_key(|m| m.name[3..].parse::<usize>().unwrap());
    for l in &latents {
        variables.push(grid(l));
    }
    for i in 1..=n {
        variables.push(grid(&format!("x{i}'")));
    }

    let mut modules = Vec::new();
    for i in 1..=n {
        modules.push(ModuleSpec {
            name: format!("f{i}"),
            inputs: vec![x(i), format!("u{i}"), "l1".into()],
            outputs: vec![OutputSpec {
                var: format!("x{i}'"),
                expr: format!("glog(0, {BOUND}, {RATE}, x{i} + u{i} + {GAIN}*(x{i} - l1))"),
                band: 0.0,
            }],
            // Decreasing in l1, so the monotone oracle does not apply.
            oracle: OracleChoice::Interval,
            lipschitz: None,
        });
    }
    modules.extend(averages);

    // Shared latents on top, then each control next to its state pair.
    let mut order: Vec<Vec<String>> = latents.iter().map(|l| vec![l.clone()]).collect();
    for i in 1..=n {
        order.push(vec![format!("u{i}")]);
        order.push(vec![x(i), format!("x{i}'")]);
    }
    SystemSpec {
        name: format!("bench_n{n}"),
        variables,
        modules,
        latents,
        control: Some(ControlSpec {
            states: (1..=n).map(|i| (x(i), format!("x{i}'"))).collect(),
        }),
        order,
    }
}
