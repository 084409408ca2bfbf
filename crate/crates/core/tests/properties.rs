use proptest::prelude::*;

use petriflow::bounds::{gamma_max, gamma_min};
use petriflow::dsl::{self, Arc, Assign, Behaviour, Component, Instance, Interface, Link, LinkOp, Param, Value};
use petriflow::gspn;
use petriflow::pnml;
use petriflow::structural::{
    concurrency_by_enumeration, concurrency_quad_check, liveness_marked_graph, minimal_p_semiflows,
    minimal_t_invariants,
};
use petriflow::{Horizon, PetriNet, SimConfig, SolverOptions, Timing, TimingSpec};

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,6}".prop_map(|s| format!("n{s}"))
}

fn value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        (-1e6f64..1e6).prop_map(Value::Number),
        "[ -~]{0,8}".prop_map(Value::Str),
        ident().prop_map(Value::Ident),
        (0u32..50).prop_map(|k| Value::Marking(k, "token".into())),
    ];
    leaf.prop_recursive(2, 6, 3, |inner| {
        (ident(), prop::collection::vec(inner, 0..3)).prop_map(|(f, args)| Value::Call(f, args))
    })
}

fn path(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(ident(), 1..=max)
}

fn link() -> impl Strategy<Value = Link> {
    let dotted = || path(3).prop_map(|p| p.join("."));
    prop_oneof![
        (prop::collection::vec(dotted(), 2..5), ident()).prop_map(|(args, r)| Link {
            op: LinkOp::Fusion,
            args,
            results: vec![r]
        }),
        (dotted(), ident(), ident()).prop_map(|(a, x, y)| Link {
            op: LinkOp::Split,
            args: vec![a],
            results: vec![x, y]
        }),
        (dotted(), ident()).prop_map(|(a, x)| Link {
            op: LinkOp::Copy,
            args: vec![a],
            results: vec![x]
        }),
        (dotted(), ident(), ident()).prop_map(|(a, x, y)| Link {
            op: LinkOp::SplitCopy,
            args: vec![a],
            results: vec![x, y]
        }),
        prop::collection::vec(dotted(), 3..=4).prop_map(|args| Link {
            op: LinkOp::Impl,
            args,
            results: vec![]
        }),
    ]
}

fn component() -> impl Strategy<Value = Component> {
    (
        ident(),
        prop::collection::vec((ident(), prop::option::of(value())), 0..3),
        prop::collection::vec(ident(), 0..3),
        prop::collection::vec(ident(), 0..3),
        prop::collection::btree_set(ident(), 0..6),
        prop::collection::vec((ident(), ident(), prop::collection::vec((path(2), value()), 0..2)), 0..3),
        prop::collection::vec(link(), 0..4),
        prop::collection::vec((path(2), ident()), 0..3),
        prop::collection::vec((path(3).prop_filter("attr", |p| p.len() >= 2), value()), 0..4),
        1u32..4,
    )
        .prop_map(|(name, params, ip, it, nodes, insts, links, renames, attrs, w)| {
            let nodes: Vec<String> = nodes.into_iter().collect();
            let half = nodes.len() / 2;
            let (places, transitions) = (nodes[..half].to_vec(), nodes[half..].to_vec());
            let arcs = places
                .iter()
                .zip(&transitions)
                .map(|(p, t)| Arc {
                    from: p.clone(),
                    to: t.clone(),
                    weight: w,
                })
                .collect();
            let mut seen = std::collections::HashSet::new();
            let params = params
                .into_iter()
                .filter(|(n, _)| seen.insert(n.clone()))
                .map(|(name, default)| Param { name, default })
                .collect();
            let mut used: std::collections::HashSet<String> = nodes.iter().cloned().collect();
            let components = insts
                .into_iter()
                .filter(|(n, _, _)| used.insert(n.clone()))
                .map(|(name, component, args)| Instance {
                    name,
                    component,
                    args: args.into_iter().map(|(target, value)| Assign { target, value }).collect(),
                })
                .collect();
            Component {
                name,
                params,
                interface: Interface {
                    places: ip,
                    transitions: it,
                },
                behaviour: Behaviour {
                    places,
                    transitions,
                    arcs,
                    components,
                    links,
                    renames: renames.into_iter().map(|(p, n)| (p.join("."), n)).collect(),
                    attributes: attrs.into_iter().map(|(target, value)| Assign { target, value }).collect(),
                },
            }
        })
}

/// Strongly connected marked graph: a token-carrying ring plus chords.
fn marked_graph() -> impl Strategy<Value = PetriNet> {
    (2usize..7)
        .prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n, 0u32..3), 0..n + 2)))
        .prop_map(|(n, chords)| {
            let mut net = PetriNet::new();
            for t in 0..n {
                net.add_transition(format!("t{t}")).unwrap();
            }
            let mut k = 0;
            let mut edge = |net: &mut PetriNet, a: usize, b: usize, m: u32| {
                let p = format!("p{k}");
                k += 1;
                net.add_place(&p, m).unwrap();
                net.add_output_arc(&format!("t{a}"), &p, 1).unwrap();
                net.add_input_arc(&p, &format!("t{b}"), 1).unwrap();
            };
            for t in 0..n {
                edge(&mut net, t, (t + 1) % n, u32::from(t == 0));
            }
            for (a, b, m) in chords {
                edge(&mut net, a, b, m);
            }
            net
        })
}

fn small_net() -> impl Strategy<Value = PetriNet> {
    (1usize..6, 1usize..6)
        .prop_flat_map(|(p, t)| {
            (
                Just(p),
                Just(t),
                prop::collection::vec(0u32..3, p * t),
                prop::collection::vec(0u32..3, p * t),
                prop::collection::vec(0u32..4, p),
            )
        })
        .prop_map(|(np, nt, pre, post, m0)| {
            let mut net = PetriNet::new();
            for (p, &m) in m0.iter().enumerate() {
                net.add_place(format!("p{p}"), m).unwrap();
            }
            for t in 0..nt {
                net.add_transition(format!("t{t}")).unwrap();
            }
            for p in 0..np {
                for t in 0..nt {
                    net.set_pre(p, t, pre[p * nt + t]);
                    net.set_post(p, t, post[p * nt + t]);
                }
            }
            net
        })
}

fn exp_timing(net: &PetriNet, means: &[f64]) -> TimingSpec {
    let mut t = TimingSpec::new();
    for (k, name) in net.transitions().iter().enumerate() {
        t.set(name.clone(), Timing::exponential(means[k % means.len()]));
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dsl_print_parse_round_trip(c in component()) {
        let text = dsl::print(std::slice::from_ref(&c));
        let back = dsl::parse(&text);
        // arity or duplicate checks may reject a generated component; the
        // text itself must always be syntactically valid
        match back {
            Ok(v) => prop_assert_eq!(v, vec![c]),
            Err(dsl::DslError::SyntaxError { .. }) | Err(dsl::DslError::Unsupported { .. }) => {
                prop_assert!(false, "printer produced unparsable text:\n{}", text)
            }
            Err(_) => {}
        }
    }

    #[test]
    fn pnml_round_trip(net in small_net()) {
        prop_assert_eq!(pnml::from_pnml(&pnml::to_pnml(&net)).unwrap(), net);
    }

    #[test]
    fn semiflows_annul_and_are_minimal(net in small_net()) {
        let c = net.incidence();
        let ps = minimal_p_semiflows(&net);
        for y in &ps {
            for t in 0..net.num_transitions() {
                let s: i64 = (0..net.num_places()).map(|p| y.coefficients[p] as i64 * c[p][t]).sum();
                prop_assert_eq!(s, 0);
            }
            for z in &ps {
                let (sy, sz) = (y.support(), z.support());
                prop_assert!(z == y || !sz.iter().all(|i| sy.contains(i)) || sz.len() == sy.len());
            }
        }
        for x in &minimal_t_invariants(&net) {
            for p in 0..net.num_places() {
                let s: i64 = (0..net.num_transitions()).map(|t| c[p][t] * x.coefficients[t] as i64).sum();
                prop_assert_eq!(s, 0);
            }
        }
    }

    #[test]
    fn token_count_is_invariant_on_semiflows(net in small_net(), steps in prop::collection::vec(0usize..8, 0..30)) {
        let ps = minimal_p_semiflows(&net);
        let w: Vec<Vec<i64>> = ps.iter().map(|y| y.coefficients.iter().map(|&c| c as i64).collect()).collect();
        let m0 = net.initial_marking();
        let mut m = m0.clone();
        for s in steps {
            let en = net.enabled(&m);
            if en.is_empty() {
                break;
            }
            m = net.fire(&m, en[s % en.len()]).unwrap();
            for y in &w {
                prop_assert_eq!(m.weighted(y), m0.weighted(y));
            }
        }
    }

    #[test]
    fn circuit_concurrency_matches_enumeration(net in marked_graph()) {
        prop_assume!(liveness_marked_graph(&net).unwrap().live);
        let n = net.num_transitions();
        let names: Vec<String> = (0..4).map(|k| format!("t{}", k % n)).collect();
        prop_assume!(n >= 4);
        let quad: Vec<&str> = names.iter().map(String::as_str).collect();
        let ts: Vec<usize> = (0..4).collect();
        prop_assert_eq!(
            concurrency_quad_check(&net, &quad, 200_000).unwrap(),
            concurrency_by_enumeration(&net, &ts, 200_000).unwrap()
        );
    }

    #[test]
    fn live_marked_graph_throughput(net in marked_graph(), means in prop::collection::vec(0.1f64..3.0, 1..5)) {
        prop_assume!(liveness_marked_graph(&net).unwrap().live);
        let timing = exp_timing(&net, &means);
        let r = match gspn::analyze(&net, &timing, 20_000, &SolverOptions::default()) {
            Ok(r) => r,
            Err(gspn::GspnError::CapExceeded { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let total: f64 = r.probabilities.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
        prop_assert!(r.probabilities.iter().all(|&p| p >= 0.0));
        let x0 = r.throughput[0];
        for &x in &r.throughput {
            prop_assert!(((x - x0) / x0).abs() < 1e-6, "throughputs {:?}", r.throughput);
        }
        let theta = timing.means(&net);
        let (lo, _) = gamma_min(&net, &theta).unwrap();
        let (circuit, _) = gamma_max(&net, &theta, &vec![1; net.num_transitions()]).unwrap();
        let serial: f64 = theta.iter().sum();
        let cycle = 1.0 / x0;
        prop_assert!(lo <= cycle * (1.0 + 1e-9) && cycle <= serial * (1.0 + 1e-9), "{lo} <= {cycle} <= {serial}");
        prop_assert!(lo <= circuit * (1.0 + 1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn simulation_is_reproducible_and_conservative(net in marked_graph(), seed in 0u64..1000) {
        prop_assume!(liveness_marked_graph(&net).unwrap().live);
        let timing = exp_timing(&net, &[0.5, 1.0, 2.0]);
        let cfg = SimConfig {
            horizon: Horizon::Firings(2_000),
            replications: 3,
            seed,
            check_invariants: true,
            ..SimConfig::default()
        };
        let a = petriflow::simulate(&net, &timing, &cfg).unwrap();
        let b = petriflow::simulate(&net, &timing, &cfg).unwrap();
        prop_assert_eq!(a.replications, b.replications);
    }
}
