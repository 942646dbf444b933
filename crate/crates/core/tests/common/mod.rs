#![allow(dead_code)]

use hysmc::expr::{BinaryOp, Expr};
use hysmc::model::{
    ChannelDecl, DwellPolicy, Edge, Flow, HybridAutomaton, Location, NetworkModel, Reset,
    SyncLabel, VarDecl, VarKind,
};
use proptest::prelude::*;
use proptest::sample::{select, subsequence};

pub const VARS: [&str; 3] = ["x", "y", "speed"];
pub const CONSTS: [&str; 2] = ["k1", "k2_max"];
pub const CHANNELS: [&str; 3] = ["go", "halt", "urgent_ping"];
const LOCATIONS: [&str; 4] = ["idle", "80_to_20", "moving", "l3"];
const AUTOMATA: [&str; 3] = ["Robot", "Battery", "A2"];

fn number() -> impl Strategy<Value = f64> {
    prop_oneof![
        (0u32..200).prop_map(f64::from),
        (0.0f64..1e6),
        select(vec![0.035, 1e-9, 2.5e17, 0.1 + 0.2]),
    ]
}

pub fn num_expr(clock: bool) -> BoxedStrategy<Expr> {
    let mut names: Vec<&str> = VARS.to_vec();
    names.extend(CONSTS);
    let leaf = if clock {
        prop_oneof![
            3 => number().prop_map(Expr::Const),
            3 => select(names).prop_map(Expr::var),
            1 => Just(Expr::clock()),
        ]
        .boxed()
    } else {
        prop_oneof![number().prop_map(Expr::Const), select(names).prop_map(Expr::var)].boxed()
    };
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| -e),
            inner.clone().prop_map(Expr::exp),
            (
                select(vec![BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div]),
                inner.clone(),
                inner
            )
                .prop_map(|(op, a, b)| Expr::binary(op, a, b)),
        ]
    })
    .boxed()
}

pub fn bool_expr(clock: bool, strict: bool) -> BoxedStrategy<Expr> {
    let mut ops = vec![BinaryOp::Le, BinaryOp::Ge, BinaryOp::Eq];
    if strict {
        ops.extend([BinaryOp::Lt, BinaryOp::Gt]);
    }
    let atom = prop_oneof![
        6 => (select(ops), num_expr(clock), num_expr(clock)).prop_map(|(op, a, b)| Expr::binary(op, a, b)),
        1 => any::<bool>().prop_map(Expr::Bool),
    ];
    atom.prop_recursive(2, 8, 2, |inner| {
        (select(vec![BinaryOp::And, BinaryOp::Or]), inner.clone(), inner)
            .prop_map(|(op, a, b)| Expr::binary(op, a, b))
    })
    .boxed()
}

fn dwell() -> impl Strategy<Value = DwellPolicy> {
    prop_oneof![
        Just(DwellPolicy::Eager),
        (1e-4f64..10.0).prop_map(|rate| DwellPolicy::Exponential { rate }),
    ]
}

fn location(name: &'static str, clock: bool) -> impl Strategy<Value = Location> {
    subsequence(VARS.to_vec(), 0..=3)
        .prop_flat_map(move |vars| {
            let n = vars.len();
            (
                Just(vars),
                prop::collection::vec((num_expr(clock), prop::option::weighted(0.2, bool_expr(clock, true))), n),
                prop::option::of(bool_expr(clock, false)),
                dwell(),
            )
        })
        .prop_map(move |(vars, rhs, invariant, dwell)| Location {
            name: name.to_string(),
            flows: vars
                .into_iter()
                .zip(rhs)
                .map(|(v, (rhs, gate))| Flow {
                    var: v.to_string(),
                    rhs,
                    gate,
                })
                .collect(),
            invariant,
            dwell,
        })
}

fn sync() -> impl Strategy<Value = SyncLabel> {
    prop_oneof![
        Just(SyncLabel::None),
        select(CHANNELS.to_vec()).prop_map(|c| SyncLabel::Emit(c.into())),
        select(CHANNELS.to_vec()).prop_map(|c| SyncLabel::Receive(c.into())),
    ]
}

fn edge(n_locations: usize, clock: bool) -> impl Strategy<Value = Edge> {
    let mut targets: Vec<&str> = VARS.to_vec();
    if clock {
        targets.push("t");
    }
    (
        0..n_locations,
        0..n_locations,
        prop::option::of(bool_expr(clock, true)),
        sync(),
        prop::collection::vec((select(targets), num_expr(clock)), 0..3),
        prop_oneof![Just(1.0), 0.01f64..100.0],
    )
        .prop_map(move |(s, t, guard, sync, resets, weight)| Edge {
            source: LOCATIONS[s].to_string(),
            target: LOCATIONS[t].to_string(),
            guard,
            sync,
            resets: resets
                .into_iter()
                .map(|(target, value)| Reset {
                    target: target.to_string(),
                    value,
                })
                .collect(),
            weight,
        })
}

fn automaton(name: &'static str) -> impl Strategy<Value = HybridAutomaton> {
    (1usize..=4, any::<bool>())
        .prop_flat_map(move |(n, clock)| {
            let locations: Vec<_> = LOCATIONS[..n].iter().map(|l| location(l, clock)).collect();
            (
                Just(clock),
                locations,
                prop::collection::vec(edge(n, clock), 0..5),
                0..n,
            )
        })
        .prop_map(move |(clock, locations, edges, init)| HybridAutomaton {
            name: name.to_string(),
            clock: clock.then(|| "t".to_string()),
            initial: locations[init].name.clone(),
            locations,
            edges,
        })
}

fn declarations() -> impl Strategy<Value = Vec<VarDecl>> {
    let unit = prop::option::of(select(vec!["cm", "%/s", "1/s", "cm/s^2"]));
    (
        prop::collection::vec((number(), unit.clone()), 3),
        prop::collection::vec((number(), unit), 2),
    )
        .prop_map(|(vars, consts)| {
            let mut decls: Vec<VarDecl> = VARS
                .iter()
                .zip(vars)
                .map(|(n, (init, unit))| VarDecl {
                    name: n.to_string(),
                    kind: VarKind::Var,
                    init,
                    unit: unit.map(str::to_string),
                })
                .collect();
            decls.extend(CONSTS.iter().zip(consts).map(|(n, (init, unit))| VarDecl {
                name: n.to_string(),
                kind: VarKind::Const,
                init,
                unit: unit.map(str::to_string),
            }));
            decls
        })
}

/// Random well-formed networks over a fixed vocabulary of names.
pub fn network() -> impl Strategy<Value = NetworkModel> {
    (1usize..=3)
        .prop_flat_map(|n| {
            let automata: Vec<_> = AUTOMATA[..n].iter().map(|a| automaton(a)).collect();
            (declarations(), prop::collection::vec(any::<bool>(), 3), automata)
        })
        .prop_map(|(variables, urgent, automata)| NetworkModel {
            name: "generated".into(),
            variables,
            channels: CHANNELS
                .iter()
                .zip(urgent)
                .map(|(c, urgent)| ChannelDecl {
                    name: c.to_string(),
                    urgent,
                })
                .collect(),
            automata,
        })
}
