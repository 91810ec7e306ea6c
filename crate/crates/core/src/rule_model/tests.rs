use proptest::prelude::*;

use super::*;
use crate::log_model::{parse_csv, EventLog, Kind, LogBuilder, ParseOptions, RawValue, Value};

fn purchase_example() -> EventLog {
    parse_csv(crate::log_model::tests::purchase_csv(), &ParseOptions::default()).unwrap()
}

fn cat(s: &str) -> Constant {
    Constant::Cat(s.into())
}

fn rule(cv: &str, test: Test, uv: &str, update: Update) -> Rule {
    Rule::new(Condition::new(cv, test), UpdateRule::new(uv, update)).unwrap()
}

fn firing(log: &EventLog, c: &Condition) -> Vec<bool> {
    log.events_with_prev()
        .map(|(prev, cur)| c.fires(log.schema(), prev, cur, 3).unwrap())
        .collect()
}

#[test]
fn purchase_firing_pattern() {
    let c = Condition::new("amount", Test::Eq(Constant::Num(10.0)));
    assert_eq!(firing(&purchase_example(), &c), [false, true, true, false]);
}

#[test]
fn transition_never_fires_on_first_event() {
    let c = Condition::new("product", Test::Transition(cat("bag"), cat("pants")));
    assert_eq!(firing(&purchase_example(), &c), [false, false, true, false]);
}

#[test]
fn threshold_conditions() {
    let le = Condition::new("amount", Test::Le(15.0));
    assert_eq!(firing(&purchase_example(), &le), [false, true, true, false]);
    let ge = Condition::new("amount", Test::Ge(20.0));
    assert_eq!(firing(&purchase_example(), &ge), [true, false, false, true]);
    let ne = Condition::new("product", Test::Ne(cat("bag")));
    assert_eq!(firing(&purchase_example(), &ne), [false, false, true, true]);
}

#[test]
fn threshold_on_categorical_is_a_kind_error() {
    let c = Condition::new("product", Test::Le(1.0));
    let log = purchase_example();
    let (prev, cur) = log.events_with_prev().next().unwrap();
    assert!(matches!(c.fires(log.schema(), prev, cur, 3), Err(Error::KindMismatch { .. })));
}

#[test]
fn missing_values_never_fire() {
    let log = parse_csv("trace_id,event_index,activity,x,y\nt,0,a,,p\nt,1,a,3,\n", &ParseOptions::default()).unwrap();
    let le = Condition::new("x", Test::Le(100.0));
    assert_eq!(firing(&log, &le), [false, true]);
    let ne = Condition::new("y", Test::Ne(cat("p")));
    assert_eq!(firing(&log, &ne), [false, false]);
}

#[test]
fn predicted_set_members() {
    let reference = parse_csv(
        "trace_id,event_index,activity,vendor\nt,0,a,A\nt,1,a,B\nt,2,a,C\n",
        &ParseOptions::default(),
    )
    .unwrap();
    let u = UpdateRule::new("vendor", Update::SetMember(vec!["C".into(), "B".into()]));
    let codes = u.predicted_values(reference.schema(), None).unwrap();
    let names: Vec<&str> = codes.iter().map(|&c| reference.schema()[1].category(c).unwrap()).collect();
    assert_eq!(names, ["B", "C"]);
}

fn numbers(values: impl IntoIterator<Item = f64>, bins: usize) -> EventLog {
    let mut b = LogBuilder::new(vec![("v".into(), Kind::Numerical), ("w".into(), Kind::Categorical)]);
    let events = values
        .into_iter()
        .map(|x| vec![RawValue::Number(x), RawValue::Text("k".into())])
        .collect();
    b.push_trace("t".into(), events);
    b.build(bins).unwrap()
}

#[test]
fn identity_shift_predicts_previous_bin() {
    let log = numbers((1..=100).map(f64::from), 4);
    let h = log.schema()[0].histogram().unwrap();
    let prev = Event {
        values: vec![Value::Num(7.0), Value::Cat(0)],
    };
    let u = UpdateRule::new("v", Update::RelativePoint(0.0));
    assert_eq!(u.predicted_values(log.schema(), Some(&prev)).unwrap(), [h.discretize(7.0) as u32]);
    assert!(u.predicted_values(log.schema(), None).unwrap().is_empty());
}

#[test]
fn interval_bins_match_overlap_scan() {
    let log = numbers((1..=100).map(f64::from), 4);
    let h = log.schema()[0].histogram().unwrap();
    let u = UpdateRule::new("v", Update::IntervalAssign(10.0, 20.0));
    let got = u.predicted_values(log.schema(), None).unwrap();
    let expected: Vec<u32> = (0..h.len())
        .filter(|&b| {
            let (lo, hi) = h.range(b);
            lo <= 20.0 && 10.0 < hi
        })
        .map(|b| b as u32)
        .collect();
    assert_eq!(got, expected);
    assert_eq!(got, [0]);
}

#[test]
fn fig3_dependency_graph() {
    let m = Model::from_rules([
        rule("product", Test::Eq(cat("pants")), "vendor", Update::PointAssign(cat("A"))),
        rule("product", Test::Eq(cat("bag")), "amount", Update::PointAssign(Constant::Num(20.0))),
    ])
    .unwrap();
    let g = m.dependency_graph();
    let edges: Vec<(&str, &str)> = g.edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    assert_eq!(edges, [("product", "amount"), ("product", "vendor")]);
    assert!(g.is_acyclic());
    assert!(Model::default().dependency_graph().edges.is_empty());
}

#[test]
fn parallel_rules_share_one_edge() {
    let m = Model::from_rules([
        rule("product", Test::Eq(cat("pants")), "vendor", Update::PointAssign(cat("A"))),
        rule("product", Test::Eq(cat("bag")), "vendor", Update::PointAssign(cat("C"))),
    ])
    .unwrap();
    assert_eq!(m.dependency_graph().edges.len(), 1);
}

#[test]
fn cycles_are_rejected() {
    let mut m = Model::default();
    m.insert(rule("a", Test::Eq(cat("x")), "b", Update::PointAssign(cat("y")))).unwrap();
    m.insert(rule("b", Test::Eq(cat("x")), "c", Update::PointAssign(cat("y")))).unwrap();
    let back = rule("c", Test::Eq(cat("x")), "a", Update::PointAssign(cat("y")));
    assert!(m.would_cycle(&back));
    assert!(matches!(m.insert(back), Err(Error::Cycle(_))));
    assert_eq!(m.len(), 2);

    let mut g = DependencyGraph::default();
    g.add_edge("a", "b");
    g.add_edge("b", "a");
    assert!(!g.is_acyclic());
    assert!(DependencyGraph::default().is_acyclic());
}

#[test]
fn duplicate_rules_are_rejected() {
    let r = rule("a", Test::Eq(cat("x")), "b", Update::PointAssign(cat("y")));
    let mut m = Model::from_rules([r.clone()]).unwrap();
    assert!(m.insert(r).is_err());
}

#[test]
fn invalid_rules() {
    let c = || Condition::new("a", Test::Eq(cat("x")));
    assert!(Rule::new(c(), UpdateRule::new("a", Update::PointAssign(cat("y")))).is_err());
    assert!(Rule::new(c(), UpdateRule::new("b", Update::SetMember(vec![]))).is_err());
    assert!(Rule::new(c(), UpdateRule::new("b", Update::IntervalAssign(2.0, 1.0))).is_err());
    assert!(Rule::new(c(), UpdateRule::new("b", Update::Multiplicative(f64::NAN))).is_err());
    let set = Rule::new(c(), UpdateRule::new("b", Update::SetMember(vec!["z".into(), "y".into(), "z".into()]))).unwrap();
    assert_eq!(set.update.update, Update::SetMember(vec!["y".into(), "z".into()]));
}

#[test]
fn relative_update_on_categorical_is_a_kind_error() {
    let r = rule("amount", Test::Eq(Constant::Num(10.0)), "vendor", Update::RelativePoint(1.0));
    assert!(matches!(r.check(purchase_example().schema()), Err(Error::KindMismatch { .. })));
}

#[test]
fn term_counts() {
    assert_eq!(Model::default().rule_term_count(), 0);
    let rules: Vec<Rule> = (0..5)
        .map(|i| rule("a", Test::Eq(cat(&i.to_string())), "b", Update::PointAssign(cat("y"))))
        .collect();
    assert_eq!(Model::from_rules(rules.clone()).unwrap().rule_term_count(), 10);
    assert_eq!(Model::from_rules(rules[..3].to_vec()).unwrap().rule_term_count(), 6);
}

#[test]
fn topological_order_respects_edges_and_schema_ties() {
    let log = purchase_example();
    let m = Model::from_rules([
        rule("vendor", Test::Eq(cat("A")), "product", Update::PointAssign(cat("pants"))),
        rule("amount", Test::Le(15.0), "vendor", Update::PointAssign(cat("A"))),
    ])
    .unwrap();
    // schema order: activity, product, amount, vendor
    let order = variable_order(log.schema(), &m).unwrap();
    let names: Vec<&str> = order.iter().map(|&i| log.schema()[i].name.as_str()).collect();
    assert_eq!(names, ["activity", "amount", "vendor", "product"]);
}

#[test]
fn json_round_trip_and_pretty() {
    let m = Model::from_rules([
        rule("product", Test::Transition(cat("bag"), cat("pants")), "vendor", Update::SetMember(vec!["A".into(), "B".into()])),
        rule("activity", Test::Eq(cat("buy")), "amount", Update::RelativeInterval(-1.5, 2.0)),
    ])
    .unwrap();
    let text = m.to_json_string();
    assert_eq!(Model::from_json_str(&text).unwrap(), m);
    assert!(text.contains("\"->\""), "{text}");
    assert!(m.pretty().contains("IF product: bag → pants THEN vendor ∈ {A, B}"), "{}", m.pretty());
}

fn arb_edges() -> impl Strategy<Value = Vec<(u8, u8)>> {
    prop::collection::vec((0u8..5, 0u8..5), 0..12)
}

proptest! {
    #[test]
    fn constructible_models_are_acyclic(edges in arb_edges()) {
        let mut m = Model::default();
        for (i, (a, b)) in edges.into_iter().enumerate() {
            if a == b {
                continue;
            }
            let r = rule(&format!("v{a}"), Test::Eq(cat(&i.to_string())), &format!("v{b}"), Update::PointAssign(cat("x")));
            let _ = m.insert(r);
        }
        prop_assert!(m.dependency_graph().is_acyclic());
    }

    #[test]
    fn wider_intervals_never_lose_bins(lo in 0.0f64..100.0, w in 0.0f64..50.0, extra in 0.0f64..30.0) {
        let log = numbers((1..=100).map(f64::from), 8);
        let narrow = UpdateRule::new("v", Update::IntervalAssign(lo, lo + w)).predicted_values(log.schema(), None).unwrap();
        let wide = UpdateRule::new("v", Update::IntervalAssign(lo - extra, lo + w + extra)).predicted_values(log.schema(), None).unwrap();
        prop_assert!(narrow.iter().all(|b| wide.contains(b)));
    }
}
