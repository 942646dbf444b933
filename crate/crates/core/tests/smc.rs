use hysmc::casestudy::{build_scenario, ScenarioParams, PASS_OUT_GOAL};
use hysmc::model::IssueCode;
use hysmc::smc::{
    clopper_pearson, evaluate_on_trace, parse_goal, parse_property, required_runs, sweep,
    sweep_csv, PropertyError, SmcError,
};
use hysmc::{estimate_probability, parse_model, simulate, NetworkModel, SimConfig, SmcOptions};
use proptest::prelude::*;

fn scenario() -> NetworkModel {
    build_scenario(&ScenarioParams::default()).unwrap()
}

fn bench(rate: f64) -> NetworkModel {
    parse_model(&format!(
        "network bench {{
           automaton A {{
             location waiting init {{ dwell exponential({}); }}
             location goal {{ }}
             edge waiting -> goal {{ }}
           }}
         }}",
        rate
    ))
    .unwrap()
}

#[test]
fn pass_out_property_parses() {
    let m = scenario();
    let p = parse_property(&format!("Pr[<=300](<> {})", PASS_OUT_GOAL), &m).unwrap();
    assert_eq!(p.bound, 300.0);
    assert_eq!(p.to_string(), format!("Pr[<=300](<> {})", PASS_OUT_GOAL));
    let again = parse_property(&p.to_string(), &m).unwrap();
    assert_eq!(again, p);
}

#[test]
fn property_errors() {
    let m = scenario();
    assert!(matches!(
        parse_property("Pr[<=0](<> Human.passed_out)", &m),
        Err(PropertyError::Bound { .. })
    ));
    assert_eq!(
        parse_property("Pr[<=10](<> Human.asleep)", &m).unwrap_err().code(),
        Some(IssueCode::UnknownLocation)
    );
    assert_eq!(
        parse_property("Pr[<=10](<> Z > 1)", &m).unwrap_err().code(),
        Some(IssueCode::UndeclaredVar)
    );
    assert_eq!(
        parse_property("Pr[<=10](<> F + 1)", &m).unwrap_err().code(),
        Some(IssueCode::TypeError)
    );
    assert!(matches!(
        parse_property("Pr[<=10](<> F > 1", &m),
        Err(PropertyError::Syntax(_))
    ));
    assert!(parse_goal("C <= 20 || Robot.recharging", &m).is_ok());
}

#[test]
fn trace_evaluation() {
    let m = scenario();
    let trace = simulate(&m, &SimConfig::new(1000.0, 4)).unwrap();
    let at = |text: &str| evaluate_on_trace(&parse_property(text, &m).unwrap(), &trace).unwrap();
    assert!(at("Pr[<=1](<> Robot.idle)"));
    assert!(!at("Pr[<=1000](<> C > 100)"));
    assert!(at("Pr[<=600](<> C < 99)"));
    let long = parse_property("Pr[<=2000](<> Robot.idle)", &m).unwrap();
    assert!(matches!(
        evaluate_on_trace(&long, &trace),
        Err(SmcError::TraceTooShort { .. })
    ));
}

#[test]
fn run_count_examples() {
    assert_eq!(required_runs(0.05, 0.05).unwrap(), 738);
    assert_eq!(required_runs(0.1, 0.05).unwrap(), 185);
    assert_eq!(required_runs(0.01, 0.01).unwrap(), 26492);
    for (e, a) in [(0.0, 0.05), (0.05, 0.0), (0.05, 1.0), (-1.0, 0.5), (f64::NAN, 0.5)] {
        assert!(matches!(required_runs(e, a), Err(SmcError::Domain(_))));
    }
}

fn ln_factorial(n: u64) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

fn binomial_pmf(k: u64, n: u64, p: f64) -> f64 {
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let ln = ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
        + k as f64 * p.ln()
        + (n - k) as f64 * (1.0 - p).ln();
    ln.exp()
}

fn upper_tail(k: u64, n: u64, p: f64) -> f64 {
    (k..=n).map(|i| binomial_pmf(i, n, p)).sum()
}

fn lower_tail(k: u64, n: u64, p: f64) -> f64 {
    (0..=k).map(|i| binomial_pmf(i, n, p)).sum()
}

#[test]
fn clopper_pearson_matches_tail_sums() {
    for &(k, n) in &[(1u64, 10u64), (5, 10), (9, 10), (466, 738), (30, 185), (737, 738)] {
        let (lo, hi) = clopper_pearson(k, n, 0.05).unwrap();
        assert!((upper_tail(k, n, lo) - 0.025).abs() < 1e-7, "lo {} for {}/{}", lo, k, n);
        assert!((lower_tail(k, n, hi) - 0.025).abs() < 1e-7, "hi {} for {}/{}", hi, k, n);
    }
    let (lo, hi) = clopper_pearson(0, 738, 0.05).unwrap();
    assert_eq!(lo, 0.0);
    assert!((lower_tail(0, 738, hi) - 0.025).abs() < 1e-9);
    let (lo, hi) = clopper_pearson(738, 738, 0.05).unwrap();
    assert_eq!(hi, 1.0);
    assert!((upper_tail(738, 738, lo) - 0.025).abs() < 1e-9);
    assert!(clopper_pearson(3, 2, 0.05).is_err());
    assert!(clopper_pearson(0, 0, 0.05).is_err());
}

proptest! {
    #[test]
    fn fewer_runs_for_looser_targets(e in 0.001f64..0.5, a in 0.001f64..0.9, f in 1.0f64..3.0) {
        let n = required_runs(e, a).unwrap();
        prop_assert!(n >= 1);
        prop_assert!(required_runs((e * f).min(0.99), a).unwrap() <= n);
        prop_assert!(required_runs(e, (a * f).min(0.99)).unwrap() <= n);
    }

    #[test]
    fn interval_contains_the_point_estimate(n in 1u64..2000, frac in 0.0f64..=1.0, alpha in 0.001f64..0.5) {
        let k = ((n as f64) * frac).round() as u64;
        let (lo, hi) = clopper_pearson(k, n, alpha).unwrap();
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
        let (wlo, whi) = clopper_pearson(k, n, alpha / 2.0).unwrap();
        prop_assert!(wlo <= lo + 1e-12 && whi >= hi - 1e-12);
    }
}

#[test]
fn exponential_benchmark_estimate() {
    let m = bench(0.01);
    let p = parse_property("Pr[<=100](<> A.goal)", &m).unwrap();
    let r = estimate_probability(&m, &p, &SmcOptions::new(0.05, 0.05, 17)).unwrap();
    let truth = 1.0 - (-1.0f64).exp();
    assert_eq!(r.n, 738);
    assert!((r.p_hat - truth).abs() <= 0.05, "{:?}", r);
    assert!(r.ci_lo <= r.p_hat && r.p_hat <= r.ci_hi);
}

#[test]
fn goal_holding_initially_is_certain() {
    let m = scenario();
    let p = parse_property("Pr[<=10](<> Robot.idle)", &m).unwrap();
    let r = estimate_probability(&m, &p, &SmcOptions::new(0.1, 0.05, 0)).unwrap();
    assert_eq!((r.k, r.n, r.p_hat), (185, 185, 1.0));
}

#[test]
fn same_seed_same_estimate() {
    let m = bench(0.02);
    let p = parse_property("Pr[<=30](<> A.goal)", &m).unwrap();
    let o = SmcOptions::new(0.1, 0.1, 99);
    assert_eq!(
        estimate_probability(&m, &p, &o).unwrap(),
        estimate_probability(&m, &p, &o).unwrap()
    );
}

#[test]
fn sweep_is_monotone_and_consistent() {
    let m = bench(0.01);
    let goal = parse_goal("A.goal", &m).unwrap();
    let bounds: Vec<f64> = (1..=10).map(|i| 25.0 * i as f64).collect();
    let o = SmcOptions::new(0.1, 0.05, 3);
    let rows = sweep(&m, &goal, &bounds, &o).unwrap();
    assert_eq!(rows.len(), 10);
    assert!(rows.windows(2).all(|w| w[0].k <= w[1].k));
    for (r, b) in rows.iter().zip(&bounds) {
        let truth = 1.0 - (-0.01 * b).exp();
        assert!((r.p_hat - truth).abs() <= 0.1, "{:?}", r);
    }

    let single = sweep(&m, &goal, &[100.0], &o).unwrap();
    let p = parse_property("Pr[<=100](<> A.goal)", &m).unwrap();
    assert_eq!(single[0], estimate_probability(&m, &p, &o).unwrap());

    let independent = SmcOptions { seed_sharing: false, ..o };
    let rows = sweep(&m, &goal, &bounds, &independent).unwrap();
    assert_eq!(rows.len(), 10);

    let csv = sweep_csv(&rows);
    assert_eq!(csv.lines().next().unwrap(), "t_s,p_hat,ci_lo,ci_hi,k,N");
    assert_eq!(csv.lines().count(), 11);
}

#[test]
fn bad_bounds_are_rejected() {
    let m = bench(0.01);
    let goal = parse_goal("A.goal", &m).unwrap();
    let o = SmcOptions::new(0.1, 0.05, 3);
    for bounds in [vec![], vec![200.0, 100.0], vec![100.0, 100.0], vec![-5.0], vec![0.0]] {
        assert!(matches!(sweep(&m, &goal, &bounds, &o), Err(SmcError::Domain(_))));
    }
}
