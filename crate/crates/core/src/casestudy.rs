//! The robot-assisted walking scenario: a mobile robot guiding a patient,
//! its battery, and the patient's fatigue, plus closed-form references for
//! each continuous dynamic.

use thiserror::Error;

use crate::dsl::parse_expression_in;
use crate::expr::Expr;
use crate::model::{
    ChannelDecl, DwellPolicy, Edge, Flow, HybridAutomaton, Location, NetworkModel, Reset,
    SyncLabel, VarDecl, VarKind,
};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid parameters: {0}")]
pub struct ParamError(pub String);

/// Physical and behavioural constants of the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    /// Cruise speed (cm/s).
    pub v_max: f64,
    /// Acceleration and deceleration (cm/s²).
    pub a_max: f64,
    /// Walking speed of the patient (cm/s).
    pub v_human: f64,
    /// Discharge rate above 80 % and recharge rate from 80 % to 100 % (%/s).
    pub r1: f64,
    /// Rate between 20 % and 80 % (%/s).
    pub r2: f64,
    /// Rate below 20 % (%/s).
    pub r3: f64,
    /// Fatigue build-up rate while walking (1/s).
    pub lambda_f: f64,
    /// Recovery rate while resting (1/s).
    pub mu_f: f64,
    /// Rate at which the idle robot takes action (1/s).
    pub lambda_idle: f64,
    /// Rate at which the moving robot decides to stop (1/s).
    pub lambda_move: f64,
    /// Weight of recharging against moving when leaving idle.
    pub p_recharge: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            v_max: 65.0,
            a_max: 50.0,
            v_human: 65.0,
            r1: 0.035,
            r2: 0.008,
            r3: 0.055,
            lambda_f: 0.005,
            mu_f: 0.005,
            lambda_idle: 1.0 / 45.0,
            lambda_move: 1.0 / 600.0,
            p_recharge: 0.5,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let rates = [
            ("v_max", self.v_max),
            ("a_max", self.a_max),
            ("v_human", self.v_human),
            ("r1", self.r1),
            ("r2", self.r2),
            ("r3", self.r3),
            ("lambda_f", self.lambda_f),
            ("mu_f", self.mu_f),
            ("lambda_idle", self.lambda_idle),
            ("lambda_move", self.lambda_move),
        ];
        for (name, value) in rates {
            if !(value.is_finite() && value > 0.0) {
                return Err(ParamError(format!("{} must be positive, got {}", name, value)));
            }
        }
        if !(0.0..=1.0).contains(&self.p_recharge) {
            return Err(ParamError(format!(
                "p_recharge must lie in [0, 1], got {}",
                self.p_recharge
            )));
        }
        Ok(())
    }
}

/// Fatigue thresholds of the monitoring controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerParams {
    /// The robot stops as soon as fatigue reaches this level.
    pub f_high: f64,
    /// The robot only sets off again once fatigue is back to this level.
    pub f_low: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        ControllerParams {
            f_high: 0.9,
            f_low: 0.2,
        }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(0.0 <= self.f_low && self.f_low < self.f_high && self.f_high <= 1.0) {
            return Err(ParamError(format!(
                "need 0 <= F_low < F_high <= 1, got F_low = {}, F_high = {}",
                self.f_low, self.f_high
            )));
        }
        Ok(())
    }
}

pub const ROBOT: &str = "Robot";
pub const BATTERY: &str = "Battery";
pub const HUMAN: &str = "Human";

/// The reachability goal "the patient passes out while the robot is under way".
pub const PASS_OUT_GOAL: &str = "Human.passed_out && (Robot.starting || Robot.moving)";

fn e(text: &str) -> Expr {
    parse_expression_in(text, Some("t")).expect("builder expression")
}

fn flow(var: &str, rhs: &str) -> Flow {
    Flow {
        var: var.into(),
        rhs: e(rhs),
        gate: None,
    }
}

fn location(name: &str, flows: Vec<Flow>, invariant: Option<&str>, dwell: DwellPolicy) -> Location {
    Location {
        name: name.into(),
        flows,
        invariant: invariant.map(e),
        dwell,
    }
}

fn edge(source: &str, target: &str, guard: Option<&str>, sync: SyncLabel) -> Edge {
    Edge {
        source: source.into(),
        target: target.into(),
        guard: guard.map(e),
        sync,
        resets: Vec::new(),
        weight: 1.0,
    }
}

fn emit(c: &str) -> SyncLabel {
    SyncLabel::Emit(c.into())
}

fn receive(c: &str) -> SyncLabel {
    SyncLabel::Receive(c.into())
}

fn still() -> Vec<Flow> {
    vec![flow("V", "0"), flow("r", "0")]
}

pub fn build_robot(params: &ScenarioParams) -> HybridAutomaton {
    let eager = DwellPolicy::Eager;
    let locations = vec![
        location(
            "idle",
            still(),
            None,
            DwellPolicy::Exponential {
                rate: params.lambda_idle,
            },
        ),
        location(
            "starting",
            vec![flow("V", "a_max"), flow("r", "V")],
            Some("V <= v_max"),
            eager,
        ),
        location(
            "moving",
            vec![flow("V", "0"), flow("r", "v_max")],
            None,
            DwellPolicy::Exponential {
                rate: params.lambda_move,
            },
        ),
        location(
            "stopping",
            vec![flow("V", "-a_max"), flow("r", "V")],
            Some("V >= 0"),
            eager,
        ),
        location("recharging", still(), None, eager),
        location("dead", still(), None, eager),
    ];
    let mut edges = Vec::new();
    if params.p_recharge < 1.0 {
        let mut go = edge("idle", "starting", None, emit("start_moving"));
        go.weight = 1.0 - params.p_recharge;
        edges.push(go);
    }
    if params.p_recharge > 0.0 {
        let mut charge = edge("idle", "recharging", None, emit("start_recharging"));
        charge.weight = params.p_recharge;
        edges.push(charge);
    }
    edges.push(edge("starting", "moving", Some("V >= v_max"), SyncLabel::None));
    edges.push(edge("moving", "stopping", None, emit("stop_moving")));
    edges.push(edge("stopping", "idle", Some("V <= 0"), SyncLabel::None));
    edges.push(edge("recharging", "idle", None, receive("full_battery")));
    for from in ["idle", "starting", "moving", "stopping"] {
        let mut die = edge(from, "dead", None, receive("dead_battery"));
        die.resets.push(Reset {
            target: "V".into(),
            value: Expr::num(0.0),
        });
        edges.push(die);
    }
    HybridAutomaton {
        name: ROBOT.into(),
        clock: None,
        locations,
        edges,
        initial: "idle".into(),
    }
}

pub fn build_battery(_params: &ScenarioParams) -> HybridAutomaton {
    let eager = DwellPolicy::Eager;
    let band = |name: &str, rate: &str, invariant: &str| {
        location(name, vec![flow("C", rate)], Some(invariant), eager)
    };
    let locations = vec![
        band("full_to_80", "-r1", "C >= 80"),
        band("80_to_20", "-r2", "C >= 20"),
        band("20_to_empty", "-r3", "C >= 0"),
        location("empty", vec![flow("C", "0")], None, eager),
        band("recharging_upto20", "r3", "C <= 20"),
        band("recharging_upto80", "r2", "C <= 80"),
        band("recharging_upto100", "r1", "C <= 100"),
        location("recharging_full", vec![flow("C", "0")], None, eager),
    ];
    let edges = vec![
        edge("full_to_80", "80_to_20", Some("C <= 80"), SyncLabel::None),
        edge("80_to_20", "20_to_empty", Some("C <= 20"), SyncLabel::None),
        edge("20_to_empty", "empty", Some("C <= 0"), emit("dead_battery")),
        edge("recharging_upto20", "recharging_upto80", Some("C >= 20"), SyncLabel::None),
        edge("recharging_upto80", "recharging_upto100", Some("C >= 80"), SyncLabel::None),
        edge("recharging_upto100", "recharging_full", Some("C >= 100"), SyncLabel::None),
        edge("recharging_full", "full_to_80", None, emit("full_battery")),
        edge("full_to_80", "recharging_upto100", None, receive("start_recharging")),
        edge("80_to_20", "recharging_upto80", None, receive("start_recharging")),
        edge("20_to_empty", "recharging_upto20", None, receive("start_recharging")),
    ];
    HybridAutomaton {
        name: BATTERY.into(),
        clock: None,
        locations,
        edges,
        initial: "full_to_80".into(),
    }
}

pub fn build_human(_params: &ScenarioParams) -> HybridAutomaton {
    let eager = DwellPolicy::Eager;
    let locations = vec![
        location(
            "idle",
            vec![
                Flow {
                    var: "F".into(),
                    rhs: e("-mu_f * exp(-mu_f * t)"),
                    gate: Some(e("F > 0")),
                },
                flow("h", "0"),
            ],
            None,
            eager,
        ),
        location(
            "moving",
            vec![flow("F", "lambda_f * exp(-lambda_f * t)"), flow("h", "v_human")],
            Some("F <= 1"),
            eager,
        ),
        location("passed_out", vec![flow("F", "0"), flow("h", "0")], None, eager),
    ];
    let edges = vec![
        edge("idle", "moving", None, receive("start_moving")),
        edge("moving", "idle", None, receive("stop_moving")),
        edge("moving", "passed_out", Some("F >= 1"), SyncLabel::None),
    ];
    HybridAutomaton {
        name: HUMAN.into(),
        clock: Some("t".into()),
        locations,
        edges,
        initial: "idle".into(),
    }
}

fn var(name: &str, init: f64, unit: &str) -> VarDecl {
    VarDecl {
        name: name.into(),
        kind: VarKind::Var,
        init,
        unit: Some(unit.into()),
    }
}

fn constant(name: &str, value: f64, unit: &str) -> VarDecl {
    VarDecl {
        name: name.into(),
        kind: VarKind::Const,
        init: value,
        unit: Some(unit.into()),
    }
}

fn declarations(params: &ScenarioParams) -> Vec<VarDecl> {
    vec![
        var("V", 0.0, "cm/s"),
        var("r", 0.0, "cm"),
        var("C", 100.0, "%"),
        var("F", 0.0, "1"),
        var("h", 0.0, "cm"),
        constant("a_max", params.a_max, "cm/s^2"),
        constant("v_max", params.v_max, "cm/s"),
        constant("v_human", params.v_human, "cm/s"),
        constant("r1", params.r1, "%/s"),
        constant("r2", params.r2, "%/s"),
        constant("r3", params.r3, "%/s"),
        constant("lambda_f", params.lambda_f, "1/s"),
        constant("mu_f", params.mu_f, "1/s"),
    ]
}

fn channels() -> Vec<ChannelDecl> {
    let plain = |n: &str| ChannelDecl {
        name: n.into(),
        urgent: false,
    };
    vec![
        plain("start_moving"),
        plain("stop_moving"),
        plain("start_recharging"),
        ChannelDecl {
            name: "full_battery".into(),
            urgent: true,
        },
        plain("dead_battery"),
    ]
}

/// Robot, battery and patient composed over five channels.
pub fn build_scenario(params: &ScenarioParams) -> Result<NetworkModel, ParamError> {
    params.validate()?;
    Ok(NetworkModel {
        name: "scenario".into(),
        variables: declarations(params),
        channels: channels(),
        automata: vec![build_robot(params), build_battery(params), build_human(params)],
    })
}

/// The scenario with a fatigue monitor on the robot: it stops the moment the
/// patient's fatigue reaches `f_high` and only sets off again when fatigue
/// is at most `f_low`.
pub fn build_fatigue_aware_scenario(
    params: &ScenarioParams,
    controller: &ControllerParams,
) -> Result<NetworkModel, ParamError> {
    controller.validate()?;
    let mut model = build_scenario(params)?;
    model.name = "scenario_controller".into();
    model.variables.push(constant("F_high", controller.f_high, "1"));
    model.variables.push(constant("F_low", controller.f_low, "1"));
    let robot = model.automaton_mut(ROBOT).expect("robot");
    robot.location_mut("moving").expect("moving").invariant = Some(e("F <= F_high"));
    for edge in robot.edges.iter_mut() {
        if edge.source == "idle" && edge.target == "starting" {
            edge.guard = Some(e("F <= F_low"));
        }
    }
    Ok(model)
}

/// A network with only the battery, discharging from full and never recharged.
pub fn build_battery_only(params: &ScenarioParams) -> Result<NetworkModel, ParamError> {
    params.validate()?;
    Ok(NetworkModel {
        name: "battery".into(),
        variables: vec![
            var("C", 100.0, "%"),
            constant("r1", params.r1, "%/s"),
            constant("r2", params.r2, "%/s"),
            constant("r3", params.r3, "%/s"),
        ],
        channels: channels()
            .into_iter()
            .filter(|c| c.name != "start_moving" && c.name != "stop_moving")
            .collect(),
        automata: vec![build_battery(params)],
    })
}

/// A deterministic walking plan: the patient walks during each `(start, stop)`
/// interval and rests in between.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub walks: Vec<(f64, f64)>,
}

impl Schedule {
    pub fn new(walks: Vec<(f64, f64)>) -> Self {
        Schedule { walks }
    }

    /// Walk 0-600 s, rest 600-1200 s, walk 1200-1800 s.
    pub fn walk_rest_walk() -> Self {
        Schedule::new(vec![(0.0, 600.0), (1200.0, 1800.0)])
    }

    fn validate(&self, params: &ScenarioParams) -> Result<(), ParamError> {
        let ramp = params.v_max / params.a_max;
        let mut free_from = 0.0;
        for &(start, stop) in &self.walks {
            if !(start >= free_from && stop - start >= ramp) {
                return Err(ParamError(format!(
                    "walk ({}, {}) overlaps the previous one or is shorter than the {} s ramp",
                    start, stop, ramp
                )));
            }
            free_from = stop + ramp;
        }
        Ok(())
    }
}

/// The scenario with the robot's random choices replaced by `schedule`.
/// The robot runs through `idle_i -> starting_i -> moving_i -> stopping_i`
/// for every walk `i`, driven by the global time `T`.
pub fn build_scripted_scenario(
    params: &ScenarioParams,
    schedule: &Schedule,
) -> Result<NetworkModel, ParamError> {
    schedule.validate(params)?;
    let mut model = build_scenario(params)?;
    model.name = "scripted".into();
    model.variables.insert(0, var("T", 0.0, "s"));
    let with_t = |mut flows: Vec<Flow>| {
        flows.push(flow("T", "1"));
        flows
    };
    let eager = DwellPolicy::Eager;
    let mut locations = Vec::new();
    let mut edges = Vec::new();
    for (i, &(start, stop)) in schedule.walks.iter().enumerate() {
        let (idle, starting, moving, stopping) = (
            format!("idle_{}", i),
            format!("starting_{}", i),
            format!("moving_{}", i),
            format!("stopping_{}", i),
        );
        locations.push(location(&idle, with_t(still()), Some(&format!("T <= {}", start)), eager));
        locations.push(location(
            &starting,
            with_t(vec![flow("V", "a_max"), flow("r", "V")]),
            Some("V <= v_max"),
            eager,
        ));
        locations.push(location(
            &moving,
            with_t(vec![flow("V", "0"), flow("r", "v_max")]),
            Some(&format!("T <= {}", stop)),
            eager,
        ));
        locations.push(location(
            &stopping,
            with_t(vec![flow("V", "-a_max"), flow("r", "V")]),
            Some("V >= 0"),
            eager,
        ));
        edges.push(edge(&idle, &starting, Some(&format!("T >= {}", start)), emit("start_moving")));
        edges.push(edge(&starting, &moving, Some("V >= v_max"), SyncLabel::None));
        edges.push(edge(&moving, &stopping, Some(&format!("T >= {}", stop)), emit("stop_moving")));
        let next = format!("idle_{}", i + 1);
        edges.push(edge(&stopping, &next, Some("V <= 0"), SyncLabel::None));
    }
    let last = format!("idle_{}", schedule.walks.len());
    locations.push(location(&last, with_t(still()), None, eager));
    for loc in locations.iter().map(|l| l.name.clone()).collect::<Vec<_>>() {
        let mut die = edge(&loc, "dead", None, receive("dead_battery"));
        die.resets.push(Reset {
            target: "V".into(),
            value: Expr::num(0.0),
        });
        edges.push(die);
    }
    locations.push(location("dead", with_t(still()), None, eager));
    let robot = model.automaton_mut(ROBOT).expect("robot");
    robot.locations = locations;
    robot.edges = edges;
    robot.initial = "idle_0".into();
    Ok(model)
}

/// The patient walking nonstop from fatigue `f0`: the robot starts at once
/// and never stops.
pub fn build_nonstop_walk(params: &ScenarioParams, f0: f64) -> Result<NetworkModel, ParamError> {
    if !(0.0..=1.0).contains(&f0) {
        return Err(ParamError(format!("initial fatigue must lie in [0, 1], got {}", f0)));
    }
    let mut model = build_scripted_scenario(params, &Schedule::new(vec![(0.0, 1e12)]))?;
    model.set_initial("F", f0).expect("F declared");
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FatiguePhase {
    Walking,
    Resting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChargeMode {
    Discharging,
    Recharging,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionPhase {
    Accelerating,
    Cruising,
    Decelerating,
}

/// Values of the continuous variables at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleState {
    pub v: f64,
    pub r: f64,
    pub c: f64,
    pub f: f64,
    pub h: f64,
}

/// Closed-form solutions of the scenario's flows.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticOracles {
    pub params: ScenarioParams,
}

pub fn analytic_oracles(params: &ScenarioParams) -> Result<AnalyticOracles, ParamError> {
    params.validate()?;
    Ok(AnalyticOracles {
        params: params.clone(),
    })
}

impl AnalyticOracles {
    /// Fatigue `tau` seconds into a phase entered with fatigue `f0`.
    pub fn fatigue(&self, f0: f64, phase: FatiguePhase, tau: f64) -> f64 {
        match phase {
            FatiguePhase::Walking => {
                (f0 + 1.0 - (-self.params.lambda_f * tau).exp()).clamp(0.0, 1.0)
            }
            FatiguePhase::Resting => (f0 - (1.0 - (-self.params.mu_f * tau).exp())).max(0.0),
        }
    }

    /// Walking time from fatigue `f0` until fatigue reaches 1.
    pub fn time_to_exhaustion(&self, f0: f64) -> f64 {
        -f0.ln() / self.params.lambda_f
    }

    /// Resting time from fatigue `f0` until full recovery.
    pub fn time_to_recovery(&self, f0: f64) -> f64 {
        -(1.0 - f0).ln() / self.params.mu_f
    }

    fn bands(&self, mode: ChargeMode) -> [(f64, f64, f64); 3] {
        let p = &self.params;
        match mode {
            ChargeMode::Discharging => [(100.0, 80.0, p.r1), (80.0, 20.0, p.r2), (20.0, 0.0, p.r3)],
            ChargeMode::Recharging => [(0.0, 20.0, p.r3), (20.0, 80.0, p.r2), (80.0, 100.0, p.r1)],
        }
    }

    /// Charge `tau` seconds after starting from `c0` in the given mode.
    pub fn battery_level(&self, c0: f64, mode: ChargeMode, tau: f64) -> f64 {
        let mut c = c0;
        let mut left = tau;
        for (from, to, rate) in self.bands(mode) {
            let (lo, hi) = (from.min(to), from.max(to));
            if c < lo || c > hi || left <= 0.0 {
                continue;
            }
            if (mode == ChargeMode::Discharging && c == lo) || (mode == ChargeMode::Recharging && c == hi) {
                continue;
            }
            let need = (c - to).abs() / rate;
            if left <= need {
                return c + (to - c).signum() * rate * left;
            }
            left -= need;
            c = to;
        }
        c
    }

    /// Time for the charge to go from `c0` to the end of the given mode (0 % or 100 %).
    pub fn battery_time(&self, c0: f64, mode: ChargeMode) -> f64 {
        let mut total = 0.0;
        for (from, to, rate) in self.bands(mode) {
            let (lo, hi) = (from.min(to), from.max(to));
            let start = c0.clamp(lo, hi);
            let span = match mode {
                ChargeMode::Discharging => start - lo,
                ChargeMode::Recharging => hi - start,
            };
            total += span / rate;
        }
        total
    }

    /// Velocity and distance `tau` seconds into a motion phase entered at speed `v0`.
    pub fn trapezoid(&self, v0: f64, phase: MotionPhase, tau: f64) -> (f64, f64) {
        let a = match phase {
            MotionPhase::Accelerating => self.params.a_max,
            MotionPhase::Cruising => 0.0,
            MotionPhase::Decelerating => -self.params.a_max,
        };
        (v0 + a * tau, v0 * tau + 0.5 * a * tau * tau)
    }

    /// Duration of the acceleration (and deceleration) ramp.
    pub fn ramp_time(&self) -> f64 {
        self.params.v_max / self.params.a_max
    }

    /// Distance covered during one ramp.
    pub fn ramp_distance(&self) -> f64 {
        self.params.v_max * self.params.v_max / (2.0 * self.params.a_max)
    }

    /// State of the scripted scenario at time `t`, starting from the
    /// scenario's initial values.
    pub fn along(&self, schedule: &Schedule, t: f64) -> OracleState {
        let p = &self.params;
        let ramp = self.ramp_time();
        let (mut v, mut r, mut f, mut h) = (0.0, 0.0, 0.0, 0.0);
        let mut now = 0.0;
        let mut exhausted = false;
        for &(start, stop) in &schedule.walks {
            if t <= now {
                break;
            }
            // rest until the walk starts
            let rest_end = start.min(t);
            if !exhausted {
                f = self.fatigue(f, FatiguePhase::Resting, rest_end - now);
            }
            now = rest_end;
            if t <= start {
                break;
            }
            // walk: fatigue, patient distance
            let walk_end = stop.min(t);
            if !exhausted {
                let to_exhaustion = self.time_to_exhaustion(f);
                let walked = walk_end - start;
                if walked >= to_exhaustion {
                    exhausted = true;
                    f = 1.0;
                    h += p.v_human * to_exhaustion;
                } else {
                    f = self.fatigue(f, FatiguePhase::Walking, walked);
                    h += p.v_human * walked;
                }
            }
            // robot: accelerate, cruise, decelerate
            let acc = (t - start).clamp(0.0, ramp);
            let (va, ra) = self.trapezoid(0.0, MotionPhase::Accelerating, acc);
            v = va;
            r += ra;
            if t > start + ramp {
                let cruise = (t.min(stop) - start - ramp).max(0.0);
                r += p.v_max * cruise;
            }
            if t > stop {
                let dec = (t - stop).min(ramp);
                let (vd, rd) = self.trapezoid(p.v_max, MotionPhase::Decelerating, dec);
                v = vd;
                r += rd;
            }
            now = walk_end;
            if t <= stop {
                break;
            }
        }
        if t > now && !exhausted {
            f = self.fatigue(f, FatiguePhase::Resting, t - now);
        }
        OracleState {
            v,
            r,
            c: self.battery_level(100.0, ChargeMode::Discharging, t),
            f,
            h,
        }
    }
}
