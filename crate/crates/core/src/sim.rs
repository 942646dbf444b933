//! Single stochastic runs of a network: RK4 flows, boundary localisation,
//! exponential dwell races and channel synchronisation.
//!
//! Semantics of one macro step:
//!
//! 1. Automata are visited in name order. The first one that must act now
//!    fires: an enabled emit on an urgent channel, an eager location with an
//!    enabled initiable edge, an expired exponential dwell with an enabled
//!    edge, or an invariant that no longer holds. An expired dwell with no
//!    enabled edge is resampled.
//! 2. Otherwise time flows in RK4 steps of at most `step`, cut short at the
//!    next dwell deadline, the horizon, or the first instant a watched
//!    predicate (eager guards, urgent guards, negated invariants, flow gates,
//!    observer goals) becomes true. Crossings are bracketed by bisection to
//!    `tol_evt` and then polished by Illinois regula falsi.
//! 3. A fired emit synchronises with one enabled receiver in another
//!    automaton, chosen by edge weight. Emits never block.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::compiled::{CSync, Code, CompiledExpr, CompiledNetwork};
use crate::model::{initial_configuration, Configuration, DwellPolicy, NetworkModel};
use crate::trace::{Recorder, Trace};

/// Consecutive zero-duration transitions tolerated before declaring Zeno behaviour.
const ZENO_LIMIT: u32 = 100_000;
const MAX_BISECTIONS: usize = 64;
const MAX_POLISH: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Time bound `t_s` of the run.
    pub horizon: f64,
    /// Fixed RK4 step.
    pub step: f64,
    /// Width below which a bracketed crossing counts as located.
    pub tol_evt: f64,
    /// Slack allowed on invariants when checking recorded states.
    pub tol_inv: f64,
    pub seed: u64,
    /// Independent random stream under `seed`; SMC run `j` uses stream `j`.
    pub stream: u64,
    /// Record every `stride`-th integration step (events are always recorded).
    pub stride: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon: 7200.0,
            step: 0.1,
            tol_evt: 1e-6,
            tol_inv: 1e-9,
            seed: 0,
            stream: 0,
            stride: 10,
        }
    }
}

impl SimConfig {
    pub fn new(horizon: f64, seed: u64) -> Self {
        SimConfig {
            horizon,
            seed,
            ..SimConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad("horizon must be positive");
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return bad("step must be positive");
        }
        if !(self.tol_evt > 0.0 && self.tol_evt < self.step) {
            return bad("event tolerance must be positive and smaller than the step");
        }
        if !(self.tol_inv >= 0.0) {
            return bad("invariant tolerance must be non-negative");
        }
        if self.stride == 0 {
            return bad("sample stride must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation settings: {0}")]
    Config(String),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("non-finite value for `{variable}` at t = {time}")]
    NonFinite { time: f64, variable: String },
    #[error("event localisation did not converge after {MAX_BISECTIONS} bisections at t = {time}")]
    NoConvergence { time: f64 },
    #[error("predicate is not bracketed by the step")]
    NotBracketed,
    #[error("timelock at t = {time}: invariant of `{automaton}.{location}` fails and no edge is enabled")]
    Timelock {
        time: f64,
        automaton: String,
        location: String,
    },
    #[error("more than {ZENO_LIMIT} instantaneous transitions at t = {time}")]
    Zeno { time: f64 },
}

/// Pseudo-random generator for `stream` under master `seed`.
pub fn run_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Dwell delay for a location: `+inf` for eager locations, `-ln(u)/rate`
/// with `u` uniform in (0, 1] for exponential ones.
pub fn sample_delay<R: Rng + ?Sized>(policy: &DwellPolicy, rng: &mut R) -> f64 {
    match *policy {
        DwellPolicy::Eager => f64::INFINITY,
        DwellPolicy::Exponential { rate } => exponential_delay(rate, 1.0 - rng.random::<f64>()),
    }
}

/// Inverse-CDF transform of a uniform draw `u` in (0, 1].
pub fn exponential_delay(rate: f64, u: f64) -> f64 {
    -u.ln() / rate
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    Transition {
        automaton: usize,
        edge: usize,
        channel: Option<usize>,
    },
    /// Nothing can change any more; the state is held until the horizon.
    Deadlock,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndReason {
    Horizon,
    Deadlock,
    /// The observer asked to stop.
    Stopped,
}

/// Where in a run an observed state comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Point<'a> {
    Start,
    /// After the n-th integration step (1-based).
    Step(u64),
    /// After a transition fired.
    Event(&'a Event),
    End(EndReason),
}

/// Receives every state the simulator produces.
pub trait Observer {
    /// Predicate whose rising edge the simulator should locate exactly.
    fn watch(&self) -> Option<&CompiledExpr> {
        None
    }

    /// Returns `false` to stop the run.
    fn observe(&mut self, config: &Configuration, point: Point<'_>) -> bool;
}

impl Observer for () {
    fn observe(&mut self, _: &Configuration, _: Point<'_>) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Fired(Vec<Event>),
    Horizon,
    Deadlock,
    Stopped,
}

#[derive(Debug, Default)]
struct Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

/// Frozen discrete part of the state during one continuous step.
struct Mode<'a> {
    net: &'a CompiledNetwork,
    locs: &'a [usize],
    held: &'a [Vec<bool>],
}

impl Mode<'_> {
    fn derivative(&self, y: &[f64], dy: &mut [f64]) {
        let n_vars = self.net.n_vars;
        dy.fill(0.0);
        for (a, aut) in self.net.automata.iter().enumerate() {
            dy[n_vars + a] = 1.0;
            for (f, on) in aut.locations[self.locs[a]].flows.iter().zip(&self.held[a]) {
                if *on {
                    dy[f.slot] = f.rhs.num(y, self.locs);
                }
            }
        }
    }

    /// Classical fourth-order Runge-Kutta step of size `h` from `y0` into `out`.
    fn rk4(&self, y0: &[f64], h: f64, out: &mut [f64], s: &mut Scratch) {
        let n = y0.len();
        self.derivative(y0, &mut s.k1);
        for i in 0..n {
            s.tmp[i] = y0[i] + 0.5 * h * s.k1[i];
        }
        self.derivative(&s.tmp, &mut s.k2);
        for i in 0..n {
            s.tmp[i] = y0[i] + 0.5 * h * s.k2[i];
        }
        self.derivative(&s.tmp, &mut s.k3);
        for i in 0..n {
            s.tmp[i] = y0[i] + h * s.k3[i];
        }
        self.derivative(&s.tmp, &mut s.k4);
        for i in 0..n {
            out[i] = y0[i] + h / 6.0 * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
        }
    }

    /// Earliest `tau` in `(0, h]` at which `fires` holds, assuming it fails at
    /// `y0` and holds at `y0 + h`.
    fn locate(
        &self,
        y0: &[f64],
        h: f64,
        tol: f64,
        t0: f64,
        s: &mut Scratch,
        fires: impl Fn(&[f64]) -> bool,
        margin: impl Fn(&[f64]) -> f64,
    ) -> Result<f64, SimError> {
        let mut y = vec![0.0; y0.len()];
        let (mut lo, mut hi) = (0.0, h);
        let mut iterations = 0;
        while hi - lo > tol {
            if iterations == MAX_BISECTIONS {
                return Err(SimError::NoConvergence { time: t0 + lo });
            }
            iterations += 1;
            let mid = 0.5 * (lo + hi);
            self.rk4(y0, mid, &mut y, s);
            if fires(&y) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        // Illinois polishing keeps `hi` on the firing side.
        let mut ml = if lo == 0.0 {
            margin(y0)
        } else {
            self.rk4(y0, lo, &mut y, s);
            margin(&y)
        };
        self.rk4(y0, hi, &mut y, s);
        let mut mh = margin(&y);
        let mut last_hi: Option<bool> = None;
        for _ in 0..MAX_POLISH {
            if !(ml.is_finite() && mh.is_finite()) || ml >= 0.0 || mh <= 0.0 {
                break;
            }
            let c = lo + (hi - lo) * (ml / (ml - mh));
            if !(c > lo && c < hi) {
                break;
            }
            self.rk4(y0, c, &mut y, s);
            let mc = margin(&y);
            if fires(&y) {
                hi = c;
                mh = mc;
                if last_hi == Some(true) {
                    ml *= 0.5;
                }
                last_hi = Some(true);
            } else {
                lo = c;
                ml = mc;
                if last_hi == Some(false) {
                    mh *= 0.5;
                }
                last_hi = Some(false);
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
        }
        Ok(hi)
    }
}

fn refresh_gates(net: &CompiledNetwork, locs: &[usize], y: &[f64], held: &mut [Vec<bool>]) {
    for (a, aut) in net.automata.iter().enumerate() {
        let flows = &aut.locations[locs[a]].flows;
        held[a].clear();
        held[a].extend(flows.iter().map(|f| f.gate.as_ref().is_none_or(|g| g.truth(y, locs))));
    }
}

fn gates_at(net: &CompiledNetwork, config: &Configuration) -> Vec<Vec<bool>> {
    let mut held = vec![Vec::new(); net.automata.len()];
    refresh_gates(net, &config.locations, &config.state, &mut held);
    held
}

/// Advances every continuous variable and clock by one RK4 step of size `h`.
/// Flow gates are evaluated at the start of the step and held.
pub fn integrate_step(
    net: &CompiledNetwork,
    config: &Configuration,
    h: f64,
) -> Result<Configuration, SimError> {
    if !(h > 0.0) {
        return Err(SimError::Config("step must be positive".into()));
    }
    let held = gates_at(net, config);
    let mode = Mode {
        net,
        locs: &config.locations,
        held: &held,
    };
    let mut out = config.clone();
    let mut s = Scratch::new(config.state.len());
    mode.rk4(&config.state, h, &mut out.state, &mut s);
    out.time = config.time + h;
    check_finite(net, &out)?;
    Ok(out)
}

/// Time at which `predicate` first holds when integrating `step` forward
/// from `before`. Returns `before.time` when it already holds there.
pub fn locate_boundary(
    net: &CompiledNetwork,
    before: &Configuration,
    step: f64,
    predicate: &CompiledExpr,
    tol_evt: f64,
) -> Result<f64, SimError> {
    let locs = &before.locations;
    let p = predicate.code();
    if p.truth(&before.state, locs) {
        return Ok(before.time);
    }
    let held = gates_at(net, before);
    let mode = Mode { net, locs, held: &held };
    let mut s = Scratch::new(before.state.len());
    let mut after = vec![0.0; before.state.len()];
    mode.rk4(&before.state, step, &mut after, &mut s);
    if !p.truth(&after, locs) {
        return Err(SimError::NotBracketed);
    }
    let tau = mode.locate(
        &before.state,
        step,
        tol_evt,
        before.time,
        &mut s,
        |y| p.truth(y, locs),
        |y| p.margin(y, locs),
    )?;
    Ok(before.time + tau)
}

fn check_finite(net: &CompiledNetwork, config: &Configuration) -> Result<(), SimError> {
    if let Some(i) = config.state.iter().position(|v| !v.is_finite()) {
        let variable = if i < net.n_vars {
            net.model.variables[i].name.clone()
        } else {
            format!("{}.clock", net.model.automata[i - net.n_vars].name)
        };
        return Err(SimError::NonFinite {
            time: config.time,
            variable,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
enum Watch {
    Guard(usize, usize),
    Broken(usize),
    Gate(usize, usize, bool),
    External,
}

impl Watch {
    fn code<'a>(self, net: &'a CompiledNetwork, locs: &[usize], ext: Option<&'a Code>) -> &'a Code {
        match self {
            Watch::Guard(a, e) => net.automata[a].edges[e].guard.as_ref().expect("guarded"),
            Watch::Broken(a) => net.automata[a].locations[locs[a]].invariant.as_ref().expect("invariant"),
            Watch::Gate(a, f, _) => net.automata[a].locations[locs[a]].flows[f].gate.as_ref().expect("gate"),
            Watch::External => ext.expect("observer watch"),
        }
    }

    /// True when the event this watch stands for has happened at `y`.
    fn fires(self, code: &Code, y: &[f64], locs: &[usize]) -> bool {
        match self {
            Watch::Guard(..) | Watch::External => code.truth(y, locs),
            Watch::Broken(_) => !code.truth(y, locs),
            Watch::Gate(_, _, held) => code.truth(y, locs) != held,
        }
    }

    fn margin(self, code: &Code, y: &[f64], locs: &[usize]) -> f64 {
        match self {
            Watch::Guard(..) | Watch::External => code.margin(y, locs),
            Watch::Broken(_) => -code.margin(y, locs),
            Watch::Gate(_, _, true) => -code.margin(y, locs),
            Watch::Gate(_, _, false) => code.margin(y, locs),
        }
    }
}

/// Step-by-step execution of one run.
pub struct Simulator<'n> {
    net: &'n CompiledNetwork,
    settings: SimConfig,
    config: Configuration,
    deadlines: Vec<f64>,
    held: Vec<Vec<bool>>,
    rng: ChaCha8Rng,
    steps: u64,
    instant_streak: u32,
    stop: bool,
    scratch: Scratch,
    next: Vec<f64>,
    watches: Vec<Watch>,
    candidates: Vec<usize>,
}

impl<'n> Simulator<'n> {
    pub fn new(net: &'n CompiledNetwork, settings: SimConfig) -> Result<Self, SimError> {
        settings.validate()?;
        let config = initial_configuration(&net.model).map_err(|e| SimError::Model(e.to_string()))?;
        let mut rng = run_rng(settings.seed, settings.stream);
        let deadlines = (0..net.automata.len())
            .map(|a| {
                let loc = &net.automata[a].locations[config.locations[a]];
                config.time + sample_delay(&loc.dwell, &mut rng)
            })
            .collect();
        let n = config.state.len();
        Ok(Simulator {
            net,
            settings,
            deadlines,
            held: vec![Vec::new(); net.automata.len()],
            rng,
            steps: 0,
            instant_streak: 0,
            stop: false,
            scratch: Scratch::new(n),
            next: vec![0.0; n],
            watches: Vec::new(),
            candidates: Vec::new(),
            config,
        })
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn settings(&self) -> &SimConfig {
        &self.settings
    }

    /// Absolute time at which each automaton's exponential dwell expires
    /// (`+inf` in eager locations).
    pub fn deadlines(&self) -> &[f64] {
        &self.deadlines
    }

    /// Runs macro steps until the horizon, a deadlock, or the observer stops.
    pub fn run(&mut self, obs: &mut impl Observer) -> Result<EndReason, SimError> {
        if !obs.observe(&self.config, Point::Start) {
            return Ok(EndReason::Stopped);
        }
        let reason = loop {
            match self.macro_step(obs)? {
                StepOutcome::Fired(_) => {}
                StepOutcome::Horizon => break EndReason::Horizon,
                StepOutcome::Deadlock => break EndReason::Deadlock,
                StepOutcome::Stopped => return Ok(EndReason::Stopped),
            }
        };
        obs.observe(&self.config, Point::End(reason));
        Ok(reason)
    }

    /// Lets time flow until the next transition fires (or the run ends) and
    /// fires it.
    pub fn macro_step(&mut self, obs: &mut impl Observer) -> Result<StepOutcome, SimError> {
        loop {
            if self.stop {
                return Ok(StepOutcome::Stopped);
            }
            if let Some(events) = self.act_now(obs)? {
                return Ok(if self.stop {
                    StepOutcome::Stopped
                } else {
                    StepOutcome::Fired(events)
                });
            }
            if self.config.time >= self.settings.horizon {
                return Ok(StepOutcome::Horizon);
            }
            let ext = obs.watch().map(|w| w.code());
            if self.is_quiescent(ext) {
                let event = Event {
                    time: self.config.time,
                    kind: EventKind::Deadlock,
                };
                obs.observe(&self.config, Point::Event(&event));
                return Ok(StepOutcome::Deadlock);
            }
            self.flow(obs)?;
        }
    }

    fn enabled(&self, a: usize, e: usize) -> bool {
        self.net.automata[a].edges[e]
            .guard
            .as_ref()
            .is_none_or(|g| g.truth(&self.config.state, &self.config.locations))
    }

    fn is_urgent_emit(&self, a: usize, e: usize) -> bool {
        matches!(self.net.automata[a].edges[e].sync, CSync::Emit(c) if self.net.urgent[c])
    }

    /// Fires the first automaton (by name) that must act at the current instant.
    fn act_now(&mut self, obs: &mut impl Observer) -> Result<Option<Vec<Event>>, SimError> {
        let net = self.net;
        for &a in &net.order {
            let li = self.config.locations[a];
            let loc = &net.automata[a].locations[li];
            let mut any = false;
            let mut urgent = false;
            for &e in &loc.initiable {
                if self.enabled(a, e) {
                    any = true;
                    urgent |= self.is_urgent_emit(a, e);
                }
            }
            let due = self.config.time >= self.deadlines[a];
            let broken = loc
                .invariant
                .as_ref()
                .is_some_and(|i| !i.truth(&self.config.state, &self.config.locations));
            let eager = loc.dwell == DwellPolicy::Eager;
            if urgent || (any && (eager || due || broken)) {
                return self.fire(a, urgent, obs).map(Some);
            }
            if broken {
                return Err(SimError::Timelock {
                    time: self.config.time,
                    automaton: net.model.automata[a].name.clone(),
                    location: net.model.automata[a].locations[li].name.clone(),
                });
            }
            if due {
                // memoryless: nothing enabled, so draw a fresh delay
                self.deadlines[a] = self.config.time + sample_delay(&loc.dwell, &mut self.rng);
            }
        }
        Ok(None)
    }

    fn pick_weighted(&mut self, options: &[(usize, usize)]) -> (usize, usize) {
        if options.len() == 1 {
            return options[0];
        }
        let weight = |&(a, e): &(usize, usize)| self.net.automata[a].edges[e].weight;
        let total: f64 = options.iter().map(weight).sum();
        let mut x = self.rng.random::<f64>() * total;
        for opt in options {
            x -= weight(opt);
            if x < 0.0 {
                return *opt;
            }
        }
        *options.last().expect("non-empty")
    }

    fn fire(&mut self, a: usize, urgent_only: bool, obs: &mut impl Observer) -> Result<Vec<Event>, SimError> {
        let net = self.net;
        let li = self.config.locations[a];
        self.candidates.clear();
        for &e in &net.automata[a].locations[li].initiable {
            if self.enabled(a, e) && (!urgent_only || self.is_urgent_emit(a, e)) {
                self.candidates.push(e);
            }
        }
        let options: Vec<(usize, usize)> = self.candidates.iter().map(|&e| (a, e)).collect();
        let (_, e) = self.pick_weighted(&options);
        let edge = &net.automata[a].edges[e];
        let mut fired = vec![(a, e)];
        let channel = match edge.sync {
            CSync::Emit(c) => Some(c),
            _ => None,
        };
        if let Some(c) = channel {
            let mut receivers = Vec::new();
            for &b in &net.order {
                if b == a {
                    continue;
                }
                let lb = self.config.locations[b];
                for (eb, edge_b) in net.automata[b].edges.iter().enumerate() {
                    if edge_b.source == lb && edge_b.sync == CSync::Receive(c) && self.enabled(b, eb) {
                        receivers.push((b, eb));
                    }
                }
            }
            if !receivers.is_empty() {
                fired.push(self.pick_weighted(&receivers));
            }
        }

        // Resets read the pre-transition valuation.
        let mut assignments = Vec::new();
        for &(x, ex) in &fired {
            for (slot, value) in &net.automata[x].edges[ex].resets {
                assignments.push((*slot, value.num(&self.config.state, &self.config.locations)));
            }
        }
        for &(x, ex) in &fired {
            let edge = &net.automata[x].edges[ex];
            if edge.target != edge.source {
                self.config.state[net.n_vars + x] = 0.0;
            }
            self.config.locations[x] = edge.target;
        }
        for (slot, value) in assignments {
            self.config.state[slot] = value;
        }
        for &(x, _) in &fired {
            let dwell = net.automata[x].locations[self.config.locations[x]].dwell;
            self.deadlines[x] = self.config.time + sample_delay(&dwell, &mut self.rng);
        }
        check_finite(net, &self.config)?;

        self.instant_streak += 1;
        if self.instant_streak > ZENO_LIMIT {
            return Err(SimError::Zeno {
                time: self.config.time,
            });
        }
        let events: Vec<Event> = fired
            .iter()
            .map(|&(x, ex)| Event {
                time: self.config.time,
                kind: EventKind::Transition {
                    automaton: x,
                    edge: ex,
                    channel,
                },
            })
            .collect();
        for ev in &events {
            if !obs.observe(&self.config, Point::Event(ev)) {
                self.stop = true;
            }
        }
        Ok(events)
    }

    /// Predicates that can still become true while time flows.
    fn collect_watches(&mut self, ext: Option<&Code>) {
        let net = self.net;
        let (y, locs) = (&self.config.state, &self.config.locations);
        self.watches.clear();
        for (a, aut) in net.automata.iter().enumerate() {
            let loc = &aut.locations[locs[a]];
            let eager = loc.dwell == DwellPolicy::Eager;
            for &e in &loc.initiable {
                let edge = &aut.edges[e];
                let urgent = matches!(edge.sync, CSync::Emit(c) if net.urgent[c]);
                if let Some(g) = &edge.guard {
                    if (eager || urgent) && !g.truth(y, locs) {
                        self.watches.push(Watch::Guard(a, e));
                    }
                }
            }
            if let Some(inv) = &loc.invariant {
                if inv.truth(y, locs) {
                    self.watches.push(Watch::Broken(a));
                }
            }
            for (f, flow) in loc.flows.iter().enumerate() {
                if flow.gate.is_some() {
                    self.watches.push(Watch::Gate(a, f, self.held[a][f]));
                }
            }
        }
        if let Some(code) = ext {
            if !code.truth(y, locs) {
                self.watches.push(Watch::External);
            }
        }
    }

    /// Nothing is scheduled, nothing flows, and no watched predicate reads a clock.
    fn is_quiescent(&mut self, ext: Option<&Code>) -> bool {
        if self.deadlines.iter().any(|d| d.is_finite()) {
            return false;
        }
        let net = self.net;
        refresh_gates(net, &self.config.locations, &self.config.state, &mut self.held);
        let mode = Mode {
            net,
            locs: &self.config.locations,
            held: &self.held,
        };
        mode.derivative(&self.config.state, &mut self.scratch.k1);
        if net.var_slots.iter().any(|&i| self.scratch.k1[i] != 0.0) {
            return false;
        }
        self.collect_watches(ext);
        let n_vars = net.n_vars;
        let reads_clock = |i: usize| i >= n_vars;
        let locs = self.config.locations.clone();
        !self
            .watches
            .iter()
            .any(|w| w.code(net, &locs, ext).reads_slot(&reads_clock))
    }

    /// One integration step, cut short at the first watched crossing.
    fn flow(&mut self, obs: &mut impl Observer) -> Result<(), SimError> {
        let net = self.net;
        let t0 = self.config.time;
        let mut h = self.settings.step;
        let mut end = t0 + h;
        let to_horizon = self.settings.horizon - t0;
        if to_horizon <= h {
            h = to_horizon;
            end = self.settings.horizon;
        }
        let next_deadline = self.deadlines.iter().copied().fold(f64::INFINITY, f64::min);
        if next_deadline - t0 < h {
            h = (next_deadline - t0).max(0.0);
            end = next_deadline;
        }
        refresh_gates(net, &self.config.locations, &self.config.state, &mut self.held);
        let ext = obs.watch().map(|w| w.code());
        self.collect_watches(ext);

        let mode = Mode {
            net,
            locs: &self.config.locations,
            held: &self.held,
        };
        let y0 = &self.config.state;
        mode.rk4(y0, h, &mut self.next, &mut self.scratch);
        let mut crossing: Option<f64> = None;
        for &w in &self.watches {
            let code = w.code(net, mode.locs, ext);
            if !w.fires(code, &self.next, mode.locs) {
                continue;
            }
            let tau = mode.locate(
                y0,
                h,
                self.settings.tol_evt,
                t0,
                &mut self.scratch,
                |y| w.fires(code, y, mode.locs),
                |y| w.margin(code, y, mode.locs),
            )?;
            crossing = Some(crossing.map_or(tau, |c: f64| c.min(tau)));
        }
        match crossing {
            Some(tau) if tau < h => {
                mode.rk4(y0, tau, &mut self.next, &mut self.scratch);
                self.config.time = t0 + tau;
            }
            _ => self.config.time = end,
        }
        std::mem::swap(&mut self.config.state, &mut self.next);
        check_finite(net, &self.config)?;
        if self.config.time > t0 {
            self.instant_streak = 0;
        }
        self.steps += 1;
        if !obs.observe(&self.config, Point::Step(self.steps)) {
            self.stop = true;
        }
        Ok(())
    }
}

/// Simulates one run of `model` and records it.
pub fn simulate(model: &NetworkModel, settings: &SimConfig) -> Result<Trace, SimError> {
    let net = CompiledNetwork::new(model).map_err(|e| SimError::Model(e.to_string()))?;
    simulate_compiled(&net, settings)
}

pub fn simulate_compiled(net: &CompiledNetwork, settings: &SimConfig) -> Result<Trace, SimError> {
    let mut sim = Simulator::new(net, settings.clone())?;
    let mut recorder = Recorder::new(net, settings.stride, settings.horizon);
    let reason = sim.run(&mut recorder)?;
    Ok(recorder.finish(reason))
}
