//! Recorded runs and their CSV export.

use std::io::{self, Write};

use crate::compiled::CompiledNetwork;
use crate::model::{Configuration, VarKind};
use crate::sim::{EndReason, Event, EventKind, Observer, Point};

/// State of the network at one recorded instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub time: f64,
    pub locations: Vec<usize>,
    /// Variables in declaration order followed by one local clock per automaton.
    pub state: Vec<f64>,
}

/// A fired transition together with the state right after it.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub event: Event,
    pub after: Sample,
}

impl TraceEvent {
    pub fn time(&self) -> f64 {
        self.event.time
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub variables: Vec<String>,
    pub kinds: Vec<VarKind>,
    pub automata: Vec<String>,
    pub locations: Vec<Vec<String>>,
    /// `source->target` label of every edge, per automaton.
    pub edges: Vec<Vec<String>>,
    pub channels: Vec<String>,
    pub samples: Vec<Sample>,
    pub events: Vec<TraceEvent>,
    pub horizon: f64,
    pub end: EndReason,
}

impl Trace {
    /// Time of the last recorded state.
    pub fn end_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.time)
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    pub fn automaton_index(&self, name: &str) -> Option<usize> {
        self.automata.iter().position(|a| a == name)
    }

    /// Values of `name` at every sample.
    pub fn series(&self, name: &str) -> Option<Vec<(f64, f64)>> {
        let i = self.variable_index(name)?;
        Some(self.samples.iter().map(|s| (s.time, s.state[i])).collect())
    }

    pub fn location_name(&self, sample: &Sample, automaton: usize) -> &str {
        &self.locations[automaton][sample.locations[automaton]]
    }

    /// Transitions only (the deadlock marker is skipped).
    pub fn transitions(&self) -> impl Iterator<Item = (&TraceEvent, usize, usize, Option<usize>)> {
        self.events.iter().filter_map(|e| match e.event.kind {
            EventKind::Transition {
                automaton,
                edge,
                channel,
            } => Some((e, automaton, edge, channel)),
            EventKind::Deadlock => None,
        })
    }

    /// Times at which `channel` was emitted.
    pub fn channel_times(&self, channel: &str) -> Vec<f64> {
        let Some(c) = self.channels.iter().position(|x| x == channel) else {
            return Vec::new();
        };
        let mut times: Vec<f64> = self
            .transitions()
            .filter(|(_, _, _, ch)| *ch == Some(c))
            .map(|(e, ..)| e.time())
            .collect();
        times.dedup();
        times
    }

    pub fn write_samples_csv(&self, out: &mut impl Write) -> io::Result<()> {
        let mut header: Vec<String> = vec!["time".into()];
        let columns: Vec<usize> = (0..self.variables.len())
            .filter(|&i| self.kinds[i] == VarKind::Var)
            .collect();
        header.extend(columns.iter().map(|&i| self.variables[i].clone()));
        header.extend(self.automata.iter().map(|a| format!("{}.location", a)));
        writeln!(out, "{}", header.join(","))?;
        for s in &self.samples {
            let mut row = vec![sig9(s.time)];
            row.extend(columns.iter().map(|&i| sig9(s.state[i])));
            row.extend((0..self.automata.len()).map(|a| self.location_name(s, a).to_string()));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn write_events_csv(&self, out: &mut impl Write) -> io::Result<()> {
        writeln!(out, "time,automaton,edge,channel")?;
        for e in &self.events {
            match e.event.kind {
                EventKind::Transition {
                    automaton,
                    edge,
                    channel,
                } => writeln!(
                    out,
                    "{},{},{},{}",
                    sig9(e.time()),
                    self.automata[automaton],
                    self.edges[automaton][edge],
                    channel.map_or("", |c| self.channels[c].as_str())
                )?,
                EventKind::Deadlock => writeln!(out, "{},,deadlock,", sig9(e.time()))?,
            }
        }
        Ok(())
    }

    pub fn samples_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_samples_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8")
    }

    pub fn events_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_events_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8")
    }
}

/// Formats `x` rounded to 9 significant digits, in the shortest form that
/// reads back to the rounded value.
pub fn sig9(x: f64) -> String {
    let rounded: f64 = format!("{:.8e}", x).parse().unwrap_or(x);
    if rounded == 0.0 {
        "0".to_string()
    } else {
        rounded.to_string()
    }
}

/// Observer that keeps every `stride`-th step and every event.
pub struct Recorder {
    template: Trace,
    stride: u64,
}

impl Recorder {
    pub fn new(net: &CompiledNetwork, stride: usize, horizon: f64) -> Self {
        let model = net.model();
        Recorder {
            template: Trace {
                variables: model.variables.iter().map(|v| v.name.clone()).collect(),
                kinds: model.variables.iter().map(|v| v.kind).collect(),
                automata: model.automata.iter().map(|a| a.name.clone()).collect(),
                locations: model
                    .automata
                    .iter()
                    .map(|a| a.locations.iter().map(|l| l.name.clone()).collect())
                    .collect(),
                edges: model
                    .automata
                    .iter()
                    .map(|a| a.edges.iter().map(|e| e.label()).collect())
                    .collect(),
                channels: model.channels.iter().map(|c| c.name.clone()).collect(),
                samples: Vec::new(),
                events: Vec::new(),
                horizon,
                end: EndReason::Horizon,
            },
            stride: stride.max(1) as u64,
        }
    }

    fn push(&mut self, config: &Configuration) {
        let sample = Sample {
            time: config.time,
            locations: config.locations.clone(),
            state: config.state.clone(),
        };
        let samples = &mut self.template.samples;
        match samples.last_mut() {
            Some(last) if last.time == sample.time => *last = sample,
            _ => samples.push(sample),
        }
    }

    pub fn finish(mut self, end: EndReason) -> Trace {
        self.template.end = end;
        self.template
    }
}

impl Observer for Recorder {
    fn observe(&mut self, config: &Configuration, point: Point<'_>) -> bool {
        match point {
            Point::Start | Point::End(_) => self.push(config),
            Point::Step(n) => {
                if n % self.stride == 0 {
                    self.push(config)
                }
            }
            Point::Event(event) => {
                self.push(config);
                self.template.events.push(TraceEvent {
                    event: *event,
                    after: Sample {
                        time: config.time,
                        locations: config.locations.clone(),
                        state: config.state.clone(),
                    },
                });
            }
        }
        true
    }
}
