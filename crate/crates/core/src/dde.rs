//! Time-domain simulation of the delayed dyad.
//!
//! Each axis is integrated on its own with classical fixed-step RK4. Partner
//! positions at `t - delay` come from a buffer of past grid samples through
//! 4-point cubic interpolation; the history before `t = 0` is identically
//! zero. The step is shrunk so that the delay is a whole number of steps,
//! which keeps the derivative jumps at `0, delay, 2 delay, ...` on grid
//! points.

use std::collections::VecDeque;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{classify, StabilityReport};
use crate::error::{invalid, Error, Result};
use crate::model::{check_delay, AxisPair, CouplingConfig};

pub const DEFAULT_T_END: f64 = 30.0;
pub const DEFAULT_SETTLE_WINDOW: f64 = 5.0;
/// Window amplitude ratio below which a response counts as decaying.
pub const STABLE_RATIO: f64 = 0.95;
/// Window amplitude ratio above which a response counts as growing.
pub const UNSTABLE_RATIO: f64 = 1.05;
/// Peak-to-peak amplitude (m) below which a response is considered settled.
pub const AMPLITUDE_FLOOR: f64 = 1e-9;
/// Position magnitude (m) at which integration is abandoned as divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// `min(delay / 20, 1 ms)`, or 1 ms without delay.
pub fn default_dt(delay: f64) -> f64 {
    if delay > 0.0 {
        (delay / 20.0).min(1e-3)
    } else {
        1e-3
    }
}

/// Checks the requested step against the delay and returns the step actually
/// used: the largest `delay / n` not exceeding the request.
pub fn effective_dt(requested: f64, delay: f64) -> Result<f64> {
    check_delay(delay)?;
    if !(requested.is_finite() && requested > 0.0) {
        return Err(invalid("dt", format!("must be > 0, got {requested}")));
    }
    if delay > 0.0 {
        if requested > delay / 10.0 * (1.0 + 1e-12) {
            return Err(invalid(
                "dt",
                format!("must be <= delay / 10 = {}, got {requested}", delay / 10.0),
            ));
        }
        let steps = (delay / requested * (1.0 - 1e-12)).ceil();
        Ok(delay / steps)
    } else if requested > 1e-3 {
        Err(invalid(
            "dt",
            format!("must be <= 1e-3 s without delay, got {requested}"),
        ))
    } else {
        Ok(requested)
    }
}

/// Positions of both robots on one axis at past grid times.
#[derive(Debug, Clone)]
struct History {
    /// index of `samples[0]` on the time grid
    first: usize,
    samples: VecDeque<[f64; 2]>,
    keep: usize,
}

impl History {
    fn new(keep: usize) -> Self {
        let mut samples = VecDeque::with_capacity(keep + 1);
        samples.push_back([0.0, 0.0]);
        Self {
            first: 0,
            samples,
            keep,
        }
    }

    fn push(&mut self, x: [f64; 2]) {
        self.samples.push_back(x);
        while self.samples.len() > self.keep {
            self.samples.pop_front();
            self.first += 1;
        }
    }

    fn latest_index(&self) -> usize {
        self.first + self.samples.len() - 1
    }

    fn at(&self, index: usize) -> [f64; 2] {
        self.samples[index - self.first]
    }

    /// Positions at grid coordinate `u = t / dt`. Zero for `u <= 0`; the
    /// cubic stencil never reaches across `t = 0`.
    fn interpolate(&self, u: f64) -> [f64; 2] {
        if u <= 0.0 {
            return [0.0, 0.0];
        }
        let i = u.floor();
        let frac = u - i;
        let i = i as usize;
        if frac == 0.0 {
            return self.at(i);
        }
        let last = self.latest_index();
        let start = i
            .saturating_sub(1)
            .max(self.first)
            .min(last.saturating_sub(3));
        let s = u - start as f64;
        // Lagrange weights on nodes 0, 1, 2, 3
        let w = [
            -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0,
            s * (s - 2.0) * (s - 3.0) / 2.0,
            -s * (s - 1.0) * (s - 3.0) / 2.0,
            s * (s - 1.0) * (s - 2.0) / 6.0,
        ];
        let mut out = [0.0; 2];
        for (j, wj) in w.iter().enumerate() {
            let p = self.at(start + j);
            out[0] += wj * p[0];
            out[1] += wj * p[1];
        }
        out
    }
}

/// One axis of the dyad: state `[x1, v1, x2, v2]` and its position history.
#[derive(Debug, Clone)]
pub struct AxisSimulator {
    pair: AxisPair,
    stiffness: f64,
    anchors: [f64; 2],
    delay_steps: usize,
    dt: f64,
    step: usize,
    state: [f64; 4],
    history: History,
}

impl AxisSimulator {
    /// `stiffness` may be zero (uncoupled robots). `dt` must already be
    /// aligned with the delay, see [`effective_dt`].
    fn new(pair: AxisPair, stiffness: f64, delay: f64, dt: f64) -> Self {
        let delay_steps = (delay / dt).round() as usize;
        Self {
            pair,
            stiffness,
            anchors: [0.0; 2],
            delay_steps,
            dt,
            step: 0,
            state: [0.0; 4],
            history: History::new(delay_steps + 8),
        }
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn positions(&self) -> [f64; 2] {
        [self.state[0], self.state[2]]
    }

    pub fn velocities(&self) -> [f64; 2] {
        [self.state[1], self.state[3]]
    }

    fn derivative(&self, y: &[f64; 4], u: f64, force: [f64; 2]) -> [f64; 4] {
        let partner = if self.delay_steps == 0 {
            [y[0], y[2]]
        } else {
            self.history.interpolate(u - self.delay_steps as f64)
        };
        let (d1, d2, k, a) = (
            &self.pair.robot1,
            &self.pair.robot2,
            self.stiffness,
            self.anchors,
        );
        [
            y[1],
            (k * (partner[1] - y[0]) - a[0] * y[0] + force[0] - d1.damping() * y[1]) / d1.mass(),
            y[3],
            (k * (partner[0] - y[2]) - a[1] * y[2] + force[1] - d2.damping() * y[3]) / d2.mass(),
        ]
    }

    /// Advances one step. `force(t)` gives `[f1, f2]` in N.
    pub fn step<F: Fn(f64) -> [f64; 2]>(&mut self, force: F) {
        let (h, t, u) = (self.dt, self.time(), self.step as f64);
        let y = self.state;
        let add = |a: &[f64; 4], b: &[f64; 4], c: f64| -> [f64; 4] {
            [
                a[0] + c * b[0],
                a[1] + c * b[1],
                a[2] + c * b[2],
                a[3] + c * b[3],
            ]
        };
        let k1 = self.derivative(&y, u, force(t));
        let k2 = self.derivative(&add(&y, &k1, h / 2.0), u + 0.5, force(t + h / 2.0));
        let k3 = self.derivative(&add(&y, &k2, h / 2.0), u + 0.5, force(t + h / 2.0));
        let k4 = self.derivative(&add(&y, &k3, h), u + 1.0, force(t + h));
        for i in 0..4 {
            self.state[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        self.step += 1;
        self.history.push(self.positions());
    }

    pub fn is_diverged(&self) -> bool {
        self.state
            .iter()
            .step_by(2)
            .any(|x| !x.is_finite() || x.abs() > DIVERGENCE_LIMIT)
    }
}

/// All axes of a dyad, stepped together on a common grid.
#[derive(Debug, Clone)]
pub struct Simulator {
    labels: Vec<String>,
    axes: Vec<AxisSimulator>,
    dt: f64,
}

impl Simulator {
    pub fn new(config: &CouplingConfig, dt: f64) -> Result<Self> {
        Self::with_stiffness(config, config.stiffness(), dt)
    }

    /// Like [`Simulator::new`] but with an explicit stiffness, which may be
    /// zero for uncoupled robots.
    pub fn with_stiffness(config: &CouplingConfig, stiffness: f64, dt: f64) -> Result<Self> {
        if !(stiffness.is_finite() && stiffness >= 0.0) {
            return Err(invalid(
                "stiffness",
                format!("must be >= 0, got {stiffness}"),
            ));
        }
        let dt = effective_dt(dt, config.delay())?;
        let (labels, axes) = config
            .axes()
            .map(|(label, pair)| {
                (
                    label.to_string(),
                    AxisSimulator::new(*pair, stiffness, config.delay(), dt),
                )
            })
            .unzip();
        Ok(Self { labels, axes, dt })
    }

    /// Adds a spring to the origin on each robot, `-anchors[i] * x_i`, on
    /// every axis. Combined with an external force `anchors[i] * r(t)` this
    /// gives a continuous pull `anchors[i] * (r - x_i)` toward a reference.
    pub fn with_anchors(mut self, anchors: [f64; 2]) -> Result<Self> {
        if anchors.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(invalid("anchors", format!("must be >= 0, got {anchors:?}")));
        }
        for axis in &mut self.axes {
            axis.anchors = anchors;
        }
        Ok(self)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self) -> f64 {
        self.axes[0].time()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn axis(&self, index: usize) -> &AxisSimulator {
        &self.axes[index]
    }

    /// Advances every axis one step. `force(t, axis_index)` gives `[f1, f2]`.
    pub fn step<F: Fn(f64, usize) -> [f64; 2]>(&mut self, force: F) {
        for (i, axis) in self.axes.iter_mut().enumerate() {
            axis.step(|t| force(t, i));
        }
    }
}

/// Simulated positions of both robots along one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSeries {
    pub axis: String,
    pub times: Vec<f64>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    /// Integration stopped early because a position left the finite range.
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub dt: f64,
    pub axes: Vec<AxisSeries>,
}

/// Integrates the dyad from rest over `[0, t_end]`.
///
/// `forces(t, axis_index)` returns `[f1, f2]` in N. An axis whose state
/// leaves the finite range is truncated at its last finite sample.
pub fn integrate<F>(config: &CouplingConfig, forces: F, t_end: f64, dt: f64) -> Result<StepResponse>
where
    F: Fn(f64, usize) -> [f64; 2] + Sync,
{
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(invalid("t_end", format!("must be > 0, got {t_end}")));
    }
    let sim = Simulator::new(config, dt)?;
    let dt = sim.dt();
    let steps = (t_end / dt).round() as usize;
    let labels = sim.labels.clone();
    let axes = sim
        .axes
        .into_par_iter()
        .zip(labels)
        .enumerate()
        .map(|(index, (mut axis, label))| {
            let mut series = AxisSeries {
                axis: label,
                times: Vec::with_capacity(steps + 1),
                x1: Vec::with_capacity(steps + 1),
                x2: Vec::with_capacity(steps + 1),
                diverged: false,
            };
            series.times.push(0.0);
            series.x1.push(0.0);
            series.x2.push(0.0);
            for _ in 0..steps {
                axis.step(|t| forces(t, index));
                if axis.is_diverged() {
                    series.diverged = true;
                    break;
                }
                let [x1, x2] = axis.positions();
                series.times.push(axis.time());
                series.x1.push(x1);
                series.x2.push(x2);
            }
            series
        })
        .collect();
    Ok(StepResponse { dt, axes })
}

/// Unit forces in opposite directions on every axis: `f1 = +1 N`, `f2 = -1 N`.
pub fn opposite_unit_forces(_t: f64, _axis: usize) -> [f64; 2] {
    [1.0, -1.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResponseClass {
    Stable,
    Marginal,
    Unstable,
}

impl ResponseClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ResponseClass::Stable => "stable",
            ResponseClass::Marginal => "marginal",
            ResponseClass::Unstable => "unstable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisClassification {
    pub axis: String,
    pub class: ResponseClass,
    /// last-window over previous-window peak-to-peak amplitude
    pub growth_ratio: f64,
}

fn window_amplitude(values: &[f64], mean: f64) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v - mean), hi.max(v - mean))
        });
    hi - lo
}

/// Classifies one axis from the peak-to-peak amplitude of its last two
/// windows, measured around the last window's mean.
pub fn classify_series(series: &AxisSeries, settle_window: f64) -> Result<AxisClassification> {
    if series.diverged {
        return Ok(AxisClassification {
            axis: series.axis.clone(),
            class: ResponseClass::Unstable,
            growth_ratio: f64::INFINITY,
        });
    }
    let n = series.times.len();
    if n < 2 {
        return Err(Error::SeriesTooShort { needed: 2, got: n });
    }
    let dt = series.times[1] - series.times[0];
    let w = (settle_window / dt).round() as usize;
    if w < 2 || n < 3 * w {
        return Err(Error::SeriesTooShort {
            needed: 3 * w.max(2),
            got: n,
        });
    }

    let mut last_amp: f64 = 0.0;
    let mut prev_amp: f64 = 0.0;
    for x in [&series.x1, &series.x2] {
        let last = &x[n - w..];
        let prev = &x[n - 2 * w..n - w];
        let mean = last.iter().sum::<f64>() / w as f64;
        last_amp = last_amp.max(window_amplitude(last, mean));
        prev_amp = prev_amp.max(window_amplitude(prev, mean));
    }
    let growth_ratio = if prev_amp > 0.0 {
        last_amp / prev_amp
    } else if last_amp > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    let class = if last_amp < AMPLITUDE_FLOOR || growth_ratio < STABLE_RATIO {
        ResponseClass::Stable
    } else if growth_ratio > UNSTABLE_RATIO {
        ResponseClass::Unstable
    } else {
        ResponseClass::Marginal
    };
    Ok(AxisClassification {
        axis: series.axis.clone(),
        class,
        growth_ratio,
    })
}

pub fn classify_response(
    response: &StepResponse,
    settle_window: f64,
) -> Result<Vec<AxisClassification>> {
    response
        .axes
        .iter()
        .map(|s| classify_series(s, settle_window))
        .collect()
}

/// Writes `t, x1_<axis>..., x2_<axis>...`; truncated axes leave empty cells.
pub fn write_response_csv<W: Write>(mut out: W, response: &StepResponse) -> std::io::Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend(response.axes.iter().map(|a| format!("x1_{}", a.axis)));
    header.extend(response.axes.iter().map(|a| format!("x2_{}", a.axis)));
    writeln!(out, "{}", header.join(","))?;
    let rows = response
        .axes
        .iter()
        .map(|a| a.times.len())
        .max()
        .unwrap_or(0);
    let longest = response
        .axes
        .iter()
        .max_by_key(|a| a.times.len())
        .map(|a| &a.times);
    for i in 0..rows {
        let mut cells = vec![longest.map(|t| t[i].to_string()).unwrap_or_default()];
        let cell = |v: &Vec<f64>| v.get(i).map(|x| x.to_string()).unwrap_or_default();
        cells.extend(response.axes.iter().map(|a| cell(&a.x1)));
        cells.extend(response.axes.iter().map(|a| cell(&a.x2)));
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSettings {
    /// requested step; `None` uses [`default_dt`]
    pub dt: Option<f64>,
    pub t_end: f64,
    pub settle_window: f64,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            dt: None,
            t_end: DEFAULT_T_END,
            settle_window: DEFAULT_SETTLE_WINDOW,
        }
    }
}

impl SimulationSettings {
    pub fn dt_for(&self, delay: f64) -> f64 {
        self.dt.unwrap_or_else(|| default_dt(delay))
    }
}

/// Step response to opposite unit forces, classified per axis.
pub fn simulate_verdict(
    config: &CouplingConfig,
    settings: &SimulationSettings,
) -> Result<Vec<AxisClassification>> {
    let response = integrate(
        config,
        opposite_unit_forces,
        settings.t_end,
        settings.dt_for(config.delay()),
    )?;
    classify_response(&response, settings.settle_window)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictCell {
    /// N/m
    pub stiffness: f64,
    /// seconds
    pub delay: f64,
    pub analytic: StabilityReport,
    pub simulated: Option<Vec<AxisClassification>>,
}

/// Analytic verdicts (and, with `simulate`, step-response verdicts) over the
/// product of `stiffnesses` and `delays`, row-major in stiffness.
pub fn verdict_grid(
    config: &CouplingConfig,
    stiffnesses: &[f64],
    delays: &[f64],
    settings: &SimulationSettings,
    simulate: bool,
) -> Result<Vec<VerdictCell>> {
    let cells: Vec<(f64, f64)> = stiffnesses
        .iter()
        .flat_map(|&k| delays.iter().map(move |&d| (k, d)))
        .collect();
    cells
        .into_par_iter()
        .map(|(k, d)| {
            let cfg = config.with_stiffness(k)?.with_delay(d)?;
            let analytic = classify(&cfg)?;
            let simulated = if simulate {
                Some(simulate_verdict(&cfg, settings)?)
            } else {
                None
            };
            Ok(VerdictCell {
                stiffness: k,
                delay: d,
                analytic,
                simulated,
            })
        })
        .collect()
}
