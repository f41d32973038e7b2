//! Runs a scenario and evaluates its metrics.

use std::fmt;

use mmc_core::analysis::{
    harmonic_report, model_agreement, moving_average, peak_to_peak, transient_metrics, AnalysisError,
    Normalization, StepSchedule,
};
use mmc_core::engine::{run, Initial, PlantKind, RunConfig, SimError};
use mmc_core::trajectory::{Signal, Trajectory};

use crate::scenario::{InitialKind, Metric, Mode, Scenario, Target};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Int(u64),
    Flag(bool),
    Text(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{x}"),
            Value::Int(x) => write!(f, "{x}"),
            Value::Flag(b) => f.write_str(if *b { "yes" } else { "no" }),
            Value::Text(s) => f.write_str(s),
        }
    }
}

/// One block of `key = value` results.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub kind: &'static str,
    pub label: String,
    /// Plant the numbers came from, when the scenario ran more than one.
    pub plant: Option<PlantKind>,
    pub fields: Vec<(&'static str, Value)>,
}

impl Report {
    fn new(kind: &'static str, label: &str, plant: Option<PlantKind>) -> Self {
        Self {
            kind,
            label: label.to_string(),
            plant,
            fields: Vec::new(),
        }
    }

    fn num(mut self, key: &'static str, x: f64) -> Self {
        self.fields.push((key, Value::Num(x)));
        self
    }

    fn int(mut self, key: &'static str, x: u64) -> Self {
        self.fields.push((key, Value::Int(x)));
        self
    }

    fn flag(mut self, key: &'static str, b: bool) -> Self {
        self.fields.push((key, Value::Flag(b)));
        self
    }

    fn text(mut self, key: &'static str, s: impl Into<String>) -> Self {
        self.fields.push((key, Value::Text(s.into())));
        self
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.fields.iter().find(|(k, _)| *k == key).map(|(_, v)| v)
    }

    /// Numeric field, for integers too.
    pub fn number(&self, key: &str) -> Option<f64> {
        match self.get(key)? {
            Value::Num(x) => Some(*x),
            Value::Int(x) => Some(*x as f64),
            _ => None,
        }
    }

    pub fn is_set(&self, key: &str) -> Option<bool> {
        match self.get(key)? {
            Value::Flag(b) => Some(*b),
            _ => None,
        }
    }

    /// Section heading, e.g. `harmonics open_loop (switched)`.
    pub fn heading(&self) -> String {
        match self.plant {
            Some(p) => format!("{} {} ({})", self.kind, self.label, p.name()),
            None => format!("{} {}", self.kind, self.label),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantRun {
    pub plant: PlantKind,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub runs: Vec<PlantRun>,
    pub reports: Vec<Report>,
}

impl RunOutput {
    /// First report with this kind and label, any plant.
    pub fn report(&self, kind: &str, label: &str) -> Option<&Report> {
        self.reports.iter().find(|r| r.kind == kind && r.label == label)
    }

    pub fn report_for(&self, kind: &str, label: &str, plant: PlantKind) -> Option<&Report> {
        self.reports
            .iter()
            .find(|r| r.kind == kind && r.label == label && r.plant.is_none_or(|p| p == plant))
    }

    pub fn run(&self, plant: PlantKind) -> Option<&Trajectory> {
        self.runs.iter().find(|r| r.plant == plant).map(|r| &r.trajectory)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunError {
    Sim { plant: PlantKind, error: SimError },
    Metric { label: String, error: AnalysisError },
    /// A trajectory broke one of its own guarantees.
    Invariant(String),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Sim { plant, error } => write!(f, "{} plant: {error}", plant.name()),
            RunError::Metric { label, error } => write!(f, "metric {label}: {error}"),
            RunError::Invariant(msg) => write!(f, "trajectory check failed: {msg}"),
        }
    }
}

impl std::error::Error for RunError {}

/// Engine configuration for one plant of a scenario.
pub fn run_config(s: &Scenario, plant: PlantKind) -> RunConfig {
    RunConfig {
        params: s.params,
        v_sigma_ref: s.v_sigma_ref,
        p_demand: s.p_demand,
        controller: s.controller,
        controller_on: s.controller_on,
        open_loop: s.open_loop,
        events: s.events.clone(),
        t_end: s.t_end,
        dt: s.dt,
        plant,
        initial: match s.initial {
            InitialKind::SteadyState => Initial::SteadyState,
            InitialKind::Precharge => Initial::Precharge,
        },
        record_cells: s.record_cells && plant == PlantKind::Switched,
        record_every: 1,
    }
}

/// Runs the plants a scenario asks for and evaluates its metrics.
pub fn run_scenario(s: &Scenario) -> Result<RunOutput, RunError> {
    let plants = match s.mode {
        Mode::Run => vec![s.plant],
        Mode::Compare => vec![PlantKind::Switched, PlantKind::Averaged],
    };
    let mut runs = Vec::new();
    for plant in plants {
        let trajectory = run(&run_config(s, plant)).map_err(|error| RunError::Sim { plant, error })?;
        check_trajectory(s, &trajectory)?;
        runs.push(PlantRun { plant, trajectory });
    }

    let mut reports = Vec::new();
    if s.t_end > 0.0 {
        let tag = runs.len() > 1;
        for r in &runs {
            for m in &s.metrics {
                let plant = tag.then_some(r.plant);
                let rep = evaluate(s, m, &r.trajectory, plant).map_err(|error| RunError::Metric {
                    label: m.label().to_string(),
                    error,
                })?;
                reports.push(rep);
            }
        }
        if let [a, b] = runs.as_slice() {
            reports.push(agreement(s, &a.trajectory, &b.trajectory)?);
        }
    }
    for r in &runs {
        reports.push(run_summary(r));
    }
    Ok(RunOutput { runs, reports })
}

fn check_trajectory(s: &Scenario, t: &Trajectory) -> Result<(), RunError> {
    if t.records.windows(2).any(|w| w[1].t <= w[0].t) {
        return Err(RunError::Invariant("time is not increasing".into()));
    }
    for e in &s.events {
        if !t.events.iter().any(|m| (m.t - e.t).abs() <= 1e-9 * s.dt.max(e.t) && m.label == e.event.label()) {
            return Err(RunError::Invariant(format!("no marker for `{}` at {} s", e.event.label(), e.t)));
        }
    }
    Ok(())
}

fn run_summary(r: &PlantRun) -> Report {
    let t = &r.trajectory;
    let mut rep = Report::new("run", r.plant.name(), None)
        .int("records", t.len() as u64)
        .num("dt_s", t.dt)
        .int("clamp_intervals", t.clamps.len() as u64)
        .num("clamp_worst_excess", t.clamps.iter().fold(0.0, |m, c| m.max(c.worst_excess)))
        .int("limited_samples", t.saturated_samples);
    for e in &t.events {
        rep = rep.text("event", format!("{} {}", e.t, e.label));
    }
    for c in &t.clamps {
        rep = rep.text("clamp", format!("{} {} {} {}", c.t_start, c.t_end, c.steps, c.worst_excess));
    }
    rep
}

fn agreement(s: &Scenario, a: &Trajectory, b: &Trajectory) -> Result<Report, RunError> {
    let smooth = records_per(s.params.t_sw(), a.dt);
    let r = model_agreement(a, b, &Normalization::rated(&s.params, s.v_sigma_ref), smooth).map_err(|error| {
        RunError::Metric {
            label: "agreement".into(),
            error,
        }
    })?;
    let mut rep = Report::new("agreement", "switched_vs_averaged", None).num("smoothing_s", smooth as f64 * a.dt);
    for (name, d) in r.rows() {
        let (rms, peak) = match name {
            "i_dc" => ("i_dc_rms_pct", "i_dc_peak_pct"),
            "i_ac" => ("i_ac_rms_pct", "i_ac_peak_pct"),
            "v_sigma" => ("v_sigma_rms_pct", "v_sigma_peak_pct"),
            _ => ("v_delta_rms_pct", "v_delta_peak_pct"),
        };
        rep = rep.num(rms, 100.0 * d.rms).num(peak, 100.0 * d.peak);
    }
    Ok(rep.num("worst_rms_pct", 100.0 * r.worst_rms()))
}

fn records_per(span: f64, dt: f64) -> usize {
    ((span / dt).round() as usize).max(1)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn evaluate(s: &Scenario, m: &Metric, t: &Trajectory, plant: Option<PlantKind>) -> Result<Report, AnalysisError> {
    let p = &s.params;
    let period = p.t_ac();
    Ok(match m {
        Metric::Harmonics { label, signal, window } => {
            let h = harmonic_report(t, *signal, p.f_ac, *window)?;
            Report::new("harmonics", label, plant)
                .text("signal", signal.name())
                .num("from_s", h.window.0)
                .num("to_s", h.window.1)
                .num("dc", h.dc_component)
                .num("h2_pct", h.h2_pct)
                .num("h4_pct", h.h4_pct)
                .num("resolution_hz", h.resolution_hz)
        }
        Metric::Ripple { label, signal, window } => {
            let smooth = records_per(p.t_sw(), t.dt);
            let pp = peak_to_peak(t, *signal, window.0, window.1, smooth)?;
            Report::new("ripple", label, plant)
                .text("signal", signal.name())
                .num("from_s", window.0)
                .num("to_s", window.1)
                .num("smoothing_s", smooth as f64 * t.dt)
                .num("peak_to_peak", pp)
        }
        Metric::Transient {
            label,
            signal,
            step,
            to,
            band_pct,
            target,
        } => {
            let i_step = t.index_at(*step).ok_or(AnalysisError::WindowOutOfRange { t0: *step, t1: *to })?;
            let i_to = end_index(t, *to).ok_or(AnalysisError::WindowOutOfRange { t0: *step, t1: *to })?;
            let per = records_per(period, t.dt);
            if i_step < per || i_to < i_step + per {
                return Err(AnalysisError::WindowOutOfRange { t0: *step, t1: *to });
            }
            let times = t.times();
            let y = t.signal(*signal);
            let schedule = match target {
                Target::Final => StepSchedule {
                    t_step: *step,
                    initial: mean(&y[i_step - per..i_step]),
                    target: mean(&y[i_to - per..i_to]),
                },
                Target::Reference => {
                    let r = t.signal(reference_of(*signal).ok_or(AnalysisError::NoStep)?);
                    let lo = i_step - 1;
                    match StepSchedule::from_reference(&times[lo..i_to], &r[lo..i_to]) {
                        Ok(sch) => sch,
                        Err(AnalysisError::NoStep) => StepSchedule {
                            t_step: *step,
                            initial: r[lo],
                            target: r[lo],
                        },
                        Err(e) => return Err(e),
                    }
                }
            };
            let smooth = moving_average(&y, records_per(0.5 * period, t.dt));
            let tr = transient_metrics(&times[i_step..i_to], &smooth[i_step..i_to], &schedule, *band_pct, period)?;
            Report::new("transient", label, plant)
                .text("signal", signal.name())
                .num("step_s", *step)
                .num("to_s", *to)
                .num("initial", schedule.initial)
                .num("target", schedule.target)
                .num("smoothing_s", 0.5 * period)
                .num("overshoot_pct", tr.overshoot_pct)
                .num("band_pct", tr.band_pct)
                .num("settling_periods", tr.settling_periods)
        }
        Metric::Balance { label, window } => {
            let range = window_range_loose(t, *window)?;
            let rep = Report::new("balance", label, plant).num("from_s", window.0).num("to_s", window.1);
            match t.cells.as_ref() {
                None => rep.text("cells", "none"),
                Some(_) => {
                    let spreads = spread_per_period(t, range, records_per(period, t.dt));
                    let n = spreads.len();
                    if n < 2 {
                        return Err(AnalysisError::EmptyWindow);
                    }
                    let avg = mean(&spreads);
                    let xm = 0.5 * (n - 1) as f64;
                    let (mut sxy, mut sxx) = (0.0, 0.0);
                    for (k, v) in spreads.iter().enumerate() {
                        sxy += (k as f64 - xm) * (v - avg);
                        sxx += (k as f64 - xm) * (k as f64 - xm);
                    }
                    let slope = sxy / sxx;
                    let max = spreads.iter().fold(f64::MIN, |m, &v| m.max(v));
                    let monotonic = spreads.windows(2).all(|w| w[1] > w[0]);
                    // Growth over the window must stay small against the spread itself.
                    let bounded = !monotonic && slope * n as f64 <= 0.5 * avg;
                    rep.int("periods", n as u64)
                        .num("first_v", spreads[0])
                        .num("last_v", spreads[n - 1])
                        .num("mean_v", avg)
                        .num("max_v", max)
                        .num("slope_v_per_period", slope)
                        .flag("monotonic_growth", monotonic)
                        .flag("bounded", bounded)
                }
            }
        }
        Metric::Tracking { label, window } => {
            let r = window_range_loose(t, *window)?;
            let recs = &t.records[r];
            let n = recs.len() as f64;
            let i_ac: f64 = recs.iter().map(|r| r.i_ac * r.i_ac_ref.signum()).sum::<f64>() / n;
            let i_ac_ref: f64 = recs.iter().map(|r| r.i_ac_ref.abs()).sum::<f64>() / n;
            let i_dc: f64 = recs.iter().map(|r| r.i_dc).sum::<f64>() / n;
            let i_dc_ref: f64 = recs.iter().map(|r| r.i_dc_ref).sum::<f64>() / n;
            Report::new("tracking", label, plant)
                .num("from_s", window.0)
                .num("to_s", window.1)
                .num("i_ac_rectified_mean", i_ac)
                .num("i_ac_ref_mean", i_ac_ref)
                .num("i_ac_error_pct", 100.0 * (i_ac - i_ac_ref) / i_ac_ref)
                .num("i_dc_mean", i_dc)
                .num("i_dc_ref_mean", i_dc_ref)
                .num("i_dc_error_pct", 100.0 * (i_dc - i_dc_ref) / i_dc_ref)
        }
    })
}

fn reference_of(s: Signal) -> Option<Signal> {
    match s {
        Signal::IDc => Some(Signal::IDcRef),
        Signal::IAc => Some(Signal::IAcRef),
        Signal::VSigma => Some(Signal::VSigmaRef),
        _ => None,
    }
}

/// Index one past the record at `t`, allowing `t` one step past the end.
fn end_index(t: &Trajectory, at: f64) -> Option<usize> {
    t.index_at(at).or_else(|| ((at - (t.t_end() + t.dt)).abs() <= 1e-6 * t.dt).then_some(t.len()))
}

/// Like `window_range`, but events inside the window are allowed.
fn window_range_loose(t: &Trajectory, w: (f64, f64)) -> Result<std::ops::Range<usize>, AnalysisError> {
    let i0 = t.index_at(w.0).ok_or(AnalysisError::WindowOutOfRange { t0: w.0, t1: w.1 })?;
    let i1 = end_index(t, w.1).ok_or(AnalysisError::WindowOutOfRange { t0: w.0, t1: w.1 })?;
    if i1 <= i0 {
        return Err(AnalysisError::EmptyWindow);
    }
    Ok(i0..i1)
}

/// Largest intra-arm cell spread in each whole period of `range`.
fn spread_per_period(t: &Trajectory, range: std::ops::Range<usize>, per: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = range.start;
    while k + per <= range.end {
        let mut worst: f64 = 0.0;
        for r in k..k + per {
            if let Some(row) = t.cells_at(r) {
                for arm in row.chunks(t.n_cells) {
                    let (lo, hi) = arm.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                    worst = worst.max(hi - lo);
                }
            }
        }
        out.push(worst);
        k += per;
    }
    out
}

/// Runs scenarios on up to `threads` worker threads. Results come back in
/// input order and match running each scenario alone.
pub fn run_many(scenarios: &[Scenario], threads: usize) -> Vec<Result<RunOutput, RunError>> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<RunOutput, RunError>>>> = scenarios.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, scenarios.len().max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(s) = scenarios.get(k) else { break };
                let r = run_scenario(s);
                *slots[k].lock().unwrap_or_else(|e| e.into_inner()) = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap_or_else(|e| e.into_inner()).expect("every slot is filled"))
        .collect()
}
