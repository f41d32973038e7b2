//! Scenario files.
//!
//! A scenario is flat `key = value` text. Every quantity carries its unit in
//! the key name (`f_ac_hz`, `c_cell_f`). Two optional sections follow:
//!
//! ```text
//! [events]
//! t_s=0.004 enable_controller
//! t_s=0.010 set_power_demand p_w=450000
//!
//! [metrics]
//! harmonics label=open_loop from_s=0 to_s=0.004
//! ```
//!
//! `preset = <name>` starts from a built-in scenario; keys given afterwards
//! override it, and an `[events]` or `[metrics]` section replaces the
//! preset's. Parsing reports every problem it finds, not just the first.

use std::collections::BTreeMap;
use std::fmt;

use mmc_core::controller::{AverageSource, ControllerConfig, PiGains, Sampling};
use mmc_core::engine::{check_grid, choose_step, Event, PlantKind, TimedEvent};
use mmc_core::params::{default_references, ConverterParams};
use mmc_core::trajectory::Signal;

use crate::presets;

/// One problem found while reading a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    /// 1-based line in the text it came from, if any.
    pub line: Option<usize>,
    /// Where the line came from: the file itself, a preset, or an override.
    pub origin: Origin,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    File,
    Preset,
    Override,
    Scenario,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.origin, self.line) {
            (Origin::File, Some(l)) => write!(f, "line {l}: {}", self.message),
            (Origin::Preset, Some(l)) => write!(f, "preset line {l}: {}", self.message),
            (Origin::Override, _) => write!(f, "override: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

/// Every problem in a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioError {
    pub issues: Vec<Issue>,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} problem(s) in scenario", self.issues.len())?;
        for i in &self.issues {
            write!(f, "\n  {i}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ScenarioError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// One plant, closed or open loop.
    Run,
    /// Both plants on the same open-loop schedule.
    Compare,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Run => "run",
            Mode::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    SteadyState,
    Precharge,
}

/// Post-processing requested by a scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    /// 2nd and 4th harmonic of `signal`; `None` means the last ten periods.
    Harmonics {
        label: String,
        signal: Signal,
        window: Option<(f64, f64)>,
    },
    /// Peak-to-peak of `signal` after a one-carrier-period moving average.
    Ripple {
        label: String,
        signal: Signal,
        window: (f64, f64),
    },
    /// Overshoot and settling of the half-period mean of `signal` after a
    /// step at `step`, judged up to `to`.
    Transient {
        label: String,
        signal: Signal,
        step: f64,
        to: f64,
        band_pct: f64,
        target: Target,
    },
    /// Spread of cell voltages within each arm, per AC period.
    Balance { label: String, window: (f64, f64) },
    /// Mean current against mean reference.
    Tracking { label: String, window: (f64, f64) },
}

impl Metric {
    pub fn label(&self) -> &str {
        match self {
            Metric::Harmonics { label, .. }
            | Metric::Ripple { label, .. }
            | Metric::Transient { label, .. }
            | Metric::Balance { label, .. }
            | Metric::Tracking { label, .. } => label,
        }
    }
}

/// What a transient settles to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// The reference column of the signal, before and after the step.
    Reference,
    /// The signal's own one-period mean just before the step and at the end.
    Final,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub params: ConverterParams,
    pub v_sigma_ref: f64,
    pub p_demand: f64,
    pub controller: ControllerConfig,
    /// Controller active from `t = 0`.
    pub controller_on: bool,
    pub open_loop: (f64, f64),
    pub initial: InitialKind,
    pub plant: PlantKind,
    pub mode: Mode,
    pub dt: f64,
    pub t_end: f64,
    pub events: Vec<TimedEvent>,
    /// Keep every n-th step in CSV output.
    pub output_every: usize,
    pub record_cells: bool,
    pub metrics: Vec<Metric>,
    /// Resolved configuration after presets, file and overrides, as flat
    /// scenario text.
    pub source: String,
}

/// Command-line settings that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub plant: Option<PlantKind>,
    pub dt: Option<f64>,
    pub mode: Option<Mode>,
}

impl Overrides {
    fn lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(p) = self.plant {
            out.push(format!("plant = {}", p.name()));
        }
        if let Some(dt) = self.dt {
            out.push(format!("dt_s = {dt:e}"));
        }
        if let Some(m) = self.mode {
            out.push(format!("mode = {}", m.name()));
        }
        out
    }
}

#[derive(Debug, Default)]
struct Sections {
    keys: Vec<(usize, String, String)>,
    events: Option<Vec<(usize, String)>>,
    metrics: Option<Vec<(usize, String)>>,
}

fn split_sections(text: &str, origin: Origin, issues: &mut Vec<Issue>) -> Sections {
    #[derive(PartialEq)]
    enum At {
        Keys,
        Events,
        Metrics,
    }
    let mut out = Sections::default();
    let mut at = At::Keys;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if body.starts_with('[') {
            match body {
                "[events]" => {
                    at = At::Events;
                    out.events.get_or_insert_with(Vec::new);
                }
                "[metrics]" => {
                    at = At::Metrics;
                    out.metrics.get_or_insert_with(Vec::new);
                }
                _ => issues.push(Issue {
                    line: Some(line),
                    origin,
                    message: format!("unknown section {body}"),
                }),
            }
            continue;
        }
        match at {
            At::Keys => match body.split_once('=') {
                Some((k, v)) => out.keys.push((line, k.trim().to_string(), v.trim().to_string())),
                None => issues.push(Issue {
                    line: Some(line),
                    origin,
                    message: format!("expected `key = value`, found `{body}`"),
                }),
            },
            At::Events => out.events.get_or_insert_with(Vec::new).push((line, body.to_string())),
            At::Metrics => out.metrics.get_or_insert_with(Vec::new).push((line, body.to_string())),
        }
    }
    out
}

fn preset_key(keys: &[(usize, String, String)]) -> Option<(usize, String)> {
    keys.iter().find(|(_, k, _)| k == "preset").map(|(l, _, v)| (*l, v.clone()))
}

/// Reads a scenario with no overrides.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    parse_scenario_with(text, &Overrides::default())
}

/// Reads a built-in scenario.
pub fn preset_scenario(name: &str, overrides: &Overrides) -> Result<Scenario, ScenarioError> {
    parse_scenario_with(&format!("preset = {name}\n"), overrides)
}

pub fn parse_scenario_with(text: &str, overrides: &Overrides) -> Result<Scenario, ScenarioError> {
    let mut issues = Vec::new();
    let file = split_sections(text, Origin::File, &mut issues);

    // Preset chain, outermost first. A preset may itself start from another.
    let mut chain: Vec<(&'static str, Sections)> = Vec::new();
    let mut next = preset_key(&file.keys).map(|(l, n)| (Origin::File, l, n));
    while let Some((origin, line, name)) = next.take() {
        match presets::text(&name) {
            Some(_) if chain.len() >= presets::NAMES.len() => {
                issues.push(Issue {
                    line: Some(line),
                    origin,
                    message: format!("preset `{name}` refers back to itself"),
                });
            }
            Some(t) => {
                let s = split_sections(t, Origin::Preset, &mut issues);
                next = preset_key(&s.keys).map(|(l, n)| (Origin::Preset, l, n));
                chain.push((t, s));
            }
            None => issues.push(Issue {
                line: Some(line),
                origin,
                message: format!("unknown preset `{name}` (known: {})", presets::NAMES.join(", ")),
            }),
        }
    }
    chain.reverse();

    let override_lines = overrides.lines();
    let ov = split_sections(&override_lines.join("\n"), Origin::Override, &mut issues);

    let mut layers: Vec<(Origin, Sections)> = chain.into_iter().map(|(_, s)| (Origin::Preset, s)).collect();
    layers.push((Origin::File, file));
    layers.push((Origin::Override, ov));

    // Later layers win; repeats within one layer are mistakes.
    let mut keys: BTreeMap<String, (Origin, usize, String)> = BTreeMap::new();
    let mut events = None;
    let mut metrics = None;
    for (origin, layer) in layers {
        let mut seen = BTreeMap::new();
        for (line, k, v) in layer.keys {
            if let Some(first) = seen.insert(k.clone(), line) {
                issues.push(Issue {
                    line: Some(line),
                    origin,
                    message: format!("`{k}` repeats line {first}"),
                });
            }
            if k != "preset" {
                keys.insert(k, (origin, line, v));
            }
        }
        if let Some(e) = layer.events {
            events = Some((origin, e));
        }
        if let Some(m) = layer.metrics {
            metrics = Some((origin, m));
        }
    }

    let source = resolved_text(&keys, events.as_ref(), metrics.as_ref());
    let default_name = "scenario".to_string();
    let mut b = Builder {
        keys,
        used: Default::default(),
        issues,
    };
    let scenario = b.build(default_name, events, metrics, source);
    let mut issues = b.issues;
    for (k, (origin, line, _)) in &b.keys {
        if !b.used.contains(k.as_str()) {
            issues.push(Issue {
                line: Some(*line),
                origin: *origin,
                message: unknown_key_message(k),
            });
        }
    }
    issues.sort_by_key(|i| (i.origin as u8, i.line.unwrap_or(usize::MAX)));
    match scenario {
        Some(s) if issues.is_empty() => Ok(s),
        _ => Err(ScenarioError { issues }),
    }
}

type SectionLines = (Origin, Vec<(usize, String)>);

/// Flat text of the layered configuration: every key in name order, then the
/// sections that won. Reading it back gives the same scenario.
fn resolved_text(
    keys: &BTreeMap<String, (Origin, usize, String)>,
    events: Option<&SectionLines>,
    metrics: Option<&SectionLines>,
) -> String {
    let mut out = String::new();
    for (k, (_, _, v)) in keys {
        out.push_str(&format!("{k} = {v}\n"));
    }
    for (head, section) in [("[events]", events), ("[metrics]", metrics)] {
        if let Some((_, lines)) = section {
            out.push_str(&format!("\n{head}\n"));
            for (_, l) in lines {
                out.push_str(l);
                out.push('\n');
            }
        }
    }
    out
}

const KNOWN_KEYS: [&str; 35] = [
    "name",
    "base",
    "v_dc_v",
    "p_rated_w",
    "n_cells",
    "f_ac_hz",
    "f_sw_hz",
    "f_sample_hz",
    "c_cell_f",
    "r_ac_ohm",
    "l_ac_h",
    "r_dc_ohm",
    "l_dc_h",
    "r_arm_ohm",
    "l_arm_h",
    "d_dc_nominal",
    "v_sigma_ref_v",
    "p_demand_w",
    "k_p_a_per_v",
    "k_i_rad_s",
    "controller",
    "compensator",
    "vdelta_feedforward",
    "average_source",
    "sampling",
    "sampling_window_s",
    "i_dc_ref_min_a",
    "i_dc_ref_max_a",
    "open_loop_d_dc",
    "open_loop_d_ac",
    "initial",
    "plant",
    "mode",
    "dt_s",
    "t_end_s",
];

const MORE_KEYS: [&str; 2] = ["output_every", "record_cells"];

fn unknown_key_message(k: &str) -> String {
    let hint = KNOWN_KEYS
        .iter()
        .chain(&MORE_KEYS)
        .find(|known| known.starts_with(k) && known.len() > k.len() && known.as_bytes()[k.len()] == b'_');
    match hint {
        Some(h) => format!("unknown key `{k}` (quantities carry their unit in the key: did you mean `{h}`?)"),
        None => format!("unknown key `{k}`"),
    }
}

struct Builder {
    keys: BTreeMap<String, (Origin, usize, String)>,
    used: std::collections::BTreeSet<String>,
    issues: Vec<Issue>,
}

impl Builder {
    fn raw(&mut self, key: &str) -> Option<(Origin, usize, String)> {
        self.used.insert(key.to_string());
        self.keys.get(key).cloned()
    }

    fn fail(&mut self, key: &str, message: String) {
        let (origin, line) = self.keys.get(key).map_or((Origin::Scenario, None), |(o, l, _)| (*o, Some(*l)));
        self.issues.push(Issue { line, origin, message });
    }

    fn number(&mut self, key: &str, unit: &str) -> Option<f64> {
        let (_, _, v) = self.raw(key)?;
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Some(x),
            _ => {
                let what = if unit.is_empty() { "a plain number".to_string() } else { format!("a plain number in {unit}") };
                self.fail(key, format!("`{key}` expects {what}, found `{v}`"));
                None
            }
        }
    }

    fn integer(&mut self, key: &str) -> Option<usize> {
        let (_, _, v) = self.raw(key)?;
        match v.parse::<usize>() {
            Ok(x) => Some(x),
            Err(_) => {
                self.fail(key, format!("`{key}` expects a non-negative integer, found `{v}`"));
                None
            }
        }
    }

    fn flag(&mut self, key: &str) -> Option<bool> {
        let (_, _, v) = self.raw(key)?;
        match v.as_str() {
            "on" | "true" | "yes" => Some(true),
            "off" | "false" | "no" => Some(false),
            _ => {
                self.fail(key, format!("`{key}` expects on/off, found `{v}`"));
                None
            }
        }
    }

    fn choice<T: Copy>(&mut self, key: &str, options: &[(&str, T)]) -> Option<T> {
        let (_, _, v) = self.raw(key)?;
        match options.iter().find(|(n, _)| *n == v) {
            Some((_, t)) => Some(*t),
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.fail(key, format!("`{key}` must be one of {}, found `{v}`", names.join("/")));
                None
            }
        }
    }

    fn build(
        &mut self,
        default_name: String,
        events: Option<(Origin, Vec<(usize, String)>)>,
        metrics: Option<(Origin, Vec<(usize, String)>)>,
        source: String,
    ) -> Option<Scenario> {
        let name = self.raw("name").map(|(_, _, v)| v).unwrap_or(default_name);
        let base = self
            .choice("base", &[("full_scale", ConverterParams::full_scale()), ("downscaled", ConverterParams::downscaled())])
            .unwrap_or(ConverterParams::full_scale());

        let mut p = base;
        for (key, unit, slot) in [
            ("v_dc_v", "V", &mut p.v_dc),
            ("p_rated_w", "W", &mut p.p_rated),
            ("f_ac_hz", "Hz", &mut p.f_ac),
            ("f_sw_hz", "Hz", &mut p.f_sw),
            ("f_sample_hz", "Hz", &mut p.f_sample),
            ("c_cell_f", "F", &mut p.c_cell),
            ("r_ac_ohm", "Ω", &mut p.r_ac),
            ("l_ac_h", "H", &mut p.l_ac),
            ("r_dc_ohm", "Ω", &mut p.r_dc),
            ("l_dc_h", "H", &mut p.l_dc),
            ("r_arm_ohm", "Ω", &mut p.r_arm),
            ("l_arm_h", "H", &mut p.l_arm),
        ] {
            if let Some(x) = self.number(key, unit) {
                *slot = x;
            }
        }
        if let Some(n) = self.integer("n_cells") {
            p.n_cells = n;
        }
        let params_ok = match p.validate() {
            Ok(_) => true,
            Err(e) => {
                for v in e.violations {
                    let key = param_key(v.field);
                    self.fail(key, format!("{}: {}", key, v.reason));
                }
                false
            }
        };

        let d_dc_nominal = self.number("d_dc_nominal", "").unwrap_or(0.8);
        let p_demand = self.number("p_demand_w", "W").unwrap_or(p.p_rated);
        let mut v_sigma_ref = p.v_dc / d_dc_nominal;
        let mut nominal_d_ac = 0.0;
        if params_ok {
            match default_references(&p, d_dc_nominal, p_demand) {
                Ok(r) => {
                    v_sigma_ref = r.v_sigma_ref;
                    nominal_d_ac = p.derive().r_ac_eq * r.i_ac_ref_mag / r.v_sigma_ref;
                }
                Err(e) => self.fail("p_demand_w", format!("references: {e}")),
            }
        }
        if let Some(v) = self.number("v_sigma_ref_v", "V") {
            if v <= p.v_dc {
                self.fail("v_sigma_ref_v", format!("v_sigma_ref_v = {v} must exceed v_dc_v = {}", p.v_dc));
            }
            v_sigma_ref = v;
            nominal_d_ac = p.derive().r_ac_eq * mmc_core::params::ac_current_for_power(&p, p_demand) / v;
        }

        let k_p = self.number("k_p_a_per_v", "A/V").unwrap_or(1.0);
        let k_i = self.number("k_i_rad_s", "rad/s").unwrap_or(std::f64::consts::TAU * 1000.0);
        let gains = PiGains { k_p, k_i };
        if !gains.valid() {
            self.fail("k_p_a_per_v", format!("PI gains need k_p > 0 and k_i ≥ 0, found {k_p} and {k_i}"));
        }
        let mut controller = ControllerConfig::new(gains, &p);
        if let Some(on) = self.flag("compensator") {
            controller.compensator = on;
        }
        if let Some(g) = self.number("vdelta_feedforward", "") {
            controller.vdelta_feedforward = g;
        }
        if let Some(a) = self.choice("average_source", &[("measured", AverageSource::Measured), ("reference", AverageSource::Reference)]) {
            controller.average_source = a;
        }
        #[derive(Clone, Copy)]
        enum SamplingKind {
            Instant,
            RippleMean,
            Window,
        }
        let kind = self.choice(
            "sampling",
            &[("instant", SamplingKind::Instant), ("ripple_mean", SamplingKind::RippleMean), ("window", SamplingKind::Window)],
        );
        let window = self.number("sampling_window_s", "s");
        controller.sampling = match (kind, window) {
            (Some(SamplingKind::Instant), _) => Sampling::Instant,
            (Some(SamplingKind::Window), Some(w)) => Sampling::Mean { window: w },
            (Some(SamplingKind::Window), None) => {
                self.fail("sampling", "`sampling = window` needs `sampling_window_s`".into());
                Sampling::Instant
            }
            _ => Sampling::ripple_mean(&p),
        };
        let lo = self.number("i_dc_ref_min_a", "A");
        let hi = self.number("i_dc_ref_max_a", "A");
        controller.i_dc_ref_limit = match (lo, hi) {
            (None, None) => None,
            (lo, hi) => {
                let (lo, hi) = (lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY));
                if lo >= hi {
                    self.fail("i_dc_ref_min_a", format!("i_dc_ref_min_a = {lo} is not below i_dc_ref_max_a = {hi}"));
                }
                Some((lo, hi))
            }
        };
        let controller_on = self.flag("controller").unwrap_or(false);

        let ol_dc = self.number("open_loop_d_dc", "").unwrap_or(d_dc_nominal);
        let ol_ac = self.number("open_loop_d_ac", "").unwrap_or(nominal_d_ac);
        if !mmc_core::params::arm_duties_feasible(ol_dc, ol_ac) {
            self.fail("open_loop_d_ac", format!("open-loop duties ({ol_dc}, {ol_ac}) put an arm duty outside [0, 1]"));
        }
        let initial = self
            .choice("initial", &[("steady_state", InitialKind::SteadyState), ("precharge", InitialKind::Precharge)])
            .unwrap_or(InitialKind::SteadyState);
        let plant = self
            .choice("plant", &[("switched", PlantKind::Switched), ("averaged", PlantKind::Averaged)])
            .unwrap_or(PlantKind::Switched);
        let mode = self.choice("mode", &[("run", Mode::Run), ("compare", Mode::Compare)]).unwrap_or(Mode::Run);

        let dt = match self.raw("dt_s") {
            Some((_, _, v)) if v == "auto" => None,
            Some(_) => self.number("dt_s", "s"),
            None => None,
        };
        let dt = match dt {
            Some(dt) => Some(dt),
            None if params_ok => {
                let dt = choose_step(&p);
                if dt.is_none() {
                    self.fail("dt_s", "no step T_sw/(4N k), k ≤ 256, fits the sampling and AC periods; give dt_s".into());
                }
                dt
            }
            None => None,
        };
        if let (Some(dt), true) = (dt, params_ok) {
            let plants: &[PlantKind] = match mode {
                Mode::Run => &[plant],
                Mode::Compare => &[PlantKind::Switched, PlantKind::Averaged],
            };
            for &pk in plants {
                if let Err(e) = check_grid(&p, dt, pk) {
                    self.fail("dt_s", format!("{} plant: {e}", pk.name()));
                }
            }
            if let Sampling::Mean { window } = controller.sampling {
                let steps = window / dt;
                if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) || steps.round() < 1.0 || window > p.t_s() * (1.0 + 1e-12) {
                    self.fail("sampling_window_s", format!("sampling window {window} s must be a whole number of steps and at most T_s"));
                }
            }
        }

        let output_every = self.integer("output_every").unwrap_or(1);
        if output_every == 0 {
            self.fail("output_every", "`output_every` must be at least 1".into());
        }
        let record_cells = self.flag("record_cells").unwrap_or(false);
        let t_end_key = self.number("t_end_s", "s");

        let (events, t_end_event) = self.events(events, dt);
        let t_end = match (t_end_key, t_end_event) {
            (Some(a), Some(b)) if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) => {
                self.fail("t_end_s", format!("t_end_s = {a} disagrees with the `end` event at {b} s"));
                a
            }
            (Some(a), _) => a,
            (None, Some(b)) => b,
            (None, None) => {
                self.issues.push(Issue {
                    line: None,
                    origin: Origin::Scenario,
                    message: "no run length: give `t_end_s` or an `end` event".into(),
                });
                0.0
            }
        };
        if t_end < 0.0 {
            self.fail("t_end_s", format!("t_end_s = {t_end} is negative"));
        }
        if let Some(last) = events.last() {
            if last.t >= t_end && t_end > 0.0 {
                self.fail("t_end_s", format!("t_end_s = {t_end} must come after the last event at {} s", last.t));
            }
        }
        if let Some(dt) = dt {
            let steps = t_end / dt;
            if (steps - steps.round()).abs() > 1e-6 {
                self.fail("t_end_s", format!("t_end_s = {t_end} is not a whole number of {dt} s steps"));
            }
        }
        if mode == Mode::Compare && (controller_on || events.iter().any(|e| e.event.is_control())) {
            self.fail("mode", "model comparison runs open loop; controller events are not allowed".into());
        }

        let metrics = self.metrics(metrics, t_end, p.f_ac);
        Some(Scenario {
            name,
            params: p,
            v_sigma_ref,
            p_demand,
            controller,
            controller_on,
            open_loop: (ol_dc, ol_ac),
            initial,
            plant,
            mode,
            dt: dt?,
            t_end,
            events,
            output_every: output_every.max(1),
            record_cells,
            metrics,
            source,
        })
    }

    fn events(&mut self, events: Option<(Origin, Vec<(usize, String)>)>, dt: Option<f64>) -> (Vec<TimedEvent>, Option<f64>) {
        let mut out: Vec<TimedEvent> = Vec::new();
        let mut end = None;
        let Some((origin, lines)) = events else {
            return (out, end);
        };
        for (line, text) in lines {
            let bad = |msg: String| Issue {
                line: Some(line),
                origin,
                message: msg,
            };
            let mut tokens = text.split_whitespace();
            let t = match tokens.next().and_then(|tok| tok.strip_prefix("t_s=")) {
                Some(v) => match v.parse::<f64>() {
                    Ok(t) if t.is_finite() && t >= 0.0 => t,
                    _ => {
                        self.issues.push(bad(format!("event time `{v}` is not a non-negative number of seconds")));
                        continue;
                    }
                },
                None => {
                    self.issues.push(bad("an event line starts with `t_s=<seconds>`".into()));
                    continue;
                }
            };
            let Some(kind) = tokens.next() else {
                self.issues.push(bad("event name missing".into()));
                continue;
            };
            let mut args = BTreeMap::new();
            let mut arg_ok = true;
            for tok in tokens {
                match tok.split_once('=').map(|(k, v)| (k, v.parse::<f64>())) {
                    Some((k, Ok(v))) if v.is_finite() => {
                        args.insert(k.to_string(), v);
                    }
                    _ => {
                        self.issues.push(bad(format!("event argument `{tok}` is not `name=<number>`")));
                        arg_ok = false;
                    }
                }
            }
            if !arg_ok {
                continue;
            }
            let take = |name: &str, args: &mut BTreeMap<String, f64>| -> Result<f64, String> {
                args.remove(name).ok_or_else(|| format!("`{kind}` needs `{name}=`"))
            };
            let parsed = match kind {
                "enable_controller" => Ok(Some(Event::EnableController)),
                "disable_controller" => Ok(Some(Event::DisableController)),
                "enable_compensator" => Ok(Some(Event::EnableCompensator)),
                "disable_compensator" => Ok(Some(Event::DisableCompensator)),
                "set_power_demand" => take("p_w", &mut args).and_then(|p| {
                    if p >= 0.0 {
                        Ok(Some(Event::SetPowerDemand(p)))
                    } else {
                        Err(format!("power demand {p} W is negative"))
                    }
                }),
                "set_duties" => take("d_dc", &mut args).and_then(|d_dc| {
                    let d_ac = take("d_ac", &mut args)?;
                    if mmc_core::params::arm_duties_feasible(d_dc, d_ac) {
                        Ok(Some(Event::SetDuties { d_dc, d_ac_mag: d_ac }))
                    } else {
                        Err(format!("duties ({d_dc}, {d_ac}) put an arm duty outside [0, 1]"))
                    }
                }),
                "end" => Ok(None),
                other => Err(format!(
                    "unknown event `{other}` (enable_controller, disable_controller, enable_compensator, disable_compensator, set_power_demand, set_duties, end)"
                )),
            };
            match parsed {
                Err(msg) => self.issues.push(bad(msg)),
                Ok(ev) => {
                    if let Some(k) = args.keys().next() {
                        self.issues.push(bad(format!("`{kind}` takes no argument `{k}`")));
                        continue;
                    }
                    let prev = out.last().map(|e| e.t).or(end);
                    if let Some(prev) = prev {
                        if t <= prev {
                            self.issues.push(bad(format!("event at {t} s does not come after the previous one at {prev} s")));
                        }
                    }
                    if end.is_some() {
                        self.issues.push(bad("nothing may follow the `end` event".into()));
                    }
                    if let Some(dt) = dt {
                        let k = t / dt;
                        if (k - k.round()).abs() > 1e-6 {
                            self.issues.push(bad(format!("event time {t} s is not on the {dt} s step grid")));
                        }
                    }
                    match ev {
                        Some(event) => out.push(TimedEvent { t, event }),
                        None => end = Some(t),
                    }
                }
            }
        }
        (out, end)
    }

    fn metrics(&mut self, metrics: Option<(Origin, Vec<(usize, String)>)>, t_end: f64, f_ac: f64) -> Vec<Metric> {
        let mut out = Vec::new();
        let Some((origin, lines)) = metrics else {
            return out;
        };
        for (line, text) in lines {
            let mut tokens = text.split_whitespace();
            let kind = tokens.next().unwrap_or_default().to_string();
            let mut args: BTreeMap<String, String> = BTreeMap::new();
            let mut problems = Vec::new();
            for tok in tokens {
                match tok.split_once('=') {
                    Some((k, v)) => {
                        args.insert(k.to_string(), v.to_string());
                    }
                    None => problems.push(format!("metric argument `{tok}` is not `name=value`")),
                }
            }
            let num = |args: &mut BTreeMap<String, String>, k: &str, problems: &mut Vec<String>| -> Option<f64> {
                let v = args.remove(k)?;
                match v.parse::<f64>() {
                    Ok(x) if x.is_finite() => Some(x),
                    _ => {
                        problems.push(format!("`{k}` expects a number, found `{v}`"));
                        None
                    }
                }
            };
            let label = args.remove("label").unwrap_or_else(|| kind.clone());
            let signal = match args.remove("signal") {
                Some(s) => match Signal::from_name(&s) {
                    Some(sig) => Some(sig),
                    None => {
                        problems.push(format!("unknown signal `{s}`"));
                        None
                    }
                },
                None => None,
            };
            let from = num(&mut args, "from_s", &mut problems);
            let to = num(&mut args, "to_s", &mut problems);
            let window = |problems: &mut Vec<String>| -> (f64, f64) {
                let w = (from.unwrap_or(0.0), to.unwrap_or(t_end));
                if !(w.0 >= 0.0 && w.0 < w.1 && w.1 <= t_end * (1.0 + 1e-12) + 1e-15) {
                    problems.push(format!("window [{}, {}) s is not inside [0, {t_end}] s", w.0, w.1));
                }
                w
            };
            let metric = match kind.as_str() {
                "harmonics" => {
                    let w = if from.is_some() || to.is_some() { Some(window(&mut problems)) } else { None };
                    if let Some((a, b)) = w {
                        let cycles = (b - a) * f_ac;
                        if (cycles - cycles.round()).abs() > 1e-6 || cycles.round() < 1.0 {
                            problems.push(format!("window [{a}, {b}) s is not a whole number of AC periods"));
                        }
                    }
                    Some(Metric::Harmonics {
                        label,
                        signal: signal.unwrap_or(Signal::IDc),
                        window: w,
                    })
                }
                "ripple" => Some(Metric::Ripple {
                    label,
                    signal: signal.unwrap_or(Signal::IDc),
                    window: window(&mut problems),
                }),
                "balance" => Some(Metric::Balance {
                    label,
                    window: window(&mut problems),
                }),
                "tracking" => Some(Metric::Tracking {
                    label,
                    window: window(&mut problems),
                }),
                "transient" => {
                    let step = num(&mut args, "step_s", &mut problems);
                    let band_pct = num(&mut args, "band_pct", &mut problems).unwrap_or(5.0);
                    let target = match args.remove("target").as_deref() {
                        None | Some("final") => Target::Final,
                        Some("reference") => Target::Reference,
                        Some(other) => {
                            problems.push(format!("`target` must be final/reference, found `{other}`"));
                            Target::Final
                        }
                    };
                    let to = to.unwrap_or(t_end);
                    match step {
                        Some(step) if step > 0.0 && step < to && to <= t_end * (1.0 + 1e-12) => Some(Metric::Transient {
                            label,
                            signal: signal.unwrap_or(Signal::VSigma),
                            step,
                            to,
                            band_pct,
                            target,
                        }),
                        Some(step) => {
                            problems.push(format!("step at {step} s must lie inside (0, {to}) s"));
                            None
                        }
                        None => {
                            problems.push("`transient` needs `step_s=`".into());
                            None
                        }
                    }
                }
                other => {
                    problems.push(format!("unknown metric `{other}` (harmonics, ripple, transient, balance, tracking)"));
                    None
                }
            };
            for k in args.keys() {
                problems.push(format!("`{kind}` takes no argument `{k}`"));
            }
            if problems.is_empty() {
                out.extend(metric);
            }
            for message in problems {
                self.issues.push(Issue {
                    line: Some(line),
                    origin,
                    message,
                });
            }
        }
        out
    }
}

fn param_key(field: &str) -> &'static str {
    match field {
        "v_dc" => "v_dc_v",
        "p_rated" => "p_rated_w",
        "n_cells" => "n_cells",
        "f_ac" => "f_ac_hz",
        "f_sw" => "f_sw_hz",
        "f_sample" => "f_sample_hz",
        "c_cell" => "c_cell_f",
        "r_ac" => "r_ac_ohm",
        "l_ac" => "l_ac_h",
        "r_dc" => "r_dc_ohm",
        "l_dc" => "l_dc_h",
        "r_arm" => "r_arm_ohm",
        "l_arm" => "l_arm_h",
        _ => "base",
    }
}
