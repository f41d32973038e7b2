//! Fixed-step simulation of either plant under open-loop duties or the
//! controller, driven by a timed event list.
//!
//! Time is kept as an integer step count. The AC square wave, controller
//! samples and swap transitions all land on the step grid, so their timing
//! carries no rounding.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::averaged::{step_held, AveragedState, ControlInput};
use crate::controller::{Controller, ControllerConfig, Sample, Sampling, SignContext};
use crate::math::as_integer;
use crate::modulation::{arm_refs, Arm};
use crate::params::{ac_current_for_power, ConverterParams, DerivedParams, ParamError};
use crate::rk4::Rk4;
use crate::steady::{periodic_steady_state, SteadyStateError};
use crate::swap::{SwapMachine, TooEarly};
use crate::switched::{derivatives_into, GateWord, SwitchedState};
use crate::trajectory::{ClampEvent, EventMarker, Record, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantKind {
    Averaged,
    Switched,
}

impl PlantKind {
    pub fn name(self) -> &'static str {
        match self {
            PlantKind::Averaged => "averaged",
            PlantKind::Switched => "switched",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Event {
    EnableController,
    DisableController,
    EnableCompensator,
    DisableCompensator,
    SetPowerDemand(f64),
    /// Open-loop duties; take effect whenever the controller is off.
    SetDuties { d_dc: f64, d_ac_mag: f64 },
}

impl Event {
    pub fn label(&self) -> String {
        match self {
            Event::EnableController => "enable_controller".into(),
            Event::DisableController => "disable_controller".into(),
            Event::EnableCompensator => "enable_compensator".into(),
            Event::DisableCompensator => "disable_compensator".into(),
            Event::SetPowerDemand(p) => format!("set_power_demand {p}"),
            Event::SetDuties { d_dc, d_ac_mag } => format!("set_duties {d_dc} {d_ac_mag}"),
        }
    }

    /// Whether the event concerns closed-loop operation.
    pub fn is_control(&self) -> bool {
        !matches!(self, Event::SetDuties { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedEvent {
    pub t: f64,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    /// Periodic steady state of the averaged model under the initial
    /// open-loop duties.
    SteadyState,
    /// Every cell at `v_sigma_ref / N`, no current.
    Precharge,
    Given(AveragedState),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ConverterParams,
    pub v_sigma_ref: f64,
    pub p_demand: f64,
    pub controller: ControllerConfig,
    /// Controller active from `t = 0`.
    pub controller_on: bool,
    /// Open-loop `(d_dc, |d_ac|)` in force at `t = 0`.
    pub open_loop: (f64, f64),
    pub events: Vec<TimedEvent>,
    pub t_end: f64,
    pub dt: f64,
    pub plant: PlantKind,
    pub initial: Initial,
    pub record_cells: bool,
    /// Keep every `record_every`-th step.
    pub record_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    Params(ParamError),
    Grid(String),
    SteadyState(SteadyStateError),
    Swap(TooEarly),
    NonFinite { t: f64 },
    CapacitorCollapse { t: f64, v_sigma: f64 },
    CellExcursion { t: f64, arm: Arm, cell: usize, voltage: f64, limit: f64 },
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Params(e) => write!(f, "{e}"),
            Self::Grid(msg) => write!(f, "time grid: {msg}"),
            Self::SteadyState(e) => write!(f, "initial state: {e}"),
            Self::Swap(e) => write!(f, "{e}"),
            Self::NonFinite { t } => write!(f, "state became non-finite at t = {t:.9} s"),
            Self::CapacitorCollapse { t, v_sigma } => {
                write!(f, "capacitor voltage collapsed to {v_sigma:.3} V at t = {t:.9} s")
            }
            Self::CellExcursion {
                t,
                arm,
                cell,
                voltage,
                limit,
            } => write!(
                f,
                "cell {} of arm {} at {voltage:.3} V left (0, {limit:.3}) V at t = {t:.9} s",
                cell + 1,
                arm.name()
            ),
        }
    }
}

impl core::error::Error for SimError {}

impl From<ParamError> for SimError {
    fn from(e: ParamError) -> Self {
        Self::Params(e)
    }
}

/// Step counts that tie the integration grid to the converter timings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub steps_per_sample: u64,
    pub steps_per_half: u64,
    /// Steps per carrier slot `T_sw / (4N)`, switched plant only.
    pub steps_per_slot: Option<u64>,
}

/// Checks that `dt` fits every timing of `p` for the given plant.
pub fn check_grid(p: &ConverterParams, dt: f64, plant: PlantKind) -> Result<Grid, String> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(format!("step {dt} s is not positive"));
    }
    let fits = |what: &str, span: f64| {
        as_integer(span / dt).filter(|&k| k > 0).ok_or_else(|| format!("step {dt} s does not divide {what} ({span} s)"))
    };
    let steps_per_sample = fits("the sampling period", p.t_s())?;
    let steps_per_half = fits("half the AC period", 0.5 * p.t_ac())?;
    let steps_per_slot = match plant {
        PlantKind::Switched => Some(fits("a carrier slot T_sw/(4N)", p.t_sw() / (4.0 * p.n_cells as f64))?),
        PlantKind::Averaged => {
            let limit = crate::averaged::max_step(p.t_sw());
            if dt > limit * (1.0 + 1e-12) {
                return Err(format!("step {dt} s exceeds T_sw/20 = {limit} s"));
            }
            None
        }
    };
    Ok(Grid {
        steps_per_sample,
        steps_per_half,
        steps_per_slot,
    })
}

/// Largest step `T_sw / (4N k)` that satisfies [`check_grid`] for both plants.
pub fn choose_step(p: &ConverterParams) -> Option<f64> {
    let slot = p.t_sw() / (4.0 * p.n_cells as f64);
    (1..=256u32).map(|k| slot / k as f64).find(|&dt| {
        check_grid(p, dt, PlantKind::Switched).is_ok() && check_grid(p, dt, PlantKind::Averaged).is_ok()
    })
}

/// Step index of time `t`, which must be on the grid.
fn step_of(t: f64, dt: f64) -> Result<u64, SimError> {
    as_integer(t / dt).ok_or_else(|| SimError::Grid(format!("time {t} s is not a multiple of the step {dt} s")))
}

enum Plant {
    Averaged(AveragedState),
    Switched(SwitchedPlant),
}

struct SwitchedPlant {
    x: Vec<f64>,
    n: usize,
    swap: SwapMachine,
    gates: GateWord,
    rk: Rk4,
    cell_limit: f64,
}

impl Plant {
    fn measure(&self) -> Sample {
        match self {
            Plant::Averaged(s) => Sample {
                i_dc: s.i_dc,
                i_ac: s.i_ac,
                v_sigma: s.v_sigma,
                v_delta: s.v_delta,
            },
            Plant::Switched(sp) => {
                let n = sp.n;
                let cap: f64 = sp.x[2..2 + n].iter().sum();
                let can: f64 = sp.x[2 + n..2 + 2 * n].iter().sum();
                Sample {
                    i_dc: sp.x[0],
                    i_ac: sp.x[1],
                    v_sigma: 0.5 * (cap + can),
                    v_delta: 0.5 * (cap - can),
                }
            }
        }
    }

    fn cells(&self) -> Option<&[f64]> {
        match self {
            Plant::Averaged(_) => None,
            Plant::Switched(sp) => Some(&sp.x[2..]),
        }
    }
}

/// Runs one scenario and returns the full trajectory.
pub fn run(cfg: &RunConfig) -> Result<Trajectory, SimError> {
    let p = cfg.params.validate()?;
    let d = p.derive();
    let dt = cfg.dt;
    let grid = check_grid(&p, dt, cfg.plant).map_err(SimError::Grid)?;
    let n_steps = step_of(cfg.t_end, dt)?;
    if cfg.record_every == 0 {
        return Err(SimError::Grid("record_every must be at least one".into()));
    }
    let mut events = Vec::with_capacity(cfg.events.len());
    for e in &cfg.events {
        events.push((step_of(e.t, dt)?, e.event));
    }
    if events.windows(2).any(|w| w[0].0 > w[1].0) {
        return Err(SimError::Grid("events are not in time order".into()));
    }

    let (mut ol_dc, mut ol_ac) = cfg.open_loop;
    let start = match &cfg.initial {
        Initial::SteadyState => periodic_steady_state(&p, ol_dc, ol_ac, dt).map_err(SimError::SteadyState)?,
        Initial::Precharge => AveragedState {
            v_sigma: cfg.v_sigma_ref,
            ..AveragedState::default()
        },
        Initial::Given(s) => *s,
    };
    let mut plant = match cfg.plant {
        PlantKind::Averaged => Plant::Averaged(start),
        PlantKind::Switched => {
            let n = p.n_cells;
            let s = SwitchedState::from_leg(n, start.i_dc, start.i_ac, start.v_sigma, start.v_delta);
            let mut x = Vec::with_capacity(2 + 4 * n);
            x.push(s.i_dc);
            x.push(s.i_ac);
            x.extend_from_slice(&s.v_cell);
            Plant::Switched(SwitchedPlant {
                rk: Rk4::new(x.len()),
                x,
                n,
                swap: SwapMachine::new(n),
                gates: GateWord::new(n),
                cell_limit: 2.0 * cfg.v_sigma_ref / n as f64,
            })
        }
    };

    let mut ctl = Controller::new(p, cfg.controller, ol_dc, ol_ac);
    let mut controller_on = false;
    let mut engage_pending = cfg.controller_on;
    let mut compensator_on = cfg.controller.compensator;
    let mut p_demand = cfg.p_demand;
    let mut i_ac_ref_mag = ac_current_for_power(&p, p_demand);

    let capacity = (n_steps / cfg.record_every as u64 + 1) as usize;
    let mut traj = Trajectory {
        dt: dt * cfg.record_every as f64,
        records: Vec::with_capacity(capacity),
        n_cells: p.n_cells,
        cells: (cfg.record_cells && cfg.plant == PlantKind::Switched).then(|| Vec::with_capacity(capacity * 4 * p.n_cells)),
        ..Trajectory::default()
    };
    let mut clamp_run: Option<ClampEvent> = None;
    let mut next_event = 0;
    let mut acc = Accumulator::default();
    let mean_steps = match cfg.controller.sampling {
        Sampling::Instant => None,
        Sampling::Mean { window } => Some(
            as_integer(window / dt)
                .filter(|&w| w >= 1 && w <= grid.steps_per_sample)
                .ok_or_else(|| SimError::Grid(format!("sampling window {window} s is not 1..=T_s/dt steps of {dt} s")))?,
        ),
    };

    let sign_of = |step: i64| -> f64 {
        if step.div_euclid(grid.steps_per_half as i64) % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    };

    for step in 0..=n_steps {
        let t = step as f64 * dt;

        while next_event < events.len() && events[next_event].0 == step {
            let ev = events[next_event].1;
            traj.events.push(EventMarker { t, label: ev.label() });
            match ev {
                Event::EnableController => engage_pending = !controller_on,
                Event::DisableController => {
                    controller_on = false;
                    engage_pending = false;
                }
                Event::EnableCompensator => compensator_on = true,
                Event::DisableCompensator => compensator_on = false,
                Event::SetPowerDemand(pw) => {
                    p_demand = pw;
                    i_ac_ref_mag = ac_current_for_power(&p, pw);
                }
                Event::SetDuties { d_dc, d_ac_mag } => {
                    ol_dc = d_dc;
                    ol_ac = d_ac_mag;
                }
            }
            next_event += 1;
        }

        if step % grid.steps_per_half == 0 {
            if let Plant::Switched(sp) = &mut plant {
                sp.swap.advance(t, 0.5 * p.t_ac()).map_err(SimError::Swap)?;
            }
        }

        let sign = sign_of(step as i64);
        if let Some(w) = mean_steps {
            let phase = step % grid.steps_per_sample;
            if phase == 0 || phase > grid.steps_per_sample - w {
                acc.add(&plant.measure());
            }
        }
        if step % grid.steps_per_sample == 0 {
            let m = match cfg.controller.sampling {
                Sampling::Instant => plant.measure(),
                Sampling::Mean { .. } => acc.take(),
            };
            ctl.observe(t, &m);
            if engage_pending {
                ctl.engage(ol_dc, ol_ac);
                controller_on = true;
                engage_pending = false;
            }
            if controller_on {
                let out = ctl.sample(
                    cfg.v_sigma_ref,
                    i_ac_ref_mag,
                    p.v_dc,
                    SignContext {
                        before: sign_of(step as i64 - 1),
                        after: sign,
                    },
                );
                if out.saturated {
                    traj.saturated_samples += 1;
                }
            }
        }

        let (d_dc_pred, d_comp, d_ac_mag, i_dc_ref) = if controller_on {
            let comp = if compensator_on {
                let since_edge = step % grid.steps_per_half;
                let t_ramp = (since_edge as f64 + 0.5) * dt;
                let (i_ac_avg, i_dc_avg) = ctl.compensator_currents(i_ac_ref_mag, p_demand);
                ctl.compensation(t_ramp, i_ac_avg, i_dc_avg, cfg.v_sigma_ref)
            } else {
                0.0
            };
            (ctl.state.held_d_dc, comp, ctl.state.held_d_ac, ctl.state.i_dc_ref)
        } else {
            (ol_dc, 0.0, ol_ac, p_demand / p.v_dc)
        };

        let requested = ControlInput {
            d_dc: d_dc_pred + d_comp,
            d_ac: sign * d_ac_mag,
            v_dc: p.v_dc,
        };
        let (u, clipped) = requested.clamped();
        if clipped {
            let (ap, an) = requested.arm_duties();
            let excess = [ap, an].iter().map(|&x| (-x).max(x - 1.0).max(0.0)).fold(0.0, f64::max);
            match &mut clamp_run {
                Some(c) => {
                    c.t_end = t;
                    c.steps += 1;
                    c.worst_excess = c.worst_excess.max(excess);
                }
                None => {
                    clamp_run = Some(ClampEvent {
                        t_start: t,
                        t_end: t,
                        steps: 1,
                        worst_excess: excess,
                    })
                }
            }
        } else if let Some(c) = clamp_run.take() {
            traj.clamps.push(c);
        }

        if step % cfg.record_every as u64 == 0 {
            let m = plant.measure();
            traj.records.push(Record {
                t,
                i_dc: m.i_dc,
                i_ac: m.i_ac,
                v_sigma: m.v_sigma,
                v_delta: m.v_delta,
                d_dc_pred,
                d_dc_comp: d_comp,
                d_dc_final: u.d_dc,
                d_ac: u.d_ac,
                i_ac_ref: sign * i_ac_ref_mag,
                i_dc_ref,
                v_sigma_ref: cfg.v_sigma_ref,
            });
            if let (Some(buf), Some(cells)) = (traj.cells.as_mut(), plant.cells()) {
                buf.extend_from_slice(cells);
            }
        }

        if step == n_steps {
            break;
        }
        advance(&mut plant, &p, &d, u, t, dt)?;
    }
    if let Some(c) = clamp_run.take() {
        traj.clamps.push(c);
    }
    Ok(traj)
}

#[derive(Default)]
struct Accumulator {
    sum: Sample,
    count: u32,
}

impl Accumulator {
    fn add(&mut self, m: &Sample) {
        self.sum.i_dc += m.i_dc;
        self.sum.i_ac += m.i_ac;
        self.sum.v_sigma += m.v_sigma;
        self.sum.v_delta += m.v_delta;
        self.count += 1;
    }

    fn take(&mut self) -> Sample {
        let k = 1.0 / self.count.max(1) as f64;
        let m = Sample {
            i_dc: self.sum.i_dc * k,
            i_ac: self.sum.i_ac * k,
            v_sigma: self.sum.v_sigma * k,
            v_delta: self.sum.v_delta * k,
        };
        *self = Self::default();
        m
    }
}

fn advance(plant: &mut Plant, p: &ConverterParams, d: &DerivedParams, u: ControlInput, t: f64, dt: f64) -> Result<(), SimError> {
    let t_next = t + dt;
    match plant {
        Plant::Averaged(s) => {
            let next = step_held(s, t, dt, d, |_| u);
            if !next.is_finite() {
                return Err(SimError::NonFinite { t: t_next });
            }
            if next.v_sigma <= 0.0 {
                return Err(SimError::CapacitorCollapse {
                    t: t_next,
                    v_sigma: next.v_sigma,
                });
            }
            *s = next;
        }
        Plant::Switched(sp) => {
            let m = arm_refs(u.d_dc, u.d_ac);
            sp.gates.update_interval(&m, t, dt, &sp.swap, p.t_sw());
            let n = sp.n;
            let weight = &sp.gates.weight;
            let c = p.c_cell;
            let v_dc = u.v_dc;
            sp.rk.step(&mut sp.x, t, dt, |_, x, dx| derivatives_into(x, weight, n, d, c, v_dc, dx));
            if sp.x.iter().any(|v| !v.is_finite()) {
                return Err(SimError::NonFinite { t: t_next });
            }
            for (j, &v) in sp.x[2..].iter().enumerate() {
                if !(v > 0.0 && v < sp.cell_limit) {
                    return Err(SimError::CellExcursion {
                        t: t_next,
                        arm: Arm::ALL[j / n],
                        cell: j % n,
                        voltage: v,
                        limit: sp.cell_limit,
                    });
                }
            }
        }
    }
    Ok(())
}

/// Open-loop run of either plant with piecewise-constant duties.
pub fn simulate_open_loop(
    params: &ConverterParams,
    v_sigma_ref: f64,
    duties: (f64, f64),
    steps: &[(f64, f64, f64)],
    t_end: f64,
    dt: f64,
    plant: PlantKind,
) -> Result<Trajectory, SimError> {
    let cfg = RunConfig {
        params: *params,
        v_sigma_ref,
        p_demand: 0.0,
        controller: ControllerConfig::new(crate::controller::PiGains { k_p: 1.0, k_i: 0.0 }, params),
        controller_on: false,
        open_loop: duties,
        events: steps
            .iter()
            .map(|&(t, d_dc, d_ac_mag)| TimedEvent {
                t,
                event: Event::SetDuties { d_dc, d_ac_mag },
            })
            .collect(),
        t_end,
        dt,
        plant,
        initial: Initial::SteadyState,
        record_cells: plant == PlantKind::Switched,
        record_every: 1,
    };
    run(&cfg)
}

/// Per-AC-period spread (max − min) of cell voltages within each arm.
pub fn cell_spread_per_period(traj: &Trajectory, records_per_period: usize) -> Vec<f64> {
    let n = traj.n_cells;
    let Some(cells) = traj.cells.as_ref() else {
        return Vec::new();
    };
    let rows = cells.len() / (4 * n);
    let mut out = Vec::with_capacity(rows / records_per_period.max(1));
    let mut k = 0;
    while k + records_per_period <= rows {
        let mut worst: f64 = 0.0;
        for r in k..k + records_per_period {
            let row = &cells[r * 4 * n..(r + 1) * 4 * n];
            for arm in row.chunks(n) {
                let (lo, hi) = arm.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                worst = worst.max(hi - lo);
            }
        }
        out.push(worst);
        k += records_per_period;
    }
    out
}
