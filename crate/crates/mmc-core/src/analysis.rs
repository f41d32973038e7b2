//! Post-processing of trajectories: single-bin spectra, step metrics, model
//! agreement, and a time-domain probe of the outer-loop plant.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;

use crate::math::{abs, as_integer, cos, sin, sqrt, TAU};
use crate::params::{ConverterParams, OperatingPoint};
use crate::rk4;
use crate::trajectory::{Signal, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub enum AnalysisError {
    /// The window does not hold an integer number of cycles.
    NonIntegerWindow { f: f64, window: f64 },
    EmptyWindow,
    WindowOutOfRange { t0: f64, t1: f64 },
    EventInWindow { t: f64, label: String },
    NoStep,
    MultipleSteps,
    Mismatch(&'static str),
    /// The probe response kept changing over the measurement window.
    NotSettled { f: f64 },
    Incommensurate { f: f64 },
}

impl fmt::Display for AnalysisError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonIntegerWindow { f: hz, window } => {
                write!(f, "window of {window} s is not an integer number of {hz} Hz cycles")
            }
            Self::EmptyWindow => f.write_str("window holds no samples"),
            Self::WindowOutOfRange { t0, t1 } => {
                write!(f, "window [{t0}, {t1}) s is outside the trajectory")
            }
            Self::EventInWindow { t, label } => {
                write!(f, "event '{label}' at t = {t} s falls inside the window")
            }
            Self::NoStep => f.write_str("no reference step found"),
            Self::MultipleSteps => f.write_str("more than one reference step in the window"),
            Self::Mismatch(what) => write!(f, "trajectories differ in {what}"),
            Self::NotSettled { f: hz } => write!(f, "probe at {hz} Hz did not settle"),
            Self::Incommensurate { f: hz } => {
                write!(f, "{hz} Hz has no common window with the AC period")
            }
        }
    }
}

impl core::error::Error for AnalysisError {}

/// Complex amplitude of the `f` component of uniformly sampled `x`, so that
/// `A cos(2πft + φ)` returns `A e^{jφ}`. At `f = 0` returns the mean.
pub fn dft_component(x: &[f64], dt: f64, f: f64) -> Result<Complex64, AnalysisError> {
    if x.is_empty() {
        return Err(AnalysisError::EmptyWindow);
    }
    let m = x.len() as f64;
    if f == 0.0 {
        return Ok(Complex64::new(x.iter().sum::<f64>() / m, 0.0));
    }
    let window = m * dt;
    if as_integer(window * f).filter(|&k| k > 0).is_none() {
        return Err(AnalysisError::NonIntegerWindow { f, window });
    }
    let w = TAU * f * dt;
    let (mut re, mut im) = (0.0, 0.0);
    for (j, &v) in x.iter().enumerate() {
        let ph = w * j as f64;
        re += v * cos(ph);
        im -= v * sin(ph);
    }
    Ok(Complex64::new(2.0 * re / m, 2.0 * im / m))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicReport {
    pub dc_component: f64,
    /// Second harmonic of the AC frequency, % of the DC component.
    pub h2_pct: f64,
    /// Fourth harmonic, % of the DC component.
    pub h4_pct: f64,
    pub resolution_hz: f64,
    pub window: (f64, f64),
}

impl HarmonicReport {
    pub fn component_at(&self, harmonic: u32) -> Option<f64> {
        match harmonic {
            2 => Some(self.h2_pct),
            4 => Some(self.h4_pct),
            _ => None,
        }
    }
}

/// Records with `t0 <= t < t1`, after checking the window against the
/// trajectory and its events.
pub fn window_range(traj: &Trajectory, t0: f64, t1: f64) -> Result<core::ops::Range<usize>, AnalysisError> {
    let i0 = traj.index_at(t0).ok_or(AnalysisError::WindowOutOfRange { t0, t1 })?;
    let i1 = match traj.index_at(t1) {
        Some(i) => i,
        // A window may end one record past the last one.
        None if abs(t1 - (traj.t_end() + traj.dt)) <= 1e-6 * traj.dt => traj.len(),
        None => return Err(AnalysisError::WindowOutOfRange { t0, t1 }),
    };
    if i1 <= i0 {
        return Err(AnalysisError::EmptyWindow);
    }
    if let Some(e) = traj.events.iter().find(|e| e.t > t0 && e.t < t1) {
        return Err(AnalysisError::EventInWindow {
            t: e.t,
            label: e.label.clone(),
        });
    }
    Ok(i0..i1)
}

/// 2nd and 4th harmonic content of `signal` relative to its mean. With no
/// window given the last ten AC periods are used.
pub fn harmonic_report(
    traj: &Trajectory,
    signal: Signal,
    f_ac: f64,
    window: Option<(f64, f64)>,
) -> Result<HarmonicReport, AnalysisError> {
    let (t0, t1) = window.unwrap_or_else(|| {
        let t1 = traj.t_end() + traj.dt;
        (t1 - 10.0 / f_ac, t1)
    });
    if as_integer((t1 - t0) * f_ac).filter(|&k| k > 0).is_none() {
        return Err(AnalysisError::NonIntegerWindow {
            f: f_ac,
            window: t1 - t0,
        });
    }
    let range = window_range(traj, t0, t1)?;
    let x: Vec<f64> = traj.records[range].iter().map(|r| signal_value(signal, r)).collect();
    let dc = dft_component(&x, traj.dt, 0.0)?.re;
    let h2 = dft_component(&x, traj.dt, 2.0 * f_ac)?.norm();
    let h4 = dft_component(&x, traj.dt, 4.0 * f_ac)?.norm();
    Ok(HarmonicReport {
        dc_component: dc,
        h2_pct: 100.0 * h2 / abs(dc),
        h4_pct: 100.0 * h4 / abs(dc),
        resolution_hz: 1.0 / (t1 - t0),
        window: (t0, t1),
    })
}

fn signal_value(s: Signal, r: &crate::trajectory::Record) -> f64 {
    s.get(r)
}

/// Trailing moving average over `w` samples. The first `w - 1` outputs
/// average over what is available.
pub fn moving_average(x: &[f64], w: usize) -> Vec<f64> {
    let w = w.max(1);
    let mut out = Vec::with_capacity(x.len());
    let mut sum = 0.0;
    for (k, &v) in x.iter().enumerate() {
        sum += v;
        if k >= w {
            sum -= x[k - w];
        }
        // Periodic exact re-summation keeps long runs free of drift.
        if k % 4096 == 4095 {
            let lo = (k + 1).saturating_sub(w);
            sum = x[lo..=k].iter().sum();
        }
        out.push(sum / (k + 1).min(w) as f64);
    }
    out
}

/// Peak-to-peak of `signal` over `[t0, t1)` after a trailing moving average
/// of `smooth` records.
pub fn peak_to_peak(traj: &Trajectory, signal: Signal, t0: f64, t1: f64, smooth: usize) -> Result<f64, AnalysisError> {
    let range = window_range(traj, t0, t1)?;
    let smooth = smooth.max(1);
    if range.start + 1 < smooth {
        return Err(AnalysisError::WindowOutOfRange { t0, t1 });
    }
    let x: Vec<f64> = traj.records[range.start + 1 - smooth..range.end]
        .iter()
        .map(|r| signal_value(signal, r))
        .collect();
    let y = moving_average(&x, smooth);
    let tail = &y[smooth - 1..];
    let (lo, hi) = tail.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(hi - lo)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransientReport {
    /// Largest excursion past the final value, % of the final value.
    pub overshoot_pct: f64,
    /// Time from the step until the signal stays inside the band, in AC
    /// periods.
    pub settling_periods: f64,
    pub band_pct: f64,
}

/// A reference that steps once from `initial` to `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub t_step: f64,
    pub initial: f64,
    pub target: f64,
}

impl StepSchedule {
    /// Finds the single change in a sampled reference.
    pub fn from_reference(t: &[f64], r: &[f64]) -> Result<Self, AnalysisError> {
        let scale = r.iter().fold(0.0f64, |m, v| m.max(abs(*v))).max(1e-300);
        let mut changes = (1..r.len().min(t.len())).filter(|&k| abs(r[k] - r[k - 1]) > 1e-12 * scale);
        let k = changes.next().ok_or(AnalysisError::NoStep)?;
        if changes.next().is_some() {
            return Err(AnalysisError::MultipleSteps);
        }
        Ok(Self {
            t_step: t[k],
            initial: r[k - 1],
            target: r[k],
        })
    }
}

/// Overshoot and settling of `y(t)` after the step in `schedule`. When the
/// reference does not move (`initial == target`) the overshoot is the largest
/// deviation either side.
pub fn transient_metrics(
    t: &[f64],
    y: &[f64],
    schedule: &StepSchedule,
    band_pct: f64,
    period: f64,
) -> Result<TransientReport, AnalysisError> {
    if t.len() != y.len() {
        return Err(AnalysisError::Mismatch("length"));
    }
    let start = t.iter().position(|&ti| ti >= schedule.t_step).ok_or(AnalysisError::NoStep)?;
    let target = schedule.target;
    let dir = schedule.target - schedule.initial;
    let mut worst: f64 = 0.0;
    for &v in &y[start..] {
        let past = if dir > 0.0 {
            v - target
        } else if dir < 0.0 {
            target - v
        } else {
            abs(v - target)
        };
        worst = worst.max(past);
    }
    let band = band_pct / 100.0 * abs(target);
    let last_out = (start..y.len()).rev().find(|&k| abs(y[k] - target) > band);
    let settle_t = match last_out {
        None => t[start],
        Some(k) if k + 1 < t.len() => t[k + 1],
        Some(_) => f64::INFINITY,
    };
    Ok(TransientReport {
        overshoot_pct: 100.0 * worst / abs(target),
        settling_periods: (settle_t - schedule.t_step) / period,
        band_pct,
    })
}

/// Normalized deviation of one variable between two trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    pub rms: f64,
    pub peak: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgreementReport {
    pub i_dc: Deviation,
    pub i_ac: Deviation,
    pub v_sigma: Deviation,
    pub v_delta: Deviation,
}

impl AgreementReport {
    pub fn worst_rms(&self) -> f64 {
        self.i_dc.rms.max(self.i_ac.rms).max(self.v_sigma.rms).max(self.v_delta.rms)
    }

    pub fn rows(&self) -> [(&'static str, Deviation); 4] {
        [
            ("i_dc", self.i_dc),
            ("i_ac", self.i_ac),
            ("v_sigma", self.v_sigma),
            ("v_delta", self.v_delta),
        ]
    }
}

/// Scales for [`model_agreement`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub i_dc: f64,
    pub i_ac: f64,
    pub voltage: f64,
}

impl Normalization {
    /// Rated currents (`P/v_dc`, `√(P/R_ac)`) and the capacitor reference.
    pub fn rated(p: &ConverterParams, v_sigma_ref: f64) -> Self {
        Self {
            i_dc: p.p_rated / p.v_dc,
            i_ac: sqrt(p.p_rated / p.r_ac),
            voltage: v_sigma_ref,
        }
    }
}

/// RMS and peak deviation between two runs of the same scenario after both
/// are smoothed with a `smooth`-record moving average (one carrier period).
/// The first `smooth - 1` records are skipped.
pub fn model_agreement(
    a: &Trajectory,
    b: &Trajectory,
    norm: &Normalization,
    smooth: usize,
) -> Result<AgreementReport, AnalysisError> {
    if a.len() != b.len() {
        return Err(AnalysisError::Mismatch("length"));
    }
    if abs(a.dt - b.dt) > 1e-12 * a.dt {
        return Err(AnalysisError::Mismatch("sample spacing"));
    }
    if a.events.len() != b.events.len() || a.events.iter().zip(&b.events).any(|(x, y)| x != y) {
        return Err(AnalysisError::Mismatch("event schedule"));
    }
    let skip = smooth.max(1) - 1;
    if a.len() <= skip {
        return Err(AnalysisError::EmptyWindow);
    }
    let dev = |s: Signal, scale: f64| {
        let x = moving_average(&a.signal(s), smooth);
        let y = moving_average(&b.signal(s), smooth);
        let (mut sq, mut peak) = (0.0, 0.0f64);
        for (u, v) in x[skip..].iter().zip(&y[skip..]) {
            let e = (u - v) / scale;
            sq += e * e;
            peak = peak.max(abs(e));
        }
        Deviation {
            rms: sqrt(sq / (x.len() - skip) as f64),
            peak,
        }
    };
    Ok(AgreementReport {
        i_dc: dev(Signal::IDc, norm.i_dc),
        i_ac: dev(Signal::IAc, norm.i_ac),
        v_sigma: dev(Signal::VSigma, norm.voltage),
        v_delta: dev(Signal::VDelta, norm.voltage),
    })
}

/// Settings for [`small_signal_probe`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSettings {
    /// Injection amplitude as a fraction of the operating DC current.
    pub eps_frac: f64,
    /// Minimum number of cycles of the probe frequency to project over.
    pub cycles: u32,
    /// Time allowed for the start-up transient to decay [s].
    pub settle: f64,
    pub dt: f64,
}

impl ProbeSettings {
    pub fn for_params(p: &ConverterParams) -> Self {
        Self {
            eps_frac: 1e-3,
            cycles: 20,
            settle: 20e-3,
            dt: p.t_s() / 40.0,
        }
    }
}

/// Measures `v̂_sigma / î_dc` at `f` by simulation.
///
/// The plant is the averaged model reduced to `i_ac` and `v_sigma`, with
/// `i_dc` imposed as `I_dc + ε sin(2πft)`, the AC duty fixed at `±|D_ac|`
/// on the square wave, and the DC duty set at each instant to what the DC
/// loop needs to carry the imposed current. A second copy runs without the
/// injection, and the projection is taken on the difference so the
/// switching-frequency content of the operating point drops out.
pub fn small_signal_probe(
    p: &ConverterParams,
    op: &OperatingPoint,
    f: f64,
    s: &ProbeSettings,
) -> Result<Complex64, AnalysisError> {
    let d = p.derive();
    let dt = s.dt;
    let t_ac = p.t_ac();
    let half = as_integer(0.5 * t_ac / dt).ok_or(AnalysisError::NonIntegerWindow { f: p.f_ac, window: dt })?;

    // Shortest whole number of AC periods holding at least `cycles` cycles
    // of f and an integer number of them.
    let min_periods = libm::ceil(s.cycles as f64 * p.f_ac / f).max(1.0) as u64;
    let periods = (min_periods..min_periods * 16)
        .find(|&n| as_integer(n as f64 * f / p.f_ac).is_some())
        .ok_or(AnalysisError::Incommensurate { f })?;
    let settle_periods = libm::ceil(s.settle / t_ac) as u64;
    let steps_per_period = 2 * half;
    let n_settle = settle_periods * steps_per_period;
    let n_window = periods * steps_per_period;

    // Source voltage that makes the operating point an exact equilibrium.
    let v_dc = op.d_dc * op.v_sigma + d.r_dc_eq * op.i_dc;
    let eps = s.eps_frac * op.i_dc;
    let w = TAU * f;

    let rhs = |x: &[f64; 2], i_dc: f64, di_dc: f64, d_ac: f64| -> [f64; 2] {
        let (i_ac, v_sigma) = (x[0], x[1]);
        let d_dc = (v_dc - d.r_dc_eq * i_dc - d.l_dc_eq * di_dc) / v_sigma;
        [
            (d_ac * v_sigma - d.r_ac_eq * i_ac) / d.l_ac_eq,
            (d_dc * i_dc - d_ac * i_ac) / d.c_eq,
        ]
    };

    let mut x = [op.i_ac, op.v_sigma, op.i_ac, op.v_sigma];
    let mut diff = Vec::with_capacity(n_window as usize);
    for step in 0..n_settle + n_window {
        let t = step as f64 * dt;
        let d_ac = if (step / half) % 2 == 0 { op.d_ac_mag } else { -op.d_ac_mag };
        x = rk4::step_array(x, t, dt, |t, x| {
            let a = rhs(&[x[0], x[1]], op.i_dc + eps * sin(w * t), eps * w * cos(w * t), d_ac);
            let b = rhs(&[x[2], x[3]], op.i_dc, 0.0, d_ac);
            [a[0], a[1], b[0], b[1]]
        });
        if step + 1 > n_settle {
            diff.push(x[1] - x[3]);
        }
    }
    if diff.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::NotSettled { f });
    }

    // The recorded samples sit at the end of each step.
    let t0 = (n_settle + 1) as f64 * dt;
    let rotate = Complex64::new(cos(w * t0), -sin(w * t0));
    let v = dft_component(&diff, dt, f)? * rotate;

    // Growth check: both halves of the window must show the same response.
    if periods % 2 == 0 && as_integer(0.5 * periods as f64 * f / p.f_ac).is_some() {
        let h = diff.len() / 2;
        let a = dft_component(&diff[..h], dt, f)?.norm();
        let b = dft_component(&diff[h..], dt, f)?.norm();
        if abs(b - a) > 0.01 * a.max(b) {
            return Err(AnalysisError::NotSettled { f });
        }
    }

    // î_dc = ε sin(ωt) has complex amplitude -jε.
    Ok(v / Complex64::new(0.0, -eps))
}

/// Decibels of a magnitude ratio.
pub fn db(x: f64) -> f64 {
    20.0 * crate::math::log10(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::exp;
    use crate::trajectory::{EventMarker, Record};
    use alloc::vec;

    fn synthetic(dt: f64, n: usize, f: impl Fn(f64) -> f64) -> Trajectory {
        Trajectory {
            dt,
            records: (0..n)
                .map(|k| {
                    let t = k as f64 * dt;
                    Record {
                        t,
                        i_dc: f(t),
                        ..Record::default()
                    }
                })
                .collect(),
            ..Trajectory::default()
        }
    }

    #[test]
    fn single_tone_amplitude() {
        let dt = 1e-6;
        let x: Vec<f64> = (0..4000).map(|k| 3.5 * cos(TAU * 2500.0 * k as f64 * dt + 0.3)).collect();
        let c = dft_component(&x, dt, 2500.0).unwrap();
        assert!(abs(c.norm() - 3.5) < 1e-9 * 3.5);
        assert!(abs(c.arg() - 0.3) < 1e-9);
    }

    #[test]
    fn constant_has_no_ac_content() {
        let x = vec![7.0; 800];
        assert!(dft_component(&x, 1e-6, 5000.0).unwrap().norm() < 1e-12);
        assert_eq!(dft_component(&x, 1e-6, 0.0).unwrap().re, 7.0);
    }

    #[test]
    fn tones_are_orthogonal() {
        let dt = 1e-6;
        let x: Vec<f64> = (0..4000)
            .map(|k| {
                let t = k as f64 * dt;
                2.0 * cos(TAU * 2500.0 * t) + 5.0 * sin(TAU * 7500.0 * t)
            })
            .collect();
        assert!(abs(dft_component(&x, dt, 2500.0).unwrap().norm() - 2.0) < 1e-9);
        assert!(abs(dft_component(&x, dt, 7500.0).unwrap().norm() - 5.0) < 1e-9);
    }

    #[test]
    fn partial_cycles_are_rejected() {
        let x = vec![1.0; 1000];
        assert!(matches!(
            dft_component(&x, 1e-6, 1500.0),
            Err(AnalysisError::NonIntegerWindow { .. })
        ));
    }

    #[test]
    fn harmonic_report_of_constructed_current() {
        let f_ac = 2500.0;
        let traj = synthetic(1e-6, 8001, |t| 100.0 + 20.0 * cos(2.0 * TAU * f_ac * t));
        let r = harmonic_report(&traj, Signal::IDc, f_ac, None).unwrap();
        assert!(abs(r.dc_component - 100.0) < 1e-9);
        assert!(abs(r.h2_pct - 20.0) < 1e-9);
        assert!(r.h4_pct < 1e-9);
        assert!(abs(r.window.1 - r.window.0 - 4e-3) < 1e-15);
    }

    #[test]
    fn window_with_event_is_rejected() {
        let mut traj = synthetic(1e-6, 8001, |_| 1.0);
        traj.events.push(EventMarker {
            t: 6e-3,
            label: "x".into(),
        });
        assert!(matches!(
            harmonic_report(&traj, Signal::IDc, 2500.0, None),
            Err(AnalysisError::EventInWindow { .. })
        ));
    }

    #[test]
    fn first_order_response_has_no_overshoot() {
        let t: Vec<f64> = (0..2000).map(|k| k as f64 * 1e-5).collect();
        let y: Vec<f64> = t.iter().map(|&t| 1.0 - exp(-t / 1e-3)).collect();
        let s = StepSchedule {
            t_step: 0.0,
            initial: 0.0,
            target: 1.0,
        };
        let r = transient_metrics(&t, &y, &s, 5.0, 1e-3).unwrap();
        assert!(r.overshoot_pct < 1e-12);
        // ln(20) time constants to enter a 5 % band.
        assert!(abs(r.settling_periods - 2.9957) < 0.01);
    }

    #[test]
    fn second_order_overshoot() {
        let zeta: f64 = 0.5;
        let wn = TAU * 100.0;
        let wd = wn * sqrt(1.0 - zeta * zeta);
        let t: Vec<f64> = (0..20_000).map(|k| k as f64 * 1e-5).collect();
        let y: Vec<f64> = t
            .iter()
            .map(|&t| 1.0 - exp(-zeta * wn * t) * (cos(wd * t) + zeta / sqrt(1.0 - zeta * zeta) * sin(wd * t)))
            .collect();
        let s = StepSchedule {
            t_step: 0.0,
            initial: 0.0,
            target: 1.0,
        };
        let r = transient_metrics(&t, &y, &s, 2.0, 0.01).unwrap();
        let expect = 100.0 * exp(-zeta * core::f64::consts::PI / sqrt(1.0 - zeta * zeta));
        assert!(abs(r.overshoot_pct - expect) < 0.2, "{} vs {}", r.overshoot_pct, expect);
        assert!(abs(r.overshoot_pct - 16.3) < 0.2);
    }

    #[test]
    fn step_detection() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let s = StepSchedule::from_reference(&t, &[5.0, 5.0, 4.5, 4.5]).unwrap();
        assert_eq!((s.t_step, s.initial, s.target), (2.0, 5.0, 4.5));
        assert_eq!(StepSchedule::from_reference(&t, &[1.0; 4]), Err(AnalysisError::NoStep));
        assert_eq!(
            StepSchedule::from_reference(&t, &[1.0, 2.0, 3.0, 3.0]),
            Err(AnalysisError::MultipleSteps)
        );
    }

    #[test]
    fn identical_trajectories_agree_exactly() {
        let traj = synthetic(1e-6, 500, |t| 80.0 + sin(1e4 * t));
        let norm = Normalization {
            i_dc: 83.3,
            i_ac: 87.7,
            voltage: 7500.0,
        };
        let r = model_agreement(&traj, &traj, &norm, 25).unwrap();
        assert_eq!(r.worst_rms(), 0.0);
        let short = synthetic(1e-6, 400, |_| 0.0);
        assert!(model_agreement(&traj, &short, &norm, 25).is_err());
    }

    #[test]
    fn moving_average_of_ramp() {
        let x: Vec<f64> = (0..10_000).map(|k| k as f64).collect();
        let y = moving_average(&x, 4);
        assert_eq!(y[0], 0.0);
        assert_eq!(y[1], 0.5);
        assert_eq!(y[9999], 9997.5);
    }
}
