//! Predictive current control with an outer capacitor-voltage loop and a
//! feed-forward circulating-energy compensator.
//!
//! The two current laws are one-step deadbeat solutions of the trapezoidal
//! discretization of the averaged loop equations, with the next-step
//! capacitor voltage replaced by its reference.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;

use crate::math::abs;
use crate::params::{ConverterParams, DerivedParams, OperatingPoint};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiGains {
    pub k_p: f64,
    /// Integral corner [rad/s].
    pub k_i: f64,
}

impl PiGains {
    pub fn valid(&self) -> bool {
        self.k_p > 0.0 && self.k_i >= 0.0
    }
}

/// Rectangular-integration PI: `i_dc* = K_p e + K_p K_i ∫e dt`.
///
/// `integral` holds the integral term in amperes and is advanced before the
/// output is formed.
pub fn outer_pi_step(v_sigma_ref: f64, v_sigma_meas: f64, gains: &PiGains, integral: &mut f64, dt: f64) -> f64 {
    let e = v_sigma_ref - v_sigma_meas;
    *integral += gains.k_p * gains.k_i * e * dt;
    gains.k_p * e + *integral
}

/// Forward-Euler prediction of the half-difference voltage one sample ahead.
pub fn predict_vdelta(
    d_dc: f64,
    d_ac: f64,
    i_ac: f64,
    i_dc: f64,
    v_delta: f64,
    n_cells: usize,
    t_s: f64,
    c_cell: f64,
) -> f64 {
    n_cells as f64 * t_s / (4.0 * c_cell) * (d_dc * i_ac - d_ac * i_dc) + v_delta
}

/// AC-loop law: `d_ac(k+1)` that brings `i_ac` to its reference in one
/// sample, with `v_delta` terms dropped.
pub fn compute_dac(
    i_ac_ref: f64,
    i_ac: f64,
    d_ac_prev: f64,
    v_sigma: f64,
    v_sigma_ref: f64,
    d: &DerivedParams,
    t_s: f64,
) -> f64 {
    (2.0 * d.l_ac_eq * (i_ac_ref - i_ac) / t_s + d.r_ac_eq * (i_ac_ref + i_ac) - d_ac_prev * v_sigma) / v_sigma_ref
}

/// Inputs of the DC-loop law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcLawInputs {
    pub i_dc_ref: f64,
    pub i_dc: f64,
    pub d_dc_prev: f64,
    pub d_ac_prev: f64,
    pub d_ac_next: f64,
    pub v_sigma: f64,
    pub v_delta: f64,
    pub v_delta_next: f64,
    pub v_dc: f64,
}

/// DC-loop law: `d_dc(k+1)` that brings `i_dc` to its reference in one
/// sample, counting the source at both ends of the interval.
pub fn compute_ddc_pred(x: &DcLawInputs, v_sigma_ref: f64, d: &DerivedParams, t_s: f64) -> f64 {
    (2.0 * x.v_dc + x.d_ac_next * x.v_delta_next
        - 2.0 * d.l_dc_eq * (x.i_dc_ref - x.i_dc) / t_s
        - d.r_dc_eq * (x.i_dc_ref + x.i_dc)
        - x.d_dc_prev * x.v_sigma
        + x.d_ac_prev * x.v_delta)
        / v_sigma_ref
}

/// Feed-forward DC duty that shapes `v_delta` into the triangle a large arm
/// inductor would produce. `t` is the time since the last square-wave edge,
/// in `[0, T/2)`.
pub fn compensator_output(
    t: f64,
    d_ac_pred: f64,
    d_dc_pred: f64,
    i_ac: f64,
    i_dc: f64,
    v_sigma_ref: f64,
    t_ac: f64,
    c_eq: f64,
) -> f64 {
    let m = abs(d_ac_pred);
    let slope = (d_dc_pred * i_ac - m * i_dc) / c_eq;
    m / v_sigma_ref * (2.0 * t / t_ac - 0.5) * (0.5 * t_ac) * slope
}

/// Half-period swing of `v_delta` under the charge imbalance
/// `d_dc I_ac - |d_ac| I_dc`.
pub fn vdelta_swing(d_dc: f64, d_ac: f64, i_ac: f64, i_dc: f64, t_ac: f64, c_eq: f64) -> f64 {
    (d_dc * i_ac - abs(d_ac) * i_dc) / c_eq * 0.5 * t_ac
}

/// How the plant is measured at a sampling instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    /// Values at the sampling instant.
    Instant,
    /// Mean over the `window` seconds ending at the sampling instant. One
    /// period of the arm ripple, `T_sw / N`, removes what a point sample
    /// would alias.
    Mean { window: f64 },
}

impl Sampling {
    pub fn ripple_mean(p: &ConverterParams) -> Self {
        Sampling::Mean {
            window: p.t_sw() / p.n_cells as f64,
        }
    }
}

/// Where the compensator takes its current magnitudes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AverageSource {
    /// One-period moving averages of sampled `i_dc` and `|i_ac|`.
    Measured,
    /// The AC current reference and the DC current for the demanded power.
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub gains: PiGains,
    pub compensator: bool,
    /// Weight of the predicted and sampled `v_delta` terms in the DC law.
    /// Zero leaves `v_delta` shaping to the compensator alone.
    pub vdelta_feedforward: f64,
    pub average_source: AverageSource,
    pub sampling: Sampling,
    /// Optional `(min, max)` clamp on the DC current reference [A].
    pub i_dc_ref_limit: Option<(f64, f64)>,
}

impl ControllerConfig {
    pub fn new(gains: PiGains, p: &ConverterParams) -> Self {
        Self {
            gains,
            compensator: true,
            vdelta_feedforward: 0.0,
            average_source: AverageSource::Measured,
            sampling: Sampling::ripple_mean(p),
            i_dc_ref_limit: None,
        }
    }
}

/// Sampled plant quantities.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sample {
    pub i_dc: f64,
    pub i_ac: f64,
    pub v_sigma: f64,
    pub v_delta: f64,
}

/// Fixed-length running mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MovingAverage {
    buf: Vec<f64>,
    next: usize,
    filled: usize,
    sum: f64,
}

impl MovingAverage {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "window must hold at least one sample");
        Self {
            buf: vec![0.0; len],
            next: 0,
            filled: 0,
            sum: 0.0,
        }
    }

    pub fn push(&mut self, x: f64) {
        self.sum += x - self.buf[self.next];
        self.buf[self.next] = x;
        self.next = (self.next + 1) % self.buf.len();
        self.filled = (self.filled + 1).min(self.buf.len());
        if self.next == 0 {
            // Rebuild once per lap so rounding in the running sum cannot drift.
            self.sum = self.buf.iter().sum();
        }
    }

    pub fn is_full(&self) -> bool {
        self.filled == self.buf.len()
    }

    pub fn mean(&self) -> Option<f64> {
        (self.filled > 0).then(|| self.sum / self.filled as f64)
    }
}

/// Everything the controller carries between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlState {
    /// Integral term of the outer loop [A].
    pub pi_integral: f64,
    /// DC duty node computed at the last sample.
    pub prev_d_dc: f64,
    /// AC duty magnitude node computed at the last sample.
    pub prev_d_ac: f64,
    pub sampled: Sample,
    pub i_dc_window: MovingAverage,
    pub i_ac_window: MovingAverage,
    pub t_sample: f64,
    /// Duties held until the next sample.
    pub held_d_dc: f64,
    pub held_d_ac: f64,
    pub i_dc_ref: f64,
    pub v_delta_pred: f64,
}

impl ControlState {
    pub fn new(samples_per_period: usize, d_dc: f64, d_ac_mag: f64) -> Self {
        Self {
            pi_integral: 0.0,
            prev_d_dc: d_dc,
            prev_d_ac: d_ac_mag,
            sampled: Sample::default(),
            i_dc_window: MovingAverage::new(samples_per_period),
            i_ac_window: MovingAverage::new(samples_per_period),
            t_sample: 0.0,
            held_d_dc: d_dc,
            held_d_ac: d_ac_mag,
            i_dc_ref: 0.0,
            v_delta_pred: 0.0,
        }
    }
}

/// Controller output for one sampling interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    /// Held DC duty from the DC-loop law.
    pub d_dc_pred: f64,
    /// Held AC duty magnitude.
    pub d_ac_mag: f64,
    pub i_dc_ref: f64,
    pub v_delta_pred: f64,
    /// Whether the DC reference limit was active.
    pub saturated: bool,
}

/// Square-wave signs around a sampling instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignContext {
    /// Sign of the AC square wave over the interval that just ended.
    pub before: f64,
    /// Sign over the interval about to start.
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub config: ControllerConfig,
    pub state: ControlState,
    params: ConverterParams,
    derived: DerivedParams,
}

impl Controller {
    /// `d_dc`, `d_ac_mag` are the duties in force before the controller takes
    /// over; they seed the duty nodes.
    pub fn new(params: ConverterParams, config: ControllerConfig, d_dc: f64, d_ac_mag: f64) -> Self {
        let per_period = crate::math::round(params.f_sample / params.f_ac).max(1.0) as usize;
        Self {
            config,
            state: ControlState::new(per_period, d_dc, d_ac_mag),
            derived: params.derive(),
            params,
        }
    }

    /// Records a measurement for the running averages without acting on it.
    pub fn observe(&mut self, t: f64, m: &Sample) {
        self.state.sampled = *m;
        self.state.t_sample = t;
        self.state.i_dc_window.push(m.i_dc);
        self.state.i_ac_window.push(abs(m.i_ac));
    }

    /// Hands control over without a bump: the integrator is preset so the
    /// outer loop starts from the present average DC current, and the duty
    /// nodes start from the duties in force.
    pub fn engage(&mut self, d_dc: f64, d_ac_mag: f64) {
        let s = &mut self.state;
        s.pi_integral = s.i_dc_window.mean().unwrap_or(s.sampled.i_dc);
        s.prev_d_dc = d_dc;
        s.prev_d_ac = d_ac_mag;
        s.held_d_dc = d_dc;
        s.held_d_ac = d_ac_mag;
    }

    /// Magnitudes used by the compensator.
    pub fn compensator_currents(&self, i_ac_ref: f64, p_demand: f64) -> (f64, f64) {
        match self.config.average_source {
            AverageSource::Measured => (
                self.state.i_ac_window.mean().unwrap_or(i_ac_ref),
                self.state.i_dc_window.mean().unwrap_or(p_demand / self.params.v_dc),
            ),
            AverageSource::Reference => (i_ac_ref, p_demand / self.params.v_dc),
        }
    }

    /// One controller sample. The measurement must already have been passed
    /// to [`Controller::observe`].
    ///
    /// The AC law runs on magnitudes: the measured current is rectified with
    /// the sign of the interval that just ended and the result is a duty
    /// magnitude, so a square-wave edge does not look like a current error
    /// of twice the amplitude. The new duty nodes are averaged with the
    /// previous ones over the coming interval, which is what the trapezoidal
    /// discretization assumes.
    pub fn sample(&mut self, v_sigma_ref: f64, i_ac_ref_mag: f64, v_dc: f64, signs: SignContext) -> ControlOutput {
        let p = &self.params;
        let d = &self.derived;
        let t_s = p.t_s();
        let s = &mut self.state;
        let m = s.sampled;

        let mut i_dc_ref = outer_pi_step(v_sigma_ref, m.v_sigma, &self.config.gains, &mut s.pi_integral, t_s);
        let mut saturated = false;
        if let Some((lo, hi)) = self.config.i_dc_ref_limit {
            let c = i_dc_ref.clamp(lo, hi);
            saturated = c != i_dc_ref;
            i_dc_ref = c;
        }

        let d_ac_signed_prev = signs.after * s.prev_d_ac;
        let v_delta_pred = predict_vdelta(s.prev_d_dc, d_ac_signed_prev, m.i_ac, m.i_dc, m.v_delta, p.n_cells, t_s, p.c_cell);

        let i_ac_mag = signs.before * m.i_ac;
        let d_ac_next = compute_dac(i_ac_ref_mag, i_ac_mag, s.prev_d_ac, m.v_sigma, v_sigma_ref, d, t_s);

        let g = self.config.vdelta_feedforward;
        let d_dc_next = compute_ddc_pred(
            &DcLawInputs {
                i_dc_ref,
                i_dc: m.i_dc,
                d_dc_prev: s.prev_d_dc,
                d_ac_prev: d_ac_signed_prev,
                d_ac_next: signs.after * d_ac_next,
                v_sigma: m.v_sigma,
                v_delta: g * m.v_delta,
                v_delta_next: g * v_delta_pred,
                v_dc,
            },
            v_sigma_ref,
            d,
            t_s,
        );

        s.held_d_dc = 0.5 * (s.prev_d_dc + d_dc_next);
        s.held_d_ac = 0.5 * (s.prev_d_ac + d_ac_next);
        s.prev_d_dc = d_dc_next;
        s.prev_d_ac = d_ac_next;
        s.i_dc_ref = i_dc_ref;
        s.v_delta_pred = v_delta_pred;

        ControlOutput {
            d_dc_pred: s.held_d_dc,
            d_ac_mag: s.held_d_ac,
            i_dc_ref,
            v_delta_pred,
            saturated,
        }
    }

    /// Compensator duty at `t_ramp` seconds after the last square-wave edge.
    pub fn compensation(&self, t_ramp: f64, i_ac: f64, i_dc: f64, v_sigma_ref: f64) -> f64 {
        compensator_output(
            t_ramp,
            self.state.held_d_ac,
            self.state.held_d_dc,
            i_ac,
            i_dc,
            v_sigma_ref,
            self.params.t_ac(),
            self.derived.c_eq,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoleError {
    pub frequency_hz: f64,
}

impl fmt::Display for PoleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "transfer function has a pole at {} Hz", self.frequency_hz)
    }
}

impl core::error::Error for PoleError {}

/// Small-signal gain from DC current to `v_sigma` with the AC duty frozen and
/// the DC duty doing whatever keeps `i_dc` on its trajectory.
///
/// Loop impedances are the arm-inclusive equivalents. The capacitance is the
/// one behind `v_sigma`, `4C/N`.
pub fn gvi_transfer(op: &OperatingPoint, d: &DerivedParams, s: Complex64) -> Result<Complex64, PoleError> {
    let (v, dd, da, i) = (op.v_sigma, op.d_dc, op.d_ac_mag, op.i_dc);
    let (r_ac, l_ac, r_dc, l_dc, c) = (d.r_ac_eq, d.l_ac_eq, d.r_dc_eq, d.l_dc_eq, d.c_eq);

    let den0 = i * dd * r_ac + v * da * da;
    let k = (v * dd * r_ac - i * r_dc * r_ac) / den0;
    let num_den = i * r_dc * r_ac - v * dd * r_ac;

    let num = Complex64::new(1.0, 0.0)
        + s * s * (i * l_dc * l_ac / num_den)
        + s * ((i * (r_ac * l_dc + r_dc * l_ac) - v * dd * l_ac) / num_den);
    let den = Complex64::new(1.0, 0.0) + s * s * (v * l_ac * c / den0) + s * ((v * r_ac * c + i * dd * l_ac) / den0);

    let scale = 1.0 + s.norm();
    if !den0.is_finite() || den0 == 0.0 || !k.is_finite() || den.norm() <= 1e-12 * scale * scale {
        return Err(PoleError {
            frequency_hz: s.im / crate::math::TAU,
        });
    }
    Ok(num / den * k)
}
