//! Averaged two-loop model of one converter leg pair.
//!
//! States are the DC-loop current, the AC-loop current, and the half sum and
//! half difference of a leg's upper and lower arm capacitor voltages.

use core::fmt;

use crate::params::DerivedParams;
use crate::rk4;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AveragedState {
    pub i_dc: f64,
    pub i_ac: f64,
    pub v_sigma: f64,
    pub v_delta: f64,
}

impl AveragedState {
    pub fn to_array(self) -> [f64; 4] {
        [self.i_dc, self.i_ac, self.v_sigma, self.v_delta]
    }

    pub fn from_array(x: [f64; 4]) -> Self {
        Self {
            i_dc: x[0],
            i_ac: x[1],
            v_sigma: x[2],
            v_delta: x[3],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// `½L'_dc i_dc² + ½L'_ac i_ac² + ½C_eq (v_sigma² + v_delta²)`.
    pub fn energy(&self, d: &DerivedParams) -> f64 {
        0.5 * d.l_dc_eq * self.i_dc * self.i_dc
            + 0.5 * d.l_ac_eq * self.i_ac * self.i_ac
            + 0.5 * d.c_eq * (self.v_sigma * self.v_sigma + self.v_delta * self.v_delta)
    }
}

/// Control variables applied to the averaged plant. `d_ac` is signed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput {
    pub d_dc: f64,
    pub d_ac: f64,
    pub v_dc: f64,
}

impl ControlInput {
    /// Upper and lower arm duties `((d_dc - d_ac)/2, (d_dc + d_ac)/2)`.
    pub fn arm_duties(&self) -> (f64, f64) {
        (0.5 * (self.d_dc - self.d_ac), 0.5 * (self.d_dc + self.d_ac))
    }

    /// Clamps both arm duties into `[0, 1]`. Returns the feasible input and
    /// whether anything was clipped.
    pub fn clamped(self) -> (Self, bool) {
        let (p, n) = self.arm_duties();
        let (pc, nc) = (p.clamp(0.0, 1.0), n.clamp(0.0, 1.0));
        if pc == p && nc == n {
            return (self, false);
        }
        let out = Self {
            d_dc: pc + nc,
            d_ac: nc - pc,
            v_dc: self.v_dc,
        };
        (out, true)
    }
}

pub fn averaged_derivatives(s: &AveragedState, u: &ControlInput, d: &DerivedParams) -> AveragedState {
    AveragedState {
        i_dc: (u.v_dc - u.d_dc * s.v_sigma + u.d_ac * s.v_delta - d.r_dc_eq * s.i_dc) / d.l_dc_eq,
        i_ac: (-u.d_dc * s.v_delta + u.d_ac * s.v_sigma - d.r_ac_eq * s.i_ac) / d.l_ac_eq,
        v_sigma: (u.d_dc * s.i_dc - u.d_ac * s.i_ac) / d.c_eq,
        v_delta: (u.d_dc * s.i_ac - u.d_ac * s.i_dc) / d.c_eq,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepError {
    NonPositiveStep(f64),
    /// `dt` exceeds the `T_sw / 20` resolution guard.
    TooCoarse { dt: f64, limit: f64 },
    NonFinite { t: f64 },
}

impl fmt::Display for StepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonPositiveStep(dt) => write!(f, "step {dt} s is not positive"),
            Self::TooCoarse { dt, limit } => {
                write!(f, "step {dt} s exceeds the resolution limit {limit} s")
            }
            Self::NonFinite { t } => write!(f, "averaged state became non-finite at t = {t} s"),
        }
    }
}

impl core::error::Error for StepError {}

/// Largest step accepted by [`integrate_step`] for carrier period `t_sw`.
pub fn max_step(t_sw: f64) -> f64 {
    t_sw / 20.0
}

/// One RK4 step with a time-varying input.
pub fn integrate_step<U>(
    s: &AveragedState,
    u_of_t: U,
    t: f64,
    dt: f64,
    d: &DerivedParams,
    t_sw: f64,
) -> Result<AveragedState, StepError>
where
    U: Fn(f64) -> ControlInput,
{
    if !(dt > 0.0) {
        return Err(StepError::NonPositiveStep(dt));
    }
    let limit = max_step(t_sw);
    if dt > limit * (1.0 + 1e-12) {
        return Err(StepError::TooCoarse { dt, limit });
    }
    let next = step_held(s, t, dt, d, u_of_t);
    if next.is_finite() {
        Ok(next)
    } else {
        Err(StepError::NonFinite { t: t + dt })
    }
}

/// RK4 step without guards; the engine checks the grid once up front.
pub(crate) fn step_held<U>(s: &AveragedState, t: f64, dt: f64, d: &DerivedParams, u_of_t: U) -> AveragedState
where
    U: Fn(f64) -> ControlInput,
{
    let x = rk4::step_array(s.to_array(), t, dt, |t, x| {
        averaged_derivatives(&AveragedState::from_array(*x), &u_of_t(t), d).to_array()
    });
    AveragedState::from_array(x)
}
