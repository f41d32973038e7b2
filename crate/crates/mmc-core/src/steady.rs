//! Periodic steady state of the averaged model under fixed square-wave duties.
//!
//! With duties fixed over each half period the averaged model is linear, and
//! so is one RK4 period map `x ↦ Φx + p`. Its fixed point solves
//! `(I - Φ) x = p` and is periodic on the same grid the engine integrates on.

use core::fmt;

use crate::averaged::{step_held, AveragedState, ControlInput};
use crate::math::abs;
use crate::params::ConverterParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SteadyStateError {
    /// The half period is not an integer number of steps.
    Grid { dt: f64 },
    /// The period map has an eigenvalue at one (no damping).
    Singular,
}

impl fmt::Display for SteadyStateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Grid { dt } => write!(f, "step {dt} s does not divide half an AC period"),
            Self::Singular => f.write_str("periodic steady state is not unique (undamped plant)"),
        }
    }
}

impl core::error::Error for SteadyStateError {}

/// State at the start of a positive half period that repeats after one AC
/// period with duties `d_dc` and `±d_ac_mag`.
pub fn periodic_steady_state(
    p: &ConverterParams,
    d_dc: f64,
    d_ac_mag: f64,
    dt: f64,
) -> Result<AveragedState, SteadyStateError> {
    let half = crate::math::as_integer(0.5 * p.t_ac() / dt).ok_or(SteadyStateError::Grid { dt })?;
    let d = p.derive();
    let period = |x0: [f64; 4]| {
        let mut s = AveragedState::from_array(x0);
        for j in 0..2 * half {
            let sign = if j < half { 1.0 } else { -1.0 };
            let u = ControlInput {
                d_dc,
                d_ac: sign * d_ac_mag,
                v_dc: p.v_dc,
            };
            s = step_held(&s, j as f64 * dt, dt, &d, |_| u);
        }
        s.to_array()
    };

    let offset = period([0.0; 4]);
    // Columns of Φ, probed with voltage-scaled unit vectors for conditioning.
    let scale = [1.0, 1.0, p.v_dc, p.v_dc];
    let mut a = [[0.0; 4]; 4];
    for j in 0..4 {
        let mut e = [0.0; 4];
        e[j] = scale[j];
        let col = period(e);
        for i in 0..4 {
            let phi = (col[i] - offset[i]) / scale[j];
            a[i][j] = if i == j { 1.0 - phi } else { -phi };
        }
    }
    let x = solve4(a, offset).ok_or(SteadyStateError::Singular)?;
    Ok(AveragedState::from_array(x))
}

/// Gaussian elimination with partial pivoting.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    let norm = a.iter().flatten().fold(0.0f64, |m, v| m.max(abs(*v)));
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| abs(a[i][col]).total_cmp(&abs(a[j][col])))?;
        if abs(a[pivot][col]) <= 1e-13 * norm {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let s: f64 = (row + 1..4).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solver_on_known_system() {
        let a = [
            [0.0, 2.0, 0.0, 1.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 3.0, 0.0],
            [0.0, 1.0, 0.0, 4.0],
        ];
        let x = solve4(a, [4.0, 1.0, 6.0, 9.0]).unwrap();
        let expect = [1.0, 1.0, 2.0, 2.0];
        for i in 0..4 {
            assert!(abs(x[i] - expect[i]) < 1e-12);
        }
        assert!(solve4([[0.0; 4]; 4], [1.0; 4]).is_none());
    }

    #[test]
    fn steady_state_repeats() {
        let p = ConverterParams::full_scale();
        let dt = p.t_sw() / 100.0;
        let x0 = periodic_steady_state(&p, 0.8, 0.74, dt).unwrap();
        let d = p.derive();
        let half = 800;
        let mut s = x0;
        for j in 0..2 * half {
            let sign = if j < half { 1.0 } else { -1.0 };
            let u = ControlInput {
                d_dc: 0.8,
                d_ac: sign * 0.74,
                v_dc: p.v_dc,
            };
            s = step_held(&s, 0.0, dt, &d, |_| u);
        }
        assert!(abs(s.i_dc - x0.i_dc) < 1e-7);
        assert!(abs(s.v_sigma - x0.v_sigma) < 1e-6);
        assert!(abs(s.v_delta - x0.v_delta) < 1e-6);
    }
}
