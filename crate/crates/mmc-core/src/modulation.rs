//! Phase-shifted square-wave modulation.

use crate::math::{abs, floor, TAU};

/// Arm order used throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    /// Leg A, upper.
    Ap = 0,
    /// Leg A, lower.
    An = 1,
    /// Leg B, upper.
    Bp = 2,
    /// Leg B, lower.
    Bn = 3,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::Ap, Arm::An, Arm::Bp, Arm::Bn];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Arm::Ap => "ap",
            Arm::An => "an",
            Arm::Bp => "bp",
            Arm::Bn => "bn",
        }
    }
}

/// `+1` for `ωt mod 2π` in `[0, π)`, `-1` otherwise.
pub fn square_reference(omega_t: f64) -> f64 {
    let phase = omega_t - TAU * floor(omega_t / TAU);
    if phase < core::f64::consts::PI {
        1.0
    } else {
        -1.0
    }
}

/// Per-arm modulation references `m = (d_dc - 1) ∓ d_ac` with `d_ac` signed.
/// Leg B mirrors leg A: `m_bp = m_an`, `m_bn = m_ap`.
pub fn arm_refs(d_dc: f64, d_ac: f64) -> [f64; 4] {
    let m_ap = (d_dc - 1.0) - d_ac;
    let m_an = (d_dc - 1.0) + d_ac;
    [m_ap, m_an, m_an, m_ap]
}

pub fn arm_modulation_refs(d_dc: f64, d_ac_mag: f64, omega_t: f64) -> [f64; 4] {
    arm_refs(d_dc, d_ac_mag * square_reference(omega_t))
}

/// Duty implied by a modulation reference.
pub fn duty_of(m: f64) -> f64 {
    0.5 * (m + 1.0)
}

/// Triangle carrier for firing slot `k` of `n`: spans `[-1, 1]`, starts at
/// its minimum and is delayed by `k T_sw / n`.
pub fn carrier(t: f64, k: usize, n: usize, t_sw: f64) -> f64 {
    let x = t / t_sw - k as f64 / n as f64;
    let phase = x - floor(x);
    1.0 - 4.0 * abs(phase - 0.5)
}

/// Writes the insertion state of one arm into `inserted`, indexed by cell.
/// `order[k]` is the cell that owns carrier slot `k`. Ties insert.
pub fn gate_cells(m_arm: f64, t: f64, order: &[usize], t_sw: f64, inserted: &mut [bool]) {
    let n = order.len();
    debug_assert_eq!(inserted.len(), n);
    for (k, &cell) in order.iter().enumerate() {
        inserted[cell] = m_arm >= carrier(t, k, n, t_sw);
    }
}

/// Fraction of `[t0, t1]` during which slot `k` is inserted for a reference
/// `m_arm` held over the interval. Switching edges inside the interval are
/// located exactly on the piecewise-linear carrier.
pub fn insertion_fraction(m_arm: f64, t0: f64, t1: f64, k: usize, n: usize, t_sw: f64) -> f64 {
    let shift = k as f64 / n as f64;
    let x0 = t0 / t_sw - shift;
    let x1 = t1 / t_sw - shift;
    if x1 <= x0 {
        return if m_arm >= carrier(t0, k, n, t_sw) { 1.0 } else { 0.0 };
    }
    let mut on = 0.0;
    let mut a = x0;
    while a < x1 {
        // Next carrier vertex after `a`.
        let b = ((floor(2.0 * a) + 1.0) * 0.5).min(x1);
        let mid = 0.5 * (a + b);
        let phase = mid - floor(mid);
        let half = 0.5 * (b - a);
        let (ca, cb) = if phase < 0.5 {
            (4.0 * (phase - half) - 1.0, 4.0 * (phase + half) - 1.0)
        } else {
            (3.0 - 4.0 * (phase - half), 3.0 - 4.0 * (phase + half))
        };
        let (lo, hi) = if ca < cb { (ca, cb) } else { (cb, ca) };
        let share = if m_arm >= hi {
            1.0
        } else if m_arm <= lo {
            0.0
        } else {
            (m_arm - lo) / (hi - lo)
        };
        on += share * (b - a);
        a = b;
    }
    on / (x1 - x0)
}
