//! Per-cell switched model of the two-leg converter.
//!
//! The bridge has two independent currents: the DC-loop current shared by both
//! legs and the AC-loop current. Arm currents follow from them, so
//! `i_ap + i_an = i_bp + i_bn` holds by construction. Each inserted cell
//! integrates its arm current.

use alloc::vec;
use alloc::vec::Vec;

use crate::modulation::{gate_cells, insertion_fraction, Arm};
use crate::params::DerivedParams;
use crate::swap::SwapMachine;

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedState {
    pub i_dc: f64,
    pub i_ac: f64,
    /// Cell voltages, arm-major in [`Arm`] order, `n` cells per arm.
    pub v_cell: Vec<f64>,
    pub t: f64,
}

/// Loop quantities aggregated from arm values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegQuantities {
    pub i_dc: f64,
    pub i_ac: f64,
    pub v_sigma: f64,
    pub v_delta: f64,
}

impl SwitchedState {
    /// Every cell at `v_cell`, no current.
    pub fn precharged(n: usize, v_cell: f64) -> Self {
        Self {
            i_dc: 0.0,
            i_ac: 0.0,
            v_cell: vec![v_cell; 4 * n],
            t: 0.0,
        }
    }

    /// Cells spread evenly from arm totals so that the aggregate matches an
    /// averaged state. Leg B copies leg A.
    pub fn from_leg(n: usize, i_dc: f64, i_ac: f64, v_sigma: f64, v_delta: f64) -> Self {
        let upper = (v_sigma + v_delta) / n as f64;
        let lower = (v_sigma - v_delta) / n as f64;
        let mut v_cell = Vec::with_capacity(4 * n);
        for arm in Arm::ALL {
            let v = match arm {
                Arm::Ap | Arm::Bn => upper,
                Arm::An | Arm::Bp => lower,
            };
            v_cell.extend(core::iter::repeat(v).take(n));
        }
        Self {
            i_dc,
            i_ac,
            v_cell,
            t: 0.0,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.v_cell.len() / 4
    }

    pub fn arm_cells(&self, arm: Arm) -> &[f64] {
        let n = self.n_cells();
        &self.v_cell[arm.index() * n..(arm.index() + 1) * n]
    }

    /// Arm currents `(i_ap, i_an, i_bp, i_bn)`.
    pub fn i_arm(&self) -> [f64; 4] {
        arm_currents(self.i_dc, self.i_ac)
    }

    /// Total capacitor voltage of each arm.
    pub fn arm_totals(&self) -> [f64; 4] {
        Arm::ALL.map(|a| self.arm_cells(a).iter().sum())
    }

    pub fn aggregate(&self) -> LegQuantities {
        let v = self.arm_totals();
        aggregate_leg_quantities(self.i_arm(), v[Arm::Ap.index()], v[Arm::An.index()])
    }
}

pub fn arm_currents(i_dc: f64, i_ac: f64) -> [f64; 4] {
    let upper = 0.5 * (i_dc + i_ac);
    let lower = 0.5 * (i_dc - i_ac);
    [upper, lower, lower, upper]
}

/// Loop currents from arm currents and leg-A sum/difference voltages from the
/// leg-A arm totals.
pub fn aggregate_leg_quantities(i_arm: [f64; 4], v_cap: f64, v_can: f64) -> LegQuantities {
    let [ap, an, bp, bn] = i_arm;
    LegQuantities {
        i_dc: 0.5 * (ap + an + bp + bn),
        i_ac: 0.5 * (ap - an - bp + bn),
        v_sigma: 0.5 * (v_cap + v_can),
        v_delta: 0.5 * (v_cap - v_can),
    }
}

/// Insertion state of every cell, arm-major like [`SwitchedState::v_cell`].
///
/// `weight` is what the dynamics see: 0 or 1 after [`GateWord::update`], or
/// the inserted fraction of an integration step after
/// [`GateWord::update_interval`], so an edge inside a step is neither lost
/// nor rounded to the step boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct GateWord {
    n: usize,
    pub inserted: Vec<bool>,
    pub weight: Vec<f64>,
}

impl GateWord {
    pub fn new(n: usize) -> Self {
        Self::all(n, false)
    }

    pub fn all(n: usize, on: bool) -> Self {
        Self {
            n,
            inserted: vec![on; 4 * n],
            weight: vec![if on { 1.0 } else { 0.0 }; 4 * n],
        }
    }

    pub fn arm(&self, arm: Arm) -> &[bool] {
        &self.inserted[arm.index() * self.n..(arm.index() + 1) * self.n]
    }

    /// Sets one cell's gate.
    pub fn set(&mut self, arm: Arm, cell: usize, on: bool) {
        let j = arm.index() * self.n + cell;
        self.inserted[j] = on;
        self.weight[j] = if on { 1.0 } else { 0.0 };
    }

    pub fn inserted_count(&self, arm: Arm) -> usize {
        self.arm(arm).iter().filter(|&&g| g).count()
    }

    /// Compares every arm's reference with its carriers at time `t`.
    pub fn update(&mut self, m: &[f64; 4], t: f64, swap: &SwapMachine, t_sw: f64) {
        let n = self.n;
        for arm in Arm::ALL {
            let range = arm.index() * n..(arm.index() + 1) * n;
            gate_cells(m[arm.index()], t, swap.order(arm), t_sw, &mut self.inserted[range.clone()]);
            for j in range {
                self.weight[j] = if self.inserted[j] { 1.0 } else { 0.0 };
            }
        }
    }

    /// Gates for the step `[t, t + dt]`: `inserted` holds the state at the
    /// midpoint and `weight` the inserted fraction of the step.
    pub fn update_interval(&mut self, m: &[f64; 4], t: f64, dt: f64, swap: &SwapMachine, t_sw: f64) {
        let n = self.n;
        for arm in Arm::ALL {
            let a = arm.index();
            gate_cells(m[a], t + 0.5 * dt, swap.order(arm), t_sw, &mut self.inserted[a * n..(a + 1) * n]);
            for (k, &cell) in swap.order(arm).iter().enumerate() {
                self.weight[a * n + cell] = insertion_fraction(m[a], t, t + dt, k, n, t_sw);
            }
        }
    }
}

/// Time derivative of a [`SwitchedState`].
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedDerivative {
    pub di_dc: f64,
    pub di_ac: f64,
    pub dv_cell: Vec<f64>,
}

impl SwitchedDerivative {
    pub fn di_arm(&self) -> [f64; 4] {
        arm_currents(self.di_dc, self.di_ac)
    }
}

pub fn switched_derivatives(
    s: &SwitchedState,
    g: &GateWord,
    d: &DerivedParams,
    c_cell: f64,
    v_dc: f64,
) -> SwitchedDerivative {
    let n = s.n_cells();
    let mut x = Vec::with_capacity(2 + 4 * n);
    x.push(s.i_dc);
    x.push(s.i_ac);
    x.extend_from_slice(&s.v_cell);
    let mut dx = vec![0.0; x.len()];
    derivatives_into(&x, &g.weight, n, d, c_cell, v_dc, &mut dx);
    SwitchedDerivative {
        di_dc: dx[0],
        di_ac: dx[1],
        dv_cell: dx.split_off(2),
    }
}

/// Flat-vector form used by the integrator: `x = [i_dc, i_ac, cells...]`.
pub(crate) fn derivatives_into(
    x: &[f64],
    weight: &[f64],
    n: usize,
    d: &DerivedParams,
    c_cell: f64,
    v_dc: f64,
    dx: &mut [f64],
) {
    let (i_dc, i_ac) = (x[0], x[1]);
    let cells = &x[2..];
    let mut v_arm = [0.0; 4];
    for (a, v) in v_arm.iter_mut().enumerate() {
        let range = a * n..(a + 1) * n;
        *v = cells[range.clone()].iter().zip(&weight[range]).map(|(v, g)| v * g).sum();
    }
    let [ap, an, bp, bn] = v_arm;
    dx[0] = (v_dc - 0.5 * (ap + an + bp + bn) - d.r_dc_eq * i_dc) / d.l_dc_eq;
    dx[1] = (-0.5 * (ap - an - bp + bn) - d.r_ac_eq * i_ac) / d.l_ac_eq;
    let i_arm = arm_currents(i_dc, i_ac);
    for a in 0..4 {
        let rate = i_arm[a] / c_cell;
        for k in 0..n {
            let j = a * n + k;
            dx[2 + j] = weight[j] * rate;
        }
    }
}
