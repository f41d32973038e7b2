//! Cell-swapping state machine.
//!
//! Every half AC period the machine advances one state. On even→odd
//! transitions the upper arm of leg A rotates its firing order by one, on
//! odd→even transitions the lower arm does. Leg B mirrors leg A with the
//! lower arm following the upper arm of leg A. With `2N` states every arm
//! returns to its starting order after `N` AC periods.

use alloc::vec::Vec;
use core::fmt;

use crate::modulation::Arm;

#[derive(Debug, Clone, PartialEq)]
pub struct SwapMachine {
    n: usize,
    state_index: usize,
    orders: [Vec<usize>; 4],
    last_transition: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TooEarly {
    pub t: f64,
    pub last_transition: f64,
}

impl fmt::Display for TooEarly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "swap at t = {} s comes less than half a period after t = {} s",
            self.t, self.last_transition
        )
    }
}

impl core::error::Error for TooEarly {}

impl SwapMachine {
    /// Machine in state 0: leg-A upper arm in natural order, leg-A lower arm
    /// rotated by one.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "an arm needs at least one cell");
        let mut m = Self {
            n,
            state_index: 0,
            orders: [Vec::new(), Vec::new(), Vec::new(), Vec::new()],
            last_transition: None,
        };
        m.refresh();
        m
    }

    pub fn n_cells(&self) -> usize {
        self.n
    }

    pub fn state_index(&self) -> usize {
        self.state_index
    }

    pub fn last_transition(&self) -> Option<f64> {
        self.last_transition
    }

    /// Firing order of `arm`: entry `k` is the cell driven by carrier slot `k`.
    pub fn order(&self, arm: Arm) -> &[usize] {
        &self.orders[arm.index()]
    }

    /// Rotation of the upper-arm pattern (leg-A upper, leg-B lower).
    fn upper_rotation(&self) -> usize {
        ((self.state_index + 1) / 2) % self.n
    }

    /// Rotation of the lower-arm pattern (leg-A lower, leg-B upper).
    fn lower_rotation(&self) -> usize {
        (1 + self.state_index / 2) % self.n
    }

    fn refresh(&mut self) {
        let up = rotated(self.n, self.upper_rotation());
        let low = rotated(self.n, self.lower_rotation());
        self.orders[Arm::Ap.index()] = up.clone();
        self.orders[Arm::Bn.index()] = up;
        self.orders[Arm::An.index()] = low.clone();
        self.orders[Arm::Bp.index()] = low;
    }

    /// Moves to the next state at time `t`. Returns which arms changed order.
    pub fn advance(&mut self, t: f64, half_period: f64) -> Result<[bool; 4], TooEarly> {
        if let Some(last) = self.last_transition {
            // Transitions land on an integer step grid; allow rounding slack.
            if t - last < half_period * (1.0 - 1e-9) {
                return Err(TooEarly {
                    t,
                    last_transition: last,
                });
            }
        }
        let before = self.orders.clone();
        self.state_index = (self.state_index + 1) % (2 * self.n);
        self.refresh();
        self.last_transition = Some(t);
        let mut changed = [false; 4];
        for (c, (a, b)) in changed.iter_mut().zip(before.iter().zip(&self.orders)) {
            *c = a != b;
        }
        Ok(changed)
    }
}

/// Identity order `0..n` rotated right by `r`: `(0,1,2,3)` → `(3,0,1,2)`.
fn rotated(n: usize, r: usize) -> Vec<usize> {
    (0..n).map(|p| (p + n - r) % n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_based(m: &SwapMachine, arm: Arm) -> Vec<usize> {
        m.order(arm).iter().map(|c| c + 1).collect()
    }

    #[test]
    fn first_transition_rotates_only_the_upper_arm() {
        let mut m = SwapMachine::new(4);
        assert_eq!(one_based(&m, Arm::Ap), [1, 2, 3, 4]);
        assert_eq!(one_based(&m, Arm::An), [4, 1, 2, 3]);
        let changed = m.advance(0.0, 1e-4).unwrap();
        assert_eq!(one_based(&m, Arm::Ap), [4, 1, 2, 3]);
        assert_eq!(one_based(&m, Arm::An), [4, 1, 2, 3]);
        assert_eq!(changed, [true, false, false, true]);
    }

    #[test]
    fn early_transition_is_refused() {
        let mut m = SwapMachine::new(4);
        m.advance(0.0, 1e-4).unwrap();
        assert!(m.advance(0.5e-4, 1e-4).is_err());
        assert!(m.advance(1e-4, 1e-4).is_ok());
    }

    #[test]
    fn full_cycle_returns_home() {
        for n in [2, 4, 8] {
            let mut m = SwapMachine::new(n);
            let start = m.clone();
            for j in 0..2 * n {
                let changed = m.advance(j as f64, 1.0).unwrap();
                // One arm per leg changes, alternating between upper and lower.
                let leg_a = changed[0] as u8 + changed[1] as u8;
                let leg_b = changed[2] as u8 + changed[3] as u8;
                assert_eq!((leg_a, leg_b), (1, 1), "n = {n}, step {j}");
                assert_eq!(changed[0], j % 2 == 0);
            }
            assert_eq!(m.state_index(), 0);
            for arm in Arm::ALL {
                assert_eq!(m.order(arm), start.order(arm));
            }
        }
    }
}
