//! Classical fixed-step fourth-order Runge-Kutta.

use alloc::vec;
use alloc::vec::Vec;

/// One RK4 step of `x' = f(t, x)` for a small fixed-size state.
pub fn step_array<const N: usize, F>(x: [f64; N], t: f64, dt: f64, mut f: F) -> [f64; N]
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let h = 0.5 * dt;
    let k1 = f(t, &x);
    let k2 = f(t + h, &axpy(&x, h, &k1));
    let k3 = f(t + h, &axpy(&x, h, &k2));
    let k4 = f(t + dt, &axpy(&x, dt, &k3));
    let mut out = x;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn axpy<const N: usize>(x: &[f64; N], a: f64, k: &[f64; N]) -> [f64; N] {
    let mut y = *x;
    for i in 0..N {
        y[i] += a * k[i];
    }
    y
}

/// Scratch space for RK4 on a state whose length is only known at run time.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(len: usize) -> Self {
        Self {
            k1: vec![0.0; len],
            k2: vec![0.0; len],
            k3: vec![0.0; len],
            k4: vec![0.0; len],
            tmp: vec![0.0; len],
        }
    }

    /// Advances `x` in place. `f(t, x, dx)` writes the derivative into `dx`.
    pub fn step<F>(&mut self, x: &mut [f64], t: f64, dt: f64, mut f: F)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        assert_eq!(x.len(), self.k1.len(), "state length changed");
        let h = 0.5 * dt;

        f(t, x, &mut self.k1);
        for ((y, &x), &k) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k1) {
            *y = x + h * k;
        }
        f(t + h, &self.tmp, &mut self.k2);
        for ((y, &x), &k) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k2) {
            *y = x + h * k;
        }
        f(t + h, &self.tmp, &mut self.k3);
        for ((y, &x), &k) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k3) {
            *y = x + dt * k;
        }
        f(t + dt, &self.tmp, &mut self.k4);

        for i in 0..x.len() {
            x[i] += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}
