//! Energy bookkeeping of the averaged model.

use mmc_core::averaged::{averaged_derivatives, integrate_step, AveragedState, ControlInput};
use mmc_core::modulation::square_reference;
use mmc_core::params::{ConverterParams, DerivedParams};
use proptest::prelude::*;

fn lossless(p: &ConverterParams) -> DerivedParams {
    DerivedParams {
        r_dc_eq: 0.0,
        r_ac_eq: 0.0,
        ..p.derive()
    }
}

/// Ten AC periods of square-wave operation at `dt = T_sw / 100`. Returns the
/// largest relative energy deviation seen.
fn drift(p: &ConverterParams, d_dc: f64, d_ac_mag: f64, s0: AveragedState) -> f64 {
    let d = lossless(p);
    let dt = p.t_sw() / 100.0;
    let steps = (10.0 * p.t_ac() / dt).round() as usize;
    let w = p.omega();
    // Duties are held over each step, as the engine applies them.
    let input = |t: f64| ControlInput {
        d_dc,
        d_ac: d_ac_mag * square_reference(w * (t + 0.5 * dt)),
        v_dc: 0.0,
    };
    let e0 = s0.energy(&d);
    let mut s = s0;
    let mut worst: f64 = 0.0;
    for k in 0..steps {
        let t = k as f64 * dt;
        let u = input(t);
        s = integrate_step(&s, |_| u, t, dt, &d, p.t_sw()).unwrap();
        worst = worst.max((s.energy(&d) - e0).abs() / e0);
    }
    worst
}

#[test]
fn lossless_model_keeps_its_energy_at_the_nominal_point() {
    let p = ConverterParams::full_scale();
    let s0 = AveragedState {
        i_dc: 83.3,
        i_ac: 87.7,
        v_sigma: 7500.0,
        v_delta: 0.0,
    };
    let e = drift(&p, 0.8, 0.742, s0);
    assert!(e < 1e-6, "relative drift {e:e}");
}

#[test]
fn lossless_model_keeps_its_energy_on_the_prototype() {
    let p = ConverterParams::downscaled();
    let s0 = AveragedState {
        i_dc: 10.0,
        i_ac: -12.5,
        v_sigma: 312.5,
        v_delta: 4.0,
    };
    let e = drift(&p, 0.8, 0.7, s0);
    assert!(e < 1e-6, "relative drift {e:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Power flowing into the stored energy equals `v_dc i_dc` minus the
    /// resistive losses, for any state and duty pair.
    #[test]
    fn stored_power_balances_source_and_losses(
        i_dc in -200.0f64..200.0,
        i_ac in -200.0f64..200.0,
        v_sigma in 1000.0f64..9000.0,
        v_delta in -500.0f64..500.0,
        d_dc in 0.0f64..2.0,
        d_ac in -1.0f64..1.0,
        v_dc in 0.0f64..7000.0,
    ) {
        let p = ConverterParams::full_scale();
        let d = p.derive();
        let s = AveragedState { i_dc, i_ac, v_sigma, v_delta };
        let u = ControlInput { d_dc, d_ac, v_dc };
        let ds = averaged_derivatives(&s, &u, &d);
        let stored = d.l_dc_eq * i_dc * ds.i_dc
            + d.l_ac_eq * i_ac * ds.i_ac
            + d.c_eq * (v_sigma * ds.v_sigma + v_delta * ds.v_delta);
        let expected = v_dc * i_dc - d.r_dc_eq * i_dc * i_dc - d.r_ac_eq * i_ac * i_ac;
        let scale = v_dc.abs() * i_dc.abs() + v_sigma * (i_dc.abs() + i_ac.abs()) + 1.0;
        prop_assert!((stored - expected).abs() <= 1e-12 * scale, "{stored} vs {expected}");
    }
}
