use mmc_core::analysis::dft_component;
use mmc_core::controller::{compensator_output, ControllerConfig, PiGains};
use mmc_core::engine::{choose_step, run, Initial, PlantKind, RunConfig};
use mmc_core::modulation::{arm_refs, duty_of, gate_cells, insertion_fraction, Arm};
use mmc_core::params::ConverterParams;
use mmc_core::swap::SwapMachine;
use mmc_core::switched::{aggregate_leg_quantities, arm_currents, switched_derivatives, GateWord, SwitchedState};
use num_complex::Complex64;
use proptest::prelude::*;

fn one_based(m: &SwapMachine, arm: Arm) -> Vec<usize> {
    m.order(arm).iter().map(|c| c + 1).collect()
}

#[test]
fn swap_sequence_for_four_cells() {
    let ap = [
        [1, 2, 3, 4],
        [4, 1, 2, 3],
        [4, 1, 2, 3],
        [3, 4, 1, 2],
        [3, 4, 1, 2],
        [2, 3, 4, 1],
        [2, 3, 4, 1],
        [1, 2, 3, 4],
    ];
    let an = [
        [4, 1, 2, 3],
        [4, 1, 2, 3],
        [3, 4, 1, 2],
        [3, 4, 1, 2],
        [2, 3, 4, 1],
        [2, 3, 4, 1],
        [1, 2, 3, 4],
        [1, 2, 3, 4],
    ];
    let half = 1e-4;
    let mut m = SwapMachine::new(4);
    for k in 0..8 {
        assert_eq!(m.state_index(), k);
        assert_eq!(one_based(&m, Arm::Ap), ap[k], "upper arm in state {k}");
        assert_eq!(one_based(&m, Arm::An), an[k], "lower arm in state {k}");
        assert_eq!(m.order(Arm::Bn), m.order(Arm::Ap));
        assert_eq!(m.order(Arm::Bp), m.order(Arm::An));
        m.advance(k as f64 * half, half).unwrap();
    }
    let fresh = SwapMachine::new(4);
    assert_eq!(m.state_index(), 0);
    for arm in Arm::ALL {
        assert_eq!(m.order(arm), fresh.order(arm));
    }
}

proptest! {
    /// Every arm visits each rotation once per cycle and is back in its
    /// starting order after `2N` transitions.
    #[test]
    fn swap_cycle_returns_home(n in 1usize..12) {
        let half = 1e-4;
        let mut m = SwapMachine::new(n);
        let start: Vec<Vec<usize>> = Arm::ALL.iter().map(|&a| m.order(a).to_vec()).collect();
        let mut seen: Vec<Vec<Vec<usize>>> = vec![Vec::new(); 4];
        for k in 0..2 * n {
            for (a, arm) in Arm::ALL.iter().enumerate() {
                let o = m.order(*arm).to_vec();
                let mut sorted = o.clone();
                sorted.sort_unstable();
                prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
                if !seen[a].contains(&o) {
                    seen[a].push(o);
                }
            }
            let changed = m.advance(k as f64 * half, half).unwrap();
            if n > 1 {
                prop_assert_eq!(changed.iter().filter(|&&c| c).count(), 2);
            }
        }
        for (a, arm) in Arm::ALL.iter().enumerate() {
            prop_assert_eq!(m.order(*arm), &start[a][..]);
            prop_assert_eq!(seen[a].len(), n);
        }
    }

    /// Both legs carry the same DC current and opposite halves of the AC
    /// current, so the node sums and the aggregation agree.
    #[test]
    fn arm_currents_satisfy_kirchhoff(i_dc in -500.0f64..500.0, i_ac in -500.0f64..500.0) {
        let [ap, an, bp, bn] = arm_currents(i_dc, i_ac);
        let tol = 1e-12 * (i_dc.abs() + i_ac.abs() + 1.0);
        prop_assert!((ap + an - (bp + bn)).abs() <= tol);
        prop_assert!((ap + an - i_dc).abs() <= tol);
        prop_assert!((ap - an - i_ac).abs() <= tol);
        let q = aggregate_leg_quantities([ap, an, bp, bn], 0.0, 0.0);
        prop_assert!((q.i_dc - i_dc).abs() <= tol && (q.i_ac - i_ac).abs() <= tol);
    }

    /// Inserted cells integrate their arm current and bypassed cells hold.
    #[test]
    fn bypassed_cells_hold_their_charge(
        bits in proptest::collection::vec(any::<bool>(), 32),
        i_dc in -100.0f64..100.0,
        i_ac in -100.0f64..100.0,
    ) {
        let p = ConverterParams::full_scale();
        let mut s = SwitchedState::precharged(8, 937.5);
        s.i_dc = i_dc;
        s.i_ac = i_ac;
        let mut g = GateWord::new(8);
        for (j, &on) in bits.iter().enumerate() {
            g.set(Arm::ALL[j / 8], j % 8, on);
        }
        let ds = switched_derivatives(&s, &g, &p.derive(), p.c_cell, p.v_dc);
        let i_arm = arm_currents(i_dc, i_ac);
        for (j, &on) in bits.iter().enumerate() {
            let expect = if on { i_arm[j / 8] / p.c_cell } else { 0.0 };
            prop_assert!((ds.dv_cell[j] - expect).abs() <= 1e-9 * expect.abs().max(1.0));
        }
    }

    /// Over a whole carrier period every slot is inserted for exactly the
    /// duty of its reference.
    #[test]
    fn insertion_fraction_over_a_carrier_period_is_the_duty(
        m in -1.0f64..1.0,
        n in 1usize..10,
        k_frac in 0.0f64..1.0,
        offset in 0.0f64..5.0,
    ) {
        let t_sw = 25e-6;
        let k = ((k_frac * n as f64) as usize).min(n - 1);
        let t0 = offset * t_sw;
        let f = insertion_fraction(m, t0, t0 + t_sw, k, n, t_sw);
        prop_assert!((f - duty_of(m)).abs() < 1e-9, "{} vs {}", f, duty_of(m));
    }

    /// Point gating sampled densely over a carrier period averages to the
    /// duty within the sampling resolution.
    #[test]
    fn point_gating_averages_to_the_duty(d_dc in 0.6f64..1.0, d_ac in -0.35f64..0.35) {
        let n = 4;
        let t_sw = 25e-6;
        let samples = 20_000;
        let order: Vec<usize> = (0..n).collect();
        let refs = arm_refs(d_dc, d_ac);
        for m in refs {
            let mut on = vec![0usize; n];
            let mut g = vec![false; n];
            for j in 0..samples {
                let t = (j as f64 + 0.5) * t_sw / samples as f64;
                gate_cells(m, t, &order, t_sw, &mut g);
                for (c, &x) in on.iter_mut().zip(&g) {
                    *c += x as usize;
                }
            }
            for c in on {
                let avg = c as f64 / samples as f64;
                prop_assert!((avg - duty_of(m)).abs() < 2e-4, "{} vs {}", avg, duty_of(m));
            }
        }
    }

    /// The compensator duty is a ramp centred on zero across each half period.
    #[test]
    fn compensator_has_zero_mean_over_a_half_period(
        d_ac in 0.5f64..0.95,
        d_dc in 0.6f64..0.95,
        i_ac in 10.0f64..120.0,
        i_dc in 10.0f64..120.0,
    ) {
        let p = ConverterParams::full_scale();
        let (t_ac, c_eq) = (p.t_ac(), p.derive().c_eq);
        let m = 4000;
        let half = 0.5 * t_ac;
        let (mut sum, mut peak) = (0.0, 0.0f64);
        for j in 0..m {
            let t = (j as f64 + 0.5) * half / m as f64;
            let u = compensator_output(t, d_ac, d_dc, i_ac, i_dc, 7500.0, t_ac, c_eq);
            sum += u;
            peak = peak.max(u.abs());
        }
        prop_assert!((sum / m as f64).abs() <= 1e-12 * peak.max(1e-300));
    }

    /// The single-bin DFT is linear and returns the amplitude and phase of
    /// a whole number of cycles.
    #[test]
    fn dft_component_is_linear_and_exact(
        a1 in -10.0f64..10.0,
        p1 in -3.0f64..3.0,
        a2 in -10.0f64..10.0,
        p2 in -3.0f64..3.0,
        alpha in -5.0f64..5.0,
        beta in -5.0f64..5.0,
    ) {
        let f = 2500.0;
        let dt = 1.0 / (f * 160.0);
        let n = 160 * 4;
        let x: Vec<f64> = (0..n).map(|j| a1 * (std::f64::consts::TAU * f * j as f64 * dt + p1).cos()).collect();
        let y: Vec<f64> = (0..n).map(|j| a2 * (std::f64::consts::TAU * 2.0 * f * j as f64 * dt + p2).cos() + 3.0).collect();
        let z: Vec<f64> = x.iter().zip(&y).map(|(x, y)| alpha * x + beta * y).collect();
        let fx = dft_component(&x, dt, f).unwrap();
        let fy = dft_component(&y, dt, f).unwrap();
        let fz = dft_component(&z, dt, f).unwrap();
        prop_assert!((fz - (fx * alpha + fy * beta)).norm() < 1e-9);
        prop_assert!((fx - Complex64::from_polar(a1, p1)).norm() < 1e-9);
        prop_assert!(fy.norm() < 1e-9);
        prop_assert!((dft_component(&y, dt, 0.0).unwrap().re - 3.0).abs() < 1e-9);
    }
}

fn closed_loop(plant: PlantKind) -> RunConfig {
    let p = ConverterParams::downscaled();
    RunConfig {
        params: p,
        v_sigma_ref: 312.5,
        p_demand: 1000.0,
        controller: ControllerConfig::new(PiGains { k_p: 1.0, k_i: std::f64::consts::TAU * 1000.0 }, &p),
        controller_on: true,
        open_loop: (0.8, 0.742),
        events: Vec::new(),
        t_end: 1e-3,
        dt: choose_step(&p).unwrap(),
        plant,
        initial: Initial::SteadyState,
        record_cells: plant == PlantKind::Switched,
        record_every: 1,
    }
}

#[test]
fn runs_are_deterministic() {
    for plant in [PlantKind::Switched, PlantKind::Averaged] {
        let cfg = closed_loop(plant);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a, b, "{} plant", plant.name());
        let bits = |t: &mmc_core::trajectory::Trajectory| -> Vec<u64> {
            t.records.iter().flat_map(|r| r.values()).map(f64::to_bits).collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }
}
