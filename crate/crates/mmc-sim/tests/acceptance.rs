//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use mmc_core::analysis::peak_to_peak;
use mmc_core::averaged::{integrate_step, AveragedState, ControlInput};
use mmc_core::controller::{compute_dac, compute_ddc_pred, predict_vdelta, DcLawInputs};
use mmc_core::engine::PlantKind;
use mmc_core::modulation::{square_reference, Arm};
use mmc_core::params::{ConverterParams, DerivedParams};
use mmc_core::swap::SwapMachine;
use mmc_core::trajectory::Signal;
use mmc_sim::freqresp::{probe_frequencies, sweep};
use mmc_sim::output::emit_outputs;
use mmc_sim::presets::NAMES;
use mmc_sim::{preset_scenario, run_scenario, Overrides, RunOutput};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn run_preset(name: &str) -> Result<(RunOutput, f64), String> {
    let s = preset_scenario(name, &Overrides::default()).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let out = run_scenario(&s).map_err(|e| e.to_string())?;
    Ok((out, start.elapsed().as_secs_f64()))
}

fn num(out: &RunOutput, kind: &str, label: &str, key: &str) -> Result<f64, String> {
    out.report(kind, label)
        .and_then(|r| r.number(key))
        .ok_or_else(|| format!("missing {kind} {label} {key}"))
}

fn c1_model_agreement() -> Result<Outcome, String> {
    let (out, secs) = run_preset("fig3")?;
    let keys = ["i_dc_rms_pct", "i_ac_rms_pct", "v_sigma_rms_pct", "v_delta_rms_pct"];
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for k in keys {
        let v = num(&out, "agreement", "switched_vs_averaged", k)?;
        worst = worst.max(v);
        parts.push(format!("{k}={v:.3}"));
    }
    Ok(outcome(
        worst <= 5.0 && secs <= 60.0,
        format!("{} runtime={secs:.2}s (limits 5%, 60 s)", parts.join(" ")),
    ))
}

fn c2_open_loop(fig9: &RunOutput) -> Result<Outcome, String> {
    let h2 = num(fig9, "harmonics", "open_loop", "h2_pct")?;
    let h4 = num(fig9, "harmonics", "open_loop", "h4_pct")?;
    let ok = |x: f64| (12.0..=28.0).contains(&x);
    Ok(outcome(ok(h2) && ok(h4), format!("h2={h2:.2}% h4={h4:.2}% (band 12..28%)")))
}

fn c3_without_compensator(fig9: &RunOutput) -> Result<Outcome, String> {
    let h2 = num(fig9, "harmonics", "without_compensator", "h2_pct")?;
    Ok(outcome(h2 > 10.0, format!("h2={h2:.2}% (need > 10%)")))
}

fn c4_with_compensator(fig9: &RunOutput) -> Result<Outcome, String> {
    let h2 = num(fig9, "harmonics", "with_compensator", "h2_pct")?;
    let h4 = num(fig9, "harmonics", "with_compensator", "h4_pct")?;
    let h2_off = num(fig9, "harmonics", "without_compensator", "h2_pct")?;
    let h4_off = num(fig9, "harmonics", "without_compensator", "h4_pct")?;
    Ok(outcome(
        h2 <= 5.5 && h4 <= 3.6 && h2 < h2_off && h4 < h4_off,
        format!("h2={h2:.2}% h4={h4:.2}% (limits 5.5%, 3.6%); without: h2={h2_off:.2}% h4={h4_off:.2}%"),
    ))
}

fn c5_ripple(fig9: &RunOutput) -> Result<Outcome, String> {
    let on = num(fig9, "ripple", "with_compensator", "peak_to_peak")?;
    let off = num(fig9, "ripple", "without_compensator", "peak_to_peak")?;
    let reduction = 100.0 * (off - on) / off;
    // Reference for "large": the open-loop ripple before the controller starts.
    let t = fig9.run(PlantKind::Switched).ok_or("no switched run")?;
    let p = ConverterParams::full_scale();
    let smooth = (p.t_sw() / t.dt).round() as usize;
    let open = peak_to_peak(t, Signal::IDc, 0.002, 0.004, smooth).map_err(|e| e.to_string())?;
    let h2_off = num(fig9, "harmonics", "without_compensator", "h2_pct")?;
    Ok(outcome(
        reduction >= 45.0 && off >= 0.5 * open && h2_off > 10.0,
        format!("pk-pk on={on:.2} A off={off:.2} A open_loop={open:.2} A reduction={reduction:.1}% (need ≥ 45%)"),
    ))
}

fn c6_transient(fig9: &RunOutput) -> Result<Outcome, String> {
    let os = num(fig9, "transient", "power_step_v_sigma", "overshoot_pct")?;
    let settle = num(fig9, "transient", "power_step_i_dc", "settling_periods")?;
    let band = num(fig9, "transient", "power_step_i_dc", "band_pct")?;
    Ok(outcome(
        os <= 0.5 && settle <= 3.0 && band <= 5.0,
        format!("v_sigma overshoot={os:.3}% (≤ 0.5%) i_dc settling={settle:.2} periods in ±{band}% (≤ 3)"),
    ))
}

/// Trapezoidal AC loop with `v_delta` dropped and `v_sigma(k+1) = v*`.
fn next_i_ac(d: &DerivedParams, t_s: f64, i: f64, d_k: f64, d_next: f64, v: f64, v_ref: f64) -> f64 {
    let a = 2.0 * d.l_ac_eq / t_s;
    ((a - d.r_ac_eq) * i + d_k * v + d_next * v_ref) / (a + d.r_ac_eq)
}

fn next_i_dc(d: &DerivedParams, t_s: f64, x: &DcLawInputs, d_next: f64, v_ref: f64) -> f64 {
    let a = 2.0 * d.l_dc_eq / t_s;
    let drive =
        2.0 * x.v_dc - x.d_dc_prev * x.v_sigma - d_next * v_ref + x.d_ac_prev * x.v_delta + x.d_ac_next * x.v_delta_next;
    ((a - d.r_dc_eq) * x.i_dc + drive) / (a + d.r_dc_eq)
}

fn c7_closure() -> Result<Outcome, String> {
    let mut rng = StdRng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let p = if k % 2 == 0 { ConverterParams::full_scale() } else { ConverterParams::downscaled() };
        let d = p.derive();
        let t_s = p.t_s();
        let v_ref = p.v_dc / 0.8;
        let i_ac_rated = (p.p_rated / p.r_ac).sqrt();
        let i_dc_rated = p.p_rated / p.v_dc;
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };

        let i_ref = sign * rng.gen_range(0.05..1.5) * i_ac_rated;
        let i_ac = rng.gen_range(-1.5..1.5) * i_ac_rated;
        let d_ac = rng.gen_range(-0.9..0.9);
        let v_sigma = rng.gen_range(0.8..1.2) * v_ref;
        let d_ac_next = compute_dac(i_ref, i_ac, d_ac, v_sigma, v_ref, &d, t_s);
        let got = next_i_ac(&d, t_s, i_ac, d_ac, d_ac_next, v_sigma, v_ref);
        worst = worst.max((got - i_ref).abs() / i_ref.abs());

        let d_dc = rng.gen_range(0.5..1.0);
        let i_dc = rng.gen_range(-0.5..1.5) * i_dc_rated;
        let v_delta = rng.gen_range(-0.05..0.05) * v_ref;
        let x = DcLawInputs {
            i_dc_ref: rng.gen_range(0.05..1.5) * i_dc_rated,
            i_dc,
            d_dc_prev: d_dc,
            d_ac_prev: d_ac,
            d_ac_next: d_ac_next.clamp(-1.0, 1.0),
            v_sigma,
            v_delta,
            v_delta_next: predict_vdelta(d_dc, d_ac, i_ac, i_dc, v_delta, p.n_cells, t_s, p.c_cell),
            v_dc: p.v_dc,
        };
        let d_dc_next = compute_ddc_pred(&x, v_ref, &d, t_s);
        let got = next_i_dc(&d, t_s, &x, d_dc_next, v_ref);
        worst = worst.max((got - x.i_dc_ref).abs() / x.i_dc_ref.abs());
    }
    Ok(outcome(worst < 1e-12, format!("1000 states, worst relative error {worst:.2e} (< 1e-12)")))
}

fn c8_conservation() -> Result<Outcome, String> {
    let p = ConverterParams::full_scale();
    let d = DerivedParams {
        r_dc_eq: 0.0,
        r_ac_eq: 0.0,
        ..p.derive()
    };
    let dt = p.t_sw() / 100.0;
    let steps = (10.0 * p.t_ac() / dt).round() as usize;
    let mut s = AveragedState {
        i_dc: 83.3,
        i_ac: 87.7,
        v_sigma: 7500.0,
        v_delta: 0.0,
    };
    let e0 = s.energy(&d);
    let mut worst: f64 = 0.0;
    for k in 0..steps {
        let t = k as f64 * dt;
        let u = ControlInput {
            d_dc: 0.8,
            d_ac: 0.742 * square_reference(p.omega() * (t + 0.5 * dt)),
            v_dc: 0.0,
        };
        s = integrate_step(&s, |_| u, t, dt, &d, p.t_sw()).map_err(|e| e.to_string())?;
        worst = worst.max((s.energy(&d) - e0).abs() / e0);
    }
    Ok(outcome(worst < 1e-6, format!("10 periods at T_sw/100, drift {worst:.2e} (< 1e-6)")))
}

fn c9_frequency_response() -> Result<Outcome, String> {
    let s = preset_scenario("fig9", &Overrides::default()).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let pts = sweep(&s, &probe_frequencies(10.0, s.params.f_ac, 9)).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let db = pts.iter().fold(0.0f64, |m, p| m.max(p.delta_db().abs()));
    let deg = pts.iter().fold(0.0f64, |m, p| m.max(p.delta_deg().abs()));
    Ok(outcome(
        pts.len() == 9 && db <= 1.0 && deg <= 5.0 && secs <= 120.0,
        format!("9 points 10 Hz..{} Hz, worst {db:.3} dB / {deg:.3}° runtime={secs:.2}s", s.params.f_ac),
    ))
}

fn c10_balancing(fig9: &RunOutput) -> Result<Outcome, String> {
    let r = fig9.report("balance", "closed_loop").ok_or("missing balance report")?;
    let periods = r.number("periods").ok_or("missing periods")?;
    let bounded = r.is_set("bounded").ok_or("missing bounded")?;
    let monotonic = r.is_set("monotonic_growth").ok_or("missing monotonic_growth")?;
    let max = r.number("max_v").unwrap_or(f64::NAN);

    let ap = [[1, 2, 3, 4], [4, 1, 2, 3], [4, 1, 2, 3], [3, 4, 1, 2], [3, 4, 1, 2], [2, 3, 4, 1], [2, 3, 4, 1], [1, 2, 3, 4]];
    let an = [[4, 1, 2, 3], [4, 1, 2, 3], [3, 4, 1, 2], [3, 4, 1, 2], [2, 3, 4, 1], [2, 3, 4, 1], [1, 2, 3, 4], [1, 2, 3, 4]];
    let mut m = SwapMachine::new(4);
    let mut table = true;
    for k in 0..8 {
        let one = |arm| m.order(arm).iter().map(|c| c + 1).collect::<Vec<_>>();
        table &= m.state_index() == k && one(Arm::Ap) == ap[k] && one(Arm::An) == an[k];
        m.advance(k as f64 * 1e-4, 1e-4).map_err(|e| e.to_string())?;
    }
    table &= m.state_index() == 0 && m.order(Arm::Ap) == [0, 1, 2, 3];
    Ok(outcome(
        periods >= 50.0 && bounded && !monotonic && table,
        format!("{periods} periods, max spread {max:.2} V, bounded={bounded}, swap table {}", if table { "matches" } else { "differs" }),
    ))
}

fn c11_downscaled() -> Result<Outcome, String> {
    let (out, _) = run_preset("fig12c")?;
    let clamps = num(&out, "run", "switched", "clamp_intervals")?;
    let os = num(&out, "transient", "power_step_v_sigma", "overshoot_pct")?;
    let ratio = |mean: &str, reference: &str| -> Result<f64, String> {
        let d = num(&out, "tracking", "after_step", mean)? - num(&out, "tracking", "before_step", mean)?;
        let dr = num(&out, "tracking", "after_step", reference)? - num(&out, "tracking", "before_step", reference)?;
        Ok(d / dr)
    };
    let ac = ratio("i_ac_rectified_mean", "i_ac_ref_mean")?;
    let dc = ratio("i_dc_mean", "i_dc_ref_mean")?;
    let within = |r: f64| (0.9..=1.1).contains(&r);
    let t = out.run(PlantKind::Switched).ok_or("no switched run")?;
    let finite = t.records.iter().all(|r| r.values().iter().all(|v| v.is_finite()));
    Ok(outcome(
        finite && clamps == 0.0 && within(ac) && within(dc) && os <= 2.0,
        format!(
            "clamps={clamps} step tracking i_ac={ac:.3} i_dc={dc:.3} (0.9..1.1) v_sigma overshoot={os:.3}% (≤ 2%)"
        ),
    ))
}

fn c12_determinism() -> Result<Outcome, String> {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut differing = Vec::new();
    for name in NAMES {
        let s = preset_scenario(name, &Overrides::default()).map_err(|e| e.to_string())?;
        let mut bytes = Vec::new();
        for pass in 0..2 {
            let out = run_scenario(&s).map_err(|e| e.to_string())?;
            let dir = root.path().join(format!("{name}_{pass}"));
            let w = emit_outputs(&s, &out, &dir).map_err(|e| e.to_string())?;
            let mut files = Vec::new();
            for f in w.files.iter().filter(|f| f.ends_with(".csv")) {
                files.push(std::fs::read(dir.join(f)).map_err(|e| e.to_string())?);
            }
            bytes.push(files);
        }
        if bytes[0] != bytes[1] || bytes[0].is_empty() {
            differing.push(name);
        }
    }
    Ok(outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} presets re-run with identical CSV bytes", NAMES.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    ))
}

fn main() -> ExitCode {
    let fig9 = run_preset("fig9").map(|(o, _)| o);
    let with_fig9 = |f: fn(&RunOutput) -> Result<Outcome, String>| match &fig9 {
        Ok(o) => f(o),
        Err(e) => Err(format!("fig9 run failed: {e}")),
    };
    let results = [
        ("1 model agreement", c1_model_agreement()),
        ("2 open-loop harmonics", with_fig9(c2_open_loop)),
        ("3 closed loop without compensator", with_fig9(c3_without_compensator)),
        ("4 closed loop with compensator", with_fig9(c4_with_compensator)),
        ("5 compensator toggle ripple", with_fig9(c5_ripple)),
        ("6 power-step transient", with_fig9(c6_transient)),
        ("7 deadbeat closure", c7_closure()),
        ("8 energy conservation", c8_conservation()),
        ("9 outer-loop frequency response", c9_frequency_response()),
        ("10 cell balancing", with_fig9(c10_balancing)),
        ("11 downscaled prototype", c11_downscaled()),
        ("12 determinism", c12_determinism()),
    ];
    let mut failed = 0;
    for (name, r) in results {
        let o = r.unwrap_or_else(|e| outcome(false, format!("error: {e}")));
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of 12 criteria passed", 12 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
