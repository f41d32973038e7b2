//! Outer-loop frequency response: closed form against simulation.

use mmc_core::analysis::{db, small_signal_probe, AnalysisError, ProbeSettings};
use mmc_core::controller::{gvi_transfer, PoleError};
use mmc_core::params::{ac_current_for_power, OperatingPoint, ReferenceSet};
use num_complex::Complex64;

use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponsePoint {
    pub f_hz: f64,
    pub model: Complex64,
    pub probe: Complex64,
}

impl ResponsePoint {
    pub fn delta_db(&self) -> f64 {
        db(self.probe.norm()) - db(self.model.norm())
    }

    /// Phase of probe over model, wrapped to (-180, 180].
    pub fn delta_deg(&self) -> f64 {
        (self.probe / self.model).arg().to_degrees()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FreqRespError {
    Pole(PoleError),
    Probe { f_hz: f64, error: AnalysisError },
}

impl std::fmt::Display for FreqRespError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FreqRespError::Pole(e) => write!(f, "{e}"),
            FreqRespError::Probe { f_hz, error } => write!(f, "probe at {f_hz} Hz: {error}"),
        }
    }
}

impl std::error::Error for FreqRespError {}

/// Operating point of a scenario at its power demand.
pub fn operating_point(s: &Scenario) -> OperatingPoint {
    let p = &s.params;
    let i_ac = ac_current_for_power(p, s.p_demand);
    let refs = ReferenceSet {
        v_sigma_ref: s.v_sigma_ref,
        v_ac_ref_mag: p.r_ac * i_ac,
        i_ac_ref_mag: i_ac,
        i_dc_ref: s.p_demand / p.v_dc,
        p_demand: s.p_demand,
    };
    OperatingPoint::solve(p, &refs)
}

/// `points` log-spaced frequencies from `f_min` to `f_max`, both included.
pub fn log_frequencies(f_min: f64, f_max: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![f_min];
    }
    let (a, b) = (f_min.ln(), f_max.ln());
    (0..points)
        .map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp())
        .collect()
}

/// `points` roughly log-spaced frequencies from `f_min` to `f_ac`, each moved
/// to the nearest `f_ac / m` with integer `m` so the probe window holds whole
/// AC periods and whole probe cycles. Duplicates after snapping are dropped.
pub fn probe_frequencies(f_min: f64, f_ac: f64, points: usize) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(points);
    for f in log_frequencies(f_min, f_ac, points) {
        let m = (f_ac / f).round().max(1.0);
        let g = f_ac / m;
        if out.last() != Some(&g) {
            out.push(g);
        }
    }
    out
}

/// Evaluates both at each frequency.
pub fn sweep(s: &Scenario, freqs: &[f64]) -> Result<Vec<ResponsePoint>, FreqRespError> {
    let p = &s.params;
    let op = operating_point(s);
    let d = p.derive();
    let settings = ProbeSettings::for_params(p);
    freqs
        .iter()
        .map(|&f| {
            let model = gvi_transfer(&op, &d, Complex64::new(0.0, std::f64::consts::TAU * f)).map_err(FreqRespError::Pole)?;
            let probe = small_signal_probe(p, &op, f, &settings).map_err(|error| FreqRespError::Probe { f_hz: f, error })?;
            Ok(ResponsePoint { f_hz: f, model, probe })
        })
        .collect()
}

pub fn format_csv(points: &[ResponsePoint]) -> String {
    let mut out = String::from("f_hz,model_mag_db,model_phase_deg,probe_mag_db,probe_phase_deg,delta_db,delta_deg\n");
    for r in points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.f_hz,
            db(r.model.norm()),
            r.model.arg().to_degrees(),
            db(r.probe.norm()),
            r.probe.arg().to_degrees(),
            r.delta_db(),
            r.delta_deg()
        ));
    }
    out
}
