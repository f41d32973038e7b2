//! Uniformly sampled simulation output.

use alloc::string::String;
use alloc::vec::Vec;

use crate::math::{abs, round};

/// Fixed columns of a trajectory, in output order.
pub const COLUMNS: [&str; 12] = [
    "t",
    "i_dc",
    "i_ac",
    "v_sigma",
    "v_delta",
    "d_dc_pred",
    "d_dc_comp",
    "d_dc_final",
    "d_ac",
    "i_ac_ref",
    "i_dc_ref",
    "v_sigma_ref",
];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Record {
    pub t: f64,
    pub i_dc: f64,
    pub i_ac: f64,
    pub v_sigma: f64,
    pub v_delta: f64,
    pub d_dc_pred: f64,
    pub d_dc_comp: f64,
    /// DC duty actually applied, after arm-duty clamping.
    pub d_dc_final: f64,
    /// Signed AC duty actually applied.
    pub d_ac: f64,
    /// Signed square-wave AC current reference.
    pub i_ac_ref: f64,
    pub i_dc_ref: f64,
    pub v_sigma_ref: f64,
}

impl Record {
    pub fn values(&self) -> [f64; 12] {
        [
            self.t,
            self.i_dc,
            self.i_ac,
            self.v_sigma,
            self.v_delta,
            self.d_dc_pred,
            self.d_dc_comp,
            self.d_dc_final,
            self.d_ac,
            self.i_ac_ref,
            self.i_dc_ref,
            self.v_sigma_ref,
        ]
    }
}

/// A trajectory column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    IDc,
    IAc,
    VSigma,
    VDelta,
    DDcPred,
    DDcComp,
    DDcFinal,
    DAc,
    IAcRef,
    IDcRef,
    VSigmaRef,
}

impl Signal {
    pub const ALL: [Signal; 11] = [
        Signal::IDc,
        Signal::IAc,
        Signal::VSigma,
        Signal::VDelta,
        Signal::DDcPred,
        Signal::DDcComp,
        Signal::DDcFinal,
        Signal::DAc,
        Signal::IAcRef,
        Signal::IDcRef,
        Signal::VSigmaRef,
    ];

    /// Column name, as in [`COLUMNS`].
    pub fn name(self) -> &'static str {
        COLUMNS[self as usize + 1]
    }

    pub fn from_name(name: &str) -> Option<Signal> {
        Signal::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn get(self, r: &Record) -> f64 {
        match self {
            Signal::IDc => r.i_dc,
            Signal::IAc => r.i_ac,
            Signal::VSigma => r.v_sigma,
            Signal::VDelta => r.v_delta,
            Signal::DDcPred => r.d_dc_pred,
            Signal::DDcComp => r.d_dc_comp,
            Signal::DDcFinal => r.d_dc_final,
            Signal::DAc => r.d_ac,
            Signal::IAcRef => r.i_ac_ref,
            Signal::IDcRef => r.i_dc_ref,
            Signal::VSigmaRef => r.v_sigma_ref,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventMarker {
    pub t: f64,
    pub label: String,
}

/// A run of consecutive plant steps in which arm duties were clipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampEvent {
    pub t_start: f64,
    pub t_end: f64,
    pub steps: u64,
    /// Largest distance of a requested arm duty outside `[0, 1]`.
    pub worst_excess: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    /// Spacing between records [s].
    pub dt: f64,
    pub records: Vec<Record>,
    pub n_cells: usize,
    /// Per-cell voltages, one row of `4 n_cells` values per record.
    pub cells: Option<Vec<f64>>,
    pub events: Vec<EventMarker>,
    pub clamps: Vec<ClampEvent>,
    /// Controller samples in which the DC reference limit was active.
    pub saturated_samples: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.t)
    }

    pub fn signal(&self, s: Signal) -> Vec<f64> {
        self.records.iter().map(|r| s.get(r)).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    /// Index of the record at time `t`, if `t` lies on the record grid.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let t0 = self.records.first()?.t;
        let k = round((t - t0) / self.dt);
        if k < 0.0 || k as usize >= self.records.len() {
            return None;
        }
        let k = k as usize;
        let err = t - self.records[k].t;
        (abs(err) <= 1e-6 * self.dt).then_some(k)
    }

    /// Cell voltages of record `k`.
    pub fn cells_at(&self, k: usize) -> Option<&[f64]> {
        let stride = 4 * self.n_cells;
        self.cells.as_ref().map(|c| &c[k * stride..(k + 1) * stride])
    }
}
