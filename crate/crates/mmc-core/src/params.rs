//! Converter parameters, derived loop equivalents, references and per-unit
//! reporting.

use alloc::vec::Vec;
use core::fmt;

use crate::math::{abs, sqrt, TAU};

/// Circuit constants of the two-leg converter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConverterParams {
    /// DC input voltage [V].
    pub v_dc: f64,
    /// Rated power [W].
    pub p_rated: f64,
    /// Cells per arm.
    pub n_cells: usize,
    /// AC output frequency [Hz].
    pub f_ac: f64,
    /// Carrier frequency [Hz].
    pub f_sw: f64,
    /// Controller sampling frequency [Hz].
    pub f_sample: f64,
    /// Cell capacitance [F].
    pub c_cell: f64,
    pub r_ac: f64,
    pub l_ac: f64,
    pub r_dc: f64,
    pub l_dc: f64,
    pub r_arm: f64,
    pub l_arm: f64,
}

impl ConverterParams {
    /// The 6 kV / 500 kW, eight-cell design.
    pub const fn full_scale() -> Self {
        Self {
            v_dc: 6000.0,
            p_rated: 500e3,
            n_cells: 8,
            f_ac: 2500.0,
            f_sw: 40e3,
            f_sample: 50e3,
            c_cell: 100e-6,
            r_ac: 65.0,
            l_ac: 124e-6,
            r_dc: 0.325,
            l_dc: 8.28e-6,
            r_arm: 0.065,
            l_arm: 4.14e-6,
        }
    }

    /// The 250 V / 2.5 kW, four-cell laboratory prototype. It has no arm
    /// inductors, so the arm parasitics are zero.
    pub const fn downscaled() -> Self {
        Self {
            v_dc: 250.0,
            p_rated: 2500.0,
            n_cells: 4,
            f_ac: 5000.0,
            f_sw: 40e3,
            f_sample: 100e3,
            c_cell: 20e-6,
            r_ac: 16.0,
            l_ac: 29e-6,
            r_dc: 0.2,
            l_dc: 2e-6,
            r_arm: 0.0,
            l_arm: 0.0,
        }
    }

    /// AC period `T` [s].
    pub fn t_ac(&self) -> f64 {
        1.0 / self.f_ac
    }

    /// Carrier period `T_sw` [s].
    pub fn t_sw(&self) -> f64 {
        1.0 / self.f_sw
    }

    /// Controller sampling period `T_s` [s].
    pub fn t_s(&self) -> f64 {
        1.0 / self.f_sample
    }

    pub fn omega(&self) -> f64 {
        TAU * self.f_ac
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(self) -> Result<Self, ParamError> {
        let mut violations = Vec::new();
        let mut check = |ok: bool, field: &'static str, reason: &'static str| {
            if !ok {
                violations.push(Violation { field, reason });
            }
        };

        let reals = [
            ("v_dc", self.v_dc),
            ("p_rated", self.p_rated),
            ("f_ac", self.f_ac),
            ("f_sw", self.f_sw),
            ("f_sample", self.f_sample),
            ("c_cell", self.c_cell),
            ("r_ac", self.r_ac),
            ("l_ac", self.l_ac),
            ("r_dc", self.r_dc),
            ("l_dc", self.l_dc),
            ("r_arm", self.r_arm),
            ("l_arm", self.l_arm),
        ];
        for (field, value) in reals {
            check(value.is_finite(), field, "must be finite");
        }

        check(self.v_dc > 0.0, "v_dc", "DC voltage must be positive");
        check(self.p_rated >= 0.0, "p_rated", "power must be non-negative");
        check(self.n_cells >= 2, "n_cells", "at least two cells per arm are required");
        check(self.f_ac > 0.0, "f_ac", "frequency must be positive");
        check(self.f_sw > self.f_ac, "f_sw", "f_sw ≤ f_ac");
        check(self.f_sample >= 2.0 * self.f_ac, "f_sample", "f_sample < 2·f_ac");
        check(self.c_cell > 0.0, "c_cell", "capacitance must be positive");
        check(self.r_ac >= 0.0, "r_ac", "resistance must be non-negative");
        check(self.r_dc >= 0.0, "r_dc", "resistance must be non-negative");
        check(self.r_arm >= 0.0, "r_arm", "resistance must be non-negative");
        check(self.l_ac > 0.0, "l_ac", "inductance must be positive");
        check(self.l_dc > 0.0, "l_dc", "inductance must be positive");
        // The arm inductance is a parasitic and may be absent altogether.
        check(self.l_arm >= 0.0, "l_arm", "inductance must be non-negative");

        if violations.is_empty() {
            Ok(self)
        } else {
            Err(ParamError { violations })
        }
    }

    pub fn derive(&self) -> DerivedParams {
        DerivedParams {
            l_dc_eq: self.l_dc + self.l_arm,
            l_ac_eq: self.l_ac + self.l_arm,
            r_dc_eq: self.r_dc + self.r_arm,
            r_ac_eq: self.r_ac + self.r_arm,
            c_eq: 4.0 * self.c_cell / self.n_cells as f64,
        }
    }
}

/// One failed parameter invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub reason: &'static str,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamError {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ParamError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("invalid converter parameters")?;
        for v in &self.violations {
            write!(f, "; {v}")?;
        }
        Ok(())
    }
}

impl core::error::Error for ParamError {}

/// Loop equivalents seen by the averaged model: arm parasitics folded into
/// the DC and AC loops, and the capacitance behind `v_sigma`/`v_delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedParams {
    pub l_dc_eq: f64,
    pub l_ac_eq: f64,
    pub r_dc_eq: f64,
    pub r_ac_eq: f64,
    pub c_eq: f64,
}

pub fn derive_equivalents(p: &ConverterParams) -> DerivedParams {
    p.derive()
}

/// Set points for the control stack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSet {
    /// Reference for the half sum of a leg's arm capacitor voltages [V].
    pub v_sigma_ref: f64,
    /// Magnitude of the AC voltage reference [V].
    pub v_ac_ref_mag: f64,
    /// Magnitude of the square-wave AC current reference [A].
    pub i_ac_ref_mag: f64,
    /// DC current reference [A]; the outer loop overwrites it at run time.
    pub i_dc_ref: f64,
    pub p_demand: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceError {
    NominalDutyOutOfRange(f64),
    NegativeDemand(f64),
    /// The nominal arm duties `(d_dc ∓ d_ac)/2` leave `[0, 1]`.
    Infeasible { d_dc: f64, d_ac: f64 },
}

impl fmt::Display for ReferenceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NominalDutyOutOfRange(d) => {
                write!(f, "nominal DC duty {d} is outside (0, 1)")
            }
            Self::NegativeDemand(p) => write!(f, "power demand {p} W is negative"),
            Self::Infeasible { d_dc, d_ac } => write!(
                f,
                "nominal duties d_dc = {d_dc:.4}, |d_ac| = {d_ac:.4} put an arm duty outside [0, 1]"
            ),
        }
    }
}

impl core::error::Error for ReferenceError {}

/// AC current magnitude for a square-wave current into the resistive load.
pub fn ac_current_for_power(p: &ConverterParams, p_demand: f64) -> f64 {
    sqrt(p_demand.max(0.0) / p.r_ac)
}

/// Builds references for `p_demand` with `v_sigma_ref = v_dc / d_dc_nominal`.
pub fn default_references(
    p: &ConverterParams,
    d_dc_nominal: f64,
    p_demand: f64,
) -> Result<ReferenceSet, ReferenceError> {
    if !(d_dc_nominal > 0.0 && d_dc_nominal < 1.0) {
        return Err(ReferenceError::NominalDutyOutOfRange(d_dc_nominal));
    }
    if !(p_demand >= 0.0) {
        return Err(ReferenceError::NegativeDemand(p_demand));
    }
    let d = p.derive();
    let v_sigma_ref = p.v_dc / d_dc_nominal;
    let i_ac_ref_mag = ac_current_for_power(p, p_demand);
    let d_ac = d.r_ac_eq * i_ac_ref_mag / v_sigma_ref;
    if !arm_duties_feasible(d_dc_nominal, d_ac) {
        return Err(ReferenceError::Infeasible {
            d_dc: d_dc_nominal,
            d_ac,
        });
    }
    Ok(ReferenceSet {
        v_sigma_ref,
        v_ac_ref_mag: p.r_ac * i_ac_ref_mag,
        i_ac_ref_mag,
        i_dc_ref: p_demand / p.v_dc,
        p_demand,
    })
}

/// True when both arm duties `(d_dc - |d_ac|)/2` and `(d_dc + |d_ac|)/2` lie
/// in `[0, 1]`.
pub fn arm_duties_feasible(d_dc: f64, d_ac: f64) -> bool {
    let m = abs(d_ac);
    d_dc - m >= 0.0 && d_dc + m <= 2.0
}

/// Large-signal operating point used for the outer-loop transfer function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub v_sigma: f64,
    pub d_dc: f64,
    pub d_ac_mag: f64,
    pub i_dc: f64,
    /// RMS of the square-wave AC current, equal to its amplitude.
    pub i_ac: f64,
}

impl OperatingPoint {
    /// Steady state of the averaged model at the references, ignoring the
    /// ripple terms: `|d_ac| v_sigma = R'_ac I_ac`, `d_dc I_dc = |d_ac| I_ac`
    /// and `d_dc v_sigma = v_dc - R'_dc I_dc`.
    pub fn solve(p: &ConverterParams, refs: &ReferenceSet) -> Self {
        let d = p.derive();
        let v = refs.v_sigma_ref;
        let i_ac = refs.i_ac_ref_mag;
        let q = d.r_ac_eq * i_ac * i_ac;
        // Small root of R'_dc I² - v_dc I + q = 0, written to stay accurate
        // when R'_dc is tiny or zero.
        let disc = (p.v_dc * p.v_dc - 4.0 * d.r_dc_eq * q).max(0.0);
        let i_dc = 2.0 * q / (p.v_dc + sqrt(disc));
        Self {
            v_sigma: v,
            d_dc: (p.v_dc - d.r_dc_eq * i_dc) / v,
            d_ac_mag: d.r_ac_eq * i_ac / v,
            i_dc,
            i_ac,
        }
    }

    /// `|v_dc I_dc - I_ac² R'_ac| / p_rated`.
    pub fn power_residual(&self, p: &ConverterParams) -> f64 {
        let d = p.derive();
        abs(p.v_dc * self.i_dc - self.i_ac * self.i_ac * d.r_ac_eq) / p.p_rated
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapacitanceConvention {
    /// `C / C_base` with `C_base = 1 / (ω Z_base)`.
    ImpedanceBase,
    /// Stored cell energy at nominal cell voltage `v_dc / N`, divided by the
    /// energy delivered at rated power in one AC period.
    EnergyStorageTime,
}

impl CapacitanceConvention {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ImpedanceBase => "impedance-base",
            Self::EnergyStorageTime => "energy-storage-time",
        }
    }
}

/// Passive components normalized to `Z_base = v_dc² / p_rated`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerUnitReport {
    pub convention: CapacitanceConvention,
    pub z_base: f64,
    pub r_ac_pct: f64,
    pub r_dc_pct: f64,
    pub r_arm_pct: f64,
    pub x_ac_pct: f64,
    pub x_dc_pct: f64,
    pub x_arm_pct: f64,
    /// Capacitance of one cell.
    pub c_cell_pu: f64,
    /// Series capacitance of one arm, `C / N`.
    pub c_arm_pu: f64,
}

pub fn per_unit_report(p: &ConverterParams, convention: CapacitanceConvention) -> PerUnitReport {
    let z_base = p.v_dc * p.v_dc / p.p_rated;
    let w = p.omega();
    let pct_r = |r: f64| 100.0 * r / z_base;
    let pct_x = |l: f64| 100.0 * w * l / z_base;
    let n = p.n_cells as f64;
    let (c_cell_pu, c_arm_pu) = match convention {
        CapacitanceConvention::ImpedanceBase => {
            let c_base = 1.0 / (w * z_base);
            (p.c_cell / c_base, p.c_cell / n / c_base)
        }
        CapacitanceConvention::EnergyStorageTime => {
            let v_cell = p.v_dc / n;
            let e_cell = 0.5 * p.c_cell * v_cell * v_cell;
            let e_period = p.p_rated * p.t_ac();
            (e_cell / e_period, n * e_cell / e_period)
        }
    };
    PerUnitReport {
        convention,
        z_base,
        r_ac_pct: pct_r(p.r_ac),
        r_dc_pct: pct_r(p.r_dc),
        r_arm_pct: pct_r(p.r_arm),
        x_ac_pct: pct_x(p.l_ac),
        x_dc_pct: pct_x(p.l_dc),
        x_arm_pct: pct_x(p.l_arm),
        c_cell_pu,
        c_arm_pu,
    }
}

impl fmt::Display for PerUnitReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "z_base_ohm = {:.6}", self.z_base)?;
        writeln!(f, "r_ac_pct = {:.4}", self.r_ac_pct)?;
        writeln!(f, "r_dc_pct = {:.4}", self.r_dc_pct)?;
        writeln!(f, "r_arm_pct = {:.4}", self.r_arm_pct)?;
        writeln!(f, "x_ac_pct = {:.4}", self.x_ac_pct)?;
        writeln!(f, "x_dc_pct = {:.4}", self.x_dc_pct)?;
        writeln!(f, "x_arm_pct = {:.4}", self.x_arm_pct)?;
        writeln!(f, "capacitance_convention = {}", self.convention.name())?;
        writeln!(f, "c_cell_pu = {:.4}", self.c_cell_pu)?;
        writeln!(f, "c_arm_pu = {:.4}", self.c_arm_pu)
    }
}
