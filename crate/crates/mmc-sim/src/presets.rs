//! Built-in scenarios.

pub const NAMES: [&str; 6] = ["fig3", "fig6a", "fig6b", "fig6c", "fig9", "fig12c"];

/// Scenario text of a preset.
pub fn text(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig3" => FIG3,
        "fig6a" => FIG6A,
        "fig6b" => FIG6B,
        "fig6c" => FIG6C,
        "fig9" => FIG9,
        "fig12c" => FIG12C,
        _ => return None,
    })
}

const FIG3: &str = "\
# Switched and averaged plants, open loop, duty step at 2 ms.
name = fig3
base = full_scale
f_sw_hz = 17500
mode = compare
open_loop_d_dc = 0.8
open_loop_d_ac = 0.742
t_end_s = 0.004
record_cells = on
output_every = 4

[events]
t_s=0.002 set_duties d_dc=0.82 d_ac=0.7

[metrics]
harmonics label=before_step from_s=0.0004 to_s=0.002
harmonics label=after_step from_s=0.0024 to_s=0.004
";

const FIG6A: &str = "\
# Open loop, small arm inductance, small cell capacitors.
name = fig6a
base = full_scale
mode = compare
open_loop_d_dc = 0.8
open_loop_d_ac = 0.742
t_end_s = 0.004
output_every = 4

[metrics]
harmonics label=i_dc from_s=0.002 to_s=0.004
ripple label=i_dc from_s=0.002 to_s=0.004
ripple label=v_delta signal=v_delta from_s=0.002 to_s=0.004
";

const FIG6B: &str = "\
# Open loop, small arm inductance, cell capacitors ten times larger.
preset = fig6a
name = fig6b
c_cell_f = 0.001
";

const FIG6C: &str = "\
# Open loop, 200 µH arm inductors, small cell capacitors.
preset = fig6a
name = fig6c
l_arm_h = 0.0002
";

const FIG9: &str = "\
# Rated power open loop, controller at 4 ms, 500 -> 450 kW at 10 ms,
# compensator off at 14 ms.
name = fig9
base = full_scale
p_demand_w = 500000
open_loop_d_dc = 0.8
open_loop_d_ac = 0.742
compensator = on
t_end_s = 0.024
record_cells = on
output_every = 16

[events]
t_s=0.004 enable_controller
t_s=0.010 set_power_demand p_w=450000
t_s=0.014 disable_compensator

[metrics]
harmonics label=open_loop from_s=0 to_s=0.004
harmonics label=with_compensator from_s=0.006 to_s=0.010
harmonics label=without_compensator from_s=0.020 to_s=0.024
ripple label=with_compensator from_s=0.006 to_s=0.010
ripple label=without_compensator from_s=0.020 to_s=0.024
transient label=power_step_v_sigma signal=v_sigma step_s=0.010 to_s=0.014 target=reference
transient label=power_step_i_dc signal=i_dc step_s=0.010 to_s=0.014 target=final
balance label=closed_loop from_s=0.004 to_s=0.024
tracking label=after_step from_s=0.012 to_s=0.014
";

const FIG12C: &str = "\
# Downscaled prototype under closed loop, 1 -> 2.5 kW at 4 ms.
name = fig12c
base = downscaled
p_demand_w = 1000
controller = on
compensator = on
t_end_s = 0.008
record_cells = on
output_every = 4

[events]
t_s=0.004 set_power_demand p_w=2500

[metrics]
tracking label=before_step from_s=0.002 to_s=0.004
tracking label=after_step from_s=0.006 to_s=0.008
transient label=power_step_v_sigma signal=v_sigma step_s=0.004 to_s=0.008 target=reference
transient label=power_step_i_dc signal=i_dc step_s=0.004 to_s=0.008 target=final
balance label=whole_run from_s=0 to_s=0.008
";
