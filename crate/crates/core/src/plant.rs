//! Constitutive relations and the right-hand side of the three-node
//! thermal model (stack, separator, cooling coil) with two transport delays.
//!
//! Temperatures are in degC throughout; the radiation term converts to
//! kelvin internally. Volume flows are in m^3/h at the interface and are
//! converted to m^3/s inside.

use crate::error::{Error, Result};
use crate::math;
use crate::params::SystemParameters;

const KELVIN_OFFSET: f64 = 273.15;
const LMTD_EQUAL_TOL: f64 = 1e-9;

/// After-stack, before-stack (separator) and coil-outlet temperatures, degC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub t_stack: f64,
    pub t_sep: f64,
    pub t_c: f64,
}

impl PlantState {
    pub const fn new(t_stack: f64, t_sep: f64, t_c: f64) -> Self {
        PlantState {
            t_stack,
            t_sep,
            t_c,
        }
    }

    pub fn uniform(t: f64) -> Self {
        PlantState::new(t, t, t)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.t_stack, self.t_sep, self.t_c]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        PlantState::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantInputs {
    pub current_a: f64,
    pub valve_opening: f64,
    pub t_c_in_c: f64,
    pub t_amb_c: f64,
}

/// Time derivatives of the state, K/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub d_stack: f64,
    pub d_sep: f64,
    pub d_c: f64,
    /// True when the coil exchange was switched off because the LMTD
    /// end differences were not both positive.
    pub coil_gated: bool,
}

impl Rates {
    pub fn to_array(self) -> [f64; 3] {
        [self.d_stack, self.d_sep, self.d_c]
    }

    pub fn max_abs(&self) -> f64 {
        math::norm_inf(&self.to_array())
    }
}

pub fn average_temperature(t_stack: f64, t_sep: f64) -> f64 {
    (t_stack + t_sep) / 2.0
}

/// Reversible voltage, with the optional linear temperature correction.
pub fn reversible_voltage(t_mean: f64, p: &SystemParameters) -> f64 {
    p.u_rev_v + p.u_rev_temp_coef_v_per_k * (t_mean - 25.0)
}

/// Empirical cell voltage for current density `i` (A/m^2) at mean
/// temperature `t_mean` (degC).
pub fn cell_voltage(i: f64, t_mean: f64, p: &SystemParameters) -> Result<f64> {
    let c = &p.ui;
    let arg = (c.t1 + c.t2 / t_mean + c.t3 / (t_mean * t_mean)) * i + 1.0;
    if !(i >= 0.0) || !(t_mean > 0.0) || !(arg > 0.0) {
        return Err(Error::CellVoltageDomain {
            current_density: i,
            mean_temperature: t_mean,
        });
    }
    Ok(reversible_voltage(t_mean, p) + (c.r1 + c.r2 * t_mean) * i + c.s * math::log10(arg))
}

pub fn electric_power(current: f64, u_cell: f64, p: &SystemParameters) -> f64 {
    u_cell * current * p.n_cells as f64
}

/// Heat released by electrolysis, W.
pub fn heat_production(current: f64, u_cell: f64, p: &SystemParameters) -> f64 {
    let n = p.n_cells as f64;
    let eta = p.current_efficiency;
    (u_cell - p.u_th_v) * eta * current * n + (1.0 - eta) * current * u_cell * n
}

/// Chemical power stored in hydrogen (HHV), W.
pub fn hydrogen_power(current: f64, p: &SystemParameters) -> f64 {
    p.u_th_v * current * p.n_cells as f64
}

/// Natural convection plus radiation from the stack surface, W.
///
/// The convection coefficient uses the magnitude of the temperature
/// difference and the sign is applied to the whole term, so a stack below
/// ambient gains heat.
pub fn stack_dissipation(t_stack: f64, t_amb: f64, p: &SystemParameters) -> f64 {
    let diff = t_stack - t_amb;
    if diff == 0.0 {
        return 0.0;
    }
    let h = 2.51 * 0.52 * math::powf(diff.abs() / p.stack_diameter_m, 0.25);
    let conv = h * p.stack_area_m2 * diff;
    let tk = t_stack + KELVIN_OFFSET;
    let ta = t_amb + KELVIN_OFFSET;
    let rad =
        p.sigma * p.stack_area_m2 * p.stack_emissivity * (tk * tk * tk * tk - ta * ta * ta * ta);
    conv + rad
}

/// Loss from the separator and piping through a lumped thermal resistance, W.
pub fn separator_dissipation(t_mean: f64, t_amb: f64, p: &SystemParameters) -> Result<f64> {
    if !(p.sep_resistance_k_per_w > 0.0) {
        return Err(Error::Parameter(
            "separator thermal resistance must be positive",
        ));
    }
    Ok((t_mean - t_amb) / p.sep_resistance_k_per_w)
}

/// Log-mean temperature difference across the coil, K.
pub fn lmtd(t_stack: f64, t_sep: f64, t_c: f64, t_c_in: f64) -> Result<f64> {
    lmtd_of_ends(t_stack - t_c, t_sep - t_c_in)
}

pub(crate) fn lmtd_of_ends(d1: f64, d2: f64) -> Result<f64> {
    if !(d1 > 0.0 && d2 > 0.0) {
        return Err(Error::HeatExchangeDomain {
            hot_end: d1,
            cold_end: d2,
        });
    }
    if (d1 - d2).abs() < LMTD_EQUAL_TOL {
        return Ok(d1);
    }
    // ln(d1/d2) via log1p keeps precision when the ends are close
    Ok((d1 - d2) / math::ln_1p((d1 - d2) / d2))
}

/// Cooling-water flow for a valve opening, m^3/h.
pub fn valve_flow(opening: f64, p: &SystemParameters) -> Result<f64> {
    if !(0.0..=1.0).contains(&opening) {
        return Err(Error::ValveOpening(opening));
    }
    if p.valve_dead_zone > 0.0 && opening < p.valve_dead_zone {
        return Ok(p.valve_leak_m3h);
    }
    Ok(linear_valve_flow(opening, p))
}

/// The valve law without the dead zone and without range checks. Used by
/// the linearization, which may probe openings just outside [0, 1].
pub fn linear_valve_flow(opening: f64, p: &SystemParameters) -> f64 {
    p.valve_gain_m3h * opening + p.valve_leak_m3h
}

/// Right-hand side of the delay model.
///
/// `t_sep_delayed` is the separator temperature one stack delay ago and
/// `flow_delayed_m3h` the cooling-water flow one coil delay ago.
pub fn derivatives(
    state: &PlantState,
    t_sep_delayed: f64,
    flow_delayed_m3h: f64,
    inputs: &PlantInputs,
    p: &SystemParameters,
) -> Result<Rates> {
    let t_mean = average_temperature(state.t_stack, state.t_sep);
    let i = inputs.current_a / p.cell_area_m2;
    let u_cell = cell_voltage(i, t_mean, p)?;
    let q_ele = heat_production(inputs.current_a, u_cell, p);
    let q_dis_stack = stack_dissipation(state.t_stack, inputs.t_amb_c, p);
    let q_dis_sep = separator_dissipation(t_mean, inputs.t_amb_c, p)?;
    let lye = p.lye_heat_flow_w_per_k();

    let (q_coil, coil_gated) = match lmtd(state.t_stack, state.t_sep, state.t_c, inputs.t_c_in_c) {
        Ok(dt) => (p.coil_ka_w_per_k * dt, false),
        Err(_) => (0.0, true),
    };
    let water = p.water_heat_flow_w_per_k(flow_delayed_m3h);

    Ok(Rates {
        d_stack: (q_ele - q_dis_stack - lye * (state.t_stack - t_sep_delayed)) / p.c_stack_j_per_k,
        d_sep: (lye * (state.t_stack - state.t_sep) - q_coil - q_dis_sep) / p.c_sep_j_per_k,
        d_c: (water * (inputs.t_c_in_c - state.t_c) + q_coil) / p.c_coil_j_per_k,
        coil_gated,
    })
}

/// Derivatives with the delayed arguments replaced by current values, as
/// holds at any equilibrium. The valve law is taken without its dead zone.
pub fn undelayed_derivatives(
    state: &PlantState,
    opening: f64,
    inputs: &PlantInputs,
    p: &SystemParameters,
) -> Result<Rates> {
    derivatives(state, state.t_sep, linear_valve_flow(opening, p), inputs, p)
}

/// First-order lumped baseline: `C dT/dt = Q_ele - Q_dis - Q_cool` with
/// `C` the sum of the three capacities and an effectiveness-NTU coil.
pub fn lumped_derivative(t_mean: f64, inputs: &PlantInputs, p: &SystemParameters) -> Result<f64> {
    let i = inputs.current_a / p.cell_area_m2;
    let u_cell = cell_voltage(i, t_mean, p)?;
    let q_ele = heat_production(inputs.current_a, u_cell, p);
    let q_dis = stack_dissipation(t_mean, inputs.t_amb_c, p)
        + separator_dissipation(t_mean, inputs.t_amb_c, p)?;
    let water = p.water_heat_flow_w_per_k(valve_flow(inputs.valve_opening, p)?);
    let q_cool = if water > 0.0 {
        water * (t_mean - inputs.t_c_in_c) * (1.0 - math::exp(-p.coil_ka_w_per_k / water))
    } else {
        0.0
    };
    let c = p.c_stack_j_per_k + p.c_sep_j_per_k + p.c_coil_j_per_k;
    Ok((q_ele - q_dis - q_cool) / c)
}

/// HHV electrolysis efficiency of a cell.
pub fn electrolysis_efficiency(u_cell: f64, p: &SystemParameters) -> Result<f64> {
    if !(u_cell >= p.u_th_v) {
        return Err(Error::EfficiencyDomain {
            cell_voltage: u_cell,
        });
    }
    Ok(p.u_th_v / u_cell)
}

/// Heat and power terms at one operating point, for logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatBalance {
    pub u_cell: f64,
    pub q_ele: f64,
    pub q_dis_stack: f64,
    pub q_dis_sep: f64,
    /// HHV efficiency; NaN when the cell voltage is below thermoneutral.
    pub efficiency: f64,
}

pub fn heat_balance(
    state: &PlantState,
    inputs: &PlantInputs,
    p: &SystemParameters,
) -> Result<HeatBalance> {
    let t_mean = average_temperature(state.t_stack, state.t_sep);
    let u_cell = cell_voltage(inputs.current_a / p.cell_area_m2, t_mean, p)?;
    Ok(HeatBalance {
        u_cell,
        q_ele: heat_production(inputs.current_a, u_cell, p),
        q_dis_stack: stack_dissipation(state.t_stack, inputs.t_amb_c, p),
        q_dis_sep: separator_dissipation(t_mean, inputs.t_amb_c, p)?,
        efficiency: electrolysis_efficiency(u_cell, p).unwrap_or(f64::NAN),
    })
}
