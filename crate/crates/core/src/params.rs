//! Physical, geometric and empirical constants of one electrolysis system,
//! plus the two built-in presets.

use crate::error::{Error, Result};

/// Thermoneutral voltage in volts.
pub const THERMONEUTRAL_VOLTAGE: f64 = 1.48;
/// Stefan-Boltzmann constant, W/(m^2 K^4).
pub const STEFAN_BOLTZMANN: f64 = 5.670e-8;
/// Default reversible cell voltage, V.
pub const DEFAULT_REVERSIBLE_VOLTAGE: f64 = 1.229;

/// Coefficients of the empirical cell U-I curve. Temperatures in degC,
/// current density in A/m^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UiCurve {
    /// Ohmic coefficient, V m^2/A.
    pub r1: f64,
    /// Temperature dependence of the ohmic term, V m^2/(A K).
    pub r2: f64,
    /// Overvoltage amplitude, V.
    pub s: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
}

impl UiCurve {
    pub const fn fitted() -> Self {
        UiCurve {
            r1: 1.71e-4,
            r2: -1.96e-7,
            s: 0.16,
            t1: -0.24,
            t2: 26.23,
            t3: 139.88,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParameters {
    pub n_cells: u32,
    pub cell_area_m2: f64,
    pub stack_diameter_m: f64,
    pub stack_area_m2: f64,
    pub stack_emissivity: f64,
    pub sep_resistance_k_per_w: f64,
    pub c_stack_j_per_k: f64,
    pub c_sep_j_per_k: f64,
    pub c_coil_j_per_k: f64,
    /// Electrolyte transport delay through the stack.
    pub tau1_s: f64,
    /// Cooling-water transport delay through the coil.
    pub tau2_s: f64,
    /// Flow per unit valve opening, m^3/h.
    pub valve_gain_m3h: f64,
    /// Flow through the closed valve, m^3/h.
    pub valve_leak_m3h: f64,
    /// Commands below this opening pass only the leakage flow. Zero disables it.
    pub valve_dead_zone: f64,
    pub lye_flow_m3h: f64,
    pub lye_density_kg_per_m3: f64,
    pub lye_cp_j_per_kg_k: f64,
    pub water_density_kg_per_m3: f64,
    pub water_cp_j_per_kg_k: f64,
    /// Coil heat-transfer coefficient times area, W/K.
    pub coil_ka_w_per_k: f64,
    pub current_efficiency: f64,
    pub ui: UiCurve,
    pub u_rev_v: f64,
    /// Optional linear correction of the reversible voltage, V/K around 25 degC.
    pub u_rev_temp_coef_v_per_k: f64,
    pub u_th_v: f64,
    pub sigma: f64,
    pub i_min_a: f64,
    pub i_max_a: f64,
}

/// Boundary conditions that are not properties of the system itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ambient {
    pub t_amb_c: f64,
    pub t_c_in_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 5 Nm^3/h lab system, 26 cells.
    Lab5Nm3,
    /// 500 Nm^3/h system, 298 cells.
    Mw500Nm3,
}

impl Preset {
    pub const ALL: [Preset; 2] = [Preset::Lab5Nm3, Preset::Mw500Nm3];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Lab5Nm3 => "lab-5nm3",
            Preset::Mw500Nm3 => "mw-500nm3",
        }
    }

    pub fn from_name(name: &str) -> Option<Preset> {
        Preset::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn parameters(self) -> SystemParameters {
        match self {
            Preset::Lab5Nm3 => SystemParameters::lab_5nm3(),
            Preset::Mw500Nm3 => SystemParameters::mw_500nm3(),
        }
    }

    pub fn ambient(self) -> Ambient {
        match self {
            Preset::Lab5Nm3 => Ambient {
                t_amb_c: 10.0,
                t_c_in_c: 23.0,
            },
            Preset::Mw500Nm3 => Ambient {
                t_amb_c: 30.0,
                t_c_in_c: 28.0,
            },
        }
    }
}

// 31.2 wt% KOH around 70 degC.
const LYE_DENSITY: f64 = 1280.0;
const LYE_CP: f64 = 3030.0;

impl SystemParameters {
    pub fn lab_5nm3() -> Self {
        SystemParameters {
            n_cells: 26,
            cell_area_m2: 0.196,
            stack_diameter_m: 0.61,
            stack_area_m2: 1.1,
            stack_emissivity: 0.8,
            sep_resistance_k_per_w: 0.04,
            c_stack_j_per_k: 120e3,
            c_sep_j_per_k: 146e3,
            c_coil_j_per_k: 23e3,
            tau1_s: 360.0,
            tau2_s: 240.0,
            valve_gain_m3h: 1.1,
            valve_leak_m3h: 0.11,
            valve_dead_zone: 0.0,
            lye_flow_m3h: 2.5,
            lye_density_kg_per_m3: LYE_DENSITY,
            lye_cp_j_per_kg_k: LYE_CP,
            water_density_kg_per_m3: 1000.0,
            water_cp_j_per_kg_k: 4186.0,
            coil_ka_w_per_k: 1000.0,
            current_efficiency: 1.0,
            ui: UiCurve::fitted(),
            u_rev_v: DEFAULT_REVERSIBLE_VOLTAGE,
            u_rev_temp_coef_v_per_k: 0.0,
            u_th_v: THERMONEUTRAL_VOLTAGE,
            sigma: STEFAN_BOLTZMANN,
            i_min_a: 144.0,
            i_max_a: 720.0,
        }
    }

    pub fn mw_500nm3() -> Self {
        SystemParameters {
            n_cells: 298,
            cell_area_m2: 2.0,
            stack_diameter_m: 2.04,
            stack_area_m2: 41.0,
            stack_emissivity: 0.8,
            sep_resistance_k_per_w: 0.004,
            c_stack_j_per_k: 55e6,
            c_sep_j_per_k: 4.26e6,
            c_coil_j_per_k: 1.15e6,
            tau1_s: 360.0,
            tau2_s: 240.0,
            valve_gain_m3h: 30.0,
            // A closed valve still passes a little water; without it the coil
            // outlet sits within rounding of the stack temperature near the
            // thermal-neutral load.
            valve_leak_m3h: 0.4,
            valve_dead_zone: 0.0,
            lye_flow_m3h: 45.0,
            lye_density_kg_per_m3: LYE_DENSITY,
            lye_cp_j_per_kg_k: LYE_CP,
            water_density_kg_per_m3: 1000.0,
            water_cp_j_per_kg_k: 4186.0,
            coil_ka_w_per_k: 10e3,
            current_efficiency: 1.0,
            ui: UiCurve::fitted(),
            u_rev_v: DEFAULT_REVERSIBLE_VOLTAGE,
            u_rev_temp_coef_v_per_k: 0.0,
            u_th_v: THERMONEUTRAL_VOLTAGE,
            sigma: STEFAN_BOLTZMANN,
            i_min_a: 800.0,
            i_max_a: 4000.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            (self.cell_area_m2, "cell area must be positive"),
            (self.stack_diameter_m, "stack diameter must be positive"),
            (self.stack_area_m2, "stack surface area must be positive"),
            (self.c_stack_j_per_k, "stack heat capacity must be positive"),
            (
                self.c_sep_j_per_k,
                "separator heat capacity must be positive",
            ),
            (self.c_coil_j_per_k, "coil heat capacity must be positive"),
            (self.lye_density_kg_per_m3, "lye density must be positive"),
            (self.lye_cp_j_per_kg_k, "lye specific heat must be positive"),
            (
                self.water_density_kg_per_m3,
                "water density must be positive",
            ),
            (
                self.water_cp_j_per_kg_k,
                "water specific heat must be positive",
            ),
            (
                self.sep_resistance_k_per_w,
                "separator thermal resistance must be positive",
            ),
        ];
        for (v, msg) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Parameter(msg));
            }
        }
        if self.n_cells == 0 {
            return Err(Error::Parameter("cell count must be positive"));
        }
        if !(self.current_efficiency > 0.0 && self.current_efficiency <= 1.0) {
            return Err(Error::Parameter("current efficiency must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.stack_emissivity) {
            return Err(Error::Parameter("stack emissivity must lie in [0, 1]"));
        }
        if !(self.tau1_s >= 0.0 && self.tau2_s >= 0.0) {
            return Err(Error::Parameter("delays must be non-negative"));
        }
        if !(self.i_min_a >= 0.0 && self.i_min_a < self.i_max_a) {
            return Err(Error::Parameter("current range needs 0 <= I_min < I_max"));
        }
        if !(self.valve_gain_m3h >= 0.0 && self.valve_leak_m3h >= 0.0) {
            return Err(Error::Parameter(
                "valve gain and leakage must be non-negative",
            ));
        }
        if !(0.0..1.0).contains(&self.valve_dead_zone) {
            return Err(Error::Parameter("valve dead zone must lie in [0, 1)"));
        }
        if !(self.lye_flow_m3h >= 0.0 && self.coil_ka_w_per_k >= 0.0) {
            return Err(Error::Parameter(
                "lye flow and coil kA must be non-negative",
            ));
        }
        Ok(())
    }

    /// Electrolyte heat capacity flow, W/K.
    pub fn lye_heat_flow_w_per_k(&self) -> f64 {
        self.lye_flow_m3h / 3600.0 * self.lye_density_kg_per_m3 * self.lye_cp_j_per_kg_k
    }

    /// Cooling-water heat capacity flow for a volume flow in m^3/h, W/K.
    pub fn water_heat_flow_w_per_k(&self, flow_m3h: f64) -> f64 {
        flow_m3h / 3600.0 * self.water_density_kg_per_m3 * self.water_cp_j_per_kg_k
    }

    pub fn max_delay_s(&self) -> f64 {
        self.tau1_s.max(self.tau2_s)
    }

    /// Current for a load fraction of rated current.
    pub fn current_for_load(&self, fraction: f64) -> f64 {
        fraction * self.i_max_a
    }
}

/// Inputs to the heat-capacity formulas. Volumes in m^3, densities in
/// kg/m^3, specific heats in J/(kg K).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityGeometry {
    pub electrode_volume_m3: f64,
    /// Bulk density of the electrode pack including its pores.
    pub electrode_density: f64,
    pub electrode_cp: f64,
    pub stack_free_volume_m3: f64,
    pub void_fraction: f64,
    pub separator_volume_m3: f64,
    /// Liquid fill level of the separator as a fraction.
    pub separator_level: f64,
    pub lye_density: f64,
    pub lye_cp: f64,
    pub coil_water_volume_m3: f64,
    pub water_density: f64,
    pub water_cp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatCapacities {
    pub stack_j_per_k: f64,
    pub separator_j_per_k: f64,
    pub coil_j_per_k: f64,
}

impl CapacityGeometry {
    /// Lab system. The separator volume comes from its 0.219 m diameter
    /// and 2 m length; the electrode pack is porous nickel-plated mesh at
    /// roughly a fifth of solid steel density.
    pub fn lab_5nm3() -> Self {
        let d = 0.219;
        CapacityGeometry {
            electrode_volume_m3: 0.03,
            electrode_density: 1540.0,
            electrode_cp: 500.0,
            stack_free_volume_m3: 0.05,
            void_fraction: 0.5,
            separator_volume_m3: core::f64::consts::FRAC_PI_4 * d * d * 2.0,
            separator_level: 0.5,
            lye_density: LYE_DENSITY,
            lye_cp: LYE_CP,
            coil_water_volume_m3: 0.0055,
            water_density: 1000.0,
            water_cp: 4186.0,
        }
    }
}

pub fn derive_heat_capacities(g: &CapacityGeometry) -> HeatCapacities {
    let lye = g.lye_density * g.lye_cp;
    HeatCapacities {
        stack_j_per_k: g.electrode_volume_m3 * g.electrode_density * g.electrode_cp
            + g.void_fraction * g.stack_free_volume_m3 * lye,
        separator_j_per_k: g.separator_level * g.separator_volume_m3 * lye,
        coil_j_per_k: g.coil_water_volume_m3 * g.water_density * g.water_cp,
    }
}
