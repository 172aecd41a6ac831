//! TOML scenario files. Every key carries its unit in the name; unknown keys
//! are rejected. Anything left out falls back to the chosen preset and its
//! standard load-step scenario.
//!
//! ```toml
//! preset = "lab-5nm3"
//! controller = "mpc"
//! t_set_c = 70.0
//! duration_s = 21600.0
//!
//! [[load]]
//! start_s = 0.0
//! fraction = 0.68
//!
//! [[load]]
//! start_s = 3600.0
//! current_a = 720.0
//!
//! [plant]
//! coil_ka_w_per_k = 1000.0
//! ```

use std::path::{Path, PathBuf};

use alkatherm_core::control::Measurement;
use alkatherm_core::params::{Preset, SystemParameters, UiCurve};
use alkatherm_core::scenario::{ControllerKind, Load, LoadSchedule, LoadSegment, ScenarioConfig};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("unknown preset {0:?} (expected lab-5nm3 or mw-500nm3)")]
    UnknownPreset(String),
    #[error("unknown controller {0:?} (expected pid, pid-i or mpc)")]
    UnknownController(String),
    #[error("unknown measurement point {0:?} (expected after-stack or before-stack)")]
    UnknownMeasurement(String),
    #[error("load segment at {0} s needs exactly one of fraction or current_a")]
    LoadSegment(f64),
    #[error("invalid scenario: {0}")]
    Invalid(alkatherm_core::error::Error),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<String>,
    pub controller: Option<String>,
    pub t_set_c: Option<f64>,
    pub duration_s: Option<f64>,
    pub dt_s: Option<f64>,
    pub log_interval_s: Option<f64>,
    pub cold_start: Option<bool>,
    pub output: Option<PathBuf>,
    pub ambient: Option<AmbientFile>,
    #[serde(default)]
    pub load: Vec<LoadFile>,
    pub plant: Option<PlantFile>,
    pub pid: Option<PidFile>,
    pub feedforward: Option<FeedforwardFile>,
    pub mpc: Option<MpcFile>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmbientFile {
    pub t_amb_c: Option<f64>,
    pub t_c_in_c: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadFile {
    pub start_s: f64,
    pub fraction: Option<f64>,
    pub current_a: Option<f64>,
}

// Optional overrides with the same names as the parameter struct fields.
macro_rules! overrides {
    (
        $(#[$m:meta])* $name:ident => $target:ty {
            $($field:ident: $ty:ty),* $(,)?
            $(; $($nested:ident: $nty:ty),* $(,)?)?
        }
    ) => {
        $(#[$m])*
        #[derive(Debug, Default, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $(pub $field: Option<$ty>,)*
            $($(pub $nested: Option<$nty>,)*)?
        }

        impl $name {
            pub fn apply(&self, target: &mut $target) {
                $(if let Some(v) = self.$field {
                    target.$field = v;
                })*
                $($(if let Some(n) = &self.$nested {
                    n.apply(&mut target.$nested);
                })*)?
            }
        }
    };
}

overrides!(UiFile => UiCurve { r1: f64, r2: f64, s: f64, t1: f64, t2: f64, t3: f64 });

overrides!(
    /// Plant overrides; the U-I coefficients live in `[plant.ui]`.
    PlantFile => SystemParameters {
        n_cells: u32,
        cell_area_m2: f64,
        stack_diameter_m: f64,
        stack_area_m2: f64,
        stack_emissivity: f64,
        sep_resistance_k_per_w: f64,
        c_stack_j_per_k: f64,
        c_sep_j_per_k: f64,
        c_coil_j_per_k: f64,
        tau1_s: f64,
        tau2_s: f64,
        valve_gain_m3h: f64,
        valve_leak_m3h: f64,
        valve_dead_zone: f64,
        lye_flow_m3h: f64,
        lye_density_kg_per_m3: f64,
        lye_cp_j_per_kg_k: f64,
        water_density_kg_per_m3: f64,
        water_cp_j_per_kg_k: f64,
        coil_ka_w_per_k: f64,
        current_efficiency: f64,
        u_rev_v: f64,
        u_rev_temp_coef_v_per_k: f64,
        u_th_v: f64,
        i_min_a: f64,
        i_max_a: f64;
        ui: UiFile,
    }
);

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidFile {
    pub kp: Option<f64>,
    pub ki: Option<f64>,
    pub kd: Option<f64>,
    pub tau_s: Option<f64>,
    pub tf_s: Option<f64>,
    pub measurement: Option<String>,
    pub out_min: Option<f64>,
    pub out_max: Option<f64>,
}

overrides!(FeedforwardFile => alkatherm_core::control::FeedforwardMap {
    i_high_a: f64,
    y_high: f64,
    i_low_a: f64,
    y_low: f64,
    clamp_below: bool,
});

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcFile {
    pub horizon: Option<usize>,
    pub tau_s: Option<f64>,
    pub q: Option<f64>,
    pub r: Option<f64>,
    pub lpv_points: Option<usize>,
}

/// A validated scenario plus the bits that only matter to the CLI.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub preset: Preset,
    pub config: ScenarioConfig,
    pub output: Option<PathBuf>,
}

pub fn parse_preset(name: &str) -> Result<Preset, ConfigError> {
    Preset::from_name(name).ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))
}

pub fn parse_controller(name: &str) -> Result<ControllerKind, ConfigError> {
    ControllerKind::from_name(name).ok_or_else(|| ConfigError::UnknownController(name.to_string()))
}

fn parse_measurement(name: &str) -> Result<Measurement, ConfigError> {
    match name {
        "after-stack" => Ok(Measurement::AfterStack),
        "before-stack" => Ok(Measurement::BeforeStack),
        _ => Err(ConfigError::UnknownMeasurement(name.to_string())),
    }
}

/// The preset's standard load-step scenario.
pub fn preset_scenario(preset: Preset, controller: ControllerKind) -> Scenario {
    Scenario {
        preset,
        config: ScenarioConfig::step_scenario(preset, controller),
        output: None,
    }
}

pub fn load_config(path: &Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<Scenario, ConfigError> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    build(file)
}

fn build(file: ConfigFile) -> Result<Scenario, ConfigError> {
    let preset = parse_preset(file.preset.as_deref().unwrap_or("lab-5nm3"))?;
    let controller = parse_controller(file.controller.as_deref().unwrap_or("pid"))?;
    let mut cfg = ScenarioConfig::step_scenario(preset, controller);

    if let Some(t) = file.t_set_c {
        cfg.t_set_c = t;
    }
    if let Some(d) = file.duration_s {
        cfg.duration_s = d;
    }
    if let Some(dt) = file.dt_s {
        cfg.dt_s = dt;
    }
    if let Some(l) = file.log_interval_s {
        cfg.log_interval_s = l;
    }
    if let Some(c) = file.cold_start {
        cfg.cold_start = c;
    }
    if let Some(a) = &file.ambient {
        if let Some(t) = a.t_amb_c {
            cfg.ambient.t_amb_c = t;
        }
        if let Some(t) = a.t_c_in_c {
            cfg.ambient.t_c_in_c = t;
        }
    }
    if let Some(plant) = &file.plant {
        plant.apply(&mut cfg.params);
    }
    if !file.load.is_empty() {
        let segments = file
            .load
            .iter()
            .map(|l| {
                let load = match (l.fraction, l.current_a) {
                    (Some(f), None) => Load::Fraction(f),
                    (None, Some(i)) => Load::CurrentA(i),
                    _ => return Err(ConfigError::LoadSegment(l.start_s)),
                };
                Ok(LoadSegment {
                    start_s: l.start_s,
                    load,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        cfg.schedule = LoadSchedule::new(segments).map_err(ConfigError::Invalid)?;
    }

    let s = &mut cfg.settings;
    if let Some(pid) = &file.pid {
        let p = &mut s.pid;
        for (slot, v) in [
            (&mut p.kp, pid.kp),
            (&mut p.ki, pid.ki),
            (&mut p.kd, pid.kd),
            (&mut p.tau_s, pid.tau_s),
            (&mut p.tf_s, pid.tf_s),
            (&mut p.out_min, pid.out_min),
            (&mut p.out_max, pid.out_max),
        ] {
            if let Some(v) = v {
                *slot = v;
            }
        }
        if let Some(m) = &pid.measurement {
            p.measurement = parse_measurement(m)?;
        }
    }
    if let Some(ff) = &file.feedforward {
        ff.apply(&mut s.feedforward);
    }
    if let Some(m) = &file.mpc {
        if let Some(h) = m.horizon {
            s.mpc.horizon = h;
        }
        if let Some(t) = m.tau_s {
            s.mpc.tau_s = t;
        }
        if let Some(q) = m.q {
            s.mpc.q = q;
        }
        if let Some(r) = m.r {
            s.mpc.r = r;
        }
        if let Some(n) = m.lpv_points {
            s.lpv_points = n;
        }
    }

    cfg.validate().map_err(ConfigError::Invalid)?;
    Ok(Scenario {
        preset,
        config: cfg,
        output: file.output,
    })
}
