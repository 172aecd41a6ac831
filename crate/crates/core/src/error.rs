use alloc::string::String;
use core::fmt;

use crate::linalg::LinalgError;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// The logarithm in the U-I curve has a non-positive argument.
    CellVoltageDomain {
        current_density: f64,
        mean_temperature: f64,
    },
    /// LMTD end differences must both be positive.
    HeatExchangeDomain {
        hot_end: f64,
        cold_end: f64,
    },
    /// Cell voltage below the thermoneutral voltage.
    EfficiencyDomain {
        cell_voltage: f64,
    },
    ValveOpening(f64),
    Parameter(&'static str),
    Input(&'static str),
    HistoryUnderrun {
        requested: f64,
        earliest: f64,
    },
    HistoryOrder {
        time: f64,
        last: f64,
    },
    StateOutOfBounds {
        time: f64,
        state: [f64; 3],
    },
    NewtonDiverged {
        iterations: usize,
        residual: f64,
    },
    InfeasibleCooling {
        current: f64,
        opening: f64,
    },
    LpvBuild {
        current: f64,
        reason: String,
    },
    Linalg(LinalgError),
    Qp(&'static str),
    Scenario(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::CellVoltageDomain { current_density, mean_temperature } => write!(
                f,
                "U-I curve undefined at i = {current_density} A/m^2, mean temperature {mean_temperature} degC"
            ),
            Error::HeatExchangeDomain { hot_end, cold_end } => write!(
                f,
                "no feasible heat exchange: end differences {hot_end} K and {cold_end} K (cooling water hotter than lye)"
            ),
            Error::EfficiencyDomain { cell_voltage } => {
                write!(f, "cell voltage {cell_voltage} V is below the thermoneutral voltage")
            }
            Error::ValveOpening(y) => write!(f, "valve opening {y} outside [0, 1]"),
            Error::Parameter(what) => write!(f, "invalid parameter: {what}"),
            Error::Input(what) => write!(f, "invalid input: {what}"),
            Error::HistoryUnderrun { requested, earliest } => write!(
                f,
                "delay history underrun: requested t = {requested} s, earliest sample at {earliest} s"
            ),
            Error::HistoryOrder { time, last } => {
                write!(f, "delay history sample at {time} s does not follow {last} s")
            }
            Error::StateOutOfBounds { time, state } => {
                write!(f, "temperatures {state:?} left the simulation guard band at t = {time} s")
            }
            Error::NewtonDiverged { iterations, residual } => write!(
                f,
                "steady-state Newton iteration failed after {iterations} iterations (residual {residual:e} K/s)"
            ),
            Error::InfeasibleCooling { current, opening } => write!(
                f,
                "steady state at {current} A needs valve opening {opening} > 1"
            ),
            Error::LpvBuild { current, reason } => {
                write!(f, "LPV table build failed at {current} A: {reason}")
            }
            Error::Linalg(e) => write!(f, "linear algebra: {e}"),
            Error::Qp(what) => write!(f, "QP: {what}"),
            Error::Scenario(what) => write!(f, "scenario: {what}"),
        }
    }
}

impl core::error::Error for Error {}

impl From<LinalgError> for Error {
    fn from(e: LinalgError) -> Self {
        Error::Linalg(e)
    }
}
