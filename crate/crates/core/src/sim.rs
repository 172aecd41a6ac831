//! Fixed-step integration of the delay model.

use crate::delay::DelayLine;
use crate::error::{Error, Result};
use crate::params::SystemParameters;
use crate::plant::{self, PlantInputs, PlantState, Rates};

/// Temperatures outside this band abort a simulation.
pub const GUARD_BAND_C: (f64, f64) = (-20.0, 150.0);

/// A plant instance: state, clock, and the two histories feeding the
/// delay terms.
#[derive(Debug, Clone)]
pub struct PlantSimulator {
    params: SystemParameters,
    state: PlantState,
    time: f64,
    sep_history: DelayLine,
    flow_history: DelayLine,
    gated_evaluations: u64,
}

impl PlantSimulator {
    /// Starts at `t0` with both histories held at their initial values
    /// over the preceding maximum delay.
    pub fn new(
        params: SystemParameters,
        initial: PlantState,
        initial_flow_m3h: f64,
        t0: f64,
    ) -> Self {
        let span = params.max_delay_s();
        PlantSimulator {
            params,
            state: initial,
            time: t0,
            sep_history: DelayLine::constant(t0, span, initial.t_sep),
            flow_history: DelayLine::constant(t0, span, initial_flow_m3h),
            gated_evaluations: 0,
        }
    }

    /// Starts from caller-built histories. They must reach back at least
    /// the maximum delay from `t0`.
    pub fn with_histories(
        params: SystemParameters,
        initial: PlantState,
        t0: f64,
        sep_history: DelayLine,
        flow_history: DelayLine,
    ) -> Result<Self> {
        let need = t0 - params.max_delay_s();
        for h in [&sep_history, &flow_history] {
            match h.earliest() {
                Some(e) if e <= need + 1e-9 => {}
                e => {
                    return Err(Error::HistoryUnderrun {
                        requested: need,
                        earliest: e.unwrap_or(f64::NAN),
                    })
                }
            }
        }
        Ok(PlantSimulator {
            params,
            state: initial,
            time: t0,
            sep_history,
            flow_history,
            gated_evaluations: 0,
        })
    }

    pub fn state(&self) -> PlantState {
        self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn params(&self) -> &SystemParameters {
        &self.params
    }

    /// How many right-hand-side evaluations had the coil term switched off.
    pub fn gated_evaluations(&self) -> u64 {
        self.gated_evaluations
    }

    pub fn sep_history(&self) -> &DelayLine {
        &self.sep_history
    }

    pub fn flow_history(&self) -> &DelayLine {
        &self.flow_history
    }

    /// Delayed separator temperature and cooling flow seen at the current time.
    pub fn delayed_values(&self) -> Result<(f64, f64)> {
        Ok((
            self.sep_history.value_at(self.time - self.params.tau1_s)?,
            self.flow_history.value_at(self.time - self.params.tau2_s)?,
        ))
    }

    /// Advances one RK4 step of length `dt`.
    ///
    /// The delayed terms are sampled once at the step start and held over
    /// the four stages; a zero delay instead uses the stage's own value.
    pub fn step(&mut self, inputs: &PlantInputs, dt: f64) -> Result<PlantState> {
        if !(dt > 0.0) {
            return Err(Error::Input("time step must be positive"));
        }
        let p = self.params;
        let flow = plant::valve_flow(inputs.valve_opening, &p)?;
        self.flow_history.push(self.time, flow)?;
        let sep_lag = if p.tau1_s > 0.0 {
            Some(self.sep_history.value_at(self.time - p.tau1_s)?)
        } else {
            None
        };
        let flow_lag = if p.tau2_s > 0.0 {
            self.flow_history.value_at(self.time - p.tau2_s)?
        } else {
            flow
        };

        let mut gated = 0u64;
        let mut rhs = |x: [f64; 3]| -> Result<[f64; 3]> {
            let s = PlantState::from_array(x);
            let r: Rates =
                plant::derivatives(&s, sep_lag.unwrap_or(s.t_sep), flow_lag, inputs, &p)?;
            if r.coil_gated {
                gated += 1;
            }
            Ok(r.to_array())
        };
        let x0 = self.state.to_array();
        let next = rk4(&mut rhs, x0, dt)?;
        self.gated_evaluations += gated;

        let new_state = PlantState::from_array(next);
        self.time += dt;
        if !new_state.is_finite()
            || new_state
                .to_array()
                .iter()
                .any(|t| *t < GUARD_BAND_C.0 || *t > GUARD_BAND_C.1)
        {
            return Err(Error::StateOutOfBounds {
                time: self.time,
                state: next,
            });
        }
        self.state = new_state;
        self.sep_history.push(self.time, new_state.t_sep)?;
        Ok(new_state)
    }
}

/// One classical Runge-Kutta step for a three-state system.
pub fn rk4<F>(f: &mut F, x: [f64; 3], dt: f64) -> Result<[f64; 3]>
where
    F: FnMut([f64; 3]) -> Result<[f64; 3]>,
{
    let add =
        |a: [f64; 3], b: [f64; 3], h: f64| [a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2]];
    let k1 = f(x)?;
    let k2 = f(add(x, k1, dt / 2.0))?;
    let k3 = f(add(x, k2, dt / 2.0))?;
    let k4 = f(add(x, k3, dt))?;
    Ok(core::array::from_fn(|i| {
        x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    }))
}
