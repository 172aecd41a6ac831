//! Steady states, the thermal-neutral operating point, and operating regions.
//!
//! At an equilibrium the delayed arguments equal their current values, so
//! the delays drop out of every computation here.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math;
use crate::params::{Ambient, SystemParameters};
use crate::plant::{self, PlantInputs, PlantState};

const MAX_NEWTON_ITERATIONS: usize = 100;
const MAX_HALVINGS: usize = 8;
const RESIDUAL_TOL: f64 = 1e-12;
/// Half-width of the thermal-neutral band, as a fraction of Q_ele.
pub const NEUTRAL_DEADBAND: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub state: PlantState,
    pub opening: f64,
    pub current_a: f64,
    pub ambient: Ambient,
    /// The set point is unreachable with the valve closed: opening is 0
    /// and the stack settles below the set point.
    pub saturated_low: bool,
    /// Largest |dT/dt| at the returned point, K/s.
    pub residual: f64,
    pub iterations: usize,
}

impl SteadyState {
    pub fn inputs(&self) -> PlantInputs {
        PlantInputs {
            current_a: self.current_a,
            valve_opening: self.opening,
            t_c_in_c: self.ambient.t_c_in_c,
            t_amb_c: self.ambient.t_amb_c,
        }
    }

    pub fn flow_m3h(&self, p: &SystemParameters) -> f64 {
        plant::linear_valve_flow(self.opening, p)
    }
}

/// Damped Newton on a three-equation system with a central-difference
/// Jacobian. Returns the root, the iteration count and the final residual.
fn newton3<F>(f: F, mut z: [f64; 3]) -> Result<([f64; 3], usize, f64)>
where
    F: Fn([f64; 3]) -> Result<[f64; 3]>,
{
    let norm = |v: &[f64; 3]| math::norm_inf(v);
    let mut fz = f(z)?;
    let mut res = norm(&fz);
    for iter in 0..MAX_NEWTON_ITERATIONS {
        if res < RESIDUAL_TOL {
            return Ok((z, iter, res));
        }
        let mut jac = Matrix::zeros(3, 3);
        for j in 0..3 {
            let h = 1e-6 * z[j].abs().max(1.0);
            let mut zp = z;
            let mut zm = z;
            zp[j] += h;
            zm[j] -= h;
            let (fp, fm) = (f(zp)?, f(zm)?);
            for i in 0..3 {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let rhs = Matrix::column(&[-fz[0], -fz[1], -fz[2]]);
        let step = jac.solve(&rhs).map_err(|_| Error::NewtonDiverged {
            iterations: iter,
            residual: res,
        })?;
        // Newton directions descend the 2-norm merit, not the max-norm.
        let merit = |v: &[f64; 3]| v.iter().map(|x| x * x).sum::<f64>();
        let current_merit = merit(&fz);
        let mut lambda = 1.0;
        let mut accepted = None;
        let mut fallback = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = [
                z[0] + lambda * step[(0, 0)],
                z[1] + lambda * step[(1, 0)],
                z[2] + lambda * step[(2, 0)],
            ];
            if let Ok(ft) = f(trial) {
                let m = merit(&ft);
                if m.is_finite() {
                    if m < current_merit {
                        accepted = Some((trial, ft));
                        break;
                    }
                    fallback = Some((trial, ft));
                }
            }
            lambda *= 0.5;
        }
        match accepted.or(fallback) {
            Some((zt, ft)) => {
                let moved = (0..3).map(|i| (zt[i] - z[i]).abs()).fold(0.0, f64::max);
                z = zt;
                fz = ft;
                res = norm(&fz);
                if moved < 1e-14 * (1.0 + norm(&z)) && res < 1e-10 {
                    return Ok((z, iter + 1, res));
                }
            }
            None => {
                return Err(Error::NewtonDiverged {
                    iterations: iter,
                    residual: res,
                })
            }
        }
    }
    if res < 1e-10 {
        return Ok((z, MAX_NEWTON_ITERATIONS, res));
    }
    Err(Error::NewtonDiverged {
        iterations: MAX_NEWTON_ITERATIONS,
        residual: res,
    })
}

/// Equilibrium at current `current_a` holding the after-stack temperature at
/// `t_set`. When that would need a negative opening the valve is closed
/// and the temperatures are left free.
pub fn solve_steady_state(
    current_a: f64,
    t_set: f64,
    ambient: Ambient,
    p: &SystemParameters,
) -> Result<SteadyState> {
    if !(current_a >= p.i_min_a - 1e-9 && current_a <= p.i_max_a + 1e-9) {
        return Err(Error::Input("steady-state current outside [I_min, I_max]"));
    }
    solve_steady_state_unchecked(current_a, t_set, ambient, p)
}

/// As [`solve_steady_state`] without the current-range precondition.
pub fn solve_steady_state_unchecked(
    current_a: f64,
    t_set: f64,
    ambient: Ambient,
    p: &SystemParameters,
) -> Result<SteadyState> {
    let inputs = |opening: f64| PlantInputs {
        current_a,
        valve_opening: opening,
        t_c_in_c: ambient.t_c_in_c,
        t_amb_c: ambient.t_amb_c,
    };
    // The coil unknown is ln(T_set - T_c): at small flows the outlet sits
    // exponentially close to the stack temperature.
    let coil_temp = |s: f64| t_set - math::exp(s);
    let regulated = |z: [f64; 3]| {
        let s = PlantState::new(t_set, z[0], coil_temp(z[1]));
        plant::undelayed_derivatives(&s, z[2], &inputs(z[2]), p).map(|r| r.to_array())
    };
    let guess = regulated_seed(current_a, t_set, ambient, p)?.unwrap_or([
        t_set - 5.0,
        math::ln((t_set - ambient.t_c_in_c - 10.0).max(1e-3)),
        0.1,
    ]);
    let regulated_root =
        newton3(regulated, guess).map(|(z, it, r)| ([z[0], coil_temp(z[1]), z[2]], it, r));

    if let Ok((z, iterations, residual)) = regulated_root {
        if z[2] >= 0.0 {
            if z[2] > 1.0 {
                return Err(Error::InfeasibleCooling {
                    current: current_a,
                    opening: z[2],
                });
            }
            return Ok(SteadyState {
                state: PlantState::new(t_set, z[0], z[1]),
                opening: z[2],
                current_a,
                ambient,
                saturated_low: false,
                residual,
                iterations,
            });
        }
    }

    // Valve closed, temperatures free.
    let (z, iterations, residual) = closed_valve_state(current_a, ambient, p)?;
    if z[0] > t_set + 1e-9 {
        // the set point is reachable, so the regulated branch should have worked
        return Err(regulated_root.err().unwrap_or(Error::NewtonDiverged {
            iterations,
            residual,
        }));
    }
    Ok(SteadyState {
        state: PlantState::from_array(z),
        opening: 0.0,
        current_a,
        ambient,
        saturated_low: true,
        residual,
        iterations,
    })
}

/// ln(T_stack - T_c) at which the coil passes to a water flow of
/// `water` W/K exactly what it takes up. `None` when the coil is gated
/// (no flow or the cold end is not positive).
fn coil_balance(
    t_stack: f64,
    t_sep: f64,
    water: f64,
    ambient: Ambient,
    p: &SystemParameters,
) -> Result<Option<f64>> {
    let d2 = t_sep - ambient.t_c_in_c;
    let span = t_stack - ambient.t_c_in_c;
    if !(water > 0.0 && d2 > 0.0 && span > 0.0) {
        return Ok(None);
    }
    let g = |ln_d1: f64| -> Result<f64> {
        let d1 = math::exp(ln_d1);
        Ok(water * (span - d1) - p.coil_ka_w_per_k * plant::lmtd_of_ends(d1, d2)?)
    };
    bisect(
        g,
        math::ln(1e-14 * t_stack.abs().max(1.0)),
        math::ln(span * (1.0 - 1e-12)),
    )
}

/// Steady state with the valve closed, by nested bisection on the stack
/// temperature, then polished by Newton in the coordinates
/// (T_stack, T_sep, ln(T_stack - T_c)).
fn closed_valve_state(
    current_a: f64,
    ambient: Ambient,
    p: &SystemParameters,
) -> Result<([f64; 3], usize, f64)> {
    let inputs = PlantInputs {
        current_a,
        valve_opening: 0.0,
        t_c_in_c: ambient.t_c_in_c,
        t_amb_c: ambient.t_amb_c,
    };
    let water = p.water_heat_flow_w_per_k(plant::linear_valve_flow(0.0, p));
    let lye = p.lye_heat_flow_w_per_k();
    let i = current_a / p.cell_area_m2;
    let sep_for = |t_stack: f64| -> Result<f64> {
        let q_loss = plant::stack_dissipation(t_stack, ambient.t_amb_c, p);
        let g = |t_sep: f64| -> Result<f64> {
            let u = plant::cell_voltage(i, plant::average_temperature(t_stack, t_sep), p)?;
            Ok(plant::heat_production(current_a, u, p) - q_loss - lye * (t_stack - t_sep))
        };
        // keep the mean temperature inside the voltage fit
        bisect(
            g,
            (t_stack - 100.0).max(1.0 - t_stack),
            (t_stack + 100.0).min(220.0 - t_stack),
        )?
        .ok_or(Error::NewtonDiverged {
            iterations: 0,
            residual: f64::NAN,
        })
    };
    let coil_temp = |t_stack: f64, t_sep: f64| -> Result<f64> {
        Ok(match coil_balance(t_stack, t_sep, water, ambient, p)? {
            Some(s) => t_stack - math::exp(s),
            None => t_stack,
        })
    };
    let net = |t_stack: f64| -> Result<f64> {
        let t_sep = sep_for(t_stack)?;
        let t_c = coil_temp(t_stack, t_sep)?;
        let r =
            plant::undelayed_derivatives(&PlantState::new(t_stack, t_sep, t_c), 0.0, &inputs, p)?;
        Ok(r.d_sep * p.c_sep_j_per_k)
    };
    let lo = ambient.t_amb_c.min(ambient.t_c_in_c);
    let t_stack = bisect(net, lo, 100.0)?.ok_or(Error::NewtonDiverged {
        iterations: 0,
        residual: f64::NAN,
    })?;
    let t_sep = sep_for(t_stack)?;
    let seed = [t_stack, t_sep, coil_temp(t_stack, t_sep)?];
    let residual_of = |z: [f64; 3]| -> Result<f64> {
        Ok(plant::undelayed_derivatives(&PlantState::from_array(z), 0.0, &inputs, p)?.max_abs())
    };
    let seed_residual = residual_of(seed)?;
    let d1 = seed[0] - seed[2];
    if d1 > 0.0 {
        let to_state = |z: [f64; 3]| [z[0], z[1], z[0] - math::exp(z[2])];
        let f = |z: [f64; 3]| {
            plant::undelayed_derivatives(&PlantState::from_array(to_state(z)), 0.0, &inputs, p)
                .map(|r| r.to_array())
        };
        if let Ok((z, it, res)) = newton3(f, [seed[0], seed[1], math::ln(d1)]) {
            if res <= seed_residual {
                return Ok((to_state(z), it, res));
            }
        }
    }
    Ok((seed, 0, seed_residual))
}

/// Bisection for a root of `g` on `[lo, hi]`, given a sign change.
fn bisect<G>(g: G, mut lo: f64, mut hi: f64) -> Result<Option<f64>>
where
    G: Fn(f64) -> Result<f64>,
{
    let (glo, ghi) = (g(lo)?, g(hi)?);
    if glo == 0.0 {
        return Ok(Some(lo));
    }
    if glo.signum() == ghi.signum() {
        return Ok(None);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid)?.signum() == glo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * (1.0 + hi.abs()) {
            break;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Starting point for the regulated branch, solving the balances one at a
/// time with the stack held at `t_set`: the stack balance fixes T_sep, the
/// separator balance fixes T_c, the coil balance fixes the flow. `None`
/// when one of the scalar problems has no bracketed root.
fn regulated_seed(
    current_a: f64,
    t_set: f64,
    ambient: Ambient,
    p: &SystemParameters,
) -> Result<Option<[f64; 3]>> {
    let lye = p.lye_heat_flow_w_per_k();
    let i = current_a / p.cell_area_m2;
    let q_stack_loss = plant::stack_dissipation(t_set, ambient.t_amb_c, p);
    let stack = |t_sep: f64| -> Result<f64> {
        let u = plant::cell_voltage(i, plant::average_temperature(t_set, t_sep), p)?;
        Ok(plant::heat_production(current_a, u, p) - q_stack_loss - lye * (t_set - t_sep))
    };
    let lo = ambient.t_c_in_c.min(t_set) + 1e-9;
    let t_sep = match bisect(stack, lo, t_set - 1e-9)? {
        Some(t) => t,
        None => return Ok(None),
    };
    let q_sep =
        plant::separator_dissipation(plant::average_temperature(t_set, t_sep), ambient.t_amb_c, p)?;
    let surplus = lye * (t_set - t_sep) - q_sep;
    let d2 = t_sep - ambient.t_c_in_c;
    if !(surplus > 0.0 && d2 > 0.0) {
        return Ok(None);
    }
    let sep = |ln_d1: f64| -> Result<f64> {
        Ok(surplus - p.coil_ka_w_per_k * plant::lmtd_of_ends(math::exp(ln_d1), d2)?)
    };
    let span = t_set - ambient.t_c_in_c;
    let ln_d1 = match bisect(
        sep,
        math::ln(1e-14 * t_set.abs().max(1.0)),
        math::ln(span * (1.0 - 1e-12)),
    )? {
        Some(s) => s,
        None => return Ok(None),
    };
    let rise = span - math::exp(ln_d1);
    if !(rise > 0.0) || p.valve_gain_m3h <= 0.0 {
        return Ok(None);
    }
    let flow = p.water_heat_flow_w_per_k(1.0);
    let flow_m3h = surplus / rise / flow;
    Ok(Some([
        t_sep,
        ln_d1,
        (flow_m3h - p.valve_leak_m3h) / p.valve_gain_m3h,
    ]))
}

/// Heat carried off by the closed valve's leakage flow with both lye ends of
/// the coil at `t_lye`.
fn leakage_cooling(t_lye: f64, ambient: Ambient, p: &SystemParameters) -> f64 {
    let water = p.water_heat_flow_w_per_k(p.valve_leak_m3h);
    let d_in = t_lye - ambient.t_c_in_c;
    if water <= 0.0 || d_in <= 0.0 {
        return 0.0;
    }
    water * d_in * (1.0 - math::exp(-p.coil_ka_w_per_k / water))
}

/// Net heat with the valve closed and everything at `t_set`: electrolysis
/// heat minus ambient losses and leakage-flow cooling, W.
pub fn closed_valve_surplus(
    current_a: f64,
    t_set: f64,
    ambient: Ambient,
    p: &SystemParameters,
) -> Result<f64> {
    let u = plant::cell_voltage(current_a / p.cell_area_m2, t_set, p)?;
    let q_ele = plant::heat_production(current_a, u, p);
    Ok(q_ele - closed_valve_losses(t_set, ambient, p)?)
}

fn closed_valve_losses(t_set: f64, ambient: Ambient, p: &SystemParameters) -> Result<f64> {
    Ok(plant::stack_dissipation(t_set, ambient.t_amb_c, p)
        + plant::separator_dissipation(t_set, ambient.t_amb_c, p)?
        + leakage_cooling(t_set, ambient, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeutralBracket {
    Interior,
    /// Heat production never covers the losses up to I_max.
    NeverSelfHeating,
    /// Heat production exceeds the losses even at zero current.
    AlwaysSelfHeating,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeutralPoint {
    pub current_a: f64,
    pub load_fraction: f64,
    pub bracket: NeutralBracket,
}

/// Current at which electrolysis heat balances the closed-valve losses at
/// `t_set`, found by bisection on `[0, I_max]`.
pub fn thermal_neutral_current(
    t_set: f64,
    ambient: Ambient,
    p: &SystemParameters,
) -> Result<NeutralPoint> {
    let g = |i: f64| closed_valve_surplus(i, t_set, ambient, p);
    let (mut lo, mut hi) = (0.0, p.i_max_a);
    let point = |i: f64, bracket| NeutralPoint {
        current_a: i,
        load_fraction: i / p.i_max_a,
        bracket,
    };
    if g(lo)? > 0.0 {
        return Ok(point(lo, NeutralBracket::AlwaysSelfHeating));
    }
    if g(hi)? < 0.0 {
        return Ok(point(hi, NeutralBracket::NeverSelfHeating));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 * p.i_max_a {
            break;
        }
    }
    Ok(point(0.5 * (lo + hi), NeutralBracket::Interior))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    LowLoad,
    ThermalNeutral,
    HighLoad,
}

impl Region {
    pub fn valve(self) -> &'static str {
        match self {
            Region::LowLoad | Region::ThermalNeutral => "closed",
            Region::HighLoad => "open",
        }
    }
}

pub fn classify_region(
    current_a: f64,
    t_set: f64,
    ambient: Ambient,
    p: &SystemParameters,
) -> Result<Region> {
    let u = plant::cell_voltage(current_a / p.cell_area_m2, t_set, p)?;
    let q_ele = plant::heat_production(current_a, u, p);
    let surplus = q_ele - closed_valve_losses(t_set, ambient, p)?;
    Ok(if surplus.abs() <= NEUTRAL_DEADBAND * q_ele.abs() {
        Region::ThermalNeutral
    } else if surplus < 0.0 {
        Region::LowLoad
    } else {
        Region::HighLoad
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub steady: SteadyState,
    pub q_ele: f64,
    /// Stack plus separator loss to ambient, W.
    pub q_dis: f64,
    pub u_cell: f64,
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub load: f64,
    pub current_a: f64,
    pub point: Result<SweepPoint>,
}

/// Steady states over a grid of load fractions.
pub fn steady_state_sweep(
    loads: &[f64],
    t_set: f64,
    ambient: Ambient,
    p: &SystemParameters,
) -> Vec<SweepRow> {
    loads
        .iter()
        .map(|&load| {
            let current_a = p.current_for_load(load);
            let point =
                solve_steady_state_unchecked(current_a, t_set, ambient, p).and_then(|steady| {
                    let hb = plant::heat_balance(&steady.state, &steady.inputs(), p)?;
                    Ok(SweepPoint {
                        steady,
                        q_ele: hb.q_ele,
                        q_dis: hb.q_dis_stack + hb.q_dis_sep,
                        u_cell: hb.u_cell,
                        efficiency: hb.efficiency,
                    })
                });
            SweepRow {
                load,
                current_a,
                point,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Preset;

    #[test]
    fn steady_states_have_tiny_residual() {
        for preset in Preset::ALL {
            let p = preset.parameters();
            let amb = preset.ambient();
            let t_set = if preset == Preset::Lab5Nm3 {
                70.0
            } else {
                90.0
            };
            for k in 0..10 {
                let i = p.i_min_a + (p.i_max_a - p.i_min_a) * k as f64 / 9.0;
                let ss = solve_steady_state(i, t_set, amb, &p).unwrap();
                let r = plant::derivatives(
                    &ss.state,
                    ss.state.t_sep,
                    ss.flow_m3h(&p),
                    &ss.inputs(),
                    &p,
                )
                .unwrap();
                assert!(
                    r.max_abs() < 1e-9,
                    "{preset:?} I={i}: residual {}",
                    r.max_abs()
                );
                assert!((0.0..=1.0).contains(&ss.opening));
                if !ss.saturated_low {
                    assert_eq!(ss.state.t_stack, t_set);
                } else {
                    assert!(ss.state.t_stack <= t_set);
                }
            }
        }
    }

    #[test]
    fn energy_closes_at_steady_state() {
        let p = Preset::Lab5Nm3.parameters();
        let amb = Preset::Lab5Nm3.ambient();
        for &i in &[300.0, 520.0, 720.0] {
            let ss = solve_steady_state(i, 70.0, amb, &p).unwrap();
            let hb = plant::heat_balance(&ss.state, &ss.inputs(), &p).unwrap();
            let q_cool = p.water_heat_flow_w_per_k(ss.flow_m3h(&p)) * (ss.state.t_c - amb.t_c_in_c);
            let resid = hb.q_ele - hb.q_dis_stack - hb.q_dis_sep - q_cool;
            assert!(resid.abs() / hb.q_ele < 1e-6, "I={i}: {resid}");
        }
    }

    #[test]
    fn out_of_range_current_rejected() {
        let p = Preset::Lab5Nm3.parameters();
        assert!(solve_steady_state(900.0, 70.0, Preset::Lab5Nm3.ambient(), &p).is_err());
    }

    #[test]
    fn insufficient_cooling_reported() {
        let mut p = Preset::Lab5Nm3.parameters();
        p.valve_gain_m3h = 0.05;
        let err = solve_steady_state(720.0, 70.0, Preset::Lab5Nm3.ambient(), &p).unwrap_err();
        assert!(matches!(err, Error::InfeasibleCooling { .. }), "{err:?}");
    }

    #[test]
    fn neutral_current_falls_with_ambient() {
        let p = Preset::Mw500Nm3.parameters();
        let mut last = f64::INFINITY;
        for t_amb in [0.0, 10.0, 20.0, 30.0] {
            let amb = Ambient {
                t_amb_c: t_amb,
                t_c_in_c: 30.0,
            };
            let n = thermal_neutral_current(90.0, amb, &p).unwrap();
            assert_eq!(n.bracket, NeutralBracket::Interior);
            assert!(n.current_a < last);
            last = n.current_a;
        }
    }

    #[test]
    fn neutral_bracket_flags() {
        let mut p = Preset::Lab5Nm3.parameters();
        p.sep_resistance_k_per_w = 1e-4;
        let n = thermal_neutral_current(70.0, Preset::Lab5Nm3.ambient(), &p).unwrap();
        assert_eq!(n.bracket, NeutralBracket::NeverSelfHeating);
    }

    #[test]
    fn regions_agree_with_neutral_point() {
        for preset in Preset::ALL {
            let p = preset.parameters();
            let amb = preset.ambient();
            let n = thermal_neutral_current(80.0, amb, &p).unwrap();
            assert_eq!(
                classify_region(0.8 * n.current_a, 80.0, amb, &p).unwrap(),
                Region::LowLoad
            );
            assert_eq!(
                classify_region(n.current_a, 80.0, amb, &p).unwrap(),
                Region::ThermalNeutral
            );
            assert_eq!(
                classify_region(1.2 * n.current_a, 80.0, amb, &p).unwrap(),
                Region::HighLoad
            );
            assert_eq!(Region::HighLoad.valve(), "open");
        }
    }

    #[test]
    fn sweep_matches_single_solves() {
        let p = Preset::Mw500Nm3.parameters();
        let amb = Preset::Mw500Nm3.ambient();
        let rows = steady_state_sweep(&[0.2, 0.4, 1.0], 90.0, amb, &p);
        assert_eq!(rows.len(), 3);
        let last = rows[2].point.as_ref().unwrap();
        let single = solve_steady_state(4000.0, 90.0, amb, &p).unwrap();
        assert_eq!(last.steady, single);
        let at40 = rows[1].point.as_ref().unwrap();
        assert!(last.efficiency < at40.efficiency);
    }
}
