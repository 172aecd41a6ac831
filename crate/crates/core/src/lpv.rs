//! Gain-scheduled linear discrete-time model built around steady states on
//! a grid of stack currents.

use alloc::format;
use alloc::vec::Vec;

use crate::equilibrium::{self, SteadyState};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math;
use crate::params::{Ambient, SystemParameters};
use crate::plant::{self, PlantInputs, PlantState};

/// `n` equally spaced currents covering `[i_min, i_max]`, endpoints exact.
pub fn current_grid(i_min: f64, i_max: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Input("current grid needs at least two points"));
    }
    if !(i_max > i_min) {
        return Err(Error::Input("current grid needs I_max > I_min"));
    }
    let last = (n - 1) as f64;
    Ok((0..n)
        .map(|k| match k {
            0 => i_min,
            _ if k == n - 1 => i_max,
            _ => i_min + (i_max - i_min) * k as f64 / last,
        })
        .collect())
}

/// Zero-based table index for a current, clamped to the grid.
pub fn index_of(current_a: f64, i_min: f64, i_max: f64, n: usize) -> usize {
    if n < 2 || !(i_max > i_min) {
        return 0;
    }
    let c = current_a.clamp(i_min, i_max);
    let s = math::round((c - i_min) / (i_max - i_min) * (n - 1) as f64);
    (s.max(0.0) as usize).min(n - 1)
}

/// Central-difference Jacobian of `f` at `x`, with step `1e-6 max(|x_j|, 1)`
/// unless `steps` supplies one per variable.
pub fn fd_jacobian<F>(f: F, x: &[f64], steps: Option<&[f64]>) -> Result<Matrix>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let f0 = f(x)?;
    let mut jac = Matrix::zeros(f0.len(), x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let h = match steps {
            Some(s) => s[j],
            None => 1e-6 * x[j].abs().max(1.0),
        };
        xp[j] = x[j] + h;
        let fp = f(&xp)?;
        xp[j] = x[j] - h;
        let fm = f(&xp)?;
        xp[j] = x[j];
        if fp.len() != f0.len() || fm.len() != f0.len() {
            return Err(Error::Linalg(crate::linalg::LinalgError::DimensionMismatch));
        }
        for i in 0..f0.len() {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Continuous-time Jacobians `(A, B, E)` of the plant with the delays
/// collapsed, taken with respect to the state, the valve opening and the
/// current.
///
/// Near the edge of the heat-exchange domain the temperature steps shrink
/// so that no evaluation crosses it.
pub fn jacobians(steady: &SteadyState, p: &SystemParameters) -> Result<(Matrix, Matrix, Matrix)> {
    let amb = steady.ambient;
    let f = |z: &[f64]| -> Result<Vec<f64>> {
        let state = PlantState::new(z[0], z[1], z[2]);
        let inputs = PlantInputs {
            current_a: z[4],
            valve_opening: z[3],
            t_c_in_c: amb.t_c_in_c,
            t_amb_c: amb.t_amb_c,
        };
        let r = plant::undelayed_derivatives(&state, z[3], &inputs, p)?;
        Ok(r.to_array().to_vec())
    };
    let s = steady.state;
    let x = [s.t_stack, s.t_sep, s.t_c, steady.opening, steady.current_a];
    let mut steps: Vec<f64> = x.iter().map(|v| 1e-6 * v.abs().max(1.0)).collect();
    let d1 = s.t_stack - s.t_c;
    let d2 = s.t_sep - amb.t_c_in_c;
    if d1 > 0.0 && d2 > 0.0 {
        let room = 0.01 * d1.min(d2);
        for h in steps.iter_mut().take(3) {
            *h = h.min(room);
        }
    }
    let jac = fd_jacobian(f, &x, Some(&steps))?;
    Ok((
        jac.block(0, 0, 3, 3),
        jac.block(0, 3, 3, 1),
        jac.block(0, 4, 3, 1),
    ))
}

/// Zero-order-hold discretization over `tau_s` of `x' = A x + B u + E I`,
/// from one exponential of the block matrix `[[A, B, E], [0, 0, 0]]`.
pub fn discretize(
    a: &Matrix,
    b: &Matrix,
    e: &Matrix,
    tau_s: f64,
) -> Result<(Matrix, Matrix, Matrix)> {
    if !(tau_s > 0.0) {
        return Err(Error::Input("sampling period must be positive"));
    }
    let n = a.rows();
    let (nb, ne) = (b.cols(), e.cols());
    if a.cols() != n || b.rows() != n || e.rows() != n {
        return Err(Error::Linalg(crate::linalg::LinalgError::DimensionMismatch));
    }
    let size = n + nb + ne;
    let mut m = Matrix::zeros(size, size);
    m.set_block(0, 0, &a.scale(tau_s));
    m.set_block(0, n, &b.scale(tau_s));
    m.set_block(0, n + nb, &e.scale(tau_s));
    let em = m.expm().map_err(Error::Linalg)?;
    let ad = em.block(0, 0, n, n);
    let bd = em.block(0, n, n, nb);
    let ed = em.block(0, n + nb, n, ne);
    if !(ad.is_finite() && bd.is_finite() && ed.is_finite()) {
        return Err(Error::Input("discretized model has non-finite entries"));
    }
    Ok((ad, bd, ed))
}

/// Splits `A_d` into the part acting on current states and the part acting
/// on the delayed separator temperature (second column).
pub fn split_delay(ad: &Matrix) -> (Matrix, Matrix) {
    let mut a1 = ad.clone();
    let mut a2 = Matrix::zeros(ad.rows(), ad.cols());
    for i in 0..ad.rows() {
        a2[(i, 1)] = ad[(i, 1)];
        a1[(i, 1)] = 0.0;
    }
    (a1, a2)
}

/// Constant term making the equilibrium a fixed point of the discrete model.
pub fn offset_term(
    ad: &Matrix,
    bd: &Matrix,
    ed: &Matrix,
    x_star: &[f64; 3],
    u_star: f64,
    i_star: f64,
) -> [f64; 3] {
    let ax = ad.mul_vec(x_star);
    let mut e = [0.0; 3];
    for i in 0..3 {
        e[i] = x_star[i] - (ax[i] + bd[(i, 0)] * u_star + ed[(i, 0)] * i_star);
    }
    e
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpvEntry {
    pub index: usize,
    pub current_a: f64,
    pub steady: SteadyState,
    pub ad: Matrix,
    pub ad1: Matrix,
    pub ad2: Matrix,
    pub bd: Matrix,
    pub ed: Matrix,
    pub offset: [f64; 3],
}

impl LpvEntry {
    pub fn x_star(&self) -> [f64; 3] {
        self.steady.state.to_array()
    }

    pub fn u_star(&self) -> f64 {
        self.steady.opening
    }

    /// One step of the scheduled model with separate current and delayed
    /// states.
    pub fn step(
        &self,
        x: &[f64; 3],
        x_delayed: &[f64; 3],
        u_delayed: f64,
        current_a: f64,
    ) -> [f64; 3] {
        let a = self.ad1.mul_vec(x);
        let b = self.ad2.mul_vec(x_delayed);
        core::array::from_fn(|i| {
            a[i] + b[i] + self.bd[(i, 0)] * u_delayed + self.ed[(i, 0)] * current_a + self.offset[i]
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpvTable {
    pub entries: Vec<LpvEntry>,
    pub tau_s: f64,
    pub m1: usize,
    pub m2: usize,
    pub t_set: f64,
    pub ambient: Ambient,
}

impl LpvTable {
    pub fn i_min(&self) -> f64 {
        self.entries.first().map_or(0.0, |e| e.current_a)
    }

    pub fn i_max(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.current_a)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, current_a: f64) -> usize {
        index_of(current_a, self.i_min(), self.i_max(), self.entries.len())
    }

    pub fn entry_for(&self, current_a: f64) -> &LpvEntry {
        &self.entries[self.index_of(current_a)]
    }
}

/// Delay in whole sampling periods, rounded to nearest.
pub fn delay_steps(tau: f64, tau_s: f64) -> usize {
    let ratio = tau / tau_s;
    let m = math::round(ratio).max(0.0);
    if (ratio - m).abs() > 0.25 {
        log::warn!("delay {tau} s is not close to a multiple of the {tau_s} s sampling period");
    }
    m as usize
}

/// Linearizes and discretizes the plant at the steady state of every grid
/// current.
pub fn build_table(
    p: &SystemParameters,
    t_set: f64,
    n_points: usize,
    tau_s: f64,
    ambient: Ambient,
) -> Result<LpvTable> {
    let grid = current_grid(p.i_min_a, p.i_max_a, n_points)?;
    let mut entries = Vec::with_capacity(grid.len());
    for (index, &current_a) in grid.iter().enumerate() {
        let fail = |e: Error| Error::LpvBuild {
            current: current_a,
            reason: format!("{e}"),
        };
        let steady = equilibrium::solve_steady_state(current_a, t_set, ambient, p).map_err(fail)?;
        let (a, b, e) = jacobians(&steady, p).map_err(fail)?;
        if (0..3).any(|i| !(a[(i, i)] < 0.0)) {
            log::warn!("Jacobian at {current_a} A has a non-negative diagonal entry");
        }
        let (ad, bd, ed) = discretize(&a, &b, &e, tau_s).map_err(fail)?;
        let rho = ad.spectral_radius();
        if !(rho < 1.0) {
            log::warn!(
                "discrete model at {current_a} A is not contractive (spectral radius {rho})"
            );
        }
        let (ad1, ad2) = split_delay(&ad);
        let offset = offset_term(
            &ad,
            &bd,
            &ed,
            &steady.state.to_array(),
            steady.opening,
            current_a,
        );
        entries.push(LpvEntry {
            index,
            current_a,
            steady,
            ad,
            ad1,
            ad2,
            bd,
            ed,
            offset,
        });
    }
    Ok(LpvTable {
        entries,
        tau_s,
        m1: delay_steps(p.tau1_s, tau_s),
        m2: delay_steps(p.tau2_s, tau_s),
        t_set,
        ambient,
    })
}

/// Difference between one sampling period of the nonlinear plant and one
/// step of the entry's discrete model, both started from `x*` shifted by
/// `delta` with inputs held at the entry's equilibrium values.
///
/// The nonlinear side runs with the delays collapsed, which is the model
/// the Jacobians linearize; the step uses RK4 at `dt`.
pub fn one_step_error(
    entry: &LpvEntry,
    tau_s: f64,
    p: &SystemParameters,
    delta: [f64; 3],
    dt: f64,
) -> Result<[f64; 3]> {
    let mut q = *p;
    q.tau1_s = 0.0;
    q.tau2_s = 0.0;
    let xs = entry.x_star();
    let x0: [f64; 3] = core::array::from_fn(|i| xs[i] + delta[i]);
    let amb = entry.steady.ambient;
    let inputs = PlantInputs {
        current_a: entry.current_a,
        valve_opening: entry.u_star(),
        t_c_in_c: amb.t_c_in_c,
        t_amb_c: amb.t_amb_c,
    };
    let flow = plant::linear_valve_flow(entry.u_star(), &q);
    let mut rhs = |x: [f64; 3]| -> Result<[f64; 3]> {
        let s = PlantState::from_array(x);
        plant::derivatives(&s, s.t_sep, flow, &inputs, &q).map(|r| r.to_array())
    };
    let steps = math::ceil(tau_s / dt).max(1.0) as usize;
    let h = tau_s / steps as f64;
    let mut x = x0;
    for _ in 0..steps {
        x = crate::sim::rk4(&mut rhs, x, h)?;
    }
    let lin = entry.step(&x0, &x0, entry.u_star(), entry.current_a);
    Ok(core::array::from_fn(|i| x[i] - lin[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Preset;

    #[test]
    fn grid_examples() {
        assert_eq!(current_grid(1.0, 2.0, 2).unwrap(), [1.0, 2.0]);
        let g = current_grid(100.0, 1000.0, 10).unwrap();
        for w in g.windows(2) {
            assert!((w[1] - w[0] - 100.0).abs() < 1e-12);
        }
        assert_eq!(g[9], 1000.0);
        assert!(current_grid(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn index_is_zero_based_and_clamped() {
        assert_eq!(index_of(144.0, 144.0, 720.0, 10), 0);
        assert_eq!(index_of(720.0, 144.0, 720.0, 10), 9);
        assert_eq!(index_of(1e4, 144.0, 720.0, 10), 9);
        assert_eq!(index_of(-5.0, 144.0, 720.0, 10), 0);
        // 64 A per cell of the grid; 144 + 0.6 * 64 rounds up
        assert_eq!(index_of(144.0 + 0.6 * 64.0, 144.0, 720.0, 10), 1);
        assert_eq!(index_of(144.0 + 0.4 * 64.0, 144.0, 720.0, 10), 0);
    }

    #[test]
    fn jacobian_recovers_linear_plant() {
        let m = [[-0.3, 0.1, 0.05], [0.2, -0.4, 0.0], [0.0, 0.7, -1.1]];
        let n = [0.0, 0.0, -2.5];
        let q = [0.01, 0.0, 0.0];
        let f = |z: &[f64]| -> Result<Vec<f64>> {
            Ok((0..3)
                .map(|i| {
                    m[i][0] * z[0] + m[i][1] * z[1] + m[i][2] * z[2] + n[i] * z[3] + q[i] * z[4]
                })
                .collect())
        };
        let jac = fd_jacobian(f, &[60.0, 55.0, 30.0, 0.3, 500.0], None).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((jac[(i, j)] - m[i][j]).abs() < 1e-9);
            }
            assert!((jac[(i, 3)] - n[i]).abs() < 1e-9);
            assert!((jac[(i, 4)] - q[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn lab_jacobian_signs() {
        let p = Preset::Lab5Nm3.parameters();
        let amb = Preset::Lab5Nm3.ambient();
        let ss = equilibrium::solve_steady_state(720.0, 70.0, amb, &p).unwrap();
        let (a, b, e) = jacobians(&ss, &p).unwrap();
        for i in 0..3 {
            assert!(a[(i, i)] < 0.0);
        }
        assert!(b[(2, 0)] < 0.0);
        // dQ_ele/dI from the heat-production formula, differentiated by hand
        let t_mean = plant::average_temperature(ss.state.t_stack, ss.state.t_sep);
        let i_den = 720.0 / p.cell_area_m2;
        let c = &p.ui;
        let g = c.t1 + c.t2 / t_mean + c.t3 / (t_mean * t_mean);
        let u = plant::cell_voltage(i_den, t_mean, &p).unwrap();
        let du_di =
            (c.r1 + c.r2 * t_mean) + c.s * g / ((g * i_den + 1.0) * core::f64::consts::LN_10);
        let du_dcurrent = du_di / p.cell_area_m2;
        let eta = p.current_efficiency;
        let n = p.n_cells as f64;
        let dq = n * ((u - p.u_th_v) * eta + (1.0 - eta) * u) + n * 720.0 * du_dcurrent;
        let expected = dq / p.c_stack_j_per_k;
        assert!(e[(0, 0)] > 0.0);
        assert!(
            (e[(0, 0)] - expected).abs() < 1e-6 * expected,
            "{} vs {}",
            e[(0, 0)],
            expected
        );
    }

    #[test]
    fn discretize_closed_forms() {
        let z = Matrix::zeros(3, 3);
        let b = Matrix::column(&[1.0, 2.0, 3.0]);
        let e = Matrix::column(&[0.5, 0.0, -1.0]);
        let (ad, bd, ed) = discretize(&z, &b, &e, 120.0).unwrap();
        assert!((&ad - &Matrix::identity(3)).max_abs() < 1e-14);
        assert!((&bd - &b.scale(120.0)).max_abs() < 1e-10);
        assert!((&ed - &e.scale(120.0)).max_abs() < 1e-10);

        let a = Matrix::from_rows(&[[-0.01]]);
        let (ad, bd, _) =
            discretize(&a, &Matrix::column(&[1.0]), &Matrix::column(&[0.0]), 120.0).unwrap();
        let want = math::exp(-1.2);
        assert!((ad[(0, 0)] - want).abs() < 1e-14);
        assert!((bd[(0, 0)] - (1.0 - want) / 0.01).abs() < 1e-11);
        assert!(discretize(&a, &Matrix::column(&[1.0]), &Matrix::column(&[0.0]), 0.0).is_err());
    }

    #[test]
    fn split_structure() {
        let ad = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]]);
        let (a1, a2) = split_delay(&ad);
        assert_eq!(&a1 + &a2, ad);
        for i in 0..3 {
            assert_eq!(a1[(i, 1)], 0.0);
            assert_eq!(a2[(i, 0)], 0.0);
            assert_eq!(a2[(i, 2)], 0.0);
        }
        let x = [1.0, -2.0, 0.5];
        let direct = ad.mul_vec(&x);
        let split: Vec<f64> = a1
            .mul_vec(&x)
            .iter()
            .zip(a2.mul_vec(&x))
            .map(|(a, b)| a + b)
            .collect();
        for i in 0..3 {
            assert!((direct[i] - split[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn offset_vanishes_at_origin_and_closes_fixed_point() {
        let ad = Matrix::from_rows(&[[0.9, 0.0, 0.0], [0.0, 0.8, 0.0], [0.0, 0.0, 0.7]]);
        let bd = Matrix::column(&[0.0, 0.0, 1.0]);
        let ed = Matrix::column(&[1.0, 0.0, 0.0]);
        assert_eq!(offset_term(&ad, &bd, &ed, &[0.0; 3], 0.0, 0.0), [0.0; 3]);

        let p = Preset::Lab5Nm3.parameters();
        let table = build_table(&p, 70.0, 10, 120.0, Preset::Lab5Nm3.ambient()).unwrap();
        let entry = table.entry_for(720.0);
        let x = entry.x_star();
        let next = entry.step(&x, &x, entry.u_star(), 720.0);
        for i in 0..3 {
            assert!((next[i] - x[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn lab_table_shape_and_determinism() {
        let p = Preset::Lab5Nm3.parameters();
        let amb = Preset::Lab5Nm3.ambient();
        let t1 = build_table(&p, 70.0, 10, 120.0, amb).unwrap();
        let t2 = build_table(&p, 70.0, 10, 120.0, amb).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(t1.len(), 10);
        assert_eq!((t1.m1, t1.m2), (3, 2));
        for e in &t1.entries {
            if !e.steady.saturated_low {
                assert_eq!(e.steady.state.t_stack, 70.0);
            }
            assert!(e.ad.spectral_radius() < 1.0);
        }
    }

    #[test]
    fn mw_table_is_contractive() {
        let p = Preset::Mw500Nm3.parameters();
        let table = build_table(&p, 90.0, 10, 120.0, Preset::Mw500Nm3.ambient()).unwrap();
        for e in &table.entries {
            assert!(e.ad.spectral_radius() < 1.0, "{}", e.current_a);
        }
    }
}

#[cfg(test)]
mod fidelity {
    use super::*;
    use crate::params::Preset;

    #[test]
    fn one_step_agrees_near_every_grid_point() {
        for preset in Preset::ALL {
            let p = preset.parameters();
            let t_set = if preset == Preset::Lab5Nm3 {
                70.0
            } else {
                90.0
            };
            let table = build_table(&p, t_set, 10, 120.0, preset.ambient()).unwrap();
            for e in &table.entries {
                for d in [
                    [0.5, 0.0, 0.0],
                    [0.0, -0.5, 0.0],
                    [0.0, 0.0, 0.5],
                    [0.29, -0.29, 0.29],
                ] {
                    let err = one_step_error(e, table.tau_s, &p, d, 1.0).unwrap();
                    assert!(
                        err.iter().all(|v| v.abs() < 0.02),
                        "{preset:?} {} {d:?}: {err:?}",
                        e.current_a
                    );
                }
            }
        }
    }
}
