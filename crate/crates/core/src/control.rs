//! Valve controllers: filtered PID with conditional anti-windup, PID with a
//! current feed-forward, and a gain-scheduled MPC over the LPV table.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::lpv::LpvTable;
use crate::plant::PlantState;
use crate::qp::{solve_box_qp, BoxQp, QpOptions, QpStatus};

/// Which temperature the feedback loop sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measurement {
    /// Stack outlet.
    AfterStack,
    /// Separator outlet, i.e. the stack inlet.
    BeforeStack,
}

pub fn select_measurement(state: &PlantState, m: Measurement) -> f64 {
    match m {
        Measurement::AfterStack => state.t_stack,
        Measurement::BeforeStack => state.t_sep,
    }
}

/// First-order low pass. `tf_s = 0` passes the input through.
pub fn low_pass(raw: f64, y: f64, tf_s: f64, tau_s: f64) -> f64 {
    y + (raw - y) * tau_s / (tf_s + tau_s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidConfig {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub tau_s: f64,
    pub tf_s: f64,
    pub t_set_c: f64,
    pub measurement: Measurement,
    pub out_min: f64,
    pub out_max: f64,
}

impl PidConfig {
    /// Gains tuned on the laboratory rig.
    pub fn lab() -> Self {
        PidConfig {
            kp: 20.0,
            ki: 0.011,
            kd: 6000.0,
            tau_s: 1.0,
            tf_s: 60.0,
            t_set_c: 70.0,
            measurement: Measurement::AfterStack,
            out_min: 0.0,
            out_max: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.kp, self.ki, self.kd, self.tf_s, self.t_set_c]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::Parameter("PID gains must be finite"));
        }
        if !(self.tau_s > 0.0) || self.tf_s < 0.0 {
            return Err(Error::Parameter(
                "PID needs a positive period and non-negative filter constant",
            ));
        }
        if !(0.0 <= self.out_min && self.out_min < self.out_max && self.out_max <= 1.0) {
            return Err(Error::Parameter(
                "PID output limits must satisfy 0 <= min < max <= 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidState {
    pub filtered: f64,
    pub integral: f64,
    pub prev_err: f64,
}

impl PidState {
    /// Starts the filter at the current reading so there is no derivative kick.
    pub fn new(initial_measurement: f64, cfg: &PidConfig) -> Self {
        PidState {
            filtered: initial_measurement,
            integral: 0.0,
            prev_err: initial_measurement - cfg.t_set_c,
        }
    }
}

fn pid_with_offset(t_meas: f64, offset: f64, cfg: &PidConfig, st: &mut PidState) -> f64 {
    st.filtered = low_pass(t_meas, st.filtered, cfg.tf_s, cfg.tau_s);
    let err = st.filtered - cfg.t_set_c;
    let deriv = (err - st.prev_err) / cfg.tau_s;
    let candidate = cfg.kp * err + cfg.ki * st.integral + cfg.kd * deriv + offset;
    st.prev_err = err;
    if candidate > cfg.out_min && candidate < cfg.out_max {
        st.integral += err * cfg.tau_s;
    }
    if candidate.is_nan() {
        return cfg.out_min;
    }
    candidate.clamp(cfg.out_min, cfg.out_max)
}

pub fn pid_step(t_meas: f64, cfg: &PidConfig, st: &mut PidState) -> f64 {
    pid_with_offset(t_meas, 0.0, cfg, st)
}

/// Straight line through two steady-state openings, used as a load
/// feed-forward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedforwardMap {
    pub i_high_a: f64,
    pub y_high: f64,
    pub i_low_a: f64,
    pub y_low: f64,
    /// Hold `y_low` below `i_low_a` instead of extrapolating.
    pub clamp_below: bool,
}

impl FeedforwardMap {
    pub fn lab() -> Self {
        FeedforwardMap {
            i_high_a: 720.0,
            y_high: 0.11,
            i_low_a: 520.0,
            y_low: 0.0,
            clamp_below: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.i_high_a.is_finite() && self.i_low_a.is_finite()) || self.i_high_a == self.i_low_a
        {
            return Err(Error::Parameter(
                "feed-forward currents must be finite and distinct",
            ));
        }
        if !(0.0..=1.0).contains(&self.y_high) || !(0.0..=1.0).contains(&self.y_low) {
            return Err(Error::Parameter("feed-forward openings must lie in [0, 1]"));
        }
        Ok(())
    }
}

pub fn feedforward(current_a: f64, map: &FeedforwardMap) -> f64 {
    if map.clamp_below && current_a < map.i_low_a {
        return map.y_low.clamp(0.0, 1.0);
    }
    let slope = (map.y_high - map.y_low) / (map.i_high_a - map.i_low_a);
    let y = map.y_low + slope * (current_a - map.i_low_a);
    if y.is_nan() {
        return 0.0;
    }
    y.clamp(0.0, 1.0)
}

/// PID plus feed-forward; saturation for the anti-windup rule is judged on
/// the combined signal.
pub fn pid_i_step(
    t_meas: f64,
    current_a: f64,
    cfg: &PidConfig,
    map: &FeedforwardMap,
    st: &mut PidState,
) -> f64 {
    pid_with_offset(t_meas, feedforward(current_a, map), cfg, st)
}

/// Stacked prediction `X = Phi x' + Theta1 u' + Theta2 U + Omega I + Gamma e`
/// over `x_{k+1} .. x_{k+Np}`, three rows per step.
///
/// `x'` is `[x_k, x_{k-1}, .., x_{k-m1}]` flattened, `u'` is
/// `[u_{k-1}, .., u_{k-m2}]`, `U = [u_k, .., u_{k+Np-1}]`,
/// `I = [I_k, .., I_{k+Np-1}]` and `e` the stacked offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub phi: Matrix,
    pub theta1: Matrix,
    pub theta2: Matrix,
    pub omega: Matrix,
    pub gamma: Matrix,
    /// Offsets of the scheduled entries, stacked like `X`.
    pub offsets: Vec<f64>,
}

impl Prediction {
    pub fn horizon(&self) -> usize {
        self.theta2.cols()
    }

    /// Everything except the `Theta2 U` term.
    pub fn free_response(&self, x_hist: &[f64], u_hist: &[f64], currents: &[f64]) -> Vec<f64> {
        let mut out = self.phi.mul_vec(x_hist);
        for v in [
            self.theta1.mul_vec(u_hist),
            self.omega.mul_vec(currents),
            self.gamma.mul_vec(&self.offsets),
        ] {
            for (o, a) in out.iter_mut().zip(v) {
                *o += a;
            }
        }
        out
    }

    pub fn predict(
        &self,
        x_hist: &[f64],
        u_hist: &[f64],
        inputs: &[f64],
        currents: &[f64],
    ) -> Vec<f64> {
        let mut out = self.free_response(x_hist, u_hist, currents);
        for (o, a) in out.iter_mut().zip(self.theta2.mul_vec(inputs)) {
            *o += a;
        }
        out
    }
}

/// Condenses the scheduled delay model over the horizon. `currents` sets
/// both the horizon length and the table entry used at each step.
pub fn build_prediction_matrices(table: &LpvTable, currents: &[f64]) -> Result<Prediction> {
    let np = currents.len();
    if np == 0 || table.is_empty() {
        return Err(Error::Input(
            "prediction needs a non-empty horizon and table",
        ));
    }
    let (m1, m2) = (table.m1, table.m2);
    let nx = 3 * (m1 + 1);
    let c_u = nx + m2;
    let c_i = c_u + np;
    let c_e = c_i + np;
    let ncols = c_e + 3 * np;

    let select = |col0: usize| {
        let mut s = Matrix::zeros(3, ncols);
        for r in 0..3 {
            s[(r, col0 + r)] = 1.0;
        }
        s
    };
    // states x_{k-m1} .. x_{k+Np}; x_{k-t} sits in x' block t
    let mut states: Vec<Matrix> = (0..=m1).rev().map(|t| select(3 * t)).collect();
    let mut offsets = Vec::with_capacity(3 * np);
    for (i, &cur) in currents.iter().enumerate() {
        let entry = table.entry_for(cur);
        if entry.ad1.rows() != 3 || entry.bd.rows() != 3 || entry.ed.rows() != 3 {
            return Err(Error::Input("table entry has the wrong shape"));
        }
        let now = &states[m1 + i];
        let lagged = &states[i];
        let mut next = &(&entry.ad1 * now) + &(&entry.ad2 * lagged);
        let u_col = if i >= m2 {
            c_u + i - m2
        } else {
            nx + (m2 - i - 1)
        };
        for r in 0..3 {
            next[(r, u_col)] += entry.bd[(r, 0)];
            next[(r, c_i + i)] += entry.ed[(r, 0)];
            next[(r, c_e + 3 * i + r)] += 1.0;
        }
        offsets.extend_from_slice(&entry.offset);
        states.push(next);
    }

    let mut stacked = Matrix::zeros(3 * np, ncols);
    for i in 0..np {
        stacked.set_block(3 * i, 0, &states[m1 + 1 + i]);
    }
    Ok(Prediction {
        phi: stacked.block(0, 0, 3 * np, nx),
        theta1: stacked.block(0, nx, 3 * np, m2),
        theta2: stacked.block(0, c_u, 3 * np, np),
        omega: stacked.block(0, c_i, 3 * np, np),
        gamma: stacked.block(0, c_e, 3 * np, 3 * np),
        offsets,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcConfig {
    pub horizon: usize,
    pub tau_s: f64,
    pub q: f64,
    pub r: f64,
    pub t_set_c: f64,
}

impl MpcConfig {
    pub fn lab() -> Self {
        MpcConfig {
            horizon: 30,
            tau_s: 120.0,
            q: 1.0,
            r: 300.0,
            t_set_c: 70.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Parameter("MPC horizon must be at least one step"));
        }
        if !(self.tau_s > 0.0) {
            return Err(Error::Parameter("MPC period must be positive"));
        }
        if !(self.q >= 0.0 && self.r >= 0.0 && self.q.is_finite() && self.r.is_finite()) {
            return Err(Error::Parameter(
                "MPC weights must be finite and non-negative",
            ));
        }
        if !self.t_set_c.is_finite() {
            return Err(Error::Parameter("MPC set point must be finite"));
        }
        Ok(())
    }
}

/// The condensed problem of one control period.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcProblem {
    pub prediction: Prediction,
    pub qp: BoxQp,
}

/// Builds `H = 2(Theta2' Q Theta2 + r M'M)` and
/// `f = 2((free - X_set)' Q Theta2 - r N' M)` with `Q` weighting only the
/// stack rows and `M U - N` the input increments.
pub fn mpc_problem(
    x_hist: &[f64],
    u_hist: &[f64],
    u_prev: f64,
    currents: &[f64],
    cfg: &MpcConfig,
    table: &LpvTable,
) -> Result<MpcProblem> {
    cfg.validate()?;
    let np = cfg.horizon;
    if currents.len() != np {
        return Err(Error::Input("current sequence must cover the horizon"));
    }
    if x_hist.len() != 3 * (table.m1 + 1) || u_hist.len() != table.m2 {
        return Err(Error::Input(
            "history buffers do not match the table delays",
        ));
    }
    let pred = build_prediction_matrices(table, currents)?;
    let free = pred.free_response(x_hist, u_hist, currents);
    let th = &pred.theta2;

    let mut h = Matrix::zeros(np, np);
    let mut f = vec![0.0; np];
    for i in 0..np {
        let row = 3 * i;
        let dev = free[row] - cfg.t_set_c;
        for a in 0..np {
            let ta = th[(row, a)];
            if ta == 0.0 {
                continue;
            }
            f[a] += 2.0 * cfg.q * dev * ta;
            for b in 0..np {
                h[(a, b)] += 2.0 * cfg.q * ta * th[(row, b)];
            }
        }
    }
    // M'M is the path-graph Laplacian plus one on the first diagonal entry
    for a in 0..np {
        h[(a, a)] += 2.0 * cfg.r * if a + 1 < np { 2.0 } else { 1.0 };
        if a + 1 < np {
            h[(a, a + 1)] -= 2.0 * cfg.r;
            h[(a + 1, a)] -= 2.0 * cfg.r;
        }
    }
    f[0] -= 2.0 * cfg.r * u_prev;
    // exact symmetry for the solver's check
    for a in 0..np {
        for b in 0..a {
            let v = 0.5 * (h[(a, b)] + h[(b, a)]);
            h[(a, b)] = v;
            h[(b, a)] = v;
        }
    }
    let qp = BoxQp::new(h, f, vec![0.0; np], vec![1.0; np])?;
    Ok(MpcProblem {
        prediction: pred,
        qp,
    })
}

/// Positive semidefinite up to round-off, tested by factorizing with a
/// small shift.
pub fn is_psd(h: &Matrix) -> bool {
    let n = h.rows();
    let mut shifted = h.clone();
    let eps = 1e-10 * h.max_abs().max(1.0);
    for i in 0..n {
        shifted[(i, i)] += eps;
    }
    h.asymmetry() <= 1e-12 * h.max_abs().max(1.0) && shifted.cholesky().is_ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcOutput {
    pub command: f64,
    pub sequence: Vec<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    /// The solve failed and the previous command was held.
    pub held: bool,
    /// The problem that failed, kept for offline inspection.
    pub failed: Option<FailedSolve>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailedSolve {
    pub qp: BoxQp,
    /// Last iterate, when the solver returned one.
    pub x: Option<Vec<f64>>,
    pub kkt_residual: Option<f64>,
}

/// Receding-horizon controller with its own state and input histories.
#[derive(Debug, Clone)]
pub struct Mpc {
    pub config: MpcConfig,
    x_hist: VecDeque<[f64; 3]>,
    u_hist: VecDeque<f64>,
    last: f64,
}

const ACCEPTABLE_KKT: f64 = 1e-6;

impl Mpc {
    /// Both buffers start filled with the initial equilibrium.
    pub fn new(config: MpcConfig, table: &LpvTable, x0: [f64; 3], u0: f64) -> Result<Self> {
        config.validate()?;
        if table.is_empty() {
            return Err(Error::Input("MPC needs a non-empty table"));
        }
        let x_hist = core::iter::repeat_n(x0, table.m1).collect();
        let u_hist = core::iter::repeat_n(u0, table.m2).collect();
        Ok(Mpc {
            config,
            x_hist,
            u_hist,
            last: u0.clamp(0.0, 1.0),
        })
    }

    pub fn last_command(&self) -> f64 {
        self.last
    }

    /// `x_hist` flattened newest first, with `x` in front.
    fn flat_history(&self, x: [f64; 3]) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * (self.x_hist.len() + 1));
        v.extend_from_slice(&x);
        for s in &self.x_hist {
            v.extend_from_slice(s);
        }
        v
    }

    /// One control period: measured state `x`, future currents over the
    /// horizon. The histories advance whether or not the solve succeeds.
    pub fn step(&mut self, x: [f64; 3], currents: &[f64], table: &LpvTable) -> Result<MpcOutput> {
        if table.m1 != self.x_hist.len() || table.m2 != self.u_hist.len() {
            return Err(Error::Input("table delays changed under the controller"));
        }
        let xh = self.flat_history(x);
        let uh: Vec<f64> = self.u_hist.iter().copied().collect();
        let problem = mpc_problem(&xh, &uh, self.last, currents, &self.config, table)?;
        assert!(
            is_psd(&problem.qp.h),
            "MPC Hessian lost positive semidefiniteness"
        );
        let out = match solve_box_qp(&problem.qp, &QpOptions::default()) {
            Ok(sol)
                if sol.status == QpStatus::Optimal
                    || (sol.status == QpStatus::MaxIter && sol.kkt_residual < ACCEPTABLE_KKT) =>
            {
                MpcOutput {
                    command: sol.x[0].clamp(0.0, 1.0),
                    sequence: sol.x,
                    status: sol.status,
                    iterations: sol.iterations,
                    held: false,
                    failed: None,
                }
            }
            Ok(sol) => {
                log::warn!(
                    "MPC solve ended with {:?}; holding {}",
                    sol.status,
                    self.last
                );
                let failed = FailedSolve {
                    qp: problem.qp,
                    kkt_residual: Some(sol.kkt_residual),
                    x: Some(sol.x),
                };
                self.hold(sol.status, sol.iterations, failed)
            }
            Err(e) => {
                log::warn!("MPC solve failed ({e}); holding {}", self.last);
                let failed = FailedSolve {
                    qp: problem.qp,
                    x: None,
                    kkt_residual: None,
                };
                self.hold(QpStatus::Degenerate, 0, failed)
            }
        };

        if !self.x_hist.is_empty() {
            self.x_hist.pop_back();
            self.x_hist.push_front(x);
        }
        if !self.u_hist.is_empty() {
            self.u_hist.pop_back();
            self.u_hist.push_front(out.command);
        }
        self.last = out.command;
        Ok(out)
    }

    fn hold(&self, status: QpStatus, iterations: usize, failed: FailedSolve) -> MpcOutput {
        MpcOutput {
            command: self.last,
            sequence: vec![self.last; self.config.horizon],
            status,
            iterations,
            held: true,
            failed: Some(failed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpv::build_table;
    use crate::params::{Preset, SystemParameters};

    fn lab_table() -> LpvTable {
        let p = SystemParameters::lab_5nm3();
        build_table(&p, 70.0, 10, 120.0, Preset::Lab5Nm3.ambient()).unwrap()
    }

    #[test]
    fn low_pass_examples() {
        assert_eq!(low_pass(3.0, 3.0, 60.0, 1.0), 3.0);
        assert_eq!(low_pass(5.0, 1.0, 0.0, 1.0), 5.0);
        let mut y = 0.0;
        for _ in 0..60 {
            y = low_pass(1.0, y, 60.0, 1.0);
        }
        let oracle = 1.0 - (60.0f64 / 61.0).powi(60);
        assert!((y - oracle).abs() < 1e-12);
        assert!((y - 0.628).abs() < 2e-3);
    }

    #[test]
    fn pid_examples() {
        let cfg = PidConfig::lab();
        let mut st = PidState::new(70.0, &cfg);
        assert_eq!(pid_step(70.0, &cfg, &mut st), 0.0);
        assert_eq!(st.integral, 0.0);

        let cfg = PidConfig {
            kd: 0.0,
            tf_s: 0.0,
            t_set_c: 0.0,
            ..PidConfig::lab()
        };
        let mut st = PidState::new(0.05, &cfg);
        for _ in 0..100 {
            assert_eq!(pid_step(0.05, &cfg, &mut st), 1.0);
        }
        assert_eq!(st.integral, 0.0);

        let cfg = PidConfig::lab();
        let mut st = PidState {
            filtered: 60.0,
            integral: 0.0,
            prev_err: 0.0,
        };
        assert_eq!(pid_step(60.0, &cfg, &mut st), 0.0);
    }

    #[test]
    fn integral_accumulates_only_when_unsaturated() {
        let cfg = PidConfig {
            kd: 0.0,
            tf_s: 0.0,
            ..PidConfig::lab()
        };
        let mut st = PidState::new(70.01, &cfg);
        let y = pid_step(70.01, &cfg, &mut st);
        assert!((y - 0.2).abs() < 1e-9);
        assert!((st.integral - 0.01).abs() < 1e-12);
    }

    #[test]
    fn desaturates_within_one_period() {
        let cfg = PidConfig {
            kd: 0.0,
            tf_s: 0.0,
            ..PidConfig::lab()
        };
        let mut st = PidState::new(75.0, &cfg);
        for _ in 0..50 {
            pid_step(75.0, &cfg, &mut st);
        }
        let frozen = st.integral;
        assert_eq!(frozen, 0.0);
        let y = pid_step(69.99, &cfg, &mut st);
        assert!(y < 1.0);
    }

    #[test]
    fn feedforward_examples() {
        let m = FeedforwardMap::lab();
        assert_eq!(feedforward(520.0, &m), 0.0);
        assert!((feedforward(720.0, &m) - 0.11).abs() < 1e-15);
        assert!((feedforward(620.0, &m) - 0.055).abs() < 1e-15);
        assert_eq!(feedforward(300.0, &m), 0.0);
        assert_eq!(feedforward(1e6, &m), 1.0);
    }

    #[test]
    fn pid_i_examples() {
        let cfg = PidConfig::lab();
        let m = FeedforwardMap::lab();
        let mut st = PidState::new(70.0, &cfg);
        assert!((pid_i_step(70.0, 720.0, &cfg, &m, &mut st) - 0.11).abs() < 1e-12);
        let mut st = PidState::new(70.0, &cfg);
        assert_eq!(pid_i_step(70.0, 520.0, &cfg, &m, &mut st), 0.0);
        // the load step moves the command without any error
        let mut st = PidState::new(70.0, &cfg);
        let before = pid_i_step(70.0, 520.0, &cfg, &m, &mut st);
        let after = pid_i_step(70.0, 720.0, &cfg, &m, &mut st);
        assert!(after > before + 0.1);
    }

    #[test]
    fn measurement_selection() {
        let s = PlantState::new(71.0, 65.0, 40.0);
        assert_eq!(select_measurement(&s, Measurement::AfterStack), 71.0);
        assert_eq!(select_measurement(&s, Measurement::BeforeStack), 65.0);
    }

    fn iterate_model(
        table: &LpvTable,
        x_hist: &[[f64; 3]],
        u_hist: &[f64],
        inputs: &[f64],
        currents: &[f64],
    ) -> Vec<f64> {
        // x_hist newest first, u_hist newest first
        let m1 = table.m1;
        let mut xs: Vec<[f64; 3]> = x_hist.iter().rev().copied().collect();
        let mut us: Vec<f64> = u_hist.iter().rev().copied().collect();
        us.extend_from_slice(inputs);
        let mut out = Vec::new();
        for i in 0..currents.len() {
            let e = table.entry_for(currents[i]);
            let now = xs[m1 + i];
            let lag = xs[i];
            // us[i] is u_{k+i-m2}
            let next = e.step(&now, &lag, us[i], currents[i]);
            out.extend_from_slice(&next);
            xs.push(next);
        }
        out
    }

    #[test]
    fn condensed_prediction_matches_iteration() {
        let table = lab_table();
        let (m1, m2) = (table.m1, table.m2);
        let np = 12;
        let x_hist: Vec<[f64; 3]> = (0..=m1)
            .map(|t| [70.0 - 0.3 * t as f64, 63.0 + 0.1 * t as f64, 40.0])
            .collect();
        let u_hist: Vec<f64> = (0..m2).map(|t| 0.1 + 0.02 * t as f64).collect();
        let inputs: Vec<f64> = (0..np).map(|i| 0.05 + 0.01 * i as f64).collect();
        for currents in [
            vec![650.0; np],
            (0..np).map(|i| 300.0 + 40.0 * i as f64).collect::<Vec<_>>(),
        ] {
            let pred = build_prediction_matrices(&table, &currents).unwrap();
            let xh: Vec<f64> = x_hist.iter().flat_map(|x| x.iter().copied()).collect();
            let got = pred.predict(&xh, &u_hist, &inputs, &currents);
            let want = iterate_model(&table, &x_hist, &u_hist, &inputs, &currents);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12 * w.abs().max(1.0), "{g} vs {w}");
            }
            assert_eq!(pred.theta2.rows(), 3 * np);
            assert_eq!(pred.theta2.cols(), np);
        }
    }

    #[test]
    fn zero_everything_predicts_zero() {
        let mut table = lab_table();
        for e in &mut table.entries {
            e.offset = [0.0; 3];
        }
        let np = 5;
        let pred = build_prediction_matrices(&table, &[0.0; 5]).unwrap();
        let xh = vec![0.0; 3 * (table.m1 + 1)];
        let x = pred.predict(&xh, &vec![0.0; table.m2], &[0.0; 5], &[0.0; 5]);
        assert_eq!(x, vec![0.0; 3 * np]);
    }

    #[test]
    fn single_step_is_the_model() {
        let table = lab_table();
        let e = table.entry_for(700.0);
        let xs: Vec<[f64; 3]> = (0..=table.m1)
            .map(|t| [69.0 + t as f64, 62.0 - t as f64, 41.0])
            .collect();
        let uh: Vec<f64> = (0..table.m2).map(|t| 0.2 - 0.05 * t as f64).collect();
        let pred = build_prediction_matrices(&table, &[700.0]).unwrap();
        let xh: Vec<f64> = xs.iter().flat_map(|x| x.iter().copied()).collect();
        let got = pred.predict(&xh, &uh, &[0.3], &[700.0]);
        let want = e.step(&xs[0], &xs[table.m1], uh[table.m2 - 1], 700.0);
        for r in 0..3 {
            assert!((got[r] - want[r]).abs() < 1e-12);
        }
    }

    #[test]
    fn mpc_is_stationary_at_equilibrium() {
        let table = lab_table();
        let cfg = MpcConfig::lab();
        for idx in [9, 8] {
            let e = &table.entries[idx];
            let mut mpc = Mpc::new(cfg, &table, e.x_star(), e.u_star()).unwrap();
            let out = mpc
                .step(e.x_star(), &vec![e.current_a; cfg.horizon], &table)
                .unwrap();
            for u in &out.sequence {
                assert!((u - e.u_star()).abs() < 1e-6, "{u} vs {}", e.u_star());
            }
        }
    }

    #[test]
    fn anticipates_a_future_load_step() {
        let table = lab_table();
        let cfg = MpcConfig::lab();
        let low = &table.entries[6];
        assert!(low.u_star() > 0.0);
        let x0 = low.x_star();
        let mut flat = Mpc::new(cfg, &table, x0, low.u_star()).unwrap();
        let mut ahead = flat.clone();
        let steady = flat
            .step(x0, &vec![low.current_a; cfg.horizon], &table)
            .unwrap();
        let mut currents = vec![low.current_a; cfg.horizon];
        for c in currents.iter_mut().skip(5) {
            *c = 720.0;
        }
        let early = ahead.step(x0, &currents, &table).unwrap();
        assert!(
            early.command > steady.command + 1e-3,
            "{} vs {}",
            early.command,
            steady.command
        );
    }

    #[test]
    fn huge_move_penalty_holds_the_command() {
        let table = lab_table();
        let cfg = MpcConfig {
            r: 1e9,
            ..MpcConfig::lab()
        };
        let e = &table.entries[9];
        let mut mpc = Mpc::new(cfg, &table, e.x_star(), e.u_star()).unwrap();
        let x = [e.x_star()[0] + 2.0, e.x_star()[1], e.x_star()[2]];
        let out = mpc
            .step(x, &vec![e.current_a; cfg.horizon], &table)
            .unwrap();
        assert!((out.command - e.u_star()).abs() < 1e-4);
    }

    #[test]
    fn hessian_is_psd_for_any_weights() {
        let table = lab_table();
        let e = &table.entries[7];
        let xh: Vec<f64> = (0..=table.m1).flat_map(|_| e.x_star()).collect();
        let uh = vec![e.u_star(); table.m2];
        for (q, r) in [
            (0.0, 0.0),
            (1.0, 0.0),
            (0.0, 5.0),
            (1.0, 300.0),
            (1e3, 1e-3),
        ] {
            let cfg = MpcConfig {
                q,
                r,
                ..MpcConfig::lab()
            };
            let p = mpc_problem(
                &xh,
                &uh,
                e.u_star(),
                &vec![e.current_a; cfg.horizon],
                &cfg,
                &table,
            )
            .unwrap();
            assert!(is_psd(&p.qp.h));
        }
    }
}
