//! Closed-loop runs: plant, controller and load schedule stepped together
//! at their own rates, with the metrics used to compare controllers.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::control::{
    feedforward, pid_i_step, pid_step, select_measurement, FailedSolve, FeedforwardMap, Mpc,
    MpcConfig, PidConfig, PidState,
};
use crate::equilibrium::{solve_steady_state, SteadyState};
use crate::error::{Error, Result};
use crate::lpv::{build_table, LpvTable};
use crate::params::{Ambient, Preset, SystemParameters};
use crate::plant::{self, PlantInputs, PlantState};
use crate::sim::PlantSimulator;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Load {
    /// Fraction of rated current.
    Fraction(f64),
    CurrentA(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadSegment {
    pub start_s: f64,
    pub load: Load,
}

/// Piecewise-constant load. The first segment starts at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSchedule {
    segments: Vec<LoadSegment>,
}

impl LoadSchedule {
    pub fn new(segments: Vec<LoadSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Input("load schedule is empty"));
        }
        if segments[0].start_s != 0.0 {
            return Err(Error::Input("load schedule must start at t = 0"));
        }
        for w in segments.windows(2) {
            if !(w[1].start_s >= w[0].start_s) {
                return Err(Error::Input("load schedule times must be non-decreasing"));
            }
        }
        for s in &segments {
            match s.load {
                Load::Fraction(f) if !(0.0..=1.0).contains(&f) => {
                    return Err(Error::Input("load fractions must lie in [0, 1]"))
                }
                Load::CurrentA(i) if !(i >= 0.0 && i.is_finite()) => {
                    return Err(Error::Input(
                        "load currents must be finite and non-negative",
                    ))
                }
                _ => {}
            }
        }
        Ok(LoadSchedule { segments })
    }

    /// A single step from `from` to `to` at `at_s`.
    pub fn step(from: Load, to: Load, at_s: f64) -> Result<Self> {
        Self::new(vec![
            LoadSegment {
                start_s: 0.0,
                load: from,
            },
            LoadSegment {
                start_s: at_s,
                load: to,
            },
        ])
    }

    pub fn segments(&self) -> &[LoadSegment] {
        &self.segments
    }

    /// Index of the segment in force at `t`.
    pub fn segment_index(&self, t: f64) -> usize {
        self.segments
            .partition_point(|s| s.start_s <= t)
            .saturating_sub(1)
    }

    pub fn current_at(&self, t: f64, p: &SystemParameters) -> f64 {
        current_of(self.segments[self.segment_index(t)].load, p)
    }

    pub fn fraction_at(&self, t: f64, p: &SystemParameters) -> f64 {
        self.current_at(t, p) / p.i_max_a
    }

    /// Mean current over `[t0, t1]`.
    pub fn mean_current(&self, t0: f64, t1: f64, p: &SystemParameters) -> f64 {
        if t1 <= t0 {
            return self.current_at(t0, p);
        }
        let mut acc = 0.0;
        let mut t = t0;
        let mut k = self.segment_index(t0);
        while t < t1 {
            let end = self.segments.get(k + 1).map_or(t1, |s| s.start_s.min(t1));
            acc += current_of(self.segments[k].load, p) * (end - t);
            t = end;
            k += 1;
        }
        acc / (t1 - t0)
    }

    /// Time of the first change of load, if any.
    pub fn first_step_time(&self, p: &SystemParameters) -> Option<f64> {
        let i0 = current_of(self.segments[0].load, p);
        self.segments
            .iter()
            .find(|s| current_of(s.load, p) != i0)
            .map(|s| s.start_s)
    }
}

fn current_of(load: Load, p: &SystemParameters) -> f64 {
    match load {
        Load::Fraction(f) => p.current_for_load(f),
        Load::CurrentA(i) => i,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Pid,
    PidI,
    Mpc,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [
        ControllerKind::Pid,
        ControllerKind::PidI,
        ControllerKind::Mpc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Pid => "pid",
            ControllerKind::PidI => "pid-i",
            ControllerKind::Mpc => "mpc",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Settings for all three controllers; the scenario set point overrides
/// the ones stored here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerSettings {
    pub pid: PidConfig,
    pub feedforward: FeedforwardMap,
    pub mpc: MpcConfig,
    pub lpv_points: usize,
}

impl ControllerSettings {
    pub fn lab() -> Self {
        ControllerSettings {
            pid: PidConfig::lab(),
            feedforward: FeedforwardMap::lab(),
            mpc: MpcConfig::lab(),
            lpv_points: 10,
        }
    }

    /// No gains are published for the large system. The PI part comes from
    /// the SIMC rule (closed-loop time constant equal to the dead time) on
    /// the full-load step response at 90 degC; the feed-forward points are
    /// the equilibrium openings at 100 % and 40 % load.
    pub fn mw() -> Self {
        ControllerSettings {
            pid: PidConfig {
                kp: 0.488,
                ki: 0.488 / 4180.0,
                kd: 0.0,
                t_set_c: 90.0,
                ..PidConfig::lab()
            },
            feedforward: FeedforwardMap {
                i_high_a: 4000.0,
                y_high: 0.587,
                i_low_a: 1600.0,
                y_low: 0.0024,
                clamp_below: true,
            },
            mpc: MpcConfig {
                t_set_c: 90.0,
                ..MpcConfig::lab()
            },
            lpv_points: 10,
        }
    }

    pub fn for_preset(preset: Preset) -> Self {
        match preset {
            Preset::Lab5Nm3 => Self::lab(),
            Preset::Mw500Nm3 => Self::mw(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub params: SystemParameters,
    pub ambient: Ambient,
    pub schedule: LoadSchedule,
    pub controller: ControllerKind,
    pub settings: ControllerSettings,
    pub t_set_c: f64,
    pub duration_s: f64,
    pub dt_s: f64,
    pub log_interval_s: f64,
    /// Start every node at ambient temperature with the valve closed
    /// instead of at the first segment's equilibrium.
    pub cold_start: bool,
}

impl ScenarioConfig {
    /// Load step used to compare controllers on each preset: 68 % to 100 %
    /// after one hour at 70 degC (6 h) on the lab rig, 40 % to 100 % after
    /// three hours at 90 degC (10 h) on the large system.
    pub fn step_scenario(preset: Preset, controller: ControllerKind) -> Self {
        let (from, to, at_s, t_set_c, duration_s) = match preset {
            Preset::Lab5Nm3 => (0.68, 1.0, 3600.0, 70.0, 6.0 * 3600.0),
            Preset::Mw500Nm3 => (0.4, 1.0, 3.0 * 3600.0, 90.0, 10.0 * 3600.0),
        };
        ScenarioConfig {
            params: preset.parameters(),
            ambient: preset.ambient(),
            schedule: LoadSchedule::step(Load::Fraction(from), Load::Fraction(to), at_s)
                .expect("preset schedule is valid"),
            controller,
            settings: ControllerSettings::for_preset(preset),
            t_set_c,
            duration_s,
            dt_s: 1.0,
            log_interval_s: 60.0,
            cold_start: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::Input("duration must be positive"));
        }
        if !(self.dt_s > 0.0 && self.dt_s <= self.duration_s) {
            return Err(Error::Input(
                "plant step must be positive and no longer than the run",
            ));
        }
        if !(self.log_interval_s > 0.0) {
            return Err(Error::Input("log interval must be positive"));
        }
        if !self.t_set_c.is_finite() {
            return Err(Error::Input("set point must be finite"));
        }
        for period in [
            self.settings.pid.tau_s,
            self.settings.mpc.tau_s,
            self.log_interval_s,
        ] {
            if ratio(period, self.dt_s).is_none() {
                return Err(Error::Input(
                    "controller periods and log interval must be multiples of the plant step",
                ));
            }
        }
        self.settings.pid.validate()?;
        self.settings.feedforward.validate()?;
        self.settings.mpc.validate()?;
        if self.settings.lpv_points < 2 {
            return Err(Error::Input("LPV grid needs at least two points"));
        }
        Ok(())
    }

    pub fn with_controller(&self, kind: ControllerKind) -> Self {
        ScenarioConfig {
            controller: kind,
            ..self.clone()
        }
    }

    pub fn with_set_point(&self, t_set_c: f64) -> Self {
        ScenarioConfig {
            t_set_c,
            ..self.clone()
        }
    }

    fn pid_config(&self) -> PidConfig {
        PidConfig {
            t_set_c: self.t_set_c,
            ..self.settings.pid
        }
    }

    fn mpc_config(&self) -> MpcConfig {
        MpcConfig {
            t_set_c: self.t_set_c,
            ..self.settings.mpc
        }
    }

    pub fn steps(&self) -> usize {
        libm::round(self.duration_s / self.dt_s) as usize
    }
}

fn ratio(period: f64, dt: f64) -> Option<usize> {
    let r = libm::round(period / dt);
    if r >= 1.0 && libm::fabs(r * dt - period) <= 1e-9 * period.max(1.0) {
        Some(r as usize)
    } else {
        None
    }
}

/// One logged sample; the field order is the CSV column order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub time_s: f64,
    pub load_frac: f64,
    pub current_a: f64,
    pub t_stack_c: f64,
    pub t_sep_c: f64,
    pub t_c_c: f64,
    pub y_cmd: f64,
    pub v_c_m3h: f64,
    pub q_ele_w: f64,
    pub q_dis_stack_w: f64,
    pub q_dis_sep_w: f64,
    pub u_cell_v: f64,
    pub efficiency_hhv: f64,
}

impl LogRow {
    pub const COLUMNS: [&'static str; 13] = [
        "time_s",
        "load_frac",
        "current_a",
        "t_stack_c",
        "t_sep_c",
        "t_c_c",
        "y_cmd",
        "v_c_m3h",
        "q_ele_w",
        "q_dis_stack_w",
        "q_dis_sep_w",
        "u_cell_v",
        "efficiency_hhv",
    ];

    pub fn values(&self) -> [f64; 13] {
        [
            self.time_s,
            self.load_frac,
            self.current_a,
            self.t_stack_c,
            self.t_sep_c,
            self.t_c_c,
            self.y_cmd,
            self.v_c_m3h,
            self.q_ele_w,
            self.q_dis_stack_w,
            self.q_dis_sep_w,
            self.u_cell_v,
            self.efficiency_hhv,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub overshoot_k: f64,
    pub peak_t_stack_c: f64,
    pub peak_time_s: f64,
    /// Load-step time minus the first rise of the command; positive when the
    /// valve moves before the load does.
    pub lead_time_s: Option<f64>,
    /// Time after the load step until the stack stays within 0.5 K of the
    /// set point.
    pub settling_time_s: Option<f64>,
    /// Mean HHV efficiency over each load segment.
    pub mean_efficiency: Vec<f64>,
    pub min_command: f64,
    pub max_command: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub controller: ControllerKind,
    pub t_set_c: f64,
    pub initial: SteadyState,
    pub rows: Vec<LogRow>,
    pub metrics: Metrics,
    /// MPC periods in which the solver failed and the last command was held.
    pub held_commands: usize,
    /// Time and problem of the first failed MPC solve.
    pub first_failure: Option<(f64, FailedSolve)>,
}

/// Smallest command increase that counts as the valve starting to open.
pub const COMMAND_RISE: f64 = 1e-3;
/// Share of the equilibrium opening change across a load step that counts as
/// the valve answering it; keeps small limit cycles out of the lead time.
pub const RISE_SHARE: f64 = 0.05;
/// Half-width of the settling band, K.
pub const SETTLING_BAND_K: f64 = 0.5;

enum Controller {
    Pid(PidConfig, PidState),
    PidI(PidConfig, FeedforwardMap, PidState),
    Mpc(Mpc, LpvTable),
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    let table = if cfg.controller == ControllerKind::Mpc {
        Some(build_table(
            &cfg.params,
            cfg.t_set_c,
            cfg.settings.lpv_points,
            cfg.settings.mpc.tau_s,
            cfg.ambient,
        )?)
    } else {
        None
    };
    run_scenario_with_table(cfg, table)
}

/// As [`run_scenario`], reusing an LPV table built for the same plant and
/// set point.
pub fn run_scenario_with_table(
    cfg: &ScenarioConfig,
    table: Option<LpvTable>,
) -> Result<ScenarioResult> {
    cfg.validate()?;
    let p = cfg.params;
    let amb = cfg.ambient;
    let i0 = cfg.schedule.current_at(0.0, &p);
    let initial = solve_steady_state(i0, cfg.t_set_c, amb, &p)?;
    let (x0, u0) = if cfg.cold_start {
        (PlantState::uniform(amb.t_amb_c), 0.0)
    } else {
        (initial.state, initial.opening)
    };
    let mut sim = PlantSimulator::new(p, x0, plant::valve_flow(u0, &p)?, 0.0);

    let (mut ctl, period) = match cfg.controller {
        ControllerKind::Pid => {
            let pc = cfg.pid_config();
            let mut st = PidState::new(select_measurement(&x0, pc.measurement), &pc);
            if pc.ki != 0.0 {
                st.integral = u0 / pc.ki;
            }
            (Controller::Pid(pc, st), pc.tau_s)
        }
        ControllerKind::PidI => {
            let pc = cfg.pid_config();
            let ff = cfg.settings.feedforward;
            let mut st = PidState::new(select_measurement(&x0, pc.measurement), &pc);
            if pc.ki != 0.0 {
                st.integral = (u0 - feedforward(i0, &ff)).max(0.0) / pc.ki;
            }
            (Controller::PidI(pc, ff, st), pc.tau_s)
        }
        ControllerKind::Mpc => {
            let mc = cfg.mpc_config();
            let table = match table {
                Some(t) => t,
                None => build_table(&p, cfg.t_set_c, cfg.settings.lpv_points, mc.tau_s, amb)?,
            };
            if libm::fabs(table.t_set - cfg.t_set_c) > 1e-9
                || libm::fabs(table.tau_s - mc.tau_s) > 1e-9
            {
                return Err(Error::Input(
                    "LPV table was built for another set point or period",
                ));
            }
            let mpc = Mpc::new(mc, &table, x0.to_array(), u0)?;
            (Controller::Mpc(mpc, table), mc.tau_s)
        }
    };

    let dt = cfg.dt_s;
    let n = cfg.steps();
    let ctl_every = ratio(period, dt).ok_or(Error::Input(
        "controller period is not a multiple of the plant step",
    ))?;
    let log_every = ratio(cfg.log_interval_s, dt).ok_or(Error::Input(
        "log interval is not a multiple of the plant step",
    ))?;

    let segments = cfg.schedule.segments().len();
    let mut eff_sum = vec![0.0; segments];
    let mut eff_n = vec![0usize; segments];
    let mut rows = Vec::with_capacity(n / log_every + 1);
    let mut command = u0;
    let mut commands: Vec<(f64, f64)> = Vec::new();
    let mut held = 0usize;
    let mut first_failure = None;
    let mut peak = (x0.t_stack, 0.0);
    let mut min_cmd = f64::INFINITY;
    let mut max_cmd = f64::NEG_INFINITY;
    let mut stack_trace: Vec<(f64, f64)> = Vec::with_capacity(n + 1);

    let diag = |t: f64, e: Error| Error::Scenario(format!("t = {t} s: {e}"));

    for k in 0..=n {
        let t = k as f64 * dt;
        let state = sim.state();
        let current = cfg.schedule.current_at(t, &p);
        if k < n && k % ctl_every == 0 {
            command = match &mut ctl {
                Controller::Pid(pc, st) => {
                    pid_step(select_measurement(&state, pc.measurement), pc, st)
                }
                Controller::PidI(pc, ff, st) => pid_i_step(
                    select_measurement(&state, pc.measurement),
                    current,
                    pc,
                    ff,
                    st,
                ),
                Controller::Mpc(mpc, table) => {
                    let np = mpc.config.horizon;
                    let currents: Vec<f64> = (0..np)
                        .map(|i| {
                            cfg.schedule.mean_current(
                                t + i as f64 * period,
                                t + (i + 1) as f64 * period,
                                &p,
                            )
                        })
                        .collect();
                    let out = mpc
                        .step(state.to_array(), &currents, table)
                        .map_err(|e| diag(t, e))?;
                    if out.held {
                        held += 1;
                    }
                    if let (None, Some(f)) = (&first_failure, out.failed) {
                        first_failure = Some((t, f));
                    }
                    out.command
                }
            };
            min_cmd = min_cmd.min(command);
            max_cmd = max_cmd.max(command);
            commands.push((t, command));
        }
        let inputs = PlantInputs {
            current_a: current,
            valve_opening: command,
            t_c_in_c: amb.t_c_in_c,
            t_amb_c: amb.t_amb_c,
        };
        let hb = plant::heat_balance(&state, &inputs, &p).map_err(|e| diag(t, e))?;
        let seg = cfg.schedule.segment_index(t);
        eff_sum[seg] += hb.efficiency;
        eff_n[seg] += 1;
        stack_trace.push((t, state.t_stack));
        if state.t_stack > peak.0 {
            peak = (state.t_stack, t);
        }
        if k % log_every == 0 {
            rows.push(LogRow {
                time_s: t,
                load_frac: current / p.i_max_a,
                current_a: current,
                t_stack_c: state.t_stack,
                t_sep_c: state.t_sep,
                t_c_c: state.t_c,
                y_cmd: command,
                v_c_m3h: plant::valve_flow(command, &p).map_err(|e| diag(t, e))?,
                q_ele_w: hb.q_ele,
                q_dis_stack_w: hb.q_dis_stack,
                q_dis_sep_w: hb.q_dis_sep,
                u_cell_v: hb.u_cell,
                efficiency_hhv: hb.efficiency,
            });
        }
        if k < n {
            sim.step(&inputs, dt).map_err(|e| diag(t, e))?;
        }
    }

    let step_time = cfg.schedule.first_step_time(&p);
    let lead_time_s = step_time.and_then(|ts| {
        let after = cfg.schedule.current_at(ts, &p);
        let threshold = match solve_steady_state(after, cfg.t_set_c, amb, &p) {
            Ok(ss) => (RISE_SHARE * libm::fabs(ss.opening - initial.opening)).max(COMMAND_RISE),
            Err(_) => COMMAND_RISE,
        };
        rise_time(&commands, ts, u0, threshold).map(|tr| ts - tr)
    });
    let settling_time_s = step_time.and_then(|ts| settling_time(&stack_trace, ts, cfg.t_set_c));
    let mean_efficiency = eff_sum
        .iter()
        .zip(&eff_n)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
        .collect();

    Ok(ScenarioResult {
        controller: cfg.controller,
        t_set_c: cfg.t_set_c,
        initial,
        rows,
        metrics: Metrics {
            overshoot_k: (peak.0 - cfg.t_set_c).max(0.0),
            peak_t_stack_c: peak.0,
            peak_time_s: peak.1,
            lead_time_s,
            settling_time_s,
            mean_efficiency,
            min_command: min_cmd,
            max_command: max_cmd,
        },
        held_commands: held,
        first_failure,
    })
}

/// Start of the command rise that answers a load step at `step_time`: the
/// beginning of the raised stretch in force at the step, or the first rise
/// after it.
fn rise_time(
    commands: &[(f64, f64)],
    step_time: f64,
    baseline: f64,
    threshold: f64,
) -> Option<f64> {
    let raised = |c: f64| c > baseline + threshold;
    let at_step = commands.partition_point(|(t, _)| *t <= step_time);
    if at_step > 0 && raised(commands[at_step - 1].1) {
        let mut k = at_step - 1;
        while k > 0 && raised(commands[k - 1].1) {
            k -= 1;
        }
        return Some(commands[k].0);
    }
    commands[at_step..]
        .iter()
        .find(|(_, c)| raised(*c))
        .map(|(t, _)| *t)
}

fn settling_time(trace: &[(f64, f64)], step_time: f64, t_set: f64) -> Option<f64> {
    let last_out = trace
        .iter()
        .rev()
        .find(|(t, v)| *t >= step_time && libm::fabs(v - t_set) > SETTLING_BAND_K);
    match last_out {
        None => Some(0.0),
        Some((t, _)) => {
            let (t_end, _) = *trace.last()?;
            if *t >= t_end {
                None
            } else {
                trace
                    .iter()
                    .find(|(tt, _)| tt > t)
                    .map(|(tt, _)| tt - step_time)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub controller: ControllerKind,
    pub overshoot_k: f64,
    pub peak_t_stack_c: f64,
    pub lead_time_s: Option<f64>,
    pub settling_time_s: Option<f64>,
    pub mean_efficiency: Vec<f64>,
}

/// Runs the same scenario once per controller.
pub fn compare_controllers(
    cfg: &ScenarioConfig,
    kinds: &[ControllerKind],
) -> Result<Vec<(ComparisonRow, ScenarioResult)>> {
    kinds
        .iter()
        .map(|&k| {
            let r = run_scenario(&cfg.with_controller(k))?;
            let m = &r.metrics;
            let row = ComparisonRow {
                controller: k,
                overshoot_k: m.overshoot_k,
                peak_t_stack_c: m.peak_t_stack_c,
                lead_time_s: m.lead_time_s,
                settling_time_s: m.settling_time_s,
                mean_efficiency: m.mean_efficiency.clone(),
            };
            Ok((row, r))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TunedSetPoint {
    pub t_set_c: f64,
    pub peak_t_stack_c: f64,
    pub evaluations: usize,
    pub result: ScenarioResult,
}

/// Highest set point whose run keeps the stack peak at or below `limit_c`,
/// by bisection on the set point down to `tol_k` of the limit.
pub fn tune_set_point(
    cfg: &ScenarioConfig,
    limit_c: f64,
    search_span_k: f64,
    tol_k: f64,
) -> Result<TunedSetPoint> {
    if !(search_span_k > 0.0 && tol_k > 0.0) {
        return Err(Error::Input(
            "tuning needs a positive search span and tolerance",
        ));
    }
    let mut evaluations = 0;
    let mut run = |t_set: f64| -> Result<ScenarioResult> {
        evaluations += 1;
        run_scenario(&cfg.with_set_point(t_set))
    };
    let top = run(limit_c)?;
    if top.metrics.peak_t_stack_c <= limit_c {
        let peak = top.metrics.peak_t_stack_c;
        return Ok(TunedSetPoint {
            t_set_c: limit_c,
            peak_t_stack_c: peak,
            evaluations,
            result: top,
        });
    }
    let mut hi = limit_c;
    let mut lo = limit_c - search_span_k;
    let mut best = run(lo)?;
    if best.metrics.peak_t_stack_c > limit_c {
        return Err(Error::Scenario(format!(
            "no admissible set point in [{lo}, {hi}] degC: peak {} degC at the lower end",
            best.metrics.peak_t_stack_c
        )));
    }
    while limit_c - best.metrics.peak_t_stack_c > tol_k && hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        let r = run(mid)?;
        if r.metrics.peak_t_stack_c <= limit_c {
            lo = mid;
            best = r;
        } else {
            hi = mid;
        }
    }
    Ok(TunedSetPoint {
        t_set_c: lo,
        peak_t_stack_c: best.metrics.peak_t_stack_c,
        evaluations,
        result: best,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyReport {
    /// Segment load fractions.
    pub loads: Vec<f64>,
    /// Efficiency of the candidate minus the baseline per segment, in
    /// percentage points.
    pub gain_pp: Vec<f64>,
}

pub fn efficiency_report(
    baseline: &ScenarioResult,
    candidate: &ScenarioResult,
    schedule: &LoadSchedule,
    p: &SystemParameters,
) -> Result<EfficiencyReport> {
    let a = &baseline.metrics.mean_efficiency;
    let b = &candidate.metrics.mean_efficiency;
    if a.len() != b.len() || a.len() != schedule.segments().len() {
        return Err(Error::Input("runs do not share the load schedule"));
    }
    Ok(EfficiencyReport {
        loads: schedule
            .segments()
            .iter()
            .map(|s| current_of(s.load, p) / p.i_max_a)
            .collect(),
        gain_pp: a.iter().zip(b).map(|(x, y)| 100.0 * (y - x)).collect(),
    })
}

/// First-order-plus-dead-time fit of the stack temperature response to a
/// valve opening step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fopdt {
    /// Static gain, K per unit opening (negative: opening cools).
    pub gain: f64,
    pub time_constant_s: f64,
    pub dead_time_s: f64,
}

/// Open-loop step test from the equilibrium at `current_a` and `t_set_c`:
/// the opening moves by `step` and the two-point (28 % / 63 %) method fits
/// the stack temperature response.
pub fn identify_fopdt(
    p: &SystemParameters,
    ambient: Ambient,
    current_a: f64,
    t_set_c: f64,
    step: f64,
    duration_s: f64,
) -> Result<Fopdt> {
    let ss = solve_steady_state(current_a, t_set_c, ambient, p)?;
    let u1 = ss.opening + step;
    if !(0.0..=1.0).contains(&u1) || step == 0.0 {
        return Err(Error::Input("step test leaves the valve range"));
    }
    let inputs = PlantInputs {
        current_a,
        valve_opening: u1,
        t_c_in_c: ambient.t_c_in_c,
        t_amb_c: ambient.t_amb_c,
    };
    let mut sim = PlantSimulator::new(*p, ss.state, plant::valve_flow(ss.opening, p)?, 0.0);
    let n = libm::ceil(duration_s) as usize;
    let mut trace = Vec::with_capacity(n + 1);
    trace.push(ss.state.t_stack);
    for _ in 0..n {
        trace.push(sim.step(&inputs, 1.0)?.t_stack);
    }
    let y0 = trace[0];
    let dy = trace[n] - y0;
    if libm::fabs(dy) < 1e-9 {
        return Err(Error::Scenario(format!(
            "step test moved the stack by only {dy} K"
        )));
    }
    let crossing = |share: f64| -> Option<f64> {
        let target = share * dy;
        trace
            .iter()
            .position(|&y| (y - y0) / target >= 1.0)
            .map(|k| k as f64)
    };
    let (t28, t63) = match (crossing(0.283), crossing(0.632)) {
        (Some(a), Some(b)) if b > a => (a, b),
        _ => return Err(Error::Scenario("step response too fast to fit".into())),
    };
    let time_constant_s = 1.5 * (t63 - t28);
    Ok(Fopdt {
        gain: dy / step,
        time_constant_s,
        dead_time_s: (t63 - time_constant_s).max(0.0),
    })
}

/// SIMC PI gains for a fitted process and closed-loop time constant `tau_c_s`,
/// in the sign convention of [`pid_step`] (positive error opens the valve).
pub fn simc_pi(model: &Fopdt, tau_c_s: f64) -> (f64, f64) {
    let horizon = tau_c_s + model.dead_time_s;
    let kp = model.time_constant_s / (libm::fabs(model.gain) * horizon);
    let ti = model.time_constant_s.min(4.0 * horizon);
    (kp, kp / ti)
}
