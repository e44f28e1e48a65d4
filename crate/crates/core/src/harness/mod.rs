//! Voltage-sag scenarios, full-versus-reduced comparison runs, accuracy
//! assessment and export.

pub mod cli;
mod config;
mod export;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dera::{self, DeraInputs, DeraParams, DeraReducedState};
use crate::error::{Error, Result};
use crate::motor::{self, MotorFullState, MotorInputs, MotorParams, MotorReducedState, MotorState};
use crate::numerics::{InputSignal, VpMemory};
use crate::odesolve::{integrate, Method, OdeProblem, SolverConfig, SolverStats, Trajectory};
use crate::spt::{self, AccuracyBounds, ReductionDecision, TwoTimeScaleSystem, Verdict};

pub use config::{apply_overrides, load_config_file};
pub use export::{export_report, export_trajectory, format_value, read_csv, write_trajectory_csv, ExportFormat};

/// Decay rate of the motor fast subsystem used in the `ε**` bound.
pub const MOTOR_DECAY_RATE: f64 = 9.78;
/// Decay rate of the DER fast subsystem used in the `ε**` bound.
pub const DERA_DECAY_RATE: f64 = 0.698;
/// Default settle time required of the fast error.
pub const T_REQUIRED: f64 = 0.012;
/// Ratio separating slow from fast time constants.
pub const PARTITION_RATIO: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SagParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for SagParams {
    fn default() -> Self {
        Self {
            a: 0.8,
            b: 5.0,
            c: 1.0,
            d: 0.9,
        }
    }
}

impl SagParams {
    pub const START: f64 = 1.0;

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.a)
            && self.b > 0.0
            && self.c > self.b / 60.0
            && (0.0..=1.0).contains(&self.d);
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "sag needs 0 <= a <= 1, b > 0, c > b/60, 0 <= d <= 1 (got {self:?})"
            )));
        }
        Ok(())
    }

    /// End of the flat sag, start and end of the recovery ramp.
    pub fn breakpoints(&self) -> [f64; 3] {
        [Self::START, Self::START + self.b / 60.0, Self::START + self.c]
    }

    /// Largest rate of change of the voltage between breakpoints.
    pub fn max_rate(&self) -> f64 {
        (1.0 - self.d) / (self.c - self.b / 60.0)
    }
}

/// Bus voltage of the sag benchmark.
pub fn sag_voltage(t: f64, sp: &SagParams) -> f64 {
    let [t1, t2, t3] = sp.breakpoints();
    if (t1..t2).contains(&t) {
        sp.a
    } else if (t2..t3).contains(&t) {
        (1.0 - sp.d) * (sp.c + 1.0 - t) / (sp.b / 60.0 - sp.c) + 1.0
    } else {
        1.0
    }
}

fn sag_rate(t: f64, sp: &SagParams) -> f64 {
    let [_, t2, t3] = sp.breakpoints();
    if (t2..t3).contains(&t) {
        -(1.0 - sp.d) / (sp.b / 60.0 - sp.c)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    MotorA,
    MotorB,
    MotorC,
    Dera,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::MotorA, ModelKind::MotorB, ModelKind::MotorC, ModelKind::Dera];

    pub fn motor_kind(self) -> Option<motor::MotorKind> {
        match self {
            ModelKind::MotorA => Some(motor::MotorKind::A),
            ModelKind::MotorB => Some(motor::MotorKind::B),
            ModelKind::MotorC => Some(motor::MotorKind::C),
            ModelKind::Dera => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::MotorA => "motor-a",
            ModelKind::MotorB => "motor-b",
            ModelKind::MotorC => "motor-c",
            ModelKind::Dera => "dera",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown model '{s}' (expected motor-a, motor-b, motor-c or dera)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    Reduced,
    Both,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::Reduced => "reduced",
            Variant::Both => "both",
        })
    }
}

/// Solver settings shared by both variants of a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub method: Method,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            method: Method::NonStiff,
            rel_tol: 1e-6,
            abs_tol: 1e-9,
        }
    }
}

impl SolverSettings {
    pub fn config(&self) -> SolverConfig {
        SolverConfig::new(self.method).with_tolerances(self.rel_tol, self.abs_tol)
    }
}

/// Operating point the models are initialized at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSettings {
    /// Motor slip at the pre-event equilibrium.
    pub motor_slip: f64,
    pub dera_p0: f64,
    pub dera_q0: f64,
    pub dera_freq_hz: f64,
}

impl Default for InitSettings {
    fn default() -> Self {
        Self {
            motor_slip: 0.02,
            dera_p0: 0.5,
            dera_q0: 0.0,
            dera_freq_hz: dera::NOMINAL_HZ,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelKind,
    pub variant: Variant,
    pub solver: SolverSettings,
    pub t_end: f64,
    pub grid: f64,
    pub sag: SagParams,
    pub init: InitSettings,
    pub t_required: f64,
    pub motor: MotorParams,
    pub dera: DeraParams,
}

impl ScenarioConfig {
    pub fn new(model: ModelKind) -> Self {
        Self {
            model,
            variant: Variant::Both,
            solver: SolverSettings::default(),
            t_end: 5.0,
            grid: 1e-3,
            sag: SagParams::default(),
            init: InitSettings::default(),
            t_required: T_REQUIRED,
            motor: MotorParams::for_kind(model.motor_kind().unwrap_or(motor::MotorKind::A)),
            dera: DeraParams::reference(),
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.solver.method = method;
        self
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.solver.rel_tol = rel_tol;
        self.solver.abs_tol = abs_tol;
        self
    }

    /// Re-select the model; motor parameters follow the new preset.
    pub fn set_model(&mut self, model: ModelKind) {
        self.model = model;
        if let Some(k) = model.motor_kind() {
            self.motor = MotorParams::for_kind(k);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be positive (got {})", self.t_end)));
        }
        if !(self.grid > 0.0 && self.grid <= self.t_end) {
            return Err(Error::Config(format!("grid step must lie in (0, t_end] (got {})", self.grid)));
        }
        if !(self.t_required > 0.0) {
            return Err(Error::Config(format!("t_required must be positive (got {})", self.t_required)));
        }
        self.sag.validate()?;
        self.solver.config().validate()?;
        match self.model {
            ModelKind::Dera => {
                if !(self.init.dera_freq_hz > 0.0) {
                    return Err(Error::Config("DER model requires a positive frequency input".into()));
                }
                self.dera.validate()
            }
            _ => self.motor.validate(),
        }
    }

    /// Input signal of the scenario: `[Vq, Vd]` for motors, `[Vt, Freq]` for the DER.
    pub fn input(&self) -> InputSignal {
        let sag = self.sag;
        let signal = match self.model {
            ModelKind::Dera => {
                let f = self.init.dera_freq_hz / dera::NOMINAL_HZ;
                InputSignal::from_fn(2, move |t, out| {
                    out[0] = sag_voltage(t, &sag);
                    out[1] = f;
                })
                .with_derivative(move |t, out| {
                    out[0] = sag_rate(t, &sag);
                    out[1] = 0.0;
                })
            }
            _ => InputSignal::from_fn(2, move |t, out| {
                out[0] = sag_voltage(t, &sag);
                out[1] = 0.0;
            })
            .with_derivative(move |t, out| {
                out[0] = sag_rate(t, &sag);
                out[1] = 0.0;
            }),
        };
        signal
            .with_horizon(0.0, self.t_end)
            .with_breakpoints(sag.breakpoints().to_vec())
    }

    fn initial_input(&self) -> Vec<f64> {
        let mut u = vec![0.0; 2];
        self.input().eval_into(0.0, &mut u);
        u
    }
}

/// Samples of one run on the output grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub model: ModelKind,
    pub variant: Variant,
    pub names: Vec<String>,
    pub times: Vec<f64>,
    /// One vector per name, aligned with `times`.
    pub columns: Vec<Vec<f64>>,
    pub stats: SolverStats,
    /// Largest QSS residual at accepted steps (reduced runs only).
    pub qss_max_residual: Option<f64>,
}

impl SimOutput {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn state_dim(&self) -> usize {
        self.names.len() - self.output_names().len()
    }

    fn output_names(&self) -> &'static [&'static str] {
        match (self.model, self.variant) {
            (ModelKind::Dera, Variant::Reduced) => &["iq", "id", "P", "Q"],
            _ => &["P", "Q"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub model: ModelKind,
    pub mse_p: f64,
    pub mse_q: f64,
    pub state_mse: BTreeMap<String, f64>,
    pub timing_full: f64,
    pub timing_reduced: f64,
    pub speedup: f64,
    pub stats_full: SolverStats,
    pub stats_reduced: SolverStats,
    pub qss_max_residual: f64,
    pub decision: ReductionDecision,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub report: ComparisonReport,
    pub full: SimOutput,
    pub reduced: SimOutput,
}

/// The model of `cfg` in singular-perturbation form.
pub fn two_time_scale(cfg: &ScenarioConfig, analytic_qss: bool) -> Result<TwoTimeScaleSystem> {
    match cfg.model {
        ModelKind::Dera => {
            let eq = dera_equilibrium(cfg)?;
            dera::dera_two_time_scale(&eq.params, analytic_qss)
        }
        _ => {
            let (_, tm0) = motor_equilibrium(cfg)?;
            motor::motor_two_time_scale(&cfg.motor, tm0, analytic_qss)
        }
    }
}

fn motor_equilibrium(cfg: &ScenarioConfig) -> Result<(MotorFullState, f64)> {
    let u0 = MotorInputs::from_slice(&cfg.initial_input());
    motor::motor_initialize(u0, &cfg.motor, cfg.init.motor_slip)
}

fn dera_equilibrium(cfg: &ScenarioConfig) -> Result<dera::DeraEquilibrium> {
    let u0 = DeraInputs::from_slice(&cfg.initial_input());
    dera::dera_initialize(u0, &cfg.dera, cfg.init.dera_p0, cfg.init.dera_q0)
}

fn perturbation_coefficients(cfg: &ScenarioConfig) -> Vec<f64> {
    match cfg.model {
        ModelKind::Dera => cfg.dera.perturbation_coefficients().to_vec(),
        _ => cfg.motor.perturbation_coefficients().to_vec(),
    }
}

/// Accuracy constants of the scenario: decay rate from the model fixture,
/// growth constants estimated at the pre-event and sag operating points.
pub fn accuracy_bounds(cfg: &ScenarioConfig) -> Result<AccuracyBounds> {
    let sys = two_time_scale(cfg, true)?;
    let input = cfg.input();
    let x0 = initial_slow_state(cfg)?;
    let mut points = Vec::new();
    for t in [0.0, SagParams::START] {
        let mut u = vec![0.0; 2];
        input.eval_into(t, &mut u);
        points.push((x0.clone(), u));
    }
    let (k0, b3, b5, b6) = spt::estimate_growth_constants(&sys, &points)?;
    let a = match cfg.model {
        ModelKind::Dera => DERA_DECAY_RATE,
        _ => MOTOR_DECAY_RATE,
    };
    Ok(AccuracyBounds {
        mu: cfg.sag.max_rate(),
        b3,
        b5,
        b6,
        k0,
        a,
        k1: 1.0,
    })
}

/// Reduction decision for the scenario's model.
pub fn assess_model(cfg: &ScenarioConfig) -> Result<ReductionDecision> {
    cfg.validate()?;
    let partition = spt::SlowFastPartition::identify(&perturbation_coefficients(cfg), PARTITION_RATIO)?;
    let mut sys = two_time_scale(cfg, true)?;
    sys.epsilon = partition.epsilon();
    spt::assess(&sys, &accuracy_bounds(cfg)?, cfg.t_required)
}

fn initial_slow_state(cfg: &ScenarioConfig) -> Result<Vec<f64>> {
    Ok(match cfg.model {
        ModelKind::Dera => dera_equilibrium(cfg)?.state.slow().to_array().to_vec(),
        _ => motor_equilibrium(cfg)?.0.slow().to_array().to_vec(),
    })
}

fn timed_integrate(problem: &mut OdeProblem<'_>, cfg: &SolverConfig) -> Result<(Trajectory, f64)> {
    let start = Instant::now();
    let traj = integrate(problem, cfg)?;
    Ok((traj, start.elapsed().as_secs_f64()))
}

fn grid_inputs(input: &InputSignal, grid: &[f64]) -> Vec<[f64; 2]> {
    let mut u = vec![0.0; 2];
    grid.iter()
        .map(|&t| {
            input.eval_into(t, &mut u);
            [u[0], u[1]]
        })
        .collect()
}

fn columns_from_rows(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let width = rows.first().map_or(0, Vec::len);
    (0..width).map(|j| rows.iter().map(|r| r[j]).collect()).collect()
}

/// Integrate one variant and sample it on the output grid.
pub fn simulate(cfg: &ScenarioConfig, variant: Variant) -> Result<(SimOutput, f64)> {
    cfg.validate()?;
    let context = format!("{} {} run", cfg.model, variant);
    let run = match (cfg.model, variant) {
        (_, Variant::Both) => Err(Error::Config("simulate needs a single variant".into())),
        (ModelKind::Dera, Variant::Full) => simulate_dera_full(cfg),
        (ModelKind::Dera, Variant::Reduced) => simulate_dera_reduced(cfg),
        (_, Variant::Full) => simulate_motor_full(cfg),
        (_, Variant::Reduced) => simulate_motor_reduced(cfg),
    };
    run.map_err(|e| e.annotate(context))
}

fn output_grid(cfg: &ScenarioConfig) -> Vec<f64> {
    spt::uniform_grid(0.0, cfg.t_end, cfg.grid)
}

fn simulate_motor_full(cfg: &ScenarioConfig) -> Result<(SimOutput, f64)> {
    let (x0, tm0) = motor_equilibrium(cfg)?;
    let rhs = motor::MotorFullRhs { prm: cfg.motor, tm0 };
    let mut problem = OdeProblem::new(rhs, cfg.input(), x0.to_array().to_vec(), (0.0, cfg.t_end));
    let (traj, secs) = timed_integrate(&mut problem, &cfg.solver.config())?;
    let grid = output_grid(cfg);
    let states = traj.sample(&grid)?;
    let inputs = grid_inputs(&problem.input, &grid);
    let rows: Vec<Vec<f64>> = states
        .iter()
        .zip(&inputs)
        .map(|(x, u)| {
            let st = MotorState::Full(MotorFullState::from_slice(x));
            let o = motor::motor_outputs(&st, MotorInputs::from_slice(u), &cfg.motor, tm0);
            x.iter().copied().chain([o.p, o.q]).collect()
        })
        .collect();
    let names = MotorFullState::NAMES.iter().chain(&["P", "Q"]).map(|s| s.to_string()).collect();
    Ok((
        SimOutput {
            model: cfg.model,
            variant: Variant::Full,
            names,
            times: grid,
            columns: columns_from_rows(&rows),
            stats: traj.stats,
            qss_max_residual: None,
        },
        secs,
    ))
}

fn simulate_motor_reduced(cfg: &ScenarioConfig) -> Result<(SimOutput, f64)> {
    let (x0, tm0) = motor_equilibrium(cfg)?;
    let sys = motor::motor_two_time_scale(&cfg.motor, tm0, true)?;
    let (mut problem, monitor) = spt::build_reduced_monitored(&sys, cfg.input(), x0.slow().to_array().to_vec(), (0.0, cfg.t_end));
    let (traj, secs) = timed_integrate(&mut problem, &cfg.solver.config())?;
    let grid = output_grid(cfg);
    let states = traj.sample(&grid)?;
    let inputs = grid_inputs(&problem.input, &grid);
    let rows: Vec<Vec<f64>> = states
        .iter()
        .zip(&inputs)
        .map(|(x, u)| {
            let st = MotorState::Reduced(MotorReducedState::from_slice(x));
            let o = motor::motor_outputs(&st, MotorInputs::from_slice(u), &cfg.motor, tm0);
            x.iter().copied().chain([o.p, o.q]).collect()
        })
        .collect();
    let names = MotorReducedState::NAMES.iter().chain(&["P", "Q"]).map(|s| s.to_string()).collect();
    Ok((
        SimOutput {
            model: cfg.model,
            variant: Variant::Reduced,
            names,
            times: grid,
            columns: columns_from_rows(&rows),
            stats: traj.stats,
            qss_max_residual: Some(monitor.max_residual()),
        },
        secs,
    ))
}

fn simulate_dera_full(cfg: &ScenarioConfig) -> Result<(SimOutput, f64)> {
    let eq = dera_equilibrium(cfg)?;
    let rhs = dera::DeraFullRhs::new(eq.params);
    let mut problem = OdeProblem::new(rhs, cfg.input(), eq.state.s.to_vec(), (0.0, cfg.t_end));
    let (traj, secs) = timed_integrate(&mut problem, &cfg.solver.config())?;
    let grid = output_grid(cfg);
    let states = traj.sample(&grid)?;
    let inputs = grid_inputs(&problem.input, &grid);
    let rows: Vec<Vec<f64>> = states
        .iter()
        .zip(&inputs)
        .map(|(x, u)| {
            let (p, q) = dera::dera_outputs(x[3], x[9], DeraInputs::from_slice(u));
            x.iter().copied().chain([p, q]).collect()
        })
        .collect();
    let names = dera::DeraFullState::NAMES.iter().chain(&["P", "Q"]).map(|s| s.to_string()).collect();
    Ok((
        SimOutput {
            model: cfg.model,
            variant: Variant::Full,
            names,
            times: grid,
            columns: columns_from_rows(&rows),
            stats: traj.stats,
            qss_max_residual: None,
        },
        secs,
    ))
}

fn simulate_dera_reduced(cfg: &ScenarioConfig) -> Result<(SimOutput, f64)> {
    let eq = dera_equilibrium(cfg)?;
    let prm = eq.params;
    let sys = dera::dera_two_time_scale(&prm, true)?;
    let x0 = eq.state.slow().to_array().to_vec();
    let u0 = cfg.initial_input();
    let (mut problem, monitor) = spt::build_reduced_monitored(&sys, cfg.input(), x0.clone(), (0.0, cfg.t_end));
    let start = Instant::now();
    let traj = integrate(&mut problem, &cfg.solver.config())?;
    let h0 = spt::qss_solve(&sys, &x0, &u0, &eq.state.fast())?;
    let y0: Vec<f64> = eq.state.fast().iter().zip(&h0).map(|(z, h)| z - h).collect();
    let bl_traj = if y0.iter().all(|v| v.abs() <= 1e-12) {
        None
    } else {
        let mut bl = spt::build_boundary_correction(&sys, &x0, &u0, y0, cfg.t_end)?;
        let bl_cfg = SolverConfig::new(Method::Stiff).with_tolerances(cfg.solver.rel_tol, cfg.solver.abs_tol);
        Some(integrate(&mut bl, &bl_cfg)?)
    };
    let secs = start.elapsed().as_secs_f64();

    let grid = output_grid(cfg);
    let correction = match &bl_traj {
        Some(t) => t.sample(&grid)?,
        None => vec![vec![0.0; 6]; grid.len()],
    };
    let states = traj.sample(&grid)?;
    let inputs = grid_inputs(&problem.input, &grid);
    let mut mem = VpMemory::fresh();
    let rows: Vec<Vec<f64>> = states
        .iter()
        .zip(&inputs)
        .zip(&correction)
        .zip(&grid)
        .map(|(((x, u), y), &t)| {
            let xr = DeraReducedState::from_slice(x);
            mem = mem.update(xr.x1, t, &prm.vp);
            let yb = dera::DeraBoundaryState { y: std::array::from_fn(|i| y[i]) };
            let ui = DeraInputs::from_slice(u);
            let (iq, id) = dera::dera_currents(&xr, &yb, ui, &prm, &mem);
            let (p, q) = dera::dera_outputs(iq, id, ui);
            x.iter().copied().chain([iq, id, p, q]).collect()
        })
        .collect();
    let names = DeraReducedState::NAMES
        .iter()
        .chain(&["iq", "id", "P", "Q"])
        .map(|s| s.to_string())
        .collect();
    Ok((
        SimOutput {
            model: cfg.model,
            variant: Variant::Reduced,
            names,
            times: grid,
            columns: columns_from_rows(&rows),
            stats: traj.stats,
            qss_max_residual: Some(monitor.max_residual()),
        },
        secs,
    ))
}

/// Mean squared difference of two equally long series.
pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n as f64
}

/// Run both variants on identical inputs and compare them on the output grid.
pub fn run_comparison(cfg: &ScenarioConfig) -> Result<Comparison> {
    cfg.validate()?;
    let decision = assess_model(cfg).map_err(|e| e.annotate(format!("{} assessment", cfg.model)))?;
    let (full, timing_full) = simulate(cfg, Variant::Full)?;
    let (mut reduced, timing_reduced) = simulate(cfg, Variant::Reduced)?;
    if decision.verdict == Verdict::Repartition {
        return Err(Error::Config(format!(
            "{}: epsilon {} exceeds eps* {}; the partition must be revised",
            cfg.model, decision.epsilon, decision.eps_star
        )));
    }
    reduced.stats.wall_clock = timing_reduced;
    Ok(compare_outputs(cfg, full, timing_full, reduced, timing_reduced, decision))
}

fn compare_outputs(
    cfg: &ScenarioConfig,
    full: SimOutput,
    timing_full: f64,
    reduced: SimOutput,
    timing_reduced: f64,
    decision: ReductionDecision,
) -> Comparison {
    let col = |o: &SimOutput, n: &str| o.column(n).unwrap_or(&[]).to_vec();
    let mut state_mse = BTreeMap::new();
    for name in &reduced.names[..reduced.state_dim()] {
        if let (Some(a), Some(b)) = (full.column(name), reduced.column(name)) {
            state_mse.insert(name.clone(), mse(a, b));
        }
    }
    let report = ComparisonReport {
        model: cfg.model,
        mse_p: mse(&col(&full, "P"), &col(&reduced, "P")),
        mse_q: mse(&col(&full, "Q"), &col(&reduced, "Q")),
        state_mse,
        timing_full,
        timing_reduced,
        speedup: timing_full / timing_reduced,
        stats_full: full.stats,
        stats_reduced: reduced.stats,
        qss_max_residual: reduced.qss_max_residual.unwrap_or(0.0),
        decision,
        config: cfg.clone(),
    };
    Comparison { report, full, reduced }
}

/// Compare a variant with itself; every MSE is zero by construction.
pub fn self_comparison(cfg: &ScenarioConfig, variant: Variant) -> Result<ComparisonReport> {
    let decision = assess_model(cfg)?;
    let (a, ta) = simulate(cfg, variant)?;
    let (b, tb) = simulate(cfg, variant)?;
    let mut report = compare_outputs(cfg, a, ta, b.clone(), tb, decision).report;
    for name in &b.names[..b.state_dim()] {
        report.state_mse.entry(name.clone()).or_insert(0.0);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model: ModelKind,
    pub repeats: usize,
    pub median_full: f64,
    pub median_reduced: f64,
    pub median_speedup: f64,
    pub steps_full: usize,
    pub steps_reduced: usize,
    pub mse_p: f64,
    pub mse_q: f64,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Repeat the comparison sequentially and report median timings.
pub fn bench(cfg: &ScenarioConfig, repeats: usize) -> Result<BenchReport> {
    if repeats == 0 {
        return Err(Error::Config("repeat count must be at least 1".into()));
    }
    let mut full = Vec::with_capacity(repeats);
    let mut reduced = Vec::with_capacity(repeats);
    let mut ratios = Vec::with_capacity(repeats);
    let mut last = None;
    for _ in 0..repeats {
        let c = run_comparison(cfg)?;
        full.push(c.report.timing_full);
        reduced.push(c.report.timing_reduced);
        ratios.push(c.report.speedup);
        last = Some(c.report);
    }
    let last = last.expect("at least one repeat");
    Ok(BenchReport {
        model: cfg.model,
        repeats,
        median_full: median(&mut full),
        median_reduced: median(&mut reduced),
        median_speedup: median(&mut ratios),
        steps_full: last.stats_full.steps_accepted,
        steps_reduced: last.stats_reduced.steps_accepted,
        mse_p: last.mse_p,
        mse_q: last.mse_q,
    })
}

/// Log-log slope of the sup-norm slow-state error against ε when the
/// motor's subtransient time constant is scaled by each factor.
pub fn motor_error_order(cfg: &ScenarioConfig, factors: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if cfg.model == ModelKind::Dera {
        return Err(Error::Config("error-order study applies to motor models".into()));
    }
    let solver = cfg.solver.config();
    let mut fulls = Vec::new();
    let mut reduceds = Vec::new();
    let mut eps = Vec::new();
    for &k in factors {
        let mut c = cfg.clone();
        c.motor.tpp0 = cfg.motor.tpp0 * k;
        let (x0, tm0) = motor_equilibrium(&c)?;
        let mut full = OdeProblem::new(motor::MotorFullRhs { prm: c.motor, tm0 }, c.input(), x0.to_array().to_vec(), (0.0, c.t_end));
        let full = integrate(&mut full, &solver)?;
        let slow = Trajectory::from_samples(
            full.times.clone(),
            full.states.iter().map(|s| vec![s[0], s[1], s[4]]).collect(),
        )?;
        let sys = motor::motor_two_time_scale(&c.motor, tm0, true)?;
        let mut red = spt::build_reduced(&sys, c.input(), x0.slow().to_array().to_vec(), (0.0, c.t_end));
        reduceds.push(integrate(&mut red, &solver)?);
        fulls.push(slow);
        eps.push(c.motor.tpp0);
    }
    let mut errors = Vec::new();
    for (f, r) in fulls.iter().zip(&reduceds) {
        errors.push(spt::sup_norm_error(f, r, &[0, 1, 2], cfg.grid)?);
    }
    let slope = spt::trajectory_error_order(&fulls, &reduceds, &eps, &[0, 1, 2])?;
    Ok((slope, eps, errors))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sag_examples() {
        let sp = SagParams::default();
        assert_eq!(sag_voltage(0.5, &sp), 1.0);
        assert_eq!(sag_voltage(1.0, &sp), 0.8);
        let t2 = 1.0 + 5.0 / 60.0;
        assert!((sag_voltage(t2, &sp) - 0.9).abs() < 1e-12);
        assert!((sag_voltage(2.0f64.next_down(), &sp) - 1.0).abs() < 1e-12);
        assert_eq!(sag_voltage(2.0, &sp), 1.0);
        assert_eq!(sag_voltage(4.0, &sp), 1.0);
        let mid = 0.5 * (t2 + 2.0);
        let h = 1e-6;
        let fd = (sag_voltage(mid + h, &sp) - sag_voltage(mid - h, &sp)) / (2.0 * h);
        assert!((fd - sag_rate(mid, &sp)).abs() < 1e-6);
        assert!((sp.max_rate() - 0.1 / (1.0 - 5.0 / 60.0)).abs() < 1e-15);
        assert!(SagParams { c: 0.05, ..sp }.validate().is_err());
    }

    #[test]
    fn scenario_input_registers_breakpoints() {
        let cfg = ScenarioConfig::new(ModelKind::Dera);
        let sig = cfg.input();
        assert_eq!(sig.breakpoints(), &[1.0, 1.0 + 5.0 / 60.0, 2.0]);
        let mut u = vec![0.0; 2];
        sig.eval_into(3.7, &mut u);
        assert_eq!(u, vec![1.0, 1.0]);
    }

    #[test]
    fn model_names_round_trip() {
        for m in ModelKind::ALL {
            assert_eq!(m.name().parse::<ModelKind>().unwrap(), m);
        }
        assert!("motor-d".parse::<ModelKind>().is_err());
    }

    #[test]
    fn mse_of_identical_series_is_zero() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(mse(&[1.0, 2.0], &[0.0, 0.0]), 2.5);
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
