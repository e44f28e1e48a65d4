//! Adaptive initial-value-problem integrators.
//!
//! [`Method::NonStiff`] is the Dormand-Prince 5(4) pair with PI step control
//! and its native 4th-order dense output. [`Method::Stiff`] is the one-step
//! TR-BDF2 scheme (trapezoidal stage followed by a BDF2 stage sharing one
//! iteration matrix) with simplified Newton iterations, Jacobian reuse and a
//! cubic Hermite interpolant.

mod dopri;
mod trbdf2;

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::InputSignal;

/// Right-hand side `dx = F(t, x, u)`.
pub trait OdeRhs {
    fn dim(&self) -> usize;

    fn eval(&self, t: f64, x: &[f64], u: &[f64], dx: &mut [f64]);

    /// Hook called after every accepted step. Returning `true` signals that
    /// internal state changed the vector field, so cached derivatives are stale.
    fn accept_step(&mut self, _t: f64, _x: &[f64], _u: &[f64]) -> bool {
        false
    }

    /// Detailed cause of a non-finite evaluation, if the rhs recorded one.
    fn take_error(&self) -> Option<Error> {
        None
    }
}

/// Adapter turning a closure into an [`OdeRhs`].
pub struct FnRhs<F> {
    dim: usize,
    f: F,
}

impl<F> FnRhs<F>
where
    F: Fn(f64, &[f64], &[f64], &mut [f64]),
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> OdeRhs for FnRhs<F>
where
    F: Fn(f64, &[f64], &[f64], &mut [f64]),
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        (self.f)(t, x, u, dx)
    }
}

pub struct OdeProblem<'a> {
    pub rhs: Box<dyn OdeRhs + 'a>,
    pub input: InputSignal,
    pub initial_state: Vec<f64>,
    pub t_span: (f64, f64),
    pub discontinuity_times: Vec<f64>,
}

impl<'a> OdeProblem<'a> {
    pub fn new(
        rhs: impl OdeRhs + 'a,
        input: InputSignal,
        initial_state: Vec<f64>,
        t_span: (f64, f64),
    ) -> Self {
        let discontinuity_times = input.breakpoints().to_vec();
        Self {
            rhs: Box::new(rhs),
            input,
            initial_state,
            t_span,
            discontinuity_times,
        }
    }

    pub fn with_discontinuities(mut self, times: &[f64]) -> Self {
        self.discontinuity_times.extend_from_slice(times);
        self.discontinuity_times.sort_by(f64::total_cmp);
        self.discontinuity_times.dedup();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (t0, tf) = self.t_span;
        if !(t0.is_finite() && tf.is_finite() && t0 < tf) {
            return Err(Error::InvalidParameter(format!(
                "t_span must satisfy t0 < tf (got [{t0}, {tf}])"
            )));
        }
        if self.rhs.dim() != self.initial_state.len() {
            return Err(Error::InvalidParameter(format!(
                "rhs dimension {} does not match initial state length {}",
                self.rhs.dim(),
                self.initial_state.len()
            )));
        }
        if self.initial_state.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBlowup { t: t0 });
        }
        let (start, end) = self.input.horizon();
        if t0 < start || tf > end {
            let t = if t0 < start { t0 } else { tf };
            return Err(Error::Domain { t, start, end });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    NonStiff,
    Stiff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Initial step; `None` selects it automatically.
    pub initial_step: Option<f64>,
    pub method: Method,
    pub max_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-3,
            abs_tol: 1e-6,
            max_step: f64::INFINITY,
            initial_step: None,
            method: Method::NonStiff,
            max_steps: 5_000_000,
        }
    }
}

impl SolverConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_max_step(mut self, max_step: f64) -> Self {
        self.max_step = max_step;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerances must be positive (rel_tol {}, abs_tol {})",
                self.rel_tol, self.abs_tol
            )));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "max_step must be positive (got {})",
                self.max_step
            )));
        }
        if let Some(h) = self.initial_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "initial_step must be positive (got {h})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub rhs_evaluations: usize,
    pub jacobian_evaluations: usize,
    pub wall_clock: f64,
}

/// Per-step interpolation data.
#[derive(Debug, Clone)]
pub(crate) enum Dense {
    /// Dormand-Prince continuous extension: five coefficient vectors, flattened.
    Dopri(Vec<f64>),
    /// Cubic Hermite data `[y0, y1, h*f0, h*f1]`, flattened.
    Hermite(Vec<f64>),
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stats: SolverStats,
    dense: Vec<Dense>,
}

impl Trajectory {
    /// Trajectory from raw samples; interpolation between nodes is linear.
    pub fn from_samples(times: Vec<f64>, states: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::InvalidParameter(format!(
                "{} times but {} states",
                times.len(),
                states.len()
            )));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter(
                "sample times must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            times,
            states,
            stats: SolverStats::default(),
            dense: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn t_range(&self) -> Option<(f64, f64)> {
        Some((*self.times.first()?, *self.times.last()?))
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }

    fn push_node(&mut self, t: f64, x: &[f64]) {
        self.times.push(t);
        self.states.push(x.to_vec());
    }

    /// Interpolate inside step `k` (between nodes `k` and `k + 1`).
    fn interpolate_in(&self, k: usize, t: f64, out: &mut [f64]) {
        let t0 = self.times[k];
        let t1 = self.times[k + 1];
        let theta = (t - t0) / (t1 - t0);
        let n = out.len();
        match self.dense.get(k) {
            Some(Dense::Dopri(rc)) => dopri::eval_dense(rc, n, theta, out),
            Some(Dense::Hermite(c)) => {
                let (y0, rest) = c.split_at(n);
                let (y1, rest) = rest.split_at(n);
                let (hf0, hf1) = rest.split_at(n);
                let th2 = theta * theta;
                let th3 = th2 * theta;
                let h00 = 2.0 * th3 - 3.0 * th2 + 1.0;
                let h10 = th3 - 2.0 * th2 + theta;
                let h01 = -2.0 * th3 + 3.0 * th2;
                let h11 = th3 - th2;
                for i in 0..n {
                    out[i] = h00 * y0[i] + h10 * hf0[i] + h01 * y1[i] + h11 * hf1[i];
                }
            }
            None => {
                let (a, b) = (&self.states[k], &self.states[k + 1]);
                for i in 0..n {
                    out[i] = a[i] + theta * (b[i] - a[i]);
                }
            }
        }
    }

    /// Resample onto a grid; increasing grids are walked in a single pass.
    pub fn sample(&self, grid: &[f64]) -> Result<Vec<Vec<f64>>> {
        let (start, end) = self
            .t_range()
            .ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
        let mut out = Vec::with_capacity(grid.len());
        let mut k = 0usize;
        for &t in grid {
            if !(t >= start && t <= end) {
                return Err(Error::Domain { t, start, end });
            }
            if self.times[k] > t {
                k = self.segment_index(t);
            }
            while k + 2 < self.times.len() && self.times[k + 1] <= t {
                k += 1;
            }
            out.push(self.value_at_segment(k, t));
        }
        Ok(out)
    }

    fn segment_index(&self, t: f64) -> usize {
        let idx = self.times.partition_point(|&ti| ti <= t);
        idx.saturating_sub(1).min(self.times.len().saturating_sub(2))
    }

    fn value_at_segment(&self, k: usize, t: f64) -> Vec<f64> {
        if self.times.len() == 1 || self.times[k] == t {
            return self.states[k].clone();
        }
        if self.times[k + 1] == t {
            return self.states[k + 1].clone();
        }
        let mut out = vec![0.0; self.dim()];
        self.interpolate_in(k, t, &mut out);
        out
    }
}

/// State at `t_query` from the trajectory's interpolant; nodes are returned exactly.
pub fn dense_output(traj: &Trajectory, t_query: f64) -> Result<Vec<f64>> {
    let (start, end) = traj
        .t_range()
        .ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
    if !(t_query >= start && t_query <= end) {
        return Err(Error::Domain {
            t: t_query,
            start,
            end,
        });
    }
    Ok(traj.value_at_segment(traj.segment_index(t_query), t_query))
}

/// Forward-difference Jacobian of `rhs` with respect to the state.
pub fn numerical_jacobian(
    rhs: &dyn OdeRhs,
    t: f64,
    state: &[f64],
    input: &[f64],
) -> Result<DMatrix<f64>> {
    let n = state.len();
    let mut f0 = vec![0.0; n];
    rhs.eval(t, state, input, &mut f0);
    jacobian_with_base(rhs, t, state, input, &f0)
}

pub(crate) fn jacobian_with_base(
    rhs: &dyn OdeRhs,
    t: f64,
    state: &[f64],
    input: &[f64],
    f0: &[f64],
) -> Result<DMatrix<f64>> {
    let n = state.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut xp = state.to_vec();
    let mut fp = vec![0.0; n];
    for j in 0..n {
        let step = (1e-8 * state[j].abs()).max(1e-8);
        xp[j] = state[j] + step;
        let dx = xp[j] - state[j];
        rhs.eval(t, &xp, input, &mut fp);
        for i in 0..n {
            let v = (fp[i] - f0[i]) / dx;
            if !v.is_finite() {
                return Err(Error::NumericalBlowup { t });
            }
            jac[(i, j)] = v;
        }
        xp[j] = state[j];
    }
    Ok(jac)
}

/// Integrate `problem` over its `t_span`.
pub fn integrate(problem: &mut OdeProblem<'_>, cfg: &SolverConfig) -> Result<Trajectory> {
    problem.validate()?;
    cfg.validate()?;
    let started = Instant::now();
    let (t0, tf) = problem.t_span;
    let mut stops: Vec<f64> = problem
        .discontinuity_times
        .iter()
        .chain(problem.input.breakpoints())
        .copied()
        .filter(|&t| t > t0 && t < tf)
        .collect();
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    stops.push(tf);

    let mut ctx = Ctx {
        rhs: problem.rhs.as_mut(),
        input: &problem.input,
        cfg,
        u: vec![0.0; problem.input.dim()],
        stats: SolverStats::default(),
    };
    let mut traj = Trajectory::default();
    traj.push_node(t0, &problem.initial_state);

    let result = match cfg.method {
        Method::NonStiff => dopri::run(&mut ctx, &mut traj, t0, &stops),
        Method::Stiff => trbdf2::run(&mut ctx, &mut traj, t0, &stops),
    };
    ctx.stats.wall_clock = started.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
    traj.stats = ctx.stats;
    match result {
        Ok(()) => Ok(traj),
        Err(e) => Err(problem.rhs.take_error().unwrap_or(e)),
    }
}

/// Shared integration context.
pub(crate) struct Ctx<'p, 'a> {
    pub rhs: &'p mut (dyn OdeRhs + 'a),
    pub input: &'p InputSignal,
    pub cfg: &'p SolverConfig,
    pub u: Vec<f64>,
    pub stats: SolverStats,
}

impl Ctx<'_, '_> {
    /// Evaluate the rhs inside the segment ending at `seg_end`; inputs at the
    /// segment end are taken as left limits.
    pub fn f(&mut self, t: f64, seg_end: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        if t >= seg_end {
            self.input.eval_left_into(seg_end, &mut self.u);
        } else {
            self.input.eval_into(t, &mut self.u);
        }
        self.rhs.eval(t, x, &self.u, dx);
        self.stats.rhs_evaluations += 1;
        if dx.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBlowup { t });
        }
        Ok(())
    }

    pub fn jacobian(&mut self, t: f64, seg_end: f64, x: &[f64], fx: &[f64]) -> Result<DMatrix<f64>> {
        if t >= seg_end {
            self.input.eval_left_into(seg_end, &mut self.u);
        } else {
            self.input.eval_into(t, &mut self.u);
        }
        let jac = jacobian_with_base(&*self.rhs, t, x, &self.u, fx)?;
        self.stats.rhs_evaluations += x.len();
        self.stats.jacobian_evaluations += 1;
        Ok(jac)
    }

    /// Notify the rhs of an accepted step; returns whether cached derivatives are stale.
    pub fn accept(&mut self, t: f64, seg_end: f64, x: &[f64]) -> bool {
        if t >= seg_end {
            self.input.eval_left_into(seg_end, &mut self.u);
        } else {
            self.input.eval_into(t, &mut self.u);
        }
        self.stats.steps_accepted += 1;
        self.rhs.accept_step(t, x, &self.u)
    }

    pub fn check_step(&self, t: f64, h: f64) -> Result<()> {
        if h < 100.0 * f64::EPSILON * t.abs().max(f64::MIN_POSITIVE) || !h.is_finite() {
            return Err(Error::StiffnessOrSingularity { t, h });
        }
        if self.stats.steps_accepted + self.stats.steps_rejected >= self.cfg.max_steps {
            return Err(Error::StiffnessOrSingularity { t, h });
        }
        Ok(())
    }

    pub fn max_step(&self, span: f64) -> f64 {
        self.cfg.max_step.min(span)
    }

    /// Scaled RMS norm of `e` with weights `atol + rtol * max(|y0|, |y1|)`.
    pub fn err_norm(&self, e: &[f64], y0: &[f64], y1: &[f64]) -> f64 {
        let n = e.len();
        if n == 0 {
            return 0.0;
        }
        let (rtol, atol) = (self.cfg.rel_tol, self.cfg.abs_tol);
        let sum: f64 = (0..n)
            .map(|i| {
                let sk = atol + rtol * y0[i].abs().max(y1[i].abs());
                (e[i] / sk).powi(2)
            })
            .sum();
        (sum / n as f64).sqrt()
    }

    /// Starting step estimate for a method of order `order`.
    pub fn initial_step(
        &mut self,
        t: f64,
        seg_end: f64,
        x: &[f64],
        fx: &[f64],
        order: i32,
    ) -> Result<f64> {
        let span = seg_end - t;
        let hmax = self.max_step(span);
        if let Some(h) = self.cfg.initial_step {
            return Ok(h.min(hmax));
        }
        let n = x.len();
        if n == 0 {
            return Ok(hmax);
        }
        let (rtol, atol) = (self.cfg.rel_tol, self.cfg.abs_tol);
        let sk: Vec<f64> = x.iter().map(|v| atol + rtol * v.abs()).collect();
        let dnf: f64 = (0..n).map(|i| (fx[i] / sk[i]).powi(2)).sum();
        let dny: f64 = (0..n).map(|i| (x[i] / sk[i]).powi(2)).sum();
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
            1e-6
        } else {
            (dny / dnf).sqrt() * 0.01
        };
        h = h.min(hmax);
        let x1: Vec<f64> = (0..n).map(|i| x[i] + h * fx[i]).collect();
        let mut f1 = vec![0.0; n];
        self.f(t + h, seg_end, &x1, &mut f1)?;
        let der2 = ((0..n).map(|i| ((f1[i] - fx[i]) / sk[i]).powi(2)).sum::<f64>()).sqrt() / h;
        let der12 = der2.abs().max(dnf.sqrt());
        let h1 = if der12 <= 1e-15 {
            (h * 1e-3).max(1e-6)
        } else {
            (0.01 / der12).powf(1.0 / f64::from(order))
        };
        Ok((100.0 * h).min(h1).min(hmax))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn decay_problem(rate: f64, y0: f64, tf: f64) -> OdeProblem<'static> {
        OdeProblem::new(
            FnRhs::new(1, move |_, x, _, dx| dx[0] = -rate * x[0]),
            InputSignal::constant(vec![]),
            vec![y0],
            (0.0, tf),
        )
    }

    fn both() -> [Method; 2] {
        [Method::NonStiff, Method::Stiff]
    }

    #[test]
    fn exponential_decay_endpoint() {
        for m in both() {
            let cfg = SolverConfig::new(m).with_tolerances(1e-8, 1e-10);
            let traj = integrate(&mut decay_problem(1.0, 1.0, 1.0), &cfg).unwrap();
            let y1 = traj.last_state().unwrap()[0];
            assert!((y1 - (-1.0f64).exp()).abs() < 1e-6, "{m:?}: {y1}");
            assert_eq!(*traj.times.last().unwrap(), 1.0);
            assert_eq!(traj.times[0], 0.0);
            assert!(traj.stats.rhs_evaluations > 0);
            assert!(traj.stats.wall_clock > 0.0);
        }
    }

    #[test]
    fn constant_solution_is_preserved() {
        for m in both() {
            let mut p = OdeProblem::new(
                FnRhs::new(2, |_, _, _, dx| dx.fill(0.0)),
                InputSignal::constant(vec![]),
                vec![3.25, -1.5],
                (0.0, 2.0),
            );
            let traj = integrate(&mut p, &SolverConfig::new(m)).unwrap();
            for s in &traj.states {
                assert_eq!(s, &vec![3.25, -1.5]);
            }
        }
    }

    #[test]
    fn stiff_problem_needs_far_fewer_steps_with_stiff_method() {
        let make = || {
            OdeProblem::new(
                FnRhs::new(1, |t, x, _, dx| dx[0] = -1e4 * (x[0] - t.cos())),
                InputSignal::constant(vec![]),
                vec![0.0],
                (0.0, 1.0),
            )
        };
        let ns = integrate(&mut make(), &SolverConfig::new(Method::NonStiff)).unwrap();
        let st = integrate(&mut make(), &SolverConfig::new(Method::Stiff)).unwrap();
        let ratio = ns.stats.steps_accepted as f64 / st.stats.steps_accepted as f64;
        assert!(ratio >= 50.0, "step ratio {ratio}");
        let y = st.last_state().unwrap()[0];
        assert!((y - 1.0f64.cos()).abs() < 1e-3);
    }

    #[test]
    fn dense_output_at_nodes_and_midpoints() {
        for m in both() {
            let cfg = SolverConfig::new(m).with_tolerances(1e-9, 1e-12);
            let traj = integrate(&mut decay_problem(1.0, 1.0, 1.0), &cfg).unwrap();
            let k = traj.len() / 2;
            assert_eq!(dense_output(&traj, traj.times[k]).unwrap(), traj.states[k]);
            let y = dense_output(&traj, 0.5).unwrap()[0];
            assert!((y - (-0.5f64).exp()).abs() < 1e-6, "{m:?}: {y}");
            assert!(matches!(dense_output(&traj, 1.5), Err(Error::Domain { .. })));
        }
    }

    #[test]
    fn dense_output_reproduces_linear_solution() {
        for m in both() {
            let mut p = OdeProblem::new(
                FnRhs::new(1, |_, _, _, dx| dx[0] = 1.0),
                InputSignal::constant(vec![]),
                vec![0.0],
                (0.0, 3.0),
            );
            let cfg = SolverConfig::new(m).with_max_step(0.37);
            let traj = integrate(&mut p, &cfg).unwrap();
            for w in traj.times.windows(2) {
                let mid = 0.5 * (w[0] + w[1]);
                assert!((dense_output(&traj, mid).unwrap()[0] - mid).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jacobian_of_linear_maps() {
        let a = [[1.5, -2.0], [0.25, 3.0]];
        let rhs = FnRhs::new(2, move |_, x, _, dx| {
            dx[0] = a[0][0] * x[0] + a[0][1] * x[1];
            dx[1] = a[1][0] * x[0] + a[1][1] * x[1];
        });
        let j = numerical_jacobian(&rhs, 0.0, &[0.3, -0.7], &[]).unwrap();
        for i in 0..2 {
            for k in 0..2 {
                assert!((j[(i, k)] - a[i][k]).abs() < 1e-6);
            }
        }
        let rot = FnRhs::new(2, |_, x, _, dx| {
            dx[0] = x[1];
            dx[1] = -x[0];
        });
        let j = numerical_jacobian(&rot, 0.0, &[4.0, 2.0], &[]).unwrap();
        assert!((j[(0, 1)] - 1.0).abs() < 1e-6 && (j[(1, 0)] + 1.0).abs() < 1e-6);
        assert!(j[(0, 0)].abs() < 1e-6 && j[(1, 1)].abs() < 1e-6);
    }

    #[test]
    fn jacobian_rejects_non_finite() {
        let rhs = FnRhs::new(1, |_, x, _, dx| dx[0] = 1.0 / x[0]);
        assert!(matches!(
            numerical_jacobian(&rhs, 0.0, &[0.0], &[]),
            Err(Error::NumericalBlowup { .. })
        ));
    }

    /// End-point error must not grow as the tolerance tightens. Error-per-step
    /// control gives a global error ~ tol^(p/(p+1)): about 1 for the 5(4)
    /// pair, about 2/3 for the second-order stiff scheme.
    #[test]
    fn tolerance_study_on_decay() {
        for (m, expected) in [(Method::NonStiff, 1.0), (Method::Stiff, 2.0 / 3.0)] {
            let tols = [1e-4, 1e-5, 1e-6, 1e-7, 1e-8];
            let errs: Vec<f64> = tols
                .iter()
                .map(|&tol| {
                    let cfg = SolverConfig::new(m).with_tolerances(tol, tol * 1e-3);
                    let traj = integrate(&mut decay_problem(1.0, 1.0, 1.0), &cfg).unwrap();
                    (traj.last_state().unwrap()[0] - (-1.0f64).exp()).abs()
                })
                .collect();
            for w in errs.windows(2) {
                assert!(w[1] <= w[0] * 1.05, "{m:?}: {errs:?}");
            }
            let xs: Vec<f64> = tols.iter().map(|t| t.ln()).collect();
            let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
            let slope = crate::spt::least_squares_slope(&xs, &ys).unwrap().0;
            assert!((slope - expected).abs() <= 0.3, "{m:?}: slope {slope}");
        }
    }

    #[test]
    fn stiff_method_is_stable_on_very_stiff_decay() {
        let cfg = SolverConfig::new(Method::Stiff).with_max_step(0.1);
        let traj = integrate(&mut decay_problem(1e6, 1.0, 5.0), &cfg).unwrap();
        for w in traj.states.windows(2) {
            assert!(w[1][0].abs() <= w[0][0].abs() + 1e-15);
        }
    }

    #[test]
    fn steps_end_exactly_on_breakpoints() {
        for m in both() {
            let input = InputSignal::from_fn(1, |t, out| out[0] = if t < 0.3 { 1.0 } else { -1.0 })
                .with_breakpoints(vec![0.3]);
            let mut p = OdeProblem::new(
                FnRhs::new(1, |_, _, u, dx| dx[0] = u[0]),
                input,
                vec![0.0],
                (0.0, 1.0),
            )
            .with_discontinuities(&[0.7]);
            let traj = integrate(&mut p, &SolverConfig::new(m)).unwrap();
            assert!(traj.times.contains(&0.3));
            assert!(traj.times.contains(&0.7));
            let at = |t: f64| dense_output(&traj, t).unwrap()[0];
            assert!((at(0.3) - 0.3).abs() < 1e-10);
            assert!((at(1.0) - (0.3 - 0.7)).abs() < 1e-10);
        }
    }

    #[test]
    fn blowup_and_invalid_problems_are_reported() {
        let mut p = OdeProblem::new(
            FnRhs::new(1, |_, x, _, dx| dx[0] = x[0] * x[0]),
            InputSignal::constant(vec![]),
            vec![1.0],
            (0.0, 2.0),
        );
        let err = integrate(&mut p, &SolverConfig::new(Method::NonStiff)).unwrap_err();
        assert!(err.is_numerical(), "{err}");
        let mut bad = decay_problem(1.0, 1.0, 1.0);
        bad.t_span = (1.0, 0.0);
        assert!(integrate(&mut bad, &SolverConfig::default()).is_err());
        let cfg = SolverConfig::default().with_tolerances(0.0, 1e-6);
        assert!(integrate(&mut decay_problem(1.0, 1.0, 1.0), &cfg).is_err());
    }

    #[test]
    fn input_horizon_is_checked() {
        let mut p = OdeProblem::new(
            FnRhs::new(1, |_, _, u, dx| dx[0] = u[0]),
            InputSignal::constant(vec![1.0]).with_horizon(0.0, 1.0),
            vec![0.0],
            (0.0, 2.0),
        );
        assert!(matches!(
            integrate(&mut p, &SolverConfig::default()),
            Err(Error::Domain { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn integration_is_deterministic(rate in 0.1f64..50.0, y0 in -5.0f64..5.0, stiff in any::<bool>()) {
            let m = if stiff { Method::Stiff } else { Method::NonStiff };
            let cfg = SolverConfig::new(m).with_tolerances(1e-6, 1e-9);
            let a = integrate(&mut decay_problem(rate, y0, 1.0), &cfg).unwrap();
            let b = integrate(&mut decay_problem(rate, y0, 1.0), &cfg).unwrap();
            prop_assert_eq!(a.times, b.times);
            prop_assert_eq!(a.states, b.states);
        }

        #[test]
        fn times_strictly_increasing(rate in 0.1f64..100.0, stiff in any::<bool>()) {
            let m = if stiff { Method::Stiff } else { Method::NonStiff };
            let traj = integrate(&mut decay_problem(rate, 1.0, 2.0), &SolverConfig::new(m)).unwrap();
            prop_assert!(traj.times.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(traj.times.len(), traj.states.len());
        }
    }
}
