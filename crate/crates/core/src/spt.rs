//! Two-time-scale systems `ẋ = f(x, z, u, ε)`, `ε ż = g(x, z, u, ε)`:
//! quasi-steady-state solution, reduced and boundary-layer models, the
//! accuracy bounds ε* and ε**, decay-rate estimation and the reduction
//! decision procedure.

use std::cell::{Cell, RefCell};
use std::rc::Rc;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::InputSignal;
use crate::odesolve::{OdeProblem, OdeRhs, Trajectory};

/// `(x, z, u, ε, out)`.
pub type SystemFn = dyn Fn(&[f64], &[f64], &[f64], f64, &mut [f64]) + Send + Sync;
/// `(x, u, out)`.
pub type QssFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;

const NEWTON_MAX_ITER: usize = 50;
const NEWTON_MAX_HALVINGS: usize = 10;
const NEWTON_TOL: f64 = 1e-10;
/// Extra iterations taken once the tolerance is met.
const NEWTON_POLISH: usize = 2;
/// Slow-state errors below this are indistinguishable from solver noise.
pub const NEAR_ZERO_ERROR: f64 = 1e-8;
/// Residual bound for analytic QSS maps.
pub const QSS_RESIDUAL_TOL: f64 = 1e-8;

/// Singularly perturbed system in standard form.
///
/// Each fast equation is stored normalized, `ε_i ż_i = g_i`, with `ε_i` in
/// `fast_scales`; `epsilon` is the largest of them. Indices listed in
/// `neutral_fast` are fast states with no restoring dynamics of their own
/// (a zero column of `∂g/∂z`); they are excluded from root finding and
/// stability checks and keep whatever value the QSS map assigns.
#[derive(Clone)]
pub struct TwoTimeScaleSystem {
    f: Arc<SystemFn>,
    g: Arc<SystemFn>,
    qss: Option<Arc<QssFn>>,
    pub epsilon: f64,
    pub dims: (usize, usize, usize),
    pub fast_scales: Vec<f64>,
    pub neutral_fast: Vec<usize>,
}

impl std::fmt::Debug for TwoTimeScaleSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TwoTimeScaleSystem")
            .field("epsilon", &self.epsilon)
            .field("dims", &self.dims)
            .field("fast_scales", &self.fast_scales)
            .field("neutral_fast", &self.neutral_fast)
            .field("analytic_qss", &self.qss.is_some())
            .finish()
    }
}

impl TwoTimeScaleSystem {
    pub fn new<F, G>(dims: (usize, usize, usize), epsilon: f64, f: F, g: G) -> Result<Self>
    where
        F: Fn(&[f64], &[f64], &[f64], f64, &mut [f64]) + Send + Sync + 'static,
        G: Fn(&[f64], &[f64], &[f64], f64, &mut [f64]) + Send + Sync + 'static,
    {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive (got {epsilon})"
            )));
        }
        Ok(Self {
            f: Arc::new(f),
            g: Arc::new(g),
            qss: None,
            epsilon,
            dims,
            fast_scales: vec![epsilon; dims.1],
            neutral_fast: Vec::new(),
        })
    }

    pub fn with_qss<H>(mut self, h: H) -> Self
    where
        H: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.qss = Some(Arc::new(h));
        self
    }

    /// Per-fast-state scales; `epsilon` becomes their maximum.
    pub fn with_fast_scales(mut self, scales: Vec<f64>) -> Result<Self> {
        if scales.len() != self.dims.1 || scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "expected {} positive fast scales, got {scales:?}",
                self.dims.1
            )));
        }
        self.epsilon = scales.iter().copied().fold(0.0, f64::max);
        self.fast_scales = scales;
        Ok(self)
    }

    pub fn with_neutral_fast(mut self, idx: Vec<usize>) -> Self {
        self.neutral_fast = idx;
        self
    }

    pub fn has_analytic_qss(&self) -> bool {
        self.qss.is_some()
    }

    pub fn eval_f(&self, x: &[f64], z: &[f64], u: &[f64], eps: f64, out: &mut [f64]) {
        (self.f)(x, z, u, eps, out)
    }

    pub fn eval_g(&self, x: &[f64], z: &[f64], u: &[f64], eps: f64, out: &mut [f64]) {
        (self.g)(x, z, u, eps, out)
    }

    /// Fast indices that take part in root finding.
    pub fn active_fast(&self) -> Vec<usize> {
        (0..self.dims.1)
            .filter(|i| !self.neutral_fast.contains(i))
            .collect()
    }

    /// `‖g(x, z, u, 0)‖∞` over the active fast rows.
    pub fn qss_residual(&self, x: &[f64], z: &[f64], u: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dims.1];
        self.eval_g(x, z, u, 0.0, &mut g);
        g.iter()
            .enumerate()
            .filter(|(i, _)| !self.neutral_fast.contains(i))
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowFastPartition {
    pub slow_indices: Vec<usize>,
    pub fast_indices: Vec<usize>,
    pub per_state_coefficients: Vec<f64>,
}

impl SlowFastPartition {
    /// Split states by their time constants: the fast group is the smallest
    /// set of smallest coefficients whose largest member is at most
    /// `ratio` times the smallest remaining coefficient.
    pub fn identify(coefficients: &[f64], ratio: f64) -> Result<Self> {
        if coefficients.iter().any(|c| !(*c > 0.0)) {
            return Err(Error::InvalidParameter(
                "time constants must be positive".into(),
            ));
        }
        let mut order: Vec<usize> = (0..coefficients.len()).collect();
        order.sort_by(|&a, &b| coefficients[a].total_cmp(&coefficients[b]));
        let split = (1..order.len()).find(|&k| {
            coefficients[order[k - 1]] <= ratio * coefficients[order[k]] * (1.0 + 1e-12)
        });
        let Some(k) = split else {
            return Err(Error::InvalidParameter(format!(
                "no time-scale separation at ratio {ratio} in {coefficients:?}"
            )));
        };
        let mut fast_indices = order[..k].to_vec();
        let mut slow_indices = order[k..].to_vec();
        fast_indices.sort_unstable();
        slow_indices.sort_unstable();
        Ok(Self {
            slow_indices,
            fast_indices,
            per_state_coefficients: coefficients.to_vec(),
        })
    }

    /// Largest fast coefficient.
    pub fn epsilon(&self) -> f64 {
        self.fast_indices
            .iter()
            .map(|&i| self.per_state_coefficients[i])
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyBounds {
    pub mu: f64,
    pub b3: f64,
    pub b5: f64,
    pub b6: f64,
    pub k0: f64,
    pub a: f64,
    pub k1: f64,
}

impl AccuracyBounds {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("b3", self.b3),
            ("b5", self.b5),
            ("b6", self.b6),
            ("k0", self.k0),
            ("a", self.a),
            ("k1", self.k1),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite (got {v})"
                )));
            }
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mu must be non-negative (got {})",
                self.mu
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    QssOnly,
    QssPlusBoundaryLayer,
    Repartition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionDecision {
    pub verdict: Verdict,
    pub epsilon: f64,
    pub eps_star: f64,
    /// `None` when `a·T` admits no root below `1/e`.
    pub eps_double_star: Option<f64>,
    /// Time for the uncorrected fast error to settle at the actual ε.
    pub settle_time_t: f64,
    pub t_required: f64,
}

/// Root of `g(x, ·, u, 0)` near `z_guess`.
pub fn qss_solve(sys: &TwoTimeScaleSystem, x: &[f64], u: &[f64], z_guess: &[f64]) -> Result<Vec<f64>> {
    let m = sys.dims.1;
    if let Some(h) = &sys.qss {
        let mut z = vec![0.0; m];
        h(x, u, &mut z);
        let residual = sys.qss_residual(x, &z, u);
        if !(residual <= QSS_RESIDUAL_TOL) {
            return Err(Error::NoIsolatedRoot {
                iterations: 0,
                residual,
            });
        }
        return Ok(z);
    }
    newton_qss(sys, x, u, z_guess)
}

fn newton_qss(sys: &TwoTimeScaleSystem, x: &[f64], u: &[f64], z_guess: &[f64]) -> Result<Vec<f64>> {
    let m = sys.dims.1;
    let active = sys.active_fast();
    let k = active.len();
    let mut z = z_guess.to_vec();
    let mut g = vec![0.0; m];
    let mut gp = vec![0.0; m];
    let mut trial = vec![0.0; m];

    let norm = |g: &[f64]| active.iter().map(|&i| g[i].abs()).fold(0.0, f64::max);
    sys.eval_g(x, &z, u, 0.0, &mut g);
    let mut res = norm(&g);
    let mut polish = 0;
    for iter in 0..NEWTON_MAX_ITER {
        if !res.is_finite() {
            break;
        }
        if res <= NEWTON_TOL {
            if polish == NEWTON_POLISH || res == 0.0 {
                return Ok(z);
            }
            polish += 1;
        }
        let mut jac = DMatrix::zeros(k, k);
        for (c, &j) in active.iter().enumerate() {
            let step = (1e-8 * z[j].abs()).max(1e-8);
            trial.copy_from_slice(&z);
            trial[j] += step;
            let dz = trial[j] - z[j];
            sys.eval_g(x, &trial, u, 0.0, &mut gp);
            for (r, &i) in active.iter().enumerate() {
                jac[(r, c)] = (gp[i] - g[i]) / dz;
            }
        }
        if jac.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBlowup { t: f64::NAN });
        }
        let rhs = DVector::from_iterator(k, active.iter().map(|&i| -g[i]));
        let lu = jac.lu();
        let Some(delta) = lu.solve(&rhs).filter(|_| lu.is_invertible()) else {
            return Err(Error::SingularJacobian);
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=NEWTON_MAX_HALVINGS {
            trial.copy_from_slice(&z);
            for (r, &j) in active.iter().enumerate() {
                trial[j] += lambda * delta[r];
            }
            sys.eval_g(x, &trial, u, 0.0, &mut gp);
            let r_new = norm(&gp);
            if r_new < res || r_new <= NEWTON_TOL {
                z.copy_from_slice(&trial);
                g.copy_from_slice(&gp);
                res = r_new;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            if res <= NEWTON_TOL {
                return Ok(z);
            }
            return Err(Error::NoIsolatedRoot {
                iterations: iter + 1,
                residual: res,
            });
        }
    }
    if res <= NEWTON_TOL {
        return Ok(z);
    }
    Err(Error::NoIsolatedRoot {
        iterations: NEWTON_MAX_ITER,
        residual: res,
    })
}

/// Largest QSS residual seen at accepted steps of a reduced run.
#[derive(Debug, Clone, Default)]
pub struct QssMonitor {
    max_residual: Rc<Cell<f64>>,
    checks: Rc<Cell<usize>>,
}

impl QssMonitor {
    pub fn max_residual(&self) -> f64 {
        self.max_residual.get()
    }

    pub fn checks(&self) -> usize {
        self.checks.get()
    }

    fn record(&self, r: f64) {
        let r = if r.is_nan() { f64::INFINITY } else { r };
        self.max_residual.set(self.max_residual.get().max(r));
        self.checks.set(self.checks.get() + 1);
    }
}

struct ReducedRhs {
    sys: TwoTimeScaleSystem,
    /// Last QSS solution; also the warm start of the next Newton solve.
    z: RefCell<Vec<f64>>,
    failure: RefCell<Option<Error>>,
    monitor: QssMonitor,
}

impl ReducedRhs {
    /// Write `h(x, u)` into the scratch buffer.
    fn h(&self, x: &[f64], u: &[f64]) -> Result<()> {
        let mut z = self.z.borrow_mut();
        match &self.sys.qss {
            Some(h) => h(x, u, &mut z),
            None => {
                let root = newton_qss(&self.sys, x, u, &z)?;
                z.copy_from_slice(&root);
            }
        }
        Ok(())
    }
}

impl OdeRhs for ReducedRhs {
    fn dim(&self) -> usize {
        self.sys.dims.0
    }

    fn eval(&self, t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        match self.h(x, u) {
            Ok(()) => self.sys.eval_f(x, &self.z.borrow(), u, 0.0, dx),
            Err(e) => {
                let mut slot = self.failure.borrow_mut();
                if slot.is_none() {
                    *slot = Some(e.annotate(format!("QSS solve failed at t = {t}, x = {x:?}")));
                }
                dx.fill(f64::NAN);
            }
        }
    }

    fn accept_step(&mut self, _t: f64, x: &[f64], u: &[f64]) -> bool {
        let r = match self.h(x, u) {
            Ok(()) => self.sys.qss_residual(x, &self.z.borrow(), u),
            Err(_) => f64::INFINITY,
        };
        self.monitor.record(r);
        false
    }

    fn take_error(&self) -> Option<Error> {
        self.failure.borrow_mut().take()
    }
}

/// Reduced model `ẋ = f(x, h(x, u), u, 0)` over the slow states.
pub fn build_reduced<'a>(
    sys: &TwoTimeScaleSystem,
    input: InputSignal,
    x0: Vec<f64>,
    t_span: (f64, f64),
) -> OdeProblem<'a> {
    build_reduced_monitored(sys, input, x0, t_span).0
}

/// [`build_reduced`] plus a monitor of the QSS residual at accepted steps.
pub fn build_reduced_monitored<'a>(
    sys: &TwoTimeScaleSystem,
    input: InputSignal,
    x0: Vec<f64>,
    t_span: (f64, f64),
) -> (OdeProblem<'a>, QssMonitor) {
    build_reduced_from(sys, input, x0, vec![0.0; sys.dims.1], t_span)
}

/// Monitored reduced model with a warm start for iterative QSS solves.
pub fn build_reduced_from<'a>(
    sys: &TwoTimeScaleSystem,
    input: InputSignal,
    x0: Vec<f64>,
    z_guess: Vec<f64>,
    t_span: (f64, f64),
) -> (OdeProblem<'a>, QssMonitor) {
    let monitor = QssMonitor::default();
    let rhs = ReducedRhs {
        sys: sys.clone(),
        z: RefCell::new(z_guess),
        failure: RefCell::new(None),
        monitor: monitor.clone(),
    };
    (OdeProblem::new(rhs, input, x0, t_span), monitor)
}

struct BoundaryRhs {
    sys: TwoTimeScaleSystem,
    x: Vec<f64>,
    u: Vec<f64>,
    h: Vec<f64>,
    g_at_h: Vec<f64>,
    real_time: bool,
}

impl OdeRhs for BoundaryRhs {
    fn dim(&self) -> usize {
        self.sys.dims.1
    }

    fn eval(&self, _tau: f64, y: &[f64], _u: &[f64], dy: &mut [f64]) {
        let z: Vec<f64> = y.iter().zip(&self.h).map(|(a, b)| a + b).collect();
        self.sys.eval_g(&self.x, &z, &self.u, 0.0, dy);
        for &i in &self.sys.neutral_fast {
            dy[i] -= self.g_at_h[i];
        }
        if self.real_time {
            for (d, e) in dy.iter_mut().zip(&self.sys.fast_scales) {
                *d /= e;
            }
        }
    }
}

/// Boundary-layer model `dy/dτ = g(x, y + h(x, u), u, 0)` with `(x, u)` frozen.
///
/// Neutral rows carry only the deviation `g(x, y + h, u, 0) − g(x, h, u, 0)`.
pub fn build_boundary_layer<'a>(
    sys: &TwoTimeScaleSystem,
    x_frozen: &[f64],
    u_frozen: &[f64],
    y0: Vec<f64>,
    tau_end: f64,
) -> Result<OdeProblem<'a>> {
    boundary_problem(sys, x_frozen, u_frozen, y0, tau_end, false)
}

/// Boundary-layer model in original time: row `i` evolves as
/// `dy_i/dt = g_i(x, y + h, u, 0)/ε_i`, so the correction can be added to
/// `h(x(t), u(t))` directly when fast scales differ.
pub fn build_boundary_correction<'a>(
    sys: &TwoTimeScaleSystem,
    x_frozen: &[f64],
    u_frozen: &[f64],
    y0: Vec<f64>,
    t_end: f64,
) -> Result<OdeProblem<'a>> {
    boundary_problem(sys, x_frozen, u_frozen, y0, t_end, true)
}

fn boundary_problem<'a>(
    sys: &TwoTimeScaleSystem,
    x_frozen: &[f64],
    u_frozen: &[f64],
    y0: Vec<f64>,
    tau_end: f64,
    real_time: bool,
) -> Result<OdeProblem<'a>> {
    let h = qss_solve(sys, x_frozen, u_frozen, &vec![0.0; sys.dims.1])?;
    let mut g_at_h = vec![0.0; sys.dims.1];
    sys.eval_g(x_frozen, &h, u_frozen, 0.0, &mut g_at_h);
    let rhs = BoundaryRhs {
        sys: sys.clone(),
        x: x_frozen.to_vec(),
        u: u_frozen.to_vec(),
        h,
        g_at_h,
        real_time,
    };
    Ok(OdeProblem::new(
        rhs,
        InputSignal::constant(vec![]),
        y0,
        (0.0, tau_end),
    ))
}

struct FullRhs {
    sys: TwoTimeScaleSystem,
}

impl OdeRhs for FullRhs {
    fn dim(&self) -> usize {
        self.sys.dims.0 + self.sys.dims.1
    }

    fn eval(&self, _t: f64, s: &[f64], u: &[f64], ds: &mut [f64]) {
        let n = self.sys.dims.0;
        let (x, z) = s.split_at(n);
        let (dx, dz) = ds.split_at_mut(n);
        self.sys.eval_f(x, z, u, self.sys.epsilon, dx);
        self.sys.eval_g(x, z, u, self.sys.epsilon, dz);
        for (d, e) in dz.iter_mut().zip(&self.sys.fast_scales) {
            *d /= e;
        }
    }
}

/// Original two-time-scale model over the stacked state `[x; z]`.
pub fn full_problem<'a>(
    sys: &TwoTimeScaleSystem,
    input: InputSignal,
    x0: &[f64],
    z0: &[f64],
    t_span: (f64, f64),
) -> OdeProblem<'a> {
    let state = x0.iter().chain(z0).copied().collect();
    OdeProblem::new(FullRhs { sys: sys.clone() }, input, state, t_span)
}

/// Ordinary least-squares fit `y ≈ slope·x + intercept`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(Error::InsufficientData { needed: 2, got: n.min(ys.len()) });
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData { needed: 2, got: 1 });
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Fit `‖y(τ)‖ ≈ k1·e^{−aτ}`; returns `(k1, a)`.
pub fn estimate_decay(traj: &Trajectory) -> Result<(f64, f64)> {
    let all: Vec<usize> = (0..traj.dim()).collect();
    estimate_decay_masked(traj, &all)
}

/// [`estimate_decay`] using only the listed components for the norm.
pub fn estimate_decay_masked(traj: &Trajectory, components: &[usize]) -> Result<(f64, f64)> {
    let (times, states) = uniform_samples(traj)?;
    let norm = |s: &[f64]| components.iter().map(|&i| s[i] * s[i]).sum::<f64>().sqrt();
    let n0 = norm(&states[0]);
    if n0 == 0.0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (t, s) in times.iter().zip(&states) {
        let v = norm(s);
        if (1e-8..=0.9 * n0).contains(&v) {
            xs.push(*t);
            ys.push(v.ln());
        }
    }
    if xs.len() < 2 {
        let last = norm(states.last().expect("non-empty"));
        if last >= 0.9 * n0 {
            return Err(Error::NotExponentiallyStable { slope: 0.0 });
        }
        return Err(Error::InsufficientData {
            needed: 2,
            got: xs.len(),
        });
    }
    let (slope, intercept) = least_squares_slope(&xs, &ys)?;
    if !(slope < 0.0) {
        return Err(Error::NotExponentiallyStable { slope });
    }
    Ok((intercept.exp(), -slope))
}

const DECAY_SAMPLES: usize = 2000;

fn uniform_samples(traj: &Trajectory) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let (t0, t1) = traj
        .t_range()
        .ok_or(Error::InsufficientData { needed: 2, got: 0 })?;
    if traj.stats.steps_accepted == 0 || traj.len() < 2 {
        return Ok((traj.times.clone(), traj.states.clone()));
    }
    let grid: Vec<f64> = (0..=DECAY_SAMPLES)
        .map(|k| t0 + (t1 - t0) * k as f64 / DECAY_SAMPLES as f64)
        .map(|t| t.min(t1))
        .collect();
    let states = traj.sample(&grid)?;
    Ok((grid, states))
}

pub fn epsilon_star(b: &AccuracyBounds) -> f64 {
    b.b3 / (b.b5 * b.k0 + b.b6 * b.mu)
}

/// Smaller root of `ε·ln(1/ε) = a·T` in `(0, 1/e)`.
pub fn solve_eps_double_star(a: f64, t: f64) -> Result<f64> {
    if !(a > 0.0 && t > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "a and T must be positive (got a = {a}, T = {t})"
        )));
    }
    let target = a * t;
    let e_inv = (-1.0f64).exp();
    if target >= e_inv {
        return Err(Error::NoSolution {
            requested: target,
            max_attainable: e_inv,
        });
    }
    let phi = |e: f64| e * (1.0 / e).ln() - target;
    let (mut lo, mut hi) = (0.0f64, e_inv);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..2000 {
        mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let best = [lo, mid, hi]
        .into_iter()
        .filter(|e| *e > 0.0)
        .min_by(|a, b| phi(*a).abs().total_cmp(&phi(*b).abs()))
        .unwrap_or(mid);
    Ok(best)
}

/// Settle time `T = ε·ln(1/ε)/a`.
pub fn solve_t_given_eps(a: f64, eps: f64) -> Result<f64> {
    if !(a > 0.0) || !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need a > 0 and 0 < eps < 1 (got a = {a}, eps = {eps})"
        )));
    }
    Ok(eps * (1.0 / eps).ln() / a)
}

/// Reduction decision for `sys` given the accuracy constants and a
/// required settle time.
pub fn assess(sys: &TwoTimeScaleSystem, b: &AccuracyBounds, t_required: f64) -> Result<ReductionDecision> {
    b.validate()?;
    let eps = sys.epsilon;
    let eps_star = epsilon_star(b);
    let eps_double_star = match solve_eps_double_star(b.a, t_required) {
        Ok(e) => Some(e),
        Err(Error::NoSolution { .. }) => None,
        Err(e) => return Err(e),
    };
    let verdict = if eps > eps_star {
        Verdict::Repartition
    } else if eps_double_star.is_some_and(|e2| eps <= e2) {
        Verdict::QssOnly
    } else {
        Verdict::QssPlusBoundaryLayer
    };
    let settle_time_t = if eps < 1.0 { eps * (1.0 / eps).ln() / b.a } else { 0.0 };
    Ok(ReductionDecision {
        verdict,
        epsilon: eps,
        eps_star,
        eps_double_star,
        settle_time_t,
        t_required,
    })
}

/// Growth constants `(k0, b3, b5, b6)` estimated over sample points.
///
/// `k0` is the largest reduced slow-field norm; `b5`, `b6` bound the
/// coupling `‖2P·∂h/∂x‖`, `‖2P·∂h/∂u‖` where `P` solves `AᵀP + PA = −I` for
/// the boundary-layer linearization `A` (so `b3 = 1`).
pub fn estimate_growth_constants(
    sys: &TwoTimeScaleSystem,
    points: &[(Vec<f64>, Vec<f64>)],
) -> Result<(f64, f64, f64, f64)> {
    let (n, m, p) = sys.dims;
    let active = sys.active_fast();
    let k = active.len();
    let mut k0: f64 = 0.0;
    let mut b5: f64 = 0.0;
    let mut b6: f64 = 0.0;
    let mut z_guess = vec![0.0; m];
    for (x, u) in points {
        let h = qss_solve(sys, x, u, &z_guess)?;
        z_guess.clone_from(&h);
        let mut fx = vec![0.0; n];
        sys.eval_f(x, &h, u, 0.0, &mut fx);
        k0 = k0.max(fx.iter().map(|v| v * v).sum::<f64>().sqrt());

        let a = fast_jacobian(sys, x, &h, u, &active);
        let pm = solve_lyapunov(&a)?;

        let dh_dx = qss_sensitivity(sys, x, u, &h, n, |v, j, d| {
            let mut v = v.0.to_vec();
            v[j] += d;
            v
        }, true)?;
        let dh_du = qss_sensitivity(sys, x, u, &h, p, |v, j, d| {
            let mut v = v.1.to_vec();
            v[j] += d;
            v
        }, false)?;
        let sel = |full: &DMatrix<f64>| {
            DMatrix::from_fn(k, full.ncols(), |r, c| full[(active[r], c)])
        };
        b5 = b5.max((&pm * sel(&dh_dx) * 2.0).norm());
        b6 = b6.max((&pm * sel(&dh_du) * 2.0).norm());
    }
    let floor = 1e-12;
    Ok((k0.max(floor), 1.0, b5.max(floor), b6.max(floor)))
}

fn fast_jacobian(sys: &TwoTimeScaleSystem, x: &[f64], z: &[f64], u: &[f64], active: &[usize]) -> DMatrix<f64> {
    let m = sys.dims.1;
    let mut g0 = vec![0.0; m];
    let mut g1 = vec![0.0; m];
    sys.eval_g(x, z, u, 0.0, &mut g0);
    let k = active.len();
    let mut a = DMatrix::zeros(k, k);
    let mut zp = z.to_vec();
    for (c, &j) in active.iter().enumerate() {
        let step = (1e-7 * z[j].abs()).max(1e-7);
        zp[j] = z[j] + step;
        sys.eval_g(x, &zp, u, 0.0, &mut g1);
        for (r, &i) in active.iter().enumerate() {
            a[(r, c)] = (g1[i] - g0[i]) / step;
        }
        zp[j] = z[j];
    }
    a
}

fn qss_sensitivity<F>(
    sys: &TwoTimeScaleSystem,
    x: &[f64],
    u: &[f64],
    h: &[f64],
    cols: usize,
    perturb: F,
    wrt_x: bool,
) -> Result<DMatrix<f64>>
where
    F: Fn((&[f64], &[f64]), usize, f64) -> Vec<f64>,
{
    let m = sys.dims.1;
    let mut out = DMatrix::zeros(m, cols);
    for j in 0..cols {
        let base = if wrt_x { x[j] } else { u[j] };
        let d = (1e-6 * base.abs()).max(1e-6);
        let moved = perturb((x, u), j, d);
        let hp = if wrt_x {
            qss_solve(sys, &moved, u, h)?
        } else {
            qss_solve(sys, x, &moved, h)?
        };
        for i in 0..m {
            out[(i, j)] = (hp[i] - h[i]) / d;
        }
    }
    Ok(out)
}

/// Solve `AᵀP + PA = −I` by vectorization.
pub fn solve_lyapunov(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = a.nrows();
    let eye = DMatrix::<f64>::identity(k, k);
    let at = a.transpose();
    let big = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_iterator(k * k, (-&eye).iter().copied());
    let lu = big.lu();
    if !lu.is_invertible() {
        return Err(Error::SingularJacobian);
    }
    let v = lu.solve(&rhs).ok_or(Error::SingularJacobian)?;
    let pm = DMatrix::from_column_slice(k, k, v.as_slice());
    Ok((&pm + pm.transpose()) * 0.5)
}

/// Sup-norm of the slow-state error on a uniform grid over the common range.
pub fn sup_norm_error(
    full: &Trajectory,
    reduced: &Trajectory,
    slow_indices: &[usize],
    grid_step: f64,
) -> Result<f64> {
    let (a0, a1) = full.t_range().ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
    let (b0, b1) = reduced.t_range().ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
    let (t0, t1) = (a0.max(b0), a1.min(b1));
    let grid = uniform_grid(t0, t1, grid_step);
    let xf = full.sample(&grid)?;
    let xr = reduced.sample(&grid)?;
    let mut worst: f64 = 0.0;
    for (sf, sr) in xf.iter().zip(&xr) {
        for (r, &i) in slow_indices.iter().enumerate() {
            worst = worst.max((sf[i] - sr[r]).abs());
        }
    }
    Ok(worst)
}

/// Uniform grid from `t0` to `t1` inclusive with spacing `step`.
pub fn uniform_grid(t0: f64, t1: f64, step: f64) -> Vec<f64> {
    let n = ((t1 - t0) / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|k| t0 + k as f64 * step).collect();
    if let Some(last) = grid.last_mut() {
        if *last > t1 {
            *last = t1;
        }
    }
    if grid.last().is_some_and(|&t| t1 - t > 1e-12 * t1.abs().max(1.0)) {
        grid.push(t1);
    }
    grid
}

/// Least-squares slope of `log(error)` against `log(ε)`, with slow-state
/// errors measured on a 1 ms grid. `reduced` holds either one trajectory
/// shared by all ε or one per ε.
pub fn trajectory_error_order(
    full: &[Trajectory],
    reduced: &[Trajectory],
    eps_values: &[f64],
    slow_indices: &[usize],
) -> Result<f64> {
    if eps_values.len() < 3 || full.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: eps_values.len().min(full.len()),
        });
    }
    if full.len() != eps_values.len() || !(reduced.len() == 1 || reduced.len() == full.len()) {
        return Err(Error::InvalidParameter(
            "full runs, reduced runs and eps values must line up".into(),
        ));
    }
    let errors = full
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let r = if reduced.len() == 1 { &reduced[0] } else { &reduced[k] };
            sup_norm_error(f, r, slow_indices, 1e-3)
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_error = errors.iter().copied().fold(0.0, f64::max);
    if max_error < NEAR_ZERO_ERROR || errors.iter().any(|e| *e <= 0.0) {
        return Err(Error::NearZeroError { max_error });
    }
    let xs: Vec<f64> = eps_values.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    Ok(least_squares_slope(&xs, &ys)?.0)
}
