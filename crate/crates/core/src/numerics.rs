//! Piecewise nonlinear control blocks and time-varying input signals.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval used by the saturation blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatLimits {
    pub lo: f64,
    pub hi: f64,
}

impl SatLimits {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::InvalidParameter(format!(
                "saturation limits must satisfy lo <= hi (got [{lo}, {hi}])"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub const fn unbounded() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub const fn at_least(lo: f64) -> Self {
        Self {
            lo,
            hi: f64::INFINITY,
        }
    }

    pub const fn at_most(hi: f64) -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeadbandLimits {
    pub db_lo: f64,
    pub db_hi: f64,
}

impl DeadbandLimits {
    pub fn new(db_lo: f64, db_hi: f64) -> Result<Self> {
        if !(db_lo <= 0.0 && db_hi >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "deadband must satisfy db_lo <= 0 <= db_hi (got [{db_lo}, {db_hi}])"
            )));
        }
        Ok(Self { db_lo, db_hi })
    }
}

#[inline]
pub fn saturate(x: f64, lim: SatLimits) -> f64 {
    x.max(lim.lo).min(lim.hi)
}

/// Deadband with offset output: zero inside the band, distance past the edge outside it.
#[inline]
pub fn deadband(x: f64, db: DeadbandLimits) -> f64 {
    if x > db.db_hi {
        x - db.db_hi
    } else if x < db.db_lo {
        x - db.db_lo
    } else {
        0.0
    }
}

/// Break-points, timers and recovery fraction of the inverter voltage cut-out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageProtectionParams {
    pub v_l0: f64,
    pub v_l1: f64,
    pub v_h0: f64,
    pub v_h1: f64,
    pub t_vl0: f64,
    pub t_vl1: f64,
    pub t_vh0: f64,
    pub t_vh1: f64,
    pub v_rfrac: f64,
}

impl VoltageProtectionParams {
    pub fn validate(&self) -> Result<()> {
        let ordered = self.v_l0 < self.v_l1 && self.v_l1 < self.v_h1 && self.v_h1 < self.v_h0;
        if !ordered {
            return Err(Error::InvalidParameter(format!(
                "voltage protection break-points must satisfy vl0 < vl1 < vh1 < vh0 (got {} {} {} {})",
                self.v_l0, self.v_l1, self.v_h1, self.v_h0
            )));
        }
        if [self.t_vl0, self.t_vl1, self.t_vh0, self.t_vh1]
            .iter()
            .any(|t| !(*t >= 0.0))
        {
            return Err(Error::InvalidParameter(
                "voltage protection timers must be non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.v_rfrac) {
            return Err(Error::InvalidParameter(format!(
                "vrfrac must lie in [0, 1] (got {})",
                self.v_rfrac
            )));
        }
        Ok(())
    }

    /// Memoryless fraction-online curve.
    pub fn curve(&self, v: f64) -> f64 {
        if v < self.v_l0 || v > self.v_h0 {
            0.0
        } else if v < self.v_l1 {
            (v - self.v_l0) / (self.v_l1 - self.v_l0)
        } else if v > self.v_h1 {
            (self.v_h0 - v) / (self.v_h0 - self.v_h1)
        } else {
            1.0
        }
    }

    pub fn in_normal_band(&self, v: f64) -> bool {
        v >= self.v_l1 && v <= self.v_h1
    }
}

/// Latch state of the voltage cut-out.
///
/// `level` is the fraction of devices still in service after earlier
/// excursions; `latched` is the lowest curve value recorded since the current
/// excursion outlived its timer (1 when nothing is latched).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VpMemory {
    pub level: f64,
    pub latched: f64,
    low1_since: Option<f64>,
    low0_since: Option<f64>,
    high1_since: Option<f64>,
    high0_since: Option<f64>,
}

impl Default for VpMemory {
    fn default() -> Self {
        Self::fresh()
    }
}

impl VpMemory {
    pub const fn fresh() -> Self {
        Self {
            level: 1.0,
            latched: 1.0,
            low1_since: None,
            low0_since: None,
            high1_since: None,
            high0_since: None,
        }
    }

    /// Multiplier for voltage `v` given the committed memory; does not advance timers.
    pub fn multiplier(&self, v: f64, vp: &VoltageProtectionParams) -> f64 {
        if self.latched < 1.0 {
            if vp.in_normal_band(v) {
                self.level * (self.latched + vp.v_rfrac * (1.0 - self.latched))
            } else {
                self.level * vp.curve(v).min(self.latched)
            }
        } else {
            self.level * vp.curve(v)
        }
    }

    /// Advance timers and latches with the sample `(t, v)`.
    pub fn update(&self, v: f64, t: f64, vp: &VoltageProtectionParams) -> Self {
        let mut next = *self;
        let track = |since: Option<f64>, active: bool| if active { Some(since.unwrap_or(t)) } else { None };
        next.low1_since = track(self.low1_since, v < vp.v_l1);
        next.low0_since = track(self.low0_since, v < vp.v_l0);
        next.high1_since = track(self.high1_since, v > vp.v_h1);
        next.high0_since = track(self.high0_since, v > vp.v_h0);

        if vp.in_normal_band(v) {
            if self.latched < 1.0 {
                next.level = self.level * (self.latched + vp.v_rfrac * (1.0 - self.latched));
                next.latched = 1.0;
            }
            return next;
        }

        let expired = |since: Option<f64>, timer: f64| since.is_some_and(|s| t - s >= timer);
        if expired(next.low1_since, vp.t_vl1)
            || expired(next.low0_since, vp.t_vl0)
            || expired(next.high1_since, vp.t_vh1)
            || expired(next.high0_since, vp.t_vh0)
        {
            next.latched = self.latched.min(vp.curve(v));
        }
        next
    }
}

/// Voltage cut-out multiplier at `(t, v)`, returning the advanced memory.
pub fn voltage_protection(
    v: f64,
    t: f64,
    vp: &VoltageProtectionParams,
    memory: VpMemory,
) -> (f64, VpMemory) {
    let next = memory.update(v, t, vp);
    (next.multiplier(v, vp), next)
}

type SignalFn = dyn Fn(f64, &mut [f64]) + Send + Sync;

/// Vector-valued input `u(t)` with known discontinuities.
#[derive(Clone)]
pub struct InputSignal {
    dim: usize,
    evaluator: Arc<SignalFn>,
    derivative: Option<Arc<SignalFn>>,
    horizon: (f64, f64),
    breakpoints: Vec<f64>,
}

impl std::fmt::Debug for InputSignal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InputSignal")
            .field("dim", &self.dim)
            .field("horizon", &self.horizon)
            .field("breakpoints", &self.breakpoints)
            .finish_non_exhaustive()
    }
}

impl InputSignal {
    pub fn constant(values: Vec<f64>) -> Self {
        let dim = values.len();
        Self::from_fn(dim, move |_, out| out.copy_from_slice(&values))
            .with_derivative(|_, out| out.fill(0.0))
    }

    pub fn from_fn<F>(dim: usize, evaluator: F) -> Self
    where
        F: Fn(f64, &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            dim,
            evaluator: Arc::new(evaluator),
            derivative: None,
            horizon: (f64::NEG_INFINITY, f64::INFINITY),
            breakpoints: Vec::new(),
        }
    }

    pub fn with_derivative<F>(mut self, derivative: F) -> Self
    where
        F: Fn(f64, &mut [f64]) + Send + Sync + 'static,
    {
        self.derivative = Some(Arc::new(derivative));
        self
    }

    pub fn with_horizon(mut self, start: f64, end: f64) -> Self {
        self.horizon = (start, end);
        self
    }

    pub fn with_breakpoints(mut self, mut breakpoints: Vec<f64>) -> Self {
        breakpoints.retain(|t| t.is_finite());
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        self.breakpoints = breakpoints;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> (f64, f64) {
        self.horizon
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Evaluate without horizon checks.
    #[inline]
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        (self.evaluator)(t, out)
    }

    /// Left limit `u(t-)`, used when a step ends on a discontinuity.
    #[inline]
    pub fn eval_left_into(&self, t: f64, out: &mut [f64]) {
        (self.evaluator)(t.next_down(), out)
    }

    pub fn derivative_at(&self, t: f64) -> Option<Vec<f64>> {
        self.derivative.as_ref().map(|d| {
            let mut out = vec![0.0; self.dim];
            d(t, &mut out);
            out
        })
    }
}

pub fn evaluate_input(sig: &InputSignal, t: f64) -> Result<Vec<f64>> {
    let (start, end) = sig.horizon;
    if !(t >= start && t <= end) {
        return Err(Error::Domain { t, start, end });
    }
    let mut out = vec![0.0; sig.dim];
    sig.eval_into(t, &mut out);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalBlowup { t });
    }
    Ok(out)
}
