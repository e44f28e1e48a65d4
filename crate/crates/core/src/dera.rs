//! Aggregate distributed-energy-resource model: ten-state full model with
//! flag-selected branches, the four-state reduced model and the six-state
//! boundary-layer correction of the fast current loops.
//!
//! Frequency is carried in per-unit of 60 Hz. Per-unit power uses the
//! generator convention `P = Vt·id`, `Q = −Vt·iq`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    deadband, saturate, voltage_protection, DeadbandLimits, SatLimits, VoltageProtectionParams,
    VpMemory,
};
use crate::odesolve::OdeRhs;
use crate::spt::TwoTimeScaleSystem;

pub const NOMINAL_HZ: f64 = 60.0;
/// Floor of the voltage divisor `sat1`.
pub const SAT1_FLOOR: f64 = 0.01;

/// Slow states of the full model, in state order.
pub const SLOW_INDICES: [usize; 4] = [0, 1, 5, 7];
/// Fast states of the full model, in state order.
pub const FAST_INDICES: [usize; 6] = [2, 3, 4, 6, 8, 9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeraFlags {
    pub pf_flag: bool,
    pub v_tripflag: bool,
    pub freq_flag: bool,
    pub f_tripflag: bool,
    pub pq_flag: bool,
    pub typeflag: bool,
}

impl DeraFlags {
    pub const fn reference() -> Self {
        Self {
            pf_flag: true,
            v_tripflag: true,
            freq_flag: false,
            f_tripflag: true,
            pq_flag: false,
            typeflag: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeraParams {
    pub trv: f64,
    pub tp: f64,
    pub tiq: f64,
    pub tg: f64,
    pub tv: f64,
    pub trf: f64,
    pub tpord: f64,
    pub kqv: f64,
    pub kpg: f64,
    pub kig: f64,
    pub ddn: f64,
    pub dup: f64,
    pub gdn: f64,
    pub gup: f64,
    /// Zero selects the initial terminal voltage.
    pub vref0: f64,
    pub pfaref: f64,
    pub qref: f64,
    pub pref: f64,
    pub freq_ref: f64,
    pub imax: f64,
    pub iql1: f64,
    pub iqh1: f64,
    pub pmin: f64,
    pub pmax: f64,
    pub dpmin: f64,
    pub dpmax: f64,
    pub femin: f64,
    pub femax: f64,
    pub dbd1: f64,
    pub dbd2: f64,
    pub fdbd1: f64,
    pub fdbd2: f64,
    pub vp: VoltageProtectionParams,
    pub xe: f64,
    pub vpr: f64,
    pub flags: DeraFlags,
}

impl Default for DeraParams {
    fn default() -> Self {
        Self::reference()
    }
}

impl DeraParams {
    pub fn reference() -> Self {
        Self {
            trv: 0.1,
            tp: 0.1,
            tiq: 0.005,
            tg: 0.005,
            tv: 0.005,
            trf: 0.1,
            tpord: 0.005,
            kqv: 5.0,
            kpg: 0.1,
            kig: 10.0,
            ddn: 20.0,
            dup: 0.0,
            gdn: 0.0,
            gup: 0.0,
            vref0: 0.0,
            pfaref: 0.0,
            qref: 0.0,
            pref: 0.0,
            freq_ref: 1.0,
            imax: 1.2,
            iql1: -1.0,
            iqh1: 1.0,
            pmin: 0.0,
            pmax: 1.1,
            dpmin: -0.5,
            dpmax: 0.5,
            femin: -99.0,
            femax: 99.0,
            dbd1: -0.05,
            dbd2: 0.05,
            fdbd1: -0.0006,
            fdbd2: 0.0006,
            vp: VoltageProtectionParams {
                v_l0: 0.44,
                v_l1: 0.49,
                v_h0: 1.2,
                v_h1: 1.15,
                t_vl0: 0.16,
                t_vl1: 0.16,
                t_vh0: 0.16,
                t_vh1: 0.16,
                v_rfrac: 0.7,
            },
            xe: 0.25,
            vpr: 0.8,
            flags: DeraFlags::reference(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let taus = [
            ("Trv", self.trv),
            ("Tp", self.tp),
            ("Tiq", self.tiq),
            ("Tg", self.tg),
            ("Tv", self.tv),
            ("Trf", self.trf),
            ("Tpord", self.tpord),
        ];
        for (name, v) in taus {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive (got {v})")));
            }
        }
        if self.trf < 0.02 {
            return Err(Error::InvalidParameter(format!("Trf must be at least 0.02 s (got {})", self.trf)));
        }
        let pairs = [
            ("Iql1/Iqh1", self.iql1, self.iqh1),
            ("Pmin/Pmax", self.pmin, self.pmax),
            ("dPmin/dPmax", self.dpmin, self.dpmax),
            ("femin/femax", self.femin, self.femax),
        ];
        for (name, lo, hi) in pairs {
            SatLimits::new(lo, hi).map_err(|_| Error::InvalidParameter(format!("{name} must be ordered (got {lo}, {hi})")))?;
        }
        DeadbandLimits::new(self.dbd1, self.dbd2)?;
        DeadbandLimits::new(self.fdbd1, self.fdbd2)?;
        if !(self.imax > 0.0) {
            return Err(Error::InvalidParameter(format!("Imax must be positive (got {})", self.imax)));
        }
        self.vp.validate()
    }

    /// Time constant multiplying each state derivative, in state order.
    /// The ramp-limited power order has none and is reported as 1.
    pub fn perturbation_coefficients(&self) -> [f64; 10] {
        [
            self.trv,
            self.tp,
            self.tiq,
            self.tg,
            self.tv,
            self.trf,
            self.tp * self.trf,
            1.0,
            self.tpord,
            self.tg,
        ]
    }

    /// Normalization of each fast equation, in fast-state order.
    pub fn fast_scales(&self) -> [f64; 6] {
        [self.tiq, self.tg, self.tv, self.tp * self.trf, self.tpord, self.tg]
    }

    fn sat1(&self) -> SatLimits {
        SatLimits::at_least(SAT1_FLOOR)
    }

    fn sat3(&self) -> SatLimits {
        SatLimits { lo: self.iql1, hi: self.iqh1 }
    }

    fn dbv(&self) -> DeadbandLimits {
        DeadbandLimits { db_lo: self.dbd1, db_hi: self.dbd2 }
    }

    fn dbf(&self) -> DeadbandLimits {
        DeadbandLimits { db_lo: self.fdbd1, db_hi: self.fdbd2 }
    }

    fn sat7(&self) -> SatLimits {
        SatLimits { lo: self.pmin, hi: self.pmax }
    }

    /// `sat2` on the q-current given the present d-current.
    fn sat2(&self, id: f64) -> SatLimits {
        let mut lo = self.iql1.max(-self.imax);
        let mut hi = self.iqh1.min(self.imax);
        if self.flags.pq_flag {
            let room = (self.imax * self.imax - id * id).max(0.0).sqrt();
            lo = lo.max(-room);
            hi = hi.min(room);
        }
        SatLimits { lo: lo.min(hi), hi }
    }

    /// `sat9` on the d-current given the present q-current.
    fn sat9(&self, iq: f64) -> SatLimits {
        let ipmax = if self.flags.pq_flag {
            self.imax
        } else {
            (self.imax * self.imax - iq * iq).max(0.0).sqrt()
        };
        let ipmin = if self.flags.typeflag { -ipmax } else { 0.0 };
        SatLimits { lo: ipmin, hi: ipmax }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DeraFullState {
    pub s: [f64; 10],
}

impl DeraFullState {
    pub const NAMES: [&'static str; 10] = ["S0", "S1", "S2", "S3", "S4", "S5", "S6", "S7", "S8", "S9"];

    pub fn from_slice(v: &[f64]) -> Self {
        let mut s = [0.0; 10];
        s.copy_from_slice(&v[..10]);
        Self { s }
    }

    pub fn slow(&self) -> DeraReducedState {
        DeraReducedState {
            x1: self.s[0],
            x2: self.s[1],
            x3: self.s[5],
            x4: self.s[7],
        }
    }

    pub fn fast(&self) -> [f64; 6] {
        FAST_INDICES.map(|i| self.s[i])
    }

    pub fn from_parts(x: &[f64], z: &[f64]) -> Self {
        let mut s = [0.0; 10];
        for (k, &i) in SLOW_INDICES.iter().enumerate() {
            s[i] = x[k];
        }
        for (k, &i) in FAST_INDICES.iter().enumerate() {
            s[i] = z[k];
        }
        Self { s }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DeraReducedState {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub x4: f64,
}

impl DeraReducedState {
    pub const NAMES: [&'static str; 4] = ["S0", "S1", "S5", "S7"];

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            x1: v[0],
            x2: v[1],
            x3: v[2],
            x4: v[3],
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x1, self.x2, self.x3, self.x4]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DeraBoundaryState {
    pub y: [f64; 6],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeraInputs {
    pub vt: f64,
    /// Per-unit of 60 Hz.
    pub freq: f64,
}

impl DeraInputs {
    pub fn from_hz(vt: f64, hz: f64) -> Self {
        Self { vt, freq: hz / NOMINAL_HZ }
    }

    pub fn from_slice(u: &[f64]) -> Self {
        Self { vt: u[0], freq: u[1] }
    }
}

/// Equilibrium state together with the set-points that hold it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeraEquilibrium {
    pub state: DeraFullState,
    pub params: DeraParams,
}

fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalBlowup { t: f64::NAN })
    }
}

fn q_feedforward(s0: f64, s1: f64, prm: &DeraParams) -> f64 {
    let v = saturate(s0, prm.sat1());
    if prm.flags.pf_flag {
        prm.pfaref.tan() * s1 / v
    } else {
        prm.qref / v
    }
}

fn voltage_support(s0: f64, prm: &DeraParams) -> f64 {
    saturate(deadband(prm.vref0 - s0, prm.dbv()) * prm.kqv, prm.sat3())
}

fn trip_factor(s4: f64, prm: &DeraParams) -> f64 {
    if prm.flags.v_tripflag {
        s4
    } else {
        1.0
    }
}

fn p_to_current(s8: f64, s0: f64, iq: f64, prm: &DeraParams) -> f64 {
    saturate(saturate(s8, prm.sat7()) / saturate(s0, prm.sat1()), prm.sat9(iq))
}

fn s6_rate(s: &[f64; 10], u: DeraInputs, prm: &DeraParams) -> f64 {
    let df = deadband(prm.freq_ref - s[5], prm.dbf());
    let droop = (prm.ddn * df).min(0.0) + (prm.dup * df).max(0.0);
    let pi = prm.kig * saturate(prm.pref - s[1] + droop, SatLimits { lo: prm.femin, hi: prm.femax });
    pi + prm.kpg / prm.tp * s[1] + (prm.gdn + prm.gup) * (u.freq - s[5]) - s[8] / prm.tp
}

fn s7_rate(s: &[f64; 10], u: DeraInputs, prm: &DeraParams) -> f64 {
    if !prm.flags.freq_flag {
        return 0.0;
    }
    let r = s6_rate(s, u, prm);
    let lim = prm.sat7();
    let moving = (s[6] > lim.lo && s[6] < lim.hi) || (s[6] <= lim.lo && r > 0.0) || (s[6] >= lim.hi && r < 0.0);
    if moving {
        saturate(r, SatLimits { lo: prm.dpmin, hi: prm.dpmax })
    } else {
        0.0
    }
}

/// Derivative of the full model for a given voltage-protection multiplier.
fn full_rhs_raw(s: &[f64; 10], u: DeraInputs, prm: &DeraParams, vp: f64) -> [f64; 10] {
    let trip = trip_factor(s[4], prm);
    let iq_cmd = saturate(s[2] + voltage_support(s[0], prm), prm.sat2(s[9])) * trip;
    let id_cmd = p_to_current(s[8], s[0], s[3], prm) * trip;
    [
        (u.vt - s[0]) / prm.trv,
        (s[8] - s[1]) / prm.tp,
        (q_feedforward(s[0], s[1], prm) - s[2]) / prm.tiq,
        (iq_cmd - s[3]) / prm.tg,
        (vp - s[4]) / prm.tv,
        (u.freq - s[5]) / prm.trf,
        s6_rate(s, u, prm),
        s7_rate(s, u, prm),
        (s[7] - s[8]) / prm.tpord,
        (id_cmd - s[9]) / prm.tg,
    ]
}

/// Rows of [`full_rhs_raw`] at [`SLOW_INDICES`].
fn slow_rhs_raw(s: &[f64; 10], u: DeraInputs, prm: &DeraParams) -> [f64; 4] {
    [
        (u.vt - s[0]) / prm.trv,
        (s[8] - s[1]) / prm.tp,
        (u.freq - s[5]) / prm.trf,
        s7_rate(s, u, prm),
    ]
}

/// Derivative of the full model and the protection memory advanced to `(t, S0)`.
pub fn dera_full_rhs(
    state: &DeraFullState,
    u: DeraInputs,
    prm: &DeraParams,
    t: f64,
    mem: VpMemory,
) -> Result<([f64; 10], VpMemory)> {
    check_finite(&state.s)?;
    check_finite(&[u.vt, u.freq, t])?;
    let (vp, next) = voltage_protection(state.s[0], t, &prm.vp, mem);
    let dx = full_rhs_raw(&state.s, u, prm, vp);
    check_finite(&dx)?;
    Ok((dx, next))
}

/// Derivative of the four-state reduced model.
pub fn dera_reduced_rhs(x: &DeraReducedState, u: DeraInputs, prm: &DeraParams) -> Result<[f64; 4]> {
    check_finite(&x.to_array())?;
    check_finite(&[u.vt, u.freq])?;
    let s = DeraFullState::from_parts(&x.to_array(), &dera_qss(x, u, prm, prm.vp.curve(x.x1)));
    Ok([
        (u.vt - x.x1) / prm.trv,
        (x.x4 - x.x2) / prm.tp,
        (u.freq - x.x3) / prm.trf,
        s7_rate(&s.s, u, prm),
    ])
}

/// Reactive-current demand before the current limiter.
pub fn dera_gamma(x: &DeraReducedState, prm: &DeraParams) -> f64 {
    q_feedforward(x.x1, x.x2, prm) + voltage_support(x.x1, prm)
}

/// Quasi-steady values of `[S2, S3, S4, S6, S8, S9]` for voltage-protection
/// multiplier `vp`. The integrator `S6` has no restoring term and is placed
/// at the power order it would track.
pub fn dera_qss(x: &DeraReducedState, _u: DeraInputs, prm: &DeraParams, vp: f64) -> [f64; 6] {
    let s2 = q_feedforward(x.x1, x.x2, prm);
    let trip = if prm.flags.v_tripflag { vp } else { 1.0 };
    let s8 = x.x4;
    let gamma = s2 + voltage_support(x.x1, prm);
    let (s3, s9) = if prm.flags.pq_flag {
        let s9 = p_to_current(s8, x.x1, 0.0, prm) * trip;
        (saturate(gamma, prm.sat2(s9)) * trip, s9)
    } else {
        let s3 = saturate(gamma, prm.sat2(0.0)) * trip;
        (s3, p_to_current(s8, x.x1, s3, prm) * trip)
    };
    [s2, s3, vp, x.x4, s8, s9]
}

/// Boundary-layer derivative in stretched time with `(x, u)` frozen; each
/// row is normalized by its own time constant.
pub fn dera_boundary_rhs(y: &DeraBoundaryState, x: &DeraReducedState, u: DeraInputs, prm: &DeraParams) -> [f64; 6] {
    let vp = prm.vp.curve(x.x1);
    let h = dera_qss(x, u, prm, vp);
    let gamma = dera_gamma(x, prm);
    let y = &y.y;
    let (trip_h, trip_y) = if prm.flags.v_tripflag { (vp, vp + y[2]) } else { (1.0, 1.0) };
    let iq = h[1] + y[1];
    let id = h[5] + y[5];
    let v = saturate(x.x1, prm.sat1());
    let p_h = saturate(x.x4, prm.sat7()) / v;
    let p_y = saturate(x.x4 + y[4], prm.sat7()) / v;
    [
        -y[0],
        saturate(gamma + y[0], prm.sat2(id)) * trip_y - h[1] - y[1],
        -y[2],
        -prm.trf * y[4],
        -y[4],
        saturate(p_y, prm.sat9(iq)) * trip_y - saturate(p_h, prm.sat9(h[1])) * trip_h - y[5],
    ]
}

/// Output currents `(iq, id)`: QSS values plus boundary-layer corrections.
pub fn dera_currents(
    x: &DeraReducedState,
    y: &DeraBoundaryState,
    u: DeraInputs,
    prm: &DeraParams,
    mem: &VpMemory,
) -> (f64, f64) {
    let h = dera_qss(x, u, prm, mem.multiplier(x.x1, &prm.vp));
    (h[1] + y.y[1], h[5] + y.y[5])
}

/// `(P, Q)` injected at the terminal.
pub fn dera_outputs(iq: f64, id: f64, u: DeraInputs) -> (f64, f64) {
    (u.vt * id, -u.vt * iq)
}

/// Steady state delivering `(p0, q0)` at `u0`; set-points `Pref`, the power
/// factor angle (or `Qref`) and a zero `Vref0` are resolved to hold it.
pub fn dera_initialize(u0: DeraInputs, prm: &DeraParams, p0: f64, q0: f64) -> Result<DeraEquilibrium> {
    prm.validate()?;
    check_finite(&[u0.vt, u0.freq, p0, q0])?;
    if !(u0.vt > 0.0) {
        return Err(Error::InitializationFailure(format!("terminal voltage must be positive (got {})", u0.vt)));
    }
    let mut binding = Vec::new();
    if p0 > prm.pmax {
        binding.push(format!("P0 = {p0} above Pmax = {}", prm.pmax));
    }
    if p0 < prm.pmin {
        binding.push(format!("P0 = {p0} below Pmin = {}", prm.pmin));
    }
    let mut out = *prm;
    if out.vref0 == 0.0 {
        out.vref0 = u0.vt;
    }
    let v0 = u0.vt;
    let v_div = saturate(v0, out.sat1());
    let s4 = out.vp.curve(v0);
    let trip = trip_factor(s4, &out);
    let iq0 = -q0 / v0;
    let id0 = p0 / v0;
    if trip == 0.0 && (iq0 != 0.0 || id0 != 0.0) {
        binding.push(format!("voltage protection has tripped the unit at V0 = {v0}"));
    }
    let (iq_cmd, id_cmd) = if trip == 0.0 { (0.0, 0.0) } else { (iq0 / trip, id0 / trip) };
    let sat2 = out.sat2(id0);
    if !sat2.contains(iq_cmd) {
        binding.push(format!("q-current {iq_cmd} outside [{}, {}]", sat2.lo, sat2.hi));
    }
    let sat9 = out.sat9(iq0);
    if !sat9.contains(id_cmd) {
        binding.push(format!("d-current {id_cmd} outside [{}, {}]", sat9.lo, sat9.hi));
    }
    let s8 = id_cmd * v_div;
    let s2 = iq_cmd - voltage_support(v0, &out);
    if out.flags.pf_flag {
        if s8 == 0.0 {
            if s2 != 0.0 {
                binding.push("reactive demand with zero power under power-factor control".into());
            }
            out.pfaref = 0.0;
        } else {
            out.pfaref = (s2 * v_div / s8).atan();
        }
    } else {
        out.qref = s2 * v_div;
    }
    let droop_arg = deadband(out.freq_ref - u0.freq, out.dbf());
    let droop = (out.ddn * droop_arg).min(0.0) + (out.dup * droop_arg).max(0.0);
    let needed = (s8 - out.kpg * s8) / out.tp;
    if out.kig == 0.0 {
        if needed != 0.0 {
            binding.push("Kig = 0 leaves the power integrator unbalanced".into());
        }
    } else {
        let arg = needed / out.kig;
        if !(arg >= out.femin && arg <= out.femax) {
            binding.push(format!("power error {arg} outside [femin, femax]"));
        }
        out.pref = arg + s8 - droop;
    }
    if !binding.is_empty() {
        return Err(Error::InitializationFailure(format!("binding limits: {}", binding.join("; "))));
    }
    let state = DeraFullState {
        s: [v0, s8, s2, iq0, s4, u0.freq, s8, s8, s8, id0],
    };
    let dx = full_rhs_raw(&state.s, u0, &out, VpMemory::fresh().multiplier(v0, &out.vp));
    let r = dx.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(r <= 1e-9) {
        return Err(Error::InitializationFailure(format!("steady-state residual {r:e}")));
    }
    Ok(DeraEquilibrium { state, params: out })
}

/// Full model as an ODE right-hand side with inputs `[Vt, Freq]`. The
/// protection memory advances at accepted steps.
#[derive(Debug, Clone, Copy)]
pub struct DeraFullRhs {
    pub prm: DeraParams,
    pub memory: VpMemory,
}

impl DeraFullRhs {
    pub fn new(prm: DeraParams) -> Self {
        Self {
            prm,
            memory: VpMemory::fresh(),
        }
    }
}

impl OdeRhs for DeraFullRhs {
    fn dim(&self) -> usize {
        10
    }

    fn eval(&self, _t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let s = DeraFullState::from_slice(x);
        let vp = self.memory.multiplier(s.s[0], &self.prm.vp);
        dx.copy_from_slice(&full_rhs_raw(&s.s, DeraInputs::from_slice(u), &self.prm, vp));
    }

    fn accept_step(&mut self, t: f64, x: &[f64], _u: &[f64]) -> bool {
        let before = self.memory;
        self.memory = before.update(x[0], t, &self.prm.vp);
        (before.level, before.latched) != (self.memory.level, self.memory.latched)
    }
}

/// Closed-form reduced model as an ODE right-hand side with inputs `[Vt, Freq]`.
#[derive(Debug, Clone, Copy)]
pub struct DeraReducedRhs {
    pub prm: DeraParams,
}

impl OdeRhs for DeraReducedRhs {
    fn dim(&self) -> usize {
        4
    }

    fn eval(&self, _t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        match dera_reduced_rhs(&DeraReducedState::from_slice(x), DeraInputs::from_slice(u), &self.prm) {
            Ok(d) => dx.copy_from_slice(&d),
            Err(_) => dx.fill(f64::NAN),
        }
    }
}

/// The model in singular-perturbation form over slow `[S0, S1, S5, S7]`,
/// fast `[S2, S3, S4, S6, S8, S9]` and inputs `[Vt, Freq]`, with the
/// memoryless protection curve. `S6` is marked neutral.
pub fn dera_two_time_scale(prm: &DeraParams, analytic_qss: bool) -> Result<TwoTimeScaleSystem> {
    prm.validate()?;
    let pf = *prm;
    let f = move |x: &[f64], z: &[f64], u: &[f64], _eps: f64, out: &mut [f64]| {
        let s = DeraFullState::from_parts(x, z);
        out.copy_from_slice(&slow_rhs_raw(&s.s, DeraInputs::from_slice(u), &pf));
    };
    let pg = *prm;
    let scales = prm.fast_scales();
    let g = move |x: &[f64], z: &[f64], u: &[f64], _eps: f64, out: &mut [f64]| {
        let s = DeraFullState::from_parts(x, z);
        let d = full_rhs_raw(&s.s, DeraInputs::from_slice(u), &pg, pg.vp.curve(s.s[0]));
        for (k, &i) in FAST_INDICES.iter().enumerate() {
            out[k] = d[i] * scales[k];
        }
    };
    let sys = TwoTimeScaleSystem::new((4, 6, 2), prm.tp * prm.trf, f, g)?
        .with_fast_scales(scales.to_vec())?
        .with_neutral_fast(vec![3]);
    if analytic_qss {
        let ph = *prm;
        Ok(sys.with_qss(move |x, u, out| {
            let xr = DeraReducedState::from_slice(x);
            out.copy_from_slice(&dera_qss(&xr, DeraInputs::from_slice(u), &ph, ph.vp.curve(xr.x1)));
        }))
    } else {
        Ok(sys)
    }
}
