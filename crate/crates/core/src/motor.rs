//! Three-phase induction motor: fifth-order model in transient and
//! subtransient EMFs plus slip, and the third-order reduction obtained by
//! replacing the subtransient EMFs with their quasi-steady-state values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::odesolve::OdeRhs;
use crate::spt::TwoTimeScaleSystem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotorParams {
    pub rs: f64,
    pub ls: f64,
    pub lp: f64,
    pub lpp: f64,
    pub tp0: f64,
    pub tpp0: f64,
    pub h: f64,
    pub a: f64,
    pub b: f64,
    pub c0: f64,
    pub d: f64,
    pub etrq: f64,
    pub p: f64,
    pub q: f64,
    pub omega0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MotorKind {
    A,
    B,
    C,
}

impl MotorParams {
    pub fn for_kind(kind: MotorKind) -> Self {
        match kind {
            MotorKind::A => Self::motor_a(),
            MotorKind::B => Self::motor_b(),
            MotorKind::C => Self::motor_c(),
        }
    }

    pub fn motor_a() -> Self {
        Self {
            rs: 0.04,
            ls: 1.8,
            lp: 0.1,
            lpp: 0.083,
            tp0: 0.092,
            tpp0: 0.002,
            h: 0.05,
            a: 0.0,
            b: 0.0,
            c0: 0.0,
            d: 1.0,
            etrq: 0.0,
            p: -1.0,
            q: -1.0,
            omega0: 120.0 * std::f64::consts::PI,
        }
    }

    pub fn motor_b() -> Self {
        Self {
            rs: 0.03,
            ls: 1.8,
            lp: 0.16,
            lpp: 0.12,
            tp0: 0.1,
            tpp0: 0.0026,
            h: 1.0,
            etrq: 2.0,
            ..Self::motor_a()
        }
    }

    pub fn motor_c() -> Self {
        Self {
            h: 0.1,
            ..Self::motor_b()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.ls > self.lp
            && self.lp > self.lpp
            && self.lpp > 0.0
            && self.tp0 > self.tpp0
            && self.tpp0 > 0.0
            && self.h > 0.0
            && self.rs > 0.0
            && self.omega0.is_finite();
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "motor parameters must satisfy Ls > Lp > Lpp > 0, Tp0 > Tpp0 > 0, H > 0, rs > 0 (got {self:?})"
            )));
        }
        Ok(())
    }

    /// Time constants multiplying each state derivative, in state order.
    pub fn perturbation_coefficients(&self) -> [f64; 5] {
        [self.tp0, self.tp0, self.tpp0, self.tpp0, self.h]
    }

    /// Torque-speed curve without the `tm0` factor.
    pub fn torque_curve(&self, s: f64) -> f64 {
        let w = 1.0 - s;
        self.a * w * w + self.b * w + self.c0 + self.d * w.powf(self.etrq)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MotorFullState {
    pub eq_p: f64,
    pub ed_p: f64,
    pub eq_pp: f64,
    pub ed_pp: f64,
    pub s: f64,
}

impl MotorFullState {
    pub const NAMES: [&'static str; 5] = ["Eq_p", "Ed_p", "Eq_pp", "Ed_pp", "s"];

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            eq_p: v[0],
            ed_p: v[1],
            eq_pp: v[2],
            ed_pp: v[3],
            s: v[4],
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.eq_p, self.ed_p, self.eq_pp, self.ed_pp, self.s]
    }

    pub fn slow(self) -> MotorReducedState {
        MotorReducedState {
            x1: self.eq_p,
            x2: self.ed_p,
            x3: self.s,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MotorReducedState {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

impl MotorReducedState {
    pub const NAMES: [&'static str; 3] = ["Eq_p", "Ed_p", "s"];

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            x1: v[0],
            x2: v[1],
            x3: v[2],
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x1, self.x2, self.x3]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MotorInputs {
    pub vq: f64,
    pub vd: f64,
}

impl MotorInputs {
    pub fn from_slice(u: &[f64]) -> Self {
        Self { vq: u[0], vd: u[1] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotorOutputs {
    pub id: f64,
    pub iq: f64,
    pub p: f64,
    pub q: f64,
    pub tl: f64,
    pub tm0: f64,
}

pub enum MotorState {
    Full(MotorFullState),
    Reduced(MotorReducedState),
}

/// Stator currents `(id, iq)` behind an EMF `(eq, ed)` and inductance `l`.
#[inline]
fn currents(eq: f64, ed: f64, u: MotorInputs, rs: f64, l: f64) -> (f64, f64) {
    let den = rs * rs + l * l;
    let a = u.vq + eq;
    let b = u.vd + ed;
    ((rs * b + l * a) / den, (rs * a - l * b) / den)
}

/// Currents of the full model (subtransient form).
pub fn full_currents(x: &MotorFullState, u: MotorInputs, prm: &MotorParams) -> (f64, f64) {
    currents(x.eq_pp, x.ed_pp, u, prm.rs, prm.lpp)
}

/// Currents of the reduced model (transient form).
pub fn reduced_currents(x: &MotorReducedState, u: MotorInputs, prm: &MotorParams) -> (f64, f64) {
    currents(x.x1, x.x2, u, prm.rs, prm.lp)
}

fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalBlowup { t: f64::NAN })
    }
}

fn full_rhs_raw(x: &MotorFullState, u: MotorInputs, prm: &MotorParams, tm0: f64) -> [f64; 5] {
    let (id, iq) = full_currents(x, u, prm);
    let MotorParams {
        ls, lp, lpp, tp0, tpp0, h, p, q, omega0, ..
    } = *prm;
    let c1 = (tp0 - tpp0) / (tp0 * tpp0);
    let c2 = (tpp0 * (ls - lp) + tp0 * (lp - lpp)) / (tp0 * tpp0);
    let ws = omega0 * x.s;
    let tl = tm0 * prm.torque_curve(x.s);
    [
        (-x.eq_p - id * (ls - lp) - x.ed_p * ws * tp0) / tp0,
        (-x.ed_p + iq * (ls - lp) + x.eq_p * ws * tp0) / tp0,
        c1 * x.eq_p - c2 * id - x.eq_pp / tpp0 - ws * x.ed_pp,
        c1 * x.ed_p + c2 * iq - x.ed_pp / tpp0 + ws * x.eq_pp,
        -(p * x.ed_pp * id + q * x.eq_pp * iq - tl) / (2.0 * h),
    ]
}

/// Derivative of the fifth-order model.
pub fn motor_full_rhs(x: &MotorFullState, u: MotorInputs, prm: &MotorParams, tm0: f64) -> Result<[f64; 5]> {
    check_finite(&x.to_array())?;
    check_finite(&[u.vq, u.vd, tm0])?;
    let dx = full_rhs_raw(x, u, prm, tm0);
    check_finite(&dx)?;
    Ok(dx)
}

/// Quasi-steady-state subtransient EMFs `(h1, h2)`.
pub fn motor_qss_h(x: &MotorReducedState, u: MotorInputs, prm: &MotorParams) -> (f64, f64) {
    let MotorParams { rs, lp, lpp, .. } = *prm;
    let den = rs * rs + lp * lp;
    let k = lp * lpp + rs * rs;
    let dl = lp - lpp;
    let h1 = (k * x.x1 - dl * rs * x.x2 - dl * lp * u.vq - dl * rs * u.vd) / den;
    let h2 = (dl * rs * x.x1 + k * x.x2 + dl * rs * u.vq - dl * lp * u.vd) / den;
    (h1, h2)
}

/// Boundary-layer derivative in stretched time for the subtransient
/// deviations `y = (E''q − h1, E''d − h2)`. The fast subsystem is linear in
/// the subtransient EMFs, so the slow state and inputs drop out.
pub fn motor_boundary_rhs(y: [f64; 2], prm: &MotorParams) -> [f64; 2] {
    let MotorParams { rs, lp, lpp, .. } = *prm;
    let dl = lp - lpp;
    let den = rs * rs + lpp * lpp;
    let did = (lpp * y[0] + rs * y[1]) / den;
    let diq = (rs * y[0] - lpp * y[1]) / den;
    [-y[0] - dl * did, -y[1] + dl * diq]
}

fn reduced_rhs_raw(x: &MotorReducedState, u: MotorInputs, prm: &MotorParams, tm0: f64) -> [f64; 3] {
    let (h1, h2) = motor_qss_h(x, u, prm);
    let (id, iq) = reduced_currents(x, u, prm);
    let MotorParams {
        ls, lp, tp0, h, p, q, omega0, ..
    } = *prm;
    let tl = tm0 * prm.torque_curve(x.x3);
    [
        (-x.x1 - id * (ls - lp) - omega0 * tp0 * x.x2 * x.x3) / tp0,
        (-x.x2 + iq * (ls - lp) + omega0 * tp0 * x.x1 * x.x3) / tp0,
        (tl - p * h2 * id - q * h1 * iq) / (2.0 * h),
    ]
}

/// Derivative of the third-order reduced model.
pub fn motor_reduced_rhs(x: &MotorReducedState, u: MotorInputs, prm: &MotorParams, tm0: f64) -> Result<[f64; 3]> {
    check_finite(&x.to_array())?;
    check_finite(&[u.vq, u.vd, tm0])?;
    let dx = reduced_rhs_raw(x, u, prm, tm0);
    check_finite(&dx)?;
    Ok(dx)
}

pub fn motor_outputs(state: &MotorState, u: MotorInputs, prm: &MotorParams, tm0: f64) -> MotorOutputs {
    let ((id, iq), s) = match state {
        MotorState::Full(x) => (full_currents(x, u, prm), x.s),
        MotorState::Reduced(x) => (reduced_currents(x, u, prm), x.x3),
    };
    MotorOutputs {
        id,
        iq,
        p: u.vd * id + u.vq * iq,
        q: u.vq * id - u.vd * iq,
        tl: tm0 * prm.torque_curve(s),
        tm0,
    }
}

/// Steady state at slip `s_guess` and the torque base `tm0` that holds it.
///
/// With slip fixed, the four EMF equations are solved by Newton; `tm0` is then
/// chosen so the load torque balances the electrical torque at that slip.
pub fn motor_initialize(u0: MotorInputs, prm: &MotorParams, s_guess: f64) -> Result<(MotorFullState, f64)> {
    prm.validate()?;
    check_finite(&[u0.vq, u0.vd, s_guess])?;
    let emf_residual = |e: &[f64; 4]| {
        let x = MotorFullState {
            eq_p: e[0],
            ed_p: e[1],
            eq_pp: e[2],
            ed_pp: e[3],
            s: s_guess,
        };
        let r = full_rhs_raw(&x, u0, prm, 0.0);
        [r[0], r[1], r[2] * prm.tpp0, r[3] * prm.tpp0]
    };
    let mut e = [0.0f64; 4];
    let mut res = emf_residual(&e);
    let norm = |r: &[f64; 4]| r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for _ in 0..20 {
        if norm(&res) <= 1e-13 {
            break;
        }
        let mut jac = nalgebra::Matrix4::<f64>::zeros();
        for j in 0..4 {
            let mut ep = e;
            let step = (1e-7 * e[j].abs()).max(1e-7);
            ep[j] += step;
            let rp = emf_residual(&ep);
            for i in 0..4 {
                jac[(i, j)] = (rp[i] - res[i]) / step;
            }
        }
        let rhs = nalgebra::Vector4::from_iterator(res.iter().map(|v| -v));
        let delta = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InitializationFailure("singular steady-state Jacobian".into()))?;
        for i in 0..4 {
            e[i] += delta[i];
        }
        res = emf_residual(&e);
    }
    let state = MotorFullState {
        eq_p: e[0],
        ed_p: e[1],
        eq_pp: e[2],
        ed_pp: e[3],
        s: s_guess,
    };
    let (id, iq) = full_currents(&state, u0, prm);
    let te = prm.p * state.ed_pp * id + prm.q * state.eq_pp * iq;
    let curve = prm.torque_curve(s_guess);
    let tm0 = if te == 0.0 { 0.0 } else { te / curve };
    let dx = full_rhs_raw(&state, u0, prm, tm0);
    let r = dx.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(r <= 1e-9) || !tm0.is_finite() {
        return Err(Error::InitializationFailure(format!(
            "motor steady state residual {r:e} at slip {s_guess}"
        )));
    }
    Ok((state, tm0))
}

/// Full model as an ODE right-hand side with inputs `[Vq, Vd]`.
#[derive(Debug, Clone, Copy)]
pub struct MotorFullRhs {
    pub prm: MotorParams,
    pub tm0: f64,
}

impl OdeRhs for MotorFullRhs {
    fn dim(&self) -> usize {
        5
    }

    fn eval(&self, _t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let d = full_rhs_raw(&MotorFullState::from_slice(x), MotorInputs::from_slice(u), &self.prm, self.tm0);
        dx.copy_from_slice(&d);
    }
}

/// Closed-form reduced model as an ODE right-hand side with inputs `[Vq, Vd]`.
#[derive(Debug, Clone, Copy)]
pub struct MotorReducedRhs {
    pub prm: MotorParams,
    pub tm0: f64,
}

impl OdeRhs for MotorReducedRhs {
    fn dim(&self) -> usize {
        3
    }

    fn eval(&self, _t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let d = reduced_rhs_raw(&MotorReducedState::from_slice(x), MotorInputs::from_slice(u), &self.prm, self.tm0);
        dx.copy_from_slice(&d);
    }
}

/// The motor in standard singular-perturbation form: slow `[E'q, E'd, s]`,
/// fast `[E''q, E''d]` scaled by `Tpp0`, inputs `[Vq, Vd]`. With
/// `analytic_qss` the closed-form `h1, h2` are attached.
pub fn motor_two_time_scale(prm: &MotorParams, tm0: f64, analytic_qss: bool) -> Result<TwoTimeScaleSystem> {
    prm.validate()?;
    let pf = *prm;
    let f = move |x: &[f64], z: &[f64], u: &[f64], _eps: f64, out: &mut [f64]| {
        let st = MotorFullState {
            eq_p: x[0],
            ed_p: x[1],
            eq_pp: z[0],
            ed_pp: z[1],
            s: x[2],
        };
        let d = full_rhs_raw(&st, MotorInputs::from_slice(u), &pf, tm0);
        out[0] = d[0];
        out[1] = d[1];
        out[2] = d[4];
    };
    let pg = *prm;
    let g = move |x: &[f64], z: &[f64], u: &[f64], eps: f64, out: &mut [f64]| {
        let st = MotorFullState {
            eq_p: x[0],
            ed_p: x[1],
            eq_pp: z[0],
            ed_pp: z[1],
            s: x[2],
        };
        let (id, iq) = full_currents(&st, MotorInputs::from_slice(u), &pg);
        let r = eps / pg.tp0;
        let k = (pg.lp - pg.lpp) + eps * (pg.ls - pg.lp) / pg.tp0;
        let ws = pg.omega0 * st.s;
        out[0] = (1.0 - r) * st.eq_p - k * id - st.eq_pp - eps * ws * st.ed_pp;
        out[1] = (1.0 - r) * st.ed_p + k * iq - st.ed_pp + eps * ws * st.eq_pp;
    };
    let sys = TwoTimeScaleSystem::new((3, 2, 2), prm.tpp0, f, g)?;
    if analytic_qss {
        let ph = *prm;
        Ok(sys.with_qss(move |x, u, out| {
            let (h1, h2) = motor_qss_h(&MotorReducedState::from_slice(x), MotorInputs::from_slice(u), &ph);
            out[0] = h1;
            out[1] = h2;
        }))
    } else {
        Ok(sys)
    }
}
