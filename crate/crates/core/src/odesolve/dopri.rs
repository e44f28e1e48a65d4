//! Dormand-Prince 5(4) with PI step-size control and continuous extension.

use super::{Ctx, Dense, Trajectory};
use crate::error::Result;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFE: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
/// Bounds on the step ratio: `1/FACC1 <= h_new/h <= 1/FACC2`.
const FACC1: f64 = 1.0 / 0.2;
const FACC2: f64 = 1.0 / 10.0;

pub(super) fn eval_dense(rc: &[f64], n: usize, theta: f64, out: &mut [f64]) {
    let theta1 = 1.0 - theta;
    for i in 0..n {
        out[i] = rc[i]
            + theta
                * (rc[n + i]
                    + theta1 * (rc[2 * n + i] + theta * (rc[3 * n + i] + theta1 * rc[4 * n + i])));
    }
}

pub(super) fn run(ctx: &mut Ctx<'_, '_>, traj: &mut Trajectory, t0: f64, stops: &[f64]) -> Result<()> {
    let n = traj.states[0].len();
    let mut t = t0;
    let mut y = traj.states[0].clone();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut h_carry: Option<f64> = None;
    let mut facold: f64 = 1e-4;

    for &seg_end in stops {
        ctx.f(t, seg_end, &y, &mut k1)?;
        let mut h = match h_carry {
            Some(h) => h,
            None => ctx.initial_step(t, seg_end, &y, &k1, 5)?,
        };
        let mut last_rejected = false;

        while t < seg_end {
            h = h.min(ctx.max_step(seg_end - t0));
            let proposed = h;
            let last = t + 1.01 * h >= seg_end;
            if last {
                h = seg_end - t;
            }
            ctx.check_step(t, h)?;
            let t_new = if last { seg_end } else { t + h };

            for i in 0..n {
                ytmp[i] = y[i] + h * A21 * k1[i];
            }
            ctx.f(t + C2 * h, seg_end, &ytmp, &mut k2)?;
            for i in 0..n {
                ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            ctx.f(t + C3 * h, seg_end, &ytmp, &mut k3)?;
            for i in 0..n {
                ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            ctx.f(t + C4 * h, seg_end, &ytmp, &mut k4)?;
            for i in 0..n {
                ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            ctx.f(t + C5 * h, seg_end, &ytmp, &mut k5)?;
            for i in 0..n {
                ytmp[i] = y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            ctx.f(t_new, seg_end, &ytmp, &mut k6)?;
            for i in 0..n {
                ynew[i] = y[i]
                    + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            ctx.f(t_new, seg_end, &ynew, &mut k7)?;
            for i in 0..n {
                err[i] = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            }
            let e = ctx.err_norm(&err, &y, &ynew);
            let fac11 = e.powf(EXPO1);

            if e <= 1.0 {
                let fac = (fac11 / facold.powf(BETA) / SAFE).clamp(FACC2, FACC1);
                facold = e.max(1e-4);

                let mut rc = vec![0.0; 5 * n];
                for i in 0..n {
                    let ydiff = ynew[i] - y[i];
                    let bspl = h * k1[i] - ydiff;
                    rc[i] = y[i];
                    rc[n + i] = ydiff;
                    rc[2 * n + i] = bspl;
                    rc[3 * n + i] = ydiff - h * k7[i] - bspl;
                    rc[4 * n + i] = h
                        * (D1 * k1[i]
                            + D3 * k3[i]
                            + D4 * k4[i]
                            + D5 * k5[i]
                            + D6 * k6[i]
                            + D7 * k7[i]);
                }
                t = t_new;
                std::mem::swap(&mut y, &mut ynew);
                std::mem::swap(&mut k1, &mut k7);
                traj.push_node(t, &y);
                traj.dense.push(Dense::Dopri(rc));
                if ctx.accept(t, seg_end, &y) && t < seg_end {
                    ctx.f(t, seg_end, &y, &mut k1)?;
                }

                let mut h_new = if last { proposed } else { h / fac };
                if last_rejected {
                    h_new = h_new.min(h);
                }
                last_rejected = false;
                h = h_new;
            } else {
                ctx.stats.steps_rejected += 1;
                h /= FACC1.min(fac11 / SAFE);
                last_rejected = true;
            }
        }
        h_carry = Some(h);
    }
    Ok(())
}
