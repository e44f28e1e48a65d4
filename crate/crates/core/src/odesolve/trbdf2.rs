//! TR-BDF2: a trapezoidal stage to `t + γh` followed by a BDF2 stage to
//! `t + h`, with `γ = 2 − √2` so both stages share the iteration matrix
//! `I − d·h·J`, `d = γ/2`. The embedded third-order estimate is filtered
//! through the iteration matrix to keep it bounded on stiff components.

use nalgebra::{DMatrix, DVector, LU, Dyn};

use super::{Ctx, Dense, Trajectory};
use crate::error::{Error, Result};

const MAX_NEWTON: usize = 8;

struct Coeffs {
    gamma: f64,
    d: f64,
    w: f64,
}

impl Coeffs {
    fn new() -> Self {
        let gamma = 2.0 - std::f64::consts::SQRT_2;
        Self {
            gamma,
            d: gamma / 2.0,
            w: std::f64::consts::SQRT_2 / 4.0,
        }
    }
}

struct IterationMatrix {
    lu: LU<f64, Dyn, Dyn>,
    h: f64,
}

enum StepOutcome {
    Accepted,
    Rejected,
    NewtonFailed,
}

pub(super) fn run(ctx: &mut Ctx<'_, '_>, traj: &mut Trajectory, t0: f64, stops: &[f64]) -> Result<()> {
    let n = traj.states[0].len();
    let co = Coeffs::new();
    let kappa = (10.0 * f64::EPSILON / ctx.cfg.rel_tol).max(0.03f64.min(ctx.cfg.rel_tol.sqrt()));

    let mut t = t0;
    let mut y = traj.states[0].clone();
    let mut f0 = vec![0.0; n];
    let mut jac: Option<DMatrix<f64>>;
    let mut jac_current = false;
    let mut iter: Option<IterationMatrix> = None;
    let mut eta: f64 = 1.0;
    let mut h_carry: Option<f64> = None;

    let mut z = vec![0.0; n];
    let mut fz = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut f1 = vec![0.0; n];
    let mut rhs_const = vec![0.0; n];

    for &seg_end in stops {
        ctx.f(t, seg_end, &y, &mut f0)?;
        jac = None;
        let mut h = match h_carry {
            Some(h) => h,
            None => ctx.initial_step(t, seg_end, &y, &f0, 3)?,
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
            let t_gamma = t + co.gamma * h;

            if jac.is_none() {
                jac = Some(ctx.jacobian(t, seg_end, &y, &f0)?);
                jac_current = true;
                iter = None;
            }
            if iter.as_ref().is_none_or(|m| m.h != h) {
                let j = jac.as_ref().expect("jacobian computed above");
                let m = DMatrix::identity(n, n) - j * (co.d * h);
                let lu = m.lu();
                if !lu.is_invertible() {
                    ctx.stats.steps_rejected += 1;
                    h *= 0.5;
                    last_rejected = true;
                    continue;
                }
                iter = Some(IterationMatrix { lu, h });
                eta = eta.max(f64::EPSILON).powf(0.8);
            }
            let lu = &iter.as_ref().expect("iteration matrix built above").lu;

            let outcome = 'step: {
                // Trapezoidal stage.
                for i in 0..n {
                    rhs_const[i] = y[i] + co.d * h * f0[i];
                    z[i] = y[i] + co.gamma * h * f0[i];
                }
                if !newton(ctx, lu, t_gamma, seg_end, &mut z, &rhs_const, co.d * h, &y, &mut eta, kappa)? {
                    break 'step StepOutcome::NewtonFailed;
                }
                if ctx.f(t_gamma, seg_end, &z, &mut fz).is_err() {
                    break 'step StepOutcome::NewtonFailed;
                }

                // BDF2 stage.
                let g2 = co.gamma * (2.0 - co.gamma);
                let a = (1.0 - co.gamma).powi(2) / g2;
                for i in 0..n {
                    rhs_const[i] = z[i] / g2 - a * y[i];
                    y1[i] = z[i] + (1.0 - co.gamma) * h * fz[i];
                }
                if !newton(ctx, lu, t_new, seg_end, &mut y1, &rhs_const, co.d * h, &y, &mut eta, kappa)? {
                    break 'step StepOutcome::NewtonFailed;
                }
                if ctx.f(t_new, seg_end, &y1, &mut f1).is_err() {
                    break 'step StepOutcome::NewtonFailed;
                }

                let est = DVector::from_iterator(
                    n,
                    (0..n).map(|i| {
                        h * ((1.0 - co.w) / 3.0 * f0[i]
                            + (3.0 * co.w + 1.0) / 3.0 * fz[i]
                            + co.d / 3.0 * f1[i])
                            - (y1[i] - y[i])
                    }),
                );
                let filtered = lu.solve(&est).unwrap_or(est);
                let e = ctx.err_norm(filtered.as_slice(), &y, &y1);
                if !e.is_finite() {
                    break 'step StepOutcome::NewtonFailed;
                }
                if e <= 1.0 {
                    let mut hermite = Vec::with_capacity(4 * n);
                    hermite.extend_from_slice(&y);
                    hermite.extend_from_slice(&y1);
                    hermite.extend(f0.iter().map(|v| h * v));
                    hermite.extend(f1.iter().map(|v| h * v));
                    t = t_new;
                    std::mem::swap(&mut y, &mut y1);
                    std::mem::swap(&mut f0, &mut f1);
                    traj.push_node(t, &y);
                    traj.dense.push(Dense::Hermite(hermite));
                    if ctx.accept(t, seg_end, &y) && t < seg_end {
                        ctx.f(t, seg_end, &y, &mut f0)?;
                        jac = None;
                    }
                    jac_current = false;

                    let mut fac = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-1.0 / 3.0)).clamp(0.2, 5.0) };
                    if last_rejected {
                        fac = fac.min(1.0);
                    }
                    if (1.0..1.2).contains(&fac) {
                        fac = 1.0;
                    }
                    last_rejected = false;
                    h = if last { proposed.max(h * fac) } else { h * fac };
                    StepOutcome::Accepted
                } else {
                    h *= (0.9 * e.powf(-1.0 / 3.0)).clamp(0.2, 0.9);
                    StepOutcome::Rejected
                }
            };

            match outcome {
                StepOutcome::Accepted => {}
                StepOutcome::Rejected => {
                    ctx.stats.steps_rejected += 1;
                    last_rejected = true;
                }
                StepOutcome::NewtonFailed => {
                    ctx.stats.steps_rejected += 1;
                    if jac_current {
                        h *= 0.25;
                    } else {
                        jac = None;
                    }
                    last_rejected = true;
                }
            }
        }
        h_carry = Some(h);
    }
    Ok(())
}

/// Simplified Newton for `x − c·f(t, x) − rhs_const = 0`. Returns `false`
/// on divergence or slow convergence.
#[allow(clippy::too_many_arguments)]
fn newton(
    ctx: &mut Ctx<'_, '_>,
    lu: &LU<f64, Dyn, Dyn>,
    t: f64,
    seg_end: f64,
    x: &mut [f64],
    rhs_const: &[f64],
    c: f64,
    y_ref: &[f64],
    eta: &mut f64,
    kappa: f64,
) -> Result<bool> {
    let n = x.len();
    let mut fx = vec![0.0; n];
    let mut prev = f64::NAN;
    for k in 0..MAX_NEWTON {
        match ctx.f(t, seg_end, x, &mut fx) {
            Ok(()) => {}
            Err(Error::NumericalBlowup { .. }) => return Ok(false),
            Err(e) => return Err(e),
        }
        let res = DVector::from_iterator(n, (0..n).map(|i| rhs_const[i] + c * fx[i] - x[i]));
        let Some(dx) = lu.solve(&res) else {
            return Ok(false);
        };
        for i in 0..n {
            x[i] += dx[i];
        }
        let ndx = ctx.err_norm(dx.as_slice(), y_ref, x);
        if !ndx.is_finite() {
            return Ok(false);
        }
        if ndx <= 1e-12 {
            return Ok(true);
        }
        if k > 0 {
            let theta = ndx / prev;
            if theta >= 0.9 {
                return Ok(false);
            }
            *eta = theta / (1.0 - theta);
        }
        if *eta * ndx <= kappa {
            return Ok(true);
        }
        prev = ndx;
    }
    Ok(false)
}
