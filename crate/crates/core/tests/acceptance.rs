//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::Instant;

use lsor::dera::{self, DeraBoundaryState, DeraInputs, DeraParams, DeraReducedState};
use lsor::harness::{
    assess_model, bench, motor_error_order, run_comparison, simulate, ModelKind, ScenarioConfig, Variant,
};
use lsor::motor::{self, MotorInputs, MotorParams, MotorReducedState};
use lsor::numerics::InputSignal;
use lsor::odesolve::{integrate, Method, SolverConfig};
use lsor::spt::{self, Verdict};
use lsor::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MSE_BAND: (f64, f64) = (0.2, 5.0);
const MOTOR_MSE_P: [(ModelKind, f64); 3] =
    [(ModelKind::MotorA, 1.0509e-4), (ModelKind::MotorB, 1.1295e-4), (ModelKind::MotorC, 8.0264e-5)];
const MOTOR_MSE_Q: [(ModelKind, f64); 3] =
    [(ModelKind::MotorA, 1.1422e-5), (ModelKind::MotorB, 1.4294e-5), (ModelKind::MotorC, 2.1112e-5)];
const DERA_MSE_P: f64 = 7.1363e-4;
const DERA_MSE_Q: f64 = 1.3045e-5;
const MOTOR_RUNTIME_LIMIT: f64 = 30.0;
const DERA_RUNTIME_LIMIT: f64 = 30.0;
const MIN_NONSTIFF_SPEEDUP: f64 = 5.0;
const MIN_STIFF_SPEEDUP: f64 = 2.0;
const MIN_STEP_RATIO: f64 = 5.0;
const BENCH_REPEATS: usize = 11;
const ORDER_FACTORS: [f64; 4] = [1.0, 0.5, 0.25, 0.125];
const ORDER_SLOPE: (f64, f64) = (0.7, 1.3);
const ORDER_RUNTIME_LIMIT: f64 = 60.0;
const QSS_RESIDUAL_LIMIT: f64 = 1e-8;
const DECAY_SAMPLES: usize = 20;
const MOTOR_EPS_DOUBLE_STAR: f64 = 0.035;
const EPS_DOUBLE_STAR_TOL: f64 = 1e-3;
const CROSS_SOLVER_RTOL: f64 = 1e-8;
const CROSS_SOLVER_LIMIT: f64 = 1e-3;
const EQUIVALENCE_TOL: f64 = 1e-9;
const EQUIVALENCE_POINTS: usize = 100;

struct Outcome {
    pass: bool,
    detail: String,
}

fn in_band(measured: f64, reference: f64) -> bool {
    measured >= MSE_BAND.0 * reference && measured <= MSE_BAND.1 * reference
}

fn band_entry(label: &str, measured: f64, reference: f64) -> (bool, String) {
    let ok = in_band(measured, reference);
    let mark = if ok { "ok" } else { "out" };
    (ok, format!("{label} {measured:.3e} (ratio {:.2e}, {mark})", measured / reference))
}

fn motor_mse() -> Result<Outcome> {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for ((model, p_ref), (_, q_ref)) in MOTOR_MSE_P.iter().zip(MOTOR_MSE_Q.iter()) {
        let r = run_comparison(&ScenarioConfig::new(*model))?.report;
        for (label, m, reference) in [("P", r.mse_p, *p_ref), ("Q", r.mse_q, *q_ref)] {
            let (ok, s) = band_entry(&format!("{model} {label}"), m, reference);
            pass &= ok;
            parts.push(s);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < MOTOR_RUNTIME_LIMIT;
    parts.push(format!("runtime {secs:.2}s"));
    Ok(Outcome { pass, detail: parts.join("; ") })
}

fn dera_mse() -> Result<Outcome> {
    let start = Instant::now();
    let r = run_comparison(&ScenarioConfig::new(ModelKind::Dera))?.report;
    let (ok_p, sp) = band_entry("P", r.mse_p, DERA_MSE_P);
    let (ok_q, sq) = band_entry("Q", r.mse_q, DERA_MSE_Q);
    let secs = start.elapsed().as_secs_f64();
    Ok(Outcome {
        pass: ok_p && ok_q && secs < DERA_RUNTIME_LIMIT,
        detail: format!("{sp}; {sq}; runtime {secs:.2}s"),
    })
}

fn speedup() -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for model in ModelKind::ALL {
        let ns = bench(&ScenarioConfig::new(model).with_method(Method::NonStiff), BENCH_REPEATS)?;
        let st = bench(&ScenarioConfig::new(model).with_method(Method::Stiff), BENCH_REPEATS)?;
        let ratio = ns.steps_full as f64 / ns.steps_reduced as f64;
        let ok = ns.median_speedup >= MIN_NONSTIFF_SPEEDUP
            && st.median_speedup >= MIN_STIFF_SPEEDUP
            && ratio >= MIN_STEP_RATIO;
        pass &= ok;
        parts.push(format!(
            "{model} nonstiff {:.2}x stiff {:.2}x steps {}/{} = {ratio:.2}",
            ns.median_speedup, st.median_speedup, ns.steps_full, ns.steps_reduced
        ));
    }
    Ok(Outcome { pass, detail: parts.join("; ") })
}

fn error_order() -> Result<Outcome> {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for model in [ModelKind::MotorA, ModelKind::MotorB, ModelKind::MotorC] {
        let (slope, _, errors) = motor_error_order(&ScenarioConfig::new(model), &ORDER_FACTORS)?;
        pass &= slope >= ORDER_SLOPE.0 && slope <= ORDER_SLOPE.1;
        parts.push(format!("{model} slope {slope:.3} (errors {:.2e}..{:.2e})", errors[0], errors[errors.len() - 1]));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < ORDER_RUNTIME_LIMIT;
    parts.push(format!("runtime {secs:.2}s"));
    Ok(Outcome { pass, detail: parts.join("; ") })
}

fn qss_residual() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for model in ModelKind::ALL {
        for method in [Method::NonStiff, Method::Stiff] {
            let (out, _) = simulate(&ScenarioConfig::new(model).with_method(method), Variant::Reduced)?;
            let r = out.qss_max_residual.unwrap_or(f64::INFINITY);
            worst = worst.max(r);
            runs += 1;
        }
    }
    Ok(Outcome {
        pass: worst <= QSS_RESIDUAL_LIMIT,
        detail: format!("max residual {worst:.2e} over {runs} reduced runs"),
    })
}

fn boundary_decay() -> Result<Outcome> {
    let u0 = DeraInputs::from_hz(1.0, dera::NOMINAL_HZ);
    let eq = dera::dera_initialize(u0, &DeraParams::reference(), 0.5, 0.0)?;
    let sys = dera::dera_two_time_scale(&eq.params, true)?;
    let x = eq.state.slow().to_array();
    let u = [u0.vt, u0.freq];
    let active = sys.active_fast();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut rates = Vec::with_capacity(DECAY_SAMPLES);
    let mut failures = 0;
    for _ in 0..DECAY_SAMPLES {
        let y0: Vec<f64> = (0..6).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let mut p = spt::build_boundary_layer(&sys, &x, &u, y0, 40.0)?;
        let traj = integrate(&mut p, &SolverConfig::new(Method::Stiff).with_tolerances(1e-8, 1e-12))?;
        match spt::estimate_decay_masked(&traj, &active) {
            Ok((_, a)) if a > 0.0 => rates.push(a),
            _ => failures += 1,
        }
    }
    let lo = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rates.iter().copied().fold(0.0, f64::max);
    Ok(Outcome {
        pass: failures == 0,
        detail: format!("{} of {DECAY_SAMPLES} fits decay, a in [{lo:.3}, {hi:.3}]", rates.len()),
    })
}

fn verdicts() -> Result<Outcome> {
    let m = assess_model(&ScenarioConfig::new(ModelKind::MotorA))?;
    let d = assess_model(&ScenarioConfig::new(ModelKind::Dera))?;
    let m_edd = m.eps_double_star.unwrap_or(f64::NAN);
    let d_edd = d.eps_double_star.unwrap_or(f64::NAN);
    let motor_ok = m.verdict == Verdict::QssOnly
        && m.epsilon <= m_edd
        && (m_edd - MOTOR_EPS_DOUBLE_STAR).abs() <= EPS_DOUBLE_STAR_TOL;
    let dera_ok = d.verdict == Verdict::QssPlusBoundaryLayer;
    Ok(Outcome {
        pass: motor_ok && dera_ok,
        detail: format!(
            "motor-a {:?} (eps {} <= eps** {:.4}); dera {:?} (eps** {:.2e} < eps {} <= eps* {:.3})",
            m.verdict, m.epsilon, m_edd, d.verdict, d_edd, d.epsilon, d.eps_star
        ),
    })
}

fn cross_solver() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for model in ModelKind::ALL {
        let cfg = ScenarioConfig::new(model).with_tolerances(CROSS_SOLVER_RTOL, CROSS_SOLVER_RTOL * 1e-2);
        let (a, _) = simulate(&cfg.clone().with_method(Method::NonStiff), Variant::Full)?;
        let (b, _) = simulate(&cfg.with_method(Method::Stiff), Variant::Full)?;
        let mut dev: f64 = 0.0;
        for name in ["P", "Q"] {
            let (ca, cb) = (a.column(name).unwrap_or_default(), b.column(name).unwrap_or_default());
            dev = ca.iter().zip(cb).map(|(x, y)| (x - y).abs()).fold(dev, f64::max);
        }
        worst = worst.max(dev);
        parts.push(format!("{model} {dev:.2e}"));
    }
    Ok(Outcome {
        pass: worst <= CROSS_SOLVER_LIMIT,
        detail: parts.join("; "),
    })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= EQUIVALENCE_TOL * b.abs().max(1.0)
}

fn equivalence() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut mismatches = 0;

    let prm = MotorParams::motor_a();
    let tm0 = 0.7;
    let generic_motor = motor::motor_two_time_scale(&prm, tm0, false)?;
    let reduced = spt::build_reduced(&generic_motor, InputSignal::constant(vec![1.0, 0.0]), vec![0.0; 3], (0.0, 1.0));
    for _ in 0..EQUIVALENCE_POINTS {
        let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-0.1..0.5)];
        let u = [rng.gen_range(0.2..1.2), rng.gen_range(-0.3..0.3)];
        let mut g = [0.0; 3];
        reduced.rhs.eval(0.0, &x, &u, &mut g);
        let c = motor::motor_reduced_rhs(&MotorReducedState::from_slice(&x), MotorInputs::from_slice(&u), &prm, tm0)?;
        mismatches += g.iter().zip(&c).filter(|(a, b)| !close(**a, **b)).count();

        let y = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
        let bl = spt::build_boundary_layer(&generic_motor, &x, &u, y.to_vec(), 1.0)?;
        let mut g = [0.0; 2];
        bl.rhs.eval(0.0, &y, &[], &mut g);
        let c = motor::motor_boundary_rhs(y, &prm);
        mismatches += g.iter().zip(&c).filter(|(a, b)| !close(**a, **b)).count();
    }

    let u0 = DeraInputs::from_hz(1.0, dera::NOMINAL_HZ);
    let dprm = dera::dera_initialize(u0, &DeraParams::reference(), 0.5, 0.0)?.params;
    let generic_dera = dera::dera_two_time_scale(&dprm, false)?;
    let reduced = spt::build_reduced(&generic_dera, InputSignal::constant(vec![1.0, 1.0]), vec![0.0; 4], (0.0, 1.0));
    for _ in 0..EQUIVALENCE_POINTS {
        let x = [rng.gen_range(0.3..1.3), rng.gen_range(0.0..1.0), rng.gen_range(0.98..1.02), rng.gen_range(0.0..1.0)];
        let u = [rng.gen_range(0.3..1.3), rng.gen_range(0.98..1.02)];
        let mut g = [0.0; 4];
        reduced.rhs.eval(0.0, &x, &u, &mut g);
        let c = dera::dera_reduced_rhs(&DeraReducedState::from_slice(&x), DeraInputs::from_slice(&u), &dprm)?;
        mismatches += g.iter().zip(&c).filter(|(a, b)| !close(**a, **b)).count();

        let y: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-0.5..0.5));
        let bl = spt::build_boundary_layer(&generic_dera, &x, &u, y.to_vec(), 1.0)?;
        let mut g = [0.0; 6];
        bl.rhs.eval(0.0, &y, &[], &mut g);
        let c = dera::dera_boundary_rhs(
            &DeraBoundaryState { y },
            &DeraReducedState::from_slice(&x),
            DeraInputs::from_slice(&u),
            &dprm,
        );
        mismatches += g.iter().zip(&c).filter(|(a, b)| !close(**a, **b)).count();
    }
    Ok(Outcome {
        pass: mismatches == 0,
        detail: format!("{mismatches} mismatched components over 4 x {EQUIVALENCE_POINTS} points"),
    })
}

type Criterion = fn() -> Result<Outcome>;

fn main() {
    let criteria: [(&str, Criterion); 9] = [
        ("motor MSE", motor_mse),
        ("DER_A MSE", dera_mse),
        ("speedup", speedup),
        ("O(eps) error order", error_order),
        ("QSS residual", qss_residual),
        ("boundary-layer decay", boundary_decay),
        ("reduction verdicts", verdicts),
        ("cross-solver consistency", cross_solver),
        ("generic/closed-form equivalence", equivalence),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = check().unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!("error: {e}"),
        });
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {} [{name}] {tag}: {}", i + 1, outcome.detail);
        failed += usize::from(!outcome.pass);
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
