use lsor::harness::{assess_model, run_comparison, self_comparison, simulate, ModelKind, ScenarioConfig, Variant};
use lsor::spt::Verdict;

const MODELS: [ModelKind; 4] = [ModelKind::MotorA, ModelKind::MotorB, ModelKind::MotorC, ModelKind::Dera];

fn short(model: ModelKind) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(model);
    cfg.t_end = 1.5;
    cfg
}

#[test]
fn self_comparison_is_exact() {
    for model in MODELS {
        for variant in [Variant::Full, Variant::Reduced] {
            let r = self_comparison(&short(model), variant).unwrap();
            assert!(r.mse_p <= 1e-20 && r.mse_q <= 1e-20, "{model:?} {variant:?}");
            assert!(r.state_mse.values().all(|&m| m <= 1e-20));
        }
    }
}

#[test]
fn simulation_is_deterministic() {
    for model in MODELS {
        let cfg = short(model);
        let (a, _) = simulate(&cfg, Variant::Reduced).unwrap();
        let (b, _) = simulate(&cfg, Variant::Reduced).unwrap();
        assert_eq!(a.columns, b.columns);
        assert_eq!(a.stats.steps_accepted, b.stats.steps_accepted);
    }
}

#[test]
fn reduction_removes_states() {
    for model in MODELS {
        let cfg = short(model);
        let (full, _) = simulate(&cfg, Variant::Full).unwrap();
        let (reduced, _) = simulate(&cfg, Variant::Reduced).unwrap();
        assert!(reduced.state_dim() < full.state_dim(), "{model:?}");
        assert_eq!(full.times, reduced.times);
        assert!(full.qss_max_residual.is_none());
        assert!(reduced.qss_max_residual.is_some());
    }
}

#[test]
fn pre_sag_offset_is_order_epsilon() {
    for model in MODELS {
        let c = run_comparison(&short(model)).unwrap();
        let eps = c.report.decision.epsilon;
        let n = c.full.times.iter().take_while(|&&t| t < 0.99).count();
        for name in ["P", "Q"] {
            let f = c.full.column(name).unwrap();
            let r = c.reduced.column(name).unwrap();
            let worst = f[..n].iter().zip(&r[..n]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(worst < eps, "{model:?} {name}: {worst:e} vs {eps:e}");
        }
    }
}

#[test]
fn verdicts_by_model() {
    for model in MODELS {
        let d = assess_model(&ScenarioConfig::new(model)).unwrap();
        let expected = if model == ModelKind::Dera { Verdict::QssPlusBoundaryLayer } else { Verdict::QssOnly };
        assert_eq!(d.verdict, expected, "{model:?}");
    }
}

#[test]
fn a_steep_recovery_forces_repartition() {
    let mut cfg = ScenarioConfig::new(ModelKind::MotorA);
    cfg.motor.tpp0 = 0.008;
    cfg.sag.a = 0.0;
    cfg.sag.b = 0.6;
    cfg.sag.c = 0.011;
    cfg.sag.d = 0.0;
    assert_eq!(assess_model(&cfg).unwrap().verdict, Verdict::Repartition);
}
