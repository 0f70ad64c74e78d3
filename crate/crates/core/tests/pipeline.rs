use vifi::evaluation::{
    alpha_grid, kest_from_sweep, run_positioning_sweep, run_prediction_analysis, Dataset, GainPolicy, SweepConfig,
};
use vifi::fitting::{FitStrategy, StrategyKind};
use vifi::positioning::{locate, WknnConfig};
use vifi::propagation::ModelKind;
use vifi::radiomap::{Placement, RpKind};
use vifi::simulator::{make_world, simulate_campaign, truth_fingerprint, ScenarioPreset, Template, TruthModel, WorldSpec};

fn dataset(world: &WorldSpec, preset: &ScenarioPreset, seed: u64) -> Dataset {
    let c = simulate_campaign(world, &world.rp_grid(), &world.test_point_positions(), preset, seed).unwrap();
    Dataset::from_campaign(world, &c).unwrap()
}

#[test]
fn noiseless_pipeline_locates_tps_on_virtual_rps_exactly() {
    for template in [Template::SpinvLike, Template::TwistLike] {
        let world = make_world(&template, 5).unwrap().noiseless();
        let data = dataset(&world, &ScenarioPreset::CONTROLLED, 5);
        let idx = data.selection(0.2).unwrap();
        let fit = data.fit(&idx, &FitStrategy::EnvironmentFitting, ModelKind::Mwmf).unwrap();
        let map = data.radiomap(&idx, 0.5, Some(&fit), Placement::Grid).unwrap();
        let truth = TruthModel::new(&world);
        let virtual_rps: Vec<_> = map.rps.iter().filter(|rp| rp.kind == RpKind::Virtual).collect();
        assert!(!virtual_rps.is_empty());
        for rp in virtual_rps {
            let target = truth_fingerprint(&world, &truth, &rp.position).unwrap();
            let est = locate(&map, &target, &WknnConfig::new(1)).unwrap();
            assert!(
                est.position.distance(&rp.position) < 1e-9,
                "{template}: TP at {} located at {}",
                rp.position,
                est.position
            );
        }
    }
}

#[test]
fn crowdsourcing_degrades_prediction() {
    for template in [Template::SpinvLike, Template::TwistLike] {
        let (mut controlled, mut crowd) = (0.0, 0.0);
        for seed in 0..10 {
            let world = make_world(&template, seed).unwrap();
            for (preset, acc) in [
                (ScenarioPreset::CONTROLLED, &mut controlled),
                (ScenarioPreset::CROWDSOURCING_LIKE, &mut crowd),
            ] {
                let r = run_prediction_analysis(
                    &dataset(&world, &preset, seed),
                    &[0.2],
                    &[FitStrategy::EnvironmentFitting],
                    &[ModelKind::Mwmf],
                )
                .unwrap();
                *acc += r.cells[0].mean_delta.unwrap();
            }
        }
        assert!(crowd >= controlled, "{template}: crowd {crowd} < controlled {controlled}");
    }
}

#[test]
fn sweep_bookkeeping_identities() {
    let world = make_world(&Template::TwistLike, 2).unwrap();
    let data = dataset(&world, &ScenarioPreset::CONTROLLED, 2);
    let cfg = SweepConfig {
        rho_grid: vec![0.2, 1.0],
        dv_grid: vec![0.5, 2.0],
        k_grid: vec![1, 3, 5],
        ..SweepConfig::default()
    };
    let sweep = run_positioning_sweep(&data, &cfg).unwrap();
    let area = data.area();
    for c in &sweep.positioning.cells {
        assert!(c.error.is_none());
        assert_eq!(c.d_real * area, c.n_real as f64);
        assert!((c.d_virtual * area - c.n_virtual as f64).abs() < 1e-9);
        let s = c.at_k_opt.as_ref().unwrap();
        let mean = s.errors.iter().sum::<f64>() / s.errors.len() as f64;
        assert!((s.mean() - mean).abs() <= 1e-12 * mean);
        assert_eq!(s.mean(), c.mean_error_at(c.k_opt.unwrap()).unwrap());
        assert_eq!(s.cdf.last().unwrap().1, 1.0);
        assert!(s.cdf.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
        let min = c.mean_error_by_k.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(s.mean(), min);
    }
    assert_eq!(sweep.gain.policy, GainPolicy::KOpt);
    assert_eq!(sweep.gain.entries.len(), 4);
    for g in &sweep.gain.entries {
        let cell = sweep
            .positioning
            .cells
            .iter()
            .find(|c| c.d_real == g.d_real && c.d_virtual == g.d_virtual)
            .unwrap();
        let base = sweep.positioning.cell(cell.rho, 0.0).unwrap().mean_error_k_opt().unwrap();
        let product = g.gain * cell.mean_error_k_opt().unwrap();
        assert!((product - base).abs() <= 1e-12 * base);
    }
    // fixed-k gains use the baseline at the same k
    for c in sweep.positioning.cells.iter().filter(|c| c.n_virtual > 0) {
        let base = sweep.positioning.cell(c.rho, 0.0).unwrap();
        for s in &c.by_k {
            let b = base.by_k.iter().find(|b| b.k == s.k).unwrap();
            assert!((s.gain.unwrap() * s.mean() - b.mean()).abs() <= 1e-12 * b.mean());
        }
    }

    let alphas = alpha_grid(0.0001, 0.5, 0.0001).unwrap();
    let kest = kest_from_sweep(&sweep.positioning, &alphas).unwrap();
    for c in &kest.cells {
        assert!(c.points.iter().all(|p| p.beta >= 0.0));
        // k_est(α) = ⌈αN⌉ passes through every k up to N/2 on this grid
        if c.k_opt <= (c.n_real + c.n_virtual) / 2 {
            assert!(c.points.iter().any(|p| p.k_est == c.k_opt && p.beta == 0.0));
        }
    }
}

#[test]
fn prediction_cells_record_fit_failures() {
    let world = make_world(&Template::SpinvLike, 1).unwrap();
    let data = dataset(&world, &ScenarioPreset::CONTROLLED, 1);
    // 2 RPs cannot identify four parameters per AP
    let r = run_prediction_analysis(
        &data,
        &[0.02, 1.0],
        &[FitStrategy::SpecificApFitting],
        &[ModelKind::Mwmf],
    )
    .unwrap();
    let failed = r.cell(0.02, StrategyKind::PerAp, ModelKind::Mwmf).unwrap();
    assert!(failed.error.is_some() && failed.mean_delta.is_none());
    let ok = r.cell(1.0, StrategyKind::PerAp, ModelKind::Mwmf).unwrap();
    assert!(ok.error.is_none());
    assert_eq!(ok.per_ap.len(), data.aps.len());
    let mean = ok.per_ap.iter().map(|a| a.mean_delta).sum::<f64>() / ok.per_ap.len() as f64;
    assert!((ok.mean_delta.unwrap() - mean).abs() < 1e-12);
}
