use blum::perturb::{bundled_items, enumerate_sweep, fixture_for_items, run_sweep, LesionScope, ToyConfig};
use blum::taxonomy::{LexicalResources, ResponseCategory};

// Statistical on the fixture: holds for the default seed, not for every seed.
#[test]
fn mean_correct_is_non_increasing_in_sigma() {
    let res = LexicalResources::bundled();
    let items = bundled_items();
    let cfg = ToyConfig::default();
    let model = fixture_for_items(&cfg, &items, &res).unwrap();
    let pcts: Vec<u32> = (1..=9).map(|i| i * 10).collect();
    let sigmas: Vec<f64> = (0..20).map(|i| i as f64 / 10.0).collect();
    let specs = enumerate_sweep(cfg.layers as u32, &pcts, &sigmas, 0).unwrap();
    let out = run_sweep(&model, &specs, &items, &res, LesionScope::Attention).unwrap();

    let per_sigma = (cfg.layers * pcts.len()) as f64;
    let mut by_sigma = vec![0.0; sigmas.len()];
    for r in &out {
        by_sigma[r.spec.sigma_tenths as usize] += r.profile.proportion(ResponseCategory::Correct) / per_sigma;
    }
    assert!((by_sigma[0] - 1.0).abs() < 1e-12, "the unlesioned fixture names every item: {}", by_sigma[0]);
    for (t, w) in by_sigma.windows(2).enumerate() {
        assert!(w[1] <= w[0], "mean correct rises from sigma {} to {}: {by_sigma:?}", t as f64 / 10.0, (t + 1) as f64 / 10.0);
    }
    assert!(by_sigma[19] < 0.5, "{by_sigma:?}");
}
