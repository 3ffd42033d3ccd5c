use bsindy::active::{fit_rows, run_assimilation, score_candidates, ActiveConfig, Pool, Selection};
use bsindy::bench::ActiveRun;
use bsindy::regression::FitConfig;

const VDP: &str = r#"{
    "system": "van_der_pol",
    "t1": 12.0,
    "n_samples": 240,
    "sigma_x": 0.1,
    "seed": 7,
    "derivative": {"scheme": "finite_difference", "order": 8},
    "active": {"fit": {"alpha": 0.01}}
}"#;

fn vdp_run(seed: u64) -> ActiveRun {
    let mut run = ActiveRun::from_json(VDP).unwrap();
    run.seed = seed;
    run
}

fn flat_pool() -> Pool {
    let mut run = vdp_run(1);
    run.active.max_points = Some(20);
    let mut pool = run.run().unwrap().pool;
    let k0 = 2 * pool.terms.len();
    for m in [
        &mut pool.y,
        &mut pool.design,
        &mut pool.var_design,
        &mut pool.base_var,
    ] {
        let row = m.row(k0).into_owned();
        for r in k0 + 1..m.nrows() {
            m.set_row(r, &row);
        }
    }
    pool
}

#[test]
fn identical_candidates_resolve_to_the_lowest_index() {
    let pool = flat_pool();
    let k0 = 2 * pool.terms.len();
    let mut cfg = ActiveConfig {
        fit: FitConfig {
            alpha: 0.01,
            ..FitConfig::default()
        },
        max_points: Some(k0),
        ..ActiveConfig::default()
    };
    let seeded = run_assimilation(&pool, &cfg, None).unwrap();
    let scores = score_candidates(&pool, &seeded, &cfg.fit);
    assert!(scores[..k0].iter().all(Option::is_none));
    assert!(scores[k0..].iter().all(|s| s.is_some() && *s == scores[k0]));
    cfg.max_points = Some(k0 + 1);
    let state = run_assimilation(&pool, &cfg, None).unwrap();
    assert_eq!(state.selected[k0], k0);
}

#[test]
fn reruns_are_identical() {
    let mut run = vdp_run(3);
    run.active.max_points = Some(40);
    let a = run.run().unwrap().state;
    let b = run.run().unwrap().state;
    assert_eq!(a.selected, b.selected);
    assert_eq!(a.history, b.history);
}

#[test]
fn exhausting_the_pool_matches_a_full_fit() {
    let mut run = vdp_run(5);
    run.n_samples = 60;
    run.t1 = 3.0;
    let outcome = run.run().unwrap();
    let pool = &outcome.pool;
    assert_eq!(outcome.state.selected.len(), pool.len());
    let all: Vec<usize> = (0..pool.len()).collect();
    let full = fit_rows(pool, &all, &run.active.fit).unwrap();
    assert_eq!(full.supports(), outcome.state.model.supports());
    let a = full.coefficient_matrix();
    let b = outcome.state.model.coefficient_matrix();
    assert!((a - b).abs().max() < 1e-10);
}

#[test]
fn entropy_selection_favors_fast_segments() {
    let mut run = vdp_run(7);
    let k0 = 20;
    run.active.max_points = Some(k0 + 30);
    let outcome = run.run().unwrap();
    let pool = &outcome.pool;
    let mut norms: Vec<f64> = (0..pool.len()).map(|r| pool.y.row(r).norm()).collect();
    let speed = norms.clone();
    norms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q3 = norms[3 * norms.len() / 4];
    let picks = &outcome.state.selected[k0..];
    assert_eq!(picks.len(), 30);
    let fast = picks.iter().filter(|&&r| speed[r] >= q3).count();
    println!("fast-segment picks: {fast}/30");
    assert!(
        fast as f64 / 30.0 >= 0.6,
        "only {fast}/30 picks in the top quartile of |dx/dt|"
    );
}

#[test]
fn random_selection_is_seeded() {
    let mut run = vdp_run(2);
    run.active.selection = Selection::Random;
    run.active.max_points = Some(30);
    run.active.seed = 11;
    let a = run.run().unwrap().state.selected;
    let b = run.run().unwrap().state.selected;
    assert_eq!(a, b);
    run.active.seed = 12;
    let c = run.run().unwrap().state.selected;
    assert_ne!(a, c);
}

#[test]
fn seed_set_larger_than_pool_is_rejected() {
    let mut run = vdp_run(2);
    run.active.seed_rows = Some(10_000);
    assert!(run.run().is_err());
}
