use vorx::etl_sim::{
    arrival_fit, kingman_sojourn, poisson_pmf, run_simulation, simulate, ArrivalModel,
    PipelineConfig, PublisherConfig, PublisherKind, ServiceDist, TrafficParams,
};
use vorx::zcurve::MortonGrid;

fn publishers(n: u32, lambda_each: f64, kind: PublisherKind) -> Vec<PublisherConfig> {
    (0..n)
        .map(|i| PublisherConfig {
            site_id: i,
            x: 100.0 + 97.0 * i as f64,
            y: 900.0 - 83.0 * i as f64,
            lambda: lambda_each,
            kind,
        })
        .collect()
}

#[test]
fn littles_law_holds_on_long_runs() {
    let services = [
        ServiceDist::Exponential { mean: 0.5 },
        ServiceDist::Deterministic { value: 0.6 },
        ServiceDist::Lognormal {
            mean: 0.4,
            variance: 0.3,
        },
    ];
    for (i, service) in services.into_iter().enumerate() {
        let mut cfg = PipelineConfig::mm1(1.0, 0.5, 20_000.0, 40 + i as u64);
        cfg.publishers = publishers(4, 0.3, PublisherKind::Poisson);
        cfg.service = service;
        let r = run_simulation(&cfg).unwrap();
        let lambda_eff = r.served as f64 / r.duration_s;
        let l = lambda_eff * r.mean_sojourn_s;
        assert!(
            (r.mean_in_system - l).abs() <= 0.1 * l,
            "{service:?}: L = {} vs lambda W = {l}",
            r.mean_in_system
        );
    }
}

#[test]
fn same_config_same_report() {
    let mut cfg = PipelineConfig::mm1(2.0, 0.3, 2_000.0, 9);
    cfg.publishers = publishers(3, 0.7, PublisherKind::Poisson);
    let a = run_simulation(&cfg).unwrap();
    let b = run_simulation(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    cfg.seed = 10;
    assert_ne!(run_simulation(&cfg).unwrap().published, a.published);
}

#[test]
fn stored_records_are_conserved_and_searchable() {
    let mut cfg = PipelineConfig::mm1(1.0, 0.2, 3_000.0, 3);
    cfg.publishers = publishers(5, 0.5, PublisherKind::Poisson);
    let run = simulate(&cfg).unwrap();
    let r = &run.report;
    assert_eq!(r.published, r.served + r.in_queue_at_end);
    assert_eq!(r.stored, r.served);
    assert_eq!(run.index.len() as u64, r.stored);
    assert_eq!(r.per_cell_counts.values().sum::<u64>(), r.stored);
    assert_eq!(r.per_cell_counts.len(), 5);

    let grid = MortonGrid::new(cfg.grid.bits).unwrap();
    let all = run.index.range_search(&grid.full_extent()).unwrap();
    assert_eq!(all.len() as u64, r.stored);
    assert!(all.windows(2).all(|w| w[0].key <= w[1].key));
    for rec in &all {
        assert!(r.per_cell_counts.contains_key(&rec.key.0));
        assert!(rec.timestamp_us as f64 <= cfg.duration_s * 1e6);
        assert_eq!(rec.payload.len(), 8);
    }
}

#[test]
fn queue_series_is_sampled_across_the_run() {
    let cfg = PipelineConfig::mm1(1.0, 0.5, 1_000.0, 4);
    let r = run_simulation(&cfg).unwrap();
    assert!(r.queue_series.len() >= 100);
    assert!(r.queue_series.windows(2).all(|w| w[0].t < w[1].t));
    assert!(r.queue_series.last().unwrap().t <= cfg.duration_s);
}

#[test]
fn periodic_arrivals_fail_the_poisson_fit() {
    let mut cfg = PipelineConfig::mm1(3.0, 0.1, 5_000.0, 5);
    cfg.publishers = publishers(1, 3.0, PublisherKind::Periodic);
    let r = run_simulation(&cfg).unwrap();
    let fit = arrival_fit(&r, ArrivalModel::new(3.0).unwrap()).unwrap();
    assert!(fit.rejected_at(0.01), "{fit:?}");
    assert!(fit.p_value < 1e-12);
}

#[test]
fn poisson_arrivals_match_rate() {
    let mut cfg = PipelineConfig::mm1(3.0, 0.1, 5_000.0, 6);
    cfg.publishers = publishers(3, 1.0, PublisherKind::Poisson);
    let r = run_simulation(&cfg).unwrap();
    let mean = r
        .arrival_histogram
        .iter()
        .enumerate()
        .map(|(k, &c)| k as f64 * c as f64)
        .sum::<f64>()
        / r.intervals() as f64;
    // Standard error of the mean count is sqrt(3 / 5000) ≈ 0.0245.
    assert!((mean - 3.0).abs() < 0.1, "{mean}");
}

#[test]
fn pmf_normalizes_across_rates() {
    for lambda in [0.01, 0.5, 3.0, 17.0, 250.0] {
        let m = ArrivalModel::new(lambda).unwrap();
        let top = (lambda + 40.0 * lambda.sqrt() + 50.0) as i64;
        let sum: f64 = (0..=top).map(|x| poisson_pmf(m, x).unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-12, "lambda {lambda}: {sum}");
    }
    assert!(poisson_pmf(ArrivalModel::new(1.0).unwrap(), -1).is_err());
}

#[test]
fn prediction_is_reported_alongside_the_run() {
    let cfg = PipelineConfig::mm1(0.8, 1.0, 100.0, 7);
    let r = run_simulation(&cfg).unwrap();
    let want = kingman_sojourn(&TrafficParams::mm1(0.8, 1.0)).unwrap();
    assert_eq!(r.kingman_prediction_s, want);
    assert!((r.rho - 0.8).abs() < 1e-12);
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(run_simulation(&PipelineConfig::mm1(2.0, 0.5, 10.0, 0)).is_err());
    let mut cfg = PipelineConfig::mm1(1.0, 0.5, 10.0, 0);
    cfg.publishers[0].x = 5_000.0;
    assert!(run_simulation(&cfg).is_err());
    let mut cfg = PipelineConfig::mm1(1.0, 0.5, -1.0, 0);
    cfg.duration_s = -1.0;
    assert!(run_simulation(&cfg).is_err());
    let bad =
        r#"{"publishers":[],"service":{"kind":"exponential","mean":1},"duration_s":1,"extra":0}"#;
    assert!(serde_json::from_str::<PipelineConfig>(bad).is_err());
}
