//! End-to-end behavior of the comparison harness: method composition,
//! reduction identities between the warped predictor and the unwarped-KDE
//! baseline, and determinism.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use warpfield::baselines::{bin_events, medic_density, medic_predict, medic_total};
use warpfield::data::{Event, EventStore, Polygon, Road, SynthConfig};
use warpfield::density::GridSpec;
use warpfield::estimation::{
    derive_fine_grid, normal_reference_bandwidth, ComponentPlan, FitConfig, FitWindow,
    PeriodPlan, WarpParams, WeeklyCycle,
};
use warpfield::evaluation::{
    anscombe_rmse, average_log_score, derive_boundary, rmse, run_comparison, Method,
};
use warpfield::geometry::WeightMode;
use warpfield::Point;

fn small_city(seed: u64, weeks: u32, mean: f64) -> EventStore {
    let cfg = SynthConfig {
        polygon: Polygon::new(vec![
            Point::new(0.0, 0.0),
            Point::new(6.0, 0.0),
            Point::new(6.0, 5.0),
            Point::new(0.0, 5.0),
        ])
        .unwrap(),
        roads: vec![Road {
            a: Point::new(1.0, 2.5),
            b: Point::new(5.0, 2.5),
            weight: 1.5,
        }],
        profile: vec![1.0; 168],
        mean_events: mean,
        weeks,
        seed,
        uniform_weight: 1.0,
        road_jitter_km: 0.3,
    };
    warpfield::data::synth_generate(&cfg).unwrap()
}

/// A hand-built cycle: one component everywhere, λ = 0, α = 1, H_pi from
/// the labeled set of the given anchor period. With these parameters the
/// warped predictor must coincide with the unwarped KDE.
fn reduction_cycle(store: &EventStore, m: u32, anchor: u32, grid: GridSpec) -> WeeklyCycle {
    let labeled = store.labeled_set(anchor, m).unwrap();
    let pts: Vec<Point> = labeled.iter().map(|e| e.location).collect();
    let (h_pi, _) = normal_reference_bandwidth(&pts).unwrap();
    let plans = (0..168)
        .map(|slot| PeriodPlan {
            slot,
            centroids: vec![Point::new(3.0, 2.5)],
            components: vec![ComponentPlan {
                component: 0,
                params: WarpParams::new(1.0, 0.0).unwrap(),
                cloud_seed: 5,
                h_pi,
                regularized: false,
            }],
            fallback: false,
        })
        .collect();
    WeeklyCycle {
        m_weeks: m,
        cloud_size: 60,
        neighbors: 5,
        weight_mode: WeightMode::Binary,
        budget: 8,
        seed: 0,
        fine_grid: grid,
        count_cell_km: 1.0,
        plans,
    }
}

#[test]
fn medic_only_comparison_reproduces_standalone_runs() {
    let store = small_city(1, 4, 20.0);
    let cfg = FitConfig {
        m_weeks: 3,
        ..FitConfig::default()
    };
    let window = FitWindow::new(1, 3 * 168).unwrap();
    let grid = derive_fine_grid(&store, window, &cfg).unwrap();
    let cycle = reduction_cycle(&store, 3, 3 * 168 + 1, grid);
    let test_periods: Vec<u32> = (3 * 168 + 1..=3 * 168 + 12).collect();
    let comparison = run_comparison(&store, &cycle, &test_periods, &[Method::Medic]).unwrap();
    let report = comparison.report_for(Method::Medic).unwrap();
    assert_eq!(report.periods, test_periods);

    let count_grid = cycle.count_grid().unwrap();
    let boundary = derive_boundary(&store, 1, 3 * 168, count_grid).unwrap();
    for (i, &u) in test_periods.iter().enumerate() {
        let medic = medic_predict(&store, u, 3, count_grid).unwrap();
        let actual = bin_events(store.events_at(u), count_grid);
        let m = &report.metrics[i];
        assert_eq!(m.rmse, rmse(&medic, &actual, None).unwrap());
        assert_eq!(m.rmse_b, rmse(&medic, &actual, Some(&boundary)).unwrap());
        assert_eq!(m.ansc, anscombe_rmse(&medic, &actual, None).unwrap());
        assert_eq!(m.ansc_b, anscombe_rmse(&medic, &actual, Some(&boundary)).unwrap());
        let test_events = store.events_at(u);
        if test_events.is_empty() {
            assert!(m.als.is_none());
        } else {
            let density = medic_density(&medic).unwrap();
            let pts: Vec<Point> = test_events.iter().map(|e| e.location).collect();
            assert_eq!(m.als.unwrap(), average_log_score(&density, &pts).unwrap());
        }
    }
}

#[test]
fn forced_reduction_matches_unwarped_kde_als() {
    let store = small_city(2, 4, 25.0);
    let cfg = FitConfig {
        m_weeks: 3,
        ..FitConfig::default()
    };
    let window = FitWindow::new(1, 3 * 168).unwrap();
    let grid = derive_fine_grid(&store, window, &cfg).unwrap();
    let test_periods: Vec<u32> = (3 * 168 + 1..=3 * 168 + 8).collect();
    // One reduction cycle per test period would be exact; a single anchor's
    // H_pi differs from the per-period selector, so compare per period.
    for &u in &test_periods {
        let cycle = reduction_cycle(&store, 3, u, grid);
        let comparison =
            run_comparison(&store, &cycle, &[u], &[Method::Kde, Method::Warp]).unwrap();
        let kde = comparison.report_for(Method::Kde).unwrap();
        let warp = comparison.report_for(Method::Warp).unwrap();
        match (kde.metrics[0].als, warp.metrics[0].als) {
            (Some(a), Some(b)) => {
                assert!((a - b).abs() <= 1e-9, "period {u}: kde {a} vs warp {b}")
            }
            (None, None) => {}
            other => panic!("asymmetric ALS availability: {other:?}"),
        }
        assert!((kde.metrics[0].rmse - warp.metrics[0].rmse).abs() <= 1e-9);
    }
}

#[test]
fn comparison_is_deterministic() {
    let store = small_city(3, 5, 15.0);
    let cfg = FitConfig {
        m_weeks: 3,
        cloud_size: 50,
        budget: 8,
        seed: 9,
        ..FitConfig::default()
    };
    let window = FitWindow::new(1, 4 * 168).unwrap();
    let cycle = warpfield::estimation::fit_weekly_cycle(&store, window, &cfg).unwrap();
    let test_periods: Vec<u32> = (4 * 168 + 1..=4 * 168 + 6).collect();
    let methods = [Method::Medic, Method::Kde, Method::Warp];
    let a = run_comparison(&store, &cycle, &test_periods, &methods).unwrap();
    let b = run_comparison(&store, &cycle, &test_periods, &methods).unwrap();
    for (ra, rb) in a.reports.iter().zip(b.reports.iter()) {
        assert_eq!(ra.periods, rb.periods);
        assert_eq!(ra.metrics, rb.metrics);
        assert_eq!(ra.to_csv(), rb.to_csv());
    }
    assert_eq!(a.summary_table(), b.summary_table());
}

#[test]
fn period_failures_are_excluded_symmetrically() {
    // Periods whose MEDIC source weeks hold no events make the discrete
    // density degenerate; with MEDIC among the methods the period must be
    // dropped for every method.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut events = Vec::new();
    // Weeks 1..=2 populated, weeks 3..=10 empty, test week 11 populated.
    for p in 1..=(2 * 168u32) {
        for _ in 0..3 {
            events.push(Event::new(
                p,
                rng.random_range(0.0..5.0),
                rng.random_range(0.0..5.0),
            ));
        }
    }
    for p in (10 * 168 + 1)..=(10 * 168 + 4) {
        events.push(Event::new(
            p,
            rng.random_range(0.0..5.0),
            rng.random_range(0.0..5.0),
        ));
    }
    let store = EventStore::from_events(events).unwrap();
    let grid = GridSpec::new(-1.0, -1.0, 0.25, 28, 28).unwrap();
    let cycle = reduction_cycle(&store, 2, 2 * 168 + 1, grid);
    let test_periods: Vec<u32> = (10 * 168 + 1..=10 * 168 + 4).collect();
    let comparison = run_comparison(
        &store,
        &cycle,
        &test_periods,
        &[Method::Medic, Method::Kde],
    )
    .unwrap();
    assert_eq!(comparison.skipped.len(), test_periods.len());
    for r in &comparison.reports {
        assert!(r.periods.is_empty());
    }
}

#[test]
fn comparison_csv_shape() {
    let store = small_city(5, 4, 15.0);
    let cfg = FitConfig {
        m_weeks: 3,
        ..FitConfig::default()
    };
    let window = FitWindow::new(1, 3 * 168).unwrap();
    let grid = derive_fine_grid(&store, window, &cfg).unwrap();
    let cycle = reduction_cycle(&store, 3, 3 * 168 + 1, grid);
    let periods: Vec<u32> = (3 * 168 + 1..=3 * 168 + 5).collect();
    let comparison = run_comparison(&store, &cycle, &periods, &[Method::Medic]).unwrap();
    let csv = comparison.reports[0].to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "period,als,rmse,rmse_b,ansc,ansc_b");
    assert_eq!(lines.len(), 1 + periods.len());
    let total = medic_total(&medic_predict(&store, periods[0], 3, cycle.count_grid().unwrap()).unwrap());
    assert!(total > 0.0);
    let summary = comparison.summary_table();
    assert!(summary.contains("medic"));
}
