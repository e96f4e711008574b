//! Statistical checks of the event engine against the stationary hit
//! models, plus exactness audits of the occupancy bookkeeping.

use utilcache::cache::{run_simulation, CacheKind, Policy, RequestStream, SimConfig, TtlCache};
use utilcache::catalog::Catalog;
use utilcache::control::{EstimatorMode, GapSampling, RateEstimator};
use utilcache::solver::{solve_dual_price, violation_bound};
use utilcache::utility::UtilityFunction;

#[test]
fn single_file_hit_probability_matches_reset_model() {
    // rate 1, timer ln 2: the reset model puts the hit probability at 1/2
    let catalog = Catalog::from_rates(vec![1.0]).unwrap();
    let timers = [2.0_f64.ln()];
    let config = SimConfig::new(1_000_000, 42);
    let out = run_simulation(&catalog, Policy::FixedTimers(&timers), CacheKind::Reset, &config)
        .unwrap();
    let h = out.metrics.hit_fraction(0);
    assert!((h - 0.5).abs() < 0.005, "empirical {h}");
}

#[test]
fn two_file_hit_probabilities_match_solved_timers() {
    let catalog = Catalog::from_rates(vec![2.0, 1.0]).unwrap();
    let utilities = vec![
        UtilityFunction::lru_equiv(2.0).unwrap(),
        UtilityFunction::lru_equiv(1.0).unwrap(),
    ];
    let alloc = solve_dual_price(&catalog, &utilities, 1.0, CacheKind::Reset).unwrap();
    let config = SimConfig::new(600_000, 7);
    let out = run_simulation(
        &catalog,
        Policy::FixedTimers(&alloc.timers),
        CacheKind::Reset,
        &config,
    )
    .unwrap();
    for file in 0..2 {
        let n = out.metrics.requests[file] as f64;
        let h_model = alloc.hit_prob[file];
        let sigma = (h_model * (1.0 - h_model) / n).sqrt();
        let h = out.metrics.hit_fraction(file);
        assert!(
            (h - h_model).abs() < 3.0 * sigma,
            "file {file}: {h} vs {h_model} (3 sigma = {})",
            3.0 * sigma
        );
    }
}

#[test]
fn per_file_pasta_check_over_a_zipf_catalog() {
    let catalog = Catalog::zipf(50, 0.8, 1.0).unwrap();
    for kind in [CacheKind::Reset, CacheKind::NonReset] {
        let timers: Vec<f64> = catalog.rates().iter().map(|_| 3.0).collect();
        let config = SimConfig::new(2_000_000, 13);
        let out = run_simulation(&catalog, Policy::FixedTimers(&timers), kind, &config).unwrap();
        for file in 0..catalog.len() {
            let n = out.metrics.requests[file];
            if n < 1_000 {
                continue;
            }
            let h_model = kind.hit_prob(catalog.rate(file), 3.0);
            let sigma = (h_model * (1.0 - h_model) / n as f64).sqrt();
            let h = out.metrics.hit_fraction(file);
            assert!(
                (h - h_model).abs() <= 3.0 * sigma,
                "{kind:?} file {file}: {h} vs {h_model} with n = {n}"
            );
        }
    }
}

#[test]
fn zero_timers_never_cache_anything() {
    let catalog = Catalog::zipf(10, 0.8, 1.0).unwrap();
    let timers = vec![0.0; 10];
    let config = SimConfig::new(50_000, 3);
    let out = run_simulation(&catalog, Policy::FixedTimers(&timers), CacheKind::Reset, &config)
        .unwrap();
    assert_eq!(out.metrics.total_hits(), 0);
    assert_eq!(out.metrics.mean_occupancy(), 0.0);
}

#[test]
fn heap_and_scan_occupancy_agree_at_audit_instants() {
    let catalog = Catalog::zipf(100, 0.9, 1.0).unwrap();
    let mut stream: RequestStream<f64> = RequestStream::new(&catalog, 99);
    let mut cache = TtlCache::new(CacheKind::Reset);
    let mut audits = 0;
    for event in 0u64..200_000 {
        let (now, file) = stream.next_request();
        cache.advance(now, |_, _| {});
        cache.serve(file, 40.0);
        if event % 2_000 == 1_999 {
            assert_eq!(cache.occupancy(), cache.audit_occupancy(), "at event {event}");
            audits += 1;
        }
    }
    assert_eq!(audits, 100);
}

#[test]
fn time_average_occupancy_concentrates_at_capacity() {
    let catalog = Catalog::zipf(200, 0.8, 1.0).unwrap();
    let utilities: Vec<_> = catalog
        .rates()
        .iter()
        .map(|&r| UtilityFunction::log_weighted(r).unwrap())
        .collect();
    let capacity = 40.0;
    let alloc = solve_dual_price(&catalog, &utilities, capacity, CacheKind::Reset).unwrap();
    let config = SimConfig::new(1_000_000, 5);
    let out = run_simulation(
        &catalog,
        Policy::FixedTimers(&alloc.timers),
        CacheKind::Reset,
        &config,
    )
    .unwrap();
    let spread: f64 = alloc.hit_prob.iter().map(|h| h * (1.0 - h)).sum::<f64>().sqrt();
    let mean = out.metrics.mean_occupancy();
    assert!(
        (mean - capacity).abs() < 3.0 * spread,
        "mean occupancy {mean} vs capacity {capacity} (band {})",
        3.0 * spread
    );

    // occupancy tail within the Chernoff bound at several headrooms
    for eps in [0.05, 0.1, 0.2] {
        let level = (capacity * (1.0 + eps)).ceil() as usize;
        let tail = out.metrics.tail_frequency(level);
        let bound = violation_bound(capacity, eps).unwrap();
        assert!(tail <= bound, "eps {eps}: tail {tail} above bound {bound}");
    }

    // the occupancy distribution is a proper distribution
    let pdf = out.metrics.occupancy_pdf();
    assert!((pdf.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn identical_seeds_reproduce_identical_metrics() {
    let catalog = Catalog::zipf(30, 0.7, 1.0).unwrap();
    let timers: Vec<f64> = catalog.rates().iter().map(|&r| 1.0 / r).collect();
    let config = SimConfig::new(100_000, 12345);
    let a = run_simulation(&catalog, Policy::FixedTimers(&timers), CacheKind::Reset, &config)
        .unwrap();
    let b = run_simulation(&catalog, Policy::FixedTimers(&timers), CacheKind::Reset, &config)
        .unwrap();
    assert_eq!(a.metrics.requests, b.metrics.requests);
    assert_eq!(a.metrics.hits, b.metrics.hits);
    assert_eq!(a.metrics.mean_occupancy(), b.metrics.mean_occupancy());
    assert_eq!(a.end_time, b.end_time);
}

#[test]
fn interarrival_samples_are_unbiased_for_the_mean_gap() {
    // large timer relative to the mean gap, so nearly every request hits
    // and the truncation of observed gaps is negligible
    let rate = 2.0;
    let catalog = Catalog::from_rates(vec![rate]).unwrap();
    let mut stream: RequestStream<f64> = RequestStream::new(&catalog, 8);
    let mut cache = TtlCache::new(CacheKind::Reset);
    let mut est: RateEstimator<f64> =
        RateEstimator::new(1, 1.0, EstimatorMode::OneSample, GapSampling::HitOnly);
    let ttl = 5.0;
    let mut sum = 0.0;
    let mut samples = 0u64;
    while samples < 20_000 {
        let (now, file) = stream.next_request();
        cache.advance(now, |_, _| {});
        if let (Some(armed), Some(remaining)) = (cache.armed_ttl(file), cache.remaining_ttl(file)) {
            est.observe_interarrival(file as usize, armed, remaining);
            sum += armed - remaining;
            samples += 1;
        }
        cache.serve(file, ttl);
    }
    let mean = sum / samples as f64;
    assert!((mean - 0.5).abs() < 0.02, "sample mean {mean}");
    // the estimator carries the latest sample as its current estimate
    assert!(est.mean_interarrival(0) > 0.0);
}

#[test]
fn rejects_bad_configs() {
    let catalog = Catalog::zipf(4, 0.8, 1.0).unwrap();
    let timers = vec![1.0; 3];
    let config = SimConfig::new(10, 0);
    assert!(run_simulation(&catalog, Policy::FixedTimers(&timers), CacheKind::Reset, &config)
        .is_err());
    let timers = vec![1.0, 1.0, 1.0, -2.0];
    assert!(run_simulation(&catalog, Policy::FixedTimers(&timers), CacheKind::Reset, &config)
        .is_err());
    let mut zero = SimConfig::new(0, 0);
    zero.horizon = 0;
    let timers = vec![1.0; 4];
    assert!(
        run_simulation(&catalog, Policy::FixedTimers(&timers), CacheKind::Reset, &zero).is_err()
    );
}
