use mbsfn_sim::metrics::{
    cdf_combined, cdf_individual, cdf_mean, close_packet, ecdf, predicted_throughput_ratio, utilization, LatencyLog,
    LatencyMatrix,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_cdf(samples: &[f64], x: f64) -> f64 {
    samples.iter().filter(|&&v| v <= x).count() as f64 / samples.len() as f64
}

fn random_matrix(rng: &mut ChaCha8Rng) -> LatencyMatrix {
    let rows: Vec<Vec<u64>> = (0..50)
        .map(|_| (0..20).map(|_| rng.gen_range(1..400)).collect())
        .collect();
    LatencyMatrix::from_rows(&rows).unwrap()
}

#[test]
fn ecdf_estimators_match_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let l = random_matrix(&mut rng);
        let flat = l.flat();
        let combined = cdf_combined(&l).unwrap();
        let means = l.column_means();
        let mean_curve = cdf_mean(&l).unwrap();
        let individual = cdf_individual(&l).unwrap();
        for x in (0..410).step_by(3).map(f64::from) {
            assert_eq!(combined.eval(x), brute_cdf(&flat, x));
            assert_eq!(mean_curve.eval(x), brute_cdf(&means, x));
            for (i, c) in individual.iter().enumerate() {
                assert_eq!(c.eval(x), brute_cdf(&l.column(i), x));
            }
        }
        // Grand-mean identity.
        let a = combined.mean();
        let b = mean_curve.mean();
        assert!((a - b).abs() <= 1e-12 * a.abs());
        // Partition identity.
        let mut union: Vec<f64> = (0..l.n_users).flat_map(|i| l.column(i)).collect();
        let mut all = flat.clone();
        union.sort_by(f64::total_cmp);
        all.sort_by(f64::total_cmp);
        assert_eq!(union, all);
    }
}

#[test]
fn ecdf_rejects_empty() {
    assert!(ecdf(&[]).is_err());
}

/// Scripted loss patterns: packet generated at 107, the delivered packet
/// arrives 14 TTIs into its own period after k replacements.
#[test]
fn latency_with_losses() {
    for k in 0..3u64 {
        let mut log = LatencyLog::new(1);
        for s in 0..=k {
            log.on_generated(0, s, 107 + 100 * s).unwrap();
        }
        let closed = log.on_delivered(0, k, 107 + 100 * k + 14).unwrap();
        assert_eq!(closed[0].latency_tti, 14 + 100 * k);
        assert_eq!(closed[0].losses, k as u32);
        let direct = close_packet(0, 0, 107, 107 + 100 * k + 14, k as u32).unwrap();
        assert_eq!(direct.latency_tti, 14 + 100 * k);
    }
}

#[test]
fn open_packets_are_censored_at_the_end() {
    let mut log = LatencyLog::new(2);
    log.on_generated(0, 0, 3).unwrap();
    log.on_generated(1, 0, 50).unwrap();
    log.on_delivered(0, 0, 10).unwrap();
    let m = log.into_matrix(1, 200).unwrap();
    assert_eq!(m.get(0, 0).latency_tti, 7);
    assert!(!m.get(0, 0).censored);
    assert_eq!(m.get(0, 1).latency_tti, 150);
    assert!(m.get(0, 1).censored);
}

#[test]
fn predictor_and_utilization() {
    let r = predicted_throughput_ratio(0.52, 25.0, 0.157, 100.0).unwrap();
    assert!((r - 7.025).abs() < 1e-3);
    assert!(predicted_throughput_ratio(1.0, 25.0, 0.1, 100.0).is_err());
    let u5 = utilization(2400.0, 21, 2500.0, 102.0, 0.377).unwrap();
    let u20 = utilization(2400.0, 21, 10_000.0, 102.0, 0.377).unwrap();
    assert!((u5 - 52.426).abs() < 1e-2);
    assert!((u5 / u20 - 4.0).abs() < 1e-12);
}
