use proptest::prelude::*;
use vbcgcd_core::cluster::{estimate_num_classes, kmeans, kmeans_restarts, silhouette_score};
use vbcgcd_core::pca::pca_fit;
use vbcgcd_core::FeatureMatrix;

fn points(max_n: usize, max_d: usize) -> impl Strategy<Value = FeatureMatrix> {
    (2usize..=max_n, 1usize..=max_d).prop_flat_map(|(n, d)| {
        prop::collection::vec(-10.0..10.0f64, n * d).prop_map(move |v| FeatureMatrix::unlabeled(d, v).unwrap())
    })
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Silhouette straight from the definition, singletons scoring 0.
fn brute_silhouette(data: &FeatureMatrix, a: &[usize]) -> f64 {
    let n = data.rows();
    let k = a.iter().max().unwrap() + 1;
    let mut total = 0.0;
    for i in 0..n {
        let mut sum = vec![0.0; k];
        let mut cnt = vec![0usize; k];
        for j in 0..n {
            if i != j {
                sum[a[j]] += sq(data.row(i), data.row(j)).sqrt();
                cnt[a[j]] += 1;
            }
        }
        if cnt[a[i]] == 0 {
            continue;
        }
        let own = sum[a[i]] / cnt[a[i]] as f64;
        let other = (0..k)
            .filter(|&c| c != a[i] && cnt[c] > 0)
            .map(|c| sum[c] / cnt[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if own.max(other) > 0.0 {
            total += (other - own) / own.max(other);
        }
    }
    total / n as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kmeans_invariants(data in points(60, 5), k_raw in 1usize..8, seed in any::<u64>()) {
        let k = k_raw.min(data.rows());
        let r = kmeans(&data, k, seed, 100).unwrap();
        prop_assert!(r.assignments.iter().all(|&c| c < k));
        prop_assert!(r.cluster_sizes().iter().all(|&s| s > 0));
        let direct: f64 = data.iter_rows().zip(&r.assignments).map(|(x, &c)| sq(x, r.centroid(c))).sum();
        prop_assert!((direct - r.inertia).abs() <= 1e-6 * direct.max(1e-12));
        for w in r.inertia_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
        }
        let again = kmeans(&data, k, seed, 100).unwrap();
        prop_assert_eq!(r, again);
        let best = kmeans_restarts(&data, k, seed, 100, 4).unwrap();
        prop_assert_eq!(best.clone(), kmeans_restarts(&data, k, seed, 100, 4).unwrap());
    }

    #[test]
    fn silhouette_matches_definition(data in points(40, 3), k in 2usize..5, seed in any::<u64>()) {
        prop_assume!(data.rows() > k);
        let r = kmeans(&data, k, seed, 50).unwrap();
        let s = silhouette_score(&data, &r.assignments).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert!((s - brute_silhouette(&data, &r.assignments)).abs() < 1e-12);
    }

    #[test]
    fn estimated_count_is_in_range(data in points(30, 3), k_min in 2usize..4, span in 0usize..4, seed in any::<u64>()) {
        let k_max = k_min + span;
        prop_assume!(k_max < data.rows());
        let k = estimate_num_classes(&data, k_min, k_max, seed).unwrap();
        prop_assert!((k_min..=k_max).contains(&k));
    }

    #[test]
    fn pca_components_are_orthonormal(data in points(40, 8), want in 1usize..8) {
        let d_out = want.min(data.rows()).min(data.dim());
        let p = pca_fit(&data, d_out).unwrap();
        let d = data.dim();
        let c = p.components();
        for a in 0..d_out {
            for b in 0..d_out {
                let dot: f64 = (0..d).map(|j| c[a * d + j] * c[b * d + j]).sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                prop_assert!((dot - expect).abs() < 1e-8, "C Cᵀ[{},{}] = {}", a, b, dot);
            }
        }
        for w in p.explained_variance().windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
    }
}

#[test]
fn pca_round_trips_low_rank_data() {
    // Rank-2 data in 5 dimensions.
    let rows: Vec<Vec<f64>> = (0..30)
        .map(|i| {
            let (s, t) = ((i as f64 * 0.37).sin() * 3.0, (i as f64 * 0.11).cos());
            vec![s + t, 2.0 * s, -t, s - 3.0 * t, 0.5 * s + 1.0]
        })
        .collect();
    let m = FeatureMatrix::from_rows(5, &rows, -1).unwrap();
    let p = pca_fit(&m, 2).unwrap();
    let z = p.transform(&m).unwrap();
    for (x, y) in m.iter_rows().zip(z.iter_rows()) {
        let back = p.inverse(y);
        assert!(back.iter().zip(x).all(|(a, b)| (a - b).abs() < 1e-8));
    }
}
