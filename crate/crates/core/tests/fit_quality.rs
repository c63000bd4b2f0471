use pcalloc::metrics::fit_quality;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[test]
fn rmse_of_noisy_line_tracks_noise_level() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let xs: Vec<f64> = (0..1000).map(|i| i as f64 / 100.0).collect();
    let actual: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0 + noise.sample(&mut rng)).collect();

    // independent least-squares line
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, actual.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&actual).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let fitted: Vec<f64> = xs.iter().map(|x| my + slope * (x - mx)).collect();

    let q = fit_quality(&actual, &fitted).unwrap();
    assert!((0.3..=0.7).contains(&q.rmse), "{}", q.rmse);
    assert!(q.scc > 0.98);
    let span = actual.iter().cloned().fold(f64::MIN, f64::max);
    assert!((q.nrmse.unwrap() - q.rmse / span).abs() < 1e-12);
}
