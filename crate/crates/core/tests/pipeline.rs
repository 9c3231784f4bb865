use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use csl_xray::fit::{fit_alpha_poisson, fit_alpha_wls};
use csl_xray::pseudo::{
    closure_study, simulate_many, uniform_edges, Execution, Sampling, SimulationConfig,
};
use csl_xray::spectrum::{load_spectrum_file, save_spectrum};
use csl_xray::{BinnedSpectrum, Normalization};

fn fixture() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic_ge_alpha110.csv")
}

#[test]
fn shipped_fixture_recovers_alpha() {
    let s = load_spectrum_file(&fixture(), None, None).unwrap();
    assert_eq!(s.n_bins(), 44);
    assert_eq!(s.exposure(), 80.0);
    let f = fit_alpha_poisson(&s.restrict_range(4.5, 48.5).unwrap()).unwrap();
    assert!((f.alpha_hat - 110.0).abs() <= 2.0 * f.alpha_err, "{f:?}");
}

#[test]
fn estimators_agree_at_high_counts() {
    let edges = uniform_edges(4.5, 48.5, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let counts: Vec<f64> = edges
            .windows(2)
            .map(|w| Poisson::new(400.0 * (w[1] / w[0]).ln()).unwrap().sample(&mut rng))
            .collect();
        assert!(counts.iter().all(|&c| c >= 25.0));
        let s = BinnedSpectrum::from_edges(&edges, counts, 80.0, Normalization::CountsPerBin).unwrap();
        let w = fit_alpha_wls(&s).unwrap();
        let p = fit_alpha_poisson(&s).unwrap();
        assert!((w.alpha_hat - p.alpha_hat).abs() <= 2.0 * w.alpha_err.max(p.alpha_err));
    }
}

#[test]
fn pulls_are_calibrated() {
    for (method, bins, alpha) in [
        (csl_xray::FitMethod::PoissonMle, 44, 110.0),
        (csl_xray::FitMethod::Wls, 6, 2000.0),
    ] {
        let mut cfg = SimulationConfig::paper_like(alpha, 77);
        cfg.edges = uniform_edges(4.5, 48.5, bins);
        cfg.fit_method = method;
        let r = closure_study(&cfg, 400, Execution::default()).unwrap();
        assert!(r.pull_mean.abs() <= 0.2, "{method:?} pull mean {}", r.pull_mean);
        assert!((0.8..=1.2).contains(&r.pull_std), "{method:?} pull sd {}", r.pull_std);
    }
}

#[test]
fn bin_means_match_sample_means() {
    let cfg = SimulationConfig {
        background_rate: 0.005,
        ..SimulationConfig::paper_like(110.0, 3)
    };
    let n = 10_000u64;
    let spectra = simulate_many(&cfg, n, Execution::default()).unwrap();
    for (i, mu) in cfg.bin_means().iter().enumerate() {
        let mean = spectra.iter().map(|s| s.values()[i]).sum::<f64>() / n as f64;
        let se = (mu / n as f64).sqrt();
        assert!((mean - mu).abs() <= 3.0 * se + 1e-12, "bin {i}: {mean} vs {mu}");
    }
}

/// Two-sample KS distance between the pooled spectra of two samplers,
/// evaluated at bin boundaries.
#[test]
fn event_sampling_matches_binned_sampling() {
    let base = SimulationConfig {
        background_rate: 0.01,
        ..SimulationConfig::paper_like(110.0, 11)
    };
    let events = SimulationConfig { sampling: Sampling::EventByEvent, seed: 12, ..base.clone() };
    let pool = |cfg: &SimulationConfig| -> Vec<f64> {
        let mut acc = vec![0.0; cfg.edges.len() - 1];
        for s in simulate_many(cfg, 400, Execution::default()).unwrap() {
            for (a, v) in acc.iter_mut().zip(s.values()) {
                *a += v;
            }
        }
        acc
    };
    let (a, b) = (pool(&base), pool(&events));
    let (na, nb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    let mut ca = 0.0;
    let mut cb = 0.0;
    let mut d: f64 = 0.0;
    for (x, y) in a.iter().zip(&b) {
        ca += x / na;
        cb += y / nb;
        d = d.max((ca - cb).abs());
    }
    // 1% critical value of the two-sample KS statistic
    let crit = 1.63 * ((na + nb) / (na * nb)).sqrt();
    assert!(d < crit, "KS {d} vs {crit}");
    // totals agree to within Poisson fluctuation
    let expected: f64 = base.bin_means().iter().sum::<f64>() * 400.0;
    assert!((nb - expected).abs() < 4.0 * expected.sqrt());
}

#[test]
fn simulated_spectrum_round_trips_through_csv() {
    let cfg = SimulationConfig::paper_like(110.0, 5);
    let s = csl_xray::pseudo::simulate_spectrum(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let mut buf = Vec::new();
    save_spectrum(&s, &[], &mut buf).unwrap();
    std::fs::write(&path, buf).unwrap();
    let back = load_spectrum_file(&path, Some(Normalization::CountsPerBin), Some(80.0)).unwrap();
    assert_eq!(back, s);
}
