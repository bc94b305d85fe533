use bifree::battery::two_pair_covariance;
use bifree::cumulants::CovarianceSpec;
use bifree::ensembles::{
    bifreeness_residuals_mc, estimate_word_moment, haar_unitary, parse_mc_word, sample_gaussian_pair,
    wishart_pair_matrices, CMat, EnsembleModel, PairEnsembleSpec,
};
use bifree::rational::ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn gaussian_entries_follow_the_covariance_rule() {
    let cov = CovarianceSpec::unit_pair(ratio(1, 2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let (mut crossed, mut same) = (Vec::new(), Vec::new());
    for _ in 0..100_000 {
        let (x, y) = sample_gaussian_pair(&cov, 10, &mut rng).unwrap();
        crossed.push((x.entry(0, 1) * y.entry(1, 0)).re);
        same.push((x.entry(0, 1) * y.entry(0, 1)).re);
        assert_eq!(x.max_abs_diff(&x.adjoint()), 0.0);
    }
    let (m, se) = mean_and_stderr(&crossed);
    assert!((m - 0.05).abs() <= 5.0 * se, "E(X_12 Y_21) = {m} +- {se}");
    let (m, se) = mean_and_stderr(&same);
    assert!(m.abs() <= 5.0 * se, "E(X_12 Y_12) = {m} +- {se}");
}

#[test]
fn zero_scale_wishart_factor_vanishes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (left, right) = wishart_pair_matrices(0.5, 0.0, 1.0, 12, &mut rng).unwrap();
    assert_eq!(left.max_abs_diff(&CMat::zeros(12)), 0.0);
    assert!(right.trace().re > 0.0);
}

#[test]
fn haar_samples_are_unitary() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for n in [1, 5, 20] {
        let u = haar_unitary(n, &mut rng);
        assert!(u.mul(&u.adjoint()).max_abs_diff(&CMat::identity(n)) < 1e-10);
    }
}

#[test]
fn gaussian_left_right_word_matches_its_covariance() {
    let cov = CovarianceSpec::unit_pair(ratio(1, 4)).unwrap();
    let spec = PairEnsembleSpec::new(20, 3, EnsembleModel::Gaussian { cov }).unwrap();
    let e = estimate_word_moment(&spec, &parse_mc_word("l.l r.r").unwrap(), 2000).unwrap();
    assert!(e.within(0.25, 5.0, 0.0), "{e:?}");
}

#[test]
fn independent_pairs_have_small_mixed_residuals() {
    let spec = PairEnsembleSpec::new(40, 17, EnsembleModel::Gaussian { cov: two_pair_covariance().unwrap() }).unwrap();
    let words: Vec<_> = ["x1.l@1 y2.r@2", "x1.l@1 x2.l@2 x1.l@1 x2.l@2", "x1.l@1 y2.r@2 y1.r@1 x2.l@2"]
        .iter()
        .map(|w| parse_mc_word(w).unwrap())
        .collect();
    for r in bifreeness_residuals_mc(&spec, &words, 300).unwrap() {
        assert!(r.within(0.0, 5.0, 0.05), "{r:?}");
    }
}

#[test]
fn constant_diagonal_is_bi_free_from_a_gaussian_pair() {
    let d: Vec<Vec<f64>> = (0..10)
        .map(|i| {
            (0..10)
                .map(|j| {
                    if i != j {
                        0.0
                    } else if i < 5 {
                        1.0
                    } else {
                        -1.0
                    }
                })
                .collect()
        })
        .collect();
    let cov = CovarianceSpec::unit_pair(ratio(1, 2)).unwrap();
    let spec = PairEnsembleSpec::new(10, 23, EnsembleModel::Gaussian { cov }).unwrap().with_constant("D", d).unwrap();
    let words = vec![parse_mc_word("l.l@1 D.l@2 r.r@1 D.r@2").unwrap()];
    let r = &bifreeness_residuals_mc(&spec, &words, 400).unwrap()[0];
    assert!(r.within(0.0, 5.0, 0.05), "{r:?}");
}
