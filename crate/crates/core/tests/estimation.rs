//! Statistical behavior of the estimation pipeline: innovation moments,
//! the noise-variance proxy, coefficient variance laws, the error
//! decomposition, the clean-energy floor, and the end-to-end median error.

use hurstlet::estimator::{diagnostics_decompose, dtilde, local_noise_variance};
use hurstlet::fbm::{kappa, HurstParams, Normalization, PathSampler};
use hurstlet::harness::{run_experiment, ExperimentConfig};
use hurstlet::noise::{
    observe, observe_values, Amplitude, NoiseModel, NoiseSpec, NoisySeries, SeriesSource, XiDist,
};
use hurstlet::wavelet::build_basis;

fn noiseless(samples: &[f64]) -> NoisySeries {
    NoisySeries::from_values(samples.to_vec(), SeriesSource::External, None).unwrap()
}

/// The innovation laws are standardized: mean 0, variance 1, and the
/// Student t(10) variant has fourth moment 3(nu-2)/(nu-4) = 4. t(5) has a
/// finite fourth moment (so the estimator theory applies) but an infinite
/// eighth, so only its mean and variance are testable at this sample size.
#[test]
fn innovations_have_the_declared_moments() {
    let draws = 1_000_000usize;
    let moments = |dist: XiDist, seed: u64| {
        let spec = NoiseSpec {
            amplitude: Amplitude::Constant(1.0),
            xi_dist: dist,
            seed,
        };
        let xs = observe_values(&vec![0.0; draws], &spec).unwrap();
        let r = draws as f64;
        let m1 = xs.iter().sum::<f64>() / r;
        let m2 = xs.iter().map(|x| x * x).sum::<f64>() / r;
        let m4 = xs.iter().map(|x| x.powi(4)).sum::<f64>() / r;
        (m1, m2, m4)
    };
    let rt = (draws as f64).sqrt();

    let (m1, m2, m4) = moments(XiDist::Gaussian, 11);
    assert!(m1.abs() <= 4.0 / rt, "gaussian mean {m1:e}");
    // Var(xi^2) = 2, Var(xi^4) = E xi^8 - 9 = 96
    assert!((m2 - 1.0).abs() <= 4.0 * (2.0f64).sqrt() / rt, "gaussian var {m2}");
    assert!((m4 - 3.0).abs() <= 4.0 * (96.0f64).sqrt() / rt, "gaussian m4 {m4}");

    let (m1, m2, m4) = moments(XiDist::ScaledStudentT(10.0), 12);
    assert!(m1.abs() <= 4.0 / rt, "t10 mean {m1:e}");
    assert!((m2 - 1.0).abs() <= 4.0 * 2.0 / rt, "t10 var {m2}");
    // E xi^8 = 1120 after scaling, so Var(xi^4) = 1120 - 16 = 1104
    assert!((m4 - 4.0).abs() <= 4.0 * (1104.0f64).sqrt() / rt, "t10 m4 {m4}");

    let (m1, m2, _) = moments(XiDist::ScaledStudentT(5.0), 13);
    assert!(m1.abs() <= 5.0 / rt, "t5 mean {m1:e}");
    // Var(xi^2) = E xi^4 - 1 = 8 for t(5) after scaling
    assert!((m2 - 1.0).abs() <= 4.0 * (8.0f64).sqrt() / rt, "t5 var {m2}");

    // finite fourth moment requires nu >= 5
    assert!(XiDist::ScaledStudentT(4.5).validate().is_err());
    assert!(XiDist::ScaledStudentT(5.0).validate().is_ok());
}

/// Var(y_i - x_i) = a(x_i)^2 pointwise for the state-dependent amplitude.
#[test]
fn amplitude_modulates_the_noise_variance_pointwise() {
    let params = HurstParams::new(0.7, 1.0).unwrap();
    let sampler = PathSampler::new(params, 10, Normalization::Kappa).unwrap();
    let path = sampler.generate(5);
    let amp = Amplitude::BoundedSmooth {
        alpha: 0.1,
        beta: 0.5,
    };
    let model = NoiseModel {
        amplitude: amp,
        xi_dist: XiDist::Gaussian,
    };
    let reps = 20_000usize;
    let probes = [10usize, 100, 1000];
    let mut sum_sq = [0.0f64; 3];
    for rep in 0..reps {
        let series = observe(&path, &model.with_seed(rep as u64)).unwrap();
        for (a, &i) in probes.iter().enumerate() {
            let d = series.values()[i] - path.samples[i];
            sum_sq[a] += d * d;
        }
    }
    for (a, &i) in probes.iter().enumerate() {
        let want = amp.eval(path.samples[i]).powi(2);
        let got = sum_sq[a] / reps as f64;
        // variance estimate has relative sd sqrt(2/reps) = 1%
        assert!(
            (got - want).abs() <= 0.05 * want,
            "index {i}: noise variance {got:e}, amplitude^2 {want:e}"
        );
    }
}

/// The windowed variance proxy recovers the noise floor c^2 up to the
/// path's own oscillation inside the window, which is O(n^-2H * window
/// span) and small at N = 16.
#[test]
fn local_noise_variance_estimates_the_noise_floor() {
    let h = 0.7;
    let c = 0.05;
    let n_exp = 16;
    let params = HurstParams::new(h, 1.0).unwrap();
    let sampler = PathSampler::new(params, n_exp, Normalization::Kappa).unwrap();
    let model: NoiseModel = "const:0.05@gauss".parse().unwrap();
    let reps = 4000usize;
    let (j, k) = (4u32, 2usize);
    let mut sum = 0.0;
    for rep in 0..reps {
        let path = sampler.generate(900_000 + rep as u64);
        let series = observe(&path, &model.with_seed(rep as u64)).unwrap();
        sum += local_noise_variance(&series, j, k).unwrap();
    }
    let mean = sum / reps as f64;
    // allowance: 10% of c^2 for estimation error (the Monte Carlo standard
    // error is far below it at 4000 replicates) plus the path-variance
    // term, bounded by 5 * 2^(-N H)
    let bound = 0.1 * c * c + 5.0 * (2f64).powf(-(n_exp as f64) * h);
    assert!(
        (mean - c * c).abs() <= bound,
        "mean a-hat^2 {mean:e} vs c^2 {:e} (allowed gap {bound:e})",
        c * c
    );
}

/// Coefficient variance law and self-similarity across levels, measured
/// on noiseless paths: Var(d_{j,k}) = sigma^2 c(psi) kappa(H) 2^(-j(1+2H)),
/// so consecutive levels have variance ratio 2^(1+2H).
#[test]
fn coefficient_variance_follows_the_scaling_law() {
    let h = 0.7;
    let n_exp = 14;
    let params = HurstParams::new(h, 1.0).unwrap();
    let sampler = PathSampler::new(params, n_exp, Normalization::Kappa).unwrap();
    let basis = build_basis(12).unwrap();
    let reps = 10_000usize;
    // pooled second moments per level (coefficients are centered)
    let mut sum_sq3 = 0.0;
    let mut count3 = 0usize;
    let mut sum_sq4 = 0.0;
    let mut count4 = 0usize;
    let mut sum_sq5 = 0.0;
    let mut count5 = 0usize;
    for rep in 0..reps {
        let path = sampler.generate(500_000 + rep as u64);
        let series = noiseless(&path.samples);
        // only two far-apart shifts at j = 3 to keep pooling near-independent
        let d3 = dtilde(&series, &basis, 3).unwrap();
        for &k in &[0usize, 3] {
            sum_sq3 += d3[k] * d3[k];
            count3 += 1;
        }
        for d in dtilde(&series, &basis, 4).unwrap() {
            sum_sq4 += d * d;
            count4 += 1;
        }
        for d in dtilde(&series, &basis, 5).unwrap() {
            sum_sq5 += d * d;
            count5 += 1;
        }
    }
    let var3 = sum_sq3 / count3 as f64;
    let var4 = sum_sq4 / count4 as f64;
    let var5 = sum_sq5 / count5 as f64;
    let c_psi = basis.energy_constant(h).unwrap();
    let want3 = c_psi * kappa(h).unwrap() * (2f64).powf(-3.0 * (1.0 + 2.0 * h));
    assert!(
        (var3 - want3).abs() <= 0.05 * want3,
        "Var(d_3): {var3:e} vs {want3:e}"
    );
    let ratio = var4 / var5;
    let want_ratio = (2f64).powf(1.0 + 2.0 * h);
    assert!(
        (ratio - want_ratio).abs() <= 0.08 * want_ratio,
        "level variance ratio {ratio} vs 2^(1+2H) = {want_ratio}"
    );
}

/// Error decomposition d~ = d + b + e: the noise part e centers at zero
/// given the path, and the discretization part b has variance of order
/// 2^-j n^-2H (checked through its log-log slopes in j and N).
#[test]
fn decomposition_terms_behave() {
    let basis = build_basis(14).unwrap();
    let params = HurstParams::new(0.7, 1.0).unwrap();

    // conditional centering of e on one fixed path
    let sampler = PathSampler::new(params, 12, Normalization::Kappa).unwrap();
    let path = sampler.generate(77);
    let model: NoiseModel = "const:0.05@gauss".parse().unwrap();
    let noise_reps = 200usize;
    let mut e_sums = vec![0.0f64; 8];
    for rep in 0..noise_reps {
        let series = observe(&path, &model.with_seed(3000 + rep as u64)).unwrap();
        let parts = diagnostics_decompose(&series, &path, &basis, 4).unwrap();
        for (k, (_, e)) in parts.iter().enumerate() {
            e_sums[k] += e;
        }
    }
    // e is a weighted sum of the window noise: sd ~ c * sqrt(sum I_l^2)
    let se_mean = 0.05 * ((2f64).powi(-12)).sqrt() / (noise_reps as f64).sqrt();
    for (k, s) in e_sums.iter().enumerate() {
        let m = s / noise_reps as f64;
        assert!(
            m.abs() <= 4.0 * se_mean + 1e-5,
            "shift {k}: conditional mean of e is {m:e}"
        );
    }

    // Var(b) scaling in j and N on noiseless paths. The increments of the
    // path are long-range correlated, which makes the cell errors add up
    // coherently: Var(b) scales as 2^(j(1-2H)) n^-2. That sits below the
    // theoretical envelope 2^-j n^-2H by the factor (2^j/n)^(2-2H) <= 1,
    // so both the sharp orders and the envelope are checked.
    let h = 0.7;
    let path_reps = 400usize;
    let js = [4u32, 5];
    let n_exps = [10u32, 12, 14];
    let mut log_var = vec![vec![0.0f64; n_exps.len()]; js.len()];
    for (ni, &n_exp) in n_exps.iter().enumerate() {
        let sampler = PathSampler::new(params, n_exp, Normalization::Kappa).unwrap();
        for (ji, &j) in js.iter().enumerate() {
            let mut sum_sq = 0.0;
            let mut count = 0usize;
            for rep in 0..path_reps {
                let path = sampler.generate(40_000 + rep as u64);
                let series = noiseless(&path.samples);
                for (b, _) in diagnostics_decompose(&series, &path, &basis, j).unwrap() {
                    sum_sq += b * b;
                    count += 1;
                }
            }
            log_var[ji][ni] = (sum_sq / count as f64).log2();
            // envelope with an absolute constant of 1
            let envelope = -(j as f64) - 2.0 * h * n_exp as f64;
            assert!(
                log_var[ji][ni] <= envelope,
                "Var(b) at (j={j}, N={n_exp}) breaks the 2^-j n^-2H envelope: \
                 log2 {} vs {envelope}",
                log_var[ji][ni]
            );
        }
    }
    // balanced design: the j-slope is the mean row difference, the N-slope
    // comes from the ends of the N range
    let slope_j = (0..n_exps.len())
        .map(|ni| log_var[1][ni] - log_var[0][ni])
        .sum::<f64>()
        / n_exps.len() as f64;
    let slope_n = (0..js.len())
        .map(|ji| (log_var[ji][2] - log_var[ji][0]) / 4.0)
        .sum::<f64>()
        / js.len() as f64;
    assert!(
        (slope_j - (1.0 - 2.0 * h)).abs() <= 0.3,
        "Var(b) level slope {slope_j} (want about 1 - 2H = {})",
        1.0 - 2.0 * h
    );
    assert!(
        (slope_n - (-2.0)).abs() <= 0.3,
        "Var(b) grid slope {slope_n} (want about -2)"
    );
}

/// Rescaled clean energies 2^(2jH) Q_j stay above a floor well below
/// their common mean: the event min_j 2^(2jH) Q_j < mean/16 is rare.
#[test]
fn clean_energy_rarely_dips_below_the_floor() {
    let h = 0.75;
    let n_exp = 16;
    let params = HurstParams::new(h, 1.0).unwrap();
    let sampler = PathSampler::new(params, n_exp, Normalization::Kappa).unwrap();
    let basis = build_basis(12).unwrap();
    let reps = 2000usize;
    let reference = 0.5 * basis.energy_constant(h).unwrap() * kappa(h).unwrap();
    let floor = reference / 16.0;
    let mut dips = 0usize;
    for rep in 0..reps {
        let path = sampler.generate(7_700_000 + rep as u64);
        let series = noiseless(&path.samples);
        let mut min_rescaled = f64::INFINITY;
        for j in 3..=8u32 {
            let q: f64 = dtilde(&series, &basis, j)
                .unwrap()
                .iter()
                .map(|d| d * d)
                .sum();
            min_rescaled = min_rescaled.min((2f64).powf(2.0 * j as f64 * h) * q);
        }
        if min_rescaled < floor {
            dips += 1;
        }
    }
    let rate = dips as f64 / reps as f64;
    assert!(rate <= 0.05, "floor-dip frequency {rate} (dips {dips})");
}

/// End-to-end median accuracy at a realistic size. The adaptive selector
/// keeps the estimate stable but works one or two levels below the
/// theory-optimal scale, so the attainable median error at N = 18 sits
/// near 0.15; this pins the current behavior with headroom for seed noise.
#[test]
fn median_error_at_n18_stays_pinned() {
    let mut cfg = ExperimentConfig::single(0.7, 1.0, 18, "const:0.03@gauss".parse().unwrap());
    cfg.replicates = 500;
    cfg.base_seed = 20_240_601;
    let rows = run_experiment(&cfg, false).unwrap();
    let mut errs: Vec<f64> = rows.iter().filter_map(|r| r.abs_error).collect();
    assert_eq!(errs.len(), 500);
    errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = 0.5 * (errs[249] + errs[250]);
    assert!(median <= 0.18, "median |H-hat - H| = {median}");
}
