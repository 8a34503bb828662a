//! Distributional checks on the path generator: increment laws, the
//! covariance surface, agreement between the two samplers, and the
//! embedding's eigenvalue positivity across H.

use hurstlet::fbm::{
    fbm_covariance, CholeskySampler, FgnSampler, HurstParams, Normalization, PathSampler,
};

/// H = 1/2 under the plain normalization is standard Brownian motion: the
/// four increments of an N = 2 path are i.i.d. N(0, 1/4).
#[test]
fn brownian_increments_are_iid_gaussian() {
    let params = HurstParams::new(0.5, 1.0).unwrap();
    let sampler = PathSampler::new(params, 2, Normalization::Standard).unwrap();
    let reps = 100_000usize;
    let mut sum = [0.0; 4];
    let mut sum_sq = [0.0; 4];
    let mut cross = [0.0; 3];
    for seed in 0..reps {
        let p = sampler.generate(seed as u64);
        let inc: Vec<f64> = p.samples.windows(2).map(|w| w[1] - w[0]).collect();
        for i in 0..4 {
            sum[i] += inc[i];
            sum_sq[i] += inc[i] * inc[i];
        }
        for i in 0..3 {
            cross[i] += inc[i] * inc[i + 1];
        }
    }
    let var: f64 = 0.25;
    // standard errors: mean sd/sqrt(R), variance var*sqrt(2/R), cross var/sqrt(R)
    let se_mean = var.sqrt() / (reps as f64).sqrt();
    let se_var = var * (2.0 / reps as f64).sqrt();
    let se_cross = var / (reps as f64).sqrt();
    for i in 0..4 {
        let m = sum[i] / reps as f64;
        let v = sum_sq[i] / reps as f64 - m * m;
        assert!(m.abs() <= 3.0 * se_mean, "increment {i} mean {m:e}");
        assert!((v - var).abs() <= 3.0 * se_var, "increment {i} var {v}");
    }
    for (i, c) in cross.iter().enumerate() {
        let cov = c / reps as f64;
        assert!(
            cov.abs() <= 3.0 * se_cross,
            "increments {i},{} correlate: {cov:e}",
            i + 1
        );
    }
}

/// Empirical covariance on a 5x5 subgrid matches
/// sigma^2 kappa(H)/2 (|s|^2H + |t|^2H - |t-s|^2H) within Monte Carlo error.
#[test]
fn covariance_surface_matches_the_closed_form() {
    let params = HurstParams::new(0.7, 1.3).unwrap();
    let n_exp = 6;
    let n = 1usize << n_exp;
    let sampler = PathSampler::new(params, n_exp, Normalization::Kappa).unwrap();
    let idx = [8usize, 16, 32, 48, 64];
    let reps = 10_000usize;
    let mut acc = [[0.0f64; 5]; 5];
    for seed in 0..reps {
        let p = sampler.generate(7_000_000 + seed as u64);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                acc[a][b] += p.samples[i] * p.samples[j];
            }
        }
    }
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            let s = i as f64 / n as f64;
            let t = j as f64 / n as f64;
            let want = fbm_covariance(s, t, params, Normalization::Kappa).unwrap();
            let got = acc[a][b] / reps as f64;
            // Var(X_s X_t) = c_ss c_tt + c_st^2 for centered Gaussians
            let css = fbm_covariance(s, s, params, Normalization::Kappa).unwrap();
            let ctt = fbm_covariance(t, t, params, Normalization::Kappa).unwrap();
            let se = ((css * ctt + want * want) / reps as f64).sqrt();
            assert!(
                (got - want).abs() <= 4.0 * se,
                "cov({s},{t}): got {got}, want {want}, se {se:e}"
            );
        }
    }
}

/// Var(X_(i+m)/n - X_i/n) = sigma^2 kappa (m/n)^2H independently of i.
#[test]
fn increments_are_stationary_with_the_right_variance() {
    let params = HurstParams::new(0.75, 1.0).unwrap();
    let n_exp = 8;
    let n = 1usize << n_exp;
    let sampler = PathSampler::new(params, n_exp, Normalization::Kappa).unwrap();
    let m = 16usize;
    let starts = [0usize, 37, 100, 200];
    let reps = 10_000usize;
    let mut sum_sq = [0.0f64; 4];
    for seed in 0..reps {
        let p = sampler.generate(31_000_000 + seed as u64);
        for (a, &i) in starts.iter().enumerate() {
            let d = p.samples[i + m] - p.samples[i];
            sum_sq[a] += d * d;
        }
    }
    let kappa = hurstlet::fbm::kappa(0.75).unwrap();
    let want = kappa * (m as f64 / n as f64).powf(1.5);
    let se = want * (2.0 / reps as f64).sqrt();
    for (a, &i) in starts.iter().enumerate() {
        let got = sum_sq[a] / reps as f64;
        assert!(
            (got - want).abs() <= 4.0 * se,
            "start {i}: var {got}, want {want}"
        );
    }
}

/// The circulant-embedding sampler and the direct Cholesky sampler draw
/// from the same law: matching variances and a matching covariance entry.
#[test]
fn circulant_and_cholesky_samplers_agree_in_law()  {
    let params = HurstParams::new(0.6, 1.0).unwrap();
    let n_exp = 6;
    let circ = PathSampler::new(params, n_exp, Normalization::Kappa).unwrap();
    let chol = CholeskySampler::new(params, n_exp, Normalization::Kappa).unwrap();
    let reps = 10_000usize;
    let probes = [16usize, 40, 64];
    let run = |gen: &dyn Fn(u64) -> Vec<f64>| {
        let mut sum_sq = [0.0f64; 3];
        let mut cross = 0.0f64;
        for seed in 0..reps {
            let s = gen(seed as u64);
            for (a, &i) in probes.iter().enumerate() {
                sum_sq[a] += s[i] * s[i];
            }
            cross += s[probes[0]] * s[probes[2]];
        }
        (
            [
                sum_sq[0] / reps as f64,
                sum_sq[1] / reps as f64,
                sum_sq[2] / reps as f64,
            ],
            cross / reps as f64,
        )
    };
    let (var_a, cov_a) = run(&|seed| circ.generate(seed).samples);
    let (var_b, cov_b) = run(&|seed| chol.generate(seed ^ 0xDEAD_BEEF).samples);
    for a in 0..3 {
        // each estimate has sd var*sqrt(2/R); the difference doubles the variance
        let se = var_a[a] * (2.0 / reps as f64).sqrt() * (2f64).sqrt();
        assert!(
            (var_a[a] - var_b[a]).abs() <= 4.0 * se,
            "variance at probe {a}: circulant {} vs cholesky {}",
            var_a[a],
            var_b[a]
        );
    }
    let se_cov = (var_a[0] * var_a[2] + cov_a * cov_a).sqrt() / (reps as f64).sqrt() * (2f64).sqrt();
    assert!(
        (cov_a - cov_b).abs() <= 4.0 * se_cov,
        "cross covariance: {cov_a} vs {cov_b}"
    );
}

/// The circulant embedding of fGn is nonnegative definite over the whole
/// H range at a large grid, so the generator never needs approximation.
#[test]
fn embedding_eigenvalues_stay_nonnegative_across_h() {
    for &h in &[0.51, 0.6, 0.7, 0.8, 0.9, 0.99, 0.05, 0.3] {
        assert!(
            FgnSampler::new(1 << 20, h).is_ok(),
            "eigenvalue failure at H = {h}"
        );
    }
}
