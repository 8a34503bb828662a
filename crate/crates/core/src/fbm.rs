//! Exact simulation of scaled fractional Brownian motion on dyadic grids.
//!
//! The process is X = sigma * W^H sampled at i/n for i = 0..n, n = 2^N.
//! Sampling goes through the increments: fractional Gaussian noise is drawn
//! exactly by circulant embedding, scaled to the grid spacing, and summed.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::util::format_float;

/// Largest grid exponent the generator accepts (memory guard).
pub const MAX_GRID_EXP: u32 = 24;

/// Largest grid exponent for the dense Cholesky generator.
pub const MAX_CHOLESKY_EXP: u32 = 10;

/// Relative tolerance for the circulant embedding eigenvalue check:
/// eigenvalues below `-EIG_REL_TOL * max_eigenvalue` abort the construction,
/// anything between that and zero is treated as rounding and clamped.
const EIG_REL_TOL: f64 = 1e-8;

/// Covariance convention of the simulated process.
///
/// `Kappa` carries the factor kappa(H) = pi / (H Gamma(2H) sin(pi H)) in the
/// covariance, the harmonizable-representation convention; it is the one the
/// estimator's sigma-recovery formula inverts, so it is the default
/// everywhere. `Standard` drops the factor, giving Var(X_1) = sigma^2 as in
/// most common fBm generators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    Kappa,
    Standard,
}

impl Normalization {
    fn factor(self, h: f64) -> Result<f64> {
        match self {
            Normalization::Kappa => kappa(h),
            Normalization::Standard => Ok(1.0),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Normalization::Kappa => write!(f, "kappa"),
            Normalization::Standard => write!(f, "standard"),
        }
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kappa" => Ok(Normalization::Kappa),
            "standard" => Ok(Normalization::Standard),
            other => Err(Error::Domain(format!(
                "unknown normalization {other:?}, expected \"kappa\" or \"standard\""
            ))),
        }
    }
}

/// The pair (H, sigma) identifying the law of the process.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HurstParams {
    pub h: f64,
    pub sigma: f64,
}

impl HurstParams {
    pub fn new(h: f64, sigma: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::Domain(format!("H must lie in (0, 1), got {h}")));
        }
        if !(sigma > 0.0) {
            return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
        }
        Ok(HurstParams { h, sigma })
    }
}

/// kappa(H) = pi / (H * Gamma(2H) * sin(pi H)).
///
/// Finite and positive on all of (0, 1): near H = 0 the sin factor behaves
/// like pi*H and cancels the 1/H, near H = 1 everything is regular.
pub fn kappa(h: f64) -> Result<f64> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::Domain(format!("H must lie in (0, 1), got {h}")));
    }
    Ok(PI / (h * gamma(2.0 * h) * (PI * h).sin()))
}

/// Population covariance of X at two times in [0, 1]:
/// sigma^2 * kappa(H)/2 * (|t|^2H + |s|^2H - |t - s|^2H), with kappa(H)
/// replaced by 1 under the `Standard` normalization.
pub fn fbm_covariance(
    s: f64,
    t: f64,
    params: HurstParams,
    normalization: Normalization,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!(
            "times must lie in [0, 1], got s = {s}, t = {t}"
        )));
    }
    let two_h = 2.0 * params.h;
    let factor = normalization.factor(params.h)?;
    Ok(params.sigma * params.sigma * factor / 2.0
        * (t.powf(two_h) + s.powf(two_h) - (t - s).abs().powf(two_h)))
}

/// One exact sample of sigma * W^H on {i/n}.
#[derive(Clone, Debug)]
pub struct FbmPath {
    /// Grid size n = 2^N.
    pub n: usize,
    /// samples[i] = X_{i/n}; length n + 1, samples[0] = 0.
    pub samples: Vec<f64>,
    pub params: HurstParams,
    pub normalization: Normalization,
}

impl FbmPath {
    pub fn n_exp(&self) -> u32 {
        self.n.trailing_zeros()
    }
}

fn validate_grid_exp(n_exp: u32) -> Result<()> {
    if n_exp % 2 != 0 || n_exp < 2 || n_exp > MAX_GRID_EXP {
        return Err(Error::Size(format!(
            "grid exponent N must be even and in [2, {MAX_GRID_EXP}], got {n_exp}"
        )));
    }
    Ok(())
}

/// Exact sampler for unit-variance fractional Gaussian noise at unit lag,
/// by circulant embedding of the autocovariance
/// gamma(k) = (|k-1|^2H - 2|k|^2H + |k+1|^2H) / 2.
///
/// The embedding eigenvalues are computed once at construction; each call to
/// [`FgnSampler::sample`] costs one FFT of length 2 * count. For fGn the
/// eigenvalues are nonnegative for every H in (0, 1); a materially negative
/// eigenvalue therefore signals a bug and construction fails hard rather
/// than falling back to an approximation.
pub struct FgnSampler {
    count: usize,
    h: f64,
    /// Per-frequency standard deviations, already folded with the 1/sqrt(2n)
    /// normalization of the inverse embedding.
    weights: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl FgnSampler {
    pub fn new(count: usize, h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::Domain(format!("H must lie in (0, 1), got {h}")));
        }
        if count < 1 {
            return Err(Error::Size("fGn sample count must be at least 1".into()));
        }
        let m = 2 * count;
        let two_h = 2.0 * h;
        // The textbook form |k-1|^2H - 2k^2H + |k+1|^2H subtracts three terms
        // of order k^2H that cancel down to order k^(2H-2). For H near 1 and
        // k in the millions that wipes out all significant digits and the
        // roundoff shows up as spuriously negative eigenvalues. Factoring out
        // k^2H keeps the cancellation between small, exactly computed
        // quantities instead.
        let acov = |k: f64| {
            if k < 2.0 {
                0.5 * ((k - 1.0).abs().powf(two_h) - 2.0 * k.powf(two_h) + (k + 1.0).powf(two_h))
            } else {
                let up = (two_h * (1.0 / k).ln_1p()).exp_m1();
                let down = (two_h * (-1.0 / k).ln_1p()).exp_m1();
                0.5 * k.powf(two_h) * (up + down)
            }
        };
        let mut buf: Vec<Complex<f64>> = (0..m)
            .map(|i| {
                let k = if i <= count { i } else { m - i };
                Complex::new(acov(k as f64), 0.0)
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        fft.process(&mut buf);

        let max_eig = buf.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
        let tol = EIG_REL_TOL * max_eig;
        let mut weights = Vec::with_capacity(count + 1);
        for (k, c) in buf.iter().take(count + 1).enumerate() {
            let lam = c.re;
            if lam < -tol {
                return Err(Error::Numerical(format!(
                    "circulant embedding eigenvalue {lam:.6e} at index {k} \
                     below -{tol:.1e} (count = {count}, H = {h})"
                )));
            }
            let lam = lam.max(0.0);
            // variance of the k-th spectral coordinate; the endpoints k = 0
            // and k = count carry a single real Gaussian, the rest split
            // their variance between a real and an imaginary one
            let w = if k == 0 || k == count {
                (lam / m as f64).sqrt()
            } else {
                (lam / (2.0 * m as f64)).sqrt()
            };
            weights.push(w);
        }
        Ok(FgnSampler {
            count,
            h,
            weights,
            fft,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn hurst(&self) -> f64 {
        self.h
    }

    /// Draws `count` values of unit fGn. Deterministic in the RNG state; the
    /// draw order is fixed (endpoint coefficients first, then the paired
    /// real/imaginary coordinates in frequency order).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let m = 2 * self.count;
        let mut buf = vec![Complex::new(0.0, 0.0); m];
        let z0: f64 = rng.sample(StandardNormal);
        let zn: f64 = rng.sample(StandardNormal);
        buf[0] = Complex::new(self.weights[0] * z0, 0.0);
        buf[self.count] = Complex::new(self.weights[self.count] * zn, 0.0);
        for k in 1..self.count {
            let zr: f64 = rng.sample(StandardNormal);
            let zi: f64 = rng.sample(StandardNormal);
            let w = self.weights[k];
            buf[k] = Complex::new(w * zr, w * zi);
            buf[m - k] = buf[k].conj();
        }
        self.fft.process(&mut buf);
        buf[..self.count].iter().map(|c| c.re).collect()
    }
}

/// Reusable path generator: fixes (params, N, normalization) once, then
/// produces one exact path per seed. Construction does the eigenvalue
/// decomposition; use this instead of [`generate_path`] inside Monte Carlo
/// loops.
pub struct PathSampler {
    params: HurstParams,
    n_exp: u32,
    normalization: Normalization,
    fgn: FgnSampler,
    /// sqrt(normalization factor) * n^-H; sigma is applied last so that
    /// paths are exactly sigma times the unit-sigma path.
    unit_increment_scale: f64,
}

impl PathSampler {
    pub fn new(params: HurstParams, n_exp: u32, normalization: Normalization) -> Result<Self> {
        validate_grid_exp(n_exp)?;
        let n = 1usize << n_exp;
        let fgn = FgnSampler::new(n, params.h)?;
        let unit_increment_scale = normalization.factor(params.h)?.sqrt() * (n as f64).powf(-params.h);
        Ok(PathSampler {
            params,
            n_exp,
            normalization,
            fgn,
            unit_increment_scale,
        })
    }

    pub fn generate(&self, seed: u64) -> FbmPath {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.generate_with(&mut rng)
    }

    pub fn generate_with<R: Rng + ?Sized>(&self, rng: &mut R) -> FbmPath {
        let n = 1usize << self.n_exp;
        let fgn = self.fgn.sample(rng);
        let mut samples = Vec::with_capacity(n + 1);
        samples.push(0.0);
        let mut acc = 0.0;
        for x in fgn {
            acc += self.unit_increment_scale * x;
            samples.push(acc);
        }
        // multiply by sigma after summation: bitwise sigma-equivariance
        for s in &mut samples {
            *s *= self.params.sigma;
        }
        FbmPath {
            n,
            samples,
            params: self.params,
            normalization: self.normalization,
        }
    }
}

/// One-shot convenience wrapper around [`PathSampler`].
pub fn generate_path(
    params: HurstParams,
    n_exp: u32,
    seed: u64,
    normalization: Normalization,
) -> Result<FbmPath> {
    Ok(PathSampler::new(params, n_exp, normalization)?.generate(seed))
}

/// Independent cross-check generator: dense Cholesky factorization of the
/// path covariance matrix. O(n^3) setup and O(n^2) per path, so it is
/// limited to n <= 2^10. Kept as a distributional oracle for the circulant
/// generator, not as a fallback.
pub struct CholeskySampler {
    params: HurstParams,
    n_exp: u32,
    normalization: Normalization,
    /// Lower-triangular factor of Cov(X_{i/n}, X_{j/n}), i, j = 1..n,
    /// row-major.
    chol: Vec<f64>,
}

impl CholeskySampler {
    pub fn new(params: HurstParams, n_exp: u32, normalization: Normalization) -> Result<Self> {
        validate_grid_exp(n_exp)?;
        if n_exp > MAX_CHOLESKY_EXP {
            return Err(Error::Size(format!(
                "Cholesky generator is limited to N <= {MAX_CHOLESKY_EXP}, got {n_exp}"
            )));
        }
        let n = 1usize << n_exp;
        let mut a = vec![0.0f64; n * n];
        for i in 0..n {
            let ti = (i + 1) as f64 / n as f64;
            for j in 0..=i {
                let tj = (j + 1) as f64 / n as f64;
                a[i * n + j] = fbm_covariance(ti, tj, params, normalization)?;
            }
        }
        // in-place lower Cholesky
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= a[i * n + k] * a[j * n + k];
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(Error::Numerical(format!(
                            "covariance matrix lost positive definiteness at row {i} (pivot {s:.3e})"
                        )));
                    }
                    a[i * n + j] = s.sqrt();
                } else {
                    a[i * n + j] = s / a[j * n + j];
                }
            }
        }
        Ok(CholeskySampler {
            params,
            n_exp,
            normalization,
            chol: a,
        })
    }

    pub fn generate(&self, seed: u64) -> FbmPath {
        let n = 1usize << self.n_exp;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut samples = Vec::with_capacity(n + 1);
        samples.push(0.0);
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..=i {
                s += self.chol[i * n + j] * z[j];
            }
            samples.push(s);
        }
        FbmPath {
            n,
            samples,
            params: self.params,
            normalization: self.normalization,
        }
    }
}

/// Writes the path as CSV with header `t,x` and 17-significant-digit floats.
pub fn write_path_csv<W: Write>(path: &FbmPath, mut out: W) -> Result<()> {
    writeln!(out, "t,x")?;
    let n = path.n as f64;
    for (i, x) in path.samples.iter().enumerate() {
        writeln!(out, "{},{}", format_float(i as f64 / n), format_float(*x))?;
    }
    Ok(())
}
