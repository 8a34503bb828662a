//! The Daubechies-2 wavelet: dyadic tabulation by the cascade refinement,
//! exact per-cell integrals, and the scaling constants of fBm wavelet
//! coefficients built from them.
//!
//! Two things matter downstream. First, the estimator weights observations
//! by integrals of psi_{j,k} over grid cells; those are computed exactly
//! (to rounding) from the two-scale relation rather than by quadrature on a
//! tabulated psi, so they carry no resolution parameter. Second, the
//! variance of a wavelet coefficient of fBm is
//! sigma^2 * c(psi) * kappa(H) * 2^(-j(1+2H)) with
//! c(psi, H) = -1/2 int int psi(s) psi(t) |t-s|^2H ds dt; that constant is
//! evaluated here on a fixed fine partition and cached per H.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::fbm::kappa;
use crate::util::format_float;

/// Default tabulation depth: psi is evaluated at spacing 2^-14.
pub const DEFAULT_CASCADE_DEPTH: u32 = 14;

/// Depth guard; tables cost O(2^depth) memory.
pub const MAX_CASCADE_DEPTH: u32 = 22;

/// Resolution exponent of the partition used for the energy-constant double
/// integral and for coefficient covariances: cells of width 2^-ENERGY_RES.
const ENERGY_RES: u32 = 13;

/// Hard bound on the cascade fixed-point residual; the exact refinement
/// satisfies the two-scale relation to rounding, so anything above this is
/// a construction bug.
const REFINEMENT_RESIDUAL_TOL: f64 = 1e-10;

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Daubechies-2 basis tabulated on [0, S] = [0, 3].
#[derive(Debug)]
pub struct WaveletBasis {
    /// Scaling (low-pass) filter h, length 4.
    pub filter: Vec<f64>,
    /// The mother wavelet is supported in [0, support].
    pub support: u32,
    /// Tables are spaced 2^-cascade_depth apart.
    pub cascade_depth: u32,
    /// psi at the grid points m * 2^-R for m = 0 ..= 3 * 2^R.
    pub psi_table: Vec<f64>,
    /// psi at the cell midpoints (m + 1/2) * 2^-R for m = 0 .. 3 * 2^R,
    /// the nodes of the midpoint quadratures.
    pub psi_mid: Vec<f64>,
    /// Autocorrelation of the unit cell integrals at ENERGY_RES, shared by
    /// the energy constant and coefficient covariances.
    cell_autocorr: OnceLock<Arc<Vec<f64>>>,
    /// Cache of c(psi, H) keyed by H bits.
    energy_cache: Mutex<HashMap<u64, f64>>,
    /// Cell integral vectors keyed by (j, N); the estimator asks for the
    /// same handful of levels once per series.
    cells_cache: Mutex<HashMap<(u32, u32), Arc<Vec<f64>>>>,
}

/// Integrals of psi_{j,k} over the dyadic cells of the observation grid.
#[derive(Clone, Debug)]
pub struct CellIntegrals {
    pub j: u32,
    /// Shift; always built at k = 0, other shifts reuse the same vector
    /// displaced by k * 2^(N-j) cells.
    pub k: usize,
    /// Observation grid exponent N.
    pub n_exp: u32,
    /// values[l] = integral of psi_{j,0} over [l/2^N, (l+1)/2^N],
    /// length 3 * 2^(N-j). Shared, since the same vector serves every shift
    /// and every series on the same grid.
    pub values: Arc<Vec<f64>>,
}

fn db2_filter() -> Vec<f64> {
    let s3 = 3f64.sqrt();
    let norm = 4.0 * 2f64.sqrt();
    vec![
        (1.0 + s3) / norm,
        (3.0 + s3) / norm,
        (3.0 - s3) / norm,
        (1.0 - s3) / norm,
    ]
}

/// High-pass filter g_k = (-1)^k h_{3-k}.
fn highpass(filter: &[f64]) -> Vec<f64> {
    vec![filter[3], -filter[2], filter[1], -filter[0]]
}

/// Builds the basis with tables at spacing 2^-cascade_depth.
///
/// The refinement is evaluated exactly on dyadic rationals: each step copies
/// the previous grid values verbatim and fills the new midpoints through the
/// two-scale relation, so tables at different depths agree bitwise on shared
/// points. The fixed-point residual is still measured on the copied points
/// and construction fails if it ever exceeds a rounding-level bound.
pub fn build_basis(cascade_depth: u32) -> Result<WaveletBasis> {
    if cascade_depth < 10 {
        return Err(Error::Domain(format!(
            "cascade depth must be at least 10, got {cascade_depth}"
        )));
    }
    if cascade_depth > MAX_CASCADE_DEPTH {
        return Err(Error::Size(format!(
            "cascade depth {cascade_depth} exceeds the guard {MAX_CASCADE_DEPTH}"
        )));
    }
    let filter = db2_filter();
    let sqrt2 = 2f64.sqrt();

    // phi at the integers: the eigenvalue-1 vector of the refinement there
    let s3 = 3f64.sqrt();
    let mut phi: Vec<f64> = vec![0.0, (1.0 + s3) / 2.0, (1.0 - s3) / 2.0, 0.0];

    let mut residual = 0.0f64;
    let value_at = |table: &[f64], idx: i64| -> f64 {
        if idx < 0 || idx as usize >= table.len() {
            0.0 // phi vanishes outside [0, 3]
        } else {
            table[idx as usize]
        }
    };
    for r in 0..cascade_depth {
        // refine depth r -> r + 1; phi has spacing 2^-r, indices 0..=3*2^r
        let shift = 1i64 << r;
        let new_len = 3 * (1usize << (r + 1)) + 1;
        let mut next = vec![0.0f64; new_len];
        for (m, slot) in next.iter_mut().enumerate() {
            let mut s = 0.0;
            for (k, &hk) in filter.iter().enumerate() {
                s += hk * value_at(&phi, m as i64 - k as i64 * shift);
            }
            s *= sqrt2;
            if m % 2 == 0 {
                // grid point shared with the coarser table: keep the old
                // value exactly, use the recomputation as the residual check
                let old = phi[m / 2];
                residual = residual.max((s - old).abs());
                *slot = old;
            } else {
                *slot = s;
            }
        }
        phi = next;
    }
    if residual > REFINEMENT_RESIDUAL_TOL {
        return Err(Error::Numerical(format!(
            "cascade fixed-point residual {residual:.3e} exceeds {REFINEMENT_RESIDUAL_TOL:.1e}"
        )));
    }

    // psi at depth R+1 from phi at depth R, then split into grid points
    // (even indices) and midpoints (odd indices) of the depth-R partition
    let g = highpass(&filter);
    let shift = 1i64 << cascade_depth;
    let fine_len = 3 * (1usize << (cascade_depth + 1)) + 1;
    let mut psi_fine = vec![0.0f64; fine_len];
    for (m, slot) in psi_fine.iter_mut().enumerate() {
        let mut s = 0.0;
        for (k, &gk) in g.iter().enumerate() {
            s += gk * value_at(&phi, m as i64 - k as i64 * shift);
        }
        *slot = s * sqrt2;
    }
    let psi_table: Vec<f64> = psi_fine.iter().step_by(2).copied().collect();
    let psi_mid: Vec<f64> = psi_fine.iter().skip(1).step_by(2).copied().collect();

    Ok(WaveletBasis {
        filter,
        support: 3,
        cascade_depth,
        psi_table,
        psi_mid,
        cell_autocorr: OnceLock::new(),
        energy_cache: Mutex::new(HashMap::new()),
        cells_cache: Mutex::new(HashMap::new()),
    })
}

/// Integrals of phi over [m, m+1], m = 0, 1, 2: the unique solution of
/// I_m = 2^-1/2 sum_k h_k (I_{2m-k} + I_{2m+1-k}) with total mass 1.
fn phi_integer_cells(filter: &[f64]) -> [f64; 3] {
    let mut a = [[0.0f64; 3]; 3];
    for m in 0..3usize {
        for (k, &hk) in filter.iter().enumerate() {
            for col in [2 * m as i64 - k as i64, 2 * m as i64 + 1 - k as i64] {
                if (0..3).contains(&col) {
                    a[m][col as usize] += hk * INV_SQRT2;
                }
            }
        }
    }
    // solve (A - I) u = 0 together with sum(u) = 1
    let mut m = [
        [a[0][0] - 1.0, a[0][1], a[0][2], 0.0],
        [a[1][0], a[1][1] - 1.0, a[1][2], 0.0],
        [1.0, 1.0, 1.0, 1.0],
    ];
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&p, &q| m[p][col].abs().total_cmp(&m[q][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        for row in 0..3 {
            if row != col {
                let f = m[row][col] / m[col][col];
                for c in col..4 {
                    m[row][c] -= f * m[col][c];
                }
            }
        }
    }
    [m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]]
}

/// One refinement step for cell integrals:
/// I^(r)_m = 2^-1/2 sum_k h_k I^(r-1)_{m - k 2^(r-1)}.
fn refine_cells(filter: &[f64], prev: &[f64], prev_res: u32) -> Vec<f64> {
    let shift = 1i64 << prev_res;
    let len = 2 * prev.len();
    let mut out = vec![0.0f64; len];
    for (m, slot) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for (k, &hk) in filter.iter().enumerate() {
            let idx = m as i64 - k as i64 * shift;
            if idx >= 0 && (idx as usize) < prev.len() {
                s += hk * prev[idx as usize];
            }
        }
        *slot = s * INV_SQRT2;
    }
    out
}

/// Integrals of psi over the cells [m 2^-res, (m+1) 2^-res], m = 0 .. 3*2^res,
/// exact up to rounding. Requires res >= 1.
fn psi_cells(filter: &[f64], res: u32) -> Vec<f64> {
    debug_assert!(res >= 1);
    let mut phi_cells: Vec<f64> = phi_integer_cells(filter).to_vec();
    for r in 0..res - 1 {
        phi_cells = refine_cells(filter, &phi_cells, r);
    }
    let g = highpass(filter);
    let shift = 1i64 << (res - 1);
    let len = 3 * (1usize << res);
    let mut out = vec![0.0f64; len];
    for (m, slot) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for (k, &gk) in g.iter().enumerate() {
            let idx = m as i64 - k as i64 * shift;
            if idx >= 0 && (idx as usize) < phi_cells.len() {
                s += gk * phi_cells[idx as usize];
            }
        }
        *slot = s * INV_SQRT2;
    }
    out
}

/// Cell integrals of psi_{j,0} on the grid with 2^N cells.
///
/// Levels run from the basis floor [`WaveletBasis::min_level`] (below it the
/// wavelet would straddle the domain boundary for some retained shift) up to
/// N/2 (above it the noise-variance window would not fit).
pub fn cell_integrals(basis: &WaveletBasis, j: u32, n_exp: u32) -> Result<CellIntegrals> {
    let j_lo = basis.min_level();
    if j < j_lo || j > n_exp / 2 {
        return Err(Error::Size(format!(
            "level j = {j} outside [{j_lo}, {}] for N = {n_exp}",
            n_exp / 2
        )));
    }
    let mut cache = basis.cells_cache.lock().unwrap();
    let values = cache
        .entry((j, n_exp))
        .or_insert_with(|| {
            let res = n_exp - j;
            let scale = 2f64.powf(-(j as f64) / 2.0);
            Arc::new(
                psi_cells(&basis.filter, res)
                    .into_iter()
                    .map(|v| v * scale)
                    .collect(),
            )
        })
        .clone();
    Ok(CellIntegrals {
        j,
        k: 0,
        n_exp,
        values,
    })
}

impl WaveletBasis {
    /// Smallest usable level: ceil(log2(S - 1)) + 2. Coefficients at or
    /// above it with shifts k < 2^(j-1) are supported inside [0, 1].
    pub fn min_level(&self) -> u32 {
        let span = self.support - 1;
        let ceil_log2 = if span.is_power_of_two() {
            span.trailing_zeros()
        } else {
            32 - span.leading_zeros()
        };
        ceil_log2 + 2
    }

    /// Midpoint-rule integral of t^power * psi(t) over the table.
    pub fn midpoint_moment(&self, power: u32) -> f64 {
        let delta = 2f64.powi(-(self.cascade_depth as i32));
        self.psi_mid
            .iter()
            .enumerate()
            .map(|(m, &v)| (delta * (m as f64 + 0.5)).powi(power as i32) * v)
            .sum::<f64>()
            * delta
    }

    /// Midpoint-rule integral of psi(t)^2.
    pub fn midpoint_norm2(&self) -> f64 {
        let delta = 2f64.powi(-(self.cascade_depth as i32));
        self.psi_mid.iter().map(|&v| v * v).sum::<f64>() * delta
    }

    fn autocorr(&self) -> Arc<Vec<f64>> {
        self.cell_autocorr
            .get_or_init(|| Arc::new(cell_autocorrelation(&self.filter, ENERGY_RES)))
            .clone()
    }

    /// c(psi, H) = -1/2 int int psi(s) psi(t) |t - s|^2H ds dt, the constant
    /// in Var(d_{j,k}) = sigma^2 c(psi) kappa(H) 2^(-j(1+2H)). Cached per H.
    pub fn energy_constant(&self, h: f64) -> Result<f64> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::Domain(format!("H must lie in (0, 1), got {h}")));
        }
        let key = h.to_bits();
        if let Some(&cached) = self.energy_cache.lock().unwrap().get(&key) {
            return Ok(cached);
        }
        let value = energy_from_autocorr(&self.autocorr(), ENERGY_RES, h);
        self.energy_cache.lock().unwrap().insert(key, value);
        Ok(value)
    }

    /// Same constant on a partition of width 2^-res; used to verify that the
    /// default resolution is converged.
    pub fn energy_constant_at_resolution(&self, h: f64, res: u32) -> Result<f64> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::Domain(format!("H must lie in (0, 1), got {h}")));
        }
        if !(6..=16).contains(&res) {
            return Err(Error::Size(format!(
                "energy resolution must lie in [6, 16], got {res}"
            )));
        }
        let rho = cell_autocorrelation(&self.filter, res);
        Ok(energy_from_autocorr(&rho, res, h))
    }

    /// Population covariance of the level-0 coefficients d_{0,0} and
    /// d_{0,lag} of unit-sigma fBm under the kappa normalization:
    /// -kappa(H)/2 int int psi(s) psi(t - lag) |t - s|^2H. At lag 0 this is
    /// the coefficient variance c(psi) kappa(H).
    pub fn coefficient_covariance(&self, h: f64, lag: u32) -> Result<f64> {
        let kap = kappa(h)?;
        let rho = self.autocorr();
        let delta = 2f64.powi(-(ENERGY_RES as i32));
        let two_h = 2.0 * h;
        let lag = lag as f64;
        let mut s = rho[0] * lag.powf(two_h);
        for (d, &r) in rho.iter().enumerate().skip(1) {
            let off = d as f64 * delta;
            s += r * ((lag + off).powf(two_h) + (lag - off).abs().powf(two_h));
        }
        Ok(-kap / 2.0 * s)
    }

    /// Dumps the psi table as CSV (`t,psi`).
    pub fn write_psi_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,psi")?;
        let delta = 2f64.powi(-(self.cascade_depth as i32));
        for (m, &v) in self.psi_table.iter().enumerate() {
            writeln!(out, "{},{}", format_float(m as f64 * delta), format_float(v))?;
        }
        Ok(())
    }
}

/// rho[d] = sum_l A_l A_{l+d} for the unit cell integrals A at the given
/// resolution, computed by FFT. rho[0] is the squared l2 norm of A.
fn cell_autocorrelation(filter: &[f64], res: u32) -> Vec<f64> {
    let a = psi_cells(filter, res);
    let m = a.len();
    let fft_len = (2 * m).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = a
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(fft_len)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(fft_len).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(fft_len).process(&mut buf);
    buf[..m]
        .iter()
        .map(|c| c.re / fft_len as f64)
        .collect()
}

/// -1/2 sum_{d != 0} rho(|d|) (|d| 2^-res)^2H; the |t|^2H and |s|^2H parts
/// of the covariance integrate to zero against psi, and the d = 0 term
/// vanishes with |t - s|^2H at t = s.
fn energy_from_autocorr(rho: &[f64], res: u32, h: f64) -> f64 {
    let delta = 2f64.powi(-(res as i32));
    let two_h = 2.0 * h;
    let mut s = 0.0;
    for (d, &r) in rho.iter().enumerate().skip(1) {
        s += r * (d as f64 * delta).powf(two_h);
    }
    -s
}
