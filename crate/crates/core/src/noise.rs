//! Observation noise on top of a simulated path, and ingestion of external
//! series.
//!
//! The observation model is y_i = x_i + a(x_i) * xi_i with a bounded smooth
//! amplitude a and i.i.d. innovations xi of mean zero, unit variance and
//! finite fourth moment.

use std::fmt;
use std::io::Read;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use crate::error::{Error, Result};
use crate::fbm::{FbmPath, Normalization};

/// Noise amplitude a(x). Both families are bounded with bounded derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Amplitude {
    /// a(x) = c, c >= 0. c = 0 reproduces the input exactly.
    Constant(f64),
    /// a(x) = alpha * (1 + beta * tanh(x)); alpha > 0 and |beta| < 1 keep
    /// the amplitude strictly positive.
    BoundedSmooth { alpha: f64, beta: f64 },
}

impl Amplitude {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Amplitude::Constant(c) if c >= 0.0 => Ok(()),
            Amplitude::Constant(c) => Err(Error::Domain(format!(
                "constant amplitude must be nonnegative, got {c}"
            ))),
            Amplitude::BoundedSmooth { alpha, beta } => {
                if !(alpha > 0.0) {
                    Err(Error::Domain(format!(
                        "amplitude scale must be positive, got {alpha}"
                    )))
                } else if !(beta.abs() < 1.0) {
                    Err(Error::Domain(format!(
                        "amplitude slope must satisfy |beta| < 1, got {beta}"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Amplitude::Constant(c) => c,
            Amplitude::BoundedSmooth { alpha, beta } => alpha * (1.0 + beta * x.tanh()),
        }
    }
}

impl fmt::Display for Amplitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Amplitude::Constant(c) => write!(f, "const:{c}"),
            Amplitude::BoundedSmooth { alpha, beta } => write!(f, "tanh:{alpha},{beta}"),
        }
    }
}

impl FromStr for Amplitude {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Domain(format!("bad amplitude descriptor {s:?}"));
        let amp = if let Some(c) = s.strip_prefix("const:") {
            Amplitude::Constant(c.parse().map_err(|_| bad())?)
        } else if let Some(rest) = s.strip_prefix("tanh:") {
            let (a, b) = rest.split_once(',').ok_or_else(bad)?;
            Amplitude::BoundedSmooth {
                alpha: a.parse().map_err(|_| bad())?,
                beta: b.parse().map_err(|_| bad())?,
            }
        } else {
            return Err(bad());
        };
        amp.validate()?;
        Ok(amp)
    }
}

/// Innovation law, standardized to mean zero and unit variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum XiDist {
    Gaussian,
    /// Student t with nu degrees of freedom, scaled by sqrt((nu-2)/nu) to
    /// unit variance. nu >= 5 keeps the fourth moment finite.
    ScaledStudentT(f64),
}

impl XiDist {
    pub fn validate(&self) -> Result<()> {
        match *self {
            XiDist::Gaussian => Ok(()),
            XiDist::ScaledStudentT(nu) if nu >= 5.0 => Ok(()),
            XiDist::ScaledStudentT(nu) => Err(Error::Domain(format!(
                "Student t needs nu >= 5 for a finite fourth moment, got {nu}"
            ))),
        }
    }

    fn sampler(&self) -> Result<XiSampler> {
        self.validate()?;
        Ok(match *self {
            XiDist::Gaussian => XiSampler::Gaussian,
            XiDist::ScaledStudentT(nu) => XiSampler::Student {
                dist: StudentT::new(nu)
                    .map_err(|e| Error::Domain(format!("Student t: {e}")))?,
                scale: ((nu - 2.0) / nu).sqrt(),
            },
        })
    }
}

enum XiSampler {
    Gaussian,
    Student { dist: StudentT<f64>, scale: f64 },
}

impl XiSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            XiSampler::Gaussian => rng.sample(StandardNormal),
            XiSampler::Student { dist, scale } => scale * dist.sample(rng),
        }
    }
}

impl fmt::Display for XiDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            XiDist::Gaussian => write!(f, "gauss"),
            XiDist::ScaledStudentT(nu) => write!(f, "t:{nu}"),
        }
    }
}

impl FromStr for XiDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let dist = if s == "gauss" {
            XiDist::Gaussian
        } else if let Some(nu) = s.strip_prefix("t:") {
            XiDist::ScaledStudentT(
                nu.parse()
                    .map_err(|_| Error::Domain(format!("bad distribution descriptor {s:?}")))?,
            )
        } else {
            return Err(Error::Domain(format!(
                "bad distribution descriptor {s:?}, expected \"gauss\" or \"t:nu\""
            )));
        };
        dist.validate()?;
        Ok(dist)
    }
}

/// Amplitude and innovation law without a seed; what experiment configs
/// enumerate. Round-trips through `"<amplitude>@<dist>"` (the `@gauss`
/// suffix may be omitted).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    pub amplitude: Amplitude,
    pub xi_dist: XiDist,
}

impl NoiseModel {
    pub fn gaussian(amplitude: Amplitude) -> Self {
        NoiseModel {
            amplitude,
            xi_dist: XiDist::Gaussian,
        }
    }

    pub fn with_seed(&self, seed: u64) -> NoiseSpec {
        NoiseSpec {
            amplitude: self.amplitude,
            xi_dist: self.xi_dist,
            seed,
        }
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.amplitude, self.xi_dist)
    }
}

impl FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (amp, dist) = match s.split_once('@') {
            Some((a, d)) => (a.parse()?, d.parse()?),
            None => (s.parse()?, XiDist::Gaussian),
        };
        Ok(NoiseModel {
            amplitude: amp,
            xi_dist: dist,
        })
    }
}

/// Full noise specification: model plus seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub amplitude: Amplitude,
    pub xi_dist: XiDist,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn model(&self) -> NoiseModel {
        NoiseModel {
            amplitude: self.amplitude,
            xi_dist: self.xi_dist,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.amplitude.validate()?;
        self.xi_dist.validate()
    }
}

/// Where a series came from.
#[derive(Clone, Debug, PartialEq)]
pub enum SeriesSource {
    /// Observation of a simulated path, identified by its generation inputs.
    Simulated {
        h: f64,
        sigma: f64,
        n_exp: u32,
        seed: u64,
        normalization: Normalization,
    },
    External,
}

/// A series of n + 1 observations on the dyadic grid, n = 2^N with N even.
#[derive(Clone, Debug)]
pub struct NoisySeries {
    y: Vec<f64>,
    n_exp: u32,
    pub source: SeriesSource,
    /// None for ingested data of unknown provenance.
    pub noise: Option<NoiseSpec>,
}

impl NoisySeries {
    pub fn from_values(
        y: Vec<f64>,
        source: SeriesSource,
        noise: Option<NoiseSpec>,
    ) -> Result<Self> {
        let len = y.len();
        if len < 2 || !(len - 1).is_power_of_two() {
            return Err(Error::Format(format!(
                "series length must be 2^N + 1, got {len}"
            )));
        }
        let n_exp = (len - 1).trailing_zeros();
        if n_exp % 2 != 0 {
            return Err(Error::Format(format!(
                "series length 2^{n_exp} + 1 has odd N; the noise-variance \
                 window needs even N"
            )));
        }
        Ok(NoisySeries {
            y,
            n_exp,
            source,
            noise,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn n(&self) -> usize {
        1usize << self.n_exp
    }

    pub fn n_exp(&self) -> u32 {
        self.n_exp
    }
}

/// Applies the observation model to raw sample values.
pub fn observe_values(x: &[f64], spec: &NoiseSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let sampler = spec.xi_dist.sampler()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(x.iter()
        .map(|&xi| xi + spec.amplitude.eval(xi) * sampler.sample(&mut rng))
        .collect())
}

/// y_i = x_i + a(x_i) * xi_i over the whole grid i = 0..=n. Deterministic
/// given (path, spec).
pub fn observe(path: &FbmPath, spec: &NoiseSpec) -> Result<NoisySeries> {
    let y = observe_values(&path.samples, spec)?;
    NoisySeries::from_values(
        y,
        SeriesSource::Simulated {
            h: path.params.h,
            sigma: path.params.sigma,
            n_exp: path.n_exp(),
            seed: 0, // unknown here; the harness records the real one
            normalization: path.normalization,
        },
        Some(*spec),
    )
}

/// Result of reading an external series, with trim bookkeeping.
#[derive(Debug)]
pub struct IngestedSeries {
    pub series: NoisySeries,
    /// Number of data rows in the file.
    pub original_rows: usize,
    /// Set when the series was cut to the largest valid prefix.
    pub trimmed: bool,
}

/// Reads a series from CSV. Accepted headers: `t,y` or `t,x` (two columns,
/// the second is taken) and plain `y` or `x` (single column). The value
/// count must be 2^N + 1 with N even unless `trim` is set, in which case the
/// longest valid prefix is kept.
pub fn read_series<R: Read>(reader: R, trim: bool) -> Result<IngestedSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let fields: Vec<&str> = headers.iter().collect();
    let value_col = match fields.as_slice() {
        ["t", "y"] | ["t", "x"] => 1,
        ["y"] | ["x"] => 0,
        other => {
            return Err(Error::Format(format!(
                "unrecognized header {other:?}; expected \"t,y\", \"t,x\", \"y\" or \"x\""
            )))
        }
    };
    let mut y = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let field = record.get(value_col).ok_or_else(|| {
            Error::Format(format!("row {}: missing value column", i + 2))
        })?;
        let v: f64 = field
            .parse()
            .map_err(|_| Error::Format(format!("row {}: bad float {field:?}", i + 2)))?;
        y.push(v);
    }
    let original_rows = y.len();
    let mut trimmed = false;
    let valid_len = |len: usize| len >= 2 && (len - 1).is_power_of_two() && (len - 1).trailing_zeros() % 2 == 0;
    if !valid_len(y.len()) {
        if !trim {
            return Err(Error::Format(format!(
                "series has {original_rows} values; need 2^N + 1 with N even \
                 (pass the trim option to cut to the largest valid prefix)"
            )));
        }
        // largest even N with 2^N + 1 <= len
        let mut n_exp = if y.len() >= 2 {
            let mut e = (y.len() - 1).ilog2();
            e -= e % 2;
            e as i64
        } else {
            -1
        };
        while n_exp >= 2 && (1usize << n_exp) + 1 > y.len() {
            n_exp -= 2;
        }
        if n_exp < 2 {
            return Err(Error::Format(format!(
                "series has {original_rows} values; too short even after trimming \
                 (need at least 5)"
            )));
        }
        y.truncate((1usize << n_exp) + 1);
        trimmed = true;
    }
    let series = NoisySeries::from_values(y, SeriesSource::External, None)?;
    Ok(IngestedSeries {
        series,
        original_rows,
        trimmed,
    })
}
