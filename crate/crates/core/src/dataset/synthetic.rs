//! Synthetic regression problems `Y = f(X) + sigma(X) * eps` with closed-form
//! conditional loss laws for any fixed prediction.

use super::TabularData;
use crate::error::{LocusError, Result};
use crate::predictors::LossFunction;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Mean function; univariate forms act on the first coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeanFn {
    Constant { value: f64 },
    Linear { coefficients: Vec<f64>, intercept: f64 },
    Quadratic { curvature: f64, intercept: f64 },
    Sine { amplitude: f64, frequency: f64 },
}

/// Conditional noise scale `sigma(x)`; acts on the first coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScaleFn {
    Constant { value: f64 },
    /// `base + slope * |x0|`
    AbsLinear { base: f64, slope: f64 },
    /// `base + height * exp(-((|x0| - center) / width)^2)`
    Bump { base: f64, height: f64, center: f64, width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Design {
    Uniform { dim: usize, low: f64, high: f64 },
    Gaussian { dim: usize, mean: f64, sd: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Noise {
    Gaussian,
    StudentT { df: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub mean: MeanFn,
    pub scale: ScaleFn,
    pub design: Design,
    pub noise: Noise,
    pub n: usize,
    pub seed: u64,
}

impl MeanFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            MeanFn::Constant { value } => *value,
            MeanFn::Linear { coefficients, intercept } => {
                intercept + coefficients.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
            }
            MeanFn::Quadratic { curvature, intercept } => intercept + curvature * x[0] * x[0],
            MeanFn::Sine { amplitude, frequency } => amplitude * (frequency * x[0]).sin(),
        }
    }
}

impl ScaleFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ScaleFn::Constant { value } => *value,
            ScaleFn::AbsLinear { base, slope } => base + slope * x[0].abs(),
            ScaleFn::Bump {
                base,
                height,
                center,
                width,
            } => {
                let u = (x[0].abs() - center) / width;
                base + height * (-u * u).exp()
            }
        }
    }
}

impl Design {
    pub fn dim(&self) -> usize {
        match self {
            Design::Uniform { dim, .. } | Design::Gaussian { dim, .. } => *dim,
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match *self {
            Design::Uniform { dim, low, high } => (0..dim).map(|_| rng.random_range(low..high)).collect(),
            Design::Gaussian { dim, mean, sd } => (0..dim)
                .map(|_| {
                    let e: f64 = rng.sample(StandardNormal);
                    mean + sd * e
                })
                .collect(),
        }
    }
}

impl Noise {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Noise::Gaussian => rng.sample(StandardNormal),
            Noise::StudentT { df } => StudentT::new(df).expect("validated df").sample(rng),
        }
    }

    /// CDF of the standardized noise.
    pub fn cdf(&self, e: f64) -> f64 {
        match *self {
            Noise::Gaussian => crate::gaussian::cdf(e),
            Noise::StudentT { df } => StudentsT::new(0.0, 1.0, df).expect("validated df").cdf(e),
        }
    }

    fn sf(&self, e: f64) -> f64 {
        // symmetric families
        self.cdf(-e)
    }
}

impl SyntheticSpec {
    /// One-dimensional sine mean with scale growing in `|x|`, Gaussian noise.
    /// An OLS fit misses the curvature, so the loss law varies smoothly in x.
    pub fn smooth_gaussian(n: usize, seed: u64) -> Self {
        Self {
            mean: MeanFn::Sine {
                amplitude: 1.0,
                frequency: 1.5,
            },
            scale: ScaleFn::AbsLinear { base: 0.3, slope: 0.25 },
            design: Design::Uniform {
                dim: 1,
                low: -2.0,
                high: 2.0,
            },
            noise: Noise::Gaussian,
            n,
            seed,
        }
    }

    /// Quadratic mean in the first of two uniform covariates with noise
    /// concentrated where a linear fit happens to be accurate: the label
    /// variance is high exactly where the loss of a linear predictor is low.
    pub fn curved_heteroskedastic(n: usize, seed: u64) -> Self {
        Self {
            mean: MeanFn::Quadratic {
                curvature: 1.0,
                intercept: 0.0,
            },
            scale: ScaleFn::Bump {
                base: 0.15,
                height: 0.6,
                center: 1.15,
                width: 0.35,
            },
            design: Design::Uniform {
                dim: 2,
                low: -2.0,
                high: 2.0,
            },
            noise: Noise::Gaussian,
            n,
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(LocusError::invalid("synthetic sample size must be positive"));
        }
        if self.design.dim() == 0 {
            return Err(LocusError::invalid("synthetic design dimension must be positive"));
        }
        if let Noise::StudentT { df } = self.noise {
            if !(df > 0.0) {
                return Err(LocusError::invalid(format!("student-t df must be positive, got {df}")));
            }
        }
        if let MeanFn::Linear { coefficients, .. } = &self.mean {
            if coefficients.len() != self.design.dim() {
                return Err(LocusError::invalid("linear mean coefficients must match design dimension"));
            }
        }
        Ok(())
    }

    pub fn oracle(&self) -> SyntheticOracle {
        SyntheticOracle {
            mean: self.mean.clone(),
            scale: self.scale.clone(),
            noise: self.noise,
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        (1..=self.design.dim()).map(|j| format!("x{j}")).collect()
    }
}

/// Draws `spec.n` rows. Columns are `x1..xp` and target `y`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TabularData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p = spec.design.dim();
    let mut features = Array2::zeros((spec.n, p));
    let mut target = Array1::zeros(spec.n);
    for i in 0..spec.n {
        let x = spec.design.sample(&mut rng);
        let sigma = spec.scale.eval(&x);
        if !(sigma > 0.0) {
            return Err(LocusError::invalid(format!("nonpositive sigma(x) = {sigma} at x = {x:?}")));
        }
        let eps = spec.noise.sample(&mut rng);
        target[i] = spec.mean.eval(&x) + sigma * eps;
        for (j, v) in x.into_iter().enumerate() {
            features[[i, j]] = v;
        }
    }
    TabularData::new(features, target, spec.feature_names(), "y")
}

/// Ground truth for a synthetic problem, in raw (unstandardized) units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOracle {
    pub mean: MeanFn,
    pub scale: ScaleFn,
    pub noise: Noise,
}

impl SyntheticOracle {
    pub fn f(&self, x: &[f64]) -> f64 {
        self.mean.eval(x)
    }

    pub fn sigma(&self, x: &[f64]) -> f64 {
        self.scale.eval(x)
    }

    /// `P(L(prediction, Y) <= z | X = x)`.
    pub fn loss_cdf(&self, x: &[f64], prediction: f64, loss: LossFunction, z: f64) -> f64 {
        if z < 0.0 {
            return 0.0;
        }
        let radius = match loss {
            LossFunction::Absolute => z,
            LossFunction::Squared => z.sqrt(),
        };
        // |d - sigma * eps| <= r  <=>  (d - r)/sigma <= eps <= (d + r)/sigma
        let d = prediction - self.f(x);
        let s = self.sigma(x);
        let (lo, hi) = ((d - radius) / s, (d + radius) / s);
        let p = if lo > 0.0 {
            self.noise.sf(lo) - self.noise.sf(hi)
        } else {
            self.noise.cdf(hi) - self.noise.cdf(lo)
        };
        p.clamp(0.0, 1.0)
    }

    /// `P(L(prediction, Y) > tau | X = x)`.
    pub fn exceedance(&self, x: &[f64], prediction: f64, loss: LossFunction, tau: f64) -> f64 {
        1.0 - self.loss_cdf(x, prediction, loss, tau)
    }

    /// The `level`-quantile of the conditional loss, by bisection on the
    /// closed-form CDF.
    pub fn loss_quantile(&self, x: &[f64], prediction: f64, loss: LossFunction, level: f64) -> f64 {
        assert!(level > 0.0 && level < 1.0, "level must lie in (0, 1)");
        let cdf = |z: f64| self.loss_cdf(x, prediction, loss, z);
        let mut lo = 0.0;
        let mut hi = 1.0f64.max((prediction - self.f(x)).abs());
        while cdf(hi) < level {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) >= level {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-13 * hi.max(1.0) {
                break;
            }
        }
        hi
    }
}
