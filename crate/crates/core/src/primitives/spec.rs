use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, LogNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Parametric family of a unit-mean, nonnegative inter-arrival or service
/// time. Only shape parameters are supplied; every kind is rescaled to mean 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrimitiveSpec {
    Exponential,
    Gamma {
        shape: f64,
    },
    Lognormal {
        sigma: f64,
    },
    Deterministic,
    /// Mixture of exponentials. `rates` are relative; they are rescaled by a
    /// common factor so that the mixture mean is 1.
    Hyperexponential {
        weights: Vec<f64>,
        rates: Vec<f64>,
    },
    /// Uniform on `[1 - width/2, 1 + width/2]`, `0 < width <= 2`.
    Uniform {
        width: f64,
    },
}

#[derive(Debug, Clone)]
enum Sampler {
    Exponential,
    Gamma(Gamma<f64>),
    Lognormal(LogNormal<f64>),
    Deterministic,
    Hyperexponential { cumulative: Vec<f64>, rates: Vec<f64> },
    Uniform { low: f64, width: f64 },
}

/// A validated [`PrimitiveSpec`] with its sampler prepared.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "PrimitiveSpec", into = "PrimitiveSpec")]
pub struct Primitive {
    spec: PrimitiveSpec,
    sampler: Sampler,
}

impl TryFrom<PrimitiveSpec> for Primitive {
    type Error = Error;

    fn try_from(spec: PrimitiveSpec) -> Result<Self> {
        Primitive::new(spec)
    }
}

impl From<Primitive> for PrimitiveSpec {
    fn from(p: Primitive) -> Self {
        p.spec
    }
}

impl PartialEq for Primitive {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

fn positive(name: &str, x: f64) -> Result<f64> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(Error::config(format!("{name} must be finite and > 0, got {x}")))
    }
}

impl Primitive {
    pub fn new(spec: PrimitiveSpec) -> Result<Self> {
        let sampler = match &spec {
            PrimitiveSpec::Exponential => Sampler::Exponential,
            PrimitiveSpec::Gamma { shape } => {
                let k = positive("gamma shape", *shape)?;
                Sampler::Gamma(Gamma::new(k, 1.0 / k).map_err(|e| Error::config(e.to_string()))?)
            }
            PrimitiveSpec::Lognormal { sigma } => {
                let s = positive("lognormal sigma", *sigma)?;
                Sampler::Lognormal(LogNormal::new(-0.5 * s * s, s).map_err(|e| Error::config(e.to_string()))?)
            }
            PrimitiveSpec::Deterministic => Sampler::Deterministic,
            PrimitiveSpec::Hyperexponential { weights, rates } => {
                if weights.is_empty() || weights.len() != rates.len() {
                    return Err(Error::config("hyperexponential needs equally many (>0) weights and rates"));
                }
                for (&w, &r) in weights.iter().zip(rates) {
                    positive("hyperexponential weight", w)?;
                    positive("hyperexponential rate", r)?;
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::config(format!("hyperexponential weights sum to {total}, expected 1")));
                }
                let raw_mean: f64 = weights.iter().zip(rates).map(|(w, r)| w / r).sum();
                let rates: Vec<f64> = rates.iter().map(|r| r * raw_mean).collect();
                let cumulative = weights
                    .iter()
                    .scan(0.0, |acc, w| {
                        *acc += w;
                        Some(*acc)
                    })
                    .collect();
                Sampler::Hyperexponential { cumulative, rates }
            }
            PrimitiveSpec::Uniform { width } => {
                let w = positive("uniform width", *width)?;
                if w > 2.0 {
                    return Err(Error::config(format!("uniform width {w} > 2 puts mass below zero")));
                }
                Sampler::Uniform { low: 1.0 - 0.5 * w, width: w }
            }
        };
        let p = Primitive { spec, sampler };
        let mean = p.mean();
        if (mean - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!("{:?} normalizes to mean {mean}, expected 1", p.spec)));
        }
        Ok(p)
    }

    pub fn exponential() -> Self {
        Self::new(PrimitiveSpec::Exponential).expect("exponential is always valid")
    }

    pub fn spec(&self) -> &PrimitiveSpec {
        &self.spec
    }

    /// Analytic mean; 1 for every valid primitive.
    pub fn mean(&self) -> f64 {
        match &self.sampler {
            Sampler::Hyperexponential { cumulative, rates } => {
                let mut prev = 0.0;
                let mut m = 0.0;
                for (c, r) in cumulative.iter().zip(rates) {
                    m += (c - prev) / r;
                    prev = *c;
                }
                m
            }
            Sampler::Uniform { low, width } => low + 0.5 * width,
            _ => 1.0,
        }
    }

    pub fn variance(&self) -> f64 {
        match &self.sampler {
            Sampler::Exponential => 1.0,
            Sampler::Gamma(_) => match self.spec {
                PrimitiveSpec::Gamma { shape } => 1.0 / shape,
                _ => unreachable!(),
            },
            Sampler::Lognormal(_) => match self.spec {
                PrimitiveSpec::Lognormal { sigma } => (sigma * sigma).exp_m1(),
                _ => unreachable!(),
            },
            Sampler::Deterministic => 0.0,
            Sampler::Hyperexponential { .. } => self.moment(2.0) - 1.0,
            Sampler::Uniform { width, .. } => width * width / 12.0,
        }
    }

    /// Analytic `E[X^p]` for `p > 0`.
    pub fn moment(&self, p: f64) -> f64 {
        match &self.sampler {
            Sampler::Exponential => ln_gamma(p + 1.0).exp(),
            Sampler::Gamma(_) => {
                let k = match self.spec {
                    PrimitiveSpec::Gamma { shape } => shape,
                    _ => unreachable!(),
                };
                (ln_gamma(k + p) - ln_gamma(k) - p * k.ln()).exp()
            }
            Sampler::Lognormal(_) => {
                let s = match self.spec {
                    PrimitiveSpec::Lognormal { sigma } => sigma,
                    _ => unreachable!(),
                };
                (-0.5 * p * s * s + 0.5 * p * p * s * s).exp()
            }
            Sampler::Deterministic => 1.0,
            Sampler::Hyperexponential { cumulative, rates } => {
                let g = ln_gamma(p + 1.0).exp();
                let mut prev = 0.0;
                let mut m = 0.0;
                for (c, r) in cumulative.iter().zip(rates) {
                    m += (c - prev) * g / r.powf(p);
                    prev = *c;
                }
                m
            }
            Sampler::Uniform { low, width } => {
                let high = low + width;
                (high.powf(p + 1.0) - low.powf(p + 1.0)) / ((p + 1.0) * width)
            }
        }
    }

    /// Whether `E[X^p] < inf`. Every built-in kind has all moments finite;
    /// heavy-tailed laws are not representable.
    pub fn has_finite_moment(&self, p: f64) -> bool {
        p.is_finite() && self.moment(p).is_finite()
    }

    /// Whether the support is unbounded above.
    pub fn unbounded_support(&self) -> bool {
        !matches!(self.sampler, Sampler::Deterministic | Sampler::Uniform { .. })
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.sampler {
            Sampler::Exponential => Exp1.sample(rng),
            Sampler::Gamma(g) => g.sample(rng),
            Sampler::Lognormal(l) => l.sample(rng),
            Sampler::Deterministic => 1.0,
            Sampler::Hyperexponential { cumulative, rates } => {
                let u: f64 = rng.random();
                let i = cumulative.partition_point(|&c| c <= u).min(rates.len() - 1);
                let e: f64 = Exp1.sample(rng);
                e / rates[i]
            }
            Sampler::Uniform { low, width } => low + width * rng.random::<f64>(),
        }
    }
}

/// Base rate, drift offset and scale index of the `n`-th system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeavyTrafficParams {
    pub lambda: f64,
    pub theta: f64,
    pub n: u64,
}

impl HeavyTrafficParams {
    pub fn new(lambda: f64, theta: f64, n: u64) -> Result<Self> {
        let p = HeavyTrafficParams { lambda, theta, n };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        positive("lambda", self.lambda)?;
        if !self.theta.is_finite() {
            return Err(Error::config("theta must be finite"));
        }
        if self.n == 0 {
            return Err(Error::config("scale index n must be >= 1"));
        }
        let mu = self.service_rate();
        if !(mu > 0.0) {
            return Err(Error::config(format!(
                "service rate n*lambda - sqrt(n)*theta = {mu} is not positive (n={}, lambda={}, theta={})",
                self.n, self.lambda, self.theta
            )));
        }
        Ok(())
    }

    pub fn sqrt_n(&self) -> f64 {
        (self.n as f64).sqrt()
    }

    /// `n * lambda`.
    pub fn arrival_rate(&self) -> f64 {
        self.n as f64 * self.lambda
    }

    /// `n * lambda - sqrt(n) * theta`, so that `sqrt(n) (lambda - mu_n / n) = theta` exactly.
    pub fn service_rate(&self) -> f64 {
        self.n as f64 * self.lambda - self.sqrt_n() * self.theta
    }

    /// `theta / lambda`, the constant part of the limiting drift.
    pub fn drift(&self) -> f64 {
        self.theta / self.lambda
    }

    pub fn with_n(&self, n: u64) -> Self {
        HeavyTrafficParams { n, ..*self }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_kinds() -> Vec<PrimitiveSpec> {
        vec![
            PrimitiveSpec::Exponential,
            PrimitiveSpec::Gamma { shape: 2.0 },
            PrimitiveSpec::Gamma { shape: 0.5 },
            PrimitiveSpec::Lognormal { sigma: 0.75 },
            PrimitiveSpec::Deterministic,
            PrimitiveSpec::Hyperexponential { weights: vec![0.3, 0.7], rates: vec![0.5, 3.0] },
            PrimitiveSpec::Uniform { width: 1.5 },
        ]
    }

    #[test]
    fn every_kind_has_unit_mean() {
        for s in all_kinds() {
            let p = Primitive::new(s.clone()).unwrap();
            assert!((p.mean() - 1.0).abs() <= 1e-12, "{s:?}");
            assert!((p.moment(1.0) - 1.0).abs() <= 1e-12, "{s:?}");
        }
    }

    #[test]
    fn deterministic_sample_is_one() {
        let p = Primitive::new(PrimitiveSpec::Deterministic).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..100).all(|_| p.sample(&mut rng) == 1.0));
    }

    #[test]
    fn exponential_sample_mean() {
        let p = Primitive::exponential();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mean = (0..n).map(|_| p.sample(&mut rng)).sum::<f64>() / n as f64;
        // 3 sigma / sqrt(N) with sigma = 1
        assert!((mean - 1.0).abs() < 0.004, "{mean}");
    }

    #[test]
    fn exponential_stream_reproducible() {
        let p = Primitive::exponential();
        let a: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            (0..16).map(|_| p.sample(&mut rng)).collect()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let b: Vec<f64> = (0..16).map(|_| p.sample(&mut rng)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn gamma_two_variance() {
        let p = Primitive::new(PrimitiveSpec::Gamma { shape: 2.0 }).unwrap();
        assert_eq!(p.variance(), 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| p.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 0.5).abs() < 0.01, "{var}");
    }

    #[test]
    fn sample_means_within_four_standard_errors() {
        let n = 1_000_000;
        for (i, s) in all_kinds().into_iter().enumerate() {
            let p = Primitive::new(s.clone()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
            let mean = (0..n).map(|_| p.sample(&mut rng)).sum::<f64>() / n as f64;
            let se = (p.variance() / n as f64).sqrt();
            assert!((mean - 1.0).abs() <= 4.0 * se + 1e-15, "{s:?}: mean {mean}, se {se}");
        }
    }

    #[test]
    fn analytic_variances_match_second_moments() {
        for s in all_kinds() {
            let p = Primitive::new(s.clone()).unwrap();
            assert!((p.variance() - (p.moment(2.0) - 1.0)).abs() < 1e-12, "{s:?}");
        }
    }

    #[test]
    fn bounded_kinds_flagged() {
        assert!(!Primitive::new(PrimitiveSpec::Deterministic).unwrap().unbounded_support());
        assert!(!Primitive::new(PrimitiveSpec::Uniform { width: 1.0 }).unwrap().unbounded_support());
        assert!(Primitive::exponential().unbounded_support());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(Primitive::new(PrimitiveSpec::Gamma { shape: 0.0 }).is_err());
        assert!(Primitive::new(PrimitiveSpec::Uniform { width: 2.5 }).is_err());
        assert!(Primitive::new(PrimitiveSpec::Lognormal { sigma: f64::NAN }).is_err());
        assert!(
            Primitive::new(PrimitiveSpec::Hyperexponential { weights: vec![0.5, 0.4], rates: vec![1.0, 2.0] }).is_err()
        );
    }

    #[test]
    fn heavy_traffic_rates() {
        let p = HeavyTrafficParams::new(1.5, 0.7, 400).unwrap();
        assert_eq!(p.arrival_rate(), 600.0);
        assert_eq!(p.service_rate(), 600.0 - 20.0 * 0.7);
        let recovered = p.sqrt_n() * (p.lambda - p.service_rate() / p.n as f64);
        assert!((recovered - p.theta).abs() < 1e-12);
        assert!(HeavyTrafficParams::new(1.0, 2.0, 4).is_err());
        assert!(HeavyTrafficParams::new(1.0, 0.0, 0).is_err());
    }

    #[test]
    fn serde_round_trip_keeps_user_parameters() {
        let json = r#"{"kind":"hyperexponential","weights":[0.5,0.5],"rates":[1.0,4.0]}"#;
        let p: Primitive = serde_json::from_str(json).unwrap();
        assert!((p.mean() - 1.0).abs() < 1e-12);
        let back = serde_json::to_string(&p).unwrap();
        assert_eq!(back, json);
    }
}
