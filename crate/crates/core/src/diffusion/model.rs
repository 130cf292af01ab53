use serde::Serialize;

use crate::error::{Error, Result};
use crate::primitives::{HeavyTrafficParams, PatienceFamily, Primitive, ScalarFn};

/// Reflected diffusion `dV = (theta/lambda - H(V)) dt + sigma dW + dL` on `[0, inf)`.
#[derive(Debug, Clone, Serialize)]
pub struct DiffusionModel {
    sigma2: f64,
    drift_const: f64,
    #[serde(serialize_with = "describe_fn")]
    h: ScalarFn,
}

fn describe_fn<S: serde::Serializer>(h: &ScalarFn, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&h.describe())
}

impl DiffusionModel {
    /// `sigma2 = 0` is accepted here (deterministic SDE paths) and rejected by
    /// the stationary computations.
    pub fn new(sigma2: f64, drift_const: f64, h: ScalarFn) -> Result<Self> {
        if !(sigma2 >= 0.0) || !sigma2.is_finite() {
            return Err(Error::config(format!("sigma2 must be finite and >= 0, got {sigma2}")));
        }
        if !drift_const.is_finite() {
            return Err(Error::config(format!("drift constant must be finite, got {drift_const}")));
        }
        Ok(DiffusionModel { sigma2, drift_const, h })
    }

    /// Limit of the `n`-indexed queues: `sigma2 = (var u + var v) / lambda`,
    /// constant drift `theta / lambda`, and the family's limiting function.
    pub fn from_inputs(
        interarrival: &Primitive,
        service: &Primitive,
        params: &HeavyTrafficParams,
        patience: &PatienceFamily,
    ) -> Result<Self> {
        let sigma2 = (interarrival.variance() + service.variance()) / params.lambda;
        Self::new(sigma2, params.drift(), patience.limit().clone())
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// `theta / lambda`.
    pub fn drift_const(&self) -> f64 {
        self.drift_const
    }

    pub fn h(&self) -> &ScalarFn {
        &self.h
    }

    /// `theta/lambda - H(x)`.
    #[inline]
    pub fn drift(&self, x: f64) -> f64 {
        self.drift_const - self.h.eval(x)
    }
}
