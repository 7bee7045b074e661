use crate::nn::MlpModel;
use crate::numerics::Matrix;
use crate::{Error, Result};

/// A scalar-output model with a flat parameter vector.
pub trait TangentModel: Clone {
    fn num_params(&self) -> usize;
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]) -> Result<()>;
    fn output(&self, x: &[f64]) -> Result<f64>;
    /// `∂f(θ, x) / ∂θ`, in the order of [`TangentModel::params`].
    fn param_gradient(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// `f(x) = θᵀx`, no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub theta: Vec<f64>,
}

impl LinearModel {
    pub fn new(theta: Vec<f64>) -> Self {
        Self { theta }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.theta.len() {
            return Err(Error::shape("linear model", (1, x.len()), (1, self.theta.len())));
        }
        Ok(())
    }
}

impl TangentModel for LinearModel {
    fn num_params(&self) -> usize {
        self.theta.len()
    }

    fn params(&self) -> Vec<f64> {
        self.theta.clone()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.theta.len() {
            return Err(Error::shape("set_params", (1, params.len()), (1, self.theta.len())));
        }
        self.theta.copy_from_slice(params);
        Ok(())
    }

    fn output(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(x.iter().zip(&self.theta).map(|(a, b)| a * b).sum())
    }

    fn param_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(x.to_vec())
    }
}

/// One output unit of an MLP viewed as a scalar function.
#[derive(Debug, Clone)]
pub struct MlpTangent {
    model: MlpModel,
    unit: usize,
}

impl MlpTangent {
    /// Requires a single-output head.
    pub fn scalar(model: MlpModel) -> Result<Self> {
        let out = model.spec().output_dim;
        if out != 1 {
            return Err(Error::Domain(format!(
                "NTK analysis needs a scalar head but the model has {out} outputs; \
                 pick one output unit with the per-class option (output_unit)"
            )));
        }
        Ok(Self { model, unit: 0 })
    }

    /// Output unit `unit` of a multi-output model.
    pub fn unit(model: MlpModel, unit: usize) -> Result<Self> {
        let out = model.spec().output_dim;
        if unit >= out {
            return Err(Error::Domain(format!(
                "output unit {unit} out of range for {out} outputs"
            )));
        }
        Ok(Self { model, unit })
    }

    pub fn model(&self) -> &MlpModel {
        &self.model
    }

    fn row(x: &[f64]) -> Result<Matrix> {
        Matrix::new(1, x.len(), x.to_vec())
    }
}

impl TangentModel for MlpTangent {
    fn num_params(&self) -> usize {
        self.model.parameter_count()
    }

    fn params(&self) -> Vec<f64> {
        self.model.flat_params()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        self.model.set_flat_params(params)
    }

    fn output(&self, x: &[f64]) -> Result<f64> {
        Ok(self.model.predict(&Self::row(x)?)?.get(0, self.unit))
    }

    fn param_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (logits, cache) = self.model.forward(&Self::row(x)?)?;
        let mut seed = Matrix::zeros(1, logits.cols());
        seed.set(0, self.unit, 1.0);
        Ok(self.model.backward(&cache, &seed)?.flatten())
    }
}
