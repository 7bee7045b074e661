use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Architecture of a dense network.
///
/// Classifiers need `output_dim >= 2`; that is enforced by
/// [`MlpSpec::validate_classifier`]. Scalar heads (`output_dim == 1`) are
/// legal for the NTK analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            hidden_dims,
            output_dim,
            activation,
        }
    }

    /// Layer widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.output_dim);
        dims
    }

    pub fn parameter_count(&self) -> usize {
        self.dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims().contains(&0) {
            return Err(Error::Domain(format!(
                "every layer width must be >= 1: {:?}",
                self.dims()
            )));
        }
        Ok(())
    }

    pub fn validate_classifier(&self) -> Result<()> {
        self.validate()?;
        if self.output_dim < 2 {
            return Err(Error::Domain(format!(
                "a classifier needs at least 2 outputs, got {}",
                self.output_dim
            )));
        }
        Ok(())
    }
}

static NEXT_MODEL_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed)
}

/// A dense network: `weights[k]` maps layer `k` (rows) to layer `k + 1` (columns).
#[derive(Debug, Clone)]
pub struct MlpModel {
    spec: MlpSpec,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    // Identifies the current parameter values so a forward cache can be
    // matched to the model it came from. Refreshed on every mutation.
    id: u64,
}

impl PartialEq for MlpModel {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.weights == other.weights && self.biases == other.biases
    }
}

/// Activations recorded by [`MlpModel::forward`], consumed by [`MlpModel::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    model_id: u64,
    /// `activations[0]` is the input; `activations[k]` feeds layer `k`.
    activations: Vec<Matrix>,
}

/// Parameter gradients, shaped like the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn global_norm(&self) -> f64 {
        let w: f64 = self.weights.iter().flat_map(|m| m.as_slice()).map(|g| g * g).sum();
        let b: f64 = self.biases.iter().flatten().map(|g| g * g).sum();
        (w + b).sqrt()
    }

    /// Same ordering as [`MlpModel::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }
}

/// Glorot-uniform weights and zero biases, deterministic in `seed`.
pub fn init_model(spec: &MlpSpec, seed: u64) -> Result<MlpModel> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = spec.dims();
    let mut weights = Vec::with_capacity(dims.len() - 1);
    let mut biases = Vec::with_capacity(dims.len() - 1);
    for pair in dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        weights.push(Matrix::from_fn(fan_in, fan_out, |_, _| {
            rng.random_range(-limit..=limit)
        }));
        biases.push(vec![0.0; fan_out]);
    }
    Ok(MlpModel {
        spec: spec.clone(),
        weights,
        biases,
        id: fresh_id(),
    })
}

impl MlpModel {
    /// Assembles a model from explicit parameters, checking that shapes chain.
    pub fn from_parts(spec: MlpSpec, weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        spec.validate()?;
        let dims = spec.dims();
        if weights.len() != dims.len() - 1 || biases.len() != dims.len() - 1 {
            return Err(Error::Domain(format!(
                "expected {} layers, got {} weight matrices and {} bias vectors",
                dims.len() - 1,
                weights.len(),
                biases.len()
            )));
        }
        for (k, pair) in dims.windows(2).enumerate() {
            if weights[k].shape() != (pair[0], pair[1]) {
                return Err(Error::shape(
                    "MlpModel::from_parts",
                    weights[k].shape(),
                    (pair[0], pair[1]),
                ));
            }
            if biases[k].len() != pair[1] {
                return Err(Error::shape("MlpModel::from_parts", (1, biases[k].len()), (1, pair[1])));
            }
            if biases[k].iter().any(|b| !b.is_finite()) {
                return Err(Error::NonFinite("MlpModel::from_parts"));
            }
        }
        Ok(Self {
            spec,
            weights,
            biases,
            id: fresh_id(),
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn parameter_count(&self) -> usize {
        self.spec.parameter_count()
    }

    /// Parameters flattened layer by layer: weights (row-major) then biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    /// Inverse of [`MlpModel::flat_params`].
    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::shape(
                "set_flat_params",
                (1, flat.len()),
                (1, self.parameter_count()),
            ));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("set_flat_params"));
        }
        let mut offset = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let n = w.as_slice().len();
            w.as_mut_slice().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
            let len = b.len();
            b.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        self.id = fresh_id();
        Ok(())
    }

    /// Bytes of every parameter, for bit-identity checks.
    pub fn parameter_bits(&self) -> Vec<u64> {
        self.flat_params().iter().map(|v| v.to_bits()).collect()
    }

    /// Logits for a batch plus the activations needed by [`MlpModel::backward`].
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::shape("forward", x.shape(), (x.rows(), self.spec.input_dim)));
        }
        let last = self.weights.len() - 1;
        let mut activations = Vec::with_capacity(self.weights.len());
        let mut current = x.clone();
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = current.matmul(w)?;
            for r in 0..z.rows() {
                for (v, &bias) in z.row_mut(r).iter_mut().zip(b) {
                    *v += bias;
                    if k != last {
                        *v = self.spec.activation.apply(*v);
                    }
                }
            }
            if z.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("forward"));
            }
            activations.push(std::mem::replace(&mut current, z));
        }
        Ok((
            current,
            ForwardCache {
                model_id: self.id,
                activations,
            },
        ))
    }

    /// Logits only.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.forward(x).map(|(logits, _)| logits)
    }

    /// Reverse-mode gradients of a loss given its gradient w.r.t. the logits.
    pub fn backward(&self, cache: &ForwardCache, d_logits: &Matrix) -> Result<Gradients> {
        if cache.model_id != self.id {
            return Err(Error::StaleCache(
                "cache was produced by a different model or before a parameter update".into(),
            ));
        }
        let batch = cache.activations[0].rows();
        if d_logits.shape() != (batch, self.spec.output_dim) {
            return Err(Error::shape(
                "backward",
                d_logits.shape(),
                (batch, self.spec.output_dim),
            ));
        }
        let n_layers = self.weights.len();
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        let mut delta = d_logits.clone();
        for k in (0..n_layers).rev() {
            let input = &cache.activations[k];
            weights.push(input.t_matmul(&delta)?);
            let mut db = vec![0.0; delta.cols()];
            for r in 0..delta.rows() {
                for (acc, &d) in db.iter_mut().zip(delta.row(r)) {
                    *acc += d;
                }
            }
            biases.push(db);
            if k > 0 {
                let mut upstream = delta.matmul_t(&self.weights[k])?;
                for (u, &a) in upstream.as_mut_slice().iter_mut().zip(input.as_slice()) {
                    *u *= self.spec.activation.derivative_from_output(a);
                }
                delta = upstream;
            }
        }
        weights.reverse();
        biases.reverse();
        Ok(Gradients { weights, biases })
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [Matrix], &mut [Vec<f64>]) {
        self.id = fresh_id();
        (&mut self.weights, &mut self.biases)
    }
}
