//! Small dense feed-forward networks with hand-written reverse mode.
//!
//! Networks are generic over [`Real`] so the same code trains agents in
//! single precision and runs gradient checks in double precision. Layers
//! compute `y = x W + b` on row-major batches through `matrixmultiply`.

mod heads;
mod optim;
mod params;

pub use heads::{
    categorical_entropy, gaussian_log_prob, log_softmax, softmax, split_gaussian, squash_log_det,
    squashed_log_prob, GaussianOutput, LOG_STD_MAX, LOG_STD_MIN,
};
pub use optim::{clip_grad_norm, soft_update, Adam, AdamConfig};
pub use params::{Dense, ParameterSet};

use std::fmt::{Debug, Display};

use rand::Rng;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floating point type the networks are built on.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + 'static
{
    const BYTES: usize;

    /// `C <- alpha * A B + beta * C` for strided row/column layouts.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    fn of(x: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(x).expect("f64 converts to every Real")
    }

    fn f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("Real converts to f64")
    }

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

macro_rules! impl_real {
    ($t:ty, $gemm:path, $bytes:expr) => {
        impl Real for $t {
            const BYTES: usize = $bytes;

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                let span = |rows: usize, cols: usize, rs: isize, cs: isize| {
                    if rows == 0 || cols == 0 {
                        0
                    } else {
                        (rows as isize - 1) * rs + (cols as isize - 1) * cs + 1
                    }
                };
                assert!(
                    a.len() as isize >= span(m, k, rsa, csa),
                    "gemm: A too small"
                );
                assert!(
                    b.len() as isize >= span(k, n, rsb, csb),
                    "gemm: B too small"
                );
                assert!(
                    c.len() as isize >= span(m, n, rsc, csc),
                    "gemm: C too small"
                );
                // SAFETY: the asserts above bound every strided access inside the slices.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    )
                }
            }

            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            fn read_le(bytes: &[u8]) -> Self {
                let mut buf = [0u8; $bytes];
                buf.copy_from_slice(&bytes[..$bytes]);
                <$t>::from_le_bytes(buf)
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm, 4);
impl_real!(f64, matrixmultiply::dgemm, 8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

/// How the raw output layer is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    /// Raw values, e.g. action values.
    Linear,
    /// Softmax over the outputs.
    Categorical,
    /// `(mean, log_std)` of a Gaussian, log-std clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
    GaussianParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    pub head: OutputHead,
}

pub const DEFAULT_HIDDEN: [usize; 2] = [256, 256];

impl NetworkSpec {
    /// Two rectified hidden layers of 256 units.
    pub fn new(input_dim: usize, output_dim: usize, head: OutputHead) -> Self {
        Self::with_hidden(input_dim, &DEFAULT_HIDDEN, output_dim, head)
    }

    pub fn with_hidden(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        head: OutputHead,
    ) -> Self {
        Self {
            input_dim,
            hidden: hidden.to_vec(),
            output_dim,
            activation: Activation::Relu,
            head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::Config(format!(
                "network dimensions must be >= 1: {self:?}"
            )));
        }
        if self.head == OutputHead::GaussianParams && self.output_dim != 2 {
            return Err(Error::Config(
                "a Gaussian head has exactly two outputs".into(),
            ));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut fan_in = self.input_dim;
        for &h in self.hidden.iter().chain(std::iter::once(&self.output_dim)) {
            dims.push((fan_in, h));
            fan_in = h;
        }
        dims
    }
}

/// Intermediate values of a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    batch: usize,
    // activations[0] is the input; activations[l + 1] is the output of layer l,
    // post-activation for hidden layers and raw for the last layer.
    activations: Vec<Vec<T>>,
}

impl<T: Real> ForwardCache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Raw output layer values, `batch x output_dim` row-major.
    pub fn output(&self) -> &[T] {
        self.activations
            .last()
            .expect("cache holds at least the input")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Mlp<T> {
    spec: NetworkSpec,
    params: ParameterSet<T>,
}

impl<T: Real> Mlp<T> {
    /// Fan-in uniform initialization: every weight and bias of a layer is
    /// drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut draw = || T::of(rng.random_range(-bound..bound));
                let weights = (0..fan_in * fan_out).map(|_| draw()).collect();
                let bias = (0..fan_out).map(|_| draw()).collect();
                Dense {
                    fan_in,
                    fan_out,
                    weights,
                    bias,
                }
            })
            .collect();
        Ok(Self {
            spec,
            params: ParameterSet { layers },
        })
    }

    pub fn from_parts(spec: NetworkSpec, params: ParameterSet<T>) -> Result<Self> {
        spec.validate()?;
        let dims = spec.layer_dims();
        let ok = dims.len() == params.layers.len()
            && dims.iter().zip(&params.layers).all(|(&(i, o), l)| {
                l.fan_in == i && l.fan_out == o && l.weights.len() == i * o && l.bias.len() == o
            });
        if !ok {
            return Err(Error::Shape {
                context: "parameter set does not match network spec",
                expected: spec.layer_dims().iter().map(|(i, o)| i * o + o).sum(),
                got: params.len(),
            });
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParameterSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet<T> {
        &mut self.params
    }

    pub fn forward_batch(&self, input: &[T], batch: usize) -> Result<ForwardCache<T>> {
        let expected = batch * self.spec.input_dim;
        if input.len() != expected {
            return Err(Error::Shape {
                context: "network input",
                expected,
                got: input.len(),
            });
        }
        let n_layers = self.params.layers.len();
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(input.to_vec());
        for (l, layer) in self.params.layers.iter().enumerate() {
            let x = activations.last().expect("input pushed above");
            let mut y = Vec::with_capacity(batch * layer.fan_out);
            for _ in 0..batch {
                y.extend_from_slice(&layer.bias);
            }
            T::gemm(
                batch,
                layer.fan_in,
                layer.fan_out,
                T::one(),
                x,
                layer.fan_in as isize,
                1,
                &layer.weights,
                layer.fan_out as isize,
                1,
                T::one(),
                &mut y,
                layer.fan_out as isize,
                1,
            );
            if l + 1 < n_layers {
                match self.spec.activation {
                    Activation::Relu => y.iter_mut().for_each(|v| *v = v.max(T::zero())),
                    Activation::Tanh => y.iter_mut().for_each(|v| *v = v.tanh()),
                }
            }
            activations.push(y);
        }
        Ok(ForwardCache { batch, activations })
    }

    /// Raw outputs for a batch, without the head transform.
    pub fn predict(&self, input: &[T], batch: usize) -> Result<Vec<T>> {
        let mut cache = self.forward_batch(input, batch)?;
        Ok(cache.activations.pop().expect("non-empty"))
    }

    /// Single-sample evaluation with the head applied: probabilities for a
    /// categorical head, `[mean, log_std]` for a Gaussian head.
    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        let raw = self.predict(input, 1)?;
        Ok(match self.spec.head {
            OutputHead::Linear => raw,
            OutputHead::Categorical => softmax(&raw),
            OutputHead::GaussianParams => {
                let g = split_gaussian(raw[0], raw[1]);
                vec![g.mean, g.log_std]
            }
        })
    }

    /// Reverse-mode pass. `d_output` is the gradient of a scalar loss with
    /// respect to the raw outputs in `cache`. Returns parameter gradients and,
    /// when requested, the gradient with respect to the input batch.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        d_output: &[T],
        want_input_grad: bool,
    ) -> Result<(ParameterSet<T>, Option<Vec<T>>)> {
        let mut grads = self.params.zeros_like();
        let dx = self.reverse(cache, d_output, Some(&mut grads), want_input_grad)?;
        Ok((grads, dx))
    }

    /// Gradient with respect to the input batch only, skipping parameter
    /// gradients.
    pub fn input_gradient(&self, cache: &ForwardCache<T>, d_output: &[T]) -> Result<Vec<T>> {
        Ok(self
            .reverse(cache, d_output, None, true)?
            .expect("input gradient requested"))
    }

    fn reverse(
        &self,
        cache: &ForwardCache<T>,
        d_output: &[T],
        mut grads: Option<&mut ParameterSet<T>>,
        want_input_grad: bool,
    ) -> Result<Option<Vec<T>>> {
        let batch = cache.batch;
        let expected = batch * self.spec.output_dim;
        if d_output.len() != expected {
            return Err(Error::Shape {
                context: "loss adjoint",
                expected,
                got: d_output.len(),
            });
        }
        if d_output.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "loss adjoint".into(),
                step: 0,
            });
        }
        let n_layers = self.params.layers.len();
        let mut delta = d_output.to_vec();
        for l in (0..n_layers).rev() {
            let layer = &self.params.layers[l];
            let x = &cache.activations[l];
            if let Some(grads) = grads.as_deref_mut() {
                let g = &mut grads.layers[l];
                // dW = x^T delta
                T::gemm(
                    layer.fan_in,
                    batch,
                    layer.fan_out,
                    T::one(),
                    x,
                    1,
                    layer.fan_in as isize,
                    &delta,
                    layer.fan_out as isize,
                    1,
                    T::zero(),
                    &mut g.weights,
                    layer.fan_out as isize,
                    1,
                );
                for row in delta.chunks_exact(layer.fan_out) {
                    for (b, d) in g.bias.iter_mut().zip(row) {
                        *b += *d;
                    }
                }
            }
            if l == 0 && !want_input_grad {
                break;
            }
            // dx = delta W^T
            let mut dx = vec![T::zero(); batch * layer.fan_in];
            T::gemm(
                batch,
                layer.fan_out,
                layer.fan_in,
                T::one(),
                &delta,
                layer.fan_out as isize,
                1,
                &layer.weights,
                1,
                layer.fan_out as isize,
                T::zero(),
                &mut dx,
                layer.fan_in as isize,
                1,
            );
            if l > 0 {
                match self.spec.activation {
                    Activation::Relu => {
                        for (d, &a) in dx.iter_mut().zip(x) {
                            if a <= T::zero() {
                                *d = T::zero();
                            }
                        }
                    }
                    Activation::Tanh => {
                        for (d, &a) in dx.iter_mut().zip(x) {
                            *d *= T::one() - a * a;
                        }
                    }
                }
            }
            delta = dx;
        }
        Ok(want_input_grad.then_some(delta))
    }
}
