//! MLP generator, discriminator and the two-headed encoder.
//!
//! The encoder is a shared trunk feeding two linear heads: `f` (class-related,
//! L2-normalized) and `e` (content, unnormalized, same width as `z`).

pub mod checkpoint;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Scalar, Tape, Tensor};
use crate::error::{CdganError, Result};
use crate::latent::LatentBatch;
use crate::rng::Rng;

const NORM_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Tanh,
    Identity,
}

impl Activation {
    pub const LEAKY: Activation = Activation::LeakyRelu { slope: 0.2 };

    fn apply<T: Scalar>(self, tape: &mut Tape<T>, x: Tensor) -> Result<Tensor> {
        match self {
            Activation::LeakyRelu { slope } => tape.leaky_relu(x, T::of(slope)),
            Activation::Tanh => Ok(tape.tanh(x)),
            Activation::Identity => Ok(x),
        }
    }
}

/// Layer widths and activations of one MLP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
}

impl MlpSpec {
    /// A standalone network needs at least one hidden layer.
    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 3 {
            return Err(CdganError::validation(format!(
                "MLP needs input, at least one hidden layer and output, got widths {:?}",
                self.widths
            )));
        }
        if self.widths.contains(&0) {
            return Err(CdganError::validation(format!("zero width in {:?}", self.widths)));
        }
        Ok(())
    }

    pub fn input(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    /// `in × out`
    pub weight: Matrix<T>,
    /// `1 × out`
    pub bias: Matrix<T>,
}

impl<T: Scalar> Linear<T> {
    /// He-style uniform fan-in initialization, zero bias.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        let weight = Matrix::from_fn(fan_in, fan_out, |_, _| T::of(rng.gen_range(-bound..bound)));
        Linear {
            weight,
            bias: Matrix::zeros(1, fan_out),
        }
    }

    fn forward(&self, tape: &mut Tape<T>, x: Tensor, trainable: bool, params: &mut Vec<Tensor>) -> Result<Tensor> {
        let w = tape.leaf(&self.weight, trainable);
        let b = tape.leaf(&self.bias, trainable);
        params.push(w);
        params.push(b);
        let h = tape.matmul(x, w)?;
        tape.add_row(h, b)
    }

    fn params_mut(&mut self) -> [&mut Matrix<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    fn params(&self) -> [&Matrix<T>; 2] {
        [&self.weight, &self.bias]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    pub spec: MlpSpec,
    pub layers: Vec<Linear<T>>,
}

/// Output of a forward pass together with the parameter leaves it created,
/// in the same order as `params_mut`.
#[derive(Clone, Debug)]
pub struct Bound {
    pub out: Tensor,
    pub params: Vec<Tensor>,
}

impl<T: Scalar> Mlp<T> {
    /// Any stack of at least one layer; the encoder trunk has no output layer of its own.
    pub fn init(spec: MlpSpec, rng: &mut Rng) -> Result<Self> {
        if spec.widths.len() < 2 || spec.widths.contains(&0) {
            return Err(CdganError::validation(format!("invalid layer widths {:?}", spec.widths)));
        }
        let layers = spec.widths.windows(2).map(|w| Linear::init(w[0], w[1], rng)).collect();
        Ok(Mlp { spec, layers })
    }

    pub fn forward(&self, tape: &mut Tape<T>, x: Tensor, trainable: bool) -> Result<Bound> {
        let [_, p] = tape.shape(x);
        if p != self.spec.input() {
            return Err(CdganError::contract(format!(
                "network expects {} inputs, got {p}",
                self.spec.input()
            )));
        }
        let mut params = Vec::with_capacity(2 * self.layers.len());
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, h, trainable, &mut params)?;
            let act = if i == last { self.spec.output } else { self.spec.hidden };
            h = act.apply(tape, h)?;
        }
        Ok(Bound { out: h, params })
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix<T>> {
        self.layers.iter_mut().flat_map(Linear::params_mut).collect()
    }

    pub fn params(&self) -> Vec<&Matrix<T>> {
        self.layers.iter().flat_map(Linear::params).collect()
    }
}

/// Shared trunk plus the `f` and `e` heads.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder<T> {
    pub trunk: Mlp<T>,
    pub f_head: Linear<T>,
    pub e_head: Linear<T>,
    pub normalize_f: bool,
}

#[derive(Clone, Debug)]
pub struct EncoderBound {
    pub f: Tensor,
    pub e: Tensor,
    pub params: Vec<Tensor>,
}

impl<T: Scalar> Encoder<T> {
    pub fn forward(&self, tape: &mut Tape<T>, x: Tensor, trainable: bool) -> Result<EncoderBound> {
        let Bound { out: h, mut params } = self.trunk.forward(tape, x, trainable)?;
        let f = self.f_head.forward(tape, h, trainable, &mut params)?;
        let f = if self.normalize_f {
            tape.l2_normalize(f, T::of(NORM_EPS))
        } else {
            f
        };
        let e = self.e_head.forward(tape, h, trainable, &mut params)?;
        Ok(EncoderBound { f, e, params })
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut p = self.trunk.params_mut();
        p.extend(self.f_head.params_mut());
        p.extend(self.e_head.params_mut());
        p
    }

    pub fn params(&self) -> Vec<&Matrix<T>> {
        let mut p = self.trunk.params();
        p.extend(self.f_head.params());
        p.extend(self.e_head.params());
        p
    }
}

/// Architecture choices for all three networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_z: usize,
    pub k: usize,
    pub d_f: usize,
    pub pixels: usize,
    pub g_hidden: Vec<usize>,
    pub d_hidden: Vec<usize>,
    pub e_hidden: Vec<usize>,
    pub normalize_f: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_z: 8,
            k: 3,
            d_f: 16,
            pixels: 256,
            g_hidden: vec![128, 128],
            d_hidden: vec![128, 128],
            e_hidden: vec![128, 128],
            normalize_f: true,
        }
    }
}

impl ModelConfig {
    fn widths(first: usize, hidden: &[usize], last: Option<usize>) -> Vec<usize> {
        let mut w = vec![first];
        w.extend_from_slice(hidden);
        w.extend(last);
        w
    }

    pub fn generator_spec(&self) -> MlpSpec {
        MlpSpec {
            widths: Self::widths(self.d_z + self.k, &self.g_hidden, Some(self.pixels)),
            hidden: Activation::LEAKY,
            output: Activation::Tanh,
        }
    }

    pub fn discriminator_spec(&self) -> MlpSpec {
        MlpSpec {
            widths: Self::widths(self.pixels, &self.d_hidden, Some(1)),
            hidden: Activation::LEAKY,
            output: Activation::Identity,
        }
    }

    /// Trunk output is activated like a hidden layer; the heads stay linear.
    pub fn trunk_spec(&self) -> MlpSpec {
        MlpSpec {
            widths: Self::widths(self.pixels, &self.e_hidden, None),
            hidden: Activation::LEAKY,
            output: Activation::LEAKY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_z == 0 || self.d_f == 0 || self.pixels == 0 {
            return Err(CdganError::validation("d_z, d_f and pixels must be positive"));
        }
        if self.k < 2 {
            return Err(CdganError::validation(format!("need at least 2 classes, got {}", self.k)));
        }
        if self.e_hidden.is_empty() {
            return Err(CdganError::validation("encoder trunk needs at least one layer"));
        }
        self.generator_spec().validate()?;
        self.discriminator_spec().validate()
    }
}

/// Parameters of G, D and E.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle<T = f32> {
    pub config: ModelConfig,
    pub generator: Mlp<T>,
    pub discriminator: Mlp<T>,
    pub encoder: Encoder<T>,
}

/// Detached encoder features.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput<T> {
    /// `N × d_f`; unit rows when `normalize_f` is set.
    pub f: Matrix<T>,
    /// `N × d_z`
    pub e: Matrix<T>,
}

impl<T: Scalar> ModelBundle<T> {
    pub fn init(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let generator = Mlp::init(config.generator_spec(), rng)?;
        let discriminator = Mlp::init(config.discriminator_spec(), rng)?;
        let trunk_spec = config.trunk_spec();
        let trunk_out = trunk_spec.output_width();
        let trunk = Mlp::init(trunk_spec, rng)?;
        let f_head = Linear::init(trunk_out, config.d_f, rng);
        let e_head = Linear::init(trunk_out, config.d_z, rng);
        Ok(ModelBundle {
            encoder: Encoder {
                trunk,
                f_head,
                e_head,
                normalize_f: config.normalize_f,
            },
            config,
            generator,
            discriminator,
        })
    }

    /// `tanh(MLP([z, c]))` recorded on `tape`.
    pub fn generate(&self, tape: &mut Tape<T>, latent: &LatentBatch<T>, trainable: bool) -> Result<Bound> {
        if latent.d_z() != self.config.d_z || latent.classes() != self.config.k {
            return Err(CdganError::contract(format!(
                "latent has d_z={} k={}, generator expects d_z={} k={}",
                latent.d_z(),
                latent.classes(),
                self.config.d_z,
                self.config.k
            )));
        }
        let z = tape.constant(&latent.z);
        let c = tape.constant(&latent.c_onehot);
        let input = tape.concat(&[z, c], 1)?;
        self.generator.forward(tape, input, trainable)
    }

    pub fn discriminate(&self, tape: &mut Tape<T>, images: Tensor, trainable: bool) -> Result<Bound> {
        self.discriminator.forward(tape, images, trainable)
    }

    pub fn encode(&self, tape: &mut Tape<T>, images: Tensor, trainable: bool) -> Result<EncoderBound> {
        self.encoder.forward(tape, images, trainable)
    }

    pub fn is_finite(&self) -> bool {
        self.generator
            .params()
            .into_iter()
            .chain(self.discriminator.params())
            .chain(self.encoder.params())
            .all(Matrix::is_finite)
    }
}

pub fn generator_forward<T: Scalar>(bundle: &ModelBundle<T>, latent: &LatentBatch<T>) -> Result<Matrix<T>> {
    let mut tape = Tape::new();
    let out = bundle.generate(&mut tape, latent, false)?.out;
    Ok(tape.to_matrix(out))
}

pub fn discriminator_forward<T: Scalar>(bundle: &ModelBundle<T>, images: &Matrix<T>) -> Result<Matrix<T>> {
    let mut tape = Tape::new();
    let x = tape.constant(images);
    let out = bundle.discriminate(&mut tape, x, false)?.out;
    Ok(tape.to_matrix(out))
}

pub fn encoder_forward<T: Scalar>(bundle: &ModelBundle<T>, images: &Matrix<T>) -> Result<EncoderOutput<T>> {
    let mut tape = Tape::new();
    let x = tape.constant(images);
    let b = bundle.encode(&mut tape, x, false)?;
    Ok(EncoderOutput {
        f: tape.to_matrix(b.f),
        e: tape.to_matrix(b.e),
    })
}
