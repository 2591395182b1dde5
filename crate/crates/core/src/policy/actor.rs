//! The actor network: input standardization, tanh hidden layers and a
//! two-output head read as the mean and standard deviation of the
//! normalized action.
//!
//! Head transform: `mean = tanh(z0)`, `std = max(softplus(z1), 1e-3)`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::PolicyError;
use crate::features::{Observation, OBS_DIM};
use crate::nn::{Activation, Dense, Mlp};
use crate::scalar::Scalar;

pub const HIDDEN_WIDTH: usize = 128;
pub const HEAD_OUTPUTS: usize = 2;
pub const STD_FLOOR: f64 = 1e-3;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"BWEW";
pub const WEIGHTS_VERSION: u32 = 1;

/// Per-feature standardization `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer<T> {
    pub mean: Array1<T>,
    pub std: Array1<T>,
}

impl<T: Scalar> Normalizer<T> {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            std: Array1::ones(dim),
        }
    }

    /// Column statistics of `rows`. Columns with (near) zero spread get a
    /// unit std so they pass through centred but unscaled.
    pub fn fit(rows: ArrayView2<T>) -> Self {
        let n = T::lit(rows.nrows().max(1) as f64);
        let mean = rows.sum_axis(Axis(0)) / n;
        let mut var = Array1::<T>::zeros(rows.ncols());
        for row in rows.rows() {
            ndarray::Zip::from(&mut var)
                .and(&row)
                .and(&mean)
                .for_each(|v, &x, &m| *v += (x - m) * (x - m));
        }
        let std = var.mapv(|v| {
            let s = (v / n).sqrt();
            if s > T::lit(1e-6) {
                s
            } else {
                T::one()
            }
        });
        Self { mean, std }
    }

    pub fn apply(&self, x: ArrayView2<T>) -> Array2<T> {
        (&x - &self.mean) / &self.std
    }

    pub fn cast<U: Scalar>(&self) -> Normalizer<U> {
        Normalizer {
            mean: self.mean.mapv(|v| U::lit(v.as_f64())),
            std: self.std.mapv(|v| U::lit(v.as_f64())),
        }
    }
}

/// Normalizer plus network. [`crate::ModelWeights`] is the `f32` instance
/// that is saved to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorNet<T> {
    pub norm: Normalizer<T>,
    pub net: Mlp<T>,
}

/// `(mean, std)` from raw head outputs.
pub fn head_transform<T: Scalar>(z_mean: T, z_std: T) -> (T, T) {
    (z_mean.tanh(), z_std.softplus().max(T::lit(STD_FLOOR)))
}

impl<T: Scalar> ActorNet<T> {
    /// 150 -> 128 -> 128 -> 2 with random initial weights.
    pub fn random<R: Rng>(norm: Normalizer<T>, rng: &mut R) -> Self {
        Self {
            norm,
            net: Mlp::new(
                &[OBS_DIM, HIDDEN_WIDTH, HIDDEN_WIDTH, HEAD_OUTPUTS],
                Activation::Tanh,
                Activation::Identity,
                rng,
            ),
        }
    }

    pub fn zeros() -> Self {
        Self {
            norm: Normalizer::identity(OBS_DIM),
            net: Mlp::zeros(
                &[OBS_DIM, HIDDEN_WIDTH, HIDDEN_WIDTH, HEAD_OUTPUTS],
                Activation::Tanh,
                Activation::Identity,
            ),
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let shape = |msg: String| Err(PolicyError::Shape(msg));
        if self.norm.mean.len() != OBS_DIM || self.norm.std.len() != OBS_DIM {
            return shape(format!(
                "normalization vectors must have {OBS_DIM} entries, got {} and {}",
                self.norm.mean.len(),
                self.norm.std.len()
            ));
        }
        if self
            .norm
            .mean
            .iter()
            .chain(self.norm.std.iter())
            .any(|v| !v.is_finite())
        {
            return Err(PolicyError::NonFiniteParameter);
        }
        if self.norm.std.iter().any(|&s| s <= T::zero()) {
            return shape("normalization std must be positive".into());
        }
        let layers = &self.net.layers;
        if layers.is_empty() {
            return shape("no layers".into());
        }
        let mut width = OBS_DIM;
        for (i, l) in layers.iter().enumerate() {
            if l.in_dim() != width {
                return shape(format!(
                    "layer {i} expects {} inputs, previous width is {width}",
                    l.in_dim()
                ));
            }
            if l.bias.len() != l.out_dim() {
                return shape(format!(
                    "layer {i} bias length {} != {}",
                    l.bias.len(),
                    l.out_dim()
                ));
            }
            let last = i + 1 == layers.len();
            if !last && l.out_dim() != HIDDEN_WIDTH {
                return shape(format!(
                    "hidden layer {i} has width {}, expected {HIDDEN_WIDTH}",
                    l.out_dim()
                ));
            }
            if last && l.out_dim() != HEAD_OUTPUTS {
                return shape(format!(
                    "head has {} outputs, expected {HEAD_OUTPUTS}",
                    l.out_dim()
                ));
            }
            width = l.out_dim();
        }
        if !self.net.is_finite() {
            return Err(PolicyError::NonFiniteParameter);
        }
        Ok(())
    }

    /// Raw head outputs for a batch of unnormalized observations.
    pub fn head(&self, obs: ArrayView2<T>) -> Array2<T> {
        self.net.forward(self.norm.apply(obs).view())
    }

    /// Action means for a batch.
    pub fn means(&self, obs: ArrayView2<T>) -> Array1<T> {
        self.head(obs).column(0).mapv(|z| z.tanh())
    }

    pub fn forward_one(&self, obs: &[f64]) -> (T, T) {
        let x = Array2::from_shape_fn((1, obs.len()), |(_, j)| T::lit(obs[j]));
        let z = self.head(x.view());
        head_transform(z[[0, 0]], z[[0, 1]])
    }

    pub fn cast<U: Scalar>(&self) -> ActorNet<U> {
        ActorNet {
            norm: self.norm.cast(),
            net: self.net.cast(),
        }
    }
}

/// Validated forward pass for one observation: `(mean, std)` of the
/// normalized action.
pub fn mlp_forward<T: Scalar>(w: &ActorNet<T>, o: &Observation) -> Result<(f64, f64), PolicyError> {
    w.validate()?;
    let (m, s) = w.forward_one(o.values());
    Ok((m.as_f64(), s.as_f64()))
}

fn put_u32<W: Write>(out: &mut W, v: u32) -> std::io::Result<()> {
    out.write_all(&v.to_le_bytes())
}

fn put_f32s<'a, W: Write>(
    out: &mut W,
    vals: impl IntoIterator<Item = &'a f32>,
) -> std::io::Result<()> {
    for v in vals {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Serialize to the weight container. Byte layout (little endian):
///
/// ```text
/// "BWEW" | u32 version | u32 dim | f32[dim] norm_mean | f32[dim] norm_std
/// u32 n_layers
/// per layer: u32 out | u32 in | u8 activation (0 identity, 1 tanh)
///            f32[out*in] weight (row-major) | f32[out] bias
/// ```
pub fn write_weights<W: Write>(w: &ActorNet<f32>, mut out: W) -> Result<(), PolicyError> {
    w.validate()?;
    out.write_all(WEIGHTS_MAGIC)?;
    put_u32(&mut out, WEIGHTS_VERSION)?;
    put_u32(&mut out, w.norm.mean.len() as u32)?;
    put_f32s(&mut out, w.norm.mean.iter())?;
    put_f32s(&mut out, w.norm.std.iter())?;
    put_u32(&mut out, w.net.layers.len() as u32)?;
    for l in &w.net.layers {
        put_u32(&mut out, l.out_dim() as u32)?;
        put_u32(&mut out, l.in_dim() as u32)?;
        out.write_all(&[match l.activation {
            Activation::Identity => 0,
            Activation::Tanh => 1,
        }])?;
        put_f32s(&mut out, l.weight.iter())?;
        put_f32s(&mut out, l.bias.iter())?;
    }
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], PolicyError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                PolicyError::Format(format!("truncated at byte {} (wanted {n} more)", self.pos))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, PolicyError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, PolicyError> {
        let bytes = self.take(
            n.checked_mul(4)
                .ok_or_else(|| PolicyError::Format("size overflow".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn read_weights<R: Read>(mut input: R) -> Result<ActorNet<f32>, PolicyError> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    if buf.len() < 8 || &buf[..4] != WEIGHTS_MAGIC {
        return Err(PolicyError::MissingVersion);
    }
    let mut cur = Cursor { buf: &buf, pos: 4 };
    let version = cur.u32()?;
    if version != WEIGHTS_VERSION {
        return Err(PolicyError::VersionMismatch {
            found: version,
            expected: WEIGHTS_VERSION,
        });
    }
    let dim = cur.u32()? as usize;
    let mean = Array1::from(cur.f32s(dim)?);
    let std = Array1::from(cur.f32s(dim)?);
    let n_layers = cur.u32()? as usize;
    let mut layers = Vec::new();
    for i in 0..n_layers {
        let out = cur.u32()? as usize;
        let inp = cur.u32()? as usize;
        let activation = match cur.take(1)?[0] {
            0 => Activation::Identity,
            1 => Activation::Tanh,
            other => {
                return Err(PolicyError::Format(format!(
                    "layer {i}: unknown activation tag {other}"
                )))
            }
        };
        let weight = Array2::from_shape_vec((out, inp), cur.f32s(out * inp)?)
            .map_err(|e| PolicyError::Format(e.to_string()))?;
        let bias = Array1::from(cur.f32s(out)?);
        layers.push(Dense {
            weight,
            bias,
            activation,
        });
    }
    if cur.pos != buf.len() {
        return Err(PolicyError::Format(format!(
            "{} trailing bytes",
            buf.len() - cur.pos
        )));
    }
    let w = ActorNet {
        norm: Normalizer { mean, std },
        net: Mlp { layers },
    };
    w.validate()?;
    Ok(w)
}

pub fn save_weights(w: &ActorNet<f32>, path: impl AsRef<Path>) -> Result<(), PolicyError> {
    let mut buf = Vec::new();
    write_weights(w, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ActorNet<f32>, PolicyError> {
    read_weights(std::fs::File::open(path)?)
}
