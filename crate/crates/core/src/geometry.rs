//! The representation network: a GELU MLP with dropout and (optionally)
//! row-wise L2-normalised output, with hand-written reverse-mode gradients.
//!
//! Layout: `hidden_layers` blocks of affine -> GELU -> dropout, then an
//! affine projection. Weights are stored `in x out` so a batch `X` (m x in)
//! maps to `X W + b`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Lower bound on the output norm before normalisation.
pub const NORM_EPS: f64 = 1e-12;

const CHECKPOINT_MAGIC: &[u8; 5] = b"CFNET";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Unit-norm rows; used for the kernel representation.
    #[default]
    Normalized,
    /// Plain affine output; used by the residual-regression baseline.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetArch {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub output_dim: usize,
    pub dropout: f64,
    #[serde(default)]
    pub head: Head,
}

impl NetArch {
    /// Low-dimensional synthetic inputs.
    pub fn synthetic(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_width: 256,
            hidden_layers: 2,
            output_dim: 64,
            dropout: 0.1,
            head: Head::Normalized,
        }
    }

    /// High-dimensional model embeddings.
    pub fn embedding(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_width: 512,
            hidden_layers: 2,
            output_dim: 128,
            dropout: 0.1,
            head: Head::Normalized,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_width == 0 || self.hidden_layers == 0 || self.output_dim == 0 {
            return Err(Error::Config(format!("network dimensions must be >= 1: {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0,1)", self.dropout)));
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers + 1);
        let mut fan_in = self.input_dim;
        for _ in 0..self.hidden_layers {
            dims.push((fan_in, self.hidden_width));
            fan_in = self.hidden_width;
        }
        dims.push((fan_in, self.output_dim));
        dims
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Network weights. Also used as the gradient buffer (same shapes).
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub arch: NetArch,
    pub layers: Vec<Layer>,
}

pub type Gradients = NetParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Intermediate values kept by a caching forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Array2<f64>,
    pre: Vec<Array2<f64>>,
    /// Inverted-dropout scale per hidden unit (0 or 1/(1-p)); `None` when inactive.
    masks: Vec<Option<Array2<f64>>>,
    post: Vec<Array2<f64>>,
    proj_norms: Option<Array1<f64>>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Exact GELU, `x * Phi(x)`.
pub fn gelu(x: f64) -> f64 {
    x * std_normal_cdf(x)
}

pub fn gelu_grad(x: f64) -> f64 {
    std_normal_cdf(x) + x * std_normal_pdf(x)
}

impl NetParams {
    /// Fan-in scaled uniform weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, zero biases.
    pub fn init(arch: NetArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = rng::stream(seed, Purpose::Init);
        let layers = arch
            .layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let bound = 1.0 / (fan_in as f64).sqrt();
                Layer {
                    w: Array2::from_shape_simple_fn((fan_in, fan_out), || rng.gen_range(-bound..bound)),
                    b: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { arch, layers })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            arch: self.arch,
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// All parameter arrays as flat slices, in a fixed order.
    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.w.as_slice().unwrap(), l.b.as_slice().unwrap()])
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.w.as_slice_mut().unwrap(), l.b.as_slice_mut().unwrap()])
    }

    pub fn is_finite(&self) -> bool {
        self.slices().all(|s| s.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.arch.input_dim {
            return Err(Error::Shape(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.arch.input_dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite network input".into()));
        }
        Ok(())
    }

    /// Forward pass without caching. `seed` drives the dropout mask in train mode.
    pub fn forward(&self, x: ArrayView2<f64>, mode: Mode, seed: u64) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x, mode, seed)?.output)
    }

    /// Forward pass keeping everything needed by [`NetParams::backward`].
    pub fn forward_cached(&self, x: ArrayView2<f64>, mode: Mode, seed: u64) -> Result<ForwardCache> {
        self.check_input(x)?;
        let p = self.arch.dropout;
        let dropout_on = mode == Mode::Train && p > 0.0;
        let mut rng = rng::stream(seed, Purpose::Dropout);
        let keep_scale = 1.0 / (1.0 - p);

        let n_hidden = self.arch.hidden_layers;
        let mut pre = Vec::with_capacity(n_hidden);
        let mut masks = Vec::with_capacity(n_hidden);
        let mut post: Vec<Array2<f64>> = Vec::with_capacity(n_hidden);
        for (k, layer) in self.layers[..n_hidden].iter().enumerate() {
            let a = if k == 0 {
                x.dot(&layer.w) + &layer.b
            } else {
                post[k - 1].dot(&layer.w) + &layer.b
            };
            let mut h = a.mapv(gelu);
            let mask = dropout_on.then(|| {
                Array2::from_shape_simple_fn(h.raw_dim(), || {
                    if rng.gen::<f64>() < p {
                        0.0
                    } else {
                        keep_scale
                    }
                })
            });
            if let Some(m) = &mask {
                h *= m;
            }
            pre.push(a);
            masks.push(mask);
            post.push(h);
        }
        let last = &self.layers[n_hidden];
        let mut out = match post.last() {
            Some(h) => h.dot(&last.w) + &last.b,
            None => x.dot(&last.w) + &last.b,
        };
        let proj_norms = match self.arch.head {
            Head::Linear => None,
            Head::Normalized => {
                let norms = out.map_axis(Axis(1), |r| r.dot(&r).sqrt().max(NORM_EPS));
                Zip::from(out.rows_mut()).and(&norms).for_each(|mut r, &nu| r /= nu);
                Some(norms)
            }
        };
        Ok(ForwardCache {
            input: x.to_owned(),
            pre,
            masks,
            post,
            proj_norms,
            output: out,
        })
    }

    /// Gradients of a scalar loss w.r.t. every parameter, given `dL/d output`.
    pub fn backward(&self, cache: &ForwardCache, d_out: ArrayView2<f64>) -> Result<Gradients> {
        if d_out.dim() != cache.output.dim() || cache.pre.len() != self.arch.hidden_layers {
            return Err(Error::Shape(format!(
                "upstream gradient {:?} does not match cached output {:?}",
                d_out.dim(),
                cache.output.dim()
            )));
        }
        let mut grads = self.zeros_like();
        let n_hidden = self.arch.hidden_layers;

        // Through the normalisation z = p / max(|p|, eps).
        let mut delta = match &cache.proj_norms {
            None => d_out.to_owned(),
            Some(norms) => {
                let mut dp = d_out.to_owned();
                Zip::from(dp.rows_mut())
                    .and(cache.output.rows())
                    .and(norms)
                    .for_each(|mut g, z, &nu| {
                        if nu > NORM_EPS {
                            let zg = z.dot(&g);
                            g.zip_mut_with(&z, |gi, &zi| *gi = (*gi - zi * zg) / nu);
                        } else {
                            g /= nu;
                        }
                    });
                dp
            }
        };

        for k in (0..=n_hidden).rev() {
            let h_in = if k == 0 { cache.input.view() } else { cache.post[k - 1].view() };
            // Written in place so the gradient keeps the parameters' standard layout.
            general_mat_mul(1.0, &h_in.t(), &delta, 0.0, &mut grads.layers[k].w);
            grads.layers[k].b = delta.sum_axis(Axis(0));
            if k == 0 {
                break;
            }
            let mut dh = delta.dot(&self.layers[k].w.t());
            if let Some(m) = &cache.masks[k - 1] {
                dh *= m;
            }
            Zip::from(&mut dh)
                .and(&cache.pre[k - 1])
                .for_each(|g, &a| *g *= gelu_grad(a));
            delta = dh;
        }
        Ok(grads)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(64 + 8 * self.num_params());
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let a = &self.arch;
        for v in [a.input_dim, a.hidden_width, a.hidden_layers, a.output_dim] {
            buf.extend_from_slice(&(v as u64).to_le_bytes());
        }
        buf.extend_from_slice(&a.dropout.to_le_bytes());
        buf.push(match a.head {
            Head::Normalized => 0,
            Head::Linear => 1,
        });
        for s in self.slices() {
            for v in s {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&buf).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let bad = |m: &str| Error::Data(format!("{}: {m}", path.display()));
        if bytes.len() < 50 || &bytes[..5] != CHECKPOINT_MAGIC {
            return Err(bad("not a network checkpoint"));
        }
        let version = u32::from_le_bytes(bytes[5..9].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported checkpoint version {version}")));
        }
        let u = |i: usize| u64::from_le_bytes(bytes[9 + 8 * i..17 + 8 * i].try_into().unwrap()) as usize;
        let dropout = f64::from_le_bytes(bytes[41..49].try_into().unwrap());
        let head = match bytes[49] {
            0 => Head::Normalized,
            1 => Head::Linear,
            _ => return Err(bad("unknown output head")),
        };
        let arch = NetArch {
            input_dim: u(0),
            hidden_width: u(1),
            hidden_layers: u(2),
            output_dim: u(3),
            dropout,
            head,
        };
        arch.validate()?;
        let mut params = NetParams::init(arch, 0)?.zeros_like();
        let body = &bytes[50..];
        if body.len() != 8 * params.num_params() {
            return Err(bad("parameter block has wrong length"));
        }
        let mut vals = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        for s in params.slices_mut() {
            for v in s.iter_mut() {
                *v = vals.next().unwrap();
            }
        }
        Ok(params)
    }
}
