//! Composite layers (conv + batchnorm + ReLU, Inception modules) and their
//! parameter declarations.
//!
//! A block is described by a small `*Spec` value that knows which named
//! arrays it needs. The same spec drives random initialization and
//! validation of a loaded [`ParamStore`], so the two can never disagree.

use rand::Rng;

use super::blob::{Array, ParamStore};
use super::layers::{
    avgpool3, batchnorm_relu, concat_depth, conv2d, deconv2d, maxpool2, BatchNorm, Conv2d, Deconv2d,
};
use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};

/// How a declared parameter is initialized by [`random_store`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// He-uniform with the given fan-in.
    Weight {
        fan_in: usize,
    },
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDecl {
    pub name: String,
    pub dims: Vec<u32>,
    pub init: Init,
}

fn decl(name: String, dims: &[usize], init: Init) -> ParamDecl {
    ParamDecl {
        name,
        dims: dims.iter().map(|&d| d as u32).collect(),
        init,
    }
}

fn bn_decls(name: &str, channels: usize, out: &mut Vec<ParamDecl>) {
    out.push(decl(format!("{name}.bn.gamma"), &[channels], Init::Ones));
    out.push(decl(format!("{name}.bn.beta"), &[channels], Init::Zeros));
    out.push(decl(format!("{name}.bn.mean"), &[channels], Init::Zeros));
    out.push(decl(format!("{name}.bn.var"), &[channels], Init::Ones));
}

/// Fills every declared parameter. Weights are drawn He-uniform, biases and
/// batchnorm shifts are zero, batchnorm scales and variances are one.
pub fn random_store<R: Rng>(decls: &[ParamDecl], rng: &mut R) -> ParamStore {
    let mut store = ParamStore::new();
    for d in decls {
        let n: usize = d.dims.iter().map(|&v| v as usize).product();
        let data = match d.init {
            Init::Weight { fan_in } => {
                let a = (6.0 / fan_in.max(1) as f64).sqrt() as f32;
                (0..n).map(|_| rng.gen_range(-a..=a)).collect()
            }
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
        };
        store.insert(
            d.name.clone(),
            Array {
                dims: d.dims.clone(),
                data,
            },
        );
    }
    store
}

fn fetch(store: &ParamStore, layer: &str, name: &str, dims: &[usize]) -> Result<Vec<f32>> {
    let a = store
        .get(name)
        .ok_or_else(|| Error::shape(format!("{layer}: missing parameter `{name}`")))?;
    if a.dims_usize() != dims {
        return Err(Error::shape(format!(
            "{layer}: `{name}` has dims {:?}, expected {dims:?}",
            a.dims
        )));
    }
    Ok(a.data.clone())
}

fn fetch_bn(store: &ParamStore, layer: &str, channels: usize) -> Result<BatchNorm> {
    let get = |suffix: &str| fetch(store, layer, &format!("{layer}.bn.{suffix}"), &[channels]);
    BatchNorm::new(get("gamma")?, get("beta")?, get("mean")?, get("var")?)
}

/// A convolution followed either by batchnorm + ReLU, or (for task-head
/// outputs) by nothing but its bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub out: usize,
    pub input: usize,
    pub kernel: usize,
    pub stride: usize,
    pub bn_relu: bool,
}

impl ConvSpec {
    pub const fn bn(out: usize, input: usize, kernel: usize, stride: usize) -> Self {
        Self {
            out,
            input,
            kernel,
            stride,
            bn_relu: true,
        }
    }

    pub const fn plain(out: usize, input: usize, kernel: usize) -> Self {
        Self {
            out,
            input,
            kernel,
            stride: 1,
            bn_relu: false,
        }
    }

    pub fn declare(&self, name: &str, out: &mut Vec<ParamDecl>) {
        let k = self.kernel;
        out.push(decl(
            format!("{name}.weight"),
            &[self.out, self.input, k, k],
            Init::Weight {
                fan_in: self.input * k * k,
            },
        ));
        if self.bn_relu {
            bn_decls(name, self.out, out);
        } else {
            out.push(decl(format!("{name}.bias"), &[self.out], Init::Zeros));
        }
    }

    pub fn load(&self, name: &str, store: &ParamStore) -> Result<ConvBlock> {
        let k = self.kernel;
        let weight = fetch(
            store,
            name,
            &format!("{name}.weight"),
            &[self.out, self.input, k, k],
        )?;
        let (bias, bn) = if self.bn_relu {
            (None, Some(fetch_bn(store, name, self.out)?))
        } else {
            (
                Some(fetch(store, name, &format!("{name}.bias"), &[self.out])?),
                None,
            )
        };
        let conv = Conv2d::new(self.out, self.input, k, self.stride, weight, bias)
            .map_err(|e| Error::shape(format!("{name}: {e}")))?;
        Ok(ConvBlock {
            name: name.to_owned(),
            conv,
            bn,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub name: String,
    pub conv: Conv2d,
    pub bn: Option<BatchNorm>,
}

impl ConvBlock {
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        self.conv
            .output_shape(input)
            .map_err(|e| Error::shape(format!("{}: {e}", self.name)))
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.output_shape(input.shape())?;
        let y = conv2d(input, &self.conv)?;
        match &self.bn {
            Some(bn) => batchnorm_relu(y, bn),
            None => Ok(y),
        }
    }

    pub fn param_count(&self) -> usize {
        self.conv.param_count() + self.bn.as_ref().map_or(0, BatchNorm::param_count)
    }
}

/// 2x2 stride-2 transposed convolution followed by batchnorm + ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeconvSpec {
    pub out: usize,
    pub input: usize,
}

impl DeconvSpec {
    pub fn declare(&self, name: &str, out: &mut Vec<ParamDecl>) {
        out.push(decl(
            format!("{name}.weight"),
            &[self.input, self.out, 2, 2],
            Init::Weight { fan_in: self.input },
        ));
        bn_decls(name, self.out, out);
    }

    pub fn load(&self, name: &str, store: &ParamStore) -> Result<DeconvBlock> {
        let weight = fetch(
            store,
            name,
            &format!("{name}.weight"),
            &[self.input, self.out, 2, 2],
        )?;
        Ok(DeconvBlock {
            name: name.to_owned(),
            deconv: Deconv2d::new(self.out, self.input, weight, None)?,
            bn: fetch_bn(store, name, self.out)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeconvBlock {
    pub name: String,
    pub deconv: Deconv2d,
    pub bn: BatchNorm,
}

impl DeconvBlock {
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        self.deconv
            .output_shape(input)
            .map_err(|e| Error::shape(format!("{}: {e}", self.name)))
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.output_shape(input.shape())?;
        batchnorm_relu(deconv2d(input, &self.deconv)?, &self.bn)
    }

    pub fn param_count(&self) -> usize {
        self.deconv.param_count() + self.bn.param_count()
    }
}

/// Inception-v2 style module with four parallel branches of equal width:
///
/// ```text
/// b1: 1x1
/// b2: 1x1 (half width) -> 3x3
/// b3: 1x1 (half width) -> 3x3 -> 3x3
/// b4: 3x3 avg pool -> 1x1
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InceptionSpec {
    pub input: usize,
    pub out: usize,
}

impl InceptionSpec {
    fn branch_convs(&self) -> Result<[(&'static str, ConvSpec); 7]> {
        if !self.out.is_multiple_of(8) || self.out == 0 {
            return Err(Error::shape(format!(
                "inception output depth {} must be a positive multiple of 8",
                self.out
            )));
        }
        let b = self.out / 4;
        let r = b / 2;
        let i = self.input;
        Ok([
            ("b1", ConvSpec::bn(b, i, 1, 1)),
            ("b2a", ConvSpec::bn(r, i, 1, 1)),
            ("b2b", ConvSpec::bn(b, r, 3, 1)),
            ("b3a", ConvSpec::bn(r, i, 1, 1)),
            ("b3b", ConvSpec::bn(b, r, 3, 1)),
            ("b3c", ConvSpec::bn(b, b, 3, 1)),
            ("b4", ConvSpec::bn(b, i, 1, 1)),
        ])
    }

    pub fn declare(&self, name: &str, out: &mut Vec<ParamDecl>) -> Result<()> {
        for (branch, spec) in self.branch_convs()? {
            spec.declare(&format!("{name}.{branch}"), out);
        }
        Ok(())
    }

    pub fn load(&self, name: &str, store: &ParamStore) -> Result<InceptionModule> {
        let convs = self.branch_convs()?;
        let mut blocks = Vec::with_capacity(7);
        for (branch, spec) in convs {
            blocks.push(spec.load(&format!("{name}.{branch}"), store)?);
        }
        let [b1, b2a, b2b, b3a, b3b, b3c, b4]: [ConvBlock; 7] = blocks.try_into().unwrap();
        Ok(InceptionModule {
            name: name.to_owned(),
            b1,
            b2: [b2a, b2b],
            b3: [b3a, b3b, b3c],
            b4,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InceptionModule {
    pub name: String,
    b1: ConvBlock,
    b2: [ConvBlock; 2],
    b3: [ConvBlock; 3],
    b4: ConvBlock,
}

impl InceptionModule {
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let s1 = self.b1.output_shape(input)?;
        let s2 = self.b2[1].output_shape(self.b2[0].output_shape(input)?)?;
        let s3 = self.b3.iter().try_fold(input, |s, b| b.output_shape(s))?;
        let s4 = self.b4.output_shape(input)?;
        Ok(Shape::new(
            s1.depth + s2.depth + s3.depth + s4.depth,
            input.height,
            input.width,
        ))
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let y1 = self.b1.forward(input)?;
        let y2 = self.b2[1].forward(&self.b2[0].forward(input)?)?;
        let y3 = self.b3[2].forward(&self.b3[1].forward(&self.b3[0].forward(input)?)?)?;
        let y4 = self.b4.forward(&avgpool3(input))?;
        concat_depth(&concat_depth(&y1, &y2)?, &concat_depth(&y3, &y4)?)
    }

    pub fn param_count(&self) -> usize {
        self.b1.param_count()
            + self.b2.iter().map(ConvBlock::param_count).sum::<usize>()
            + self.b3.iter().map(ConvBlock::param_count).sum::<usize>()
            + self.b4.param_count()
    }
}

/// A run of Inception modules, optionally preceded by a 2x2 max pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InceptionBlockSpec {
    pub input: usize,
    pub out: usize,
    pub modules: usize,
    pub downsample: bool,
}

impl InceptionBlockSpec {
    fn module_specs(&self) -> impl Iterator<Item = InceptionSpec> + '_ {
        (0..self.modules).map(move |m| InceptionSpec {
            input: if m == 0 { self.input } else { self.out },
            out: self.out,
        })
    }

    pub fn declare(&self, name: &str, out: &mut Vec<ParamDecl>) -> Result<()> {
        for (m, spec) in self.module_specs().enumerate() {
            spec.declare(&format!("{name}.{m}"), out)?;
        }
        Ok(())
    }

    pub fn load(&self, name: &str, store: &ParamStore) -> Result<InceptionBlock> {
        let modules = self
            .module_specs()
            .enumerate()
            .map(|(m, spec)| spec.load(&format!("{name}.{m}"), store))
            .collect::<Result<_>>()?;
        Ok(InceptionBlock {
            name: name.to_owned(),
            downsample: self.downsample,
            modules,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InceptionBlock {
    pub name: String,
    pub downsample: bool,
    pub modules: Vec<InceptionModule>,
}

impl InceptionBlock {
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let mut s = input;
        if self.downsample {
            if !s.height.is_multiple_of(2) || !s.width.is_multiple_of(2) {
                return Err(Error::shape(format!("{}: cannot pool {s}", self.name)));
            }
            s = Shape::new(s.depth, s.height / 2, s.width / 2);
        }
        self.modules
            .iter()
            .try_fold(s, |s, m| m.output_shape(s))
            .map_err(|e| Error::shape(format!("{}: {e}", self.name)))
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let mut x = if self.downsample {
            maxpool2(input)?
        } else {
            input.clone()
        };
        for m in &self.modules {
            x = m.forward(&x)?;
        }
        Ok(x)
    }

    pub fn param_count(&self) -> usize {
        self.modules.iter().map(InceptionModule::param_count).sum()
    }
}
