//! First stage: range-image semantic segmentation.
//!
//! ```text
//! trunk1-3    conv 3x3 (64, 64, 128), trunk3 stride 2
//! block1      2 x Inception -> 64
//! block2      maxpool, 2 x Inception -> 64
//! block3      maxpool, 3 x Inception -> 128
//! up1a-d      deconv 256, concat block2, conv 1x1 256, conv 3x3 256
//! up2a-d      deconv 128, concat block1, conv 1x1 128, conv 3x3 128
//! up3a-c      deconv 64, conv 1x1 64, conv 3x3 64
//! classhead   conv 3x3 64, conv 1x1 -> 7 logits
//! ```

use crate::error::{Error, Result};
use crate::labels::Seg7;
use crate::nn::blocks::{
    ConvBlock, ConvSpec, DeconvBlock, DeconvSpec, InceptionBlock, InceptionBlockSpec, ParamDecl,
};
use crate::nn::{concat_depth, softmax_channels, ParamStore, Shape, Tensor};
use crate::projection::RangeImage;

pub const STAGE1_INPUT_DEPTH: usize = 3;

const TRUNK: [(&str, ConvSpec); 3] = [
    ("trunk1", ConvSpec::bn(64, 3, 3, 1)),
    ("trunk2", ConvSpec::bn(64, 64, 3, 1)),
    ("trunk3", ConvSpec::bn(128, 64, 3, 2)),
];

const BLOCKS: [(&str, InceptionBlockSpec); 3] = [
    (
        "block1",
        InceptionBlockSpec {
            input: 128,
            out: 64,
            modules: 2,
            downsample: false,
        },
    ),
    (
        "block2",
        InceptionBlockSpec {
            input: 64,
            out: 64,
            modules: 2,
            downsample: true,
        },
    ),
    (
        "block3",
        InceptionBlockSpec {
            input: 64,
            out: 128,
            modules: 3,
            downsample: true,
        },
    ),
];

const UP1A: DeconvSpec = DeconvSpec {
    out: 256,
    input: 128,
};
const UP1C: ConvSpec = ConvSpec::bn(256, 256 + 64, 1, 1);
const UP1D: ConvSpec = ConvSpec::bn(256, 256, 3, 1);
const UP2A: DeconvSpec = DeconvSpec {
    out: 128,
    input: 256,
};
const UP2C: ConvSpec = ConvSpec::bn(128, 128 + 64, 1, 1);
const UP2D: ConvSpec = ConvSpec::bn(128, 128, 3, 1);
const UP3A: DeconvSpec = DeconvSpec {
    out: 64,
    input: 128,
};
const UP3B: ConvSpec = ConvSpec::bn(64, 64, 1, 1);
const UP3C: ConvSpec = ConvSpec::bn(64, 64, 3, 1);
const CLASSHEAD1: ConvSpec = ConvSpec::bn(64, 64, 3, 1);
const CLASSHEAD2: ConvSpec = ConvSpec::plain(Seg7::COUNT, 64, 1);

/// Every named parameter the first stage needs, in load order.
pub fn stage1_params() -> Vec<ParamDecl> {
    let mut out = Vec::new();
    for (name, spec) in TRUNK {
        spec.declare(name, &mut out);
    }
    for (name, spec) in BLOCKS {
        spec.declare(name, &mut out)
            .expect("block widths are multiples of 8");
    }
    UP1A.declare("up1a", &mut out);
    UP1C.declare("up1c", &mut out);
    UP1D.declare("up1d", &mut out);
    UP2A.declare("up2a", &mut out);
    UP2C.declare("up2c", &mut out);
    UP2D.declare("up2d", &mut out);
    UP3A.declare("up3a", &mut out);
    UP3B.declare("up3b", &mut out);
    UP3C.declare("up3c", &mut out);
    CLASSHEAD1.declare("classhead1", &mut out);
    CLASSHEAD2.declare("classhead2", &mut out);
    out
}

#[derive(Debug, Clone)]
pub struct Stage1Graph {
    trunk: [ConvBlock; 3],
    block1: InceptionBlock,
    block2: InceptionBlock,
    block3: InceptionBlock,
    up1a: DeconvBlock,
    up1c: ConvBlock,
    up1d: ConvBlock,
    up2a: DeconvBlock,
    up2c: ConvBlock,
    up2d: ConvBlock,
    up3a: DeconvBlock,
    up3b: ConvBlock,
    up3c: ConvBlock,
    classhead1: ConvBlock,
    classhead2: ConvBlock,
}

/// Builds and validates the first stage from `store`. Fails with
/// [`Error::ShapeMismatch`] naming the first layer whose parameters are
/// missing or mis-shaped.
pub fn build_stage1(store: &ParamStore) -> Result<Stage1Graph> {
    let trunk = [
        TRUNK[0].1.load(TRUNK[0].0, store)?,
        TRUNK[1].1.load(TRUNK[1].0, store)?,
        TRUNK[2].1.load(TRUNK[2].0, store)?,
    ];
    let g = Stage1Graph {
        trunk,
        block1: BLOCKS[0].1.load(BLOCKS[0].0, store)?,
        block2: BLOCKS[1].1.load(BLOCKS[1].0, store)?,
        block3: BLOCKS[2].1.load(BLOCKS[2].0, store)?,
        up1a: UP1A.load("up1a", store)?,
        up1c: UP1C.load("up1c", store)?,
        up1d: UP1D.load("up1d", store)?,
        up2a: UP2A.load("up2a", store)?,
        up2c: UP2C.load("up2c", store)?,
        up2d: UP2D.load("up2d", store)?,
        up3a: UP3A.load("up3a", store)?,
        up3b: UP3B.load("up3b", store)?,
        up3c: UP3C.load("up3c", store)?,
        classhead1: CLASSHEAD1.load("classhead1", store)?,
        classhead2: CLASSHEAD2.load("classhead2", store)?,
    };
    g.trace(Shape::new(STAGE1_INPUT_DEPTH, 64, 2048))?;
    Ok(g)
}

fn concat_shape(name: &str, a: Shape, b: Shape) -> Result<Shape> {
    if a.height != b.height || a.width != b.width {
        return Err(Error::shape(format!("{name}: cannot concat {a} with {b}")));
    }
    Ok(Shape::new(a.depth + b.depth, a.height, a.width))
}

impl Stage1Graph {
    /// Dry run: the output shape of every layer for an input of shape
    /// `input`, without computing anything. The first row is the input.
    pub fn trace(&self, input: Shape) -> Result<Vec<(&'static str, Shape)>> {
        let mut rows = vec![("input", input)];
        let mut push = |name: &'static str, s: Shape| {
            rows.push((name, s));
            s
        };
        let t1 = push("trunk1", self.trunk[0].output_shape(input)?);
        let t2 = push("trunk2", self.trunk[1].output_shape(t1)?);
        let t3 = push("trunk3", self.trunk[2].output_shape(t2)?);
        let b1 = push("block1", self.block1.output_shape(t3)?);
        let b2 = push("block2", self.block2.output_shape(b1)?);
        let b3 = push("block3", self.block3.output_shape(b2)?);
        let u1a = push("up1a", self.up1a.output_shape(b3)?);
        let u1b = push("up1b", concat_shape("up1b", u1a, b2)?);
        let u1c = push("up1c", self.up1c.output_shape(u1b)?);
        let u1d = push("up1d", self.up1d.output_shape(u1c)?);
        let u2a = push("up2a", self.up2a.output_shape(u1d)?);
        let u2b = push("up2b", concat_shape("up2b", u2a, b1)?);
        let u2c = push("up2c", self.up2c.output_shape(u2b)?);
        let u2d = push("up2d", self.up2d.output_shape(u2c)?);
        let u3a = push("up3a", self.up3a.output_shape(u2d)?);
        let u3b = push("up3b", self.up3b.output_shape(u3a)?);
        let u3c = push("up3c", self.up3c.output_shape(u3b)?);
        let h1 = push("classhead1", self.classhead1.output_shape(u3c)?);
        push("classhead2", self.classhead2.output_shape(h1)?);
        Ok(rows)
    }

    /// Raw class logits, shape `(7, H, W)`.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.forward_visit(input, &mut |_, _| {})
    }

    /// Like [`Stage1Graph::forward`], calling `visit` with each layer's output.
    pub fn forward_visit(
        &self,
        input: &Tensor,
        visit: &mut dyn FnMut(&str, &Tensor),
    ) -> Result<Tensor> {
        self.trace(input.shape())?;
        let mut step = |name: &str, t: Tensor| {
            visit(name, &t);
            t
        };
        let t1 = step("trunk1", self.trunk[0].forward(input)?);
        let t2 = step("trunk2", self.trunk[1].forward(&t1)?);
        let t3 = step("trunk3", self.trunk[2].forward(&t2)?);
        let b1 = step("block1", self.block1.forward(&t3)?);
        let b2 = step("block2", self.block2.forward(&b1)?);
        let b3 = step("block3", self.block3.forward(&b2)?);
        let u1a = step("up1a", self.up1a.forward(&b3)?);
        let u1b = step("up1b", concat_depth(&u1a, &b2)?);
        let u1c = step("up1c", self.up1c.forward(&u1b)?);
        let u1d = step("up1d", self.up1d.forward(&u1c)?);
        let u2a = step("up2a", self.up2a.forward(&u1d)?);
        let u2b = step("up2b", concat_depth(&u2a, &b1)?);
        let u2c = step("up2c", self.up2c.forward(&u2b)?);
        let u2d = step("up2d", self.up2d.forward(&u2c)?);
        let u3a = step("up3a", self.up3a.forward(&u2d)?);
        let u3b = step("up3b", self.up3b.forward(&u3a)?);
        let u3c = step("up3c", self.up3c.forward(&u3b)?);
        let h1 = step("classhead1", self.classhead1.forward(&u3c)?);
        Ok(step("classhead2", self.classhead2.forward(&h1)?))
    }

    pub fn param_count(&self) -> usize {
        self.trunk.iter().map(ConvBlock::param_count).sum::<usize>()
            + self.block1.param_count()
            + self.block2.param_count()
            + self.block3.param_count()
            + self.up1a.param_count()
            + self.up1c.param_count()
            + self.up1d.param_count()
            + self.up2a.param_count()
            + self.up2c.param_count()
            + self.up2d.param_count()
            + self.up3a.param_count()
            + self.up3b.param_count()
            + self.up3c.param_count()
            + self.classhead1.param_count()
            + self.classhead2.param_count()
    }
}

/// Per-pixel seg7 probabilities for a range image, shape `(7, rows, cols)`.
pub fn infer_stage1(g: &Stage1Graph, img: &RangeImage) -> Result<Tensor> {
    Ok(softmax_channels(&g.forward(img.channels())?))
}
