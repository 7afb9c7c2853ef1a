//! Second stage: BEV detection with a classification head and a box
//! regression head.
//!
//! Two parallel stems (semantics, height) each run four 3x3 convolutions
//! (16, 16, 32, 32 filters; the third strided) and are concatenated. Three
//! encoder blocks of two convolutions (64, 128, 256 filters) each halve the
//! resolution; two decoder blocks (deconv + conv, 128 and 64 filters) bring
//! it back to a quarter of the input with skips from `block2b` and `block1b`.

use crate::error::{Error, Result};
use crate::labels::{Det3, Seg7};
use crate::nn::blocks::{ConvBlock, ConvSpec, DeconvBlock, DeconvSpec, ParamDecl};
use crate::nn::{concat_depth, softmax_channels, ParamStore, Shape, Tensor};
use crate::projection::BevGrid;

pub const BOX_PARAMS: usize = 6;
pub const HEIGHT_CHANNELS: usize = 3;

const SEM: [(&str, ConvSpec); 4] = [
    ("sem1", ConvSpec::bn(16, Seg7::COUNT, 3, 1)),
    ("sem2", ConvSpec::bn(16, 16, 3, 1)),
    ("sem3", ConvSpec::bn(32, 16, 3, 2)),
    ("sem4", ConvSpec::bn(32, 32, 3, 1)),
];

const HEIGHT: [(&str, ConvSpec); 4] = [
    ("height1", ConvSpec::bn(16, HEIGHT_CHANNELS, 3, 1)),
    ("height2", ConvSpec::bn(16, 16, 3, 1)),
    ("height3", ConvSpec::bn(32, 16, 3, 2)),
    ("height4", ConvSpec::bn(32, 32, 3, 1)),
];

const ENCODER: [(&str, ConvSpec); 6] = [
    ("block1a", ConvSpec::bn(64, 64, 3, 1)),
    ("block1b", ConvSpec::bn(64, 64, 3, 2)),
    ("block2a", ConvSpec::bn(128, 64, 3, 1)),
    ("block2b", ConvSpec::bn(128, 128, 3, 2)),
    ("block3a", ConvSpec::bn(256, 128, 3, 1)),
    ("block3b", ConvSpec::bn(256, 256, 3, 2)),
];

const UP1A: DeconvSpec = DeconvSpec {
    out: 128,
    input: 256,
};
const UP1C: ConvSpec = ConvSpec::bn(128, 128 + 128, 3, 1);
const UP2A: DeconvSpec = DeconvSpec {
    out: 64,
    input: 128,
};
const UP2C: ConvSpec = ConvSpec::bn(64, 64 + 64, 3, 1);

const CLASSHEAD: [(&str, ConvSpec); 3] = [
    ("classhead1", ConvSpec::bn(64, 64, 3, 1)),
    ("classhead2", ConvSpec::bn(32, 64, 3, 1)),
    ("classhead3", ConvSpec::plain(Det3::COUNT, 32, 3)),
];

const BBOXHEAD: [(&str, ConvSpec); 3] = [
    ("bboxhead1", ConvSpec::bn(64, 64, 3, 1)),
    ("bboxhead2", ConvSpec::bn(32, 64, 3, 1)),
    ("bboxhead3", ConvSpec::plain(BOX_PARAMS, 32, 3)),
];

pub fn stage2_params() -> Vec<ParamDecl> {
    let mut out = Vec::new();
    for (name, spec) in SEM.iter().chain(&HEIGHT).chain(&ENCODER) {
        spec.declare(name, &mut out);
    }
    UP1A.declare("up1a", &mut out);
    UP1C.declare("up1c", &mut out);
    UP2A.declare("up2a", &mut out);
    UP2C.declare("up2c", &mut out);
    for (name, spec) in CLASSHEAD.iter().chain(&BBOXHEAD) {
        spec.declare(name, &mut out);
    }
    out
}

fn load_chain<const N: usize>(
    specs: &[(&str, ConvSpec); N],
    store: &ParamStore,
) -> Result<[ConvBlock; N]> {
    let blocks = specs
        .iter()
        .map(|(name, spec)| spec.load(name, store))
        .collect::<Result<Vec<_>>>()?;
    Ok(blocks.try_into().expect("length N"))
}

#[derive(Debug, Clone)]
pub struct Stage2Graph {
    sem: [ConvBlock; 4],
    height: [ConvBlock; 4],
    encoder: [ConvBlock; 6],
    up1a: DeconvBlock,
    up1c: ConvBlock,
    up2a: DeconvBlock,
    up2c: ConvBlock,
    classhead: [ConvBlock; 3],
    bboxhead: [ConvBlock; 3],
}

pub fn build_stage2(store: &ParamStore) -> Result<Stage2Graph> {
    let g = Stage2Graph {
        sem: load_chain(&SEM, store)?,
        height: load_chain(&HEIGHT, store)?,
        encoder: load_chain(&ENCODER, store)?,
        up1a: UP1A.load("up1a", store)?,
        up1c: UP1C.load("up1c", store)?,
        up2a: UP2A.load("up2a", store)?,
        up2c: UP2C.load("up2c", store)?,
        classhead: load_chain(&CLASSHEAD, store)?,
        bboxhead: load_chain(&BBOXHEAD, store)?,
    };
    g.trace(
        Shape::new(Seg7::COUNT, 1024, 1024),
        Shape::new(HEIGHT_CHANNELS, 1024, 1024),
    )?;
    Ok(g)
}

fn concat_shape(name: &str, a: Shape, b: Shape) -> Result<Shape> {
    if a.height != b.height || a.width != b.width {
        return Err(Error::shape(format!("{name}: cannot concat {a} with {b}")));
    }
    Ok(Shape::new(a.depth + b.depth, a.height, a.width))
}

impl Stage2Graph {
    /// Dry-run shape trace. The first two rows are the semantic and height inputs.
    pub fn trace(&self, sem: Shape, height: Shape) -> Result<Vec<(&'static str, Shape)>> {
        let mut rows = vec![("semantics", sem), ("lidar", height)];
        let mut s = sem;
        for (blk, (name, _)) in self.sem.iter().zip(&SEM) {
            s = blk.output_shape(s)?;
            rows.push((name, s));
        }
        let mut h = height;
        for (blk, (name, _)) in self.height.iter().zip(&HEIGHT) {
            h = blk.output_shape(h)?;
            rows.push((name, h));
        }
        let mut x = concat_shape("block0", s, h)?;
        rows.push(("block0", x));
        let mut skips = Vec::new();
        for (blk, (name, _)) in self.encoder.iter().zip(&ENCODER) {
            x = blk.output_shape(x)?;
            rows.push((name, x));
            skips.push(x);
        }
        let u1a = self.up1a.output_shape(x)?;
        rows.push(("up1a", u1a));
        let u1b = concat_shape("up1b", skips[3], u1a)?;
        rows.push(("up1b", u1b));
        let u1c = self.up1c.output_shape(u1b)?;
        rows.push(("up1c", u1c));
        let u2a = self.up2a.output_shape(u1c)?;
        rows.push(("up2a", u2a));
        let u2b = concat_shape("up2b", skips[1], u2a)?;
        rows.push(("up2b", u2b));
        let u2c = self.up2c.output_shape(u2b)?;
        rows.push(("up2c", u2c));
        for (head, specs) in [(&self.classhead, &CLASSHEAD), (&self.bboxhead, &BBOXHEAD)] {
            let mut y = u2c;
            for (blk, (name, _)) in head.iter().zip(specs) {
                y = blk.output_shape(y)?;
                rows.push((name, y));
            }
        }
        Ok(rows)
    }

    /// `(class logits, box parameters)`.
    pub fn forward(&self, sem: &Tensor, height: &Tensor) -> Result<(Tensor, Tensor)> {
        self.forward_visit(sem, height, &mut |_, _| {})
    }

    pub fn forward_visit(
        &self,
        sem: &Tensor,
        height: &Tensor,
        visit: &mut dyn FnMut(&str, &Tensor),
    ) -> Result<(Tensor, Tensor)> {
        self.trace(sem.shape(), height.shape())?;
        let mut s = sem.clone();
        for (blk, (name, _)) in self.sem.iter().zip(&SEM) {
            s = blk.forward(&s)?;
            visit(name, &s);
        }
        let mut h = height.clone();
        for (blk, (name, _)) in self.height.iter().zip(&HEIGHT) {
            h = blk.forward(&h)?;
            visit(name, &h);
        }
        let mut x = concat_depth(&s, &h)?;
        visit("block0", &x);
        let mut skips = Vec::new();
        for (blk, (name, _)) in self.encoder.iter().zip(&ENCODER) {
            x = blk.forward(&x)?;
            visit(name, &x);
            skips.push(x.clone());
        }
        let u1a = self.up1a.forward(&x)?;
        visit("up1a", &u1a);
        let u1b = concat_depth(&skips[3], &u1a)?;
        visit("up1b", &u1b);
        let u1c = self.up1c.forward(&u1b)?;
        visit("up1c", &u1c);
        let u2a = self.up2a.forward(&u1c)?;
        visit("up2a", &u2a);
        let u2b = concat_depth(&skips[1], &u2a)?;
        visit("up2b", &u2b);
        let u2c = self.up2c.forward(&u2b)?;
        visit("up2c", &u2c);
        let mut outputs = Vec::with_capacity(2);
        for (head, specs) in [(&self.classhead, &CLASSHEAD), (&self.bboxhead, &BBOXHEAD)] {
            let mut y = u2c.clone();
            for (blk, (name, _)) in head.iter().zip(specs) {
                y = blk.forward(&y)?;
                visit(name, &y);
            }
            outputs.push(y);
        }
        let boxes = outputs.pop().unwrap();
        Ok((outputs.pop().unwrap(), boxes))
    }

    pub fn param_count(&self) -> usize {
        self.sem
            .iter()
            .chain(&self.height)
            .chain(&self.encoder)
            .chain(&self.classhead)
            .chain(&self.bboxhead)
            .chain([&self.up1c, &self.up2c])
            .map(ConvBlock::param_count)
            .sum::<usize>()
            + self.up1a.param_count()
            + self.up2a.param_count()
    }
}

/// Softmaxed `(3, H/4, W/4)` class grid and raw `(6, H/4, W/4)` box grid.
pub fn infer_stage2(g: &Stage2Graph, bev: &BevGrid) -> Result<(Tensor, Tensor)> {
    let (logits, boxes) = g.forward(&bev.semantic, &bev.height)?;
    Ok((softmax_channels(&logits), boxes))
}
