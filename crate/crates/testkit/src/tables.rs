//! Expected layer-by-layer output shapes of both graphs at full resolution.

use mvlidarnet::nn::Shape;

fn s(d: usize, h: usize, w: usize) -> Shape {
    Shape::new(d, h, w)
}

/// Input plus every layer of the first stage, for a `(3, 64, 2048)` image.
pub fn stage1_table() -> Vec<(&'static str, Shape)> {
    vec![
        ("input", s(3, 64, 2048)),
        ("trunk1", s(64, 64, 2048)),
        ("trunk2", s(64, 64, 2048)),
        ("trunk3", s(128, 32, 1024)),
        ("block1", s(64, 32, 1024)),
        ("block2", s(64, 16, 512)),
        ("block3", s(128, 8, 256)),
        ("up1a", s(256, 16, 512)),
        ("up1b", s(256 + 64, 16, 512)),
        ("up1c", s(256, 16, 512)),
        ("up1d", s(256, 16, 512)),
        ("up2a", s(128, 32, 1024)),
        ("up2b", s(128 + 64, 32, 1024)),
        ("up2c", s(128, 32, 1024)),
        ("up2d", s(128, 32, 1024)),
        ("up3a", s(64, 64, 2048)),
        ("up3b", s(64, 64, 2048)),
        ("up3c", s(64, 64, 2048)),
        ("classhead1", s(64, 64, 2048)),
        ("classhead2", s(7, 64, 2048)),
    ]
}

/// Both inputs plus every layer of the second stage, for a 1024 x 1024 grid.
pub fn stage2_table() -> Vec<(&'static str, Shape)> {
    vec![
        ("semantics", s(7, 1024, 1024)),
        ("lidar", s(3, 1024, 1024)),
        ("sem1", s(16, 1024, 1024)),
        ("sem2", s(16, 1024, 1024)),
        ("sem3", s(32, 512, 512)),
        ("sem4", s(32, 512, 512)),
        ("height1", s(16, 1024, 1024)),
        ("height2", s(16, 1024, 1024)),
        ("height3", s(32, 512, 512)),
        ("height4", s(32, 512, 512)),
        ("block0", s(32 + 32, 512, 512)),
        ("block1a", s(64, 512, 512)),
        ("block1b", s(64, 256, 256)),
        ("block2a", s(128, 256, 256)),
        ("block2b", s(128, 128, 128)),
        ("block3a", s(256, 128, 128)),
        ("block3b", s(256, 64, 64)),
        ("up1a", s(128, 128, 128)),
        ("up1b", s(128 + 128, 128, 128)),
        ("up1c", s(128, 128, 128)),
        ("up2a", s(64, 256, 256)),
        ("up2b", s(64 + 64, 256, 256)),
        ("up2c", s(64, 256, 256)),
        ("classhead1", s(64, 256, 256)),
        ("classhead2", s(32, 256, 256)),
        ("classhead3", s(3, 256, 256)),
        ("bboxhead1", s(64, 256, 256)),
        ("bboxhead2", s(32, 256, 256)),
        ("bboxhead3", s(6, 256, 256)),
    ]
}
