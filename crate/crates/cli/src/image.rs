//! Binary PPM/PGM writers and the top-down scene rendering.
//!
//! Images show the BEV grid with +x (forward) up and +y (left) to the left:
//! cell `(i, j)` lands on pixel row `W - 1 - i`, column `L - 1 - j`.

use mvlidarnet::{BevConfig, Det3, OrientedBox};

pub type Rgb = [u8; 3];

pub const BACKGROUND: Rgb = [0, 0, 0];
pub const OCCUPIED: Rgb = [90, 90, 90];
pub const DRIVABLE: Rgb = [0, 160, 0];
pub const PEDESTRIAN: Rgb = [235, 40, 40];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
}

impl Canvas {
    pub fn new(width: usize, height: usize, fill: Rgb) -> Self {
        Self {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Rgb {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: i64, col: i64, color: Rgb) {
        if row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width {
            self.pixels[row as usize * self.width + col as usize] = color;
        }
    }

    /// Bresenham segment, endpoints included; off-canvas pixels are clipped.
    pub fn line(&mut self, from: (i64, i64), to: (i64, i64), color: Rgb) {
        let (mut r, mut c) = from;
        let dr = (to.0 - r).abs();
        let dc = -(to.1 - c).abs();
        let sr = if r < to.0 { 1 } else { -1 };
        let sc = if c < to.1 { 1 } else { -1 };
        let mut err = dr + dc;
        loop {
            self.set(r, c, color);
            if (r, c) == to {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dc {
                err += dc;
                r += sr;
            }
            if e2 <= dr {
                err += dr;
                c += sc;
            }
        }
    }

    /// Binary `P6`.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().flatten());
        out
    }
}

/// Binary `P5` graymap.
pub fn pgm(width: usize, height: usize, values: &[u8]) -> Vec<u8> {
    assert_eq!(values.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(values);
    out
}

/// Parses the header and pixel data of a binary PPM (`P6`) or PGM (`P5`).
pub fn parse_pnm(bytes: &[u8]) -> Option<(String, usize, usize, &[u8])> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return None;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?.to_string());
    }
    let width = fields[1].parse().ok()?;
    let height = fields[2].parse().ok()?;
    Some((fields[0].clone(), width, height, bytes.get(pos + 1..)?))
}

/// Row-major full-resolution BEV mask, `255` where set, in image orientation.
pub fn mask_to_pgm(bev: &BevConfig, mask: &[bool]) -> Vec<u8> {
    let (w, l) = (bev.width_cells, bev.length_cells);
    let mut values = vec![0u8; w * l];
    for (cell, &m) in mask.iter().enumerate() {
        if m {
            let (row, col) = cell_pixel(bev, cell / l, cell % l);
            values[row * l + col] = 255;
        }
    }
    pgm(l, w, &values)
}

pub fn cell_pixel(bev: &BevConfig, i: usize, j: usize) -> (usize, usize) {
    (bev.width_cells - 1 - i, bev.length_cells - 1 - j)
}

/// Pixel of an ego-frame point; may lie off the canvas.
pub fn world_pixel(bev: &BevConfig, x: f64, y: f64) -> (i64, i64) {
    let half = bev.extent / 2.0;
    let i = ((x + half) / bev.cell_size_x()).floor() as i64;
    let j = ((y + half) / bev.cell_size_y()).floor() as i64;
    (
        bev.width_cells as i64 - 1 - i,
        bev.length_cells as i64 - 1 - j,
    )
}

/// Stable bright color for detection `index`.
pub fn instance_color(index: usize) -> Rgb {
    let mut z = (index as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    // Keep red and blue high enough to stand apart from the fixed colors.
    [
        128 + (z & 0x7F) as u8,
        64 + ((z >> 8) & 0x7F) as u8,
        128 + ((z >> 16) & 0x7F) as u8,
    ]
}

/// Outline drawn for a detection: its own rectangle for vehicles, a square
/// with side `max(width, length)` for pedestrians.
pub fn outline(b: &OrientedBox) -> [[f64; 2]; 4] {
    match b.class {
        Det3::Pedestrian => {
            let side = b.width.max(b.length);
            OrientedBox {
                width: side,
                length: side,
                ..*b
            }
            .corners()
        }
        _ => b.corners(),
    }
}

pub fn box_color(index: usize, b: &OrientedBox) -> Rgb {
    match b.class {
        Det3::Pedestrian => PEDESTRIAN,
        _ => instance_color(index),
    }
}

/// Occupied cells in gray, drivable cells in green, detections outlined.
pub fn render_bev(
    bev: &BevConfig,
    occupancy: Option<&[bool]>,
    drivable: Option<&[bool]>,
    boxes: &[OrientedBox],
) -> Canvas {
    let (w, l) = (bev.width_cells, bev.length_cells);
    let mut canvas = Canvas::new(l, w, BACKGROUND);
    for (layer, color) in [(occupancy, OCCUPIED), (drivable, DRIVABLE)] {
        let Some(mask) = layer else { continue };
        for (cell, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
            let (row, col) = cell_pixel(bev, cell / l, cell % l);
            canvas.pixels[row * l + col] = color;
        }
    }
    for (k, b) in boxes.iter().enumerate() {
        let color = box_color(k, b);
        let px = outline(b).map(|[x, y]| world_pixel(bev, x, y));
        for e in 0..4 {
            canvas.line(px[e], px[(e + 1) % 4], color);
        }
    }
    canvas
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_header_and_size() {
        let c = Canvas::new(3, 2, [1, 2, 3]);
        let bytes = c.to_ppm();
        let (magic, w, h, data) = parse_pnm(&bytes).unwrap();
        assert_eq!((magic.as_str(), w, h), ("P6", 3, 2));
        assert_eq!(data.len(), 18);
        assert_eq!(&data[..3], &[1, 2, 3]);
    }

    #[test]
    fn line_includes_endpoints_and_is_connected() {
        let mut c = Canvas::new(10, 10, BACKGROUND);
        c.line((1, 1), (7, 4), [9, 9, 9]);
        assert_eq!(c.get(1, 1), [9, 9, 9]);
        assert_eq!(c.get(7, 4), [9, 9, 9]);
        assert_eq!(c.pixels.iter().filter(|&&p| p == [9, 9, 9]).count(), 7);
    }

    #[test]
    fn forward_is_up_and_left_is_left() {
        let bev = BevConfig {
            width_cells: 8,
            length_cells: 8,
            extent: 8.0,
            out_stride: 2,
        };
        assert_eq!(world_pixel(&bev, 3.5, 3.5), (0, 0));
        assert_eq!(world_pixel(&bev, -3.5, -3.5), (7, 7));
        assert_eq!(
            bev.cell_of(3.5, -3.5).map(|(i, j)| cell_pixel(&bev, i, j)),
            Some((0, 7))
        );
    }

    #[test]
    fn mask_pgm_marks_cells() {
        let bev = BevConfig {
            width_cells: 4,
            length_cells: 4,
            extent: 4.0,
            out_stride: 1,
        };
        let mut mask = vec![false; 16];
        mask[0] = true;
        let bytes = mask_to_pgm(&bev, &mask);
        let (magic, w, h, data) = parse_pnm(&bytes).unwrap();
        assert_eq!((magic.as_str(), w, h), ("P5", 4, 4));
        assert_eq!(data.iter().filter(|&&v| v == 255).count(), 1);
        assert_eq!(data[15], 255);
    }

    #[test]
    fn instance_colors_differ_from_fixed_palette() {
        for k in 0..200 {
            let c = instance_color(k);
            assert!(![BACKGROUND, OCCUPIED, DRIVABLE, PEDESTRIAN].contains(&c));
        }
        assert_ne!(instance_color(0), instance_color(1));
    }
}
