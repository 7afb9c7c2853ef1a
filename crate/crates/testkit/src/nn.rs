use mvlidarnet::nn::{Conv2d, Deconv2d, Tensor};

/// Direct evaluation of the convolution sum with explicit zero padding.
pub fn conv2d_ref(input: &Tensor, p: &Conv2d) -> Tensor {
    let s = input.shape();
    let (k, st) = (p.kernel as i64, p.stride as i64);
    let pad = k / 2;
    let ho = (s.height as i64 + st - 1) / st;
    let wo = (s.width as i64 + st - 1) / st;
    let mut out = Tensor::zeros((p.out_depth, ho as usize, wo as usize));
    for oc in 0..p.out_depth {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = p.bias.as_ref().map_or(0.0, |b| b[oc] as f64);
                for ic in 0..p.in_depth {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = oy * st + ky - pad;
                            let ix = ox * st + kx - pad;
                            if iy < 0 || ix < 0 || iy >= s.height as i64 || ix >= s.width as i64 {
                                continue;
                            }
                            let w = p.weight
                                [(((oc * p.in_depth + ic) as i64 * k + ky) * k + kx) as usize];
                            acc += w as f64 * input.get(ic, iy as usize, ix as usize) as f64;
                        }
                    }
                }
                out.set(oc, oy as usize, ox as usize, acc as f32);
            }
        }
    }
    out
}

/// Transposed 2x2 stride-2 convolution as a scatter from every input pixel.
pub fn deconv2d_ref(input: &Tensor, p: &Deconv2d) -> Tensor {
    let s = input.shape();
    let (ho, wo) = (2 * s.height, 2 * s.width);
    let mut acc = vec![0f64; p.out_depth * ho * wo];
    for ic in 0..p.in_depth {
        for y in 0..s.height {
            for x in 0..s.width {
                let v = input.get(ic, y, x) as f64;
                for oc in 0..p.out_depth {
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let w = p.weight[((ic * p.out_depth + oc) * 2 + dy) * 2 + dx] as f64;
                            acc[(oc * ho + 2 * y + dy) * wo + 2 * x + dx] += w * v;
                        }
                    }
                }
            }
        }
    }
    let data = acc
        .iter()
        .enumerate()
        .map(|(i, a)| (a + p.bias.as_ref().map_or(0.0, |b| b[i / (ho * wo)] as f64)) as f32)
        .collect();
    Tensor::from_vec((p.out_depth, ho, wo), data).unwrap()
}

/// Central differences of `f` with respect to every element of `x`,
/// perturbing one element at a time. The divisor is the difference of the
/// perturbed values after rounding to `f32`.
pub fn finite_difference(x: &Tensor, h: f64, f: impl Fn(&Tensor) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.data().len())
        .map(|i| {
            let x0 = x.data()[i];
            let (a, b) = ((x0 as f64 + h) as f32, (x0 as f64 - h) as f32);
            probe.data_mut()[i] = a;
            let up = f(&probe);
            probe.data_mut()[i] = b;
            let down = f(&probe);
            probe.data_mut()[i] = x0;
            (up - down) / (a as f64 - b as f64)
        })
        .collect()
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
