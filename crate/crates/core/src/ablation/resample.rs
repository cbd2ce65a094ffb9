use super::RasterImage;
use crate::error::{Error, Result};

/// Input resolution of the scoring models.
pub const MODEL_INPUT_SIZE: u32 = 587;

pub const DEFAULT_LADDER: [u32; 8] = [587, 300, 150, 75, 37, 18, 9, 5];

/// One channel of real-valued samples, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[y as usize * self.width as usize + x as usize]
    }
}

fn split_planes(img: &RasterImage) -> [Plane; 3] {
    let mut planes: [Plane; 3] = std::array::from_fn(|_| Plane {
        width: img.width(),
        height: img.height(),
        data: Vec::with_capacity(img.width() as usize * img.height() as usize),
    });
    for px in img.data().chunks_exact(3) {
        for c in 0..3 {
            planes[c].data.push(px[c] as f64);
        }
    }
    planes
}

fn quantize(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

fn merge_planes(planes: &[Plane; 3]) -> Result<RasterImage> {
    let n = planes[0].data.len();
    let mut data = Vec::with_capacity(n * 3);
    for i in 0..n {
        for p in planes {
            data.push(quantize(p.data[i]));
        }
    }
    RasterImage::new(planes[0].width, planes[0].height, data)
}

/// Source coverage of each output cell along one axis: `(first index, weights)`.
fn coverage(n_in: u32, n_out: u32) -> Vec<(usize, Vec<f64>)> {
    (0..n_out)
        .map(|o| {
            let lo = (o as f64 * n_in as f64) / n_out as f64;
            let hi = ((o + 1) as f64 * n_in as f64) / n_out as f64;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(n_in as usize);
            let w = (first..last)
                .map(|i| (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0))
                .collect();
            (first, w)
        })
        .collect()
}

/// Area-average resampling: each output pixel is the coverage-weighted mean
/// of the source pixels under its footprint.
pub fn area_downsample_plane(plane: &Plane, out_w: u32, out_h: u32) -> Result<Plane> {
    if out_w == 0 || out_h == 0 || out_w > plane.width || out_h > plane.height {
        return Err(Error::invalid(format!(
            "area downsample to {out_w}x{out_h} from {}x{}",
            plane.width, plane.height
        )));
    }
    let cx = coverage(plane.width, out_w);
    let cy = coverage(plane.height, out_h);
    let mut data = Vec::with_capacity(out_w as usize * out_h as usize);
    for (y0, wy) in &cy {
        for (x0, wx) in &cx {
            let (mut acc, mut total) = (0.0, 0.0);
            for (dy, a) in wy.iter().enumerate() {
                let row = (y0 + dy) * plane.width as usize;
                for (dx, b) in wx.iter().enumerate() {
                    let w = a * b;
                    acc += w * plane.data[row + x0 + dx];
                    total += w;
                }
            }
            data.push(acc / total);
        }
    }
    Ok(Plane { width: out_w, height: out_h, data })
}

pub fn area_downsample(img: &RasterImage, out_w: u32, out_h: u32) -> Result<RasterImage> {
    let planes = split_planes(img);
    let out = [
        area_downsample_plane(&planes[0], out_w, out_h)?,
        area_downsample_plane(&planes[1], out_w, out_h)?,
        area_downsample_plane(&planes[2], out_w, out_h)?,
    ];
    merge_planes(&out)
}

/// Triangle-kernel taps along one axis. Pixel centers sit at half-integers;
/// when shrinking, the kernel widens by the scale factor.
fn triangle_taps(n_in: u32, n_out: u32) -> Vec<(usize, Vec<f64>)> {
    let scale = n_in as f64 / n_out as f64;
    let support = scale.max(1.0);
    (0..n_out)
        .map(|o| {
            let center = (o as f64 + 0.5) * scale - 0.5;
            let first = ((center - support).floor() + 1.0).max(0.0) as usize;
            let last = ((center + support).ceil() as usize).min(n_in as usize - 1);
            let mut w: Vec<f64> = (first..=last)
                .map(|i| (1.0 - (i as f64 - center).abs() / support).max(0.0))
                .collect();
            let sum: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= sum);
            (first, w)
        })
        .collect()
}

/// Separable bilinear resize with antialiasing.
pub fn bilinear_antialias_resize(plane: &Plane, out_w: u32, out_h: u32) -> Result<Plane> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::invalid("resize target must be positive"));
    }
    let tx = triangle_taps(plane.width, out_w);
    let ty = triangle_taps(plane.height, out_h);
    let (iw, ih) = (plane.width as usize, plane.height as usize);
    let mut tmp = vec![0.0; out_w as usize * ih];
    for y in 0..ih {
        let row = &plane.data[y * iw..(y + 1) * iw];
        for (ox, (x0, w)) in tx.iter().enumerate() {
            tmp[y * out_w as usize + ox] = w.iter().enumerate().map(|(k, a)| a * row[x0 + k]).sum();
        }
    }
    let mut data = vec![0.0; out_w as usize * out_h as usize];
    for (oy, (y0, w)) in ty.iter().enumerate() {
        for ox in 0..out_w as usize {
            data[oy * out_w as usize + ox] = w
                .iter()
                .enumerate()
                .map(|(k, a)| a * tmp[(y0 + k) * out_w as usize + ox])
                .sum();
        }
    }
    Ok(Plane { width: out_w, height: out_h, data })
}

/// Area-downsamples to `target_size` square, then upsamples back to the
/// model input size. Values are quantized once, at the end.
pub fn resolution_ladder(img: &RasterImage, target_size: u32) -> Result<RasterImage> {
    let max = img.width().min(img.height());
    if target_size == 0 || target_size > max {
        return Err(Error::invalid(format!(
            "target size {target_size} outside 1..={max} for a {}x{} image",
            img.width(),
            img.height()
        )));
    }
    let planes = split_planes(img);
    let mut out = Vec::with_capacity(3);
    for p in &planes {
        let small = area_downsample_plane(p, target_size, target_size)?;
        out.push(bilinear_antialias_resize(&small, MODEL_INPUT_SIZE, MODEL_INPUT_SIZE)?);
    }
    let out: [Plane; 3] = out.try_into().expect("three channels");
    merge_planes(&out)
}
