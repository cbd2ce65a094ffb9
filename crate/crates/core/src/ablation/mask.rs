use super::{to_grayscale, AblationMode, Ellipse, EllipseAnnotation, RasterImage};
use crate::error::{Error, Result};

/// Per-pixel membership, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    bits: Vec<bool>,
}

impl Mask {
    fn empty(width: u32, height: u32) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    fn union(&self, other: &Mask) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
        }
    }

    fn minus(&self, other: &Mask) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && !*b).collect(),
        }
    }
}

/// Pixels whose centers `(x + 0.5, y + 0.5)` fall inside the ellipse.
pub fn rasterize_ellipse(ellipse: &Ellipse, width: u32, height: u32) -> Mask {
    let mut mask = Mask::empty(width, height);
    let (rx, ry) = (ellipse.width / 2.0, ellipse.height / 2.0);
    if !(rx > 0.0 && ry > 0.0) {
        return mask;
    }
    let clamp = |v: f64, hi: u32| v.max(0.0).min(hi as f64) as u32;
    let x0 = clamp((ellipse.cx - rx - 1.0).floor(), width);
    let x1 = clamp((ellipse.cx + rx + 1.0).ceil(), width);
    let y0 = clamp((ellipse.cy - ry - 1.0).floor(), height);
    let y1 = clamp((ellipse.cy + ry + 1.0).ceil(), height);
    for y in y0..y1 {
        for x in x0..x1 {
            if ellipse.contains(x as f64 + 0.5, y as f64 + 0.5) {
                mask.bits[y as usize * width as usize + x as usize] = true;
            }
        }
    }
    mask
}

fn black_where(image: &RasterImage, mask: &Mask, invert: bool) -> RasterImage {
    let mut out = image.clone();
    for y in 0..image.height() {
        for x in 0..image.width() {
            if mask.get(x, y) != invert {
                out.set_pixel(x, y, [0, 0, 0]);
            }
        }
    }
    out
}

/// Applies one ablation. The pupil region is the pupil-ellipse interior; the
/// iris region is the iris-ellipse interior minus the pupil region. `NoIris`
/// blacks the whole iris ellipse (pupil included); `OnlyIris` keeps only the
/// annulus.
pub fn apply_ablation(
    image: &RasterImage,
    annotation: Option<&EllipseAnnotation>,
    mode: AblationMode,
) -> Result<RasterImage> {
    match mode {
        AblationMode::None => return Ok(image.clone()),
        AblationMode::Gray => return Ok(to_grayscale(image)),
        _ => {}
    }
    let ann = annotation.ok_or_else(|| {
        Error::invalid(format!("ablation mode {} needs a pupil/iris annotation", mode.as_str()))
    })?;
    let (w, h) = (image.width(), image.height());
    let pupil = rasterize_ellipse(&ann.pupil, w, h);
    let iris_full = rasterize_ellipse(&ann.iris, w, h);
    Ok(match mode {
        AblationMode::NoPupil => black_where(image, &pupil, false),
        AblationMode::NoIris => black_where(image, &iris_full.union(&pupil), false),
        AblationMode::OnlyPupil => black_where(image, &pupil, true),
        AblationMode::OnlyIris => black_where(image, &iris_full.minus(&pupil), true),
        AblationMode::None | AblationMode::Gray => unreachable!(),
    })
}
