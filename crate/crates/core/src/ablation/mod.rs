//! Region masking, grayscale conversion, the resolution ladder and
//! normalized pupil size.

mod mask;
mod resample;

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use mask::{apply_ablation, rasterize_ellipse, Mask};
pub use resample::{
    area_downsample, area_downsample_plane, bilinear_antialias_resize, resolution_ladder,
    Plane, DEFAULT_LADDER, MODEL_INPUT_SIZE,
};

/// Axis-aligned ellipse in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl Ellipse {
    pub fn new(cx: f64, cy: f64, width: f64, height: f64) -> Self {
        Ellipse { cx, cy, width, height }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = (x - self.cx) / (self.width / 2.0);
        let dy = (y - self.cy) / (self.height / 2.0);
        dx * dx + dy * dy <= 1.0
    }

    /// Mean of width and height.
    pub fn size(&self) -> f64 {
        (self.width + self.height) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseAnnotation {
    pub pupil: Ellipse,
    pub iris: Ellipse,
}

impl EllipseAnnotation {
    pub fn validate(&self) -> Result<()> {
        for (name, e) in [("pupil", &self.pupil), ("iris", &self.iris)] {
            if !(e.width > 0.0 && e.height > 0.0 && e.cx.is_finite() && e.cy.is_finite()) {
                return Err(Error::invalid(format!("{name} ellipse needs positive width and height")));
            }
        }
        if !self.iris.contains(self.pupil.cx, self.pupil.cy) {
            return Err(Error::invalid("pupil center lies outside the iris ellipse"));
        }
        Ok(())
    }

    /// Pupil size over iris size, each the mean of the ellipse's width and height.
    pub fn normalized_pupil_size(&self) -> Result<f64> {
        normalized_pupil_size(self)
    }
}

pub fn normalized_pupil_size(annotation: &EllipseAnnotation) -> Result<f64> {
    let iris = annotation.iris.size();
    if !(iris > 0.0) {
        return Err(Error::invalid("iris size must be positive"));
    }
    Ok(annotation.pupil.size() / iris)
}

/// 8-bit RGB image, row-major, interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if data.len() != width as usize * height as usize * 3 {
            return Err(Error::invalid(format!(
                "expected {} bytes for {width}x{height} RGB, got {}",
                width as usize * height as usize * 3,
                data.len()
            )));
        }
        Ok(RasterImage { width, height, data })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb.iter().copied().cycle().take(width as usize * height as usize * 3).collect();
        RasterImage::new(width, height, data)
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        RasterImage::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        RasterImage::new(w, h, img.into_raw())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf = image::RgbImage::from_raw(self.width, self.height, self.data.clone())
            .expect("buffer length checked on construction");
        buf.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationMode {
    None,
    Gray,
    NoPupil,
    NoIris,
    OnlyPupil,
    OnlyIris,
}

impl AblationMode {
    pub const ALL: [AblationMode; 6] = [
        AblationMode::None,
        AblationMode::Gray,
        AblationMode::NoPupil,
        AblationMode::NoIris,
        AblationMode::OnlyPupil,
        AblationMode::OnlyIris,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::None => "none",
            AblationMode::Gray => "gray",
            AblationMode::NoPupil => "no-pupil",
            AblationMode::NoIris => "no-iris",
            AblationMode::OnlyPupil => "only-pupil",
            AblationMode::OnlyIris => "only-iris",
        }
    }

    pub fn needs_annotation(self) -> bool {
        !matches!(self, AblationMode::None | AblationMode::Gray)
    }
}

impl FromStr for AblationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase().replace('_', "-");
        AblationMode::ALL
            .into_iter()
            .find(|m| m.as_str() == t)
            .ok_or_else(|| Error::invalid(format!("unknown ablation mode `{s}`")))
    }
}

/// Weighted luma with weights 0.2989 / 0.5870 / 0.1140, rounded half-up and
/// replicated into three channels.
pub fn to_grayscale(image: &RasterImage) -> RasterImage {
    let data = image
        .data
        .chunks_exact(3)
        .flat_map(|p| {
            let y = 0.2989 * p[0] as f64 + 0.5870 * p[1] as f64 + 0.1140 * p[2] as f64;
            let g = (y + 0.5).floor().clamp(0.0, 255.0) as u8;
            [g, g, g]
        })
        .collect();
    RasterImage {
        width: image.width,
        height: image.height,
        data,
    }
}
