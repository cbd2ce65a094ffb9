//! Draws a synthetic external eye photo, writes every ablation mode and the
//! resolution ladder as PNGs.
//!
//! Usage: eye_ablation [OUT_DIR]

use std::path::PathBuf;

use eyelab::ablation::{
    apply_ablation, normalized_pupil_size, rasterize_ellipse, resolution_ladder, AblationMode, Ellipse,
    EllipseAnnotation, RasterImage, DEFAULT_LADDER,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "ablation_out".into()));
    std::fs::create_dir_all(&out)?;

    let ann = EllipseAnnotation {
        pupil: Ellipse::new(300.0, 290.0, 90.0, 86.0),
        iris: Ellipse::new(298.0, 292.0, 230.0, 226.0),
    };
    let iris = rasterize_ellipse(&ann.iris, 600, 600);
    let pupil = rasterize_ellipse(&ann.pupil, 600, 600);
    let img = RasterImage::from_fn(600, 600, |x, y| {
        if pupil.get(x, y) {
            [12, 10, 14]
        } else if iris.get(x, y) {
            [70 + (x % 40) as u8, 110, 60 + (y % 30) as u8]
        } else {
            [225, 190 - (y / 8) as u8, 170]
        }
    })?;
    println!("pupil {} px, iris {} px, normalized pupil size {:.3}", pupil.count(), iris.count(), normalized_pupil_size(&ann)?);

    for mode in AblationMode::ALL {
        let path = out.join(format!("{}.png", mode.as_str()));
        apply_ablation(&img, Some(&ann), mode)?.save_png(&path)?;
        println!("wrote {}", path.display());
    }
    for size in DEFAULT_LADDER {
        let path = out.join(format!("ladder_{size}.png"));
        resolution_ladder(&img, size)?.save_png(&path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
