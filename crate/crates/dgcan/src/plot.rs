//! Prediction overlays and depth visualizations.

use std::fs;
use std::path::{Path, PathBuf};

use dgcan_core::geometry::PlanarGrasp;
use dgcan_core::image::{ColorImage, DepthImage};

use crate::dataset::write_color;
use crate::error::{IoContext, Result};

pub const OVERLAY_FILE: &str = "overlay.png";
pub const DEPTH_VIEW_FILE: &str = "depth_view.png";

/// Linear blue-to-red ramp; scores are clamped to `[0, 1]`.
pub fn score_color(score: f64) -> [u8; 3] {
    let s = if score.is_finite() { score.clamp(0.0, 1.0) } else { 0.0 };
    [(255.0 * s).round() as u8, 0, (255.0 * (1.0 - s)).round() as u8]
}

fn draw_line(img: &mut ColorImage, a: [f64; 2], b: [f64; 2], rgb: [u8; 3]) {
    let steps = (b[0] - a[0]).abs().max((b[1] - a[1]).abs()).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let (x, y) = ((a[0] + t * (b[0] - a[0])).round(), (a[1] + t * (b[1] - a[1])).round());
        if x >= 0.0 && y >= 0.0 && (x as usize) < img.width && (y as usize) < img.height {
            img.set(x as usize, y as usize, rgb);
        }
    }
}

/// Color image with each grasp outlined in its score color. Lower scores
/// are drawn first so the best grasps stay on top.
pub fn overlay(color: &ColorImage, grasps: &[PlanarGrasp]) -> ColorImage {
    let mut img = color.clone();
    let mut order: Vec<&PlanarGrasp> = grasps.iter().collect();
    order.sort_by(|a, b| a.score.unwrap_or(0.0).total_cmp(&b.score.unwrap_or(0.0)));
    for g in order {
        let rgb = score_color(g.score.unwrap_or(0.0));
        let corners = g.corners();
        for i in 0..4 {
            draw_line(&mut img, corners[i], corners[(i + 1) % 4], rgb);
        }
    }
    img
}

/// Grayscale depth, near is bright; holes are black.
pub fn depth_view(depth: &DepthImage) -> ColorImage {
    let valid = || depth.data.iter().copied().filter(|d| d.is_finite() && *d > 0.0);
    let lo = valid().fold(f32::INFINITY, f32::min);
    let hi = valid().fold(f32::NEG_INFINITY, f32::max);
    let span = (hi - lo).max(1e-6);
    let mut img = ColorImage::new(depth.width, depth.height);
    for y in 0..depth.height {
        for x in 0..depth.width {
            let d = depth.get(x, y);
            if d.is_finite() && d > 0.0 {
                let g = (55.0 + 200.0 * (hi - d) / span).round() as u8;
                img.set(x, y, [g, g, g]);
            }
        }
    }
    img
}

/// Write the overlay and depth view into `dir`; returns the files written.
pub fn plot_outputs(color: &ColorImage, depth: &DepthImage, grasps: &[PlanarGrasp], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).at(dir)?;
    let files = vec![dir.join(OVERLAY_FILE), dir.join(DEPTH_VIEW_FILE)];
    write_color(&files[0], &overlay(color, grasps))?;
    write_color(&files[1], &depth_view(depth))?;
    Ok(files)
}
