use nalgebra::Vector3;
use rayon::prelude::*;

use super::scene::SyntheticScene;
use crate::geometry::{CameraModel, PixelPoint, Pose};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    /// Sub-samples per pixel side for the intensity image (depth always
    /// uses the pixel-center ray).
    pub supersample: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { supersample: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub image: Grid<f32>,
    /// z-depth for pinhole cameras, range for fisheye cameras; 0 where the
    /// ray misses the scene or leaves the lens field of view.
    pub depth: Grid<f64>,
}

/// Camera-frame ray for a pixel such that the ray parameter of a hit equals
/// the stored depth (z = 1 for pinhole, unit length for fisheye).
fn depth_ray(model: &CameraModel, px: &PixelPoint) -> Option<Vector3<f64>> {
    model.pixel_ray(px).ok()
}

/// Ray-casts the scene. Output is independent of the thread count.
pub fn render(scene: &SyntheticScene, model: &CameraModel, pose: &Pose, options: &RenderOptions) -> Rendered {
    let (w, h) = (model.width(), model.height());
    let ss = options.supersample.max(1);
    let origin = pose.translation;
    let rows: Vec<(Vec<f32>, Vec<f64>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut img_row = Vec::with_capacity(w);
            let mut depth_row = Vec::with_capacity(w);
            for x in 0..w {
                let center = PixelPoint::new(x as f64, y as f64);
                let depth = depth_ray(model, &center)
                    .and_then(|r| scene.intersect(&origin, &pose.transform_vector(&r)))
                    .map_or(0.0, |hit| hit.t);
                let mut acc = 0.0f64;
                let mut n = 0usize;
                for sy in 0..ss {
                    for sx in 0..ss {
                        let px = PixelPoint::new(
                            x as f64 - 0.5 + (sx as f64 + 0.5) / ss as f64,
                            y as f64 - 0.5 + (sy as f64 + 0.5) / ss as f64,
                        );
                        let Some(r) = depth_ray(model, &px) else { continue };
                        if let Some(hit) = scene.intersect(&origin, &pose.transform_vector(&r)) {
                            acc += scene.intensity(&hit.point) as f64;
                            n += 1;
                        }
                    }
                }
                img_row.push(if n > 0 { (acc / n as f64) as f32 } else { 0.0 });
                depth_row.push(depth);
            }
            (img_row, depth_row)
        })
        .collect();
    let mut image = Vec::with_capacity(w * h);
    let mut depth = Vec::with_capacity(w * h);
    for (i, d) in rows {
        image.extend(i);
        depth.extend(d);
    }
    Rendered {
        image: Grid::from_vec(w, h, image).expect("sized"),
        depth: Grid::from_vec(w, h, depth).expect("sized"),
    }
}

/// Renders isotropic Gaussian dots of standard deviation `sigma_px` at the
/// projections of `points`, for geometric warping checks.
pub fn render_dots(
    model: &CameraModel,
    pose: &Pose,
    points: &[Vector3<f64>],
    sigma_px: f64,
    amplitude: f32,
) -> Grid<f32> {
    let (w, h) = (model.width(), model.height());
    let mut img = Grid::new(w, h, 0.0f32);
    let reach = (4.0 * sigma_px).ceil() as i64;
    for p in points {
        let Some(px) = model.project_visible(&pose.inverse_transform_point(p)) else {
            continue;
        };
        let (cx, cy) = (px.u.round() as i64, px.v.round() as i64);
        for y in (cy - reach).max(0)..=(cy + reach).min(h as i64 - 1) {
            for x in (cx - reach).max(0)..=(cx + reach).min(w as i64 - 1) {
                let d2 = (x as f64 - px.u).powi(2) + (y as f64 - px.v).powi(2);
                let val = amplitude as f64 * (-0.5 * d2 / (sigma_px * sigma_px)).exp();
                *img.get_mut(x as usize, y as usize) += val as f32;
            }
        }
    }
    img
}
