use rayon::prelude::*;

use super::rectify::{rectify_pair, warp_to_rectified, RectifiedPair};
use super::sgm::{disparity_to_depth, StereoMatcher};
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, PixelPoint};
use crate::grid::Grid;
use crate::rig::{RigCalibration, Side};

/// Metric depth on the original image plane of one camera, valid only
/// where a neighbor's stereo match produced a depth.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthPrior {
    /// z-depth in meters; 0 where invalid.
    pub depth: Grid<f64>,
    pub valid: Grid<bool>,
    /// Camera ids of every pair that contributed, `(left, right)`.
    pub source_pairs: Vec<(String, String)>,
}

impl DepthPrior {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            depth: Grid::new(width, height, 0.0),
            valid: Grid::new(width, height, false),
            source_pairs: Vec::new(),
        }
    }

    /// Merges another prior of the same camera, keeping the nearer depth
    /// where both are valid.
    pub fn merge_min(&mut self, other: &DepthPrior) -> Result<()> {
        self.depth.ensure_same_dims(&other.depth, "depth prior")?;
        for i in 0..self.depth.len() {
            if !other.valid.data()[i] {
                continue;
            }
            let z = other.depth.data()[i];
            if !self.valid.data()[i] || z < self.depth.data()[i] {
                self.depth.data_mut()[i] = z;
                self.valid.data_mut()[i] = true;
            }
        }
        self.source_pairs.extend(other.source_pairs.iter().cloned());
        Ok(())
    }

    /// Depth divided by `max_range`, 0 outside the valid region.
    pub fn normalized(&self, max_range: f64) -> Grid<f32> {
        normalize_prior(self, max_range)
    }
}

/// Depth scaled into `[0, 1]` by `max_range`; invalid pixels are 0.
pub fn normalize_prior(prior: &DepthPrior, max_range: f64) -> Grid<f32> {
    Grid::from_fn(prior.depth.width(), prior.depth.height(), |x, y| {
        if *prior.valid.get(x, y) {
            (prior.depth.get(x, y) / max_range).min(1.0) as f32
        } else {
            0.0
        }
    })
}

/// Relative tolerance for interpolating inverse depth across neighbors.
const CONSISTENCY: f64 = 0.05;

/// Samples inverse depth at a rectified location: bilinear when the four
/// neighbors are valid and agree, otherwise the nearest valid pixel.
fn sample_inverse_depth(depth: &Grid<f64>, mask: &Grid<bool>, u: f64, v: f64) -> Option<f64> {
    let (w, h) = depth.dims();
    if !(u > -0.5 && v > -0.5 && u < w as f64 - 0.5 && v < h as f64 - 0.5) {
        return None;
    }
    let ok = |x: usize, y: usize| *mask.get(x, y) && *depth.get(x, y) > 0.0;
    let (x0, y0) = (u.floor(), v.floor());
    if x0 >= 0.0 && y0 >= 0.0 && (x0 as usize) + 1 < w && (y0 as usize) + 1 < h {
        let (x, y) = (x0 as usize, y0 as usize);
        let taps = [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)];
        if taps.iter().all(|&(a, b)| ok(a, b)) {
            let inv: Vec<f64> = taps.iter().map(|&(a, b)| 1.0 / depth.get(a, b)).collect();
            let (lo, hi) = inv
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
            if hi - lo <= CONSISTENCY * hi {
                let (fx, fy) = (u - x0, v - y0);
                let top = inv[0] * (1.0 - fx) + inv[1] * fx;
                let bottom = inv[2] * (1.0 - fx) + inv[3] * fx;
                return Some(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    let (x, y) = (u.round() as usize, v.round() as usize);
    ok(x, y).then(|| 1.0 / depth.get(x, y))
}

/// Maps rectified depth back onto the original image of `side`. Every
/// original pixel is traced into the rectified image; depth is taken there
/// when the rectified pixel is in the overlap mask and has a depth.
pub fn backproject_prior(
    depth_rect: &Grid<f64>,
    pair: &RectifiedPair,
    side: Side,
    max_range: f64,
    source_pair: (&str, &str),
) -> Result<DepthPrior> {
    let k_rect = &pair.k_rect;
    if depth_rect.dims() != (k_rect.width, k_rect.height) {
        return Err(Error::SizeMismatch(format!(
            "rectified depth {}x{} vs {}x{}",
            depth_rect.width(),
            depth_rect.height(),
            k_rect.width,
            k_rect.height
        )));
    }
    let k = pair.original_intrinsics(side);
    let mask = pair.overlap_mask(side);
    let rows: Vec<Vec<f64>> = (0..k.height)
        .into_par_iter()
        .map(|v| {
            (0..k.width)
                .map(|u| {
                    let Some((rp, rz)) = pair.rectified_pixel(side, &PixelPoint::new(u as f64, v as f64)) else {
                        return 0.0;
                    };
                    let Some(inv) = sample_inverse_depth(depth_rect, mask, rp.u, rp.v) else {
                        return 0.0;
                    };
                    // the original ray has unit z; in the rectified frame its z is rz
                    let z = 1.0 / (inv * rz);
                    if z > 0.0 && z <= max_range {
                        z
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let depth = Grid::from_vec(k.width, k.height, rows.into_iter().flatten().collect())?;
    let valid = depth.map(|z| *z > 0.0);
    Ok(DepthPrior {
        depth,
        valid,
        source_pairs: vec![(source_pair.0.to_string(), source_pair.1.to_string())],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorOptions {
    pub max_range: f64,
    /// Disparity search range used for the overlap masks; should match the
    /// stereo matcher.
    pub max_disp: usize,
    /// Match on 2x2 box-downsampled images and upsample the priors back
    /// with nearest-neighbor interpolation.
    pub half_resolution: bool,
}

impl Default for PriorOptions {
    fn default() -> Self {
        Self {
            max_range: 200.0,
            max_disp: 128,
            half_resolution: false,
        }
    }
}

/// Depth priors of both cameras of one adjacent pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairPrior {
    pub left: usize,
    pub right: usize,
    pub rectified: RectifiedPair,
    pub depth_rect: Grid<f64>,
    pub prior_left: DepthPrior,
    pub prior_right: DepthPrior,
}

/// Rectifies, matches and back-projects one pair of pinhole cameras.
pub fn pair_prior(
    rig: &RigCalibration,
    images: &[Grid<f32>],
    frame: usize,
    (left, right): (usize, usize),
    matcher: &dyn StereoMatcher,
    options: &PriorOptions,
) -> Result<PairPrior> {
    let pinhole = |i: usize| match &rig.cameras[i].model {
        CameraModel::Pinhole(k) => Ok(*k),
        CameraModel::Fisheye(_) => Err(Error::InvalidArgument(format!(
            "camera {} is a fisheye; convert it to virtual pinholes first",
            rig.cameras[i].id
        ))),
    };
    let (kl, kr) = (pinhole(left)?, pinhole(right)?);
    let (il, ir) = (&rig.cameras[left].id, &rig.cameras[right].id);
    let pl = rig.absolute_pose(il, frame)?;
    let pr = rig.absolute_pose(ir, frame)?;
    let rect = rectify_pair((&kl, &pl), (&kr, &pr), options.max_disp)?;
    let (wl, ml) = warp_to_rectified(&images[left], &rect, Side::Left)?;
    let (wr, mr) = warp_to_rectified(&images[right], &rect, Side::Right)?;
    let mut disp = matcher.compute_masked(&wl, &wr, &ml, &mr)?;
    // matches must sit on real image content in both views, away from the
    // unmapped border where the matching window sees filler pixels
    let (ml, mr) = (erode(&ml, MASK_EROSION), erode(&mr, MASK_EROSION));
    let w = disp.values.width();
    for y in 0..disp.values.height() {
        for x in 0..w {
            if !*disp.valid.get(x, y) {
                continue;
            }
            let xr = (x as f64 - disp.values.get(x, y)).round();
            let ok = *ml.get(x, y) && xr >= 0.0 && xr < w as f64 && *mr.get(xr as usize, y);
            disp.valid.set(x, y, ok);
        }
    }
    let depth_rect = disparity_to_depth(&disp, &rect.k_rect, rect.baseline)?;
    let prior_left = backproject_prior(&depth_rect, &rect, Side::Left, options.max_range, (il, ir))?;
    let depth_right = right_depth(&depth_rect, &disp, &rect);
    let prior_right = backproject_prior(&depth_right, &rect, Side::Right, options.max_range, (il, ir))?;
    Ok(PairPrior {
        left,
        right,
        rectified: rect,
        depth_rect,
        prior_left,
        prior_right,
    })
}

const MASK_EROSION: usize = 3;

/// Pixels whose whole `(2r+1)^2` neighborhood is set.
fn erode(mask: &Grid<bool>, r: usize) -> Grid<bool> {
    let (w, h) = mask.dims();
    let horiz = Grid::from_fn(w, h, |x, y| {
        x >= r && x + r < w && (x - r..=x + r).all(|i| *mask.get(i, y))
    });
    Grid::from_fn(w, h, |x, y| {
        y >= r && y + r < h && (y - r..=y + r).all(|j| *horiz.get(x, j))
    })
}

/// Transfers left rectified depth to the right rectified image along the
/// disparity, nearest depth winning on collisions.
fn right_depth(depth_left: &Grid<f64>, disp: &super::sgm::DisparityMap, rect: &RectifiedPair) -> Grid<f64> {
    let (w, h) = depth_left.dims();
    let mut out = Grid::new(w, h, 0.0f64);
    for y in 0..h {
        for x in 0..w {
            let z = *depth_left.get(x, y);
            if z <= 0.0 {
                continue;
            }
            let xr = (x as f64 - disp.values.get(x, y)).round();
            if xr < 0.0 || xr >= w as f64 {
                continue;
            }
            let xr = xr as usize;
            if !*rect.overlap_mask_right.get(xr, y) {
                continue;
            }
            let cur = out.get_mut(xr, y);
            if *cur == 0.0 || z < *cur {
                *cur = z;
            }
        }
    }
    out
}

/// Depth priors of every camera at `frame`. Each adjacent pair in ring order
/// with a non-zero baseline is matched; a camera receiving priors from both
/// neighbors keeps the nearer depth. Images are indexed like `rig.cameras`.
pub fn build_all_priors(
    rig: &RigCalibration,
    images: &[Grid<f32>],
    frame: usize,
    matcher: &dyn StereoMatcher,
    options: &PriorOptions,
) -> Result<Vec<DepthPrior>> {
    rig.validate()?;
    if images.len() != rig.cameras.len() {
        return Err(Error::SizeMismatch(format!(
            "{} images for {} cameras",
            images.len(),
            rig.cameras.len()
        )));
    }
    if options.half_resolution {
        return build_half_resolution(rig, images, frame, matcher, options);
    }
    let pairs: Vec<(usize, usize)> = rig
        .adjacent_pairs()?
        .into_iter()
        .filter(|&(a, b)| {
            let (pa, pb) = (&rig.cameras[a].pose_rel, &rig.cameras[b].pose_rel);
            pa.translation_distance(pb) > 1e-6
        })
        .collect();
    let results: Vec<Result<PairPrior>> = pairs
        .par_iter()
        .map(|&p| pair_prior(rig, images, frame, p, matcher, options))
        .collect();
    let mut priors: Vec<DepthPrior> = rig
        .cameras
        .iter()
        .map(|c| DepthPrior::empty(c.model.width(), c.model.height()))
        .collect();
    for r in results {
        let pp = r?;
        priors[pp.left].merge_min(&pp.prior_left)?;
        priors[pp.right].merge_min(&pp.prior_right)?;
    }
    Ok(priors)
}

fn build_half_resolution(
    rig: &RigCalibration,
    images: &[Grid<f32>],
    frame: usize,
    matcher: &dyn StereoMatcher,
    options: &PriorOptions,
) -> Result<Vec<DepthPrior>> {
    for (img, cam) in images.iter().zip(&rig.cameras) {
        if img.dims() != (cam.model.width(), cam.model.height()) {
            return Err(Error::SizeMismatch(format!(
                "image of camera {} does not match its model",
                cam.id
            )));
        }
    }
    let mut half = rig.clone();
    for cam in &mut half.cameras {
        cam.model = match cam.model {
            CameraModel::Pinhole(k) => CameraModel::Pinhole(k.scaled(0.5)?),
            CameraModel::Fisheye(_) => {
                return Err(Error::InvalidArgument(format!(
                    "camera {} is a fisheye; convert it to virtual pinholes first",
                    cam.id
                )))
            }
        };
    }
    let small: Vec<Grid<f32>> = images
        .iter()
        .zip(&half.cameras)
        .map(|(img, cam)| downsample_half(img, cam.model.width(), cam.model.height()))
        .collect();
    let priors = build_all_priors(
        &half,
        &small,
        frame,
        matcher,
        &PriorOptions {
            half_resolution: false,
            ..*options
        },
    )?;
    Ok(priors
        .into_iter()
        .zip(&rig.cameras)
        .map(|(p, cam)| {
            let (w, h) = (cam.model.width(), cam.model.height());
            let (sw, sh) = p.depth.dims();
            let at = |x: usize, y: usize| (x / 2).min(sw - 1) + (y / 2).min(sh - 1) * sw;
            DepthPrior {
                depth: Grid::from_fn(w, h, |x, y| p.depth.data()[at(x, y)]),
                valid: Grid::from_fn(w, h, |x, y| p.valid.data()[at(x, y)]),
                source_pairs: p.source_pairs,
            }
        })
        .collect())
}

/// 2x2 box filter onto a `w` x `h` grid; source pixels beyond the border
/// are clamped.
fn downsample_half(img: &Grid<f32>, w: usize, h: usize) -> Grid<f32> {
    let (iw, ih) = img.dims();
    Grid::from_fn(w, h, |x, y| {
        let (x0, y0) = ((2 * x).min(iw - 1), (2 * y).min(ih - 1));
        let (x1, y1) = ((2 * x + 1).min(iw - 1), (2 * y + 1).min(ih - 1));
        0.25 * (img.get(x0, y0) + img.get(x1, y0) + img.get(x0, y1) + img.get(x1, y1))
    })
}
