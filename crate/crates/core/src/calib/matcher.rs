use super::graph::ViewId;
use crate::error::{Error, Result};
use crate::geometry::PixelPoint;
use crate::grid::Grid;

/// An image handed to a matcher. Matchers that do not look at pixels (the
/// synthetic ground-truth matcher) accept views without an image.
#[derive(Debug, Clone, Copy)]
pub struct View<'a> {
    pub id: ViewId,
    pub image: Option<&'a Grid<f32>>,
}

/// Produces candidate correspondences between two views. Outliers are
/// allowed; geometric verification happens downstream.
pub trait Matcher: Sync {
    fn match_pair(&self, a: &View<'_>, b: &View<'_>) -> Result<Vec<(PixelPoint, PixelPoint)>>;
}

/// Corner detector plus normalized cross-correlation of square patches,
/// keeping mutual best matches that pass a ratio test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchMatcher {
    pub max_corners: usize,
    pub patch_radius: usize,
    pub min_ncc: f32,
    /// A match is kept when `1 - best < ratio * (1 - second best)`.
    pub ratio: f32,
    /// Non-maximum suppression radius.
    pub nms_radius: usize,
}

impl Default for PatchMatcher {
    fn default() -> Self {
        Self {
            max_corners: 400,
            patch_radius: 5,
            min_ncc: 0.8,
            ratio: 0.8,
            nms_radius: 4,
        }
    }
}

struct Keypoint {
    pixel: PixelPoint,
    descriptor: Vec<f32>,
}

impl PatchMatcher {
    fn keypoints(&self, img: &Grid<f32>) -> Vec<Keypoint> {
        let (w, h) = img.dims();
        let border = self.patch_radius.max(3) + 1;
        if w <= 2 * border || h <= 2 * border {
            return Vec::new();
        }
        // Shi-Tomasi response on a 5x5 window of central differences
        let gx = Grid::from_fn(w, h, |x, y| {
            if x == 0 || x + 1 == w {
                0.0
            } else {
                0.5 * (img.get(x + 1, y) - img.get(x - 1, y))
            }
        });
        let gy = Grid::from_fn(w, h, |x, y| {
            if y == 0 || y + 1 == h {
                0.0
            } else {
                0.5 * (img.get(x, y + 1) - img.get(x, y - 1))
            }
        });
        let mut score = Grid::new(w, h, 0.0f32);
        for y in border..h - border {
            for x in border..w - border {
                let (mut sxx, mut syy, mut sxy) = (0.0f32, 0.0f32, 0.0f32);
                for yy in y - 2..=y + 2 {
                    for xx in x - 2..=x + 2 {
                        let (a, b) = (*gx.get(xx, yy), *gy.get(xx, yy));
                        sxx += a * a;
                        syy += b * b;
                        sxy += a * b;
                    }
                }
                let tr = 0.5 * (sxx + syy);
                let det = ((0.5 * (sxx - syy)).powi(2) + sxy * sxy).sqrt();
                score.set(x, y, tr - det);
            }
        }
        let r = self.nms_radius;
        let mut cands = Vec::new();
        for y in border..h - border {
            for x in border..w - border {
                let s = *score.get(x, y);
                if s <= 1.0 {
                    continue;
                }
                let mut is_max = true;
                'nms: for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
                    for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                        let o = *score.get(xx, yy);
                        // ties broken by raster order for determinism
                        if o > s || (o == s && (yy, xx) < (y, x)) {
                            is_max = false;
                            break 'nms;
                        }
                    }
                }
                if is_max {
                    cands.push((s, x, y));
                }
            }
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.2, a.1).cmp(&(b.2, b.1))));
        cands.truncate(self.max_corners);
        let pr = self.patch_radius as isize;
        cands
            .into_iter()
            .filter_map(|(_, x, y)| {
                let mut d = Vec::with_capacity(((2 * pr + 1) * (2 * pr + 1)) as usize);
                for dy in -pr..=pr {
                    for dx in -pr..=pr {
                        d.push(*img.get((x as isize + dx) as usize, (y as isize + dy) as usize));
                    }
                }
                let mean = d.iter().sum::<f32>() / d.len() as f32;
                d.iter_mut().for_each(|v| *v -= mean);
                let norm = d.iter().map(|v| v * v).sum::<f32>().sqrt();
                (norm > 1e-3).then(|| {
                    d.iter_mut().for_each(|v| *v /= norm);
                    Keypoint {
                        pixel: PixelPoint::new(x as f64, y as f64),
                        descriptor: d,
                    }
                })
            })
            .collect()
    }

    fn best_two(query: &Keypoint, pool: &[Keypoint]) -> Option<(usize, f32, f32)> {
        let mut best = (usize::MAX, f32::NEG_INFINITY);
        let mut second = f32::NEG_INFINITY;
        for (j, k) in pool.iter().enumerate() {
            let ncc: f32 = query.descriptor.iter().zip(&k.descriptor).map(|(a, b)| a * b).sum();
            if ncc > best.1 {
                second = best.1;
                best = (j, ncc);
            } else if ncc > second {
                second = ncc;
            }
        }
        (best.0 != usize::MAX).then_some((best.0, best.1, second))
    }
}

impl Matcher for PatchMatcher {
    fn match_pair(&self, a: &View<'_>, b: &View<'_>) -> Result<Vec<(PixelPoint, PixelPoint)>> {
        let (Some(ia), Some(ib)) = (a.image, b.image) else {
            return Err(Error::InvalidArgument("patch matcher needs images".into()));
        };
        let ka = self.keypoints(ia);
        let kb = self.keypoints(ib);
        let mut out = Vec::new();
        for q in &ka {
            let Some((j, best, second)) = Self::best_two(q, &kb) else {
                continue;
            };
            if best < self.min_ncc || (1.0 - best) >= self.ratio * (1.0 - second) {
                continue;
            }
            // mutual check
            match Self::best_two(&kb[j], &ka) {
                Some((back, _, _)) if ka[back].pixel == q.pixel => out.push((q.pixel, kb[j].pixel)),
                _ => {}
            }
        }
        Ok(out)
    }
}
