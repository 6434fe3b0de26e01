//! Semi-global matching on a census-transform cost.
//!
//! Costs are Hamming distances between 5x5 census signatures (0..=24).
//! Aggregation uses saturating-free `u16` arithmetic: a path cost is bounded
//! by `24 + P2`, so sums over eight paths stay far below `u16::MAX`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::PinholeIntrinsics;
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationPaths {
    /// Left-to-right, right-to-left, top-to-bottom and the two downward
    /// diagonals.
    Five,
    Eight,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgmParams {
    /// Census window side (odd, at most 7).
    pub window: usize,
    pub p1: u16,
    pub p2: u16,
    pub min_disp: i32,
    pub num_disp: usize,
    /// Largest allowed disagreement of the left and right disparity maps.
    pub lr_max_diff: f32,
    /// Percentage by which the best cost must beat every disparity at least
    /// two steps away.
    pub uniqueness_ratio: u32,
    pub paths: AggregationPaths,
    /// Connected regions of similar disparity smaller than this many pixels
    /// are invalidated (0 disables).
    pub speckle_window: usize,
    /// Largest disparity step inside one speckle region.
    pub speckle_range: f64,
}

impl Default for SgmParams {
    fn default() -> Self {
        Self {
            window: 5,
            p1: 10,
            p2: 120,
            min_disp: 0,
            num_disp: 128,
            lr_max_diff: 1.0,
            uniqueness_ratio: 10,
            paths: AggregationPaths::Five,
            speckle_window: 200,
            speckle_range: 2.0,
        }
    }
}

impl SgmParams {
    pub fn max_disp(&self) -> i32 {
        self.min_disp + self.num_disp as i32 - 1
    }
}

/// Disparities on the left rectified image: the match of left pixel `u` is
/// right pixel `u - d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    pub values: Grid<f64>,
    pub valid: Grid<bool>,
}

impl DisparityMap {
    pub fn valid_fraction(&self) -> f64 {
        self.valid.fraction_true()
    }
}

/// Anything that turns a rectified pair into a left disparity map.
pub trait StereoMatcher: Sync {
    fn compute(&self, left: &Grid<f32>, right: &Grid<f32>) -> Result<DisparityMap>;

    /// Like [`StereoMatcher::compute`] with per-image masks of meaningful
    /// content. The default ignores the masks.
    fn compute_masked(
        &self,
        left: &Grid<f32>,
        right: &Grid<f32>,
        _left_mask: &Grid<bool>,
        _right_mask: &Grid<bool>,
    ) -> Result<DisparityMap> {
        self.compute(left, right)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sgm {
    pub params: SgmParams,
}

impl StereoMatcher for Sgm {
    fn compute(&self, left: &Grid<f32>, right: &Grid<f32>) -> Result<DisparityMap> {
        sgm_match(left, right, &self.params)
    }

    fn compute_masked(
        &self,
        left: &Grid<f32>,
        right: &Grid<f32>,
        left_mask: &Grid<bool>,
        right_mask: &Grid<bool>,
    ) -> Result<DisparityMap> {
        Ok(sgm_match_masked(left, right, Some((left_mask, right_mask)), &self.params)?.0)
    }
}

fn census(img: &Grid<f32>, window: usize) -> Vec<u64> {
    let (w, h) = img.dims();
    let r = (window / 2) as i64;
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            (0..w).map(move |x| {
                let c = *img.get(x, y);
                let mut bits = 0u64;
                for dy in -r..=r {
                    for dx in -r..=r {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let n = *img.get(clamp(x as i64 + dx, w), clamp(y as i64 + dy, h));
                        bits = (bits << 1) | u64::from(n < c);
                    }
                }
                bits
            })
        })
        .collect()
}

struct Volume {
    w: usize,
    h: usize,
    d: usize,
    data: Vec<u16>,
}

impl Volume {
    fn idx(&self, x: usize, y: usize) -> usize {
        (y * self.w + x) * self.d
    }

    fn at(&self, x: usize, y: usize) -> &[u16] {
        let i = self.idx(x, y);
        &self.data[i..i + self.d]
    }
}

fn matching_cost(
    cl: &[u64],
    cr: &[u64],
    w: usize,
    h: usize,
    masks: Option<(&[bool], &[bool])>,
    params: &SgmParams,
) -> Volume {
    let d = params.num_disp;
    // cost of a comparison involving masked-out content: flat across
    // disparities, so paths crossing it carry no preference
    let neutral = ((params.window * params.window - 1) / 2) as u16;
    let mut data = vec![0u16; w * h * d];
    data.par_chunks_mut(w * d).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let l = cl[y * w + x];
            let lvalid = masks.is_none_or(|(ml, _)| ml[y * w + x]);
            for k in 0..d {
                // candidates beyond the image compare against the border
                // column: uninformative, but no bias toward any disparity
                let xr = (x as i64 - (params.min_disp + k as i32) as i64).clamp(0, w as i64 - 1) as usize;
                let rvalid = masks.is_none_or(|(_, mr)| mr[y * w + xr]);
                row[x * d + k] = if lvalid && rvalid {
                    (l ^ cr[y * w + xr]).count_ones() as u16
                } else {
                    neutral
                };
            }
        }
    });
    Volume { w, h, d, data }
}

/// One aggregation step: `cur = cost + min(prev[d], prev[d±1] + P1, min + P2) - min`.
fn step(cost: &[u16], prev: &[u16], cur: &mut [u16], p1: u16, p2: u16) {
    let d = cost.len();
    let pmin = *prev.iter().min().unwrap_or(&0);
    let jump = pmin + p2;
    for k in 0..d {
        let mut best = prev[k].min(jump);
        if k > 0 {
            best = best.min(prev[k - 1] + p1);
        }
        if k + 1 < d {
            best = best.min(prev[k + 1] + p1);
        }
        cur[k] = cost[k] + best - pmin;
    }
}

/// Aggregates along direction `(dx, dy)` and adds the result into `sum`.
fn aggregate(cost: &Volume, dx: i64, dy: i64, params: &SgmParams, sum: &mut [u16]) {
    let (w, h, d) = (cost.w, cost.h, cost.d);
    let (p1, p2) = (params.p1, params.p2);
    if dy == 0 {
        sum.par_chunks_mut(w * d).enumerate().for_each(|(y, srow)| {
            let mut prev = vec![0u16; d];
            let mut cur = vec![0u16; d];
            let xs: Vec<usize> = if dx > 0 {
                (0..w).collect()
            } else {
                (0..w).rev().collect()
            };
            for (i, &x) in xs.iter().enumerate() {
                let c = cost.at(x, y);
                if i == 0 {
                    cur.copy_from_slice(c);
                } else {
                    step(c, &prev, &mut cur, p1, p2);
                }
                for (s, v) in srow[x * d..(x + 1) * d].iter_mut().zip(&cur) {
                    *s += *v;
                }
                std::mem::swap(&mut prev, &mut cur);
            }
        });
        return;
    }
    let ys: Vec<usize> = if dy > 0 {
        (0..h).collect()
    } else {
        (0..h).rev().collect()
    };
    let mut prev_row = vec![0u16; w * d];
    let mut cur_row = vec![0u16; w * d];
    for (i, &y) in ys.iter().enumerate() {
        cur_row.par_chunks_mut(d).enumerate().for_each(|(x, cur)| {
            let c = cost.at(x, y);
            let px = x as i64 - dx;
            if i == 0 || px < 0 || px >= w as i64 {
                cur.copy_from_slice(c);
            } else {
                let p = px as usize;
                step(c, &prev_row[p * d..(p + 1) * d], cur, p1, p2);
            }
        });
        let srow = &mut sum[y * w * d..(y + 1) * w * d];
        for (s, v) in srow.iter_mut().zip(&cur_row) {
            *s += *v;
        }
        std::mem::swap(&mut prev_row, &mut cur_row);
    }
}

fn parabola(s: &[u16], k: usize) -> f32 {
    if k == 0 || k + 1 >= s.len() {
        return 0.0;
    }
    let (a, b, c) = (s[k - 1] as f32, s[k] as f32, s[k + 1] as f32);
    let den = a + c - 2.0 * b;
    if den <= 0.0 {
        return 0.0;
    }
    (0.5 * (a - c) / den).clamp(-0.5, 0.5)
}

fn unique(s: &[u16], best: usize, ratio: u32) -> bool {
    let sb = s[best] as u32;
    s.iter()
        .enumerate()
        .all(|(k, &v)| k.abs_diff(best) <= 1 || (v as u32) * (100 - ratio) > sb * 100)
}

/// Left and right disparity maps from one aggregated volume.
pub fn sgm_match_both(left: &Grid<f32>, right: &Grid<f32>, params: &SgmParams) -> Result<(DisparityMap, DisparityMap)> {
    sgm_match_masked(left, right, None, params)
}

/// [`sgm_match_both`] where comparisons touching a pixel outside its
/// image's mask get a flat cost and such pixels are never valid.
pub fn sgm_match_masked(
    left: &Grid<f32>,
    right: &Grid<f32>,
    masks: Option<(&Grid<bool>, &Grid<bool>)>,
    params: &SgmParams,
) -> Result<(DisparityMap, DisparityMap)> {
    if let Some((ml, mr)) = masks {
        if !ml.same_dims(left) || !mr.same_dims(right) {
            return Err(Error::InvalidArgument(
                "stereo masks differ in size from their images".into(),
            ));
        }
    }
    if !left.same_dims(right) {
        return Err(Error::InvalidArgument(format!(
            "stereo images differ in size: {}x{} vs {}x{}",
            left.width(),
            left.height(),
            right.width(),
            right.height()
        )));
    }
    if params.num_disp < 16 {
        return Err(Error::InvalidArgument(format!("num_disp {} < 16", params.num_disp)));
    }
    if params.window.is_multiple_of(2) || !(3..=7).contains(&params.window) {
        return Err(Error::InvalidArgument(format!(
            "census window {} must be odd in 3..=7",
            params.window
        )));
    }
    if params.uniqueness_ratio >= 100 {
        return Err(Error::InvalidArgument("uniqueness ratio must be below 100".into()));
    }
    let (w, h) = left.dims();
    let d = params.num_disp;
    let mask_data = masks.map(|(ml, mr)| (ml.data(), mr.data()));
    let cost = matching_cost(
        &census(left, params.window),
        &census(right, params.window),
        w,
        h,
        mask_data,
        params,
    );
    let mut sum = vec![0u16; w * h * d];
    let mut dirs = vec![(1, 0), (-1, 0), (0, 1), (1, 1), (-1, 1)];
    if params.paths == AggregationPaths::Eight {
        dirs.extend([(0, -1), (1, -1), (-1, -1)]);
    }
    for (dx, dy) in dirs {
        aggregate(&cost, dx, dy, params, &mut sum);
    }
    let s = Volume { w, h, d, data: sum };
    let lo = params.min_disp as f32;
    let hi = params.max_disp() as f32;

    let left_map: Vec<Option<f32>> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let sv = s.at(i % w, i / w);
            let best = argmin(sv.iter().copied());
            unique(sv, best, params.uniqueness_ratio).then(|| (lo + best as f32 + parabola(sv, best)).clamp(lo, hi))
        })
        .collect();
    // right pixel xr matches left pixel xr + disparity
    let right_map: Vec<Option<f32>> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (xr, y) = (i % w, i / w);
            let col: Vec<u16> = (0..d)
                .map(|k| {
                    let xl = xr as i64 + (params.min_disp + k as i32) as i64;
                    if xl >= 0 && (xl as usize) < w {
                        s.at(xl as usize, y)[k]
                    } else {
                        u16::MAX
                    }
                })
                .collect();
            let best = argmin(col.iter().copied());
            (col[best] != u16::MAX && unique(&col, best, params.uniqueness_ratio))
                .then(|| (lo + best as f32 + parabola(&col, best)).clamp(lo, hi))
        })
        .collect();

    let check = |own: &[Option<f32>], other: &[Option<f32>], own_mask: Option<&[bool]>, sign: f32| -> DisparityMap {
        let mut values = Grid::new(w, h, 0.0f64);
        let mut valid = Grid::new(w, h, false);
        // census signatures within `border` of the edge see replicated pixels
        let border = params.window / 2;
        for y in border..h.saturating_sub(border) {
            for x in border..w.saturating_sub(border) {
                let Some(dv) = own[y * w + x] else { continue };
                if !own_mask.is_none_or(|m| m[y * w + x]) {
                    continue;
                }
                let xo = (x as f32 - sign * dv).round();
                if xo < border as f32 || xo >= (w - border) as f32 {
                    continue;
                }
                if let Some(od) = other[y * w + xo as usize] {
                    if (od - dv).abs() <= params.lr_max_diff {
                        values.set(x, y, f64::from(dv));
                        valid.set(x, y, true);
                    }
                }
            }
        }
        DisparityMap { values, valid }
    };
    let mut l = check(&left_map, &right_map, mask_data.map(|m| m.0), 1.0);
    let mut r = check(&right_map, &left_map, mask_data.map(|m| m.1), -1.0);
    remove_speckles(&mut l, params.speckle_window, params.speckle_range);
    remove_speckles(&mut r, params.speckle_window, params.speckle_range);
    Ok((l, r))
}

/// Invalidates 4-connected regions smaller than `window` pixels, where
/// neighbors belong to one region when their disparities differ by at most
/// `range`.
fn remove_speckles(map: &mut DisparityMap, window: usize, range: f64) {
    if window == 0 {
        return;
    }
    let (w, h) = map.values.dims();
    let mut label = vec![u32::MAX; w * h];
    let mut next = 0u32;
    let mut stack = Vec::new();
    let mut region = Vec::new();
    for start in 0..w * h {
        if !map.valid.data()[start] || label[start] != u32::MAX {
            continue;
        }
        region.clear();
        stack.push(start);
        label[start] = next;
        while let Some(i) = stack.pop() {
            region.push(i);
            let (x, y) = (i % w, i / w);
            let d = map.values.data()[i];
            let mut visit = |j: usize| {
                if map.valid.data()[j] && label[j] == u32::MAX && (map.values.data()[j] - d).abs() <= range {
                    label[j] = next;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if region.len() < window {
            for &i in &region {
                map.valid.data_mut()[i] = false;
                map.values.data_mut()[i] = 0.0;
            }
        }
        next += 1;
    }
}

fn argmin(it: impl Iterator<Item = u16>) -> usize {
    let mut best = (0usize, u16::MAX);
    for (k, v) in it.enumerate() {
        if v < best.1 {
            best = (k, v);
        }
    }
    best.0
}

/// Disparity of the left rectified image.
pub fn sgm_match(left: &Grid<f32>, right: &Grid<f32>, params: &SgmParams) -> Result<DisparityMap> {
    Ok(sgm_match_both(left, right, params)?.0)
}

/// `Z = fx * baseline / d` on valid pixels with `d > 0`; other pixels are 0.
pub fn disparity_to_depth(disp: &DisparityMap, k_rect: &PinholeIntrinsics, baseline: f64) -> Result<Grid<f64>> {
    if !(baseline > 0.0) {
        return Err(Error::InvalidArgument(format!("baseline {baseline} must be positive")));
    }
    let (w, h) = disp.values.dims();
    Ok(Grid::from_fn(w, h, |x, y| {
        let d = *disp.values.get(x, y);
        if *disp.valid.get(x, y) && d > 0.0 {
            k_rect.fx * baseline / d
        } else {
            0.0
        }
    }))
}

/// Inverse of [`disparity_to_depth`]; non-positive depths become invalid.
pub fn depth_to_disparity(depth: &Grid<f64>, k_rect: &PinholeIntrinsics, baseline: f64) -> Result<DisparityMap> {
    if !(baseline > 0.0) {
        return Err(Error::InvalidArgument(format!("baseline {baseline} must be positive")));
    }
    let valid = depth.map(|z| *z > 0.0 && z.is_finite());
    let disp = Grid::from_fn(depth.width(), depth.height(), |x, y| {
        if *valid.get(x, y) {
            k_rect.fx * baseline / *depth.get(x, y)
        } else {
            0.0
        }
    });
    Ok(DisparityMap { values: disp, valid })
}
