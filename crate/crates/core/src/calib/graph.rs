use std::collections::{BTreeMap, HashMap};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::PixelPoint;
use crate::rig::RigCalibration;

/// One image of the sequence: camera index into the rig and frame number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ViewId {
    pub camera: usize,
    pub frame: usize,
}

impl ViewId {
    pub const fn new(camera: usize, frame: usize) -> Self {
        Self { camera, frame }
    }
}

/// Unordered pair of views, stored with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ViewPair {
    pub a: ViewId,
    pub b: ViewId,
}

impl ViewPair {
    pub fn new(x: ViewId, y: ViewId) -> Self {
        if x <= y {
            Self { a: x, b: y }
        } else {
            Self { a: y, b: x }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub view: ViewId,
    pub landmark: usize,
    pub pixel: PixelPoint,
}

/// Geometrically verified matches between two views.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMatches {
    pub pair: ViewPair,
    /// `(pixel in pair.a, pixel in pair.b)`
    pub matches: Vec<(PixelPoint, PixelPoint)>,
}

/// Observations of triangulated landmarks across the sequence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceGraph {
    pub observations: Vec<Observation>,
    /// World positions indexed by landmark id.
    pub landmarks: Vec<Vector3<f64>>,
    /// Match count for every adjacent-camera view pair that contributed.
    pub pair_counts: BTreeMap<ViewPair, usize>,
}

impl CorrespondenceGraph {
    pub fn num_landmarks(&self) -> usize {
        self.landmarks.len()
    }

    pub fn observations_per_landmark(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.landmarks.len()];
        for o in &self.observations {
            counts[o.landmark] += 1;
        }
        counts
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(o) = self.observations.iter().find(|o| o.landmark >= self.landmarks.len()) {
            return Err(Error::InvalidArgument(format!(
                "observation of unknown landmark {}",
                o.landmark
            )));
        }
        if let Some(i) = self.observations_per_landmark().iter().position(|&c| c < 2) {
            return Err(Error::InvalidArgument(format!(
                "landmark {i} has fewer than two observations"
            )));
        }
        Ok(())
    }

    /// Recomputes `pair_counts` from co-observations: every landmark seen in
    /// two views of adjacent (distinct) cameras adds one to that pair.
    pub fn recount_pairs(&mut self, adjacent: impl Fn(usize, usize) -> bool) {
        self.pair_counts.clear();
        for obs in self.by_landmark().values() {
            for (i, x) in obs.iter().enumerate() {
                for y in &obs[i + 1..] {
                    let (va, vb) = (self.observations[*x].view, self.observations[*y].view);
                    if va.camera != vb.camera && adjacent(va.camera, vb.camera) {
                        *self.pair_counts.entry(ViewPair::new(va, vb)).or_default() += 1;
                    }
                }
            }
        }
    }

    fn by_landmark(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, o) in self.observations.iter().enumerate() {
            map.entry(o.landmark).or_default().push(i);
        }
        map
    }

    /// Drops view pairs with fewer than `beta` matches. An observation
    /// survives while at least one surviving pair links it to another
    /// observation of the same landmark; landmarks left with fewer than two
    /// observations are removed and ids compacted.
    pub fn apply_beta(&mut self, beta: usize) {
        self.pair_counts.retain(|_, c| *c >= beta);
        let survivors = &self.pair_counts;
        let mut keep = vec![false; self.observations.len()];
        for obs in self.by_landmark().values() {
            for (i, x) in obs.iter().enumerate() {
                for y in &obs[i + 1..] {
                    let pair = ViewPair::new(self.observations[*x].view, self.observations[*y].view);
                    if survivors.contains_key(&pair) {
                        keep[*x] = true;
                        keep[*y] = true;
                    }
                }
            }
        }
        let mut idx = 0;
        self.observations.retain(|_| {
            idx += 1;
            keep[idx - 1]
        });
        self.compact();
    }

    /// Removes landmarks with fewer than two observations and renumbers.
    pub fn compact(&mut self) {
        let counts = self.observations_per_landmark();
        let mut remap = vec![usize::MAX; self.landmarks.len()];
        let mut landmarks = Vec::new();
        for (i, c) in counts.iter().enumerate() {
            if *c >= 2 {
                remap[i] = landmarks.len();
                landmarks.push(self.landmarks[i]);
            }
        }
        self.observations.retain(|o| remap[o.landmark] != usize::MAX);
        for o in &mut self.observations {
            o.landmark = remap[o.landmark];
        }
        self.landmarks = landmarks;
    }

    /// Keeps only observations from the given cameras.
    pub fn restrict_to_cameras(&self, cameras: &[usize]) -> CorrespondenceGraph {
        let mut g = CorrespondenceGraph {
            observations: self
                .observations
                .iter()
                .filter(|o| cameras.contains(&o.view.camera))
                .copied()
                .collect(),
            landmarks: self.landmarks.clone(),
            pair_counts: self
                .pair_counts
                .iter()
                .filter(|(p, _)| cameras.contains(&p.a.camera) && cameras.contains(&p.b.camera))
                .map(|(p, c)| (*p, *c))
                .collect(),
        };
        g.compact();
        g
    }

    /// Per-coordinate RMS reprojection error under the rig's poses.
    /// Observations that cannot be projected are counted as missing.
    pub fn reprojection_rms(&self, rig: &RigCalibration) -> Result<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for o in &self.observations {
            let cam = &rig.cameras[o.view.camera];
            let pose = rig
                .front_trajectory
                .get(o.view.frame)
                .ok_or_else(|| Error::NotFound(format!("frame {}", o.view.frame)))?
                .compose(&cam.pose_rel);
            let p = pose.inverse_transform_point(&self.landmarks[o.landmark]);
            if let Ok(px) = cam.model.project(&p) {
                sum += (px.u - o.pixel.u).powi(2) + (px.v - o.pixel.v).powi(2);
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::NoValidPixels);
        }
        Ok((sum / (2 * n) as f64).sqrt())
    }
}

/// Merges pairwise matches into multi-view tracks. Pixels are identified
/// by exact coordinates within a view. When a track holds several pixels of
/// one view, the pixel taking part in the most matches is kept; on a tie
/// the view is dropped from the track. Tracks left with fewer than two
/// views are discarded.
pub fn merge_tracks(pairs: &[PairMatches]) -> Vec<Vec<(ViewId, PixelPoint)>> {
    type Key = (ViewId, u64, u64);
    let key = |v: ViewId, p: &PixelPoint| (v, p.u.to_bits(), p.v.to_bits());
    let mut index: HashMap<Key, usize> = HashMap::new();
    let mut nodes: Vec<(ViewId, PixelPoint)> = Vec::new();
    let mut parent: Vec<usize> = Vec::new();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut node = |v: ViewId, p: &PixelPoint, nodes: &mut Vec<(ViewId, PixelPoint)>, parent: &mut Vec<usize>| {
        *index.entry(key(v, p)).or_insert_with(|| {
            nodes.push((v, *p));
            parent.push(parent.len());
            parent.len() - 1
        })
    };
    let mut degree: Vec<usize> = Vec::new();
    for pm in pairs {
        for (pa, pb) in &pm.matches {
            let x = node(pm.pair.a, pa, &mut nodes, &mut parent);
            let y = node(pm.pair.b, pb, &mut nodes, &mut parent);
            degree.resize(nodes.len(), 0);
            degree[x] += 1;
            degree[y] += 1;
            let (rx, ry) = (find(&mut parent, x), find(&mut parent, y));
            if rx != ry {
                parent[rx.max(ry)] = rx.min(ry);
            }
        }
    }
    let mut groups: BTreeMap<usize, BTreeMap<ViewId, Vec<usize>>> = BTreeMap::new();
    for (i, node) in nodes.iter().enumerate() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().entry(node.0).or_default().push(i);
    }
    groups
        .into_values()
        .map(|views| {
            views
                .into_values()
                .filter_map(|cands| {
                    let best = *cands.iter().max_by_key(|&&i| degree[i])?;
                    let ties = cands.iter().filter(|&&i| degree[i] == degree[best]).count();
                    (ties == 1).then_some(nodes[best])
                })
                .collect::<Vec<_>>()
        })
        .filter(|track| track.len() >= 2)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn px(u: f64, v: f64) -> PixelPoint {
        PixelPoint::new(u, v)
    }

    #[test]
    fn tracks_merge_through_shared_pixels() {
        let (v0, v1, v2) = (ViewId::new(0, 0), ViewId::new(1, 0), ViewId::new(2, 0));
        let pairs = vec![
            PairMatches {
                pair: ViewPair::new(v0, v1),
                matches: vec![(px(1.0, 1.0), px(2.0, 2.0)), (px(5.0, 5.0), px(6.0, 6.0))],
            },
            PairMatches {
                pair: ViewPair::new(v1, v2),
                matches: vec![(px(2.0, 2.0), px(3.0, 3.0))],
            },
        ];
        let mut tracks = merge_tracks(&pairs);
        tracks.sort_by_key(|t| t.len());
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[0].len(), 2);
        assert_eq!(tracks[1].len(), 3);
    }

    #[test]
    fn conflicting_tracks_are_dropped() {
        let (v0, v1) = (ViewId::new(0, 0), ViewId::new(1, 0));
        let pairs = vec![PairMatches {
            pair: ViewPair::new(v0, v1),
            matches: vec![(px(1.0, 1.0), px(2.0, 2.0)), (px(1.0, 1.0), px(9.0, 9.0))],
        }];
        assert!(merge_tracks(&pairs).is_empty());
    }

    #[test]
    fn conflicts_keep_the_best_supported_pixel() {
        let (v0, v1, v2) = (ViewId::new(0, 0), ViewId::new(1, 0), ViewId::new(2, 0));
        let pairs = vec![
            PairMatches {
                pair: ViewPair::new(v0, v1),
                matches: vec![(px(1.0, 1.0), px(2.0, 2.0))],
            },
            PairMatches {
                pair: ViewPair::new(v1, v2),
                matches: vec![(px(2.0, 2.0), px(3.0, 3.0))],
            },
            // outlier: view 2 pixel matched to a wrong pixel of view 0
            PairMatches {
                pair: ViewPair::new(v0, v2),
                matches: vec![(px(8.0, 8.0), px(3.0, 3.0))],
            },
        ];
        let tracks = merge_tracks(&pairs);
        assert_eq!(tracks.len(), 1);
        // view 0 has two candidates with one match each: dropped
        assert_eq!(tracks[0], vec![(v1, px(2.0, 2.0)), (v2, px(3.0, 3.0))]);
        let mut more = pairs.clone();
        more.push(PairMatches {
            pair: ViewPair::new(v0, ViewId::new(3, 0)),
            matches: vec![(px(1.0, 1.0), px(4.0, 4.0))],
        });
        let tracks = merge_tracks(&more);
        assert_eq!(tracks[0].len(), 4);
        assert!(tracks[0].contains(&(v0, px(1.0, 1.0))));
    }

    fn toy_graph() -> CorrespondenceGraph {
        // landmark 0 seen by cameras 0/1 at frame 0, landmark 1 by 1/2 at frame 0
        let obs = [(0, 0), (1, 0), (1, 1), (2, 1)];
        CorrespondenceGraph {
            observations: obs
                .iter()
                .map(|&(c, l)| Observation {
                    view: ViewId::new(c, 0),
                    landmark: l,
                    pixel: px(c as f64, l as f64),
                })
                .collect(),
            landmarks: vec![Vector3::zeros(), Vector3::x()],
            pair_counts: BTreeMap::new(),
        }
    }

    #[test]
    fn beta_filter_drops_small_pairs() {
        let mut g = toy_graph();
        g.recount_pairs(|_, _| true);
        *g.pair_counts
            .get_mut(&ViewPair::new(ViewId::new(0, 0), ViewId::new(1, 0)))
            .unwrap() = 10;
        *g.pair_counts
            .get_mut(&ViewPair::new(ViewId::new(1, 0), ViewId::new(2, 0)))
            .unwrap() = 300;
        g.apply_beta(200);
        assert!(g.pair_counts.values().all(|&c| c >= 200));
        assert_eq!(g.landmarks, vec![Vector3::x()]);
        assert_eq!(g.observations.len(), 2);
        g.validate().unwrap();
    }
}
