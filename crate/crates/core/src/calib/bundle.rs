//! Levenberg-Marquardt bundle adjustment over the front-camera trajectory,
//! the relative camera poses and the landmark positions.
//!
//! Residuals are `pi(K_m, X_front(t) * X_rel(m), q_i) - q_obs` for every
//! observation, robustified with a Huber kernel on the residual norm. All
//! cameras share the trajectory and every relative pose appears in residuals
//! shared with both ring neighbors, which closes the loop around the rig.
//!
//! Gauge: the first trajectory pose is frozen. Scale is frozen either by the
//! trajectory displacement between the first and last frame or by the norm
//! of one reference relative translation (see [`ScaleGauge`]). Constrained
//! translations are updated on a sphere through a two-dimensional tangent
//! basis.
//!
//! Landmarks are eliminated with the Schur complement; the reduced camera
//! system is solved densely. Accumulation order is fixed, so results are
//! bit-reproducible.

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Matrix3x2, SMatrix, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::graph::{CorrespondenceGraph, Observation};
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, PixelPoint, Pose};
use crate::rig::RigCalibration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleGauge {
    /// Freeze the distance travelled by the front camera between the first
    /// and last frame. Falls back to `ReferenceBaseline` when the front
    /// camera does not move.
    FrontTrajectory,
    /// Freeze the norm of the relative translation of the first camera after
    /// the front camera in ring order.
    ReferenceBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BundleConfig {
    /// Iteration cap; reaching it without convergence fails the
    /// iteration gate.
    pub max_iterations: usize,
    /// Largest accepted change of any relative translation, meters.
    pub alpha_m: f64,
    pub huber_delta_px: f64,
    /// Minimum match count per view pair.
    pub beta: usize,
    pub scale_gauge: ScaleGauge,
    pub function_tolerance: f64,
    pub gradient_tolerance: f64,
    pub parameter_tolerance: f64,
}

impl Default for BundleConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            alpha_m: 0.3,
            huber_delta_px: 2.0,
            beta: 200,
            scale_gauge: ScaleGauge::FrontTrajectory,
            function_tolerance: 1e-6,
            gradient_tolerance: 1e-10,
            parameter_tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GateResults {
    pub beta: bool,
    pub iterations: bool,
    pub alpha: bool,
}

impl GateResults {
    pub fn all_pass(&self) -> bool {
        self.beta && self.iterations && self.alpha
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub converged: bool,
    pub iterations: usize,
    /// Per-coordinate RMS reprojection error, pixels.
    pub initial_rms: f64,
    pub final_rms: f64,
    pub gates: GateResults,
    pub accepted: bool,
    /// Largest change of a relative translation, meters.
    pub max_translation_change_m: f64,
    pub num_observations: usize,
    pub num_landmarks: usize,
    /// Observations dropped by the outlier pass before the final run.
    pub outliers_removed: usize,
    /// Why the calibration was rejected before or during optimization.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleResult {
    /// Optimized calibration (returned even when not accepted).
    pub calibration: RigCalibration,
    pub landmarks: Vec<Vector3<f64>>,
    pub report: CalibrationReport,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BlockKind {
    Free,
    FixedNorm { center: Vector3<f64>, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Block {
    offset: usize,
    kind: BlockKind,
}

impl Block {
    fn dim(&self) -> usize {
        match self.kind {
            BlockKind::Free => 6,
            BlockKind::FixedNorm { .. } => 5,
        }
    }
}

#[derive(Debug, Clone)]
struct Layout {
    front: Vec<Option<Block>>,
    rel: Vec<Option<Block>>,
    num_params: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct State {
    pub front: Vec<Pose>,
    pub rel: Vec<Pose>,
    pub landmarks: Vec<Vector3<f64>>,
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Orthonormal basis of the plane orthogonal to `d`.
fn tangent_basis(d: &Vector3<f64>) -> Matrix3x2<f64> {
    let n = d.normalize();
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let b1 = n.cross(&helper).normalize();
    let b2 = n.cross(&b1);
    Matrix3x2::from_columns(&[b1, b2])
}

fn project_raw(model: &CameraModel, p: &Vector3<f64>) -> Option<PixelPoint> {
    match model {
        CameraModel::Pinhole(k) => {
            (p.z > 1e-9).then(|| PixelPoint::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
        }
        CameraModel::Fisheye(m) => {
            let rho = p.x.hypot(p.y);
            let phi = rho.atan2(p.z);
            if phi > std::f64::consts::PI - 1e-6 {
                return None;
            }
            if rho == 0.0 {
                return Some(PixelPoint::new(m.cx, m.cy));
            }
            let r = m.f * phi;
            Some(PixelPoint::new(m.cx + r * p.x / rho, m.cy + r * p.y / rho))
        }
    }
}

/// Linearized observation: residual plus Jacobian blocks.
#[derive(Debug, Clone)]
pub(crate) struct ObsLin {
    pub residual: Vector2<f64>,
    /// `(param offset, dim, jacobian)`; only the first `dim` columns used.
    pub blocks: Vec<(usize, usize, SMatrix<f64, 2, 6>)>,
    pub landmark_jac: Matrix2x3<f64>,
}

fn pose_block_jac(
    block: &Block,
    t: &Vector3<f64>,
    drot: Matrix3<f64>,
    dtrans: Matrix3<f64>,
    jpi: &Matrix2x3<f64>,
) -> SMatrix<f64, 2, 6> {
    let mut j = SMatrix::<f64, 2, 6>::zeros();
    j.fixed_view_mut::<2, 3>(0, 0).copy_from(&(jpi * drot));
    match block.kind {
        BlockKind::Free => j.fixed_view_mut::<2, 3>(0, 3).copy_from(&(jpi * dtrans)),
        BlockKind::FixedNorm { center, .. } => {
            let b = tangent_basis(&(t - center));
            j.fixed_view_mut::<2, 2>(0, 3).copy_from(&(jpi * dtrans * b));
        }
    }
    j
}

struct Problem<'a> {
    models: Vec<CameraModel>,
    observations: &'a [Observation],
    layout: Layout,
    huber: f64,
}

impl Problem<'_> {
    fn project(&self, state: &State, o: &Observation) -> Option<(Vector3<f64>, Vector3<f64>, PixelPoint)> {
        let f = &state.front[o.view.frame];
        let e = &state.rel[o.view.camera];
        let a = f.inverse_transform_point(&state.landmarks[o.landmark]);
        let p = e.inverse_transform_point(&a);
        let px = project_raw(&self.models[o.view.camera], &p)?;
        Some((a, p, px))
    }

    pub(crate) fn linearize(&self, state: &State, o: &Observation) -> Option<ObsLin> {
        let (a, p, px) = self.project(state, o)?;
        let residual = Vector2::new(px.u - o.pixel.u, px.v - o.pixel.v);
        let jpi = self.models[o.view.camera].project_jacobian(&p);
        let f = &state.front[o.view.frame];
        let e = &state.rel[o.view.camera];
        let rf_t = f.rotation_matrix().transpose();
        let re_t = e.rotation_matrix().transpose();
        let dq = re_t * rf_t;
        let mut blocks = Vec::with_capacity(2);
        if let Some(b) = &self.layout.front[o.view.frame] {
            let j = pose_block_jac(b, &f.translation, re_t * skew(&a), -dq, &jpi);
            blocks.push((b.offset, b.dim(), j));
        }
        if let Some(b) = &self.layout.rel[o.view.camera] {
            let j = pose_block_jac(b, &e.translation, skew(&p), -re_t, &jpi);
            blocks.push((b.offset, b.dim(), j));
        }
        Some(ObsLin {
            residual,
            blocks,
            landmark_jac: jpi * dq,
        })
    }

    fn huber_cost(&self, e: f64) -> f64 {
        if e <= self.huber {
            0.5 * e * e
        } else {
            self.huber * (e - 0.5 * self.huber)
        }
    }

    fn huber_weight(&self, e: f64) -> f64 {
        if e <= self.huber {
            1.0
        } else {
            self.huber / e
        }
    }

    /// Robust cost, or `None` if any observation cannot be projected.
    fn cost(&self, state: &State) -> Option<f64> {
        let mut c = 0.0;
        for o in self.observations {
            let (_, _, px) = self.project(state, o)?;
            c += self.huber_cost((px.u - o.pixel.u).hypot(px.v - o.pixel.v));
        }
        Some(c)
    }

    fn rms(&self, state: &State) -> f64 {
        let mut s = 0.0;
        for o in self.observations {
            if let Some((_, _, px)) = self.project(state, o) {
                s += (px.u - o.pixel.u).powi(2) + (px.v - o.pixel.v).powi(2);
            }
        }
        (s / (2 * self.observations.len().max(1)) as f64).sqrt()
    }

    pub(crate) fn apply(&self, state: &State, dcam: &DVector<f64>, dland: &[Vector3<f64>]) -> State {
        let update = |pose: &Pose, block: &Option<Block>| -> Pose {
            let Some(b) = block else { return *pose };
            let d = dcam.rows(b.offset, b.dim());
            let omega = Vector3::new(d[0], d[1], d[2]);
            let rot = pose.rotation * UnitQuaternion::from_scaled_axis(omega);
            let t = match b.kind {
                BlockKind::Free => pose.translation + Vector3::new(d[3], d[4], d[5]),
                BlockKind::FixedNorm { center, radius } => {
                    let rel = pose.translation - center;
                    let moved = rel + tangent_basis(&rel) * nalgebra::Vector2::new(d[3], d[4]);
                    center + moved.normalize() * radius
                }
            };
            Pose::new(rot, t)
        };
        State {
            front: state
                .front
                .iter()
                .zip(&self.layout.front)
                .map(|(p, b)| update(p, b))
                .collect(),
            rel: state
                .rel
                .iter()
                .zip(&self.layout.rel)
                .map(|(p, b)| update(p, b))
                .collect(),
            landmarks: state.landmarks.iter().zip(dland).map(|(l, d)| l + d).collect(),
        }
    }
}

/// Normal equations in Schur-complement form.
struct System {
    reduced: DMatrix<f64>,
    rhs: DVector<f64>,
    v_inv: Vec<Matrix3<f64>>,
    /// Per landmark: `(offset, dim, W block)` with W = J_c^T J_l.
    w: Vec<Vec<(usize, usize, SMatrix<f64, 6, 3>)>>,
    g_land: Vec<Vector3<f64>>,
    grad_max: f64,
}

fn build_system(problem: &Problem<'_>, lins: &[(usize, ObsLin)], num_landmarks: usize, lambda: f64) -> Option<System> {
    let np = problem.layout.num_params;
    let mut u = DMatrix::<f64>::zeros(np, np);
    let mut g_cam = DVector::<f64>::zeros(np);
    let mut v = vec![Matrix3::<f64>::zeros(); num_landmarks];
    let mut g_land = vec![Vector3::<f64>::zeros(); num_landmarks];
    let mut w: Vec<Vec<(usize, usize, SMatrix<f64, 6, 3>)>> = vec![Vec::new(); num_landmarks];
    for (landmark, lin) in lins {
        let weight = problem.huber_weight(lin.residual.norm());
        let jl = &lin.landmark_jac;
        v[*landmark] += weight * jl.transpose() * jl;
        g_land[*landmark] += weight * jl.transpose() * lin.residual;
        for (bi, (oi, di, ji)) in lin.blocks.iter().enumerate() {
            let ji = ji.columns(0, *di);
            let gi = weight * ji.transpose() * lin.residual;
            for k in 0..*di {
                g_cam[oi + k] += gi[k];
            }
            for (oj, dj, jj) in lin.blocks.iter().skip(bi) {
                let jj = jj.columns(0, *dj);
                let block = weight * ji.transpose() * jj;
                for r in 0..*di {
                    for c in 0..*dj {
                        u[(oi + r, oj + c)] += block[(r, c)];
                        if oj != oi {
                            u[(oj + c, oi + r)] += block[(r, c)];
                        }
                    }
                }
            }
            let wb = weight * ji.transpose() * jl;
            let entry = match w[*landmark].iter_mut().find(|(o, _, _)| o == oi) {
                Some(e) => e,
                None => {
                    w[*landmark].push((*oi, *di, SMatrix::zeros()));
                    w[*landmark].last_mut().unwrap()
                }
            };
            for r in 0..*di {
                for c in 0..3 {
                    entry.2[(r, c)] += wb[(r, c)];
                }
            }
        }
    }
    let grad_max = g_cam
        .iter()
        .chain(g_land.iter().flat_map(|g| g.iter()))
        .fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..np {
        let d = u[(i, i)];
        u[(i, i)] = d + lambda * d.max(1e-9);
    }
    let mut v_inv = Vec::with_capacity(num_landmarks);
    for vi in &v {
        let mut damped = *vi;
        let tr = vi.trace().max(1e-12);
        for k in 0..3 {
            damped[(k, k)] += lambda * vi[(k, k)].max(1e-9) + 1e-12 * tr;
        }
        v_inv.push(damped.try_inverse()?);
    }
    let mut reduced = u;
    let mut rhs = -g_cam;
    for l in 0..num_landmarks {
        let vi = &v_inv[l];
        let vg = vi * g_land[l];
        for (oi, di, wi) in &w[l] {
            let wv = wi * vi;
            let wg = wi * vg;
            for r in 0..*di {
                rhs[oi + r] += wg[r];
            }
            for (oj, dj, wj) in &w[l] {
                let prod = wv * wj.transpose();
                for r in 0..*di {
                    for c in 0..*dj {
                        reduced[(oi + r, oj + c)] -= prod[(r, c)];
                    }
                }
            }
        }
    }
    Some(System {
        reduced,
        rhs,
        v_inv,
        w,
        g_land,
        grad_max,
    })
}

fn solve_step(sys: &System, num_landmarks: usize) -> Option<(DVector<f64>, Vec<Vector3<f64>>)> {
    let chol = sys.reduced.clone().cholesky()?;
    let dcam = chol.solve(&sys.rhs);
    if dcam.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut dland = Vec::with_capacity(num_landmarks);
    for l in 0..num_landmarks {
        let mut b = -sys.g_land[l];
        for (o, d, wb) in &sys.w[l] {
            let dc = dcam.rows(*o, *d);
            b -= wb.rows(0, *d).transpose() * dc;
        }
        dland.push(sys.v_inv[l] * b);
    }
    Some((dcam, dland))
}

/// Gauge and parameter layout for the given rig and graph: only poses that
/// have observations are optimized.
fn make_layout(rig: &RigCalibration, graph: &CorrespondenceGraph, gauge: ScaleGauge) -> Result<Layout> {
    let nf = rig.num_frames();
    let nc = rig.cameras.len();
    let front = rig.front_index()?;
    let mut frame_seen = vec![false; nf];
    let mut cam_seen = vec![false; nc];
    for o in &graph.observations {
        if o.view.frame >= nf || o.view.camera >= nc {
            return Err(Error::NotFound(format!("view {:?}", o.view)));
        }
        frame_seen[o.view.frame] = true;
        cam_seen[o.view.camera] = true;
    }
    let first_frame = frame_seen.iter().position(|&s| s);
    let last_frame = frame_seen.iter().rposition(|&s| s);
    let (Some(first_frame), Some(last_frame)) = (first_frame, last_frame) else {
        return Err(Error::InsufficientData("no observations".into()));
    };
    let mut kinds_front: Vec<Option<BlockKind>> = (0..nf)
        .map(|t| (frame_seen[t] && t != first_frame).then_some(BlockKind::Free))
        .collect();
    let mut kinds_rel: Vec<Option<BlockKind>> = (0..nc)
        .map(|c| (cam_seen[c] && c != front).then_some(BlockKind::Free))
        .collect();
    let t0 = rig.front_trajectory[first_frame].translation;
    let travel = (rig.front_trajectory[last_frame].translation - t0).norm();
    let use_trajectory = gauge == ScaleGauge::FrontTrajectory && last_frame != first_frame && travel > 1e-3;
    if use_trajectory {
        kinds_front[last_frame] = Some(BlockKind::FixedNorm {
            center: t0,
            radius: travel,
        });
    } else {
        let ring = rig.ring_indices()?;
        let pos = ring.iter().position(|&c| c == front).unwrap_or(0);
        let reference = (1..ring.len())
            .map(|k| ring[(pos + k) % ring.len()])
            .find(|&c| kinds_rel[c].is_some())
            .ok_or_else(|| Error::InsufficientData("no camera observed besides the front camera".into()))?;
        let radius = rig.cameras[reference].pose_rel.translation.norm();
        if radius < 1e-9 {
            return Err(Error::DegenerateGeometry("reference baseline has zero length".into()));
        }
        kinds_rel[reference] = Some(BlockKind::FixedNorm {
            center: Vector3::zeros(),
            radius,
        });
    }
    let mut offset = 0;
    let mut assign = |k: Option<BlockKind>| {
        k.map(|kind| {
            let b = Block { offset, kind };
            offset += b.dim();
            b
        })
    };
    let front_blocks: Vec<_> = kinds_front.into_iter().map(&mut assign).collect();
    let rel_blocks: Vec<_> = kinds_rel.into_iter().map(&mut assign).collect();
    Ok(Layout {
        front: front_blocks,
        rel: rel_blocks,
        num_params: offset,
    })
}

fn check_rank(problem: &Problem<'_>, lins: &[(usize, ObsLin)], num_landmarks: usize) -> Result<()> {
    let sys = build_system(problem, lins, num_landmarks, 0.0)
        .ok_or_else(|| Error::DegenerateGeometry("singular landmark block".into()))?;
    let s = &sys.reduced;
    let n = s.nrows();
    if n == 0 {
        return Ok(());
    }
    let diag: Vec<f64> = (0..n).map(|i| s[(i, i)]).collect();
    if diag.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::DegenerateGeometry("unconstrained pose parameter".into()));
    }
    let scaled = DMatrix::from_fn(n, n, |r, c| s[(r, c)] / (diag[r] * diag[c]).sqrt());
    let eig = scaled.symmetric_eigen();
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    if !(min > 1e-11) {
        return Err(Error::DegenerateGeometry(format!(
            "rank-deficient normal equations (min scaled eigenvalue {min:.3e})"
        )));
    }
    Ok(())
}

/// Runs the bundle adjustment. The returned calibration carries the
/// optimized relative poses and trajectory; `report.accepted` tells the
/// caller whether to adopt it.
pub fn bundle_adjust(
    graph: &CorrespondenceGraph,
    init: &RigCalibration,
    config: &BundleConfig,
) -> Result<BundleResult> {
    init.validate()?;
    graph.validate()?;
    if graph.observations.is_empty() {
        return Err(Error::InsufficientData("empty correspondence graph".into()));
    }
    let layout = make_layout(init, graph, config.scale_gauge)?;
    let problem = Problem {
        models: init.cameras.iter().map(|c| c.model).collect(),
        observations: &graph.observations,
        layout,
        huber: config.huber_delta_px,
    };
    let nl = graph.landmarks.len();
    let mut state = State {
        front: init.front_trajectory.clone(),
        rel: init.cameras.iter().map(|c| c.pose_rel).collect(),
        landmarks: graph.landmarks.clone(),
    };
    let mut cost = problem
        .cost(&state)
        .ok_or_else(|| Error::DegenerateGeometry("landmark projects behind a camera at initialization".into()))?;
    let initial_rms = problem.rms(&state);
    let linearize_all = |s: &State| -> Option<Vec<(usize, ObsLin)>> {
        graph
            .observations
            .iter()
            .map(|o| problem.linearize(s, o).map(|l| (o.landmark, l)))
            .collect()
    };
    let mut lins = linearize_all(&state).expect("finite cost implies projectable");
    check_rank(&problem, &lins, nl)?;

    let n_obs = graph.observations.len() as f64;
    let tiny_cost = 1e-20 * n_obs;
    let mut lambda = 1e-4;
    let mut iterations = 0;
    let mut converged = cost <= tiny_cost;
    while !converged && iterations < config.max_iterations {
        let Some(sys) = build_system(&problem, &lins, nl, lambda) else {
            lambda *= 10.0;
            iterations += 1;
            continue;
        };
        if sys.grad_max <= config.gradient_tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let step = solve_step(&sys, nl);
        let candidate = step.as_ref().map(|(dc, dl)| (problem.apply(&state, dc, dl), dc, dl));
        let new_cost = candidate.as_ref().and_then(|(s, _, _)| problem.cost(s));
        match (candidate, new_cost) {
            (Some((next, dc, dl)), Some(nc)) if nc < cost => {
                let rel_decrease = (cost - nc) / cost.max(f64::MIN_POSITIVE);
                let step_norm = (dc.norm_squared() + dl.iter().map(|v| v.norm_squared()).sum::<f64>()).sqrt();
                state = next;
                cost = nc;
                lambda = (lambda / 10.0).max(1e-12);
                if rel_decrease < config.function_tolerance
                    || step_norm < config.parameter_tolerance
                    || cost <= tiny_cost
                {
                    converged = true;
                } else {
                    lins = linearize_all(&state).expect("accepted state is projectable");
                }
            }
            _ => {
                lambda *= 10.0;
                if lambda > 1e16 {
                    // no descent direction left at machine precision
                    converged = sys.grad_max <= 1e-6 * (1.0 + cost);
                    break;
                }
            }
        }
    }

    let mut calibration = init.clone();
    for (cam, pose) in calibration.cameras.iter_mut().zip(&state.rel) {
        cam.pose_rel = *pose;
    }
    calibration.front_trajectory = state.front.clone();
    let max_change = init
        .cameras
        .iter()
        .zip(&calibration.cameras)
        .map(|(a, b)| a.pose_rel.translation_distance(&b.pose_rel))
        .fold(0.0f64, f64::max);
    let gates = GateResults {
        beta: graph.pair_counts.values().all(|&c| c >= config.beta),
        iterations: converged,
        alpha: max_change <= config.alpha_m,
    };
    let report = CalibrationReport {
        converged,
        iterations,
        initial_rms,
        final_rms: problem.rms(&state),
        accepted: converged && gates.all_pass(),
        gates,
        max_translation_change_m: max_change,
        num_observations: graph.observations.len(),
        num_landmarks: nl,
        outliers_removed: 0,
        failure: None,
    };
    Ok(BundleResult {
        calibration,
        landmarks: state.landmarks,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calib::graph::ViewId;
    use rand::{Rng, SeedableRng};

    /// Three-camera toy rig observed over three frames with random points.
    fn toy() -> (RigCalibration, CorrespondenceGraph) {
        let setup = crate::synth::RigPreset::Ring6Pinhole
            .build(&crate::synth::PresetOptions {
                frames: 3,
                ..Default::default()
            })
            .unwrap();
        let rig = setup.rig;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut g = CorrespondenceGraph::default();
        while g.landmarks.len() < 60 {
            let x = Vector3::new(
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-10.0..14.0),
            );
            let mut obs = Vec::new();
            for t in 0..3 {
                for c in 0..rig.cameras.len() {
                    let pose = rig.front_trajectory[t].compose(&rig.cameras[c].pose_rel);
                    if let Some(px) = rig.cameras[c].model.project_visible(&pose.inverse_transform_point(&x)) {
                        obs.push(Observation {
                            view: ViewId::new(c, t),
                            landmark: g.landmarks.len(),
                            pixel: px,
                        });
                    }
                }
            }
            if obs.len() >= 2 && obs.iter().any(|o| o.view.camera != obs[0].view.camera) {
                g.observations.extend(obs);
                g.landmarks.push(x);
            }
        }
        (rig, g)
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let (rig, g) = toy();
        for gauge in [ScaleGauge::FrontTrajectory, ScaleGauge::ReferenceBaseline] {
            let layout = make_layout(&rig, &g, gauge).unwrap();
            let problem = Problem {
                models: rig.cameras.iter().map(|c| c.model).collect(),
                observations: &g.observations,
                layout,
                huber: 2.0,
            };
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
            // perturb away from the exact solution so residuals are non-zero
            let mut state = State {
                front: rig.front_trajectory.clone(),
                rel: rig.cameras.iter().map(|c| c.pose_rel).collect(),
                landmarks: g
                    .landmarks
                    .iter()
                    .map(|l| l + Vector3::new(0.05, -0.03, 0.02))
                    .collect(),
            };
            let d0 = DVector::from_fn(problem.layout.num_params, |_, _| rng.gen_range(-0.01..0.01));
            state = problem.apply(&state, &d0, &vec![Vector3::zeros(); g.landmarks.len()]);
            let np = problem.layout.num_params;
            let zeros_l = vec![Vector3::zeros(); g.landmarks.len()];
            for o in g.observations.iter().step_by(7) {
                let lin = problem.linearize(&state, o).unwrap();
                let h = 1e-6;
                let eval = |s: &State| {
                    let (_, _, px) = problem.project(s, o).unwrap();
                    Vector2::new(px.u, px.v)
                };
                for (offset, dim, j) in &lin.blocks {
                    for k in 0..*dim {
                        let mut dp = DVector::zeros(np);
                        dp[offset + k] = h;
                        let plus = eval(&problem.apply(&state, &dp, &zeros_l));
                        let minus = eval(&problem.apply(&state, &(-dp), &zeros_l));
                        let num = (plus - minus) / (2.0 * h);
                        let ana = j.column(k);
                        let scale = ana.norm().max(1.0);
                        assert!(
                            (num - ana).norm() / scale < 1e-4,
                            "{gauge:?} block {offset} col {k}: {num:?} vs {ana:?}"
                        );
                    }
                }
                for k in 0..3 {
                    let mut dl = zeros_l.clone();
                    dl[o.landmark][k] = h;
                    let plus = eval(&problem.apply(&state, &DVector::zeros(np), &dl));
                    dl[o.landmark][k] = -h;
                    let minus = eval(&problem.apply(&state, &DVector::zeros(np), &dl));
                    let num = (plus - minus) / (2.0 * h);
                    let ana = lin.landmark_jac.column(k);
                    assert!((num - ana).norm() / ana.norm().max(1.0) < 1e-4);
                }
            }
        }
    }

    #[test]
    fn ground_truth_is_a_fixed_point() {
        let (rig, mut g) = toy();
        g.pair_counts.clear();
        let res = bundle_adjust(&g, &rig, &BundleConfig::default()).unwrap();
        assert!(res.report.converged);
        assert_eq!(res.report.iterations, 0);
        assert!(res.report.final_rms < 1e-8);
        for (a, b) in res.calibration.cameras.iter().zip(&rig.cameras) {
            assert!(a.pose_rel.rotation_angle_to(&b.pose_rel) < 1e-9);
            assert!(a.pose_rel.translation_distance(&b.pose_rel) < 1e-9);
        }
        assert!(res.report.accepted);
    }

    #[test]
    fn unobservable_configuration_is_degenerate() {
        // a single frame with the reference-baseline gauge leaves no frame to
        // move, but observing only the front camera leaves the scale free
        let (rig, g) = toy();
        let front_only = g.restrict_to_cameras(&[0]);
        let cfg = BundleConfig {
            scale_gauge: ScaleGauge::ReferenceBaseline,
            ..BundleConfig::default()
        };
        assert!(bundle_adjust(&front_only, &rig, &cfg).is_err());
    }
}
