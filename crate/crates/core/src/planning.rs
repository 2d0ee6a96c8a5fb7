//! Global grid planner and the sampling-based local controller.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::geom::{normalize_angle, Pose2, Vec2};
use crate::grid::{CostGrid, FREE, LETHAL, UNKNOWN};
use crate::world::RobotState;

/// Penalty added for every rollout step that lands on a lethal cell.
pub const LETHAL_PENALTY: f64 = 1e6;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("start cell is blocked")]
    StartBlocked,
    #[error("goal unreachable")]
    NoPath,
    #[error("start or goal outside the map")]
    OutOfBounds,
}

#[derive(Debug, Error, PartialEq)]
pub enum MppiError {
    #[error("every rollout hits a lethal cell")]
    DegenerateWeights,
    #[error("empty reference path")]
    EmptyPath,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerParams {
    /// Scale of the cost term in the edge weight.
    pub w_cost: f64,
    /// Planning and control see each cell as the max master cost within
    /// this radius (robot footprint, measured center to center).
    pub inscribed_radius: f64,
    pub replan_period: f64,
    pub goal_tolerance: f64,
    pub recovery_duration: f64,
    pub recovery_speed: f64,
    /// Length of the path window handed to the controller, meters.
    pub local_window: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            w_cost: 8.0,
            inscribed_radius: 0.275,
            replan_period: 2.0,
            goal_tolerance: 0.25,
            recovery_duration: 1.5,
            recovery_speed: -0.3,
            local_window: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub waypoints: Vec<Vec2>,
    pub total_cost: f64,
}

impl Path {
    pub fn goal(&self) -> Option<Vec2> {
        self.waypoints.last().copied()
    }

    pub fn nearest_index(&self, p: Vec2) -> Option<usize> {
        self.waypoints
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.dist(p).total_cmp(&b.1.dist(p)).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
    }

    /// Slice of the path starting at the waypoint nearest `p` and covering
    /// at most `length` meters.
    pub fn window(&self, p: Vec2, length: f64) -> Path {
        let Some(start) = self.nearest_index(p) else {
            return self.clone();
        };
        let mut acc = 0.0;
        let mut end = start;
        while end + 1 < self.waypoints.len() {
            acc += self.waypoints[end].dist(self.waypoints[end + 1]);
            if acc > length {
                break;
            }
            end += 1;
        }
        Path {
            waypoints: self.waypoints[start..=end].to_vec(),
            total_cost: 0.0,
        }
    }
}

/// Edge weight for stepping `step_len` meters into a cell of cost `cost`.
pub fn edge_weight(step_len: f64, cost: u8, w_cost: f64) -> f64 {
    step_len * (1.0 + w_cost * (cost as f64 / 254.0))
}

fn traversable(c: u8) -> bool {
    c != LETHAL && c != UNKNOWN
}

/// Cost-weighted Dijkstra over the 8-connected grid. Equal-weight ties keep
/// the smaller predecessor index.
pub fn plan_global(
    grid: &CostGrid,
    start: Vec2,
    goal: Vec2,
    w_cost: f64,
) -> Result<Path, PlanError> {
    let meta = &grid.meta;
    let s = meta.world_to_index(start).ok_or(PlanError::OutOfBounds)?;
    let g = meta.world_to_index(goal).ok_or(PlanError::OutOfBounds)?;
    if !traversable(grid.cells[s]) {
        return Err(PlanError::StartBlocked);
    }
    if s == g {
        return Ok(Path {
            waypoints: vec![meta.index_center(s)],
            total_cost: 0.0,
        });
    }
    if !traversable(grid.cells[g]) {
        return Err(PlanError::NoPath);
    }
    let n = meta.len();
    let res = meta.resolution;
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[s] = 0.0;
    heap.push(Reverse((OrdF64(0.0), s)));
    while let Some(Reverse((OrdF64(d), u))) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        if u == g {
            break;
        }
        let cu = meta.cell(u);
        for v in meta.neighbors8(u) {
            if done[v] || !traversable(grid.cells[v]) {
                continue;
            }
            let cv = meta.cell(v);
            let diag = cu.col != cv.col && cu.row != cv.row;
            let step = if diag {
                res * std::f64::consts::SQRT_2
            } else {
                res
            };
            let nd = d + edge_weight(step, grid.cells[v], w_cost);
            if nd < dist[v] || (nd == dist[v] && u < pred[v]) {
                if nd < dist[v] {
                    heap.push(Reverse((OrdF64(nd), v)));
                }
                dist[v] = nd;
                pred[v] = u;
            }
        }
    }
    if !dist[g].is_finite() {
        return Err(PlanError::NoPath);
    }
    let mut cells = vec![g];
    let mut cur = g;
    while cur != s {
        cur = pred[cur];
        cells.push(cur);
    }
    cells.reverse();
    Ok(Path {
        waypoints: cells.into_iter().map(|i| meta.index_center(i)).collect(),
        total_cost: dist[g],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Cost seen by a disc robot centered in each cell: the max master cost over
/// every cell whose center lies closer than `inscribed_radius`. Lethal cells
/// therefore grow by the inscribed radius; unknown cells stay unknown but do
/// not spread.
pub fn footprint_grid(master: &CostGrid, inscribed_radius: f64) -> CostGrid {
    let meta = master.meta;
    let reach = (inscribed_radius / meta.resolution).ceil() as i64;
    let mut offsets = Vec::new();
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            if (((dc * dc + dr * dr) as f64).sqrt() * meta.resolution) < inscribed_radius {
                offsets.push((dc, dr));
            }
        }
    }
    let mut out = master.clone();
    for (i, &c0) in master.cells.iter().enumerate() {
        if c0 == FREE || c0 == UNKNOWN {
            continue;
        }
        let c = meta.cell(i);
        for &(dc, dr) in &offsets {
            let (col, row) = (c.col as i64 + dc, c.row as i64 + dr);
            if meta.contains(col, row) {
                let j = row as usize * meta.width + col as usize;
                let cur = out.cells[j];
                if cur != UNKNOWN && cur < c0 {
                    out.cells[j] = c0;
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MppiParams {
    pub horizon: usize,
    pub dt: f64,
    pub n_samples: usize,
    pub sigma_v: f64,
    pub sigma_omega: f64,
    pub temperature: f64,
    /// AR(1) coefficient of the sampling noise along the horizon, in [0, 1).
    /// The marginal spread stays at sigma.
    pub noise_correlation: f64,
    pub w_path: f64,
    pub w_cost: f64,
    pub w_goal: f64,
    pub w_control: f64,
    /// A rollout that comes this close to the path's goal stops accruing
    /// cost there; 0 disables.
    pub arrival_radius: f64,
    pub v_max: f64,
    pub omega_max: f64,
}

impl Default for MppiParams {
    fn default() -> Self {
        Self {
            horizon: 30,
            dt: 0.1,
            n_samples: 256,
            sigma_v: 0.2,
            sigma_omega: 0.4,
            temperature: 0.1,
            noise_correlation: 0.9,
            w_path: 2.0,
            w_cost: 1.0,
            w_goal: 5.0,
            w_control: 0.02,
            arrival_radius: 0.2,
            v_max: 1.0,
            omega_max: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub path: f64,
    pub cost: f64,
    pub goal: f64,
    pub control: f64,
    pub arrival_radius: f64,
}

impl From<&MppiParams> for CostWeights {
    fn from(p: &MppiParams) -> Self {
        Self {
            path: p.w_path,
            cost: p.w_cost,
            goal: p.w_goal,
            control: p.w_control,
            arrival_radius: p.arrival_radius,
        }
    }
}

pub type Control = (f64, f64);

/// Unicycle rollout; returns the pose after each control.
pub fn rollout(start: Pose2, controls: &[Control], dt: f64) -> Vec<Pose2> {
    let mut p = start;
    controls
        .iter()
        .map(|&(v, w)| {
            p.x += v * p.theta.cos() * dt;
            p.y += v * p.theta.sin() * dt;
            p.theta = normalize_angle(p.theta + w * dt);
            p
        })
        .collect()
}

/// Stage and terminal cost of one rollout. A rollout that arrives at the
/// goal is scored up to its arrival; the terminal term then uses that pose.
pub fn rollout_cost(
    poses: &[Pose2],
    controls: &[Control],
    path: &Path,
    grid: &CostGrid,
    w: &CostWeights,
) -> f64 {
    let goal = path.goal();
    let arrived = goal.and_then(|g| {
        poses
            .iter()
            .position(|p| p.position().dist(g) <= w.arrival_radius)
    });
    let poses = &poses[..arrived.map_or(poses.len(), |k| k + 1)];
    let mut total = 0.0;
    for (k, pose) in poses.iter().enumerate() {
        let p = pose.position();
        let d_path = path
            .waypoints
            .iter()
            .map(|q| (*q - p).norm_sq())
            .fold(f64::INFINITY, f64::min);
        let cell = grid.cost_at(p);
        let (v, om) = controls.get(k).copied().unwrap_or((0.0, 0.0));
        total += w.path * d_path + w.control * (v * v + om * om);
        if cell == LETHAL || cell == UNKNOWN {
            total += LETHAL_PENALTY + w.cost;
        } else {
            total += w.cost * (cell as f64 / 254.0);
        }
    }
    if let (Some(last), Some(goal)) = (poses.last(), goal) {
        total += w.goal * (last.position() - goal).norm_sq();
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
pub struct MppiOutput {
    pub cmd: Control,
    /// Weighted-average control sequence before shifting.
    pub weighted: Vec<Control>,
    /// Warm start for the next tick.
    pub nominal: Vec<Control>,
    pub min_cost: f64,
}

/// One MPPI iteration: sample, roll out, score, softmin-average.
pub fn mppi_step(
    robot: &RobotState,
    nominal: &[Control],
    path: &Path,
    grid: &CostGrid,
    params: &MppiParams,
    seed: u64,
    exec: Exec,
) -> Result<MppiOutput, MppiError> {
    if path.waypoints.is_empty() {
        return Err(MppiError::EmptyPath);
    }
    let h = params.horizon.max(1);
    let mut base: Vec<Control> = nominal.iter().copied().take(h).collect();
    base.resize(h, (0.0, 0.0));
    let weights = CostWeights::from(params);
    let nv = Normal::new(0.0, params.sigma_v.max(0.0)).expect("finite sigma_v");
    let nw = Normal::new(0.0, params.sigma_omega.max(0.0)).expect("finite sigma_omega");
    let (vmax, wmax) = (params.v_max, params.omega_max);
    let rho = params.noise_correlation.clamp(0.0, 0.999);
    let fresh = (1.0 - rho * rho).sqrt();

    let samples: Vec<(Vec<Control>, f64)> = exec.map_range(params.n_samples.max(1), |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let (mut ev, mut ew) = (nv.sample(&mut rng), nw.sample(&mut rng));
        let controls: Vec<Control> = base
            .iter()
            .enumerate()
            .map(|(k, &(v, w))| {
                if k > 0 {
                    ev = rho * ev + fresh * nv.sample(&mut rng);
                    ew = rho * ew + fresh * nw.sample(&mut rng);
                }
                ((v + ev).clamp(-vmax, vmax), (w + ew).clamp(-wmax, wmax))
            })
            .collect();
        let poses = rollout(robot.pose, &controls, params.dt);
        let cost = rollout_cost(&poses, &controls, path, grid, &weights);
        (controls, cost)
    });

    let min_cost = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    if min_cost >= LETHAL_PENALTY {
        return Err(MppiError::DegenerateWeights);
    }
    let lambda = params.temperature.max(1e-12);
    let ws: Vec<f64> = samples
        .iter()
        .map(|s| (-(s.1 - min_cost) / lambda).exp())
        .collect();
    let norm: f64 = ws.iter().sum();
    let mut weighted = vec![(0.0, 0.0); h];
    for ((controls, _), w) in samples.iter().zip(&ws) {
        let w = w / norm;
        for (acc, c) in weighted.iter_mut().zip(controls) {
            acc.0 += w * c.0;
            acc.1 += w * c.1;
        }
    }
    let mut next: Vec<Control> = weighted[1..].to_vec();
    next.push(*weighted.last().expect("horizon >= 1"));
    Ok(MppiOutput {
        cmd: weighted[0],
        weighted,
        nominal: next,
        min_cost,
    })
}

/// Constant reverse command for `duration` seconds.
pub fn recovery_backup(duration: f64, dt: f64, speed: f64) -> Vec<Control> {
    let n = (duration / dt).round().max(0.0) as usize;
    vec![(speed, 0.0); n]
}
