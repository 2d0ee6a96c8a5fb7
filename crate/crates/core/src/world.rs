//! Ground-truth world: unicycle robot, quasi-static pushing of box-shaped
//! bodies, and a planar LiDAR.
//!
//! Pushing uses a velocity-scaling contact model instead of inertial
//! dynamics: a robot pressing a body inside the push cone moves together
//! with it at `kappa(class) * v_cmd`. Head-on contact with an immovable
//! body stops the robot. Walls and contacts outside the cone remove the
//! normal component of the motion and leave the robot to slide along the
//! tangent, so an oblique contact never pushes.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::geom::{
    circle_box_gap, circle_box_normal, normalize_angle, sweep_box_box, sweep_circle_box, Aabb,
    Pose2, Vec2,
};
use crate::grid::{traverse, Cell, CostGrid, LETHAL};

/// Separation kept after a blocked sweep.
const SKIN: f64 = 1e-6;
/// Gap below which two shapes count as touching.
pub const CONTACT_EPS: f64 = 1e-4;
/// Shortest range a LiDAR return can report.
pub const MIN_RANGE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Movability {
    Light,
    Heavy,
    Immovable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldParams {
    pub footprint_radius: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub kappa_light: f64,
    pub kappa_heavy: f64,
    /// Half-angle of the push cone, degrees.
    pub push_cone_deg: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            footprint_radius: 0.3,
            v_max: 1.0,
            omega_max: 1.5,
            kappa_light: 0.85,
            kappa_heavy: 0.25,
            push_cone_deg: 45.0,
        }
    }
}

impl WorldParams {
    pub fn kappa(&self, class: Movability) -> f64 {
        match class {
            Movability::Light => self.kappa_light,
            Movability::Heavy => self.kappa_heavy,
            Movability::Immovable => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovableBody {
    pub id: u32,
    pub center: Vec2,
    pub half_extents: Vec2,
    pub class: Movability,
}

impl MovableBody {
    pub fn new(id: u32, center: Vec2, half_extents: Vec2, class: Movability) -> Self {
        assert!(
            half_extents.x > 0.0 && half_extents.y > 0.0,
            "body half-extents must be positive"
        );
        Self {
            id,
            center,
            half_extents,
            class,
        }
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_center(self.center, self.half_extents)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: Pose2,
    /// Achieved linear velocity along the heading, m/s.
    pub v: f64,
    pub omega: f64,
    pub footprint_radius: f64,
}

/// What happened during the last [`WorldState::step`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInfo {
    pub cmd_v: f64,
    pub cmd_omega: f64,
    /// Magnitude of the achieved translational velocity (odometry speed).
    pub speed: f64,
    /// Body id and coupling ratio when the robot pushed a body.
    pub pushed: Option<(u32, f64)>,
    pub jammed: bool,
}

#[derive(Debug, Clone)]
pub struct WorldState {
    pub static_map: Arc<CostGrid>,
    pub bodies: Vec<MovableBody>,
    pub robot: RobotState,
    pub time: f64,
    pub params: WorldParams,
    pub last_step: StepInfo,
}

enum Blocker {
    Wall(Aabb),
    Body(usize),
}

impl WorldState {
    pub fn new(
        static_map: Arc<CostGrid>,
        bodies: Vec<MovableBody>,
        start: Pose2,
        params: WorldParams,
    ) -> Self {
        Self {
            static_map,
            bodies,
            robot: RobotState {
                pose: start,
                v: 0.0,
                omega: 0.0,
                footprint_radius: params.footprint_radius,
            },
            time: 0.0,
            params,
            last_step: StepInfo::default(),
        }
    }

    /// Wall cell boxes (including the region outside the map) touching `area`.
    fn walls_near(&self, area: &Aabb) -> Vec<Aabb> {
        let m = &self.static_map.meta;
        let res = m.resolution;
        let c0 = ((area.min.x - m.origin.x) / res).floor() as i64 - 1;
        let c1 = ((area.max.x - m.origin.x) / res).floor() as i64 + 1;
        let r0 = ((area.min.y - m.origin.y) / res).floor() as i64 - 1;
        let r1 = ((area.max.y - m.origin.y) / res).floor() as i64 + 1;
        let mut out = Vec::new();
        for row in r0..=r1 {
            for col in c0..=c1 {
                let wall = !m.contains(col, row)
                    || self.static_map.get(Cell::new(col as usize, row as usize)) == LETHAL;
                if wall {
                    let min =
                        Vec2::new(m.origin.x + col as f64 * res, m.origin.y + row as f64 * res);
                    out.push(Aabb::new(min, min + Vec2::new(res, res)));
                }
            }
        }
        out
    }

    /// First contact of the robot disc moving `len` along unit `dir`.
    fn sweep_robot(&self, dir: Vec2, len: f64, skip_body: Option<usize>) -> (f64, Option<Blocker>) {
        let r = self.robot.footprint_radius;
        let p = self.robot.pose.position();
        let end = p + dir * len;
        let area = Aabb::new(
            Vec2::new(p.x.min(end.x), p.y.min(end.y)),
            Vec2::new(p.x.max(end.x), p.y.max(end.y)),
        )
        .expanded(r, r);
        let mut best = len;
        let mut blocker = None;
        for wall in self.walls_near(&area) {
            if let Some(t) = sweep_circle_box(p, r, dir, best, &wall) {
                if t < best || blocker.is_none() && t <= best {
                    best = t;
                    blocker = Some(Blocker::Wall(wall));
                }
            }
        }
        for (i, b) in self.bodies.iter().enumerate() {
            if Some(i) == skip_body {
                continue;
            }
            if let Some(t) = sweep_circle_box(p, r, dir, best, &b.aabb()) {
                if t < best || blocker.is_none() && t <= best {
                    best = t;
                    blocker = Some(Blocker::Body(i));
                }
            }
        }
        (best, blocker)
    }

    /// Free travel of body `idx` along unit `dir`, up to `len`.
    fn sweep_body(&self, idx: usize, dir: Vec2, len: f64) -> f64 {
        let bx = self.bodies[idx].aabb();
        let swept = Aabb::new(
            Vec2::new(
                bx.min.x.min(bx.min.x + dir.x * len),
                bx.min.y.min(bx.min.y + dir.y * len),
            ),
            Vec2::new(
                bx.max.x.max(bx.max.x + dir.x * len),
                bx.max.y.max(bx.max.y + dir.y * len),
            ),
        );
        let mut best = len;
        for wall in self.walls_near(&swept) {
            if let Some(t) = sweep_box_box(&bx, dir, best, &wall) {
                best = best.min(t);
            }
        }
        for (j, other) in self.bodies.iter().enumerate() {
            if j != idx {
                if let Some(t) = sweep_box_box(&bx, dir, best, &other.aabb()) {
                    best = best.min(t);
                }
            }
        }
        best
    }

    fn blocker_normal(&self, blocker: &Blocker) -> Vec2 {
        let p = self.robot.pose.position();
        match blocker {
            Blocker::Wall(b) => circle_box_normal(p, b),
            Blocker::Body(i) => circle_box_normal(p, &self.bodies[*i].aabb()),
        }
    }

    fn translate_robot(&mut self, d: Vec2) {
        let p = self.robot.pose.position() + d;
        self.robot.pose.x = p.x;
        self.robot.pose.y = p.y;
    }

    /// Advances the world by `dt` under command `(v, omega)`.
    pub fn step(&mut self, cmd: (f64, f64), dt: f64) -> StepInfo {
        let dt = if dt.is_finite() {
            dt.clamp(1e-6, 0.1)
        } else {
            0.1
        };
        let p = &self.params;
        let v = if cmd.0.is_finite() {
            cmd.0.clamp(-p.v_max, p.v_max)
        } else {
            0.0
        };
        let w = if cmd.1.is_finite() {
            cmd.1.clamp(-p.omega_max, p.omega_max)
        } else {
            0.0
        };
        let cone_cos = p.push_cone_deg.to_radians().cos();
        let heading = self.robot.pose.heading();
        let dir = if v >= 0.0 { heading } else { -heading };
        let dist = v.abs() * dt;
        let start = self.robot.pose.position();
        let mut info = StepInfo {
            cmd_v: v,
            cmd_omega: w,
            ..StepInfo::default()
        };

        if dist > 0.0 {
            let r = self.robot.footprint_radius;
            // Pushable body already in contact ahead, inside the push cone.
            let pusher = self
                .bodies
                .iter()
                .enumerate()
                .filter(|(_, b)| circle_box_gap(start, r, &b.aabb()) <= CONTACT_EPS)
                .map(|(i, b)| (i, dir.dot(circle_box_normal(start, &b.aabb()))))
                .filter(|&(i, c)| c >= cone_cos && self.bodies[i].class != Movability::Immovable)
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));

            if let Some((bi, _)) = pusher {
                let kappa = self.params.kappa(self.bodies[bi].class);
                let want = kappa * dist;
                let body_free = self.sweep_body(bi, dir, want);
                let (robot_free, _) = self.sweep_robot(dir, want, Some(bi));
                let s = if body_free >= want && robot_free >= want {
                    want
                } else {
                    info.jammed = true;
                    (body_free.min(robot_free) - SKIN).max(0.0)
                };
                let d = dir * s;
                self.translate_robot(d);
                self.bodies[bi].center = self.bodies[bi].center + d;
                info.pushed = Some((self.bodies[bi].id, if v != 0.0 { s / dist } else { 0.0 }));
            } else {
                let (t, blocker) = self.sweep_robot(dir, dist, None);
                match blocker {
                    None => self.translate_robot(dir * dist),
                    Some(blocker) => {
                        let moved = (t - SKIN).max(0.0);
                        self.translate_robot(dir * moved);
                        // Head-on contact with a body stops the robot; walls and
                        // oblique contacts only remove the normal component.
                        let n = self.blocker_normal(&blocker);
                        let c = dir.dot(n);
                        let head_on = matches!(blocker, Blocker::Body(_)) && c >= cone_cos;
                        if !head_on {
                            let tangent = dir - n * c;
                            let slide = (dist - moved) * tangent.norm();
                            let tdir = tangent.normalized();
                            if slide > 0.0 && tdir != Vec2::ZERO {
                                let (t2, hit) = self.sweep_robot(tdir, slide, None);
                                let s2 = if hit.is_some() {
                                    (t2 - SKIN).max(0.0)
                                } else {
                                    slide
                                };
                                self.translate_robot(tdir * s2);
                            }
                        }
                    }
                }
            }
        }

        let disp = self.robot.pose.position() - start;
        info.speed = disp.norm() / dt;
        self.robot.v = disp.dot(heading) / dt;
        self.robot.omega = w;
        self.robot.pose.theta = normalize_angle(self.robot.pose.theta + w * dt);
        self.time += dt;
        self.last_step = info;
        info
    }

    /// Value-returning form of [`WorldState::step`].
    pub fn stepped(&self, cmd: (f64, f64), dt: f64) -> WorldState {
        let mut next = self.clone();
        next.step(cmd, dt);
        next
    }

    /// Minimum gap between the robot disc and any wall cell or body.
    pub fn robot_clearance(&self) -> f64 {
        let r = self.robot.footprint_radius;
        let p = self.robot.pose.position();
        let area = Aabb::from_center(p, Vec2::new(r, r));
        let walls = self.walls_near(&area);
        walls
            .iter()
            .map(|w| circle_box_gap(p, r, w))
            .chain(self.bodies.iter().map(|b| circle_box_gap(p, r, &b.aabb())))
            .fold(f64::INFINITY, f64::min)
    }

    /// True when some body overlaps a wall cell or another body.
    pub fn bodies_penetrate(&self) -> bool {
        self.bodies.iter().enumerate().any(|(i, b)| {
            let bx = b.aabb();
            self.walls_near(&bx).iter().any(|w| shrink(w).overlaps(&bx))
                || self.bodies[i + 1..]
                    .iter()
                    .any(|o| shrink(&o.aabb()).overlaps(&bx))
        })
    }
}

fn shrink(b: &Aabb) -> Aabb {
    b.expanded(-1e-9, -1e-9)
}

/// Contact-model coupling for a robot pressing a body head-on: returns
/// `(robot speed, body speed)`.
pub fn resolve_push(params: &WorldParams, class: Movability, v_cmd: f64) -> (f64, f64) {
    let v = params.kappa(class) * v_cmd;
    (v, v)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanParams {
    pub n_rays: usize,
    pub fov: f64,
    pub max_range: f64,
    pub range_noise_sigma: f64,
}

impl Default for ScanParams {
    fn default() -> Self {
        Self {
            n_rays: 720,
            fov: std::f64::consts::TAU,
            max_range: 10.0,
            range_noise_sigma: 0.01,
        }
    }
}

impl ScanParams {
    /// Ray angles in the robot frame, evenly spaced over the field of view.
    pub fn angles(&self) -> Vec<f64> {
        let n = self.n_rays.max(1);
        let full = self.fov >= std::f64::consts::TAU - 1e-9;
        let step = if full || n == 1 {
            self.fov / n as f64
        } else {
            self.fov / (n - 1) as f64
        };
        (0..n).map(|i| -self.fov / 2.0 + i as f64 * step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub angle: f64,
    pub range: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub rays: Vec<Ray>,
    pub max_range: f64,
}

impl Scan {
    pub fn is_hit(&self, r: &Ray) -> bool {
        r.range < self.max_range
    }
}

/// Exact range along one ray to the first wall cell or body surface.
pub fn cast_ray(world: &WorldState, origin: Vec2, dir: Vec2, max_range: f64) -> f64 {
    let mut best = max_range;
    let grid = &world.static_map;
    for (idx, t) in traverse(&grid.meta, origin, origin + dir * max_range) {
        if t >= best {
            break;
        }
        if grid.cells[idx] == LETHAL {
            best = best.min(t);
            break;
        }
    }
    for b in &world.bodies {
        if let Some(t) = b.aabb().ray_entry(origin, dir, best) {
            best = best.min(t);
        }
    }
    best
}

pub fn simulate_lidar(world: &WorldState, params: &ScanParams, seed: u64, exec: Exec) -> Scan {
    let pose = world.robot.pose;
    let origin = pose.position();
    let angles = params.angles();
    let noise = (params.range_noise_sigma > 0.0)
        .then(|| Normal::new(0.0, params.range_noise_sigma).expect("finite sigma"));
    let rays = exec.map_range(angles.len(), |i| {
        let angle = angles[i];
        let dir = Vec2::from_angle(pose.theta + angle);
        let mut range = cast_ray(world, origin, dir, params.max_range);
        if range < params.max_range {
            if let Some(n) = &noise {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                range += n.sample(&mut rng);
            }
            range = range.clamp(MIN_RANGE, params.max_range);
        }
        Ray { angle, range }
    });
    Scan {
        rays,
        max_range: params.max_range,
    }
}
