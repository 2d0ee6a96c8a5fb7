//! Small planar geometry kit: points, poses, axis-aligned boxes and the
//! exact sweep/ray queries the simulator needs.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Unit vector, or zero for a (near) zero input.
    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 1e-12 {
            self * (1.0 / n)
        } else {
            Vec2::ZERO
        }
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Planar pose; heading kept in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::from_angle(self.theta)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec2,
    pub max: Vec2,
}

impl Aabb {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    pub fn from_center(center: Vec2, half: Vec2) -> Self {
        Self::new(center - half, center + half)
    }

    pub fn center(&self) -> Vec2 {
        (self.min + self.max) * 0.5
    }

    pub fn half_extents(&self) -> Vec2 {
        (self.max - self.min) * 0.5
    }

    pub fn expanded(&self, dx: f64, dy: f64) -> Aabb {
        Aabb::new(
            Vec2::new(self.min.x - dx, self.min.y - dy),
            Vec2::new(self.max.x + dx, self.max.y + dy),
        )
    }

    pub fn translated(&self, d: Vec2) -> Aabb {
        Aabb::new(self.min + d, self.max + d)
    }

    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
        )
    }

    /// Strict interior overlap (touching boxes do not overlap).
    pub fn overlaps(&self, o: &Aabb) -> bool {
        self.min.x < o.max.x && o.min.x < self.max.x && self.min.y < o.max.y && o.min.y < self.max.y
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Parametric entry distance of the ray `origin + t*dir` into the box,
    /// for t in `[0, max_t]`. A ray starting inside the box returns `Some(0)`.
    pub fn ray_entry(&self, origin: Vec2, dir: Vec2, max_t: f64) -> Option<f64> {
        let mut t_lo = 0.0_f64;
        let mut t_hi = max_t;
        for (o, d, lo, hi) in [
            (origin.x, dir.x, self.min.x, self.max.x),
            (origin.y, dir.y, self.min.y, self.max.y),
        ] {
            if d == 0.0 {
                if o < lo || o > hi {
                    return None;
                }
            } else {
                let inv = 1.0 / d;
                let (mut t0, mut t1) = ((lo - o) * inv, (hi - o) * inv);
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                t_lo = t_lo.max(t0);
                t_hi = t_hi.min(t1);
                if t_lo > t_hi {
                    return None;
                }
            }
        }
        Some(t_lo)
    }
}

/// First t in `[0, max_t]` where the ray `origin + t*dir` enters a disc.
pub fn ray_circle_entry(
    origin: Vec2,
    dir: Vec2,
    center: Vec2,
    radius: f64,
    max_t: f64,
) -> Option<f64> {
    let m = origin - center;
    let a = dir.norm_sq();
    if a == 0.0 {
        return None;
    }
    let b = m.dot(dir);
    let c = m.norm_sq() - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    if b > 0.0 {
        return None;
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let t = (-b - disc.sqrt()) / a;
    (t <= max_t).then_some(t.max(0.0))
}

/// Distance from a disc's boundary to a box (negative when they overlap).
pub fn circle_box_gap(center: Vec2, radius: f64, b: &Aabb) -> f64 {
    center.dist(b.closest_point(center)) - radius
}

/// Outward contact normal pointing from a disc center toward a box.
pub fn circle_box_normal(center: Vec2, b: &Aabb) -> Vec2 {
    (b.closest_point(center) - center).normalized()
}

/// Travel distance before a moving disc first touches a box (Minkowski sum
/// of the box and the disc, tested against the center ray). `dir` must be a
/// unit vector. Returns `None` when no contact happens within `max_t`, or
/// when the disc already touches the box and is moving away from it.
pub fn sweep_circle_box(center: Vec2, radius: f64, dir: Vec2, max_t: f64, b: &Aabb) -> Option<f64> {
    let gap = circle_box_gap(center, radius, b);
    if gap <= 0.0 {
        // Touching or (numerically) inside: blocked only if moving inward.
        return (dir.dot(circle_box_normal(center, b)) > 0.0).then_some(0.0);
    }
    let slab_x = b.expanded(radius, 0.0).ray_entry(center, dir, max_t);
    let slab_y = b.expanded(0.0, radius).ray_entry(center, dir, max_t);
    let corners = [
        b.min,
        Vec2::new(b.max.x, b.min.y),
        b.max,
        Vec2::new(b.min.x, b.max.y),
    ];
    let mut best: Option<f64> = None;
    let mut take = |t: Option<f64>| {
        if let Some(t) = t {
            best = Some(best.map_or(t, |bt: f64| bt.min(t)));
        }
    };
    take(slab_x);
    take(slab_y);
    for c in corners {
        take(ray_circle_entry(center, dir, c, radius, max_t));
    }
    best
}

/// Travel distance before a translating box first touches another box.
pub fn sweep_box_box(moving: &Aabb, dir: Vec2, max_t: f64, other: &Aabb) -> Option<f64> {
    let h = moving.half_extents();
    let grown = other.expanded(h.x, h.y);
    let c = moving.center();
    if moving.overlaps(other) {
        return Some(0.0);
    }
    let t = grown.ray_entry(c, dir, max_t)?;
    if t > 0.0 {
        return Some(t);
    }
    // Touching at t = 0: blocked only if moving into the other box.
    let d = other.center() - c;
    let sep_x = (d.x.abs() - (h.x + other.half_extents().x)).abs() < 1e-12;
    let sep_y = (d.y.abs() - (h.y + other.half_extents().y)).abs() < 1e-12;
    let inward = (sep_x && dir.x * d.x > 0.0) || (sep_y && dir.y * d.y > 0.0);
    inward.then_some(0.0)
}
