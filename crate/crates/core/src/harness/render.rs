//! Costmap to PNG, one pixel per cell, north up.
//!
//! | cost            | color                                  |
//! |-----------------|----------------------------------------|
//! | 0 (free)        | white                                  |
//! | 1..=79          | light blue ramp (inflation tail)       |
//! | 80 (light)      | green (60, 180, 75)                    |
//! | 81..=179        | yellow to orange ramp                  |
//! | 180 (heavy)     | orange (255, 140, 0)                   |
//! | 181..=253       | red ramp                               |
//! | 254 (lethal)    | purple (145, 30, 180)                  |
//! | 255 (unknown)   | gray (128, 128, 128)                   |
//!
//! Overlays: path in blue, robot footprint outline in red, cluster
//! centroids as black crosses.

use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};

use crate::geom::Vec2;
use crate::grid::{CostGrid, GridMeta, HEAVY, LETHAL, LIGHT, UNKNOWN};
use crate::layers::CostLevel;

pub const PATH_COLOR: [u8; 3] = [0, 0, 255];
pub const ROBOT_COLOR: [u8; 3] = [220, 0, 0];
pub const CLUSTER_COLOR: [u8; 3] = [0, 0, 0];

#[derive(Debug, Clone, Default)]
pub struct Overlays {
    pub path: Vec<Vec2>,
    /// Center and footprint radius.
    pub robot: Option<(Vec2, f64)>,
    pub clusters: Vec<(Vec2, CostLevel)>,
}

fn lerp(a: [u8; 3], b: [u8; 3], t: f64) -> [u8; 3] {
    let f = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * t).round() as u8;
    [f(a[0], b[0]), f(a[1], b[1]), f(a[2], b[2])]
}

pub fn palette(cost: u8) -> [u8; 3] {
    match cost {
        0 => [255, 255, 255],
        1..=79 => lerp([220, 235, 255], [120, 170, 235], (cost - 1) as f64 / 78.0),
        LIGHT => [60, 180, 75],
        81..=179 => lerp([255, 235, 100], [255, 165, 0], (cost - 81) as f64 / 98.0),
        HEAVY => [255, 140, 0],
        181..=253 => lerp([240, 80, 60], [170, 0, 0], (cost - 181) as f64 / 72.0),
        LETHAL => [145, 30, 180],
        UNKNOWN => [128, 128, 128],
    }
}

fn put(img: &mut RgbImage, meta: &GridMeta, p: Vec2, color: [u8; 3]) {
    if let Ok(c) = meta.world_to_cell(p) {
        let y = (meta.height - 1 - c.row) as u32;
        img.put_pixel(c.col as u32, y, Rgb(color));
    }
}

pub fn render_costmap(master: &CostGrid, overlays: &Overlays) -> RgbImage {
    let meta = master.meta;
    let mut img = RgbImage::new(meta.width as u32, meta.height as u32);
    for (i, &c) in master.cells.iter().enumerate() {
        let cell = meta.cell(i);
        img.put_pixel(
            cell.col as u32,
            (meta.height - 1 - cell.row) as u32,
            Rgb(palette(c)),
        );
    }
    let step = meta.resolution * 0.5;
    for w in overlays.path.windows(2) {
        let n = ((w[1] - w[0]).norm() / step).ceil().max(1.0) as usize;
        for k in 0..=n {
            put(
                &mut img,
                &meta,
                w[0] + (w[1] - w[0]) * (k as f64 / n as f64),
                PATH_COLOR,
            );
        }
    }
    if let [only] = overlays.path.as_slice() {
        put(&mut img, &meta, *only, PATH_COLOR);
    }
    if let Some((center, r)) = overlays.robot {
        let n = ((std::f64::consts::TAU * r / step).ceil() as usize).max(8);
        for k in 0..n {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            put(
                &mut img,
                &meta,
                center + Vec2::from_angle(a) * r,
                ROBOT_COLOR,
            );
        }
    }
    for &(c, _) in &overlays.clusters {
        let r = meta.resolution;
        for d in [
            Vec2::ZERO,
            Vec2::new(r, 0.0),
            Vec2::new(-r, 0.0),
            Vec2::new(0.0, r),
            Vec2::new(0.0, -r),
        ] {
            put(&mut img, &meta, c + d, CLUSTER_COLOR);
        }
    }
    img
}

pub fn export_costmap_image(
    master: &CostGrid,
    overlays: &Overlays,
    path: &Path,
) -> Result<(), image::ImageError> {
    render_costmap(master, overlays).save_with_format(path, ImageFormat::Png)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FREE;

    #[test]
    fn palette_levels_are_distinct() {
        let keys = [FREE, 40, LIGHT, 120, HEAVY, 200, LETHAL, UNKNOWN];
        for (i, a) in keys.iter().enumerate() {
            for b in &keys[i + 1..] {
                assert_ne!(palette(*a), palette(*b), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn free_grid_is_white() {
        let g = CostGrid::new(GridMeta::new(4, 4, 0.05, Vec2::ZERO).unwrap(), FREE);
        let img = render_costmap(&g, &Overlays::default());
        assert_eq!(img.dimensions(), (4, 4));
        assert!(img.pixels().all(|p| p.0 == [255, 255, 255]));
    }
}
