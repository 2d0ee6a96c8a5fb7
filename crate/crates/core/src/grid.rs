//! Cost grid substrate shared by every layer and planner.
//!
//! Cells are stored row-major with row 0 at the bottom of the map (the grid
//! origin is the lower-left corner of cell `(0, 0)`), indexed `(col, row)`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec2;

pub const FREE: u8 = 0;
pub const LIGHT: u8 = 80;
pub const HEAVY: u8 = 180;
pub const LETHAL: u8 = 254;
pub const UNKNOWN: u8 = 255;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("point ({x:.3}, {y:.3}) lies outside the grid")]
    OutOfBounds { x: f64, y: f64 },
    #[error("layer grids disagree on geometry")]
    MetaMismatch,
    #[error("invalid grid geometry: {0}")]
    InvalidMeta(String),
    #[error("pgm: {0}")]
    Pgm(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub col: usize,
    pub row: usize,
}

impl Cell {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: Vec2,
}

impl GridMeta {
    pub fn new(
        width: usize,
        height: usize,
        resolution: f64,
        origin: Vec2,
    ) -> Result<Self, GridError> {
        if width == 0 || height == 0 {
            return Err(GridError::InvalidMeta(format!("{width}x{height} grid")));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(GridError::InvalidMeta(format!("resolution {resolution}")));
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
        })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, c: Cell) -> usize {
        c.row * self.width + c.col
    }

    pub fn cell(&self, index: usize) -> Cell {
        Cell::new(index % self.width, index / self.width)
    }

    pub fn contains(&self, col: i64, row: i64) -> bool {
        col >= 0 && row >= 0 && (col as usize) < self.width && (row as usize) < self.height
    }

    pub fn world_to_cell(&self, p: Vec2) -> Result<Cell, GridError> {
        let fx = ((p.x - self.origin.x) / self.resolution).floor();
        let fy = ((p.y - self.origin.y) / self.resolution).floor();
        if fx < 0.0
            || fy < 0.0
            || fx >= self.width as f64
            || fy >= self.height as f64
            || fx.is_nan()
            || fy.is_nan()
        {
            return Err(GridError::OutOfBounds { x: p.x, y: p.y });
        }
        Ok(Cell::new(fx as usize, fy as usize))
    }

    pub fn world_to_index(&self, p: Vec2) -> Option<usize> {
        self.world_to_cell(p).ok().map(|c| self.index(c))
    }

    pub fn cell_center(&self, c: Cell) -> Vec2 {
        Vec2::new(
            self.origin.x + (c.col as f64 + 0.5) * self.resolution,
            self.origin.y + (c.row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn index_center(&self, index: usize) -> Vec2 {
        self.cell_center(self.cell(index))
    }

    pub fn cell_box(&self, c: Cell) -> crate::geom::Aabb {
        let min = Vec2::new(
            self.origin.x + c.col as f64 * self.resolution,
            self.origin.y + c.row as f64 * self.resolution,
        );
        crate::geom::Aabb::new(min, min + Vec2::new(self.resolution, self.resolution))
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64) * self.resolution
    }

    /// Upper corner of the grid rectangle in world coordinates.
    pub fn extent(&self) -> Vec2 {
        self.origin
            + Vec2::new(
                self.width as f64 * self.resolution,
                self.height as f64 * self.resolution,
            )
    }

    /// In-bounds 8-neighbours of a cell, in ascending index order.
    pub fn neighbors8(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let c = self.cell(index);
        const OFFS: [(i64, i64); 8] = [
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ];
        OFFS.iter().filter_map(move |&(dc, dr)| {
            let (col, row) = (c.col as i64 + dc, c.row as i64 + dr);
            self.contains(col, row)
                .then(|| self.index(Cell::new(col as usize, row as usize)))
        })
    }
}

/// Free-function form of [`GridMeta::world_to_cell`].
pub fn world_to_cell(p: Vec2, meta: &GridMeta) -> Result<Cell, GridError> {
    meta.world_to_cell(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostGrid {
    pub meta: GridMeta,
    pub cells: Vec<u8>,
}

impl CostGrid {
    pub fn new(meta: GridMeta, fill: u8) -> Self {
        Self {
            cells: vec![fill; meta.len()],
            meta,
        }
    }

    pub fn get(&self, c: Cell) -> u8 {
        self.cells[self.meta.index(c)]
    }

    pub fn set(&mut self, c: Cell, v: u8) {
        let i = self.meta.index(c);
        self.cells[i] = v;
    }

    /// Cost at a world point; points outside the grid read as `UNKNOWN`.
    pub fn cost_at(&self, p: Vec2) -> u8 {
        self.meta
            .world_to_index(p)
            .map_or(UNKNOWN, |i| self.cells[i])
    }

    pub fn lethal_indices(&self) -> Vec<usize> {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| (c == LETHAL).then_some(i))
            .collect()
    }

    /// Builds a grid from text rows (`#` wall, `?` unknown, anything else
    /// free). The first row is the top of the map; each character covers a
    /// `scale` x `scale` block of cells.
    pub fn from_ascii<S: AsRef<str>>(
        rows: &[S],
        resolution: f64,
        scale: usize,
        origin: Vec2,
    ) -> Result<Self, GridError> {
        let scale = scale.max(1);
        let h_chars = rows.len();
        let w_chars = rows
            .iter()
            .map(|r| r.as_ref().chars().count())
            .max()
            .unwrap_or(0);
        let meta = GridMeta::new(w_chars * scale, h_chars * scale, resolution, origin)?;
        let mut grid = CostGrid::new(meta, FREE);
        for (ri, line) in rows.iter().enumerate() {
            let char_row = h_chars - 1 - ri;
            for (ci, ch) in line.as_ref().chars().enumerate() {
                let v = match ch {
                    '#' => LETHAL,
                    '?' => UNKNOWN,
                    _ => FREE,
                };
                for dr in 0..scale {
                    for dc in 0..scale {
                        grid.set(Cell::new(ci * scale + dc, char_row * scale + dr), v);
                    }
                }
            }
        }
        Ok(grid)
    }

    /// Reads a binary (P5) 8-bit PGM using the usual map-server convention:
    /// dark pixels are walls, bright pixels free, the rest unknown.
    pub fn read_pgm<R: BufRead>(
        mut r: R,
        resolution: f64,
        origin: Vec2,
    ) -> Result<Self, GridError> {
        let mut header = Vec::new();
        let mut fields: Vec<String> = Vec::new();
        while fields.len() < 4 {
            header.clear();
            let n = r.read_until(b'\n', &mut header)?;
            if n == 0 {
                return Err(GridError::Pgm("truncated header".into()));
            }
            let line = String::from_utf8_lossy(&header);
            let line = line.split('#').next().unwrap_or("");
            fields.extend(line.split_whitespace().map(str::to_owned));
        }
        if fields[0] != "P5" {
            return Err(GridError::Pgm(format!("unsupported magic {}", fields[0])));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| GridError::Pgm(format!("bad header field {s}")))
        };
        let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(GridError::Pgm(format!("unsupported maxval {maxval}")));
        }
        let meta = GridMeta::new(w, h, resolution, origin)?;
        let mut data = vec![0u8; w * h];
        r.read_exact(&mut data)?;
        let mut grid = CostGrid::new(meta, FREE);
        for img_row in 0..h {
            let row = h - 1 - img_row;
            for col in 0..w {
                let px = data[img_row * w + col] as f64 / maxval as f64;
                let occ = 1.0 - px;
                let v = if occ > 0.65 {
                    LETHAL
                } else if occ < 0.196 {
                    FREE
                } else {
                    UNKNOWN
                };
                grid.set(Cell::new(col, row), v);
            }
        }
        Ok(grid)
    }

    /// Writes a P5 PGM. `FREE` maps to 255, `LETHAL` to 0, `UNKNOWN` to 205
    /// and intermediate costs to `255 - cost`.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<(), GridError> {
        write!(w, "P5\n{} {}\n255\n", self.meta.width, self.meta.height)?;
        let mut buf = Vec::with_capacity(self.meta.len());
        for img_row in 0..self.meta.height {
            let row = self.meta.height - 1 - img_row;
            for col in 0..self.meta.width {
                buf.push(match self.get(Cell::new(col, row)) {
                    UNKNOWN => 205,
                    LETHAL => 0,
                    c => 255 - c,
                });
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }
}

/// Euclidean distance (meters) from each cell center to the nearest source
/// cell center.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub meta: GridMeta,
    pub dist: Vec<f64>,
}

impl DistanceField {
    pub fn at(&self, index: usize) -> f64 {
        self.dist[index]
    }

    /// Value stored for cells when the grid holds no source at all.
    pub fn sentinel(meta: &GridMeta) -> f64 {
        meta.diagonal()
    }
}

/// Exact Euclidean distance transform to the nearest `LETHAL` cell.
pub fn distance_transform(static_grid: &CostGrid) -> DistanceField {
    distance_field_from(&static_grid.meta, |i| static_grid.cells[i] == LETHAL)
}

/// Exact Euclidean distance transform to the nearest cell satisfying `is_source`.
///
/// Separable lower-envelope-of-parabolas algorithm: one 1D pass per column,
/// then one per row, on squared integer distances.
pub fn distance_field_from(meta: &GridMeta, is_source: impl Fn(usize) -> bool) -> DistanceField {
    const INF: f64 = 1e20;
    let (w, h) = (meta.width, meta.height);
    let mut sq = vec![INF; w * h];
    let mut any = false;
    for (i, v) in sq.iter_mut().enumerate() {
        if is_source(i) {
            *v = 0.0;
            any = true;
        }
    }
    if !any {
        return DistanceField {
            meta: *meta,
            dist: vec![DistanceField::sentinel(meta); w * h],
        };
    }
    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for col in 0..w {
        for row in 0..h {
            f[row] = sq[row * w + col];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for row in 0..h {
            sq[row * w + col] = out[row];
        }
    }
    for row in 0..h {
        f[..w].copy_from_slice(&sq[row * w..(row + 1) * w]);
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        sq[row * w..(row + 1) * w].copy_from_slice(&out[..w]);
    }
    let dist = sq
        .into_iter()
        .map(|d| {
            if d >= INF {
                DistanceField::sentinel(meta)
            } else {
                d.sqrt() * meta.resolution
            }
        })
        .collect();
    DistanceField { meta: *meta, dist }
}

fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let intersect = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
    };
    for q in 1..n {
        let mut s = intersect(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate().take(n) {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as f64 - v[k] as f64;
        *out = dq * dq + f[v[k]];
    }
}

/// Master composition: per-cell max over static, obstacle and inflated
/// layers, where cells carried in `movable_overrides` have their obstacle
/// layer `LETHAL` mark replaced by the override level first.
pub fn compose_layers(
    static_grid: &CostGrid,
    obstacle: &CostGrid,
    movable_overrides: &BTreeMap<usize, u8>,
    inflated: &CostGrid,
) -> Result<CostGrid, GridError> {
    if static_grid.meta != obstacle.meta || static_grid.meta != inflated.meta {
        return Err(GridError::MetaMismatch);
    }
    let mut out = static_grid.clone();
    for (i, m) in out.cells.iter_mut().enumerate() {
        let mut obs = obstacle.cells[i];
        if obs == LETHAL {
            if let Some(&ov) = movable_overrides.get(&i) {
                obs = ov;
            }
        }
        *m = (*m).max(obs).max(inflated.cells[i]);
    }
    Ok(out)
}

/// Cells crossed by the segment `a -> b`, in traversal order, paired with
/// the parametric distance (meters along the segment) at which each cell is
/// entered. The segment is clipped to the grid rectangle.
pub fn traverse(meta: &GridMeta, a: Vec2, b: Vec2) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    let delta = b - a;
    let len = delta.norm();
    let dir = if len > 0.0 {
        delta * (1.0 / len)
    } else {
        Vec2::new(1.0, 0.0)
    };
    let bounds = crate::geom::Aabb::new(meta.origin, meta.extent());
    let Some(t_start) = bounds.ray_entry(a, dir, len) else {
        return out;
    };
    let res = meta.resolution;
    let p = a + dir * t_start;
    let gx = (p.x - meta.origin.x) / res;
    let gy = (p.y - meta.origin.y) / res;
    let mut col = (gx.floor() as i64).clamp(0, meta.width as i64 - 1);
    let mut row = (gy.floor() as i64).clamp(0, meta.height as i64 - 1);
    let step_c: i64 = if dir.x > 0.0 { 1 } else { -1 };
    let step_r: i64 = if dir.y > 0.0 { 1 } else { -1 };
    let t_delta_x = if dir.x != 0.0 {
        res / dir.x.abs()
    } else {
        f64::INFINITY
    };
    let t_delta_y = if dir.y != 0.0 {
        res / dir.y.abs()
    } else {
        f64::INFINITY
    };
    let bx = meta.origin.x + (col + i64::from(dir.x > 0.0)) as f64 * res;
    let by = meta.origin.y + (row + i64::from(dir.y > 0.0)) as f64 * res;
    let mut t_max_x = if dir.x != 0.0 {
        (bx - a.x) / dir.x
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if dir.y != 0.0 {
        (by - a.y) / dir.y
    } else {
        f64::INFINITY
    };
    let mut t_enter = t_start;
    loop {
        out.push((meta.index(Cell::new(col as usize, row as usize)), t_enter));
        if t_max_x < t_max_y {
            if t_max_x > len {
                break;
            }
            t_enter = t_max_x;
            col += step_c;
            t_max_x += t_delta_x;
        } else {
            if t_max_y > len {
                break;
            }
            t_enter = t_max_y;
            row += step_r;
            t_max_y += t_delta_y;
        }
        if !meta.contains(col, row) {
            break;
        }
    }
    out
}
