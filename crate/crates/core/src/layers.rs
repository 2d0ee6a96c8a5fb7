//! Costmap layers: the base obstacle layer, the movable obstacles layer and
//! weighted soft inflation.
//!
//! The obstacle layer marks every LiDAR return lethal and clears along each
//! ray. The movable layer takes those marks, drops the ones that belong to
//! the static map or sit too close to a static wall, groups the rest into
//! 8-connected clusters and tracks them in a [`ClusterRegistry`] so that an
//! obstacle keeps its id and cost level across occlusions. Each tracked
//! cell is handed to the master composition as an override that downgrades
//! the lethal mark to the cluster's level.

use std::collections::{BTreeMap, BTreeSet};

use log::debug;
use serde::{Deserialize, Serialize};

use crate::geom::{Pose2, Vec2};
use crate::grid::{traverse, CostGrid, DistanceField, GridMeta, FREE, HEAVY, LETHAL, LIGHT};
use crate::world::Scan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostLevel {
    Light,
    Heavy,
    Lethal,
}

impl CostLevel {
    pub fn cost(self) -> u8 {
        match self {
            CostLevel::Light => LIGHT,
            CostLevel::Heavy => HEAVY,
            CostLevel::Lethal => LETHAL,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MovableLayerParams {
    pub wall_distance_threshold: f64,
    pub cluster_match_radius: f64,
    pub occlusion_memory: f64,
    pub inflation_radius: f64,
    pub decay_rate: f64,
}

impl Default for MovableLayerParams {
    fn default() -> Self {
        Self {
            wall_distance_threshold: 0.3,
            cluster_match_radius: 0.4,
            occlusion_memory: 5.0,
            inflation_radius: 0.6,
            decay_rate: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleCluster {
    pub id: u32,
    /// Cells of the most recent observation, sorted.
    pub cells: Vec<usize>,
    pub centroid: Vec2,
    pub level: CostLevel,
    pub last_seen: f64,
    /// Whether the cluster was observed in the latest update.
    pub visible: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClusterRegistry {
    pub clusters: BTreeMap<u32, ObstacleCluster>,
    pub next_id: u32,
}

impl ClusterRegistry {
    pub fn get(&self, id: u32) -> Option<&ObstacleCluster> {
        self.clusters.get(&id)
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn levels(&self) -> BTreeMap<u32, CostLevel> {
        self.clusters.iter().map(|(&id, c)| (id, c.level)).collect()
    }
}

/// Heavy or lethal signal from the progress checker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscalationEvent {
    pub level: CostLevel,
    pub pose: Pose2,
    pub time: f64,
}

/// Extra per-cell vote on whether a movable candidate survives.
pub trait CandidateFilter: Send + Sync {
    fn keep(&self, cell: usize, static_map: &CostGrid, dfield: &DistanceField) -> bool;
}

/// Rejects candidates closer than `threshold` meters to static structure.
#[derive(Debug, Clone, Copy)]
pub struct WallDistanceFilter {
    pub threshold: f64,
}

impl CandidateFilter for WallDistanceFilter {
    fn keep(&self, cell: usize, _static_map: &CostGrid, dfield: &DistanceField) -> bool {
        dfield.at(cell) >= self.threshold
    }
}

/// Raytrace clearing followed by endpoint marking. Clearing runs for every
/// ray before any marking, so a cell cleared by one ray and hit by another
/// ends up lethal.
pub fn obstacle_layer_update(scan: &Scan, robot_pose: Pose2, grid: &mut CostGrid) {
    let meta = grid.meta;
    let origin = robot_pose.position();
    let mut marks = Vec::new();
    for ray in &scan.rays {
        let dir = Vec2::from_angle(robot_pose.theta + ray.angle);
        let end = origin + dir * ray.range;
        let hit = scan.is_hit(ray);
        let end_cell = if hit { meta.world_to_index(end) } else { None };
        for (idx, _) in traverse(&meta, origin, end) {
            if Some(idx) == end_cell {
                break;
            }
            grid.cells[idx] = FREE;
        }
        if let Some(e) = end_cell {
            marks.push(e);
        }
    }
    for m in marks {
        grid.cells[m] = LETHAL;
    }
}

/// Maximal 8-connected components of `cells`, each sorted, ordered by their
/// smallest cell index.
pub fn label_clusters(meta: &GridMeta, cells: &[usize]) -> Vec<Vec<usize>> {
    let set: BTreeSet<usize> = cells.iter().copied().collect();
    let order: Vec<usize> = set.iter().copied().collect();
    let pos: BTreeMap<usize, usize> = order.iter().enumerate().map(|(k, &c)| (c, k)).collect();
    let mut uf = UnionFind::new(order.len());
    for (k, &c) in order.iter().enumerate() {
        for nb in meta.neighbors8(c) {
            if let Some(&j) = pos.get(&nb) {
                uf.union(k, j);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, &c) in order.iter().enumerate() {
        groups.entry(uf.find(k)).or_default().push(c);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|g| g[0]);
    out
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

fn centroid(meta: &GridMeta, cells: &[usize]) -> Vec2 {
    let sum = cells
        .iter()
        .fold(Vec2::ZERO, |acc, &c| acc + meta.index_center(c));
    sum * (1.0 / cells.len() as f64)
}

/// Movable obstacles layer state: parameters, extra candidate filters and
/// the persistent cluster registry.
pub struct MovableLayer {
    pub params: MovableLayerParams,
    pub registry: ClusterRegistry,
    filters: Vec<Box<dyn CandidateFilter>>,
}

impl MovableLayer {
    pub fn new(params: MovableLayerParams) -> Self {
        let wall = WallDistanceFilter {
            threshold: params.wall_distance_threshold,
        };
        Self {
            params,
            registry: ClusterRegistry::default(),
            filters: vec![Box::new(wall)],
        }
    }

    pub fn add_filter(&mut self, f: Box<dyn CandidateFilter>) {
        self.filters.push(f);
    }

    /// Classifies the obstacle layer's lethal marks and returns the
    /// per-cell override levels.
    pub fn update(
        &mut self,
        obstacle_marks: &[usize],
        static_map: &CostGrid,
        dfield: &DistanceField,
        now: f64,
    ) -> BTreeMap<usize, u8> {
        let candidates: Vec<usize> = obstacle_marks
            .iter()
            .copied()
            .filter(|&c| static_map.cells[c] != LETHAL)
            .filter(|&c| self.filters.iter().all(|f| f.keep(c, static_map, dfield)))
            .collect();
        let meta = static_map.meta;
        let components = label_clusters(&meta, &candidates);
        let centroids: Vec<Vec2> = components.iter().map(|c| centroid(&meta, c)).collect();

        // Greedy one-to-one matching on centroid distance; ties go to the
        // lower cluster id, then the lower component index.
        let mut pairs: Vec<(f64, u32, usize)> = Vec::new();
        for (ci, cen) in centroids.iter().enumerate() {
            for (&id, cl) in &self.registry.clusters {
                let d = cl.centroid.dist(*cen);
                if d <= self.params.cluster_match_radius {
                    pairs.push((d, id, ci));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut comp_to_id: Vec<Option<u32>> = vec![None; components.len()];
        let mut taken: BTreeSet<u32> = BTreeSet::new();
        for (_, id, ci) in pairs {
            if comp_to_id[ci].is_none() && !taken.contains(&id) {
                comp_to_id[ci] = Some(id);
                taken.insert(id);
            }
        }

        for cl in self.registry.clusters.values_mut() {
            cl.visible = false;
        }
        let mut overrides = BTreeMap::new();
        for (ci, cells) in components.into_iter().enumerate() {
            let id = match comp_to_id[ci] {
                Some(id) => id,
                None => {
                    let id = self.registry.next_id;
                    self.registry.next_id += 1;
                    self.registry.clusters.insert(
                        id,
                        ObstacleCluster {
                            id,
                            cells: Vec::new(),
                            centroid: centroids[ci],
                            level: CostLevel::Light,
                            last_seen: now,
                            visible: true,
                        },
                    );
                    id
                }
            };
            let cl = self
                .registry
                .clusters
                .get_mut(&id)
                .expect("cluster just matched or inserted");
            cl.centroid = centroids[ci];
            cl.last_seen = now;
            cl.visible = true;
            let cost = cl.level.cost();
            for &c in &cells {
                overrides.insert(c, cost);
            }
            cl.cells = cells;
        }
        let memory = self.params.occlusion_memory;
        self.registry
            .clusters
            .retain(|_, cl| cl.visible || now - cl.last_seen <= memory);
        overrides
    }

    pub fn apply_escalation(
        &mut self,
        event: &EscalationEvent,
        footprint_radius: f64,
    ) -> Option<u32> {
        apply_escalation(&mut self.registry, event, footprint_radius)
    }
}

/// Functional form of [`MovableLayer::update`] with only the wall-distance
/// filter installed.
pub fn movable_layer_update(
    obstacle_marks: &[usize],
    static_map: &CostGrid,
    dfield: &DistanceField,
    registry: ClusterRegistry,
    params: &MovableLayerParams,
    now: f64,
) -> (BTreeMap<usize, u8>, ClusterRegistry) {
    let mut layer = MovableLayer::new(params.clone());
    layer.registry = registry;
    let ov = layer.update(obstacle_marks, static_map, dfield, now);
    (ov, layer.registry)
}

/// Raises the level of the cluster nearest the point one footprint radius
/// ahead of the robot, if one lies within two footprint radii of it.
/// Returns the escalated cluster id.
pub fn apply_escalation(
    registry: &mut ClusterRegistry,
    event: &EscalationEvent,
    footprint_radius: f64,
) -> Option<u32> {
    let ahead = event.pose.position() + event.pose.heading() * footprint_radius;
    let reach = 2.0 * footprint_radius;
    let target = registry
        .clusters
        .values()
        .map(|c| (c.centroid.dist(ahead), c.id))
        .filter(|&(d, _)| d <= reach)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id);
    match target {
        Some(id) => {
            let cl = registry
                .clusters
                .get_mut(&id)
                .expect("id taken from registry");
            cl.level = cl.level.max(event.level);
            Some(id)
        }
        None => {
            debug!(
                "escalation {:?} at t={:.2}: no cluster in range",
                event.level, event.time
            );
            None
        }
    }
}

/// Precomputed exponential decay stamp for weighted soft inflation.
#[derive(Debug, Clone)]
pub struct Inflator {
    meta: GridMeta,
    /// (dcol, drow, distance in meters), excluding the center.
    offsets: Vec<(i64, i64, f64)>,
    decay_rate: f64,
    tables: BTreeMap<u8, Vec<u8>>,
}

impl Inflator {
    pub fn new(meta: GridMeta, inflation_radius: f64, decay_rate: f64) -> Self {
        let reach = (inflation_radius / meta.resolution).floor() as i64 + 1;
        let mut offsets = Vec::new();
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let d = ((dc * dc + dr * dr) as f64).sqrt() * meta.resolution;
                if d <= inflation_radius {
                    offsets.push((dc, dr, d));
                }
            }
        }
        Self {
            meta,
            offsets,
            decay_rate,
            tables: BTreeMap::new(),
        }
    }

    /// Contribution of a source of cost `c0` at distance `d`.
    pub fn contribution(c0: u8, decay_rate: f64, d: f64) -> u8 {
        (c0 as f64 * (-decay_rate * d).exp()).round() as u8
    }

    fn table(&mut self, c0: u8) -> &[u8] {
        let (offsets, rate) = (&self.offsets, self.decay_rate);
        self.tables.entry(c0).or_insert_with(|| {
            offsets
                .iter()
                .map(|&(_, _, d)| Inflator::contribution(c0, rate, d))
                .collect()
        })
    }

    /// Stamps every source into `out` with the max rule. Sources also raise
    /// their own cell to their base cost.
    pub fn stamp(&mut self, sources: impl IntoIterator<Item = (usize, u8)>, out: &mut CostGrid) {
        let meta = self.meta;
        let sources: Vec<(usize, u8)> = sources.into_iter().filter(|&(_, c0)| c0 != FREE).collect();
        for &(_, c0) in &sources {
            self.table(c0);
        }
        for (idx, c0) in sources {
            let c = meta.cell(idx);
            out.cells[idx] = out.cells[idx].max(c0);
            let table = &self.tables[&c0];
            for (k, &(dc, dr, _)) in self.offsets.iter().enumerate() {
                let (col, row) = (c.col as i64 + dc, c.row as i64 + dr);
                if meta.contains(col, row) {
                    let j = row as usize * meta.width + col as usize;
                    if out.cells[j] < table[k] {
                        out.cells[j] = table[k];
                    }
                }
            }
        }
    }
}

/// Weighted soft inflation: each cell takes the max of its own base cost and
/// `round(c0 * exp(-decay_rate * d))` over every source within
/// `inflation_radius`.
pub fn inflate(
    meta: &GridMeta,
    base: &BTreeMap<usize, u8>,
    params: &MovableLayerParams,
) -> CostGrid {
    let mut out = CostGrid::new(*meta, FREE);
    let mut inf = Inflator::new(*meta, params.inflation_radius, params.decay_rate);
    inf.stamp(base.iter().map(|(&i, &c)| (i, c)), &mut out);
    out
}
