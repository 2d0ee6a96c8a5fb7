//! Closed-loop trial: scan, obstacle layer, movable layer, inflate, compose,
//! progress check, plan, MPPI, step.

use std::collections::BTreeMap;
use std::path::PathBuf;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::checker::{self, CheckerState};
use crate::exec::Exec;
use crate::geom::{circle_box_gap, Pose2, Vec2};
use crate::grid::{compose_layers, distance_transform, CostGrid, FREE, LETHAL};
use crate::harness::render::{export_costmap_image, Overlays};
use crate::harness::scenario::Scenario;
use crate::layers::{obstacle_layer_update, CostLevel, EscalationEvent, Inflator, MovableLayer};
use crate::planning::{
    footprint_grid, mppi_step, plan_global, recovery_backup, Control, Path, PlanError,
};
use crate::world::{simulate_lidar, Movability, WorldState};

/// Escalated clusters are attributed to the body whose box lies within this
/// distance of the cluster centroid.
pub const ATTRIBUTION_RADIUS: f64 = 0.2;

#[derive(Debug, Clone, Default)]
pub struct TrialOptions {
    pub exec: Exec,
    /// Write one PNG of the master costmap per control tick.
    pub frames_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedEscalation {
    pub time: f64,
    pub level: CostLevel,
    pub cluster: Option<u32>,
    /// Ground-truth body behind the escalated cluster, if any.
    pub body: Option<u32>,
}

/// Everything the metrics are computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub scenario: String,
    pub seed: u64,
    pub baseline: bool,
    pub dt: f64,
    pub timeout: f64,
    /// True robot pose after each tick.
    pub trajectory: Vec<(f64, Pose2)>,
    pub goal: Vec2,
    pub goal_tolerance: f64,
    pub escalations: Vec<LoggedEscalation>,
    /// (time, cluster id, level) whenever a cluster appears or changes level.
    pub level_trace: Vec<(f64, u32, CostLevel)>,
    /// Ground-truth classes by body id.
    pub bodies: BTreeMap<u32, Movability>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub scenario: String,
    pub seed: u64,
    pub baseline: bool,
    pub success: bool,
    pub nav_time: f64,
    pub final_levels: BTreeMap<u32, CostLevel>,
    pub movability_correct: bool,
    pub escalation_log: Vec<LoggedEscalation>,
    pub levels_monotone: bool,
}

pub fn expected_level(class: Movability) -> CostLevel {
    match class {
        Movability::Light => CostLevel::Light,
        Movability::Heavy => CostLevel::Heavy,
        Movability::Immovable => CostLevel::Lethal,
    }
}

/// Final per-body levels: the highest level escalated onto each body,
/// Light for bodies never escalated.
pub fn final_levels(log: &TrialLog) -> BTreeMap<u32, CostLevel> {
    let mut out: BTreeMap<u32, CostLevel> = log
        .bodies
        .keys()
        .map(|&id| (id, CostLevel::Light))
        .collect();
    for e in &log.escalations {
        if let Some(b) = e.body {
            if let Some(l) = out.get_mut(&b) {
                *l = (*l).max(e.level);
            }
        }
    }
    out
}

pub fn levels_monotone(trace: &[(f64, u32, CostLevel)]) -> bool {
    let mut last: BTreeMap<u32, CostLevel> = BTreeMap::new();
    trace
        .iter()
        .all(|&(_, id, level)| last.insert(id, level).map_or(true, |prev| prev <= level))
}

/// Pure function of the trial log.
pub fn metrics_from_log(log: &TrialLog) -> TrialMetrics {
    let arrival = log
        .trajectory
        .iter()
        .find(|(_, p)| p.position().dist(log.goal) <= log.goal_tolerance)
        .map(|&(t, _)| t);
    let success = arrival.is_some_and(|t| t <= log.timeout + 1e-9);
    let levels = final_levels(log);
    let correct = log
        .bodies
        .iter()
        .all(|(id, class)| levels[id] == expected_level(*class));
    TrialMetrics {
        scenario: log.scenario.clone(),
        seed: log.seed,
        baseline: log.baseline,
        success,
        nav_time: if success {
            arrival.unwrap_or(0.0)
        } else {
            log.timeout
        },
        final_levels: levels,
        movability_correct: correct,
        escalation_log: log.escalations.clone(),
        levels_monotone: levels_monotone(&log.level_trace),
    }
}

/// splitmix64 finalizer over (seed, tick, stream).
pub fn mix_seed(seed: u64, tick: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(tick.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_LIDAR: u64 = 1;
const STREAM_MPPI: u64 = 2;
const STREAM_POSE: u64 = 3;

pub fn run_trial(scenario: &Scenario, seed: u64) -> TrialMetrics {
    metrics_from_log(&run_trial_logged(scenario, seed, &TrialOptions::default()))
}

pub fn run_trial_with(scenario: &Scenario, seed: u64, opts: &TrialOptions) -> TrialMetrics {
    metrics_from_log(&run_trial_logged(scenario, seed, opts))
}

/// Nearest body whose box lies within [`ATTRIBUTION_RADIUS`] of `p`.
fn attribute(world: &WorldState, p: Vec2) -> Option<u32> {
    world
        .bodies
        .iter()
        .map(|b| (circle_box_gap(p, 0.0, &b.aabb()), b.id))
        .filter(|&(d, _)| d <= ATTRIBUTION_RADIUS)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
}

pub fn run_trial_logged(scenario: &Scenario, seed: u64, opts: &TrialOptions) -> TrialLog {
    let cfg = &scenario.config;
    let dt = cfg.trial.dt;
    let static_map = scenario.static_map.clone();
    let meta = static_map.meta;
    let dfield = distance_transform(&static_map);
    let mut world = WorldState::new(
        static_map.clone(),
        scenario.bodies.clone(),
        scenario.robot_start,
        cfg.world.clone(),
    );
    let radius = cfg.world.footprint_radius;

    let mut inflator = Inflator::new(meta, cfg.layers.inflation_radius, cfg.layers.decay_rate);
    let mut static_inflated = CostGrid::new(meta, FREE);
    inflator.stamp(
        static_map.lethal_indices().into_iter().map(|i| (i, LETHAL)),
        &mut static_inflated,
    );

    let mut obstacle = CostGrid::new(meta, FREE);
    let mut movable = MovableLayer::new(cfg.layers.clone());
    let mut checker_state = CheckerState::default();

    let mut log = TrialLog {
        scenario: scenario.name.clone(),
        seed,
        baseline: scenario.baseline_mode,
        dt,
        timeout: cfg.trial.timeout,
        trajectory: Vec::new(),
        goal: scenario.goal,
        goal_tolerance: cfg.planner.goal_tolerance,
        escalations: Vec::new(),
        level_trace: Vec::new(),
        bodies: scenario.bodies.iter().map(|b| (b.id, b.class)).collect(),
    };

    let mut pending: Vec<EscalationEvent> = Vec::new();
    let mut path: Option<Path> = None;
    let mut last_plan: Option<f64> = None;
    let mut no_path_since: Option<f64> = None;
    let mut replan = true;
    let mut recovery: Vec<Control> = Vec::new();
    let mut nominal: Vec<Control> = vec![(0.0, 0.0); cfg.mppi.horizon];
    let mut known_levels: BTreeMap<u32, CostLevel> = BTreeMap::new();
    let mut pose_offset = (0.0, 0.0, 0.0);
    let mut pose_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0, STREAM_POSE));
    let noise_xy = Normal::new(0.0, cfg.trial.sigma_xy.max(0.0)).expect("finite sigma");
    let noise_th = Normal::new(0.0, cfg.trial.sigma_theta.max(0.0)).expect("finite sigma");

    let mut tick: u64 = 0;
    loop {
        let now = world.time;
        if world.robot.pose.position().dist(scenario.goal) <= cfg.planner.goal_tolerance {
            info!(
                "{} seed {}: goal reached at t={:.1}",
                scenario.name, seed, now
            );
            break;
        }
        if now >= cfg.trial.timeout - 1e-9 {
            info!("{} seed {}: timeout", scenario.name, seed);
            break;
        }
        if no_path_since.is_some_and(|t| now - t >= cfg.trial.no_path_abort) {
            info!(
                "{} seed {}: no path for {:.0} s, giving up",
                scenario.name, seed, cfg.trial.no_path_abort
            );
            break;
        }

        let truth = world.robot.pose;
        let est = Pose2::new(
            truth.x + pose_offset.0,
            truth.y + pose_offset.1,
            truth.theta + pose_offset.2,
        );

        let scan = simulate_lidar(
            &world,
            &cfg.lidar,
            mix_seed(seed, tick, STREAM_LIDAR),
            opts.exec,
        );

        for ev in pending.drain(..) {
            let cluster = movable.apply_escalation(&ev, radius);
            let body = cluster
                .and_then(|id| movable.registry.get(id))
                .and_then(|c| attribute(&world, c.centroid));
            debug!(
                "t={:.1} escalation {:?} cluster {:?} body {:?}",
                ev.time, ev.level, cluster, body
            );
            log.escalations.push(LoggedEscalation {
                time: ev.time,
                level: ev.level,
                cluster,
                body,
            });
            replan = true;
            if ev.level == CostLevel::Lethal {
                recovery = recovery_backup(
                    cfg.planner.recovery_duration,
                    dt,
                    cfg.planner.recovery_speed,
                );
            }
        }

        obstacle_layer_update(&scan, est, &mut obstacle);
        let marks = obstacle.lethal_indices();
        let mut overrides = movable.update(&marks, &static_map, &dfield, now);
        if scenario.baseline_mode {
            overrides.clear();
        }
        for (id, cl) in &movable.registry.clusters {
            if known_levels.insert(*id, cl.level) != Some(cl.level) {
                log.level_trace.push((now, *id, cl.level));
            }
        }

        let mut inflated = static_inflated.clone();
        inflator.stamp(
            marks
                .iter()
                .filter(|&&i| static_map.cells[i] != LETHAL)
                .map(|&i| (i, overrides.get(&i).copied().unwrap_or(LETHAL))),
            &mut inflated,
        );
        let master = compose_layers(&static_map, &obstacle, &overrides, &inflated)
            .expect("layers share one grid");
        let control_grid = footprint_grid(&master, cfg.planner.inscribed_radius);

        let last = world.last_step;
        let (st, ev) = checker::update(
            &checker_state,
            &cfg.checker,
            last.speed,
            last.cmd_v,
            last.cmd_omega,
            est,
            now,
        );
        checker_state = st;
        pending.extend(ev);

        let cmd = if !recovery.is_empty() {
            let c = recovery.remove(0);
            if recovery.is_empty() {
                replan = true;
            }
            c
        } else {
            let due = last_plan.map_or(true, |t| now - t >= cfg.planner.replan_period - 1e-9);
            let retry = path.is_none()
                && last_plan.map_or(true, |t| now - t >= cfg.trial.no_path_retry - 1e-9);
            if replan || (path.is_some() && due) || retry {
                replan = false;
                last_plan = Some(now);
                match plan_global(
                    &control_grid,
                    est.position(),
                    scenario.goal,
                    cfg.planner.w_cost,
                ) {
                    Ok(p) => {
                        path = Some(p);
                        no_path_since = None;
                    }
                    Err(PlanError::StartBlocked) => {
                        debug!("t={:.1} start blocked, backing up", now);
                        recovery = recovery_backup(
                            cfg.planner.recovery_duration,
                            dt,
                            cfg.planner.recovery_speed,
                        );
                    }
                    Err(e) => {
                        debug!("t={now:.1} planner: {e}");
                        path = None;
                        no_path_since.get_or_insert(now);
                    }
                }
            }
            if !recovery.is_empty() {
                recovery.remove(0)
            } else if let Some(p) = &path {
                let local = p.window(est.position(), cfg.planner.local_window);
                let mut robot = world.robot;
                robot.pose = est;
                match mppi_step(
                    &robot,
                    &nominal,
                    &local,
                    &control_grid,
                    &cfg.mppi,
                    mix_seed(seed, tick, STREAM_MPPI),
                    opts.exec,
                ) {
                    Ok(out) => {
                        nominal = out.nominal;
                        out.cmd
                    }
                    Err(e) => {
                        debug!("t={now:.1} mppi: {e}");
                        nominal = vec![(0.0, 0.0); cfg.mppi.horizon];
                        recovery = recovery_backup(
                            cfg.planner.recovery_duration,
                            dt,
                            cfg.planner.recovery_speed,
                        );
                        replan = true;
                        recovery.remove(0)
                    }
                }
            } else {
                (0.0, 0.0)
            }
        };

        if let Some(dir) = &opts.frames_dir {
            let overlays = Overlays {
                path: path
                    .as_ref()
                    .map(|p| p.waypoints.clone())
                    .unwrap_or_default(),
                robot: Some((truth.position(), radius)),
                clusters: movable
                    .registry
                    .clusters
                    .values()
                    .map(|c| (c.centroid, c.level))
                    .collect(),
            };
            let file = dir.join(format!("frame_{tick:05}.png"));
            if let Err(e) = export_costmap_image(&master, &overlays, &file) {
                log::warn!("frame export failed: {e}");
            }
        }

        let info = world.step(cmd, dt);
        log::trace!(
            "t={now:.1} pose=({:.2},{:.2},{:.2}) cmd=({:.2},{:.2}) speed={:.3} pushed={:?} jammed={}",
            truth.x, truth.y, truth.theta, cmd.0, cmd.1, info.speed, info.pushed, info.jammed
        );
        if cfg.trial.pose_noise {
            pose_offset.0 += noise_xy.sample(&mut pose_rng);
            pose_offset.1 += noise_xy.sample(&mut pose_rng);
            pose_offset.2 += noise_th.sample(&mut pose_rng);
        }
        tick += 1;
        log.trajectory.push((world.time, world.robot.pose));
    }
    log
}
