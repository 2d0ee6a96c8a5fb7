//! Global planner and MPPI controller behavior.

use std::sync::Arc;

use namo_core::geom::{Pose2, Vec2};
use namo_core::grid::{Cell, CostGrid, GridMeta, FREE, LETHAL, LIGHT};
use namo_core::planning::{
    mppi_step, plan_global, recovery_backup, rollout, rollout_cost, CostWeights, MppiParams, Path,
    PlanError, PlannerParams, LETHAL_PENALTY,
};
use namo_core::world::{RobotState, WorldParams, WorldState};
use namo_core::Exec;

fn free(w: usize, h: usize) -> CostGrid {
    CostGrid::new(GridMeta::new(w, h, 0.05, Vec2::ZERO).unwrap(), FREE)
}

fn robot(x: f64, y: f64, theta: f64) -> RobotState {
    RobotState {
        pose: Pose2::new(x, y, theta),
        v: 0.0,
        omega: 0.0,
        footprint_radius: 0.3,
    }
}

fn straight(a: Vec2, b: Vec2, step: f64) -> Path {
    let n = (a.dist(b) / step).round() as usize;
    Path {
        waypoints: (0..=n)
            .map(|i| a + (b - a) * (i as f64 / n as f64))
            .collect(),
        total_cost: 0.0,
    }
}

#[test]
fn start_equal_goal_is_a_single_waypoint() {
    let g = free(10, 10);
    let p = plan_global(&g, Vec2::new(0.22, 0.22), Vec2::new(0.21, 0.23), 8.0).unwrap();
    assert_eq!(p.waypoints.len(), 1);
    assert_eq!(p.total_cost, 0.0);
}

#[test]
fn lethal_start_and_unreachable_goal() {
    let mut g = free(10, 10);
    g.set(Cell::new(0, 0), LETHAL);
    assert_eq!(
        plan_global(&g, Vec2::new(0.02, 0.02), Vec2::new(0.4, 0.4), 8.0),
        Err(PlanError::StartBlocked)
    );
    for row in 0..10 {
        g.set(Cell::new(5, row), LETHAL);
    }
    assert_eq!(
        plan_global(&g, Vec2::new(0.1, 0.1), Vec2::new(0.4, 0.4), 8.0),
        Err(PlanError::NoPath)
    );
}

/// 6 m x 4 m field split by a wall at x = 3 m. A 0.5 m thick LIGHT strip
/// fills the direct doorway at y = 1.0-1.5 m; a second, open doorway sits at
/// `detour_y`. The robot goes from (1, 1.25) to (5, 1.25).
fn strip_field(detour_y: f64) -> CostGrid {
    let mut g = free(120, 80);
    let meta = g.meta;
    for i in 0..meta.len() {
        let p = meta.index_center(i);
        let in_wall = (2.75..3.25).contains(&p.x);
        let doorway = (1.0..1.5).contains(&p.y);
        let detour = (detour_y..detour_y + 0.5).contains(&p.y);
        if in_wall && doorway {
            g.cells[i] = LIGHT;
        } else if in_wall && !detour {
            g.cells[i] = LETHAL;
        }
    }
    g
}

fn crosses_light(g: &CostGrid, p: &Path) -> bool {
    p.waypoints.iter().any(|&q| g.cost_at(q) == LIGHT)
}

#[test]
fn light_strip_is_crossed_iff_the_detour_costs_more() {
    let w_cost = PlannerParams::default().w_cost;
    let (s, t) = (Vec2::new(1.0, 1.25), Vec2::new(5.0, 1.25));
    // Strip penalty: 10 cells at w_cost * 80/254 extra each, ~1.26 m.
    for (detour_y, through) in [(1.75, false), (3.4, true)] {
        let g = strip_field(detour_y);
        let p = plan_global(&g, s, t, w_cost).unwrap();
        assert_eq!(crosses_light(&g, &p), through, "detour at y={detour_y}");

        let mut blocked = g.clone();
        for c in blocked.cells.iter_mut() {
            if *c == LIGHT {
                *c = LETHAL;
            }
        }
        let d = plan_global(&blocked, s, t, w_cost).unwrap();
        assert!(!crosses_light(&blocked, &d));
        assert_eq!(through, p.total_cost < d.total_cost);
    }
    // Strip escalated to lethal with no other doorway: no path.
    let mut sealed = strip_field(-10.0);
    for c in sealed.cells.iter_mut() {
        if *c == LIGHT {
            *c = LETHAL;
        }
    }
    assert_eq!(plan_global(&sealed, s, t, w_cost), Err(PlanError::NoPath));
}

#[test]
fn rollout_cost_examples() {
    let g = free(100, 100);
    let w = CostWeights::from(&MppiParams::default());
    let path = straight(Vec2::new(1.0, 1.0), Vec2::new(2.0, 1.0), 0.05);
    let still = vec![(0.0, 0.0); 10];
    let on_goal = rollout(Pose2::new(2.0, 1.0, 0.0), &still, 0.1);
    assert_eq!(rollout_cost(&on_goal, &still, &path, &g, &w), 0.0);

    // Identical trajectory over FREE and LIGHT cells, away from the goal.
    let poses = rollout(Pose2::new(1.0, 1.0, 0.0), &[(0.5, 0.0); 10], 0.1);
    let ctrl = vec![(0.5, 0.0); 10];
    let mut light = g.clone();
    light.cells.fill(LIGHT);
    let diff =
        rollout_cost(&poses, &ctrl, &path, &light, &w) - rollout_cost(&poses, &ctrl, &path, &g, &w);
    assert!((diff - w.cost * (80.0 / 254.0) * 10.0).abs() < 1e-9);

    let mut wall = g.clone();
    wall.set(Cell::new(25, 20), LETHAL);
    assert!(rollout_cost(&poses, &ctrl, &path, &wall, &w) >= LETHAL_PENALTY);
}

#[test]
fn zero_noise_on_goal_stays_put() {
    let g = free(100, 100);
    let params = MppiParams {
        sigma_v: 0.0,
        sigma_omega: 0.0,
        ..MppiParams::default()
    };
    let path = Path {
        waypoints: vec![Vec2::new(2.0, 2.0)],
        total_cost: 0.0,
    };
    let nominal = vec![(0.0, 0.0); params.horizon];
    let out = mppi_step(
        &robot(2.0, 2.0, 0.4),
        &nominal,
        &path,
        &g,
        &params,
        7,
        Exec::Sequential,
    )
    .unwrap();
    assert!(out.cmd.0.abs() < 1e-12 && out.cmd.1.abs() < 1e-12);
}

#[test]
fn mppi_drives_forward_along_a_clear_path() {
    let g = free(120, 60);
    let params = MppiParams::default();
    let path = straight(Vec2::new(1.0, 1.5), Vec2::new(4.0, 1.5), 0.05);
    let nominal = vec![(0.0, 0.0); params.horizon];
    let forward = (0..100)
        .filter(|&seed| {
            let out = mppi_step(
                &robot(1.0, 1.5, 0.0),
                &nominal,
                &path,
                &g,
                &params,
                seed,
                Exec::Sequential,
            )
            .unwrap();
            out.cmd.0 > 0.0
        })
        .count();
    assert!(forward >= 95, "forward in {forward}/100 seeds");
}

#[test]
fn mppi_backs_away_when_pinned_against_lethal() {
    // Lethal block starts right in front of the robot's nose.
    let mut g = free(80, 80);
    for i in 0..g.meta.len() {
        if g.meta.index_center(i).x > 1.05 {
            g.cells[i] = LETHAL;
        }
    }
    let params = MppiParams::default();
    let path = straight(Vec2::new(1.0, 2.0), Vec2::new(0.2, 3.0), 0.05);
    let nominal = vec![(0.0, 0.0); params.horizon];
    let out = mppi_step(
        &robot(1.0, 2.0, 0.0),
        &nominal,
        &path,
        &g,
        &params,
        3,
        Exec::Sequential,
    )
    .unwrap();
    assert!(out.weighted.iter().any(|c| c.0 < 0.0), "{:?}", out.weighted);
}

#[test]
fn mppi_is_deterministic_and_exec_independent() {
    let g = free(100, 60);
    let params = MppiParams::default();
    let path = straight(Vec2::new(1.0, 1.5), Vec2::new(4.0, 2.5), 0.05);
    let nominal = vec![(0.2, 0.0); params.horizon];
    let r = robot(1.0, 1.5, 0.3);
    let a = mppi_step(&r, &nominal, &path, &g, &params, 11, Exec::Sequential).unwrap();
    let b = mppi_step(&r, &nominal, &path, &g, &params, 11, Exec::Sequential).unwrap();
    let c = mppi_step(&r, &nominal, &path, &g, &params, 11, Exec::Parallel).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn recovery_backup_reverses() {
    let p = PlannerParams::default();
    let cmds = recovery_backup(p.recovery_duration, 0.1, p.recovery_speed);
    assert_eq!(cmds, vec![(-0.3, 0.0); 15]);

    let open = Arc::new(free(100, 100));
    let mut w = WorldState::new(
        open,
        vec![],
        Pose2::new(2.5, 2.5, 0.0),
        WorldParams::default(),
    );
    for &c in &cmds {
        w.step(c, 0.1);
    }
    assert!((w.robot.pose.x - (2.5 - 0.45)).abs() < 1e-9);

    // Wall 0.2 m behind the footprint: the robot stops against it.
    let mut g = free(100, 100);
    for row in 0..100 {
        for col in 0..40 {
            g.set(Cell::new(col, row), LETHAL);
        }
    }
    let mut w = WorldState::new(
        Arc::new(g),
        vec![],
        Pose2::new(2.5, 2.5, 0.0),
        WorldParams::default(),
    );
    for &c in &cmds {
        w.step(c, 0.1);
        assert!(w.robot_clearance() >= -1e-9);
    }
    assert!(
        w.robot.pose.x > 2.3 - 1e-3 && w.robot.pose.x < 2.3 + 1e-3,
        "{}",
        w.robot.pose.x
    );
}
