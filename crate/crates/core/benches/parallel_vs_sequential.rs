use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use namo_core::harness::scenario::bundled;
use namo_core::harness::run_batch;
use namo_core::planning::{footprint_grid, mppi_step, plan_global, MppiParams, PlannerParams};
use namo_core::world::{simulate_lidar, WorldState};
use namo_core::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn world(name: &str) -> WorldState {
    let s = bundled(name).unwrap();
    WorldState::new(s.static_map.clone(), s.bodies.clone(), s.robot_start, s.config.world.clone())
}

fn mppi(c: &mut Criterion) {
    let s = bundled("2-b").unwrap();
    let grid = footprint_grid(&s.static_map, PlannerParams::default().inscribed_radius);
    let path = plan_global(&grid, s.robot_start.position(), s.goal, 8.0).unwrap();
    let robot = world("2-b").robot;
    let params = MppiParams::default();
    let nominal = vec![(0.0, 0.0); params.horizon];
    let mut g = c.benchmark_group("mppi_step");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| mppi_step(&robot, &nominal, &path, &grid, &params, 7, exec).unwrap())
        });
    }
    g.finish();
}

fn lidar(c: &mut Criterion) {
    let w = world("3");
    let params = bundled("3").unwrap().config.lidar;
    let mut g = c.benchmark_group("simulate_lidar");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| simulate_lidar(&w, &params, 7, exec)));
    }
    g.finish();
}

fn batch(c: &mut Criterion) {
    let s = bundled("1-a").unwrap();
    let mut g = c.benchmark_group("run_batch_1a_x2");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| run_batch(&s, 2, 0, exec)));
    }
    g.finish();
}

criterion_group!(benches, mppi, lidar, batch);
criterion_main!(benches);
