//! Slow-pose progress checker.
//!
//! Compares odometry speed against the commanded speed once per control
//! tick. A sustained drop below `drop_ratio` of the command raises a Heavy
//! escalation; if the robot then stays stalled while still commanding motion
//! within the same obstruction episode, a Lethal escalation follows.
//!
//! Timeline for a head-on push into an immovable body with the defaults:
//! Heavy at contact + 0.8 s, Lethal once the stall has lasted 1.5 s *and*
//! the 3 s cooldown since Heavy has elapsed.

use serde::{Deserialize, Serialize};

use crate::geom::Pose2;
use crate::layers::{CostLevel, EscalationEvent};

/// Commands slower than this never count as attempted motion.
pub const MIN_COMMAND_SPEED: f64 = 0.05;
/// The ratio condition must stay clear this long to close an episode.
pub const EPISODE_CLEAR_TIME: f64 = 0.5;
/// Slack on time comparisons so accumulated tick times hit exact windows.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckerParams {
    pub drop_ratio: f64,
    pub freeze_window: f64,
    pub settling_period: f64,
    pub cooldown: f64,
    pub stall_speed: f64,
    pub stall_window: f64,
    pub rotation_omega_threshold: f64,
}

impl Default for CheckerParams {
    fn default() -> Self {
        Self {
            drop_ratio: 0.3,
            freeze_window: 0.8,
            settling_period: 2.0,
            cooldown: 3.0,
            stall_speed: 0.02,
            stall_window: 1.5,
            rotation_omega_threshold: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Settling,
    Monitoring,
    Cooldown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckerState {
    pub phase: Phase,
    pub started_at: Option<f64>,
    pub below_since: Option<f64>,
    pub stalled_since: Option<f64>,
    /// Exponential average of speed while cruising unobstructed (logged only).
    pub baseline_speed: f64,
    pub last_trigger: Option<f64>,
    /// True between a Heavy trigger and the end of its obstruction episode.
    pub in_episode: bool,
    pub clear_since: Option<f64>,
}

impl Default for CheckerState {
    fn default() -> Self {
        Self {
            phase: Phase::Settling,
            started_at: None,
            below_since: None,
            stalled_since: None,
            baseline_speed: 0.0,
            last_trigger: None,
            in_episode: false,
            clear_since: None,
        }
    }
}

/// One control-tick update. Pure: the same inputs always give the same
/// output state and event.
pub fn update(
    state: &CheckerState,
    params: &CheckerParams,
    measured_speed: f64,
    cmd_v: f64,
    cmd_omega: f64,
    pose: Pose2,
    now: f64,
) -> (CheckerState, Option<EscalationEvent>) {
    let mut s = state.clone();
    let measured = if measured_speed.is_finite() {
        measured_speed.max(0.0)
    } else {
        0.0
    };
    let cmd = if cmd_v.is_finite() { cmd_v.abs() } else { 0.0 };
    let omega = if cmd_omega.is_finite() {
        cmd_omega.abs()
    } else {
        0.0
    };
    let started = *s.started_at.get_or_insert(now);

    if now - started < params.settling_period - TIME_EPS {
        s.phase = Phase::Settling;
        s.below_since = None;
        s.stalled_since = None;
        return (s, None);
    }

    let attempting = cmd >= MIN_COMMAND_SPEED;
    let rotating_in_place = cmd < MIN_COMMAND_SPEED && omega > params.rotation_omega_threshold;
    let slow = attempting && !rotating_in_place && measured < params.drop_ratio * cmd;
    let stalled = attempting && measured < params.stall_speed;

    if attempting && !slow {
        const ALPHA: f64 = 0.05;
        s.baseline_speed += ALPHA * (measured - s.baseline_speed);
    }

    // Ratio timer.
    if slow {
        s.below_since.get_or_insert(now);
        s.clear_since = None;
    } else {
        s.below_since = None;
        let since = *s.clear_since.get_or_insert(now);
        if s.in_episode && now - since >= EPISODE_CLEAR_TIME - TIME_EPS {
            s.in_episode = false;
        }
    }
    // Stall timer, armed only inside an episode.
    if s.in_episode && stalled {
        s.stalled_since.get_or_insert(now);
    } else {
        s.stalled_since = None;
    }

    let cooled = s
        .last_trigger
        .map_or(true, |t| now - t >= params.cooldown - TIME_EPS);
    s.phase = if cooled {
        Phase::Monitoring
    } else {
        Phase::Cooldown
    };
    if !cooled {
        return (s, None);
    }

    if s.in_episode {
        if let Some(t) = s.stalled_since {
            if now - t >= params.stall_window - TIME_EPS {
                s.in_episode = false;
                s.stalled_since = None;
                s.below_since = None;
                let ev = trigger(&mut s, CostLevel::Lethal, pose, now);
                return (s, Some(ev));
            }
        }
        return (s, None);
    }

    if let Some(t) = s.below_since {
        if now - t >= params.freeze_window - TIME_EPS {
            s.in_episode = true;
            s.clear_since = None;
            let ev = trigger(&mut s, CostLevel::Heavy, pose, now);
            return (s, Some(ev));
        }
    }
    (s, None)
}

fn trigger(s: &mut CheckerState, level: CostLevel, pose: Pose2, now: f64) -> EscalationEvent {
    s.last_trigger = Some(now);
    s.phase = Phase::Cooldown;
    EscalationEvent {
        level,
        pose,
        time: now,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DT: f64 = 0.1;

    /// Feeds `(measured, cmd_v, cmd_omega)` from `t0` in steps of DT and
    /// collects every emitted event.
    fn run(
        params: &CheckerParams,
        state: &mut CheckerState,
        t0: f64,
        ticks: usize,
        input: impl Fn(f64) -> (f64, f64, f64),
    ) -> Vec<EscalationEvent> {
        let mut out = Vec::new();
        for k in 0..ticks {
            let now = t0 + k as f64 * DT;
            let (m, v, w) = input(now);
            let (s, ev) = update(state, params, m, v, w, Pose2::default(), now);
            *state = s;
            out.extend(ev);
        }
        out
    }

    fn settled(params: &CheckerParams) -> (CheckerState, f64) {
        let mut st = CheckerState::default();
        run(params, &mut st, 0.0, 30, |_| (0.5, 0.5, 0.0));
        (st, 3.0)
    }

    #[test]
    fn light_push_never_triggers() {
        let p = CheckerParams::default();
        let (mut st, t0) = settled(&p);
        assert!(run(&p, &mut st, t0, 300, |_| (0.425, 0.5, 0.0)).is_empty());
    }

    #[test]
    fn heavy_push_triggers_after_freeze_window() {
        let p = CheckerParams::default();
        let (mut st, t0) = settled(&p);
        let ev = run(&p, &mut st, t0, 10, |_| (0.125, 0.5, 0.0));
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].level, CostLevel::Heavy);
        assert!((ev[0].time - t0 - 0.8).abs() <= DT + 1e-9);
        // Sustained heavy pushing stays a single episode: no Lethal, no repeat.
        let more = run(&p, &mut st, t0 + 1.0, 200, |_| (0.125, 0.5, 0.0));
        assert!(more.is_empty());
    }

    #[test]
    fn immovable_escalates_heavy_then_lethal() {
        let p = CheckerParams::default();
        let (mut st, t0) = settled(&p);
        let ev = run(&p, &mut st, t0, 60, |_| (0.0, 0.5, 0.0));
        let levels: Vec<CostLevel> = ev.iter().map(|e| e.level).collect();
        assert_eq!(levels, vec![CostLevel::Heavy, CostLevel::Lethal]);
        let gap = ev[1].time - ev[0].time;
        assert!(gap >= p.cooldown - 1e-9 && gap >= p.stall_window);
        assert!((ev[1].time - ev[0].time - p.cooldown.max(p.stall_window)).abs() <= DT + 1e-9);
    }

    #[test]
    fn settling_suppresses_everything() {
        let p = CheckerParams::default();
        let mut st = CheckerState::default();
        let ev = run(&p, &mut st, 0.0, 19, |_| (0.0, 0.5, 0.0));
        assert!(ev.is_empty());
        assert_eq!(st.phase, Phase::Settling);
    }

    #[test]
    fn rotation_in_place_is_exempt() {
        let p = CheckerParams::default();
        let (mut st, t0) = settled(&p);
        assert!(run(&p, &mut st, t0, 200, |_| (0.01, 0.0, 1.0)).is_empty());
        assert!(run(&p, &mut st, t0 + 20.0, 200, |_| (0.0, 0.04, 0.0)).is_empty());
    }

    #[test]
    fn cooldown_spacing() {
        let p = CheckerParams::default();
        let (mut st, t0) = settled(&p);
        // Alternate obstruction and free motion so several episodes occur.
        let ev = run(&p, &mut st, t0, 400, |t| {
            if ((t - t0) / 1.5) as i64 % 2 == 0 {
                (0.0, 0.5, 0.0)
            } else {
                (0.5, 0.5, 0.0)
            }
        });
        assert!(ev.len() >= 2);
        for w in ev.windows(2) {
            assert!(w[1].time - w[0].time >= p.cooldown - 1e-9);
        }
    }
}
