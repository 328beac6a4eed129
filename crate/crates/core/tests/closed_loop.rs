use std::f64::consts::PI;

use serpent_core::metrics::tracking_summary;
use serpent_core::sim::{
    plant_step, ring_starts, run_scenario, run_scenario_from, DisturbanceEvent, DisturbanceKind,
    PlantParams, PlantState, Scenario, SimStart,
};
use serpent_core::tracker::{Mode, Pose2, TrackerCommand, Waypoint};

fn drive(cmd: TrackerCommand, seconds: f64) -> Pose2 {
    let params = PlantParams::default();
    let mut s = PlantState {
        pose: Pose2::default(),
        time: 0.0,
    };
    for _ in 0..(seconds / 0.01).round() as usize {
        s = plant_step(&s, &cmd, &params, 0.01);
    }
    s.pose
}

#[test]
fn plant_examples() {
    let offset = PlantParams::default().steering_offset;
    let p = drive(TrackerCommand::SidewindWithSteering { delta: offset }, 10.0);
    assert!((p.x - 1.0).abs() < 1e-9 && p.y.abs() < 1e-12 && p.yaw == 0.0);

    let p = drive(TrackerCommand::TurnLeft, 2.0);
    assert!((p.yaw - 0.5).abs() < 1e-12 && p.x == 0.0 && p.y == 0.0);

    // yaw rate k·(δ − δ₀)/L = 0.3·0.1/0.5
    let p = drive(TrackerCommand::SidewindWithSteering { delta: offset + 0.1 }, 5.0);
    assert!((p.yaw - 0.3).abs() < 1e-9);
    let r = 0.1 / 0.06;
    assert!((p.x - r * 0.3f64.sin()).abs() < 1e-9);
    assert!((p.y - r * (1.0 - 0.3f64.cos())).abs() < 1e-9);
}

#[test]
fn starts_behind_the_waypoint_converge() {
    let wp = Waypoint::new(0.0, 0.0, 0.0);
    for seed in 0..3 {
        for start in ring_starts(13, seed, &wp, 1.5, 2.4, 40f64.to_radians()) {
            let log = run_scenario(&Scenario::new(vec![wp], start)).unwrap();
            assert!(log.finished, "seed {seed} start {start:?}");
            let last = log.status.last().unwrap();
            assert!(last.errors.distance <= 0.2);
            assert!(last.errors.yaw.abs() <= 30f64.to_radians());
        }
    }
}

#[test]
fn waypoint_behind_turns_before_moving() {
    let mut s = Scenario::new(vec![Waypoint::new(-2.0, 0.0, PI)], Pose2::default());
    s.duration = 5.0;
    let log = run_scenario(&s).unwrap();
    let first = log.status[0];
    assert_eq!(first.mode, Mode::TurnFar);
    assert!(matches!(first.command, TrackerCommand::TurnLeft | TrackerCommand::TurnRight));
    let end = log.samples.last().unwrap().pose;
    assert!(end.x == 0.0 && end.y == 0.0 && end.yaw.abs() > 1.0);
}

#[test]
fn runs_are_deterministic() {
    let mut s = Scenario::new(
        vec![Waypoint::new(2.0, 0.5, 0.2), Waypoint::new(3.5, 1.0, 0.4)],
        Pose2::default(),
    );
    s.plant.position_noise_std = 0.005;
    s.plant.yaw_noise_std = 0.01;
    s.plant.seed = 17;
    s.duration = 60.0;
    assert_eq!(run_scenario(&s).unwrap(), run_scenario(&s).unwrap());
    let mut other = s.clone();
    other.plant.seed = 18;
    assert_ne!(run_scenario(&s).unwrap().samples, run_scenario(&other).unwrap().samples);
}

/// Approaching from the waypoint's front side, the blended heading law
/// settles on a bounded orbit that skirts the near radius without entering it.
#[test]
fn front_approach_orbits_outside_near_zone() {
    let wp = Waypoint::new(0.0, 0.0, 0.0);
    let log = run_scenario(&Scenario::new(vec![wp], Pose2::new(2.0, 0.0, PI))).unwrap();
    assert!(!log.finished && log.timed_out);
    let tail = log.samples.iter().filter(|s| s.t >= 200.0);
    let (lo, hi) = tail.fold((f64::INFINITY, 0.0f64), |(lo, hi), s| {
        let r = s.pose.x.hypot(s.pose.y);
        (lo.min(r), hi.max(r))
    });
    assert!(lo > 0.35 && hi < 1.5, "orbit radius {lo}..{hi}");
}

fn disturbed() -> Scenario {
    let mut s = Scenario::new(
        vec![Waypoint::new(2.0, 0.0, 0.0), Waypoint::new(4.0, 0.0, 0.0)],
        Pose2::default(),
    );
    s.disturbances = vec![
        DisturbanceEvent {
            time: 10.005,
            kind: DisturbanceKind::PositionJump { dx: -1.0, dy: 0.0 },
        },
        DisturbanceEvent {
            time: 40.005,
            kind: DisturbanceKind::YawTwist(PI / 2.0),
        },
    ];
    s
}

#[test]
fn disturbed_run_recovers() {
    let s = disturbed();
    let log = run_scenario(&s).unwrap();
    assert!(log.finished);
    assert!(tracking_summary(&log, &s.waypoints).iter().all(|w| w.reached));
}

#[test]
fn jump_is_equivalent_to_a_fresh_start() {
    let s = disturbed();
    let full = run_scenario(&s).unwrap();
    let jump_tick = 1001;

    let mut head = s.clone();
    head.duration = jump_tick as f64 * s.dt();
    let before = run_scenario(&head).unwrap();
    assert_eq!(before.samples.last().unwrap().tick, jump_tick - 1);

    let mut rest = s.clone();
    let jump = rest.disturbances.remove(0);
    let start = SimStart {
        pose: jump.apply(&before.final_pose),
        tick: jump_tick,
        tracker: before.final_tracker,
        active_command: before.final_command,
    };
    let resumed = run_scenario_from(&rest, &start).unwrap();
    assert_eq!(resumed.finished, full.finished);

    let tail = &full.samples[jump_tick as usize..];
    assert_eq!(tail.len(), resumed.samples.len());
    for (a, b) in tail.iter().zip(&resumed.samples) {
        assert_eq!(a.tick, b.tick);
        assert_eq!((a.mode, a.waypoint_index), (b.mode, b.waypoint_index));
        let d = (a.pose.x - b.pose.x).abs()
            + (a.pose.y - b.pose.y).abs()
            + (a.pose.yaw - b.pose.yaw).abs()
            + (a.delta - b.delta).abs()
            + (a.errors.distance - b.errors.distance).abs()
            + (a.errors.yaw - b.errors.yaw).abs();
        assert!(d < 1e-9, "tick {}: {d}", a.tick);
    }
}

#[test]
fn summary_reports_each_leg() {
    let s = disturbed();
    let mut short = s.clone();
    short.disturbances.clear();
    short.duration = 35.0;
    let log = run_scenario(&short).unwrap();
    let rows = tracking_summary(&log, &short.waypoints);
    assert_eq!(rows.len(), 2);
    assert!(rows[0].reached && rows[0].final_distance <= 0.35);
    assert!(!rows[1].reached && rows[1].final_distance.is_finite());
    assert!(rows[0].time_to_reach > 0.0 && rows[0].time_to_reach <= 35.0);
}
