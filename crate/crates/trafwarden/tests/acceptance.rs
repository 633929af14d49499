//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use trafwarden_core::gestures::{
    apply_delta, is_conflicting, permission_delta, primitive_partial, signal_target_pose, Approach,
    ArmPrimitive, Pair, Permission, PermissionState, TrafficSignal,
};
use trafwarden_core::kinematics::{
    default_limits, forward_kinematics, interpolate, motion_duration, ArmJoint, JointId, LinkModel,
    RobotPose, Side, ARRIVAL_TOLERANCE, JOINT_COUNT,
};
use trafwarden_core::rng::SplitMix64;
use trafwarden_core::trace::{replay, CommandTrace};
use trafwarden_core::{run_headless, ControlMode, Inbound, ScenarioConfig, Session, Simulation};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    check(took < limit, || format!("took {took:.2?}, limit {limit:?}"))
}

// Appendix A joint targets, device order shoulder..hand.
const UP: [f64; 6] = [0.0, -1.11, 0.0, 0.7, 0.0, 0.0];
const DOWN: [f64; 6] = [0.0, 1.5, 0.0, 0.0, 0.0, 0.0];
const HALF: [f64; 6] = [0.5, 0.0, 1.5, 2.29, 0.0, 0.0];
const REST: [f64; 6] = [0.0; 6];
const LEFT_STRAIGHT: [f64; 6] = [-0.5, 0.0, 0.0, 0.0, 0.0, 0.0];
const RIGHT_STRAIGHT: [f64; 6] = [0.5, 0.0, 0.0, 0.0, 0.0, 0.0];
const LEFT_HALF_UP: [f64; 6] = [0.5, -1.0, 0.0, 0.0, -1.5, 0.0];
const RIGHT_HALF_UP: [f64; 6] = [-0.5, -1.0, 0.0, 0.0, -1.5, 0.0];
const LEFT_HALF_FOLD: [f64; 6] = [0.5, -0.7, 0.0, 1.8, -1.5, 0.0];
const RIGHT_HALF_FOLD: [f64; 6] = [-0.5, -0.7, 0.0, 1.8, -1.5, 0.0];

fn expected_primitive(p: ArmPrimitive, side: Side) -> [f64; 6] {
    match (p, side) {
        (ArmPrimitive::Up, _) => UP,
        (ArmPrimitive::Down, _) => DOWN,
        (ArmPrimitive::Half, _) => HALF,
        (ArmPrimitive::Rest, _) => REST,
        (ArmPrimitive::Straight, Side::Left) => LEFT_STRAIGHT,
        (ArmPrimitive::Straight, Side::Right) => RIGHT_STRAIGHT,
        (ArmPrimitive::HalfUp, Side::Left) => LEFT_HALF_UP,
        (ArmPrimitive::HalfUp, Side::Right) => RIGHT_HALF_UP,
        (ArmPrimitive::HalfFold, Side::Left) => LEFT_HALF_FOLD,
        (ArmPrimitive::HalfFold, Side::Right) => RIGHT_HALF_FOLD,
    }
}

/// Left arm, right arm and head yaw of every signal.
fn expected_signal(s: TrafficSignal) -> ([f64; 6], [f64; 6], f64) {
    match s {
        TrafficSignal::FrontStop => (DOWN, UP, 0.0),
        TrafficSignal::BehindStop => (LEFT_STRAIGHT, DOWN, 0.0),
        TrafficSignal::FrontBehindStop => (LEFT_STRAIGHT, UP, 0.0),
        TrafficSignal::LeftRightStop => (LEFT_HALF_UP, RIGHT_HALF_UP, 0.0),
        TrafficSignal::AllStop => (UP, UP, 0.0),
        TrafficSignal::StartLeft => (HALF, UP, 1.1),
        TrafficSignal::StartRight => (LEFT_STRAIGHT, HALF, -1.1),
        TrafficSignal::ChangeSign => (LEFT_HALF_FOLD, RIGHT_HALF_FOLD, 0.0),
    }
}

fn pose_table() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    for side in Side::BOTH {
        for p in ArmPrimitive::ALL {
            let partial = primitive_partial(p, side);
            check(partial.len() == 6, || {
                format!("{p:?} {side:?} assigns {} joints", partial.len())
            })?;
            for (joint, want) in ArmJoint::ALL.iter().zip(expected_primitive(p, side)) {
                let got = partial.get(JointId::arm(side, *joint));
                check(got == Some(want), || {
                    format!("{p:?} {side:?} {joint:?}: {got:?} != {want}")
                })?;
                checked += 1;
            }
        }
    }
    for s in TrafficSignal::ALL {
        let (left, right, yaw) = expected_signal(s);
        let pose = signal_target_pose(s);
        for (i, joint) in ArmJoint::ALL.iter().enumerate() {
            for (side, want) in [(Side::Left, left[i]), (Side::Right, right[i])] {
                let got = pose[JointId::arm(side, *joint)];
                check(got == want, || {
                    format!("{s}: {side:?} {joint:?} {got} != {want}")
                })?;
                checked += 1;
            }
        }
        check(pose[JointId::HeadYaw] == yaw, || {
            format!("{s}: head yaw {}", pose[JointId::HeadYaw])
        })?;
        checked += 1;
    }
    within(Duration::from_secs(1), start)?;
    Ok(format!("{checked} joint values exact"))
}

fn random_pose(rng: &mut SplitMix64) -> RobotPose {
    let lim = default_limits();
    let mut q = [0.0; JOINT_COUNT];
    for j in JointId::ALL {
        let (lo, hi) = lim.range(j);
        q[j.index()] = lo + rng.next_f64() * (hi - lo);
    }
    RobotPose::from_array(q)
}

fn interpolation() -> Outcome {
    let start = Instant::now();
    let mut rng = SplitMix64::new(2024);
    let mut worst = 0i64;
    for case in 0..1000 {
        let from = random_pose(&mut rng);
        let to = random_pose(&mut rng);
        let omega = 0.2 + rng.next_f64() * 4.8;
        let dt = 0.01 + rng.next_f64() * 0.09;
        let expected =
            (motion_duration(&from, &to, omega).map_err(|e| e.to_string())? / dt).ceil() as i64;
        let mut pose = from;
        let mut steps = 0i64;
        loop {
            let (next, done) = interpolate(&pose, &to, omega, dt).map_err(|e| e.to_string())?;
            for j in JointId::ALL.into_iter().filter(|j| j.is_rotary()) {
                let (before, after) = (to[j] - pose[j], to[j] - next[j]);
                check(after.abs() <= before.abs() && before * after >= 0.0, || {
                    format!(
                        "case {case}: {j:?} moved from {} to {} towards {}",
                        pose[j], next[j], to[j]
                    )
                })?;
                check(
                    (next[j] - pose[j]).abs() <= omega * dt + ARRIVAL_TOLERANCE,
                    || format!("case {case}: {j:?} too fast"),
                )?;
            }
            pose = next;
            steps += 1;
            if done {
                break;
            }
            check(steps <= expected + 1, || {
                format!("case {case}: no convergence after {steps} steps")
            })?;
        }
        let off = (steps - expected).abs();
        check(off <= 1, || {
            format!("case {case}: {steps} steps, expected {expected}")
        })?;
        worst = worst.max(off);
    }
    within(Duration::from_secs(5), start)?;
    Ok(format!("1000 pairs, worst step deviation {worst}"))
}

fn fk_properties() -> Outcome {
    let links = LinkModel::default();
    let mut rng = SplitMix64::new(77);
    let poses: Vec<RobotPose> = TrafficSignal::ALL
        .iter()
        .map(|&s| signal_target_pose(s))
        .chain((0..1000).map(|_| random_pose(&mut rng)))
        .collect();
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
    let mut worst: f64 = 0.0;
    for (n, p) in poses.iter().enumerate() {
        let f = forward_kinematics(p, &links);
        let m = forward_kinematics(&p.mirrored(), &links);
        for side in Side::BOTH {
            let arm = f.arm(side);
            for (a, b, len) in [
                (arm.shoulder, arm.elbow, links.upper_arm),
                (arm.elbow, arm.wrist, links.forearm),
                (arm.wrist, arm.fingertip, links.hand),
            ] {
                let e = (a.distance(b) - len).abs() / len;
                worst = worst.max(e);
                check(e <= 1e-9, || {
                    format!("pose {n}: {side:?} segment {len} off by {e:e}")
                })?;
            }
            let mir = m.arm(side.opposite());
            for (a, b) in [
                (arm.shoulder, mir.shoulder),
                (arm.elbow, mir.elbow),
                (arm.wrist, mir.wrist),
                (arm.fingertip, mir.fingertip),
            ] {
                let e = rel(a.x, -b.x).max(rel(a.y, b.y));
                worst = worst.max(e);
                check(e <= 1e-9, || {
                    format!("pose {n}: mirror of {side:?} off by {e:e}")
                })?;
            }
        }
        check(rel(f.head_yaw, -m.head_yaw) <= 1e-9, || {
            format!("pose {n}: head yaw not mirrored")
        })?;
    }
    Ok(format!(
        "{} poses, worst relative error {worst:.1e}",
        poses.len()
    ))
}

/// Delta table written out per signal: F, B, L, R with `None` meaning unchanged.
fn documented_delta(s: TrafficSignal) -> [Option<Permission>; 4] {
    use Permission::{Go, Stop};
    match s {
        TrafficSignal::FrontStop => [Some(Stop), None, None, None],
        TrafficSignal::BehindStop => [None, Some(Stop), None, None],
        TrafficSignal::FrontBehindStop => [Some(Stop), Some(Stop), None, None],
        TrafficSignal::LeftRightStop => [None, None, Some(Stop), Some(Stop)],
        TrafficSignal::AllStop | TrafficSignal::ChangeSign => [Some(Stop); 4],
        TrafficSignal::StartLeft => [Some(Stop), None, Some(Go), None],
        TrafficSignal::StartRight => [None, None, None, Some(Go)],
    }
}

fn delta_table() -> Outcome {
    let order = [
        Approach::Front,
        Approach::Behind,
        Approach::Left,
        Approach::Right,
    ];
    let mut cases = 0;
    for bits in 0u8..16 {
        let mut state = PermissionState::all_stop();
        for (i, a) in order.iter().enumerate() {
            if bits & (1 << i) != 0 {
                state.set(*a, Permission::Go);
            }
        }
        for s in TrafficSignal::ALL {
            let got = apply_delta(&state, &permission_delta(s));
            for (i, a) in order.iter().enumerate() {
                let want = documented_delta(s)[i].unwrap_or(state.get(*a));
                check(got.get(*a) == want, || {
                    format!("{s} on {state:?}: {a:?} is {:?}", got.get(*a))
                })?;
            }
            cases += 1;
        }
    }
    for s in TrafficSignal::ALL {
        let after = apply_delta(&PermissionState::all_stop(), &permission_delta(s));
        check(!is_conflicting(&after), || {
            format!("{s} on all-Stop conflicts")
        })?;
    }
    Ok(format!("{cases} state/signal pairs match"))
}

fn sim_invariants() -> Outcome {
    let start = Instant::now();
    let cfg = ScenarioConfig {
        arrival_rates: [0.1; 4],
        duration: 600.0,
        seed: 42,
        ..Default::default()
    };
    let mut summary = Vec::new();
    for mode in [ControlMode::RoundRobin, ControlMode::QueuePriority] {
        let mut s = Session::new(cfg.clone(), mode);
        s.run_to_end();
        let sim = s.sim();
        let c = sim.counters();
        check(
            c.order_violations == 0 && c.gap_violations == 0 && c.stop_line_violations == 0,
            || format!("{mode}: {c:?}"),
        )?;
        let mut crossed = 0;
        for a in Approach::ALL {
            let st = sim.stats(a);
            let in_system = sim.lane(a).len() as u64;
            check(st.spawned == st.crossed + in_system, || {
                format!(
                    "{mode} {a:?}: {} spawned, {} crossed, {in_system} inside",
                    st.spawned, st.crossed
                )
            })?;
            check(st.attempted == st.spawned + st.blocked, || {
                format!("{mode} {a:?}: arrivals unaccounted")
            })?;
            let ids: Vec<u64> = sim
                .retired()
                .iter()
                .filter(|v| v.approach == a)
                .map(|v| v.id)
                .collect();
            check(ids.windows(2).all(|w| w[0] < w[1]), || {
                format!("{mode} {a:?}: exit order differs from entry order")
            })?;
            crossed += st.crossed;
        }
        summary.push(format!("{mode} {crossed} crossed"));
    }
    within(Duration::from_secs(10), start)?;
    Ok(summary.join(", "))
}

/// Position of a vehicle cruising at `v` that brakes at `a` just in time to
/// stop at the line, `t` seconds after it was at `s0`.
fn braking_oracle(s0: f64, v: f64, a: f64, t: f64) -> f64 {
    let brake_at = v * v / (2.0 * a);
    let cruise = (s0 - brake_at).max(0.0) / v;
    if t <= cruise {
        return s0 - v * t;
    }
    let tau = (t - cruise).min(v / a);
    brake_at - (v * tau - 0.5 * a * tau * tau)
}

fn stop_line() -> Outcome {
    let cfg = ScenarioConfig {
        arrival_rates: [0.0; 4],
        joint_speed: 1.0e3,
        reaction_delay: 0.0,
        duration: 120.0,
        ..Default::default()
    };
    let tol = cfg.free_speed * cfg.dt;
    let mut worst: f64 = 0.0;
    for (label, stop_at) in [("early", 60.0), ("late", 10.0)] {
        let mut sim = Simulation::new(cfg.clone());
        sim.command(TrafficSignal::LeftRightStop, Some(Pair::FrontBehind));
        sim.step();
        let id = sim
            .place_vehicle(Approach::Front, 100.0, cfg.free_speed)
            .ok_or("could not place vehicle")?;
        let pos = |sim: &Simulation| sim.vehicles().find(|v| v.id == id).map(|v| v.position);
        while pos(&sim).is_some_and(|s| s > stop_at) {
            sim.step();
        }
        let (t0, s0) = (sim.now(), pos(&sim).unwrap());
        sim.command(TrafficSignal::FrontBehindStop, None);
        let committed = s0 < cfg.free_speed.powi(2) / (2.0 * cfg.accel);
        while sim.now() - t0 < 20.0 {
            sim.step();
            let t = sim.now() - t0;
            let Some(s) = pos(&sim) else { break };
            let oracle = if committed {
                s0 - cfg.free_speed * t
            } else {
                braking_oracle(s0, cfg.free_speed, cfg.accel, t)
            };
            worst = worst.max((s - oracle).abs());
            check((s - oracle).abs() <= tol, || {
                format!("{label}: s={s:.3} oracle={oracle:.3} at t={t:.2}")
            })?;
        }
        let c = sim.counters();
        check(c.stop_line_violations == 0, || {
            format!("{label}: vehicle ran the Stop")
        })?;
        if committed {
            check(pos(&sim).is_none() && c.committed_crossings == 1, || {
                format!("{label}: vehicle did not clear")
            })?;
        } else {
            check(pos(&sim).is_some_and(|s| (0.0..=tol).contains(&s)), || {
                format!("{label}: not held at the line")
            })?;
        }
    }
    Ok(format!("worst position error {worst:.3} m (limit {tol} m)"))
}

fn controller_safety() -> Outcome {
    let mut runs = 0;
    for mode in [ControlMode::RoundRobin, ControlMode::QueuePriority] {
        for seed in 1..=100 {
            let cfg = ScenarioConfig {
                seed,
                ..Default::default()
            };
            let run = run_headless(&cfg, mode, seed);
            check(run.report.conflicts == 0, || {
                format!("{mode} seed {seed}: {} conflicts", run.report.conflicts)
            })?;
            runs += 1;
        }
    }
    Ok(format!("{runs} runs, 0 conflicts"))
}

fn total_delay(cfg: &ScenarioConfig, mode: ControlMode) -> f64 {
    run_headless(cfg, mode, cfg.seed).report.total.mean_delay
}

fn priority_dominance() -> Outcome {
    let start = Instant::now();
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in 1..=10 {
        let cfg = ScenarioConfig {
            arrival_rates: [0.2, 0.2, 0.02, 0.02],
            duration: 600.0,
            seed,
            ..Default::default()
        };
        let qp = total_delay(&cfg, ControlMode::QueuePriority);
        let rr = total_delay(&cfg, ControlMode::RoundRobin);
        if qp < rr {
            wins += 1;
        }
        rows.push(format!("{qp:.1}/{rr:.1}"));
    }
    check(wins >= 9, || {
        format!("queue priority won {wins}/10 ({})", rows.join(" "))
    })?;
    within(Duration::from_secs(60), start)?;
    Ok(format!(
        "queue priority won {wins}/10, delay qp/rr s: {}",
        rows.join(" ")
    ))
}

fn arm_speed() -> Outcome {
    let mut rows = Vec::new();
    for mode in [ControlMode::RoundRobin, ControlMode::QueuePriority] {
        for seed in 1..=10 {
            let slow = ScenarioConfig {
                joint_speed: 0.5,
                seed,
                ..Default::default()
            };
            let fast = ScenarioConfig {
                joint_speed: 2.0,
                ..slow.clone()
            };
            let (ds, df) = (total_delay(&slow, mode), total_delay(&fast, mode));
            check(df <= ds, || {
                format!("{mode} seed {seed}: {df:.2}s at 2.0 rad/s vs {ds:.2}s at 0.5 rad/s")
            })?;
            rows.push(ds - df);
        }
    }
    let least = rows.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(format!("20 runs, fast arm saves at least {least:.2} s"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenario = dir.path().join("scenario.txt");
    let cfg = ScenarioConfig {
        duration: 300.0,
        seed: 11,
        ..Default::default()
    };
    fs::write(&scenario, cfg.to_text()).map_err(|e| e.to_string())?;
    let bin = env!("CARGO_BIN_EXE_trafwarden");
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let status = Command::new(bin)
            .args(["run", "--policy", "queue_priority", "--scenario"])
            .arg(&scenario)
            .arg("--out-dir")
            .arg(&out)
            .env("TRAFWARDEN_LOG", "error")
            .output()
            .map_err(|e| e.to_string())?;
        check(status.status.success(), || {
            String::from_utf8_lossy(&status.stderr).into_owned()
        })?;
        let read = |f: &str| fs::read(out.join(f)).map_err(|e| e.to_string());
        outputs.push((read("metrics.csv")?, read("trace.txt")?));
    }
    check(outputs[0] == outputs[1], || "two runs differ".to_string())?;

    // Scripted operator session, then replay of its trace through the CLI.
    let mut session = Session::new(cfg.clone(), ControlMode::WizardOfOz);
    let script = [
        (5.0, TrafficSignal::LeftRightStop, Some(Pair::FrontBehind)),
        (40.0, TrafficSignal::ChangeSign, None),
        (43.0, TrafficSignal::StartLeft, None),
        (60.0, TrafficSignal::StartRight, None),
        (80.0, TrafficSignal::ChangeSign, None),
        (84.0, TrafficSignal::FrontBehindStop, Some(Pair::LeftRight)),
        (120.0, TrafficSignal::AllStop, None),
        (125.0, TrafficSignal::LeftRightStop, Some(Pair::FrontBehind)),
        (200.0, TrafficSignal::ChangeSign, None),
    ];
    let mut next = script.iter().peekable();
    while !session.is_finished() {
        while let Some((_, signal, grant)) =
            next.next_if(|(t, _, _)| session.sim().now() + 1e-9 >= *t)
        {
            session.enqueue(Inbound::Command {
                signal: *signal,
                grant: *grant,
            });
        }
        session.step();
    }
    let recorded = session.metrics().to_csv();
    let trace_path = dir.path().join("woz.txt");
    fs::write(&trace_path, session.trace().to_text()).map_err(|e| e.to_string())?;
    let parsed = CommandTrace::parse(&session.trace().to_text()).map_err(|e| e.to_string())?;
    let in_process = replay(&cfg, &parsed).map_err(|e| e.to_string())?.to_csv();
    check(in_process == recorded, || {
        format!("library replay differs:\n{in_process}\nvs\n{recorded}")
    })?;
    let out = Command::new(bin)
        .args(["replay", "--trace"])
        .arg(&trace_path)
        .arg("--scenario")
        .arg(&scenario)
        .env("TRAFWARDEN_LOG", "error")
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || {
        String::from_utf8_lossy(&out.stderr).into_owned()
    })?;
    check(out.stdout == recorded.as_bytes(), || {
        "CLI replay differs from the recorded session".to_string()
    })?;
    Ok(format!(
        "{} operator commands replayed byte-identically",
        session.trace().records.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("pose table exactness", pose_table),
        ("interpolation suite", interpolation),
        ("forward kinematics isometry and mirror", fk_properties),
        ("permission delta table", delta_table),
        ("simulation conservation, ordering and gaps", sim_invariants),
        ("stop-line compliance", stop_line),
        ("controller safety", controller_safety),
        ("queue priority dominance", priority_dominance),
        ("arm speed effect", arm_speed),
        ("determinism of run and replay", determinism),
    ];
    let mut failed = 0;
    for (name, criterion) in criteria {
        let start = Instant::now();
        let result = criterion();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  {name} ({secs:.2}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.2}s): {why}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
