//! The five target-tracking tasks. Each trial alternates rest and task parts
//! of equal length; task parts chain minimum-jerk moves that start and end
//! at rest. Straight moves are planned in wrist space, curved ones in joint
//! space.
//!
//! Waypoints are representative defaults, jittered per seed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::arm::{forward_kinematics, inverse_kinematics, joint_rates, ArmGeometry, JointState, WristTarget};
use super::minjerk::{min_jerk_coeffs, MinJerkSegment, Quintic};
use crate::error::{Error, Result};
use crate::rng;

pub const TASK_RATE_HZ: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    /// Fast point-to-point wrist reaches along one line.
    A,
    /// Elbow-only flexion/extension at mixed speeds.
    B,
    /// Wrist reaches out and back along three directions in turn.
    C,
    /// Wrist reaches with short pauses between them.
    D,
    /// Curved paths from simultaneous shoulder and elbow motion.
    E,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [Self::A, Self::B, Self::C, Self::D, Self::E];

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Self::A),
            2 => Ok(Self::B),
            3 => Ok(Self::C),
            4 => Ok(Self::D),
            5 => Ok(Self::E),
            _ => Err(Error::Config(format!("task kind must be 1..=5, got {n}"))),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Self::A => 1,
            Self::B => 2,
            Self::C => 3,
            Self::D => 4,
            Self::E => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub arm: ArmGeometry,
    pub rest_part_s: f64,
    pub task_part_s: f64,
    pub cycles: usize,
    /// Posture held at the start of every trial.
    pub home: WristTarget,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            arm: ArmGeometry::default(),
            rest_part_s: 5.0,
            task_part_s: 5.0,
            cycles: 6,
            home: WristTarget { x: 0.30, y: 0.30 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TaskSegment {
    Hold { t0: f64, t1: f64, joints: JointState },
    Wrist { t0: f64, t1: f64, x: Quintic, y: Quintic },
    Joint { t0: f64, t1: f64, sld: Quintic, elb: Quintic },
}

impl TaskSegment {
    pub fn span(&self) -> (f64, f64) {
        match *self {
            Self::Hold { t0, t1, .. } | Self::Wrist { t0, t1, .. } | Self::Joint { t0, t1, .. } => (t0, t1),
        }
    }
}

/// Joint angle, velocity and acceleration (shoulder, elbow).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointKinematics {
    pub joints: JointState,
    pub vel: [f64; 2],
    pub acc: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub kind: TaskKind,
    pub arm: ArmGeometry,
    pub segments: Vec<TaskSegment>,
    pub duration_s: f64,
}

impl Task {
    fn segment_at(&self, t: f64) -> &TaskSegment {
        let idx = self.segments.partition_point(|s| s.span().1 <= t);
        &self.segments[idx.min(self.segments.len() - 1)]
    }

    pub fn kinematics_at(&self, t: f64) -> Result<JointKinematics> {
        match self.segment_at(t) {
            TaskSegment::Hold { joints, .. } => Ok(JointKinematics { joints: *joints, vel: [0.0; 2], acc: [0.0; 2] }),
            TaskSegment::Joint { sld, elb, .. } => Ok(JointKinematics {
                joints: JointState { theta_sld: sld.pos(t), theta_elb: elb.pos(t) },
                vel: [sld.vel(t), elb.vel(t)],
                acc: [sld.acc(t), elb.acc(t)],
            }),
            TaskSegment::Wrist { x, y, .. } => {
                let joints = inverse_kinematics(WristTarget { x: x.pos(t), y: y.pos(t) }, &self.arm)?;
                let (vel, acc) = joint_rates(joints, &self.arm, [x.vel(t), y.vel(t)], [x.acc(t), y.acc(t)])?;
                Ok(JointKinematics { joints, vel, acc })
            }
        }
    }

    pub fn joints_at(&self, t: f64) -> Result<JointState> {
        Ok(self.kinematics_at(t)?.joints)
    }

    /// Times at which consecutive segments meet.
    pub fn stitch_times(&self) -> Vec<f64> {
        self.segments.iter().skip(1).map(|s| s.span().0).collect()
    }

    /// Samples the task at `rate_hz` over `[0, duration)`.
    pub fn sample(&self, rate_hz: f64) -> Result<TaskSeries> {
        let n = (self.duration_s * rate_hz).round() as usize;
        let mut series = TaskSeries { rate_hz, time_s: Vec::with_capacity(n), joints: Vec::with_capacity(n), wrist: Vec::with_capacity(n) };
        for i in 0..n {
            let t = i as f64 / rate_hz;
            let j = self.joints_at(t)?;
            series.time_s.push(t);
            series.joints.push(j);
            series.wrist.push(forward_kinematics(j, &self.arm));
        }
        Ok(series)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSeries {
    pub rate_hz: f64,
    pub time_s: Vec<f64>,
    pub joints: Vec<JointState>,
    pub wrist: Vec<WristTarget>,
}

impl TaskSeries {
    pub fn elbow_angles(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.theta_elb).collect()
    }

    /// CSV `time_s,theta_sld_rad,theta_elb_rad,x_m,y_m`.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["time_s", "theta_sld_rad", "theta_elb_rad", "x_m", "y_m"])?;
        for ((t, j), p) in self.time_s.iter().zip(&self.joints).zip(&self.wrist) {
            w.write_record([
                format!("{t:.6}"),
                format!("{:e}", j.theta_sld),
                format!("{:e}", j.theta_elb),
                format!("{:e}", p.x),
                format!("{:e}", p.y),
            ])?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

enum Move {
    Wrist(WristTarget, f64),
    Joint(JointState, f64),
    Pause(f64),
}

struct Planner<'a> {
    arm: &'a ArmGeometry,
    t: f64,
    joints: JointState,
    segments: Vec<TaskSegment>,
}

impl Planner<'_> {
    fn hold_until(&mut self, t1: f64) {
        if t1 > self.t + 1e-12 {
            self.segments.push(TaskSegment::Hold { t0: self.t, t1, joints: self.joints });
            self.t = t1;
        }
    }

    fn apply(&mut self, mv: Move) -> Result<()> {
        let t0 = self.t;
        match mv {
            Move::Pause(d) => self.hold_until(t0 + d),
            Move::Wrist(to, d) => {
                let from = forward_kinematics(self.joints, self.arm);
                let t1 = t0 + d;
                let x = min_jerk_coeffs(&MinJerkSegment::rest_to_rest(t0, t1, from.x, to.x))?;
                let y = min_jerk_coeffs(&MinJerkSegment::rest_to_rest(t0, t1, from.y, to.y))?;
                self.segments.push(TaskSegment::Wrist { t0, t1, x, y });
                self.joints = inverse_kinematics(to, self.arm)?;
                self.t = t1;
            }
            Move::Joint(to, d) => {
                let t1 = t0 + d;
                let sld = min_jerk_coeffs(&MinJerkSegment::rest_to_rest(t0, t1, self.joints.theta_sld, to.theta_sld))?;
                let elb = min_jerk_coeffs(&MinJerkSegment::rest_to_rest(t0, t1, self.joints.theta_elb, to.theta_elb))?;
                self.segments.push(TaskSegment::Joint { t0, t1, sld, elb });
                self.joints = to;
                self.t = t1;
            }
        }
        Ok(())
    }
}

fn polar(r: f64, phi: f64) -> WristTarget {
    WristTarget { x: r * phi.cos(), y: r * phi.sin() }
}

/// Moves for one task part; `k` counts moves so the pattern alternates.
fn next_move(kind: TaskKind, k: usize, cur: JointState, r: &mut rng::Rng) -> Move {
    let jitter = |r: &mut rng::Rng, s: f64| 1.0 + r.random_range(-s..s);
    match kind {
        TaskKind::A => {
            let radius = if k.is_multiple_of(2) { 0.55 } else { 0.22 };
            Move::Wrist(polar(radius * jitter(r, 0.03), 0.6 * jitter(r, 0.05)), 0.55 * jitter(r, 0.1))
        }
        TaskKind::B => {
            let elb = if k.is_multiple_of(2) { 2.3 } else { 0.7 };
            let dur = if k % 4 < 2 { 0.5 } else { 0.6 };
            Move::Joint(
                JointState { theta_sld: cur.theta_sld, theta_elb: elb * jitter(r, 0.04) },
                dur * jitter(r, 0.1),
            )
        }
        TaskKind::C => {
            // out and back along three directions in turn
            let to = if k.is_multiple_of(2) {
                polar(0.55 * jitter(r, 0.03), [0.2, 0.8, 1.4][(k / 2) % 3] * jitter(r, 0.05))
            } else {
                polar(0.2 * jitter(r, 0.03), 0.8 * jitter(r, 0.05))
            };
            Move::Wrist(to, 0.5 * jitter(r, 0.1))
        }
        TaskKind::D => {
            if k % 2 == 1 {
                Move::Pause(0.05 * jitter(r, 0.2))
            } else {
                let radius = if k.is_multiple_of(4) { 0.54 } else { 0.2 };
                Move::Wrist(polar(radius * jitter(r, 0.03), 0.9 * jitter(r, 0.05)), 0.45 * jitter(r, 0.1))
            }
        }
        TaskKind::E => {
            let (sld, elb) = if k.is_multiple_of(2) { (1.0, 0.6) } else { (-0.2, 2.2) };
            Move::Joint(
                JointState { theta_sld: sld + r.random_range(-0.1..0.1), theta_elb: elb * jitter(r, 0.04) },
                0.55 * jitter(r, 0.1),
            )
        }
    }
}

fn move_duration(m: &Move) -> f64 {
    match *m {
        Move::Wrist(_, d) | Move::Joint(_, d) | Move::Pause(d) => d,
    }
}

pub fn generate_task_with(kind: TaskKind, seed: u64, cfg: &TaskConfig) -> Result<Task> {
    cfg.arm.validate()?;
    if cfg.home.norm() >= cfg.arm.reach() {
        return Err(Error::Config("home posture is out of reach".into()));
    }
    let mut r = rng::stream(seed, &[u64::from(kind.number())]);
    let mut p = Planner {
        arm: &cfg.arm,
        t: 0.0,
        joints: inverse_kinematics(cfg.home, &cfg.arm)?,
        segments: Vec::new(),
    };
    let mut k = 0;
    for cycle in 0..cfg.cycles {
        let part_start = cycle as f64 * (cfg.rest_part_s + cfg.task_part_s);
        p.hold_until(part_start + cfg.rest_part_s);
        let part_end = part_start + cfg.rest_part_s + cfg.task_part_s;
        loop {
            let mv = next_move(kind, k, p.joints, &mut r);
            if p.t + move_duration(&mv) > part_end {
                break;
            }
            p.apply(mv)?;
            k += 1;
        }
        p.hold_until(part_end);
    }
    let duration_s = p.t;
    Ok(Task { kind, arm: cfg.arm, segments: p.segments, duration_s })
}

pub fn generate_task(kind: TaskKind, seed: u64) -> Result<Task> {
    generate_task_with(kind, seed, &TaskConfig::default())
}
