//! Per-tick simulation log and its versioned CSV form.
//!
//! The CSV starts with a `# trajectory-csv-v1` marker line followed by a
//! header row; readers must reject files whose marker they do not know.
//! Floats are written in scientific notation with nine fractional digits,
//! which keeps reruns byte-identical across platforms.

use crate::kinematics::Pose;
use nalgebra::{DVector, UnitQuaternion, Vector3};
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use thiserror::Error;

pub const TRAJECTORY_CSV_VERSION: &str = "trajectory-csv-v1";

const HUMAN_JOINTS: usize = 8;
const ROBOT_JOINTS: usize = 10;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("unsupported trajectory format marker: {0:?}")]
    Version(String),
    #[error("malformed trajectory at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Controller phase, one per tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Approach,
    Hold,
    Retreat,
    Done,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::Approach => "approach",
            Phase::Hold => "hold",
            Phase::Retreat => "retreat",
            Phase::Done => "done",
        };
        f.write_str(s)
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "approach" => Ok(Phase::Approach),
            "hold" => Ok(Phase::Hold),
            "retreat" => Ok(Phase::Retreat),
            "done" => Ok(Phase::Done),
            other => Err(format!("unknown phase {other:?}")),
        }
    }
}

/// One control tick as logged.
#[derive(Debug, Clone)]
pub struct TickRecord {
    pub t: f64,
    pub q_human: DVector<f64>,
    pub qd_human: DVector<f64>,
    pub q_robot: DVector<f64>,
    pub qd_robot: DVector<f64>,
    /// Robot end-effector pose, world frame.
    pub robot_ee: Pose,
    /// Human hand pose, world frame.
    pub human_ee: Pose,
    /// Mixed 6-D norm of the grasp-offset tracking error.
    pub relative_error_norm: f64,
    pub phase: Phase,
    /// Bitmask over constraint categories active at this tick's solution.
    pub active_constraints: u64,
    /// Commanded joint torques of the robot.
    pub tau: DVector<f64>,
}

/// Whole-run log.
#[derive(Debug, Clone)]
pub struct TrajectoryLog {
    pub dt: f64,
    pub records: Vec<TickRecord>,
}

fn header() -> String {
    let mut cols = vec!["t_s".to_string()];
    for i in 1..=HUMAN_JOINTS {
        cols.push(format!("q_h_{i}"));
    }
    for i in 1..=HUMAN_JOINTS {
        cols.push(format!("qd_h_{i}"));
    }
    for i in 1..=ROBOT_JOINTS {
        cols.push(format!("q_r_{i}"));
    }
    for i in 1..=ROBOT_JOINTS {
        cols.push(format!("qd_r_{i}"));
    }
    for agent in ["r_ee", "h_ee"] {
        for part in ["px", "py", "pz", "qw", "qx", "qy", "qz"] {
            cols.push(format!("{agent}_{part}"));
        }
    }
    cols.push("rel_err".into());
    cols.push("phase".into());
    cols.push("active_mask".into());
    for i in 1..=ROBOT_JOINTS {
        cols.push(format!("tau_{i}"));
    }
    cols.join(",")
}

fn push_pose(fields: &mut Vec<String>, pose: &Pose) {
    for i in 0..3 {
        fields.push(format!("{:.9e}", pose.position[i]));
    }
    let q = pose.orientation.quaternion();
    for v in [q.w, q.i, q.j, q.k] {
        fields.push(format!("{v:.9e}"));
    }
}

impl TrajectoryLog {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, record: TickRecord) {
        debug_assert_eq!(record.q_human.len(), HUMAN_JOINTS);
        debug_assert_eq!(record.q_robot.len(), ROBOT_JOINTS);
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "# {TRAJECTORY_CSV_VERSION}")?;
        writeln!(w, "{}", header())?;
        for rec in &self.records {
            let mut fields = Vec::with_capacity(64);
            fields.push(format!("{:.9e}", rec.t));
            for v in rec.q_human.iter().chain(rec.qd_human.iter()) {
                fields.push(format!("{v:.9e}"));
            }
            for v in rec.q_robot.iter().chain(rec.qd_robot.iter()) {
                fields.push(format!("{v:.9e}"));
            }
            push_pose(&mut fields, &rec.robot_ee);
            push_pose(&mut fields, &rec.human_ee);
            fields.push(format!("{:.9e}", rec.relative_error_norm));
            fields.push(rec.phase.to_string());
            fields.push(format!("{:#x}", rec.active_constraints));
            for v in rec.tau.iter() {
                fields.push(format!("{v:.9e}"));
            }
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }

    /// Parses a CSV produced by [`TrajectoryLog::write_csv`]. The timestep is
    /// recovered from the first two rows (zero when fewer than two exist).
    pub fn parse_csv(text: &str) -> Result<Self, TrajectoryError> {
        let mut lines = text.lines().enumerate();
        let (_, marker) = lines.next().ok_or_else(|| TrajectoryError::Version(String::new()))?;
        let expected = format!("# {TRAJECTORY_CSV_VERSION}");
        if marker.trim() != expected {
            return Err(TrajectoryError::Version(marker.trim().to_string()));
        }
        let (_, head) = lines.next().ok_or(TrajectoryError::Malformed {
            line: 2,
            reason: "missing header row".into(),
        })?;
        if head != header() {
            return Err(TrajectoryError::Malformed {
                line: 2,
                reason: "header row does not match the v1 schema".into(),
            });
        }
        let n_cols = header().split(',').count();
        let mut records = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != n_cols {
                return Err(TrajectoryError::Malformed {
                    line: idx + 1,
                    reason: format!("expected {n_cols} fields, found {}", fields.len()),
                });
            }
            records.push(parse_record(&fields, idx + 1)?);
        }
        let dt = if records.len() >= 2 {
            records[1].t - records[0].t
        } else {
            0.0
        };
        Ok(Self { dt, records })
    }
}

fn parse_record(fields: &[&str], line: usize) -> Result<TickRecord, TrajectoryError> {
    let bad = |reason: String| TrajectoryError::Malformed { line, reason };
    let f = |s: &str| -> Result<f64, TrajectoryError> {
        s.parse::<f64>().map_err(|e| bad(format!("bad float {s:?}: {e}")))
    };
    let mut at = 0usize;
    let mut take = |n: usize| {
        let slice = &fields[at..at + n];
        at += n;
        slice
    };
    let t = f(take(1)[0])?;
    let q_human = DVector::from_iterator(
        HUMAN_JOINTS,
        take(HUMAN_JOINTS).iter().map(|s| f(s)).collect::<Result<Vec<_>, _>>()?,
    );
    let qd_human = DVector::from_iterator(
        HUMAN_JOINTS,
        take(HUMAN_JOINTS).iter().map(|s| f(s)).collect::<Result<Vec<_>, _>>()?,
    );
    let q_robot = DVector::from_iterator(
        ROBOT_JOINTS,
        take(ROBOT_JOINTS).iter().map(|s| f(s)).collect::<Result<Vec<_>, _>>()?,
    );
    let qd_robot = DVector::from_iterator(
        ROBOT_JOINTS,
        take(ROBOT_JOINTS).iter().map(|s| f(s)).collect::<Result<Vec<_>, _>>()?,
    );
    let pose = |fields: &[&str]| -> Result<Pose, TrajectoryError> {
        let p = Vector3::new(f(fields[0])?, f(fields[1])?, f(fields[2])?);
        let quat = nalgebra::Quaternion::new(f(fields[3])?, f(fields[4])?, f(fields[5])?, f(fields[6])?);
        Ok(Pose::new(p, UnitQuaternion::from_quaternion(quat)))
    };
    let robot_ee = pose(take(7))?;
    let human_ee = pose(take(7))?;
    let relative_error_norm = f(take(1)[0])?;
    let phase = Phase::from_str(take(1)[0]).map_err(bad)?;
    let mask_text = take(1)[0];
    let active_constraints = u64::from_str_radix(mask_text.trim_start_matches("0x"), 16)
        .map_err(|e| bad(format!("bad mask {mask_text:?}: {e}")))?;
    let tau = DVector::from_iterator(
        ROBOT_JOINTS,
        take(ROBOT_JOINTS).iter().map(|s| f(s)).collect::<Result<Vec<_>, _>>()?,
    );
    Ok(TickRecord {
        t,
        q_human,
        qd_human,
        q_robot,
        qd_robot,
        robot_ee,
        human_ee,
        relative_error_norm,
        phase,
        active_constraints,
        tau,
    })
}
