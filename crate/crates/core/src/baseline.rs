//! Fixed-transfer-point baseline methods.
//!
//! Both baselines pick a hand pose up front and steer the pair towards it
//! with plain closed-loop tracking, ignoring the receiver's impairment. They
//! run through the same controller, constraints, and logging as the proposed
//! method, so every metric is directly comparable.

use crate::controller::{run_with_mode, ControlMode, ControllerError, RunResult};
use crate::kinematics::Pose;
use crate::qp::{solve_qp, QpProblem};
use crate::scenario::Scenario;
use nalgebra::{DMatrix, DVector, Vector3};
use std::fmt;
use std::str::FromStr;

/// Which controller drives a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Mobility-aware interaction: the meeting pose is optimized online.
    Proposed,
    /// Hand target fixed at the ergonomic-nominal posture's hand pose.
    Reba,
    /// Hand target fixed at the initial hand pose (minimal displacement),
    /// projected onto the workspace constraints.
    MinDisplacement,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Proposed, Method::Reba, Method::MinDisplacement];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Reba => "reba",
            Method::MinDisplacement => "mindisp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "proposed" => Ok(Method::Proposed),
            "reba" => Ok(Method::Reba),
            "mindisp" => Ok(Method::MinDisplacement),
            other => Err(format!(
                "unknown method '{other}', expected proposed, reba, or mindisp"
            )),
        }
    }
}

/// World hand pose of the ergonomic nominal posture: where a standard
/// assessment would place the transfer point, reachable or not for this
/// receiver.
pub fn reba_hand_pose(scenario: &Scenario) -> Result<Pose, ControllerError> {
    let local = scenario.human_chain.fk_pose(&scenario.nominal_posture)?;
    Ok(scenario.pelvis_pose.compose(&local))
}

/// World hand pose closest to the initial one that respects the workspace:
/// the position is projected above the support plane when one is configured,
/// the orientation is kept unchanged.
pub fn min_displacement_hand_pose(scenario: &Scenario) -> Result<Pose, ControllerError> {
    let local = scenario.human_chain.fk_pose(&scenario.q_human_initial)?;
    let initial = scenario.pelvis_pose.compose(&local);
    let c = &scenario.config.constraints;
    let Some(z_floor) = c.armrest_z_m else {
        return Ok(initial);
    };
    let z_min = z_floor + c.margin_m;

    // min ||p - p0||^2 subject to p_z >= z_min, as a 3-variable QP.
    let mut ineq = DMatrix::zeros(1, 3);
    ineq[(0, 2)] = -1.0;
    let problem = QpProblem {
        objective_matrix: DMatrix::identity(3, 3),
        objective_vector: DVector::from_column_slice(initial.position.as_slice()),
        ineq_matrix: ineq,
        ineq_bound: DVector::from_element(1, -z_min),
        eq_matrix: DMatrix::zeros(0, 3),
        eq_rhs: DVector::zeros(0),
    };
    let solution = solve_qp(&problem, 1e-10).map_err(ControllerError::Solver)?;
    Ok(Pose::new(
        Vector3::new(solution.x[0], solution.x[1], solution.x[2]),
        initial.orientation,
    ))
}

/// Runs the scenario under the given method.
pub fn run_method(scenario: &Scenario, method: Method) -> Result<RunResult, ControllerError> {
    let mode = match method {
        Method::Proposed => ControlMode::Proposed,
        Method::Reba => ControlMode::FixedTarget {
            hand_target_world: reba_hand_pose(scenario)?,
        },
        Method::MinDisplacement => ControlMode::FixedTarget {
            hand_target_world: min_displacement_hand_pose(scenario)?,
        },
    };
    run_with_mode(scenario, mode)
}
