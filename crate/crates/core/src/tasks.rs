//! Task and constraint blocks over the augmented decision vector.
//!
//! The decision vector stacks, in order: robot joint velocities, the robot
//! end-effector twist (world frame), human joint velocities, and the human
//! end-effector twist (pelvis frame). Twists are decision variables of their
//! own, tied to the joint rates only through soft closed-loop rows, which is
//! what lets the interaction pose emerge from the optimisation.

use crate::kinematics::{pose_error, KinematicChain, Pose};
use crate::qp::{weighted_stack_level, ConstraintSet, HierarchyStack, QpError, WeightedTask};
use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector2, Vector3};
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("gate parameters must satisfy 0 <= d_min < d_max")]
    InvalidGateParams,
    #[error("previous-tick end-effector poses are required before building interaction rows")]
    MissingPreviousState,
}

/// Column layout of the augmented decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub robot_joints: usize,
    pub human_joints: usize,
}

impl StateLayout {
    pub fn new(robot_joints: usize, human_joints: usize) -> Self {
        Self {
            robot_joints,
            human_joints,
        }
    }

    pub fn dim(&self) -> usize {
        self.robot_joints + self.human_joints + 12
    }

    pub fn robot_joint_cols(&self) -> Range<usize> {
        0..self.robot_joints
    }

    pub fn robot_twist_cols(&self) -> Range<usize> {
        self.robot_joints..self.robot_joints + 6
    }

    pub fn human_joint_cols(&self) -> Range<usize> {
        self.robot_joints + 6..self.robot_joints + 6 + self.human_joints
    }

    pub fn human_twist_cols(&self) -> Range<usize> {
        let at = self.robot_joints + 6 + self.human_joints;
        at..at + 6
    }

    /// Splits a solved decision vector into its four components.
    pub fn split(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>) {
        let qd_r = x.rows(0, self.robot_joints).into();
        let tw_r = x.rows(self.robot_joints, 6).into();
        let qd_h = x.rows(self.robot_joints + 6, self.human_joints).into();
        let tw_h = x.rows(self.robot_joints + 6 + self.human_joints, 6).into();
        (qd_r, tw_r, qd_h, tw_h)
    }
}

/// One objective block: rows of `A` and the target `b` over the full layout.
pub type Block = (DMatrix<f64>, DVector<f64>);

/// Closed-loop tracking rows for the robot arm: `J qd_r - xd_r` is driven
/// towards the gain-scaled pose error between the desired (previous optimal)
/// and measured end-effector pose, both in the world frame.
pub fn robot_clik_block(
    layout: &StateLayout,
    jacobian: &DMatrix<f64>,
    gain: &DVector<f64>,
    desired: &Pose,
    measured: &Pose,
) -> Result<Block, TaskError> {
    clik_block(
        layout,
        jacobian,
        gain,
        desired,
        measured,
        layout.robot_joint_cols(),
        layout.robot_twist_cols(),
    )
}

/// Closed-loop tracking rows for the human arm, all in the pelvis frame.
pub fn human_clik_block(
    layout: &StateLayout,
    jacobian: &DMatrix<f64>,
    gain: &DVector<f64>,
    desired: &Pose,
    measured: &Pose,
) -> Result<Block, TaskError> {
    clik_block(
        layout,
        jacobian,
        gain,
        desired,
        measured,
        layout.human_joint_cols(),
        layout.human_twist_cols(),
    )
}

fn clik_block(
    layout: &StateLayout,
    jacobian: &DMatrix<f64>,
    gain: &DVector<f64>,
    desired: &Pose,
    measured: &Pose,
    joint_cols: Range<usize>,
    twist_cols: Range<usize>,
) -> Result<Block, TaskError> {
    let n = joint_cols.len();
    if jacobian.nrows() != 6 || jacobian.ncols() != n {
        return Err(TaskError::DimensionMismatch(format!(
            "expected 6x{n} jacobian, got {}x{}",
            jacobian.nrows(),
            jacobian.ncols()
        )));
    }
    if gain.len() != 6 {
        return Err(TaskError::DimensionMismatch("gain must have 6 entries".into()));
    }
    let s = layout.dim();
    let mut a = DMatrix::zeros(6, s);
    a.view_mut((0, joint_cols.start), (6, n)).copy_from(jacobian);
    for i in 0..6 {
        a[(i, twist_cols.start + i)] = -1.0;
    }
    let err = pose_error(desired, measured);
    let b = DVector::from_fn(6, |i, _| gain[i] * err[i]);
    Ok((a, b))
}

/// Everything the interaction rows need to know about the previous tick.
#[derive(Debug, Clone)]
pub struct InteractionFrames {
    /// Pelvis pose in the world frame.
    pub pelvis: Pose,
    /// World-frame linear velocity of the pelvis origin (zero when seated or
    /// standing still).
    pub pelvis_velocity: Vector3<f64>,
    /// Previous-tick optimal robot end-effector pose, world frame.
    pub prev_robot_ee: Pose,
    /// Previous-tick optimal human end-effector pose, pelvis frame.
    pub prev_human_ee: Pose,
    /// Rigid transform from the human grasp frame to the robot grasp frame.
    pub grasp_offset: Pose,
}

/// Interaction rows: drives the predicted one-step gap between the robot
/// grasp pose and the offset-shifted human grasp pose to zero. The human
/// twist enters rotated into the world frame; the pelvis transport velocity
/// is compensated on the target side.
/// Largest speed from which braking at `accel` still stops within `gap`,
/// with a one-tick discretisation reserve. Recovers the plain one-step bound
/// `gap / dt` as `accel` grows without bound; a non-positive gap admits no
/// approach at all.
pub fn brake_speed(gap: f64, accel: f64, dt: f64) -> f64 {
    let step = accel * dt;
    -step + (step * step + 2.0 * accel * gap.max(0.0)).sqrt()
}

pub fn interacting_ee_block(
    layout: &StateLayout,
    frames: &InteractionFrames,
    twist_accel_lin: f64,
    twist_accel_ang: f64,
    dt: f64,
) -> Result<Block, TaskError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(TaskError::DimensionMismatch("dt must be positive".into()));
    }
    let s = layout.dim();
    let mut a = DMatrix::zeros(6, s);
    let rt = layout.robot_twist_cols().start;
    for i in 0..6 {
        a[(i, rt + i)] = dt;
    }
    let rot = frames.pelvis.orientation.to_rotation_matrix();
    let ht = layout.human_twist_cols().start;
    for r in 0..3 {
        for c in 0..3 {
            a[(r, ht + c)] = -dt * rot[(r, c)];
            a[(r + 3, ht + 3 + c)] = -dt * rot[(r, c)];
        }
    }
    let human_world = frames.pelvis.compose(&frames.prev_human_ee);
    let target = human_world.compose(&frames.grasp_offset);
    let gap = pose_error(&frames.prev_robot_ee, &target);
    // The demanded per-tick closure tapers with the remaining gap so the
    // twists, whose rates of change are capped, can still stop at contact
    // instead of oscillating through it.
    let mut b = DVector::zeros(6);
    for i in 0..6 {
        let accel = if i < 3 { twist_accel_lin } else { twist_accel_ang };
        let cap = brake_speed(gap[i].abs(), accel, dt) * dt;
        b[i] = -gap[i].signum() * gap[i].abs().min(cap);
    }
    for i in 0..3 {
        b[i] += dt * frames.pelvis_velocity[i];
    }
    Ok((a, b))
}

/// Severity-weighted damping rows: `W qd_h` pulled towards zero.
pub fn impairment_damping_block(layout: &StateLayout, severity: &DVector<f64>) -> Result<Block, TaskError> {
    let m = layout.human_joints;
    if severity.len() != m {
        return Err(TaskError::DimensionMismatch(format!(
            "severity has {} entries, layout expects {m}",
            severity.len()
        )));
    }
    let mut a = DMatrix::zeros(m, layout.dim());
    let at = layout.human_joint_cols().start;
    for i in 0..m {
        a[(i, at + i)] = severity[i];
    }
    Ok((a, DVector::zeros(m)))
}

/// Diagonal gated damping of out-of-plane human joints; `gates` holds one
/// activation in [0, 1] per human joint.
pub fn sagittal_damping_block(layout: &StateLayout, gates: &DVector<f64>) -> Result<Block, TaskError> {
    let m = layout.human_joints;
    if gates.len() != m {
        return Err(TaskError::DimensionMismatch(format!(
            "gates have {} entries, layout expects {m}",
            gates.len()
        )));
    }
    let mut a = DMatrix::zeros(m, layout.dim());
    let at = layout.human_joint_cols().start;
    for i in 0..m {
        a[(i, at + i)] = gates[i];
    }
    Ok((a, DVector::zeros(m)))
}

/// Single row damping the spine joint, keeping back bending a last resort.
pub fn pelvis_displacement_block(layout: &StateLayout) -> Block {
    let mut a = DMatrix::zeros(1, layout.dim());
    a[(0, layout.human_joint_cols().start)] = 1.0;
    (a, DVector::zeros(1))
}

/// Direct twist command rows for both agents: each end-effector twist is
/// driven to `gain .* pose_error(target, measured)` with no joint coupling.
/// Fixed-target controllers use this in place of the interaction rows; the
/// human poses are pelvis-frame quantities.
pub fn twist_command_block(
    layout: &StateLayout,
    robot_gain: &DVector<f64>,
    robot_target: &Pose,
    robot_measured: &Pose,
    human_gain: &DVector<f64>,
    human_target: &Pose,
    human_measured: &Pose,
    twist_accel_lin: f64,
    twist_accel_ang: f64,
    dt: f64,
) -> Result<Block, TaskError> {
    if robot_gain.len() != 6 || human_gain.len() != 6 {
        return Err(TaskError::DimensionMismatch("gains must have 6 entries".into()));
    }
    let dim = layout.dim();
    let mut a = DMatrix::zeros(12, dim);
    let rt = layout.robot_twist_cols().start;
    let ht = layout.human_twist_cols().start;
    for i in 0..6 {
        a[(i, rt + i)] = 1.0;
        a[(6 + i, ht + i)] = 1.0;
    }
    let re = pose_error(robot_target, robot_measured);
    let he = pose_error(human_target, human_measured);
    // Commanded twists are capped at the speed the capped twist rates can
    // still brake from, so a large gain cannot command an overshoot.
    let mut b = DVector::zeros(12);
    for i in 0..6 {
        let accel = if i < 3 { twist_accel_lin } else { twist_accel_ang };
        let r_cap = brake_speed(re[i].abs(), accel, dt);
        b[i] = (robot_gain[i] * re[i]).clamp(-r_cap, r_cap);
        let h_cap = brake_speed(he[i].abs(), accel, dt);
        b[6 + i] = (human_gain[i] * he[i]).clamp(-h_cap, h_cap);
    }
    Ok((a, b))
}

/// Proportional pull of the human joints towards a reference posture,
/// resolving fixed-target redundancy the way a posture-biased pseudo-inverse
/// would.
pub fn posture_pull_block(
    layout: &StateLayout,
    current: &DVector<f64>,
    reference: &DVector<f64>,
    gain: f64,
) -> Result<Block, TaskError> {
    let m = layout.human_joints;
    if current.len() != m || reference.len() != m {
        return Err(TaskError::DimensionMismatch(format!(
            "postures must have {m} entries"
        )));
    }
    let mut a = DMatrix::zeros(m, layout.dim());
    let at = layout.human_joint_cols().start;
    for i in 0..m {
        a[(i, at + i)] = 1.0;
    }
    let b = DVector::from_fn(m, |i, _| gain * (reference[i] - current[i]));
    Ok((a, b))
}

/// Placeholder task with no influence, for unused slots in a shared stack
/// layout.
pub fn zero_block(layout: &StateLayout) -> Block {
    (DMatrix::zeros(1, layout.dim()), DVector::zeros(1))
}

/// Tikhonov rows on both agents' joint velocities. The human rows keep the
/// redundant allocation well posed: without them the arm's self-motion is
/// free at every level and the solver may wander inside it between ticks.
pub fn velocity_regularisation_block(layout: &StateLayout) -> Block {
    let nr = layout.robot_joints;
    let nh = layout.human_joints;
    let mut a = DMatrix::zeros(nr + nh, layout.dim());
    for i in 0..nr {
        a[(i, i)] = 1.0;
    }
    let human = layout.human_joint_cols();
    for i in 0..nh {
        a[(nr + i, human.start + i)] = 1.0;
    }
    (a, DVector::zeros(nr + nh))
}

/// Distance thresholds and the orthogonality test of the sagittal gate.
#[derive(Debug, Clone, Copy)]
pub struct GateParams {
    /// Distance below which the gate is fully open (no damping), metres.
    pub d_min: f64,
    /// Distance above which out-of-plane joints are fully damped, metres.
    pub d_max: f64,
    /// `|axis . normal|` below this counts as orthogonal to the sagittal
    /// normal (the joint produces out-of-plane motion).
    pub orthogonality_threshold: f64,
}

impl GateParams {
    pub fn validate(&self) -> Result<(), TaskError> {
        if !(self.d_min >= 0.0 && self.d_max > self.d_min && self.orthogonality_threshold > 0.0) {
            return Err(TaskError::InvalidGateParams);
        }
        Ok(())
    }
}

/// Gate activation for one joint: 1 fully damps an out-of-plane joint while
/// the robot is far, fades smoothly through the transition band, and releases
/// entirely below `d_min` or for joints whose axis is parallel to the
/// sagittal normal (those produce in-plane motion and are never damped).
pub fn sagittal_gate(
    distance: f64,
    axis: &Vector3<f64>,
    normal: &Vector3<f64>,
    params: &GateParams,
) -> Result<f64, TaskError> {
    params.validate()?;
    let n = normal.norm();
    let a = axis.norm();
    if n < 1e-12 || a < 1e-12 {
        return Err(TaskError::DimensionMismatch("axis and normal must be non-zero".into()));
    }
    let alignment = (axis.dot(normal) / (n * a)).abs();
    if alignment >= params.orthogonality_threshold {
        return Ok(0.0);
    }
    Ok(if distance >= params.d_max {
        1.0
    } else if distance > params.d_min {
        let phase = (distance - params.d_min) / (params.d_max - params.d_min);
        0.5 * (1.0 - (phase * std::f64::consts::PI).cos())
    } else {
        0.0
    })
}

/// Per-joint gate activations from the current human posture.
pub fn sagittal_gates(
    chain: &KinematicChain,
    q: &DVector<f64>,
    normal_pelvis: &Vector3<f64>,
    distance: f64,
    params: &GateParams,
) -> Result<DVector<f64>, TaskError> {
    let mut gates = DVector::zeros(chain.dof());
    for i in 0..chain.dof() {
        let axis = chain
            .joint_axis(q, i)
            .map_err(|e| TaskError::DimensionMismatch(e.to_string()))?;
        gates[i] = sagittal_gate(distance, &axis, normal_pelvis, params)?;
    }
    Ok(gates)
}

/// Row category, used for the logged active-constraint bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ConstraintCategory {
    RobotJointPosition = 0,
    RobotJointVelocity = 1,
    HumanJointPosition = 2,
    HumanJointVelocity = 3,
    RobotTaskPosition = 4,
    RobotTaskVelocity = 5,
    HumanTaskPosition = 6,
    HumanTaskVelocity = 7,
    Armrest = 8,
    HorizontalSeparation = 9,
    BodyDistance = 10,
}

/// Collects inequality rows together with their categories.
#[derive(Debug, Clone)]
pub struct ConstraintBuilder {
    dim: usize,
    rows: Vec<(DVector<f64>, f64, ConstraintCategory)>,
}

impl ConstraintBuilder {
    pub fn new(layout: &StateLayout) -> Self {
        Self {
            dim: layout.dim(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: DVector<f64>, bound: f64, category: ConstraintCategory) {
        debug_assert_eq!(row.len(), self.dim);
        self.rows.push((row, bound, category));
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Materialises the rows into a solver constraint set plus the aligned
    /// category list.
    pub fn build(&self) -> (ConstraintSet, Vec<ConstraintCategory>) {
        let mut set = ConstraintSet::empty(self.dim);
        let n = self.rows.len();
        let mut matrix = DMatrix::zeros(n, self.dim);
        let mut bound = DVector::zeros(n);
        let mut categories = Vec::with_capacity(n);
        for (i, (row, d, cat)) in self.rows.iter().enumerate() {
            matrix.row_mut(i).copy_from(&row.transpose());
            bound[i] = *d;
            categories.push(*cat);
        }
        set.append_ineq(&matrix, &bound);
        (set, categories)
    }
}

/// Bitmask (one bit per [`ConstraintCategory`]) of rows active at `x`.
pub fn active_constraint_mask(
    set: &ConstraintSet,
    categories: &[ConstraintCategory],
    x: &DVector<f64>,
    activity_tolerance: f64,
) -> u64 {
    let mut mask = 0u64;
    let slack = &set.ineq_bound - &set.ineq_matrix * x;
    for (i, cat) in categories.iter().enumerate() {
        if slack[i] <= activity_tolerance {
            mask |= 1u64 << (*cat as u8);
        }
    }
    mask
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Agent {
    Robot,
    Human,
}

/// Position- and velocity-level joint rows: the rate must sit inside its box,
/// and position bounds cap the rate through a stopping-distance rule, so a
/// joint obeying the `accel` deceleration cap can always brake before the
/// limit. As `accel` grows the position rows recover the plain one-step bound
/// `(upper - q) / dt`. A previous posture already outside its bounds is
/// clamped to the boundary (the row then only admits inward motion) and
/// reported.
pub fn joint_constraints(
    builder: &mut ConstraintBuilder,
    layout: &StateLayout,
    agent: Agent,
    q_prev: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    qd_min: &DVector<f64>,
    qd_max: &DVector<f64>,
    accel: f64,
    dt: f64,
) -> Result<Vec<usize>, TaskError> {
    let cols = match agent {
        Agent::Robot => layout.robot_joint_cols(),
        Agent::Human => layout.human_joint_cols(),
    };
    let n = cols.len();
    if q_prev.len() != n || lower.len() != n || upper.len() != n || qd_min.len() != n || qd_max.len() != n
    {
        return Err(TaskError::DimensionMismatch(format!(
            "joint constraint vectors must have {n} entries"
        )));
    }
    let (pos_cat, vel_cat) = match agent {
        Agent::Robot => (
            ConstraintCategory::RobotJointPosition,
            ConstraintCategory::RobotJointVelocity,
        ),
        Agent::Human => (
            ConstraintCategory::HumanJointPosition,
            ConstraintCategory::HumanJointVelocity,
        ),
    };
    if !(accel.is_finite() && accel > 0.0) {
        return Err(TaskError::DimensionMismatch(
            "acceleration cap must be positive and finite".into(),
        ));
    }
    let brake = |gap: f64| brake_speed(gap, accel, dt);
    let mut clamped = Vec::new();
    let dim = layout.dim();
    for i in 0..n {
        let q = q_prev[i].clamp(lower[i], upper[i]);
        if (q - q_prev[i]).abs() > 1e-9 {
            clamped.push(i + 1);
        }
        let col = cols.start + i;
        let mut up = DVector::zeros(dim);
        up[col] = 1.0;
        builder.push(up, brake(upper[i] - q), pos_cat);
        let mut down = DVector::zeros(dim);
        down[col] = -1.0;
        builder.push(down, brake(q - lower[i]), pos_cat);
        let mut vel_up = DVector::zeros(dim);
        vel_up[col] = 1.0;
        builder.push(vel_up, qd_max[i], vel_cat);
        let mut vel_down = DVector::zeros(dim);
        vel_down[col] = -1.0;
        builder.push(vel_down, -qd_min[i], vel_cat);
    }
    Ok(clamped)
}

/// Previous-tick geometry needed by the task-space rows.
#[derive(Debug, Clone)]
pub struct TaskSpaceState {
    /// Robot end-effector position, world frame.
    pub robot_ee_position: Vector3<f64>,
    /// Human hand position, world frame.
    pub human_ee_position: Vector3<f64>,
    /// Pelvis origin, world frame.
    pub pelvis_position: Vector3<f64>,
    /// Pelvis orientation (pelvis to world).
    pub pelvis_orientation: UnitQuaternion<f64>,
    /// Accumulated rotation-vector coordinates (integral of angular twist),
    /// used only by the wide orientation boxes.
    pub robot_orientation_coord: Vector3<f64>,
    pub human_orientation_coord: Vector3<f64>,
    /// Start-of-run positions, the centres of the wide position boxes.
    pub robot_start_position: Vector3<f64>,
    pub human_start_position: Vector3<f64>,
    /// Mobile-base origin on the floor plane, world frame.
    pub robot_base_xy: Vector2<f64>,
    /// Twist commands of the previous tick, the centres of the twist
    /// acceleration windows.
    pub prev_robot_twist: DVector<f64>,
    pub prev_human_twist: DVector<f64>,
    /// World-frame linear Jacobians (3 rows) of each end-effector, used to
    /// bound the joint-side motion alongside the twist-side rows.
    pub robot_linear_jacobian: DMatrix<f64>,
    pub human_linear_jacobian_world: DMatrix<f64>,
}

/// Workspace boxes and the scenario safety half-spaces.
#[derive(Debug, Clone, Copy)]
pub struct TaskSpaceParams {
    /// Half-width of the position box around the start position, metres.
    pub position_box: f64,
    /// Half-width of the accumulated-orientation box, radians.
    pub orientation_box: f64,
    pub linear_velocity_limit: f64,
    pub angular_velocity_limit: f64,
    /// Per-tick twist-change caps; both agents' end-effector velocities ramp
    /// instead of stepping, which keeps the interaction split smooth.
    pub twist_accel_lin: f64,
    pub twist_accel_ang: f64,
    /// Minimum world z for the hand and the robot end-effector (seated
    /// scenarios), metres.
    pub armrest_z: Option<f64>,
    /// Minimum horizontal robot-ee-to-pelvis distance, metres.
    pub min_horizontal_separation: f64,
    /// Minimum full 3-D robot-ee-to-pelvis distance, metres.
    pub min_body_distance: f64,
    /// Safety margin added to every position-level half-space to absorb the
    /// gap between the per-tick linearisation and the true kinematics.
    pub margin: f64,
}

/// Emits the task-space rows. Safety half-spaces are linearised around the
/// previous tick and enforced on the twist variables and, through the linear
/// Jacobians, on the joint rates, so both representations stay clear of the
/// limit.
pub fn task_space_constraints(
    builder: &mut ConstraintBuilder,
    layout: &StateLayout,
    state: &TaskSpaceState,
    params: &TaskSpaceParams,
    dt: f64,
) -> Result<(), TaskError> {
    if state.robot_linear_jacobian.nrows() != 3
        || state.robot_linear_jacobian.ncols() != layout.robot_joints
        || state.human_linear_jacobian_world.nrows() != 3
        || state.human_linear_jacobian_world.ncols() != layout.human_joints
    {
        return Err(TaskError::DimensionMismatch(
            "linear jacobians must be 3 x joint-count".into(),
        ));
    }
    let dim = layout.dim();
    let rt = layout.robot_twist_cols().start;
    let ht = layout.human_twist_cols().start;
    let rot = state.pelvis_orientation.to_rotation_matrix();

    // Twist velocity boxes, tightened to the band reachable from the
    // previous twist under the task-space acceleration caps.
    if state.prev_robot_twist.len() != 6 || state.prev_human_twist.len() != 6 {
        return Err(TaskError::DimensionMismatch(
            "previous twists must have 6 entries".into(),
        ));
    }
    for i in 0..6 {
        let (limit, accel) = if i < 3 {
            (params.linear_velocity_limit, params.twist_accel_lin)
        } else {
            (params.angular_velocity_limit, params.twist_accel_ang)
        };
        let step = accel * dt;
        for (col, cat, prev) in [
            (rt + i, ConstraintCategory::RobotTaskVelocity, state.prev_robot_twist[i]),
            (ht + i, ConstraintCategory::HumanTaskVelocity, state.prev_human_twist[i]),
        ] {
            let mut up = DVector::zeros(dim);
            up[col] = 1.0;
            builder.push(up, limit.min(prev + step), cat);
            let mut down = DVector::zeros(dim);
            down[col] = -1.0;
            builder.push(down, -((-limit).max(prev - step)), cat);
        }
    }

    // Wide position boxes around the start positions (world axes), as
    // stopping-distance speed caps so the capped twist rates can always brake
    // inside. The human twist is a pelvis-frame quantity, so its rows go
    // through the pelvis rotation.
    let brake_lin = |gap: f64| brake_speed(gap, params.twist_accel_lin, dt);
    let brake_ang = |gap: f64| brake_speed(gap, params.twist_accel_ang, dt);
    for axis in 0..3 {
        let r_off = state.robot_ee_position[axis] - state.robot_start_position[axis];
        let mut up = DVector::zeros(dim);
        up[rt + axis] = 1.0;
        builder.push(up, brake_lin(params.position_box - r_off), ConstraintCategory::RobotTaskPosition);
        let mut down = DVector::zeros(dim);
        down[rt + axis] = -1.0;
        builder.push(down, brake_lin(params.position_box + r_off), ConstraintCategory::RobotTaskPosition);

        let h_off = state.human_ee_position[axis] - state.human_start_position[axis];
        let mut up = DVector::zeros(dim);
        for c in 0..3 {
            up[ht + c] = rot[(axis, c)];
        }
        builder.push(up, brake_lin(params.position_box - h_off), ConstraintCategory::HumanTaskPosition);
        let mut down = DVector::zeros(dim);
        for c in 0..3 {
            down[ht + c] = -rot[(axis, c)];
        }
        builder.push(down, brake_lin(params.position_box + h_off), ConstraintCategory::HumanTaskPosition);
    }

    // Wide accumulated-orientation boxes.
    for axis in 0..3 {
        let r_coord = state.robot_orientation_coord[axis];
        let mut up = DVector::zeros(dim);
        up[rt + 3 + axis] = 1.0;
        builder.push(up, brake_ang(params.orientation_box - r_coord), ConstraintCategory::RobotTaskPosition);
        let mut down = DVector::zeros(dim);
        down[rt + 3 + axis] = -1.0;
        builder.push(down, brake_ang(params.orientation_box + r_coord), ConstraintCategory::RobotTaskPosition);

        let h_coord = state.human_orientation_coord[axis];
        let mut up = DVector::zeros(dim);
        up[ht + 3 + axis] = 1.0;
        builder.push(up, brake_ang(params.orientation_box - h_coord), ConstraintCategory::HumanTaskPosition);
        let mut down = DVector::zeros(dim);
        down[ht + 3 + axis] = -1.0;
        builder.push(down, brake_ang(params.orientation_box + h_coord), ConstraintCategory::HumanTaskPosition);
    }

    // Keep-above plane for seated scenarios, on both agents and on both the
    // twist and joint representations.
    if let Some(z_floor) = params.armrest_z {
        let z_min = z_floor + params.margin;

        let robot_cap = brake_lin(state.robot_ee_position[2] - z_min);
        let mut tw = DVector::zeros(dim);
        tw[rt + 2] = -1.0;
        builder.push(tw, robot_cap, ConstraintCategory::Armrest);
        let mut jr = DVector::zeros(dim);
        for c in 0..layout.robot_joints {
            jr[c] = -state.robot_linear_jacobian[(2, c)];
        }
        builder.push(jr, robot_cap, ConstraintCategory::Armrest);

        let human_cap = brake_lin(state.human_ee_position[2] - z_min);
        let mut tw = DVector::zeros(dim);
        for c in 0..3 {
            tw[ht + c] = -rot[(2, c)];
        }
        builder.push(tw, human_cap, ConstraintCategory::Armrest);
        let mut jh = DVector::zeros(dim);
        let hj = layout.human_joint_cols().start;
        for c in 0..layout.human_joints {
            jh[hj + c] = -state.human_linear_jacobian_world[(2, c)];
        }
        builder.push(jh, human_cap, ConstraintCategory::Armrest);
    }

    // Robot-to-pelvis separation half-spaces, linearised along the current
    // offset direction: horizontal cylinder and full 3-D ball.
    let offset = state.robot_ee_position - state.pelvis_position;
    let horizontal = Vector3::new(offset[0], offset[1], 0.0);
    let h_dist = horizontal.norm();
    if h_dist > 1e-9 {
        let u = horizontal / h_dist;
        let cap = brake_lin(h_dist - (params.min_horizontal_separation + params.margin));
        let mut tw = DVector::zeros(dim);
        for c in 0..3 {
            tw[rt + c] = -u[c];
        }
        builder.push(tw, cap, ConstraintCategory::HorizontalSeparation);
        let mut jr = DVector::zeros(dim);
        for c in 0..layout.robot_joints {
            let mut dir = 0.0;
            for r in 0..3 {
                dir += u[r] * state.robot_linear_jacobian[(r, c)];
            }
            jr[c] = -dir;
        }
        builder.push(jr, cap, ConstraintCategory::HorizontalSeparation);
    }
    let dist = offset.norm();
    if dist > 1e-9 {
        let u = offset / dist;
        let cap = brake_lin(dist - (params.min_body_distance + params.margin));
        let mut tw = DVector::zeros(dim);
        for c in 0..3 {
            tw[rt + c] = -u[c];
        }
        builder.push(tw, cap, ConstraintCategory::BodyDistance);
        let mut jr = DVector::zeros(dim);
        for c in 0..layout.robot_joints {
            let mut dir = 0.0;
            for r in 0..3 {
                dir += u[r] * state.robot_linear_jacobian[(r, c)];
            }
            jr[c] = -dir;
        }
        builder.push(jr, cap, ConstraintCategory::BodyDistance);
    }

    // The base itself stays outside the horizontal cylinder too. Its floor
    // position is driven directly by the first two joint rates, so this row
    // is exact rather than a Jacobian linearisation.
    let base_offset = Vector2::new(
        state.robot_base_xy[0] - state.pelvis_position[0],
        state.robot_base_xy[1] - state.pelvis_position[1],
    );
    let base_dist = base_offset.norm();
    if base_dist > 1e-9 {
        let u = base_offset / base_dist;
        let cap = brake_lin(base_dist - (params.min_horizontal_separation + params.margin));
        let mut row = DVector::zeros(dim);
        row[0] = -u[0];
        row[1] = -u[1];
        builder.push(row, cap, ConstraintCategory::HorizontalSeparation);
    }
    Ok(())
}

/// Soft-task weights of the approach stack.
#[derive(Debug, Clone, Copy)]
pub struct TaskWeights {
    /// Interaction rows (level 1).
    pub interaction: f64,
    /// Impairment damping.
    pub damping: f64,
    /// Gated out-of-plane damping.
    pub sagittal: f64,
    /// Robot joint-velocity regularisation.
    pub regularisation: f64,
    /// Spine stillness.
    pub pelvis: f64,
}

impl Default for TaskWeights {
    fn default() -> Self {
        Self {
            interaction: 100.0,
            damping: 100.0,
            sagittal: 10.0,
            regularisation: 0.001,
            pelvis: 10.0,
        }
    }
}

/// Prebuilt objective blocks of one control tick.
#[derive(Debug, Clone)]
pub struct StackBlocks {
    pub interacting: Block,
    pub robot_clik: Block,
    pub human_clik: Block,
    pub damping: Block,
    pub sagittal: Block,
    pub pelvis: Block,
    pub regularisation: Block,
}

impl StackBlocks {
    fn weighted_level_tasks(&self, weights: &TaskWeights, scale: f64) -> Vec<WeightedTask> {
        vec![
            WeightedTask {
                weight: scale * weights.damping,
                matrix: self.damping.0.clone(),
                vector: self.damping.1.clone(),
            },
            WeightedTask {
                weight: scale,
                matrix: self.human_clik.0.clone(),
                vector: self.human_clik.1.clone(),
            },
            WeightedTask {
                weight: scale * weights.sagittal,
                matrix: self.sagittal.0.clone(),
                vector: self.sagittal.1.clone(),
            },
            WeightedTask {
                weight: scale,
                matrix: self.robot_clik.0.clone(),
                vector: self.robot_clik.1.clone(),
            },
            WeightedTask {
                weight: scale * weights.pelvis,
                matrix: self.pelvis.0.clone(),
                vector: self.pelvis.1.clone(),
            },
            WeightedTask {
                weight: scale * weights.regularisation,
                matrix: self.regularisation.0.clone(),
                vector: self.regularisation.1.clone(),
            },
        ]
    }
}

/// Two-level approach stack: the interaction task strictly dominates the
/// weighted tracking/damping level.
pub fn approach_stack(
    layout: &StateLayout,
    blocks: &StackBlocks,
    weights: &TaskWeights,
    constraints: ConstraintSet,
) -> Result<HierarchyStack, QpError> {
    let mut stack = HierarchyStack::new(layout.dim());
    stack.constraints = constraints;
    stack.push_level(weighted_stack_level(&[WeightedTask {
        weight: weights.interaction,
        matrix: blocks.interacting.0.clone(),
        vector: blocks.interacting.1.clone(),
    }])?);
    stack.push_level(weighted_stack_level(&blocks.weighted_level_tasks(weights, 1.0))?);
    Ok(stack)
}

/// Hold stack: minimise the whole decision vector. During the entry window
/// `blend` rises from 0 to 1 and the approach tasks are cross-faded out in a
/// single soft level, so the commanded velocity decays without a step.
pub fn hold_stack(
    layout: &StateLayout,
    blocks: &StackBlocks,
    weights: &TaskWeights,
    blend: f64,
    constraints: ConstraintSet,
) -> Result<HierarchyStack, QpError> {
    let blend = blend.clamp(0.0, 1.0);
    let mut stack = HierarchyStack::new(layout.dim());
    stack.constraints = constraints;
    let identity = WeightedTask {
        weight: blend.max(1e-6),
        matrix: DMatrix::identity(layout.dim(), layout.dim()),
        vector: DVector::zeros(layout.dim()),
    };
    if blend >= 1.0 {
        stack.push_level(weighted_stack_level(&[identity])?);
        return Ok(stack);
    }
    let mut tasks = vec![WeightedTask {
        weight: (1.0 - blend) * weights.interaction,
        matrix: blocks.interacting.0.clone(),
        vector: blocks.interacting.1.clone(),
    }];
    tasks.extend(blocks.weighted_level_tasks(weights, 1.0 - blend));
    tasks.push(identity);
    stack.push_level(weighted_stack_level(&tasks)?);
    Ok(stack)
}

/// Retreat stack: a velocity-level postural task drives the robot joints back
/// to the homing posture, the human joints are held still, and both twists
/// stay consistent with the joint rates for logging.
pub fn retreat_stack(
    layout: &StateLayout,
    robot_jacobian: &DMatrix<f64>,
    human_jacobian: &DMatrix<f64>,
    q_robot_prev: &DVector<f64>,
    homing: &DVector<f64>,
    retreat_gain: f64,
    constraints: ConstraintSet,
) -> Result<HierarchyStack, QpError> {
    let dim = layout.dim();
    let n = layout.robot_joints;
    let m = layout.human_joints;
    let mut postural = DMatrix::zeros(n, dim);
    for i in 0..n {
        postural[(i, i)] = 1.0;
    }
    let target = DVector::from_fn(n, |i, _| retreat_gain * (homing[i] - q_robot_prev[i]));

    let mut still = DMatrix::zeros(m, dim);
    let hj = layout.human_joint_cols().start;
    for i in 0..m {
        still[(i, hj + i)] = 1.0;
    }

    let mut robot_consistency = DMatrix::zeros(6, dim);
    robot_consistency
        .view_mut((0, 0), (6, n))
        .copy_from(robot_jacobian);
    let rt = layout.robot_twist_cols().start;
    for i in 0..6 {
        robot_consistency[(i, rt + i)] = -1.0;
    }
    let mut human_consistency = DMatrix::zeros(6, dim);
    human_consistency
        .view_mut((0, hj), (6, m))
        .copy_from(human_jacobian);
    let ht = layout.human_twist_cols().start;
    for i in 0..6 {
        human_consistency[(i, ht + i)] = -1.0;
    }

    let tasks = [
        WeightedTask {
            weight: 1.0,
            matrix: postural,
            vector: target,
        },
        WeightedTask {
            weight: 1.0,
            matrix: still,
            vector: DVector::zeros(m),
        },
        WeightedTask {
            weight: 1.0,
            matrix: robot_consistency,
            vector: DVector::zeros(6),
        },
        WeightedTask {
            weight: 1.0,
            matrix: human_consistency,
            vector: DVector::zeros(6),
        },
    ];
    let mut stack = HierarchyStack::new(dim);
    stack.constraints = constraints;
    stack.push_level(weighted_stack_level(&tasks)?);
    Ok(stack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::{solve_hierarchy, solve_qp, QpProblem};
    use approx::assert_abs_diff_eq;
    use nalgebra::Translation3;
    use std::f64::consts::FRAC_PI_2;

    fn layout() -> StateLayout {
        StateLayout::new(10, 8)
    }

    fn dv(data: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(data)
    }

    #[test]
    fn layout_partitions_the_decision_vector() {
        let l = layout();
        assert_eq!(l.dim(), 30);
        assert_eq!(l.robot_joint_cols(), 0..10);
        assert_eq!(l.robot_twist_cols(), 10..16);
        assert_eq!(l.human_joint_cols(), 16..24);
        assert_eq!(l.human_twist_cols(), 24..30);
    }

    #[test]
    fn robot_clik_residual_matches_hand_assembly() {
        let l = layout();
        let jac = DMatrix::from_fn(6, 10, |r, c| ((r * 10 + c) as f64 * 0.37).sin());
        let gain = dv(&[10.0, 10.0, 10.0, 2.0, 2.0, 2.0]);
        let desired = Pose::new(Vector3::new(0.1, -0.2, 0.3), UnitQuaternion::identity());
        let measured = Pose::new(
            Vector3::new(0.0, 0.0, 0.25),
            UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 0.2),
        );
        let (a, b) = robot_clik_block(&l, &jac, &gain, &desired, &measured).unwrap();
        let x = DVector::from_fn(l.dim(), |i, _| (i as f64 * 0.11).cos());
        let residual = &a * &x - &b;

        let qd: DVector<f64> = x.rows(0, 10).into();
        let twist: DVector<f64> = x.rows(10, 6).into();
        let err = pose_error(&desired, &measured);
        for i in 0..6 {
            let expected = (jac.row(i) * &qd)[0] - twist[i] - gain[i] * err[i];
            assert_abs_diff_eq!(residual[i], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn stationary_joints_leave_pure_feedback_residual() {
        let l = layout();
        let jac = DMatrix::zeros(6, 10);
        let gain = DVector::from_element(6, 10.0);
        let desired = Pose::new(Vector3::new(0.05, 0.0, 0.0), UnitQuaternion::identity());
        let measured = Pose::identity();
        let (a, b) = robot_clik_block(&l, &jac, &gain, &desired, &measured).unwrap();
        let mut x = DVector::zeros(l.dim());
        let v = [0.3, -0.1, 0.2, 0.0, 0.1, -0.2];
        for i in 0..6 {
            x[10 + i] = v[i];
        }
        let residual = &a * &x - &b;
        let err = pose_error(&desired, &measured);
        for i in 0..6 {
            assert_abs_diff_eq!(residual[i], -(v[i] + 10.0 * err[i]), epsilon = 1e-12);
        }
    }

    #[test]
    fn interaction_rows_vanish_at_the_grasp_offset() {
        let l = layout();
        let pelvis = Pose::new(
            Vector3::new(0.2, -0.1, 1.0),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.4),
        );
        let human_local = Pose::new(
            Vector3::new(0.3, 0.1, -0.2),
            UnitQuaternion::from_axis_angle(&Vector3::y_axis(), 0.3),
        );
        let offset = Pose::new(
            Vector3::new(0.1, 0.0, 0.05),
            UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 0.15),
        );
        let robot = pelvis.compose(&human_local).compose(&offset);
        let frames = InteractionFrames {
            pelvis,
            pelvis_velocity: Vector3::zeros(),
            prev_robot_ee: robot,
            prev_human_ee: human_local,
            grasp_offset: offset,
        };
        let (a, b) = interacting_ee_block(&l, &frames, 1e6, 1e6, 0.01).unwrap();
        assert!(b.norm() < 1e-12);
        let residual = &a * &DVector::zeros(l.dim()) - &b;
        assert!(residual.norm() < 1e-12);
    }

    #[test]
    fn interaction_rows_rotate_human_twist_into_world() {
        let l = layout();
        let pelvis = Pose::new(
            Vector3::zeros(),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2),
        );
        let frames = InteractionFrames {
            pelvis,
            pelvis_velocity: Vector3::zeros(),
            prev_robot_ee: Pose::identity(),
            prev_human_ee: Pose::identity(),
            grasp_offset: Pose::identity(),
        };
        let dt = 0.01;
        let (a, _) = interacting_ee_block(&l, &frames, 1e6, 1e6, dt).unwrap();
        // A pelvis-frame x velocity of the hand maps to world y.
        let mut x = DVector::zeros(l.dim());
        x[l.human_twist_cols().start] = 1.0;
        let out = &a * &x;
        assert_abs_diff_eq!(out[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], -dt, epsilon = 1e-12);
    }

    #[test]
    fn gate_profile_matches_the_raised_cosine() {
        let params = GateParams {
            d_min: 0.1,
            d_max: 0.2,
            orthogonality_threshold: 0.1,
        };
        let axis = Vector3::x(); // orthogonal to the y normal
        let normal = Vector3::y();
        assert_abs_diff_eq!(
            sagittal_gate(0.25, &axis, &normal, &params).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            sagittal_gate(0.2, &axis, &normal, &params).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            sagittal_gate(0.15, &axis, &normal, &params).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            sagittal_gate(0.1, &axis, &normal, &params).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            sagittal_gate(0.05, &axis, &normal, &params).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        // In-plane-motion joints (axis parallel to the normal) are never damped.
        assert_abs_diff_eq!(
            sagittal_gate(0.5, &normal, &normal, &params).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn gate_is_continuous_and_monotone_across_the_band() {
        let params = GateParams {
            d_min: 0.1,
            d_max: 0.2,
            orthogonality_threshold: 0.1,
        };
        let axis = Vector3::x();
        let normal = Vector3::y();
        let mut prev = -1.0;
        for k in 0..=400 {
            let d = 0.05 + 0.2 * k as f64 / 400.0;
            let g = sagittal_gate(d, &axis, &normal, &params).unwrap();
            assert!(g >= prev - 1e-12, "gate must be monotone in distance");
            prev = g;
        }
        let eps = 1e-9;
        let near = sagittal_gate(0.1 + eps, &axis, &normal, &params).unwrap();
        assert!(near < 1e-6, "gate must open continuously at d_min");
        let near_max = sagittal_gate(0.2 - eps, &axis, &normal, &params).unwrap();
        assert!(1.0 - near_max < 1e-6, "gate must close continuously at d_max");
    }

    #[test]
    fn joint_rows_at_a_bound_only_admit_inward_motion() {
        let l = layout();
        let mut builder = ConstraintBuilder::new(&l);
        let n = 8;
        let q = DVector::from_element(n, 1.0);
        let lower = DVector::from_element(n, -1.0);
        let upper = DVector::from_element(n, 1.0);
        let vel = DVector::from_element(n, 2.5);
        let clamped = joint_constraints(
            &mut builder,
            &l,
            Agent::Human,
            &q,
            &lower,
            &upper,
            &(-vel.clone()),
            &vel,
            25.0,
            0.01,
        )
        .unwrap();
        assert!(clamped.is_empty());
        let (set, _) = builder.build();
        // Outward motion on joint 1 violates its upper position row.
        let mut x = DVector::zeros(l.dim());
        x[l.human_joint_cols().start] = 0.5;
        let slack = &set.ineq_bound - &set.ineq_matrix * &x;
        assert!(slack.iter().cloned().fold(f64::INFINITY, f64::min) < 0.0);
        // Inward motion is admissible.
        let mut x = DVector::zeros(l.dim());
        x[l.human_joint_cols().start] = -0.5;
        let slack = &set.ineq_bound - &set.ineq_matrix * &x;
        assert!(slack.iter().cloned().fold(f64::INFINITY, f64::min) >= 0.0);
    }

    #[test]
    fn posture_outside_bounds_is_clamped_and_reported() {
        let l = layout();
        let mut builder = ConstraintBuilder::new(&l);
        let n = 8;
        let mut q = DVector::zeros(n);
        q[2] = 1.5;
        let lower = DVector::from_element(n, -1.0);
        let upper = DVector::from_element(n, 1.0);
        let vel = DVector::from_element(n, 2.5);
        let clamped = joint_constraints(
            &mut builder,
            &l,
            Agent::Human,
            &q,
            &lower,
            &upper,
            &(-vel.clone()),
            &vel,
            25.0,
            0.01,
        )
        .unwrap();
        assert_eq!(clamped, vec![3]);
    }

    fn plain_task_state(robot_pos: Vector3<f64>) -> TaskSpaceState {
        TaskSpaceState {
            robot_ee_position: robot_pos,
            human_ee_position: Vector3::new(0.4, 0.0, 1.0),
            pelvis_position: Vector3::zeros(),
            pelvis_orientation: UnitQuaternion::identity(),
            robot_orientation_coord: Vector3::zeros(),
            human_orientation_coord: Vector3::zeros(),
            robot_start_position: robot_pos,
            human_start_position: Vector3::new(0.4, 0.0, 1.0),
            robot_base_xy: Vector2::new(1.5, 0.0),
            prev_robot_twist: DVector::zeros(6),
            prev_human_twist: DVector::zeros(6),
            robot_linear_jacobian: DMatrix::zeros(3, 10),
            human_linear_jacobian_world: DMatrix::zeros(3, 8),
        }
    }

    fn wide_params() -> TaskSpaceParams {
        TaskSpaceParams {
            position_box: 5.0,
            orientation_box: std::f64::consts::PI,
            linear_velocity_limit: 10.0,
            angular_velocity_limit: std::f64::consts::PI,
            twist_accel_lin: 1e6,
            twist_accel_ang: 1e6,
            armrest_z: None,
            min_horizontal_separation: 0.3,
            min_body_distance: 0.25,
            margin: 0.0,
        }
    }

    #[test]
    fn separation_row_binds_before_the_next_step_would_cross() {
        // Robot end-effector 0.31 m from the pelvis with a 0.3 m cylinder:
        // the row admits exactly the speed a full brake can absorb within the
        // 0.01 m of room and rejects anything faster.
        let l = layout();
        let mut builder = ConstraintBuilder::new(&l);
        let state = plain_task_state(Vector3::new(0.31, 0.0, 1.0));
        let params = wide_params();
        task_space_constraints(&mut builder, &l, &state, &params, 0.01).unwrap();
        let (set, cats) = builder.build();
        let cap = brake_speed(0.01, params.twist_accel_lin, 0.01);

        let mut fast = DVector::zeros(l.dim());
        fast[l.robot_twist_cols().start] = -2.0;
        let slack = &set.ineq_bound - &set.ineq_matrix * &fast;
        let min_slack = slack.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min_slack < -1e-12, "2 m/s inward must violate the row");

        let mut ok = DVector::zeros(l.dim());
        ok[l.robot_twist_cols().start] = -cap;
        let slack = &set.ineq_bound - &set.ineq_matrix * &ok;
        let min_slack = slack.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min_slack >= -1e-12, "the stoppable speed sits on the boundary");
        let mask = active_constraint_mask(&set, &cats, &ok, 1e-9);
        assert_ne!(mask & (1 << ConstraintCategory::HorizontalSeparation as u8), 0);
    }

    #[test]
    fn base_separation_row_blocks_the_base_not_the_arm() {
        // Base 0.35 m from the pelvis: driving inward at 6 m/s exceeds the
        // speed a brake can absorb in the 0.05 m of room, the stoppable speed
        // itself sits on the boundary, and the same rate on an arm joint is
        // untouched by this row.
        let l = layout();
        let mut builder = ConstraintBuilder::new(&l);
        let mut state = plain_task_state(Vector3::new(1.0, 0.0, 1.0));
        state.robot_base_xy = Vector2::new(0.35, 0.0);
        let params = wide_params();
        task_space_constraints(&mut builder, &l, &state, &params, 0.01).unwrap();
        let (set, cats) = builder.build();
        let cap = brake_speed(0.05, params.twist_accel_lin, 0.01);

        let mut driving = DVector::zeros(l.dim());
        driving[0] = -6.0;
        let slack = &set.ineq_bound - &set.ineq_matrix * &driving;
        assert!(slack.iter().cloned().fold(f64::INFINITY, f64::min) < -1e-12);

        let mut stopping = DVector::zeros(l.dim());
        stopping[0] = -cap;
        let slack = &set.ineq_bound - &set.ineq_matrix * &stopping;
        assert!(slack.iter().cloned().fold(f64::INFINITY, f64::min) >= -1e-12);
        let mask = active_constraint_mask(&set, &cats, &stopping, 1e-9);
        assert_ne!(mask & (1 << ConstraintCategory::HorizontalSeparation as u8), 0);

        let mut arm = DVector::zeros(l.dim());
        arm[4] = -6.0;
        let slack = &set.ineq_bound - &set.ineq_matrix * &arm;
        assert!(slack.iter().cloned().fold(f64::INFINITY, f64::min) >= -1e-12);
    }

    #[test]
    fn armrest_row_blocks_descent_at_the_plane() {
        let l = layout();
        let mut builder = ConstraintBuilder::new(&l);
        let mut state = plain_task_state(Vector3::new(0.6, 0.0, 0.5));
        state.human_ee_position = Vector3::new(0.4, 0.0, 0.08);
        let mut params = wide_params();
        params.armrest_z = Some(0.07);
        task_space_constraints(&mut builder, &l, &state, &params, 0.01).unwrap();
        let (set, _) = builder.build();

        let mut diving = DVector::zeros(l.dim());
        diving[l.human_twist_cols().start + 2] = -2.0; // unstoppable in 0.01 m
        let slack = &set.ineq_bound - &set.ineq_matrix * &diving;
        assert!(slack.iter().cloned().fold(f64::INFINITY, f64::min) < 0.0);

        let cap = brake_speed(0.01, params.twist_accel_lin, 0.01);
        let mut easing = DVector::zeros(l.dim());
        easing[l.human_twist_cols().start + 2] = -cap;
        let slack = &set.ineq_bound - &set.ineq_matrix * &easing;
        assert!(slack.iter().cloned().fold(f64::INFINITY, f64::min) >= -1e-12);
    }

    fn tiny_blocks(l: &StateLayout) -> StackBlocks {
        let jac_r = DMatrix::from_fn(6, 10, |r, c| ((r + 2 * c) as f64 * 0.21).sin());
        let jac_h = DMatrix::from_fn(6, 8, |r, c| ((r * 3 + c) as f64 * 0.17).cos());
        let gain_r = dv(&[10.0, 10.0, 10.0, 2.0, 2.0, 2.0]);
        let gain_h = DVector::from_element(6, 40.0);
        let desired = Pose::new(Vector3::new(0.4, 0.1, 1.0), UnitQuaternion::identity());
        let measured = Pose::new(Vector3::new(0.35, 0.05, 0.95), UnitQuaternion::identity());
        let frames = InteractionFrames {
            pelvis: Pose::new(Vector3::new(0.0, 0.0, 1.0), UnitQuaternion::identity()),
            pelvis_velocity: Vector3::zeros(),
            prev_robot_ee: Pose::new(Vector3::new(0.8, 0.0, 1.1), UnitQuaternion::identity()),
            prev_human_ee: Pose::new(Vector3::new(0.35, 0.0, 0.0), UnitQuaternion::identity()),
            grasp_offset: Pose::new(Vector3::new(0.1, 0.0, 0.0), UnitQuaternion::identity()),
        };
        StackBlocks {
            interacting: interacting_ee_block(l, &frames, 1e6, 1e6, 0.01).unwrap(),
            robot_clik: robot_clik_block(l, &jac_r, &gain_r, &desired, &measured).unwrap(),
            human_clik: human_clik_block(l, &jac_h, &gain_h, &desired, &measured).unwrap(),
            damping: impairment_damping_block(l, &DVector::from_element(8, 0.5)).unwrap(),
            sagittal: sagittal_damping_block(l, &DVector::from_element(8, 0.3)).unwrap(),
            pelvis: pelvis_displacement_block(l),
            regularisation: velocity_regularisation_block(l),
        }
    }

    #[test]
    fn assembly_order_does_not_change_the_minimiser() {
        // The weighted level is a sum of squares; permuting the stacked rows
        // must leave the solution untouched.
        let l = layout();
        let blocks = tiny_blocks(&l);
        let weights = TaskWeights::default();
        let tasks = blocks.weighted_level_tasks(&weights, 1.0);
        let forward = weighted_stack_level(&tasks).unwrap();
        let mut reversed_tasks = tasks.clone();
        reversed_tasks.reverse();
        let reversed = weighted_stack_level(&reversed_tasks).unwrap();
        let a = solve_qp(&QpProblem::new(forward.matrix, forward.vector), 1e-8).unwrap();
        let b = solve_qp(&QpProblem::new(reversed.matrix, reversed.vector), 1e-8).unwrap();
        assert!((a.x - b.x).norm() < 1e-6);
    }

    #[test]
    fn approach_stack_has_two_levels_and_hold_blend_collapses_to_identity() {
        let l = layout();
        let blocks = tiny_blocks(&l);
        let weights = TaskWeights::default();
        let stack = approach_stack(&l, &blocks, &weights, ConstraintSet::empty(l.dim())).unwrap();
        assert_eq!(stack.levels.len(), 2);

        let hold = hold_stack(&l, &blocks, &weights, 1.0, ConstraintSet::empty(l.dim())).unwrap();
        assert_eq!(hold.levels.len(), 1);
        let sol = solve_hierarchy(&hold, 1e-8).unwrap();
        assert!(sol.x.norm() < 1e-6, "pure hold drives the decision vector to zero");
    }

    #[test]
    fn retreat_stack_is_stationary_at_the_homing_posture() {
        let l = layout();
        let jac_r = DMatrix::from_fn(6, 10, |r, c| ((r + c) as f64 * 0.31).sin());
        let jac_h = DMatrix::from_fn(6, 8, |r, c| ((r * 2 + c) as f64 * 0.23).cos());
        let homing = DVector::from_fn(10, |i, _| 0.1 * i as f64);
        let stack = retreat_stack(
            &l,
            &jac_r,
            &jac_h,
            &homing,
            &homing,
            2.0,
            ConstraintSet::empty(l.dim()),
        )
        .unwrap();
        let sol = solve_hierarchy(&stack, 1e-8).unwrap();
        assert!(sol.x.norm() < 1e-6);
        assert!(sol.level_residuals[0] < 1e-8);
    }

    #[test]
    fn retreat_stack_moves_towards_homing() {
        let l = layout();
        let jac_r = DMatrix::zeros(6, 10);
        let jac_h = DMatrix::zeros(6, 8);
        let q = DVector::zeros(10);
        let mut homing = DVector::zeros(10);
        homing[4] = 1.0;
        let stack = retreat_stack(&l, &jac_r, &jac_h, &q, &homing, 2.0, ConstraintSet::empty(l.dim()))
            .unwrap();
        let sol = solve_hierarchy(&stack, 1e-8).unwrap();
        assert_abs_diff_eq!(sol.x[4], 2.0, epsilon = 1e-6);
    }

    #[test]
    fn pelvis_block_targets_the_spine_joint() {
        let l = layout();
        let (a, b) = pelvis_displacement_block(&l);
        assert_eq!(a.nrows(), 1);
        assert_abs_diff_eq!(a[(0, l.human_joint_cols().start)], 1.0);
        assert_abs_diff_eq!(a.iter().map(|v| v.abs()).sum::<f64>(), 1.0);
        assert_abs_diff_eq!(b[0], 0.0);
    }

    #[test]
    fn twist_command_rows_pin_both_twists_to_the_gained_errors() {
        let l = layout();
        let gain_r = DVector::from_vec(vec![10.0, 10.0, 10.0, 2.0, 2.0, 2.0]);
        let gain_h = DVector::from_element(6, 40.0);
        let target = Pose::new(Vector3::new(0.5, 0.0, 1.0), UnitQuaternion::identity());
        let measured = Pose::new(Vector3::new(0.3, 0.1, 1.0), UnitQuaternion::identity());
        let (a, b) = twist_command_block(
            &l, &gain_r, &target, &measured, &gain_h, &target, &measured, 1e6, 1e6, 0.01,
        )
        .unwrap();
        assert_eq!(a.nrows(), 12);

        // A chi with exactly the commanded twists zeroes the residual.
        let mut chi = DVector::zeros(l.dim());
        let err = crate::kinematics::pose_error(&target, &measured);
        for i in 0..6 {
            chi[l.robot_twist_cols().start + i] = gain_r[i] * err[i];
            chi[l.human_twist_cols().start + i] = gain_h[i] * err[i];
        }
        assert!((&a * &chi - &b).norm() < 1e-12);
        assert_abs_diff_eq!(b[0], 10.0 * 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(b[7], 40.0 * -0.1, epsilon = 1e-12);
    }

    #[test]
    fn posture_pull_drives_joints_proportionally_to_the_gap() {
        let l = layout();
        let mut q = DVector::zeros(8);
        q[4] = 0.4;
        let mut reference = DVector::zeros(8);
        reference[4] = 1.6;
        let (a, b) = posture_pull_block(&l, &q, &reference, 2.0).unwrap();
        assert_eq!(a.nrows(), 8);
        let mut chi = DVector::zeros(l.dim());
        chi[l.human_joint_cols().start + 4] = 2.0 * 1.2;
        assert!((&a * &chi - &b).norm() < 1e-12);
    }

    #[test]
    fn translation_offset_compose_matches_isometry_product() {
        let a = Pose::new(
            Vector3::new(1.0, 2.0, 3.0),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.5),
        );
        let b = Pose::new(
            Vector3::new(0.1, 0.0, -0.2),
            UnitQuaternion::from_axis_angle(&Vector3::x_axis(), -0.3),
        );
        let c = a.compose(&b);
        let iso = Isometry3::from_parts(Translation3::from(a.position), a.orientation)
            * Isometry3::from_parts(Translation3::from(b.position), b.orientation);
        assert!((c.position - iso.translation.vector).norm() < 1e-12);
        assert!(c.orientation.angle_to(&iso.rotation) < 1e-12);
    }

    use nalgebra::Isometry3;
}
