//! Denavit-Hartenberg chains, forward kinematics and geometric Jacobians for
//! the two agents: an 8-DoF human spine-plus-arm chain rooted at the pelvis
//! and a 10-DoF mobile manipulator whose planar base is folded into the chain
//! as two prismatic joints plus one revolute, so a single Jacobian routine
//! serves both systems.

use nalgebra::{
    DMatrix, DVector, Isometry3, Matrix4, Translation3, UnitQuaternion, Vector3, Vector6,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid scale: link components must be finite and non-negative")]
    InvalidScale,
    #[error("invalid base specification: {0}")]
    InvalidBaseSpec(String),
    #[error("invalid joint bounds: lower must not exceed upper and spans must be finite")]
    InvalidBounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointKind {
    Revolute,
    Prismatic,
}

/// One standard DH row: `T = RotZ(theta) * TransZ(d) * TransX(a) * RotX(alpha)`.
///
/// For a revolute joint `theta = sign * q + theta_offset`; for a prismatic
/// joint `d = sign * q + d_offset`.
#[derive(Debug, Clone, Copy)]
pub struct DhRow {
    pub kind: JointKind,
    pub theta_offset: f64,
    pub a: f64,
    pub alpha: f64,
    pub d_offset: f64,
    pub sign: f64,
}

impl DhRow {
    pub fn revolute(theta_offset: f64, a: f64, alpha: f64, d: f64) -> Self {
        Self {
            kind: JointKind::Revolute,
            theta_offset,
            a,
            alpha,
            d_offset: d,
            sign: 1.0,
        }
    }

    pub fn prismatic(theta: f64, a: f64, alpha: f64, d_offset: f64) -> Self {
        Self {
            kind: JointKind::Prismatic,
            theta_offset: theta,
            a,
            alpha,
            d_offset,
            sign: 1.0,
        }
    }

    /// Local transform of this row for joint value `q`.
    pub fn transform(&self, q: f64) -> Isometry3<f64> {
        let (theta, d) = match self.kind {
            JointKind::Revolute => (self.sign * q + self.theta_offset, self.d_offset),
            JointKind::Prismatic => (self.theta_offset, self.sign * q + self.d_offset),
        };
        let rot_z = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), theta);
        let rot_x = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), self.alpha);
        Isometry3::from_parts(Translation3::new(0.0, 0.0, d), rot_z)
            * Isometry3::from_parts(Translation3::new(self.a, 0.0, 0.0), rot_x)
    }
}

/// Position plus orientation; the quaternion is renormalised on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation: UnitQuaternion::new_normalize(orientation.into_inner()),
        }
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self {
            position: iso.translation.vector,
            orientation: iso.rotation,
        }
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    /// Rigid composition `self * local`.
    pub fn compose(&self, local: &Pose) -> Pose {
        Pose::from_isometry(&(self.to_isometry() * local.to_isometry()))
    }

    pub fn inverse(&self) -> Pose {
        Pose::from_isometry(&self.to_isometry().inverse())
    }
}

/// Spatial velocity: linear stacked over angular.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
}

impl Twist {
    pub fn zero() -> Self {
        Self {
            linear: Vector3::zeros(),
            angular: Vector3::zeros(),
        }
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            linear: Vector3::new(v[0], v[1], v[2]),
            angular: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.linear[0],
            self.linear[1],
            self.linear[2],
            self.angular[0],
            self.angular[1],
            self.angular[2],
        )
    }
}

/// Six-component pose error: position difference stacked over the rotation
/// vector (axis times angle) of `target * measured^-1`. A quarter turn about
/// z therefore reports `(0, 0, 0, 0, 0, pi/2)`.
pub fn pose_error(target: &Pose, measured: &Pose) -> Vector6<f64> {
    let dp = target.position - measured.position;
    let dq = target.orientation * measured.orientation.inverse();
    let rv = dq.scaled_axis();
    Vector6::new(dp[0], dp[1], dp[2], rv[0], rv[1], rv[2])
}

/// Serial chain with an optional fixed base transform ahead of the DH rows.
#[derive(Debug, Clone)]
pub struct KinematicChain {
    pub base_transform: Isometry3<f64>,
    pub rows: Vec<DhRow>,
    pub q_min: DVector<f64>,
    pub q_max: DVector<f64>,
    pub qd_min: DVector<f64>,
    pub qd_max: DVector<f64>,
}

/// Forward kinematics result: `frames[0]` is the base transform and
/// `frames[i]` the frame after the first `i` rows, all in chain-base
/// coordinates. The joint axis of row `i` is the z-axis of `frames[i]`.
#[derive(Debug, Clone)]
pub struct FkResult {
    pub frames: Vec<Isometry3<f64>>,
}

impl FkResult {
    pub fn terminal(&self) -> Pose {
        Pose::from_isometry(self.frames.last().expect("fk yields at least the base frame"))
    }
}

impl KinematicChain {
    pub fn new(
        base_transform: Isometry3<f64>,
        rows: Vec<DhRow>,
        q_min: DVector<f64>,
        q_max: DVector<f64>,
        qd_min: DVector<f64>,
        qd_max: DVector<f64>,
    ) -> Result<Self, KinematicsError> {
        let n = rows.len();
        if n == 0 {
            return Err(KinematicsError::DimensionMismatch("chain has no joints".into()));
        }
        if q_min.len() != n || q_max.len() != n || qd_min.len() != n || qd_max.len() != n {
            return Err(KinematicsError::DimensionMismatch(
                "joint bound vectors must match the row count".into(),
            ));
        }
        for i in 0..n {
            let ok = q_min[i].is_finite()
                && q_max[i].is_finite()
                && q_min[i] <= q_max[i]
                && qd_min[i].is_finite()
                && qd_max[i].is_finite()
                && qd_min[i] <= 0.0
                && qd_max[i] >= 0.0;
            if !ok {
                return Err(KinematicsError::InvalidBounds);
            }
        }
        Ok(Self {
            base_transform,
            rows,
            q_min,
            q_max,
            qd_min,
            qd_max,
        })
    }

    pub fn dof(&self) -> usize {
        self.rows.len()
    }

    fn check_q(&self, q: &DVector<f64>) -> Result<(), KinematicsError> {
        if q.len() != self.dof() {
            return Err(KinematicsError::DimensionMismatch(format!(
                "expected {} joint values, got {}",
                self.dof(),
                q.len()
            )));
        }
        Ok(())
    }

    /// Forward kinematics exposing every intermediate frame.
    pub fn fk(&self, q: &DVector<f64>) -> Result<FkResult, KinematicsError> {
        self.check_q(q)?;
        let mut frames = Vec::with_capacity(self.dof() + 1);
        let mut current = self.base_transform;
        frames.push(current);
        for (i, row) in self.rows.iter().enumerate() {
            current *= row.transform(q[i]);
            frames.push(current);
        }
        Ok(FkResult { frames })
    }

    /// Terminal pose in chain-base coordinates.
    pub fn fk_pose(&self, q: &DVector<f64>) -> Result<Pose, KinematicsError> {
        Ok(self.fk(q)?.terminal())
    }

    /// Geometric Jacobian (6 x dof) of the terminal frame, linear rows first.
    /// Revolute column: `(z_i x (p_ee - p_i); z_i)`; prismatic: `(z_i; 0)`.
    pub fn geometric_jacobian(&self, q: &DVector<f64>) -> Result<DMatrix<f64>, KinematicsError> {
        let fk = self.fk(q)?;
        let p_ee = fk.frames.last().unwrap().translation.vector;
        let n = self.dof();
        let mut jac = DMatrix::zeros(6, n);
        for i in 0..n {
            let frame = &fk.frames[i];
            let z = frame.rotation * Vector3::z();
            match self.rows[i].kind {
                JointKind::Revolute => {
                    let p = frame.translation.vector;
                    let lin = self.rows[i].sign * z.cross(&(p_ee - p));
                    let ang = self.rows[i].sign * z;
                    for r in 0..3 {
                        jac[(r, i)] = lin[r];
                        jac[(r + 3, i)] = ang[r];
                    }
                }
                JointKind::Prismatic => {
                    let lin = self.rows[i].sign * z;
                    for r in 0..3 {
                        jac[(r, i)] = lin[r];
                    }
                }
            }
        }
        Ok(jac)
    }

    /// Unit axis of joint `index` (0-based) in chain-base coordinates.
    pub fn joint_axis(&self, q: &DVector<f64>, index: usize) -> Result<Vector3<f64>, KinematicsError> {
        if index >= self.dof() {
            return Err(KinematicsError::DimensionMismatch(format!(
                "joint index {} out of range for {} joints",
                index,
                self.dof()
            )));
        }
        let fk = self.fk(q)?;
        Ok(fk.frames[index].rotation * Vector3::z())
    }
}

/// Link dimension triples for the human model. Each component feeds a
/// specific DH entry, so "length" here means a per-axis offset magnitude.
#[derive(Debug, Clone, Copy)]
pub struct HumanDimensions {
    pub spine: Vector3<f64>,
    pub humerus: Vector3<f64>,
    pub radius: Vector3<f64>,
}

impl HumanDimensions {
    fn validate(&self) -> Result<(), KinematicsError> {
        for v in [&self.spine, &self.humerus, &self.radius] {
            if v.iter().any(|c| !c.is_finite() || *c < 0.0) {
                return Err(KinematicsError::InvalidScale);
            }
        }
        Ok(())
    }
}

/// Number of joints of the human chain (spine + shoulder + elbow + wrist).
pub const HUMAN_DOF: usize = 8;

/// Builds the pelvis-rooted 8-DoF human chain. Joint 1 is spine flexion,
/// joints 2-4 the shoulder, 5 the elbow, 6 forearm pronation and 7-8 the
/// wrist; the terminal frame is the hand grasp frame. Zero-size links are
/// tolerated (degenerate chains collapse every origin onto the base), only
/// negative or non-finite components are rejected.
pub fn build_human_chain(
    dims: &HumanDimensions,
    q_min: DVector<f64>,
    q_max: DVector<f64>,
    qd_limit: f64,
) -> Result<KinematicChain, KinematicsError> {
    dims.validate()?;
    if !(qd_limit.is_finite() && qd_limit > 0.0) {
        return Err(KinematicsError::InvalidBounds);
    }
    use std::f64::consts::{FRAC_PI_2, PI};
    let rows = vec![
        DhRow::revolute(0.0, dims.spine[2], -FRAC_PI_2, -dims.spine[1]),
        DhRow::revolute(0.0, 0.0, FRAC_PI_2, -dims.spine[0]),
        DhRow::revolute(FRAC_PI_2, 0.0, FRAC_PI_2, 0.0),
        DhRow::revolute(-FRAC_PI_2, -dims.humerus[0], FRAC_PI_2, -dims.humerus[2]),
        DhRow::revolute(PI, 0.0, FRAC_PI_2, -dims.humerus[1]),
        DhRow::revolute(FRAC_PI_2, -dims.radius[1], FRAC_PI_2, -dims.radius[2]),
        DhRow::revolute(FRAC_PI_2, 0.0, FRAC_PI_2, -dims.radius[0]),
        DhRow::revolute(0.0, 0.0, 0.0, 0.0),
    ];
    let n = rows.len();
    KinematicChain::new(
        Isometry3::identity(),
        rows,
        q_min,
        q_max,
        DVector::from_element(n, -qd_limit),
        DVector::from_element(n, qd_limit),
    )
}

/// Planar base limits: symmetric position box and velocity caps for the two
/// prismatic DoFs (metres) and the heading revolute (radians).
#[derive(Debug, Clone, Copy)]
pub struct PlanarBaseSpec {
    pub xy_limit: f64,
    pub heading_limit: f64,
    pub linear_velocity_limit: f64,
    pub angular_velocity_limit: f64,
}

/// Arm description appended after the planar base rows.
#[derive(Debug, Clone)]
pub struct ArmSpec {
    pub rows: Vec<DhRow>,
    pub q_min: DVector<f64>,
    pub q_max: DVector<f64>,
    pub qd_limit: DVector<f64>,
}

/// Builds the composite mobile manipulator chain: rows 1-2 translate the base
/// along world x and y, row 3 rotates about world z, then the arm rows follow.
/// The fixed base transform orients the first prismatic axis along world x; at
/// `(x, y, theta)` the frame after row 3 is exactly `Trans(x, y, 0) * RotZ(theta)`.
pub fn build_robot_chain(arm: &ArmSpec, base: &PlanarBaseSpec) -> Result<KinematicChain, KinematicsError> {
    use std::f64::consts::FRAC_PI_2;
    if arm.rows.is_empty() {
        return Err(KinematicsError::InvalidBaseSpec("arm has no rows".into()));
    }
    if !(base.xy_limit > 0.0
        && base.heading_limit > 0.0
        && base.linear_velocity_limit > 0.0
        && base.angular_velocity_limit > 0.0)
        || !(base.xy_limit.is_finite()
            && base.heading_limit.is_finite()
            && base.linear_velocity_limit.is_finite()
            && base.angular_velocity_limit.is_finite())
    {
        return Err(KinematicsError::InvalidBaseSpec(
            "base limits must be finite and positive".into(),
        ));
    }
    let na = arm.rows.len();
    if arm.q_min.len() != na || arm.q_max.len() != na || arm.qd_limit.len() != na {
        return Err(KinematicsError::DimensionMismatch(
            "arm bound vectors must match the arm row count".into(),
        ));
    }

    let mut rows = vec![
        DhRow::prismatic(0.0, 0.0, -FRAC_PI_2, 0.0),
        DhRow::prismatic(-FRAC_PI_2, 0.0, FRAC_PI_2, 0.0),
        DhRow::revolute(0.0, 0.0, 0.0, 0.0),
    ];
    rows.extend(arm.rows.iter().copied());

    let n = rows.len();
    let mut q_min = DVector::zeros(n);
    let mut q_max = DVector::zeros(n);
    let mut qd_min = DVector::zeros(n);
    let mut qd_max = DVector::zeros(n);
    for i in 0..2 {
        q_min[i] = -base.xy_limit;
        q_max[i] = base.xy_limit;
        qd_min[i] = -base.linear_velocity_limit;
        qd_max[i] = base.linear_velocity_limit;
    }
    q_min[2] = -base.heading_limit;
    q_max[2] = base.heading_limit;
    qd_min[2] = -base.angular_velocity_limit;
    qd_max[2] = base.angular_velocity_limit;
    for i in 0..na {
        q_min[3 + i] = arm.q_min[i];
        q_max[3 + i] = arm.q_max[i];
        qd_min[3 + i] = -arm.qd_limit[i];
        qd_max[3 + i] = arm.qd_limit[i];
    }

    let base_transform = Isometry3::from_parts(
        Translation3::identity(),
        UnitQuaternion::from_axis_angle(&Vector3::y_axis(), FRAC_PI_2),
    );
    KinematicChain::new(base_transform, rows, q_min, q_max, qd_min, qd_max)
}

/// Default 7-DoF manipulator mounted on the planar base: a spherical-elbow
/// arm with 0.75 m shoulder height, two 0.40 m links and a 0.15 m tool plate,
/// with symmetric joint and rate limits.
pub fn default_arm_spec(q_limit: f64, qd_limit: f64) -> ArmSpec {
    use std::f64::consts::FRAC_PI_2;
    ArmSpec {
        rows: vec![
            DhRow::revolute(0.0, 0.0, -FRAC_PI_2, 0.75),
            DhRow::revolute(0.0, 0.0, FRAC_PI_2, 0.0),
            DhRow::revolute(0.0, 0.0, FRAC_PI_2, 0.40),
            DhRow::revolute(0.0, 0.0, -FRAC_PI_2, 0.0),
            DhRow::revolute(0.0, 0.0, -FRAC_PI_2, 0.40),
            DhRow::revolute(0.0, 0.0, FRAC_PI_2, 0.0),
            DhRow::revolute(0.0, 0.0, 0.0, 0.15),
        ],
        q_min: DVector::from_element(7, -q_limit),
        q_max: DVector::from_element(7, q_limit),
        qd_limit: DVector::from_element(7, qd_limit),
    }
}

/// Raw 4x4 standard DH transform, kept around as an independent oracle for
/// tests and debugging.
pub fn dh_matrix(theta: f64, d: f64, a: f64, alpha: f64) -> Matrix4<f64> {
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = alpha.sin_cos();
    Matrix4::new(
        ct, -st * ca, st * sa, a * ct, //
        st, ct * ca, -ct * sa, a * st, //
        0.0, sa, ca, d, //
        0.0, 0.0, 0.0, 1.0,
    )
}
