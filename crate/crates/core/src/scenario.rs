//! Runtime scenario assembled from a validated configuration: both kinematic
//! chains, the pelvis frame, the grasp offset and the impairment profile.

use crate::config::{ConfigError, ScenarioConfig};
use crate::impairment::{
    severity_matrix_for_condition, ImpairmentError, ImpairmentProfile, RomBounds, RomProvenance,
};
use crate::kinematics::{
    build_human_chain, build_robot_chain, default_arm_spec, HumanDimensions, KinematicChain,
    KinematicsError, PlanarBaseSpec, Pose,
};
use crate::tasks::StateLayout;
use nalgebra::{DVector, UnitQuaternion, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Impairment(#[from] ImpairmentError),
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
}

/// Fully constructed scenario, ready to simulate.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub layout: StateLayout,
    /// Pelvis-rooted human chain; all its poses live in the pelvis frame.
    pub human_chain: KinematicChain,
    /// World-rooted mobile manipulator chain (planar base + arm).
    pub robot_chain: KinematicChain,
    /// Pelvis pose in the world frame. The sagittal normal is its y axis.
    pub pelvis_pose: Pose,
    /// Human-grasp-to-robot-grasp transform.
    pub grasp_offset: Pose,
    pub impairment: ImpairmentProfile,
    pub q_human_initial: DVector<f64>,
    pub q_robot_initial: DVector<f64>,
    /// Retreat target for the robot.
    pub homing: DVector<f64>,
    /// Ergonomic reference posture for the comfort metric and baselines.
    pub nominal_posture: DVector<f64>,
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig) -> Result<Self, ScenarioError> {
        config.validate()?;
        let h = &config.human;
        let dims = HumanDimensions {
            spine: Vector3::from(h.spine_m),
            humerus: Vector3::from(h.humerus_m),
            radius: Vector3::from(h.radius_m),
        };
        let human_chain = build_human_chain(
            &dims,
            DVector::from_row_slice(&h.q_min_rad),
            DVector::from_row_slice(&h.q_max_rad),
            h.qd_limit_rad_s,
        )?;

        let r = &config.robot;
        let arm = default_arm_spec(r.arm_q_limit_rad, r.arm_qd_limit_rad_s);
        let base = PlanarBaseSpec {
            xy_limit: r.base_xy_limit_m,
            heading_limit: r.base_heading_limit_rad,
            linear_velocity_limit: r.base_linear_velocity_limit_m_s,
            angular_velocity_limit: r.base_angular_velocity_limit_rad_s,
        };
        let robot_chain = build_robot_chain(&arm, &base)?;

        let pelvis_pose = Pose::new(
            Vector3::from(h.pelvis_position_m),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), h.pelvis_yaw_rad),
        );
        let o = &config.object;
        let grasp_offset = Pose::new(
            Vector3::from(o.grasp_offset_position_m),
            UnitQuaternion::from_euler_angles(
                o.grasp_offset_rpy_rad[0],
                o.grasp_offset_rpy_rad[1],
                o.grasp_offset_rpy_rad[2],
            ),
        );

        let i = &config.impairment;
        let mut impairment =
            severity_matrix_for_condition(&i.condition, i.slack_rad, i.wrist_severity_boost)?;
        // Global severity multiplier; clinically measured overrides stay verbatim.
        impairment.severity *= i.severity;

        let q_human_initial = DVector::from_row_slice(&h.q_initial_rad);
        let mut q_robot_initial = DVector::zeros(10);
        q_robot_initial[0] = r.base_initial_xy_m[0];
        q_robot_initial[1] = r.base_initial_xy_m[1];
        q_robot_initial[2] = r.base_initial_heading_rad;
        for (k, v) in r.arm_initial_rad.iter().enumerate() {
            q_robot_initial[3 + k] = *v;
        }
        let homing = match &r.homing_rad {
            Some(values) => DVector::from_row_slice(values),
            None => q_robot_initial.clone(),
        };
        let nominal_posture = DVector::from_row_slice(&h.nominal_posture_rad);

        Ok(Self {
            layout: StateLayout::new(robot_chain.dof(), human_chain.dof()),
            human_chain,
            robot_chain,
            pelvis_pose,
            grasp_offset,
            impairment,
            q_human_initial,
            q_robot_initial,
            homing,
            nominal_posture,
            config,
        })
    }

    /// Unimpaired range of motion straight from the chain bounds.
    pub fn healthy_rom(&self) -> RomBounds {
        RomBounds::new(
            self.human_chain.q_min.clone(),
            self.human_chain.q_max.clone(),
            RomProvenance::Healthy,
        )
        .expect("chain bounds are validated at construction")
    }

    /// Sagittal plane normal expressed in the pelvis frame.
    pub fn sagittal_normal_pelvis(&self) -> Vector3<f64> {
        Vector3::y()
    }

    /// Sagittal plane normal expressed in the world frame.
    pub fn sagittal_normal_world(&self) -> Vector3<f64> {
        self.pelvis_pose.orientation * Vector3::y()
    }
}

/// Names of the scenario presets compiled into the library.
pub fn preset_names() -> &'static [&'static str] {
    &[
        "ea_standing",
        "sa_standing",
        "wb_seated",
        "mie_standing",
        "mis_standing",
    ]
}

/// Returns the parsed, validated preset configuration.
pub fn preset(name: &str) -> Result<ScenarioConfig, ScenarioError> {
    let text = match name {
        "ea_standing" => include_str!("../presets/ea_standing.toml"),
        "sa_standing" => include_str!("../presets/sa_standing.toml"),
        "wb_seated" => include_str!("../presets/wb_seated.toml"),
        "mie_standing" => include_str!("../presets/mie_standing.toml"),
        "mis_standing" => include_str!("../presets/mis_standing.toml"),
        other => return Err(ScenarioError::UnknownPreset(other.to_string())),
    };
    Ok(ScenarioConfig::from_toml_str(text)?)
}
