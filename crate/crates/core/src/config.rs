//! Scenario configuration: TOML schema, validation, and content hashing.
//!
//! Key names carry their unit suffix (`_m`, `_rad`, `_s`, `_rad_s`, `_m_s`);
//! unsuffixed keys are dimensionless. Unknown keys are rejected so a typo in
//! a config file fails loudly instead of silently falling back to a default.

use crate::impairment::severity_matrix_for_condition;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("failed to serialise config: {0}")]
    Serialise(#[from] toml::ser::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Short scenario identifier, used in output manifests.
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub human: HumanConfig,
    pub robot: RobotConfig,
    pub impairment: ImpairmentConfig,
    #[serde(default)]
    pub task: TaskConfig,
    #[serde(default)]
    pub constraints: ConstraintConfig,
    pub object: ObjectConfig,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanConfig {
    /// Spine link dimensions (x, y, z), metres.
    pub spine_m: [f64; 3],
    /// Upper-arm link dimensions, metres.
    pub humerus_m: [f64; 3],
    /// Forearm link dimensions, metres.
    pub radius_m: [f64; 3],
    /// Pelvis origin in the world frame, metres.
    pub pelvis_position_m: [f64; 3],
    /// Pelvis yaw about the world z axis; the sagittal normal is the pelvis
    /// y axis.
    #[serde(default)]
    pub pelvis_yaw_rad: f64,
    pub q_initial_rad: [f64; 8],
    /// Unimpaired range of motion.
    pub q_min_rad: [f64; 8],
    pub q_max_rad: [f64; 8],
    #[serde(default = "default_human_qd_limit")]
    pub qd_limit_rad_s: f64,
    /// Caps per-tick velocity change; models limb inertia.
    #[serde(default = "default_human_qdd_limit")]
    pub qdd_limit_rad_s2: f64,
    /// Ergonomic reference posture for the comfort metric and baselines.
    #[serde(default = "default_nominal_posture")]
    pub nominal_posture_rad: [f64; 8],
}

fn default_human_qd_limit() -> f64 {
    2.5
}

fn default_human_qdd_limit() -> f64 {
    25.0
}

fn default_nominal_posture() -> [f64; 8] {
    [0.0, 0.0, 0.0, 0.0, std::f64::consts::FRAC_PI_2, 0.0, 0.0, 0.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotConfig {
    /// Initial planar base position, metres.
    pub base_initial_xy_m: [f64; 2],
    /// Initial base heading about world z.
    pub base_initial_heading_rad: f64,
    /// Initial arm posture, 7 joints.
    pub arm_initial_rad: [f64; 7],
    #[serde(default = "default_base_xy_limit")]
    pub base_xy_limit_m: f64,
    #[serde(default = "default_base_heading_limit")]
    pub base_heading_limit_rad: f64,
    #[serde(default = "default_base_linear_velocity")]
    pub base_linear_velocity_limit_m_s: f64,
    #[serde(default = "default_base_angular_velocity")]
    pub base_angular_velocity_limit_rad_s: f64,
    #[serde(default = "default_arm_q_limit")]
    pub arm_q_limit_rad: f64,
    #[serde(default = "default_arm_qd_limit")]
    pub arm_qd_limit_rad_s: f64,
    /// Caps per-tick rate change across base and arm coordinates.
    #[serde(default = "default_robot_qdd_limit")]
    pub qdd_limit_per_s2: f64,
    /// Retreat target; defaults to the initial configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homing_rad: Option<Vec<f64>>,
}

fn default_base_xy_limit() -> f64 {
    5.0
}

fn default_base_heading_limit() -> f64 {
    2.0 * std::f64::consts::PI
}

fn default_base_linear_velocity() -> f64 {
    1.0
}

fn default_base_angular_velocity() -> f64 {
    1.0
}

fn default_arm_q_limit() -> f64 {
    2.9
}

fn default_arm_qd_limit() -> f64 {
    1.5
}

fn default_robot_qdd_limit() -> f64 {
    10.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpairmentConfig {
    /// One of: healthy, none, ea, sa, wb, mie, mis.
    pub condition: String,
    #[serde(default = "default_severity")]
    pub severity: f64,
    #[serde(default = "default_slack")]
    pub slack_rad: f64,
    /// Adds a fixed wrist-damping floor for the non-healthy conditions.
    #[serde(default = "default_true")]
    pub wrist_severity_boost: bool,
}

fn default_severity() -> f64 {
    1.0
}

fn default_slack() -> f64 {
    crate::impairment::DEFAULT_SLACK_RAD
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub dt_s: f64,
    /// Diagonal closed-loop gain of the robot tracking rows.
    pub robot_tracking_gain: [f64; 6],
    /// Scalar closed-loop gain of the human tracking rows.
    pub human_tracking_gain: f64,
    pub interaction_weight: f64,
    pub damping_weight: f64,
    pub sagittal_weight: f64,
    pub regularisation_weight: f64,
    pub pelvis_weight: f64,
    pub gate_d_min_m: f64,
    pub gate_d_max_m: f64,
    pub gate_orthogonality_threshold: f64,
    /// Pose-error norm below which the interaction counts as established.
    pub convergence_epsilon: f64,
    pub hold_duration_s: f64,
    /// Cross-fade window when entering the hold phase.
    pub hold_blend_s: f64,
    pub retreat_gain: f64,
    pub solver_tolerance: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            dt_s: 0.01,
            robot_tracking_gain: [10.0, 10.0, 10.0, 2.0, 2.0, 2.0],
            human_tracking_gain: 40.0,
            interaction_weight: 100.0,
            damping_weight: 100.0,
            sagittal_weight: 10.0,
            regularisation_weight: 0.001,
            pelvis_weight: 10.0,
            gate_d_min_m: 0.1,
            gate_d_max_m: 0.2,
            gate_orthogonality_threshold: 0.1,
            convergence_epsilon: 0.01,
            hold_duration_s: 1.0,
            hold_blend_s: 0.5,
            retreat_gain: 2.0,
            solver_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintConfig {
    /// Keep-above plane for seated scenarios; absent means unconstrained.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub armrest_z_m: Option<f64>,
    pub min_horizontal_separation_m: f64,
    pub min_body_distance_m: f64,
    pub position_box_m: f64,
    pub orientation_box_rad: f64,
    pub linear_velocity_limit_m_s: f64,
    pub angular_velocity_limit_rad_s: f64,
    /// End-effector velocity-change caps, shared by both agents.
    pub twist_accel_m_s2: f64,
    pub twist_accel_rad_s2: f64,
    pub margin_m: f64,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self {
            armrest_z_m: None,
            min_horizontal_separation_m: 0.3,
            min_body_distance_m: 0.25,
            position_box_m: 5.0,
            orientation_box_rad: std::f64::consts::PI,
            linear_velocity_limit_m_s: 10.0,
            angular_velocity_limit_rad_s: std::f64::consts::PI,
            twist_accel_m_s2: 25.0,
            twist_accel_rad_s2: 25.0,
            margin_m: 0.005,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectConfig {
    /// Rigid transform from the human grasp frame to the robot grasp frame:
    /// translation, metres.
    pub grasp_offset_position_m: [f64; 3],
    /// Rotation as roll-pitch-yaw.
    #[serde(default)]
    pub grasp_offset_rpy_rad: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    /// Measured state equals commanded state.
    Perfect,
    /// Measured human state lags the commanded one by a fixed delay.
    Lag,
    /// Measured human state carries seeded Gaussian joint noise.
    Noisy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub duration_s: f64,
    pub seed: u64,
    pub observation: ObservationMode,
    pub observation_lag_s: f64,
    pub noise_std_rad: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            duration_s: 15.0,
            seed: 0,
            observation: ObservationMode::Perfect,
            observation_lag_s: 0.2,
            noise_std_rad: 0.0,
        }
    }
}

/// Geometry-and-task view of the config, hashed to decide whether two runs
/// describe the same physical scenario. Impairment, run parameters, and the
/// scenario's label are deliberately excluded so conditions can be compared
/// against each other on identical geometry.
#[derive(Serialize)]
struct IdentityView<'a> {
    human: &'a HumanConfig,
    robot: &'a RobotConfig,
    task: &'a TaskConfig,
    constraints: &'a ConstraintConfig,
    object: &'a ObjectConfig,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: ScenarioConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Round-tripped TOML form: field order and float formatting come from
    /// the schema, not from the input file, so the hash ignores comments and
    /// whitespace.
    pub fn canonical_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    /// Hash of the full canonical config.
    pub fn config_hash(&self) -> Result<String, ConfigError> {
        Ok(sha256_hex(self.canonical_toml()?.as_bytes()))
    }

    /// Hash of the scenario identity (geometry, task, constraints, object).
    pub fn identity_hash(&self) -> Result<String, ConfigError> {
        let view = IdentityView {
            human: &self.human,
            robot: &self.robot,
            task: &self.task,
            constraints: &self.constraints,
            object: &self.object,
        };
        let text = toml::to_string(&view)?;
        Ok(sha256_hex(text.as_bytes()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.trim().is_empty() {
            return Err(invalid("name must not be empty"));
        }
        self.validate_human()?;
        self.validate_robot()?;
        self.validate_impairment()?;
        self.validate_task()?;
        self.validate_constraints()?;
        self.validate_object()?;
        self.validate_run()?;
        Ok(())
    }

    fn validate_human(&self) -> Result<(), ConfigError> {
        let h = &self.human;
        for (label, dims) in [
            ("spine_m", &h.spine_m),
            ("humerus_m", &h.humerus_m),
            ("radius_m", &h.radius_m),
        ] {
            if dims.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(invalid(format!("human.{label} entries must be finite and non-negative")));
            }
        }
        if h.pelvis_position_m.iter().any(|v| !v.is_finite()) || !h.pelvis_yaw_rad.is_finite() {
            return Err(invalid("human pelvis pose must be finite"));
        }
        for j in 0..8 {
            if !(h.q_min_rad[j].is_finite() && h.q_max_rad[j].is_finite() && h.q_min_rad[j] < h.q_max_rad[j]) {
                return Err(invalid(format!(
                    "human joint {} bounds must be finite with q_min < q_max",
                    j + 1
                )));
            }
            if !(h.q_initial_rad[j] >= h.q_min_rad[j] && h.q_initial_rad[j] <= h.q_max_rad[j]) {
                return Err(invalid(format!(
                    "human joint {} initial value {} lies outside [{}, {}]",
                    j + 1,
                    h.q_initial_rad[j],
                    h.q_min_rad[j],
                    h.q_max_rad[j]
                )));
            }
            if !h.nominal_posture_rad[j].is_finite() {
                return Err(invalid("human nominal posture must be finite"));
            }
        }
        if !(h.qd_limit_rad_s.is_finite() && h.qd_limit_rad_s > 0.0) {
            return Err(invalid("human qd_limit_rad_s must be positive"));
        }
        if !(h.qdd_limit_rad_s2.is_finite() && h.qdd_limit_rad_s2 > 0.0) {
            return Err(invalid("human qdd_limit_rad_s2 must be positive"));
        }
        Ok(())
    }

    fn validate_robot(&self) -> Result<(), ConfigError> {
        let r = &self.robot;
        if r.base_initial_xy_m.iter().any(|v| !v.is_finite())
            || !r.base_initial_heading_rad.is_finite()
            || r.arm_initial_rad.iter().any(|v| !v.is_finite())
        {
            return Err(invalid("robot initial configuration must be finite"));
        }
        for (label, v) in [
            ("base_xy_limit_m", r.base_xy_limit_m),
            ("base_heading_limit_rad", r.base_heading_limit_rad),
            ("base_linear_velocity_limit_m_s", r.base_linear_velocity_limit_m_s),
            ("base_angular_velocity_limit_rad_s", r.base_angular_velocity_limit_rad_s),
            ("arm_q_limit_rad", r.arm_q_limit_rad),
            ("arm_qd_limit_rad_s", r.arm_qd_limit_rad_s),
            ("qdd_limit_per_s2", r.qdd_limit_per_s2),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("robot.{label} must be positive")));
            }
        }
        if r.base_initial_xy_m.iter().any(|v| v.abs() > r.base_xy_limit_m)
            || r.base_initial_heading_rad.abs() > r.base_heading_limit_rad
            || r.arm_initial_rad.iter().any(|v| v.abs() > r.arm_q_limit_rad)
        {
            return Err(invalid("robot initial configuration lies outside its limits"));
        }
        if let Some(homing) = &r.homing_rad {
            if homing.len() != 10 {
                return Err(invalid("robot.homing_rad must have 10 entries"));
            }
            if homing.iter().any(|v| !v.is_finite()) {
                return Err(invalid("robot.homing_rad must be finite"));
            }
        }
        Ok(())
    }

    fn validate_impairment(&self) -> Result<(), ConfigError> {
        let i = &self.impairment;
        if !(i.severity.is_finite() && (0.0..=1.0).contains(&i.severity)) {
            return Err(invalid("impairment.severity must lie in [0, 1]"));
        }
        if !(i.slack_rad.is_finite() && i.slack_rad >= 0.0) {
            return Err(invalid("impairment.slack_rad must be non-negative"));
        }
        severity_matrix_for_condition(&i.condition, i.slack_rad, i.wrist_severity_boost)
            .map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }

    fn validate_task(&self) -> Result<(), ConfigError> {
        let t = &self.task;
        for (label, v) in [
            ("dt_s", t.dt_s),
            ("human_tracking_gain", t.human_tracking_gain),
            ("interaction_weight", t.interaction_weight),
            ("damping_weight", t.damping_weight),
            ("sagittal_weight", t.sagittal_weight),
            ("regularisation_weight", t.regularisation_weight),
            ("pelvis_weight", t.pelvis_weight),
            ("gate_orthogonality_threshold", t.gate_orthogonality_threshold),
            ("convergence_epsilon", t.convergence_epsilon),
            ("retreat_gain", t.retreat_gain),
            ("solver_tolerance", t.solver_tolerance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("task.{label} must be positive")));
            }
        }
        if t.robot_tracking_gain.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid("task.robot_tracking_gain entries must be positive"));
        }
        if !(t.gate_d_min_m >= 0.0 && t.gate_d_max_m > t.gate_d_min_m) {
            return Err(invalid("task gate distances must satisfy 0 <= d_min < d_max"));
        }
        if !(t.hold_duration_s >= 0.0 && t.hold_blend_s >= 0.0) {
            return Err(invalid("task hold durations must be non-negative"));
        }
        Ok(())
    }

    fn validate_constraints(&self) -> Result<(), ConfigError> {
        let c = &self.constraints;
        for (label, v) in [
            ("position_box_m", c.position_box_m),
            ("orientation_box_rad", c.orientation_box_rad),
            ("linear_velocity_limit_m_s", c.linear_velocity_limit_m_s),
            ("angular_velocity_limit_rad_s", c.angular_velocity_limit_rad_s),
            ("twist_accel_m_s2", c.twist_accel_m_s2),
            ("twist_accel_rad_s2", c.twist_accel_rad_s2),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("constraints.{label} must be positive")));
            }
        }
        for (label, v) in [
            ("min_horizontal_separation_m", c.min_horizontal_separation_m),
            ("min_body_distance_m", c.min_body_distance_m),
            ("margin_m", c.margin_m),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("constraints.{label} must be non-negative")));
            }
        }
        if let Some(z) = c.armrest_z_m {
            if !(z.is_finite() && z >= 0.0) {
                return Err(invalid("constraints.armrest_z_m must be non-negative"));
            }
        }
        Ok(())
    }

    fn validate_object(&self) -> Result<(), ConfigError> {
        let o = &self.object;
        if o.grasp_offset_position_m.iter().any(|v| !v.is_finite())
            || o.grasp_offset_rpy_rad.iter().any(|v| !v.is_finite())
        {
            return Err(invalid("object grasp offset must be finite"));
        }
        Ok(())
    }

    fn validate_run(&self) -> Result<(), ConfigError> {
        let r = &self.run;
        if !(r.duration_s.is_finite() && r.duration_s > 0.0) {
            return Err(invalid("run.duration_s must be positive"));
        }
        if !(r.observation_lag_s.is_finite() && r.observation_lag_s >= 0.0) {
            return Err(invalid("run.observation_lag_s must be non-negative"));
        }
        if !(r.noise_std_rad.is_finite() && r.noise_std_rad >= 0.0) {
            return Err(invalid("run.noise_std_rad must be non-negative"));
        }
        Ok(())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_toml() -> String {
        r#"
name = "unit_standing"

[human]
spine_m = [0.20, 0.02, 0.45]
humerus_m = [0.32, 0.03, 0.03]
radius_m = [0.26, 0.04, 0.02]
pelvis_position_m = [0.0, 0.0, 1.0]
q_initial_rad = [0.0, 0.1, 0.3, 0.0, 0.35, 0.0, 0.0, 0.0]
q_min_rad = [-0.5, -1.3, -3.0, -1.5, -2.8, -1.5, -1.2, -0.7]
q_max_rad = [1.2, 1.3, 2.0, 1.5, 1.8, 1.5, 1.2, 0.7]

[robot]
base_initial_xy_m = [1.5, 0.0]
base_initial_heading_rad = 3.14159
arm_initial_rad = [0.0, 0.5, 0.0, -1.2, 0.0, 0.8, 0.0]

[impairment]
condition = "ea"

[object]
grasp_offset_position_m = [0.12, 0.0, 0.0]
"#
        .to_string()
    }

    #[test]
    fn minimal_config_parses_and_fills_defaults() {
        let config = ScenarioConfig::from_toml_str(&minimal_toml()).unwrap();
        assert_eq!(config.task.dt_s, 0.01);
        assert_eq!(config.task.human_tracking_gain, 40.0);
        assert_eq!(config.task.robot_tracking_gain, [10.0, 10.0, 10.0, 2.0, 2.0, 2.0]);
        assert_eq!(config.human.qd_limit_rad_s, 2.5);
        assert_eq!(config.constraints.min_horizontal_separation_m, 0.3);
        assert_eq!(config.constraints.min_body_distance_m, 0.25);
        assert_eq!(config.run.duration_s, 15.0);
        assert!(config.constraints.armrest_z_m.is_none());
        assert_eq!(config.run.observation, ObservationMode::Perfect);
        let nominal = config.human.nominal_posture_rad;
        assert_eq!(nominal[4], std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = minimal_toml().replace("[object]", "typo_key = 1\n\n[object]");
        assert!(matches!(
            ScenarioConfig::from_toml_str(&text),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn hash_is_stable_across_formatting() {
        let a = ScenarioConfig::from_toml_str(&minimal_toml()).unwrap();
        let noisy = minimal_toml().replace("[human]", "# a comment\n[human]");
        let b = ScenarioConfig::from_toml_str(&noisy).unwrap();
        assert_eq!(a.config_hash().unwrap(), b.config_hash().unwrap());
        assert_eq!(a.config_hash().unwrap().len(), 64);
    }

    #[test]
    fn identity_hash_ignores_condition_and_label_but_not_geometry() {
        let base = ScenarioConfig::from_toml_str(&minimal_toml()).unwrap();
        let renamed = ScenarioConfig::from_toml_str(
            &minimal_toml()
                .replace("unit_standing", "other_label")
                .replace("condition = \"ea\"", "condition = \"mis\""),
        )
        .unwrap();
        assert_eq!(base.identity_hash().unwrap(), renamed.identity_hash().unwrap());
        assert_ne!(base.config_hash().unwrap(), renamed.config_hash().unwrap());

        let moved = ScenarioConfig::from_toml_str(
            &minimal_toml().replace("base_initial_xy_m = [1.5, 0.0]", "base_initial_xy_m = [1.6, 0.0]"),
        )
        .unwrap();
        assert_ne!(base.identity_hash().unwrap(), moved.identity_hash().unwrap());
    }

    #[test]
    fn out_of_range_initial_posture_is_rejected() {
        let text = minimal_toml().replace(
            "q_initial_rad = [0.0, 0.1, 0.3, 0.0, 0.35, 0.0, 0.0, 0.0]",
            "q_initial_rad = [0.0, 0.1, 0.3, 0.0, 5.0, 0.0, 0.0, 0.0]",
        );
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("joint 5"));
    }

    #[test]
    fn unknown_condition_is_rejected() {
        let text = minimal_toml().replace("condition = \"ea\"", "condition = \"zz\"");
        assert!(ScenarioConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn non_positive_dt_is_rejected() {
        let text = format!("{}\n[task]\ndt_s = 0.0\n", minimal_toml().replace("\n[object]", "\n[object]"));
        // Move the task table to the end so TOML stays well-formed.
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("dt_s"));
    }

    #[test]
    fn canonical_toml_round_trips() {
        let config = ScenarioConfig::from_toml_str(&minimal_toml()).unwrap();
        let canon = config.canonical_toml().unwrap();
        let reparsed = ScenarioConfig::from_toml_str(&canon).unwrap();
        assert_eq!(config.config_hash().unwrap(), reparsed.config_hash().unwrap());
    }
}
