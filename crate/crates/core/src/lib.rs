//! Shared-autonomy handover control built on an augmented hierarchical QP.
//!
//! The decision vector couples robot joint velocities, human joint velocities
//! and both end-effector twists, so the interaction pose is an outcome of the
//! optimisation instead of a hand-picked transfer point. Human mobility limits
//! enter as hard range-of-motion constraints plus soft damping tasks, which
//! lets the robot absorb the motion that an impaired arm cannot produce.

pub mod baseline;
pub mod config;
pub mod controller;
pub mod impairment;
pub mod kinematics;
pub mod metrics;
pub mod qp;
pub mod scenario;
pub mod tasks;
pub mod trajectory;

pub use baseline::{run_method, Method};
pub use impairment::{ImpairmentProfile, RomBounds};
pub use kinematics::{DhRow, JointKind, KinematicChain, Pose, Twist};
pub use qp::{
    solve_hierarchy, solve_qp, ConstraintSet, HierarchyStack, QpError, QpProblem, QpSolution,
    TaskLevel, WeightedTask,
};
pub use config::{ConfigError, ScenarioConfig};
pub use controller::{
    run_scenario, run_with_mode, ControlMode, Controller, ControllerError, RunDiagnostics,
    RunResult,
};
pub use metrics::{path_deviation, summarize, MetricsSummary};
pub use scenario::{preset, preset_names, Scenario, ScenarioError};
pub use trajectory::{Phase, TickRecord, TrajectoryLog};
pub use tasks::{GateParams, StateLayout, TaskWeights};
