//! Closed-loop scenario simulation.
//!
//! Each tick observes the human, refines the feasible range of motion,
//! assembles the phase-specific task stack over the shared constraint set,
//! solves the cascade, integrates both agents, and logs the result. The
//! meeting pose is never commanded anywhere; it emerges from the interaction
//! rows trading off both agents' mobility.

use crate::config::ObservationMode;
use crate::impairment::{ImpairmentError, RomRefiner};
use crate::kinematics::{pose_error, KinematicsError, Pose};
use crate::metrics::{summarize, MetricsSummary};
use crate::qp::{solve_hierarchy, QpError};
use crate::scenario::Scenario;
use crate::tasks::{
    active_constraint_mask, approach_stack, hold_stack, human_clik_block, impairment_damping_block,
    interacting_ee_block, joint_constraints, pelvis_displacement_block, posture_pull_block,
    retreat_stack, robot_clik_block, velocity_regularisation_block, sagittal_damping_block,
    sagittal_gates, task_space_constraints, twist_command_block, zero_block, Agent,
    ConstraintBuilder, GateParams, InteractionFrames, StackBlocks, TaskError, TaskSpaceParams,
    TaskSpaceState, TaskWeights,
};
use crate::trajectory::{Phase, TickRecord, TrajectoryLog};
use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::VecDeque;
use thiserror::Error;

/// Joint-space impedance gains of the torque command (base, then arm).
const KP_Q: [f64; 10] = [1.0, 1.0, 1.0, 10.0, 10.0, 10.0, 10.0, 2.0, 2.0, 2.0];
const KD_Q: [f64; 10] = [0.1, 0.1, 0.1, 1.0, 1.0, 1.0, 1.0, 0.2, 0.2, 0.2];

const RETREAT_POSITION_TOL: f64 = 1e-3;
const RETREAT_VELOCITY_TOL: f64 = 1e-3;
/// Slack at or below this counts a constraint row as active for logging.
const ACTIVE_CONSTRAINT_TOL: f64 = 1e-8;

/// Fixed-target redundancy resolution: proportional pull towards the nominal
/// posture, and its soft weight relative to the twist-consistency rows.
const FIXED_TARGET_PULL_GAIN: f64 = 1.0;
const FIXED_TARGET_PULL_WEIGHT: f64 = 0.5;
/// Human rates below this count as settled when judging fixed-target hold
/// entry (the impaired hand may never reach the commanded pose).
const FIXED_TARGET_SETTLE_TOL: f64 = 0.05;

/// What decides the meeting pose.
#[derive(Debug, Clone)]
pub enum ControlMode {
    /// The meeting pose emerges from the interaction rows trading off both
    /// agents' mobility.
    Proposed,
    /// Both agents steer to a precomputed hand pose, blind to impairment.
    /// The robot tracks the grasp-offset-shifted version of the same pose.
    FixedTarget { hand_target_world: Pose },
}

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Impairment(#[from] ImpairmentError),
    #[error("solver failed fatally: {0}")]
    Solver(#[from] QpError),
}

/// Counters surfaced alongside the metrics; all zero on a clean run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunDiagnostics {
    /// Ticks on which the cascade failed and the safe zero command was used.
    pub solver_fallbacks: usize,
    /// Largest post-integration correction needed to keep a human joint
    /// inside its refined bounds (solver leakage, expected ~1e-10).
    pub max_human_bound_leak: f64,
    /// Same for the robot joints against the hardware bounds.
    pub max_robot_bound_leak: f64,
    /// Ticks on which the range-of-motion refinement had to clamp its input.
    pub rom_input_clamped_ticks: usize,
    /// Ticks on which the impaired range collapsed and was recentred.
    pub degenerate_rom_ticks: usize,
}

/// How the human's joint state is measured.
enum Observer {
    Perfect,
    Lag { buffer: VecDeque<DVector<f64>> },
    Noisy { rng: ChaCha8Rng, std: f64 },
}

impl Observer {
    fn from_scenario(s: &Scenario) -> Self {
        let run = &s.config.run;
        match run.observation {
            ObservationMode::Perfect => Observer::Perfect,
            ObservationMode::Lag => {
                let ticks = (run.observation_lag_s / s.config.task.dt_s).round().max(1.0) as usize;
                let mut buffer = VecDeque::with_capacity(ticks + 1);
                for _ in 0..ticks {
                    buffer.push_back(s.q_human_initial.clone());
                }
                Observer::Lag { buffer }
            }
            ObservationMode::Noisy => Observer::Noisy {
                rng: ChaCha8Rng::seed_from_u64(run.seed),
                std: run.noise_std_rad,
            },
        }
    }

    fn observe(&mut self, q_actual: &DVector<f64>) -> DVector<f64> {
        match self {
            Observer::Perfect => q_actual.clone(),
            Observer::Lag { buffer } => {
                buffer.push_back(q_actual.clone());
                buffer.pop_front().expect("lag buffer is never empty")
            }
            Observer::Noisy { rng, std } => {
                let mut q = q_actual.clone();
                for v in q.iter_mut() {
                    *v += *std * standard_normal(rng);
                }
                q
            }
        }
    }
}

/// Box-Muller draw; two uniforms per sample keeps the stream simple and
/// reproducible for a given seed.
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

type GravityModel = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Stateful closed-loop controller for one scenario run.
pub struct Controller {
    scenario: Scenario,
    t: f64,
    phase: Phase,
    q_robot: DVector<f64>,
    qd_robot_cmd: DVector<f64>,
    q_human: DVector<f64>,
    qd_human_cmd: DVector<f64>,
    tw_robot_cmd: DVector<f64>,
    tw_human_cmd: DVector<f64>,
    observer: Observer,
    refiner: RomRefiner,
    /// Previous-tick optimal end-effector poses: the closed-loop targets.
    desired_robot_ee: Pose,
    desired_human_ee: Pose,
    robot_orientation_coord: Vector3<f64>,
    human_orientation_coord: Vector3<f64>,
    robot_start_position: Vector3<f64>,
    human_start_position: Vector3<f64>,
    hold_entered_t: Option<f64>,
    gravity: Option<GravityModel>,
    mode: ControlMode,
    last_solution_norm: f64,
    pub diagnostics: RunDiagnostics,
}

impl Controller {
    pub fn new(scenario: Scenario) -> Result<Self, ControllerError> {
        Self::with_mode(scenario, ControlMode::Proposed)
    }

    pub fn with_mode(scenario: Scenario, mode: ControlMode) -> Result<Self, ControllerError> {
        let q_human = scenario.q_human_initial.clone();
        let q_robot = scenario.q_robot_initial.clone();
        let refiner = RomRefiner::new(
            scenario.healthy_rom(),
            scenario.impairment.clone(),
            q_human.clone(),
        )?;
        let desired_human_ee = scenario.human_chain.fk_pose(&q_human)?;
        let desired_robot_ee = scenario.robot_chain.fk_pose(&q_robot)?;
        let human_start_position = scenario.pelvis_pose.compose(&desired_human_ee).position;
        let robot_start_position = desired_robot_ee.position;
        Ok(Self {
            observer: Observer::from_scenario(&scenario),
            refiner,
            desired_robot_ee,
            desired_human_ee,
            robot_orientation_coord: Vector3::zeros(),
            human_orientation_coord: Vector3::zeros(),
            robot_start_position,
            human_start_position,
            hold_entered_t: None,
            gravity: None,
            mode,
            last_solution_norm: 0.0,
            diagnostics: RunDiagnostics::default(),
            t: 0.0,
            phase: Phase::Approach,
            qd_robot_cmd: DVector::zeros(q_robot.len()),
            qd_human_cmd: DVector::zeros(q_human.len()),
            tw_robot_cmd: DVector::zeros(6),
            tw_human_cmd: DVector::zeros(6),
            q_robot,
            q_human,
            scenario,
        })
    }

    /// Installs a gravity model for the torque command; without one the
    /// gravity term is zero.
    pub fn with_gravity(mut self, model: GravityModel) -> Self {
        self.gravity = Some(model);
        self
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Norm of the latest optimal decision vector, for stillness checks.
    pub fn last_solution_norm(&self) -> f64 {
        self.last_solution_norm
    }

    /// Advances one control period and returns the logged record.
    pub fn tick(&mut self) -> Result<TickRecord, ControllerError> {
        let dt = self.scenario.config.task.dt_s;
        if self.phase == Phase::Done {
            self.t += dt;
            return Ok(self.record(DVector::zeros(self.scenario.layout.dim()), 0));
        }

        // Observe and refine.
        let q_h_meas = self.observer.observe(&self.q_human);
        self.refiner.observe(&q_h_meas)?;
        let (rom, rom_diag) = self.refiner.current_bounds()?;
        if !rom_diag.clamped_inputs.is_empty() {
            self.diagnostics.rom_input_clamped_ticks += 1;
        }
        if !rom_diag.degenerate.is_empty() {
            self.diagnostics.degenerate_rom_ticks += 1;
        }

        // Kinematics at the measured states.
        let scenario = &self.scenario;
        let layout = scenario.layout;
        let human_meas_pose = scenario.human_chain.fk_pose(&q_h_meas)?;
        let human_jacobian = scenario.human_chain.geometric_jacobian(&q_h_meas)?;
        let robot_meas_pose = scenario.robot_chain.fk_pose(&self.q_robot)?;
        let robot_jacobian = scenario.robot_chain.geometric_jacobian(&self.q_robot)?;

        // Shared constraint rows. Velocity boxes are intersected with the
        // band reachable from the previous command under the acceleration
        // cap, so commanded rates cannot jump discontinuously.
        let accel_window = |prev: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>, a: f64| {
            let step = a * dt;
            let lo_eff = DVector::from_fn(lo.len(), |i, _| lo[i].max(prev[i] - step));
            let hi_eff = DVector::from_fn(hi.len(), |i, _| hi[i].min(prev[i] + step));
            (lo_eff, hi_eff)
        };
        let (robot_qd_lo, robot_qd_hi) = accel_window(
            &self.qd_robot_cmd,
            &scenario.robot_chain.qd_min,
            &scenario.robot_chain.qd_max,
            scenario.config.robot.qdd_limit_per_s2,
        );
        let (human_qd_lo, human_qd_hi) = accel_window(
            &self.qd_human_cmd,
            &scenario.human_chain.qd_min,
            &scenario.human_chain.qd_max,
            scenario.config.human.qdd_limit_rad_s2,
        );
        let mut builder = ConstraintBuilder::new(&layout);
        joint_constraints(
            &mut builder,
            &layout,
            Agent::Robot,
            &self.q_robot,
            &scenario.robot_chain.q_min,
            &scenario.robot_chain.q_max,
            &robot_qd_lo,
            &robot_qd_hi,
            scenario.config.robot.qdd_limit_per_s2,
            dt,
        )?;
        joint_constraints(
            &mut builder,
            &layout,
            Agent::Human,
            &q_h_meas,
            &rom.lower,
            &rom.upper,
            &human_qd_lo,
            &human_qd_hi,
            scenario.config.human.qdd_limit_rad_s2,
            dt,
        )?;
        let rot_p = scenario.pelvis_pose.orientation.to_rotation_matrix();
        let human_linear_world =
            DMatrix::from_fn(3, layout.human_joints, |r, c| {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += rot_p[(r, k)] * human_jacobian[(k, c)];
                }
                acc
            });
        let hand_world = scenario.pelvis_pose.compose(&human_meas_pose);
        let c = &scenario.config.constraints;
        let task_state = TaskSpaceState {
            robot_ee_position: robot_meas_pose.position,
            human_ee_position: hand_world.position,
            pelvis_position: scenario.pelvis_pose.position,
            pelvis_orientation: scenario.pelvis_pose.orientation,
            robot_orientation_coord: self.robot_orientation_coord,
            human_orientation_coord: self.human_orientation_coord,
            robot_start_position: self.robot_start_position,
            human_start_position: self.human_start_position,
            robot_base_xy: Vector2::new(self.q_robot[0], self.q_robot[1]),
            prev_robot_twist: self.tw_robot_cmd.clone(),
            prev_human_twist: self.tw_human_cmd.clone(),
            robot_linear_jacobian: robot_jacobian.rows(0, 3).into(),
            human_linear_jacobian_world: human_linear_world,
        };
        let task_params = TaskSpaceParams {
            position_box: c.position_box_m,
            orientation_box: c.orientation_box_rad,
            linear_velocity_limit: c.linear_velocity_limit_m_s,
            angular_velocity_limit: c.angular_velocity_limit_rad_s,
            twist_accel_lin: c.twist_accel_m_s2,
            twist_accel_ang: c.twist_accel_rad_s2,
            armrest_z: c.armrest_z_m,
            min_horizontal_separation: c.min_horizontal_separation_m,
            min_body_distance: c.min_body_distance_m,
            margin: c.margin_m,
        };
        task_space_constraints(&mut builder, &layout, &task_state, &task_params, dt)?;
        let (constraints, categories) = builder.build();

        // Phase-specific stack.
        let t_cfg = &scenario.config.task;
        let weights = TaskWeights {
            interaction: t_cfg.interaction_weight,
            damping: t_cfg.damping_weight,
            sagittal: t_cfg.sagittal_weight,
            regularisation: t_cfg.regularisation_weight,
            pelvis: t_cfg.pelvis_weight,
        };
        let stack = match self.phase {
            Phase::Approach | Phase::Hold => {
                let robot_gain = DVector::from_row_slice(&t_cfg.robot_tracking_gain);
                let human_gain = DVector::from_element(6, t_cfg.human_tracking_gain);
                let (blocks, weights) = match &self.mode {
                    ControlMode::Proposed => {
                        let grasp_target = hand_world.compose(&scenario.grasp_offset);
                        let distance = (robot_meas_pose.position - grasp_target.position).norm();
                        let gate_params = GateParams {
                            d_min: t_cfg.gate_d_min_m,
                            d_max: t_cfg.gate_d_max_m,
                            orthogonality_threshold: t_cfg.gate_orthogonality_threshold,
                        };
                        let gates = sagittal_gates(
                            &scenario.human_chain,
                            &q_h_meas,
                            &scenario.sagittal_normal_pelvis(),
                            distance,
                            &gate_params,
                        )?;
                        let frames = InteractionFrames {
                            pelvis: scenario.pelvis_pose,
                            pelvis_velocity: Vector3::zeros(),
                            prev_robot_ee: self.desired_robot_ee,
                            prev_human_ee: self.desired_human_ee,
                            grasp_offset: scenario.grasp_offset,
                        };
                        let blocks = StackBlocks {
                            interacting: interacting_ee_block(
                                &layout,
                                &frames,
                                c.twist_accel_m_s2,
                                c.twist_accel_rad_s2,
                                dt,
                            )?,
                            robot_clik: robot_clik_block(
                                &layout,
                                &robot_jacobian,
                                &robot_gain,
                                &self.desired_robot_ee,
                                &robot_meas_pose,
                            )?,
                            human_clik: human_clik_block(
                                &layout,
                                &human_jacobian,
                                &human_gain,
                                &self.desired_human_ee,
                                &human_meas_pose,
                            )?,
                            damping: impairment_damping_block(&layout, &scenario.impairment.severity)?,
                            sagittal: sagittal_damping_block(&layout, &gates)?,
                            pelvis: pelvis_displacement_block(&layout),
                            regularisation: velocity_regularisation_block(&layout),
                        };
                        (blocks, weights)
                    }
                    ControlMode::FixedTarget { hand_target_world } => {
                        // Consistency rows come from the tracking blocks with
                        // zero gain: [J | -I] chi = 0 ties joints to twists.
                        let zero_gain = DVector::zeros(6);
                        let robot_target = hand_target_world.compose(&scenario.grasp_offset);
                        let human_target =
                            scenario.pelvis_pose.inverse().compose(hand_target_world);
                        let blocks = StackBlocks {
                            interacting: twist_command_block(
                                &layout,
                                &robot_gain,
                                &robot_target,
                                &robot_meas_pose,
                                &human_gain,
                                &human_target,
                                &human_meas_pose,
                                c.twist_accel_m_s2,
                                c.twist_accel_rad_s2,
                                dt,
                            )?,
                            robot_clik: robot_clik_block(
                                &layout,
                                &robot_jacobian,
                                &zero_gain,
                                &robot_meas_pose,
                                &robot_meas_pose,
                            )?,
                            human_clik: human_clik_block(
                                &layout,
                                &human_jacobian,
                                &zero_gain,
                                &human_meas_pose,
                                &human_meas_pose,
                            )?,
                            damping: posture_pull_block(
                                &layout,
                                &q_h_meas,
                                &scenario.nominal_posture,
                                FIXED_TARGET_PULL_GAIN,
                            )?,
                            sagittal: zero_block(&layout),
                            pelvis: zero_block(&layout),
                            regularisation: velocity_regularisation_block(&layout),
                        };
                        let weights = TaskWeights {
                            interaction: weights.interaction,
                            damping: FIXED_TARGET_PULL_WEIGHT,
                            sagittal: 0.0,
                            regularisation: weights.regularisation,
                            pelvis: 0.0,
                        };
                        (blocks, weights)
                    }
                };
                if self.phase == Phase::Approach {
                    approach_stack(&layout, &blocks, &weights, constraints.clone())?
                } else {
                    let elapsed = self.t - self.hold_entered_t.unwrap_or(self.t);
                    let blend = if t_cfg.hold_blend_s > 0.0 {
                        (elapsed / t_cfg.hold_blend_s).clamp(0.0, 1.0)
                    } else {
                        1.0
                    };
                    hold_stack(&layout, &blocks, &weights, blend, constraints.clone())?
                }
            }
            Phase::Retreat => retreat_stack(
                &layout,
                &robot_jacobian,
                &human_jacobian,
                &self.q_robot,
                &scenario.homing,
                t_cfg.retreat_gain,
                constraints.clone(),
            )?,
            Phase::Done => unreachable!("handled above"),
        };

        // Solve; a failure falls back to the safe zero command.
        let x = match solve_hierarchy(&stack, t_cfg.solver_tolerance) {
            Ok(solution) => solution.x,
            Err(err) => {
                if std::env::var_os("AHQP_DEBUG_FALLBACK").is_some()
                    && self.diagnostics.solver_fallbacks < 1
                {
                    eprintln!("fallback t={:.2} phase={:?} err={err:?}", self.t, self.phase);
                    let mut out = String::new();
                    for (row, cat) in categories.iter().enumerate() {
                        let coeffs: Vec<String> = (0..layout.dim())
                            .map(|c| format!("{}", constraints.ineq_matrix[(row, c)]))
                            .collect();
                        out.push_str(&format!(
                            "{row},{cat:?},{},{}\n",
                            constraints.ineq_bound[row],
                            coeffs.join(",")
                        ));
                    }
                    std::fs::write("/tmp/infeasible.csv", out).ok();
                }
                self.diagnostics.solver_fallbacks += 1;
                DVector::zeros(layout.dim())
            }
        };
        self.last_solution_norm = x.norm();
        let active_mask = active_constraint_mask(&constraints, &categories, &x, ACTIVE_CONSTRAINT_TOL);
        let (qd_r, tw_r, qd_h, _tw_h) = layout.split(&x);

        // Integrate and keep both agents inside their bounds; the residual
        // correction is solver leakage and is tracked, not hidden.
        let q_robot_prev = self.q_robot.clone();
        let qd_robot_prev = self.qd_robot_cmd.clone();
        self.q_robot += &qd_r * dt;
        for i in 0..self.q_robot.len() {
            let clamped = self.q_robot[i]
                .clamp(self.scenario.robot_chain.q_min[i], self.scenario.robot_chain.q_max[i]);
            let leak = (clamped - self.q_robot[i]).abs();
            if leak > self.diagnostics.max_robot_bound_leak {
                self.diagnostics.max_robot_bound_leak = leak;
            }
            self.q_robot[i] = clamped;
        }
        self.q_human += &qd_h * dt;
        for i in 0..self.q_human.len() {
            let clamped = self.q_human[i].clamp(rom.lower[i], rom.upper[i]);
            let leak = (clamped - self.q_human[i]).abs();
            if leak > self.diagnostics.max_human_bound_leak {
                self.diagnostics.max_human_bound_leak = leak;
            }
            self.q_human[i] = clamped;
        }
        self.qd_robot_cmd = qd_r.clone();
        self.qd_human_cmd = qd_h.clone();
        let rt = layout.robot_twist_cols().start;
        let ht = layout.human_twist_cols().start;
        self.tw_robot_cmd = DVector::from_fn(6, |i, _| x[rt + i]);
        self.tw_human_cmd = DVector::from_fn(6, |i, _| x[ht + i]);
        self.robot_orientation_coord += Vector3::new(tw_r[3], tw_r[4], tw_r[5]) * dt;
        // Human angular twist is pelvis-frame; accumulate in world.
        let tw_h_world = self.scenario.pelvis_pose.orientation * Vector3::new(x[layout.human_twist_cols().start + 3], x[layout.human_twist_cols().start + 4], x[layout.human_twist_cols().start + 5]);
        self.human_orientation_coord += tw_h_world * dt;

        // Closed-loop targets follow the integrated (commanded) states.
        self.desired_robot_ee = self.scenario.robot_chain.fk_pose(&self.q_robot)?;
        self.desired_human_ee = self.scenario.human_chain.fk_pose(&self.q_human)?;

        // Torque command against the measured robot state.
        let gravity = match &self.gravity {
            Some(model) => model(&q_robot_prev),
            None => DVector::zeros(10),
        };
        let mut tau = DVector::zeros(10);
        for i in 0..10 {
            tau[i] = KD_Q[i] * (qd_r[i] - qd_robot_prev[i])
                + KP_Q[i] * (self.q_robot[i] - q_robot_prev[i])
                + gravity[i];
        }

        self.t += dt;
        let record = self.record_with(tau, active_mask);

        // Phase transitions act on the post-integration state.
        match self.phase {
            Phase::Approach => {
                let converged = match &self.mode {
                    ControlMode::Proposed => {
                        record.relative_error_norm < t_cfg.convergence_epsilon
                    }
                    // The impaired hand may fall short of a fixed target, so
                    // the handover is judged on the robot reaching its own
                    // target with the human settled.
                    ControlMode::FixedTarget { hand_target_world } => {
                        let robot_target = hand_target_world.compose(&self.scenario.grasp_offset);
                        let err = pose_error(&robot_target, &self.desired_robot_ee).norm();
                        err < t_cfg.convergence_epsilon
                            && self.qd_human_cmd.amax() < FIXED_TARGET_SETTLE_TOL
                    }
                };
                if converged {
                    self.phase = Phase::Hold;
                    self.hold_entered_t = Some(self.t);
                }
            }
            Phase::Hold => {
                let held = self.t - self.hold_entered_t.unwrap_or(self.t);
                if held >= t_cfg.hold_duration_s {
                    self.phase = Phase::Retreat;
                }
            }
            Phase::Retreat => {
                let pos_gap = (&self.q_robot - &self.scenario.homing).amax();
                let vel = self.qd_robot_cmd.amax();
                if pos_gap < RETREAT_POSITION_TOL && vel < RETREAT_VELOCITY_TOL {
                    self.phase = Phase::Done;
                }
            }
            Phase::Done => {}
        }
        Ok(record)
    }

    fn record(&self, x: DVector<f64>, active_mask: u64) -> TickRecord {
        let _ = x;
        self.record_with(DVector::zeros(10), active_mask)
    }

    fn record_with(&self, tau: DVector<f64>, active_mask: u64) -> TickRecord {
        let robot_ee = self
            .scenario
            .robot_chain
            .fk_pose(&self.q_robot)
            .expect("state stays inside validated bounds");
        let hand_world = self.scenario.pelvis_pose.compose(
            &self
                .scenario
                .human_chain
                .fk_pose(&self.q_human)
                .expect("state stays inside validated bounds"),
        );
        let grasp_target = hand_world.compose(&self.scenario.grasp_offset);
        let rel = pose_error(&robot_ee, &grasp_target);
        TickRecord {
            t: self.t,
            q_human: self.q_human.clone(),
            qd_human: self.qd_human_cmd.clone(),
            q_robot: self.q_robot.clone(),
            qd_robot: self.qd_robot_cmd.clone(),
            robot_ee,
            human_ee: hand_world,
            relative_error_norm: rel.norm(),
            phase: self.phase,
            active_constraints: active_mask,
            tau,
        }
    }
}

/// Outcome of a full scenario run.
#[derive(Debug)]
pub struct RunResult {
    pub log: TrajectoryLog,
    pub metrics: MetricsSummary,
    pub diagnostics: RunDiagnostics,
    pub final_phase: Phase,
}

/// Runs the scenario to completion or until the configured duration elapses.
pub fn run_scenario(scenario: &Scenario) -> Result<RunResult, ControllerError> {
    run_with_mode(scenario, ControlMode::Proposed)
}

/// Same loop under an explicit control mode.
pub fn run_with_mode(scenario: &Scenario, mode: ControlMode) -> Result<RunResult, ControllerError> {
    let dt = scenario.config.task.dt_s;
    let duration = scenario.config.run.duration_s;
    let mut controller = Controller::with_mode(scenario.clone(), mode)?;
    let mut log = TrajectoryLog::new(dt);
    let max_ticks = (duration / dt).ceil() as usize;
    for _ in 0..max_ticks {
        let record = controller.tick()?;
        let finished = record.phase == Phase::Done;
        log.push(record);
        if finished {
            break;
        }
        if controller.phase() == Phase::Done {
            // Log one terminal record so the completion time is visible.
            let record = controller.tick()?;
            log.push(record);
            break;
        }
    }
    let metrics = summarize(&log, &scenario.impairment.severity, &scenario.nominal_posture);
    Ok(RunResult {
        final_phase: controller.phase(),
        diagnostics: controller.diagnostics.clone(),
        metrics,
        log,
    })
}
