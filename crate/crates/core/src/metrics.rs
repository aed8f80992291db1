//! Run metrics: posture discomfort and motion smoothness.

use crate::trajectory::{Phase, TrajectoryLog};
use nalgebra::DVector;
use serde::Serialize;

/// Posture discomfort split by body segment: joint 1 is the trunk, the
/// remaining joints form the arm.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DiscomfortBreakdown {
    pub trunk: f64,
    pub arm: f64,
    pub total: f64,
}

/// Mean squared severity-masked deviation from the nominal posture.
///
/// Joints the receiver cannot use (severity 1) are excluded through the
/// `I - W` mask: holding an impaired joint away from nominal is not counted
/// against the method, only avoidable deviations are.
pub fn posture_discomfort(
    postures: &[DVector<f64>],
    severity: &DVector<f64>,
    nominal: &DVector<f64>,
) -> DiscomfortBreakdown {
    if postures.is_empty() {
        return DiscomfortBreakdown {
            trunk: 0.0,
            arm: 0.0,
            total: 0.0,
        };
    }
    let n = nominal.len();
    let mut trunk = 0.0;
    let mut arm = 0.0;
    for q in postures {
        for i in 0..n {
            let mask = (1.0 - severity[i]).max(0.0);
            let d = mask * (q[i] - nominal[i]);
            if i == 0 {
                trunk += d * d;
            } else {
                arm += d * d;
            }
        }
    }
    let k = postures.len() as f64;
    trunk /= k;
    arm /= k;
    DiscomfortBreakdown {
        trunk,
        arm,
        total: trunk + arm,
    }
}

/// Integrated squared jerk of the velocity channels, second central
/// differences scaled by the tick length.
pub fn velocity_jerk_cost(velocities: &[DVector<f64>], dt: f64) -> f64 {
    if velocities.len() < 3 || dt <= 0.0 {
        return 0.0;
    }
    let dt2 = dt * dt;
    let mut total = 0.0;
    for k in 1..velocities.len() - 1 {
        let jerk = (&velocities[k + 1] - 2.0 * &velocities[k] + &velocities[k - 1]) / dt2;
        total += jerk.norm_squared();
    }
    dt * total
}

/// Mean pose distance between the robot end-effector paths of two runs.
///
/// Both logs are windowed to their approach and hold phases (the handover
/// itself), truncated to the shorter one, and compared tick by tick. Returns
/// the mean position distance in metres and the mean orientation angle in
/// radians; empty windows yield zeros.
pub fn path_deviation(a: &TrajectoryLog, b: &TrajectoryLog) -> (f64, f64) {
    let window = |log: &TrajectoryLog| -> Vec<crate::kinematics::Pose> {
        log.records
            .iter()
            .filter(|r| matches!(r.phase, Phase::Approach | Phase::Hold))
            .map(|r| r.robot_ee.clone())
            .collect()
    };
    let pa = window(a);
    let pb = window(b);
    let n = pa.len().min(pb.len());
    if n == 0 {
        return (0.0, 0.0);
    }
    let mut pos = 0.0;
    let mut ang = 0.0;
    for k in 0..n {
        pos += (pa[k].position - pb[k].position).norm();
        ang += pa[k].orientation.angle_to(&pb[k].orientation);
    }
    (pos / n as f64, ang / n as f64)
}

/// Headline numbers of one simulated run.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsSummary {
    /// Mean masked posture deviation over the approach and hold phases.
    pub discomfort: f64,
    /// Trunk-only share of `discomfort` (joint 1).
    pub discomfort_trunk: f64,
    /// Arm-only share of `discomfort` (joints 2 and up).
    pub discomfort_arm: f64,
    /// Integrated squared human joint jerk over the approach and hold phases.
    pub jerk: f64,
    /// Simulation time at which the hold phase was first entered.
    pub establishment_time_s: Option<f64>,
    /// True when the run reached the hold phase at all.
    pub interaction_established: bool,
    /// Simulation time at which the retreat finished.
    pub completion_time_s: Option<f64>,
    /// Grasp-offset tracking error at the last logged tick.
    pub final_relative_error: f64,
    pub duration_s: f64,
    pub ticks: usize,
}

/// Computes the summary straight from a trajectory log.
pub fn summarize(
    log: &TrajectoryLog,
    severity: &DVector<f64>,
    nominal: &DVector<f64>,
) -> MetricsSummary {
    let interaction_window: Vec<_> = log
        .records
        .iter()
        .filter(|r| matches!(r.phase, Phase::Approach | Phase::Hold))
        .collect();
    let postures: Vec<DVector<f64>> = interaction_window.iter().map(|r| r.q_human.clone()).collect();
    let velocities: Vec<DVector<f64>> = interaction_window.iter().map(|r| r.qd_human.clone()).collect();

    let establishment_time_s = log
        .records
        .iter()
        .find(|r| r.phase == Phase::Hold)
        .map(|r| r.t);
    let completion_time_s = log
        .records
        .iter()
        .find(|r| r.phase == Phase::Done)
        .map(|r| r.t);
    let last = log.records.last();
    let discomfort = posture_discomfort(&postures, severity, nominal);
    MetricsSummary {
        discomfort: discomfort.total,
        discomfort_trunk: discomfort.trunk,
        discomfort_arm: discomfort.arm,
        jerk: velocity_jerk_cost(&velocities, log.dt),
        establishment_time_s,
        interaction_established: establishment_time_s.is_some(),
        completion_time_s,
        final_relative_error: last.map(|r| r.relative_error_norm).unwrap_or(f64::NAN),
        duration_s: last.map(|r| r.t).unwrap_or(0.0),
        ticks: log.records.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn discomfort_matches_the_hand_computed_mean() {
        // Two ticks, one free arm joint deviating by 0.3 then 0.5:
        // (0.09 + 0.25) / 2 = 0.17.
        let nominal = DVector::zeros(8);
        let severity = DVector::zeros(8);
        let mut a = DVector::zeros(8);
        a[2] = 0.3;
        let mut b = DVector::zeros(8);
        b[2] = 0.5;
        let value = posture_discomfort(&[a, b], &severity, &nominal);
        assert_abs_diff_eq!(value.total, 0.17, epsilon = 1e-15);
        assert_abs_diff_eq!(value.arm, 0.17, epsilon = 1e-15);
        assert_abs_diff_eq!(value.trunk, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn trunk_deviation_is_reported_separately_from_the_arm() {
        // Joint 1 off by 0.2, joint 5 off by 0.4: trunk 0.04, arm 0.16.
        let nominal = DVector::zeros(8);
        let severity = DVector::zeros(8);
        let mut q = DVector::zeros(8);
        q[0] = 0.2;
        q[4] = 0.4;
        let value = posture_discomfort(&[q], &severity, &nominal);
        assert_abs_diff_eq!(value.trunk, 0.04, epsilon = 1e-15);
        assert_abs_diff_eq!(value.arm, 0.16, epsilon = 1e-15);
        assert_abs_diff_eq!(value.total, 0.20, epsilon = 1e-15);
    }

    #[test]
    fn fully_damped_joints_do_not_count_as_discomfort() {
        let nominal = DVector::zeros(8);
        let mut severity = DVector::zeros(8);
        severity[2] = 1.0;
        let mut q = DVector::zeros(8);
        q[2] = 0.5;
        let value = posture_discomfort(&[q], &severity, &nominal);
        assert_abs_diff_eq!(value.total, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn partial_severity_scales_the_mask_quadratically() {
        let nominal = DVector::zeros(8);
        let mut severity = DVector::zeros(8);
        severity[4] = 0.8;
        let mut q = DVector::zeros(8);
        q[4] = 1.0;
        // (1 - 0.8)^2 * 1.0
        let value = posture_discomfort(&[q], &severity, &nominal);
        assert_abs_diff_eq!(value.total, 0.04, epsilon = 1e-15);
    }

    #[test]
    fn jerk_matches_the_hand_computed_differences() {
        // v = (0, 0, 1, 1) at dt = 1: jerks 1 and -1, cost 1 * (1 + 1) = 2.
        let vs: Vec<DVector<f64>> = [0.0, 0.0, 1.0, 1.0]
            .iter()
            .map(|v| DVector::from_element(1, *v))
            .collect();
        assert_abs_diff_eq!(velocity_jerk_cost(&vs, 1.0), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn jerk_scales_inversely_with_the_cubed_tick() {
        // Same samples at dt = 0.5: jerks 4 and -4, cost 0.5 * 32 = 16.
        let vs: Vec<DVector<f64>> = [0.0, 0.0, 1.0, 1.0]
            .iter()
            .map(|v| DVector::from_element(1, *v))
            .collect();
        assert_abs_diff_eq!(velocity_jerk_cost(&vs, 0.5), 16.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_velocity_costs_nothing() {
        let vs: Vec<DVector<f64>> = (0..50).map(|_| DVector::from_element(8, 0.7)).collect();
        assert_abs_diff_eq!(velocity_jerk_cost(&vs, 0.01), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn short_logs_are_handled() {
        let vs = vec![DVector::from_element(1, 1.0); 2];
        assert_eq!(velocity_jerk_cost(&vs, 0.01), 0.0);
        let empty = posture_discomfort(&[], &DVector::zeros(8), &DVector::zeros(8));
        assert_eq!(empty.total, 0.0);
    }

    #[test]
    fn path_deviation_reports_constant_offsets_exactly() {
        use crate::kinematics::Pose;
        use crate::trajectory::{Phase, TickRecord, TrajectoryLog};
        use nalgebra::{UnitQuaternion, Vector3};

        let record = |t: f64, x: f64, yaw: f64| TickRecord {
            t,
            q_human: DVector::zeros(8),
            qd_human: DVector::zeros(8),
            q_robot: DVector::zeros(10),
            qd_robot: DVector::zeros(10),
            robot_ee: Pose {
                position: Vector3::new(x, 0.0, 0.0),
                orientation: UnitQuaternion::from_euler_angles(0.0, 0.0, yaw),
            },
            human_ee: Pose::identity(),
            relative_error_norm: 1.0,
            phase: Phase::Approach,
            active_constraints: 0,
            tau: DVector::zeros(10),
        };
        let mut a = TrajectoryLog::new(0.01);
        let mut b = TrajectoryLog::new(0.01);
        for k in 0..5 {
            a.push(record(k as f64 * 0.01, 0.0, 0.0));
            b.push(record(k as f64 * 0.01, 0.1, 0.3));
        }
        let (pos, ang) = path_deviation(&a, &b);
        assert_abs_diff_eq!(pos, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(ang, 0.3, epsilon = 1e-12);
    }
}
