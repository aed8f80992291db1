use ahqp_core::baseline::{run_method, Method};
use ahqp_core::metrics::path_deviation;
use ahqp_core::scenario::{preset, preset_names, Scenario};
use ahqp_core::trajectory::Phase;

fn main() {
    let mut logs = std::collections::HashMap::new();
    for name in preset_names() {
        let scenario = Scenario::from_config(preset(name).unwrap()).unwrap();
        for method in Method::ALL {
            let start = std::time::Instant::now();
            let result = run_method(&scenario, method).unwrap();
            let m = &result.metrics;
            println!(
                "{name:13} {:8} phase={:?} est={:?} done={:?} ticks={} psi_tot={:.4} psi_trunk={:.4} psi_arm={:.4} jerk={:.3e} rel_err={:.5} fb={} wall={:.2}s",
                method.as_str(),
                result.final_phase, m.establishment_time_s, m.completion_time_s, m.ticks,
                m.discomfort, m.discomfort_trunk, m.discomfort_arm, m.jerk, m.final_relative_error,
                result.diagnostics.solver_fallbacks,
                start.elapsed().as_secs_f64()
            );
            // Constraint sanity straight off the log.
            let mut min_sep = f64::INFINITY;
            let mut min_base = f64::INFINITY;
            let mut min_hand_z = f64::INFINITY;
            let mut min_ee_z = f64::INFINITY;
            let pelvis = scenario.pelvis_pose.position;
            for rec in &result.log.records {
                let dxy = ((rec.robot_ee.position[0] - pelvis[0]).powi(2)
                    + (rec.robot_ee.position[1] - pelvis[1]).powi(2)).sqrt();
                min_sep = min_sep.min(dxy);
                let bxy = ((rec.q_robot[0] - pelvis[0]).powi(2)
                    + (rec.q_robot[1] - pelvis[1]).powi(2)).sqrt();
                min_base = min_base.min(bxy);
                min_hand_z = min_hand_z.min(rec.human_ee.position[2]);
                min_ee_z = min_ee_z.min(rec.robot_ee.position[2]);
            }
            // Criterion-7 style integrated motion per human joint.
            let mut integrated = [0.0f64; 8];
            for rec in &result.log.records {
                if !matches!(rec.phase, Phase::Approach | Phase::Hold) { continue; }
                for i in 0..8 {
                    integrated[i] += rec.qd_human[i].abs() * result.log.dt;
                }
            }
            println!(
                "              sep(ee)={min_sep:.3} sep(base)={min_base:.3} hand_z={min_hand_z:.3} ee_z={min_ee_z:.3} intq=[{}]",
                integrated.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(",")
            );
            if method == Method::Proposed {
                // Final human posture at hold for geometry insight.
                if let Some(rec) = result.log.records.iter().find(|r| r.phase == Phase::Hold) {
                    println!(
                        "              hold q_h=[{}] hand=({:.3},{:.3},{:.3})",
                        (0..8).map(|i| format!("{:.2}", rec.q_human[i])).collect::<Vec<_>>().join(","),
                        rec.human_ee.position[0], rec.human_ee.position[1], rec.human_ee.position[2]
                    );
                }
            }
            logs.insert((name.to_string(), method.as_str()), result.log);
        }
    }
    let (dp, da) = path_deviation(
        &logs[&("mie_standing".to_string(), "proposed")],
        &logs[&("mis_standing".to_string(), "proposed")],
    );
    println!("mie-vs-mis path deviation: pos={dp:.4} m ang={da:.4} rad");
}
