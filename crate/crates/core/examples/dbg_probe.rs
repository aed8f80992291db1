use ahqp_core::baseline::{run_method, Method};
use ahqp_core::config::ScenarioConfig;
use ahqp_core::scenario::Scenario;

fn main() {
    let toml = std::fs::read_to_string("crates/core/presets/ea_standing.toml").unwrap();
    let config: ScenarioConfig = toml::from_str(&toml).unwrap();
    let dt = config.task.dt_s;
    let scenario = Scenario::from_config(config).unwrap();
    let result = run_method(&scenario, Method::Proposed).unwrap();
    let log = &result.log;
    eprintln!("tick | qd_human (8) | twist_h lin");
    for k in 0..70 {
        let rec = &log.records[k];
        let qd: Vec<String> = rec.qd_human.iter().map(|v| format!("{v:+.2}")).collect();
        eprintln!("{k:3} {} | est={:?}", qd.join(" "), rec.phase);
    }
    let _ = dt;
}
