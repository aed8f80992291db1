use ahqp_core::baseline::{run_method, Method};
use ahqp_core::scenario::{preset, Scenario};

fn main() {
    let mut config = preset("wb_seated").unwrap();
    config.run.duration_s = 0.2;
    let scenario = Scenario::from_config(config).unwrap();
    let result = run_method(&scenario, Method::Reba);
    match result {
        Ok(r) => eprintln!("ok, fallbacks={}", r.diagnostics.solver_fallbacks),
        Err(e) => eprintln!("err: {e}"),
    }
}
