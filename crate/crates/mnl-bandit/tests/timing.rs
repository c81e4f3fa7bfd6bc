//! Manual performance probe; run with
//! `cargo test -p mnl-bandit --test timing -- --ignored --nocapture`.

use std::time::Instant;

use mnl_bandit::policy::Variant;
use mnl_bandit::simulator::{
    agent_config_for_instance, generate_problem, run_episode, ScalePolicy,
};

#[test]
#[ignore = "performance probe, not a correctness test"]
fn time_one_episode() {
    for horizon in [200usize, 500, 1000] {
        let inst =
            generate_problem::<f64>(2, 2, 20, ScalePolicy::KappaTarget(30.0), 1).unwrap();
        let config =
            agent_config_for_instance(&inst, Variant::Tight, None, 0.01, horizon, 1e-8, 100, 1);
        let start = Instant::now();
        let trace = run_episode(&inst, &config, horizon, 1).unwrap();
        println!(
            "T={horizon}: {:.2}s, projections={}, nonconverged={}, final R={:.2}",
            start.elapsed().as_secs_f64(),
            trace.stats.projection_rounds,
            trace.stats.fit_nonconverged_rounds,
            trace.final_regret()
        );
    }
}
