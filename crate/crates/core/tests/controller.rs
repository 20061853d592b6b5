mod common;

use chainscope::controller::{run_localization_with_step, StepVerdict};
use chainscope::model::RateStep;
use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn reports_within_one_increment_of_a_hard_cap() {
    check_controller_soundness().unwrap();
}

#[test]
fn rounds_restart_below_the_best_pass_with_smaller_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..5 {
        let policy = random_policy(&mut rng);
        let sut = |s: &RateStep, sd: u64| hard_capped(s, sd, 2000.0);
        let res = run_localization_with_step(&sut, &policy, RateStep::default(), seed).unwrap();
        for w in res.rounds.windows(2) {
            assert!(w[1].increment < w[0].increment);
            let best = w[0].best_pass().map(|a| a.f_req).unwrap_or(w[0].base_rate);
            assert!(w[1].base_rate < best || w[1].base_rate == policy.base_rate);
        }
        let last = res.rounds.last().unwrap();
        assert!(last.attempts.iter().any(|a| a.verdict == StepVerdict::Fail) || res.rounds.len() == policy.max_rounds as usize);
        assert_eq!(res.records.len(), res.total_runs());
    }
}

mod oracle {
    use super::common::without_caps;
    use chainscope::model::{validate_config, Architecture, ExperimentConfig};
    use chainscope::netsim::{build_network, saturation_oracle, Constraint, StageKind};

    #[test]
    fn stage_cap_binds_between_t_and_t_over_095() {
        let mut cfg = without_caps(ExperimentConfig::default_for(Architecture::Quorum));
        cfg.constraints.push(Constraint::StageRateCap { stage: StageKind::ClientSubmit, rate: 1600.0 });
        let net = build_network(&validate_config(&cfg).unwrap());
        let grid: Vec<f64> = (0..=16).map(|i| 1200.0 + 50.0 * i as f64).collect();
        let got = saturation_oracle(&net, &grid, cfg.seed).unwrap();
        assert!((1600.0..=1600.0 / 0.95 + 50.0).contains(&got), "{got}");
    }

    #[test]
    fn zero_cost_model_sustains_the_whole_grid() {
        let mut cfg = ExperimentConfig::default_for(Architecture::Fabric);
        for c in cfg.cost_model.stages.values_mut() {
            c.cpu_ms_per_tx = 0.0;
            c.cpu_ms_per_block = 0.0;
            c.disk_bytes_per_tx = 0.0;
        }
        let net = build_network(&validate_config(&cfg).unwrap());
        assert_eq!(saturation_oracle(&net, &[100.0, 400.0, 800.0], cfg.seed).unwrap(), 800.0);
    }
}
