//! Recursive localization of the maximum sustainable request rate.
//!
//! A localization round ramps the request rate from a base by a fixed
//! increment until a step fails (after retries). The next round restarts
//! below the best rate found with a smaller increment, until the increment
//! drops under the resolution floor.

use crate::model::{Architecture, RateStep, RunRecord};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

/// Which f_resp statistic is compared against the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PassCriterion {
    MeanOfWindow,
    WorstSecond,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerPolicy {
    pub base_rate: f64,
    pub increment: f64,
    /// Allowed shortfall of f_resp against f_req (ε).
    pub lag_threshold: f64,
    pub retries: u32,
    pub restart_fraction: f64,
    pub increment_shrink: f64,
    pub resolution_floor: f64,
    pub max_rounds: u32,
    pub max_rate: f64,
    pub criterion: PassCriterion,
}

impl ControllerPolicy {
    pub fn default_for(arch: Architecture) -> Self {
        let increment = match arch {
            Architecture::Fabric => 200.0,
            Architecture::Quorum => 100.0,
        };
        ControllerPolicy {
            base_rate: 400.0,
            increment,
            lag_threshold: 0.05,
            retries: 2,
            restart_fraction: 0.8,
            increment_shrink: 0.5,
            resolution_floor: increment / 4.0,
            max_rounds: 8,
            max_rate: 1e6,
            criterion: PassCriterion::MeanOfWindow,
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if !(self.lag_threshold > 0.0 && self.lag_threshold < 1.0) {
            return Err("lag_threshold must lie in (0, 1)".into());
        }
        if !(self.restart_fraction > 0.0 && self.restart_fraction < 1.0) {
            return Err("restart_fraction must lie in (0, 1)".into());
        }
        if !(self.increment_shrink > 0.0 && self.increment_shrink < 1.0) {
            return Err("increment_shrink must lie in (0, 1)".into());
        }
        if !(self.resolution_floor > 0.0 && self.increment > self.resolution_floor) {
            return Err("need increment > resolution_floor > 0".into());
        }
        if !(self.base_rate > 0.0 && self.base_rate <= self.max_rate) {
            return Err("base_rate must lie in (0, max_rate]".into());
        }
        if self.max_rounds == 0 {
            return Err("max_rounds must be positive".into());
        }
        Ok(())
    }
}

/// Anything that can execute one rate step.
pub trait SystemUnderTest {
    fn run(&self, step: &RateStep, seed: u64) -> RunRecord;
}

impl<F: Fn(&RateStep, u64) -> RunRecord> SystemUnderTest for F {
    fn run(&self, step: &RateStep, seed: u64) -> RunRecord {
        self(step, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepVerdict {
    Pass,
    Fail,
}

#[derive(Debug, Error, PartialEq)]
pub enum ControllerError {
    #[error("empty measurement window")]
    EmptyWindow,
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("base rate unsustainable")]
    BaseRateUnsustainable { records: Vec<RunRecord> },
    #[error("no saturation found below rate ceiling")]
    NoSaturation,
}

/// Pass iff the window's mean (or worst second) f_resp reaches
/// (1 - ε) * f_req.
pub fn evaluate_step(rec: &RunRecord, epsilon: f64) -> Result<StepVerdict, ControllerError> {
    evaluate_step_with(rec, epsilon, PassCriterion::MeanOfWindow)
}

pub fn evaluate_step_with(
    rec: &RunRecord,
    epsilon: f64,
    criterion: PassCriterion,
) -> Result<StepVerdict, ControllerError> {
    let measured = match criterion {
        PassCriterion::MeanOfWindow => rec.mean_f_resp(),
        PassCriterion::WorstSecond => rec.worst_f_resp(),
    }
    .ok_or(ControllerError::EmptyWindow)?;
    if measured >= (1.0 - epsilon) * rec.step.f_req - 1e-9 {
        Ok(StepVerdict::Pass)
    } else {
        Ok(StepVerdict::Fail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub f_req: f64,
    pub verdict: StepVerdict,
    /// Retries used beyond the first run.
    pub retries: u32,
    /// Window mean f_resp of the deciding run.
    pub mean_f_resp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub base_rate: f64,
    pub increment: f64,
    pub attempts: Vec<Attempt>,
}

impl Round {
    pub fn best_pass(&self) -> Option<&Attempt> {
        self.attempts.iter().rev().find(|a| a.verdict == StepVerdict::Pass)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationResult {
    /// Measured window-mean f_resp at the final round's highest passing
    /// rate, rounded down to whole transactions per second.
    pub max_sustained_rate: f64,
    /// Request rate that produced `max_sustained_rate`.
    pub max_passing_f_req: f64,
    pub rounds: Vec<Round>,
    /// Every run in execution order, retries included.
    pub records: Vec<RunRecord>,
}

impl LocalizationResult {
    pub fn final_increment(&self) -> Option<f64> {
        self.rounds.last().map(|r| r.increment)
    }

    pub fn total_runs(&self) -> usize {
        self.rounds.iter().flat_map(|r| &r.attempts).map(|a| 1 + a.retries as usize).sum()
    }
}

fn run_seed(seed: u64, run_index: u64) -> u64 {
    // splitmix64 step keeps consecutive run seeds decorrelated
    let mut z = seed.wrapping_add(run_index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn run_localization(
    sut: &dyn SystemUnderTest,
    policy: &ControllerPolicy,
    seed: u64,
) -> Result<LocalizationResult, ControllerError> {
    run_localization_with_step(sut, policy, RateStep::default(), seed)
}

/// As [`run_localization`], with every step shaped like `template`.
pub fn run_localization_with_step(
    sut: &dyn SystemUnderTest,
    policy: &ControllerPolicy,
    template: RateStep,
    seed: u64,
) -> Result<LocalizationResult, ControllerError> {
    policy.check().map_err(ControllerError::InvalidPolicy)?;
    if template.window_len() == 0 {
        return Err(ControllerError::EmptyWindow);
    }
    let mut records = Vec::new();
    let mut rounds: Vec<Round> = Vec::new();
    let mut increment = policy.increment;
    let mut base = policy.base_rate;
    let mut best: Option<(f64, f64)> = None;
    let mut run_index = 0u64;

    loop {
        let mut round = Round { base_rate: base, increment, attempts: Vec::new() };
        let mut rate = base;
        loop {
            if rate > policy.max_rate {
                return Err(ControllerError::NoSaturation);
            }
            let mut retries = 0;
            let attempt = loop {
                let rec = sut.run(&template.at(rate), run_seed(seed, run_index));
                run_index += 1;
                let verdict = evaluate_step_with(&rec, policy.lag_threshold, policy.criterion)?;
                let mean = rec.mean_f_resp().unwrap_or(0.0);
                records.push(rec);
                if verdict == StepVerdict::Pass || retries == policy.retries {
                    break Attempt { f_req: rate, verdict, retries, mean_f_resp: mean };
                }
                retries += 1;
            };
            let passed = attempt.verdict == StepVerdict::Pass;
            round.attempts.push(attempt);
            if !passed {
                break;
            }
            rate += increment;
        }
        let round_best = round.best_pass().map(|a| (a.f_req, a.mean_f_resp));
        let first_round = rounds.is_empty();
        rounds.push(round);
        match round_best {
            Some(b) => best = Some(b),
            None if first_round => return Err(ControllerError::BaseRateUnsustainable { records }),
            None => {}
        }
        let next_increment = increment * policy.increment_shrink;
        if next_increment < policy.resolution_floor {
            break;
        }
        if rounds.len() as u32 >= policy.max_rounds {
            break;
        }
        let (best_rate, _) = best.expect("first round passed");
        increment = next_increment;
        base = ((policy.restart_fraction * best_rate / increment).floor() * increment).max(increment);
    }

    let final_best = rounds.last().and_then(|r| r.best_pass()).map(|a| (a.f_req, a.mean_f_resp));
    let (f_req, mean) = final_best.or(best).expect("at least one passing step");
    Ok(LocalizationResult {
        max_sustained_rate: mean.min(f_req).floor(),
        max_passing_f_req: f_req,
        rounds,
        records,
    })
}

/// Human-readable account of a localization, one line per attempted rate.
pub fn schedule_report(result: &LocalizationResult) -> String {
    if result.rounds.is_empty() {
        return "no rounds executed\n".to_string();
    }
    let mut out = String::new();
    for (i, round) in result.rounds.iter().enumerate() {
        let _ = writeln!(
            out,
            "round {}: base {} tx/s, increment {} tx/s",
            i + 1,
            round.base_rate,
            round.increment
        );
        for a in &round.attempts {
            let verdict = match a.verdict {
                StepVerdict::Pass => "pass",
                StepVerdict::Fail => "fail",
            };
            let _ = writeln!(
                out,
                "  f_req {:>8.1}  f_resp {:>8.1}  {verdict}  retries {}",
                a.f_req, a.mean_f_resp, a.retries
            );
        }
    }
    let _ = writeln!(
        out,
        "max sustained rate: {} tx/s (at f_req {}), {} runs",
        result.max_sustained_rate,
        result.max_passing_f_req,
        result.total_runs()
    );
    out
}
