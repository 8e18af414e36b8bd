//! Synthetic subjects and the brute-force recovery oracle.
//!
//! An agent knows its own (β, δ) and its reversal probability p̂, and answers
//! every question by comparing model utilities. Ties resolve toward LL (and
//! toward keeping flexibility), matching the weak-preference reading of D*.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discounting::{Beliefs, ChoiceProblem, Pick, QhdParams};
use crate::elicitation::{Answer, Question, SessionConfig, SessionRecord, SessionState, Topic};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", content = "fraction", rename_all = "snake_case")]
pub enum WtpPolicy {
    /// Pays exactly the amount that makes it indifferent.
    PayExactExpectedValue,
    /// Pays this fraction of the indifference amount.
    PayFraction(f64),
    /// Answers every payment prompt with zero; yes/no answers are unaffected.
    RefuseAll,
}

/// Vantage point for a choice: `T1` is the moment the question is asked,
/// `T0` one day earlier (every delay is one day longer).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChoiceTime {
    T0,
    T1,
}

impl ChoiceTime {
    fn lead_days(self) -> u32 {
        match self {
            ChoiceTime::T0 => 1,
            ChoiceTime::T1 => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticAgent {
    pub params: QhdParams,
    pub beliefs: Beliefs,
    pub wtp_policy: WtpPolicy,
    /// Probability of flipping each choice or yes/no answer.
    #[serde(default)]
    pub noise: f64,
}

impl SyntheticAgent {
    pub fn new(params: QhdParams, beliefs: Beliefs, wtp_policy: WtpPolicy) -> Result<Self> {
        let agent = Self {
            params,
            beliefs,
            wtp_policy,
            noise: 0.0,
        };
        agent.validate()?;
        Ok(agent)
    }

    pub fn with_noise(mut self, noise: f64) -> Result<Self> {
        self.noise = noise;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        QhdParams::new(self.params.beta, self.params.delta)?;
        Beliefs::new(self.beliefs.beta_hat, self.beliefs.p_hat)?;
        self.beliefs.check_against(&self.params)?;
        if !(0.0..0.5).contains(&self.noise) {
            return Err(Error::invalid(
                "noise",
                format!("must lie in [0, 0.5), got {}", self.noise),
            ));
        }
        if let WtpPolicy::PayFraction(f) = self.wtp_policy {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::invalid(
                    "wtp_policy.fraction",
                    format!("must lie in [0, 1], got {f}"),
                ));
            }
        }
        Ok(())
    }

    /// Which option this agent takes from `menu`.
    pub fn choose(&self, menu: &ChoiceProblem, time: ChoiceTime) -> Pick {
        let (sooner, later) = self.menu_values(menu, time);
        if later >= sooner {
            Pick::Later
        } else {
            Pick::Sooner
        }
    }

    fn menu_values(&self, menu: &ChoiceProblem, time: ChoiceTime) -> (f64, f64) {
        let lead = time.lead_days();
        (
            self.params.present_value(menu.dated(Pick::Sooner), lead),
            self.params.present_value(menu.dated(Pick::Later), lead),
        )
    }

    /// (committed, flexible) expected utilities of the menu, with V_f = 0.
    fn commitment_values(&self, menu: &ChoiceProblem, time: ChoiceTime) -> (f64, f64) {
        let (u_a, u_b) = self.menu_values(menu, time);
        let p = self.beliefs.p_hat;
        (u_b, p * u_a + (1.0 - p) * u_b)
    }

    fn pay(&self, exact: f64) -> f64 {
        let exact = exact.max(0.0);
        match self.wtp_policy {
            WtpPolicy::PayExactExpectedValue => exact,
            WtpPolicy::PayFraction(f) => f * exact,
            WtpPolicy::RefuseAll => 0.0,
        }
    }
}

/// The noise-free answer the agent gives to `question`.
pub fn agent_answer(agent: &SyntheticAgent, question: &Question, time: ChoiceTime) -> Answer {
    match question {
        Question::Choice { menu, .. } => Answer::Choice(agent.choose(menu, time)),
        Question::YesNo { topic, menu, .. } => {
            let (committed, flexible) = agent.commitment_values(menu, time);
            Answer::YesNo(match topic {
                Topic::Commitment => committed > flexible,
                Topic::Flexibility => flexible >= committed,
            })
        }
        Question::Amount { topic, menu, .. } => {
            let (committed, flexible) = agent.commitment_values(menu, time);
            let exact = match topic {
                Topic::Commitment => committed - flexible,
                Topic::Flexibility => flexible - committed,
            };
            Answer::Amount(agent.pay(exact))
        }
    }
}

/// Runs one full session with `agent` answering at the time each question is
/// asked. The same agent, config and seed always give the same record.
pub fn simulate_session(
    agent: &SyntheticAgent,
    config: SessionConfig,
    seed: u64,
) -> Result<SessionRecord> {
    agent.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = SessionState::start(config)?;
    while !state.is_terminal() {
        let question = state.current_question()?;
        let mut answer = agent_answer(agent, &question, ChoiceTime::T1);
        if agent.noise > 0.0 && rng.gen::<f64>() < agent.noise {
            answer = match answer {
                Answer::Choice(p) => Answer::Choice(p.flipped()),
                Answer::YesNo(b) => Answer::YesNo(!b),
                amount => amount,
            };
        }
        state.submit(answer)?;
    }
    state.finalize(format!("sim-{seed}"))
}

/// Evenly spaced grid `start, start + step, ...` with `count` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl GridAxis {
    /// Inclusive of `end` up to rounding.
    pub fn new(start: f64, end: f64, step: f64) -> Result<Self> {
        if step.is_nan() || step <= 0.0 || end.is_nan() || end < start {
            return Err(Error::invalid(
                "grid",
                format!("empty grid {start}..={end} by {step}"),
            ));
        }
        Ok(Self {
            start,
            step,
            count: ((end - start) / step + 1e-9).floor() as usize + 1,
        })
    }

    /// Snapped to 12 decimals so that e.g. the 95th hundredth is exactly `0.95`.
    pub fn point(&self, i: usize) -> f64 {
        ((self.start + i as f64 * self.step) * 1e12).round() / 1e12
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|i| self.point(i))
    }
}

/// Every grid pair `(β, δ)` under which a noise-free agent would have made
/// each binary choice recorded in `record`'s transcript. Grid points outside
/// the valid parameter domain are skipped.
pub fn brute_force_recover(
    record: &SessionRecord,
    beta_grid: &GridAxis,
    delta_grid: &GridAxis,
) -> Result<Vec<(f64, f64)>> {
    if beta_grid.count == 0 || delta_grid.count == 0 {
        return Err(Error::Empty("grid"));
    }
    let choices: Vec<(ChoiceProblem, Pick)> = record
        .transcript
        .iter()
        .filter_map(|e| match (&e.question, e.answer) {
            (Question::Choice { menu, .. }, Answer::Choice(pick)) => Some((*menu, pick)),
            _ => None,
        })
        .collect();

    let mut out = Vec::new();
    for beta in beta_grid.points() {
        for delta in delta_grid.points() {
            let Ok(params) = QhdParams::new(beta, delta) else {
                continue;
            };
            let consistent = choices.iter().all(|(menu, pick)| {
                let sooner =
                    params.discount(menu.ss.delay_days + menu.front_end_delay) * menu.ss.amount;
                let later =
                    params.discount(menu.ll.delay_days + menu.front_end_delay) * menu.ll.amount;
                let implied = if later >= sooner {
                    Pick::Later
                } else {
                    Pick::Sooner
                };
                implied == *pick
            });
            if consistent {
                out.push((beta, delta));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discounting::{predicts_reversal, RewardOption};
    use crate::elicitation::Arm;
    use crate::estimation::WtpKind;

    fn agent(beta: f64, delta: f64, p_hat: f64, policy: WtpPolicy) -> SyntheticAgent {
        let params = QhdParams::new(beta, delta).unwrap();
        SyntheticAgent::new(params, Beliefs::new(beta, p_hat).unwrap(), policy).unwrap()
    }

    fn stage1(d: u32) -> Question {
        let menu = ChoiceProblem::new(
            RewardOption::new(100.0, 0).unwrap(),
            RewardOption::new(110.0, d).unwrap(),
            0,
        )
        .unwrap();
        Question::Choice {
            stage: crate::elicitation::Stage::One,
            sooner: menu.dated(Pick::Sooner),
            later: menu.dated(Pick::Later),
            menu,
        }
    }

    #[test]
    fn answers_stage1_by_utility() {
        let a = agent(0.95, 0.99, 0.3, WtpPolicy::PayExactExpectedValue);
        assert_eq!(
            agent_answer(&a, &stage1(4), ChoiceTime::T1),
            Answer::Choice(Pick::Later)
        );
        assert_eq!(
            agent_answer(&a, &stage1(5), ChoiceTime::T1),
            Answer::Choice(Pick::Sooner)
        );
    }

    #[test]
    fn naive_agent_declines_commitment() {
        let a = agent(0.9, 0.99, 0.0, WtpPolicy::PayExactExpectedValue);
        let menu = ChoiceProblem::new(
            RewardOption::new(100.0, 0).unwrap(),
            RewardOption::new(110.0, 3).unwrap(),
            3,
        )
        .unwrap();
        let q = Question::YesNo {
            topic: Topic::Commitment,
            prompt: String::new(),
            menu,
        };
        assert_eq!(agent_answer(&a, &q, ChoiceTime::T1), Answer::YesNo(false));
    }

    #[test]
    fn simulated_d_star_matches_hand_value() {
        let a = agent(0.95, 0.99, 0.5, WtpPolicy::PayExactExpectedValue);
        let rec = simulate_session(&a, SessionConfig::default(), 1).unwrap();
        assert_eq!(rec.d_star, Some(4));
        assert_eq!(rec.arm, Arm::LLCostlyCommitment);
        assert_eq!(rec.fd_star, Some(4));
    }

    #[test]
    fn time_consistent_patient_agent_hits_cap() {
        let a = agent(1.0, 1.0, 0.0, WtpPolicy::PayExactExpectedValue);
        let rec = simulate_session(&a, SessionConfig::default(), 2).unwrap();
        assert!(rec.stage1_censored());
        assert_eq!(rec.d_star, Some(365));
    }

    #[test]
    fn strongly_biased_agent_takes_ss() {
        let a = agent(0.9, 0.999, 0.2, WtpPolicy::PayExactExpectedValue);
        let rec = simulate_session(&a, SessionConfig::default(), 3).unwrap();
        assert_eq!(rec.arm, Arm::SS);
        assert_eq!(rec.d_star, None);
    }

    #[test]
    fn wtp_policies() {
        let cfg = SessionConfig::default();
        let exact = simulate_session(
            &agent(0.95, 0.99, 0.5, WtpPolicy::PayExactExpectedValue),
            cfg.clone(),
            0,
        )
        .unwrap();
        let half = simulate_session(
            &agent(0.95, 0.99, 0.5, WtpPolicy::PayFraction(0.5)),
            cfg.clone(),
            0,
        )
        .unwrap();
        let none = simulate_session(
            &agent(0.95, 0.99, 0.5, WtpPolicy::RefuseAll),
            cfg.clone(),
            0,
        )
        .unwrap();
        assert!((half.wtp.amount - exact.wtp.amount / 2.0).abs() < 1e-12);
        assert_eq!(none.wtp.kind, WtpKind::CostlessCommitment);
        let naive = simulate_session(
            &agent(0.95, 0.99, 0.0, WtpPolicy::PayExactExpectedValue),
            cfg,
            0,
        )
        .unwrap();
        assert_eq!(naive.arm, Arm::LLFlexibility);
        assert_eq!(naive.wtp.amount, 0.0);
    }

    #[test]
    fn agent_validation() {
        let params = QhdParams::new(0.9, 0.95).unwrap();
        assert!(SyntheticAgent::new(
            params,
            Beliefs::new(0.8, 0.5).unwrap(),
            WtpPolicy::RefuseAll
        )
        .is_err());
        assert!(SyntheticAgent::new(
            params,
            Beliefs::new(0.9, 0.5).unwrap(),
            WtpPolicy::PayFraction(1.5)
        )
        .is_err());
        let a = SyntheticAgent::new(
            params,
            Beliefs::new(0.95, 0.5).unwrap(),
            WtpPolicy::RefuseAll,
        )
        .unwrap();
        assert!(a.with_noise(0.5).is_err());
        assert!(a.with_noise(0.2).is_ok());
    }

    #[test]
    fn noisy_runs_are_reproducible() {
        let a = agent(0.95, 0.99, 0.4, WtpPolicy::PayExactExpectedValue)
            .with_noise(0.3)
            .unwrap();
        let cfg = SessionConfig::default();
        let r1 = simulate_session(&a, cfg.clone(), 42).unwrap();
        let r2 = simulate_session(&a, cfg, 42).unwrap();
        assert_eq!(
            serde_json::to_string(&r1).unwrap(),
            serde_json::to_string(&r2).unwrap()
        );
    }

    #[test]
    fn t0_t1_choices_match_reversal_prediction() {
        // SS one day after t0, LL two days after t0.
        let cases = [
            (0.5, 0.9, 100.0, 150.0),
            (0.5, 0.9, 100.0, 300.0),
            (0.9, 0.95, 100.0, 104.0),
        ];
        for (beta, delta, u_ss, u_ll) in cases {
            let a = agent(beta, delta, 0.0, WtpPolicy::RefuseAll);
            let menu = ChoiceProblem::new(
                RewardOption::new(u_ss, 0).unwrap(),
                RewardOption::new(u_ll, 1).unwrap(),
                0,
            )
            .unwrap();
            let simulated = a.choose(&menu, ChoiceTime::T0) == Pick::Later
                && a.choose(&menu, ChoiceTime::T1) == Pick::Sooner;
            assert_eq!(simulated, predicts_reversal(u_ss, u_ll, &a.params));
        }
    }

    #[test]
    fn brute_force_examples() {
        let grid = GridAxis::new(0.01, 1.0, 0.01).unwrap();
        assert_eq!(grid.count, 100);
        let a = agent(
            grid.point(94),
            grid.point(98),
            0.5,
            WtpPolicy::PayExactExpectedValue,
        );
        let rec = simulate_session(&a, SessionConfig::default(), 0).unwrap();
        let set = brute_force_recover(&rec, &grid, &grid).unwrap();
        assert!(set.contains(&(a.params.beta, a.params.delta)));

        let ss = simulate_session(
            &agent(0.9, 0.999, 0.0, WtpPolicy::RefuseAll),
            SessionConfig::default(),
            0,
        )
        .unwrap();
        let set = brute_force_recover(&ss, &grid, &grid).unwrap();
        let expected: Vec<_> = grid
            .points()
            .flat_map(|b| grid.points().map(move |d| (b, d)))
            .filter(|(b, d)| b * d * 110.0 < 100.0)
            .collect();
        assert_eq!(set, expected);

        let narrow = GridAxis::new(0.1, 0.2, 0.05).unwrap();
        assert!(brute_force_recover(&rec, &narrow, &narrow)
            .unwrap()
            .is_empty());
        assert!(GridAxis::new(1.0, 0.0, 0.01).is_err());
    }
}
