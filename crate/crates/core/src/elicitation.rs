//! Two-stage staircase elicitation.
//!
//! Stage 1 offers SS now against LL in `D` days and raises `D` one step at a
//! time while the subject keeps choosing LL. Taking SS on the very first
//! question ends the session. Taking SS later fixes `D*` as the last delay at
//! which LL was still chosen, and the subject is asked about commitment and,
//! failing that, flexibility. Stage 2 then pushes both rewards back by a
//! common front-end delay `FD` (starting at `D*`, gap held at `D*`) and raises
//! `FD` until LL is chosen; that `FD` is `FD*`.
//!
//! The machine is deterministic: the same config and answers always give the
//! same state.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::discounting::{check_beta, ChoiceProblem, Pick, RewardOption};
use crate::error::{Error, Result};
use crate::estimation::{WtpKind, WtpObservation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompts {
    pub commitment_query: String,
    pub commitment_wtp: String,
    pub flexibility_query: String,
    pub flexibility_wtp: String,
}

impl Default for Prompts {
    fn default() -> Self {
        Self {
            commitment_query: "Before the {ll} arrives in {d_star} days, others may offer you the {ss} \
                and switching would cancel the later reward. Would you like the examiner to keep you \
                from being tempted?"
                .into(),
            commitment_wtp: "How much ({currency}) would you pay the examiner to keep you from being tempted?".into(),
            flexibility_query: "Do you want to keep the freedom to switch to the {ss} before the {d_star} days are up?"
                .into(),
            flexibility_wtp: "How much ({currency}) would you pay to keep that freedom of choice?".into(),
        }
    }
}

impl Prompts {
    fn render(template: &str, config: &SessionConfig, d_star: u32) -> String {
        template
            .replace(
                "{ss}",
                &format!("{} {}", config.ss_amount, config.currency_label),
            )
            .replace(
                "{ll}",
                &format!("{} {}", config.ll_amount, config.currency_label),
            )
            .replace("{d_star}", &d_star.to_string())
            .replace("{currency}", &config.currency_label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub ss_amount: f64,
    pub ll_amount: f64,
    pub epsilon_days: u32,
    pub initial_delay_days: u32,
    pub step_days: u32,
    pub max_delay_days: u32,
    pub currency_label: String,
    /// Present bias used when estimating from this session's record.
    pub beta_assumed: f64,
    pub prompts: Prompts,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            ss_amount: 100.0,
            ll_amount: 110.0,
            epsilon_days: 0,
            initial_delay_days: 1,
            step_days: 1,
            max_delay_days: 365,
            currency_label: "USD".into(),
            beta_assumed: 0.88,
            prompts: Prompts::default(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ss_amount.is_finite() && self.ss_amount > 0.0) {
            return Err(Error::invalid("config.ss_amount", "must be finite and > 0"));
        }
        if !(self.ll_amount.is_finite() && self.ll_amount > self.ss_amount) {
            return Err(Error::invalid(
                "config.ll_amount",
                "must exceed config.ss_amount",
            ));
        }
        if self.step_days < 1 {
            return Err(Error::invalid("config.step_days", "must be at least 1"));
        }
        if self.initial_delay_days < 1 {
            return Err(Error::invalid(
                "config.initial_delay_days",
                "must be at least 1",
            ));
        }
        if self.epsilon_days >= self.initial_delay_days {
            return Err(Error::invalid(
                "config.epsilon_days",
                "must be shorter than config.initial_delay_days",
            ));
        }
        if self.max_delay_days < self.initial_delay_days {
            return Err(Error::invalid(
                "config.max_delay_days",
                "must be at least config.initial_delay_days",
            ));
        }
        check_beta("config.beta_assumed", self.beta_assumed)
    }

    pub fn ss(&self) -> RewardOption {
        RewardOption {
            amount: self.ss_amount,
            delay_days: self.epsilon_days,
        }
    }

    pub fn ll(&self, delay_days: u32) -> RewardOption {
        RewardOption {
            amount: self.ll_amount,
            delay_days,
        }
    }

    fn menu(&self, ll_delay: u32, front_end_delay: u32) -> ChoiceProblem {
        ChoiceProblem {
            ss: self.ss(),
            ll: self.ll(ll_delay),
            front_end_delay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Stage1Choice,
    CommitmentQuery,
    CommitmentWtp,
    FlexibilityQuery,
    FlexibilityWtp,
    Stage2Choice,
    Complete,
    TerminatedSS,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Complete | Phase::TerminatedSS)
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Stage1Choice => "stage1_choice",
            Phase::CommitmentQuery => "commitment_query",
            Phase::CommitmentWtp => "commitment_wtp",
            Phase::FlexibilityQuery => "flexibility_query",
            Phase::FlexibilityWtp => "flexibility_wtp",
            Phase::Stage2Choice => "stage2_choice",
            Phase::Complete => "complete",
            Phase::TerminatedSS => "terminated_ss",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topic {
    Commitment,
    Flexibility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Question {
    /// Binary choice. `sooner` and `later` carry delays measured from now.
    Choice {
        stage: Stage,
        menu: ChoiceProblem,
        sooner: RewardOption,
        later: RewardOption,
    },
    YesNo {
        topic: Topic,
        prompt: String,
        /// The front-end-delayed menu the commitment would apply to.
        menu: ChoiceProblem,
    },
    Amount {
        topic: Topic,
        prompt: String,
        currency: String,
        menu: ChoiceProblem,
    },
}

impl Question {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Question::Choice { .. } => "choice",
            Question::YesNo { .. } => "yes_no",
            Question::Amount { .. } => "amount",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Answer {
    Choice(Pick),
    YesNo(bool),
    Amount(f64),
}

impl Answer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Answer::Choice(_) => "choice",
            Answer::YesNo(_) => "yes_no",
            Answer::Amount(_) => "amount",
        }
    }

    /// Compact token used in CSV transcripts: `SS`, `LL`, `yes`, `no`, or the amount.
    pub fn token(&self) -> String {
        match self {
            Answer::Choice(p) => p.label().to_string(),
            Answer::YesNo(true) => "yes".into(),
            Answer::YesNo(false) => "no".into(),
            Answer::Amount(a) => a.to_string(),
        }
    }

    pub fn parse_token(token: &str) -> Result<Answer> {
        Ok(match token {
            "SS" => Answer::Choice(Pick::Sooner),
            "LL" => Answer::Choice(Pick::Later),
            "yes" => Answer::YesNo(true),
            "no" => Answer::YesNo(false),
            other => Answer::Amount(other.parse().map_err(|_| {
                Error::invalid("transcript", format!("unknown answer token `{other}`"))
            })?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub question: Question,
    pub answer: Answer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub config: SessionConfig,
    pub phase: Phase,
    /// Stage-1 LL delay currently offered.
    pub current_d: u32,
    /// Stage-2 front-end delay currently offered.
    pub current_fd: u32,
    pub d_star: Option<u32>,
    pub fd_star: Option<u32>,
    pub wtp: Option<WtpObservation>,
    /// Set when a staircase ran into `max_delay_days` without switching.
    pub cap_reached: Option<Stage>,
    pub transcript: Vec<Exchange>,
}

impl SessionState {
    pub fn start(config: SessionConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            current_d: config.initial_delay_days,
            current_fd: 0,
            config,
            phase: Phase::Stage1Choice,
            d_star: None,
            fd_star: None,
            wtp: None,
            cap_reached: None,
            transcript: Vec::new(),
        })
    }

    /// Rebuilds a session by feeding `answers` in order.
    pub fn replay(
        config: SessionConfig,
        answers: impl IntoIterator<Item = Answer>,
    ) -> Result<Self> {
        let mut state = Self::start(config)?;
        for answer in answers {
            state.submit(answer)?;
        }
        Ok(state)
    }

    pub fn is_terminal(&self) -> bool {
        self.phase.is_terminal()
    }

    pub fn answers(&self) -> impl Iterator<Item = Answer> + '_ {
        self.transcript.iter().map(|e| e.answer)
    }

    pub fn current_question(&self) -> Result<Question> {
        let cfg = &self.config;
        let d_star = self.d_star.unwrap_or(0);
        let later_menu = || cfg.menu(d_star, d_star);
        let render = |t: &str| Prompts::render(t, cfg, d_star);
        Ok(match self.phase {
            Phase::Stage1Choice => choice(Stage::One, cfg.menu(self.current_d, 0)),
            Phase::Stage2Choice => choice(Stage::Two, cfg.menu(d_star, self.current_fd)),
            Phase::CommitmentQuery => Question::YesNo {
                topic: Topic::Commitment,
                prompt: render(&cfg.prompts.commitment_query),
                menu: later_menu(),
            },
            Phase::FlexibilityQuery => Question::YesNo {
                topic: Topic::Flexibility,
                prompt: render(&cfg.prompts.flexibility_query),
                menu: later_menu(),
            },
            Phase::CommitmentWtp => Question::Amount {
                topic: Topic::Commitment,
                prompt: render(&cfg.prompts.commitment_wtp),
                currency: cfg.currency_label.clone(),
                menu: later_menu(),
            },
            Phase::FlexibilityWtp => Question::Amount {
                topic: Topic::Flexibility,
                prompt: render(&cfg.prompts.flexibility_wtp),
                currency: cfg.currency_label.clone(),
                menu: later_menu(),
            },
            Phase::Complete | Phase::TerminatedSS => {
                return Err(Error::SessionFinished {
                    phase: self.phase.name(),
                })
            }
        })
    }

    /// Applies one answer. On error the state is left untouched.
    pub fn submit(&mut self, answer: Answer) -> Result<()> {
        let question = self.current_question()?;
        if question.kind_name() != answer.kind_name() {
            return Err(Error::AnswerMismatch {
                expected: question.kind_name(),
                got: answer.kind_name(),
            });
        }
        if let Answer::Amount(a) = answer {
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::invalid(
                    "answer.value",
                    format!("amount must be finite and >= 0, got {a}"),
                ));
            }
        }

        let step = self.config.step_days;
        let max = self.config.max_delay_days;
        match (self.phase, answer) {
            (Phase::Stage1Choice, Answer::Choice(Pick::Sooner)) => {
                if self.current_d == self.config.initial_delay_days {
                    self.phase = Phase::TerminatedSS;
                } else {
                    self.d_star = Some(self.current_d - step);
                    self.phase = Phase::CommitmentQuery;
                }
            }
            (Phase::Stage1Choice, Answer::Choice(Pick::Later)) => {
                let next = self.current_d + step;
                if next > max {
                    // Censored: the subject never switched within the cap.
                    self.d_star = Some(self.current_d);
                    self.wtp = Some(WtpObservation::none_refused());
                    self.cap_reached = Some(Stage::One);
                    self.phase = Phase::Complete;
                } else {
                    self.current_d = next;
                }
            }
            (Phase::CommitmentQuery, Answer::YesNo(yes)) => {
                self.phase = if yes {
                    Phase::CommitmentWtp
                } else {
                    Phase::FlexibilityQuery
                };
            }
            (Phase::CommitmentWtp, Answer::Amount(m)) => {
                self.wtp = Some(if m > 0.0 {
                    WtpObservation::commitment(m)?
                } else {
                    WtpObservation::costless_commitment()
                });
                self.enter_stage2();
            }
            (Phase::FlexibilityQuery, Answer::YesNo(yes)) => {
                if yes {
                    self.phase = Phase::FlexibilityWtp;
                } else {
                    self.wtp = Some(WtpObservation::none_refused());
                    self.enter_stage2();
                }
            }
            (Phase::FlexibilityWtp, Answer::Amount(n)) => {
                self.wtp = Some(WtpObservation::flexibility(n)?);
                self.enter_stage2();
            }
            (Phase::Stage2Choice, Answer::Choice(Pick::Later)) => {
                self.fd_star = Some(self.current_fd);
                self.phase = Phase::Complete;
            }
            (Phase::Stage2Choice, Answer::Choice(Pick::Sooner)) => {
                let next = self.current_fd + step;
                if next + self.d_star.unwrap_or(0) > max {
                    self.cap_reached = Some(Stage::Two);
                    self.phase = Phase::Complete;
                } else {
                    self.current_fd = next;
                }
            }
            _ => unreachable!("answer kind checked against question kind"),
        }
        self.transcript.push(Exchange { question, answer });
        Ok(())
    }

    fn enter_stage2(&mut self) {
        let d_star = self.d_star.unwrap_or(0);
        self.current_fd = d_star;
        if d_star + d_star > self.config.max_delay_days {
            self.cap_reached = Some(Stage::Two);
            self.phase = Phase::Complete;
        } else {
            self.phase = Phase::Stage2Choice;
        }
    }

    pub fn finalize(&self, subject_id: impl Into<String>) -> Result<SessionRecord> {
        if !self.is_terminal() {
            return Err(Error::SessionNotFinished {
                phase: self.phase.name(),
            });
        }
        let (arm, wtp) = match self.phase {
            Phase::TerminatedSS => (Arm::SS, WtpObservation::none_refused()),
            _ => {
                let wtp = self.wtp.unwrap_or_else(WtpObservation::none_refused);
                (Arm::from_wtp(wtp.kind), wtp)
            }
        };
        Ok(SessionRecord {
            subject_id: subject_id.into(),
            gender: None,
            arm,
            d_star: self.d_star,
            fd_star: self.fd_star,
            wtp,
            cap_reached: self.cap_reached,
            config: self.config.clone(),
            transcript: self.transcript.clone(),
            created_at: None,
            completed_at: None,
        })
    }
}

fn choice(stage: Stage, menu: ChoiceProblem) -> Question {
    Question::Choice {
        stage,
        sooner: menu.dated(Pick::Sooner),
        later: menu.dated(Pick::Later),
        menu,
    }
}

/// The four outcome groups a finished session falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    SS,
    LLCostlyCommitment,
    LLCostlessCommitment,
    LLFlexibility,
}

impl Arm {
    pub const ALL: [Arm; 4] = [
        Arm::SS,
        Arm::LLCostlyCommitment,
        Arm::LLCostlessCommitment,
        Arm::LLFlexibility,
    ];

    pub fn from_wtp(kind: WtpKind) -> Arm {
        match kind {
            WtpKind::CommitmentPaid => Arm::LLCostlyCommitment,
            WtpKind::CostlessCommitment => Arm::LLCostlessCommitment,
            WtpKind::FlexibilityPaid | WtpKind::NoneRefused => Arm::LLFlexibility,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Arm::SS => "SS",
            Arm::LLCostlyCommitment => "LL_costly_commitment",
            Arm::LLCostlessCommitment => "LL_costless_commitment",
            Arm::LLFlexibility => "LL_flexibility",
        }
    }

    pub fn parse(s: &str) -> Option<Arm> {
        Arm::ALL.into_iter().find(|a| a.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    F,
    M,
}

/// One subject's finished session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub subject_id: String,
    pub gender: Option<Gender>,
    pub arm: Arm,
    pub d_star: Option<u32>,
    pub fd_star: Option<u32>,
    pub wtp: WtpObservation,
    pub cap_reached: Option<Stage>,
    pub config: SessionConfig,
    pub transcript: Vec<Exchange>,
    pub created_at: Option<DateTime<Utc>>,
    pub completed_at: Option<DateTime<Utc>>,
}

impl SessionRecord {
    /// Stage 1 hit the cap, so `d_star` is only a lower bound.
    pub fn stage1_censored(&self) -> bool {
        self.cap_reached == Some(Stage::One)
    }

    pub fn with_gender(mut self, gender: Option<Gender>) -> Self {
        self.gender = gender;
        self
    }

    pub fn with_timestamps(mut self, created: DateTime<Utc>, completed: DateTime<Utc>) -> Self {
        self.created_at = Some(created);
        self.completed_at = Some(completed);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.wtp.validate()?;
        match (self.arm, self.d_star) {
            (Arm::SS, Some(_)) => return Err(Error::invalid("d_star", "must be unset for arm SS")),
            (Arm::SS, None) => {
                if self.fd_star.is_some() {
                    return Err(Error::invalid("fd_star", "must be unset for arm SS"));
                }
            }
            (_, None) => return Err(Error::invalid("d_star", "must be set for LL arms")),
            (arm, Some(_)) => {
                if Arm::from_wtp(self.wtp.kind) != arm {
                    return Err(Error::invalid(
                        "wtp_kind",
                        format!(
                            "{} is inconsistent with arm {}",
                            self.wtp.kind.as_str(),
                            arm.as_str()
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LL: Answer = Answer::Choice(Pick::Later);
    const SS: Answer = Answer::Choice(Pick::Sooner);

    fn start() -> SessionState {
        SessionState::start(SessionConfig::default()).unwrap()
    }

    #[test]
    fn first_question_is_ss_now_vs_ll_tomorrow() {
        let q = start().current_question().unwrap();
        match q {
            Question::Choice {
                stage,
                sooner,
                later,
                ..
            } => {
                assert_eq!(stage, Stage::One);
                assert_eq!(
                    sooner,
                    RewardOption {
                        amount: 100.0,
                        delay_days: 0
                    }
                );
                assert_eq!(
                    later,
                    RewardOption {
                        amount: 110.0,
                        delay_days: 1
                    }
                );
            }
            other => panic!("unexpected {other:?}"),
        }
        let cfg = SessionConfig {
            initial_delay_days: 3,
            ..SessionConfig::default()
        };
        let q = SessionState::start(cfg)
            .unwrap()
            .current_question()
            .unwrap();
        assert!(matches!(q, Question::Choice { later, .. } if later.delay_days == 3));
    }

    #[test]
    fn rejects_invalid_config() {
        for cfg in [
            SessionConfig {
                ll_amount: 100.0,
                ..Default::default()
            },
            SessionConfig {
                ll_amount: 90.0,
                ..Default::default()
            },
            SessionConfig {
                step_days: 0,
                ..Default::default()
            },
            SessionConfig {
                initial_delay_days: 0,
                ..Default::default()
            },
            SessionConfig {
                epsilon_days: 1,
                ..Default::default()
            },
            SessionConfig {
                beta_assumed: 0.0,
                ..Default::default()
            },
            SessionConfig {
                max_delay_days: 0,
                ..Default::default()
            },
        ] {
            assert!(SessionState::start(cfg).is_err());
        }
    }

    #[test]
    fn staircase_switch_sets_d_star() {
        let mut s = start();
        for _ in 1..=6 {
            s.submit(LL).unwrap();
        }
        assert_eq!(s.current_d, 7);
        s.submit(SS).unwrap();
        assert_eq!(s.d_star, Some(6));
        assert_eq!(s.phase, Phase::CommitmentQuery);
        let delays: Vec<u32> = s
            .transcript
            .iter()
            .map(|e| match e.question {
                Question::Choice { later, .. } => later.delay_days,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(delays, vec![1, 2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn immediate_ss_terminates() {
        let mut s = start();
        s.submit(SS).unwrap();
        assert_eq!(s.phase, Phase::TerminatedSS);
        let rec = s.finalize("s1").unwrap();
        assert_eq!(rec.arm, Arm::SS);
        assert_eq!(rec.d_star, None);
        assert!(s.current_question().is_err());
        assert!(s.clone().submit(LL).is_err());
    }

    #[test]
    fn costly_commitment_flow() {
        let answers = [
            LL,
            LL,
            LL,
            LL,
            LL,
            LL,
            SS,
            Answer::YesNo(true),
            Answer::Amount(5000.0),
            LL,
        ];
        let s = SessionState::replay(SessionConfig::default(), answers).unwrap();
        assert_eq!(s.phase, Phase::Complete);
        let rec = s.finalize("x").unwrap();
        assert_eq!(rec.arm, Arm::LLCostlyCommitment);
        assert_eq!(rec.wtp.kind, WtpKind::CommitmentPaid);
        assert_eq!(rec.wtp.amount, 5000.0);
        assert_eq!(rec.fd_star, Some(6));
        rec.validate().unwrap();
    }

    #[test]
    fn costless_and_flexibility_flows() {
        let base = [LL, LL, SS];
        let run = |tail: &[Answer]| {
            let s =
                SessionState::replay(SessionConfig::default(), base.iter().chain(tail).copied())
                    .unwrap();
            s.finalize("x").unwrap()
        };
        let rec = run(&[Answer::YesNo(true), Answer::Amount(0.0), LL]);
        assert_eq!(rec.arm, Arm::LLCostlessCommitment);

        let rec = run(&[
            Answer::YesNo(false),
            Answer::YesNo(true),
            Answer::Amount(0.0),
            LL,
        ]);
        assert_eq!(rec.arm, Arm::LLFlexibility);
        assert_eq!(rec.wtp.kind, WtpKind::FlexibilityPaid);
        assert_eq!(rec.wtp.amount, 0.0);

        let rec = run(&[Answer::YesNo(false), Answer::YesNo(false), SS, SS, LL]);
        assert_eq!(rec.arm, Arm::LLFlexibility);
        assert_eq!(rec.wtp.kind, WtpKind::NoneRefused);
        assert_eq!(rec.d_star, Some(2));
        assert_eq!(rec.fd_star, Some(4));
    }

    #[test]
    fn stage2_menu_keeps_gap() {
        let s = SessionState::replay(
            SessionConfig::default(),
            [
                LL,
                LL,
                LL,
                SS,
                Answer::YesNo(false),
                Answer::YesNo(false),
                SS,
            ],
        )
        .unwrap();
        match s.current_question().unwrap() {
            Question::Choice {
                stage,
                sooner,
                later,
                ..
            } => {
                assert_eq!(stage, Stage::Two);
                assert_eq!(sooner.delay_days, 4);
                assert_eq!(later.delay_days, 7);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn commitment_question_wording() {
        let s = SessionState::replay(SessionConfig::default(), [LL, SS]).unwrap();
        match s.current_question().unwrap() {
            Question::YesNo {
                topic,
                prompt,
                menu,
            } => {
                assert_eq!(topic, Topic::Commitment);
                assert!(prompt.contains("from being tempted?"));
                assert_eq!(menu.front_end_delay, 1);
                assert_eq!(menu.ll.delay_days, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mismatched_and_negative_answers_leave_state_alone() {
        let mut s = SessionState::replay(
            SessionConfig::default(),
            [LL, SS, Answer::YesNo(false), Answer::YesNo(true)],
        )
        .unwrap();
        assert!(matches!(
            s.current_question().unwrap(),
            Question::Amount {
                topic: Topic::Flexibility,
                ..
            }
        ));
        let before = s.clone();
        assert!(matches!(s.submit(LL), Err(Error::AnswerMismatch { .. })));
        assert!(s.submit(Answer::Amount(-1.0)).is_err());
        assert!(s.submit(Answer::Amount(f64::NAN)).is_err());
        assert_eq!(s, before);
    }

    #[test]
    fn stage1_cap_completes_with_flag() {
        let cfg = SessionConfig {
            max_delay_days: 5,
            ..Default::default()
        };
        let s = SessionState::replay(cfg, [LL; 5]).unwrap();
        assert_eq!(s.phase, Phase::Complete);
        assert_eq!(s.cap_reached, Some(Stage::One));
        let rec = s.finalize("cap").unwrap();
        assert!(rec.stage1_censored());
        assert_eq!(rec.d_star, Some(5));
        rec.validate().unwrap();
    }

    #[test]
    fn stage2_cap_leaves_fd_star_unset() {
        let cfg = SessionConfig {
            max_delay_days: 10,
            ..Default::default()
        };
        let mut answers = vec![LL, LL, LL, SS, Answer::YesNo(false), Answer::YesNo(false)];
        answers.extend([SS; 5]);
        let s = SessionState::replay(cfg, answers).unwrap();
        assert_eq!(s.phase, Phase::Complete);
        assert_eq!(s.cap_reached, Some(Stage::Two));
        assert_eq!(s.fd_star, None);
    }

    #[test]
    fn finalize_requires_terminal() {
        assert!(matches!(
            start().finalize("a"),
            Err(Error::SessionNotFinished { .. })
        ));
    }

    #[test]
    fn record_validation() {
        let rec = SessionState::replay(SessionConfig::default(), [SS])
            .unwrap()
            .finalize("a")
            .unwrap();
        let mut bad = rec.clone();
        bad.d_star = Some(3);
        assert!(bad.validate().is_err());
        let mut bad = rec;
        bad.arm = Arm::LLFlexibility;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn answer_tokens_round_trip() {
        for a in [
            LL,
            SS,
            Answer::YesNo(true),
            Answer::YesNo(false),
            Answer::Amount(0.0),
            Answer::Amount(1234.5),
        ] {
            assert_eq!(Answer::parse_token(&a.token()).unwrap(), a);
        }
        assert!(Answer::parse_token("maybe").is_err());
    }

    fn answer_for(q: &Question, choice: bool, flag: bool, amount: f64) -> Answer {
        match q {
            Question::Choice { .. } => {
                Answer::Choice(if choice { Pick::Later } else { Pick::Sooner })
            }
            Question::YesNo { .. } => Answer::YesNo(flag),
            Question::Amount { .. } => Answer::Amount(amount),
        }
    }

    proptest! {
        #[test]
        fn terminates_within_bound(
            max in 2u32..60, step in 1u32..4,
            draws in proptest::collection::vec((proptest::bool::weighted(0.9), any::<bool>(), 0.0f64..1e4), 300),
        ) {
            let cfg = SessionConfig { max_delay_days: max, step_days: step, ..Default::default() };
            let bound = (max / step) as usize * 2 + 5;
            let mut s = SessionState::start(cfg.clone()).unwrap();
            let mut n = 0;
            for (c, f, a) in draws {
                if s.is_terminal() { break; }
                let q = s.current_question().unwrap();
                s.submit(answer_for(&q, c, f, a)).unwrap();
                n += 1;
            }
            prop_assert!(s.is_terminal());
            prop_assert!(n <= bound, "{} > {}", n, bound);

            // Replay reproduces the same record.
            let rec = s.finalize("p").unwrap();
            rec.validate().unwrap();
            let again = SessionState::replay(cfg, s.answers()).unwrap().finalize("p").unwrap();
            prop_assert_eq!(&rec, &again);

            // D* correctness: LL at every stage-1 delay up to D*, SS one step later.
            if let (Some(d_star), None) = (rec.d_star, rec.cap_reached) {
                for e in &rec.transcript {
                    if let Question::Choice { stage: Stage::One, later, .. } = e.question {
                        let expected = if later.delay_days <= d_star { Pick::Later } else { Pick::Sooner };
                        prop_assert_eq!(e.answer, Answer::Choice(expected));
                    }
                }
            }
        }
    }
}
