//! Awareness (p̂), willingness-to-pay bounds and welfare implication.
//!
//! Everything here inverts the indifference between committing to LL and
//! keeping the option to switch back to SS:
//!
//! ```text
//! committed − M = flexible        committed = U_B − V_f
//!                                 flexible  = p̂·U_A + (1 − p̂)·U_B
//! ```
//!
//! which gives `p̂ = (M + V_f) / (U_B − U_A)`. The same ratio is applied to a
//! flexibility payment `N`. `V_f` defaults to zero throughout.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::discounting::{
    check_beta, check_delta, check_probability, committed_utility, delta_max,
    expected_flexible_utility, non_negative, utility_at_t0, Pick, QhdParams, RewardOption,
};
use crate::elicitation::{Arm, SessionRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WtpKind {
    /// Took commitment and paid `M > 0` for it.
    CommitmentPaid,
    /// Kept flexibility and paid `N` for it.
    FlexibilityPaid,
    /// Took commitment but would not pay for it.
    CostlessCommitment,
    /// Declined both commitment and paid flexibility.
    NoneRefused,
}

impl WtpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            WtpKind::CommitmentPaid => "commitment_paid",
            WtpKind::FlexibilityPaid => "flexibility_paid",
            WtpKind::CostlessCommitment => "costless_commitment",
            WtpKind::NoneRefused => "none_refused",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "commitment_paid" => WtpKind::CommitmentPaid,
            "flexibility_paid" => WtpKind::FlexibilityPaid,
            "costless_commitment" => WtpKind::CostlessCommitment,
            "none_refused" => WtpKind::NoneRefused,
            _ => return None,
        })
    }
}

/// An elicited payment for commitment (M) or flexibility (N), together with
/// the assumed value of flexibility `v_f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WtpObservation {
    pub kind: WtpKind,
    pub amount: f64,
    #[serde(default)]
    pub v_f: f64,
}

impl WtpObservation {
    pub fn new(kind: WtpKind, amount: f64, v_f: f64) -> Result<Self> {
        let obs = Self { kind, amount, v_f };
        obs.validate()?;
        Ok(obs)
    }

    pub fn commitment(m: f64) -> Result<Self> {
        Self::new(WtpKind::CommitmentPaid, m, 0.0)
    }

    pub fn flexibility(n: f64) -> Result<Self> {
        Self::new(WtpKind::FlexibilityPaid, n, 0.0)
    }

    pub fn costless_commitment() -> Self {
        Self {
            kind: WtpKind::CostlessCommitment,
            amount: 0.0,
            v_f: 0.0,
        }
    }

    pub fn none_refused() -> Self {
        Self {
            kind: WtpKind::NoneRefused,
            amount: 0.0,
            v_f: 0.0,
        }
    }

    pub fn with_v_f(mut self, v_f: f64) -> Result<Self> {
        self.v_f = v_f;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        non_negative("wtp.amount", self.amount)?;
        non_negative("wtp.v_f", self.v_f)?;
        match self.kind {
            WtpKind::CostlessCommitment | WtpKind::NoneRefused if self.amount != 0.0 => {
                Err(Error::invalid(
                    "wtp.amount",
                    format!("must be 0 for {}", self.kind.as_str()),
                ))
            }
            WtpKind::CommitmentPaid if self.amount == 0.0 => Err(Error::invalid(
                "wtp.amount",
                "a zero commitment payment is a costless commitment",
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Awareness {
    FullyNaive,
    PartiallyNaive,
    Sophisticated,
}

/// Diagnostics attached to an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Flag {
    /// The discount factor used is not below one.
    DeltaAboveOne,
    PHatClampedToOne,
    DenominatorNonPositive,
    /// Paid more than the maximum the model allows.
    OverestimatedSelfControl,
    /// Costless commitment: only `p̂ > threshold` is known.
    PointEstimateUnavailable,
    /// The stage-2 staircase hit the delay cap, so FD* was never observed.
    MissingFrontEndDelay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub p_hat: Option<f64>,
    /// Strict lower bound on p̂ when only a threshold fact is available.
    pub p_hat_lower_bound: Option<f64>,
    pub delta_used: f64,
    pub wi: Option<f64>,
    pub classification: Option<Awareness>,
    pub flags: BTreeSet<Flag>,
}

impl EstimationResult {
    fn empty(delta_used: f64) -> Self {
        let mut flags = BTreeSet::new();
        if delta_used >= 1.0 {
            flags.insert(Flag::DeltaAboveOne);
        }
        Self {
            p_hat: None,
            p_hat_lower_bound: None,
            delta_used,
            wi: None,
            classification: None,
            flags,
        }
    }

    pub fn has(&self, flag: Flag) -> bool {
        self.flags.contains(&flag)
    }
}

/// `βδ²·U_LL − βδ·U_SS`: the most anyone with `p̂ ≤ 1` pays for commitment.
pub fn max_wtp(params: &QhdParams, u_ss: f64, u_ll: f64) -> Result<f64> {
    let gap = utility_at_t0(Pick::Later, params, u_ss, u_ll)
        - utility_at_t0(Pick::Sooner, params, u_ss, u_ll);
    if gap > 0.0 {
        Ok(gap)
    } else {
        Err(Error::DenominatorNonPositive { gap })
    }
}

/// Three-period awareness from a commitment payment `m`.
pub fn awareness_from_commitment(
    m: f64,
    v_f: f64,
    params: &QhdParams,
    u_ss: f64,
    u_ll: f64,
) -> Result<EstimationResult> {
    non_negative("m", m)?;
    three_period(m, v_f, params, u_ss, u_ll)
}

/// Three-period awareness from a flexibility payment `n`.
pub fn awareness_from_flexibility(
    n: f64,
    v_f: f64,
    params: &QhdParams,
    u_ss: f64,
    u_ll: f64,
) -> Result<EstimationResult> {
    non_negative("n", n)?;
    three_period(n, v_f, params, u_ss, u_ll)
}

fn three_period(
    paid: f64,
    v_f: f64,
    params: &QhdParams,
    u_ss: f64,
    u_ll: f64,
) -> Result<EstimationResult> {
    non_negative("v_f", v_f)?;
    let gap = max_wtp(params, u_ss, u_ll)?;
    let mut out = EstimationResult::empty(params.delta);
    let p_hat = clamp_into(&mut out, (paid + v_f) / gap);
    let committed = committed_utility(params, u_ll, v_f)?;
    let flexible = expected_flexible_utility(p_hat, params, u_ss, u_ll)?;
    out.wi = Some(welfare_implication(committed, flexible));
    Ok(out)
}

fn clamp_into(out: &mut EstimationResult, raw: f64) -> f64 {
    let p_hat = if raw > 1.0 {
        out.flags.insert(Flag::PHatClampedToOne);
        out.flags.insert(Flag::OverestimatedSelfControl);
        1.0
    } else {
        raw
    };
    out.p_hat = Some(p_hat);
    out.classification = classify(p_hat).ok();
    p_hat
}

/// Discounted SS and LL utilities of the front-end-delayed menu:
/// `U_SS = β·δ^(FD*+ε)·SS`, `U_LL = β·δ^(FD*+D*)·LL`.
pub fn staged_utilities(
    beta: f64,
    delta: f64,
    ss: RewardOption,
    ll: RewardOption,
    fd_star: u32,
    d_star: u32,
) -> (f64, f64) {
    let weight = |days: u32| beta * delta.powi(days as i32);
    (
        weight(fd_star + ss.delay_days) * ss.amount,
        weight(fd_star + d_star) * ll.amount,
    )
}

/// Awareness from a session's elicited quantities. `ss.delay_days` is the
/// sooner reward's own delay (ε); `ll.delay_days` is ignored in favour of
/// `d_star`.
pub fn awareness_staged(
    wtp: WtpObservation,
    beta: f64,
    delta: f64,
    ss: RewardOption,
    ll: RewardOption,
    fd_star: u32,
    d_star: u32,
) -> Result<EstimationResult> {
    wtp.validate()?;
    check_beta("beta", beta)?;
    check_delta("delta", delta)?;
    let (u_ss, u_ll) = staged_utilities(beta, delta, ss, ll, fd_star, d_star);
    let gap = u_ll - u_ss;
    if gap.is_nan() || gap <= 0.0 {
        return Err(Error::DenominatorNonPositive { gap });
    }
    let mut out = EstimationResult::empty(delta);
    let paid = match wtp.kind {
        WtpKind::CostlessCommitment => {
            out.flags.insert(Flag::PointEstimateUnavailable);
            out.p_hat_lower_bound = Some(threshold_awareness(wtp.v_f, u_ll, u_ss)?);
            return Ok(out);
        }
        WtpKind::CommitmentPaid | WtpKind::FlexibilityPaid => wtp.amount,
        WtpKind::NoneRefused => 0.0,
    };
    let p_hat = clamp_into(&mut out, (paid + wtp.v_f) / gap);
    let committed = u_ll - wtp.v_f;
    let flexible = p_hat * u_ss + (1.0 - p_hat) * u_ll;
    out.wi = Some(welfare_implication(committed, flexible));
    Ok(out)
}

/// `V_f / (U_LL − U_SS)`: the awareness above which costless commitment is
/// strictly preferred.
pub fn threshold_awareness(v_f: f64, u_ll_disc: f64, u_ss_disc: f64) -> Result<f64> {
    non_negative("v_f", v_f)?;
    let gap = u_ll_disc - u_ss_disc;
    if gap.is_nan() || gap <= 0.0 {
        return Err(Error::DenominatorNonPositive { gap });
    }
    Ok(v_f / gap)
}

/// Gain from being offered commitment: committed minus flexible utility.
pub fn welfare_implication(committed: f64, flexible: f64) -> f64 {
    committed - flexible
}

pub fn classify(p_hat: f64) -> Result<Awareness> {
    check_probability("p_hat", p_hat)?;
    Ok(if p_hat == 0.0 {
        Awareness::FullyNaive
    } else if p_hat == 1.0 {
        Awareness::Sophisticated
    } else {
        Awareness::PartiallyNaive
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotApplicable {
    /// The subject took the sooner reward outright.
    SoonerChosen,
    /// Stage 1 never switched before the delay cap, so D* is censored.
    CapReached,
}

/// Outcome of running the estimators on one finished session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RecordEstimate {
    NotApplicable { reason: NotApplicable },
    Estimated(EstimationResult),
}

impl RecordEstimate {
    pub fn result(&self) -> Option<&EstimationResult> {
        match self {
            RecordEstimate::Estimated(r) => Some(r),
            RecordEstimate::NotApplicable { .. } => None,
        }
    }

    pub fn p_hat(&self) -> Option<f64> {
        self.result().and_then(|r| r.p_hat)
    }
}

/// Estimates δ from D* and then p̂, WI from the staged utilities, assuming
/// present bias `beta`.
pub fn estimate_record(record: &SessionRecord, beta: f64) -> Result<RecordEstimate> {
    check_beta("beta", beta)?;
    if record.arm == Arm::SS {
        return Ok(RecordEstimate::NotApplicable {
            reason: NotApplicable::SoonerChosen,
        });
    }
    let d_star = match record.d_star {
        Some(d) if !record.stage1_censored() => d,
        _ => {
            return Ok(RecordEstimate::NotApplicable {
                reason: NotApplicable::CapReached,
            })
        }
    };
    let cfg = &record.config;
    let delta = delta_max(cfg.ss_amount, cfg.ll_amount, beta, d_star)?.delta;
    let Some(fd_star) = record.fd_star else {
        let mut out = EstimationResult::empty(delta);
        out.flags.insert(Flag::MissingFrontEndDelay);
        return Ok(RecordEstimate::Estimated(out));
    };
    let ss = RewardOption::new(cfg.ss_amount, cfg.epsilon_days)?;
    let ll = RewardOption::new(cfg.ll_amount, d_star)?;
    match awareness_staged(record.wtp, beta, delta, ss, ll, fd_star, d_star) {
        Ok(r) => Ok(RecordEstimate::Estimated(r)),
        Err(Error::DenominatorNonPositive { .. }) => {
            let mut out = EstimationResult::empty(delta);
            out.flags.insert(Flag::DenominatorNonPositive);
            Ok(RecordEstimate::Estimated(out))
        }
        Err(e) => Err(e),
    }
}
