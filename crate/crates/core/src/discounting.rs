//! Quasi-hyperbolic (β, δ) utility evaluation.
//!
//! Time is measured in whole days. An outcome `d` days away is worth
//! `β·δ^d` of its face value, except an immediate outcome (`d = 0`), which is
//! undiscounted. Instantaneous utility is risk neutral: a reward of `x`
//! currency units yields `x` utility units.
//!
//! The three-period helpers (`utility_at_t0`, `utility_at_t1`, ...) follow the
//! textbook menu where SS pays one period after the decision and LL two.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which side of a two-option intertemporal menu.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pick {
    /// Smaller-sooner (option A).
    Sooner,
    /// Larger-later (option B).
    Later,
}

impl Pick {
    pub fn flipped(self) -> Pick {
        match self {
            Pick::Sooner => Pick::Later,
            Pick::Later => Pick::Sooner,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Pick::Sooner => "SS",
            Pick::Later => "LL",
        }
    }
}

/// A dated reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardOption {
    pub amount: f64,
    pub delay_days: u32,
}

impl RewardOption {
    pub fn new(amount: f64, delay_days: u32) -> Result<Self> {
        if !(amount.is_finite() && amount > 0.0) {
            return Err(Error::invalid(
                "amount",
                format!("must be finite and > 0, got {amount}"),
            ));
        }
        Ok(Self { amount, delay_days })
    }

    pub fn delayed_by(self, days: u32) -> Self {
        Self {
            amount: self.amount,
            delay_days: self.delay_days + days,
        }
    }
}

/// Present bias `beta` and per-day discount factor `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QhdParams {
    pub beta: f64,
    pub delta: f64,
}

impl QhdParams {
    /// `0 < beta <= 1` and `delta > 0`. A `delta` at or above one is accepted
    /// (estimates from real data land there) but [`QhdParams::delta_not_below_one`]
    /// reports it.
    pub fn new(beta: f64, delta: f64) -> Result<Self> {
        check_beta("beta", beta)?;
        check_delta("delta", delta)?;
        Ok(Self { beta, delta })
    }

    pub fn delta_not_below_one(&self) -> bool {
        self.delta >= 1.0
    }

    pub fn is_time_consistent(&self) -> bool {
        self.beta == 1.0
    }

    /// Weight applied today to an outcome `delay_days` away.
    pub fn discount(&self, delay_days: u32) -> f64 {
        if delay_days == 0 {
            1.0
        } else {
            self.beta * self.delta.powi(delay_days as i32)
        }
    }

    /// Present value of `option` as seen `extra_days` before its nominal delay
    /// is measured from.
    pub fn present_value(&self, option: RewardOption, extra_days: u32) -> f64 {
        self.discount(option.delay_days + extra_days) * option.amount
    }
}

pub(crate) fn check_beta(field: &str, beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid(
            field,
            format!("must lie in (0, 1], got {beta}"),
        ));
    }
    Ok(())
}

pub(crate) fn check_delta(field: &str, delta: f64) -> Result<()> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::invalid(
            field,
            format!("must be finite and > 0, got {delta}"),
        ));
    }
    Ok(())
}

pub(crate) fn check_probability(field: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(
            field,
            format!("must lie in [0, 1], got {p}"),
        ));
    }
    Ok(())
}

/// The agent's model of itself: perceived present bias and the probability it
/// assigns to reversing a plan once the sooner reward is at hand.
///
/// The two fields are kept independent; neither is derived from the other.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beliefs {
    pub beta_hat: f64,
    pub p_hat: f64,
}

impl Beliefs {
    pub fn new(beta_hat: f64, p_hat: f64) -> Result<Self> {
        check_beta("beta_hat", beta_hat)?;
        check_probability("p_hat", p_hat)?;
        Ok(Self { beta_hat, p_hat })
    }

    /// Checks the partially-naive band `beta <= beta_hat <= 1`.
    pub fn check_against(&self, params: &QhdParams) -> Result<()> {
        if self.beta_hat < params.beta {
            return Err(Error::invalid(
                "beta_hat",
                format!("must be >= beta ({}), got {}", params.beta, self.beta_hat),
            ));
        }
        Ok(())
    }
}

/// SS versus LL, both pushed back by a common front-end delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChoiceProblem {
    pub ss: RewardOption,
    pub ll: RewardOption,
    pub front_end_delay: u32,
}

impl ChoiceProblem {
    pub fn new(ss: RewardOption, ll: RewardOption, front_end_delay: u32) -> Result<Self> {
        if ll.amount <= ss.amount {
            return Err(Error::invalid("ll.amount", "must exceed ss.amount"));
        }
        if ll.delay_days <= ss.delay_days {
            return Err(Error::invalid("ll.delay_days", "must exceed ss.delay_days"));
        }
        Ok(Self {
            ss,
            ll,
            front_end_delay,
        })
    }

    /// The option with its delay measured from now.
    pub fn dated(&self, pick: Pick) -> RewardOption {
        match pick {
            Pick::Sooner => self.ss.delayed_by(self.front_end_delay),
            Pick::Later => self.ll.delayed_by(self.front_end_delay),
        }
    }
}

/// Utility of option A (SS) or B (LL) evaluated at the decision date.
pub fn utility_at_t0(pick: Pick, params: &QhdParams, u_ss: f64, u_ll: f64) -> f64 {
    match pick {
        Pick::Sooner => params.beta * params.delta * u_ss,
        Pick::Later => params.beta * params.delta * params.delta * u_ll,
    }
}

/// Utility of option A or B evaluated when SS has become immediate.
pub fn utility_at_t1(pick: Pick, params: &QhdParams, u_ss: f64, u_ll: f64) -> f64 {
    match pick {
        Pick::Sooner => u_ss,
        Pick::Later => params.beta * params.delta * u_ll,
    }
}

/// Open interval `(lower, upper)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower < x && x < self.upper
    }

    pub fn is_empty(&self) -> bool {
        self.lower >= self.upper
    }
}

/// Range of LL utilities for which the agent picks LL at t0 and SS at t1:
/// `(u_ss / δ, u_ss / (δβ))`.
pub fn reversal_window(u_ss: f64, params: &QhdParams) -> Result<Interval> {
    check_beta("beta", params.beta)?;
    check_delta("delta", params.delta)?;
    Ok(Interval {
        lower: u_ss / params.delta,
        upper: u_ss / (params.delta * params.beta),
    })
}

pub fn predicts_reversal(u_ss: f64, u_ll: f64, params: &QhdParams) -> bool {
    match reversal_window(u_ss, params) {
        Ok(window) => window.contains(u_ll),
        Err(_) => false,
    }
}

/// Discount factor estimate with its out-of-range diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountEstimate {
    pub delta: f64,
    pub not_below_one: bool,
}

/// Largest per-day δ consistent with indifference at `d_star` days:
/// the root of `ll·β·δ^d_star = ss`.
pub fn delta_max(
    ss_amount: f64,
    ll_amount: f64,
    beta: f64,
    d_star: u32,
) -> Result<DiscountEstimate> {
    positive("ss_amount", ss_amount)?;
    positive("ll_amount", ll_amount)?;
    check_beta("beta", beta)?;
    if d_star == 0 {
        return Err(Error::invalid("d_star", "must be at least one day"));
    }
    let delta = (ss_amount / (ll_amount * beta)).powf(1.0 / f64::from(d_star));
    Ok(DiscountEstimate {
        delta,
        not_below_one: delta >= 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibleBounds {
    pub beta: Interval,
    pub delta: Interval,
}

/// Bounds on (β, δ) implied by a subject who shows a reversal between the
/// immediate and front-end-delayed menus: `β ∈ (ss/ll, 1)` and
/// `δ ∈ ((ss/ll)^(1/d_star), 1)`.
pub fn feasible_bounds(ss_amount: f64, ll_amount: f64, d_star: u32) -> Result<FeasibleBounds> {
    positive("ss_amount", ss_amount)?;
    if !ll_amount.is_finite() || ll_amount <= ss_amount {
        return Err(Error::invalid("ll_amount", "must exceed ss_amount"));
    }
    if d_star == 0 {
        return Err(Error::invalid("d_star", "must be at least one day"));
    }
    let ratio = ss_amount / ll_amount;
    Ok(FeasibleBounds {
        beta: Interval {
            lower: ratio,
            upper: 1.0,
        },
        delta: Interval {
            lower: ratio.powf(1.0 / f64::from(d_star)),
            upper: 1.0,
        },
    })
}

/// `p̂·U_A(t0) + (1 − p̂)·U_B(t0)`: value of choosing LL while keeping the
/// option to switch.
pub fn expected_flexible_utility(
    p_hat: f64,
    params: &QhdParams,
    u_ss: f64,
    u_ll: f64,
) -> Result<f64> {
    check_probability("p_hat", p_hat)?;
    let a = utility_at_t0(Pick::Sooner, params, u_ss, u_ll);
    let b = utility_at_t0(Pick::Later, params, u_ss, u_ll);
    Ok(p_hat * a + (1.0 - p_hat) * b)
}

/// `βδ²·U_LL − V_f`: value of locking in LL, net of the lost flexibility.
pub fn committed_utility(params: &QhdParams, u_ll: f64, v_f: f64) -> Result<f64> {
    non_negative("v_f", v_f)?;
    Ok(utility_at_t0(Pick::Later, params, 0.0, u_ll) - v_f)
}

/// Total utility of `flow` as perceived at period `t` by an agent who believes
/// its present bias is `beta_hat`:
/// `δ^t·u_t + β̂·Σ_{τ>t} δ^τ·u_τ`.
pub fn perceived_total_utility(flow: &[f64], t: usize, delta: f64, beta_hat: f64) -> Result<f64> {
    if flow.is_empty() {
        return Err(Error::Empty("flow"));
    }
    if t >= flow.len() {
        return Err(Error::invalid(
            "t",
            format!("period {t} is past the end of a {}-period flow", flow.len()),
        ));
    }
    check_delta("delta", delta)?;
    check_beta("beta_hat", beta_hat)?;
    let weight = |tau: usize| delta.powi(tau as i32);
    let future: f64 = flow
        .iter()
        .enumerate()
        .skip(t + 1)
        .map(|(tau, u)| weight(tau) * u)
        .sum();
    Ok(weight(t) * flow[t] + beta_hat * future)
}

fn positive(field: &str, x: f64) -> Result<()> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::invalid(
            field,
            format!("must be finite and > 0, got {x}"),
        ));
    }
    Ok(())
}

pub(crate) fn non_negative(field: &str, x: f64) -> Result<()> {
    if !(x.is_finite() && x >= 0.0) {
        return Err(Error::invalid(
            field,
            format!("must be finite and >= 0, got {x}"),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(beta: f64, delta: f64) -> QhdParams {
        QhdParams::new(beta, delta).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn t0_utilities() {
        assert_eq!(utility_at_t0(Pick::Sooner, &p(1.0, 1.0), 100.0, 1.0), 100.0);
        assert!(close(
            utility_at_t0(Pick::Later, &p(0.5, 0.9), 1.0, 100.0),
            40.5,
            1e-9
        ));
        assert!(close(
            utility_at_t0(Pick::Sooner, &p(0.88, 0.9), 2000.0, 1.0),
            1584.0,
            1e-9
        ));
    }

    #[test]
    fn t1_utilities() {
        assert_eq!(utility_at_t1(Pick::Sooner, &p(0.3, 0.7), 100.0, 5.0), 100.0);
        assert!(close(
            utility_at_t1(Pick::Later, &p(0.5, 0.9), 1.0, 300.0),
            135.0,
            1e-9
        ));
        assert_eq!(utility_at_t1(Pick::Later, &p(1.0, 1.0), 1.0, 110.0), 110.0);
    }

    #[test]
    fn window_examples() {
        let w = reversal_window(100.0, &p(0.5, 0.9)).unwrap();
        assert!(close(w.lower, 111.111_111_111, 1e-9));
        assert!(close(w.upper, 222.222_222_222, 1e-9));

        let w = reversal_window(100.0, &p(1.0, 0.9)).unwrap();
        assert_eq!(w.lower, w.upper);
        assert!(w.is_empty());

        let w = reversal_window(100.0, &p(0.88, 1.0)).unwrap();
        assert_eq!(w.lower, 100.0);
        assert!(close(w.upper, 113.636_363_636, 1e-9));
    }

    #[test]
    fn window_rejects_bad_params() {
        let bad = QhdParams {
            beta: 0.0,
            delta: 0.9,
        };
        assert!(reversal_window(100.0, &bad).is_err());
        let bad = QhdParams {
            beta: 0.5,
            delta: -0.1,
        };
        assert!(reversal_window(100.0, &bad).is_err());
    }

    #[test]
    fn reversal_examples() {
        assert!(predicts_reversal(100.0, 150.0, &p(0.5, 0.9)));
        assert!(!predicts_reversal(100.0, 110.0, &p(1.0, 1.0)));
        assert!(!predicts_reversal(100.0, 300.0, &p(0.5, 0.9)));
    }

    #[test]
    fn delta_max_examples() {
        let d = delta_max(100.0, 110.0, 0.88, 14).unwrap();
        assert!((d.delta - 1.0023).abs() < 5e-5, "{}", d.delta);
        assert!(d.not_below_one);

        let d = delta_max(100.0, 110.0, 0.95, 14).unwrap();
        assert!((d.delta - 0.9969).abs() < 5e-5, "{}", d.delta);
        assert!(!d.not_below_one);

        for days in [1, 7, 90] {
            assert_eq!(delta_max(100.0, 100.0, 1.0, days).unwrap().delta, 1.0);
        }
        assert!(delta_max(100.0, 110.0, 0.9, 0).is_err());
    }

    #[test]
    fn feasible_bounds_examples() {
        let b = feasible_bounds(100.0, 110.0, 14).unwrap();
        assert!(close(b.beta.lower, 0.909_090_909_09, 1e-9));
        assert_eq!(b.beta.upper, 1.0);
        assert!(
            (b.delta.lower - 0.993_215).abs() < 1e-6,
            "{}",
            b.delta.lower
        );

        let b = feasible_bounds(100.0, 110.0, 1).unwrap();
        assert_eq!(b.delta.lower, b.beta.lower);

        let b = feasible_bounds(100.0, 200.0, 10).unwrap();
        assert_eq!(b.beta.lower, 0.5);
        assert!((b.delta.lower - 0.93303).abs() < 5e-6);

        assert!(feasible_bounds(110.0, 100.0, 3).is_err());
        assert!(feasible_bounds(100.0, 100.0, 3).is_err());
    }

    #[test]
    fn flexible_utility_examples() {
        let q = p(0.88, 0.9);
        let b0 = utility_at_t0(Pick::Later, &q, 2000.0, 2500.0);
        let a0 = utility_at_t0(Pick::Sooner, &q, 2000.0, 2500.0);
        assert_eq!(
            expected_flexible_utility(0.0, &q, 2000.0, 2500.0).unwrap(),
            b0
        );
        assert_eq!(
            expected_flexible_utility(1.0, &q, 2000.0, 2500.0).unwrap(),
            a0
        );
        let mid = expected_flexible_utility(0.5, &q, 2000.0, 2500.0).unwrap();
        assert!(close(mid, 1683.0, 1e-9));
        assert!(expected_flexible_utility(1.2, &q, 2000.0, 2500.0).is_err());
        assert!(expected_flexible_utility(-0.01, &q, 2000.0, 2500.0).is_err());
    }

    #[test]
    fn committed_utility_examples() {
        let q = p(0.88, 0.9);
        assert!(close(
            committed_utility(&q, 2500.0, 0.0).unwrap(),
            1782.0,
            1e-9
        ));
        let full = utility_at_t0(Pick::Later, &q, 0.0, 2500.0);
        assert_eq!(committed_utility(&q, 2500.0, full).unwrap(), 0.0);
        assert!(close(
            committed_utility(&p(1.0, 1.0), 110.0, 100.0).unwrap(),
            10.0,
            1e-9
        ));
        assert!(committed_utility(&q, 2500.0, -1.0).is_err());
    }

    #[test]
    fn perceived_utility_examples() {
        assert_eq!(
            perceived_total_utility(&[10.0, 0.0, 0.0], 0, 0.3, 0.4).unwrap(),
            10.0
        );
        assert!(close(
            perceived_total_utility(&[0.0, 10.0, 10.0], 0, 0.5, 0.5).unwrap(),
            3.75,
            1e-12
        ));
        assert!(close(
            perceived_total_utility(&[1.0, 1.0], 0, 0.9, 1.0).unwrap(),
            1.9,
            1e-12
        ));
        assert!(perceived_total_utility(&[1.0, 1.0], 2, 0.9, 1.0).is_err());
        assert!(perceived_total_utility(&[], 0, 0.9, 1.0).is_err());
    }

    #[test]
    fn model_constructors_validate() {
        assert!(QhdParams::new(0.0, 0.9).is_err());
        assert!(QhdParams::new(1.1, 0.9).is_err());
        assert!(QhdParams::new(0.9, 0.0).is_err());
        assert!(QhdParams::new(0.88, 1.002).unwrap().delta_not_below_one());
        assert!(RewardOption::new(0.0, 1).is_err());
        assert!(Beliefs::new(0.9, 1.5).is_err());
        let b = Beliefs::new(0.8, 0.5).unwrap();
        assert!(b.check_against(&p(0.9, 0.9)).is_err());
        assert!(b.check_against(&p(0.7, 0.9)).is_ok());
        let ss = RewardOption::new(100.0, 0).unwrap();
        let ll = RewardOption::new(110.0, 5).unwrap();
        assert!(ChoiceProblem::new(ll, ss, 0).is_err());
        assert!(ChoiceProblem::new(ss, RewardOption::new(110.0, 0).unwrap(), 0).is_err());
        let menu = ChoiceProblem::new(ss, ll, 7).unwrap();
        assert_eq!(menu.dated(Pick::Later).delay_days, 12);
    }

    proptest! {
        #[test]
        fn reversal_three_ways(
            beta in 0.01f64..0.999,
            delta in 0.01f64..0.999,
            u_ss in 1.0f64..1e4,
            ratio in 0.5f64..20.0,
        ) {
            let q = p(beta, delta);
            let u_ll = u_ss * ratio;
            let by_window = reversal_window(u_ss, &q).unwrap().contains(u_ll);
            let by_utilities = utility_at_t0(Pick::Later, &q, u_ss, u_ll) > utility_at_t0(Pick::Sooner, &q, u_ss, u_ll)
                && utility_at_t1(Pick::Sooner, &q, u_ss, u_ll) > utility_at_t1(Pick::Later, &q, u_ss, u_ll);
            prop_assert_eq!(predicts_reversal(u_ss, u_ll, &q), by_window);
            prop_assert_eq!(by_window, by_utilities);
        }

        #[test]
        fn time_consistent_never_reverses(delta in 0.01f64..1.5, u_ss in 1.0f64..1e4, u_ll in 1.0f64..1e5) {
            let q = p(1.0, delta);
            prop_assert!(reversal_window(u_ss, &q).unwrap().is_empty());
            prop_assert!(!predicts_reversal(u_ss, u_ll, &q));
        }

        #[test]
        fn delta_max_is_the_root(ss in 1.0f64..1e6, gap in 0.01f64..2.0, beta in 0.05f64..1.0, d in 1u32..400) {
            let ll = ss * (1.0 + gap);
            let est = delta_max(ss, ll, beta, d).unwrap();
            let back = ll * beta * est.delta.powi(d as i32);
            prop_assert!((back - ss).abs() <= 1e-9 * ss);
        }

        #[test]
        fn flexible_utility_non_increasing_in_p(
            beta in 0.05f64..1.0, delta in 0.05f64..0.999, u_ss in 1.0f64..1e4,
            extra in 0.001f64..5.0, p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0,
        ) {
            let q = p(beta, delta);
            // LL preferred ex ante: βδ²u_ll > βδu_ss
            let u_ll = u_ss / delta * (1.0 + extra);
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            let f_lo = expected_flexible_utility(lo, &q, u_ss, u_ll).unwrap();
            let f_hi = expected_flexible_utility(hi, &q, u_ss, u_ll).unwrap();
            prop_assert!(f_hi <= f_lo + 1e-9 * f_lo.abs());
        }

        #[test]
        fn perceived_utility_exponential_when_unbiased(
            flow in proptest::collection::vec(-100.0f64..100.0, 1..12),
            delta in 0.1f64..1.0,
        ) {
            let direct: f64 = flow.iter().enumerate().map(|(tau, u)| delta.powi(tau as i32) * u).sum();
            let got = perceived_total_utility(&flow, 0, delta, 1.0).unwrap();
            prop_assert!((got - direct).abs() <= 1e-9 * direct.abs().max(1.0));
        }

        #[test]
        fn utilities_monotone(
            beta in 0.05f64..1.0, delta in 0.05f64..0.999,
            amount in 1.0f64..1e4, bump in 0.01f64..100.0, d in 1u32..60,
        ) {
            let q = p(beta, delta);
            let base = RewardOption::new(amount, d).unwrap();
            let richer = RewardOption::new(amount + bump, d).unwrap();
            prop_assert!(q.present_value(richer, 0) > q.present_value(base, 0));
            prop_assert!(q.present_value(base, 1) < q.present_value(base, 0));
            prop_assert!(utility_at_t0(Pick::Later, &q, 1.0, amount + bump) > utility_at_t0(Pick::Later, &q, 1.0, amount));
            prop_assert!(utility_at_t1(Pick::Later, &q, 1.0, amount + bump) > utility_at_t1(Pick::Later, &q, 1.0, amount));
        }
    }
}
