//! Operating characteristics of the Normal-outcome rules.
//!
//! Rejection probabilities are computed three ways: closed form for the Bayes
//! decision, one-dimensional quadrature over ȳ_C for any rule with a
//! pointwise critical value, and Monte Carlo on the sufficient statistics.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::{critical_z, posterior_delta, NormalDesign, NormalPrior, TwoArmNormalData};
use crate::numerics::{find_root, integrate_with_breaks, phi, phi_inv, RngStream, Tolerance};
use crate::rule::{DecisionRule, Knob, RuleContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    ClosedForm,
    Quadrature,
    MonteCarlo,
    Enumeration,
}

impl Estimator {
    pub fn as_str(&self) -> &'static str {
        match self {
            Estimator::ClosedForm => "closed_form",
            Estimator::Quadrature => "quadrature",
            Estimator::MonteCarlo => "monte_carlo",
            Estimator::Enumeration => "enumeration",
        }
    }
}

/// One rejection probability: a type I error rate when δ ≤ δ0, power otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OCPoint {
    pub theta_c: f64,
    pub delta: f64,
    pub value: f64,
    pub estimator: Estimator,
    pub mc_se: f64,
    pub reps: u64,
    pub stream: Option<RngStream>,
}

impl OCPoint {
    pub fn exact(theta_c: f64, delta: f64, value: f64, estimator: Estimator) -> Self {
        OCPoint { theta_c, delta, value, estimator, mc_se: 0.0, reps: 0, stream: None }
    }
}

/// Independent Normal priors on both arms. A flat treatment prior is the
/// hybrid-control case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralTwoArmPrior {
    pub control: NormalPrior,
    pub treatment: NormalPrior,
}

impl GeneralTwoArmPrior {
    pub fn hybrid(control: NormalPrior) -> Self {
        GeneralTwoArmPrior { control, treatment: NormalPrior::flat(0.0) }
    }

    pub fn is_hybrid(&self) -> bool {
        self.treatment.is_flat()
    }

    fn ratios(&self, design: &NormalDesign) -> (f64, f64) {
        let a_c = self.control.variance_ratio(design);
        let a_t = if self.treatment.is_flat() {
            0.0
        } else {
            design.var_t() / (self.treatment.sd_c * self.treatment.sd_c)
        };
        (a_c, a_t)
    }

    /// Argument x of β = 1 − Φ(x) for the Bayes decision.
    fn power_argument(&self, design: &NormalDesign, theta_c: f64, theta_t: f64) -> f64 {
        let (a_c, a_t) = self.ratios(design);
        let (sc, st) = (1.0 / (1.0 + a_c), 1.0 / (1.0 + a_t));
        let post_sd = (design.var_t() * st + design.var_c() * sc).sqrt();
        let denom = (design.var_t() * st * st + design.var_c() * sc * sc).sqrt();
        let shift = -self.treatment.mu_c * a_t * st + self.control.mu_c * a_c * sc;
        let z_gamma = critical_z(design.gamma);
        (design.delta0 + theta_c * sc - theta_t * st + shift + z_gamma * post_sd) / denom
    }
}

/// Rejection probability of the Bayes decision under independent Normal
/// priors on both arms.
pub fn power_bd_closed(design: &NormalDesign, priors: &GeneralTwoArmPrior, theta_c: f64, theta_t: f64) -> f64 {
    phi(-priors.power_argument(design, theta_c, theta_t))
}

/// Rejection probability of the level-κ z-test.
pub fn power_fd_closed(design: &NormalDesign, theta_c: f64, theta_t: f64) -> f64 {
    phi((theta_t - theta_c - design.delta0) / design.se_diff() - critical_z(design.kappa))
}

/// P(Z ≥ z_crit | ȳ_C) when θ_T is the true treatment mean.
pub fn conditional_reject_prob(design: &NormalDesign, ybar_c: f64, z_crit: f64, theta_t: f64) -> f64 {
    if z_crit.is_infinite() {
        return if z_crit > 0.0 { 0.0 } else { 1.0 };
    }
    let cut = ybar_c + design.delta0 + z_crit * design.se_diff();
    phi(-(cut - theta_t) / design.var_t().sqrt())
}

fn quad_tol() -> Tolerance {
    Tolerance { abs_tol: 1e-10, rel_tol: 0.0, max_iter: 4000 }
}

/// Rejection probability of `rule` at (θ_C, θ_T), integrating the
/// conditional rejection probability over the sampling law of ȳ_C.
pub fn power_rule_quadrature(ctx: &RuleContext, rule: &DecisionRule, theta_c: f64, theta_t: f64) -> Result<f64> {
    let d = &ctx.design;
    let sd = d.var_c().sqrt();
    let (lo, hi) = (theta_c - 8.0 * sd, theta_c + 8.0 * sd);
    let mut err = None;
    let integrand = |y: f64| match ctx.critical_z(rule, y) {
        Ok(z) => conditional_reject_prob(d, y, z, theta_t) * crate::numerics::std_normal_pdf((y - theta_c) / sd) / sd,
        Err(e) => {
            err.get_or_insert(e);
            0.0
        }
    };
    let mut breaks = ctx.breakpoints(rule);
    breaks.push(theta_c);
    let v = integrate_with_breaks(integrand, lo, hi, &breaks, quad_tol())?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(v.clamp(0.0, 1.0))
}

/// Monte Carlo rejection rate from `reps` simulated trials, using the
/// rule's native decision.
pub fn power_rule_mc(
    ctx: &RuleContext,
    rule: &DecisionRule,
    theta_c: f64,
    theta_t: f64,
    reps: u64,
    stream: RngStream,
) -> Result<OCPoint> {
    if reps == 0 {
        return Err(Error::domain("reps must be >= 1"));
    }
    let d = &ctx.design;
    let (sd_c, sd_t) = (d.var_c().sqrt(), d.var_t().sqrt());
    let mut rng = stream.rng();
    let mut hits = 0u64;
    for _ in 0..reps {
        let zc: f64 = rng.sample(StandardNormal);
        let zt: f64 = rng.sample(StandardNormal);
        let data = TwoArmNormalData { ybar_c: theta_c + sd_c * zc, ybar_t: theta_t + sd_t * zt };
        if ctx.decide_native(rule, &data)? {
            hits += 1;
        }
    }
    let p = hits as f64 / reps as f64;
    Ok(OCPoint {
        theta_c,
        delta: theta_t - theta_c,
        value: p,
        estimator: Estimator::MonteCarlo,
        mc_se: (p * (1.0 - p) / reps as f64).sqrt(),
        reps,
        stream: Some(stream),
    })
}

/// `points` equispaced values over [lo, hi].
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        n => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Type I error rate of `rule` at every θ_C in `grid` (θ_T = θ_C + δ0).
pub fn tie_curve(ctx: &RuleContext, rule: &DecisionRule, grid: &[f64]) -> Result<Vec<f64>> {
    grid.iter()
        .map(|&t| power_rule_quadrature(ctx, rule, t, t + ctx.design.delta0))
        .collect()
}

/// (minimum, maximum) type I error rate over `grid`.
pub fn tie_envelope(ctx: &RuleContext, rule: &DecisionRule, grid: &[f64]) -> Result<(f64, f64)> {
    let curve = tie_curve(ctx, rule, grid)?;
    Ok(curve.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Recalibration {
    Tuned {
        rule: DecisionRule,
        knob: Knob,
        value: f64,
        max_tie: f64,
    },
    /// The target lies outside [`lowest`, `highest`], the range of maximum
    /// type I error the knob can reach.
    Unattainable {
        knob: Knob,
        target: f64,
        lowest: f64,
        highest: f64,
    },
}

/// Knob search interval. Levels are searched on the log scale.
const KNOB_FLOOR: f64 = 1e-15;
const KNOB_CEIL: f64 = 0.5;

/// Tunes the rule's knob (κ for FD, γ for the Bayes-type rules, α^UP for the
/// compromise rules) so that the maximum quadrature type I error over an
/// equispaced θ_C grid equals `target`.
pub fn recalibrate_max_tie(
    ctx: &RuleContext,
    rule: &DecisionRule,
    target: f64,
    conflict_range: (f64, f64),
    points: usize,
) -> Result<Recalibration> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::domain(format!("target must lie in (0, 1), got {target}")));
    }
    if points < 2 {
        return Err(Error::domain("need at least 2 grid points"));
    }
    let grid: Vec<f64> = linspace(conflict_range.0, conflict_range.1, points)
        .into_iter()
        .map(|c| ctx.prior.mu_c + c)
        .collect();
    let knob = rule.knob();
    let floor = match rule {
        DecisionRule::Cdc { cfg } | DecisionRule::Cdd { cfg } => (cfg.alpha_low * (1.0 + 1e-9)).max(KNOB_FLOOR),
        _ => KNOB_FLOOR,
    };
    let max_tie_at = |value: f64| -> Result<f64> {
        let (r, design) = rule.with_knob(&ctx.design, value);
        let c = RuleContext { design, prior: ctx.prior };
        Ok(tie_envelope(&c, &r, &grid)?.1)
    };
    let lowest = max_tie_at(floor)?;
    let highest = max_tie_at(KNOB_CEIL)?;
    if target < lowest || target > highest {
        return Ok(Recalibration::Unattainable { knob, target, lowest, highest });
    }
    let mut err = None;
    let f = |u: f64| match max_tie_at(u.exp()) {
        Ok(v) => v - target,
        Err(e) => {
            err.get_or_insert(e);
            f64::NAN
        }
    };
    let u = find_root(f, floor.ln(), KNOB_CEIL.ln(), Tolerance::absolute(1e-9));
    if let Some(e) = err {
        return Err(e);
    }
    let value = u?.exp();
    let (tuned, design) = rule.with_knob(&ctx.design, value);
    let max_tie = tie_envelope(&RuleContext { design, prior: ctx.prior }, &tuned, &grid)?.1;
    Ok(Recalibration::Tuned { rule: tuned, knob, value, max_tie })
}

/// Rejection probability averaged over a sampling prior for θ_C, with
/// θ_T = θ_C + δ.
///
/// Integrating θ_C out analytically leaves one integral over the marginal
/// law of ȳ_C.
pub fn average_oc(ctx: &RuleContext, rule: &DecisionRule, sampling: &NormalPrior, delta: f64) -> Result<f64> {
    if sampling.is_flat() {
        return Err(Error::domain("sampling prior must be proper"));
    }
    let d = &ctx.design;
    let tau2 = sampling.sd_c * sampling.sd_c;
    let marg_sd = (d.var_c() + tau2).sqrt();
    let post_var = 1.0 / (1.0 / tau2 + 1.0 / d.var_c());
    let pred_sd = (d.var_t() + post_var).sqrt();
    let se = d.se_diff();
    let mut err = None;
    let integrand = |y: f64| {
        let z = match ctx.critical_z(rule, y) {
            Ok(z) => z,
            Err(e) => {
                err.get_or_insert(e);
                return 0.0;
            }
        };
        let dens = crate::numerics::std_normal_pdf((y - sampling.mu_c) / marg_sd) / marg_sd;
        if z.is_infinite() {
            return if z < 0.0 { dens } else { 0.0 };
        }
        let post_mean = post_var * (sampling.mu_c / tau2 + y / d.var_c());
        let cut = y + d.delta0 + z * se;
        dens * phi(-(cut - post_mean - delta) / pred_sd)
    };
    let mut breaks = ctx.breakpoints(rule);
    breaks.push(sampling.mu_c);
    let (lo, hi) = (sampling.mu_c - 8.0 * marg_sd, sampling.mu_c + 8.0 * marg_sd);
    let v = integrate_with_breaks(integrand, lo, hi, &breaks, quad_tol())?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(v.clamp(0.0, 1.0))
}

/// Monte Carlo counterpart of [`average_oc`]: θ_C is drawn from the sampling
/// prior in every replicate.
pub fn average_oc_mc(
    ctx: &RuleContext,
    rule: &DecisionRule,
    sampling: &NormalPrior,
    delta: f64,
    reps: u64,
    stream: RngStream,
) -> Result<OCPoint> {
    if sampling.is_flat() {
        return Err(Error::domain("sampling prior must be proper"));
    }
    if reps == 0 {
        return Err(Error::domain("reps must be >= 1"));
    }
    let d = &ctx.design;
    let (sd_c, sd_t) = (d.var_c().sqrt(), d.var_t().sqrt());
    let mut rng = stream.rng();
    let mut hits = 0u64;
    for _ in 0..reps {
        let zs: f64 = rng.sample(StandardNormal);
        let zc: f64 = rng.sample(StandardNormal);
        let zt: f64 = rng.sample(StandardNormal);
        let theta_c = sampling.mu_c + sampling.sd_c * zs;
        let data = TwoArmNormalData { ybar_c: theta_c + sd_c * zc, ybar_t: theta_c + delta + sd_t * zt };
        if ctx.decide_native(rule, &data)? {
            hits += 1;
        }
    }
    let p = hits as f64 / reps as f64;
    Ok(OCPoint {
        theta_c: sampling.mu_c,
        delta,
        value: p,
        estimator: Estimator::MonteCarlo,
        mc_se: (p * (1.0 - p) / reps as f64).sqrt(),
        reps,
        stream: Some(stream),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskPoint {
    pub theta_c: f64,
    pub theta_t: f64,
    pub c0: f64,
    pub c1: f64,
    pub risk: f64,
}

/// Weighted 0-1 loss averaged over the data: c1·TIE under the null,
/// c0·(1 − power) under the alternative.
pub fn frequentist_risk(
    ctx: &RuleContext,
    rule: &DecisionRule,
    theta_c: f64,
    theta_t: f64,
    c0: f64,
    c1: f64,
) -> Result<RiskPoint> {
    if !(c0 >= 0.0 && c1 >= 0.0) {
        return Err(Error::domain("costs must be nonnegative"));
    }
    let beta = power_rule_quadrature(ctx, rule, theta_c, theta_t)?;
    let risk = if theta_t - theta_c <= ctx.design.delta0 { c1 * beta } else { c0 * (1.0 - beta) };
    Ok(RiskPoint { theta_c, theta_t, c0, c1, risk })
}

/// c1·P(null | y) when rejecting, c0·(1 − P(null | y)) otherwise.
pub fn posterior_expected_loss(prob_null: f64, reject: bool, c0: f64, c1: f64) -> Result<f64> {
    if !(c0 >= 0.0 && c1 >= 0.0) {
        return Err(Error::domain("costs must be nonnegative"));
    }
    if !(0.0..=1.0).contains(&prob_null) {
        return Err(Error::domain(format!("probability out of range: {prob_null}")));
    }
    Ok(if reject { c1 * prob_null } else { c0 * (1.0 - prob_null) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerGapSign {
    /// Calibrated z-test more powerful than the Bayes decision.
    CalibratedHigher,
    Equal,
    CalibratedLower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerGap {
    pub sign: PowerGapSign,
    /// Φ⁻¹[1 − β^calibrated] − Φ⁻¹[1 − β^π]; positive means the calibrated
    /// test is less powerful.
    pub gap: f64,
}

/// Compares the Bayes decision with the z-test calibrated to the Bayes
/// type I error rate at the same θ_C.
pub fn calibrated_power_gap(design: &NormalDesign, priors: &GeneralTwoArmPrior, theta_c: f64, theta_t: f64) -> Result<PowerGap> {
    if priors.treatment.is_flat() || priors.control.is_flat() {
        return Err(Error::NotApplicable("needs proper priors on both arms".into()));
    }
    if design.delta0 != 0.0 {
        return Err(Error::NotApplicable("needs a zero null margin".into()));
    }
    if !(theta_t > theta_c) {
        return Err(Error::NotApplicable("needs theta_T > theta_C".into()));
    }
    let arg_bayes = priors.power_argument(design, theta_c, theta_t);
    let z_alpha = priors.power_argument(design, theta_c, theta_c + design.delta0);
    let arg_cal = (design.delta0 + theta_c - theta_t) / design.se_diff() + z_alpha;
    let spread_t = design.n_t as f64 * priors.treatment.sd_c.powi(2);
    let spread_c = design.n_c as f64 * priors.control.sd_c.powi(2);
    let sign = if spread_t < spread_c {
        PowerGapSign::CalibratedHigher
    } else if spread_t > spread_c {
        PowerGapSign::CalibratedLower
    } else {
        PowerGapSign::Equal
    };
    Ok(PowerGap { sign, gap: arg_cal - arg_bayes })
}

/// How the prior on (θ_C, δ) is written in the regression form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionPriorForm {
    /// Induced by independent priors on θ_C and θ_T.
    Correlated,
    /// Same marginal variances, zero prior correlation.
    Independent,
}

fn inverse2(m: [[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == 0.0 || !det.is_finite() {
        return Err(Error::domain("singular posterior precision"));
    }
    Ok([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
}

/// Posterior N(mean, sd) of δ from the dummy-coded regression update.
pub fn regression_posterior_delta(
    design: &NormalDesign,
    priors: &GeneralTwoArmPrior,
    data: &TwoArmNormalData,
    form: RegressionPriorForm,
) -> Result<(f64, f64)> {
    let s2 = design.sigma * design.sigma;
    let n0 = |p: &NormalPrior| p.effective_n(design.sigma);
    let (n0c, n0t) = (n0(&priors.control), n0(&priors.treatment));
    let mu_t = if priors.treatment.is_flat() { 0.0 } else { priors.treatment.mu_c };
    let mu0 = [priors.control.mu_c, mu_t - priors.control.mu_c];
    let lambda0 = match form {
        RegressionPriorForm::Correlated => [[n0c + n0t, n0t], [n0t, n0t]],
        RegressionPriorForm::Independent => {
            // Prior variances (in units of σ²) 1/n0C and 1/n0C + 1/n0T.
            let p_delta = if n0t == 0.0 || n0c == 0.0 { 0.0 } else { 1.0 / (1.0 / n0c + 1.0 / n0t) };
            [[n0c, 0.0], [0.0, p_delta]]
        }
    };
    let (nc, nt) = (design.n_c as f64, design.n_t as f64);
    let xtx = [[nc + nt, nt], [nt, nt]];
    let xty = [nc * data.ybar_c + nt * data.ybar_t, nt * data.ybar_t];
    let post = [
        [xtx[0][0] + lambda0[0][0], xtx[0][1] + lambda0[0][1]],
        [xtx[1][0] + lambda0[1][0], xtx[1][1] + lambda0[1][1]],
    ];
    let inv = inverse2(post)?;
    let rhs = [
        xty[0] + lambda0[0][0] * mu0[0] + lambda0[0][1] * mu0[1],
        xty[1] + lambda0[1][0] * mu0[0] + lambda0[1][1] * mu0[1],
    ];
    let mean = inv[1][0] * rhs[0] + inv[1][1] * rhs[1];
    Ok((mean, (s2 * inv[1][1]).sqrt()))
}

/// Posterior N(mean, sd) of δ from separate conjugate updates of each arm.
pub fn independent_posterior_delta(design: &NormalDesign, priors: &GeneralTwoArmPrior, data: &TwoArmNormalData) -> (f64, f64) {
    let arm = |p: &NormalPrior, n: u32, ybar: f64| {
        let n0 = p.effective_n(design.sigma);
        let n = n as f64;
        let mean = if n0 == 0.0 { ybar } else { (p.mu_c * n0 + ybar * n) / (n0 + n) };
        (mean, design.sigma * design.sigma / (n0 + n))
    };
    let (mc, vc) = arm(&priors.control, design.n_c, data.ybar_c);
    let (mt, vt) = arm(&priors.treatment, design.n_t, data.ybar_t);
    (mt - mc, (vt + vc).sqrt())
}

/// Largest absolute difference in posterior mean or sd of δ between the
/// per-arm and regression parametrizations.
pub fn regression_equivalence_check(design: &NormalDesign, priors: &GeneralTwoArmPrior, data: &TwoArmNormalData) -> Result<f64> {
    let (m1, s1) = independent_posterior_delta(design, priors, data);
    let (m2, s2) = regression_posterior_delta(design, priors, data, RegressionPriorForm::Correlated)?;
    Ok((m1 - m2).abs().max((s1 - s2).abs()))
}

/// Posterior probability of the null over a grid of (ȳ_C − μ_C, ȳ_T − ȳ_C),
/// with each rule's rejection boundary in ȳ_T − ȳ_C.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorMap {
    pub conflicts: Vec<f64>,
    pub differences: Vec<f64>,
    /// `prob_null[i][j]` at conflict i, difference j.
    pub prob_null: Vec<Vec<f64>>,
    pub boundaries: Vec<(String, Vec<f64>)>,
}

pub fn posterior_null_map(
    ctx: &RuleContext,
    rules: &[DecisionRule],
    conflicts: &[f64],
    differences: &[f64],
) -> Result<PosteriorMap> {
    let d = &ctx.design;
    let prob_null = conflicts
        .iter()
        .map(|c| {
            let ybar_c = ctx.prior.mu_c + c;
            differences
                .iter()
                .map(|diff| {
                    posterior_delta(d, &ctx.prior, &TwoArmNormalData { ybar_c, ybar_t: ybar_c + diff })
                        .prob_null(d.delta0)
                })
                .collect()
        })
        .collect();
    let boundaries = rules
        .iter()
        .map(|r| {
            let b = conflicts
                .iter()
                .map(|c| Ok(d.delta0 + ctx.critical_z(r, ctx.prior.mu_c + c)? * d.se_diff()))
                .collect::<Result<Vec<_>>>()?;
            Ok((r.label(), b))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorMap { conflicts: conflicts.to_vec(), differences: differences.to_vec(), prob_null, boundaries })
}

/// z_{1−p}, exposed for callers that report critical values.
pub fn z_upper(p: f64) -> f64 {
    -phi_inv(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal::{conflict_bounds, CompromiseConfig};
    use crate::numerics::integrate;

    fn ctx(n: u32) -> RuleContext {
        RuleContext::new(
            NormalDesign::balanced(n, 0.025).unwrap(),
            NormalPrior::from_effective_n(0.0, 1.0, n as f64 / 2.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn closed_form_examples() {
        let c = ctx(20);
        let hybrid = GeneralTwoArmPrior::hybrid(c.prior);
        assert!((power_bd_closed(&c.design, &hybrid, 0.0, 0.0) - 0.017_630_902_9).abs() < 1e-9);
        assert!((power_bd_closed(&c.design, &hybrid, 0.0, 1.0) - 0.946_920_728_4).abs() < 1e-9);
        let flat = GeneralTwoArmPrior::hybrid(NormalPrior::flat(0.0));
        for &t in &[-1.0, 0.0, 2.0] {
            assert!((power_bd_closed(&c.design, &flat, t, t) - 0.025).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_tie_is_monotone_in_theta_c() {
        let c = ctx(20);
        let hybrid = GeneralTwoArmPrior::hybrid(c.prior);
        let mut last = 0.0;
        for t in linspace(-2.0, 2.0, 81) {
            let v = power_bd_closed(&c.design, &hybrid, t, t);
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        let c = ctx(20);
        let hybrid = GeneralTwoArmPrior::hybrid(c.prior);
        for &(tc, tt) in &[(0.0, 0.0), (0.0, 1.0), (-1.3, -1.3), (1.5, 2.0)] {
            let fd = power_rule_quadrature(&c, &DecisionRule::Fd, tc, tt).unwrap();
            assert!((fd - power_fd_closed(&c.design, tc, tt)).abs() < 1e-8);
            let bd = power_rule_quadrature(&c, &DecisionRule::Bd, tc, tt).unwrap();
            assert!((bd - power_bd_closed(&c.design, &hybrid, tc, tt)).abs() < 1e-7);
        }
    }

    #[test]
    fn cdc_tie_stays_inside_bounds() {
        for n in [20, 100] {
            let c = ctx(n);
            let rule = DecisionRule::Cdc { cfg: CompromiseConfig::standard() };
            for v in tie_curve(&c, &rule, &linspace(-2.0, 2.0, 81)).unwrap() {
                assert!((0.01 - 1e-6..=0.075 + 1e-6).contains(&v), "{v}");
            }
        }
    }

    #[test]
    fn calibrated_bayes_has_exact_level() {
        let c = ctx(20);
        let rule = DecisionRule::CalibratedBayes { alpha_star: 0.025 };
        for t in linspace(-2.0, 2.0, 21) {
            assert!((power_rule_quadrature(&c, &rule, t, t).unwrap() - 0.025).abs() < 1e-8);
        }
    }

    #[test]
    fn cdd_reverts_to_fd_far_from_prior() {
        let c = ctx(20);
        let rule = DecisionRule::Cdd { cfg: CompromiseConfig::standard() };
        let scale = (c.design.var_c() + c.prior.sd_c.powi(2)).sqrt();
        for &t in &[6.0 * scale, -6.0 * scale, 8.0 * scale] {
            assert!((power_rule_quadrature(&c, &rule, t, t).unwrap() - 0.025).abs() < 0.01);
        }
    }

    #[test]
    fn monte_carlo_agrees_with_quadrature() {
        let c = ctx(20);
        let cfg = CompromiseConfig::standard();
        let rules = [
            DecisionRule::Fd,
            DecisionRule::Bd,
            DecisionRule::Cdc { cfg },
            DecisionRule::Cdd { cfg },
            DecisionRule::EbPow,
            DecisionRule::RmUnit { weight: 0.7 },
        ];
        for (i, rule) in rules.iter().enumerate() {
            for (j, &(tc, tt)) in [(0.0, 0.0), (0.8, 0.8), (-0.5, 0.5)].iter().enumerate() {
                let mc = power_rule_mc(&c, rule, tc, tt, 20_000, RngStream::new(9, (i * 10 + j) as u64)).unwrap();
                let q = power_rule_quadrature(&c, rule, tc, tt).unwrap();
                assert!((mc.value - q).abs() <= 3.0 * mc.mc_se.max(1e-4), "{} {tc} {tt}: {} vs {q}", rule.label(), mc.value);
            }
        }
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let c = ctx(20);
        let s = RngStream::new(1, 4);
        let a = power_rule_mc(&c, &DecisionRule::Bd, 0.0, 0.0, 5000, s).unwrap();
        let b = power_rule_mc(&c, &DecisionRule::Bd, 0.0, 0.0, 5000, s).unwrap();
        assert_eq!(a, b);
        assert!(power_rule_mc(&c, &DecisionRule::Bd, 0.0, 0.0, 0, s).is_err());
    }

    #[test]
    fn recalibration_trivial_cases() {
        let c = ctx(20);
        match recalibrate_max_tie(&c, &DecisionRule::Fd, 0.075, (-2.0, 2.0), 81).unwrap() {
            Recalibration::Tuned { value, max_tie, .. } => {
                assert!((value - 0.075).abs() < 1e-8);
                assert!((max_tie - 0.075).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
        assert!(recalibrate_max_tie(&c, &DecisionRule::Fd, 0.0, (-2.0, 2.0), 81).is_err());
    }

    #[test]
    fn bd_recalibration_is_unattainable_for_wide_conflict() {
        let c = ctx(20);
        match recalibrate_max_tie(&c, &DecisionRule::Bd, 0.075, (-30.0, 30.0), 81).unwrap() {
            Recalibration::Unattainable { lowest, .. } => assert!(lowest > 0.075),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn average_oc_examples() {
        let c = ctx(20);
        let tie = average_oc(&c, &DecisionRule::Bd, &c.prior, 0.0).unwrap();
        assert!((tie - 0.025).abs() < 1e-9);
        assert!((average_oc(&c, &DecisionRule::Fd, &c.prior, 0.0).unwrap() - 0.025).abs() < 1e-12);
        let pow = average_oc(&c, &DecisionRule::Bd, &c.prior, 1.0).unwrap();
        assert!((pow - 0.933_727).abs() < 1e-6);
        assert!(average_oc(&c, &DecisionRule::Bd, &NormalPrior::flat(0.0), 0.0).is_err());
    }

    #[test]
    fn average_oc_matches_nested_integral() {
        let c = ctx(20);
        let cfg = CompromiseConfig::standard();
        let sampling = NormalPrior::new(0.2, 0.4).unwrap();
        for rule in [DecisionRule::Cdc { cfg }, DecisionRule::Cdd { cfg }, DecisionRule::RmUnit { weight: 0.7 }] {
            for &delta in &[0.0, 0.6] {
                let nested = integrate(
                    |t| {
                        let dens = crate::numerics::std_normal_pdf((t - 0.2) / 0.4) / 0.4;
                        dens * power_rule_quadrature(&c, &rule, t, t + delta).unwrap()
                    },
                    0.2 - 8.0 * 0.4,
                    0.2 + 8.0 * 0.4,
                    Tolerance::absolute(1e-9),
                )
                .unwrap();
                let single = average_oc(&c, &rule, &sampling, delta).unwrap();
                assert!((nested - single).abs() < 1e-7, "{} {delta}: {nested} vs {single}", rule.label());
            }
        }
    }

    #[test]
    fn average_oc_mc_agrees() {
        let c = ctx(20);
        for (i, &delta) in [0.0, 1.0].iter().enumerate() {
            let mc = average_oc_mc(&c, &DecisionRule::Bd, &c.prior, delta, 40_000, RngStream::new(3, i as u64)).unwrap();
            let q = average_oc(&c, &DecisionRule::Bd, &c.prior, delta).unwrap();
            assert!((mc.value - q).abs() < 3.0 * mc.mc_se, "{} vs {q}", mc.value);
        }
    }

    #[test]
    fn risk_and_loss() {
        let c = ctx(20);
        let null = frequentist_risk(&c, &DecisionRule::Fd, 0.3, 0.3, 0.025, 0.975).unwrap();
        assert!((null.risk - 0.975 * 0.025).abs() < 1e-9);
        let alt = frequentist_risk(&c, &DecisionRule::Fd, 0.0, 0.5, 0.025, 0.975).unwrap();
        let pow = power_fd_closed(&c.design, 0.0, 0.5);
        assert!((alt.risk - 0.025 * (1.0 - pow)).abs() < 1e-9);
        // The supremum over alternatives approaches c1·κ from below at the boundary.
        let near = frequentist_risk(&c, &DecisionRule::Fd, 0.0, 1e-9, 0.025, 0.975).unwrap();
        assert!(near.risk <= 0.024_375 + 1e-12);
        let at = frequentist_risk(&c, &DecisionRule::Fd, 0.0, 0.0, 0.025, 0.975).unwrap();
        assert!((at.risk - 0.024_375).abs() < 1e-9);

        assert_eq!(posterior_expected_loss(0.0, true, 0.025, 0.975).unwrap(), 0.0);
        let p = posterior_delta(&c.design, &c.prior, &TwoArmNormalData { ybar_c: 0.3, ybar_t: 0.8 }).prob_null(0.0);
        let loss = posterior_expected_loss(p, true, 0.025, 0.975).unwrap();
        assert!((loss - 0.975 * p).abs() < 1e-15);
        assert!((loss - 0.018_36).abs() < 5e-5);
        for &q in &[0.01, 0.02, 0.025, 0.03, 0.5] {
            let reject = posterior_expected_loss(q, true, 0.025, 0.975).unwrap();
            let accept = posterior_expected_loss(q, false, 0.025, 0.975).unwrap();
            assert_eq!(reject <= accept, q <= 0.025 / (0.025 + 0.975));
        }
    }

    #[test]
    fn power_gap_cases() {
        let d = NormalDesign::balanced(20, 0.025).unwrap();
        let pair = |sc: f64, st: f64| GeneralTwoArmPrior {
            control: NormalPrior::new(0.0, sc).unwrap(),
            treatment: NormalPrior::new(0.1, st).unwrap(),
        };
        let eq = calibrated_power_gap(&d, &pair(0.3, 0.3), 0.0, 0.5).unwrap();
        assert_eq!(eq.sign, PowerGapSign::Equal);
        assert!(eq.gap.abs() < 1e-12);
        let lower = calibrated_power_gap(&d, &pair(0.3, 0.6), 0.0, 0.5).unwrap();
        assert_eq!(lower.sign, PowerGapSign::CalibratedLower);
        assert!(lower.gap > 0.0);
        let higher = calibrated_power_gap(&d, &pair(0.6, 0.3), 0.0, 0.5).unwrap();
        assert_eq!(higher.sign, PowerGapSign::CalibratedHigher);
        assert!(higher.gap < 0.0);
        assert!(matches!(
            calibrated_power_gap(&d, &GeneralTwoArmPrior::hybrid(NormalPrior::new(0.0, 0.3).unwrap()), 0.0, 0.5),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn power_gap_matches_direct_subtraction() {
        let d = NormalDesign::balanced(20, 0.025).unwrap();
        let priors = GeneralTwoArmPrior {
            control: NormalPrior::new(0.0, 0.3).unwrap(),
            treatment: NormalPrior::new(0.1, 0.5).unwrap(),
        };
        let (tc, tt) = (0.2, 0.7);
        let beta_pi = power_bd_closed(&d, &priors, tc, tt);
        let alpha_pi = power_bd_closed(&d, &priors, tc, tc);
        let beta_cal = phi((tt - tc) / d.se_diff() - z_upper(alpha_pi));
        let direct = z_upper(beta_cal) - z_upper(beta_pi);
        let gap = calibrated_power_gap(&d, &priors, tc, tt).unwrap().gap;
        assert!((gap - direct).abs() < 1e-10);
        // Closed form of the gap.
        let (a_c, a_t) = priors.ratios(&d);
        let formula = (tt - tc)
            * (1.0 / (d.var_t() + d.var_c() * ((1.0 + a_t) / (1.0 + a_c)).powi(2)).sqrt() - 1.0 / d.se_diff());
        assert!((gap - formula).abs() < 1e-12);
    }

    #[test]
    fn regression_forms_agree() {
        let d = NormalDesign::new(20, 30, 1.3, 0.0, 0.025, 0.025).unwrap();
        let data = TwoArmNormalData { ybar_c: 0.4, ybar_t: 1.1 };
        let proper = GeneralTwoArmPrior {
            control: NormalPrior::new(0.2, 0.4).unwrap(),
            treatment: NormalPrior::new(-0.3, 0.7).unwrap(),
        };
        assert!(regression_equivalence_check(&d, &proper, &data).unwrap() < 1e-12);
        let hybrid = GeneralTwoArmPrior::hybrid(NormalPrior::new(0.2, 0.4).unwrap());
        assert!(regression_equivalence_check(&d, &hybrid, &data).unwrap() < 1e-12);
        let a = regression_posterior_delta(&d, &hybrid, &data, RegressionPriorForm::Correlated).unwrap();
        let b = regression_posterior_delta(&d, &hybrid, &data, RegressionPriorForm::Independent).unwrap();
        assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        let p = posterior_delta(&d, &hybrid.control, &data);
        assert!((p.mean - a.0).abs() < 1e-12 && (p.sd - a.1).abs() < 1e-12);
    }

    #[test]
    fn posterior_map_boundaries() {
        let c = ctx(20);
        let cfg = CompromiseConfig::standard();
        let conflicts = linspace(-2.0, 2.0, 41);
        let diffs = linspace(-1.0, 2.0, 31);
        let map = posterior_null_map(&c, &[DecisionRule::Fd, DecisionRule::Bd, DecisionRule::Cdc { cfg }], &conflicts, &diffs).unwrap();
        let se = c.design.se_diff();
        for b in &map.boundaries[0].1 {
            assert!((b - critical_z(0.025) * se).abs() < 1e-12);
        }
        let (lo, hi) = conflict_bounds(&c.design, &c.prior, &cfg).unwrap();
        for (i, &cf) in conflicts.iter().enumerate() {
            let bd = map.boundaries[1].1[i];
            let cdc = map.boundaries[2].1[i];
            if cf > lo && cf < hi {
                assert!((bd - cdc).abs() < 1e-12);
            }
            assert!(cdc <= critical_z(0.01) * se + 1e-12 && cdc >= critical_z(0.075) * se - 1e-12);
            // Cells above the BD boundary are exactly those with P(null) ≤ γ.
            for (j, &diff) in diffs.iter().enumerate() {
                if (diff - bd).abs() > 1e-9 {
                    assert_eq!(map.prob_null[i][j] <= 0.025, diff > bd);
                }
            }
        }
    }
}
