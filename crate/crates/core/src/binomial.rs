//! Exact beta-binomial hybrid-control tests.
//!
//! The reference test is the Bayes test under independent Jeffreys priors,
//! which approximates the unconditional two-proportion test. Borrowing adds
//! `y0` external successes out of `n0` to the control prior. Every rule is a
//! threshold on the reference posterior probability of the null,
//! P⁰(θ_T − θ_C ≤ 0 | y_C, y_T).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::CompromiseConfig;
use crate::numerics::{beta_reg, integrate_with_breaks, ln_beta, log_gamma, phi, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub a: f64,
    pub b: f64,
}

impl BetaPrior {
    /// Nonnegative parameters, not both zero. Zero parameters (as in the
    /// Fisher-type reference priors) are representable but improper.
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) || (a == 0.0 && b == 0.0) {
            return Err(Error::domain(format!("invalid beta parameters ({a}, {b})")));
        }
        Ok(BetaPrior { a, b })
    }

    pub fn jeffreys() -> Self {
        BetaPrior { a: 0.5, b: 0.5 }
    }

    pub fn is_proper(&self) -> bool {
        self.a > 0.0 && self.b > 0.0
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    pub fn update(&self, successes: u32, failures: u32) -> Self {
        BetaPrior { a: self.a + successes as f64, b: self.b + failures as f64 }
    }

    fn sd(&self) -> f64 {
        let s = self.a + self.b;
        (self.a * self.b / (s * s * (s + 1.0))).sqrt()
    }
}

/// External control data: `y0` successes out of `n0` patients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalData {
    pub y0: u32,
    pub n0: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialDesign {
    pub n_c: u32,
    pub n_t: u32,
    /// Reference prior for θ_C before the external data are added.
    pub prior_c: BetaPrior,
    pub prior_t: BetaPrior,
    pub external: ExternalData,
    pub gamma: f64,
    pub kappa: f64,
}

impl BinomialDesign {
    /// Jeffreys priors on both arms.
    pub fn new(n_c: u32, n_t: u32, external: ExternalData, gamma: f64, kappa: f64) -> Result<Self> {
        let d = BinomialDesign {
            n_c,
            n_t,
            prior_c: BetaPrior::jeffreys(),
            prior_t: BetaPrior::jeffreys(),
            external,
            gamma,
            kappa,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_c == 0 || self.n_t == 0 {
            return Err(Error::domain("sample sizes must be >= 1"));
        }
        if self.external.y0 > self.external.n0 {
            return Err(Error::domain("external successes exceed external sample size"));
        }
        for (name, v) in [("gamma", self.gamma), ("kappa", self.kappa)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::domain(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if !self.prior_c.is_proper() || !self.prior_t.is_proper() {
            return Err(Error::domain("reference priors must be proper"));
        }
        Ok(())
    }

    /// Control prior with the external data added.
    pub fn informative_prior_c(&self) -> BetaPrior {
        self.prior_c.update(self.external.y0, self.external.n0 - self.external.y0)
    }

    /// Prior proportion of control successes, y0/n0.
    pub fn mu_c(&self) -> Option<f64> {
        (self.external.n0 > 0).then(|| self.external.y0 as f64 / self.external.n0 as f64)
    }

    pub fn check(&self, data: &BinomialData) -> Result<()> {
        if data.y_c > self.n_c || data.y_t > self.n_t {
            return Err(Error::domain(format!(
                "outcome ({}, {}) outside 0..={} x 0..={}",
                data.y_c, data.y_t, self.n_c, self.n_t
            )));
        }
        Ok(())
    }

    fn post_c(&self, prior: BetaPrior, data: &BinomialData) -> BetaPrior {
        prior.update(data.y_c, self.n_c - data.y_c)
    }

    fn post_t(&self, data: &BinomialData) -> BetaPrior {
        self.prior_t.update(data.y_t, self.n_t - data.y_t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinomialData {
    pub y_c: u32,
    pub y_t: u32,
}

/// P(θ_T ≤ θ_C) for independent θ_C ~ `post_c`, θ_T ~ `post_t`.
///
/// Integrates f_C(x)·I_x(c, d) after the substitution x = sin²φ, which
/// removes the endpoint singularities of the Beta density.
pub fn prob_null_exact(post_c: BetaPrior, post_t: BetaPrior) -> Result<f64> {
    if !post_c.is_proper() || !post_t.is_proper() {
        return Err(Error::domain("posterior Beta parameters must be positive"));
    }
    let (a, b) = (post_c.a, post_c.b);
    let ln_norm = std::f64::consts::LN_2 - ln_beta(a, b);
    let integrand = |t: f64| {
        let (s, c) = t.sin_cos();
        if s <= 0.0 || c <= 0.0 {
            return 0.0;
        }
        let ln_dens = ln_norm + (2.0 * a - 1.0) * s.ln() + (2.0 * b - 1.0) * c.ln();
        ln_dens.exp() * beta_reg(post_t.a, post_t.b, s * s)
    };
    let mut breaks = Vec::with_capacity(16);
    for p in [post_c, post_t] {
        let (m, sd) = (p.mean(), p.sd());
        for k in [-8.0, -4.0, -1.0, 1.0, 4.0, 8.0] {
            let x = m + k * sd;
            if x > 0.0 && x < 1.0 {
                breaks.push(x.sqrt().asin());
            }
        }
    }
    let tol = Tolerance { abs_tol: 1e-13, rel_tol: 0.0, max_iter: 4000 };
    let v = integrate_with_breaks(integrand, 0.0, std::f64::consts::FRAC_PI_2, &breaks, tol)?;
    Ok(v.clamp(0.0, 1.0))
}

fn require_positive(args: &[f64]) -> Result<()> {
    if args.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::domain(format!("arguments must be positive, got {args:?}")));
    }
    Ok(())
}

fn lg(x: f64) -> f64 {
    libm::lgamma(x)
}

/// g(a, b, c, d) = Γ(a+b)Γ(c+d)Γ(a+c)Γ(b+d) / (Γ(a)Γ(b)Γ(c)Γ(d)Γ(a+b+c+d)).
pub fn g_term(a: f64, b: f64, c: f64, d: f64) -> Result<f64> {
    require_positive(&[a, b, c, d])?;
    Ok(ln_g(a, b, c, d).exp())
}

fn ln_g(a: f64, b: f64, c: f64, d: f64) -> f64 {
    lg(a + b) + lg(c + d) + lg(a + c) + lg(b + d) - lg(a) - lg(b) - lg(c) - lg(d) - lg(a + b + c + d)
}

/// l(c, d, a, b) = Γ(a+b)Γ(c+d)Γ(a+c)Γ(b+d−1) / (Γ(a)Γ(b)Γ(c+1)Γ(d)Γ(a+b+c+d−1)).
///
/// With (c, d) the control posterior and (a, b) the treatment posterior,
/// this is the change in P(θ_T ≤ θ_C) from one more control success.
pub fn l_term(c: f64, d: f64, a: f64, b: f64) -> Result<f64> {
    require_positive(&[c, d, a, b, b + d - 1.0])?;
    let ln = lg(a + b) + lg(c + d) + lg(a + c) + lg(b + d - 1.0)
        - lg(a)
        - lg(b)
        - lg(c + 1.0)
        - lg(d)
        - lg(a + b + c + d - 1.0);
    Ok(ln.exp())
}

/// Neumaier-compensated accumulator.
#[derive(Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// P⁰: posterior probability of the null under the reference priors.
pub fn prob_null_reference(design: &BinomialDesign, data: &BinomialData) -> Result<f64> {
    design.check(data)?;
    prob_null_exact(design.post_c(design.prior_c, data), design.post_t(data))
}

/// Moves P(θ_T ≤ θ_C) from control posterior (a, b) to (a + s, b + f).
fn shift_control(p0: f64, a: f64, b: f64, c: f64, d: f64, s: u32, f: u32) -> f64 {
    let mut acc = Compensated::default();
    acc.add(p0);
    for i in 0..s {
        let ai = a + i as f64;
        acc.add(ln_g(ai, b, c, d).exp() / ai);
    }
    let a_end = a + s as f64;
    for i in 0..f {
        let bi = b + i as f64;
        acc.add(-ln_g(a_end, bi, c, d).exp() / bi);
    }
    acc.value()
}

/// P^π from a known P⁰ by adding the external successes, then failures.
pub fn prob_null_from_reference(design: &BinomialDesign, data: &BinomialData, p_ref: f64) -> f64 {
    let pc = design.post_c(design.prior_c, data);
    let pt = design.post_t(data);
    let ext = design.external;
    shift_control(p_ref, pc.a, pc.b, pt.a, pt.b, ext.y0, ext.n0 - ext.y0).clamp(0.0, 1.0)
}

/// P^π: posterior probability of the null with the external data borrowed,
/// by recursion from the reference probability.
pub fn prob_null_recursion(design: &BinomialDesign, data: &BinomialData) -> Result<f64> {
    let p_ref = prob_null_reference(design, data)?;
    Ok(prob_null_from_reference(design, data, p_ref))
}

/// Normal approximation to the Jeffreys-prior probability of the null.
pub fn prob_null_unconditional_approx(data: &BinomialData, n_c: u32, n_t: u32) -> Result<f64> {
    let (yc, yt, nc, nt) = (data.y_c as f64, data.y_t as f64, n_c as f64, n_t as f64);
    if data.y_c > n_c || data.y_t > n_t {
        return Err(Error::domain("outcome outside the sample sizes"));
    }
    let pooled = yc + yt;
    if pooled == 0.0 || pooled == nc + nt {
        return Err(Error::domain("pooled outcomes are all failures or all successes"));
    }
    let arg = (yc * (nt - yt) - yt * (nc - yc)) * ((nc + nt) / (nc * nt * pooled * (nc + nt - pooled))).sqrt();
    Ok(phi(arg))
}

/// κ^BD(y_C, y_T) = γ − C, with C = P^π − P⁰. The value may leave [0, 1].
pub fn kappa_bd_binomial(design: &BinomialDesign, data: &BinomialData) -> Result<f64> {
    let p_ref = prob_null_reference(design, data)?;
    Ok(kappa_bd_from(design, p_ref, prob_null_from_reference(design, data, p_ref)))
}

fn kappa_bd_from(design: &BinomialDesign, p_ref: f64, p_borrow: f64) -> f64 {
    design.gamma - (p_borrow - p_ref)
}

/// Denominator used to scale the observed conflict in the discard weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictScale {
    /// √(ρ̂(1−ρ̂)(1/n_C + 1/n0)), the pooled two-proportion z denominator.
    #[default]
    Pooled,
    /// √(ρ̂(1−ρ̂)·√(1/n_C + 1/n0)).
    NestedRadical,
}

pub fn binomial_cdd_weight(design: &BinomialDesign, data: &BinomialData, cfg: &CompromiseConfig, scale: ConflictScale) -> f64 {
    let Some(mu_c) = design.mu_c() else {
        return 1.0;
    };
    let ext = design.external;
    let rho = (data.y_c + ext.y0) as f64 / (design.n_c + ext.n0) as f64;
    if rho <= 0.0 || rho >= 1.0 {
        return 1.0;
    }
    let inv = 1.0 / design.n_c as f64 + 1.0 / ext.n0 as f64;
    let denom = match scale {
        ConflictScale::Pooled => (rho * (1.0 - rho) * inv).sqrt(),
        ConflictScale::NestedRadical => (rho * (1.0 - rho) * inv.sqrt()).sqrt(),
    };
    let conflict = (data.y_c as f64 / design.n_c as f64 - mu_c).abs();
    let scaled = conflict / (cfg.t * denom);
    if scaled >= 1.0 {
        return 1.0;
    }
    scaled.powf(cfg.p).min(1.0)
}

/// κ^w (κ^BD)^{1−w}, clamped. A nonpositive κ^BD with w < 1 gives 0 before
/// clamping.
fn discard_threshold(kappa: f64, kappa_bd: f64, w: f64, cfg: &CompromiseConfig) -> f64 {
    let mixed = if w >= 1.0 {
        kappa
    } else if kappa_bd <= 0.0 {
        0.0
    } else if w <= 0.0 {
        kappa_bd
    } else {
        (w * kappa.ln() + (1.0 - w) * kappa_bd.ln()).exp()
    };
    cfg.clamp(mixed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompromiseKind {
    Constraint,
    Discard {
        #[serde(default)]
        scale: ConflictScale,
    },
}

pub fn binomial_cd_threshold(
    design: &BinomialDesign,
    data: &BinomialData,
    cfg: &CompromiseConfig,
    kind: CompromiseKind,
) -> Result<f64> {
    let k_bd = kappa_bd_binomial(design, data)?;
    Ok(match kind {
        CompromiseKind::Constraint => cfg.clamp(k_bd),
        CompromiseKind::Discard { scale } => {
            discard_threshold(design.kappa, k_bd, binomial_cdd_weight(design, data, cfg, scale), cfg)
        }
    })
}

/// Decision rules for binomial outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BinomialRule {
    Fd,
    Bd,
    Cdc {
        #[serde(flatten)]
        cfg: CompromiseConfig,
    },
    Cdd {
        #[serde(flatten)]
        cfg: CompromiseConfig,
        #[serde(default)]
        scale: ConflictScale,
    },
    /// Mixture `weight`·(informative) + (1 − `weight`)·`robust` control prior.
    RobustMixture { weight: f64, robust: BetaPrior },
}

impl BinomialRule {
    /// Mixture with a uniform Beta(1, 1) robust component.
    pub fn rm_default(weight: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::domain(format!("mixture weight must lie in [0, 1], got {weight}")));
        }
        Ok(BinomialRule::RobustMixture { weight, robust: BetaPrior { a: 1.0, b: 1.0 } })
    }

    /// Robust component Beta(μ_C, 1 − μ_C): mean μ_C, one observation's worth.
    pub fn rm_unit(design: &BinomialDesign, weight: f64) -> Result<Self> {
        let mu = design
            .mu_c()
            .ok_or_else(|| Error::Undefined("unit-information component needs external data".into()))?;
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::domain(format!("mixture weight must lie in [0, 1], got {weight}")));
        }
        let robust = BetaPrior::new(mu, 1.0 - mu)?;
        if !robust.is_proper() {
            return Err(Error::Undefined("external data are all successes or all failures".into()));
        }
        Ok(BinomialRule::RobustMixture { weight, robust })
    }

    pub fn label(&self) -> &'static str {
        match self {
            BinomialRule::Fd => "FD",
            BinomialRule::Bd => "BD",
            BinomialRule::Cdc { .. } => "CDC",
            BinomialRule::Cdd { .. } => "CDD",
            BinomialRule::RobustMixture { .. } => "RMD-Unit",
        }
    }
}

/// Probabilities of the null at one outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeProbs {
    pub reference: f64,
    pub borrowed: f64,
    /// Robust-component probability, when a mixture rule needs it.
    pub robust: Option<f64>,
}

fn ln_beta_binomial_marginal(prior: BetaPrior, y: u32, n: u32) -> f64 {
    ln_beta(prior.a + y as f64, prior.b + (n - y) as f64) - ln_beta(prior.a, prior.b)
}

fn mixture_prob_null(design: &BinomialDesign, data: &BinomialData, weight: f64, robust: BetaPrior, p: &OutcomeProbs) -> Result<f64> {
    let p_robust = match p.robust {
        Some(v) => v,
        None => prob_null_exact(design.post_c(robust, data), design.post_t(data))?,
    };
    if weight >= 1.0 {
        return Ok(p.borrowed);
    }
    if weight <= 0.0 {
        return Ok(p_robust);
    }
    let l_inf = weight.ln() + ln_beta_binomial_marginal(design.informative_prior_c(), data.y_c, design.n_c);
    let l_rob = (1.0 - weight).ln() + ln_beta_binomial_marginal(robust, data.y_c, design.n_c);
    let top = l_inf.max(l_rob);
    let (e_inf, e_rob) = ((l_inf - top).exp(), (l_rob - top).exp());
    let w_post = e_inf / (e_inf + e_rob);
    Ok(w_post * p.borrowed + (1.0 - w_post) * p_robust)
}

/// Threshold κ^rule(y_C, y_T) on the reference probability of the null.
pub fn rule_threshold(design: &BinomialDesign, data: &BinomialData, rule: &BinomialRule, p: &OutcomeProbs) -> Result<f64> {
    let k_bd = kappa_bd_from(design, p.reference, p.borrowed);
    Ok(match rule {
        BinomialRule::Fd => design.kappa,
        BinomialRule::Bd => k_bd,
        BinomialRule::Cdc { cfg } => cfg.clamp(k_bd),
        BinomialRule::Cdd { cfg, scale } => {
            discard_threshold(design.kappa, k_bd, binomial_cdd_weight(design, data, cfg, *scale), cfg)
        }
        BinomialRule::RobustMixture { weight, robust } => {
            design.gamma - (mixture_prob_null(design, data, *weight, *robust, p)? - p.reference)
        }
    })
}

pub fn outcome_probs(design: &BinomialDesign, data: &BinomialData, robust: Option<BetaPrior>) -> Result<OutcomeProbs> {
    let reference = prob_null_reference(design, data)?;
    let borrowed = prob_null_from_reference(design, data, reference);
    let robust = match robust {
        Some(r) => Some(prob_null_exact(design.post_c(r, data), design.post_t(data))?),
        None => None,
    };
    Ok(OutcomeProbs { reference, borrowed, robust })
}

/// Reject iff P⁰ ≤ κ^rule(y_C, y_T).
pub fn binomial_decision(design: &BinomialDesign, data: &BinomialData, rule: &BinomialRule) -> Result<bool> {
    let robust = match rule {
        BinomialRule::RobustMixture { robust, .. } => Some(*robust),
        _ => None,
    };
    let p = outcome_probs(design, data, robust)?;
    Ok(p.reference <= rule_threshold(design, data, rule, &p)?)
}

/// Null probabilities for every outcome of a design, row-major in y_C.
#[derive(Debug, Clone)]
pub struct ProbabilityTable {
    pub design: BinomialDesign,
    pub robust: Option<BetaPrior>,
    cells: Vec<OutcomeProbs>,
}

impl ProbabilityTable {
    pub fn build(design: &BinomialDesign, robust: Option<BetaPrior>) -> Result<Self> {
        design.validate()?;
        let n_t = design.n_t;
        let cells = (0..=design.n_c)
            .into_par_iter()
            .flat_map_iter(|y_c| (0..=n_t).map(move |y_t| BinomialData { y_c, y_t }))
            .map(|data| outcome_probs(design, &data, robust))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProbabilityTable { design: *design, robust, cells })
    }

    pub fn get(&self, data: &BinomialData) -> &OutcomeProbs {
        &self.cells[(data.y_c * (self.design.n_t + 1) + data.y_t) as usize]
    }

    /// Decision table for `rule`, reusing the cached probabilities.
    pub fn decisions(&self, rule: &BinomialRule) -> Result<DecisionTable> {
        self.decisions_at(rule, self.design.gamma, self.design.kappa)
    }

    /// Decision table for `rule` with the design's γ and κ replaced. The
    /// cached probabilities do not depend on either level.
    pub fn decisions_at(&self, rule: &BinomialRule, gamma: f64, kappa: f64) -> Result<DecisionTable> {
        if let BinomialRule::RobustMixture { robust, .. } = rule {
            if self.robust != Some(*robust) {
                return Err(Error::domain("probability table was built without this robust component"));
            }
        }
        let d = &BinomialDesign { gamma, kappa, ..self.design };
        d.validate()?;
        let reject = (0..=d.n_c)
            .flat_map(|y_c| (0..=d.n_t).map(move |y_t| BinomialData { y_c, y_t }))
            .map(|data| {
                let p = self.get(&data);
                Ok(p.reference <= rule_threshold(d, &data, rule, p)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DecisionTable { n_c: d.n_c, n_t: d.n_t, reject })
    }
}

/// Reject/accept for every outcome (y_C, y_T).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionTable {
    pub n_c: u32,
    pub n_t: u32,
    reject: Vec<bool>,
}

impl DecisionTable {
    pub fn from_fn(n_c: u32, n_t: u32, mut f: impl FnMut(BinomialData) -> bool) -> Self {
        let reject = (0..=n_c)
            .flat_map(|y_c| (0..=n_t).map(move |y_t| BinomialData { y_c, y_t }))
            .map(&mut f)
            .collect();
        DecisionTable { n_c, n_t, reject }
    }

    pub fn rejects(&self, data: &BinomialData) -> bool {
        self.reject[(data.y_c * (self.n_t + 1) + data.y_t) as usize]
    }
}

/// Binomial(n, θ) probabilities for 0..=n.
pub fn binomial_pmf(n: u32, theta: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::domain(format!("success probability must lie in [0, 1], got {theta}")));
    }
    let mut out = vec![0.0; n as usize + 1];
    if theta == 0.0 {
        out[0] = 1.0;
        return Ok(out);
    }
    if theta == 1.0 {
        out[n as usize] = 1.0;
        return Ok(out);
    }
    let ln_n = log_gamma(n as f64 + 1.0)?;
    let (lp, lq) = (theta.ln(), (-theta).ln_1p());
    for (k, o) in out.iter_mut().enumerate() {
        let kf = k as f64;
        *o = (ln_n - lg(kf + 1.0) - lg(n as f64 - kf + 1.0) + kf * lp + (n as f64 - kf) * lq).exp();
    }
    Ok(out)
}

/// Rejection probability of `table` at θ_C and θ_T = θ_C + δ, by summing
/// over every outcome.
pub fn enumerate_oc(table: &DecisionTable, theta_c: f64, delta: f64) -> Result<f64> {
    let pc = binomial_pmf(table.n_c, theta_c)?;
    let pt = binomial_pmf(table.n_t, theta_c + delta)?;
    let mut acc = Compensated::default();
    for (y_c, wc) in pc.iter().enumerate() {
        if *wc == 0.0 {
            continue;
        }
        let mut row = Compensated::default();
        for (y_t, wt) in pt.iter().enumerate() {
            if table.rejects(&BinomialData { y_c: y_c as u32, y_t: y_t as u32 }) {
                row.add(*wt);
            }
        }
        acc.add(wc * row.value());
    }
    Ok(acc.value().clamp(0.0, 1.0))
}
