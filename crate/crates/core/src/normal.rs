//! Normal-outcome hybrid-control decisions.
//!
//! The control mean carries an informative Normal prior and the treatment
//! mean is flat. Every rule is expressed twice: as a data-dependent
//! frequentist threshold κ(ȳ_C) applied to the two-sample z statistic, and
//! as the Bayes posterior-probability threshold γ(ȳ_C) that reproduces the
//! same decisions under the informative prior.
//!
//! Thresholds are probabilities. Decisions are taken on the z scale, where a
//! threshold of 0 (or 1) becomes a critical value of +∞ (or −∞).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ln_phi, phi, phi_inv};

/// Two-arm Normal trial with common known standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalDesign {
    pub n_c: u32,
    pub n_t: u32,
    pub sigma: f64,
    /// Null margin: H0 is δ ≤ delta0.
    pub delta0: f64,
    /// Bayes posterior-probability threshold.
    pub gamma: f64,
    /// Frequentist level.
    pub kappa: f64,
}

impl NormalDesign {
    pub fn new(n_c: u32, n_t: u32, sigma: f64, delta0: f64, gamma: f64, kappa: f64) -> Result<Self> {
        let d = NormalDesign { n_c, n_t, sigma, delta0, gamma, kappa };
        d.validate()?;
        Ok(d)
    }

    /// Balanced design with σ = 1, δ0 = 0 and γ = κ = `level`.
    pub fn balanced(n: u32, level: f64) -> Result<Self> {
        Self::new(n, n, 1.0, 0.0, level, level)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_c == 0 || self.n_t == 0 {
            return Err(Error::domain("sample sizes must be >= 1"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::domain(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !self.delta0.is_finite() {
            return Err(Error::domain("delta0 must be finite"));
        }
        for (name, v) in [("gamma", self.gamma), ("kappa", self.kappa)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::domain(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }

    pub fn var_c(&self) -> f64 {
        self.sigma * self.sigma / self.n_c as f64
    }

    pub fn var_t(&self) -> f64 {
        self.sigma * self.sigma / self.n_t as f64
    }

    /// Standard error of ȳ_T − ȳ_C, the z-test denominator.
    pub fn se_diff(&self) -> f64 {
        (self.var_t() + self.var_c()).sqrt()
    }

    /// Two-sample z statistic.
    pub fn z_stat(&self, data: &TwoArmNormalData) -> f64 {
        (data.ybar_t - data.ybar_c - self.delta0) / self.se_diff()
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }
}

/// Normal prior N(mu_c, sd_c) for the control mean. `sd_c = ∞` is the flat
/// prior (no borrowing).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalPrior {
    pub mu_c: f64,
    pub sd_c: f64,
}

impl NormalPrior {
    pub fn new(mu_c: f64, sd_c: f64) -> Result<Self> {
        if !mu_c.is_finite() {
            return Err(Error::domain("prior mean must be finite"));
        }
        if !(sd_c > 0.0) {
            return Err(Error::domain(format!("prior sd must be > 0, got {sd_c}")));
        }
        Ok(NormalPrior { mu_c, sd_c })
    }

    /// Prior worth `n0` observations of standard deviation `sigma`:
    /// sd_c = σ/√n0. `n0 = 0` gives the flat prior.
    pub fn from_effective_n(mu_c: f64, sigma: f64, n0: f64) -> Result<Self> {
        if !(n0 >= 0.0) {
            return Err(Error::domain(format!("n0 must be >= 0, got {n0}")));
        }
        if n0 == 0.0 {
            return Ok(Self::flat(mu_c));
        }
        Self::new(mu_c, sigma / n0.sqrt())
    }

    pub fn flat(mu_c: f64) -> Self {
        NormalPrior { mu_c, sd_c: f64::INFINITY }
    }

    pub fn is_flat(&self) -> bool {
        self.sd_c.is_infinite()
    }

    /// Ratio of data to prior variance, A_C = σ²/(n_C σ_C²).
    pub fn variance_ratio(&self, design: &NormalDesign) -> f64 {
        if self.is_flat() {
            0.0
        } else {
            design.var_c() / (self.sd_c * self.sd_c)
        }
    }

    /// Effective number of prior observations, σ²/σ_C².
    pub fn effective_n(&self, sigma: f64) -> f64 {
        if self.is_flat() {
            0.0
        } else {
            sigma * sigma / (self.sd_c * self.sd_c)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoArmNormalData {
    pub ybar_c: f64,
    pub ybar_t: f64,
}

impl TwoArmNormalData {
    pub fn new(ybar_c: f64, ybar_t: f64) -> Result<Self> {
        if !ybar_c.is_finite() || !ybar_t.is_finite() {
            return Err(Error::domain("observed means must be finite"));
        }
        Ok(TwoArmNormalData { ybar_c, ybar_t })
    }
}

/// Bounds and discard tuning for the compromise decisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompromiseConfig {
    pub alpha_low: f64,
    pub alpha_up: f64,
    /// Conflict, in units of the two-sample z denominator, at which the
    /// discard rule fully reverts to the frequentist threshold.
    pub t: f64,
    /// Speed of the reversion.
    pub p: f64,
    /// Hold the discard weight at zero where κ^BD ≥ κ and ȳ_C ≤ μ_C.
    #[serde(default)]
    pub freeze_w_below_mean: bool,
}

impl CompromiseConfig {
    pub fn new(alpha_low: f64, alpha_up: f64, t: f64, p: f64) -> Result<Self> {
        let c = CompromiseConfig { alpha_low, alpha_up, t, p, freeze_w_below_mean: false };
        c.validate()?;
        Ok(c)
    }

    /// α^LOW = 0.01, α^UP = 0.075, t = p = 4.
    pub fn standard() -> Self {
        CompromiseConfig { alpha_low: 0.01, alpha_up: 0.075, t: 4.0, p: 4.0, freeze_w_below_mean: false }
    }

    /// Bounds may touch 0 and 1; the degenerate (0, 1) pair turns the
    /// constraint rule into the plain Bayes decision.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_low >= 0.0 && self.alpha_low < self.alpha_up && self.alpha_up <= 1.0) {
            return Err(Error::domain(format!(
                "need 0 <= alpha_low < alpha_up <= 1, got ({}, {})",
                self.alpha_low, self.alpha_up
            )));
        }
        if !(self.t > 0.0) {
            return Err(Error::domain(format!("t must be > 0, got {}", self.t)));
        }
        if !(self.p >= 0.0) {
            return Err(Error::domain(format!("p must be >= 0, got {}", self.p)));
        }
        Ok(())
    }

    pub fn clamp(&self, kappa: f64) -> f64 {
        kappa.min(self.alpha_up).max(self.alpha_low)
    }
}

/// Normal posterior of δ = θ_T − θ_C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaPosterior {
    pub mean: f64,
    pub sd: f64,
}

impl DeltaPosterior {
    /// P(δ ≤ δ0 | y).
    pub fn prob_null(&self, delta0: f64) -> f64 {
        phi((delta0 - self.mean) / self.sd)
    }

    pub fn null_tail(&self, delta0: f64) -> TailProb {
        TailProb::from_z((delta0 - self.mean) / self.sd)
    }
}

/// A probability p held together with 1 − p, each computed directly, so
/// values close to 1 keep their precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailProb {
    pub lower: f64,
    pub upper: f64,
}

impl TailProb {
    /// Φ(x) and Φ(−x).
    pub fn from_z(x: f64) -> Self {
        TailProb { lower: phi(x), upper: phi(-x) }
    }

    pub fn new(p: f64) -> Self {
        TailProb { lower: p, upper: 1.0 - p }
    }

    /// x with Φ(x) = p, inverted from the smaller tail.
    pub fn z(&self) -> f64 {
        if self.lower <= 0.5 {
            phi_inv(self.lower)
        } else {
            -phi_inv(self.upper)
        }
    }

    /// p ≤ q, compared on upper tails when both are above 1/2.
    pub fn le(&self, other: &TailProb) -> bool {
        if self.lower > 0.5 && other.lower > 0.5 {
            self.upper >= other.upper
        } else {
            self.lower <= other.lower
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesDecision {
    pub prob_null: f64,
    pub reject: bool,
}

/// Precomputed scale factors shared by the threshold formulas.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Geometry {
    pub a_c: f64,
    /// A_C / (1 + A_C)
    pub shrink: f64,
    /// √(σ²/n_T + σ²/n_C)
    pub se_freq: f64,
    /// √(σ²/n_T + (σ²/n_C)/(1 + A_C)), the posterior sd of δ.
    pub se_bayes: f64,
}

impl Geometry {
    pub fn new(design: &NormalDesign, prior: &NormalPrior) -> Self {
        Self::with_ratio(design, prior.variance_ratio(design))
    }

    pub fn with_ratio(design: &NormalDesign, a_c: f64) -> Self {
        Geometry {
            a_c,
            shrink: a_c / (1.0 + a_c),
            se_freq: design.se_diff(),
            se_bayes: (design.var_t() + design.var_c() / (1.0 + a_c)).sqrt(),
        }
    }

    /// Critical z that turns the Bayes test at `gamma` into a z-test.
    pub fn bayes_to_z(&self, mu_c: f64, ybar_c: f64, gamma: f64) -> f64 {
        self.bayes_tail_to_z(mu_c, ybar_c, TailProb::new(gamma))
    }

    pub fn bayes_tail_to_z(&self, mu_c: f64, ybar_c: f64, gamma: TailProb) -> f64 {
        let z_gamma = -gamma.z();
        if z_gamma.is_infinite() {
            return z_gamma;
        }
        ((mu_c - ybar_c) * self.shrink + z_gamma * self.se_bayes) / self.se_freq
    }

    /// Bayes threshold reproducing the z-test with critical value `z_crit`.
    pub fn z_to_gamma(&self, mu_c: f64, ybar_c: f64, z_crit: f64) -> f64 {
        self.z_to_gamma_tail(mu_c, ybar_c, z_crit).lower
    }

    pub fn z_to_gamma_tail(&self, mu_c: f64, ybar_c: f64, z_crit: f64) -> TailProb {
        if z_crit.is_infinite() {
            return TailProb::new(if z_crit > 0.0 { 0.0 } else { 1.0 });
        }
        TailProb::from_z(-((z_crit * self.se_freq + (ybar_c - mu_c) * self.shrink) / self.se_bayes))
    }
}

/// Critical z value for a frequentist threshold: z_{1−κ}, with κ ≤ 0 → +∞
/// and κ ≥ 1 → −∞.
pub fn critical_z(kappa: f64) -> f64 {
    -phi_inv(kappa)
}

/// Frequentist threshold for a critical z value, 1 − Φ(z).
pub fn kappa_from_z(z: f64) -> f64 {
    phi(-z)
}

pub fn posterior_delta(design: &NormalDesign, prior: &NormalPrior, data: &TwoArmNormalData) -> DeltaPosterior {
    let g = Geometry::new(design, prior);
    let control_mean = if prior.is_flat() {
        data.ybar_c
    } else {
        (prior.mu_c * g.a_c + data.ybar_c) / (1.0 + g.a_c)
    };
    DeltaPosterior { mean: data.ybar_t - control_mean, sd: g.se_bayes }
}

/// Bayes decision: reject when P(δ ≤ δ0 | y) ≤ γ.
pub fn bd_decision(design: &NormalDesign, prior: &NormalPrior, data: &TwoArmNormalData) -> BayesDecision {
    let prob_null = posterior_delta(design, prior, data).prob_null(design.delta0);
    BayesDecision { prob_null, reject: prob_null <= design.gamma }
}

/// Frequentist decision at level κ: reject when the one-sided p-value is ≤ κ.
pub fn fd_decision(design: &NormalDesign, data: &TwoArmNormalData, kappa: f64) -> bool {
    phi(-design.z_stat(data)) <= kappa
}

/// Critical z of the Bayes decision at the design's γ.
pub fn critical_z_bd(design: &NormalDesign, prior: &NormalPrior, ybar_c: f64) -> f64 {
    Geometry::new(design, prior).bayes_to_z(prior.mu_c, ybar_c, design.gamma)
}

/// κ^BD(ȳ_C): the z-test level that reproduces the Bayes decision.
pub fn kappa_bd(design: &NormalDesign, prior: &NormalPrior, ybar_c: f64) -> f64 {
    kappa_from_z(critical_z_bd(design, prior, ybar_c))
}

/// γ^FD(ȳ_C; κ): the Bayes threshold that reproduces the z-test at level κ.
pub fn gamma_fd(design: &NormalDesign, prior: &NormalPrior, ybar_c: f64, kappa: f64) -> f64 {
    Geometry::new(design, prior).z_to_gamma(prior.mu_c, ybar_c, critical_z(kappa))
}

/// γ^FD(ȳ_C; κ) with its complement.
pub fn gamma_fd_tail(design: &NormalDesign, prior: &NormalPrior, ybar_c: f64, kappa: f64) -> TailProb {
    Geometry::new(design, prior).z_to_gamma_tail(prior.mu_c, ybar_c, critical_z(kappa))
}

/// κ of the z-test reproducing the Bayes test at threshold `gamma`.
pub fn kappa_at_gamma(design: &NormalDesign, prior: &NormalPrior, ybar_c: f64, gamma: TailProb) -> f64 {
    kappa_from_z(Geometry::new(design, prior).bayes_tail_to_z(prior.mu_c, ybar_c, gamma))
}

/// Bayes test at threshold `gamma`: reject when P(δ ≤ δ0 | y) ≤ γ.
pub fn bayes_reject(design: &NormalDesign, prior: &NormalPrior, data: &TwoArmNormalData, gamma: TailProb) -> bool {
    posterior_delta(design, prior, data).null_tail(design.delta0).le(&gamma)
}

/// γ^CD(ȳ_C): Bayes threshold for a compromise threshold κ^CD(ȳ_C).
pub fn gamma_cd(design: &NormalDesign, prior: &NormalPrior, ybar_c: f64, kappa_cd: f64) -> f64 {
    gamma_fd(design, prior, ybar_c, kappa_cd)
}

/// Constraint rule: κ^BD clamped to [α^LOW, α^UP].
pub fn cdc_threshold(kappa_bd_value: f64, cfg: &CompromiseConfig) -> f64 {
    cfg.clamp(kappa_bd_value)
}

/// Critical z of the constraint rule, clamped directly on the z scale.
pub fn critical_z_cdc(design: &NormalDesign, prior: &NormalPrior, ybar_c: f64, cfg: &CompromiseConfig) -> f64 {
    let z = critical_z_bd(design, prior, ybar_c);
    z.max(critical_z(cfg.alpha_up)).min(critical_z(cfg.alpha_low))
}

fn require_borrowing(prior: &NormalPrior, design: &NormalDesign) -> Result<Geometry> {
    let g = Geometry::new(design, prior);
    if g.a_c <= 0.0 {
        return Err(Error::Undefined("flat control prior (A_C = 0): the thresholds never leave γ".into()));
    }
    Ok(g)
}

/// (ȳ_C^LOW, ȳ_C^UP): where κ^BD(ȳ_C) crosses α^LOW and α^UP.
pub fn conflict_bounds(design: &NormalDesign, prior: &NormalPrior, cfg: &CompromiseConfig) -> Result<(f64, f64)> {
    let g = require_borrowing(prior, design)?;
    let z_gamma = critical_z(design.gamma);
    let at = |alpha: f64| {
        let z = critical_z(alpha);
        if z.is_infinite() {
            // α = 0 / 1: the bound sits at ∓∞.
            return -z;
        }
        prior.mu_c - (z * g.se_freq - z_gamma * g.se_bayes) / g.shrink
    };
    Ok((at(cfg.alpha_low), at(cfg.alpha_up)))
}

/// The ȳ_C at which the Bayes and frequentist thresholds coincide
/// (κ^BD(ȳ_C) = γ).
pub fn equal_threshold_point(design: &NormalDesign, prior: &NormalPrior) -> Result<f64> {
    let g = require_borrowing(prior, design)?;
    let z_gamma = critical_z(design.gamma);
    Ok(prior.mu_c - z_gamma * (g.se_freq - g.se_bayes) / g.shrink)
}

/// Scale of the observed conflict, √(σ²/n_C + σ_C²).
pub fn conflict_scale(design: &NormalDesign, prior: &NormalPrior) -> f64 {
    (design.var_c() + prior.sd_c * prior.sd_c).sqrt()
}

/// Discard weight w ∈ [0, 1]: 0 keeps the Bayes threshold, 1 reverts to κ.
pub fn cdd_weight(design: &NormalDesign, prior: &NormalPrior, ybar_c: f64, cfg: &CompromiseConfig) -> f64 {
    if prior.is_flat() {
        return 1.0;
    }
    if cfg.freeze_w_below_mean && ybar_c <= prior.mu_c && kappa_bd(design, prior, ybar_c) >= design.kappa {
        return 0.0;
    }
    let scaled = (ybar_c - prior.mu_c).abs() / (cfg.t * conflict_scale(design, prior));
    if scaled >= 1.0 {
        return 1.0;
    }
    scaled.powf(cfg.p).min(1.0)
}

/// ln κ^CDD(ȳ_C), interpolated and clamped in log space.
fn ln_cdd(design: &NormalDesign, prior: &NormalPrior, ybar_c: f64, cfg: &CompromiseConfig) -> f64 {
    let w = cdd_weight(design, prior, ybar_c, cfg);
    let ln_bd = ln_phi(-critical_z_bd(design, prior, ybar_c));
    let ln_kappa = design.kappa.ln();
    let mixed = if w >= 1.0 {
        ln_kappa
    } else if w <= 0.0 {
        ln_bd
    } else {
        w * ln_kappa + (1.0 - w) * ln_bd
    };
    mixed.min(cfg.alpha_up.ln()).max(cfg.alpha_low.ln())
}

/// Discard rule: κ^w (κ^BD)^{1−w}, clamped to [α^LOW, α^UP].
pub fn cdd_threshold(design: &NormalDesign, prior: &NormalPrior, ybar_c: f64, cfg: &CompromiseConfig) -> f64 {
    ln_cdd(design, prior, ybar_c, cfg).exp()
}

pub fn critical_z_cdd(design: &NormalDesign, prior: &NormalPrior, ybar_c: f64, cfg: &CompromiseConfig) -> f64 {
    let ln_k = ln_cdd(design, prior, ybar_c, cfg);
    if ln_k == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    critical_z(ln_k.exp().max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{find_root, Tolerance};

    fn design20() -> NormalDesign {
        NormalDesign::balanced(20, 0.025).unwrap()
    }

    /// A_C = 0.5 at n = 20, σ = 1: σ_C² = 0.1.
    fn prior20() -> NormalPrior {
        NormalPrior::from_effective_n(0.0, 1.0, 10.0).unwrap()
    }

    fn z_data(design: &NormalDesign, ybar_c: f64, z: f64) -> TwoArmNormalData {
        TwoArmNormalData { ybar_c, ybar_t: ybar_c + design.delta0 + z * design.se_diff() }
    }

    #[test]
    fn tail_prob_keeps_precision_near_one() {
        let t = TailProb::from_z(9.0);
        assert_eq!(t.lower, 1.0);
        assert!(t.upper > 0.0 && (t.z() - 9.0).abs() < 1e-9);
        assert!(TailProb::from_z(8.5).le(&t) && !t.le(&TailProb::from_z(8.5)));
        assert!(TailProb::from_z(-3.0).le(&TailProb::new(0.5)));
        let d = NormalDesign::balanced(20, 0.025).unwrap();
        let p = prior20();
        for &y in &[-3.0, 0.0, 2.5, 6.0] {
            for &k in &[0.001, 0.025, 0.2] {
                let g = gamma_fd_tail(&d, &p, y, k);
                assert!((kappa_at_gamma(&d, &p, y, g) - k).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn variance_ratio_and_flat_prior() {
        assert!((prior20().variance_ratio(&design20()) - 0.5).abs() < 1e-15);
        assert_eq!(NormalPrior::flat(0.0).variance_ratio(&design20()), 0.0);
        assert!(NormalPrior::new(0.0, 0.0).is_err());
        assert!(NormalDesign::new(0, 10, 1.0, 0.0, 0.025, 0.025).is_err());
        assert!(NormalDesign::new(10, 10, 1.0, 0.0, 1.0, 0.025).is_err());
    }

    #[test]
    fn posterior_delta_examples() {
        let d = design20();
        let flat = posterior_delta(&d, &NormalPrior::flat(0.0), &TwoArmNormalData { ybar_c: 0.3, ybar_t: 0.8 });
        assert!((flat.mean - 0.5).abs() < 1e-15);
        assert!((flat.sd - 0.1f64.sqrt()).abs() < 1e-15);

        // Oracle: conjugate update of θ_C, then subtract from the flat-prior θ_T posterior.
        let (prior_var, data_var) = (0.1, 0.05);
        let post_var = 1.0 / (1.0 / prior_var + 1.0 / data_var);
        let post_mean = post_var * (0.0 / prior_var + 0.3 / data_var);
        let p = posterior_delta(&d, &prior20(), &TwoArmNormalData { ybar_c: 0.3, ybar_t: 0.8 });
        assert!((p.mean - (0.8 - post_mean)).abs() < 1e-14);
        assert!((p.sd - (0.05 + post_var).sqrt()).abs() < 1e-14);
        assert!((p.mean - 0.6).abs() < 1e-12);
        assert!((p.sd - 0.288675).abs() < 1e-6);

        let no_shift = posterior_delta(&d, &prior20(), &TwoArmNormalData { ybar_c: 0.0, ybar_t: 0.7 });
        assert!((no_shift.mean - 0.7).abs() < 1e-15);
    }

    #[test]
    fn bd_decision_examples() {
        let d = design20();
        let dec = bd_decision(&d, &prior20(), &TwoArmNormalData { ybar_c: 0.3, ybar_t: 0.8 });
        assert!((dec.prob_null - 0.0188).abs() < 5e-5);
        assert!(dec.reject);

        // Flat prior with γ = κ is the z-test.
        for i in -40..40 {
            let data = TwoArmNormalData { ybar_c: 0.1, ybar_t: 0.1 + i as f64 * 0.0173 };
            assert_eq!(bd_decision(&d, &NormalPrior::flat(0.0), &data).reject, fd_decision(&d, &data, d.kappa));
        }

        let at_margin = bd_decision(&d, &prior20(), &TwoArmNormalData { ybar_c: 0.0, ybar_t: 0.0 });
        assert_eq!(at_margin.prob_null, 0.5);
        assert!(!at_margin.reject);
    }

    #[test]
    fn bd_decision_matches_posterior_simulation() {
        use crate::numerics::{draw_normal, RngStream};
        let d = design20();
        let post = posterior_delta(&d, &prior20(), &TwoArmNormalData { ybar_c: 0.3, ybar_t: 0.8 });
        let n = 1_000_000;
        let draws = draw_normal(RngStream::new(3, 0), post.mean, post.sd, n).unwrap();
        let frac = draws.iter().filter(|&&x| x <= 0.0).count() as f64 / n as f64;
        let se = (frac * (1.0 - frac) / n as f64).sqrt();
        assert!((frac - post.prob_null(0.0)).abs() < 4.0 * se);
    }

    #[test]
    fn kappa_bd_examples() {
        let d = design20();
        assert!((kappa_bd(&d, &NormalPrior::flat(0.0), 0.7) - 0.025).abs() < 1e-15);
        assert!((kappa_bd(&d, &prior20(), 0.0) - 0.0368).abs() < 5e-5);
        assert!((kappa_bd(&d, &prior20(), 1.0) - 0.2311).abs() < 5e-5);
    }

    #[test]
    fn kappa_bd_decision_parity() {
        let d = design20();
        let p = prior20();
        for &ybar_c in &[-1.3, -0.4, 0.0, 0.25, 1.0, 2.2] {
            let k = kappa_bd(&d, &p, ybar_c);
            for j in -300..300 {
                let data = TwoArmNormalData { ybar_c, ybar_t: ybar_c + j as f64 * 0.00731 + 0.0001 };
                assert_eq!(bd_decision(&d, &p, &data).reject, fd_decision(&d, &data, k), "{ybar_c} {j}");
            }
        }
    }

    #[test]
    fn gamma_fd_examples() {
        let d = design20();
        assert!((gamma_fd(&d, &NormalPrior::flat(0.0), 0.4, 0.03) - 0.03).abs() < 1e-15);
        assert!((gamma_fd(&d, &prior20(), 0.0, 0.025) - 0.0159).abs() < 5e-5);

        // Parity: Bayes test at γ^FD equals the z-test at κ.
        let p = prior20();
        for &ybar_c in &[-0.8, 0.0, 0.6] {
            let g = gamma_fd(&d, &p, ybar_c, 0.025);
            for j in -200..200 {
                let data = TwoArmNormalData { ybar_c, ybar_t: ybar_c + j as f64 * 0.0091 + 0.0003 };
                let bayes = posterior_delta(&d, &p, &data).prob_null(d.delta0) <= g;
                assert_eq!(bayes, fd_decision(&d, &data, 0.025));
            }
        }
    }

    #[test]
    fn gamma_fd_inverts_kappa_bd() {
        let d = design20();
        let p = prior20();
        for i in 0..200 {
            let ybar_c = -1.5 + i as f64 * 0.0151;
            let g = gamma_fd(&d, &p, ybar_c, 0.025);
            let k = kappa_bd(&d.with_gamma(g), &p, ybar_c);
            assert!((k - 0.025).abs() < 1e-12, "{ybar_c}: {k}");
        }
    }

    #[test]
    fn cdc_threshold_clamps() {
        let cfg = CompromiseConfig::standard();
        assert_eq!(cdc_threshold(0.10, &cfg), 0.075);
        assert_eq!(cdc_threshold(0.005, &cfg), 0.01);
        assert_eq!(cdc_threshold(0.03, &cfg), 0.03);
    }

    #[test]
    fn conflict_bounds_match_bisection() {
        let d = design20();
        let p = prior20();
        let cfg = CompromiseConfig::standard();
        let (low, up) = conflict_bounds(&d, &p, &cfg).unwrap();
        // Values frozen from bisection on κ^BD − α.
        let tol = Tolerance::absolute(1e-13);
        let up_oracle = find_root(|y| kappa_bd(&d, &p, y) - 0.075, -5.0, 5.0, tol).unwrap();
        let low_oracle = find_root(|y| kappa_bd(&d, &p, y) - 0.01, -5.0, 5.0, tol).unwrap();
        assert!((up - 0.331_719_137_6).abs() < 1e-8);
        assert!((low + 0.509_588_772_4).abs() < 1e-8);
        assert!((up - up_oracle).abs() < 1e-10);
        assert!((low - low_oracle).abs() < 1e-10);
        assert!((kappa_bd(&d, &p, up) - 0.075).abs() < 1e-10);
        assert!((kappa_bd(&d, &p, low) - 0.01).abs() < 1e-10);
        assert!(matches!(conflict_bounds(&d, &NormalPrior::flat(0.0), &cfg), Err(Error::Undefined(_))));
    }

    #[test]
    fn equal_threshold_point_examples() {
        let d = design20();
        let p = prior20();
        let y = equal_threshold_point(&d, &p).unwrap();
        assert!((y + 0.16201).abs() < 5e-6);
        assert!((kappa_bd(&d, &p, y) - d.gamma).abs() < 1e-10);
        assert!(y < p.mu_c);
        let half = d.with_gamma(0.5);
        assert!((equal_threshold_point(&half, &p).unwrap() - p.mu_c).abs() < 1e-15);
        assert!(equal_threshold_point(&d, &NormalPrior::flat(0.0)).is_err());
    }

    #[test]
    fn cdd_weight_examples() {
        let d = design20();
        let p = prior20();
        let cfg = CompromiseConfig::standard();
        assert_eq!(cdd_weight(&d, &p, 0.0, &cfg), 0.0);
        let scale = (0.05f64 + 0.1).sqrt();
        assert_eq!(cdd_weight(&d, &p, 4.0 * scale + 1e-9, &cfg), 1.0);
        assert_eq!(cdd_weight(&d, &p, -5.0 * scale, &cfg), 1.0);
        assert!((cdd_weight(&d, &p, 0.774597, &cfg) - 0.0625).abs() < 1e-6);
        assert!((cdd_weight(&d, &p, 2.0 * scale, &cfg) - 0.0625).abs() < 1e-14);
    }

    #[test]
    fn cdd_weight_freeze_option() {
        let d = design20();
        let p = prior20();
        let mut cfg = CompromiseConfig::standard();
        // Between the equal-threshold point and μ_C, κ^BD ≥ κ.
        let y = -0.1;
        assert!(kappa_bd(&d, &p, y) >= d.kappa);
        assert!(cdd_weight(&d, &p, y, &cfg) > 0.0);
        cfg.freeze_w_below_mean = true;
        assert_eq!(cdd_weight(&d, &p, y, &cfg), 0.0);
        // Outside that range the option changes nothing.
        assert!(cdd_weight(&d, &p, -0.3, &cfg) > 0.0);
        assert!(cdd_weight(&d, &p, 0.3, &cfg) > 0.0);
    }

    #[test]
    fn cdd_threshold_examples() {
        let d = design20();
        let p = prior20();
        let cfg = CompromiseConfig::standard();
        // w = 0 at ȳ_C = μ_C: equals the constraint rule.
        assert!((cdd_threshold(&d, &p, 0.0, &cfg) - cdc_threshold(kappa_bd(&d, &p, 0.0), &cfg)).abs() < 1e-15);
        // w = 1 far away: κ.
        assert!((cdd_threshold(&d, &p, 3.0, &cfg) - 0.025).abs() < 1e-15);
        assert!((cdd_threshold(&d, &p, -3.0, &cfg) - 0.025).abs() < 1e-15);
        // Pre-clamp value at conflict 1 is 0.15707; clamped to α^UP.
        let w = cdd_weight(&d, &p, 1.0, &cfg);
        assert!((w - 0.17361).abs() < 1e-5);
        let pre = (w * 0.025f64.ln() + (1.0 - w) * kappa_bd(&d, &p, 1.0).ln()).exp();
        assert!((pre - 0.15707).abs() < 5e-5);
        assert_eq!(cdd_threshold(&d, &p, 1.0, &cfg), 0.075);
    }

    #[test]
    fn cdd_threshold_survives_tiny_kappa_bd() {
        let d = design20();
        let p = prior20();
        let cfg = CompromiseConfig { alpha_low: 0.0, alpha_up: 1.0, t: 1e6, p: 1.0, freeze_w_below_mean: false };
        // κ^BD underflows far below μ_C; the log-space path stays finite.
        let z = critical_z_cdd(&d, &p, -60.0, &cfg);
        assert!(z.is_finite() && z > 30.0);
    }

    #[test]
    fn gamma_cd_examples() {
        let d = design20();
        let p = prior20();
        for &y in &[-1.0, 0.0, 0.5] {
            assert!((gamma_cd(&d, &p, y, kappa_bd(&d, &p, y)) - d.gamma).abs() < 1e-12);
        }
        assert!((gamma_cd(&d, &NormalPrior::flat(0.0), 0.4, 0.06) - 0.06).abs() < 1e-15);
    }

    #[test]
    fn z_scale_clamp_matches_probability_clamp() {
        let d = design20();
        let p = prior20();
        let cfg = CompromiseConfig::standard();
        for i in 0..400 {
            let y = -3.0 + i as f64 * 0.015;
            let via_prob = critical_z(cdc_threshold(kappa_bd(&d, &p, y), &cfg));
            assert!((critical_z_cdc(&d, &p, y, &cfg) - via_prob).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_constraint_equals_bayes() {
        let d = design20();
        let p = prior20();
        let cfg = CompromiseConfig { alpha_low: 0.0, alpha_up: 1.0, ..CompromiseConfig::standard() };
        for i in 0..100 {
            let y = -4.0 + i as f64 * 0.08;
            assert_eq!(critical_z_cdc(&d, &p, y, &cfg), critical_z_bd(&d, &p, y));
            for j in -5..5 {
                let data = z_data(&d, y, critical_z_bd(&d, &p, y) + j as f64 * 0.1 + 0.05);
                let z = d.z_stat(&data);
                assert_eq!(z >= critical_z_cdc(&d, &p, y, &cfg), bd_decision(&d, &p, &data).reject);
            }
        }
    }

    #[test]
    fn flat_prior_reductions() {
        let d = design20();
        let flat = NormalPrior::flat(0.0);
        let cfg = CompromiseConfig::standard();
        for &y in &[-2.0, 0.0, 1.5] {
            assert!((kappa_bd(&d, &flat, y) - d.gamma).abs() < 1e-15);
            assert!((gamma_fd(&d, &flat, y, d.kappa) - d.kappa).abs() < 1e-15);
            assert!((cdc_threshold(kappa_bd(&d, &flat, y), &cfg) - cfg.clamp(d.gamma)).abs() < 1e-15);
            assert!((cdd_threshold(&d, &flat, y, &cfg) - d.kappa).abs() < 1e-15);
        }
    }
}
