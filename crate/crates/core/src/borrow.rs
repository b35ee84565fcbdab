//! Dynamic-borrowing rules that compete with the compromise decisions:
//! a fixed power prior, the empirical-Bayes power prior and a robust
//! mixture prior with a unit-information component.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::{kappa_from_z, BayesDecision, Geometry, NormalDesign, NormalPrior, TwoArmNormalData};
use crate::numerics::{find_root, phi, Tolerance};

/// Informative control prior with its likelihood discounted by ζ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPriorSpec {
    pub base: NormalPrior,
    pub zeta: f64,
}

impl PowerPriorSpec {
    pub fn new(base: NormalPrior, zeta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&zeta) {
            return Err(Error::domain(format!("zeta must lie in [0, 1], got {zeta}")));
        }
        Ok(PowerPriorSpec { base, zeta })
    }

    /// The discounted prior N(μ_C, σ_C/√ζ).
    pub fn effective_prior(&self) -> NormalPrior {
        if self.zeta == 0.0 {
            NormalPrior::flat(self.base.mu_c)
        } else {
            NormalPrior { mu_c: self.base.mu_c, sd_c: self.base.sd_c / self.zeta.sqrt() }
        }
    }
}

pub fn pp_critical_z(design: &NormalDesign, spec: &PowerPriorSpec, ybar_c: f64) -> f64 {
    let a = spec.base.variance_ratio(design) * spec.zeta;
    Geometry::with_ratio(design, a).bayes_to_z(spec.base.mu_c, ybar_c, design.gamma)
}

/// κ^PP(ȳ_C, ζ): the Bayes threshold with A_C replaced by ζ·A_C.
pub fn pp_threshold(design: &NormalDesign, spec: &PowerPriorSpec, ybar_c: f64) -> f64 {
    kappa_from_z(pp_critical_z(design, spec, ybar_c))
}

/// Marginal-likelihood estimate of ζ.
///
/// ȳ_C ~ N(μ_C, σ²/n_C + σ_C²/ζ) is maximised where the marginal variance
/// equals the squared conflict, clamped to ζ ≤ 1.
pub fn eb_zeta(design: &NormalDesign, prior: &NormalPrior, ybar_c: f64) -> Result<f64> {
    if prior.is_flat() {
        return Err(Error::Undefined("empirical-Bayes power needs an informative prior".into()));
    }
    let d2 = (ybar_c - prior.mu_c).powi(2);
    let prior_var = prior.sd_c * prior.sd_c;
    let excess = d2 - design.var_c();
    if excess <= prior_var {
        return Ok(1.0);
    }
    Ok(prior_var / excess)
}

pub fn ebpow_critical_z(design: &NormalDesign, prior: &NormalPrior, ybar_c: f64) -> Result<f64> {
    let zeta = eb_zeta(design, prior, ybar_c)?;
    Ok(pp_critical_z(design, &PowerPriorSpec { base: *prior, zeta }, ybar_c))
}

pub fn ebpow_threshold(design: &NormalDesign, prior: &NormalPrior, ybar_c: f64) -> Result<f64> {
    ebpow_critical_z(design, prior, ybar_c).map(kappa_from_z)
}

/// Two-component Normal mixture prior for θ_C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixturePrior {
    pub weight: f64,
    pub informative: NormalPrior,
    pub robust: NormalPrior,
}

impl MixturePrior {
    pub fn new(weight: f64, informative: NormalPrior, robust: NormalPrior) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::domain(format!("mixture weight must lie in [0, 1], got {weight}")));
        }
        if informative.is_flat() || robust.is_flat() {
            return Err(Error::domain("mixture components must be proper"));
        }
        if robust.sd_c < informative.sd_c {
            return Err(Error::domain("robust component must be at least as dispersed as the informative one"));
        }
        Ok(MixturePrior { weight, informative, robust })
    }

    /// Robust component N(μ_C, σ), worth one observation.
    pub fn unit_information(weight: f64, informative: NormalPrior, sigma: f64) -> Result<Self> {
        Self::new(weight, informative, NormalPrior::new(informative.mu_c, sigma)?)
    }

    fn components(&self) -> [(f64, NormalPrior); 2] {
        [(self.weight, self.informative), (1.0 - self.weight, self.robust)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalComponent {
    pub mean: f64,
    pub sd: f64,
}

/// Posterior of θ_C under a mixture prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixturePosterior {
    pub weights: [f64; 2],
    pub components: [NormalComponent; 2],
}

impl MixturePosterior {
    pub fn mean(&self) -> f64 {
        self.weights[0] * self.components[0].mean + self.weights[1] * self.components[1].mean
    }
}

fn ln_normal_density(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((x - mean).powi(2) / var + var.ln() + (2.0 * std::f64::consts::PI).ln())
}

pub fn rm_posterior(design: &NormalDesign, prior: &MixturePrior, ybar_c: f64) -> MixturePosterior {
    let data_var = design.var_c();
    let mut ln_w = [0.0; 2];
    let mut components = [NormalComponent { mean: 0.0, sd: 0.0 }; 2];
    for (k, (w, comp)) in prior.components().into_iter().enumerate() {
        let tau2 = comp.sd_c * comp.sd_c;
        ln_w[k] = if w > 0.0 { w.ln() + ln_normal_density(ybar_c, comp.mu_c, data_var + tau2) } else { f64::NEG_INFINITY };
        let var = 1.0 / (1.0 / tau2 + 1.0 / data_var);
        components[k] = NormalComponent { mean: var * (comp.mu_c / tau2 + ybar_c / data_var), sd: var.sqrt() };
    }
    let top = ln_w[0].max(ln_w[1]);
    let e = [(ln_w[0] - top).exp(), (ln_w[1] - top).exp()];
    let total = e[0] + e[1];
    MixturePosterior { weights: [e[0] / total, e[1] / total], components }
}

/// P(δ ≤ δ0 | y) under the mixture prior on θ_C and a flat prior on θ_T.
pub fn rm_prob_null(design: &NormalDesign, post: &MixturePosterior, ybar_t: f64) -> f64 {
    let var_t = design.var_t();
    post.weights
        .iter()
        .zip(post.components.iter())
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, c)| w * phi((design.delta0 - ybar_t + c.mean) / (var_t + c.sd * c.sd).sqrt()))
        .sum()
}

pub fn rm_decision(design: &NormalDesign, prior: &MixturePrior, data: &TwoArmNormalData) -> BayesDecision {
    let post = rm_posterior(design, prior, data.ybar_c);
    let prob_null = rm_prob_null(design, &post, data.ybar_t);
    BayesDecision { prob_null, reject: prob_null <= design.gamma }
}

/// Smallest z statistic that rejects under the mixture prior at ȳ_C.
pub fn rm_critical_value(design: &NormalDesign, prior: &MixturePrior, ybar_c: f64) -> Result<f64> {
    let post = rm_posterior(design, prior, ybar_c);
    let se = design.se_diff();
    let gamma = design.gamma;
    let f = |ybar_t: f64| rm_prob_null(design, &post, ybar_t) - gamma;

    let spread = post
        .components
        .iter()
        .map(|c| (design.var_t() + c.sd * c.sd).sqrt())
        .fold(0.0, f64::max);
    let center = design.delta0 + post.mean();
    let mut half = 10.0 * spread;
    let (mut lo, mut hi) = (center - half, center + half);
    let mut widenings = 0;
    while !(f(lo) > 0.0 && f(hi) <= 0.0) {
        widenings += 1;
        if widenings > 60 {
            return Err(Error::Bracketing { lo, hi, f_lo: f(lo), f_hi: f(hi) });
        }
        half *= 2.0;
        lo = center - half;
        hi = center + half;
    }
    if f(lo) < f(hi) {
        return Err(Error::InvariantViolation("mixture posterior null probability is not decreasing in ybar_T".into()));
    }
    let root = find_root(f, lo, hi, Tolerance::absolute(1e-10 * se))?;
    Ok((root - ybar_c - design.delta0) / se)
}

pub fn rm_threshold(design: &NormalDesign, prior: &MixturePrior, ybar_c: f64) -> Result<f64> {
    rm_critical_value(design, prior, ybar_c).map(kappa_from_z)
}
