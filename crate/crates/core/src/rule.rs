//! Normal-outcome decision rules behind one interface.
//!
//! Each rule maps ȳ_C to a critical value for the two-sample z statistic and
//! can also decide natively (posterior probability or p-value) from the
//! sufficient statistics, which Monte Carlo uses as an independent route.

use serde::{Deserialize, Serialize};

use crate::borrow::{
    ebpow_critical_z, eb_zeta, pp_critical_z, rm_critical_value, rm_decision, MixturePrior, PowerPriorSpec,
};
use crate::error::{Error, Result};
use crate::normal::{
    bayes_reject, bd_decision, critical_z, critical_z_bd, critical_z_cdc, critical_z_cdd, fd_decision, gamma_fd_tail,
    kappa_from_z, CompromiseConfig, Geometry, TailProb, NormalDesign, NormalPrior, TwoArmNormalData,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DecisionRule {
    Fd,
    Bd,
    Cdc {
        #[serde(flatten)]
        cfg: CompromiseConfig,
    },
    Cdd {
        #[serde(flatten)]
        cfg: CompromiseConfig,
    },
    PowerPrior {
        zeta: f64,
    },
    EbPow,
    /// Mixture of the informative prior and a unit-information component.
    RmUnit {
        weight: f64,
    },
    /// Bayes test with the data-dependent threshold γ^FD(ȳ_C; α*), which
    /// reproduces the level-α* z-test.
    CalibratedBayes {
        alpha_star: f64,
    },
}

/// Parameter varied when recalibrating a rule's maximum type I error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Knob {
    Gamma,
    Kappa,
    AlphaUp,
}

/// Design and analysis prior a rule is evaluated under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleContext {
    pub design: NormalDesign,
    pub prior: NormalPrior,
}

impl DecisionRule {
    pub fn label(&self) -> String {
        match self {
            DecisionRule::Fd => "FD".into(),
            DecisionRule::Bd => "BD".into(),
            DecisionRule::Cdc { .. } => "CDC".into(),
            DecisionRule::Cdd { .. } => "CDD".into(),
            DecisionRule::PowerPrior { zeta } => format!("PP(zeta={zeta})"),
            DecisionRule::EbPow => "EBPowD".into(),
            DecisionRule::RmUnit { weight } => format!("RMD-Unit(w={weight})"),
            DecisionRule::CalibratedBayes { alpha_star } => format!("BD-calibrated(alpha={alpha_star})"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DecisionRule::Cdc { cfg } | DecisionRule::Cdd { cfg } => cfg.validate(),
            DecisionRule::PowerPrior { zeta } if !(0.0..=1.0).contains(zeta) => {
                Err(Error::domain(format!("zeta must lie in [0, 1], got {zeta}")))
            }
            DecisionRule::RmUnit { weight } if !(0.0..=1.0).contains(weight) => {
                Err(Error::domain(format!("mixture weight must lie in [0, 1], got {weight}")))
            }
            DecisionRule::CalibratedBayes { alpha_star } if !(*alpha_star > 0.0 && *alpha_star < 1.0) => {
                Err(Error::domain(format!("alpha_star must lie in (0, 1), got {alpha_star}")))
            }
            _ => Ok(()),
        }
    }

    pub fn knob(&self) -> Knob {
        match self {
            DecisionRule::Fd | DecisionRule::CalibratedBayes { .. } => Knob::Kappa,
            DecisionRule::Cdc { .. } | DecisionRule::Cdd { .. } => Knob::AlphaUp,
            _ => Knob::Gamma,
        }
    }

    pub fn knob_value(&self, design: &NormalDesign) -> f64 {
        match (self, self.knob()) {
            (DecisionRule::CalibratedBayes { alpha_star }, _) => *alpha_star,
            (DecisionRule::Cdc { cfg } | DecisionRule::Cdd { cfg }, _) => cfg.alpha_up,
            (_, Knob::Kappa) => design.kappa,
            _ => design.gamma,
        }
    }

    /// Copy of the rule and design with the knob set to `value`.
    pub fn with_knob(&self, design: &NormalDesign, value: f64) -> (DecisionRule, NormalDesign) {
        match *self {
            DecisionRule::Fd => (DecisionRule::Fd, design.with_kappa(value)),
            DecisionRule::CalibratedBayes { .. } => (DecisionRule::CalibratedBayes { alpha_star: value }, *design),
            DecisionRule::Cdc { cfg } => (DecisionRule::Cdc { cfg: CompromiseConfig { alpha_up: value, ..cfg } }, *design),
            DecisionRule::Cdd { cfg } => (DecisionRule::Cdd { cfg: CompromiseConfig { alpha_up: value, ..cfg } }, *design),
            other => (other, design.with_gamma(value)),
        }
    }
}

impl RuleContext {
    pub fn new(design: NormalDesign, prior: NormalPrior) -> Result<Self> {
        design.validate()?;
        Ok(RuleContext { design, prior })
    }

    fn mixture(&self, weight: f64) -> Result<MixturePrior> {
        MixturePrior::unit_information(weight, self.prior, self.design.sigma)
    }

    /// Critical value z_{1−κ^R(ȳ_C)}: reject iff Z ≥ it.
    pub fn critical_z(&self, rule: &DecisionRule, ybar_c: f64) -> Result<f64> {
        let (d, p) = (&self.design, &self.prior);
        Ok(match rule {
            DecisionRule::Fd => critical_z(d.kappa),
            DecisionRule::Bd => critical_z_bd(d, p, ybar_c),
            DecisionRule::Cdc { cfg } => critical_z_cdc(d, p, ybar_c, cfg),
            DecisionRule::Cdd { cfg } => critical_z_cdd(d, p, ybar_c, cfg),
            DecisionRule::PowerPrior { zeta } => pp_critical_z(d, &PowerPriorSpec::new(*p, *zeta)?, ybar_c),
            DecisionRule::EbPow => ebpow_critical_z(d, p, ybar_c)?,
            DecisionRule::RmUnit { weight } => rm_critical_value(d, &self.mixture(*weight)?, ybar_c)?,
            DecisionRule::CalibratedBayes { alpha_star } => {
                Geometry::new(d, p).bayes_tail_to_z(p.mu_c, ybar_c, gamma_fd_tail(d, p, ybar_c, *alpha_star))
            }
        })
    }

    /// κ^R(ȳ_C), the level of the z-test that reproduces the rule.
    pub fn kappa(&self, rule: &DecisionRule, ybar_c: f64) -> Result<f64> {
        self.critical_z(rule, ybar_c).map(kappa_from_z)
    }

    /// γ^R(ȳ_C), the Bayes threshold under the informative prior that
    /// reproduces the rule.
    pub fn gamma(&self, rule: &DecisionRule, ybar_c: f64) -> Result<f64> {
        self.gamma_tail(rule, ybar_c).map(|t| t.lower)
    }

    /// γ^R(ȳ_C) with its complement, for thresholds near 1.
    pub fn gamma_tail(&self, rule: &DecisionRule, ybar_c: f64) -> Result<TailProb> {
        let z = self.critical_z(rule, ybar_c)?;
        Ok(Geometry::new(&self.design, &self.prior).z_to_gamma_tail(self.prior.mu_c, ybar_c, z))
    }

    /// Reject iff Z ≥ z_{1−κ^R(ȳ_C)}.
    pub fn decide(&self, rule: &DecisionRule, data: &TwoArmNormalData) -> Result<bool> {
        Ok(self.design.z_stat(data) >= self.critical_z(rule, data.ybar_c)?)
    }

    /// Decision taken the way the rule is defined: by posterior probability
    /// for the Bayes-type rules and by p-value for the others.
    pub fn decide_native(&self, rule: &DecisionRule, data: &TwoArmNormalData) -> Result<bool> {
        let (d, p) = (&self.design, &self.prior);
        Ok(match rule {
            DecisionRule::Fd => fd_decision(d, data, d.kappa),
            DecisionRule::Bd => bd_decision(d, p, data).reject,
            DecisionRule::Cdc { .. } | DecisionRule::Cdd { .. } => {
                fd_decision(d, data, self.kappa(rule, data.ybar_c)?)
            }
            DecisionRule::PowerPrior { zeta } => {
                let prior = PowerPriorSpec::new(*p, *zeta)?.effective_prior();
                bd_decision(d, &prior, data).reject
            }
            DecisionRule::EbPow => {
                let spec = PowerPriorSpec { base: *p, zeta: eb_zeta(d, p, data.ybar_c)? };
                bd_decision(d, &spec.effective_prior(), data).reject
            }
            DecisionRule::RmUnit { weight } => rm_decision(d, &self.mixture(*weight)?, data).reject,
            DecisionRule::CalibratedBayes { alpha_star } => {
                bayes_reject(d, p, data, gamma_fd_tail(d, p, data.ybar_c, *alpha_star))
            }
        })
    }

    /// Points of ȳ_C where the critical value has a kink, for quadrature.
    pub fn breakpoints(&self, rule: &DecisionRule) -> Vec<f64> {
        let (d, p) = (&self.design, &self.prior);
        let mut out = Vec::new();
        if p.is_flat() {
            return out;
        }
        let scale = (d.var_c() + p.sd_c * p.sd_c).sqrt();
        match rule {
            DecisionRule::Cdc { cfg } | DecisionRule::Cdd { cfg } => {
                if let Ok((lo, hi)) = crate::normal::conflict_bounds(d, p, cfg) {
                    out.extend([lo, hi]);
                }
                if let DecisionRule::Cdd { cfg } = rule {
                    out.extend([p.mu_c - cfg.t * scale, p.mu_c + cfg.t * scale]);
                    // The clamp on the interpolated threshold can bind anywhere;
                    // a few extra cuts keep the panels short.
                    for k in 1..8 {
                        let u = cfg.t * scale * k as f64 / 8.0;
                        out.extend([p.mu_c - u, p.mu_c + u]);
                    }
                    if cfg.freeze_w_below_mean {
                        out.push(p.mu_c);
                        if let Ok(y) = crate::normal::equal_threshold_point(d, p) {
                            out.push(y);
                        }
                    }
                }
            }
            DecisionRule::EbPow => {
                let edge = (d.var_c() + p.sd_c * p.sd_c).sqrt();
                out.extend([p.mu_c - edge, p.mu_c + edge]);
            }
            _ => {}
        }
        out.retain(|x| x.is_finite());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use rand::Rng;

    fn ctx() -> RuleContext {
        RuleContext::new(
            NormalDesign::balanced(20, 0.025).unwrap(),
            NormalPrior::from_effective_n(0.0, 1.0, 10.0).unwrap(),
        )
        .unwrap()
    }

    fn all_rules() -> Vec<DecisionRule> {
        let cfg = CompromiseConfig::standard();
        vec![
            DecisionRule::Fd,
            DecisionRule::Bd,
            DecisionRule::Cdc { cfg },
            DecisionRule::Cdd { cfg },
            DecisionRule::PowerPrior { zeta: 0.5 },
            DecisionRule::EbPow,
            DecisionRule::RmUnit { weight: 0.7 },
            DecisionRule::CalibratedBayes { alpha_star: 0.025 },
        ]
    }

    #[test]
    fn native_and_threshold_decisions_agree() {
        let c = ctx();
        let mut rng = RngStream::new(17, 2).rng();
        for rule in all_rules() {
            let mut checked = 0;
            for _ in 0..3000 {
                let ybar_c: f64 = rng.gen_range(-2.5..2.5);
                let z: f64 = rng.gen_range(-1.0..5.0);
                let data = TwoArmNormalData { ybar_c, ybar_t: ybar_c + z * c.design.se_diff() };
                let z_crit = c.critical_z(&rule, ybar_c).unwrap();
                if (z - z_crit).abs() < 1e-7 {
                    continue;
                }
                checked += 1;
                assert_eq!(c.decide(&rule, &data).unwrap(), c.decide_native(&rule, &data).unwrap(), "{}", rule.label());
            }
            assert!(checked > 2900);
        }
    }

    #[test]
    fn calibrated_bayes_is_the_z_test() {
        let c = ctx();
        for i in 0..50 {
            let y = -3.0 + i as f64 * 0.12;
            let z = c.critical_z(&DecisionRule::CalibratedBayes { alpha_star: 0.025 }, y).unwrap();
            assert!((z - critical_z(0.025)).abs() < 1e-10);
        }
    }

    #[test]
    fn gamma_of_bd_is_constant() {
        let c = ctx();
        for &y in &[-1.0, 0.0, 1.0] {
            assert!((c.gamma(&DecisionRule::Bd, y).unwrap() - 0.025).abs() < 1e-12);
            assert!((c.kappa(&DecisionRule::Fd, y).unwrap() - 0.025).abs() < 1e-15);
        }
    }

    #[test]
    fn knobs() {
        let c = ctx();
        let cfg = CompromiseConfig::standard();
        let (r, d) = DecisionRule::Fd.with_knob(&c.design, 0.05);
        assert_eq!((r.knob_value(&d), d.kappa), (0.05, 0.05));
        let (r, d) = DecisionRule::Bd.with_knob(&c.design, 0.01);
        assert_eq!((r.knob_value(&d), d.gamma), (0.01, 0.01));
        let (r, _) = DecisionRule::Cdd { cfg }.with_knob(&c.design, 0.1);
        assert_eq!(r, DecisionRule::Cdd { cfg: CompromiseConfig { alpha_up: 0.1, ..cfg } });
        assert_eq!(DecisionRule::RmUnit { weight: 0.5 }.knob(), Knob::Gamma);
        assert!(DecisionRule::RmUnit { weight: 1.5 }.validate().is_err());
    }

    #[test]
    fn rules_deserialize() {
        let r: DecisionRule = serde_json::from_str(r#"{"rule":"cdd","alpha_low":0.01,"alpha_up":0.075,"t":4,"p":4}"#).unwrap();
        assert_eq!(r, DecisionRule::Cdd { cfg: CompromiseConfig::standard() });
        let r: DecisionRule = serde_json::from_str(r#"{"rule":"rm_unit","weight":0.7}"#).unwrap();
        assert_eq!(r, DecisionRule::RmUnit { weight: 0.7 });
    }
}
