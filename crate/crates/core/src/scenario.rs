//! Configuration-driven scenario runs.
//!
//! A scenario is a JSON document naming a design, a prior, a list of rules
//! and an evaluation grid. Runs write `results.csv` and `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::binomial::{enumerate_oc, BetaPrior, BinomialDesign, BinomialRule, ConflictScale, ExternalData, ProbabilityTable};
use crate::normal::{CompromiseConfig, NormalDesign, NormalPrior};
use crate::numerics::RngStream;
use crate::oc::{
    average_oc, average_oc_mc, linspace, power_bd_closed, power_fd_closed, power_rule_mc, power_rule_quadrature,
    recalibrate_max_tie, Estimator, GeneralTwoArmPrior, Recalibration,
};
use crate::rule::{DecisionRule, RuleContext};

pub const CSV_HEADER: [&str; 9] =
    ["scenario_id", "rule", "theta_C", "delta", "metric", "value", "mc_se", "estimator", "reps"];

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{field}: {message}")]
    Config { field: String, message: String },

    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Compute(#[from] crate::Error),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl From<csv::Error> for ScenarioError {
    fn from(e: csv::Error) -> Self {
        ScenarioError::Io { path: PathBuf::new(), source: std::io::Error::other(e.to_string()) }
    }
}

pub type ScenarioResult<T> = std::result::Result<T, ScenarioError>;

fn field_err(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Config { field: field.into(), message: message.into() }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Normal,
    Binomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    ClosedForm,
    Quadrature,
    MonteCarlo,
    Enumeration,
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "closed_form" => Ok(Engine::ClosedForm),
            "quadrature" => Ok(Engine::Quadrature),
            "monte_carlo" => Ok(Engine::MonteCarlo),
            "enumeration" => Ok(Engine::Enumeration),
            _ => Err(format!("unknown engine `{s}` (closed_form, quadrature, monte_carlo, enumeration)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub n_c: u32,
    pub n_t: u32,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub delta0: f64,
}

/// Normal outcomes use `mu_c` with one of `n0_c` or `sd_c`. Binomial
/// outcomes use the external data `y0_c`/`n0_c` on top of a Beta(`a_c`,
/// `b_c`) reference prior (Jeffreys by default).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    #[serde(default)]
    pub mu_c: Option<f64>,
    #[serde(default)]
    pub n0_c: Option<f64>,
    #[serde(default)]
    pub sd_c: Option<f64>,
    #[serde(default)]
    pub y0_c: Option<u32>,
    #[serde(default)]
    pub a_c: Option<f64>,
    #[serde(default)]
    pub b_c: Option<f64>,
    #[serde(default)]
    pub a_t: Option<f64>,
    #[serde(default)]
    pub b_t: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    Fd,
    Bd,
    Cdc,
    Cdd,
    PowerPrior,
    EbPow,
    RmUnit,
    CalibratedBayes,
}

impl RuleName {
    fn as_str(&self) -> &'static str {
        match self {
            RuleName::Fd => "fd",
            RuleName::Bd => "bd",
            RuleName::Cdc => "cdc",
            RuleName::Cdd => "cdd",
            RuleName::PowerPrior => "power_prior",
            RuleName::EbPow => "eb_pow",
            RuleName::RmUnit => "rm_unit",
            RuleName::CalibratedBayes => "calibrated_bayes",
        }
    }
}

/// One rule with its parameters. Levels default to 0.025 and the compromise
/// settings to α^LOW = 0.01, α^UP = 0.075, t = p = 4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSpec {
    pub rule: RuleName,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub alpha_low: Option<f64>,
    #[serde(default)]
    pub alpha_up: Option<f64>,
    #[serde(default)]
    pub t: Option<f64>,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub freeze_w_below_mean: Option<bool>,
    #[serde(default)]
    pub zeta: Option<f64>,
    #[serde(default)]
    pub weight: Option<f64>,
    #[serde(default)]
    pub alpha_star: Option<f64>,
    #[serde(default)]
    pub scale: Option<ConflictScale>,
    #[serde(default)]
    pub robust_a: Option<f64>,
    #[serde(default)]
    pub robust_b: Option<f64>,
}

impl RuleSpec {
    pub fn new(rule: RuleName) -> Self {
        RuleSpec {
            rule,
            label: None,
            gamma: None,
            kappa: None,
            alpha_low: None,
            alpha_up: None,
            t: None,
            p: None,
            freeze_w_below_mean: None,
            zeta: None,
            weight: None,
            alpha_star: None,
            scale: None,
            robust_a: None,
            robust_b: None,
        }
    }

    fn present(&self) -> Vec<&'static str> {
        let flags = [
            ("gamma", self.gamma.is_some()),
            ("kappa", self.kappa.is_some()),
            ("alpha_low", self.alpha_low.is_some()),
            ("alpha_up", self.alpha_up.is_some()),
            ("t", self.t.is_some()),
            ("p", self.p.is_some()),
            ("freeze_w_below_mean", self.freeze_w_below_mean.is_some()),
            ("zeta", self.zeta.is_some()),
            ("weight", self.weight.is_some()),
            ("alpha_star", self.alpha_star.is_some()),
            ("scale", self.scale.is_some()),
            ("robust_a", self.robust_a.is_some()),
            ("robust_b", self.robust_b.is_some()),
        ];
        flags.iter().filter(|(_, on)| *on).map(|(n, _)| *n).collect()
    }

    fn allowed(&self, outcome: Outcome) -> Option<&'static [&'static str]> {
        use RuleName::*;
        Some(match (outcome, self.rule) {
            (_, Fd) => &["kappa"],
            (_, Bd) => &["gamma"],
            (_, Cdc) => &["gamma", "alpha_low", "alpha_up"],
            (Outcome::Normal, Cdd) => &["gamma", "kappa", "alpha_low", "alpha_up", "t", "p", "freeze_w_below_mean"],
            (Outcome::Binomial, Cdd) => &["gamma", "kappa", "alpha_low", "alpha_up", "t", "p", "scale"],
            (Outcome::Normal, PowerPrior) => &["gamma", "zeta"],
            (Outcome::Normal, EbPow) => &["gamma"],
            (Outcome::Normal, RmUnit) => &["gamma", "weight"],
            (Outcome::Binomial, RmUnit) => &["gamma", "weight", "robust_a", "robust_b"],
            (Outcome::Normal, CalibratedBayes) => &["alpha_star"],
            (Outcome::Binomial, PowerPrior | EbPow | CalibratedBayes) => return None,
        })
    }

    fn compromise(&self, field: &str) -> ScenarioResult<CompromiseConfig> {
        let s = CompromiseConfig::standard();
        let cfg = CompromiseConfig {
            alpha_low: self.alpha_low.unwrap_or(s.alpha_low),
            alpha_up: self.alpha_up.unwrap_or(s.alpha_up),
            t: self.t.unwrap_or(s.t),
            p: self.p.unwrap_or(s.p),
            freeze_w_below_mean: self.freeze_w_below_mean.unwrap_or(false),
        };
        cfg.validate().map_err(|e| field_err(field, e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// θ_C − μ_C range.
    #[serde(default)]
    pub conflict: Option<[f64; 2]>,
    /// Absolute θ_C range.
    #[serde(default)]
    pub theta_c: Option<[f64; 2]>,
    pub points: usize,
    pub deltas: Vec<f64>,
}

/// Sampling prior for averaged operating characteristics. Missing fields
/// fall back to the analysis prior.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AverageSpec {
    #[serde(default)]
    pub mu_c: Option<f64>,
    #[serde(default)]
    pub sd_c: Option<f64>,
    #[serde(default)]
    pub n0_c: Option<f64>,
}

/// Retune every rule so its maximum type I error over the conflict range
/// equals `target` before evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSpec {
    pub target: f64,
    pub conflict: [f64; 2],
    pub points: usize,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario_id: String,
    pub outcome: Outcome,
    pub design: DesignSpec,
    pub prior: PriorSpec,
    pub rules: Vec<RuleSpec>,
    pub grid: GridSpec,
    pub engine: Engine,
    #[serde(default)]
    pub reps: Option<u64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub average: Option<AverageSpec>,
    #[serde(default)]
    pub calibrate: Option<CalibrateSpec>,
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reps: Option<u64>,
    pub engine: Option<Engine>,
}

/// A config after validation, with rules turned into evaluators.
#[derive(Debug, Clone)]
pub enum Resolved {
    Normal {
        prior: NormalPrior,
        rules: Vec<NormalEntry>,
        average: Option<NormalPrior>,
    },
    Binomial {
        design: BinomialDesign,
        rules: Vec<BinomialEntry>,
    },
}

#[derive(Debug, Clone)]
pub struct NormalEntry {
    pub label: String,
    pub rule: DecisionRule,
    pub design: NormalDesign,
}

#[derive(Debug, Clone)]
pub struct BinomialEntry {
    pub label: String,
    pub rule: BinomialRule,
    pub gamma: f64,
    pub kappa: f64,
}

fn check_prob(field: &str, v: Option<f64>) -> ScenarioResult<f64> {
    let v = v.unwrap_or(0.025);
    if !(v > 0.0 && v < 1.0) {
        return Err(field_err(field, format!("must lie in (0, 1), got {v}")));
    }
    Ok(v)
}

fn require<T>(field: &str, v: Option<T>) -> ScenarioResult<T> {
    v.ok_or_else(|| field_err(field, "required"))
}

fn forbid(field: &str, present: bool, why: &str) -> ScenarioResult<()> {
    if present {
        return Err(field_err(field, format!("not used {why}")));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> ScenarioResult<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> ScenarioResult<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }

    pub fn with_overrides(mut self, o: Overrides) -> ScenarioResult<Self> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(r) = o.reps {
            self.reps = Some(r);
        }
        if let Some(e) = o.engine {
            self.engine = e;
        }
        self.resolve()?;
        Ok(self)
    }

    /// SHA-256 of the canonical JSON form, so formatting and key order in the
    /// file do not matter.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(bytes))
    }

    fn mu_c(&self) -> Option<f64> {
        match self.outcome {
            Outcome::Normal => self.prior.mu_c,
            Outcome::Binomial => match (self.prior.y0_c, self.prior.n0_c) {
                (Some(y), Some(n)) if n > 0.0 => Some(y as f64 / n),
                _ => None,
            },
        }
    }

    /// Control-arm means the grid covers.
    pub fn theta_grid(&self) -> ScenarioResult<Vec<f64>> {
        let g = &self.grid;
        let (lo, hi) = match (g.conflict, g.theta_c) {
            (Some([lo, hi]), None) => {
                let mu = self.mu_c().ok_or_else(|| field_err("grid.conflict", "needs a prior mean"))?;
                (mu + lo, mu + hi)
            }
            (None, Some([lo, hi])) => (lo, hi),
            _ => return Err(field_err("grid", "give exactly one of `conflict` or `theta_c`")),
        };
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(field_err("grid", format!("invalid range [{lo}, {hi}]")));
        }
        if g.points == 0 {
            return Err(field_err("grid.points", "must be >= 1"));
        }
        Ok(linspace(lo, hi, g.points))
    }

    /// Field-level validation; returns the evaluators on success.
    pub fn resolve(&self) -> ScenarioResult<Resolved> {
        if self.scenario_id.trim().is_empty() {
            return Err(field_err("scenario_id", "must not be empty"));
        }
        if self.rules.is_empty() {
            return Err(field_err("rules", "at least one rule is required"));
        }
        if self.grid.deltas.is_empty() {
            return Err(field_err("grid.deltas", "at least one value is required"));
        }
        if let Some(i) = self.grid.deltas.iter().position(|d| !d.is_finite()) {
            return Err(field_err(format!("grid.deltas[{i}]"), "must be finite"));
        }
        match (self.engine, self.reps) {
            (Engine::MonteCarlo, None | Some(0)) => return Err(field_err("reps", "monte_carlo needs reps >= 1")),
            _ => {}
        }
        let thetas = self.theta_grid()?;
        for (i, r) in self.rules.iter().enumerate() {
            let field = format!("rules[{i}]");
            let Some(allowed) = r.allowed(self.outcome) else {
                return Err(field_err(
                    format!("{field}.rule"),
                    format!("`{}` is not available for {:?} outcomes", r.rule.as_str(), self.outcome),
                ));
            };
            for name in r.present() {
                if !allowed.contains(&name) {
                    return Err(field_err(format!("{field}.{name}"), format!("not a parameter of `{}`", r.rule.as_str())));
                }
            }
        }
        let resolved = match self.outcome {
            Outcome::Normal => self.resolve_normal()?,
            Outcome::Binomial => self.resolve_binomial(&thetas)?,
        };
        let labels = match &resolved {
            Resolved::Normal { rules, .. } => rules.iter().map(|e| e.label.clone()).collect::<Vec<_>>(),
            Resolved::Binomial { rules, .. } => rules.iter().map(|e| e.label.clone()).collect(),
        };
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(field_err(format!("rules[{i}].label"), format!("duplicate label `{l}`")));
            }
        }
        Ok(resolved)
    }

    fn resolve_normal(&self) -> ScenarioResult<Resolved> {
        let d = &self.design;
        let p = &self.prior;
        let why = "for normal outcomes";
        forbid("prior.y0_c", p.y0_c.is_some(), why)?;
        for (f, v) in [("prior.a_c", p.a_c), ("prior.b_c", p.b_c), ("prior.a_t", p.a_t), ("prior.b_t", p.b_t)] {
            forbid(f, v.is_some(), why)?;
        }
        let sigma = require("design.sigma", d.sigma)?;
        let base = NormalDesign::new(d.n_c, d.n_t, sigma, d.delta0, 0.025, 0.025).map_err(|e| field_err("design", e.to_string()))?;
        let mu = require("prior.mu_c", p.mu_c)?;
        let prior = match (p.n0_c, p.sd_c) {
            (Some(n0), None) => NormalPrior::from_effective_n(mu, sigma, n0).map_err(|e| field_err("prior.n0_c", e.to_string()))?,
            (None, Some(sd)) => NormalPrior::new(mu, sd).map_err(|e| field_err("prior.sd_c", e.to_string()))?,
            _ => return Err(field_err("prior", "give exactly one of `n0_c` or `sd_c`")),
        };
        if prior.is_flat() {
            return Err(field_err("prior", "analysis prior must be proper"));
        }
        let mut rules = Vec::with_capacity(self.rules.len());
        for (i, r) in self.rules.iter().enumerate() {
            let f = |name: &str| format!("rules[{i}].{name}");
            let gamma = check_prob(&f("gamma"), r.gamma)?;
            let kappa = check_prob(&f("kappa"), r.kappa)?;
            let design = base.with_gamma(gamma).with_kappa(kappa);
            let rule = match r.rule {
                RuleName::Fd => DecisionRule::Fd,
                RuleName::Bd => DecisionRule::Bd,
                RuleName::Cdc => DecisionRule::Cdc { cfg: r.compromise(&f("alpha_up"))? },
                RuleName::Cdd => DecisionRule::Cdd { cfg: r.compromise(&f("alpha_up"))? },
                RuleName::PowerPrior => {
                    let zeta = require(&f("zeta"), r.zeta)?;
                    if !(0.0..=1.0).contains(&zeta) {
                        return Err(field_err(f("zeta"), format!("must lie in [0, 1], got {zeta}")));
                    }
                    DecisionRule::PowerPrior { zeta }
                }
                RuleName::EbPow => DecisionRule::EbPow,
                RuleName::RmUnit => {
                    let weight = require(&f("weight"), r.weight)?;
                    if !(0.0..=1.0).contains(&weight) {
                        return Err(field_err(f("weight"), format!("must lie in [0, 1], got {weight}")));
                    }
                    DecisionRule::RmUnit { weight }
                }
                RuleName::CalibratedBayes => {
                    DecisionRule::CalibratedBayes { alpha_star: check_prob(&f("alpha_star"), Some(require(&f("alpha_star"), r.alpha_star)?))? }
                }
            };
            rule.validate().map_err(|e| field_err(format!("rules[{i}]"), e.to_string()))?;
            if self.engine == Engine::ClosedForm && !matches!(rule, DecisionRule::Fd | DecisionRule::Bd) {
                return Err(field_err(format!("rules[{i}].rule"), "closed_form engine supports only `fd` and `bd`"));
            }
            let label = r.label.clone().unwrap_or_else(|| rule.label());
            rules.push(NormalEntry { label, rule, design });
        }
        if self.engine == Engine::Enumeration {
            return Err(field_err("engine", "enumeration applies to binomial outcomes"));
        }
        let average = match &self.average {
            None => None,
            Some(a) => {
                let mu_s = a.mu_c.unwrap_or(mu);
                Some(match (a.n0_c, a.sd_c) {
                    (None, None) => NormalPrior { mu_c: mu_s, ..prior },
                    (Some(n0), None) => NormalPrior::from_effective_n(mu_s, sigma, n0).map_err(|e| field_err("average.n0_c", e.to_string()))?,
                    (None, Some(sd)) => NormalPrior::new(mu_s, sd).map_err(|e| field_err("average.sd_c", e.to_string()))?,
                    _ => return Err(field_err("average", "give at most one of `n0_c` or `sd_c`")),
                })
                .filter(|s| !s.is_flat())
                .map(Some)
                .ok_or_else(|| field_err("average", "sampling prior must be proper"))?
            }
        };
        if let Some(c) = &self.calibrate {
            if !(c.target > 0.0 && c.target < 1.0) {
                return Err(field_err("calibrate.target", format!("must lie in (0, 1), got {}", c.target)));
            }
            if c.points < 2 {
                return Err(field_err("calibrate.points", "must be >= 2"));
            }
            if !(c.conflict[0] < c.conflict[1]) {
                return Err(field_err("calibrate.conflict", "need lo < hi"));
            }
        }
        Ok(Resolved::Normal { prior, rules, average })
    }

    fn resolve_binomial(&self, thetas: &[f64]) -> ScenarioResult<Resolved> {
        let d = &self.design;
        let p = &self.prior;
        let why = "for binomial outcomes";
        forbid("design.sigma", d.sigma.is_some(), why)?;
        forbid("prior.mu_c", p.mu_c.is_some(), why)?;
        forbid("prior.sd_c", p.sd_c.is_some(), why)?;
        forbid("average", self.average.is_some(), why)?;
        forbid("calibrate", self.calibrate.is_some(), why)?;
        if d.delta0 != 0.0 {
            return Err(field_err("design.delta0", "binomial rules test δ ≤ 0"));
        }
        if self.engine != Engine::Enumeration {
            return Err(field_err("engine", "binomial outcomes are evaluated by enumeration"));
        }
        let n0 = p.n0_c.unwrap_or(0.0);
        if !(n0 >= 0.0 && n0.fract() == 0.0 && n0 <= u32::MAX as f64) {
            return Err(field_err("prior.n0_c", format!("must be a nonnegative integer, got {n0}")));
        }
        let external = ExternalData { y0: p.y0_c.unwrap_or(0), n0: n0 as u32 };
        let beta = |fa: &str, a: Option<f64>, fb: &str, b: Option<f64>| {
            BetaPrior::new(a.unwrap_or(0.5), b.unwrap_or(0.5)).map_err(|e| field_err(format!("{fa}/{fb}"), e.to_string()))
        };
        let mut design = BinomialDesign::new(d.n_c, d.n_t, external, 0.025, 0.025).map_err(|e| field_err("prior", e.to_string()))?;
        design.prior_c = beta("prior.a_c", p.a_c, "prior.b_c", p.b_c)?;
        design.prior_t = beta("prior.a_t", p.a_t, "prior.b_t", p.b_t)?;
        design.validate().map_err(|e| field_err("prior", e.to_string()))?;
        if let Some(t) = thetas.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(field_err("grid", format!("θ_C = {t} outside [0, 1]")));
        }
        let mut rules = Vec::with_capacity(self.rules.len());
        for (i, r) in self.rules.iter().enumerate() {
            let f = |name: &str| format!("rules[{i}].{name}");
            let gamma = check_prob(&f("gamma"), r.gamma)?;
            let kappa = check_prob(&f("kappa"), r.kappa)?;
            let rule = match r.rule {
                RuleName::Fd => BinomialRule::Fd,
                RuleName::Bd => BinomialRule::Bd,
                RuleName::Cdc => BinomialRule::Cdc { cfg: r.compromise(&f("alpha_up"))? },
                RuleName::Cdd => BinomialRule::Cdd { cfg: r.compromise(&f("alpha_up"))?, scale: r.scale.unwrap_or_default() },
                RuleName::RmUnit => {
                    let weight = require(&f("weight"), r.weight)?;
                    let BinomialRule::RobustMixture { robust, .. } =
                        BinomialRule::rm_default(weight).map_err(|e| field_err(f("weight"), e.to_string()))?
                    else {
                        unreachable!()
                    };
                    let robust = BetaPrior::new(r.robust_a.unwrap_or(robust.a), r.robust_b.unwrap_or(robust.b))
                        .map_err(|e| field_err(f("robust_a"), e.to_string()))?;
                    if !robust.is_proper() {
                        return Err(field_err(f("robust_a"), "robust component must be proper"));
                    }
                    BinomialRule::RobustMixture { weight, robust }
                }
                RuleName::PowerPrior | RuleName::EbPow | RuleName::CalibratedBayes => unreachable!(),
            };
            let label = r.label.clone().unwrap_or_else(|| rule.label().to_string());
            rules.push(BinomialEntry { label, rule, gamma, kappa });
        }
        Ok(Resolved::Binomial { design, rules })
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Tie,
    Power,
    AvgTie,
    AvgPower,
    CriticalZ,
    Kappa,
    Gamma,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Tie => "tie",
            Metric::Power => "power",
            Metric::AvgTie => "avg_tie",
            Metric::AvgPower => "avg_power",
            Metric::CriticalZ => "critical_z",
            Metric::Kappa => "kappa",
            Metric::Gamma => "gamma",
        }
    }
}

/// One line of `results.csv`. For threshold metrics `theta_c` holds the
/// observed conflict ȳ_C − μ_C.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub rule_index: usize,
    pub rule: String,
    pub theta_c: f64,
    pub delta: f64,
    pub metric: Metric,
    pub value: f64,
    pub mc_se: Option<f64>,
    pub estimator: Estimator,
    pub reps: Option<u64>,
}

/// Ten significant digits, trailing zeros trimmed.
pub fn format_sig10(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-5..=14).contains(&mag) {
        return format!("{x:.9e}");
    }
    let decimals = (9 - mag).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        a.rule_index
            .cmp(&b.rule_index)
            .then(a.metric.cmp(&b.metric))
            .then(a.theta_c.total_cmp(&b.theta_c))
            .then(a.delta.total_cmp(&b.delta))
    });
}

pub fn write_results_csv(path: &Path, scenario_id: &str, rows: &[ResultRow]) -> ScenarioResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| ScenarioError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })?;
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            scenario_id.to_string(),
            r.rule.clone(),
            format_sig10(r.theta_c),
            format_sig10(r.delta),
            r.metric.as_str().to_string(),
            format_sig10(r.value),
            r.mc_se.map(format_sig10).unwrap_or_default(),
            r.estimator.as_str().to_string(),
            r.reps.map(|n| n.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRule {
    pub label: String,
    pub definition: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub package: String,
    pub version: String,
    pub command: String,
    pub scenario_id: String,
    pub config_sha256: String,
    pub outcome: Outcome,
    pub engine: Engine,
    pub seed: u64,
    pub reps: Option<u64>,
    pub theta_c_grid: Vec<f64>,
    pub deltas: Vec<f64>,
    pub rules: Vec<ManifestRule>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub calibration: Vec<(String, Recalibration)>,
    pub notes: Vec<String>,
    pub files: BTreeMap<String, String>,
}

fn file_sha256(path: &Path) -> ScenarioResult<String> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex(&Sha256::digest(bytes)))
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub manifest: Manifest,
    pub results_path: PathBuf,
    pub manifest_path: PathBuf,
}

fn prepare_dir(out_dir: &Path) -> ScenarioResult<()> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))
}

fn stream_id(rule_index: usize, point: usize) -> u64 {
    ((rule_index as u64) << 32) | point as u64
}

fn normal_rows(
    cfg: &ScenarioConfig,
    prior: &NormalPrior,
    entries: &[NormalEntry],
    average: Option<&NormalPrior>,
    calibration: &mut Vec<(String, Recalibration)>,
) -> ScenarioResult<Vec<ResultRow>> {
    let thetas = cfg.theta_grid()?;
    let mut tuned = Vec::with_capacity(entries.len());
    for e in entries {
        let ctx = RuleContext::new(e.design, *prior)?;
        let (rule, ctx) = match &cfg.calibrate {
            None => (e.rule, ctx),
            Some(c) => {
                let r = recalibrate_max_tie(&ctx, &e.rule, c.target, (c.conflict[0], c.conflict[1]), c.points)?;
                calibration.push((e.label.clone(), r));
                match r {
                    Recalibration::Tuned { .. } => {
                        let (rule, design) = e.rule.with_knob(&e.design, r_value(&r));
                        (rule, RuleContext { design, prior: *prior })
                    }
                    Recalibration::Unattainable { .. } => (e.rule, ctx),
                }
            }
        };
        tuned.push((rule, ctx));
    }
    let points: Vec<(usize, f64, f64)> = thetas
        .iter()
        .flat_map(|&t| cfg.grid.deltas.iter().map(move |&d| (t, d)))
        .enumerate()
        .map(|(k, (t, d))| (k, t, d))
        .collect();
    let tasks: Vec<(usize, usize, f64, f64)> =
        (0..entries.len()).flat_map(|i| points.iter().map(move |&(k, t, d)| (i, k, t, d))).collect();
    let mut rows = tasks
        .par_iter()
        .map(|&(i, k, theta_c, delta)| {
            let (rule, ctx) = &tuned[i];
            let theta_t = theta_c + delta;
            let metric = if delta <= ctx.design.delta0 { Metric::Tie } else { Metric::Power };
            let (value, mc_se, reps, estimator) = match cfg.engine {
                Engine::ClosedForm => {
                    let v = match rule {
                        DecisionRule::Fd => power_fd_closed(&ctx.design, theta_c, theta_t),
                        _ => power_bd_closed(&ctx.design, &GeneralTwoArmPrior::hybrid(ctx.prior), theta_c, theta_t),
                    };
                    (v, None, None, Estimator::ClosedForm)
                }
                Engine::Quadrature => (power_rule_quadrature(ctx, rule, theta_c, theta_t)?, None, None, Estimator::Quadrature),
                Engine::MonteCarlo => {
                    let reps = cfg.reps.unwrap_or(0);
                    let p = power_rule_mc(ctx, rule, theta_c, theta_t, reps, RngStream::new(cfg.seed, stream_id(i, k)))?;
                    (p.value, Some(p.mc_se), Some(reps), Estimator::MonteCarlo)
                }
                Engine::Enumeration => unreachable!(),
            };
            Ok(ResultRow {
                rule_index: i,
                rule: entries[i].label.clone(),
                theta_c,
                delta,
                metric,
                value,
                mc_se,
                estimator,
                reps,
            })
        })
        .collect::<crate::Result<Vec<_>>>()?;
    if let Some(sampling) = average {
        let avg_tasks: Vec<(usize, usize, f64)> = (0..entries.len())
            .flat_map(|i| cfg.grid.deltas.iter().enumerate().map(move |(k, &d)| (i, k, d)))
            .collect();
        let avg = avg_tasks
            .par_iter()
            .map(|&(i, k, delta)| {
                let (rule, ctx) = &tuned[i];
                let metric = if delta <= ctx.design.delta0 { Metric::AvgTie } else { Metric::AvgPower };
                let (value, mc_se, reps, estimator) = if cfg.engine == Engine::MonteCarlo {
                    let reps = cfg.reps.unwrap_or(0);
                    let stream = RngStream::new(cfg.seed, stream_id(i, points.len() + k));
                    let p = average_oc_mc(ctx, rule, sampling, delta, reps, stream)?;
                    (p.value, Some(p.mc_se), Some(reps), Estimator::MonteCarlo)
                } else {
                    (average_oc(ctx, rule, sampling, delta)?, None, None, Estimator::Quadrature)
                };
                Ok(ResultRow {
                    rule_index: i,
                    rule: entries[i].label.clone(),
                    theta_c: sampling.mu_c,
                    delta,
                    metric,
                    value,
                    mc_se,
                    estimator,
                    reps,
                })
            })
            .collect::<crate::Result<Vec<_>>>()?;
        rows.extend(avg);
    }
    Ok(rows)
}

fn r_value(r: &Recalibration) -> f64 {
    match r {
        Recalibration::Tuned { value, .. } => *value,
        Recalibration::Unattainable { .. } => f64::NAN,
    }
}

fn binomial_rows(cfg: &ScenarioConfig, design: &BinomialDesign, entries: &[BinomialEntry]) -> ScenarioResult<Vec<ResultRow>> {
    let thetas = cfg.theta_grid()?;
    let robust_of = |e: &BinomialEntry| match e.rule {
        BinomialRule::RobustMixture { robust, .. } => Some(robust),
        _ => None,
    };
    let mut robusts: Vec<Option<BetaPrior>> = Vec::new();
    for r in entries.iter().filter_map(robust_of) {
        if !robusts.contains(&Some(r)) {
            robusts.push(Some(r));
        }
    }
    if robusts.is_empty() {
        robusts.push(None);
    }
    let tables = robusts.iter().map(|r| ProbabilityTable::build(design, *r)).collect::<crate::Result<Vec<_>>>()?;
    let decisions = entries
        .iter()
        .map(|e| {
            let idx = robust_of(e).map_or(0, |r| robusts.iter().position(|x| *x == Some(r)).unwrap_or(0));
            tables[idx].decisions_at(&e.rule, e.gamma, e.kappa)
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let tasks: Vec<(usize, f64, f64)> = (0..entries.len())
        .flat_map(|i| thetas.iter().flat_map(move |&t| cfg.grid.deltas.iter().map(move |&d| (i, t, d))))
        .filter(|&(_, t, d)| (0.0..=1.0).contains(&(t + d)))
        .collect();
    let rows = tasks
        .par_iter()
        .map(|&(i, theta_c, delta)| {
            Ok(ResultRow {
                rule_index: i,
                rule: entries[i].label.clone(),
                theta_c,
                delta,
                metric: if delta <= 0.0 { Metric::Tie } else { Metric::Power },
                value: enumerate_oc(&decisions[i], theta_c, delta)?,
                mc_se: None,
                estimator: Estimator::Enumeration,
                reps: None,
            })
        })
        .collect::<crate::Result<Vec<_>>>()?;
    Ok(rows)
}

fn manifest_rules(resolved: &Resolved) -> Vec<ManifestRule> {
    match resolved {
        Resolved::Normal { rules, .. } => rules
            .iter()
            .map(|e| ManifestRule {
                label: e.label.clone(),
                definition: serde_json::json!({ "rule": e.rule, "gamma": e.design.gamma, "kappa": e.design.kappa }),
            })
            .collect(),
        Resolved::Binomial { rules, .. } => rules
            .iter()
            .map(|e| ManifestRule {
                label: e.label.clone(),
                definition: serde_json::json!({ "rule": e.rule, "gamma": e.gamma, "kappa": e.kappa }),
            })
            .collect(),
    }
}

fn finish(
    cfg: &ScenarioConfig,
    command: &str,
    resolved: &Resolved,
    mut rows: Vec<ResultRow>,
    calibration: Vec<(String, Recalibration)>,
    extra_files: Vec<PathBuf>,
    out_dir: &Path,
) -> ScenarioResult<RunOutput> {
    sort_rows(&mut rows);
    let results_path = out_dir.join("results.csv");
    write_results_csv(&results_path, &cfg.scenario_id, &rows)?;
    let mut files = BTreeMap::new();
    for p in std::iter::once(&results_path).chain(extra_files.iter()) {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        files.insert(name, file_sha256(p)?);
    }
    let mut notes = Vec::new();
    if let Resolved::Binomial { design, rules } = resolved {
        let inf = design.informative_prior_c();
        notes.push(format!("informative control prior Beta({}, {})", inf.a, inf.b));
        if rules.iter().any(|e| matches!(e.rule, BinomialRule::RobustMixture { .. })) {
            notes.push("robust mixture component defaults to Beta(1, 1) unless robust_a/robust_b are set".into());
        }
        notes.push("outcomes with theta_C + delta outside [0, 1] are skipped".into());
    }
    let manifest = Manifest {
        package: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        scenario_id: cfg.scenario_id.clone(),
        config_sha256: cfg.hash(),
        outcome: cfg.outcome,
        engine: cfg.engine,
        seed: cfg.seed,
        reps: cfg.reps,
        theta_c_grid: cfg.theta_grid()?,
        deltas: cfg.grid.deltas.clone(),
        rules: manifest_rules(resolved),
        calibration,
        notes,
        files,
    };
    let manifest_path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&manifest_path, text + "\n").map_err(io_err(&manifest_path))?;
    Ok(RunOutput { rows, manifest, results_path, manifest_path })
}

/// Evaluates every rule over the grid and writes `results.csv` and
/// `manifest.json` into `out_dir`.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> ScenarioResult<RunOutput> {
    let resolved = cfg.resolve()?;
    prepare_dir(out_dir)?;
    let mut calibration = Vec::new();
    let rows = match &resolved {
        Resolved::Normal { prior, rules, average } => normal_rows(cfg, prior, rules, average.as_ref(), &mut calibration)?,
        Resolved::Binomial { design, rules } => binomial_rows(cfg, design, rules)?,
    };
    finish(cfg, "run", &resolved, rows, calibration, vec![], out_dir)
}

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

/// Threshold curves over the conflict grid: critical z, κ and γ per rule.
/// Writes `results.csv` plus one `thresholds_<rule>.csv` per rule.
pub fn emit_thresholds(cfg: &ScenarioConfig, out_dir: &Path) -> ScenarioResult<RunOutput> {
    let resolved = cfg.resolve()?;
    let Resolved::Normal { prior, rules, .. } = &resolved else {
        return Err(ScenarioError::Unsupported("thresholds are available for normal outcomes only".into()));
    };
    prepare_dir(out_dir)?;
    let ybars = cfg.theta_grid()?;
    let mut rows = Vec::new();
    let mut extra = Vec::new();
    for (i, e) in rules.iter().enumerate() {
        let ctx = RuleContext::new(e.design, *prior)?;
        let curve = ybars
            .par_iter()
            .map(|&y| Ok((y - prior.mu_c, ctx.critical_z(&e.rule, y)?, ctx.kappa(&e.rule, y)?, ctx.gamma(&e.rule, y)?)))
            .collect::<crate::Result<Vec<_>>>()?;
        let path = out_dir.join(format!("thresholds_{}.csv", file_label(&e.label)));
        let mut w = csv::Writer::from_path(&path).map_err(|err| ScenarioError::Io {
            path: path.clone(),
            source: std::io::Error::other(err.to_string()),
        })?;
        w.write_record(["conflict", "critical_z", "kappa", "gamma"])?;
        for &(c, z, k, g) in &curve {
            w.write_record([format_sig10(c), format_sig10(z), format_sig10(k), format_sig10(g)])?;
            for (metric, value) in [(Metric::CriticalZ, z), (Metric::Kappa, k), (Metric::Gamma, g)] {
                rows.push(ResultRow {
                    rule_index: i,
                    rule: e.label.clone(),
                    theta_c: c,
                    delta: e.design.delta0,
                    metric,
                    value,
                    mc_se: None,
                    estimator: Estimator::ClosedForm,
                    reps: None,
                });
            }
        }
        w.flush().map_err(io_err(&path))?;
        extra.push(path);
    }
    finish(cfg, "thresholds", &resolved, rows, vec![], extra, out_dir)
}

/// Built-in configuration of the binomial case study: 200 patients per arm,
/// 65 of 100 external control responders.
pub const CASE_STUDY_CONFIG: &str = r#"{
  "scenario_id": "case_study",
  "outcome": "binomial",
  "design": { "n_c": 200, "n_t": 200 },
  "prior": { "y0_c": 65, "n0_c": 100 },
  "rules": [
    { "rule": "fd", "kappa": 0.025 },
    { "rule": "bd", "gamma": 0.025 },
    { "rule": "cdc", "gamma": 0.025, "alpha_low": 0.01, "alpha_up": 0.075 },
    { "rule": "cdd", "gamma": 0.025, "kappa": 0.025, "alpha_low": 0.01, "alpha_up": 0.075, "t": 4, "p": 4 },
    { "rule": "rm_unit", "gamma": 0.025, "weight": 0.7 }
  ],
  "grid": { "theta_c": [0.3, 1.0], "points": 71, "deltas": [0, 0.12] },
  "engine": "enumeration",
  "seed": 1
}
"#;

pub fn case_study_config() -> ScenarioConfig {
    ScenarioConfig::from_json(CASE_STUDY_CONFIG).expect("built-in case study config is valid")
}

/// Runs the built-in case study by complete enumeration.
pub fn emit_case_study(out_dir: &Path) -> ScenarioResult<RunOutput> {
    run_scenario(&case_study_config(), out_dir)
}

/// Reads results.csv back into (rule, theta_C, delta, metric, value) tuples.
pub fn read_results_csv(path: &Path) -> ScenarioResult<Vec<(String, f64, f64, String, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| ScenarioError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != CSV_HEADER {
        return Err(field_err(path.display().to_string(), format!("unexpected header {header:?}")));
    }
    let parse = |s: &str| s.parse::<f64>().map_err(|e| field_err(path.display().to_string(), format!("{s}: {e}")));
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok((rec[1].to_string(), parse(&rec[2])?, parse(&rec[3])?, rec[4].to_string(), parse(&rec[5])?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal_cfg() -> ScenarioConfig {
        ScenarioConfig::from_json(
            r#"{
              "scenario_id": "t",
              "outcome": "normal",
              "design": { "n_c": 20, "n_t": 20, "sigma": 1 },
              "prior": { "mu_c": 0, "n0_c": 10 },
              "rules": [ { "rule": "bd" }, { "rule": "fd" }, { "rule": "cdc" } ],
              "grid": { "conflict": [-1, 1], "points": 5, "deltas": [0, 1] },
              "engine": "quadrature"
            }"#,
        )
        .unwrap()
    }

    fn err_field(text: &str) -> String {
        match ScenarioConfig::from_json(text) {
            Err(ScenarioError::Config { field, .. }) => field,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sig10_formatting() {
        assert_eq!(format_sig10(0.0176309029123), "0.01763090291");
        assert_eq!(format_sig10(0.025), "0.025");
        assert_eq!(format_sig10(-2.0), "-2");
        assert_eq!(format_sig10(1.0), "1");
        assert_eq!(format_sig10(1.234e-9), "1.234000000e-9");
        assert_eq!(format_sig10(f64::INFINITY), "inf");
        for &x in &[0.1234567890123, 3.0e-7, 12345.678901234, -0.5] {
            let back: f64 = format_sig10(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 1e-9);
        }
    }

    #[test]
    fn validation_points_at_fields() {
        let base = serde_json::to_value(normal_cfg()).unwrap();
        let with = |f: &dyn Fn(&mut serde_json::Value)| {
            let mut v = base.clone();
            f(&mut v);
            v.to_string()
        };
        assert_eq!(err_field(&with(&|v| v["rules"] = serde_json::json!([]))), "rules");
        assert_eq!(err_field(&with(&|v| v["rules"][0]["gamma"] = 1.5.into())), "rules[0].gamma");
        assert_eq!(err_field(&with(&|v| v["rules"][0]["zeta"] = 0.5.into())), "rules[0].zeta");
        assert_eq!(err_field(&with(&|v| v["rules"][2]["alpha_up"] = 0.001.into())), "rules[2].alpha_up");
        assert_eq!(err_field(&with(&|v| v["design"]["sigma"] = serde_json::Value::Null)), "design.sigma");
        assert_eq!(err_field(&with(&|v| v["engine"] = "monte_carlo".into())), "reps");
        assert_eq!(err_field(&with(&|v| v["engine"] = "closed_form".into())), "rules[2].rule");
        assert_eq!(err_field(&with(&|v| v["prior"]["sd_c"] = 0.3.into())), "prior");
        assert_eq!(err_field(&with(&|v| v["rules"][1]["label"] = "BD".into())), "rules[1].label");
        let unknown = with(&|v| v["design"]["extra"] = 1.into());
        assert!(matches!(ScenarioConfig::from_json(&unknown), Err(ScenarioError::Parse(_))));
        let unknown_rule_key = with(&|v| v["rules"][0]["gama"] = 0.1.into());
        assert!(matches!(ScenarioConfig::from_json(&unknown_rule_key), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn hash_tracks_semantic_fields_only() {
        let a = normal_cfg();
        let reformatted: ScenarioConfig = serde_json::from_str(&serde_json::to_string_pretty(&a).unwrap()).unwrap();
        assert_eq!(a.hash(), reformatted.hash());
        let mut b = a.clone();
        b.grid.points = 6;
        assert_ne!(a.hash(), b.hash());
        let mut c = a.clone();
        c.rules[0].gamma = Some(0.025);
        assert_ne!(a.hash(), c.hash());
        let d = a.clone().with_overrides(Overrides { seed: Some(7), ..Default::default() }).unwrap();
        assert_ne!(a.hash(), d.hash());
    }

    #[test]
    fn run_writes_results_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_scenario(&normal_cfg(), dir.path()).unwrap();
        assert_eq!(out.rows.len(), 3 * 5 * 2);
        let back = read_results_csv(&out.results_path).unwrap();
        assert_eq!(back.len(), out.rows.len());
        assert!(back.iter().all(|r| (0.0..=1.0).contains(&r.4)));
        let bd0 = back.iter().find(|r| r.0 == "BD" && r.1 == 0.0 && r.2 == 0.0).unwrap();
        assert!((bd0.4 - 0.0176309029).abs() < 1e-9);
        let m: Manifest = serde_json::from_str(&fs::read_to_string(&out.manifest_path).unwrap()).unwrap();
        assert_eq!(m.config_sha256, normal_cfg().hash());
        assert_eq!(m.files["results.csv"], file_sha256(&out.results_path).unwrap());
    }

    #[test]
    fn thresholds_reject_binomial_and_match_rules() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(emit_thresholds(&case_study_config(), dir.path()), Err(ScenarioError::Unsupported(_))));
        let out = emit_thresholds(&normal_cfg(), dir.path()).unwrap();
        let z_fd = crate::normal::critical_z(0.025);
        for r in out.rows.iter().filter(|r| r.rule == "FD" && r.metric == Metric::CriticalZ) {
            assert!((r.value - z_fd).abs() < 1e-15);
        }
        assert!(dir.path().join("thresholds_cdc.csv").exists());
    }

    #[test]
    fn binomial_config_validation() {
        let cs = case_study_config();
        let mut v = serde_json::to_value(&cs).unwrap();
        v["rules"][0] = serde_json::json!({ "rule": "eb_pow" });
        assert_eq!(err_field(&v.to_string()), "rules[0].rule");
        let mut v = serde_json::to_value(&cs).unwrap();
        v["engine"] = "quadrature".into();
        assert_eq!(err_field(&v.to_string()), "engine");
        let mut v = serde_json::to_value(&cs).unwrap();
        v["prior"]["n0_c"] = 10.5.into();
        assert_eq!(err_field(&v.to_string()), "prior.n0_c");
    }
}
