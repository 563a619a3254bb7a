//! Experiment configuration: one JSON document with every default
//! materialized on load.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use hedgenet_core::hedging::{ErrorMode, NetFamily};
use hedgenet_core::models::{Case, DiffusionSpec};
use hedgenet_core::nalgebra::DMatrix;
use hedgenet_core::pricing::{
    BmQuadratic, Factor1D, FactorKind, PricingModel, ProductPricing, SumDigital2D,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SEED_ENV: &str = "HEDGENET_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelBlock,
    pub payoff: PayoffBlock,
    #[serde(default)]
    pub nets: NetsBlock,
    #[serde(default)]
    pub engine: EngineBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    #[serde(default = "default_case")]
    pub case: Case,
    pub d: usize,
    /// Per-coordinate volatilities (C2) or diagonal of sigma (C1).
    pub s: Vec<f64>,
    #[serde(default)]
    pub mu: Option<Vec<f64>>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub correlation: Option<Vec<Vec<f64>>>,
}

fn default_case() -> Case {
    Case::C2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffBlock {
    pub key: String,
    #[serde(default = "empty_object")]
    pub params: Value,
    #[serde(rename = "T")]
    pub horizon: f64,
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetsBlock {
    /// `equidistant`, `eta:<value>` or `eta:auto`.
    #[serde(default = "default_families")]
    pub families: Vec<String>,
    #[serde(default = "default_n_list")]
    pub n_list: Vec<usize>,
}

fn default_families() -> Vec<String> {
    vec!["equidistant".into(), "eta:auto".into()]
}

fn default_n_list() -> Vec<usize> {
    vec![8, 16, 32, 64, 128, 256, 512]
}

impl Default for NetsBlock {
    fn default() -> Self {
        Self {
            families: default_families(),
            n_list: default_n_list(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineBlock {
    #[serde(rename = "N", default = "default_paths")]
    pub paths: usize,
    /// Monitoring points per net interval.
    #[serde(rename = "M_rule", default = "default_m_rule")]
    pub m_rule: usize,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    #[serde(default = "default_mode")]
    pub mode: ErrorMode,
}

fn default_paths() -> usize {
    100_000
}

fn default_m_rule() -> usize {
    hedgenet_core::hedging::DEFAULT_MONITOR_MULTIPLIER
}

fn default_seed() -> u64 {
    1
}

fn default_mode() -> ErrorMode {
    ErrorMode::Terminal
}

impl Default for EngineBlock {
    fn default() -> Self {
        Self {
            paths: default_paths(),
            m_rule: default_m_rule(),
            master_seed: default_seed(),
            mode: default_mode(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<String> {
    vec!["csv".into(), "json".into()]
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

/// Net family as written in the configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilySpec {
    Fixed(NetFamily),
    AutoEta,
}

impl FamilySpec {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "eta:auto" {
            return Ok(Self::AutoEta);
        }
        Ok(Self::Fixed(
            s.parse().with_context(|| format!("net family {s:?}"))?,
        ))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).context("parsing experiment configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` and applies the `HEDGENET_SEED` override.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_json(&text).with_context(|| format!("in {}", path.display()))?;
        if let Ok(seed) = std::env::var(SEED_ENV) {
            cfg.engine.master_seed = seed
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV}={seed:?} is not an unsigned integer"))?;
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.canonical()).expect("configuration serializes")
    }

    /// Value form with sorted keys.
    pub fn canonical(&self) -> Value {
        // serde_json's map is ordered by key, so re-parsing sorts everything
        serde_json::to_value(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.model.d >= 1, "model.d must be at least 1");
        ensure!(
            self.model.s.len() == self.model.d,
            "model.s must have d = {} entries",
            self.model.d
        );
        for (name, v) in [("mu", &self.model.mu), ("x0", &self.model.x0)] {
            if let Some(v) = v {
                ensure!(
                    v.len() == self.model.d,
                    "model.{name} must have d = {} entries",
                    self.model.d
                );
            }
        }
        ensure!(
            self.payoff.horizon > 0.0 && self.payoff.horizon.is_finite(),
            "payoff.T must be positive"
        );
        ensure!(!self.nets.families.is_empty(), "nets.families is empty");
        for f in &self.nets.families {
            FamilySpec::parse(f)?;
        }
        ensure!(!self.nets.n_list.is_empty(), "nets.n_list is empty");
        ensure!(
            self.nets.n_list.windows(2).all(|w| w[1] > w[0]) && self.nets.n_list[0] >= 1,
            "nets.n_list must be strictly ascending positive integers"
        );
        ensure!(self.engine.paths >= 2, "engine.N must be at least 2");
        ensure!(self.engine.m_rule >= 1, "engine.M_rule must be at least 1");
        self.build_spec()?;
        self.build_pricing()?;
        Ok(())
    }

    pub fn families(&self) -> Vec<FamilySpec> {
        self.nets
            .families
            .iter()
            .map(|f| FamilySpec::parse(f).expect("validated"))
            .collect()
    }

    pub fn build_spec(&self) -> Result<DiffusionSpec> {
        let m = &self.model;
        let d = m.d;
        let mu = m.mu.clone().unwrap_or_else(|| vec![0.0; d]);
        let spec = match m.case {
            Case::C2 => {
                let x0 = m.x0.clone().unwrap_or_else(|| vec![1.0; d]);
                let spec = DiffusionSpec::gbm(x0, mu, m.s.clone())?;
                match &m.correlation {
                    Some(rows) => spec.with_correlation(matrix(rows, d)?)?,
                    None => spec,
                }
            }
            Case::C1 => {
                let x0 = m.x0.clone().unwrap_or_else(|| vec![0.0; d]);
                let mut sigma = DMatrix::from_diagonal(
                    &hedgenet_core::nalgebra::DVector::from_vec(m.s.clone()),
                );
                if let Some(rows) = &m.correlation {
                    let chol = matrix(rows, d)?
                        .cholesky()
                        .context("model.correlation is not positive definite")?;
                    sigma = &sigma * chol.l();
                }
                DiffusionSpec::brownian(x0, mu, sigma)?
            }
        };
        Ok(spec)
    }

    pub fn build_pricing(&self) -> Result<PricingModel> {
        let p = &self.payoff;
        let t = p.horizon;
        let s = &self.model.s;
        let params = p
            .params
            .as_object()
            .context("payoff.params must be a JSON object")?;
        let num = |name: &str| -> Result<f64> {
            params
                .get(name)
                .and_then(Value::as_f64)
                .with_context(|| format!("payoff {} needs numeric parameter {name}", p.key))
        };
        let one_dim = || -> Result<f64> {
            ensure!(
                self.model.d == 1,
                "payoff {} is one-dimensional but model.d = {}",
                p.key,
                self.model.d
            );
            Ok(s[0])
        };
        let model = match p.key.as_str() {
            "call" => PricingModel::call(num("K")?, one_dim()?, t)?,
            "digital" => PricingModel::digital(num("K")?, one_dim()?, t)?,
            "power" => PricingModel::power(num("K")?, num("alpha")?, one_dim()?, t)?,
            "bm_quadratic" => PricingModel::Quadratic(BmQuadratic::new(self.model.d, t)?),
            "sum_digital_2d" => {
                ensure!(self.model.d == 2, "sum_digital_2d needs model.d = 2");
                let lambda: Vec<f64> = serde_json::from_value(
                    params.get("lambda").cloned().unwrap_or(serde_json::json!([1.0, 1.0])),
                )
                .context("payoff.params.lambda must be two numbers")?;
                ensure!(lambda.len() == 2, "payoff.params.lambda must have two entries");
                PricingModel::SumDigital2D(SumDigital2D::new([lambda[0], lambda[1]], num("K")?, [s[0], s[1]], t)?)
            }
            "product" => {
                let factors = params
                    .get("factors")
                    .and_then(Value::as_array)
                    .context("product payoff needs params.factors (one object per coordinate)")?;
                ensure!(
                    factors.len() == self.model.d,
                    "product has {} factors but model.d = {}",
                    factors.len(),
                    self.model.d
                );
                let mut out = Vec::with_capacity(factors.len());
                for (i, f) in factors.iter().enumerate() {
                    out.push(factor(f, s[i], t).with_context(|| format!("product factor {i}"))?);
                }
                PricingModel::Product(ProductPricing::new(out)?)
            }
            other => bail!(
                "unknown payoff key {other:?} (expected call, digital, power, product, sum_digital_2d or bm_quadratic)"
            ),
        };
        Ok(model)
    }
}

fn factor(v: &Value, vol: f64, horizon: f64) -> Result<Factor1D> {
    let kind = v
        .get("kind")
        .and_then(Value::as_str)
        .context("factor needs a string field kind")?;
    let strike = v.get("K").and_then(Value::as_f64);
    let need_k = || strike.with_context(|| format!("{kind} factor needs K"));
    Ok(match kind {
        "constant" => Factor1D::constant(vol, horizon),
        "call" => Factor1D::new(FactorKind::Call, need_k()?, vol, horizon)?,
        "digital" => Factor1D::new(FactorKind::Digital, need_k()?, vol, horizon)?,
        "power" => {
            let alpha = v
                .get("alpha")
                .and_then(Value::as_f64)
                .context("power factor needs alpha")?;
            Factor1D::new(FactorKind::Power { alpha }, need_k()?, vol, horizon)?
        }
        other => bail!("unknown factor kind {other:?} (expected constant, call, digital or power)"),
    })
}

fn matrix(rows: &[Vec<f64>], d: usize) -> Result<DMatrix<f64>> {
    ensure!(
        rows.len() == d && rows.iter().all(|r| r.len() == d),
        "model.correlation must be {d} x {d}"
    );
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}
