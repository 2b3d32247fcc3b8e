use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use nctorus::symbol::{ClassicalSymbol, ClassicalSymbolRecord};
use nctorus::ThetaMatrix;

use crate::dsl::{self, DiffOp};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] nctorus::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Spectrum,
    ComposeCheck,
    ParametrixStudy,
    ResolventSweep,
    MinimalGrowth,
    Schatten,
    Power,
    Abs,
    TraceChain,
    PhiCheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Spectrum => "spectrum",
            ExperimentKind::ComposeCheck => "compose-check",
            ExperimentKind::ParametrixStudy => "parametrix-study",
            ExperimentKind::ResolventSweep => "resolvent-sweep",
            ExperimentKind::MinimalGrowth => "minimal-growth",
            ExperimentKind::Schatten => "schatten",
            ExperimentKind::Power => "power",
            ExperimentKind::Abs => "abs",
            ExperimentKind::TraceChain => "trace-chain",
            ExperimentKind::PhiCheck => "phi-check",
        }
    }

    /// Kinds that run without a user operator.
    pub fn needs_operator(self) -> bool {
        !matches!(self, ExperimentKind::ComposeCheck | ExperimentKind::PhiCheck)
    }
}

/// Operator given inline: a DSL string, `{"dsl": ...}`, or `{"symbol": <classical symbol record>}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OperatorSpec {
    Dsl(String),
    Tagged { dsl: String },
    Symbol { symbol: ClassicalSymbolRecord },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub theta: Vec<Vec<f64>>,
    pub cutoff: usize,
    #[serde(default)]
    pub margin: Option<usize>,
    #[serde(default)]
    pub operator: Option<OperatorSpec>,
    /// File holding either DSL text or a symbol JSON record.
    #[serde(default)]
    pub operator_file: Option<PathBuf>,
    #[serde(default)]
    pub kind: Option<ExperimentKind>,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

/// The operator resolved against theta.
#[derive(Clone, Debug)]
pub struct ResolvedOperator {
    pub label: String,
    pub symbol: ClassicalSymbol,
    /// Present when the operator came from the DSL.
    pub diff: Option<DiffOp>,
}

/// A validated config ready to run.
#[derive(Clone, Debug)]
pub struct Validated {
    pub config: ExperimentConfig,
    pub kind: ExperimentKind,
    pub theta: Arc<ThetaMatrix>,
    pub operator: Option<ResolvedOperator>,
    pub hash: String,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
        // operator files are resolved relative to the config
        if let (Some(f), Some(dir)) = (cfg.operator_file.as_ref(), path.parent()) {
            if f.is_relative() {
                cfg.operator_file = Some(dir.join(f));
            }
        }
        Ok(cfg)
    }

    /// sha256 of the canonical (sorted-key, compact) JSON form.
    pub fn hash(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_string(&v).expect("value serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(self, requested: ExperimentKind) -> Result<Validated, ConfigError> {
        let kind = match self.kind {
            Some(k) if k != requested => {
                return Err(ConfigError::Invalid(format!(
                    "config kind {} does not match subcommand {}",
                    k.name(),
                    requested.name()
                )))
            }
            _ => requested,
        };
        let theta = Arc::new(ThetaMatrix::new(self.theta.clone())?);
        if self.cutoff < 2 {
            return Err(ConfigError::Invalid(format!("cutoff {} must be at least 2", self.cutoff)));
        }
        if let Some(m) = self.margin {
            if m >= self.cutoff {
                return Err(nctorus::Error::Margin {
                    margin: m,
                    cutoff: self.cutoff,
                }
                .into());
            }
        }
        if self.operator.is_some() && self.operator_file.is_some() {
            return Err(ConfigError::Invalid("give either operator or operator_file, not both".into()));
        }
        let source = match (&self.operator, &self.operator_file) {
            (Some(spec), _) => Some(spec.clone()),
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
                if text.trim_start().starts_with('{') {
                    Some(serde_json::from_str::<OperatorSpec>(&text)?)
                } else {
                    Some(OperatorSpec::Dsl(text.trim().to_string()))
                }
            }
            (None, None) => None,
        };
        let operator = source.map(|s| resolve(&s, &theta)).transpose()?;
        if operator.is_none() && kind.needs_operator() {
            return Err(ConfigError::Invalid(format!("{} needs an operator", kind.name())));
        }
        if !self.params.is_null() && !self.params.is_object() {
            return Err(ConfigError::Invalid("params must be an object".into()));
        }
        let hash = self.hash();
        Ok(Validated {
            config: self,
            kind,
            theta,
            operator,
            hash,
        })
    }
}

fn resolve(spec: &OperatorSpec, theta: &Arc<ThetaMatrix>) -> Result<ResolvedOperator, ConfigError> {
    match spec {
        OperatorSpec::Dsl(src) | OperatorSpec::Tagged { dsl: src } => {
            let diff = dsl::parse_operator(src, theta)?;
            Ok(ResolvedOperator {
                label: diff.to_string(),
                symbol: diff.symbol()?,
                diff: Some(diff),
            })
        }
        OperatorSpec::Symbol { symbol } => {
            let sym = ClassicalSymbol::from_record(symbol)?;
            if sym.theta().as_ref() != theta.as_ref() {
                return Err(ConfigError::Invalid("symbol theta differs from config theta".into()));
            }
            Ok(ResolvedOperator {
                label: format!("symbol of order {}", sym.order()),
                symbol: sym,
                diff: None,
            })
        }
    }
}
