//! Repository of available detector kinds and their parameter schemas.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};
use thiserror::Error;

use crate::detector::{
    AnalysisParams, FixedThresholdParams, LambdaMode, MeanShiftParams, SigmaLimitParams,
    DEFAULT_SIGMA,
};

/// Normalized parameter map. Keys are ordered, so serialization is canonical.
pub type ParamMap = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "choices", rename_all = "snake_case")]
pub enum ParamType {
    Integer,
    Real,
    Choice(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(flatten)]
    pub ty: ParamType,
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
    /// Lower bound for numeric params.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default)]
    pub min_exclusive: bool,
    #[serde(default)]
    pub description: String,
}

impl ParamSpec {
    fn new(name: &str, ty: ParamType, description: &str) -> Self {
        Self {
            name: name.into(),
            ty,
            required: false,
            default: None,
            min: None,
            min_exclusive: false,
            description: description.into(),
        }
    }

    fn required(mut self) -> Self {
        self.required = true;
        self
    }

    fn default(mut self, v: Value) -> Self {
        self.default = Some(v);
        self
    }

    fn min(mut self, m: f64, exclusive: bool) -> Self {
        self.min = Some(m);
        self.min_exclusive = exclusive;
        self
    }

    fn coerce(&self, raw: &Value) -> Result<Value, RegistryError> {
        let mismatch = || RegistryError::TypeMismatch {
            param: self.name.clone(),
            expected: format!("{:?}", self.ty).to_lowercase(),
            found: raw.to_string(),
        };
        let value = match &self.ty {
            ParamType::Integer => {
                let n = match raw {
                    Value::Number(n) => n.as_i64().or_else(|| {
                        n.as_f64()
                            .filter(|f| f.fract() == 0.0 && f.abs() < 9.0e15)
                            .map(|f| f as i64)
                    }),
                    _ => None,
                }
                .ok_or_else(mismatch)?;
                Value::Number(n.into())
            }
            ParamType::Real => {
                let f = raw.as_f64().filter(|f| f.is_finite()).ok_or_else(mismatch)?;
                Value::Number(Number::from_f64(f).ok_or_else(mismatch)?)
            }
            ParamType::Choice(choices) => match raw {
                Value::String(s) if choices.contains(s) => raw.clone(),
                _ => return Err(mismatch()),
            },
        };
        if let (Some(min), Some(f)) = (self.min, value.as_f64()) {
            let ok = if self.min_exclusive { f > min } else { f >= min };
            if !ok {
                let op = if self.min_exclusive { ">" } else { ">=" };
                return Err(RegistryError::Constraint(format!(
                    "{} must be {op} {min}, got {f}",
                    self.name
                )));
            }
        }
        Ok(value)
    }
}

/// Metadata describing one analysis kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorMetadata {
    pub analysis_name: String,
    pub description: String,
    pub params: Vec<ParamSpec>,
}

impl DetectorMetadata {
    /// Check `raw` against the schema, fill defaults and return the normalized map.
    ///
    /// Idempotent: validating a normalized map returns it unchanged.
    pub fn validate_params(&self, raw: &ParamMap) -> Result<ParamMap, RegistryError> {
        if let Some(unknown) = raw.keys().find(|k| !self.params.iter().any(|p| &p.name == *k)) {
            return Err(RegistryError::UnknownParam {
                analysis: self.analysis_name.clone(),
                param: unknown.clone(),
            });
        }
        let mut out = ParamMap::new();
        for spec in &self.params {
            match raw.get(&spec.name).filter(|v| !v.is_null()) {
                Some(v) => {
                    out.insert(spec.name.clone(), spec.coerce(v)?);
                }
                None => {
                    if let Some(d) = &spec.default {
                        out.insert(spec.name.clone(), spec.coerce(d)?);
                    } else if spec.required {
                        return Err(RegistryError::MissingParam {
                            analysis: self.analysis_name.clone(),
                            param: spec.name.clone(),
                        });
                    }
                }
            }
        }
        if is_builtin(&self.analysis_name) {
            typed_params(&self.analysis_name, &out)?;
        }
        Ok(out)
    }

    fn check(&self) -> Result<(), RegistryError> {
        if self.analysis_name.is_empty() {
            return Err(RegistryError::InvalidMetadata("empty analysis name".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.params {
            if !seen.insert(&p.name) {
                return Err(RegistryError::InvalidMetadata(format!(
                    "duplicate param {}",
                    p.name
                )));
            }
            if let Some(d) = &p.default {
                p.coerce(d).map_err(|e| {
                    RegistryError::InvalidMetadata(format!("default of {}: {e}", p.name))
                })?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegistryError {
    #[error("analysis `{0}` already registered")]
    Duplicate(String),
    #[error("unknown analysis `{0}`")]
    UnknownAnalysis(String),
    #[error("{analysis}: missing required parameter `{param}`")]
    MissingParam { analysis: String, param: String },
    #[error("{analysis}: unknown parameter `{param}`")]
    UnknownParam { analysis: String, param: String },
    #[error("parameter `{param}`: expected {expected}, found {found}")]
    TypeMismatch {
        param: String,
        expected: String,
        found: String,
    },
    #[error("constraint violated: {0}")]
    Constraint(String),
    #[error("invalid metadata: {0}")]
    InvalidMetadata(String),
}

pub struct Registry {
    entries: BTreeMap<String, DetectorMetadata>,
}

impl Registry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// Registry holding the three built-in analyses.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        for m in builtin_metadata() {
            r.register(m).expect("built-ins are distinct and well formed");
        }
        r
    }

    pub fn register(&mut self, meta: DetectorMetadata) -> Result<(), RegistryError> {
        meta.check()?;
        if self.entries.contains_key(&meta.analysis_name) {
            return Err(RegistryError::Duplicate(meta.analysis_name));
        }
        self.entries.insert(meta.analysis_name.clone(), meta);
        Ok(())
    }

    /// Look up an analysis by exact (case-sensitive) name.
    pub fn resolve(&self, name: &str) -> Result<&DetectorMetadata, RegistryError> {
        self.entries
            .get(name)
            .ok_or_else(|| RegistryError::UnknownAnalysis(name.to_owned()))
    }

    pub fn list(&self) -> Vec<&DetectorMetadata> {
        self.entries.values().collect()
    }
}

impl Default for Registry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

fn is_builtin(name: &str) -> bool {
    matches!(name, "fixed_threshold" | "sigma_limit" | "mean_shift")
}

pub fn builtin_metadata() -> Vec<DetectorMetadata> {
    use serde_json::json;
    vec![
        DetectorMetadata {
            analysis_name: "fixed_threshold".into(),
            description: "Fires when `run_length` consecutive values are >= `threshold`.".into(),
            params: vec![
                ParamSpec::new("threshold", ParamType::Real, "threshold V").required(),
                ParamSpec::new("run_length", ParamType::Integer, "consecutive violations n")
                    .required()
                    .min(1.0, false),
            ],
        },
        DetectorMetadata {
            analysis_name: "sigma_limit".into(),
            description: "Fires when a value is more than `sigma` standard deviations from the \
                          mean of the preceding `window_size` values."
                .into(),
            params: vec![
                ParamSpec::new("window_size", ParamType::Integer, "window length in samples")
                    .required()
                    .min(2.0, false),
                ParamSpec::new("sigma", ParamType::Real, "deviation multiplier")
                    .default(json!(DEFAULT_SIGMA))
                    .min(0.0, true),
            ],
        },
        DetectorMetadata {
            analysis_name: "mean_shift".into(),
            description: "Fires when the means of two adjacent windows of `window_size` values \
                          differ by more than lambda."
                .into(),
            params: vec![
                ParamSpec::new("window_size", ParamType::Integer, "window length in samples")
                    .required()
                    .min(1.0, false),
                ParamSpec::new(
                    "lambda_mode",
                    ParamType::Choice(vec!["fixed".into(), "prev_window_std".into()]),
                    "fixed lambda, or std of the previous window",
                )
                .default(json!("prev_window_std")),
                ParamSpec::new("lambda", ParamType::Real, "fixed lambda (lambda_mode=fixed)")
                    .min(0.0, false),
            ],
        },
    ]
}

/// Convert a normalized map of a built-in analysis into typed detector params.
pub fn typed_params(analysis: &str, params: &ParamMap) -> Result<AnalysisParams, RegistryError> {
    let real = |k: &str| params.get(k).and_then(Value::as_f64);
    let int = |k: &str| params.get(k).and_then(Value::as_u64).map(|v| v as usize);
    let missing = |k: &str| RegistryError::MissingParam {
        analysis: analysis.into(),
        param: k.into(),
    };
    let constraint = |e: crate::detector::DetectorError| RegistryError::Constraint(e.to_string());
    match analysis {
        "fixed_threshold" => Ok(AnalysisParams::FixedThreshold(
            FixedThresholdParams::new(
                real("threshold").ok_or_else(|| missing("threshold"))?,
                int("run_length").ok_or_else(|| missing("run_length"))?,
            )
            .map_err(constraint)?,
        )),
        "sigma_limit" => Ok(AnalysisParams::SigmaLimit(
            SigmaLimitParams::new(
                int("window_size").ok_or_else(|| missing("window_size"))?,
                real("sigma").unwrap_or(DEFAULT_SIGMA),
            )
            .map_err(constraint)?,
        )),
        "mean_shift" => {
            let mode = params
                .get("lambda_mode")
                .and_then(Value::as_str)
                .unwrap_or("prev_window_std");
            let lambda = match (mode, real("lambda")) {
                ("fixed", Some(l)) => LambdaMode::Fixed(l),
                ("fixed", None) => return Err(missing("lambda")),
                (_, None) => LambdaMode::PrevWindowStd,
                (_, Some(_)) => {
                    return Err(RegistryError::Constraint(
                        "lambda is only allowed with lambda_mode=fixed".into(),
                    ))
                }
            };
            Ok(AnalysisParams::MeanShift(
                MeanShiftParams::new(int("window_size").ok_or_else(|| missing("window_size"))?, lambda)
                    .map_err(constraint)?,
            ))
        }
        other => Err(RegistryError::UnknownAnalysis(other.into())),
    }
}

/// Normalized map for typed params (inverse of [`typed_params`]).
pub fn params_to_map(p: &AnalysisParams) -> ParamMap {
    use serde_json::json;
    let mut m = ParamMap::new();
    match p {
        AnalysisParams::FixedThreshold(f) => {
            m.insert("threshold".into(), json!(f.threshold));
            m.insert("run_length".into(), json!(f.run_length));
        }
        AnalysisParams::SigmaLimit(s) => {
            m.insert("window_size".into(), json!(s.window_size));
            m.insert("sigma".into(), json!(s.sigma));
        }
        AnalysisParams::MeanShift(s) => {
            m.insert("window_size".into(), json!(s.window_size));
            match s.lambda {
                LambdaMode::Fixed(l) => {
                    m.insert("lambda_mode".into(), json!("fixed"));
                    m.insert("lambda".into(), json!(l));
                }
                LambdaMode::PrevWindowStd => {
                    m.insert("lambda_mode".into(), json!("prev_window_std"));
                }
            }
        }
    }
    m
}
