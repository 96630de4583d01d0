//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "models": [{"kind": "gauss_arma", "ar": [0.9]}],
//!   "controllers": [{"kind": "predictor"}, {"kind": "random", "seed": 1, "memory": 3, "gain_cap": 4.0, "count": 10}],
//!   "p_values": [1, 2, "inf"],
//!   "horizon": 20000,
//!   "trials": 1,
//!   "master_seed": 7,
//!   "output_dir": "out"
//! }
//! ```

use std::fmt;
use std::path::PathBuf;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::distributions::{Exponent, GeneralizedGaussian};
use crate::error::Result;
use crate::processes::DisturbanceModel;
use crate::rng::derive_seed;
use crate::simulator::{
    learned_controller, predictor_controller, random_causal_controller, run_loop, zero_controller,
    AnticipatoryFixture, ControllerPolicy, LearnedFeatures,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    BoundOnly,
    Simulate,
    Verify,
    #[default]
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InnovationSpec {
    Gaussian { std: f64 },
    Laplace { mu: f64 },
    Uniform { half_width: f64 },
    GeneralizedGaussian { p: Exponent, mu: f64 },
}

impl InnovationSpec {
    pub fn build(&self) -> Result<GeneralizedGaussian> {
        match *self {
            InnovationSpec::Gaussian { std } => GeneralizedGaussian::gaussian(std),
            InnovationSpec::Laplace { mu } => GeneralizedGaussian::laplace(mu),
            InnovationSpec::Uniform { half_width } => GeneralizedGaussian::uniform(half_width),
            InnovationSpec::GeneralizedGaussian { p, mu } => GeneralizedGaussian::new(p, mu),
        }
    }
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Iid {
        #[serde(with = "tagged::one")]
        innovation: InnovationSpec,
    },
    GaussArma {
        #[serde(default)]
        ar: Vec<f64>,
        #[serde(default)]
        ma: Vec<f64>,
        #[serde(default = "unit")]
        innovation_variance: f64,
    },
    GenGaussAr {
        ar: Vec<f64>,
        #[serde(with = "tagged::one")]
        innovation: InnovationSpec,
    },
    /// Matrices as lists of rows.
    VectorGaussAr {
        transition: Vec<Vec<f64>>,
        innovation_covariance: Vec<Vec<f64>>,
    },
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(crate::Error::InvalidParameter(format!("{what} must be a non-empty list of equal-length rows")));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

impl ModelSpec {
    pub fn build(&self) -> Result<DisturbanceModel> {
        match self {
            ModelSpec::Iid { innovation } => Ok(DisturbanceModel::iid(innovation.build()?)),
            ModelSpec::GaussArma { ar, ma, innovation_variance } => {
                DisturbanceModel::gauss_arma(ar.clone(), ma.clone(), *innovation_variance)
            }
            ModelSpec::GenGaussAr { ar, innovation } => DisturbanceModel::gen_gauss_ar(ar.clone(), innovation.build()?),
            ModelSpec::VectorGaussAr { transition, innovation_covariance } => DisturbanceModel::vector_gauss_ar(
                matrix(transition, "transition")?,
                matrix(innovation_covariance, "innovation_covariance")?,
            ),
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ControllerSpec {
    Zero,
    Predictor,
    /// `count` instances with seeds `seed, seed + 1, ...`.
    Random {
        seed: u64,
        memory: usize,
        gain_cap: f64,
        #[serde(default = "one")]
        count: usize,
    },
    /// Trained on `training_traces` zero-controlled traces of `training_steps` each.
    Learned {
        memory: usize,
        training_steps: usize,
        #[serde(default = "one")]
        training_traces: usize,
        #[serde(default = "linear")]
        features: LearnedFeatures,
    },
    /// Non-causal test double; rejected by the audit.
    Anticipatory,
}

fn linear() -> LearnedFeatures {
    LearnedFeatures::Linear
}

const TRAINING_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

impl ControllerSpec {
    /// Number of controller instances this entry expands to.
    pub fn count(&self) -> usize {
        match self {
            ControllerSpec::Random { count, .. } => *count,
            _ => 1,
        }
    }

    /// Instance `index` (< [`count`](Self::count)) for `model`. Learned
    /// controllers train on traces seeded from `master_seed`.
    pub fn build(&self, index: usize, model: &DisturbanceModel, master_seed: u64) -> Result<Box<dyn ControllerPolicy>> {
        Ok(match self {
            ControllerSpec::Zero => Box::new(zero_controller(model.dim())),
            ControllerSpec::Predictor => Box::new(predictor_controller(model)?),
            ControllerSpec::Random { seed, memory, gain_cap, .. } => {
                Box::new(random_causal_controller(seed.wrapping_add(index as u64), *memory, *gain_cap)?)
            }
            ControllerSpec::Learned { memory, training_steps, training_traces, features } => {
                let zero = zero_controller(model.dim());
                let traces = (0..*training_traces)
                    .map(|j| run_loop(model, &zero, *training_steps, derive_seed(master_seed ^ TRAINING_SALT, j as u64)))
                    .collect::<Result<Vec<_>>>()?;
                Box::new(learned_controller(&traces, *memory, *features)?)
            }
            ControllerSpec::Anticipatory => Box::new(AnticipatoryFixture),
        })
    }
}

fn default_p_values() -> Vec<Exponent> {
    vec![Exponent::Finite(2.0)]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("entrolim-out")
}

fn enabled() -> bool {
    true
}

/// `horizon` is the trace length for `simulate` and the number of
/// post-burn-in steps per trial for `verify` and `sweep`. With `step` set,
/// verification is per step: `e_step` is pooled across `trials` runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(with = "tagged::list")]
    pub models: Vec<ModelSpec>,
    #[serde(default, with = "tagged::list")]
    pub controllers: Vec<ControllerSpec>,
    #[serde(default = "default_p_values")]
    pub p_values: Vec<Exponent>,
    pub horizon: usize,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    /// Whiteness, density-fit and mutual-information diagnostics per cell.
    #[serde(default = "enabled")]
    pub tightness: bool,
    /// Write measured `runtime_ms`; off by default so reruns are byte-identical.
    #[serde(default)]
    pub record_timing: bool,
}

/// A config problem, located by its JSON path (`models[1].ar`).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
}

impl ConfigError {
    fn at(field: impl Into<String>, message: impl fmt::Display) -> Self {
        ConfigError { field: field.into(), message: message.to_string(), line: None, column: None }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at `{}`: {}", self.field, self.message)?;
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, " (line {l}, column {c})")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> std::result::Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = tagged::path_string(e.path());
            let inner = e.into_inner();
            let mut message = inner.to_string();
            // serde_json appends its own position; keep the bare message
            if let Some(i) = message.rfind(" at line ") {
                message.truncate(i);
            }
            let (field, message) = tagged::unmark(&path, &message);
            ConfigError {
                field: if field.is_empty() { "<root>".into() } else { field },
                message,
                line: Some(inner.line()),
                column: Some(inner.column()),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks ranges and that every model builds.
    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        if self.horizon == 0 {
            return Err(ConfigError::at("horizon", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(ConfigError::at("trials", "must be at least 1"));
        }
        for (i, m) in self.models.iter().enumerate() {
            m.build().map_err(|e| ConfigError::at(format!("models[{i}]"), e))?;
        }
        for (i, c) in self.controllers.iter().enumerate() {
            match c {
                ControllerSpec::Random { gain_cap, count, .. } => {
                    if !(*gain_cap > 0.0) || !gain_cap.is_finite() {
                        return Err(ConfigError::at(format!("controllers[{i}].gain_cap"), "must be positive"));
                    }
                    if *count == 0 {
                        return Err(ConfigError::at(format!("controllers[{i}].count"), "must be at least 1"));
                    }
                }
                ControllerSpec::Learned { memory, training_steps, training_traces, .. } => {
                    if *training_traces == 0 || training_steps <= memory {
                        return Err(ConfigError::at(
                            format!("controllers[{i}].training_steps"),
                            "need more training steps than the memory and at least one trace",
                        ));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn build_models(&self) -> std::result::Result<Vec<DisturbanceModel>, ConfigError> {
        self.models
            .iter()
            .enumerate()
            .map(|(i, m)| m.build().map_err(|e| ConfigError::at(format!("models[{i}]"), e)))
            .collect()
    }

    /// `(entry, instance)` pairs in sweep order.
    pub fn controller_instances(&self) -> Vec<(usize, usize)> {
        self.controllers.iter().enumerate().flat_map(|(i, c)| (0..c.count()).map(move |j| (i, j))).collect()
    }
}

/// Enums are written internally tagged (`{"kind": "zero"}`) but derived
/// externally tagged, so the field path of an error inside a variant is
/// not lost to serde's buffering of tagged content.
mod tagged {
    use serde::de::{DeserializeOwned, Error as _};
    use serde::ser::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use serde_json::{Map, Value};
    use serde_path_to_error::{Path, Segment};

    pub trait Tag {
        const TAG: &'static str;
    }

    impl Tag for super::ModelSpec {
        const TAG: &'static str = "kind";
    }
    impl Tag for super::ControllerSpec {
        const TAG: &'static str = "kind";
    }
    impl Tag for super::InnovationSpec {
        const TAG: &'static str = "family";
    }

    const MARK: &str = "at `";

    /// Dotted path without enum variant segments.
    pub fn path_string(path: &Path) -> String {
        let mut s = String::new();
        for seg in path.iter() {
            match seg {
                Segment::Seq { index } => s.push_str(&format!("[{index}]")),
                Segment::Map { key } => {
                    if !s.is_empty() {
                        s.push('.');
                    }
                    s.push_str(key);
                }
                Segment::Enum { .. } => {}
                Segment::Unknown => s.push_str(".?"),
            }
        }
        s
    }

    fn join(prefix: &str, sub: &str) -> String {
        if prefix.is_empty() || sub.is_empty() || sub.starts_with('[') {
            format!("{prefix}{sub}")
        } else {
            format!("{prefix}.{sub}")
        }
    }

    /// Splits a marked message into the full path and the bare message.
    pub fn unmark(prefix: &str, message: &str) -> (String, String) {
        if let Some(rest) = message.strip_prefix(MARK) {
            if let Some(end) = rest.find("`: ") {
                return (join(prefix, &rest[..end]), rest[end + 3..].to_string());
            }
        }
        (prefix.to_string(), message.to_string())
    }

    fn marked(prefix: &str, e: serde_path_to_error::Error<serde_json::Error>) -> String {
        let path = join(prefix, &path_string(e.path()));
        let (path, msg) = unmark(&path, &e.into_inner().to_string());
        format!("{MARK}{path}`: {msg}")
    }

    fn to_external(v: Value, tag: &str) -> Result<Value, String> {
        let Value::Object(mut map) = v else {
            return Err(format!("expected an object with a \"{tag}\" field"));
        };
        let name = match map.remove(tag) {
            Some(Value::String(name)) => name,
            Some(_) => return Err(format!("{MARK}{tag}`: expected a string")),
            None => return Err(format!("missing field `{tag}`")),
        };
        if map.is_empty() {
            return Ok(Value::String(name));
        }
        let mut outer = Map::new();
        outer.insert(name, Value::Object(map));
        Ok(Value::Object(outer))
    }

    fn to_internal(v: Value, tag: &str) -> Value {
        match v {
            Value::String(name) => {
                let mut m = Map::new();
                m.insert(tag.to_string(), Value::String(name));
                Value::Object(m)
            }
            Value::Object(outer) if outer.len() == 1 => {
                let (name, body) = outer.into_iter().next().expect("one entry");
                let mut m = Map::new();
                m.insert(tag.to_string(), Value::String(name));
                if let Value::Object(fields) = body {
                    m.extend(fields);
                }
                Value::Object(m)
            }
            other => other,
        }
    }

    fn decode<T: DeserializeOwned + Tag>(v: Value, prefix: &str) -> Result<T, String> {
        let ext = to_external(v, T::TAG).map_err(|m| {
            let (p, m) = unmark(prefix, &m);
            format!("{MARK}{p}`: {m}")
        })?;
        serde_path_to_error::deserialize(ext).map_err(|e| marked(prefix, e))
    }

    fn encode<T: Serialize + Tag>(v: &T) -> Result<Value, serde_json::Error> {
        Ok(to_internal(serde_json::to_value(v)?, T::TAG))
    }

    pub mod one {
        use super::*;

        pub fn serialize<T: Serialize + Tag, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
            encode(v).map_err(S::Error::custom)?.serialize(s)
        }

        pub fn deserialize<'de, T: DeserializeOwned + Tag, D: Deserializer<'de>>(d: D) -> Result<T, D::Error> {
            decode(Value::deserialize(d)?, "").map_err(D::Error::custom)
        }
    }

    pub mod list {
        use super::*;

        pub fn serialize<T: Serialize + Tag, S: Serializer>(v: &[T], s: S) -> Result<S::Ok, S::Error> {
            let items = v.iter().map(encode).collect::<Result<Vec<_>, _>>().map_err(S::Error::custom)?;
            items.serialize(s)
        }

        pub fn deserialize<'de, T: DeserializeOwned + Tag, D: Deserializer<'de>>(d: D) -> Result<Vec<T>, D::Error> {
            let items = Vec::<Value>::deserialize(d)?;
            items
                .into_iter()
                .enumerate()
                .map(|(i, v)| decode(v, &format!("[{i}]")))
                .collect::<Result<Vec<_>, _>>()
                .map_err(D::Error::custom)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{
        "models": [
            {"kind": "gauss_arma", "ar": [0.9]},
            {"kind": "iid", "innovation": {"family": "laplace", "mu": 1.0}},
            {"kind": "gen_gauss_ar", "ar": [0.5], "innovation": {"family": "generalized_gaussian", "p": "inf", "mu": 1.0}},
            {"kind": "vector_gauss_ar", "transition": [[0.5, 0], [0, 0.5]], "innovation_covariance": [[1, 0], [0, 1]]}
        ],
        "controllers": [
            {"kind": "zero"},
            {"kind": "random", "seed": 3, "memory": 2, "gain_cap": 4.0, "count": 5},
            {"kind": "learned", "memory": 1, "training_steps": 2000}
        ],
        "p_values": [1, 2.5, "inf"],
        "horizon": 5000,
        "master_seed": 11
    }"#;

    #[test]
    fn parses_and_round_trips() {
        let c = ExperimentConfig::from_json(DOC).unwrap();
        assert_eq!(c.p_values, vec![Exponent::Finite(1.0), Exponent::Finite(2.5), Exponent::Infinity]);
        assert_eq!(c.trials, 1);
        assert_eq!(c.mode, Mode::Sweep);
        assert_eq!(c.controller_instances().len(), 7);
        let again = ExperimentConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(again, c);
        assert_eq!(c.build_models().unwrap()[3].dim(), 2);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = DOC.replace("\"mu\": 1.0}},", "\"mu\": \"x\"}},");
        let e = ExperimentConfig::from_json(&bad).unwrap_err();
        assert_eq!(e.field, "models[1].innovation.mu");
        assert!(e.line.is_some());
        let e = ExperimentConfig::from_json(&DOC.replace("5000", "0")).unwrap_err();
        assert_eq!(e.field, "horizon");
        let e = ExperimentConfig::from_json(&DOC.replace("[0.9]", "[1.5]")).unwrap_err();
        assert_eq!(e.field, "models[0]");
        let e = ExperimentConfig::from_json(&DOC.replace("\"p_values\": [1,", "\"p_values\": [0.5,")).unwrap_err();
        assert_eq!(e.field, "p_values[0]");
        let e = ExperimentConfig::from_json(&DOC.replace("\"gain_cap\": 4.0", "\"gain_cap\": \"big\"")).unwrap_err();
        assert_eq!(e.field, "controllers[1].gain_cap");
        let e = ExperimentConfig::from_json(&DOC.replace("\"laplace\"", "\"cauchy\"")).unwrap_err();
        assert_eq!(e.field, "models[1].innovation");
        assert!(e.message.contains("cauchy"), "{e}");
        let e = ExperimentConfig::from_json(&DOC.replace("{\"kind\": \"zero\"}", "{\"knd\": \"zero\"}")).unwrap_err();
        assert_eq!(e.field, "controllers[0]");
        let e = ExperimentConfig::from_json(&DOC.replace("\"horizon\"", "\"horizn\"")).unwrap_err();
        assert!(e.message.contains("horizn"), "{e}");
    }

    #[test]
    fn random_instances_use_consecutive_seeds() {
        let c = ExperimentConfig::from_json(DOC).unwrap();
        let model = c.build_models().unwrap().remove(0);
        let a = c.controllers[1].build(2, &model, 0).unwrap();
        assert_eq!(a.descriptor(), "random(seed=5,memory=2,cap=4)");
    }
}
