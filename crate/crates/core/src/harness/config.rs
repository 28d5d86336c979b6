//! Line-based experiment configuration.
//!
//! ```text
//! # comments start with '#'
//! [chain]
//! n = 12
//! lambda = 5
//! alpha = 0.0314159265358979   # rad/us, optional
//! beta = 0.0314159265358979    # rad/us, optional
//! include_field_phase = false
//!
//! [protocol]
//! kind = pm                    # pm | pc | cc, or a comma list
//! m = 500
//! dist = [(1.0, 0.5), (5.0, 0.5)]
//! pulse_area = 1.5707963267949 # optional
//! coupling = 0.5               # optional, default pi / (2 mu_mean)
//! measurement = post_selected  # or bernoulli
//! record_states = false
//!
//! [experiment]
//! initial_state = w            # w | leftmost | custom
//! amplitudes = [0.6, (0.0, 0.8)]
//! realizations = 100
//! seed = 1
//! output = runs/example
//! lambda_sweep = [1, 2, 3]
//! kappa_sweep = [(0.8, 1.0, 11.0), (0.8, 3.0, 3.0)]
//! ```

use std::collections::HashMap;
use std::path::PathBuf;

use num_complex::Complex64;
use thiserror::Error;

use crate::chain::{site_state, w_state, ChainError, ChainSpec, DEFAULT_RATE};
use crate::linalg::StateVector;
use crate::protocols::{MeasurementMode, ProtocolConfig, ProtocolKind};
use crate::stochastics::IntervalDistribution;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("SubspaceTooLarge: lambda + 2 = {needed} exceeds N = {n} for a coupling protocol")]
    SubspaceTooLarge { needed: usize, n: usize },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// Equal superposition over the subspace sites.
    WState,
    /// Excitation on site 1.
    LeftmostExcited,
    /// Explicit amplitudes for sites `1..=k`, normalised on load.
    Custom(Vec<Complex64>),
}

impl InitialState {
    pub fn label(&self) -> &'static str {
        match self {
            Self::WState => "w",
            Self::LeftmostExcited => "leftmost",
            Self::Custom(_) => "custom",
        }
    }

    pub fn build(&self, spec: &ChainSpec) -> Result<StateVector, ValidationError> {
        match self {
            Self::WState => Ok(w_state(spec.n, spec.lambda)),
            Self::LeftmostExcited => site_state(spec.n, 1).map_err(|e| ValidationError::Invalid(e.to_string())),
            Self::Custom(amps) => {
                if amps.len() > spec.lambda {
                    return Err(ValidationError::Invalid(format!(
                        "custom state has {} amplitudes but the subspace has {} sites",
                        amps.len(),
                        spec.lambda
                    )));
                }
                let mut full = amps.clone();
                full.resize(spec.n, Complex64::new(0.0, 0.0));
                Ok(StateVector::new(full))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub chain: ChainSpec,
    /// Settings shared by every protocol in `protocols`; its `kind` is the first entry.
    pub protocol: ProtocolConfig,
    pub protocols: Vec<ProtocolKind>,
    pub initial_state: InitialState,
    pub realizations: usize,
    pub seed: u64,
    pub output_path: Option<PathBuf>,
    pub lambda_sweep: Option<Vec<usize>>,
    /// `(p1, mu1, mu2)` triples sharing one mean.
    pub kappa_sweep: Option<Vec<(f64, f64, f64)>>,
}

impl ExperimentConfig {
    pub fn lambdas(&self) -> Vec<usize> {
        self.lambda_sweep.clone().unwrap_or_else(|| vec![self.chain.lambda])
    }

    pub fn distributions(&self) -> Result<Vec<IntervalDistribution>, ValidationError> {
        match &self.kappa_sweep {
            None => Ok(vec![self.protocol.distribution.clone()]),
            Some(points) => points
                .iter()
                .map(|&(p1, mu1, mu2)| {
                    IntervalDistribution::bimodal(mu1, p1, mu2).map_err(|e| ValidationError::Invalid(e.to_string()))
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let coupled = self.protocols.iter().any(|k| k.needs_coupling_sites());
        for lambda in self.lambdas() {
            let spec = self.chain.with_lambda(lambda);
            spec.validate_relaxed().map_err(|e| ValidationError::Invalid(e.to_string()))?;
            if coupled && lambda + 2 > spec.n {
                return Err(ValidationError::SubspaceTooLarge { needed: lambda + 2, n: spec.n });
            }
            self.initial_state.build(&spec)?;
        }
        if self.protocols.is_empty() {
            return Err(ValidationError::Missing("kind".into()));
        }
        self.protocol.validate().map_err(|e| ValidationError::Invalid(e.to_string()))?;
        if self.realizations == 0 {
            return Err(ValidationError::Invalid("realizations must be at least 1".into()));
        }
        let dists = self.distributions()?;
        if self.kappa_sweep.is_some() {
            let mean = dists[0].moments().mean;
            if let Some(d) = dists.iter().find(|d| (d.moments().mean - mean).abs() > 1e-9 * mean) {
                return Err(ValidationError::Invalid(format!(
                    "kappa sweep must keep the mean fixed: {} vs {}",
                    d.moments().mean,
                    mean
                )));
            }
        }
        Ok(())
    }
}

struct Entry {
    line: usize,
    value: String,
}

type Sections = HashMap<String, HashMap<String, Entry>>;

const KNOWN: &[(&str, &[&str])] = &[
    ("chain", &["n", "lambda", "alpha", "beta", "include_field_phase"]),
    ("protocol", &["kind", "m", "dist", "pulse_area", "coupling", "measurement", "record_states"]),
    ("experiment", &["initial_state", "amplitudes", "realizations", "seed", "output", "lambda_sweep", "kappa_sweep"]),
];

fn tokenize(text: &str) -> Result<Sections, ConfigError> {
    let mut sections: Sections = HashMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim().to_string();
            if !KNOWN.iter().any(|(s, _)| *s == name) {
                return Err(ConfigError::Parse { line, message: format!("unknown section [{name}]") });
            }
            sections.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Parse { line, message: format!("expected `key = value`, got `{content}`") });
        };
        let Some(section) = current.clone() else {
            return Err(ConfigError::Parse { line, message: "key outside of any section".into() });
        };
        let key = key.trim().to_string();
        let allowed = KNOWN.iter().find(|(s, _)| *s == section).map(|(_, k)| *k).unwrap_or(&[]);
        if !allowed.contains(&key.as_str()) {
            return Err(ConfigError::Parse { line, message: format!("unknown key `{key}` in [{section}]") });
        }
        let table = sections.entry(section.clone()).or_default();
        if let Some(prev) = table.get(&key) {
            return Err(ConfigError::Parse {
                line,
                message: format!("duplicate key `{key}` (first set on line {})", prev.line),
            });
        }
        table.insert(key, Entry { line, value: value.trim().to_string() });
    }
    Ok(sections)
}

struct Reader<'a> {
    sections: &'a Sections,
}

impl Reader<'_> {
    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section).and_then(|t| t.get(key))
    }

    fn parse<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|_| ConfigError::Parse {
                line: e.line,
                message: format!("cannot parse `{}` for `{key}`", e.value),
            }),
        }
    }

    fn required<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<T, ConfigError> {
        self.parse(section, key)?.ok_or_else(|| ValidationError::Missing(format!("{section}.{key}")).into())
    }

    fn with<T>(
        &self,
        section: &str,
        key: &str,
        f: impl FnOnce(&str) -> Result<T, String>,
    ) -> Result<Option<T>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(e) => f(&e.value).map(Some).map_err(|message| ConfigError::Parse { line: e.line, message }),
        }
    }
}

/// Splits `[a, (b, c), d]` into its top-level items.
fn list_items(s: &str) -> Result<Vec<String>, String> {
    let inner = s
        .trim()
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| format!("expected a bracketed list, got `{s}`"))?;
    let mut items = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in inner.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                items.push(std::mem::take(&mut cur).trim().to_string());
                continue;
            }
            _ => {}
        }
        if depth < 0 {
            return Err(format!("unbalanced parentheses in `{s}`"));
        }
        cur.push(ch);
    }
    if depth != 0 {
        return Err(format!("unbalanced parentheses in `{s}`"));
    }
    let last = cur.trim().to_string();
    if !last.is_empty() {
        items.push(last);
    } else if !items.is_empty() {
        return Err(format!("trailing comma in `{s}`"));
    }
    Ok(items)
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("`{s}` is not a number"))
}

fn tuple(s: &str, arity: usize) -> Result<Vec<f64>, String> {
    let inner = s
        .trim()
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| format!("expected a tuple, got `{s}`"))?;
    let xs = inner.split(',').map(parse_f64).collect::<Result<Vec<_>, _>>()?;
    if xs.len() != arity {
        return Err(format!("expected {arity} values in `{s}`"));
    }
    Ok(xs)
}

/// Parses `[(mu, p), ...]`.
pub fn parse_distribution(s: &str) -> Result<IntervalDistribution, String> {
    let atoms =
        list_items(s)?.iter().map(|item| tuple(item, 2).map(|v| (v[0], v[1]))).collect::<Result<Vec<_>, _>>()?;
    IntervalDistribution::new(atoms).map_err(|e| e.to_string())
}

fn parse_amplitudes(s: &str) -> Result<Vec<Complex64>, String> {
    let amps = list_items(s)?
        .iter()
        .map(|item| {
            if item.starts_with('(') {
                tuple(item, 2).map(|v| Complex64::new(v[0], v[1]))
            } else {
                parse_f64(item).map(|x| Complex64::new(x, 0.0))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let norm: f64 = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm.is_nan() || norm <= 0.0 {
        return Err("custom amplitudes must not all vanish".into());
    }
    Ok(amps.into_iter().map(|z| z / norm).collect())
}

fn parse_kinds(s: &str) -> Result<Vec<ProtocolKind>, String> {
    let mut kinds = Vec::new();
    for part in s.split(',') {
        let k = ProtocolKind::parse(part).ok_or_else(|| format!("unknown protocol `{}`", part.trim()))?;
        if !kinds.contains(&k) {
            kinds.push(k);
        }
    }
    Ok(kinds)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let sections = tokenize(text)?;
    let r = Reader { sections: &sections };

    let n: usize = r.required("chain", "n")?;
    let lambda_sweep = r.with("experiment", "lambda_sweep", |v| {
        list_items(v)?
            .iter()
            .map(|x| x.parse::<usize>().map_err(|_| format!("`{x}` is not a site count")))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let lambda = match r.parse::<usize>("chain", "lambda")? {
        Some(l) => l,
        None => lambda_sweep
            .as_ref()
            .and_then(|s| s.first().copied())
            .ok_or_else(|| ValidationError::Missing("chain.lambda".into()))?,
    };
    let chain = ChainSpec {
        n,
        alpha: r.parse("chain", "alpha")?.unwrap_or(DEFAULT_RATE),
        beta: r.parse("chain", "beta")?.unwrap_or(DEFAULT_RATE),
        lambda,
        include_field_phase: r.parse("chain", "include_field_phase")?.unwrap_or(false),
    };
    chain.validate_relaxed().map_err(|e| match e {
        ChainError::SubspaceTooLarge { needed, n } => ValidationError::SubspaceTooLarge { needed, n },
        other => ValidationError::Invalid(other.to_string()),
    })?;

    let kinds =
        r.with("protocol", "kind", parse_kinds)?.ok_or_else(|| ValidationError::Missing("protocol.kind".into()))?;
    let m: usize = r.required("protocol", "m")?;
    let kappa_sweep = r.with("experiment", "kappa_sweep", |v| {
        list_items(v)?.iter().map(|item| tuple(item, 3).map(|t| (t[0], t[1], t[2]))).collect::<Result<Vec<_>, _>>()
    })?;
    let distribution = match r.with("protocol", "dist", parse_distribution)? {
        Some(d) => d,
        None => {
            let (p1, mu1, mu2) = kappa_sweep
                .as_ref()
                .and_then(|s| s.first().copied())
                .ok_or_else(|| ValidationError::Missing("protocol.dist".into()))?;
            IntervalDistribution::bimodal(mu1, p1, mu2).map_err(|e| ValidationError::Invalid(e.to_string()))?
        }
    };
    let mut protocol = ProtocolConfig::new(kinds[0], m, distribution);
    if let Some(s) = r.parse("protocol", "pulse_area")? {
        protocol.pulse_area = s;
    }
    protocol.coupling = r.parse("protocol", "coupling")?;
    protocol.record_states = r.parse("protocol", "record_states")?.unwrap_or(false);
    if let Some(mode) = r.with("protocol", "measurement", |v| match v {
        "post_selected" | "postselected" => Ok(MeasurementMode::PostSelected),
        "bernoulli" => Ok(MeasurementMode::Bernoulli),
        other => Err(format!("unknown measurement mode `{other}`")),
    })? {
        protocol.measurement = mode;
    }

    let initial_kind = r.get("experiment", "initial_state").map(|e| (e.line, e.value.to_ascii_lowercase()));
    let initial_state = match initial_kind {
        None => InitialState::WState,
        Some((_, ref v)) if v == "w" || v == "w_state" || v == "wstate" => InitialState::WState,
        Some((_, ref v)) if v == "leftmost" || v == "leftmost_excited" => InitialState::LeftmostExcited,
        Some((line, ref v)) if v == "custom" => {
            let amps = r
                .with("experiment", "amplitudes", parse_amplitudes)?
                .ok_or(ConfigError::Parse { line, message: "custom initial state needs `amplitudes`".into() })?;
            InitialState::Custom(amps)
        }
        Some((line, v)) => return Err(ConfigError::Parse { line, message: format!("unknown initial state `{v}`") }),
    };

    let config = ExperimentConfig {
        chain,
        protocol,
        protocols: kinds,
        initial_state,
        realizations: r.parse("experiment", "realizations")?.unwrap_or(1),
        seed: r.parse("experiment", "seed")?.unwrap_or(0),
        output_path: r.parse::<String>("experiment", "output")?.map(PathBuf::from),
        lambda_sweep,
        kappa_sweep,
    };
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[chain]
n = 12
lambda = 5

[protocol]
kind = pm
m = 500
dist = [(1.0, 0.5), (5.0, 0.5)]

[experiment]
realizations = 10
seed = 3
";

    #[test]
    fn minimal_config() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.chain.n, 12);
        assert_eq!(c.chain.lambda, 5);
        assert_eq!(c.chain.beta, DEFAULT_RATE);
        assert_eq!(c.protocol.m, 500);
        assert_eq!(c.protocols, vec![ProtocolKind::ProjectiveMeasurement]);
        assert_eq!(c.protocol.distribution.atoms(), &[(1.0, 0.5), (5.0, 0.5)]);
        assert_eq!(c.initial_state, InitialState::WState);
        assert_eq!(c.realizations, 10);
        assert_eq!(c.seed, 3);
    }

    #[test]
    fn coupling_protocol_needs_room() {
        let text = MINIMAL.replace("lambda = 5", "lambda = 11").replace("kind = pm", "kind = pulsed");
        let err = parse_config(&text).unwrap_err();
        assert!(matches!(err, ConfigError::Validation(ValidationError::SubspaceTooLarge { needed: 13, n: 12 })));
        assert!(err.to_string().contains("SubspaceTooLarge"));
    }

    #[test]
    fn duplicate_key_reports_later_line() {
        let text = MINIMAL.replace("m = 500\n", "m = 500\nm = 600\n");
        match parse_config(&text).unwrap_err() {
            ConfigError::Parse { line, message } => {
                assert_eq!(line, 8);
                assert!(message.contains("duplicate"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let bad = MINIMAL.replace("m = 500", "m 500");
        assert!(matches!(parse_config(&bad), Err(ConfigError::Parse { line: 7, .. })));
        let bad = MINIMAL.replace("dist = [(1.0, 0.5), (5.0, 0.5)]", "dist = [(1.0, 0.5), (5.0, 0.4)]");
        assert!(matches!(parse_config(&bad), Err(ConfigError::Parse { line: 8, .. })));
        let bad = MINIMAL.replace("[experiment]", "[nope]");
        assert!(matches!(parse_config(&bad), Err(ConfigError::Parse { line: 10, .. })));
        let bad = format!("n = 3\n{MINIMAL}");
        assert!(matches!(parse_config(&bad), Err(ConfigError::Parse { line: 1, .. })));
    }

    #[test]
    fn sweeps_and_custom_state() {
        let text = "\
[chain]
n = 12
[protocol]
kind = pm, pc, cc
m = 500
[experiment]
initial_state = custom
amplitudes = [3, (0, 4)]
lambda_sweep = [2, 3, 4]
kappa_sweep = [(0.8, 1.0, 11.0), (0.8, 3.0, 3.0)]
";
        let c = parse_config(text).unwrap();
        assert_eq!(c.protocols.len(), 3);
        assert_eq!(c.chain.lambda, 2);
        assert_eq!(c.lambdas(), vec![2, 3, 4]);
        let dists = c.distributions().unwrap();
        assert!((dists[0].moments().kappa - 16.0 / 9.0).abs() < 1e-12);
        assert!(dists[1].is_deterministic());
        match &c.initial_state {
            InitialState::Custom(a) => {
                assert!((a[0].re - 0.6).abs() < 1e-15);
                assert!((a[1].im - 0.8).abs() < 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn kappa_sweep_must_share_mean() {
        let text = "\
[chain]
n = 12
lambda = 3
[protocol]
kind = pm
m = 10
[experiment]
kappa_sweep = [(0.8, 1.0, 11.0), (0.5, 1.0, 7.0)]
";
        assert!(matches!(parse_config(text), Err(ConfigError::Validation(ValidationError::Invalid(_)))));
    }

    #[test]
    fn missing_keys() {
        let text = MINIMAL.replace("n = 12\n", "");
        assert!(matches!(parse_config(&text), Err(ConfigError::Validation(ValidationError::Missing(_)))));
    }
}
