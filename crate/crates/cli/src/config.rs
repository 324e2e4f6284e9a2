//! Flat sectioned config files: `[section]` headers and `key = expression`
//! lines, `#` starts a comment.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;

use spinboson::scalar::{ci, cr};
use spinboson::trajectories::{build_solution_i, solution_i_from_delta, TimeFunction};
use spinboson::{HilbertSpec, Params, TimeFn};

use crate::expr::{parse_constant, parse_function};

/// Keys whose values are words rather than expressions.
const WORD_KEYS: &[(&str, &str)] = &[("evolve", "protocol"), ("evolve", "branch")];

const SCHEMA: &[(&str, &[&str])] = &[
    ("hilbert", &["cutoff", "guard_band"]),
    ("parameters", &["omega_b", "alpha", "delta", "omega_f_im", "gamma_im", "kappa", "beta"]),
    ("verify", &["t_start", "t_end", "points", "tolerance_dyson", "tolerance_hermiticity", "tolerance_spectrum"]),
    ("spectrum", &["t_start", "t_end", "points", "max_n", "reality_check"]),
    ("perturb", &["t_start", "t_end", "points", "max_n"]),
    ("pulse", &["n", "kappa0", "delta_a", "delta_b", "t1", "t2", "t2_start", "t2_end", "t2_points", "tail", "ramp_fraction", "k_max"]),
    ("quench", &["n", "kappa0", "duration", "duration_start", "duration_end", "duration_points", "ramp_fraction"]),
    ("periodic", &["n", "kappa0", "omega_drive", "omega_start", "omega_end", "omega_points", "delta0", "epsilon", "nu", "cycles"]),
    ("evolve", &["protocol", "n", "branch", "points", "t_end"]),
    ("output", &["svg"]),
];

/// The level-diagram example, shipped as `--preset fig1`.
pub const FIG1_PRESET: &str = "\
[hilbert]
cutoff = 64
guard_band = 16

[parameters]
omega_b = 1
alpha = sin(2*t)
delta = 0.2 + 0.1*cos(4*t)
kappa = 0.3*sin(0.4*t)

[spectrum]
t_start = 0
t_end = 10
points = 201
max_n = 8

[perturb]
t_start = 0
t_end = 10
points = 41
max_n = 8

[verify]
t_start = 0
t_end = 10
points = 21
";

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub origin: String,
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.origin)?;
        if let Some(l) = self.line {
            write!(f, ":{l}")?;
        }
        if let Some(k) = &self.key {
            write!(f, ": key `{k}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    /// `None` for command-line overrides.
    line: Option<usize>,
}

#[derive(Debug)]
pub struct Config {
    origin: String,
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
    resolved: RefCell<BTreeMap<String, BTreeMap<String, String>>>,
}

fn allowed(section: &str) -> Option<&'static [&'static str]> {
    SCHEMA.iter().find(|(s, _)| *s == section).map(|(_, k)| *k)
}

fn is_word(section: &str, key: &str) -> bool {
    WORD_KEYS.iter().any(|(s, k)| *s == section && *k == key)
}

impl Config {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let err = |line: usize, key: Option<&str>, message: String| ConfigError {
            origin: origin.to_string(),
            line: Some(line),
            key: key.map(str::to_string),
            message,
        };
        let mut sections: BTreeMap<String, BTreeMap<String, Entry>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(line, None, format!("unterminated section header `{body}`")))?
                    .trim();
                if allowed(name).is_none() {
                    let known: Vec<&str> = SCHEMA.iter().map(|(s, _)| *s).collect();
                    return Err(err(line, None, format!("unknown section [{name}] (known: {})", known.join(", "))));
                }
                if sections.contains_key(name) {
                    return Err(err(line, None, format!("section [{name}] appears twice")));
                }
                sections.insert(name.to_string(), BTreeMap::new());
                current = Some(name.to_string());
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(err(line, None, format!("expected `key = value`, found `{body}`")));
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(section) = &current else {
                return Err(err(line, Some(key), "key outside any section".into()));
            };
            let keys = allowed(section).expect("checked at the header");
            if !keys.contains(&key) {
                return Err(err(line, Some(key), format!("unknown key in [{section}] (allowed: {})", keys.join(", "))));
            }
            if value.is_empty() {
                return Err(err(line, Some(key), "empty value".into()));
            }
            if !is_word(section, key) {
                parse_function(value).map_err(|e| err(line, Some(key), e.to_string()))?;
            }
            let map = sections.get_mut(section).expect("inserted at the header");
            if map.insert(key.to_string(), Entry { value: value.to_string(), line: Some(line) }).is_some() {
                return Err(err(line, Some(key), "duplicate key".into()));
            }
        }
        if !sections.contains_key("hilbert") {
            return Err(ConfigError {
                origin: origin.to_string(),
                line: None,
                key: None,
                message: "missing [hilbert] block".into(),
            });
        }
        Ok(Self { origin: origin.to_string(), sections, resolved: RefCell::new(BTreeMap::new()) })
    }

    /// Command-line override of one key.
    pub fn set(&mut self, section: &str, key: &str, value: &str) {
        self.sections.entry(section.to_string()).or_default().insert(key.to_string(), Entry { value: value.to_string(), line: None });
    }

    pub fn has(&self, section: &str, key: &str) -> bool {
        self.sections.get(section).is_some_and(|m| m.contains_key(key))
    }

    fn error(&self, section: &str, key: &str, message: String) -> ConfigError {
        let line = self.sections.get(section).and_then(|m| m.get(key)).and_then(|e| e.line);
        ConfigError { origin: self.origin.clone(), line, key: Some(format!("{section}.{key}")), message }
    }

    fn record(&self, section: &str, key: &str, value: &str) {
        self.resolved.borrow_mut().entry(section.to_string()).or_default().insert(key.to_string(), value.to_string());
    }

    fn raw(&self, section: &str, key: &str, default: Option<&str>) -> Result<String, ConfigError> {
        let value = match self.sections.get(section).and_then(|m| m.get(key)) {
            Some(e) => e.value.clone(),
            None => match default {
                Some(d) => d.to_string(),
                None => return Err(self.error(section, key, format!("required in [{section}]"))),
            },
        };
        self.record(section, key, &value);
        Ok(value)
    }

    pub fn number(&self, section: &str, key: &str, default: Option<f64>) -> Result<f64, ConfigError> {
        let d = default.map(|v| format!("{v}"));
        let raw = self.raw(section, key, d.as_deref())?;
        parse_constant(&raw).map_err(|e| self.error(section, key, e.to_string()))
    }

    pub fn optional_number(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        if self.has(section, key) {
            self.number(section, key, None).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn count(&self, section: &str, key: &str, default: Option<usize>) -> Result<usize, ConfigError> {
        let v = self.number(section, key, default.map(|d| d as f64))?;
        if v < 0.0 || v.fract() != 0.0 || v > 1e9 {
            return Err(self.error(section, key, format!("expected a non-negative integer, got {v}")));
        }
        Ok(v as usize)
    }

    pub fn function(&self, section: &str, key: &str, default: Option<&str>) -> Result<TimeFn, ConfigError> {
        let raw = self.raw(section, key, default)?;
        parse_function(&raw).map_err(|e| self.error(section, key, e.to_string()))
    }

    pub fn word(&self, section: &str, key: &str, default: &str, choices: &[&str]) -> Result<String, ConfigError> {
        let raw = self.raw(section, key, Some(default))?;
        if choices.contains(&raw.as_str()) {
            Ok(raw)
        } else {
            Err(self.error(section, key, format!("expected one of {}, got `{raw}`", choices.join(", "))))
        }
    }

    /// Every value read so far, defaults included, as config text.
    pub fn resolved_text(&self) -> String {
        let mut out = String::new();
        for (section, keys) in self.resolved.borrow().iter() {
            out.push_str(&format!("[{section}]\n"));
            for (k, v) in keys {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }

    pub fn hilbert(&self) -> Result<HilbertSpec, ConfigError> {
        let cutoff = self.count("hilbert", "cutoff", Some(spinboson::operators::DEFAULT_CUTOFF))?;
        let guard = self.count("hilbert", "guard_band", Some((cutoff / 4).max(1)))?;
        HilbertSpec::new(cutoff, guard).map_err(|e| self.error("hilbert", "cutoff", e.to_string()))
    }

    /// Solution I from `δ` (or from `ω_f = i·omega_f_im`), optionally with
    /// β overridden, which leaves solution I on purpose.
    pub fn parameters(&self) -> Result<Params, ConfigError> {
        let s = "parameters";
        let omega_b = self.function(s, "omega_b", Some("1"))?;
        let alpha = self.function(s, "alpha", Some("0"))?;
        let kappa = self.function(s, "kappa", Some("0"))?;
        let gamma0 = ci::<f64>() * cr(self.number(s, "gamma_im", Some(0.0))?);
        let built = if self.has(s, "omega_f_im") {
            if self.has(s, "delta") {
                return Err(self.error(s, "omega_f_im", "give either delta or omega_f_im, not both".into()));
            }
            let omega_f = self.function(s, "omega_f_im", None)?.scaled(ci());
            build_solution_i(omega_f, omega_b, alpha, gamma0, kappa)
        } else {
            let delta = self.function(s, "delta", Some("0"))?;
            solution_i_from_delta(delta, omega_b, alpha, gamma0, kappa)
        };
        let mut params = built.map_err(|e| self.error(s, "delta", e.to_string()))?;
        if self.has(s, "beta") {
            params = params.with_beta(self.function(s, "beta", None)?);
        }
        Ok(params)
    }

    /// Static background for the protocol commands: `ω_b`, `α` and `δ`
    /// must be constant (`κ`, and for pulses `δ`, come from the protocol).
    pub fn static_background(&self) -> Result<Params, ConfigError> {
        let s = "parameters";
        let constant = |key: &str, default: &str| -> Result<TimeFn, ConfigError> {
            let f = self.function(s, key, Some(default))?;
            if f.is_constant() {
                Ok(f)
            } else {
                Err(self.error(s, key, "protocol commands need a constant background".into()))
            }
        };
        let omega_b = constant("omega_b", "1")?;
        let alpha = constant("alpha", "0")?;
        let delta = constant("delta", "0")?;
        let gamma0 = ci::<f64>() * cr(self.number(s, "gamma_im", Some(0.0))?);
        solution_i_from_delta(delta, omega_b, alpha, gamma0, TimeFunction::zero()).map_err(|e| self.error(s, "omega_b", e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_parses_and_builds_the_figure_parameters() {
        let cfg = Config::parse(FIG1_PRESET, "fig1").unwrap();
        let spec = cfg.hilbert().unwrap();
        assert_eq!((spec.fock_cutoff(), spec.guard_band()), (64, 16));
        let p = cfg.parameters().unwrap();
        let reference = spinboson::trajectories::fig1_parameters::<f64>();
        for t in [0.0, 0.7, 3.1] {
            assert!((p.alpha.eval(t) - reference.alpha.eval(t)).norm() < 1e-15);
            assert!((p.beta.eval(t) - reference.beta.eval(t)).norm() < 1e-15);
            assert!((p.kappa.deriv(t) - reference.kappa.deriv(t)).norm() < 1e-15);
            assert!((p.omega_f.eval(t) - reference.omega_f.eval(t)).norm() < 1e-15);
        }
    }

    #[test]
    fn diagnostics_name_line_and_key() {
        let e = Config::parse("", "x.cfg").unwrap_err();
        assert!(e.to_string().contains("missing [hilbert] block"));
        let e = Config::parse("[hilbert]\ncutoff = 64\nfoo = 1\n", "x.cfg").unwrap_err();
        assert_eq!(e.line, Some(3));
        assert_eq!(e.key.as_deref(), Some("foo"));
        let e = Config::parse("[hilbert]\n[parameters]\nalpha = sin(t*t)\n", "x.cfg").unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.to_string().contains("column"));
        let e = Config::parse("cutoff = 1\n", "x.cfg").unwrap_err();
        assert!(e.message.contains("outside"));
        let e = Config::parse("[hilbert]\n[hilbert]\n", "x.cfg").unwrap_err();
        assert!(e.message.contains("twice"));
        let e = Config::parse("[nonsense]\n", "x.cfg").unwrap_err();
        assert!(e.message.contains("unknown section"));
        let e = Config::parse("[hilbert]\ncutoff 64\n", "x.cfg").unwrap_err();
        assert!(e.message.contains("key = value"));
    }

    #[test]
    fn values_are_checked_on_use() {
        let cfg = Config::parse("[hilbert]\ncutoff = 8.5\n[evolve]\nprotocol = sideways\n", "x.cfg").unwrap();
        assert!(cfg.hilbert().unwrap_err().to_string().contains("x.cfg:2: key `hilbert.cutoff`"));
        assert!(cfg.word("evolve", "protocol", "pulse", &["pulse", "none"]).is_err());
        let cfg = Config::parse("[hilbert]\ncutoff = 4\n", "x.cfg").unwrap();
        assert!(cfg.hilbert().is_err());
    }

    #[test]
    fn beta_override_leaves_solution_one() {
        let cfg = Config::parse("[hilbert]\n[parameters]\nalpha = 0.5\ndelta = 0.1\nbeta = 0.5\n", "x.cfg").unwrap();
        let p = cfg.parameters().unwrap();
        let report = spinboson::trajectories::check_hermiticity_conditions(&p, 0.3, 1e-10);
        assert_eq!(report.failing(), vec!["beta"]);
    }

    #[test]
    fn resolved_text_includes_defaults_and_overrides() {
        let mut cfg = Config::parse("[hilbert]\ncutoff = 32\n", "x.cfg").unwrap();
        cfg.set("hilbert", "cutoff", "48");
        let spec = cfg.hilbert().unwrap();
        assert_eq!(spec.fock_cutoff(), 48);
        let text = cfg.resolved_text();
        assert!(text.contains("cutoff = 48"));
        assert!(text.contains("guard_band = 12"));
    }

    #[test]
    fn omega_f_path_integrates_to_delta() {
        let cfg = Config::parse("[hilbert]\n[parameters]\nomega_f_im = 0.4*cos(2*t)\nalpha = 1\n", "x.cfg").unwrap();
        let p = cfg.parameters().unwrap();
        // δ = i∫ω_f = i·i·0.2 sin 2t
        assert!((p.delta.eval(0.6).re + 0.2 * (1.2f64).sin()).abs() < 1e-12);
    }
}
