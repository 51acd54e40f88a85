//! Run configuration: `key=value` parsing, validation and threshold grids.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::ValueEnum;
use serde::Serialize;
use thiserror::Error;

use kmsprod::fading::ShadowedParams;
use kmsprod::specfun::TruncationPolicy;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("missing required keys: {}", .0.join(", "))]
    Missing(Vec<String>),
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("expected key=value, got '{0}'")]
    Syntax(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Pdf,
    Cdf,
    Mgf,
    Moments,
    Af,
    Cqei,
    OpCascade,
    OpRelay,
    Sample,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Pdf => "pdf",
            Command::Cdf => "cdf",
            Command::Mgf => "mgf",
            Command::Moments => "moments",
            Command::Af => "af",
            Command::Cqei => "cqei",
            Command::OpCascade => "op-cascade",
            Command::OpRelay => "op-relay",
            Command::Sample => "sample",
            Command::Validate => "validate",
        }
    }

    /// Number of links the command reads.
    pub fn links(self) -> usize {
        match self {
            Command::Validate => 0,
            Command::OpRelay => 3,
            _ => 2,
        }
    }

    fn default_grid(self) -> Option<GridSpec> {
        let g = |min, max, points, scale| Some(GridSpec { min, max, points, scale });
        match self {
            Command::Pdf | Command::Cdf => g(0.01, 5.0, 100, GridScale::Log),
            Command::Mgf => g(-5.0, -0.01, 100, GridScale::Linear),
            Command::OpCascade | Command::OpRelay => g(-10.0, 10.0, 21, GridScale::Db),
            _ => None,
        }
    }

    fn is_threshold_sweep(self) -> bool {
        matches!(self, Command::OpCascade | Command::OpRelay)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GridScale {
    Linear,
    Log,
    #[serde(rename = "dB")]
    Db,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub scale: GridScale,
}

impl GridSpec {
    /// `min:max:points[:linear|log|dB]`
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let bad = |message: String| ConfigError::Invalid {
            key: "grid".into(),
            message,
        };
        let parts: Vec<&str> = text.split(':').collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(bad(format!("expected min:max:points[:linear|log|dB], got '{text}'")));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(format!("'{s}' is not a number")));
        let min = num(parts[0])?;
        let max = num(parts[1])?;
        let points = parts[2]
            .trim()
            .parse::<usize>()
            .map_err(|_| bad(format!("'{}' is not a point count", parts[2])))?;
        let scale = match parts.get(3).map(|s| s.trim()) {
            None | Some("linear") | Some("lin") => GridScale::Linear,
            Some("log") => GridScale::Log,
            Some("dB") | Some("db") => GridScale::Db,
            Some(other) => return Err(bad(format!("unknown scale '{other}'"))),
        };
        let g = GridSpec { min, max, points, scale };
        g.check()?;
        Ok(g)
    }

    fn check(&self) -> Result<(), ConfigError> {
        let bad = |message: &str| ConfigError::Invalid {
            key: "grid".into(),
            message: message.into(),
        };
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(bad("grid bounds must be finite"));
        }
        if !(self.min < self.max) {
            return Err(bad("grid must satisfy min < max"));
        }
        if self.points < 2 {
            return Err(bad("grid must satisfy points >= 2"));
        }
        if self.scale == GridScale::Log && !(self.min > 0.0) {
            return Err(bad("log grid must satisfy min > 0"));
        }
        Ok(())
    }

    /// Abscissae as written (dB values stay in dB).
    pub fn abscissae(&self) -> Vec<f64> {
        let n = self.points - 1;
        (0..=n)
            .map(|i| {
                let t = i as f64 / n as f64;
                match self.scale {
                    _ if i == n => self.max,
                    GridScale::Log => self.min * (self.max / self.min).powf(t),
                    _ => self.min + (self.max - self.min) * t,
                }
            })
            .collect()
    }

    /// The library argument for an abscissa: dB values become `10^(dB/10)`.
    pub fn linear(&self, x: f64) -> f64 {
        match self.scale {
            GridScale::Db => db_to_linear(x),
            _ => x,
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: Command,
    /// Links 1 and 2 form the cascade; link 3 is the relay's source hop.
    pub links: Vec<ShadowedParams>,
    pub grid: Option<GridSpec>,
    pub policy: TruncationPolicy,
    pub seed: u64,
    pub mc_samples: usize,
    /// Moment orders for `moments`.
    pub orders: Vec<u32>,
    pub full: bool,
    pub out: Option<PathBuf>,
}

const LINK_FIELDS: [(&str, &[&str]); 4] = [
    ("kappa", &["kappa", "k"]),
    ("mu", &["mu"]),
    ("m", &["m"]),
    ("gbar", &["gbar", "gamma_bar"]),
];

const OTHER_KEYS: [&str; 8] = ["grid", "rel_tol", "max_terms", "seed", "mc_samples", "n", "full", "out"];

/// Maps aliases (`k1`, `gamma_bar1`, `rel-tol`) onto canonical keys.
fn canonical(key: &str) -> Result<String, ConfigError> {
    let key = key.trim().replace('-', "_");
    if OTHER_KEYS.contains(&key.as_str()) {
        return Ok(key);
    }
    let Some(digit) = key.chars().last().filter(|c| ('1'..='3').contains(c)) else {
        return Err(ConfigError::UnknownKey(key));
    };
    let stem = &key[..key.len() - 1];
    for (name, aliases) in LINK_FIELDS {
        if aliases.contains(&stem) {
            return Ok(format!("{name}{digit}"));
        }
    }
    Err(ConfigError::UnknownKey(key))
}

/// Splits whitespace- or newline-separated `key=value` pairs; `#` starts a
/// comment.
pub fn parse_assignments(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        for item in line.split_whitespace() {
            let (k, v) = item.split_once('=').ok_or_else(|| ConfigError::Syntax(item.into()))?;
            out.insert(canonical(k)?, v.trim().to_string());
        }
    }
    Ok(out)
}

/// Parses a `key=value` list into a validated configuration.
pub fn parse_params(command: Command, text: &str) -> Result<RunConfig, ConfigError> {
    RunConfig::from_map(command, &parse_assignments(text)?)
}

fn number(map: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>, ConfigError> {
    map.get(key)
        .map(|v| {
            v.parse::<f64>().map_err(|_| ConfigError::Invalid {
                key: key.into(),
                message: format!("'{v}' is not a number"),
            })
        })
        .transpose()
}

fn integer<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, ConfigError> {
    map.get(key)
        .map(|v| {
            v.parse::<T>().map_err(|_| ConfigError::Invalid {
                key: key.into(),
                message: format!("'{v}' is not a nonnegative integer"),
            })
        })
        .transpose()
}

impl RunConfig {
    pub fn from_map(command: Command, map: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let mut missing = Vec::new();
        let mut links = Vec::new();
        for i in 1..=command.links() {
            let mut get = |field: &str| -> Result<Option<f64>, ConfigError> {
                let key = format!("{field}{i}");
                let v = number(map, &key)?;
                if v.is_none() && field != "gbar" {
                    missing.push(key);
                }
                Ok(v)
            };
            let (kappa, mu, m, gbar) = (get("kappa")?, get("mu")?, get("m")?, get("gbar")?);
            if let (Some(kappa), Some(mu), Some(m)) = (kappa, mu, m) {
                let p = ShadowedParams {
                    kappa,
                    mu,
                    m,
                    gamma_bar: gbar.unwrap_or(1.0),
                };
                check_link(&p, i)?;
                links.push(p);
            }
        }
        if !missing.is_empty() {
            return Err(ConfigError::Missing(missing));
        }

        let grid = match map.get("grid") {
            Some(text) => {
                let g = GridSpec::parse(text)?;
                if g.scale == GridScale::Db && !command.is_threshold_sweep() {
                    return Err(ConfigError::Invalid {
                        key: "grid".into(),
                        message: "dB grids are permitted only for threshold sweeps (op-cascade, op-relay)".into(),
                    });
                }
                Some(g)
            }
            None => command.default_grid(),
        };
        if let Some(g) = &grid {
            let bad = |message: &str| ConfigError::Invalid {
                key: "grid".into(),
                message: message.into(),
            };
            match command {
                Command::Mgf if g.max >= 0.0 => return Err(bad("mgf grid must satisfy max < 0")),
                Command::Pdf | Command::Cdf | Command::OpCascade | Command::OpRelay
                    if g.scale != GridScale::Db && g.min <= 0.0 =>
                {
                    return Err(bad("grid must satisfy min > 0"))
                }
                _ => {}
            }
        }

        let defaults = TruncationPolicy::default();
        let rel_tol = number(map, "rel_tol")?.unwrap_or(defaults.rel_tol);
        let max_terms = integer::<usize>(map, "max_terms")?.unwrap_or(defaults.max_terms);
        let policy = TruncationPolicy::new(rel_tol, defaults.abs_tol, max_terms, defaults.consecutive_small).map_err(|e| {
            ConfigError::Invalid {
                key: if rel_tol != defaults.rel_tol { "rel_tol" } else { "max_terms" }.into(),
                message: e.to_string(),
            }
        })?;

        let orders = match map.get("n") {
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim().parse::<u32>().map_err(|_| ConfigError::Invalid {
                        key: "n".into(),
                        message: format!("'{s}' is not a nonnegative integer"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?,
            None => vec![1, 2, 3, 4],
        };
        let full = match map.get("full").map(String::as_str) {
            None | Some("false") | Some("0") => false,
            Some("true") | Some("1") => true,
            Some(v) => {
                return Err(ConfigError::Invalid {
                    key: "full".into(),
                    message: format!("'{v}' is not a boolean"),
                })
            }
        };
        let mc_default = if command == Command::Sample { 10_000 } else { 0 };
        let mc_samples = integer::<usize>(map, "mc_samples")?.unwrap_or(mc_default);
        if command == Command::Sample && mc_samples == 0 {
            return Err(ConfigError::Invalid {
                key: "mc_samples".into(),
                message: "sample needs mc_samples >= 1".into(),
            });
        }
        Ok(RunConfig {
            command,
            links,
            grid,
            policy,
            seed: integer::<u64>(map, "seed")?.unwrap_or(42),
            mc_samples,
            orders,
            full,
            out: map.get("out").map(PathBuf::from),
        })
    }
}

fn check_link(p: &ShadowedParams, i: usize) -> Result<(), ConfigError> {
    let bad = |field: &str, rule: &str, v: f64| ConfigError::Invalid {
        key: format!("{field}{i}"),
        message: format!("{rule} (got {v})"),
    };
    if !(p.kappa >= 0.0 && p.kappa.is_finite()) {
        return Err(bad("kappa", "kappa must satisfy kappa >= 0", p.kappa));
    }
    if !(p.mu > 0.0 && p.mu.is_finite()) {
        return Err(bad("mu", "mu must satisfy mu > 0", p.mu));
    }
    if !(p.m > 0.0 && p.m.is_finite()) {
        return Err(bad("m", "m must satisfy m > 0", p.m));
    }
    if !(p.gamma_bar > 0.0 && p.gamma_bar.is_finite()) {
        return Err(bad("gbar", "gbar must satisfy gbar > 0", p.gamma_bar));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_mu_naming_the_key() {
        let e = parse_params(Command::Pdf, "kappa1=5 mu1=0 m1=0.5 kappa2=2.1 mu2=3 m2=0.8").unwrap_err();
        assert_eq!(e.to_string(), "mu1: mu must satisfy mu > 0 (got 0)");
    }

    #[test]
    fn lists_missing_keys() {
        let e = parse_params(Command::Pdf, "kappa1=5.0 mu1=1.2 m1=0.5").unwrap_err();
        assert_eq!(e, ConfigError::Missing(vec!["kappa2".into(), "mu2".into(), "m2".into()]));
    }

    #[test]
    fn accepts_figure_parameters_and_aliases() {
        let c = parse_params(Command::Pdf, "kappa1=5.0 mu1=1.2 m1=0.5\nk2=2.1 mu2=3 m2=0.8 # second hop").unwrap();
        assert_eq!(c.links.len(), 2);
        assert_eq!(c.links[0].kappa, 5.0);
        assert_eq!(c.links[1].gamma_bar, 1.0);
    }

    #[test]
    fn db_grid_only_for_thresholds() {
        let base = "k1=1 mu1=1 m1=1 k2=1 mu2=1 m2=1 grid=-10:10:5:dB";
        assert!(parse_params(Command::Pdf, base).is_err());
        let c = parse_params(Command::OpCascade, base).unwrap();
        let g = c.grid.unwrap();
        assert_eq!(g.linear(0.0), 1.0);
        assert_eq!(g.abscissae(), vec![-10.0, -5.0, 0.0, 5.0, 10.0]);
    }

    #[test]
    fn grid_invariants() {
        assert!(GridSpec::parse("1:1:5").is_err());
        assert!(GridSpec::parse("0:1:1").is_err());
        assert!(GridSpec::parse("0:1:5:log").is_err());
        assert!(GridSpec::parse("1:2:3:weird").is_err());
    }
}
