//! JSON experiment configuration.
//!
//! Every key is optional; commands fill in their own defaults. Unknown keys
//! are rejected, and parse errors carry the line, column and field path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use martin_core::{GroupModel, WalkSpec};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// A walk given by name or inline as a step list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WalkConfig {
    Named(String),
    Inline(InlineWalk),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineWalk {
    pub group: String,
    pub steps: Vec<InlineStep>,
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineStep {
    pub elem: String,
    pub p: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Group spec; without `walk` the simple random walk on it is used.
    pub group: Option<String>,
    pub walk: Option<WalkConfig>,
    /// Target element for `green` and `martin`.
    pub element: Option<String>,
    pub elements: Option<Vec<String>>,
    /// Boundary approximant: `end:<word>`, `seq:<a;b;..>`, `+inf`, ...
    pub boundary: Option<String>,
    /// Covered radius of the kernel table, or the scan radius.
    pub radius: Option<usize>,
    /// Extra solve radius beyond the covered one.
    pub margin: Option<usize>,
    pub max_solve_radius: Option<usize>,
    pub depth: Option<usize>,
    pub samples: Option<u64>,
    pub seed: Option<u64>,
    pub tolerance: Option<f64>,
    pub betas: Option<Vec<f64>>,
    /// Step count of the Phi curve.
    pub n: Option<usize>,
    pub grid: Option<Vec<f64>>,
    /// Number of random KMS words.
    pub words: Option<usize>,
    /// `harmonic`, `uniform:<depth>` or `dirac:<approximant>`.
    pub measure: Option<String>,
    /// Factor walks and mixing weight of the product construction.
    pub first: Option<WalkConfig>,
    pub second: Option<WalkConfig>,
    pub mix: Option<f64>,
    /// Suite path count.
    pub paths: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

pub const MAX_RADIUS: usize = 64;
pub const MAX_DEPTH: usize = 12;
pub const MIN_SAMPLES: u64 = 1000;
pub const MAX_SAMPLES: u64 = 100_000_000;
pub const MAX_WORKERS: usize = 1024;
pub const MAX_WORDS: usize = 100_000;
pub const MAX_BETA: f64 = 20.0;

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            CliError::Config {
                path: origin.to_string(),
                line: inner.line(),
                column: inner.column(),
                field,
                message: inner.to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Range checks, naming the offending field.
    pub fn validate(&self) -> CliResult<()> {
        let check = |ok: bool, field: &str, msg: &str| if ok { Ok(()) } else { Err(CliError::field(field, msg)) };
        if let Some(r) = self.radius {
            check(r <= MAX_RADIUS, "radius", &format!("must be at most {MAX_RADIUS}"))?;
        }
        if let Some(m) = self.margin {
            check(m <= MAX_RADIUS, "margin", &format!("must be at most {MAX_RADIUS}"))?;
        }
        if let Some(m) = self.max_solve_radius {
            check((1..=MAX_RADIUS).contains(&m), "max_solve_radius", &format!("must lie in 1..={MAX_RADIUS}"))?;
        }
        if let Some(d) = self.depth {
            check((1..=MAX_DEPTH).contains(&d), "depth", &format!("must lie in 1..={MAX_DEPTH}"))?;
        }
        if let Some(n) = self.samples {
            check(
                (MIN_SAMPLES..=MAX_SAMPLES).contains(&n),
                "samples",
                &format!("must lie in {MIN_SAMPLES}..={MAX_SAMPLES}"),
            )?;
        }
        if let Some(n) = self.paths {
            check(
                (MIN_SAMPLES..=MAX_SAMPLES).contains(&n),
                "paths",
                &format!("must lie in {MIN_SAMPLES}..={MAX_SAMPLES}"),
            )?;
        }
        if let Some(t) = self.tolerance {
            check(t > 0.0 && t < 1.0, "tolerance", "must lie in (0, 1)")?;
        }
        if let Some(b) = &self.betas {
            check(!b.is_empty(), "betas", "must not be empty")?;
            check(
                b.iter().all(|x| x.is_finite() && x.abs() <= MAX_BETA),
                "betas",
                &format!("entries must be finite with |beta| <= {MAX_BETA}"),
            )?;
        }
        if let Some(n) = self.n {
            check((1..=8).contains(&n), "n", "must lie in 1..=8")?;
        }
        if let Some(g) = &self.grid {
            check(!g.is_empty(), "grid", "must not be empty")?;
            check(
                g.iter().all(|x| x.is_finite() && x.abs() <= MAX_BETA),
                "grid",
                &format!("entries must be finite with |t| <= {MAX_BETA}"),
            )?;
        }
        if let Some(w) = self.words {
            check((1..=MAX_WORDS).contains(&w), "words", &format!("must lie in 1..={MAX_WORDS}"))?;
        }
        if let Some(a) = self.mix {
            check(a > 0.0 && a < 1.0, "mix", "must lie in (0, 1)")?;
        }
        if let Some(w) = self.workers {
            check((1..=MAX_WORKERS).contains(&w), "workers", &format!("must lie in 1..={MAX_WORKERS}"))?;
        }
        Ok(())
    }

    /// The configured walk, or the simple random walk on `group`, or the
    /// given default.
    pub fn walk_or(&self, default: &str) -> CliResult<WalkSpec> {
        match (&self.walk, &self.group) {
            (Some(w), _) => resolve_walk(w, "walk"),
            (None, Some(g)) => {
                let group: GroupModel =
                    g.parse().map_err(|e: martin_core::Error| CliError::field("group", e.to_string()))?;
                Ok(WalkSpec::simple(group))
            }
            (None, None) => Ok(WalkSpec::named(default)?),
        }
    }
}

pub fn resolve_walk(w: &WalkConfig, field: &str) -> CliResult<WalkSpec> {
    let spec = match w {
        WalkConfig::Named(name) => WalkSpec::named(name),
        WalkConfig::Inline(inline) => {
            let text = serde_json::to_string(inline).expect("inline walk serializes");
            WalkSpec::from_json(&text)
        }
    };
    spec.map_err(|e| CliError::field(field, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_names_field_and_line() {
        let err = ExperimentConfig::parse("{\n  \"seed\": 3,\n  \"sede\": 4\n}", "x.json").unwrap_err();
        match err {
            CliError::Config { line, ref field, ref message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("sede"), "{message}");
                assert_eq!(field, "sede");
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn wrong_type_names_field() {
        let err = ExperimentConfig::parse(r#"{"samples": "many"}"#, "x.json").unwrap_err();
        assert!(matches!(err, CliError::Config { ref field, .. } if field == "samples"), "{err}");
    }

    #[test]
    fn bounds_checked() {
        let err = ExperimentConfig::parse(r#"{"tolerance": 2.0}"#, "x.json").unwrap_err();
        assert!(matches!(err, CliError::Field { ref field, .. } if field == "tolerance"));
        assert!(ExperimentConfig::parse(r#"{"samples": 10}"#, "x.json").is_err());
    }

    #[test]
    fn walks_by_name_and_inline() {
        let cfg = ExperimentConfig::parse(
            r#"{"walk": {"group": "lattice:1", "steps": [{"elem": "(1)", "p": 0.7}, {"elem": "(-1)", "p": 0.3}]}}"#,
            "x.json",
        )
        .unwrap();
        let w = cfg.walk_or("srw-free:2").unwrap();
        assert_eq!(w.steps.len(), 2);
        let cfg = ExperimentConfig::parse(r#"{"group": "free:3"}"#, "x.json").unwrap();
        assert_eq!(cfg.walk_or("drift-z:0.7").unwrap().steps.len(), 6);
        assert_eq!(ExperimentConfig::default().walk_or("drift-z:0.7").unwrap().steps.len(), 2);
    }
}
