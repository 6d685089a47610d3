//! Experiment configuration: a TOML file with the sections `[problem]`,
//! `[mesh]`, `[solver]`, `[family]` and `[hypothesis]`.
//!
//! Values are validated on demand by the accessors, so each subcommand only
//! insists on what it uses. Errors point at the offending line.

use crate::error::{CliError, Result};
use fdemulti::analysis::Convention;
use fdemulti::hypothesis::{EnvelopeOverrides, SearchRanges};
use fdemulti::nonlinearity::{NonlinearityConfig, NonlinearitySpec};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    #[serde(default)]
    problem: Problem,
    #[serde(default)]
    mesh: MeshSection,
    #[serde(default)]
    solver: Solver,
    #[serde(default)]
    family: Family,
    #[serde(default)]
    hypothesis: Hypothesis,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Problem {
    alpha: Option<f64>,
    beta: Option<f64>,
    t: Option<f64>,
    convention: Option<String>,
    g: Option<NonlinearityConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshSection {
    n: Option<usize>,
    grading: Option<f64>,
    ladder: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Solver {
    tol: Option<f64>,
    max_iter: Option<usize>,
    init: Option<String>,
    init_csv: Option<String>,
    init_y1: Option<f64>,
    init_eps1: Option<f64>,
    check_nodes: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Family {
    t: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Hypothesis {
    c1: Option<f64>,
    c2: Option<f64>,
    delta1: Option<f64>,
    delta2: Option<f64>,
    c_lip: Option<f64>,
    y1: Option<f64>,
    y2: Option<f64>,
    t: Option<f64>,
    y1_range: Option<[f64; 2]>,
    y2_range: Option<[f64; 2]>,
    t_range: Option<[f64; 2]>,
    grid_per_axis: Option<usize>,
    refine_steps: Option<usize>,
}

/// How the first Picard iterate is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum InitChoice {
    LowerEnvelope {
        y1: f64,
        eps1: f64,
    },
    Zero,
    /// CSV `t,value`, interpolated onto the solver mesh.
    Custom(PathBuf),
}

pub const DEFAULT_MESH_N: usize = 512;
pub const DEFAULT_GRADING: f64 = 2.0;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_CHECK_NODES: usize = 200;

#[derive(Debug)]
pub struct Config {
    pub path: PathBuf,
    /// The file exactly as read; embedded in run manifests.
    pub text: String,
    raw: Raw,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            line: None,
            msg: format!("cannot read config: {e}"),
        })?;
        Self::parse(path, text)
    }

    pub fn parse(path: &Path, text: String) -> Result<Self> {
        let raw: Raw = toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            line: e.span().map(|s| line_of_offset(&text, s.start)),
            msg: e.message().to_string(),
        })?;
        Ok(Self {
            path: path.to_path_buf(),
            text,
            raw,
        })
    }

    fn base_dir(&self) -> &Path {
        self.path.parent().unwrap_or_else(|| Path::new("."))
    }

    /// Configuration error anchored at `section.key` (or the section header).
    pub fn error(&self, section: &str, key: Option<&str>, msg: impl Into<String>) -> CliError {
        CliError::Config {
            path: self.path.clone(),
            line: locate(&self.text, section, key),
            msg: msg.into(),
        }
    }

    /// Wraps a library error as a configuration error at `section.key`.
    pub fn anchor(&self, section: &str, key: Option<&str>, e: fdemulti::Error) -> CliError {
        match e {
            fdemulti::Error::Config(msg) | fdemulti::Error::Domain(msg) => {
                self.error(section, key, msg)
            }
            other => CliError::Core(other),
        }
    }

    fn missing(&self, section: &str, key: &str) -> CliError {
        self.error(section, None, format!("missing `{key}` in [{section}]"))
    }

    pub fn beta(&self) -> Result<f64> {
        let p = &self.raw.problem;
        let beta = match (p.alpha, p.beta) {
            (Some(_), Some(_)) => {
                return Err(self.error(
                    "problem",
                    Some("beta"),
                    "give either `alpha` or `beta`, not both",
                ))
            }
            (Some(a), None) => {
                if !(a > 0.0 && a <= 1.0) {
                    return Err(self.error(
                        "problem",
                        Some("alpha"),
                        format!("alpha must lie in (0, 1], got {a}"),
                    ));
                }
                1.0 - a
            }
            (None, Some(b)) => b,
            (None, None) => return Err(self.missing("problem", "beta")),
        };
        if !(0.0..1.0).contains(&beta) {
            return Err(self.error(
                "problem",
                Some("beta"),
                format!("beta must lie in [0, 1), got {beta}"),
            ));
        }
        Ok(beta)
    }

    pub fn g(&self) -> Result<NonlinearitySpec> {
        let g = self
            .raw
            .problem
            .g
            .as_ref()
            .ok_or_else(|| self.missing("problem", "g"))?;
        g.into_spec(self.base_dir()).map_err(|e| match e {
            fdemulti::Error::Parse { line, msg } => self.error(
                "problem.g",
                Some("table"),
                format!("table line {line}: {msg}"),
            ),
            other => self.anchor("problem.g", Some("kind"), other),
        })
    }

    pub fn t(&self) -> Result<f64> {
        let t = self
            .raw
            .problem
            .t
            .ok_or_else(|| self.missing("problem", "t"))?;
        if !(t > 0.0 && t < 1.0) {
            return Err(self.error(
                "problem",
                Some("t"),
                format!("t must lie in (0, 1), got {t}"),
            ));
        }
        Ok(t)
    }

    pub fn convention(&self) -> Result<Convention> {
        Convention::parse(self.raw.problem.convention.as_deref())
            .map_err(|e| self.anchor("problem", Some("convention"), e))
    }

    pub fn mesh_n(&self) -> Result<usize> {
        let n = self.raw.mesh.n.unwrap_or(DEFAULT_MESH_N);
        if n < 2 {
            return Err(self.error(
                "mesh",
                Some("n"),
                format!("mesh needs at least 2 cells, got {n}"),
            ));
        }
        Ok(n)
    }

    pub fn grading(&self) -> Result<f64> {
        let r = self.raw.mesh.grading.unwrap_or(DEFAULT_GRADING);
        if !(r >= 1.0) || !r.is_finite() {
            return Err(self.error(
                "mesh",
                Some("grading"),
                format!("grading must be >= 1, got {r}"),
            ));
        }
        Ok(r)
    }

    /// Mesh sizes for the oracle study; `n, 2n, 4n` unless given.
    pub fn ladder(&self) -> Result<Vec<usize>> {
        let ladder = match &self.raw.mesh.ladder {
            Some(l) => l.clone(),
            None => {
                let n = self.mesh_n()?;
                vec![n, 2 * n, 4 * n]
            }
        };
        if ladder.is_empty()
            || ladder.iter().any(|&n| n < 2)
            || ladder.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(self.error(
                "mesh",
                Some("ladder"),
                "ladder must be strictly increasing sizes >= 2",
            ));
        }
        Ok(ladder)
    }

    pub fn tol(&self) -> Result<f64> {
        let tol = self.raw.solver.tol.unwrap_or(DEFAULT_TOL);
        if !(tol > 0.0) || !tol.is_finite() {
            return Err(self.error(
                "solver",
                Some("tol"),
                format!("tol must be positive, got {tol}"),
            ));
        }
        Ok(tol)
    }

    pub fn max_iter(&self) -> usize {
        self.raw.solver.max_iter.unwrap_or(DEFAULT_MAX_ITER)
    }

    pub fn check_nodes(&self) -> Result<usize> {
        let n = self.raw.solver.check_nodes.unwrap_or(DEFAULT_CHECK_NODES);
        if n == 0 {
            return Err(self.error(
                "solver",
                Some("check_nodes"),
                "check_nodes must be positive",
            ));
        }
        Ok(n)
    }

    pub fn init(&self) -> Result<InitChoice> {
        let s = &self.raw.solver;
        let choice = s.init.as_deref().unwrap_or("lower-envelope");
        let stray = |key: &str| {
            self.error(
                "solver",
                Some(key),
                format!("`{key}` does not apply to init = \"{choice}\""),
            )
        };
        match choice {
            "lower-envelope" => {
                if s.init_csv.is_some() {
                    return Err(stray("init_csv"));
                }
                let y1 = s.init_y1.unwrap_or(1.0);
                let eps1 = s.init_eps1.unwrap_or(0.5);
                if !(y1 > 0.0 && y1.is_finite()) {
                    return Err(self.error(
                        "solver",
                        Some("init_y1"),
                        format!("init_y1 must be positive, got {y1}"),
                    ));
                }
                if !(eps1 > -1.0 && eps1.is_finite()) {
                    return Err(self.error(
                        "solver",
                        Some("init_eps1"),
                        format!("init_eps1 must exceed -1, got {eps1}"),
                    ));
                }
                Ok(InitChoice::LowerEnvelope { y1, eps1 })
            }
            "zero" | "custom" => {
                if s.init_y1.is_some() {
                    return Err(stray("init_y1"));
                }
                if s.init_eps1.is_some() {
                    return Err(stray("init_eps1"));
                }
                if choice == "zero" {
                    if s.init_csv.is_some() {
                        return Err(stray("init_csv"));
                    }
                    return Ok(InitChoice::Zero);
                }
                let path = s.init_csv.as_ref().ok_or_else(|| {
                    self.error("solver", Some("init"), "init = \"custom\" needs `init_csv`")
                })?;
                Ok(InitChoice::Custom(self.base_dir().join(path)))
            }
            other => Err(self.error(
                "solver",
                Some("init"),
                format!("unknown init {other:?} (expected lower-envelope, zero or custom)"),
            )),
        }
    }

    pub fn family_t(&self) -> Result<Vec<f64>> {
        let ts = self
            .raw
            .family
            .t
            .clone()
            .ok_or_else(|| self.missing("family", "t"))?;
        if ts.is_empty() {
            return Err(self.error("family", Some("t"), "family needs at least one T"));
        }
        if let Some(&t) = ts.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
            return Err(self.error(
                "family",
                Some("t"),
                format!("family T values must lie in (0, 1), got {t}"),
            ));
        }
        if let Some(w) = ts.windows(2).find(|w| !(w[0] < w[1])) {
            let what = if w[0] == w[1] {
                "duplicate T value"
            } else {
                "T values out of order"
            };
            return Err(self.error(
                "family",
                Some("t"),
                format!("{what}: {} then {}", w[0], w[1]),
            ));
        }
        Ok(ts)
    }

    pub fn envelope_overrides(&self) -> EnvelopeOverrides {
        let h = &self.raw.hypothesis;
        EnvelopeOverrides {
            c1: h.c1,
            c2: h.c2,
            delta1: h.delta1,
            delta2: h.delta2,
            c_lip: h.c_lip,
        }
    }

    /// `(Y₁, Y₂, T)` when the config pins a certificate, `None` to search.
    pub fn certificate_point(&self) -> Result<Option<(f64, f64, f64)>> {
        let h = &self.raw.hypothesis;
        match (h.y1, h.y2, h.t) {
            (Some(a), Some(b), Some(c)) => Ok(Some((a, b, c))),
            (None, None, None) => Ok(None),
            _ => Err(self.error(
                "hypothesis",
                None,
                "give all of `y1`, `y2`, `t` or none of them",
            )),
        }
    }

    pub fn search_ranges(&self) -> Result<SearchRanges> {
        let h = &self.raw.hypothesis;
        let d = SearchRanges::default();
        let ranges = SearchRanges {
            y1: h.y1_range.map(|[a, b]| (a, b)).unwrap_or(d.y1),
            y2: h.y2_range.map(|[a, b]| (a, b)).unwrap_or(d.y2),
            t: h.t_range.map(|[a, b]| (a, b)).unwrap_or(d.t),
            grid_per_axis: h.grid_per_axis.unwrap_or(d.grid_per_axis),
            refine_steps: h.refine_steps.unwrap_or(d.refine_steps),
        };
        ranges.validate().map_err(|e| {
            let key = match &e {
                fdemulti::Error::Config(m) if m.contains("y1") => "y1_range",
                fdemulti::Error::Config(m) if m.contains("y2") => "y2_range",
                fdemulti::Error::Config(m) if m.contains(" t") => "t_range",
                _ => "grid_per_axis",
            };
            self.anchor("hypothesis", Some(key), e)
        })?;
        Ok(ranges)
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// 1-based line of `key` inside `[section]`, or of the section header when
/// `key` is `None` or absent. Falls back to the header, then to `None`.
pub fn locate(text: &str, section: &str, key: Option<&str>) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if let Some(name) = l.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section && header.is_none() {
                header = Some(i + 1);
            }
            continue;
        }
        if current != section {
            continue;
        }
        if let Some(k) = key {
            if let Some(rest) = l.strip_prefix(k) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> Result<Config> {
        Config::parse(Path::new("exp.toml"), text.to_string())
    }

    #[test]
    fn locate_finds_keys_in_sections() {
        let text = "[problem]\nbeta = 0.5\n\n[mesh]\nn = 4\n[problem.g]\nkind = \"x\"\n";
        assert_eq!(locate(text, "problem", Some("beta")), Some(2));
        assert_eq!(locate(text, "mesh", Some("n")), Some(5));
        assert_eq!(locate(text, "mesh", Some("grading")), Some(4));
        assert_eq!(locate(text, "problem.g", Some("kind")), Some(7));
        assert_eq!(locate(text, "family", None), None);
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let err = cfg("[problem]\nbeta = 0.5\nbeta2 = \n").unwrap_err();
        assert!(
            matches!(err, CliError::Config { line: Some(3), .. }),
            "{err}"
        );
        let err = cfg("[problem]\nbeta = 0.5\n[mesh]\nsize = 3\n").unwrap_err();
        assert!(
            matches!(err, CliError::Config { line: Some(4), .. }),
            "{err}"
        );
    }

    #[test]
    fn semantic_errors_carry_lines() {
        let c = cfg("[problem]\nt = 0.5\nbeta = 1.5\n").unwrap();
        let err = c.beta().unwrap_err();
        assert!(err.to_string().starts_with("exp.toml:3:"), "{err}");
        let c = cfg("[family]\nt = [0.3, 0.3]\n").unwrap();
        assert!(c
            .family_t()
            .unwrap_err()
            .to_string()
            .contains("exp.toml:2: duplicate T value"));
    }

    #[test]
    fn missing_g_is_config_error() {
        let c = cfg("[problem]\nbeta = 0.5\n").unwrap();
        let err = c.g().unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("missing `g`"));
    }

    #[test]
    fn convention_is_required() {
        let c = cfg("[problem]\nbeta = 0.5\n").unwrap();
        assert!(c.convention().is_err());
        let c = cfg("[problem]\nconvention = \"raw-argument\"\n").unwrap();
        assert_eq!(c.convention().unwrap(), Convention::RawArgument);
    }

    #[test]
    fn alpha_or_beta() {
        assert_eq!(
            cfg("[problem]\nalpha = 0.25\n").unwrap().beta().unwrap(),
            0.75
        );
        assert!(cfg("[problem]\nalpha = 0.5\nbeta = 0.5\n")
            .unwrap()
            .beta()
            .is_err());
    }

    #[test]
    fn init_choices() {
        assert_eq!(
            cfg("").unwrap().init().unwrap(),
            InitChoice::LowerEnvelope { y1: 1.0, eps1: 0.5 }
        );
        assert_eq!(
            cfg("[solver]\ninit = \"zero\"\n").unwrap().init().unwrap(),
            InitChoice::Zero
        );
        assert!(cfg("[solver]\ninit = \"custom\"\n")
            .unwrap()
            .init()
            .is_err());
        assert!(cfg("[solver]\ninit = \"zero\"\ninit_y1 = 2.0\n")
            .unwrap()
            .init()
            .is_err());
    }

    #[test]
    fn partial_certificate_rejected() {
        let c = cfg("[hypothesis]\ny1 = 1.0\n").unwrap();
        assert!(c.certificate_point().is_err());
        let c = cfg("[hypothesis]\ny1_range = [0.5, 2.0]\n").unwrap();
        let err = c.search_ranges().unwrap_err();
        assert!(err.to_string().starts_with("exp.toml:2:"), "{err}");
    }

    #[test]
    fn default_ladder_doubles() {
        let c = cfg("[mesh]\nn = 100\n").unwrap();
        assert_eq!(c.ladder().unwrap(), vec![100, 200, 400]);
        assert!(cfg("[mesh]\nladder = [10, 10]\n")
            .unwrap()
            .ladder()
            .is_err());
    }
}
