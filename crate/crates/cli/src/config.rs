//! Run configuration: defaults, then `key=value` lines from `--config`, then
//! command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use laminate_core::{AfsParams, Mat2};
use laminate_realize::RealizeConfig;

/// Flags shared by the commands; every one may also come from the config
/// file under the same name with underscores.
#[derive(Args, Clone, Debug, Default)]
pub struct Opts {
    /// File of `key=value` lines; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ellipticity bound Λ > 1.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Starting matrix as `a11,a12,a21,a22`; defaults to `[[ā+1, 1], [−1, ā+1]]`.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub rounds: Option<u32>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub closeness_delta: Option<f64>,
    #[arg(long)]
    pub fill: Option<f64>,
    /// Seed for the residual test functions.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of residual test functions.
    #[arg(long)]
    pub tests: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub params: AfsParams,
    pub x0: Mat2,
    pub depth: usize,
    pub realize: RealizeConfig,
    pub seed: u64,
    pub tests: usize,
}

const KEYS: [&str; 12] = [
    "lambda",
    "x0",
    "depth",
    "rounds",
    "eps",
    "eta",
    "q",
    "alpha",
    "closeness_delta",
    "fill",
    "seed",
    "tests",
];

pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key=value", i + 1))?;
        let k = k.trim().replace('-', "_");
        if !KEYS.contains(&k.as_str()) {
            bail!("line {}: unknown key {k:?}", i + 1);
        }
        out.insert(k, v.trim().to_string());
    }
    Ok(out)
}

pub fn parse_mat(s: &str) -> Result<Mat2> {
    let v: Vec<f64> = s
        .trim_matches(|c| c == '[' || c == ']')
        .split(',')
        .map(|t| {
            t.trim()
                .trim_matches(|c| c == '[' || c == ']')
                .parse::<f64>()
        })
        .collect::<Result<_, _>>()
        .with_context(|| format!("matrix {s:?}"))?;
    match v[..] {
        [a, b, c, d] => Ok(Mat2::new(a, b, c, d)),
        _ => bail!("matrix {s:?} needs four entries"),
    }
}

struct Layered<'a> {
    file: &'a BTreeMap<String, String>,
}

impl Layered<'_> {
    fn get<T: std::str::FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.file.get(key) {
            Some(s) => s.parse().map_err(|e| anyhow!("{key} = {s:?}: {e}")),
            None => Ok(default),
        }
    }
}

impl RunConfig {
    /// Resolves and validates; every error here is a usage error.
    pub fn resolve(opts: &Opts) -> Result<Self> {
        let file = match &opts.config {
            Some(p) => parse_config_file(&read(p)?)?,
            None => BTreeMap::new(),
        };
        let l = Layered { file: &file };
        let d = RealizeConfig::default();
        let lambda = l.get(opts.lambda, "lambda", 2.0)?;
        let params = AfsParams::defaults(lambda)?;
        let x0 = match opts.x0.as_deref().or(file.get("x0").map(String::as_str)) {
            Some(s) => parse_mat(s)?,
            None => params.default_x0(),
        };
        if !params.in_u(&x0) {
            bail!("x0 = {x0:?} is not in U");
        }
        let depth = l.get(opts.depth, "depth", d.depth)?;
        let realize = RealizeConfig {
            eps: l.get(opts.eps, "eps", d.eps)?,
            eta: l.get(opts.eta, "eta", d.eta)?,
            q: l.get(opts.q, "q", d.q)?,
            alpha: l.get(opts.alpha, "alpha", d.alpha)?,
            closeness_delta: l.get(opts.closeness_delta, "closeness_delta", d.closeness_delta)?,
            fill: l.get(opts.fill, "fill", d.fill)?,
            depth,
            rounds: l.get(opts.rounds, "rounds", d.rounds)?,
        };
        realize.validate()?;
        let tests = l.get(opts.tests, "tests", 10)?;
        if tests == 0 {
            bail!("tests must be positive");
        }
        Ok(RunConfig {
            params,
            x0,
            depth,
            realize,
            seed: l.get(opts.seed, "seed", 1)?,
            tests,
        })
    }
}

pub fn read(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\nlambda = 4\ndepth=7\neps = 0.02\n").unwrap();
        let opts = Opts {
            config: Some(path),
            depth: Some(3),
            ..Default::default()
        };
        let c = RunConfig::resolve(&opts).unwrap();
        assert_eq!(c.params.lambda, 4.0);
        assert_eq!(c.depth, 3);
        assert_eq!(c.realize.eps, 0.02);
        assert_eq!(c.realize.depth, 3);
        assert_eq!(c.x0, c.params.default_x0());
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(parse_config_file("depth 3").is_err());
        assert!(parse_config_file("colour = red").is_err());
        assert!(RunConfig::resolve(&Opts {
            lambda: Some(1.0),
            ..Default::default()
        })
        .is_err());
        assert!(RunConfig::resolve(&Opts {
            x0: Some("1,0,0,1".into()),
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn matrices_parse_with_or_without_brackets() {
        let m = Mat2::new(13.0, 1.0, -1.0, 14.0);
        assert_eq!(parse_mat("13,1,-1,14").unwrap(), m);
        assert_eq!(parse_mat("[[13, 1], [-1, 14]]").unwrap(), m);
        assert!(parse_mat("1,2,3").is_err());
    }
}
