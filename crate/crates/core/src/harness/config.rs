//! Flat `key = value` experiment files with `[section]` headers.
//!
//! ```text
//! [lattice]
//! n_sites = 512
//! [kernel]
//! profile = constant      # constant | linear | curie_weiss
//! range = 1
//! j0 = 1.0
//! [coarse]
//! q = 8
//! beta_mode = uniform_beta
//! [chain]
//! beta = 3.0
//! rate = metropolis
//! burnin = 10000
//! samples = 1000
//! thinning = 10
//! seed = 1
//! match_paper_appendix_b = false
//! [sweep]
//! h_min = -1.0
//! h_max = 1.0
//! n_points = 11
//! schemes = micro,cg0,cg2
//! wall_time = false
//! ```

use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;

use crate::corrections::BetaMode;
use crate::error::{Error, Result};
use crate::lattice::{FieldSpec, Kernel, MicroLattice, MicroModel};
use crate::sampler::{ChainSpec, RateKind, Scheme};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    /// `J(r) = J0/(2L)` for `1 ≤ r ≤ L`.
    Constant,
    /// `V(u) = 1 − u`, `J(r) = J0 V(r/L)/L`.
    Linear,
    /// `J = J0/N` between all pairs.
    CurieWeiss,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Profile::Constant),
            "linear" => Ok(Profile::Linear),
            "curie_weiss" => Ok(Profile::CurieWeiss),
            _ => Err(Error::invalid(format!("unknown kernel profile `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n_sites: usize,
    pub profile: Profile,
    pub range: usize,
    pub j0: f64,
    pub q: usize,
    pub beta_mode: BetaMode,
    pub beta: f64,
    pub rate: RateKind,
    pub n_burnin: u64,
    pub n_samples: u64,
    pub thinning: u64,
    pub seed: u64,
    pub match_paper_appendix_b: bool,
    pub h_min: f64,
    pub h_max: f64,
    pub n_points: usize,
    pub schemes: Vec<Scheme>,
    /// Record wall-clock time in sweep output. Off by default so reruns are
    /// byte-identical.
    pub wall_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let chain = ChainSpec::default();
        ExperimentConfig {
            n_sites: 512,
            profile: Profile::Constant,
            range: 1,
            j0: 1.0,
            q: 8,
            beta_mode: BetaMode::default(),
            beta: 1.0,
            rate: RateKind::Metropolis,
            n_burnin: chain.n_burnin,
            n_samples: chain.n_samples,
            thinning: chain.thinning,
            seed: chain.seed,
            match_paper_appendix_b: false,
            h_min: -1.0,
            h_max: 1.0,
            n_points: 11,
            schemes: vec![Scheme::Micro, Scheme::Cg0, Scheme::Cg2],
            wall_time: false,
        }
    }
}

const SECTIONS: [(&str, &[&str]); 5] = [
    ("lattice", &["n_sites"]),
    ("kernel", &["profile", "range", "j0"]),
    ("coarse", &["q", "beta_mode"]),
    (
        "chain",
        &[
            "beta",
            "rate",
            "burnin",
            "samples",
            "thinning",
            "seed",
            "match_paper_appendix_b",
        ],
    ),
    (
        "sweep",
        &["h_min", "h_max", "n_points", "schemes", "wall_time"],
    ),
];

fn config_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config {
        line,
        msg: msg.into(),
    }
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| config_err(line, format!("invalid value `{value}` for `{key}`")))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut section: Option<&str> = None;
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(name) = body.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| config_err(line, "unterminated section header"))?
                    .trim();
                let known = SECTIONS
                    .iter()
                    .find(|(s, _)| *s == name)
                    .ok_or_else(|| config_err(line, format!("unknown section `[{name}]`")))?;
                section = Some(known.0);
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| config_err(line, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            let sec = section
                .ok_or_else(|| config_err(line, format!("key `{key}` outside of a section")))?;
            let keys = SECTIONS
                .iter()
                .find(|(s, _)| *s == sec)
                .map(|(_, k)| *k)
                .unwrap_or(&[]);
            if !keys.contains(&key) {
                return Err(config_err(line, format!("unknown key `{key}` in [{sec}]")));
            }
            if !seen.insert((sec, key)) {
                return Err(config_err(
                    line,
                    format!("duplicate key `{key}` in [{sec}]"),
                ));
            }
            cfg.set(sec, key, value, line)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn set(&mut self, section: &str, key: &str, value: &str, line: usize) -> Result<()> {
        match (section, key) {
            ("lattice", "n_sites") => self.n_sites = parse_value(line, key, value)?,
            ("kernel", "profile") => {
                self.profile = value
                    .parse()
                    .map_err(|e: Error| config_err(line, e.to_string()))?
            }
            ("kernel", "range") => self.range = parse_value(line, key, value)?,
            ("kernel", "j0") => self.j0 = parse_value(line, key, value)?,
            ("coarse", "q") => self.q = parse_value(line, key, value)?,
            ("coarse", "beta_mode") => {
                self.beta_mode = value
                    .parse()
                    .map_err(|e: Error| config_err(line, e.to_string()))?
            }
            ("chain", "beta") => self.beta = parse_value(line, key, value)?,
            ("chain", "rate") => {
                self.rate = value
                    .parse()
                    .map_err(|e: Error| config_err(line, e.to_string()))?
            }
            ("chain", "burnin") => self.n_burnin = parse_value(line, key, value)?,
            ("chain", "samples") => self.n_samples = parse_value(line, key, value)?,
            ("chain", "thinning") => self.thinning = parse_value(line, key, value)?,
            ("chain", "seed") => self.seed = parse_value(line, key, value)?,
            ("chain", "match_paper_appendix_b") => {
                self.match_paper_appendix_b = parse_value(line, key, value)?
            }
            ("sweep", "h_min") => self.h_min = parse_value(line, key, value)?,
            ("sweep", "h_max") => self.h_max = parse_value(line, key, value)?,
            ("sweep", "n_points") => self.n_points = parse_value(line, key, value)?,
            ("sweep", "schemes") => {
                self.schemes = value
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse()
                            .map_err(|e: Error| config_err(line, e.to_string()))
                    })
                    .collect::<Result<Vec<Scheme>>>()?;
            }
            ("sweep", "wall_time") => self.wall_time = parse_value(line, key, value)?,
            _ => {
                return Err(config_err(
                    line,
                    format!("unknown key `{key}` in [{section}]"),
                ))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config { line: 0, msg });
        if self.n_sites < 2 {
            return fail("n_sites must be at least 2".into());
        }
        if self.profile != Profile::CurieWeiss
            && (self.range == 0 || self.n_sites <= 2 * self.range)
        {
            return fail(format!(
                "need 1 ≤ range and n_sites > 2·range, got range {} on {} sites",
                self.range, self.n_sites
            ));
        }
        if !self.j0.is_finite() {
            return fail("j0 must be finite".into());
        }
        if self.q == 0 || !self.n_sites.is_multiple_of(self.q) || self.n_sites / self.q < 2 {
            return fail(format!(
                "q = {} must divide n_sites = {} into at least two cells",
                self.q, self.n_sites
            ));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return fail("beta must be finite and nonnegative".into());
        }
        if self.thinning == 0 || self.n_samples == 0 {
            return fail("samples and thinning must be positive".into());
        }
        if !(self.h_min.is_finite() && self.h_max.is_finite()) {
            return fail("field bounds must be finite".into());
        }
        if self.n_points == 0
            || (self.n_points > 1 && !(self.h_max > self.h_min))
            || (self.n_points == 1 && self.h_max != self.h_min)
        {
            return fail("the field grid must be strictly increasing from h_min to h_max".into());
        }
        if self.schemes.is_empty() {
            return fail("at least one scheme is required".into());
        }
        if self.schemes.contains(&Scheme::Cg2) && self.q < 4 {
            return fail("cg2 needs q ≥ 4".into());
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<Kernel> {
        let kernel = match self.profile {
            Profile::Constant => Kernel::constant(self.j0, self.range)?,
            Profile::Linear => Kernel::from_profile(|u| 1.0 - u, self.range, self.j0)?,
            Profile::CurieWeiss => Kernel::curie_weiss(self.j0, self.n_sites)?,
        };
        Ok(kernel)
    }

    pub fn micro_model(&self, h: f64) -> Result<MicroModel> {
        MicroModel::new(
            MicroLattice::new(self.n_sites)?,
            self.kernel()?,
            FieldSpec::Uniform(h),
        )
    }

    /// The field grid, strictly increasing.
    pub fn field_grid(&self) -> Vec<f64> {
        if self.n_points == 1 {
            return vec![self.h_min];
        }
        let last = (self.n_points - 1) as f64;
        (0..self.n_points)
            .map(|i| self.h_min + (self.h_max - self.h_min) * i as f64 / last)
            .collect()
    }

    pub fn chain_spec(&self, stream: u64) -> ChainSpec {
        ChainSpec {
            beta: self.beta,
            rate: self.rate,
            n_burnin: self.n_burnin,
            n_samples: self.n_samples,
            thinning: self.thinning,
            seed: self.seed,
            stream,
            keep_snapshots: false,
            match_paper_appendix_b: self.match_paper_appendix_b,
        }
    }
}
