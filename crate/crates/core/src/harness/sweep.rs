//! Field continuation sweeps and hysteresis loop areas.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::config::ExperimentConfig;
use crate::coarse::{effective_field, CoarseModel, CoarsePartition};
use crate::corrections::{kernel_moments, CorrectedModel, KernelMoments};
use crate::error::{Error, Result};
use crate::estimators::magnetization;
use crate::lattice::{FieldSpec, MicroModel};
use crate::sampler::{run_chain, Scheme, State, System};

pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_COLUMNS: &str =
    "scheme,h,branch,m_mean,m_stderr,acceptance_rate,energy_evals,wall_time_s";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SweepBranch {
    /// Increasing field.
    Up,
    /// Decreasing field.
    Down,
}

impl SweepBranch {
    pub fn name(self) -> &'static str {
        match self {
            SweepBranch::Up => "up",
            SweepBranch::Down => "down",
        }
    }
}

impl fmt::Display for SweepBranch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepBranch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "up" => Ok(SweepBranch::Up),
            "down" => Ok(SweepBranch::Down),
            _ => Err(Error::invalid(format!("unknown branch {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRecord {
    pub scheme: Scheme,
    pub h: f64,
    pub branch: SweepBranch,
    pub m_mean: f64,
    pub m_stderr: f64,
    pub acceptance_rate: f64,
    pub energy_evals: u64,
    pub wall_time_s: f64,
}

/// Builds the sampled system of one scheme at any field value, reusing the
/// field-independent parts.
pub struct SystemFactory {
    scheme: Scheme,
    micro: MicroModel,
    coarse: Option<CoarseModel>,
    moments: Option<KernelMoments>,
    cfg: ExperimentConfig,
}

impl SystemFactory {
    pub fn new(cfg: &ExperimentConfig, scheme: Scheme) -> Result<Self> {
        let micro = cfg.micro_model(0.0)?;
        let (coarse, moments) = match scheme {
            Scheme::Micro => (None, None),
            Scheme::Cg0 => (
                Some(CoarseModel::from_micro(&micro, cfg.q, cfg.beta)?),
                None,
            ),
            Scheme::Cg2 => {
                let part = CoarsePartition::new(cfg.n_sites, cfg.q)?;
                let km = kernel_moments(micro.couplings(), &part)?;
                (
                    Some(CoarseModel::from_micro(&micro, cfg.q, cfg.beta)?),
                    Some(km),
                )
            }
        };
        Ok(SystemFactory {
            scheme,
            micro,
            coarse,
            moments,
            cfg: cfg.clone(),
        })
    }

    pub fn system(&self, h: f64) -> Result<System> {
        let field = FieldSpec::Uniform(h);
        match self.scheme {
            Scheme::Micro => Ok(System::Micro(self.micro.with_field(field)?)),
            Scheme::Cg0 | Scheme::Cg2 => {
                let base = self
                    .coarse
                    .as_ref()
                    .expect("coarse scheme has a coarse model");
                let coarse =
                    base.with_field(effective_field(&field, base.partition(), self.cfg.beta)?)?;
                match &self.moments {
                    None => Ok(System::Cg0(coarse)),
                    Some(km) => Ok(System::Cg2(CorrectedModel::new(
                        coarse,
                        km.clone(),
                        self.cfg.beta,
                        self.cfg.beta_mode,
                    )?)),
                }
            }
        }
    }
}

/// Saturated starting spin of a branch: the state favoured at its first
/// field value. With the `+hσ` field term a positive field favours `σ = −1`.
pub fn warm_start_spin(branch: SweepBranch, h_start: f64) -> i8 {
    if h_start > 0.0 {
        -1
    } else if h_start < 0.0 {
        1
    } else {
        match branch {
            SweepBranch::Up => -1,
            SweepBranch::Down => 1,
        }
    }
}

fn branch_fields(cfg: &ExperimentConfig, branch: SweepBranch) -> Vec<f64> {
    let mut grid = cfg.field_grid();
    if branch == SweepBranch::Down {
        grid.reverse();
    }
    grid
}

fn scheme_index(scheme: Scheme) -> u64 {
    match scheme {
        Scheme::Micro => 0,
        Scheme::Cg0 => 1,
        Scheme::Cg2 => 2,
    }
}

/// One continuation branch: every field point is warm-started from the final
/// configuration of the previous point.
pub fn run_branch(
    cfg: &ExperimentConfig,
    scheme: Scheme,
    branch: SweepBranch,
) -> Result<Vec<SweepRecord>> {
    let factory = SystemFactory::new(cfg, scheme)?;
    let fields = branch_fields(cfg, branch);
    let branch_id = match branch {
        SweepBranch::Up => 0,
        SweepBranch::Down => 1,
    };
    let mut state: Option<State> = None;
    let mut out = Vec::with_capacity(fields.len());
    for (i, &h) in fields.iter().enumerate() {
        let start = Instant::now();
        let system = factory.system(h)?;
        let initial = state
            .take()
            .unwrap_or_else(|| system.saturated(warm_start_spin(branch, h)));
        let stream = ((scheme_index(scheme) * 2 + branch_id) << 32) | i as u64;
        let batch = run_chain(&system, &cfg.chain_spec(stream), Some(initial))?;
        let m = magnetization(&batch)?;
        out.push(SweepRecord {
            scheme,
            h,
            branch,
            m_mean: m.mean,
            m_stderr: m.stderr,
            acceptance_rate: batch.acceptance_rate(),
            energy_evals: batch.energy_evals,
            wall_time_s: if cfg.wall_time {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        });
        state = Some(batch.final_state);
    }
    Ok(out)
}

/// Both branches of every configured scheme. Branches and schemes run
/// concurrently; records come back in scheme order, up branch first.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    let jobs: Vec<(Scheme, SweepBranch)> = cfg
        .schemes
        .iter()
        .flat_map(|&s| [(s, SweepBranch::Up), (s, SweepBranch::Down)])
        .collect();
    let parts = jobs
        .par_iter()
        .map(|&(s, b)| run_branch(cfg, s, b))
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().flatten().collect())
}

pub fn write_csv<W: Write>(records: &[SweepRecord], mut out: W) -> Result<()> {
    writeln!(out, "# schema_version={SCHEMA_VERSION}")?;
    writeln!(out, "{CSV_COLUMNS}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.scheme.name(),
            r.h,
            r.branch,
            r.m_mean,
            r.m_stderr,
            r.acceptance_rate,
            r.energy_evals,
            r.wall_time_s
        )?;
    }
    Ok(())
}

pub fn read_csv(text: &str) -> Result<Vec<SweepRecord>> {
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, msg: &str| Error::Config {
        line,
        msg: msg.to_string(),
    };
    match lines.next() {
        Some((_, l)) if l.trim() == format!("# schema_version={SCHEMA_VERSION}") => {}
        _ => return Err(bad(1, "missing schema version header")),
    }
    match lines.next() {
        Some((_, l)) if l.trim() == CSV_COLUMNS => {}
        _ => return Err(bad(2, "unexpected column header")),
    }
    let mut out = Vec::new();
    for (i, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 8 {
            return Err(bad(i + 1, "expected eight columns"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 1, "invalid number"));
        out.push(SweepRecord {
            scheme: f[0].parse().map_err(|_| bad(i + 1, "invalid scheme"))?,
            h: num(f[1])?,
            branch: f[2].parse().map_err(|_| bad(i + 1, "invalid branch"))?,
            m_mean: num(f[3])?,
            m_stderr: num(f[4])?,
            acceptance_rate: num(f[5])?,
            energy_evals: f[6].parse().map_err(|_| bad(i + 1, "invalid counter"))?,
            wall_time_s: num(f[7])?,
        });
    }
    Ok(out)
}

/// Hysteresis loop area `∫ (m_up − m_down) dh` by the trapezoid rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopArea {
    pub area: f64,
    /// Propagated standard error from the per-point errors.
    pub stderr: f64,
    /// Parametric bootstrap 95% interval.
    pub ci_low: f64,
    pub ci_high: f64,
}

pub const BOOTSTRAP_REPLICAS: usize = 2000;

/// Paired up/down points of one scheme, sorted by field.
pub fn branch_pairs(
    records: &[SweepRecord],
    scheme: Scheme,
) -> Result<Vec<(f64, &SweepRecord, &SweepRecord)>> {
    let mut up: Vec<&SweepRecord> = records
        .iter()
        .filter(|r| r.scheme == scheme && r.branch == SweepBranch::Up)
        .collect();
    up.sort_by(|a, b| a.h.total_cmp(&b.h));
    let mut pairs = Vec::with_capacity(up.len());
    for u in up {
        let d = records
            .iter()
            .find(|r| r.scheme == scheme && r.branch == SweepBranch::Down && r.h == u.h)
            .ok_or_else(|| Error::invalid(format!("no down-branch point at h = {}", u.h)))?;
        pairs.push((u.h, u, d));
    }
    if pairs.len() < 2 {
        return Err(Error::invalid(
            "a loop area needs at least two field points",
        ));
    }
    Ok(pairs)
}

pub fn loop_area(records: &[SweepRecord], scheme: Scheme, seed: u64) -> Result<LoopArea> {
    let pairs = branch_pairs(records, scheme)?;
    let n = pairs.len();
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let dh = pairs[i + 1].0 - pairs[i].0;
        w[i] += dh / 2.0;
        w[i + 1] += dh / 2.0;
    }
    let diff: Vec<f64> = pairs.iter().map(|(_, u, d)| u.m_mean - d.m_mean).collect();
    let sd: Vec<f64> = pairs
        .iter()
        .map(|(_, u, d)| (u.m_stderr.powi(2) + d.m_stderr.powi(2)).sqrt())
        .collect();
    let area: f64 = w.iter().zip(&diff).map(|(a, b)| a * b).sum();
    let stderr = w
        .iter()
        .zip(&sd)
        .map(|(a, s)| (a * s).powi(2))
        .sum::<f64>()
        .sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reps: Vec<f64> = (0..BOOTSTRAP_REPLICAS)
        .map(|_| {
            w.iter()
                .zip(diff.iter().zip(&sd))
                .map(|(wi, (m, s))| {
                    let x = if *s > 0.0 {
                        Normal::new(*m, *s).expect("finite spread").sample(&mut rng)
                    } else {
                        *m
                    };
                    wi * x
                })
                .sum()
        })
        .collect();
    reps.sort_by(f64::total_cmp);
    let pick = |p: f64| {
        reps[((p * (BOOTSTRAP_REPLICAS - 1) as f64).round() as usize).min(BOOTSTRAP_REPLICAS - 1)]
    };
    Ok(LoopArea {
        area,
        stderr,
        ci_low: pick(0.025),
        ci_high: pick(0.975),
    })
}
