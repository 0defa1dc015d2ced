//! Self-checks runnable from the command line.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coarse::{moment, prior_logweight_alpha, CoarseConfig, CoarsePartition};
use crate::corrections::{kernel_moments, BetaMode, CorrectedModel};
use crate::error::{Error, Result};
use crate::estimators::{
    a_posteriori_exact, fit_loglog, model_epsilon, relative_entropy_log, scheme_entropy_exact,
    LogLogFit,
};
use crate::lattice::{FieldSpec, Kernel, MicroLattice, MicroModel};
use crate::oracles::{
    appendix_a_closed_form, appendix_a_enumerated, conditional_mean_energy_all, enumerate_coarse,
    enumerate_micro, exact_kadanoff_all, placements, pushforward, AppendixKind,
};
use crate::sampler::{target_measure, transition_matrix, ChainSpec, RateKind, Scheme, System};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Moments,
    AppendixA,
    DetailedBalance,
    Kadanoff,
    EntropyScaling,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Moments,
        Suite::AppendixA,
        Suite::DetailedBalance,
        Suite::Kadanoff,
        Suite::EntropyScaling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Moments => "moments",
            Suite::AppendixA => "appendixA",
            Suite::DetailedBalance => "detailed_balance",
            Suite::Kadanoff => "kadanoff",
            Suite::EntropyScaling => "entropy_scaling",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown suite {s:?}")))
    }
}

/// One measured quantity and the condition it was held to.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance condition, e.g. `<= 1e-12`.
    pub condition: String,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value,
            condition: format!("<= {bound:e}"),
            pass: value <= bound,
        }
    }

    pub fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Check {
            name: name.into(),
            value,
            condition: format!("in [{lo}, {hi}]"),
            pass: value >= lo && value <= hi,
        }
    }

    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Check {
            name: name.into(),
            value: ok as u8 as f64,
            condition: "== 1".into(),
            pass: ok,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub fn write_reports<W: Write>(reports: &[SuiteReport], mut out: W) -> Result<()> {
    writeln!(out, "suite,check,value,condition,status")?;
    for r in reports {
        for c in &r.checks {
            writeln!(
                out,
                "{},{},{:e},{},{}",
                r.suite,
                c.name,
                c.value,
                c.condition,
                if c.pass { "pass" } else { "fail" }
            )?;
        }
    }
    Ok(())
}

pub fn run_suite(suite: Suite) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Moments => moments_checks(&moment)?,
        Suite::AppendixA => appendix_checks()?,
        Suite::DetailedBalance => detailed_balance_checks()?,
        Suite::Kadanoff => kadanoff_checks()?,
        Suite::EntropyScaling => entropy_scaling_checks()?,
    };
    Ok(SuiteReport { suite, checks })
}

/// Signature of a conditional-moment formula `(order, α, q) ↦ E_order(α)`.
pub type MomentFn = dyn Fn(usize, u32, usize) -> Result<f64> + Sync;

/// Conditional moments against placement enumeration for `q ≤ 10`, and the
/// normalization of the coarse prior.
pub fn moments_checks(formula: &MomentFn) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for q in 1..=10usize {
        let mut worst: f64 = 0.0;
        for a in 0..=q as u32 {
            let masks = placements(q, a);
            for order in 1..=q.min(4) {
                let enumerated = masks
                    .iter()
                    .map(|&b| {
                        (0..order)
                            .map(|i| if (b >> i) & 1 == 1 { 1.0 } else { -1.0 })
                            .product::<f64>()
                    })
                    .sum::<f64>()
                    / masks.len() as f64;
                worst = worst.max((formula(order, a, q)? - enumerated).abs());
            }
        }
        checks.push(Check::at_most(format!("moments_q{q}"), worst, 1e-12));
        let total: f64 = (0..=q as u32)
            .map(|a| prior_logweight_alpha(a, q).exp())
            .sum();
        checks.push(Check::at_most(
            format!("prior_mass_q{q}"),
            (total - 1.0).abs(),
            1e-12,
        ));
    }
    Ok(checks)
}

fn random_kernel_model(rng: &mut ChaCha8Rng, n: usize, range: usize) -> Result<MicroModel> {
    let values = (0..range).map(|_| rng.gen_range(-1.0..1.0)).collect();
    MicroModel::new(
        MicroLattice::new(n)?,
        Kernel::from_table(values)?,
        FieldSpec::Uniform(0.0),
    )
}

/// Largest deviation between enumerated and closed-form conditional integrals
/// over every α of the involved cells, for `kernels` random kernels.
pub fn appendix_max_error(q: usize, kernels: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let models = (0..kernels)
        .map(|_| {
            let range = rng.gen_range(1..=2 * q);
            random_kernel_model(&mut rng, 5 * q, range)
        })
        .collect::<Result<Vec<_>>>()?;
    let errs = models
        .par_iter()
        .map(|model| -> Result<f64> {
            let part = CoarsePartition::new(model.n_sites(), q)?;
            let km = kernel_moments(model.couplings(), &part)?;
            let scale = model.kernel().norm().max(1e-300).powi(2) * (q * q) as f64;
            let mut worst: f64 = 0.0;
            for kind in AppendixKind::ALL {
                let cells: &[usize] = match kind {
                    AppendixKind::SameCellSquared => &[0],
                    AppendixKind::PairSquared | AppendixKind::SameCellTimesPair => &[0, 1],
                    AppendixKind::Chain => &[0, 1, 2],
                };
                let combos = (q + 1).pow(cells.len() as u32);
                for idx in 0..combos {
                    let alphas: Vec<u32> = CoarseConfig::from_index(idx as u64, cells.len(), q)
                        .alpha()
                        .to_vec();
                    let a = appendix_a_enumerated(kind, model, &part, cells, &alphas)?;
                    let b = appendix_a_closed_form(kind, &km, &part, cells, &alphas)?;
                    worst = worst.max((a - b).abs() / scale);
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(errs.into_iter().fold(0.0, f64::max))
}

fn appendix_checks() -> Result<Vec<Check>> {
    [4usize, 5, 6]
        .iter()
        .map(|&q| {
            Ok(Check::at_most(
                format!("appendix_q{q}"),
                appendix_max_error(q, 5, q as u64)?,
                1e-12,
            ))
        })
        .collect()
}

/// Worst detailed-balance, stationarity and row-sum defects of the exact
/// transition matrix, and whether it is irreducible and aperiodic.
pub fn chain_defects(system: &System, spec: &ChainSpec) -> Result<(f64, bool)> {
    let tm = transition_matrix(system, spec)?;
    let pi = target_measure(system, spec)?.probabilities();
    let defect = tm
        .detailed_balance_error(&pi)
        .max(tm.stationarity_error(&pi))
        .max(tm.max_row_sum_error());
    Ok((defect, tm.is_irreducible() && tm.has_positive_diagonal()))
}

fn detailed_balance_checks() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for rate in RateKind::ALL {
        let mut worst: f64 = 0.0;
        let mut ergodic = true;
        for n in 2..=4usize {
            for range in 1..=2usize {
                let values = (0..range).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let model = MicroModel::new(
                    MicroLattice::new(n)?,
                    Kernel::from_table(values)?,
                    FieldSpec::Uniform(rng.gen_range(-0.5..0.5)),
                )?;
                let spec = ChainSpec {
                    beta: rng.gen_range(0.1..2.0),
                    rate,
                    ..ChainSpec::default()
                };
                let (d, e) = chain_defects(&System::Micro(model), &spec)?;
                worst = worst.max(d);
                ergodic &= e;
            }
        }
        for m in 2..=3usize {
            let model =
                random_kernel_model(&mut rng, 4 * m, 3)?.with_field(FieldSpec::Uniform(0.2))?;
            let beta = rng.gen_range(0.1..2.0);
            for paper in [false, true] {
                let spec = ChainSpec {
                    beta,
                    rate,
                    match_paper_appendix_b: paper,
                    ..ChainSpec::default()
                };
                let cg0 = System::Cg0(crate::coarse::CoarseModel::from_micro(&model, 4, beta)?);
                let cg2 = System::Cg2(CorrectedModel::from_micro(
                    &model,
                    4,
                    beta,
                    BetaMode::UniformBeta,
                )?);
                for system in [cg0, cg2] {
                    let (d, e) = chain_defects(&system, &spec)?;
                    worst = worst.max(d);
                    ergodic &= e;
                }
            }
        }
        checks.push(Check::at_most(
            format!("balance_{}", rate.name()),
            worst,
            1e-12,
        ));
        checks.push(Check::holds(format!("ergodic_{}", rate.name()), ergodic));
    }
    Ok(checks)
}

/// Largest `|H̄⁽⁰⁾(η) − E[H_N | η]|` over every coarse state.
pub fn h0_conditional_mean_error(model: &MicroModel, q: usize) -> Result<f64> {
    let part = CoarsePartition::new(model.n_sites(), q)?;
    let mean = conditional_mean_energy_all(model, &part)?;
    let coarse = crate::coarse::CoarseModel::from_micro(model, q, 0.0)?;
    let mut worst: f64 = 0.0;
    for (i, e) in mean.iter().enumerate() {
        let a = CoarseConfig::from_index(i as u64, part.m_cells(), q);
        worst = worst.max((coarse.h0_energy(&a)? - e).abs());
    }
    Ok(worst)
}

/// Entrywise distance between the pushed-forward micro Gibbs measure and the
/// coarse measure built from the exact coarse Hamiltonian, and the relative
/// entropy between the two.
pub fn kadanoff_defect(model: &MicroModel, q: usize, beta: f64) -> Result<(f64, f64)> {
    let part = CoarsePartition::new(model.n_sites(), q)?;
    let pushed = pushforward(&enumerate_micro(model, beta)?, &part)?;
    let hbar = exact_kadanoff_all(model, &part, beta)?;
    let coarse = enumerate_coarse(&part, |a| Ok(beta * hbar[a.index() as usize]))?;
    let entry = pushed
        .probabilities()
        .iter()
        .zip(coarse.probabilities())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let r =
        relative_entropy_log(coarse.log_weights(), pushed.log_weights())? / model.n_sites() as f64;
    Ok((entry, r))
}

fn kadanoff_checks() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for n in [8usize, 12, 16] {
        for q in [2usize, 4] {
            let range = rng.gen_range(1..n / 2);
            let model = random_kernel_model(&mut rng, n, range)?
                .with_field(FieldSpec::Uniform(rng.gen_range(-0.5..0.5)))?;
            checks.push(Check::at_most(
                format!("h0_mean_n{n}_q{q}"),
                h0_conditional_mean_error(&model, q)?,
                1e-10,
            ));
            let (entry, r) = kadanoff_defect(&model, q, rng.gen_range(0.2..1.5))?;
            checks.push(Check::at_most(
                format!("pushforward_n{n}_q{q}"),
                entry,
                1e-12,
            ));
            checks.push(Check::at_most(format!("entropy_n{n}_q{q}"), r.abs(), 1e-12));
        }
    }
    Ok(checks)
}

/// One point of the entropy-scaling grid with the profile `V(u) = 1 − u`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub n_sites: usize,
    pub q: usize,
    pub range: usize,
    pub beta: f64,
    pub epsilon: f64,
    /// `R(μ̄⁽⁰⁾ | μ∘F⁻¹)/N`.
    pub r_cg0: f64,
    /// `R(μ̄⁽²⁾ | μ∘F⁻¹)/N`.
    pub r_cg2: f64,
    /// `(β/N) max_η |H̄ − H̄⁽⁰⁾|`.
    pub sup_cg0: f64,
    /// `(β/N) max_η |H̄ − H̄⁽⁰⁾ − H̄⁽¹⁾ − H̄⁽²⁾|`.
    pub sup_cg2: f64,
    /// Exact a posteriori functional over the cg0 measure (total, not per site).
    pub a_posteriori: f64,
}

pub fn grid_point(
    n: usize,
    q: usize,
    range: usize,
    beta: f64,
    mode: BetaMode,
) -> Result<GridPoint> {
    let model = MicroModel::new(
        MicroLattice::new(n)?,
        Kernel::from_profile(|u| 1.0 - u, range, 1.0)?,
        FieldSpec::Uniform(0.0),
    )?;
    let part = CoarsePartition::new(n, q)?;
    let hbar = exact_kadanoff_all(&model, &part, beta)?;
    let cm = CorrectedModel::from_micro(&model, q, beta, mode)?;
    let (mut s0, mut s2): (f64, f64) = (0.0, 0.0);
    for (i, hb) in hbar.iter().enumerate() {
        let a = CoarseConfig::from_index(i as u64, part.m_cells(), q);
        let h0 = cm.coarse().h0_energy(&a)?;
        s0 = s0.max((hb - h0).abs());
        s2 = s2.max((hb - cm.corrected_energy(&a)?).abs());
    }
    let scale = beta / n as f64;
    Ok(GridPoint {
        n_sites: n,
        q,
        range,
        beta,
        epsilon: model_epsilon(&model, q, beta)?,
        r_cg0: scheme_entropy_exact(&model, q, beta, Scheme::Cg0, mode)?.r_per_site,
        r_cg2: scheme_entropy_exact(&model, q, beta, Scheme::Cg2, mode)?.r_per_site,
        sup_cg0: scale * s0,
        sup_cg2: scale * s2,
        a_posteriori: a_posteriori_exact(&cm)?.total(),
    })
}

pub const GRID_SITES: usize = 16;
pub const GRID_Q: usize = 4;
pub const GRID_RANGES: [usize; 3] = [4, 8, 16];
pub const GRID_BETAS: [f64; 2] = [0.25, 0.5];

/// The scaling grid `L ∈ {4, 8, 16}`, `β ∈ {0.25, 0.5}` at `N = 16`, `q = 4`.
pub fn scaling_grid(mode: BetaMode) -> Result<Vec<GridPoint>> {
    let params: Vec<(usize, f64)> = GRID_BETAS
        .iter()
        .flat_map(|&b| GRID_RANGES.iter().map(move |&l| (l, b)))
        .collect();
    params
        .par_iter()
        .map(|&(l, b)| grid_point(GRID_SITES, GRID_Q, l, b, mode))
        .collect()
}

/// Fitted slopes of `log y` against `log ε` over the grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingFits {
    pub r_cg0: LogLogFit,
    pub r_cg2: LogLogFit,
    pub sup_cg0: LogLogFit,
    pub sup_cg2: LogLogFit,
}

pub fn scaling_fits(grid: &[GridPoint]) -> Result<ScalingFits> {
    let eps: Vec<f64> = grid.iter().map(|p| p.epsilon).collect();
    let fit = |f: fn(&GridPoint) -> f64| fit_loglog(&eps, &grid.iter().map(f).collect::<Vec<_>>());
    Ok(ScalingFits {
        r_cg0: fit(|p| p.r_cg0)?,
        r_cg2: fit(|p| p.r_cg2)?,
        sup_cg0: fit(|p| p.sup_cg0)?,
        sup_cg2: fit(|p| p.sup_cg2)?,
    })
}

pub fn write_grid_csv<W: Write>(grid: &[GridPoint], mut out: W) -> Result<()> {
    writeln!(
        out,
        "n_sites,q,range,beta,epsilon,r_cg0,r_cg2,sup_cg0,sup_cg2,a_posteriori"
    )?;
    for p in grid {
        writeln!(
            out,
            "{},{},{},{},{},{:e},{:e},{:e},{:e},{:e}",
            p.n_sites,
            p.q,
            p.range,
            p.beta,
            p.epsilon,
            p.r_cg0,
            p.r_cg2,
            p.sup_cg0,
            p.sup_cg2,
            p.a_posteriori
        )?;
    }
    Ok(())
}

/// 95% normal-approximation half width used for reported slope intervals.
pub const SLOPE_Z: f64 = 1.96;

fn slope_check(name: &str, fit: &LogLogFit, target: f64, tol: f64) -> Check {
    let (lo, hi) = fit.interval(SLOPE_Z);
    let mut c = Check::within(name, fit.slope, target - tol, target + tol);
    c.condition = format!(
        "in [{}, {}] (fit 95% CI [{lo:.3}, {hi:.3}])",
        target - tol,
        target + tol
    );
    c
}

fn entropy_scaling_checks() -> Result<Vec<Check>> {
    let grid = scaling_grid(BetaMode::UniformBeta)?;
    let fits = scaling_fits(&grid)?;
    let mut checks = vec![
        Check::holds(
            "entropy_nonnegative",
            grid.iter().all(|p| p.r_cg0 >= -1e-12 && p.r_cg2 >= -1e-12),
        ),
        Check::holds(
            "cg2_below_cg0_pointwise",
            grid.iter().all(|p| p.r_cg2 < p.r_cg0),
        ),
        slope_check("slope_r_cg0", &fits.r_cg0, 2.0, 0.5),
        slope_check("slope_r_cg2", &fits.r_cg2, 3.0, 0.7),
    ];
    checks.push(slope_check("slope_sup_cg0", &fits.sup_cg0, 2.0, 0.5));
    checks.push(slope_check("slope_sup_cg2", &fits.sup_cg2, 3.0, 0.7));
    Ok(checks)
}
