//! Observables and information-theoretic error measures.
//!
//! The a posteriori estimate uses the cg0 measure `μ0 ∝ e^{−βH0}ρ̄` and the
//! residuum `D = w(H1 + H2)` of the chosen β convention. With
//! `μ2 ∝ e^{−D}μ0` one has exactly
//! `R(μ0 | μ2) = E_μ0[D] + log E_μ0[e^{−D}]`, which is the computable
//! surrogate for `R(μ0 | μ∘F⁻¹)`. The sign of the exponent is fixed by this
//! identity and checked against enumeration.

use crate::coarse::{CoarseConfig, CoarsePartition};
use crate::corrections::{epsilon_diag, BetaMode, CorrectedModel};
use crate::error::{Error, Result};
use crate::lattice::MicroModel;
use crate::oracles::{enumerate_coarse, exact_kadanoff_all, EnumeratedMeasure};
use crate::sampler::{SampleBatch, Scheme, State};

/// Tolerance for the normalization check of probability vectors.
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// A mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Number of batches used for batch means and block jackknife on `n` records.
pub fn batch_count(n: usize) -> usize {
    (n as f64).sqrt().ceil() as usize
}

fn block_bounds(n: usize, blocks: usize) -> Vec<(usize, usize)> {
    (0..blocks)
        .map(|b| (b * n / blocks, (b + 1) * n / blocks))
        .filter(|(lo, hi)| hi > lo)
        .collect()
}

/// Mean with a batch-means standard error over `⌈√n⌉` contiguous batches.
pub fn batch_means(values: &[f64]) -> Result<MeanEstimate> {
    if values.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let blocks = block_bounds(n, batch_count(n));
    let b = blocks.len();
    if b < 2 {
        return Ok(MeanEstimate { mean, stderr: 0.0 });
    }
    let means: Vec<f64> = blocks
        .iter()
        .map(|&(lo, hi)| values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64)
        .collect();
    let mbar = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - mbar).powi(2)).sum::<f64>() / (b - 1) as f64;
    Ok(MeanEstimate {
        mean,
        stderr: (var / b as f64).sqrt(),
    })
}

/// Mean magnetization per site of a batch with its batch-means error.
pub fn magnetization(batch: &SampleBatch) -> Result<MeanEstimate> {
    batch_means(&batch.magnetization)
}

fn check_distribution(p: &[f64]) -> Result<()> {
    if let Some(&v) = p.iter().find(|&&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::NegativeWeight(v));
    }
    let total = p.iter().sum::<f64>();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized(total));
    }
    Ok(())
}

/// `Σ p log(p/q)`; returns `+∞` when `p` is not absolutely continuous
/// with respect to `q`.
pub fn relative_entropy_exact(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::SizeMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    check_distribution(p)?;
    check_distribution(q)?;
    let mut r = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Ok(f64::INFINITY);
        }
        r += pi * (pi / qi).ln();
    }
    Ok(r)
}

/// Relative entropy from normalized log-weights. `−∞` entries are zeros.
pub fn relative_entropy_log(log_p: &[f64], log_q: &[f64]) -> Result<f64> {
    if log_p.len() != log_q.len() {
        return Err(Error::SizeMismatch {
            expected: log_p.len(),
            got: log_q.len(),
        });
    }
    let mut r = 0.0;
    for (&lp, &lq) in log_p.iter().zip(log_q) {
        if lp == f64::NEG_INFINITY {
            continue;
        }
        if lq == f64::NEG_INFINITY {
            return Ok(f64::INFINITY);
        }
        r += lp.exp() * (lp - lq);
    }
    Ok(r)
}

/// Total variation `Σ|p − q|` and the Pinsker bound `√(2R(p|q))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CkpBound {
    pub tv: f64,
    pub sqrt_2r: f64,
}

impl CkpBound {
    pub fn holds(&self) -> bool {
        self.tv <= self.sqrt_2r * (1.0 + 1e-12) + 1e-15
    }
}

pub fn ckp_tv_bound(p: &[f64], q: &[f64]) -> Result<CkpBound> {
    let r = relative_entropy_exact(p, q)?;
    let tv = p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum();
    Ok(CkpBound {
        tv,
        sqrt_2r: (2.0 * r.max(0.0)).sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntropyMethod {
    ExactEnumeration,
    ExactAPosteriori,
    McAPosteriori,
}

impl EntropyMethod {
    pub fn name(self) -> &'static str {
        match self {
            EntropyMethod::ExactEnumeration => "exact_enumeration",
            EntropyMethod::ExactAPosteriori => "exact_a_posteriori",
            EntropyMethod::McAPosteriori => "mc_a_posteriori",
        }
    }
}

/// A specific relative entropy split into its log-partition and mean-energy
/// parts, `r_per_site = log_partition_term + energy_term`.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyReport {
    pub r_per_site: f64,
    pub n_sites: usize,
    pub log_partition_term: f64,
    pub energy_term: f64,
    /// Standard error of `r_per_site`; zero for exact methods.
    pub stderr: f64,
    pub method: EntropyMethod,
    /// Small parameter of the run when the micro kernel is known.
    pub epsilon: Option<f64>,
}

impl EntropyReport {
    pub fn total(&self) -> f64 {
        self.r_per_site * self.n_sites as f64
    }

    pub fn total_stderr(&self) -> f64 {
        self.stderr * self.n_sites as f64
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }
}

/// `ε = βq sup|V′|/L` with unit constant, `sup|V′|` read off the kernel table.
pub fn model_epsilon(model: &MicroModel, q: usize, beta: f64) -> Result<f64> {
    Ok(epsilon_diag(
        beta,
        q,
        model.kernel().range(),
        model.kernel().profile_slope(),
        1.0,
    )?
    .epsilon)
}

/// Exact `R(μ̄ᵖ | μ∘F⁻¹)/N` for `p ∈ {cg0, cg2}` by enumerating both the
/// micro and the coarse state spaces.
pub fn scheme_entropy_exact(
    model: &MicroModel,
    q: usize,
    beta: f64,
    scheme: Scheme,
    mode: BetaMode,
) -> Result<EntropyReport> {
    let part = CoarsePartition::new(model.n_sites(), q)?;
    let hbar = exact_kadanoff_all(model, &part, beta)?;
    let exact = enumerate_coarse(&part, |a| Ok(beta * hbar[a.index() as usize]))?;
    let (measure, energy): (EnumeratedMeasure, Vec<f64>) = match scheme {
        Scheme::Micro => {
            return Err(Error::invalid(
                "relative entropy is defined for the coarse schemes",
            ))
        }
        Scheme::Cg0 => {
            let cm = crate::coarse::CoarseModel::from_micro(model, q, beta)?;
            let e = coarse_values(&part, |a| cm.h0_energy(a).map(|v| beta * v))?;
            (enumerate_coarse(&part, |a| Ok(e[a.index() as usize]))?, e)
        }
        Scheme::Cg2 => {
            let cm = CorrectedModel::from_micro(model, q, beta, mode)?;
            let e = coarse_values(&part, |a| cm.reduced_energy(a))?;
            (enumerate_coarse(&part, |a| Ok(e[a.index() as usize]))?, e)
        }
    };
    let n = model.n_sites() as f64;
    let r = relative_entropy_log(measure.log_weights(), exact.log_weights())?;
    let log_partition_term = (exact.log_z() - measure.log_z()) / n;
    let energy_term = measure.expectation(|i| beta * hbar[i] - energy[i]) / n;
    Ok(EntropyReport {
        r_per_site: r / n,
        n_sites: model.n_sites(),
        log_partition_term,
        energy_term,
        stderr: 0.0,
        method: EntropyMethod::ExactEnumeration,
        epsilon: Some(model_epsilon(model, q, beta)?),
    })
}

fn coarse_values(
    part: &CoarsePartition,
    f: impl Fn(&CoarseConfig) -> Result<f64>,
) -> Result<Vec<f64>> {
    let count = part.state_count();
    if count > crate::oracles::COARSE_STATE_CAP {
        return Err(Error::StateSpaceTooLarge {
            states: count,
            cap: crate::oracles::COARSE_STATE_CAP,
        });
    }
    (0..count as u64)
        .map(|i| f(&CoarseConfig::from_index(i, part.m_cells(), part.q())))
        .collect()
}

/// `E[D] + log E[e^{−D}]` with a block-jackknife standard error.
pub fn a_posteriori_from_residua(d: &[f64]) -> Result<MeanEstimate> {
    if d.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("residuum values must be finite"));
    }
    let shift = d.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(-v));
    let blocks = block_bounds(d.len(), batch_count(d.len()));
    let sums: Vec<(f64, f64, usize)> = blocks
        .iter()
        .map(|&(lo, hi)| {
            let s = d[lo..hi].iter().sum::<f64>();
            let t = d[lo..hi].iter().map(|&v| (-v - shift).exp()).sum::<f64>();
            (s, t, hi - lo)
        })
        .collect();
    let functional = |skip: Option<usize>| {
        let (mut s, mut t, mut n) = (0.0, 0.0, 0usize);
        for (b, &(sb, tb, nb)) in sums.iter().enumerate() {
            if Some(b) != skip {
                s += sb;
                t += tb;
                n += nb;
            }
        }
        s / n as f64 + shift + (t / n as f64).ln()
    };
    let mean = functional(None);
    let b = sums.len();
    if b < 2 {
        return Ok(MeanEstimate { mean, stderr: 0.0 });
    }
    let loo: Vec<f64> = (0..b).map(|k| functional(Some(k))).collect();
    let lbar = loo.iter().sum::<f64>() / b as f64;
    let var = (b - 1) as f64 / b as f64 * loo.iter().map(|v| (v - lbar).powi(2)).sum::<f64>();
    Ok(MeanEstimate {
        mean,
        stderr: var.sqrt(),
    })
}

fn report_from_residua(
    d: &[f64],
    weights: Option<&EnumeratedMeasure>,
    model: &CorrectedModel,
    method: EntropyMethod,
) -> Result<EntropyReport> {
    let part = model.coarse().partition();
    let n = part.n_sites() as f64;
    let (est, ed) = match weights {
        None => (
            a_posteriori_from_residua(d)?,
            d.iter().sum::<f64>() / d.len() as f64,
        ),
        Some(mu) => {
            let ed = mu.expectation(|i| d[i]);
            let shift = d.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(-v));
            let lme = shift + mu.expectation(|i| (-d[i] - shift).exp()).ln();
            (
                MeanEstimate {
                    mean: ed + lme,
                    stderr: 0.0,
                },
                ed,
            )
        }
    };
    Ok(EntropyReport {
        r_per_site: est.mean / n,
        n_sites: part.n_sites(),
        log_partition_term: (est.mean - ed) / n,
        energy_term: ed / n,
        stderr: est.stderr / n,
        method,
        epsilon: None,
    })
}

/// A posteriori estimate from the coarse snapshots of a cg0 chain.
pub fn a_posteriori_mc(batch: &SampleBatch, model: &CorrectedModel) -> Result<EntropyReport> {
    if batch.scheme != Scheme::Cg0 {
        return Err(Error::invalid(
            "the a posteriori estimate needs samples of the cg0 measure",
        ));
    }
    if batch.snapshots.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let d = batch
        .snapshots
        .iter()
        .map(|s| match s {
            State::Cells(a) => model.residuum(a),
            State::Spins(_) => Err(Error::invalid("snapshot is not a coarse configuration")),
        })
        .collect::<Result<Vec<f64>>>()?;
    report_from_residua(&d, None, model, EntropyMethod::McAPosteriori)
}

/// The same functional evaluated exactly over the enumerated cg0 measure.
pub fn a_posteriori_exact(model: &CorrectedModel) -> Result<EntropyReport> {
    let part = model.coarse().partition();
    let beta = model.beta();
    let e0 = coarse_values(part, |a| model.coarse().h0_energy(a).map(|v| beta * v))?;
    let mu0 = enumerate_coarse(part, |a| Ok(e0[a.index() as usize]))?;
    let d = coarse_values(part, |a| model.residuum(a))?;
    report_from_residua(&d, Some(&mu0), model, EntropyMethod::ExactAPosteriori)
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < xs.len() && j < ys.len() {
        let v = if xs[i] <= ys[j] { xs[i] } else { ys[j] };
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / xs.len() as f64 - j as f64 / ys.len() as f64).abs());
    }
    Ok(d)
}

/// Asymptotic two-sample KS critical value at level `alpha` for effective
/// sample sizes `n` and `m`.
pub fn ks_critical(n: f64, m: f64, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() * ((n + m) / (n * m)).sqrt()
}

/// Least-squares fit of `log y = intercept + slope · log x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; NaN with fewer than three points.
    pub slope_stderr: f64,
    pub points: usize,
}

impl LogLogFit {
    /// Normal-approximation confidence interval `slope ± z·stderr`.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (
            self.slope - z * self.slope_stderr,
            self.slope + z * self.slope_stderr,
        )
    }

    pub fn predict(&self, x: f64) -> f64 {
        (self.intercept + self.slope * x.ln()).exp()
    }
}

pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<LogLogFit> {
    if x.len() != y.len() {
        return Err(Error::SizeMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::invalid("a slope fit needs at least two points"));
    }
    if x.iter().chain(y).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid("log-log fit needs positive finite data"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid(
            "log-log fit needs at least two distinct abscissae",
        ));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if lx.len() > 2 {
        let rss: f64 = lx
            .iter()
            .zip(&ly)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(LogLogFit {
        slope,
        intercept,
        slope_stderr,
        points: lx.len(),
    })
}

/// Least-squares constant `c` in `y ≈ c·x^slope` on log scale.
pub fn fit_prefactor(x: &[f64], y: &[f64], slope: f64) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::invalid("prefactor fit needs matching nonempty data"));
    }
    if x.iter().chain(y).any(|&v| !(v > 0.0)) {
        return Err(Error::invalid("prefactor fit needs positive data"));
    }
    let s: f64 = x.iter().zip(y).map(|(a, b)| b.ln() - slope * a.ln()).sum();
    Ok((s / x.len() as f64).exp())
}
