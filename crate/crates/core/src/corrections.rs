//! Second-cumulant corrections to the block-averaged Hamiltonian.
//!
//! With `E_kl(x, y) = J(x−y) − J̄(k, l)` the fluctuation of the coupling
//! around its cell average, the corrections are built from
//!
//! * `j¹(k,l) = Σ_{x∈C_k, y∈C_l} E²`
//! * `j²(k,l) = Σ_{x∈C_k} (Σ_{y∈C_l} E)²`
//! * `j²(k₁,k₂,k₃) = Σ_{y∈C_{k₂}} (Σ_{x∈C_{k₁}} E)(Σ_{z∈C_{k₃}} E)`
//!
//! where same-cell sums exclude `x = y`. All three are tabulated by coarse
//! displacement modulo `M`.

use crate::coarse::{check_move, CoarseConfig, CoarseModel, CoarsePartition, MomentTable};
use crate::error::{Error, Result};
use crate::lattice::Couplings;

/// Where `β` enters the sampled Scheme 2 weight.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum BetaMode {
    /// `exp(−β[H̄⁽⁰⁾ + H̄⁽¹⁾ + H̄⁽²⁾])`; the corrections already carry one `β`.
    #[default]
    UniformBeta,
    /// `exp(−βH̄⁽⁰⁾ − H̄⁽¹⁾ − H̄⁽²⁾)`.
    PaperScheme2,
}

impl BetaMode {
    /// Factor multiplying `H̄⁽¹⁾ + H̄⁽²⁾` in the exponent.
    pub fn weight(self, beta: f64) -> f64 {
        match self {
            BetaMode::UniformBeta => beta,
            BetaMode::PaperScheme2 => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BetaMode::UniformBeta => "uniform_beta",
            BetaMode::PaperScheme2 => "paper_scheme2",
        }
    }
}

impl std::str::FromStr for BetaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform_beta" => Ok(BetaMode::UniformBeta),
            "paper_scheme2" => Ok(BetaMode::PaperScheme2),
            _ => Err(Error::invalid(format!("unknown beta mode {s:?}"))),
        }
    }
}

/// Kernel moment tables for one partition.
#[derive(Clone, Debug)]
pub struct KernelMoments {
    q: usize,
    m: usize,
    j1: Vec<f64>,
    j2: Vec<f64>,
    /// `j²(k, k, k+r)`.
    jc: Vec<f64>,
    /// Dense `M × M` table of `j²(m+r₁, m, m+r₂)`.
    j2t: Vec<f64>,
    /// Coarse displacements `r ≠ 0` with a nonzero fluctuation.
    active: Vec<usize>,
    /// `(r₁, r₂, j²)` for distinct active displacements with nonzero triple moment.
    triples: Vec<(usize, usize, f64)>,
}

/// Relative size below which a fluctuation `J − J̄` is treated as roundoff.
const SNAP: f64 = 1e-13;

pub fn kernel_moments(couplings: &Couplings, part: &CoarsePartition) -> Result<KernelMoments> {
    if part.q() < 2 {
        return Err(Error::invalid("kernel moments need q ≥ 2"));
    }
    if couplings.n_sites() != part.n_sites() {
        return Err(Error::SizeMismatch {
            expected: part.n_sites(),
            got: couplings.n_sites(),
        });
    }
    let ck = crate::coarse::coarse_kernel(couplings, part)?;
    let (q, m) = (part.q(), part.m_cells());
    let scale = couplings
        .neighbors()
        .iter()
        .fold(0.0f64, |a, &(_, c)| a.max(c.abs()));
    let fluct = |y: usize, x: usize, r: usize| -> f64 {
        let e = couplings.between(x, y) - ck.table()[r];
        if e.abs() <= SNAP * scale {
            0.0
        } else {
            e
        }
    };

    // rows[r][i] = Σ_{x∈C_r, x≠y} E(x, y) for y = i ∈ C_0.
    let mut rows = vec![vec![0.0; q]; m];
    let mut j1 = vec![0.0; m];
    for r in 0..m {
        for y in 0..q {
            for x in part.sites(r) {
                if x == y {
                    continue;
                }
                let e = fluct(y, x, r);
                rows[r][y] += e;
                j1[r] += e * e;
            }
        }
    }
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(u, v)| u * v).sum() };
    let j2: Vec<f64> = rows.iter().map(|row| dot(row, row)).collect();
    let jc: Vec<f64> = (0..m)
        .map(|r| if r == 0 { 0.0 } else { dot(&rows[0], &rows[r]) })
        .collect();
    let active: Vec<usize> = (1..m).filter(|&r| j1[r] != 0.0).collect();
    let mut j2t = vec![0.0; m * m];
    let mut triples = Vec::new();
    for &r1 in &active {
        for &r2 in &active {
            if r1 == r2 {
                continue;
            }
            let v = dot(&rows[r1], &rows[r2]);
            j2t[r1 * m + r2] = v;
            if v != 0.0 {
                triples.push((r1, r2, v));
            }
        }
    }
    Ok(KernelMoments {
        q,
        m,
        j1,
        j2,
        jc,
        j2t,
        active,
        triples,
    })
}

impl KernelMoments {
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn m_cells(&self) -> usize {
        self.m
    }

    /// `j¹(k, k+r)`; `r = 0` is the same-cell value.
    pub fn j1(&self, r: usize) -> f64 {
        self.j1[r % self.m]
    }

    /// `j²(k, k+r)`.
    pub fn j2(&self, r: usize) -> f64 {
        self.j2[r % self.m]
    }

    /// `j²(k, k, k+r)`.
    pub fn j2_kkl(&self, r: usize) -> f64 {
        self.jc[r % self.m]
    }

    /// `j²(m+r₁, m, m+r₂)` for distinct nonzero displacements.
    pub fn j2_triple(&self, r1: usize, r2: usize) -> f64 {
        self.j2t[(r1 % self.m) * self.m + r2 % self.m]
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn is_zero(&self) -> bool {
        self.j1.iter().all(|&v| v == 0.0)
    }

    fn check(&self, alpha: &CoarseConfig, mt: &MomentTable) -> Result<()> {
        if alpha.m_cells() != self.m {
            return Err(Error::SizeMismatch {
                expected: self.m,
                got: alpha.m_cells(),
            });
        }
        if alpha.q() != self.q || mt.q() != self.q {
            return Err(Error::invalid("moment tables built for a different q"));
        }
        Ok(())
    }

    fn single(&self, mt: &MomentTable, a: u32) -> f64 {
        let (e2, e4) = (mt.e(2, a), mt.e(4, a));
        4.0 * self.j2[0] * (e2 - e4) + 2.0 * self.j1[0] * (e4 + 1.0 - 2.0 * e2)
    }

    fn pair(&self, mt: &MomentTable, ak: u32, al: u32, r: usize) -> f64 {
        let (ek, el) = (mt.e(2, ak), mt.e(2, al));
        self.j1[r] * (1.0 - ek) * (1.0 - el)
            + self.j2[r] * (1.0 - ek) * el
            + self.j2[self.m - r] * ek * (1.0 - el)
    }

    /// `E[S_kk S_kl]` with `l = k + r`.
    fn cross(&self, mt: &MomentTable, ak: u32, al: u32, r: usize) -> f64 {
        2.0 * self.jc[r] * mt.e(1, al) * (mt.e(1, ak) - mt.e(3, ak))
    }

    /// `Σ_k E[(ΔJ_kk)²] + Σ_{k<l} E[(ΔJ_kl)²] + 2Σ_{k≠l} E[ΔJ_kk ΔJ_kl]`.
    fn h1_sum(&self, alpha: &CoarseConfig, mt: &MomentTable) -> f64 {
        let a = alpha.alpha();
        let m = self.m;
        let mut single = 0.0;
        let mut pairs = 0.0;
        let mut cross = 0.0;
        for k in 0..m {
            single += self.single(mt, a[k]);
            for &r in &self.active {
                let l = (k + r) % m;
                pairs += self.pair(mt, a[k], a[l], r);
                cross += self.cross(mt, a[k], a[l], r);
            }
        }
        single / 8.0 + pairs / 4.0 + cross / 2.0
    }

    /// All `H̄⁽¹⁾` terms that involve cell `k`, with `α(k) = ak`.
    fn h1_local(&self, a: &[u32], k: usize, ak: u32, mt: &MomentTable) -> f64 {
        let m = self.m;
        let mut pairs = 0.0;
        let mut cross = 0.0;
        for &r in &self.active {
            let l = (k + r) % m;
            let back = (k + m - r) % m;
            pairs += self.pair(mt, ak, a[l], r);
            cross += self.cross(mt, ak, a[l], r) + self.cross(mt, a[back], ak, r);
        }
        self.single(mt, ak) / 8.0 + pairs / 2.0 + cross / 2.0
    }

    /// `H̄⁽¹⁾(α)`; needs `q ≥ 4`.
    pub fn h1_energy(&self, alpha: &CoarseConfig, mt: &MomentTable, beta: f64) -> Result<f64> {
        self.check(alpha, mt)?;
        require_q(self.q, 4)?;
        Ok(-beta * self.h1_sum(alpha, mt))
    }

    fn h2_sum(&self, alpha: &CoarseConfig, mt: &MomentTable) -> f64 {
        let a = alpha.alpha();
        let m = self.m;
        let mut total = 0.0;
        for c in 0..m {
            let mut s = 0.0;
            for &(r1, r2, t) in &self.triples {
                s += t * mt.e(1, a[(c + r1) % m]) * mt.e(1, a[(c + r2) % m]);
            }
            total += (1.0 - mt.e(2, a[c])) * s;
        }
        total / 2.0
    }

    fn h2_local(&self, a: &[u32], k: usize, ak: u32, mt: &MomentTable) -> f64 {
        let m = self.m;
        let mut middle = 0.0;
        let mut ends = 0.0;
        for &(r1, r2, t) in &self.triples {
            middle += t * mt.e(1, a[(k + r1) % m]) * mt.e(1, a[(k + r2) % m]);
            let c = (k + m - r1) % m;
            ends += t * (1.0 - mt.e(2, a[c])) * mt.e(1, a[(c + r2) % m]);
        }
        ((1.0 - mt.e(2, ak)) * middle + 2.0 * mt.e(1, ak) * ends) / 2.0
    }

    /// `H̄⁽²⁾(α)`, the three-cell terms; needs `q ≥ 2`.
    pub fn h2_energy(&self, alpha: &CoarseConfig, mt: &MomentTable, beta: f64) -> Result<f64> {
        self.check(alpha, mt)?;
        Ok(-beta * self.h2_sum(alpha, mt))
    }

    /// `H̄⁽¹⁾ + H̄⁽²⁾` after moving `α(k)` by `direction`, minus before.
    pub fn correction_delta(
        &self,
        alpha: &CoarseConfig,
        mt: &MomentTable,
        k: usize,
        direction: i32,
        beta: f64,
    ) -> Result<f64> {
        self.check(alpha, mt)?;
        require_q(self.q, 4)?;
        check_move(alpha, k, direction)?;
        Ok(self.correction_delta_unchecked(alpha.alpha(), mt, k, direction, beta))
    }

    #[inline]
    pub(crate) fn correction_delta_unchecked(
        &self,
        a: &[u32],
        mt: &MomentTable,
        k: usize,
        direction: i32,
        beta: f64,
    ) -> f64 {
        let old = a[k];
        let new = (old as i64 + direction as i64) as u32;
        let d1 = self.h1_local(a, k, new, mt) - self.h1_local(a, k, old, mt);
        let d2 = self.h2_local(a, k, new, mt) - self.h2_local(a, k, old, mt);
        -beta * (d1 + d2)
    }

    /// Number of table reads for one full `H̄⁽¹⁾ + H̄⁽²⁾` evaluation.
    pub fn access_count(&self) -> u64 {
        (self.m * (1 + 2 * self.active.len() + self.triples.len())) as u64
    }

    /// Bound on `|Δ(H̄⁽¹⁾ + H̄⁽²⁾)| / β` over single-cell moves.
    pub fn max_abs_delta_per_beta(&self) -> f64 {
        // Every moment lies in [−1, 1]; bound each local sum term by term.
        let single = (4.0 * self.j2[0] * 2.0 + 2.0 * self.j1[0] * 4.0) / 8.0;
        let mut pairs = 0.0;
        let mut cross = 0.0;
        for &r in &self.active {
            pairs += 4.0 * self.j1[r] + 2.0 * self.j2[r] + 2.0 * self.j2[self.m - r];
            cross += 2.0 * 2.0 * 2.0 * self.jc[r].abs();
        }
        let triples: f64 = self.triples.iter().map(|t| t.2.abs()).sum();
        2.0 * (single + pairs / 2.0 + cross / 2.0 + (2.0 * triples + 4.0 * triples) / 2.0)
    }
}

fn require_q(q: usize, order: usize) -> Result<()> {
    if q < order {
        Err(Error::UndefinedMoment { order, q })
    } else {
        Ok(())
    }
}

/// The small parameter `ε = C β (q/L) sup|V′|` and `δ = q ε`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonDiag {
    pub epsilon: f64,
    pub delta: f64,
    pub beta: f64,
    pub q: usize,
    pub range: usize,
    pub sup_dv: f64,
}

pub fn epsilon_diag(beta: f64, q: usize, range: usize, sup_dv: f64, c: f64) -> Result<EpsilonDiag> {
    if !(beta >= 0.0) || q == 0 || range == 0 || !(sup_dv >= 0.0) || !(c > 0.0) {
        return Err(Error::invalid(
            "epsilon needs β ≥ 0, q ≥ 1, L ≥ 1, sup|V′| ≥ 0 and C > 0",
        ));
    }
    let epsilon = c * beta * (q as f64 / range as f64) * sup_dv;
    Ok(EpsilonDiag {
        epsilon,
        delta: q as f64 * epsilon,
        beta,
        q,
        range,
        sup_dv,
    })
}

/// Coarse model with the Scheme 2 corrections at a fixed inverse temperature.
#[derive(Clone, Debug)]
pub struct CorrectedModel {
    coarse: CoarseModel,
    km: KernelMoments,
    beta: f64,
    mode: BetaMode,
}

impl CorrectedModel {
    pub fn new(coarse: CoarseModel, km: KernelMoments, beta: f64, mode: BetaMode) -> Result<Self> {
        require_q(coarse.partition().q(), 4)?;
        if km.q() != coarse.partition().q() || km.m_cells() != coarse.partition().m_cells() {
            return Err(Error::invalid(
                "kernel moments built for a different partition",
            ));
        }
        Ok(CorrectedModel {
            coarse,
            km,
            beta,
            mode,
        })
    }

    pub fn from_micro(
        micro: &crate::lattice::MicroModel,
        q: usize,
        beta: f64,
        mode: BetaMode,
    ) -> Result<Self> {
        let coarse = CoarseModel::from_micro(micro, q, beta)?;
        let km = kernel_moments(micro.couplings(), coarse.partition())?;
        CorrectedModel::new(coarse, km, beta, mode)
    }

    pub fn coarse(&self) -> &CoarseModel {
        &self.coarse
    }

    pub fn moments(&self) -> &KernelMoments {
        &self.km
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mode(&self) -> BetaMode {
        self.mode
    }

    pub fn h1_energy(&self, alpha: &CoarseConfig) -> Result<f64> {
        self.km.h1_energy(alpha, self.coarse.moments(), self.beta)
    }

    pub fn h2_energy(&self, alpha: &CoarseConfig) -> Result<f64> {
        self.km.h2_energy(alpha, self.coarse.moments(), self.beta)
    }

    /// `H̄⁽⁰⁾ + H̄⁽¹⁾ + H̄⁽²⁾`.
    pub fn corrected_energy(&self, alpha: &CoarseConfig) -> Result<f64> {
        Ok(self.coarse.h0_energy(alpha)? + self.h1_energy(alpha)? + self.h2_energy(alpha)?)
    }

    /// `D(α)`, the correction as it appears in the exponent of the weight.
    pub fn residuum(&self, alpha: &CoarseConfig) -> Result<f64> {
        Ok(self.mode.weight(self.beta) * (self.h1_energy(alpha)? + self.h2_energy(alpha)?))
    }

    /// Dimensionless energy whose Boltzmann factor is the sampled weight.
    pub fn reduced_energy(&self, alpha: &CoarseConfig) -> Result<f64> {
        Ok(self.beta * self.coarse.h0_energy(alpha)? + self.residuum(alpha)?)
    }

    pub fn reduced_delta(&self, alpha: &CoarseConfig, k: usize, direction: i32) -> Result<f64> {
        let d0 = self.coarse.h0_energy_delta(alpha, k, direction)?;
        Ok(self.beta * d0 + self.residuum_delta_unchecked(alpha, k, direction))
    }

    #[inline]
    pub(crate) fn residuum_delta_unchecked(
        &self,
        alpha: &CoarseConfig,
        k: usize,
        direction: i32,
    ) -> f64 {
        self.mode.weight(self.beta)
            * self.km.correction_delta_unchecked(
                alpha.alpha(),
                self.coarse.moments(),
                k,
                direction,
                self.beta,
            )
    }

    /// Bound on `|Δ reduced energy|` over all single-cell moves.
    pub fn max_abs_reduced_delta(&self) -> f64 {
        self.beta * self.coarse.max_abs_h0_delta()
            + self.mode.weight(self.beta) * self.beta * self.km.max_abs_delta_per_beta()
    }
}
