//! Block-spin coarse graining.
//!
//! The ring is cut into `M = N / q` contiguous cells `C_k = {kq, …, kq+q−1}`.
//! A coarse configuration stores the occupancy `α(k)`, the number of up spins
//! in cell `k`; the block spin is `η(k) = 2α(k) − q`.

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::{Couplings, FieldSpec, MicroModel, SpinConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoarsePartition {
    n_sites: usize,
    q: usize,
    m_cells: usize,
}

impl CoarsePartition {
    pub fn new(n_sites: usize, q: usize) -> Result<Self> {
        if q == 0 || !n_sites.is_multiple_of(q) {
            return Err(Error::invalid(format!(
                "q = {q} does not divide N = {n_sites}"
            )));
        }
        let m_cells = n_sites / q;
        if m_cells < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 coarse cells, got {m_cells}"
            )));
        }
        Ok(CoarsePartition {
            n_sites,
            q,
            m_cells,
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn m_cells(&self) -> usize {
        self.m_cells
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn cell_of(&self, x: usize) -> usize {
        x / self.q
    }

    pub fn sites(&self, k: usize) -> std::ops::Range<usize> {
        k * self.q..(k + 1) * self.q
    }

    /// Number of coarse configurations, `(q+1)^M`, as a float.
    pub fn state_count(&self) -> f64 {
        ((self.q + 1) as f64).powi(self.m_cells as i32)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CoarseConfig {
    alpha: Vec<u32>,
    q: usize,
}

impl CoarseConfig {
    pub fn new(alpha: Vec<u32>, q: usize) -> Result<Self> {
        for (cell, &a) in alpha.iter().enumerate() {
            if a as usize > q {
                return Err(Error::CellBoundary { cell, alpha: a, q });
            }
        }
        Ok(CoarseConfig { alpha, q })
    }

    pub fn uniform(m: usize, q: usize, alpha: u32) -> Self {
        assert!(alpha as usize <= q);
        CoarseConfig {
            alpha: vec![alpha; m],
            q,
        }
    }

    /// Decodes the mixed-radix index used by the enumeration oracles.
    pub fn from_index(mut idx: u64, m: usize, q: usize) -> Self {
        let radix = (q + 1) as u64;
        let alpha = (0..m)
            .map(|_| {
                let a = (idx % radix) as u32;
                idx /= radix;
                a
            })
            .collect();
        CoarseConfig { alpha, q }
    }

    pub fn index(&self) -> u64 {
        let radix = (self.q + 1) as u64;
        self.alpha
            .iter()
            .rev()
            .fold(0u64, |acc, &a| acc * radix + a as u64)
    }

    pub fn alpha(&self) -> &[u32] {
        &self.alpha
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn m_cells(&self) -> usize {
        self.alpha.len()
    }

    pub fn eta(&self, k: usize) -> i64 {
        2 * self.alpha[k] as i64 - self.q as i64
    }

    pub fn etas(&self) -> Vec<i64> {
        (0..self.alpha.len()).map(|k| self.eta(k)).collect()
    }

    pub(crate) fn set(&mut self, k: usize, a: u32) {
        self.alpha[k] = a;
    }

    /// `(1/N) Σ_k η(k)`.
    pub fn magnetization(&self) -> f64 {
        let total: i64 = (0..self.alpha.len()).map(|k| self.eta(k)).sum();
        total as f64 / (self.alpha.len() * self.q) as f64
    }

    /// Global flip `α → q − α`.
    pub fn flipped(&self) -> Self {
        CoarseConfig {
            alpha: self.alpha.iter().map(|&a| self.q as u32 - a).collect(),
            q: self.q,
        }
    }

    pub fn shifted(&self, k: usize) -> Self {
        let m = self.alpha.len();
        CoarseConfig {
            alpha: (0..m).map(|i| self.alpha[(i + m - k % m) % m]).collect(),
            q: self.q,
        }
    }
}

/// The map `F`: occupancy of each cell.
pub fn coarsen(sigma: &SpinConfig, part: &CoarsePartition) -> Result<CoarseConfig> {
    if sigma.len() != part.n_sites() {
        return Err(Error::SizeMismatch {
            expected: part.n_sites(),
            got: sigma.len(),
        });
    }
    let alpha = (0..part.m_cells())
        .map(|k| {
            sigma.spins()[part.sites(k)]
                .iter()
                .filter(|&&s| s > 0)
                .count() as u32
        })
        .collect();
    Ok(CoarseConfig { alpha, q: part.q() })
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

/// Log of the binomial prior `ρ̄(η) = C(q, (η+q)/2) 2^{−q}`.
pub fn coarse_prior_logweight(eta: i64, q: usize) -> Result<f64> {
    let qi = q as i64;
    if eta.abs() > qi || (eta + qi) % 2 != 0 {
        return Err(Error::Parity { eta, q });
    }
    Ok(prior_logweight_alpha(((eta + qi) / 2) as u32, q))
}

pub fn prior_logweight_alpha(alpha: u32, q: usize) -> f64 {
    ln_binomial(q, alpha as usize) - q as f64 * std::f64::consts::LN_2
}

/// Conditional moments of a cell holding `α` up spins out of `q`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellMoments {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
}

/// `E_order(α) = E[σ(x_1)…σ(x_order) | α]` for distinct sites of one cell.
pub fn moment(order: usize, alpha: u32, q: usize) -> Result<f64> {
    if order == 0 || order > 4 || q < order || alpha as usize > q {
        return Err(Error::UndefinedMoment { order, q });
    }
    let a = alpha as f64;
    let w = (q - alpha as usize) as f64;
    let qf = q as f64;
    let value = match order {
        1 => (2.0 * a - qf) / qf,
        2 => (a * (a - 1.0) - 2.0 * a * w + w * (w - 1.0)) / (qf * (qf - 1.0)),
        3 => {
            (a * (a - 1.0) * (a - 2.0) - 3.0 * a * (a - 1.0) * w + 3.0 * a * (w - 1.0) * w
                - (w - 2.0) * (w - 1.0) * w)
                / (qf * (qf - 1.0) * (qf - 2.0))
        }
        _ => {
            (a * (a - 1.0) * (a - 2.0) * (a - 3.0) - 4.0 * a * (a - 1.0) * (a - 2.0) * w
                + 6.0 * a * (a - 1.0) * (w - 1.0) * w
                - 4.0 * a * (w - 2.0) * (w - 1.0) * w
                + w * (w - 1.0) * (w - 2.0) * (w - 3.0))
                / (qf * (qf - 1.0) * (qf - 2.0) * (qf - 3.0))
        }
    };
    Ok(value)
}

/// All four moments; needs `q ≥ 4`.
pub fn conditional_moments(alpha: u32, q: usize) -> Result<CellMoments> {
    Ok(CellMoments {
        e1: moment(1, alpha, q)?,
        e2: moment(2, alpha, q)?,
        e3: moment(3, alpha, q)?,
        e4: moment(4, alpha, q)?,
    })
}

/// Lookup table of `E_1..E_4` for every `α ∈ 0..=q`. Orders that are
/// undefined for the given `q` are stored as NaN.
#[derive(Clone, Debug)]
pub struct MomentTable {
    q: usize,
    rows: Vec<[f64; 4]>,
}

impl MomentTable {
    pub fn new(q: usize) -> Self {
        let rows = (0..=q as u32)
            .map(|a| {
                let mut row = [f64::NAN; 4];
                for (i, slot) in row.iter_mut().enumerate() {
                    if let Ok(v) = moment(i + 1, a, q) {
                        *slot = v;
                    }
                }
                row
            })
            .collect();
        MomentTable { q, rows }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    #[inline]
    pub fn e(&self, order: usize, alpha: u32) -> f64 {
        self.rows[alpha as usize][order - 1]
    }
}

/// Cell-averaged kernel `J̄` indexed by coarse displacement modulo `M`;
/// index 0 is the same-cell value `J̄(0)`.
#[derive(Clone, Debug)]
pub struct CoarseKernel {
    part: CoarsePartition,
    jbar: Vec<f64>,
    offsets: Vec<usize>,
}

impl CoarseKernel {
    pub fn partition(&self) -> &CoarsePartition {
        &self.part
    }

    /// `J̄(r)` for coarse displacement `r ≠ 0 (mod M)`.
    pub fn jbar(&self, r: usize) -> f64 {
        self.jbar[r % self.part.m_cells()]
    }

    /// Same-cell average `J̄(0)`; undefined for `q = 1`.
    pub fn jbar0(&self) -> Result<f64> {
        if self.part.q() < 2 {
            return Err(Error::invalid("J̄(0) is undefined for q = 1"));
        }
        Ok(self.jbar[0])
    }

    /// Nonzero coarse displacements in `1..M` (both directions listed).
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn table(&self) -> &[f64] {
        &self.jbar
    }
}

/// Block averages of the resolved couplings.
pub fn coarse_kernel(couplings: &Couplings, part: &CoarsePartition) -> Result<CoarseKernel> {
    if couplings.n_sites() != part.n_sites() {
        return Err(Error::SizeMismatch {
            expected: part.n_sites(),
            got: couplings.n_sites(),
        });
    }
    let (q, m) = (part.q(), part.m_cells());
    let mut jbar = vec![0.0; m];
    for (r, slot) in jbar.iter_mut().enumerate() {
        let mut sum = 0.0;
        for x in part.sites(0) {
            for y in part.sites(r) {
                if x != y {
                    sum += couplings.between(x, y);
                }
            }
        }
        *slot = if r == 0 {
            if q > 1 {
                sum / (q * (q - 1)) as f64
            } else {
                0.0
            }
        } else {
            sum / (q * q) as f64
        };
    }
    let offsets = (1..m).filter(|&r| jbar[r] != 0.0).collect();
    Ok(CoarseKernel {
        part: *part,
        jbar,
        offsets,
    })
}

/// Field term of a coarse Hamiltonian as a function of cell and occupancy.
#[derive(Clone, Debug, PartialEq)]
pub enum CoarseField {
    /// `h Σ_k η(k)`.
    Uniform(f64),
    /// `Σ_k h_k η(k)`.
    PerCell(Vec<f64>),
    /// Tabulated `h̄(k, α)`, row-major over cells.
    Effective { q: usize, table: Vec<f64> },
}

impl CoarseField {
    #[inline]
    pub fn value(&self, k: usize, alpha: u32, q: usize) -> f64 {
        let eta = 2.0 * alpha as f64 - q as f64;
        match self {
            CoarseField::Uniform(h) => h * eta,
            CoarseField::PerCell(h) => h[k] * eta,
            CoarseField::Effective { q, table } => table[k * (q + 1) + alpha as usize],
        }
    }

    pub fn max_abs_step(&self, q: usize) -> f64 {
        match self {
            CoarseField::Uniform(h) => 2.0 * h.abs(),
            CoarseField::PerCell(h) => 2.0 * h.iter().fold(0.0f64, |a, v| a.max(v.abs())),
            CoarseField::Effective { table, .. } => table
                .chunks(q + 1)
                .flat_map(|row| row.windows(2).map(|w| (w[1] - w[0]).abs()))
                .fold(0.0, f64::max),
        }
    }
}

/// Largest cell size for which the general effective field is enumerated.
pub const EFFECTIVE_FIELD_MAX_Q: usize = 20;

/// Coarse-grains an external field: `exp(−β h̄(k, η)) = E[exp(−β Σ_{x∈C_k} h(x)σ(x)) | η(k)]`.
///
/// Fields constant on every cell are passed through exactly as `h_k η(k)`;
/// anything else is enumerated over the `2^q` cell patterns.
pub fn effective_field(h: &FieldSpec, part: &CoarsePartition, beta: f64) -> Result<CoarseField> {
    h.check(part.n_sites())?;
    let per_site = match h {
        FieldSpec::Uniform(h0) => return Ok(CoarseField::Uniform(*h0)),
        FieldSpec::PerSite(v) => v,
    };
    let q = part.q();
    let cell_constant: Option<Vec<f64>> = (0..part.m_cells())
        .map(|k| {
            let vals = &per_site[part.sites(k)];
            vals.iter().all(|&v| v == vals[0]).then_some(vals[0])
        })
        .collect();
    if let Some(hk) = cell_constant {
        return Ok(CoarseField::PerCell(hk));
    }
    if q > EFFECTIVE_FIELD_MAX_Q {
        return Err(Error::invalid(format!(
            "effective field enumeration needs q ≤ {EFFECTIVE_FIELD_MAX_Q}, got {q}"
        )));
    }
    let mut table = vec![0.0; part.m_cells() * (q + 1)];
    for k in 0..part.m_cells() {
        let hs = &per_site[part.sites(k)];
        // Per occupancy: log-sum-exp of −β E_h, and plain sums for β → 0.
        let mut lse = vec![f64::NEG_INFINITY; q + 1];
        let mut mean = vec![0.0; q + 1];
        let mut count = vec![0.0; q + 1];
        for bits in 0u32..(1 << q) {
            let a = bits.count_ones() as usize;
            let e: f64 = (0..q)
                .map(|i| if (bits >> i) & 1 == 1 { hs[i] } else { -hs[i] })
                .sum();
            lse[a] = log_add(lse[a], -beta * e);
            mean[a] += e;
            count[a] += 1.0;
        }
        for a in 0..=q {
            table[k * (q + 1) + a] = if beta.abs() < 1e-8 {
                mean[a] / count[a]
            } else {
                -(lse[a] - count[a].ln()) / beta
            };
        }
    }
    Ok(CoarseField::Effective { q, table })
}

pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Coarse system for Scheme 1: partition, averaged kernel and coarse field.
#[derive(Clone, Debug)]
pub struct CoarseModel {
    part: CoarsePartition,
    kernel: CoarseKernel,
    field: CoarseField,
    moments: MomentTable,
}

impl CoarseModel {
    pub fn new(part: CoarsePartition, kernel: CoarseKernel, field: CoarseField) -> Result<Self> {
        if kernel.partition() != &part {
            return Err(Error::invalid(
                "coarse kernel was built for a different partition",
            ));
        }
        if let CoarseField::PerCell(h) = &field {
            if h.len() != part.m_cells() {
                return Err(Error::SizeMismatch {
                    expected: part.m_cells(),
                    got: h.len(),
                });
            }
        }
        Ok(CoarseModel {
            part,
            kernel,
            field,
            moments: MomentTable::new(part.q()),
        })
    }

    /// Coarse-grains a microscopic model at level `q`; `beta` only matters
    /// for fields that vary inside a cell.
    pub fn from_micro(micro: &MicroModel, q: usize, beta: f64) -> Result<Self> {
        let part = CoarsePartition::new(micro.n_sites(), q)?;
        let kernel = coarse_kernel(micro.couplings(), &part)?;
        let field = effective_field(micro.field(), &part, beta)?;
        CoarseModel::new(part, kernel, field)
    }

    pub fn partition(&self) -> &CoarsePartition {
        &self.part
    }

    pub fn kernel(&self) -> &CoarseKernel {
        &self.kernel
    }

    pub fn field(&self) -> &CoarseField {
        &self.field
    }

    pub fn moments(&self) -> &MomentTable {
        &self.moments
    }

    pub fn with_field(&self, field: CoarseField) -> Result<Self> {
        CoarseModel::new(self.part, self.kernel.clone(), field)
    }

    fn check(&self, alpha: &CoarseConfig) -> Result<()> {
        if alpha.m_cells() != self.part.m_cells() {
            return Err(Error::SizeMismatch {
                expected: self.part.m_cells(),
                got: alpha.m_cells(),
            });
        }
        if alpha.q() != self.part.q() {
            return Err(Error::invalid(format!(
                "configuration has q = {}, model q = {}",
                alpha.q(),
                self.part.q()
            )));
        }
        Ok(())
    }

    /// `H̄⁽⁰⁾(η)`.
    pub fn h0_energy(&self, alpha: &CoarseConfig) -> Result<f64> {
        self.h0_energy_counted(alpha).map(|(e, _)| e)
    }

    /// `H̄⁽⁰⁾(η)` together with the number of coarse-kernel reads.
    pub fn h0_energy_counted(&self, alpha: &CoarseConfig) -> Result<(f64, u64)> {
        self.check(alpha)?;
        let (q, m) = (self.part.q(), self.part.m_cells());
        let jbar0 = if q > 1 { self.kernel.jbar[0] } else { 0.0 };
        let mut accesses = 0u64;
        let mut e = 0.0;
        for k in 0..m {
            let ek = alpha.eta(k) as f64;
            let mut local = 0.0;
            for &r in &self.kernel.offsets {
                local += self.kernel.jbar[r] * alpha.eta((k + r) % m) as f64;
            }
            accesses += self.kernel.offsets.len() as u64 + (q > 1) as u64;
            e += -0.5 * ek * local - 0.5 * jbar0 * (ek * ek - q as f64)
                + self.field.value(k, alpha.alpha[k], q);
        }
        Ok((e, accesses))
    }

    /// `H̄⁽⁰⁾(α + direction·δ_k) − H̄⁽⁰⁾(α)`.
    pub fn h0_energy_delta(&self, alpha: &CoarseConfig, k: usize, direction: i32) -> Result<f64> {
        self.check(alpha)?;
        check_move(alpha, k, direction)?;
        Ok(self.h0_delta_unchecked(alpha, k, direction))
    }

    #[inline]
    pub(crate) fn h0_delta_unchecked(&self, alpha: &CoarseConfig, k: usize, direction: i32) -> f64 {
        let (q, m) = (self.part.q(), self.part.m_cells());
        let jbar0 = if q > 1 { self.kernel.jbar[0] } else { 0.0 };
        let d = direction as f64;
        let ek = alpha.eta(k) as f64;
        let mut local = 0.0;
        for &r in &self.kernel.offsets {
            local += self.kernel.jbar[r] * alpha.eta((k + r) % m) as f64;
        }
        let a = alpha.alpha[k];
        let a_new = (a as i64 + direction as i64) as u32;
        -2.0 * d * local - 0.5 * jbar0 * (4.0 * d * ek + 4.0) + self.field.value(k, a_new, q)
            - self.field.value(k, a, q)
    }

    /// Bound on `|ΔH̄⁽⁰⁾|` over all single-cell moves.
    pub fn max_abs_h0_delta(&self) -> f64 {
        let q = self.part.q() as f64;
        let jbar0 = if self.part.q() > 1 {
            self.kernel.jbar[0].abs()
        } else {
            0.0
        };
        let row: f64 = self
            .kernel
            .offsets
            .iter()
            .map(|&r| self.kernel.jbar[r].abs())
            .sum();
        2.0 * q * row + jbar0 * (2.0 * q + 2.0) + self.field.max_abs_step(self.part.q())
    }
}

pub(crate) fn check_move(alpha: &CoarseConfig, k: usize, direction: i32) -> Result<()> {
    if k >= alpha.m_cells() {
        return Err(Error::OutOfRange {
            index: k,
            len: alpha.m_cells(),
        });
    }
    let a = alpha.alpha[k] as i64 + direction as i64;
    if direction.abs() != 1 || a < 0 || a > alpha.q() as i64 {
        return Err(Error::CellBoundary {
            cell: k,
            alpha: alpha.alpha[k],
            q: alpha.q(),
        });
    }
    Ok(())
}

/// Draws `σ` with `F(σ) = α` from the conditional prior: each cell gets a
/// uniformly random placement of its `α(k)` up spins.
pub fn sample_conditional<R: Rng + ?Sized>(alpha: &CoarseConfig, rng: &mut R) -> SpinConfig {
    let q = alpha.q();
    let mut spins = vec![-1i8; alpha.m_cells() * q];
    for (k, &a) in alpha.alpha().iter().enumerate() {
        for i in index::sample(rng, q, a as usize) {
            spins[k * q + i] = 1;
        }
    }
    SpinConfig::new(spins).expect("spins are ±1")
}
