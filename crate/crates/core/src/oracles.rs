//! Ground truth by exhaustive enumeration and closed forms.

use std::io::Write;

use rayon::prelude::*;

use crate::coarse::{
    coarse_kernel, coarsen, log_add, moment, prior_logweight_alpha, CoarseConfig, CoarsePartition,
};
use crate::corrections::KernelMoments;
use crate::error::{Error, Result};
use crate::lattice::{MicroModel, SpinConfig};

/// Largest microscopic lattice that is enumerated.
pub const MICRO_ENUMERATION_CAP: usize = 20;

/// Largest coarse state space that is enumerated.
pub const COARSE_STATE_CAP: f64 = 4_194_304.0;

/// Below this inverse temperature the Kadanoff transform is replaced by its
/// `β → 0` limit `E[H_N | η]`.
pub const BETA_ZERO: f64 = 1e-8;

/// A finite measure stored as normalized log-probabilities, indexed by the
/// integer bit pattern (micro) or mixed-radix index (coarse).
#[derive(Clone, Debug)]
pub struct EnumeratedMeasure {
    log_weights: Vec<f64>,
    log_z: f64,
}

impl EnumeratedMeasure {
    /// Normalizes unnormalized log-weights.
    pub fn from_log_weights(mut log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.is_empty() {
            return Err(Error::invalid("empty support"));
        }
        let log_z = log_sum_exp(&log_weights);
        if !log_z.is_finite() {
            return Err(Error::invalid("log-partition function is not finite"));
        }
        for w in &mut log_weights {
            *w -= log_z;
        }
        Ok(EnumeratedMeasure { log_weights, log_z })
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    pub fn expectation(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.log_weights
            .iter()
            .enumerate()
            .map(|(i, w)| w.exp() * f(i))
            .sum()
    }

    /// Golden-file dump: `state_id,log_weight` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "state_id,log_weight")?;
        for (i, w) in self.log_weights.iter().enumerate() {
            writeln!(out, "{i},{w:.17e}")?;
        }
        Ok(())
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn check_micro(model: &MicroModel) -> Result<()> {
    let n = model.n_sites();
    if n > MICRO_ENUMERATION_CAP {
        return Err(Error::StateSpaceTooLarge {
            states: 2f64.powi(n as i32),
            cap: 2f64.powi(MICRO_ENUMERATION_CAP as i32),
        });
    }
    Ok(())
}

fn check_coarse(part: &CoarsePartition) -> Result<()> {
    if part.state_count() > COARSE_STATE_CAP {
        return Err(Error::StateSpaceTooLarge {
            states: part.state_count(),
            cap: COARSE_STATE_CAP,
        });
    }
    Ok(())
}

/// `H_N(σ)` for every bit pattern, in bit-pattern order.
pub fn micro_energies(model: &MicroModel) -> Result<Vec<f64>> {
    check_micro(model)?;
    let n = model.n_sites();
    (0..1u64 << n)
        .into_par_iter()
        .map(|bits| model.energy(&SpinConfig::from_bits(n, bits)))
        .collect()
}

/// The microscopic Gibbs measure `exp(−βH_N)/Z_N` over all `2^N` states.
pub fn enumerate_micro(model: &MicroModel, beta: f64) -> Result<EnumeratedMeasure> {
    let energies = micro_energies(model)?;
    EnumeratedMeasure::from_log_weights(energies.iter().map(|e| -beta * e).collect())
}

/// Image of a microscopic measure under the coarse map, indexed by coarse state.
pub fn pushforward(
    measure: &EnumeratedMeasure,
    part: &CoarsePartition,
) -> Result<EnumeratedMeasure> {
    check_coarse(part)?;
    let n = part.n_sites();
    if measure.len() != 1usize << n {
        return Err(Error::SizeMismatch {
            expected: 1 << n,
            got: measure.len(),
        });
    }
    let mut out = vec![f64::NEG_INFINITY; part.state_count() as usize];
    for (bits, &w) in measure.log_weights().iter().enumerate() {
        let idx = coarse_index_of_bits(bits as u64, part);
        out[idx] = log_add(out[idx], w);
    }
    EnumeratedMeasure::from_log_weights(out)
}

fn coarse_index_of_bits(bits: u64, part: &CoarsePartition) -> usize {
    let (q, m) = (part.q(), part.m_cells());
    let mask = (1u64 << q) - 1;
    let mut idx = 0usize;
    for k in (0..m).rev() {
        idx = idx * (q + 1) + ((bits >> (k * q)) & mask).count_ones() as usize;
    }
    idx
}

/// Per-fibre statistics of `H_N` over `{σ : F(σ) = η}`.
#[derive(Clone, Copy, Debug)]
struct Fibre {
    lse: f64,
    sum: f64,
    count: f64,
}

fn fibres(model: &MicroModel, part: &CoarsePartition, beta: f64) -> Result<Vec<Fibre>> {
    check_coarse(part)?;
    if model.n_sites() != part.n_sites() {
        return Err(Error::SizeMismatch {
            expected: part.n_sites(),
            got: model.n_sites(),
        });
    }
    let energies = micro_energies(model)?;
    let mut out = vec![
        Fibre {
            lse: f64::NEG_INFINITY,
            sum: 0.0,
            count: 0.0
        };
        part.state_count() as usize
    ];
    for (bits, &e) in energies.iter().enumerate() {
        let f = &mut out[coarse_index_of_bits(bits as u64, part)];
        f.lse = log_add(f.lse, -beta * e);
        f.sum += e;
        f.count += 1.0;
    }
    Ok(out)
}

fn kadanoff_value(f: &Fibre, beta: f64) -> f64 {
    if beta.abs() < BETA_ZERO {
        f.sum / f.count
    } else {
        -(f.lse - f.count.ln()) / beta
    }
}

/// The exact coarse Hamiltonian `H̄(η) = −(1/β) log E[exp(−βH_N) | η]` for
/// every coarse state, indexed by mixed-radix index.
pub fn exact_kadanoff_all(
    model: &MicroModel,
    part: &CoarsePartition,
    beta: f64,
) -> Result<Vec<f64>> {
    Ok(fibres(model, part, beta)?
        .iter()
        .map(|f| kadanoff_value(f, beta))
        .collect())
}

/// `E[H_N | η]` for every coarse state.
pub fn conditional_mean_energy_all(model: &MicroModel, part: &CoarsePartition) -> Result<Vec<f64>> {
    Ok(fibres(model, part, 0.0)?
        .iter()
        .map(|f| f.sum / f.count)
        .collect())
}

/// All bit masks of `q` bits with `a` set.
pub fn placements(q: usize, a: u32) -> Vec<u32> {
    (0u32..1 << q).filter(|b| b.count_ones() == a).collect()
}

/// Exact `H̄(η)` for one coarse state, enumerating only its fibre.
pub fn exact_kadanoff_hamiltonian(
    alpha: &CoarseConfig,
    model: &MicroModel,
    part: &CoarsePartition,
    beta: f64,
) -> Result<f64> {
    check_micro(model)?;
    if alpha.m_cells() != part.m_cells() || alpha.q() != part.q() {
        return Err(Error::invalid("configuration does not match the partition"));
    }
    let q = part.q();
    let per_cell: Vec<Vec<u32>> = alpha.alpha().iter().map(|&a| placements(q, a)).collect();
    let mut fibre = Fibre {
        lse: f64::NEG_INFINITY,
        sum: 0.0,
        count: 0.0,
    };
    let mut digits = vec![0usize; part.m_cells()];
    loop {
        let bits = digits.iter().enumerate().fold(0u64, |acc, (k, &d)| {
            acc | (per_cell[k][d] as u64) << (k * q)
        });
        let e = model.energy(&SpinConfig::from_bits(part.n_sites(), bits))?;
        fibre.lse = log_add(fibre.lse, -beta * e);
        fibre.sum += e;
        fibre.count += 1.0;
        let mut k = 0;
        loop {
            if k == digits.len() {
                return Ok(kadanoff_value(&fibre, beta));
            }
            digits[k] += 1;
            if digits[k] < per_cell[k].len() {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
    }
}

/// Coarse measure `exp(−E(α)) Π_k ρ̄(α_k) / Z` for a reduced energy `E`.
pub fn enumerate_coarse<F>(part: &CoarsePartition, reduced_energy: F) -> Result<EnumeratedMeasure>
where
    F: Fn(&CoarseConfig) -> Result<f64> + Sync,
{
    check_coarse(part)?;
    let (q, m) = (part.q(), part.m_cells());
    let log_w: Vec<f64> = (0..part.state_count() as u64)
        .into_par_iter()
        .map(|idx| {
            let a = CoarseConfig::from_index(idx, m, q);
            let prior: f64 = a.alpha().iter().map(|&x| prior_logweight_alpha(x, q)).sum();
            Ok(prior - reduced_energy(&a)?)
        })
        .collect::<Result<_>>()?;
    EnumeratedMeasure::from_log_weights(log_w)
}

/// Conditional integrals of products of the fluctuation sums
/// `S_kl(σ) = Σ_{x∈C_k, y∈C_l, x≠y} (J(x−y) − J̄(k,l)) σ(x)σ(y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AppendixKind {
    /// `E[S_kk²]`; cells `[k]`.
    SameCellSquared,
    /// `E[S_kl²]`; cells `[k, l]`.
    PairSquared,
    /// `E[S_kk S_kl]`; cells `[k, l]`.
    SameCellTimesPair,
    /// `E[S_ab S_bc]`; cells `[a, b, c]`, `b` in the middle.
    Chain,
}

impl AppendixKind {
    pub const ALL: [AppendixKind; 4] = [
        AppendixKind::SameCellSquared,
        AppendixKind::PairSquared,
        AppendixKind::SameCellTimesPair,
        AppendixKind::Chain,
    ];

    fn cells(self) -> usize {
        match self {
            AppendixKind::SameCellSquared => 1,
            AppendixKind::PairSquared | AppendixKind::SameCellTimesPair => 2,
            AppendixKind::Chain => 3,
        }
    }

    fn max_order(self) -> usize {
        match self {
            AppendixKind::SameCellSquared => 4,
            AppendixKind::SameCellTimesPair => 3,
            AppendixKind::PairSquared | AppendixKind::Chain => 2,
        }
    }
}

/// Largest cell size accepted by the within-cell enumerations.
pub const APPENDIX_MAX_Q: usize = 10;

fn check_appendix(
    kind: AppendixKind,
    part: &CoarsePartition,
    cells: &[usize],
    alphas: &[u32],
) -> Result<()> {
    let q = part.q();
    if cells.len() != kind.cells() || alphas.len() != kind.cells() {
        return Err(Error::invalid(format!(
            "{kind:?} needs {} cells",
            kind.cells()
        )));
    }
    for i in 0..cells.len() {
        if cells[i] >= part.m_cells() {
            return Err(Error::OutOfRange {
                index: cells[i],
                len: part.m_cells(),
            });
        }
        if alphas[i] as usize > q {
            return Err(Error::CellBoundary {
                cell: cells[i],
                alpha: alphas[i],
                q,
            });
        }
        for j in 0..i {
            if cells[i] == cells[j] {
                return Err(Error::invalid("cells must be distinct"));
            }
        }
    }
    if q < kind.max_order() {
        return Err(Error::UndefinedMoment {
            order: kind.max_order(),
            q,
        });
    }
    if q > APPENDIX_MAX_Q {
        return Err(Error::invalid(format!(
            "cell enumeration needs q ≤ {APPENDIX_MAX_Q}"
        )));
    }
    Ok(())
}

/// Exact value of a conditional cell integral by enumerating the within-cell
/// placements of the involved cells.
pub fn appendix_a_enumerated(
    kind: AppendixKind,
    model: &MicroModel,
    part: &CoarsePartition,
    cells: &[usize],
    alphas: &[u32],
) -> Result<f64> {
    check_appendix(kind, part, cells, alphas)?;
    let ck = coarse_kernel(model.couplings(), part)?;
    let (q, m) = (part.q(), part.m_cells());
    let c = model.couplings();
    // Fluctuation matrix between two cells, local site indices.
    let fluct = |k: usize, l: usize| -> Vec<f64> {
        let r = (l + m - k) % m;
        let mut out = vec![0.0; q * q];
        for i in 0..q {
            for j in 0..q {
                let (x, y) = (k * q + i, l * q + j);
                if x != y {
                    out[i * q + j] = c.between(x, y) - ck.table()[r];
                }
            }
        }
        out
    };
    let spin = |mask: u32, i: usize| if (mask >> i) & 1 == 1 { 1.0 } else { -1.0 };
    let s = |e: &[f64], a: u32, b: u32| -> f64 {
        let mut total = 0.0;
        for i in 0..q {
            for j in 0..q {
                total += e[i * q + j] * spin(a, i) * spin(b, j);
            }
        }
        total
    };
    let mean = |xs: &mut dyn Iterator<Item = f64>| -> f64 {
        let (mut sum, mut n) = (0.0, 0.0);
        for x in xs {
            sum += x;
            n += 1.0;
        }
        sum / n
    };
    let value = match kind {
        AppendixKind::SameCellSquared => {
            let e = fluct(cells[0], cells[0]);
            mean(
                &mut placements(q, alphas[0])
                    .into_iter()
                    .map(|a| s(&e, a, a).powi(2)),
            )
        }
        AppendixKind::PairSquared | AppendixKind::SameCellTimesPair => {
            let ekl = fluct(cells[0], cells[1]);
            let ekk = fluct(cells[0], cells[0]);
            let pb = placements(q, alphas[1]);
            mean(&mut placements(q, alphas[0]).into_iter().flat_map(|a| {
                let (ekl, ekk) = (&ekl, &ekk);
                pb.iter().map(move |&b| {
                    let skl = s(ekl, a, b);
                    if kind == AppendixKind::PairSquared {
                        skl * skl
                    } else {
                        s(ekk, a, a) * skl
                    }
                })
            }))
        }
        AppendixKind::Chain => {
            let eab = fluct(cells[0], cells[1]);
            let ebc = fluct(cells[1], cells[2]);
            let pa = placements(q, alphas[0]);
            let pc = placements(q, alphas[2]);
            // Outer cells are independent given the middle one.
            mean(&mut placements(q, alphas[1]).into_iter().map(|b| {
                let left = mean(&mut pa.iter().map(|&a| s(&eab, a, b)));
                let right = mean(&mut pc.iter().map(|&c| s(&ebc, b, c)));
                left * right
            }))
        }
    };
    Ok(value)
}

/// The closed forms of the conditional cell integrals in terms of kernel and
/// conditional moments.
pub fn appendix_a_closed_form(
    kind: AppendixKind,
    km: &KernelMoments,
    part: &CoarsePartition,
    cells: &[usize],
    alphas: &[u32],
) -> Result<f64> {
    check_appendix(kind, part, cells, alphas)?;
    let (q, m) = (part.q(), part.m_cells());
    let e = |order: usize, i: usize| moment(order, alphas[i], q);
    let disp = |from: usize, to: usize| (cells[to] + m - cells[from]) % m;
    let value = match kind {
        AppendixKind::SameCellSquared => {
            let (e2, e4) = (e(2, 0)?, e(4, 0)?);
            4.0 * km.j2(0) * (-e4 + e2) + 2.0 * km.j1(0) * (e4 + 1.0 - 2.0 * e2)
        }
        AppendixKind::PairSquared => {
            let (ek, el) = (e(2, 0)?, e(2, 1)?);
            let r = disp(0, 1);
            km.j2(r) * (-2.0 * ek * el + ek + el) + km.j1(r) * (ek * el - el - ek + 1.0)
        }
        AppendixKind::SameCellTimesPair => {
            -2.0 * km.j2_kkl(disp(0, 1)) * (e(3, 0)? * e(1, 1)? - e(1, 0)? * e(1, 1)?)
        }
        AppendixKind::Chain => {
            let t = km.j2_triple(disp(1, 0), disp(1, 2));
            t * (-e(1, 0)? * e(2, 1)? * e(1, 2)? + e(1, 0)? * e(1, 2)?)
        }
    };
    Ok(value)
}

/// Expectation of `S_kl` (the cancellation identity), by enumeration; `k == l`
/// is allowed.
pub fn fluctuation_mean(
    model: &MicroModel,
    part: &CoarsePartition,
    k: usize,
    l: usize,
    ak: u32,
    al: u32,
) -> Result<f64> {
    let q = part.q();
    let ck = coarse_kernel(model.couplings(), part)?;
    let m = part.m_cells();
    let r = (l + m - k) % m;
    let mut total = 0.0;
    let mut count = 0.0;
    let pk = placements(q, ak);
    let pl = if k == l { vec![0] } else { placements(q, al) };
    for &a in &pk {
        for &b in &pl {
            let b = if k == l { a } else { b };
            let mut s = 0.0;
            for i in 0..q {
                for j in 0..q {
                    let (x, y) = (k * q + i, l * q + j);
                    if x == y {
                        continue;
                    }
                    let si = if (a >> i) & 1 == 1 { 1.0 } else { -1.0 };
                    let sj = if (b >> j) & 1 == 1 { 1.0 } else { -1.0 };
                    s += (model.couplings().between(x, y) - ck.table()[r]) * si * sj;
                }
            }
            total += s;
            count += 1.0;
        }
    }
    Ok(total / count)
}

/// Infinite-lattice magnetization of the nearest-neighbour chain
/// `H = −(J0/2) Σ σ(x)σ(x+1) − h Σ σ(x)`:
/// `m = sinh(βh) / √(sinh²(βh) + exp(−2βJ0))`.
pub fn ising_nn_exact_m(beta: f64, h: f64, j0: f64) -> f64 {
    let s = (beta * h).sinh();
    s / (s * s + (-2.0 * beta * j0).exp()).sqrt()
}

/// Finite periodic chain of `n` sites, same conventions as [`ising_nn_exact_m`],
/// by the 2×2 transfer matrix.
pub fn ising_nn_transfer_m(beta: f64, h: f64, j0: f64, n: usize) -> f64 {
    let j = j0 / 2.0;
    let (bh, bj) = (beta * h, beta * j);
    let root = ((2.0 * bj).exp() * bh.sinh().powi(2) + (-2.0 * bj).exp()).sqrt();
    let lp = bj.exp() * bh.cosh() + root;
    let lm = bj.exp() * bh.cosh() - root;
    let droot = (2.0 * bj).exp() * bh.sinh() * bh.cosh() / root;
    let dlp = bj.exp() * bh.sinh() + droot;
    let dlm = bj.exp() * bh.sinh() - droot;
    let r = lm / lp;
    let rn1 = r.powi(n as i32 - 1);
    (dlp / lp + (dlm / lp) * rn1) / (1.0 + rn1 * r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Upper,
    Lower,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurieWeissRoot {
    pub m: f64,
    /// The self-consistency equation has a single root, so both branches coincide.
    pub unique: bool,
}

/// Root of `m = tanh(β(J0 m + h))` on the requested branch.
pub fn curie_weiss_m(beta: f64, h: f64, j0: f64, branch: Branch) -> Result<CurieWeissRoot> {
    if !(beta.is_finite() && h.is_finite() && j0.is_finite()) {
        return Err(Error::invalid("curie_weiss_m needs finite inputs"));
    }
    let f = |m: f64| m - (beta * (j0 * m + h)).tanh();
    const GRID: usize = 4000;
    let mut roots = Vec::new();
    let mut prev = (-1.0, f(-1.0));
    if prev.1 == 0.0 {
        roots.push(-1.0);
    }
    for i in 1..=GRID {
        let x = -1.0 + 2.0 * i as f64 / GRID as f64;
        let fx = f(x);
        if fx == 0.0 {
            roots.push(x);
        } else if prev.1 != 0.0 && prev.1.signum() != fx.signum() {
            roots.push(bisect(&f, prev.0, x));
        }
        prev = (x, fx);
    }
    if roots.is_empty() {
        // Saturation: the root sits within roundoff of ±1.
        roots.push(if f(0.0) < 0.0 { 1.0 } else { -1.0 });
    }
    let m = match branch {
        Branch::Upper => *roots.last().unwrap(),
        Branch::Lower => roots[0],
    };
    Ok(CurieWeissRoot {
        m,
        unique: roots.len() == 1,
    })
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    while b - a > 1e-13 {
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == fa.signum() {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Coarse image of a spin configuration as a mixed-radix index.
pub fn coarse_index(sigma: &SpinConfig, part: &CoarsePartition) -> Result<u64> {
    Ok(coarsen(sigma, part)?.index())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarse::{conditional_moments, CoarseModel};
    use crate::corrections::kernel_moments;
    use crate::lattice::{FieldSpec, Kernel, MicroLattice};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(n: usize, kernel: Kernel, h: f64) -> MicroModel {
        MicroModel::new(MicroLattice::new(n).unwrap(), kernel, FieldSpec::Uniform(h)).unwrap()
    }

    #[test]
    fn micro_enumeration_basics() {
        let m = model(6, Kernel::constant(1.0, 2).unwrap(), 0.3);
        let uniform = enumerate_micro(&m, 0.0).unwrap();
        for w in uniform.log_weights() {
            assert!((w + 6.0 * std::f64::consts::LN_2).abs() < 1e-12);
        }
        let mu = enumerate_micro(&m, 0.8).unwrap();
        assert!((mu.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-12);

        // N = 2 by hand, states in bit-pattern order.
        let (beta, h) = (1.3, 0.25);
        let two = model(2, Kernel::constant(1.0, 1).unwrap(), h);
        let e = |s0: f64, s1: f64| -0.5 * s0 * s1 + h * (s0 + s1);
        let raw =
            [e(-1.0, -1.0), e(1.0, -1.0), e(-1.0, 1.0), e(1.0, 1.0)].map(|x| (-beta * x).exp());
        let z: f64 = raw.iter().sum();
        let mu = enumerate_micro(&two, beta).unwrap();
        for (p, r) in mu.probabilities().iter().zip(raw) {
            assert!((p - r / z).abs() < 1e-14);
        }
        assert!((mu.log_z() - z.ln()).abs() < 1e-13);
        assert!(enumerate_micro(&model(22, Kernel::constant(1.0, 1).unwrap(), 0.0), 1.0).is_err());
    }

    #[test]
    fn kadanoff_fibre_and_full_agree() {
        let m = model(12, Kernel::from_profile(|r| 1.0 - r, 5, 1.0).unwrap(), -0.2);
        let part = CoarsePartition::new(12, 4).unwrap();
        let beta = 0.9;
        let all = exact_kadanoff_all(&m, &part, beta).unwrap();
        for idx in [0u64, 7, 31, 124, 62] {
            let a = CoarseConfig::from_index(idx, 3, 4);
            let one = exact_kadanoff_hamiltonian(&a, &m, &part, beta).unwrap();
            assert!((one - all[idx as usize]).abs() < 1e-12);
        }
        // β → 0 gives the conditional mean, which is H̄⁽⁰⁾.
        let tiny = exact_kadanoff_all(&m, &part, 1e-10).unwrap();
        let cg = CoarseModel::from_micro(&m, 4, 1.0).unwrap();
        for (idx, v) in tiny.iter().enumerate() {
            let a = CoarseConfig::from_index(idx as u64, 3, 4);
            assert!((v - cg.h0_energy(&a).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn curie_weiss_coarse_graining_is_exact() {
        let (n, q, beta) = (12, 4, 0.7);
        let m = model(n, Kernel::curie_weiss(1.4, n).unwrap(), 0.15);
        let part = CoarsePartition::new(n, q).unwrap();
        let cg = CoarseModel::from_micro(&m, q, beta).unwrap();
        let exact = exact_kadanoff_all(&m, &part, beta).unwrap();
        for (idx, v) in exact.iter().enumerate() {
            let a = CoarseConfig::from_index(idx as u64, 3, q);
            assert!((v - cg.h0_energy(&a).unwrap()).abs() < 1e-12);
        }
        for bits in 0..1u64 << n {
            let s = SpinConfig::from_bits(n, bits);
            let a = coarsen(&s, &part).unwrap();
            assert!((m.energy(&s).unwrap() - cg.h0_energy(&a).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn pushforward_matches_kadanoff_measure() {
        let m = model(
            12,
            Kernel::from_profile(|r| 1.0 - r * r, 4, 1.0).unwrap(),
            0.1,
        );
        let part = CoarsePartition::new(12, 3).unwrap();
        let beta = 1.1;
        let push = pushforward(&enumerate_micro(&m, beta).unwrap(), &part).unwrap();
        let hbar = exact_kadanoff_all(&m, &part, beta).unwrap();
        let kad = enumerate_coarse(&part, |a| Ok(beta * hbar[a.index() as usize])).unwrap();
        for (a, b) in push.log_weights().iter().zip(kad.log_weights()) {
            assert!((a.exp() - b.exp()).abs() < 1e-12);
        }
        let log_zn = enumerate_micro(&m, beta).unwrap().log_z();
        assert!((kad.log_z() - (log_zn - 12.0 * std::f64::consts::LN_2)).abs() < 1e-10);
    }

    #[test]
    fn conditional_integral_identities_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for q in [4usize, 5] {
            let n = 4 * q;
            let values = (0..2 * q).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let m = model(n, Kernel::from_table(values).unwrap(), 0.0);
            let part = CoarsePartition::new(n, q).unwrap();
            let km = kernel_moments(m.couplings(), &part).unwrap();
            for kind in AppendixKind::ALL {
                let cells: &[usize] = match kind {
                    AppendixKind::SameCellSquared => &[1],
                    AppendixKind::PairSquared | AppendixKind::SameCellTimesPair => &[1, 2],
                    AppendixKind::Chain => &[0, 1, 3],
                };
                for _ in 0..5 {
                    let alphas: Vec<u32> =
                        cells.iter().map(|_| rng.gen_range(0..=q as u32)).collect();
                    let a = appendix_a_enumerated(kind, &m, &part, cells, &alphas).unwrap();
                    let b = appendix_a_closed_form(kind, &km, &part, cells, &alphas).unwrap();
                    assert!(
                        (a - b).abs() < 1e-12 * (1.0 + a.abs()),
                        "{kind:?}: {a} vs {b}"
                    );
                }
            }
        }
        let m = model(12, Kernel::constant(1.0, 2).unwrap(), 0.0);
        let part = CoarsePartition::new(12, 3).unwrap();
        assert!(matches!(
            appendix_a_enumerated(AppendixKind::SameCellSquared, &m, &part, &[0], &[1]),
            Err(Error::UndefinedMoment { order: 4, q: 3 })
        ));
        assert!(
            appendix_a_enumerated(AppendixKind::Chain, &m, &part, &[0, 0, 1], &[1, 1, 1]).is_err()
        );
    }

    #[test]
    fn pair_squared_vanishes_for_constant_kernel() {
        let m = model(16, Kernel::curie_weiss(1.0, 16).unwrap(), 0.0);
        let part = CoarsePartition::new(16, 4).unwrap();
        let km = kernel_moments(m.couplings(), &part).unwrap();
        for a in 0..=4 {
            for b in 0..=4 {
                let x =
                    appendix_a_enumerated(AppendixKind::PairSquared, &m, &part, &[0, 1], &[a, b])
                        .unwrap();
                let y =
                    appendix_a_closed_form(AppendixKind::PairSquared, &km, &part, &[0, 1], &[a, b])
                        .unwrap();
                assert!(x.abs() < 1e-25 && y == 0.0);
            }
        }
    }

    #[test]
    fn cancellation_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for q in 2..=6usize {
            let n = 3 * q;
            let values = (0..n / 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let m = model(n, Kernel::from_table(values).unwrap(), 0.0);
            let part = CoarsePartition::new(n, q).unwrap();
            for a in 0..=q as u32 {
                for b in 0..=q as u32 {
                    assert!(fluctuation_mean(&m, &part, 0, 1, a, b).unwrap().abs() < 1e-12);
                }
                assert!(fluctuation_mean(&m, &part, 2, 2, a, a).unwrap().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn moments_from_placements() {
        let q = 6;
        for a in 0..=q as u32 {
            let ms = conditional_moments(a, q).unwrap();
            let p = placements(q, a);
            let avg = |k: usize| {
                p.iter()
                    .map(|&b| {
                        (0..k)
                            .map(|i| if (b >> i) & 1 == 1 { 1.0 } else { -1.0 })
                            .product::<f64>()
                    })
                    .sum::<f64>()
                    / p.len() as f64
            };
            assert!((avg(3) - ms.e3).abs() < 1e-12 && (avg(4) - ms.e4).abs() < 1e-12);
        }
    }

    #[test]
    fn ising_closed_form() {
        assert_eq!(ising_nn_exact_m(1.0, 0.0, 1.0), 0.0);
        let m = ising_nn_exact_m(1.0, 0.5, 1.0);
        assert!((m - 0.8169).abs() < 1e-4, "{m}");
        assert!((ising_nn_transfer_m(1.0, 0.5, 1.0, 512) - m).abs() < 1e-6);
        assert!((ising_nn_exact_m(1.0, 50.0, 1.0) - 1.0).abs() < 1e-12);
        assert!(ising_nn_exact_m(2.0, -0.3, 1.0) < 0.0);
    }

    #[test]
    fn transfer_matrix_matches_enumeration() {
        // Our Hamiltonian carries +hΣσ, so the chain at field h is the
        // closed form at −h.
        for &(n, beta, h) in &[(6usize, 0.7, 0.3), (8, 2.0, -0.1), (10, 1.0, 0.05)] {
            let m = model(n, Kernel::constant(1.0, 1).unwrap(), h);
            let mu = enumerate_micro(&m, beta).unwrap();
            let mag = mu.expectation(|bits| SpinConfig::from_bits(n, bits as u64).magnetization());
            assert!(
                (mag - ising_nn_transfer_m(beta, -h, 1.0, n)).abs() < 1e-12,
                "n={n}"
            );
        }
    }

    #[test]
    fn curie_weiss_roots() {
        let r = curie_weiss_m(0.5, 0.0, 1.0, Branch::Upper).unwrap();
        assert!(r.m.abs() < 1e-12 && r.unique);
        let up = curie_weiss_m(2.0, 0.0, 1.0, Branch::Upper).unwrap();
        let down = curie_weiss_m(2.0, 0.0, 1.0, Branch::Lower).unwrap();
        assert!((up.m - 0.957504).abs() < 1e-6 && (down.m + up.m).abs() < 1e-12 && !up.unique);
        assert!((up.m - (2.0 * up.m).tanh()).abs() < 1e-12);
        let sat = curie_weiss_m(1.0, 40.0, 1.0, Branch::Lower).unwrap();
        assert!((sat.m - 1.0).abs() < 1e-12 && sat.unique);
        let metastable = curie_weiss_m(2.0, 0.05, 1.0, Branch::Lower).unwrap();
        assert!(metastable.m < -0.9 && !metastable.unique);
    }

    #[test]
    fn golden_dump_is_stable() {
        let m = model(4, Kernel::constant(1.0, 1).unwrap(), 0.2);
        let mu = enumerate_micro(&m, 1.0).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        mu.write_csv(&mut a).unwrap();
        mu.write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert_eq!(text.lines().count(), 17);
        assert!(text.starts_with("state_id,log_weight\n0,"));
    }
}
