//! Seeded Markov chains for the microscopic and coarse Gibbs measures.
//!
//! Both chains are discrete-time: pick a site (or cell) uniformly, propose a
//! flip (or a birth/death of one up spin), and accept with `G(ΔE)/cap`, where
//! `ΔE` is the change of the dimensionless energy in the Boltzmann factor.
//! `cap` is 1 for the bounded rate functions and `G(−max|ΔE|)` for the
//! symmetric one.

use std::collections::VecDeque;
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coarse::{prior_logweight_alpha, CoarseConfig, CoarseModel};
use crate::corrections::CorrectedModel;
use crate::error::{Error, Result};
use crate::lattice::{MicroModel, SpinConfig};
use crate::oracles::{enumerate_coarse, EnumeratedMeasure};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum RateKind {
    /// `G(r) = exp(−max(r, 0))`.
    #[default]
    Metropolis,
    /// `G(r) = 1 / (1 + exp(r))`.
    Glauber,
    /// `G(r) = exp(−r/2)`.
    Symmetric,
}

impl RateKind {
    pub const ALL: [RateKind; 3] = [RateKind::Metropolis, RateKind::Glauber, RateKind::Symmetric];

    #[inline]
    pub fn g(self, r: f64) -> f64 {
        match self {
            RateKind::Metropolis => (-r.max(0.0)).exp(),
            RateKind::Glauber => {
                if r > 0.0 {
                    let e = (-r).exp();
                    e / (1.0 + e)
                } else {
                    1.0 / (1.0 + r.exp())
                }
            }
            RateKind::Symmetric => (-0.5 * r).exp(),
        }
    }

    /// Uniformization constant for moves with `|r| ≤ bound`.
    pub fn cap(self, bound: f64) -> f64 {
        match self {
            RateKind::Metropolis | RateKind::Glauber => 1.0,
            RateKind::Symmetric => self.g(-bound.abs()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RateKind::Metropolis => "metropolis",
            RateKind::Glauber => "glauber",
            RateKind::Symmetric => "symmetric",
        }
    }
}

impl std::str::FromStr for RateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "metropolis" => Ok(RateKind::Metropolis),
            "glauber" => Ok(RateKind::Glauber),
            "symmetric" => Ok(RateKind::Symmetric),
            _ => Err(Error::invalid(format!("unknown rate function {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Micro,
    Cg0,
    Cg2,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Micro => "micro",
            Scheme::Cg0 => "cg0",
            Scheme::Cg2 => "cg2",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "micro" => Ok(Scheme::Micro),
            "cg0" => Ok(Scheme::Cg0),
            "cg2" => Ok(Scheme::Cg2),
            _ => Err(Error::invalid(format!("unknown scheme {s:?}"))),
        }
    }
}

/// The Hamiltonian a chain samples.
#[derive(Clone, Debug)]
pub enum System {
    Micro(MicroModel),
    Cg0(CoarseModel),
    Cg2(CorrectedModel),
}

impl System {
    pub fn scheme(&self) -> Scheme {
        match self {
            System::Micro(_) => Scheme::Micro,
            System::Cg0(_) => Scheme::Cg0,
            System::Cg2(_) => Scheme::Cg2,
        }
    }

    pub fn n_sites(&self) -> usize {
        match self {
            System::Micro(m) => m.n_sites(),
            System::Cg0(c) => c.partition().n_sites(),
            System::Cg2(c) => c.coarse().partition().n_sites(),
        }
    }

    fn coarse(&self) -> Option<&CoarseModel> {
        match self {
            System::Micro(_) => None,
            System::Cg0(c) => Some(c),
            System::Cg2(c) => Some(c.coarse()),
        }
    }

    /// Moves per sweep: `N` sites or `M` cells.
    pub fn sweep_len(&self) -> usize {
        match self.coarse() {
            None => self.n_sites(),
            Some(c) => c.partition().m_cells(),
        }
    }

    /// Saturated configuration with every spin equal to `spin`.
    pub fn saturated(&self, spin: i8) -> State {
        match self.coarse() {
            None => State::Spins(SpinConfig::uniform(self.n_sites(), spin)),
            Some(c) => {
                let (m, q) = (c.partition().m_cells(), c.partition().q());
                State::Cells(CoarseConfig::uniform(
                    m,
                    q,
                    if spin > 0 { q as u32 } else { 0 },
                ))
            }
        }
    }

    fn check_state(&self, state: &State) -> Result<()> {
        match (self, state) {
            (System::Micro(m), State::Spins(s)) if s.len() == m.n_sites() => Ok(()),
            (System::Cg0(_) | System::Cg2(_), State::Cells(a)) => {
                let p = self.coarse().unwrap().partition();
                if a.m_cells() == p.m_cells() && a.q() == p.q() {
                    Ok(())
                } else {
                    Err(Error::invalid("coarse state does not match the partition"))
                }
            }
            _ => Err(Error::invalid("state does not match the scheme")),
        }
    }

    /// The dimensionless energy `E` of the sampled weight `exp(−E)` (times the
    /// prior for coarse schemes).
    pub fn reduced_energy(&self, state: &State, spec: &ChainSpec) -> Result<f64> {
        self.check_state(state)?;
        let paper = spec.match_paper_appendix_b;
        match (self, state) {
            (System::Micro(m), State::Spins(s)) => Ok(spec.beta * m.energy(s)?),
            (System::Cg0(c), State::Cells(a)) => Ok(coarse_scale(spec) * c.h0_energy(a)?),
            (System::Cg2(c), State::Cells(a)) => {
                if paper {
                    c.corrected_energy(a)
                } else {
                    c.reduced_energy(a)
                }
            }
            _ => unreachable!(),
        }
    }

    /// Bound on `|ΔE|` over all single moves.
    fn max_abs_reduced_delta(&self, spec: &ChainSpec) -> f64 {
        match self {
            System::Micro(m) => spec.beta.abs() * m.max_abs_delta(),
            System::Cg0(c) => coarse_scale(spec).abs() * c.max_abs_h0_delta(),
            System::Cg2(c) => {
                if spec.match_paper_appendix_b {
                    c.coarse().max_abs_h0_delta()
                        + c.beta().abs() * c.moments().max_abs_delta_per_beta()
                } else {
                    c.max_abs_reduced_delta()
                }
            }
        }
    }

    fn validate(&self, spec: &ChainSpec) -> Result<()> {
        if !spec.beta.is_finite() || spec.beta < 0.0 {
            return Err(Error::invalid(format!(
                "β must be finite and ≥ 0, got {}",
                spec.beta
            )));
        }
        if spec.n_samples > 0 && spec.thinning == 0 {
            return Err(Error::invalid("thinning must be at least one sweep"));
        }
        if let System::Cg2(c) = self {
            if c.beta() != spec.beta {
                return Err(Error::invalid(
                    "corrected model was built for a different β",
                ));
            }
        }
        Ok(())
    }
}

fn coarse_scale(spec: &ChainSpec) -> f64 {
    if spec.match_paper_appendix_b {
        1.0
    } else {
        spec.beta
    }
}

/// Configuration of a running chain.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum State {
    Spins(SpinConfig),
    Cells(CoarseConfig),
}

impl State {
    pub fn magnetization(&self) -> f64 {
        match self {
            State::Spins(s) => s.magnetization(),
            State::Cells(a) => a.magnetization(),
        }
    }

    /// Bit pattern (spins) or mixed-radix index (cells).
    pub fn index(&self) -> u64 {
        match self {
            State::Spins(s) => s.to_bits(),
            State::Cells(a) => a.index(),
        }
    }

    pub fn as_cells(&self) -> Option<&CoarseConfig> {
        match self {
            State::Cells(a) => Some(a),
            State::Spins(_) => None,
        }
    }

    fn total(&self) -> i64 {
        match self {
            State::Spins(s) => s.total(),
            State::Cells(a) => a.etas().iter().sum(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainSpec {
    pub beta: f64,
    pub rate: RateKind,
    pub n_burnin: u64,
    pub n_samples: u64,
    /// Sweeps between records.
    pub thinning: u64,
    pub seed: u64,
    /// Independent stream of the generator, e.g. a chain or replica index.
    pub stream: u64,
    pub keep_snapshots: bool,
    /// Coarse acceptance without `β`.
    pub match_paper_appendix_b: bool,
}

impl Default for ChainSpec {
    fn default() -> Self {
        ChainSpec {
            beta: 1.0,
            rate: RateKind::Metropolis,
            n_burnin: 10_000,
            n_samples: 1_000,
            thinning: 10,
            seed: 0,
            stream: 0,
            keep_snapshots: false,
            match_paper_appendix_b: false,
        }
    }
}

impl Hash for ChainSpec {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.beta.to_bits().hash(state);
        self.rate.hash(state);
        self.n_burnin.hash(state);
        self.n_samples.hash(state);
        self.thinning.hash(state);
        self.seed.hash(state);
        self.stream.hash(state);
        self.keep_snapshots.hash(state);
        self.match_paper_appendix_b.hash(state);
    }
}

/// Records of one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub scheme: Scheme,
    /// `(1/N) Σ σ` at each record.
    pub magnetization: Vec<f64>,
    /// Sweep counter (after burn-in) at each record.
    pub sweeps: Vec<u64>,
    /// Configurations at each record, when requested.
    pub snapshots: Vec<State>,
    pub accepted: u64,
    pub proposed: u64,
    /// Local energy-difference evaluations.
    pub energy_evals: u64,
    /// Hash of the chain specification and the initial state.
    pub provenance: u64,
    pub final_state: State,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.magnetization.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnetization.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Accepted,
    Rejected,
}

#[inline]
fn accept<R: Rng + ?Sized>(rate: RateKind, r: f64, cap: f64, rng: &mut R) -> bool {
    let p = rate.g(r) / cap;
    p >= 1.0 || rng.gen::<f64>() < p
}

/// One single-spin-flip proposal.
pub fn micro_step<R: Rng + ?Sized>(
    model: &MicroModel,
    sigma: &mut SpinConfig,
    beta: f64,
    rate: RateKind,
    cap: f64,
    rng: &mut R,
) -> StepOutcome {
    let x = rng.gen_range(0..sigma.len());
    let r = beta * model.delta_flip_unchecked(sigma.spins(), x);
    if accept(rate, r, cap, rng) {
        sigma.flip(x);
        StepOutcome::Accepted
    } else {
        StepOutcome::Rejected
    }
}

/// One birth-death proposal on the coarse lattice.
pub fn coarse_step<R: Rng + ?Sized>(
    system: &System,
    alpha: &mut CoarseConfig,
    spec: &ChainSpec,
    cap: f64,
    rng: &mut R,
) -> StepOutcome {
    let q = alpha.q();
    let k = rng.gen_range(0..alpha.m_cells());
    // Birth with probability (q − α)/q, death with probability α/q.
    let a = alpha.alpha()[k];
    let direction = if (rng.gen_range(0..q) as u32) < a {
        -1
    } else {
        1
    };
    let r = match system {
        System::Cg0(c) => coarse_scale(spec) * c.h0_delta_unchecked(alpha, k, direction),
        System::Cg2(c) => {
            let d0 = c.coarse().h0_delta_unchecked(alpha, k, direction);
            let dc = c.moments().correction_delta_unchecked(
                alpha.alpha(),
                c.coarse().moments(),
                k,
                direction,
                c.beta(),
            );
            if spec.match_paper_appendix_b {
                d0 + dc
            } else {
                spec.beta * d0 + c.mode().weight(c.beta()) * dc
            }
        }
        System::Micro(_) => panic!("coarse_step on a microscopic system"),
    };
    if accept(spec.rate, r, cap, rng) {
        alpha.set(k, (a as i32 + direction) as u32);
        StepOutcome::Accepted
    } else {
        StepOutcome::Rejected
    }
}

/// A chain in progress; owns its configuration and generator.
pub struct Chain<'a> {
    system: &'a System,
    spec: ChainSpec,
    rng: ChaCha8Rng,
    state: State,
    cap: f64,
    accepted: u64,
    proposed: u64,
    evals: u64,
    provenance: u64,
}

impl<'a> Chain<'a> {
    /// Starts from `initial`, or from a random configuration drawn with the
    /// chain's own generator.
    pub fn new(system: &'a System, spec: ChainSpec, initial: Option<State>) -> Result<Self> {
        system.validate(&spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(spec.stream);
        let state = match initial {
            Some(s) => {
                system.check_state(&s)?;
                s
            }
            None => {
                let sigma = SpinConfig::random(system.n_sites(), &mut rng);
                match system.coarse() {
                    None => State::Spins(sigma),
                    Some(c) => State::Cells(crate::coarse::coarsen(&sigma, c.partition())?),
                }
            }
        };
        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        system.scheme().hash(&mut hasher);
        system.n_sites().hash(&mut hasher);
        spec.hash(&mut hasher);
        state.hash(&mut hasher);
        let cap = spec.rate.cap(system.max_abs_reduced_delta(&spec));
        Ok(Chain {
            system,
            spec,
            rng,
            state,
            cap,
            accepted: 0,
            proposed: 0,
            evals: 0,
            provenance: hasher.finish(),
        })
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn spec(&self) -> &ChainSpec {
        &self.spec
    }

    pub fn step(&mut self) -> StepOutcome {
        let outcome = match (&mut self.state, self.system) {
            (State::Spins(s), System::Micro(m)) => micro_step(
                m,
                s,
                self.spec.beta,
                self.spec.rate,
                self.cap,
                &mut self.rng,
            ),
            (State::Cells(a), sys) => coarse_step(sys, a, &self.spec, self.cap, &mut self.rng),
            _ => unreachable!("state checked at construction"),
        };
        self.proposed += 1;
        self.evals += 1;
        if outcome == StepOutcome::Accepted {
            self.accepted += 1;
        }
        outcome
    }

    pub fn sweep(&mut self) {
        for _ in 0..self.system.sweep_len() {
            self.step();
        }
    }

    /// Burn-in, then `n_samples` records spaced by `thinning` sweeps.
    pub fn run(mut self) -> SampleBatch {
        for _ in 0..self.spec.n_burnin {
            self.sweep();
        }
        let n = self.system.n_sites() as f64;
        let mut batch = SampleBatch {
            scheme: self.system.scheme(),
            magnetization: Vec::with_capacity(self.spec.n_samples as usize),
            sweeps: Vec::with_capacity(self.spec.n_samples as usize),
            snapshots: Vec::new(),
            accepted: 0,
            proposed: 0,
            energy_evals: 0,
            provenance: self.provenance,
            final_state: self.state.clone(),
        };
        let mut sweeps = 0u64;
        for _ in 0..self.spec.n_samples {
            for _ in 0..self.spec.thinning {
                self.sweep();
            }
            sweeps += self.spec.thinning;
            batch.magnetization.push(self.state.total() as f64 / n);
            batch.sweeps.push(sweeps);
            if self.spec.keep_snapshots {
                batch.snapshots.push(self.state.clone());
            }
        }
        batch.accepted = self.accepted;
        batch.proposed = self.proposed;
        batch.energy_evals = self.evals;
        batch.final_state = self.state;
        batch
    }
}

pub fn run_chain(system: &System, spec: &ChainSpec, initial: Option<State>) -> Result<SampleBatch> {
    Ok(Chain::new(system, spec.clone(), initial)?.run())
}

/// Largest state space for which the transition matrix is built.
pub const MATRIX_STATE_CAP: usize = 1 << 16;

/// Sparse one-step transition matrix of a chain.
#[derive(Clone, Debug)]
pub struct TransitionMatrix {
    rows: Vec<Vec<(usize, f64)>>,
}

impl TransitionMatrix {
    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i].iter().filter(|e| e.0 == j).map(|e| e.1).sum()
    }

    pub fn max_row_sum_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.iter().map(|e| e.1).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `max |π_i T_ij − π_j T_ji|`.
    pub fn detailed_balance_error(&self, pi: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, t) in row {
                worst = worst.max((pi[i] * t - pi[j] * self.entry(j, i)).abs());
            }
        }
        worst
    }

    /// `max_j |(πT)_j − π_j|`.
    pub fn stationarity_error(&self, pi: &[f64]) -> f64 {
        let mut out = vec![0.0; pi.len()];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, t) in row {
                out[j] += pi[i] * t;
            }
        }
        out.iter()
            .zip(pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Every state reaches every other along positive entries.
    pub fn is_irreducible(&self) -> bool {
        let n = self.rows.len();
        let reach = |rows: &[Vec<usize>]| -> bool {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            while let Some(i) = queue.pop_front() {
                for &j in &rows[i] {
                    if !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
            seen.iter().all(|&s| s)
        };
        let forward: Vec<Vec<usize>> = self
            .rows
            .iter()
            .map(|r| r.iter().filter(|e| e.1 > 0.0).map(|e| e.0).collect())
            .collect();
        let mut backward = vec![Vec::new(); n];
        for (i, r) in forward.iter().enumerate() {
            for &j in r {
                backward[j].push(i);
            }
        }
        reach(&forward) && reach(&backward)
    }

    /// A positive diagonal entry makes an irreducible chain aperiodic.
    pub fn has_positive_diagonal(&self) -> bool {
        (0..self.rows.len()).any(|i| self.entry(i, i) > 0.0)
    }
}

fn enumerate_states(system: &System) -> Result<Vec<State>> {
    let count = match system.coarse() {
        None => 2f64.powi(system.n_sites() as i32),
        Some(c) => c.partition().state_count(),
    };
    if count > MATRIX_STATE_CAP as f64 {
        return Err(Error::StateSpaceTooLarge {
            states: count,
            cap: MATRIX_STATE_CAP as f64,
        });
    }
    Ok(match system.coarse() {
        None => (0..count as u64)
            .map(|b| State::Spins(SpinConfig::from_bits(system.n_sites(), b)))
            .collect(),
        Some(c) => {
            let (m, q) = (c.partition().m_cells(), c.partition().q());
            (0..count as u64)
                .map(|i| State::Cells(CoarseConfig::from_index(i, m, q)))
                .collect()
        }
    })
}

/// Exact one-step transition matrix of the chain `Chain` runs, including its
/// uniformization constant.
pub fn transition_matrix(system: &System, spec: &ChainSpec) -> Result<TransitionMatrix> {
    system.validate(spec)?;
    let states = enumerate_states(system)?;
    let cap = spec.rate.cap(system.max_abs_reduced_delta(spec));
    let mut rows = Vec::with_capacity(states.len());
    for (i, state) in states.iter().enumerate() {
        let e0 = system.reduced_energy(state, spec)?;
        let mut row = Vec::new();
        let mut stay = 1.0;
        let mut push = |j: usize, p: f64, row: &mut Vec<(usize, f64)>| {
            stay -= p;
            row.push((j, p));
        };
        match state {
            State::Spins(s) => {
                let n = s.len() as f64;
                for x in 0..s.len() {
                    let mut t = s.clone();
                    t.flip(x);
                    let r = system.reduced_energy(&State::Spins(t.clone()), spec)? - e0;
                    let p = (spec.rate.g(r) / cap).min(1.0) / n;
                    push(t.to_bits() as usize, p, &mut row);
                }
            }
            State::Cells(a) => {
                let (m, q) = (a.m_cells() as f64, a.q() as f64);
                for k in 0..a.m_cells() {
                    for direction in [1i32, -1] {
                        let ak = a.alpha()[k];
                        let weight = if direction > 0 {
                            q - ak as f64
                        } else {
                            ak as f64
                        } / q;
                        if weight == 0.0 {
                            continue;
                        }
                        let mut b = a.clone();
                        b.set(k, (ak as i32 + direction) as u32);
                        let r = system.reduced_energy(&State::Cells(b.clone()), spec)? - e0;
                        let p = weight * (spec.rate.g(r) / cap).min(1.0) / m;
                        push(b.index() as usize, p, &mut row);
                    }
                }
            }
        }
        row.push((i, stay));
        rows.push(row);
    }
    Ok(TransitionMatrix { rows })
}

/// The measure a chain is built to sample, by enumeration.
pub fn target_measure(system: &System, spec: &ChainSpec) -> Result<EnumeratedMeasure> {
    system.validate(spec)?;
    match system.coarse() {
        None => {
            let states = enumerate_states(system)?;
            let log_w = states
                .iter()
                .map(|s| system.reduced_energy(s, spec).map(|e| -e))
                .collect::<Result<Vec<f64>>>()?;
            EnumeratedMeasure::from_log_weights(log_w)
        }
        Some(c) => enumerate_coarse(c.partition(), |a| {
            system.reduced_energy(&State::Cells(a.clone()), spec)
        }),
    }
}

/// Coarse prior `Π_k ρ̄(α_k)` in log form.
pub fn coarse_log_prior(alpha: &CoarseConfig) -> f64 {
    alpha
        .alpha()
        .iter()
        .map(|&a| prior_logweight_alpha(a, alpha.q()))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrections::BetaMode;
    use crate::lattice::{FieldSpec, Kernel, MicroLattice};

    fn micro(n: usize, range: usize, h: f64) -> MicroModel {
        MicroModel::new(
            MicroLattice::new(n).unwrap(),
            Kernel::constant(1.0, range).unwrap(),
            FieldSpec::Uniform(h),
        )
        .unwrap()
    }

    #[test]
    fn rate_functions_satisfy_balance_equation() {
        for kind in RateKind::ALL {
            for i in -400..=400 {
                let r = i as f64 / 20.0;
                let lhs = kind.g(r);
                let rhs = kind.g(-r) * (-r).exp();
                assert!(
                    (lhs - rhs).abs() <= 1e-12 * lhs.max(rhs).max(1e-300),
                    "{kind:?} r={r}"
                );
            }
        }
        assert_eq!(RateKind::Metropolis.g(-3.0), 1.0);
        assert_eq!(RateKind::Glauber.g(0.0), 0.5);
        assert_eq!(RateKind::Symmetric.cap(4.0), 2f64.exp());
        assert_eq!("glauber".parse::<RateKind>().unwrap(), RateKind::Glauber);
        assert!("heat-bath".parse::<RateKind>().is_err());
    }

    #[test]
    fn micro_two_site_matrix_by_hand() {
        // H(++) = H(−−) = −1/2 and H(+−) = H(−+) = +1/2, so ΔH = ±1.
        let beta = 0.7;
        let sys = System::Micro(micro(2, 1, 0.0));
        let spec = ChainSpec {
            beta,
            ..ChainSpec::default()
        };
        let t = transition_matrix(&sys, &spec).unwrap();
        let up = (-beta).exp() / 2.0;
        assert!((t.entry(0, 1) - up).abs() < 1e-15);
        assert!((t.entry(0, 2) - up).abs() < 1e-15);
        assert!((t.entry(0, 0) - (1.0 - 2.0 * up)).abs() < 1e-15);
        assert!((t.entry(1, 0) - 0.5).abs() < 1e-15);
        assert!((t.entry(1, 3) - 0.5).abs() < 1e-15);
        assert_eq!(t.entry(1, 1), 0.0);
        assert!(t.max_row_sum_error() < 1e-14);
    }

    #[test]
    fn detailed_balance_on_small_systems() {
        for kind in RateKind::ALL {
            for &(n, l, h) in &[(3usize, 1usize, 0.2), (4, 2, -0.4), (4, 1, 0.0)] {
                let sys = System::Micro(micro(n, l, h));
                let spec = ChainSpec {
                    beta: 1.3,
                    rate: kind,
                    ..ChainSpec::default()
                };
                let t = transition_matrix(&sys, &spec).unwrap();
                let pi = target_measure(&sys, &spec).unwrap().probabilities();
                assert!(t.max_row_sum_error() < 1e-14);
                assert!(t.detailed_balance_error(&pi) < 1e-14);
                assert!(t.stationarity_error(&pi) < 1e-14);
                assert!(t.is_irreducible() && t.has_positive_diagonal());
            }
            let m = MicroModel::new(
                MicroLattice::new(12).unwrap(),
                Kernel::from_profile(|r| 1.0 - r, 5, 1.0).unwrap(),
                FieldSpec::Uniform(0.1),
            )
            .unwrap();
            for sys in [
                System::Cg0(CoarseModel::from_micro(&m, 4, 0.8).unwrap()),
                System::Cg2(CorrectedModel::from_micro(&m, 4, 0.8, BetaMode::UniformBeta).unwrap()),
            ] {
                for paper in [false, true] {
                    let spec = ChainSpec {
                        beta: 0.8,
                        rate: kind,
                        match_paper_appendix_b: paper,
                        ..ChainSpec::default()
                    };
                    let t = transition_matrix(&sys, &spec).unwrap();
                    let pi = target_measure(&sys, &spec).unwrap().probabilities();
                    assert!(t.max_row_sum_error() < 1e-14);
                    assert!(t.detailed_balance_error(&pi) < 1e-14);
                    assert!(t.stationarity_error(&pi) < 1e-13);
                    assert!(t.is_irreducible() && t.has_positive_diagonal());
                }
            }
        }
    }

    #[test]
    fn matrix_size_cap() {
        let sys = System::Micro(micro(17, 1, 0.0));
        assert!(matches!(
            transition_matrix(&sys, &ChainSpec::default()),
            Err(Error::StateSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn reproducible_and_empty_runs() {
        let sys = System::Micro(micro(32, 2, 0.1));
        let spec = ChainSpec {
            beta: 0.5,
            n_burnin: 10,
            n_samples: 50,
            thinning: 2,
            seed: 9,
            ..ChainSpec::default()
        };
        let a = run_chain(&sys, &spec, None).unwrap();
        let b = run_chain(&sys, &spec, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
        let other = run_chain(
            &sys,
            &ChainSpec {
                stream: 1,
                ..spec.clone()
            },
            None,
        )
        .unwrap();
        assert_ne!(a.magnetization, other.magnetization);
        assert_ne!(a.provenance, other.provenance);
        let empty = run_chain(
            &sys,
            &ChainSpec {
                n_samples: 0,
                ..spec
            },
            None,
        )
        .unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn zero_beta_metropolis_always_accepts() {
        let sys = System::Micro(micro(16, 2, 0.7));
        let spec = ChainSpec {
            beta: 0.0,
            n_burnin: 5,
            n_samples: 5,
            thinning: 1,
            ..ChainSpec::default()
        };
        let batch = run_chain(&sys, &spec, None).unwrap();
        assert_eq!(batch.accepted, batch.proposed);
    }

    #[test]
    fn blocked_moves_at_cell_boundaries() {
        let m = micro(8, 1, 0.0);
        let sys = System::Cg0(CoarseModel::from_micro(&m, 4, 1.0).unwrap());
        let spec = ChainSpec {
            beta: 1.0,
            ..ChainSpec::default()
        };
        let mut chain = Chain::new(&sys, spec, Some(sys.saturated(1))).unwrap();
        // A full cell can only lose a spin.
        for _ in 0..200 {
            let before = chain.state().clone();
            chain.step();
            if let (State::Cells(a), State::Cells(b)) = (&before, chain.state()) {
                for k in 0..2 {
                    if a.alpha()[k] == 4 {
                        assert!(b.alpha()[k] <= 4);
                    }
                }
            }
        }
        assert!(Chain::new(
            &sys,
            ChainSpec::default(),
            Some(State::Spins(SpinConfig::uniform(8, 1)))
        )
        .is_err());
    }

    #[test]
    fn empirical_law_of_two_site_chain() {
        let beta = 0.6;
        let sys = System::Micro(micro(2, 1, 0.3));
        let spec = ChainSpec {
            beta,
            ..ChainSpec::default()
        };
        let pi = target_measure(&sys, &spec).unwrap().probabilities();
        let mut chain = Chain::new(&sys, spec, None).unwrap();
        let steps = 1_000_000;
        let mut counts = [0usize; 4];
        for _ in 0..steps {
            chain.step();
            counts[chain.state().index() as usize] += 1;
        }
        for s in 0..4 {
            let p = counts[s] as f64 / steps as f64;
            // Correlated steps: allow a generous effective sample size.
            let sd = (pi[s] * (1.0 - pi[s]) / (steps as f64 / 10.0)).sqrt();
            assert!((p - pi[s]).abs() < 4.0 * sd, "state {s}: {p} vs {}", pi[s]);
        }
    }
}
