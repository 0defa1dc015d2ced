//! Microscopic lattice, interaction kernels and the microscopic Hamiltonian
//!
//! The lattice is a periodic chain of `N` sites. Two sites interact through
//! the kernel evaluated at their minimal-image distance, and every unordered
//! pair is counted exactly once, so
//!
//! ```text
//! H_N(σ) = −½ Σ_x Σ_{y≠x} J(|x−y|_N) σ(x) σ(y) + Σ_x h(x) σ(x)
//! ```
//!
//! Note the plus sign on the field term: a positive field favours down spins.

use rand::Rng;

use crate::error::{Error, Result};

/// Periodic one-dimensional lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MicroLattice {
    n_sites: usize,
}

impl MicroLattice {
    pub fn new(n_sites: usize) -> Result<Self> {
        if n_sites < 2 {
            return Err(Error::invalid(format!(
                "lattice needs at least 2 sites, got {n_sites}"
            )));
        }
        Ok(MicroLattice { n_sites })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// Minimal-image distance between two sites.
    pub fn distance(&self, x: usize, y: usize) -> usize {
        let d = (x + self.n_sites - y % self.n_sites) % self.n_sites;
        d.min(self.n_sites - d)
    }
}

/// Spin configuration with entries in {−1, +1}.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpinConfig {
    spins: Vec<i8>,
}

impl SpinConfig {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::invalid(format!("spin value {bad} is not ±1")));
        }
        Ok(SpinConfig { spins })
    }

    pub fn uniform(n: usize, value: i8) -> Self {
        assert!(value == 1 || value == -1);
        SpinConfig {
            spins: vec![value; n],
        }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        SpinConfig {
            spins: (0..n)
                .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
                .collect(),
        }
    }

    /// Bit `x` of `bits` set means spin `x` is up.
    pub fn from_bits(n: usize, bits: u64) -> Self {
        SpinConfig {
            spins: (0..n)
                .map(|x| if (bits >> x) & 1 == 1 { 1 } else { -1 })
                .collect(),
        }
    }

    pub fn to_bits(&self) -> u64 {
        self.spins.iter().enumerate().fold(
            0u64,
            |acc, (x, &s)| if s > 0 { acc | (1 << x) } else { acc },
        )
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn get(&self, x: usize) -> i8 {
        self.spins[x]
    }

    pub fn flip(&mut self, x: usize) {
        self.spins[x] = -self.spins[x];
    }

    /// Global spin flip σ → −σ.
    pub fn negated(&self) -> Self {
        SpinConfig {
            spins: self.spins.iter().map(|s| -s).collect(),
        }
    }

    /// Cyclic shift by `k` sites.
    pub fn shifted(&self, k: usize) -> Self {
        let n = self.spins.len();
        SpinConfig {
            spins: (0..n).map(|x| self.spins[(x + n - k % n) % n]).collect(),
        }
    }

    pub fn total(&self) -> i64 {
        self.spins.iter().map(|&s| s as i64).sum()
    }

    pub fn magnetization(&self) -> f64 {
        self.total() as f64 / self.spins.len() as f64
    }
}

/// Two-body kernel tabulated as `J(r)` for `r = 1..=L`, with `J(−r) = J(r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    values: Vec<f64>,
    profile: Option<String>,
    norm: f64,
}

impl Kernel {
    /// Kernel from an explicit table `J(1), …, J(L)`.
    pub fn from_table(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite kernel value {v}")));
        }
        let norm = 2.0 * values.iter().map(|v| v.abs()).sum::<f64>();
        Ok(Kernel {
            values,
            profile: None,
            norm,
        })
    }

    /// `J(r) = (j0 / L) V(r / L)` for `r = 1..=L`; `V` must vanish on `[1, ∞)`.
    pub fn from_profile<V: Fn(f64) -> f64>(profile: V, range: usize, j0: f64) -> Result<Self> {
        if range == 0 {
            return Err(Error::invalid("kernel range must be positive"));
        }
        let l = range as f64;
        let values = (1..=range)
            .map(|r| {
                let u = r as f64 / l;
                if u >= 1.0 {
                    0.0
                } else {
                    j0 * profile(u) / l
                }
            })
            .collect();
        Kernel::from_table(values)
    }

    /// Constant kernel `J(r) = j0 / (2L)` for `1 ≤ r ≤ L`, so that `‖J‖ = j0`.
    pub fn constant(j0: f64, range: usize) -> Result<Self> {
        if range == 0 {
            return Err(Error::invalid("kernel range must be positive"));
        }
        let mut k = Kernel::from_table(vec![j0 / (2.0 * range as f64); range])?;
        k.profile = Some("constant".into());
        Ok(k)
    }

    /// Mean-field kernel `J = j0 / N` between every pair of an `N`-site ring.
    pub fn curie_weiss(j0: f64, n_sites: usize) -> Result<Self> {
        let mut k = Kernel::from_table(vec![j0 / n_sites as f64; n_sites / 2])?;
        k.profile = Some("curie-weiss".into());
        Ok(k)
    }

    pub fn with_profile_name(mut self, name: impl Into<String>) -> Self {
        self.profile = Some(name.into());
        self
    }

    pub fn range(&self) -> usize {
        self.values.len()
    }

    pub fn profile_name(&self) -> Option<&str> {
        self.profile.as_deref()
    }

    /// `J(r)`; zero for `r = 0` and beyond the range.
    pub fn value(&self, r: usize) -> f64 {
        if r == 0 || r > self.values.len() {
            0.0
        } else {
            self.values[r - 1]
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `Σ_{r≠0} |J(r)|` over both half-axes.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Largest finite-difference slope `|J(r+1) − J(r)| · L²`, an estimate of
    /// `sup |V'|` for profile kernels.
    pub fn profile_slope(&self) -> f64 {
        let l = self.values.len() as f64;
        let mut slope: f64 = 0.0;
        for r in 1..=self.values.len() {
            slope = slope.max((self.value(r + 1) - self.value(r)).abs() * l * l);
        }
        slope
    }
}

/// Truncates a summable kernel to the smallest range whose removed tail
/// satisfies `Σ_{r>L_eff} |J(r)| ≤ delta / 2` on each half-axis.
pub fn truncate_kernel(table: &[f64], delta: f64) -> Result<(Kernel, usize)> {
    if !(delta > 0.0) {
        return Err(Error::invalid(format!(
            "truncation delta must be positive, got {delta}"
        )));
    }
    // tail[l] = Σ_{r > l} |J(r)|
    let mut tail = vec![0.0; table.len() + 1];
    for l in (0..table.len()).rev() {
        tail[l] = tail[l + 1] + table[l].abs();
    }
    let l_eff = (0..=table.len())
        .find(|&l| tail[l] <= delta / 2.0)
        .unwrap_or(table.len());
    Ok((Kernel::from_table(table[..l_eff].to_vec())?, l_eff))
}

/// External field in energy per spin.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldSpec {
    Uniform(f64),
    PerSite(Vec<f64>),
}

impl FieldSpec {
    pub fn at(&self, x: usize) -> f64 {
        match self {
            FieldSpec::Uniform(h) => *h,
            FieldSpec::PerSite(v) => v[x],
        }
    }

    pub fn check(&self, n: usize) -> Result<()> {
        match self {
            FieldSpec::PerSite(v) if v.len() != n => Err(Error::SizeMismatch {
                expected: n,
                got: v.len(),
            }),
            _ => Ok(()),
        }
    }
}

/// Kernel resolved on a concrete ring: the coupling for every displacement
/// `δ = y − x mod N` at minimal-image distance.
#[derive(Clone, Debug)]
pub struct Couplings {
    n: usize,
    table: Vec<f64>,
    neighbors: Vec<(usize, f64)>,
}

impl Couplings {
    pub fn new(lattice: MicroLattice, kernel: &Kernel) -> Self {
        let n = lattice.n_sites();
        let table: Vec<f64> = (0..n).map(|d| kernel.value(d.min(n - d))).collect();
        let neighbors = table
            .iter()
            .enumerate()
            .filter(|&(d, &c)| d != 0 && c != 0.0)
            .map(|(d, &c)| (d, c))
            .collect();
        Couplings {
            n,
            table,
            neighbors,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    /// Coupling between sites `x` and `y`.
    pub fn between(&self, x: usize, y: usize) -> f64 {
        self.table[(y + self.n - x) % self.n]
    }

    pub fn by_offset(&self, d: usize) -> f64 {
        self.table[d % self.n]
    }

    /// Nonzero `(offset, coupling)` pairs; both directions are listed.
    pub fn neighbors(&self) -> &[(usize, f64)] {
        &self.neighbors
    }

    /// `Σ_{δ} |c(δ)|` over one site's neighbourhood.
    pub fn abs_row_sum(&self) -> f64 {
        self.neighbors.iter().map(|(_, c)| c.abs()).sum()
    }
}

/// Kernel, couplings and field bundled for one microscopic system.
#[derive(Clone, Debug)]
pub struct MicroModel {
    lattice: MicroLattice,
    kernel: Kernel,
    couplings: Couplings,
    field: FieldSpec,
}

const PAIRWISE_THRESHOLD: usize = 1 << 16;

impl MicroModel {
    pub fn new(lattice: MicroLattice, kernel: Kernel, field: FieldSpec) -> Result<Self> {
        field.check(lattice.n_sites())?;
        let couplings = Couplings::new(lattice, &kernel);
        Ok(MicroModel {
            lattice,
            kernel,
            couplings,
            field,
        })
    }

    pub fn lattice(&self) -> MicroLattice {
        self.lattice
    }

    pub fn n_sites(&self) -> usize {
        self.lattice.n_sites()
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn couplings(&self) -> &Couplings {
        &self.couplings
    }

    pub fn field(&self) -> &FieldSpec {
        &self.field
    }

    pub fn with_field(&self, field: FieldSpec) -> Result<Self> {
        field.check(self.n_sites())?;
        Ok(MicroModel {
            field,
            ..self.clone()
        })
    }

    fn check(&self, sigma: &SpinConfig) -> Result<()> {
        if sigma.len() != self.n_sites() {
            return Err(Error::SizeMismatch {
                expected: self.n_sites(),
                got: sigma.len(),
            });
        }
        Ok(())
    }

    fn site_energy(&self, s: &[i8], x: usize, accesses: &mut u64) -> f64 {
        let n = s.len();
        let mut local = 0.0;
        for &(d, c) in &self.couplings.neighbors {
            local += c * s[(x + d) % n] as f64;
        }
        *accesses += self.couplings.neighbors.len() as u64;
        -0.5 * s[x] as f64 * local + self.field.at(x) * s[x] as f64
    }

    /// `H_N(σ)`.
    pub fn energy(&self, sigma: &SpinConfig) -> Result<f64> {
        self.energy_counted(sigma).map(|(e, _)| e)
    }

    /// `H_N(σ)` together with the number of kernel-table reads it took.
    pub fn energy_counted(&self, sigma: &SpinConfig) -> Result<(f64, u64)> {
        self.check(sigma)?;
        let s = sigma.spins();
        let mut accesses = 0;
        let e = if s.len() >= PAIRWISE_THRESHOLD {
            let terms: Vec<f64> = (0..s.len())
                .map(|x| self.site_energy(s, x, &mut accesses))
                .collect();
            pairwise_sum(&terms)
        } else {
            (0..s.len())
                .map(|x| self.site_energy(s, x, &mut accesses))
                .sum()
        };
        Ok((e, accesses))
    }

    /// `H_N(σ^x) − H_N(σ)` in O(L).
    pub fn delta_flip(&self, sigma: &SpinConfig, x: usize) -> Result<f64> {
        self.check(sigma)?;
        if x >= sigma.len() {
            return Err(Error::OutOfRange {
                index: x,
                len: sigma.len(),
            });
        }
        Ok(self.delta_flip_unchecked(sigma.spins(), x))
    }

    #[inline]
    pub(crate) fn delta_flip_unchecked(&self, s: &[i8], x: usize) -> f64 {
        let n = s.len();
        let mut local = 0.0;
        for &(d, c) in &self.couplings.neighbors {
            local += c * s[(x + d) % n] as f64;
        }
        let sx = s[x] as f64;
        2.0 * sx * local - 2.0 * self.field.at(x) * sx
    }

    /// Bound on `|ΔH|` over all single flips.
    pub fn max_abs_delta(&self) -> f64 {
        let hmax = match &self.field {
            FieldSpec::Uniform(h) => h.abs(),
            FieldSpec::PerSite(v) => v.iter().fold(0.0f64, |a, h| a.max(h.abs())),
        };
        2.0 * self.couplings.abs_row_sum() + 2.0 * hmax
    }
}

/// Pairwise (tree) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(n: usize, kernel: Kernel, h: FieldSpec) -> MicroModel {
        MicroModel::new(MicroLattice::new(n).unwrap(), kernel, h).unwrap()
    }

    #[test]
    fn constant_profile_kernel() {
        let k = Kernel::constant(1.0, 8).unwrap();
        assert!(k.values().iter().all(|&v| v == 1.0 / 16.0));
        assert!((k.norm() - 1.0).abs() < 1e-15);

        let k1 = Kernel::constant(1.0, 1).unwrap();
        assert_eq!(k1.values(), &[0.5]);

        let zero = Kernel::from_profile(|_| 0.0, 5, 1.0).unwrap();
        assert_eq!(zero.norm(), 0.0);
        assert!(Kernel::from_profile(|_| 1.0, 0, 1.0).is_err());
    }

    #[test]
    fn profile_kernel_follows_scaling() {
        let k = Kernel::from_profile(|r| 1.0 - r, 4, 2.0).unwrap();
        assert_eq!(
            k.values(),
            &[2.0 * 0.75 / 4.0, 2.0 * 0.5 / 4.0, 2.0 * 0.25 / 4.0, 0.0]
        );
        let recomputed: f64 = 2.0 * k.values().iter().map(|v| v.abs()).sum::<f64>();
        assert!((k.norm() - recomputed).abs() < 1e-12);
        assert!((k.profile_slope() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn truncation_of_geometric_kernel() {
        let table: Vec<f64> = (1..=30).map(|r| 0.5f64.powi(r)).collect();
        let (k, l_eff) = truncate_kernel(&table, 0.5f64.powi(8)).unwrap();
        assert_eq!(l_eff, 9);
        assert_eq!(k.range(), 9);
        let tail: f64 = table[9..].iter().sum();
        assert!(2.0 * tail <= 0.5f64.powi(8));

        let total: f64 = 2.0 * table.iter().sum::<f64>();
        let (k, l_eff) = truncate_kernel(&table, total).unwrap();
        assert_eq!((k.range(), l_eff), (0, 0));

        let finite = vec![0.3, 0.2, 0.1];
        let (k, l_eff) = truncate_kernel(&finite, 1e-300).unwrap();
        assert_eq!(l_eff, 3);
        assert_eq!(k.values(), finite.as_slice());

        assert!(truncate_kernel(&finite, 0.0).is_err());
        assert!(truncate_kernel(&finite, -1.0).is_err());
    }

    #[test]
    fn two_site_ring_by_hand() {
        let m = model(
            2,
            Kernel::constant(1.0, 1).unwrap(),
            FieldSpec::Uniform(0.0),
        );
        let up = SpinConfig::uniform(2, 1);
        assert!((m.energy(&up).unwrap() + 0.5).abs() < 1e-15);
        assert!((m.delta_flip(&up, 0).unwrap() - 1.0).abs() < 1e-15);
        let mut flipped = up.clone();
        flipped.flip(0);
        assert!((m.energy(&flipped).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn field_only_energies() {
        let h0 = 0.3;
        let m = model(
            10,
            Kernel::from_table(vec![]).unwrap(),
            FieldSpec::Uniform(h0),
        );
        let up = SpinConfig::uniform(10, 1);
        assert!((m.energy(&up).unwrap() - 10.0 * h0).abs() < 1e-12);
        assert!((m.delta_flip(&up, 3).unwrap() + 2.0 * h0).abs() < 1e-15);
    }

    #[test]
    fn errors_on_bad_input() {
        let m = model(
            8,
            Kernel::constant(1.0, 2).unwrap(),
            FieldSpec::Uniform(0.0),
        );
        assert!(matches!(
            m.energy(&SpinConfig::uniform(6, 1)),
            Err(Error::SizeMismatch {
                expected: 8,
                got: 6
            })
        ));
        assert!(matches!(
            m.delta_flip(&SpinConfig::uniform(8, 1), 8),
            Err(Error::OutOfRange { .. })
        ));
        assert!(SpinConfig::new(vec![1, 0, -1]).is_err());
        assert!(MicroLattice::new(1).is_err());
        assert!(MicroModel::new(
            MicroLattice::new(4).unwrap(),
            Kernel::constant(1.0, 1).unwrap(),
            FieldSpec::PerSite(vec![0.0; 3])
        )
        .is_err());
    }

    #[test]
    fn local_delta_matches_full_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fields: Vec<f64> = (0..37).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = model(
            37,
            Kernel::from_profile(|r| (1.0 - r) * (1.0 + r), 6, 1.3).unwrap(),
            FieldSpec::PerSite(fields),
        );
        for _ in 0..100 {
            let sigma = SpinConfig::random(37, &mut rng);
            let x = rng.gen_range(0..37);
            let mut flipped = sigma.clone();
            flipped.flip(x);
            let full = m.energy(&flipped).unwrap() - m.energy(&sigma).unwrap();
            assert!((full - m.delta_flip(&sigma, x).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn small_ring_counts_each_pair_once() {
        // On 4 sites with L = 2 the pair at distance 2 is reachable both ways.
        let k = Kernel::from_table(vec![0.7, 0.2]).unwrap();
        let m = model(4, k, FieldSpec::Uniform(0.0));
        let up = SpinConfig::uniform(4, 1);
        // 4 nearest-neighbour pairs and 2 distance-2 pairs.
        assert!((m.energy(&up).unwrap() + (4.0 * 0.7 + 2.0 * 0.2)).abs() < 1e-14);
    }

    #[test]
    fn pairwise_path_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1 << 16;
        let m = model(
            n,
            Kernel::constant(1.0, 3).unwrap(),
            FieldSpec::Uniform(0.1),
        );
        let sigma = SpinConfig::random(n, &mut rng);
        let e = m.energy(&sigma).unwrap();
        let s = sigma.spins();
        let naive: f64 = (0..n)
            .map(|x| {
                let nb: f64 = (1..=3).map(|d| s[(x + d) % n] as f64).sum();
                -(1.0 / 6.0) * s[x] as f64 * nb + 0.1 * s[x] as f64
            })
            .sum();
        assert!((e - naive).abs() < 1e-8);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_case() -> impl Strategy<Value = (Vec<f64>, Vec<bool>, usize)> {
            (
                proptest::collection::vec(-1.0f64..1.0, 1..6),
                proptest::collection::vec(any::<bool>(), 13..24),
                0usize..30,
            )
        }

        proptest! {
            #[test]
            fn flip_and_shift_symmetry((table, bits, shift) in arb_case()) {
                let n = bits.len();
                let m = model(n, Kernel::from_table(table).unwrap(), FieldSpec::Uniform(0.0));
                let sigma = SpinConfig::new(bits.iter().map(|&b| if b { 1 } else { -1 }).collect()).unwrap();
                let e = m.energy(&sigma).unwrap();
                prop_assert!((e - m.energy(&sigma.negated()).unwrap()).abs() < 1e-12);
                prop_assert!((e - m.energy(&sigma.shifted(shift)).unwrap()).abs() < 1e-12);
            }

            #[test]
            fn truncation_error_is_bounded(
                table in proptest::collection::vec(-1.0f64..1.0, 4..12),
                bits in proptest::collection::vec(any::<bool>(), 30..40),
                frac in 0.05f64..0.9,
            ) {
                let full = Kernel::from_table(table.clone()).unwrap();
                let (cut, l_eff) = truncate_kernel(&table, frac * full.norm()).unwrap();
                let n = bits.len();
                let sigma = SpinConfig::new(bits.iter().map(|&b| if b { 1 } else { -1 }).collect()).unwrap();
                let a = model(n, full.clone(), FieldSpec::Uniform(0.2)).energy(&sigma).unwrap();
                let b = model(n, cut, FieldSpec::Uniform(0.2)).energy(&sigma).unwrap();
                let removed: f64 = table[l_eff..].iter().map(|v| v.abs()).sum();
                prop_assert!((a - b).abs() / n as f64 <= removed + 1e-12);
            }
        }
    }
}
