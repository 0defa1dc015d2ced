//! Kernel-table access counts per Hamiltonian evaluation and per sweep.

use std::io::Write;

use super::config::ExperimentConfig;
use crate::coarse::{CoarseConfig, CoarseModel, CoarsePartition};
use crate::corrections::kernel_moments;
use crate::error::Result;
use crate::lattice::SpinConfig;
use crate::sampler::Scheme;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub scheme: Scheme,
    pub energy_accesses: u64,
    pub sweep_accesses: u64,
    /// Micro energy accesses divided by this scheme's.
    pub ratio_vs_micro: f64,
    /// Leading-order prediction of that ratio: `q²` for cg0, `q³/L` for cg2.
    pub predicted_ratio: f64,
}

pub fn run_bench(cfg: &ExperimentConfig) -> Result<Vec<BenchRow>> {
    let micro = cfg.micro_model(0.0)?;
    let n = cfg.n_sites;
    let (q, range) = (cfg.q as f64, cfg.range as f64);
    let (_, micro_energy) = micro.energy_counted(&SpinConfig::uniform(n, 1))?;
    let micro_sweep = (n * micro.couplings().neighbors().len()) as u64;
    let mut rows = vec![BenchRow {
        scheme: Scheme::Micro,
        energy_accesses: micro_energy,
        sweep_accesses: micro_sweep,
        ratio_vs_micro: 1.0,
        predicted_ratio: 1.0,
    }];
    let coarse = CoarseModel::from_micro(&micro, cfg.q, cfg.beta)?;
    let part = *coarse.partition();
    let m = part.m_cells();
    let (_, cg0_energy) = coarse.h0_energy_counted(&CoarseConfig::uniform(m, cfg.q, 0))?;
    let per_move = coarse.kernel().offsets().len() as u64 + (cfg.q > 1) as u64;
    let cg0_sweep = m as u64 * per_move;
    rows.push(BenchRow {
        scheme: Scheme::Cg0,
        energy_accesses: cg0_energy,
        sweep_accesses: cg0_sweep,
        ratio_vs_micro: micro_energy as f64 / cg0_energy as f64,
        predicted_ratio: q * q,
    });
    if cfg.q >= 4 {
        let km = kernel_moments(micro.couplings(), &CoarsePartition::new(n, cfg.q)?)?;
        let extra = km.access_count();
        let energy = cg0_energy + extra;
        // a local move evaluates the correction terms before and after
        let sweep = cg0_sweep + 2 * extra;
        rows.push(BenchRow {
            scheme: Scheme::Cg2,
            energy_accesses: energy,
            sweep_accesses: sweep,
            ratio_vs_micro: micro_energy as f64 / energy as f64,
            predicted_ratio: q * q * q / range.max(1.0),
        });
    }
    Ok(rows)
}

pub fn write_bench_csv<W: Write>(
    cfg: &ExperimentConfig,
    rows: &[BenchRow],
    mut out: W,
) -> Result<()> {
    writeln!(
        out,
        "scheme,n_sites,q,range,energy_accesses,sweep_accesses,ratio_vs_micro,predicted_ratio"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.scheme.name(),
            cfg.n_sites,
            cfg.q,
            cfg.range,
            r.energy_accesses,
            r.sweep_accesses,
            r.ratio_vs_micro,
            r.predicted_ratio
        )?;
    }
    Ok(())
}
