//! `reconstruct-demo`: Monte-Carlo sparse-recovery success rates for the
//! greedy (OMP) and proximal (ISTA) solvers on seeded Gaussian instances.
//!
//! OMP trials use Gaussian-magnitude sparse signals and count exact support
//! recovery; ISTA trials use unit spikes and count support recovery after
//! thresholding the estimate at 0.1.

use clap::Args;
use csl_core::error::{Error, Result};
use csl_core::reconstruct::{default_lambda, ista_l1, omp, support_above, SparseSignal};
use csl_core::rng::{derive_seed, SplitMix64};
use csl_core::sensing::{build_matrix, MatrixKind, SensingMatrixSpec};
use std::path::PathBuf;

#[derive(Args, Debug)]
pub struct DemoArgs {
    /// Measurement count M.
    #[arg(long, default_value_t = 32)]
    pub m: usize,

    /// Signal dimension N.
    #[arg(long, default_value_t = 64)]
    pub n: usize,

    /// Sparsity s.
    #[arg(long, default_value_t = 4)]
    pub s: usize,

    #[arg(long, default_value_t = 100)]
    pub trials: usize,

    #[arg(long, default_value_t = 7)]
    pub seed: u64,

    /// Also write the table to DIR/recovery.csv.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

fn omp_success_rate(m: usize, n: usize, s: usize, trials: usize, seed: u64) -> Result<f64> {
    let mut ok = 0usize;
    for t in 0..trials as u64 {
        let phi = build_matrix(SensingMatrixSpec::new(
            MatrixKind::Gaussian,
            m,
            n,
            derive_seed(seed, 2 * t),
        ))?;
        let mut rng = SplitMix64::new(derive_seed(seed, 2 * t + 1));
        let x = SparseSignal::random_gaussian(n, s, &mut rng);
        let y = phi.apply(&x.values)?;
        let r = omp(&y, &phi, s)?;
        if support_above(&r.estimate, 0.0) == x.support() {
            ok += 1;
        }
    }
    Ok(ok as f64 / trials as f64)
}

fn ista_success_rate(m: usize, n: usize, s: usize, trials: usize, seed: u64) -> Result<f64> {
    let mut ok = 0usize;
    for t in 0..trials as u64 {
        let phi = build_matrix(SensingMatrixSpec::new(
            MatrixKind::Gaussian,
            m,
            n,
            derive_seed(seed, 2 * t),
        ))?;
        let mut rng = SplitMix64::new(derive_seed(seed, 2 * t + 1));
        let x = SparseSignal::random_spikes(n, s, &mut rng);
        let y = phi.apply(&x.values)?;
        let lambda = default_lambda(&phi, &y).max(1e-12);
        let r = ista_l1(&y, &phi, lambda, 5000, 1e-8)?;
        if support_above(&r.estimate, 0.1) == x.support() {
            ok += 1;
        }
    }
    Ok(ok as f64 / trials as f64)
}

pub fn cmd_reconstruct_demo(args: DemoArgs) -> Result<()> {
    if args.s == 0 || args.s > args.m || args.m > args.n {
        return Err(Error::config(format!(
            "need 1 <= s <= M <= N, got s={} M={} N={}",
            args.s, args.m, args.n
        )));
    }
    if args.trials == 0 {
        return Err(Error::config("trials must be >= 1"));
    }
    let omp_rate = omp_success_rate(args.m, args.n, args.s, args.trials, args.seed)?;
    let ista_rate = ista_success_rate(args.m, args.n, args.s, args.trials, args.seed)?;
    let mut csv = String::from("solver,s,m,n,trials,success_rate\n");
    csv.push_str(&format!(
        "omp,{},{},{},{},{:.6}\n",
        args.s, args.m, args.n, args.trials, omp_rate
    ));
    csv.push_str(&format!(
        "ista,{},{},{},{},{:.6}\n",
        args.s, args.m, args.n, args.trials, ista_rate
    ));
    print!("{csv}");
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("recovery.csv"), csv)?;
    }
    Ok(())
}
