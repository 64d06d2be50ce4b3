//! `bench`: median wall time of the dense O(N^2) path vs the FFT fast path
//! for square circulant and Toeplitz matrices, with a correctness
//! cross-check at every size.

use clap::Args;
use csl_core::error::{Error, Result};
use csl_core::rng::SplitMix64;
use csl_core::sensing::{build_matrix, MatrixKind, SensingMatrixSpec};
use ndarray::Array1;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Square sizes N to benchmark.
    #[arg(long, value_delimiter = ',', default_value = "256,1024,4096")]
    pub sizes: Vec<usize>,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Repetitions per measurement (the median is reported).
    #[arg(long, default_value_t = 20)]
    pub reps: usize,

    /// Also write the table to DIR/bench.csv.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

fn median_secs(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    samples[samples.len() / 2]
}

/// One benchmark row: medians over `reps` runs plus the dense/structured
/// agreement for this size.
pub fn bench_kind(kind: MatrixKind, n: usize, seed: u64, reps: usize) -> Result<(f64, f64, f64)> {
    let matrix = build_matrix(SensingMatrixSpec::new(kind, n, n, seed))?;
    let mut rng = SplitMix64::new(seed ^ 0x5EED);
    let x = Array1::from_shape_fn(n, |_| rng.next_normal());

    let dense = matrix.apply(&x)?;
    let structured = matrix.apply_structured(&x)?;
    let max_dev = dense
        .iter()
        .zip(structured.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);

    let dense_times: Vec<f64> = (0..reps)
        .map(|_| {
            let t = Instant::now();
            let y = matrix.apply(&x).unwrap();
            std::hint::black_box(&y);
            t.elapsed().as_secs_f64()
        })
        .collect();
    let structured_times: Vec<f64> = (0..reps)
        .map(|_| {
            let t = Instant::now();
            let y = matrix.apply_structured(&x).unwrap();
            std::hint::black_box(&y);
            t.elapsed().as_secs_f64()
        })
        .collect();
    Ok((median_secs(dense_times), median_secs(structured_times), max_dev))
}

pub fn cmd_bench(args: BenchArgs) -> Result<()> {
    if args.reps == 0 {
        return Err(Error::config("reps must be >= 1"));
    }
    let mut csv =
        String::from("kind,n,reps,dense_median_s,structured_median_s,speedup,max_abs_dev\n");
    for &n in &args.sizes {
        if n < 2 {
            return Err(Error::config(format!("benchmark size {n} is too small")));
        }
        for kind in [MatrixKind::Circulant, MatrixKind::Toeplitz] {
            let (dense, structured, max_dev) = bench_kind(kind, n, args.seed, args.reps)?;
            if max_dev >= 1e-10 {
                return Err(Error::data(format!(
                    "structured/dense cross-check failed for {kind} N={n}: max dev {max_dev:e}"
                )));
            }
            csv.push_str(&format!(
                "{},{},{},{:.9},{:.9},{:.2},{:e}\n",
                kind.letter(),
                n,
                args.reps,
                dense,
                structured,
                dense / structured,
                max_dev
            ));
        }
    }
    print!("{csv}");
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("bench.csv"), csv)?;
    }
    Ok(())
}
