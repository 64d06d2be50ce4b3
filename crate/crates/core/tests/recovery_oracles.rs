//! Cross-solver checks: the greedy solver against the exhaustive oracle,
//! and consistency of converged solutions.

use csl_core::reconstruct::{brute_force_l0, ista_l1, omp, support_above, SparseSignal};
use csl_core::rng::SplitMix64;
use csl_core::sensing::{build_matrix, MatrixKind, SensingMatrixSpec};

#[test]
fn omp_agrees_with_exhaustive_oracle() {
    // N <= 12, M >= 2*s*ceil(log2 N), noiseless: the greedy solver should
    // find the oracle support in at least 90/100 seeded trials.
    let (m, n, s) = (16usize, 12usize, 2usize);
    assert!(m >= 2 * s * (n as f64).log2().ceil() as usize);
    let mut agree = 0;
    for trial in 0..100u64 {
        let phi =
            build_matrix(SensingMatrixSpec::new(MatrixKind::Gaussian, m, n, 300 + trial))
                .unwrap();
        let mut rng = SplitMix64::new(700 + trial);
        let x = SparseSignal::random_gaussian(n, s, &mut rng);
        let y = phi.apply(&x.values).unwrap();
        let greedy = omp(&y, &phi, s).unwrap();
        let oracle = brute_force_l0(&y, &phi, s).unwrap();
        assert!(oracle.residual_norm < 1e-8, "oracle must fit noiseless data");
        if support_above(&greedy.estimate, 0.0) == support_above(&oracle.estimate, 0.0) {
            agree += 1;
        }
    }
    assert!(agree >= 90, "solvers agreed on {agree}/100 trials");
}

#[test]
fn converged_solutions_reproduce_measurements() {
    // converged + tiny residual implies Φx̂ matches y entrywise.
    for trial in 0..20u64 {
        let phi =
            build_matrix(SensingMatrixSpec::new(MatrixKind::Gaussian, 20, 12, 40 + trial))
                .unwrap();
        let mut rng = SplitMix64::new(90 + trial);
        let x = SparseSignal::random_gaussian(12, 2, &mut rng);
        let y = phi.apply(&x.values).unwrap();
        let r = omp(&y, &phi, 2).unwrap();
        if r.converged && r.residual_norm < 1e-8 {
            let reproduced = phi.apply(&r.estimate).unwrap();
            for (a, b) in reproduced.iter().zip(y.iter()) {
                assert!((a - b).abs() < 1e-7);
            }
        }
    }
}

#[test]
fn ista_stays_monotone_across_matrix_kinds() {
    for kind in MatrixKind::ALL {
        let phi = build_matrix(SensingMatrixSpec::new(kind, 24, 36, 11)).unwrap();
        let mut rng = SplitMix64::new(12);
        let x = SparseSignal::random_spikes(36, 3, &mut rng);
        let y = phi.apply(&x.values).unwrap();
        let r = ista_l1(&y, &phi, 5e-3, 300, 0.0).unwrap();
        for w in r.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].max(1.0), "{kind}: {w:?}");
        }
    }
}
