//! Circular convolution/correlation via FFT, used by the structured
//! sensing-matrix fast path.

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// A precomputed spectral kernel. Applying it to a vector costs one forward
/// and one inverse FFT of length `len` plus a pointwise product.
pub(crate) struct FastConv {
    len: usize,
    kernel_fft: Vec<Complex<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Clone for FastConv {
    fn clone(&self) -> Self {
        Self {
            len: self.len,
            kernel_fft: self.kernel_fft.clone(),
            fwd: Arc::clone(&self.fwd),
            inv: Arc::clone(&self.inv),
        }
    }
}

impl std::fmt::Debug for FastConv {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FastConv").field("len", &self.len).finish()
    }
}

impl FastConv {
    fn from_kernel(kernel: Vec<Complex<f64>>) -> Self {
        let len = kernel.len();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let mut kernel_fft = kernel;
        fwd.process(&mut kernel_fft);
        Self { len, kernel_fft, fwd, inv }
    }

    /// Kernel for a partial circulant with generator `c`: the output is the
    /// N-periodic circular correlation `y[i] = sum_k c[k] x[(i+k) mod N]`,
    /// realized as `IFFT(conj(FFT(c)) * FFT(x))`.
    pub fn circulant(generator: &[f64]) -> Self {
        let kernel: Vec<Complex<f64>> =
            generator.iter().map(|&v| Complex::new(v, 0.0)).collect();
        let mut conv = Self::from_kernel(kernel);
        for v in &mut conv.kernel_fft {
            *v = v.conj();
        }
        conv
    }

    /// Kernel for a Toeplitz matrix with diagonal generator `t` (length
    /// `rows + cols - 1`, entry `(i,j) = t[i - j + cols - 1]`), embedded in a
    /// circulant of power-of-two length `>= rows + cols - 1`.
    pub fn toeplitz(generator: &[f64], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(generator.len(), rows + cols - 1);
        let len = (rows + cols - 1).next_power_of_two();
        let mut kernel = vec![Complex::new(0.0, 0.0); len];
        // h[d] = t[d + cols - 1] for d in [-(cols-1), rows-1]; wrap negatives.
        for d in 0..rows {
            kernel[d] = Complex::new(generator[d + cols - 1], 0.0);
        }
        for d in 1..cols {
            kernel[len - d] = Complex::new(generator[cols - 1 - d], 0.0);
        }
        Self::from_kernel(kernel)
    }

    /// Convolve `x` (zero-padded to the kernel length) and return the first
    /// `out_len` real coefficients.
    pub fn apply(&self, x: &[f64], out_len: usize) -> Vec<f64> {
        debug_assert!(x.len() <= self.len);
        let mut buf = vec![Complex::new(0.0, 0.0); self.len];
        for (b, &v) in buf.iter_mut().zip(x.iter()) {
            b.re = v;
        }
        self.fwd.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(self.kernel_fft.iter()) {
            *b *= k;
        }
        self.inv.process(&mut buf);
        let scale = 1.0 / self.len as f64;
        buf.iter().take(out_len).map(|c| c.re * scale).collect()
    }
}
