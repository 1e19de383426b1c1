//! Circular correlation and convolution.
//!
//! Index convention: `[a ⋆ b]_k = Σ_i a_i · b_{(i+k) mod d}` and
//! `[a ∗ b]_k = Σ_i a_i · b_{(k-i) mod d}`. The direct O(d²) loops are the
//! reference; the FFT path (feature `fft`) is used above [`FFT_MIN_DIM`].

use crate::error::{Error, Result};

/// Dimension from which [`circular_correlation`] switches to the FFT path.
pub const FFT_MIN_DIM: usize = 64;

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Argument(format!(
            "circular correlation of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

pub fn circular_correlation_direct(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    check_len(a, b)?;
    let d = a.len();
    Ok((0..d)
        .map(|k| (0..d).map(|i| a[i] * b[(i + k) % d]).sum())
        .collect())
}

pub fn circular_convolution_direct(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    check_len(a, b)?;
    let d = a.len();
    Ok((0..d)
        .map(|k| (0..d).map(|i| a[i] * b[(k + d - i) % d]).sum())
        .collect())
}

#[cfg(feature = "fft")]
mod spectral {
    use std::cell::RefCell;

    use rustfft::num_complex::Complex;
    use rustfft::FftPlanner;

    thread_local! {
        static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
    }

    fn spectrum(x: &[f64]) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        PLANNER.with(|p| p.borrow_mut().plan_fft_forward(x.len()).process(&mut buf));
        buf
    }

    fn inverse(mut buf: Vec<Complex<f64>>) -> Vec<f64> {
        let n = buf.len();
        PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n).process(&mut buf));
        buf.into_iter().map(|c| c.re / n as f64).collect()
    }

    /// ifft(conj(fft(a)) · fft(b))
    pub fn correlation(a: &[f64], b: &[f64]) -> Vec<f64> {
        let fa = spectrum(a);
        let fb = spectrum(b);
        inverse(fa.iter().zip(&fb).map(|(x, y)| x.conj() * y).collect())
    }

    /// ifft(fft(a) · fft(b))
    pub fn convolution(a: &[f64], b: &[f64]) -> Vec<f64> {
        let fa = spectrum(a);
        let fb = spectrum(b);
        inverse(fa.iter().zip(&fb).map(|(x, y)| x * y).collect())
    }
}

#[cfg(feature = "fft")]
pub fn circular_correlation_fft(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    check_len(a, b)?;
    if a.is_empty() {
        return Ok(Vec::new());
    }
    Ok(spectral::correlation(a, b))
}

#[cfg(feature = "fft")]
pub fn circular_convolution_fft(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    check_len(a, b)?;
    if a.is_empty() {
        return Ok(Vec::new());
    }
    Ok(spectral::convolution(a, b))
}

pub fn circular_correlation(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    #[cfg(feature = "fft")]
    if a.len() >= FFT_MIN_DIM {
        return circular_correlation_fft(a, b);
    }
    circular_correlation_direct(a, b)
}

pub fn circular_convolution(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    #[cfg(feature = "fft")]
    if a.len() >= FFT_MIN_DIM {
        return circular_convolution_fft(a, b);
    }
    circular_convolution_direct(a, b)
}
