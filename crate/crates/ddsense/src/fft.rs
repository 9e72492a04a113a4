//! Thin wrapper around rustfft with a thread-local planner cache.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan_forward(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

fn plan_inverse(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(len))
}

/// In-place unscaled forward DFT: X[f] = sum_q x[q] e^{-j2pi f q / L}.
pub fn forward(buf: &mut [Complex64]) {
    plan_forward(buf.len()).process(buf);
}

/// In-place unscaled inverse DFT: x[q] = sum_f X[f] e^{+j2pi f q / L}.
pub fn inverse(buf: &mut [Complex64]) {
    plan_inverse(buf.len()).process(buf);
}

/// In-place inverse DFT scaled by 1/L (exact inverse of `forward`).
pub fn inverse_scaled(buf: &mut [Complex64]) {
    let scale = 1.0 / buf.len() as f64;
    inverse(buf);
    for v in buf.iter_mut() {
        *v *= scale;
    }
}
