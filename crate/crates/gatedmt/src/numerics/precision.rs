//! Global numeric mode switches.
//!
//! Default arithmetic rounds every op output to f32, which is the normal
//! training precision. Verification runs (gradient checking) flip the
//! process into full f64 so central-difference tolerances are meaningful.

use std::sync::atomic::{AtomicBool, Ordering};

static F64_MODE: AtomicBool = AtomicBool::new(false);
static NAN_DEBUG: AtomicBool = AtomicBool::new(false);

pub fn set_f64_mode(on: bool) {
    F64_MODE.store(on, Ordering::SeqCst);
}

pub fn f64_mode() -> bool {
    F64_MODE.load(Ordering::SeqCst)
}

/// When enabled, every tape op scans its output for NaN/Inf and fails fast.
pub fn set_nan_debug(on: bool) {
    NAN_DEBUG.store(on, Ordering::SeqCst);
}

pub fn nan_debug() -> bool {
    NAN_DEBUG.load(Ordering::SeqCst)
}

/// Round a value to the active precision.
#[inline]
pub fn quantize(x: f64) -> f64 {
    if f64_mode() {
        x
    } else {
        x as f32 as f64
    }
}

/// RAII guard that enables f64 mode for a scope (used by verification code).
pub struct F64Guard {
    prev: bool,
}

impl F64Guard {
    pub fn new() -> Self {
        let prev = f64_mode();
        set_f64_mode(true);
        F64Guard { prev }
    }
}

impl Default for F64Guard {
    fn default() -> Self {
        Self::new()
    }
}

impl Drop for F64Guard {
    fn drop(&mut self) {
        set_f64_mode(self.prev);
    }
}
