//! Real-argument special functions: digamma, signed log-gamma, Pochhammer
//! symbols, and the Gauss/Kummer hypergeometric series together with the
//! parameter derivative of `2F1` at negative-integer `b`.
//!
//! Every infinite series is summed under a [`TruncationPolicy`] and reported
//! as a [`SeriesValue`] carrying its own truncation and cancellation
//! diagnostics.

mod gamma;
mod hyper;
mod sum;

use serde::Serialize;

use crate::error::{Error, Result};

pub use gamma::{digamma, ln_gamma, ln_gamma_signed, pochhammer};
pub use hyper::{gauss_2f1, gauss_2f1_db_at_neg_int, kummer_1f1};

pub(crate) use gamma::{digamma_dd, ln_gamma_dd};
pub(crate) use hyper::{
    hyp1f1_series, hyp2f1_db_neg_int_euler, hyp2f1_euler, hyp2f1_series, hyp2f1_terminating, KummerScaled,
};
pub(crate) use sum::{scaled, Partial};

/// Relative rounding estimate above which a value is flagged as having lost
/// its precision to cancellation. For `f64` series this corresponds to a
/// largest-term-to-value ratio of about 1e12.
pub const PRECISION_LOSS_REL: f64 = 1e-4;

/// Tolerances and term limits for every infinite series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationPolicy {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_terms: usize,
    pub consecutive_small: usize,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy {
            rel_tol: 1e-12,
            abs_tol: 1e-300,
            max_terms: 1000,
            consecutive_small: 3,
        }
    }
}

impl TruncationPolicy {
    pub fn new(rel_tol: f64, abs_tol: f64, max_terms: usize, consecutive_small: usize) -> Result<Self> {
        let p = TruncationPolicy {
            rel_tol,
            abs_tol,
            max_terms,
            consecutive_small,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::Domain(format!("rel_tol must lie in (0, 1), got {}", self.rel_tol)));
        }
        if !(self.abs_tol > 0.0 && self.abs_tol < 1.0) {
            return Err(Error::Domain(format!("abs_tol must lie in (0, 1), got {}", self.abs_tol)));
        }
        if self.max_terms < 10 {
            return Err(Error::Domain(format!("max_terms must be >= 10, got {}", self.max_terms)));
        }
        if self.consecutive_small < 1 {
            return Err(Error::Domain("consecutive_small must be >= 1".into()));
        }
        Ok(())
    }

    /// Policy for internal double-double evaluations: summed to the working
    /// precision, with a generous term budget.
    pub(crate) fn working_precision() -> Self {
        TruncationPolicy {
            rel_tol: 1e-34,
            abs_tol: 1e-300,
            max_terms: 400_000,
            consecutive_small: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalWarning {
    /// Estimated rounding error exceeds [`PRECISION_LOSS_REL`] of the value.
    PrecisionLoss,
    /// The mu-gap is within 1e-3 of an integer but evaluated as non-integer;
    /// the paired coefficients nearly cancel.
    NearIntegerGap,
    /// A probability left [0, 1] by more than its tail estimate and was clamped.
    OutsideUnitInterval,
}

/// A series result with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesValue {
    pub value: f64,
    pub terms_used: usize,
    pub tail_estimate: f64,
    /// Largest `|term| / |value|` seen while summing.
    pub max_term_ratio: f64,
    /// Estimated absolute rounding error (cancellation included).
    pub rounding_error: f64,
    pub converged: bool,
    pub warnings: Vec<EvalWarning>,
}

impl SeriesValue {
    pub fn has_warning(&self, w: EvalWarning) -> bool {
        self.warnings.contains(&w)
    }

    /// `(tail + rounding) / |value|`; infinite for a zero value with nonzero error.
    pub fn relative_error_estimate(&self) -> f64 {
        let err = self.tail_estimate + self.rounding_error;
        if err == 0.0 {
            0.0
        } else {
            err / self.value.abs()
        }
    }

    pub(crate) fn push_warning(&mut self, w: EvalWarning) {
        if !self.warnings.contains(&w) {
            self.warnings.push(w);
        }
    }

    pub(crate) fn flag_precision(&mut self) {
        if !self.value.is_finite() || self.rounding_error > PRECISION_LOSS_REL * self.value.abs() {
            self.push_warning(EvalWarning::PrecisionLoss);
        }
    }
}
