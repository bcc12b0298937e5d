//! Suffix-encoded smoothing schedules.
//!
//! A schedule assigns each timestep `t` a weight vector over the ratio
//! history `i = 0..=t`. Only suffix patterns are representable: the last `K`
//! steps before `t` carry the configured weights and everything earlier gets
//! zero. All of the well-performing schemes are of this form, and it keeps
//! per-step cost at `O(K)` instead of `O(t)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights `(b_K, ..., b_2, b_1)` applied to the most recent ratios: the last
/// entry weights the ratio at `i = t`, the one before it `i = t - 1`, and so
/// on. An all-ones suffix at least as long as the horizon recovers full
/// importance sampling; the single-entry suffix `(1)` recovers the last-step
/// surrogate ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AlphaSchedule {
    suffix: Vec<f64>,
}

impl AlphaSchedule {
    pub fn new(suffix: Vec<f64>) -> Result<Self> {
        for (i, &w) in suffix.iter().enumerate() {
            if !w.is_finite() || !(0.0..=1.0).contains(&w) {
                return Err(Error::validation(format!(
                    "schedule suffix[{i}] = {w} must lie in [0,1]"
                )));
            }
        }
        Ok(Self { suffix })
    }

    /// The last-step-only schedule: suffix `(1)`.
    pub fn last_step() -> Self {
        Self { suffix: vec![1.0] }
    }

    /// All-ones suffix of the given length; with `len >= horizon` this is the
    /// full importance-sampling weighting.
    pub fn all_ones(len: usize) -> Self {
        Self {
            suffix: vec![1.0; len],
        }
    }

    pub fn suffix(&self) -> &[f64] {
        &self.suffix
    }

    /// Number of history steps with potentially non-zero weight.
    pub fn window(&self) -> usize {
        self.suffix.len()
    }

    /// First history index with non-zero weight at timestep `t`.
    #[inline]
    pub fn window_start(&self, t: usize) -> usize {
        (t + 1).saturating_sub(self.suffix.len())
    }

    /// Weight applied to the ratio at history index `i <= t`.
    #[inline]
    pub fn weight(&self, t: usize, i: usize) -> f64 {
        debug_assert!(i <= t);
        let back = t - i;
        if back < self.suffix.len() {
            self.suffix[self.suffix.len() - 1 - back]
        } else {
            0.0
        }
    }

    /// `||alpha_t||_1` for the weight vector at timestep `t`.
    pub fn l1_norm_at(&self, t: usize) -> f64 {
        let k = self.suffix.len().min(t + 1);
        self.suffix[self.suffix.len() - k..].iter().sum()
    }

    /// Uniform bound on `||alpha_t||_1` over all `t` (the sum of the suffix),
    /// the finiteness condition of the variance bound.
    pub fn max_l1(&self) -> f64 {
        self.suffix.iter().sum()
    }

    /// `||alpha_t - 1||_1` over the `t + 1` coordinates at timestep `t`.
    /// Weights lie in [0,1], so this is `(t + 1) - ||alpha_t||_1`.
    pub fn l1_distance_from_ones_at(&self, t: usize) -> f64 {
        (t + 1) as f64 - self.l1_norm_at(t)
    }

    /// True when every coordinate at every timestep equals one up to `t_max`,
    /// i.e. the schedule reproduces full importance sampling on horizons up
    /// to `t_max + 1`.
    pub fn is_all_ones_up_to(&self, t_max: usize) -> bool {
        self.suffix.len() > t_max && self.suffix.iter().all(|&w| w == 1.0)
    }
}

impl TryFrom<Vec<f64>> for AlphaSchedule {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        AlphaSchedule::new(v)
    }
}

impl From<AlphaSchedule> for Vec<f64> {
    fn from(s: AlphaSchedule) -> Vec<f64> {
        s.suffix
    }
}

impl std::fmt::Display for AlphaSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, w) in self.suffix.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{w}")?;
        }
        write!(f, ")")
    }
}
