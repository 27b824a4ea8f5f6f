//! Trailing moving average and its flat persistence forecast.

use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForecastConfig {
    pub window: usize,
    pub horizon: usize,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig { window: 3, horizon: 6 }
    }
}

impl ForecastConfig {
    pub fn new(window: usize, horizon: usize) -> Option<Self> {
        (window >= 1 && horizon >= 1).then_some(ForecastConfig { window, horizon })
    }
}

/// Output of [`moving_average`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast<T> {
    /// `smoothed[j]` is the mean of `series[j ..= j + window - 1]`, i.e. the
    /// trailing mean ending at source index `j + window - 1`.
    pub smoothed: Vec<T>,
    /// Persistence forecast: the last smoothed value repeated `horizon` times.
    /// Its first element is the one-step-ahead forecast.
    pub horizon: Vec<T>,
}

impl<T: Copy> Forecast<T> {
    pub fn is_empty(&self) -> bool {
        self.smoothed.is_empty()
    }

    pub fn next(&self) -> Option<T> {
        self.horizon.first().copied()
    }

    /// Smoothed values aligned to source indices; `None` before the first
    /// full window.
    pub fn aligned(&self, window: usize) -> impl Iterator<Item = Option<T>> + '_ {
        std::iter::repeat_n(None, if self.smoothed.is_empty() { 0 } else { window - 1 })
            .chain(self.smoothed.iter().copied().map(Some))
    }
}

/// Trailing moving average over `series`.
///
/// Each window mean is summed fresh, left to right, so every output is
/// reproducible by a naive recompute. A series shorter than the window
/// yields an empty forecast. Works over any numeric field, including exact
/// rationals.
pub fn moving_average<T>(series: &[T], cfg: &ForecastConfig) -> Forecast<T>
where
    T: Num + FromPrimitive + Copy,
{
    let window = cfg.window.max(1);
    if series.len() < window {
        return Forecast { smoothed: Vec::new(), horizon: Vec::new() };
    }
    let divisor = T::from_usize(window).expect("window fits the scalar");
    let smoothed: Vec<T> = series
        .windows(window)
        .map(|w| w.iter().fold(T::zero(), |acc, &x| acc + x) / divisor)
        .collect();
    let last = *smoothed.last().expect("at least one window");
    Forecast { smoothed, horizon: vec![last; cfg.horizon] }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    fn naive(series: &[f64], window: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for i in window - 1..series.len() {
            let mut s = 0.0;
            for x in &series[i + 1 - window..=i] {
                s += x;
            }
            out.push(s / window as f64);
        }
        out
    }

    #[test]
    fn constant_series_forecasts_the_constant() {
        let f = moving_average(&[4.5f64; 4], &ForecastConfig::default());
        assert_eq!(f.smoothed, vec![4.5, 4.5]);
        assert_eq!(f.horizon, vec![4.5; 6]);
    }

    #[test]
    fn worked_example() {
        let f = moving_average(&[10.0f64, 20.0, 30.0, 40.0], &ForecastConfig::default());
        assert_eq!(f.smoothed, vec![20.0, 30.0]);
        assert_eq!(f.next(), Some(30.0));
        let aligned: Vec<_> = f.aligned(3).collect();
        assert_eq!(aligned, vec![None, None, Some(20.0), Some(30.0)]);
    }

    #[test]
    fn short_series_is_empty() {
        let f = moving_average(&[1.0f64, 2.0], &ForecastConfig::default());
        assert!(f.is_empty());
        assert_eq!(f.next(), None);
        assert_eq!(f.aligned(3).count(), 0);
    }

    #[test]
    fn config_rejects_zero() {
        assert!(ForecastConfig::new(0, 3).is_none());
        assert!(ForecastConfig::new(3, 0).is_none());
        assert!(ForecastConfig::new(1, 1).is_some());
    }

    #[test]
    fn rationals_are_exact() {
        let s: Vec<Ratio<i64>> = [1, 2, 2].iter().map(|&n| Ratio::from_integer(n)).collect();
        let f = moving_average(&s, &ForecastConfig::new(3, 1).unwrap());
        assert_eq!(f.smoothed, vec![Ratio::new(5, 3)]);
    }

    proptest! {
        #[test]
        fn matches_naive_recompute(series in prop::collection::vec(-1e3f64..1e3, 0..60), window in 1usize..6) {
            let f = moving_average(&series, &ForecastConfig::new(window, 2).unwrap());
            if series.len() < window {
                prop_assert!(f.is_empty());
            } else {
                prop_assert_eq!(f.smoothed, naive(&series, window));
            }
        }

        #[test]
        fn outputs_stay_within_their_window(series in prop::collection::vec(-50f64..50.0, 1..40), window in 1usize..6) {
            let f = moving_average(&series, &ForecastConfig::new(window, 1).unwrap());
            for (j, m) in f.smoothed.iter().enumerate() {
                let w = &series[j..j + window];
                let lo = w.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(*m >= lo - 1e-9 && *m <= hi + 1e-9);
            }
        }

        #[test]
        fn exact_shift_invariance(series in prop::collection::vec(-1000i64..1000, 1..40), c in -500i64..500, window in 1usize..6) {
            let base: Vec<Ratio<i64>> = series.iter().map(|&n| Ratio::new(n, 7)).collect();
            let shifted: Vec<Ratio<i64>> = base.iter().map(|&x| x + Ratio::from_integer(c)).collect();
            let cfg = ForecastConfig::new(window, 3).unwrap();
            let a = moving_average(&base, &cfg);
            let b = moving_average(&shifted, &cfg);
            let expected: Vec<_> = a.smoothed.iter().map(|&x| x + Ratio::from_integer(c)).collect();
            prop_assert_eq!(b.smoothed, expected);
        }
    }
}
