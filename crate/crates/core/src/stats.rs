//! Least squares and streaming moments used by the experiment code.

use crate::error::{parameter, validation, Result};

/// Ordinary least squares fit of `y = intercept + slope · x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ols {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; zero when the fit is exact or `n = 2`.
    pub stderr: f64,
    pub r2: f64,
}

pub fn ols(x: &[f64], y: &[f64]) -> Result<Ols> {
    let n = x.len();
    if n != y.len() {
        return Err(parameter("x and y have different lengths"));
    }
    if n < 2 {
        return Err(parameter("a line fit needs at least two points"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(validation("non-finite value in a line fit"));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx <= 0.0 {
        return Err(parameter("x values are all equal"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let stderr = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(Ols { slope, intercept, stderr, r2 })
}

/// OLS on `(ln x, ln y)`; every value must be positive.
pub fn loglog(x: &[f64], y: &[f64]) -> Result<Ols> {
    if let Some(v) = x.iter().chain(y).find(|v| !(**v > 0.0)) {
        return Err(validation(format!("log-log fit needs positive values, got {v}")));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    ols(&lx, &ly)
}

/// Running mean with its sum of squared deviations, mergeable in any grouping.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanAcc {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl MeanAcc {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(self, o: Self) -> Self {
        if self.count == 0 {
            return o;
        }
        if o.count == 0 {
            return self;
        }
        let n = self.count + o.count;
        let d = o.mean - self.mean;
        Self {
            count: n,
            mean: self.mean + d * o.count as f64 / n as f64,
            m2: self.m2 + o.m2 + d * d * (self.count as f64 * o.count as f64) / n as f64,
        }
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for MeanAcc {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut a = Self::default();
        iter.into_iter().for_each(|x| a.push(x));
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_power_laws() {
        let n = [50.0, 100.0, 200.0, 400.0];
        let f = loglog(&n, &n.map(|v| 3.0 / v)).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
        let f = loglog(&n, &n.map(|v| 3.0 / v.sqrt())).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!(loglog(&n, &[1.0, 0.0, 1.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn merge_matches_single_pass(xs in prop::collection::vec(-1e3f64..1e3, 1..60), cut in 0usize..60) {
            let cut = cut.min(xs.len());
            let all: MeanAcc = xs.iter().copied().collect();
            let a: MeanAcc = xs[..cut].iter().copied().collect();
            let b: MeanAcc = xs[cut..].iter().copied().collect();
            let m = a.merge(b);
            prop_assert_eq!(m.count, all.count);
            prop_assert!((m.mean - all.mean).abs() <= 1e-9 * (1.0 + all.mean.abs()));
            prop_assert!((m.m2 - all.m2).abs() <= 1e-7 * (1.0 + all.m2));
        }
    }
}
