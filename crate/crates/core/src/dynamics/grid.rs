use crate::error::{parameter, Result};

const DIVIDE_TOL: f64 = 1e-12;

/// Uniform grid on `[-b, T]` that hits `0` and `T` exactly.
///
/// Global index `j` refers to time `-b + j·h`; index `neg_steps()` is time 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    b: f64,
    horizon: f64,
    h: f64,
    neg_steps: usize,
    pos_steps: usize,
}

fn whole_steps(len: f64, h: f64, what: &str) -> Result<usize> {
    let m = (len / h).round();
    if (len - m * h).abs() > DIVIDE_TOL {
        return Err(parameter(format!("step {h} does not divide {what} = {len}")));
    }
    Ok(m as usize)
}

impl TimeGrid {
    pub fn new(b: f64, horizon: f64, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(parameter(format!("step must be positive, got {h}")));
        }
        if !(b.is_finite() && b >= 0.0) {
            return Err(parameter(format!("maximal delay b must be nonnegative, got {b}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(parameter(format!("horizon T must be positive, got {horizon}")));
        }
        Ok(Self {
            b,
            horizon,
            h,
            neg_steps: whole_steps(b, h, "b")?,
            pos_steps: whole_steps(horizon, h, "T")?,
        })
    }

    pub fn t0(&self) -> f64 {
        -self.b
    }

    pub fn t1(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    /// Steps on `[-b, 0]`.
    pub fn neg_steps(&self) -> usize {
        self.neg_steps
    }

    /// Steps on `[0, T]`.
    pub fn pos_steps(&self) -> usize {
        self.pos_steps
    }

    pub fn total_steps(&self) -> usize {
        self.neg_steps + self.pos_steps
    }

    /// Time of global index `j`.
    pub fn time(&self, j: usize) -> f64 {
        (j as f64 - self.neg_steps as f64) * self.h
    }

    /// Time of step `k` counted from 0.
    pub fn pos_time(&self, k: usize) -> f64 {
        k as f64 * self.h
    }

    /// Number of whole steps in a delay (nearest multiple of `h`).
    pub fn delay_steps(&self, delta: f64) -> usize {
        (delta / self.h).round().max(0.0) as usize
    }

    pub fn snap(&self, delta: f64) -> f64 {
        self.delay_steps(delta) as f64 * self.h
    }

    /// Up to `count` equispaced step indices in `1..=pos_steps`, always ending at `pos_steps`.
    pub fn subgrid(&self, count: usize) -> Vec<usize> {
        let n = self.pos_steps;
        let m = count.clamp(1, n.max(1));
        let mut out: Vec<usize> = (1..=m).map(|i| (i * n).div_ceil(m)).collect();
        out.dedup();
        out
    }
}

/// Rounds every delay to the nearest multiple of the grid step.
pub fn snap_delays_to_grid(delays: &[f64], grid: &TimeGrid) -> Vec<f64> {
    delays.iter().map(|&d| grid.snap(d)).collect()
}
