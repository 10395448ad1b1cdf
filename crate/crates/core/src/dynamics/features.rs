use crate::measures::DiscreteMeasure;

/// Which measure functionals a model reads.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FeatureNeeds {
    pub mean: bool,
    pub second_moment: bool,
    pub tanh: bool,
    pub sin: bool,
    pub atan: bool,
}

impl FeatureNeeds {
    pub fn any(&self) -> bool {
        self.mean || self.second_moment || self.tanh || self.sin || self.atan
    }

    pub fn union(self, o: Self) -> Self {
        Self {
            mean: self.mean || o.mean,
            second_moment: self.second_moment || o.second_moment,
            tanh: self.tanh || o.tanh,
            sin: self.sin || o.sin,
            atan: self.atan || o.atan,
        }
    }

    pub fn all() -> Self {
        Self {
            mean: true,
            second_moment: true,
            tanh: true,
            sin: true,
            atan: true,
        }
    }
}

/// Averages `∫ψ dz` of the functionals a model reads. Every entry is linear in
/// the measure, so features of a mixture are the mixture of features.
/// Entries that are not needed stay at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    /// `∫ y z(dy)`, one entry per coordinate.
    pub mean: Vec<f64>,
    /// `∫ |y|² z(dy)`.
    pub second_moment: f64,
    /// `∫ tanh(y_k) z(dy)` per coordinate.
    pub tanh: Vec<f64>,
    pub sin: Vec<f64>,
    pub atan: Vec<f64>,
}

impl Features {
    pub fn zeros(n1: usize) -> Self {
        Self {
            mean: vec![0.0; n1],
            second_moment: 0.0,
            tanh: vec![0.0; n1],
            sin: vec![0.0; n1],
            atan: vec![0.0; n1],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn root_second_moment(&self) -> f64 {
        self.second_moment.max(0.0).sqrt()
    }

    /// Weighted features of an arbitrary discrete measure.
    pub fn of_measure(mu: &DiscreteMeasure, needs: FeatureNeeds) -> Self {
        let n1 = mu.dim();
        let mut f = Self::zeros(n1);
        for (y, w) in mu.iter() {
            f.accumulate(y, w, needs);
        }
        f
    }

    /// Features of the uniform measure on the rows of `states` (`n1` columns).
    pub fn of_cloud(states: &[f64], n1: usize, needs: FeatureNeeds) -> Self {
        FeatureSums::new(states, n1, needs).average()
    }

    fn accumulate(&mut self, y: &[f64], w: f64, needs: FeatureNeeds) {
        for (k, &x) in y.iter().enumerate() {
            if needs.mean {
                self.mean[k] += w * x;
            }
            if needs.tanh {
                self.tanh[k] += w * x.tanh();
            }
            if needs.sin {
                self.sin[k] += w * x.sin();
            }
            if needs.atan {
                self.atan[k] += w * x.atan();
            }
        }
        if needs.second_moment {
            self.second_moment += w * y.iter().map(|x| x * x).sum::<f64>();
        }
    }

    /// `Σ λ_i f_i`.
    pub fn combine(parts: &[(f64, &Features)]) -> Self {
        let n1 = parts.first().map_or(0, |p| p.1.dim());
        let mut out = Self::zeros(n1);
        for (l, f) in parts {
            out.axpy(*l, f);
        }
        out
    }

    pub(crate) fn axpy(&mut self, l: f64, f: &Features) {
        for k in 0..self.dim() {
            self.mean[k] += l * f.mean[k];
            self.tanh[k] += l * f.tanh[k];
            self.sin[k] += l * f.sin[k];
            self.atan[k] += l * f.atan[k];
        }
        self.second_moment += l * f.second_moment;
    }

    pub(crate) fn scale(&mut self, l: f64) {
        for k in 0..self.dim() {
            self.mean[k] *= l;
            self.tanh[k] *= l;
            self.sin[k] *= l;
            self.atan[k] *= l;
        }
        self.second_moment *= l;
    }
}

/// Feature sums over a finite population, computed so that the result does
/// not depend on the order of the population: each functional is summed over
/// its values sorted ascending. Leave-one-out averages subtract the player's
/// own contribution from these totals, which keeps relabelling exact.
#[derive(Debug, Clone)]
pub struct FeatureSums {
    count: usize,
    needs: FeatureNeeds,
    sums: Features,
}

fn canonical_sum(buf: &mut [f64]) -> f64 {
    buf.sort_unstable_by(f64::total_cmp);
    buf.iter().sum()
}

impl FeatureSums {
    pub fn new(states: &[f64], n1: usize, needs: FeatureNeeds) -> Self {
        let count = states.len() / n1;
        let mut sums = Features::zeros(n1);
        let mut buf = Vec::with_capacity(count);
        let mut fill = |f: &dyn Fn(f64) -> f64, k: usize| {
            buf.clear();
            buf.extend(states.chunks_exact(n1).map(|y| f(y[k])));
            canonical_sum(&mut buf)
        };
        for k in 0..n1 {
            if needs.mean {
                sums.mean[k] = fill(&|x| x, k);
            }
            if needs.tanh {
                sums.tanh[k] = fill(&f64::tanh, k);
            }
            if needs.sin {
                sums.sin[k] = fill(&f64::sin, k);
            }
            if needs.atan {
                sums.atan[k] = fill(&f64::atan, k);
            }
        }
        if needs.second_moment {
            let mut b: Vec<f64> = states
                .chunks_exact(n1)
                .map(|y| y.iter().map(|x| x * x).sum())
                .collect();
            sums.second_moment = canonical_sum(&mut b);
        }
        Self { count, needs, sums }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn average(&self) -> Features {
        let mut f = self.sums.clone();
        f.scale(1.0 / self.count as f64);
        f
    }

    /// Average over the population with the member at state `y` removed.
    pub fn average_without(&self, y: &[f64]) -> Features {
        let mut own = Features::zeros(y.len());
        own.accumulate(y, 1.0, self.needs);
        let mut f = self.sums.clone();
        f.axpy(-1.0, &own);
        f.scale(1.0 / (self.count - 1) as f64);
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cloud_and_measure_agree() {
        let pts = vec![0.5, -1.0, 2.0, 0.25, -0.75, 1.5];
        let mu = DiscreteMeasure::uniform(2, pts.clone()).unwrap();
        let a = Features::of_cloud(&pts, 2, FeatureNeeds::all());
        let b = Features::of_measure(&mu, FeatureNeeds::all());
        for (x, y) in a.mean.iter().zip(&b.mean).chain(a.tanh.iter().zip(&b.tanh)) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!((a.second_moment - b.second_moment).abs() < 1e-14);
    }

    #[test]
    fn leave_one_out_matches_direct() {
        let pts = vec![0.1, 0.7, -0.4, 1.9];
        let s = FeatureSums::new(&pts, 1, FeatureNeeds::all());
        let direct = Features::of_cloud(&[0.1, -0.4, 1.9], 1, FeatureNeeds::all());
        let loo = s.average_without(&[0.7]);
        assert!((loo.mean[0] - direct.mean[0]).abs() < 1e-15);
        assert!((loo.sin[0] - direct.sin[0]).abs() < 1e-15);
        assert!((loo.second_moment - direct.second_moment).abs() < 1e-14);
    }

    #[test]
    fn order_independent() {
        let pts = vec![0.1, 1e-17, 3.0, -2.9999999, 7.5e-9];
        let mut rev = pts.clone();
        rev.reverse();
        let a = FeatureSums::new(&pts, 1, FeatureNeeds::all()).average();
        let b = FeatureSums::new(&rev, 1, FeatureNeeds::all()).average();
        assert_eq!(a, b);
    }
}
