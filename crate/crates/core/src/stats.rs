//! Mergeable Monte Carlo estimators and tail diagnostics.

/// Mergeable partial sums for a Monte Carlo mean estimate.
///
/// Merging two accumulators over disjoint sample sets is equivalent to
/// accumulating over the union, up to floating reassociation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct McAccumulator {
    sum: f64,
    sum_sq: f64,
    count: u64,
}

impl McAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.sum += x;
        self.sum_sq += x * x;
        self.count += 1;
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self {
            sum: self.sum + other.sum,
            sum_sq: self.sum_sq + other.sum_sq,
            count: self.count + other.count,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn estimate(&self) -> McEstimate {
        let n = self.count as f64;
        if self.count == 0 {
            return McEstimate {
                mean: f64::NAN,
                stderr: f64::NAN,
                count: 0,
            };
        }
        let mean = self.sum / n;
        let stderr = if self.count < 2 {
            0.0
        } else {
            let var = ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        };
        McEstimate {
            mean,
            stderr,
            count: self.count,
        }
    }
}

impl FromIterator<f64> for McAccumulator {
    fn from_iter<T: IntoIterator<Item = f64>>(iter: T) -> Self {
        let mut acc = Self::new();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

/// A Monte Carlo estimate: sample mean, stderr = sample std / sqrt(N), N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub count: u64,
}

impl McEstimate {
    pub fn from_samples(samples: impl IntoIterator<Item = f64>) -> Self {
        samples.into_iter().collect::<McAccumulator>().estimate()
    }

    /// Stderr of the difference of two (conservatively assumed independent)
    /// estimates.
    pub fn combined_stderr(&self, other: &Self) -> f64 {
        (self.stderr * self.stderr + other.stderr * other.stderr).sqrt()
    }
}

/// Heavy-tail guard for exponential-moment estimates: the largest sample
/// and the share of total mass carried by the top 1% of samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailDiagnostics {
    pub max_sample: f64,
    pub top1_share: f64,
}

impl TailDiagnostics {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self {
                max_sample: f64::NAN,
                top1_share: f64::NAN,
            };
        }
        let mut sorted: Vec<f64> = samples.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let total: f64 = sorted.iter().sum();
        let k = ((samples.len() as f64) * 0.01).ceil().max(1.0) as usize;
        let top: f64 = sorted[sorted.len() - k..].iter().sum();
        Self {
            max_sample: *sorted.last().unwrap(),
            top1_share: if total != 0.0 { top / total } else { f64::NAN },
        }
    }
}
