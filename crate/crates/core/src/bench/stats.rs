use serde::{Deserialize, Serialize};

/// z-score of the two-sided 95% normal interval.
pub const Z95: f64 = 1.96;

/// Mean and normal-approximation 95% half-width `1.96 · s / √n`, with `s`
/// the sample standard deviation (n−1 denominator). The half-width is
/// `None` below two samples.
pub fn ci95(samples: &[f64]) -> (f64, Option<f64>) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, Some(Z95 * var.sqrt() / (n as f64).sqrt()))
}

/// Aggregated accuracy of one experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStat {
    pub mean: f64,
    pub ci95: Option<f64>,
    pub n: usize,
    pub failures: usize,
    pub accuracies: Vec<f64>,
}

impl SummaryStat {
    pub fn from_accuracies(accuracies: Vec<f64>, failures: usize) -> Self {
        let (mean, ci95) = ci95(&accuracies);
        Self {
            mean,
            ci95,
            n: accuracies.len(),
            failures,
            accuracies,
        }
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.ci95.unwrap_or(0.0)
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci95.unwrap_or(0.0)
    }

    /// Whether the two 95% intervals intersect.
    pub fn overlaps(&self, other: &Self) -> bool {
        self.lower() <= other.upper() && other.lower() <= self.upper()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        assert_eq!(ci95(&[1.0, 1.0, 1.0, 1.0]), (1.0, Some(0.0)));
        // s = √2, n = 2 ⇒ 1.96 · √2 / √2
        let (m, h) = ci95(&[0.0, 2.0]);
        assert_eq!(m, 1.0);
        assert!((h.unwrap() - 1.96).abs() < 1e-15);
        assert_eq!(ci95(&[0.7]), (0.7, None));
    }

    #[test]
    fn overlap() {
        let a = SummaryStat::from_accuracies(vec![0.5, 0.6], 0);
        let b = SummaryStat::from_accuracies(vec![0.9, 0.91], 0);
        assert!(a.overlaps(&a));
        assert!(!a.overlaps(&SummaryStat::from_accuracies(vec![5.0, 5.0], 0)));
        assert!(b.overlaps(&b));
    }
}
