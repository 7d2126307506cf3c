//! Small numeric helpers shared across modules.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of a slice.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in it {
        acc.add(v);
    }
    acc.value()
}

/// A vector of compensated accumulators, one per coordinate.
#[derive(Debug, Clone)]
pub(crate) struct CompensatedVec {
    acc: Vec<CompensatedSum>,
}

impl CompensatedVec {
    pub(crate) fn zeros(n: usize) -> Self {
        Self {
            acc: vec![CompensatedSum::new(); n],
        }
    }

    #[inline]
    pub(crate) fn add_slice(&mut self, v: &[f64]) {
        for (a, x) in self.acc.iter_mut().zip(v) {
            a.add(*x);
        }
    }

    pub(crate) fn values(&self) -> Vec<f64> {
        self.acc.iter().map(CompensatedSum::value).collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `n` log-spaced points from `hi` down to `lo` (inclusive, descending).
pub fn log_spaced_desc(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![hi],
        _ => {
            let (lh, ll) = (hi.ln(), lo.ln());
            (0..n)
                .map(|k| {
                    let t = k as f64 / (n - 1) as f64;
                    (lh + t * (ll - lh)).exp()
                })
                .collect()
        }
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(xs.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ordinary least squares fit `y = a + b x`; returns `(a, b, se_b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let se = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| {
                let r = b - intercept - slope * a;
                r * r
            })
            .sum();
        (rss / (n - 2) as f64 / sxx).sqrt()
    } else {
        f64::NAN
    };
    Some((intercept, slope, se))
}
