//! Small descriptive statistics used by summaries and studies.

/// Arithmetic mean; `None` for an empty slice.
pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Population standard deviation.
pub fn population_sd(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    Some(var.sqrt())
}

/// Goodness-of-fit numbers comparing observations against predictions.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitMetrics {
    pub mse: f64,
    pub rmse: f64,
    pub r2: f64,
    pub max_abs: f64,
}

pub fn fit_metrics(observed: &[f64], predicted: &[f64]) -> Option<FitMetrics> {
    if observed.is_empty() || observed.len() != predicted.len() {
        return None;
    }
    let n = observed.len() as f64;
    let m = mean(observed)?;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    let mut max_abs: f64 = 0.0;
    for (o, p) in observed.iter().zip(predicted) {
        ss_res += (o - p) * (o - p);
        ss_tot += (o - m) * (o - m);
        max_abs = max_abs.max((o - p).abs());
    }
    let mse = ss_res / n;
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    Some(FitMetrics {
        mse,
        rmse: mse.sqrt(),
        r2,
        max_abs,
    })
}

/// Average ranks (1-based), ties share the mean rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let ma = mean(a)?;
    let mb = mean(b)?;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// Spearman rank correlation; `None` when either series is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    pearson(&ranks(a), &ranks(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooled_pair() {
        assert_eq!(mean(&[2.0, 4.0]), Some(3.0));
        assert_eq!(population_sd(&[2.0, 4.0]), Some(1.0));
        assert_eq!(population_sd(&[2.57; 5]), Some(0.0));
        assert_eq!(mean(&[]), None);
    }

    #[test]
    fn spearman_monotone() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [9.0, 7.0, 4.0, 3.0, 0.5];
        assert!((spearman(&x, &y).unwrap() + 1.0).abs() < 1e-12);
        assert!((spearman(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(spearman(&x, &[1.0; 5]), None);
    }

    #[test]
    fn perfect_fit_has_unit_r2() {
        let o = [1.0, 2.0, 3.0];
        let m = fit_metrics(&o, &o).unwrap();
        assert_eq!(m.r2, 1.0);
        assert_eq!(m.rmse, 0.0);
    }
}
