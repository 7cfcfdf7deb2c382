//! Test-only oracles, written independently of the library's own routines.
#![allow(dead_code)]

/// Least squares `y ~ X` by Gauss–Jordan on the normal equations. Returns
/// coefficients and their classical standard errors.
pub fn ols(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = x[0].len();
    let n = y.len();
    // augmented [X'X | X'y | I]
    let mut a = vec![vec![0.0; 2 * k + 1]; k];
    for (row, &yi) in x.iter().zip(y) {
        for r in 0..k {
            for c in 0..k {
                a[r][c] += row[r] * row[c];
            }
            a[r][k] += row[r] * yi;
        }
    }
    for (r, row) in a.iter_mut().enumerate() {
        row[k + 1 + r] = 1.0;
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs())).unwrap();
        a.swap(col, piv);
        let d = a[col][col];
        for v in a[col].iter_mut() {
            *v /= d;
        }
        for r in 0..k {
            if r != col {
                let f = a[r][col];
                let pivot_row = a[col].clone();
                for (v, p) in a[r].iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
            }
        }
    }
    let beta: Vec<f64> = (0..k).map(|r| a[r][k]).collect();
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(row, yi)| {
            let fit: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            (yi - fit).powi(2)
        })
        .sum();
    let s2 = rss / (n - k) as f64;
    let se = (0..k).map(|r| (s2 * a[r][k + 1 + r]).sqrt()).collect();
    (beta, se)
}

/// Fraction of treated out-neighbours by direct scan of an edge list.
pub fn exposure_by_scan(n: usize, edges: &[(usize, usize, f64)], directed: bool, z: &[u8]) -> Vec<f64> {
    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    for &(a, b, w) in edges {
        den[a] += w;
        num[a] += w * f64::from(z[b]);
        if !directed {
            den[b] += w;
            num[b] += w * f64::from(z[a]);
        }
    }
    (0..n).map(|i| if den[i] > 0.0 { num[i] / den[i] } else { 0.0 }).collect()
}

/// `|ρ̂|` from the oracle OLS, or `None` if the fit is singular.
pub fn score_oracle(y: &[f64], z: &[u8], t: &[f64]) -> Option<f64> {
    let n = y.len();
    let zbar = z.iter().map(|&v| f64::from(v)).sum::<f64>() / n as f64;
    let tbar = t.iter().sum::<f64>() / n as f64;
    let szz: f64 = z.iter().map(|&v| (f64::from(v) - zbar).powi(2)).sum();
    let stt: f64 = t.iter().map(|v| (v - tbar).powi(2)).sum();
    let szt: f64 = z.iter().zip(t).map(|(&a, b)| (f64::from(a) - zbar) * (b - tbar)).sum();
    if szz < 1e-9 || stt < 1e-9 || (szz * stt - szt * szt) < 1e-9 * szz * stt {
        return None;
    }
    let x: Vec<Vec<f64>> = (0..n).map(|i| vec![1.0, f64::from(z[i]), t[i]]).collect();
    Some(ols(&x, y).0[2].abs())
}
