//! Slow, independent reference implementations used by the test suites
//! to validate the fast paths. Nothing in the rest of the crate calls
//! into this module, and nothing here calls back into the fast paths:
//! the two sides of every comparison stay independent.

/// Sample autocorrelations by the direct formula (biased denominator).
pub fn naive_acf(values: &[f64], max_lag: usize) -> Vec<f64> {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let c0: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (0..=max_lag)
        .map(|k| {
            let ck: f64 = (0..n - k)
                .map(|t| (values[t] - mean) * (values[t + k] - mean))
                .sum::<f64>()
                / n as f64;
            if k == 0 {
                1.0
            } else {
                ck / c0
            }
        })
        .collect()
}

/// Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// Ordinary least squares solved by normal equations with a hand-rolled
/// Gauss-Jordan inverse. Returns the coefficients and their standard
/// errors.
pub fn ols_normal_equations(rows: &[Vec<f64>], targets: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len();
    let k = rows[0].len();
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for (row, y) in rows.iter().zip(targets) {
        for i in 0..k {
            xty[i] += row[i] * y;
            for j in 0..k {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    let inv = invert(&xtx).expect("normal equations are singular");
    let beta: Vec<f64> = (0..k)
        .map(|i| (0..k).map(|j| inv[i][j] * xty[j]).sum())
        .collect();
    let mut rss = 0.0;
    for (row, y) in rows.iter().zip(targets) {
        let fitted: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
        rss += (y - fitted) * (y - fitted);
    }
    let dof = (n - k).max(1) as f64;
    let sigma2 = rss / dof;
    let se = (0..k).map(|i| (sigma2 * inv[i][i]).sqrt()).collect();
    (beta, se)
}

fn invert(matrix: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = matrix.len();
    let mut aug: Vec<Vec<f64>> = matrix
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&a, &b| aug[a][col].abs().total_cmp(&aug[b][col].abs()))?;
        if aug[pivot][col].abs() < 1e-12 {
            return None;
        }
        aug.swap(col, pivot);
        let p = aug[col][col];
        for v in &mut aug[col] {
            *v /= p;
        }
        let pivot_row = aug[col].clone();
        for (row, entries) in aug.iter_mut().enumerate() {
            if row != col {
                let factor = entries[col];
                for (slot, pivot_value) in entries.iter_mut().zip(&pivot_row) {
                    *slot -= factor * pivot_value;
                }
            }
        }
    }
    Some(aug.into_iter().map(|row| row[n..].to_vec()).collect())
}

/// Value of the SVR dual objective at signed coefficients `deltas`.
pub fn svr_dual_objective(gram: &[Vec<f64>], targets: &[f64], epsilon: f64, deltas: &[f64]) -> f64 {
    let mut obj = 0.0;
    for (i, d) in deltas.iter().enumerate() {
        obj += targets[i] * d - epsilon * d.abs();
        let kd: f64 = deltas.iter().enumerate().map(|(j, dj)| gram[i][j] * dj).sum();
        obj -= 0.5 * d * kd;
    }
    obj
}

/// Dense brute-force solve of the SVR dual by accelerated projected
/// gradient descent on the 2n multipliers, run to a KKT gap of
/// `kkt_tol`. Intended for small problems only.
pub struct PgDualSolution {
    pub deltas: Vec<f64>,
    pub bias: f64,
    pub kkt_gap: f64,
    pub iterations: usize,
}

pub fn solve_svr_dual_pg(
    gram: &[Vec<f64>],
    targets: &[f64],
    c: f64,
    epsilon: f64,
    kkt_tol: f64,
    max_iter: usize,
) -> PgDualSolution {
    let n = targets.len();
    // Hessian of the 2n-variable problem is [[K, -K], [-K, K]]; its norm
    // is at most twice an infinity-norm bound on K.
    let l = 2.0
        * gram
            .iter()
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
        + 1e-9;
    let step = 1.0 / l;

    let objective = |lam: &[f64], lam_star: &[f64]| -> f64 {
        let deltas: Vec<f64> = lam.iter().zip(lam_star).map(|(a, b)| a - b).collect();
        -svr_dual_objective(gram, targets, epsilon, &deltas)
            + epsilon
                * deltas
                    .iter()
                    .zip(lam.iter().zip(lam_star))
                    .map(|(d, (a, b))| (a + b) - d.abs())
                    .sum::<f64>()
    };

    let mut lam = vec![0.0; n];
    let mut lam_star = vec![0.0; n];
    let mut prev_lam = lam.clone();
    let mut prev_star = lam_star.clone();
    let mut t_momentum = 1.0f64;
    let mut f_prev = objective(&lam, &lam_star);
    let mut iterations = 0;
    let mut gap;

    while iterations < max_iter {
        iterations += 1;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_momentum * t_momentum).sqrt());
        let beta = (t_momentum - 1.0) / t_next;
        let y_lam: Vec<f64> = lam
            .iter()
            .zip(&prev_lam)
            .map(|(x, p)| x + beta * (x - p))
            .collect();
        let y_star: Vec<f64> = lam_star
            .iter()
            .zip(&prev_star)
            .map(|(x, p)| x + beta * (x - p))
            .collect();

        let kd: Vec<f64> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| gram[i][j] * (y_lam[j] - y_star[j]))
                    .sum::<f64>()
            })
            .collect();
        let u_lam: Vec<f64> = (0..n)
            .map(|i| y_lam[i] - step * (kd[i] + epsilon - targets[i]))
            .collect();
        let u_star: Vec<f64> = (0..n)
            .map(|i| y_star[i] - step * (-kd[i] + epsilon + targets[i]))
            .collect();
        let (new_lam, new_star) = project_box_hyperplane(&u_lam, &u_star, c);

        let f_new = objective(&new_lam, &new_star);
        prev_lam = std::mem::replace(&mut lam, new_lam);
        prev_star = std::mem::replace(&mut lam_star, new_star);
        if f_new > f_prev {
            // Function-value restart of the momentum sequence.
            t_momentum = 1.0;
            prev_lam = lam.clone();
            prev_star = lam_star.clone();
        } else {
            t_momentum = t_next;
        }
        f_prev = f_new;

        if iterations % 32 == 0 {
            let deltas: Vec<f64> = lam.iter().zip(&lam_star).map(|(a, b)| a - b).collect();
            gap = kkt_gap(gram, targets, c, epsilon, &deltas);
            if gap < kkt_tol {
                break;
            }
        }
    }

    let deltas: Vec<f64> = lam.iter().zip(&lam_star).map(|(a, b)| a - b).collect();
    gap = kkt_gap(gram, targets, c, epsilon, &deltas);
    let bias = kkt_bias(gram, targets, c, epsilon, &deltas);
    PgDualSolution {
        deltas,
        bias,
        kkt_gap: gap,
        iterations,
    }
}

/// Euclidean projection onto the box `[0, c]^{2n}` intersected with the
/// hyperplane `sum lam - sum lam_star = 0`, by bisection on the
/// hyperplane multiplier.
fn project_box_hyperplane(u_lam: &[f64], u_star: &[f64], c: f64) -> (Vec<f64>, Vec<f64>) {
    let clip = |v: f64| v.clamp(0.0, c);
    let residual = |nu: f64| -> f64 {
        let s1: f64 = u_lam.iter().map(|&v| clip(v - nu)).sum();
        let s2: f64 = u_star.iter().map(|&v| clip(v + nu)).sum();
        s1 - s2
    };
    let bound = u_lam
        .iter()
        .chain(u_star)
        .fold(0.0f64, |m, &v| m.max(v.abs()))
        + c
        + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let nu = 0.5 * (lo + hi);
    (
        u_lam.iter().map(|&v| clip(v - nu)).collect(),
        u_star.iter().map(|&v| clip(v + nu)).collect(),
    )
}

/// Maximal KKT violation of the signed-coefficient dual: the sum of the
/// best feasible up-move and down-move gains (optimal iff <= 0).
pub fn kkt_gap(gram: &[Vec<f64>], targets: &[f64], c: f64, epsilon: f64, deltas: &[f64]) -> f64 {
    let (max_up, max_down) = kkt_extremes(gram, targets, c, epsilon, deltas);
    max_up + max_down
}

/// Bias as the midpoint of the KKT-feasible interval.
pub fn kkt_bias(gram: &[Vec<f64>], targets: &[f64], c: f64, epsilon: f64, deltas: &[f64]) -> f64 {
    let (max_up, max_down) = kkt_extremes(gram, targets, c, epsilon, deltas);
    (max_up - max_down) / 2.0
}

fn kkt_extremes(
    gram: &[Vec<f64>],
    targets: &[f64],
    c: f64,
    epsilon: f64,
    deltas: &[f64],
) -> (f64, f64) {
    let n = targets.len();
    let mut max_up = f64::NEG_INFINITY;
    let mut max_down = f64::NEG_INFINITY;
    for i in 0..n {
        let kd: f64 = (0..n).map(|j| gram[i][j] * deltas[j]).sum();
        let e = kd - targets[i];
        if deltas[i] < c {
            let up = if deltas[i] >= 0.0 { -e - epsilon } else { -e + epsilon };
            max_up = max_up.max(up);
        }
        if deltas[i] > -c {
            let down = if deltas[i] > 0.0 { e + epsilon } else { e - epsilon };
            max_down = max_down.max(down);
        }
    }
    (max_up, max_down)
}
