//! Nelder-Mead simplex minimiser used by the mortality fit.

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// Stop when every vertex lies within this distance of the best vertex.
    pub x_tol: f64,
    /// Initial step along each axis.
    pub step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_evals: 20_000,
            f_tol: 1e-22,
            x_tol: 1e-12,
            step: 0.25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, start: &[f64], opts: &SimplexOptions) -> Minimum {
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(start.to_vec());
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += opts.step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut evals = n + 1;

    while evals < opts.max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[n] - values[0];
        let size = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= opts.f_tol && size <= opts.x_tol {
            break;
        }
        if size <= opts.x_tol * 1e-3 {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + coef * (w - c))
                .collect()
        };

        let reflected = along(-1.0);
        let fr = f(&reflected);
        evals += 1;
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            evals += 1;
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let (contracted, fc) = if fr < values[n] {
                let c = along(-0.5);
                let fc = f(&c);
                (c, fc)
            } else {
                let c = along(0.5);
                let fc = f(&c);
                (c, fc)
            };
            evals += 1;
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=n {
                    for j in 0..n {
                        simplex[i][j] = best[j] + 0.5 * (simplex[i][j] - best[j]);
                    }
                    values[i] = f(&simplex[i]);
                }
                evals += n;
            }
        }
    }

    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    Minimum {
        x: simplex[best].clone(),
        value: values[best],
        evals,
    }
}

/// Nelder-Mead restarted from its own optimum until the value stops improving.
pub fn nelder_mead_restarted<F: Fn(&[f64]) -> f64>(
    f: F,
    start: &[f64],
    opts: &SimplexOptions,
    max_restarts: usize,
) -> Minimum {
    let mut best = nelder_mead(&f, start, opts);
    let mut step = opts.step;
    for _ in 0..max_restarts {
        step *= 0.5;
        let o = SimplexOptions { step, ..*opts };
        let next = nelder_mead(&f, &best.x, &o);
        let improved = next.value < best.value;
        let evals = best.evals + next.evals;
        if improved {
            best = Minimum { evals, ..next };
        } else {
            best.evals = evals;
            if step < opts.x_tol {
                break;
            }
        }
    }
    best
}

/// Projected Levenberg-Marquardt for `min Σ r_i(x)²` subject to `x ≥ lower`.
///
/// `model(x)` returns the residuals and the Jacobian rows `∂r_i/∂x`.
pub fn levenberg_marquardt<F>(model: F, start: &[f64], lower: &[f64], max_iter: usize) -> Minimum
where
    F: Fn(&[f64]) -> (Vec<f64>, Vec<Vec<f64>>),
{
    let n = start.len();
    let project = |x: &mut [f64]| {
        for (v, &lo) in x.iter_mut().zip(lower) {
            *v = v.max(lo);
        }
    };
    let sum_sq = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let mut x = start.to_vec();
    project(&mut x);
    let (mut r, mut jac) = model(&x);
    let mut value = sum_sq(&r);
    let mut evals = 1;
    let mut damping = 1e-3;
    for _ in 0..max_iter {
        let mut jtj = vec![vec![0.0; n]; n];
        let mut jtr = vec![0.0; n];
        for (ri, row) in r.iter().zip(&jac) {
            for a in 0..n {
                jtr[a] += row[a] * ri;
                for b in 0..n {
                    jtj[a][b] += row[a] * row[b];
                }
            }
        }
        let mut improved = false;
        while damping < 1e16 {
            let mut m = jtj.clone();
            for (a, row) in m.iter_mut().enumerate() {
                row[a] += damping * jtj[a][a].max(1e-300);
            }
            let rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let Some(step) = solve(m, rhs) else {
                damping *= 4.0;
                continue;
            };
            let mut trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            project(&mut trial);
            let (tr, tj) = model(&trial);
            evals += 1;
            let tv = sum_sq(&tr);
            if tv.is_finite() && tv < value {
                let gain = value - tv;
                x = trial;
                r = tr;
                jac = tj;
                value = tv;
                damping = (damping / 3.0).max(1e-15);
                improved = gain > 1e-15 * value.max(1e-300);
                break;
            }
            damping *= 4.0;
        }
        if !improved {
            break;
        }
    }
    Minimum { x, value, evals }
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 || !a[piv][col].is_finite() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let (upper, lower) = a.split_at_mut(row);
            for (dst, src) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *dst -= f * src;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}
