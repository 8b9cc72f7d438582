//! Restarted, right-preconditioned GMRES on grid states in the weighted inner product.

use crate::grid_fields::State;

pub(crate) struct GmresOutcome {
    pub x: State,
    pub iters: usize,
    pub residual: f64,
}

/// Solve `A x = b` to an absolute residual `tol`, starting from `x0`.
pub(crate) fn gmres(
    a: impl Fn(&State) -> State,
    m: impl Fn(&State) -> State,
    b: &State,
    x0: State,
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> GmresOutcome {
    let mut x = x0;
    let mut r = b.diff(&a(&x));
    let mut beta = r.norm();
    let mut total = 0;
    while beta > tol && total < max_iter && beta.is_finite() {
        let mut basis: Vec<State> = Vec::with_capacity(restart + 1);
        r.scale(1.0 / beta);
        basis.push(r);
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..restart {
            let mut w = a(&m(&basis[j]));
            total += 1;
            for (i, vi) in basis.iter().enumerate() {
                let hij = w.dot(vi);
                h[i][j] = hij;
                w.axpy(-hij, vi);
            }
            let hn = w.norm();
            h[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let den = h[j][j].hypot(h[j + 1][j]);
            if den == 0.0 {
                used = j;
                break;
            }
            cs[j] = h[j][j] / den;
            sn[j] = h[j + 1][j] / den;
            h[j][j] = den;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            let est = g[j + 1].abs();
            if est <= tol || total >= max_iter || hn == 0.0 {
                break;
            }
            w.scale(1.0 / hn);
            basis.push(w);
        }
        if used == 0 {
            break;
        }
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for l in i + 1..used {
                s -= h[i][l] * y[l];
            }
            y[i] = s / h[i][i];
        }
        let mut comb = basis[0].clone();
        comb.scale(y[0]);
        for (yi, vi) in y.iter().zip(&basis).skip(1) {
            comb.axpy(*yi, vi);
        }
        x.axpy(1.0, &m(&comb));
        r = b.diff(&a(&x));
        beta = r.norm();
    }
    GmresOutcome { x, iters: total, residual: beta }
}
