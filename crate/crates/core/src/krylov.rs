//! Restarted GMRES for complex, matrix-free operators.

use crate::tensor::C64;

pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    /// y ← A x
    fn apply(&self, x: &[C64], y: &mut [C64]);
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmresOptions {
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions { tol: 1e-10, restart: 100, max_iter: 10_000 }
    }
}

#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub x: Vec<C64>,
    pub iterations: usize,
    /// True relative residual ‖b − Ax‖/‖b‖ at exit.
    pub residual: f64,
    pub converged: bool,
}

pub fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn hdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn relative_residual(op: &dyn LinearOperator, x: &[C64], b: &[C64]) -> f64 {
    let mut ax = vec![C64::default(); b.len()];
    op.apply(x, &mut ax);
    let r: f64 = ax.iter().zip(b).map(|(p, q)| (q - p).norm_sqr()).sum::<f64>().sqrt();
    let nb = norm2(b);
    if nb == 0.0 {
        r
    } else {
        r / nb
    }
}

/// Solves A x = b. With a right preconditioner M the iteration runs on
/// A M y = b and returns x = M y, so the monitored residual is the true one.
pub fn gmres(
    op: &dyn LinearOperator,
    b: &[C64],
    x0: Option<&[C64]>,
    precond: Option<&dyn LinearOperator>,
    opts: &GmresOptions,
) -> GmresOutcome {
    let n = op.dim();
    assert_eq!(b.len(), n);
    let zero = C64::default();
    let bnorm = norm2(b);
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![zero; n]);
    if bnorm == 0.0 {
        return GmresOutcome { x: vec![zero; n], iterations: 0, residual: 0.0, converged: true };
    }
    let m = opts.restart.max(1).min(n.max(1));
    let mut iterations = 0;
    let mut tmp = vec![zero; n];
    let mut w = vec![zero; n];

    let apply_am = |v: &[C64], out: &mut [C64], tmp: &mut [C64]| match precond {
        Some(p) => {
            p.apply(v, tmp);
            op.apply(tmp, out);
        }
        None => op.apply(v, out),
    };

    loop {
        // r = b − A x
        op.apply(&x, &mut w);
        let r: Vec<C64> = b.iter().zip(&w).map(|(p, q)| p - q).collect();
        let beta = norm2(&r);
        let rel = beta / bnorm;
        if rel <= opts.tol || iterations >= opts.max_iter {
            return GmresOutcome { x, iterations, residual: rel, converged: rel <= opts.tol };
        }

        let mut v: Vec<Vec<C64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|c| c / beta).collect());
        let mut hcols: Vec<Vec<C64>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<C64> = Vec::with_capacity(m);
        let mut g = vec![zero; m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k_used = 0;

        for j in 0..m {
            apply_am(&v[j], &mut w, &mut tmp);
            iterations += 1;
            let mut h = vec![zero; j + 2];
            for (i, vi) in v.iter().enumerate() {
                let hij = hdot(vi, &w);
                h[i] = hij;
                for (wk, vk) in w.iter_mut().zip(vi) {
                    *wk -= hij * vk;
                }
            }
            let hn = norm2(&w);
            h[j + 1] = C64::new(hn, 0.0);

            for i in 0..j {
                let (a, bb) = (h[i], h[i + 1]);
                h[i] = cs[i] * a + sn[i] * bb;
                h[i + 1] = -sn[i].conj() * a + cs[i] * bb;
            }
            let (a, bb) = (h[j], h[j + 1]);
            let rn = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            let (c, s) = if rn == 0.0 {
                (1.0, zero)
            } else if a.norm() == 0.0 {
                (0.0, C64::new(1.0, 0.0) * (bb.conj() / bb.norm()))
            } else {
                let phase = a / a.norm();
                (a.norm() / rn, phase * bb.conj() / rn)
            };
            h[j] = c * a + s * bb;
            h[j + 1] = zero;
            let gj = g[j];
            g[j] = c * gj;
            g[j + 1] = -s.conj() * gj;
            cs.push(c);
            sn.push(s);
            hcols.push(h);
            k_used = j + 1;

            let est = g[j + 1].norm() / bnorm;
            if est <= opts.tol || hn == 0.0 || iterations >= opts.max_iter {
                break;
            }
            v.push(w.iter().map(|c| c / hn).collect());
        }

        // back substitution on the triangular k×k system
        let mut y = vec![zero; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for l in i + 1..k_used {
                s -= hcols[l][i] * y[l];
            }
            y[i] = s / hcols[i][i];
        }
        let mut dy = vec![zero; n];
        for (l, yl) in y.iter().enumerate() {
            for (d, vl) in dy.iter_mut().zip(&v[l]) {
                *d += yl * vl;
            }
        }
        match precond {
            Some(p) => {
                p.apply(&dy, &mut tmp);
                for (xi, t) in x.iter_mut().zip(&tmp) {
                    *xi += t;
                }
            }
            None => {
                for (xi, t) in x.iter_mut().zip(&dy) {
                    *xi += t;
                }
            }
        }
    }
}

/// Dense operator, mostly for tests and small systems.
pub struct DenseOperator {
    pub n: usize,
    pub data: Vec<C64>,
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.data[i * self.n..(i + 1) * self.n].iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}
