//! Eigenvalues of constant couplings and the spectral consensus criterion.
//!
//! A constant coupling drives every initial state to consensus exactly when
//! zero is a simple eigenvalue and every other eigenvalue lies strictly in
//! the open left half-plane. Graph-theoretically the same holds exactly when
//! the associated digraph has a root node; [`spectral_graph_equivalence`]
//! computes both sides independently.
//!
//! Eigenvalues come from balancing, Householder reduction to Hessenberg
//! form and Francis double-shift QR.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::digraph::{delta_digraph, DigraphError, NodeSet};
use crate::math;
use crate::matrix::Matrix;
use crate::metzler::CouplingMatrix;

pub const MAX_DIM: usize = 64;
pub const DEFAULT_GAP_TOL: f64 = 1e-7;
const MAX_ITERATIONS_PER_EIGENVALUE: usize = 60;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectralError {
    #[error("matrix of dimension {0} exceeds the supported size")]
    TooLarge(usize),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("QR iteration did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("eigenvalue {0} lies between the zero and stability tolerances")]
    AmbiguousSpectrum(Complex64),
    #[error(transparent)]
    Digraph(#[from] DigraphError),
}

/// All eigenvalues, sorted by real part descending (ties by imaginary part
/// descending).
pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex64>, SpectralError> {
    let n = a.dim();
    if n > MAX_DIM {
        return Err(SpectralError::TooLarge(n));
    }
    if !a.is_finite() {
        return Err(SpectralError::NonFinite);
    }
    let mut h = a.to_rows();
    balance(&mut h);
    hessenberg(&mut h);
    let mut ev = hqr(&mut h)?;
    ev.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    Ok(ev)
}

/// Diagonal similarity by powers of two that evens out row and column norms.
fn balance(a: &mut [Vec<f64>]) {
    const RADIX: f64 = 2.0;
    let n = a.len();
    loop {
        let mut done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in (0..n).filter(|&j| j != i) {
                c += a[j][i].abs();
                r += a[i][j].abs();
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= RADIX * RADIX;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= RADIX * RADIX;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let g = 1.0 / f;
                for v in a[i].iter_mut() {
                    *v *= g;
                }
                for row in a.iter_mut() {
                    row[i] *= f;
                }
            }
        }
        if done {
            break;
        }
    }
}

/// Householder reduction to upper Hessenberg form.
fn hessenberg(a: &mut [Vec<f64>]) {
    let n = a.len();
    for k in 0..n.saturating_sub(2) {
        let norm = math::sqrt((k + 1..n).map(|i| a[i][k] * a[i][k]).sum());
        if norm == 0.0 {
            continue;
        }
        let alpha = -math::copysign(norm, a[k + 1][k]);
        let mut v: Vec<f64> = (k + 1..n).map(|i| a[i][k]).collect();
        v[0] -= alpha;
        let vn = math::sqrt(v.iter().map(|x| x * x).sum());
        if vn == 0.0 {
            continue;
        }
        for x in v.iter_mut() {
            *x /= vn;
        }
        for j in 0..n {
            let d: f64 = v.iter().enumerate().map(|(i, vi)| vi * a[k + 1 + i][j]).sum();
            for (i, vi) in v.iter().enumerate() {
                a[k + 1 + i][j] -= 2.0 * vi * d;
            }
        }
        for row in a.iter_mut() {
            let d: f64 = v.iter().enumerate().map(|(i, vi)| vi * row[k + 1 + i]).sum();
            for (i, vi) in v.iter().enumerate() {
                row[k + 1 + i] -= 2.0 * vi * d;
            }
        }
        a[k + 1][k] = alpha;
        for row in a.iter_mut().skip(k + 2) {
            row[k] = 0.0;
        }
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix (destroyed).
fn hqr(a: &mut [Vec<f64>]) -> Result<Vec<Complex64>, SpectralError> {
    let n = a.len();
    let mut ev = vec![Complex64::new(0.0, 0.0); n];
    if n == 0 {
        return Ok(ev);
    }
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n as isize - 1;
    let mut t = 0.0;
    let mut total = 0usize;
    while nn >= 0 {
        let mut its = 0usize;
        loop {
            let nu = nn as usize;
            let mut l = nu;
            while l >= 1 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[nu][nu];
            if l == nu {
                ev[nu] = Complex64::new(x + t, 0.0);
                nn -= 1;
                break;
            }
            let mut y = a[nu - 1][nu - 1];
            let mut w = a[nu][nu - 1] * a[nu - 1][nu];
            if l == nu - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let z = math::sqrt(q.abs());
                x += t;
                if q >= 0.0 {
                    let z = p + math::copysign(z, p);
                    ev[nu - 1] = Complex64::new(x + z, 0.0);
                    ev[nu] = Complex64::new(if z != 0.0 { x - w / z } else { x + z }, 0.0);
                } else {
                    ev[nu - 1] = Complex64::new(x + p, -z);
                    ev[nu] = Complex64::new(x + p, z);
                }
                nn -= 2;
                break;
            }
            if its == MAX_ITERATIONS_PER_EIGENVALUE {
                return Err(SpectralError::NoConvergence(total));
            }
            if its > 0 && its.is_multiple_of(10) {
                // exceptional shift
                t += x;
                for (i, row) in a.iter_mut().enumerate().take(nu + 1) {
                    row[i] -= x;
                }
                let s = a[nu][nu - 1].abs() + a[nu - 1][nu - 2].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            total += 1;

            let (mut p, mut q, mut r);
            let mut m = nu - 2;
            loop {
                let z = a[m][m];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / a[m + 1][m] + a[m][m + 1];
                q = a[m + 1][m + 1] - z - rr - ss;
                r = a[m + 2][m + 1];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                a[i][i - 2] = 0.0;
                if i != m + 2 {
                    a[i][i - 3] = 0.0;
                }
            }
            let mut k = m;
            while k < nu {
                if k != m {
                    p = a[k][k - 1];
                    q = a[k + 1][k - 1];
                    r = if k != nu - 1 { a[k + 2][k - 1] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = math::copysign(math::sqrt(p * p + q * q + r * r), p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[k][k - 1] = -a[k][k - 1];
                        }
                    } else {
                        a[k][k - 1] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nu {
                        let mut pp = a[k][j] + q * a[k + 1][j];
                        if k != nu - 1 {
                            pp += r * a[k + 2][j];
                            a[k + 2][j] -= pp * z;
                        }
                        a[k + 1][j] -= pp * y;
                        a[k][j] -= pp * x;
                    }
                    let mmin = if nu < k + 3 { nu } else { k + 3 };
                    for row in a.iter_mut().take(mmin + 1).skip(l) {
                        let mut pp = x * row[k] + y * row[k + 1];
                        if k != nu - 1 {
                            pp += z * row[k + 2];
                            row[k + 2] -= pp * r;
                        }
                        row[k + 1] -= pp * q;
                        row[k] -= pp;
                    }
                }
                k += 1;
            }
        }
    }
    Ok(ev)
}

/// Exactly one eigenvalue within `gap_tol` of zero and all others with real
/// part at most `−gap_tol`.
pub fn consensus_spectrum_verdict(a: &CouplingMatrix, gap_tol: f64) -> Result<bool, SpectralError> {
    verdict_from(&eigenvalues(a.matrix())?, gap_tol)
}

fn verdict_from(ev: &[Complex64], gap_tol: f64) -> Result<bool, SpectralError> {
    let mut zeros = 0;
    for &l in ev {
        if l.norm() <= gap_tol {
            zeros += 1;
        } else if l.re > -gap_tol {
            return Err(SpectralError::AmbiguousSpectrum(l));
        }
    }
    Ok(zeros == 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGraphReport {
    pub eigenvalues: Vec<Complex64>,
    pub spectrum_verdict: bool,
    pub root_nodes: NodeSet,
    pub agree: bool,
}

impl SpectralGraphReport {
    pub fn graph_verdict(&self) -> bool {
        !self.root_nodes.is_empty()
    }
}

/// Compares the spectral verdict with root existence in the digraph of all
/// positive couplings.
pub fn spectral_graph_equivalence(a: &CouplingMatrix, gap_tol: f64) -> Result<SpectralGraphReport, SpectralError> {
    let ev = eigenvalues(a.matrix())?;
    let spectrum_verdict = verdict_from(&ev, gap_tol)?;
    let root_nodes = delta_digraph(a, 0.0)?.root_nodes();
    let agree = spectrum_verdict == !root_nodes.is_empty();
    Ok(SpectralGraphReport { eigenvalues: ev, spectrum_verdict, root_nodes, agree })
}
