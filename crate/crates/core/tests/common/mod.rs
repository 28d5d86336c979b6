//! Brute-force spin-chain matrices on the full `2^N` space.

#![allow(dead_code)]

use num_complex::Complex64;
use zeno_core::ComplexMatrix;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (da, db) = (a.dim(), b.dim());
    ComplexMatrix::from_fn(da * db, |i, j| a[(i / db, j / db)] * b[(i % db, j % db)])
}

// Basis order |0>, |1>; the excitation is |1> with sigma_z |1> = +|1>.
pub fn pauli(name: char) -> ComplexMatrix {
    let rows = match name {
        'i' => [[c(1., 0.), c(0., 0.)], [c(0., 0.), c(1., 0.)]],
        'x' => [[c(0., 0.), c(1., 0.)], [c(1., 0.), c(0., 0.)]],
        'y' => [[c(0., 0.), c(0., -1.)], [c(0., 1.), c(0., 0.)]],
        'z' => [[c(-1., 0.), c(0., 0.)], [c(0., 0.), c(1., 0.)]],
        _ => unreachable!(),
    };
    ComplexMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
}

/// Tensor product with `ops` placed at the given 0-based sites, identity elsewhere.
pub fn on_sites(n: usize, ops: &[(usize, char)]) -> ComplexMatrix {
    let mut out = ComplexMatrix::identity(1);
    for site in 0..n {
        let p = ops.iter().find(|(s, _)| *s == site).map(|(_, p)| *p).unwrap_or('i');
        out = kron(&out, &pauli(p));
    }
    out
}

pub fn full_hamiltonian(n: usize, alpha: f64, beta: f64) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(1 << n);
    for i in 0..n - 1 {
        let xx = on_sites(n, &[(i, 'x'), (i + 1, 'x')]);
        let yy = on_sites(n, &[(i, 'y'), (i + 1, 'y')]);
        h = &h + &(&xx + &yy).scale_real(beta / 2.0);
    }
    for i in 0..n {
        h = &h + &on_sites(n, &[(i, 'z')]).scale_real(alpha);
    }
    h
}

pub fn full_coupling(n: usize, lambda: usize) -> ComplexMatrix {
    let (a, b) = (lambda, lambda + 1);
    &on_sites(n, &[(a, 'x'), (b, 'x')]) + &on_sites(n, &[(a, 'y'), (b, 'y')])
}

/// Full-space index of `|1_site>` (0-based site, leftmost spin is the most significant bit).
pub fn one_hot(n: usize, site: usize) -> usize {
    1 << (n - 1 - site)
}

pub fn reduce(full: &ComplexMatrix, n: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, |i, j| full[(one_hot(n, i), one_hot(n, j))])
}
