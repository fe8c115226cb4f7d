//! Small dense helpers.

/// Largest eigenvalue of the symmetric positive semidefinite `d×d` matrix `g`
/// (row-major) by power iteration with Rayleigh-quotient estimates. Stops after
/// `max_iter` iterations or when the estimate changes by less than `rel_tol`
/// relatively.
pub fn top_eigenvalue_psd(g: &[f64], d: usize, max_iter: usize, rel_tol: f64) -> f64 {
    debug_assert_eq!(g.len(), d * d);
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 / (1.0 + i as f64)).collect();
    normalize(&mut v);
    let mut w = vec![0.0; d];
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        sym_matvec(g, d, &v, &mut w);
        let rayleigh: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
        let done = (rayleigh - estimate).abs() <= rel_tol * rayleigh.abs();
        estimate = rayleigh;
        if done {
            break;
        }
    }
    estimate
}

fn sym_matvec(g: &[f64], d: usize, v: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        *o = g[r * d..(r + 1) * d].iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Gram matrix `Σ_c z_c z_cᵀ` of `cols` column vectors of length `d` stored
/// contiguously.
pub fn gram_of_columns(z: &[f64], d: usize) -> Vec<f64> {
    let mut g = vec![0.0; d * d];
    for col in z.chunks_exact(d) {
        for r in 0..d {
            let zr = col[r];
            for c in r..d {
                g[r * d + c] += zr * col[c];
            }
        }
    }
    for r in 0..d {
        for c in 0..r {
            g[r * d + c] = g[c * d + r];
        }
    }
    g
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
