//! Small dense Hermitian/complex matrix utilities used by diagnostics and
//! test oracles: cyclic Jacobi eigenvalues and a scaling-and-squaring matrix
//! exponential. Dimensions stay in the low hundreds, so simplicity wins over
//! sophistication.

use ndarray::Array2;

use crate::C64;

/// Eigenvalues of a Hermitian matrix by cyclic Jacobi rotations, ascending.
pub fn hermitian_eigenvalues(a: &Array2<C64>) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut m = a.clone();
    // symmetrize away rounding-level defects
    for i in 0..n {
        for j in 0..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)].conj());
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
    let off = |m: &Array2<C64>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[(i, j)].norm_sqr();
                }
            }
        }
        s.sqrt()
    };
    let scale: f64 = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for _sweep in 0..60 {
        if off(&m) <= 1e-13 * scale.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.norm() <= 1e-300 {
                    continue;
                }
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                // unitary 2x2 diagonalization of [[app, apq], [conj(apq), aqq]]
                let phi = apq / apq.norm();
                let tau = (aqq - app) / (2.0 * apq.norm());
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let sp = phi * s;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = mkp * c - mkq * sp.conj();
                    m[(k, q)] = mkp * sp + mkq * c;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = mpk * c - mqk * sp;
                    m[(q, k)] = mpk * sp.conj() + mqk * c;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eig
}

/// Matrix exponential by scaling and squaring with a degree-6 Taylor-Pade
/// style core. Adequate for the unitary-conjugation oracles in tests.
pub fn expm(a: &Array2<C64>) -> Array2<C64> {
    let n = a.nrows();
    let norm1: f64 = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if norm1 > 0.5 {
        (norm1 / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.mapv(|z| z / 2f64.powi(s));
    // Taylor to degree 12 on the scaled matrix (||scaled|| <= 0.5)
    let mut term = Array2::<C64>::eye(n);
    let mut sum = Array2::<C64>::eye(n);
    for k in 1..=12 {
        term = term.dot(&scaled).mapv(|z| z / k as f64);
        sum += &term;
    }
    let mut out = sum;
    for _ in 0..s {
        out = out.dot(&out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_eigenvalues_of_known_matrix() {
        // [[2, i], [-i, 2]] has eigenvalues 1 and 3
        let mut m = Array2::<C64>::zeros((2, 2));
        m[(0, 0)] = C64::new(2.0, 0.0);
        m[(1, 1)] = C64::new(2.0, 0.0);
        m[(0, 1)] = C64::new(0.0, 1.0);
        m[(1, 0)] = C64::new(0.0, -1.0);
        let e = hermitian_eigenvalues(&m);
        assert!((e[0] - 1.0).abs() < 1e-12);
        assert!((e[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn expm_of_pauli_rotation() {
        // exp(i t sigma_x) = cos t I + i sin t sigma_x
        let t = 0.7;
        let mut m = Array2::<C64>::zeros((2, 2));
        m[(0, 1)] = C64::new(0.0, t);
        m[(1, 0)] = C64::new(0.0, t);
        let e = expm(&m);
        assert!((e[(0, 0)] - C64::new(t.cos(), 0.0)).norm() < 1e-12);
        assert!((e[(0, 1)] - C64::new(0.0, t.sin())).norm() < 1e-12);
    }
}
