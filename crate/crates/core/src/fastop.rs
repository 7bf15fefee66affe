//! Matrix-free application of quantized symbols.
//!
//! Evolution applies P and the jump operators thousands of times per run;
//! dense products would cost O(N^3) each. Every operator built from a
//! polynomial-plus-remainder symbol decomposes into diagonal factors
//! (functions of x), Fourier multipliers (functions of the momentum), and
//! short symmetrized products for mixed monomials, all of which act on a
//! matrix in O(N^2 log N). Genuinely two-dimensional remainders fall back to
//! a dense factor.

use ndarray::{Array1, Array2};

use crate::fft;
use crate::phase_space::{PhaseSpaceGrid, Symbol};
use crate::weyl;
use crate::C64;

#[derive(Debug, Clone)]
enum Primitive {
    /// Multiplication by f(x_i): scales rows on the left, columns on the right.
    Diag(Array1<C64>),
    /// Fourier multiplier m(kappa) in the position transform.
    Mult(Array1<C64>),
}

impl Primitive {
    fn apply_left(&self, a: &mut Array2<C64>) {
        match self {
            Primitive::Diag(f) => {
                let n = f.len();
                for i in 0..n {
                    let c = f[i];
                    for j in 0..n {
                        a[(i, j)] *= c;
                    }
                }
            }
            Primitive::Mult(m) => {
                fft::mult_cols(a, m.as_slice().unwrap());
            }
        }
    }

    fn apply_right(&self, a: &mut Array2<C64>) {
        match self {
            Primitive::Diag(f) => {
                let n = f.len();
                for i in 0..n {
                    for j in 0..n {
                        a[(i, j)] *= f[j];
                    }
                }
            }
            Primitive::Mult(m) => {
                // A * (IF diag(m) F): DFT matrices are symmetric, so the
                // factors act row-wise in right-to-left order.
                fft::fft_rows(a, true);
                let n = m.len();
                for i in 0..n {
                    for j in 0..n {
                        a[(i, j)] *= m[j];
                    }
                }
                fft::fft_rows(a, false);
            }
        }
    }

    fn adjoint(&self) -> Primitive {
        match self {
            Primitive::Diag(f) => Primitive::Diag(f.mapv(|z| z.conj())),
            Primitive::Mult(m) => Primitive::Mult(m.mapv(|z| z.conj())),
        }
    }
}

#[derive(Debug, Clone)]
struct Term {
    coeff: C64,
    factors: Vec<Primitive>,
}

/// Structured form of one quantized symbol.
#[derive(Debug, Clone)]
pub(crate) struct FastOp {
    n: usize,
    terms: Vec<Term>,
    dense: Option<Array2<C64>>,
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut b = 1.0f64;
    for i in 0..k {
        b = b * (n - i) as f64 / (i + 1) as f64;
    }
    b
}

impl FastOp {
    /// Decompose a symbol into fast factors. The polynomial part maps to
    /// exact diagonal/multiplier/McCoy terms; a remainder that depends only
    /// on x (or only on xi) joins the corresponding factor, and anything
    /// else is quantized densely.
    pub fn from_symbol(sym: &Symbol) -> FastOp {
        let grid = sym.grid();
        let n = grid.n_points();
        let mut diag = Array1::<C64>::zeros(n);
        let mut mult = Array1::<C64>::zeros(n);
        let mut have_diag = false;
        let mut have_mult = false;
        let mut terms: Vec<Term> = Vec::new();
        let mut dense: Option<Array2<C64>> = None;

        let xs: Vec<f64> = (0..n).map(|i| grid.x(i)).collect();
        // momentum eigenvalue of FFT bin b is h * kappa_b
        let hk: Vec<f64> = (0..n).map(|b| grid.h() * grid.kappa_x(b)).collect();

        for m in sym.poly() {
            if m.xi_pow == 0 {
                for i in 0..n {
                    diag[i] += m.coeff * xs[i].powi(m.x_pow as i32);
                }
                have_diag = true;
            } else if m.x_pow == 0 {
                for b in 0..n {
                    mult[b] += m.coeff * hk[b].powi(m.xi_pow as i32);
                }
                have_mult = true;
            } else {
                // Weyl symmetrization of x^a xi^b:
                // 2^{-a} sum_k C(a,k) X^k M^b X^{a-k}
                let a_pow = m.x_pow;
                let b_pow = m.xi_pow;
                let mvec: Array1<C64> =
                    (0..n).map(|b| C64::from(hk[b].powi(b_pow as i32))).collect();
                for k in 0..=a_pow {
                    let c = m.coeff * binomial(a_pow, k) / 2f64.powi(a_pow as i32);
                    let mut factors = Vec::new();
                    if k > 0 {
                        factors.push(Primitive::Diag(
                            (0..n).map(|i| C64::from(xs[i].powi(k as i32))).collect(),
                        ));
                    }
                    factors.push(Primitive::Mult(mvec.clone()));
                    if a_pow - k > 0 {
                        factors.push(Primitive::Diag(
                            (0..n)
                                .map(|i| C64::from(xs[i].powi((a_pow - k) as i32)))
                                .collect(),
                        ));
                    }
                    terms.push(Term { coeff: c, factors });
                }
            }
        }

        let rem = sym.remainder_values();
        let scale = sym.max_abs().max(1.0);
        let rem_max = rem.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if rem_max > 1e-14 * scale {
            // x-only: columns constant along xi
            let mut col_var: f64 = 0.0;
            let mut row_var: f64 = 0.0;
            for i in 0..n {
                for k in 0..n {
                    col_var = col_var.max((rem[(i, k)] - rem[(i, 0)]).norm());
                    row_var = row_var.max((rem[(i, k)] - rem[(0, k)]).norm());
                }
            }
            if col_var < 1e-13 * scale {
                for i in 0..n {
                    diag[i] += rem[(i, 0)];
                }
                have_diag = true;
            } else if row_var < 1e-13 * scale {
                // xi-only remainder: multiplier bin b reads the sample at
                // node (freq(b) + N/2 - xi_center/dxi) mod N
                let shift = (grid.xi_center() / grid.dxi()).round() as i64;
                for b in 0..n {
                    let f = fft::bin_freq(b, n);
                    let k = (f + n as i64 / 2 - shift).rem_euclid(n as i64) as usize;
                    mult[b] += rem[(0, k)];
                }
                have_mult = true;
            } else {
                let rsym = Symbol::from_values(grid.clone(), rem).expect("finite remainder");
                dense = Some(weyl::quantize(&rsym).entries().clone());
            }
        }

        if have_diag {
            terms.push(Term {
                coeff: C64::new(1.0, 0.0),
                factors: vec![Primitive::Diag(diag)],
            });
        }
        if have_mult {
            terms.push(Term {
                coeff: C64::new(1.0, 0.0),
                factors: vec![Primitive::Mult(mult)],
            });
        }
        FastOp { n, terms, dense }
    }

    pub fn adjoint(&self) -> FastOp {
        FastOp {
            n: self.n,
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coeff: t.coeff.conj(),
                    factors: t.factors.iter().rev().map(|f| f.adjoint()).collect(),
                })
                .collect(),
            dense: self.dense.as_ref().map(|d| {
                let mut out = Array2::<C64>::zeros(d.raw_dim());
                for i in 0..self.n {
                    for j in 0..self.n {
                        out[(i, j)] = d[(j, i)].conj();
                    }
                }
                out
            }),
        }
    }

    /// Op * A.
    pub fn apply_left(&self, a: &Array2<C64>) -> Array2<C64> {
        let mut out = Array2::<C64>::zeros(a.raw_dim());
        for t in &self.terms {
            let mut work = a.clone();
            for f in t.factors.iter().rev() {
                f.apply_left(&mut work);
            }
            out.zip_mut_with(&work, |acc, v| *acc += t.coeff * v);
        }
        if let Some(d) = &self.dense {
            out += &d.dot(a);
        }
        out
    }

    /// A * Op.
    pub fn apply_right(&self, a: &Array2<C64>) -> Array2<C64> {
        let mut out = Array2::<C64>::zeros(a.raw_dim());
        for t in &self.terms {
            let mut work = a.clone();
            for f in t.factors.iter() {
                f.apply_right(&mut work);
            }
            out.zip_mut_with(&work, |acc, v| *acc += t.coeff * v);
        }
        if let Some(d) = &self.dense {
            out += &a.dot(d);
        }
        out
    }

    /// Dense matrix realization.
    pub fn to_matrix(&self, grid: &PhaseSpaceGrid) -> Array2<C64> {
        let id = Array2::<C64>::eye(grid.n_points());
        self.apply_left(&id)
    }
}
