//! The quantization dictionary: symbol -> matrix (Weyl quantization),
//! matrix -> symbol (Wigner transform), Hilbert-Schmidt norms, the truncated
//! Moyal star product, and coherent states.
//!
//! Kernel midpoints (x+y)/2 land on the half-step grid and are evaluated by
//! Fourier interpolation on the 2N-refined grid, with the midpoint taken
//! along the minimal periodic displacement between the two nodes. With that
//! convention each symbol plane wave maps to a shift-and-modulate matrix of
//! unit weight, the family is orthogonal, and the transform is exactly
//! unitary up to (2*pi*h)^{-1/2}: round trips invert to rounding error and
//! the Hilbert-Schmidt norm of Op(a) equals (2*pi*h)^{-1/2} ||a||_L2.
//!
//! Matrices absorb the quadrature weight dx, so they compose by plain matrix
//! multiplication and the trace of a density matrix is the plain trace.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::fft;
use crate::phase_space::{spectral_derivative, Axis, PhaseSpaceGrid, Symbol};
use crate::C64;

/// Dense operator on the position grid. Entries are dx * K(x_i, x_j) for the
/// integral kernel K.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    grid: PhaseSpaceGrid,
    entries: Array2<C64>,
}

impl OperatorMatrix {
    pub fn new(grid: PhaseSpaceGrid, entries: Array2<C64>) -> Result<Self> {
        let n = grid.n_points();
        if entries.dim() != (n, n) {
            return Err(Error::ShapeMismatch {
                expected: format!("({n}, {n})"),
                got: format!("{:?}", entries.dim()),
            });
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFiniteSample {
                x: f64::NAN,
                xi: f64::NAN,
            });
        }
        Ok(Self { grid, entries })
    }

    pub fn identity(grid: &PhaseSpaceGrid) -> Self {
        let n = grid.n_points();
        let mut entries = Array2::<C64>::zeros((n, n));
        for i in 0..n {
            entries[(i, i)] = C64::new(1.0, 0.0);
        }
        Self {
            grid: grid.clone(),
            entries,
        }
    }

    pub fn grid(&self) -> &PhaseSpaceGrid {
        &self.grid
    }

    pub fn entries(&self) -> &Array2<C64> {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut Array2<C64> {
        &mut self.entries
    }

    pub fn same_grid(&self, other: &OperatorMatrix) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn adjoint(&self) -> OperatorMatrix {
        let n = self.grid.n_points();
        let mut entries = Array2::<C64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                entries[(i, j)] = self.entries[(j, i)].conj();
            }
        }
        OperatorMatrix {
            grid: self.grid.clone(),
            entries,
        }
    }

    pub fn matmul(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.same_grid(other)?;
        Ok(OperatorMatrix {
            grid: self.grid.clone(),
            entries: self.entries.dot(&other.entries),
        })
    }

    pub fn trace(&self) -> C64 {
        (0..self.grid.n_points())
            .map(|i| self.entries[(i, i)])
            .sum()
    }

    pub fn add(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.same_grid(other)?;
        Ok(OperatorMatrix {
            grid: self.grid.clone(),
            entries: &self.entries + &other.entries,
        })
    }

    pub fn sub(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.same_grid(other)?;
        Ok(OperatorMatrix {
            grid: self.grid.clone(),
            entries: &self.entries - &other.entries,
        })
    }

    pub fn scaled(&self, c: C64) -> OperatorMatrix {
        OperatorMatrix {
            grid: self.grid.clone(),
            entries: self.entries.mapv(|z| z * c),
        }
    }

    /// Relative hermiticity defect ||A - A*|| / ||A||.
    pub fn herm_defect(&self) -> f64 {
        let adj = self.adjoint();
        let num = hs_norm(&self.sub(&adj).unwrap());
        let den = hs_norm(self).max(f64::MIN_POSITIVE);
        num / den
    }
}

/// Hilbert-Schmidt norm: plain Frobenius norm of the dx-weighted matrix.
pub fn hs_norm(a: &OperatorMatrix) -> f64 {
    a.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Hilbert-Schmidt inner product <A, B> = tr(A B*).
pub fn hs_inner(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<C64> {
    a.same_grid(b)?;
    Ok(a
        .entries
        .iter()
        .zip(b.entries.iter())
        .map(|(x, y)| x * y.conj())
        .sum())
}

fn psi_phase(grid: &PhaseSpaceGrid) -> f64 {
    grid.dx() * grid.xi_start() / grid.h()
}

/// Discrete Weyl quantization of a symbol:
/// K(x, y) = (2 pi h)^{-1} sum_xi a((x+y)/2, xi) e^{i (x-y) xi / h} dxi,
/// midpoints on the half-step grid by Fourier interpolation, entries scaled
/// by dx. Real symbols yield Hermitian matrices.
///
/// A symbol carrying a polynomial part is quantized structurally: monomials
/// become exact diagonal factors, Fourier multipliers, and symmetrized
/// products, and only the periodic remainder goes through the grid
/// transform. Sampling an unbounded monomial on the box and transforming the
/// values would smuggle the box-edge discontinuity into the operator (for
/// mixed monomials it even breaks hermiticity); the structural route is the
/// multiplication-operator-exact quantization.
pub fn quantize(a: &Symbol) -> OperatorMatrix {
    if !a.poly().is_empty() {
        let fast = crate::fastop::FastOp::from_symbol(a);
        return OperatorMatrix {
            grid: a.grid().clone(),
            entries: fast.to_matrix(a.grid()),
        };
    }
    let grid = a.grid().clone();
    let n = grid.n_points();
    let half = fft::upsample_cols_2x(a.values());
    // xi sum as a row DFT: F(m, q) = sum_k half(m, k) w^{-qk}
    let mut f = half;
    fft::fft_rows(&mut f, false);

    let theta = psi_phase(&grid);
    let mut entries = Array2::<C64>::zeros((n, n));
    let half_n = n as i64 / 2;
    for i in 0..n {
        for d in -half_n..half_n {
            let j = (i as i64 + d).rem_euclid(n as i64) as usize;
            let m = (2 * i as i64 + d).rem_euclid(2 * n as i64) as usize;
            let q = d.rem_euclid(n as i64) as usize;
            let phase = C64::from_polar(1.0, -theta * d as f64);
            entries[(i, j)] = phase * f[(m, q)] / n as f64;
        }
    }
    OperatorMatrix { grid, entries }
}

/// Discrete Wigner/Weyl symbol of an operator, the exact inverse of
/// [`quantize`] on the grid.
pub fn weyl_symbol(a: &OperatorMatrix) -> Symbol {
    let grid = a.grid().clone();
    let n = grid.n_points();
    let half_n = n as i64 / 2;
    let theta = psi_phase(&grid);

    // redistribute matrix entries onto the (midpoint, difference) lattice
    let mut g = Array2::<C64>::zeros((2 * n, n));
    for i in 0..n {
        for d in -half_n..half_n {
            let j = (i as i64 + d).rem_euclid(n as i64) as usize;
            let m = (2 * i as i64 + d).rem_euclid(2 * n as i64) as usize;
            let q = d.rem_euclid(n as i64) as usize;
            let phase = C64::from_polar(1.0, theta * d as f64);
            g[(m, q)] = phase * a.entries[(i, j)] * n as f64;
        }
    }

    // per difference class, undo the half-step interpolation on its parity
    // coset: t_r = G(2r + par, q), g_hat(alpha) = (1/N) sum_r t_r w^{-alpha r}
    let omega_half = std::f64::consts::PI / n as f64;
    let mut c = Array2::<C64>::zeros((n, n));
    let mut t = vec![C64::default(); n];
    for q in 0..n {
        let par = q % 2;
        for r in 0..n {
            t[r] = g[(2 * r + par, q)];
        }
        fft::fft_vec(&mut t);
        for b in 0..n {
            let alpha = fft::bin_freq(b, n);
            let tw = C64::from_polar(1.0, -omega_half * alpha as f64 * par as f64);
            c[(b, q)] = t[b] * tw / n as f64;
        }
    }

    // difference index -> xi index, then x-frequency -> x index
    fft::fft_rows(&mut c, true);
    let mut out = c;
    {
        let p = fft::plan(n, true);
        let mut tcols = out.t().as_standard_layout().into_owned();
        let mut scratch = vec![C64::default(); p.get_inplace_scratch_len()];
        for row in tcols.as_slice_mut().unwrap().chunks_mut(n) {
            p.process_with_scratch(row, &mut scratch);
        }
        out.assign(&tcols.t());
    }
    Symbol::from_values(grid, out).expect("inverse transform produced finite values")
}

/// Truncated Moyal star product of order `order`:
/// sum_{j<=order} (1/j!) (h/2i)^j sigma(D)^j a(x,xi) b(y,eta) |_{y=x,eta=xi},
/// with the sign convention making the first-order term (h/2i){a, b}.
pub fn moyal_star(a: &Symbol, b: &Symbol, order: usize) -> Result<Symbol> {
    a.same_grid(b)?;
    if order > 6 {
        return Err(Error::StarOrderTooLarge(order));
    }
    let grid = a.grid().clone();
    let h = grid.h();

    // cache mixed derivatives up to total degree `order`
    let mut da = vec![vec![None; order + 1]; order + 1];
    let mut db = vec![vec![None; order + 1]; order + 1];
    for p in 0..=order {
        for q in 0..=(order - p) {
            let dxa = spectral_derivative(a, Axis::X, p as u32);
            da[p][q] = Some(spectral_derivative(&dxa, Axis::Xi, q as u32));
            let dxb = spectral_derivative(b, Axis::X, p as u32);
            db[p][q] = Some(spectral_derivative(&dxb, Axis::Xi, q as u32));
        }
    }

    let mut out = Array2::<C64>::zeros(a.values().raw_dim());
    let mut factorial = 1.0;
    for j in 0..=order {
        if j > 0 {
            factorial *= j as f64;
        }
        // (h / 2i)^j / j!
        let coeff = (C64::new(0.0, -h / 2.0)).powu(j as u32) / factorial;
        let mut term = Array2::<C64>::zeros(a.values().raw_dim());
        let mut binom = 1.0f64;
        for k in 0..=j {
            if k > 0 {
                binom = binom * (j - k + 1) as f64 / k as f64;
            }
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let fa = da[k][j - k].as_ref().unwrap().values();
            let fb = db[j - k][k].as_ref().unwrap().values();
            let w = binom * sign;
            term.zip_mut_with(&(fa * fb), |acc, v| *acc += w * v);
        }
        out.zip_mut_with(&term, |acc, v| *acc += coeff * v);
    }
    Symbol::from_values(grid, out)
}

/// Gaussian minimal-uncertainty state centered at a phase-space point,
/// renormalized so the grid quadrature norm is exactly one.
#[derive(Debug, Clone)]
pub struct CoherentState {
    pub center: (f64, f64),
    /// Position-space samples with quadrature norm sum |psi|^2 dx = 1.
    pub vector: Array1<C64>,
    /// Weyl symbol of the rank-one projector onto the state.
    pub projector_symbol: Symbol,
}

/// Relative amplitude below which a state is considered absent at the box
/// boundary.
pub const BOX_FLOOR: f64 = 1e-8;

pub fn coherent_state(z0: (f64, f64), grid: &PhaseSpaceGrid) -> Result<CoherentState> {
    let (x0, xi0) = z0;
    let n = grid.n_points();
    let h = grid.h();

    // tails at the box edges must sit below the floor
    let dx_edge = (x0 - grid.x_start())
        .abs()
        .min((grid.x_start() + grid.x_width() - x0).abs());
    let dxi_edge = (xi0 - grid.xi_start())
        .abs()
        .min((grid.xi_start() + grid.xi_width() - xi0).abs());
    let tail = (-dx_edge * dx_edge / h).exp().max((-dxi_edge * dxi_edge / h).exp());
    if tail > BOX_FLOOR {
        return Err(Error::CenterNearBoundary {
            x: x0,
            xi: xi0,
            tail,
        });
    }

    let mut v = Array1::<C64>::zeros(n);
    for i in 0..n {
        let x = grid.x(i);
        let amp = (-(x - x0) * (x - x0) / (2.0 * h)).exp();
        v[i] = C64::from_polar(amp, (x - x0) * xi0 / h);
    }
    let norm = (v.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.dx()).sqrt();
    v.mapv_inplace(|z| z / norm);

    let proj = projector(grid, &v);
    let projector_symbol = weyl_symbol(&proj);
    Ok(CoherentState {
        center: z0,
        vector: v,
        projector_symbol,
    })
}

/// Rank-one density matrix dx * psi psi^* from a quadrature-normalized vector.
pub fn projector(grid: &PhaseSpaceGrid, psi: &Array1<C64>) -> OperatorMatrix {
    let n = grid.n_points();
    let dx = grid.dx();
    let mut entries = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            entries[(i, j)] = dx * psi[i] * psi[j].conj();
        }
    }
    OperatorMatrix {
        grid: grid.clone(),
        entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::Monomial;
    use approx::assert_relative_eq;

    fn grid(n: usize, half: f64, h: f64) -> PhaseSpaceGrid {
        PhaseSpaceGrid::new(n, 0.0, half, 0.0, h).unwrap()
    }

    #[test]
    fn quantize_constant_is_identity() {
        let g = grid(16, 4.0, 0.5);
        let one = Symbol::sample(&g, |_, _| C64::new(1.0, 0.0)).unwrap();
        let a = quantize(&one);
        let id = OperatorMatrix::identity(&g);
        assert!(hs_norm(&a.sub(&id).unwrap()) < 1e-12);
    }

    #[test]
    fn quantize_position_is_diagonal() {
        let g = grid(16, 4.0, 0.5);
        let x = Symbol::sample(&g, |x, _| C64::new(x, 0.0)).unwrap();
        let a = quantize(&x);
        for i in 0..16 {
            for j in 0..16 {
                let expect = if i == j {
                    C64::new(g.x(i), 0.0)
                } else {
                    C64::new(0.0, 0.0)
                };
                assert!((a.entries()[(i, j)] - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn quantize_momentum_acts_as_h_d() {
        let g = grid(32, 4.0, 0.25);
        let xi = Symbol::sample(&g, |_, xi| C64::new(xi, 0.0)).unwrap();
        let a = quantize(&xi);
        // resolved plane wave e^{i kappa x}
        let kappa = 2.0 * std::f64::consts::PI * 3.0 / g.x_width();
        let wave: Array1<C64> = (0..32)
            .map(|i| C64::from_polar(1.0, kappa * g.x(i)))
            .collect();
        let out = a.entries().dot(&wave);
        let expect = wave.mapv(|z| z * g.h() * kappa);
        let err: f64 = out
            .iter()
            .zip(expect.iter())
            .map(|(u, v)| (u - v).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "max error {err}");
    }

    #[test]
    fn round_trip_on_random_matrix_is_exact() {
        let g = grid(24, 4.0, 0.5);
        let n = 24;
        // deterministic pseudo-random entries
        let mut state = 0x12345678u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        let mut entries = Array2::<C64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                entries[(i, j)] = C64::new(next(), next());
            }
        }
        let a = OperatorMatrix::new(g.clone(), entries).unwrap();
        let back = quantize(&weyl_symbol(&a));
        let rel = hs_norm(&back.sub(&a).unwrap()) / hs_norm(&a);
        assert!(rel < 1e-12, "round trip defect {rel}");
    }

    #[test]
    fn round_trip_on_symbol_and_isometry() {
        let g = grid(32, 5.0, 0.25);
        let a = Symbol::sample(&g, |x, xi| {
            C64::new((-(x * x + xi * xi) / 2.0).exp(), 0.1 * (x * 0.6).sin())
        })
        .unwrap();
        let op = quantize(&a);
        let back = weyl_symbol(&op);
        assert!(back.sub(&a).unwrap().max_abs() < 1e-11);

        let iso = hs_norm(&op)
            - a.l2_norm() / (2.0 * std::f64::consts::PI * g.h()).sqrt();
        assert!(iso.abs() / hs_norm(&op) < 1e-12, "isometry defect {iso}");
    }

    #[test]
    fn real_symbol_quantizes_hermitian() {
        // exactly periodic resolved modes: hermiticity at rounding level
        let g = grid(32, 5.0, 0.25);
        let l = g.x_width();
        let w = g.xi_width();
        let tau = 2.0 * std::f64::consts::PI;
        let a = Symbol::sample(&g, |x, xi| {
            C64::new(
                (tau * x / l).cos() * (3.0 * tau * xi / w).cos()
                    + 0.4 * (2.0 * tau * x / l).sin() * (tau * xi / w).sin(),
                0.0,
            )
        })
        .unwrap();
        let op = quantize(&a);
        assert!(op.herm_defect() < 1e-12);

        // well-contained Gaussian: tails below the box floor keep the defect
        // at the tail level
        let g2 = PhaseSpaceGrid::new(48, 0.0, 4.34, 0.0, 0.25).unwrap();
        let b = Symbol::sample(&g2, |x, xi| {
            C64::new((-(x * x + xi * xi) / 0.7).exp() * (1.0 + 0.3 * x), 0.0)
        })
        .unwrap();
        let opb = quantize(&b);
        assert!(opb.herm_defect() < 1e-10, "defect {}", opb.herm_defect());
    }

    #[test]
    fn hs_norm_of_identity_is_sqrt_n() {
        let g = grid(16, 4.0, 0.5);
        let id = OperatorMatrix::identity(&g);
        assert_relative_eq!(hs_norm(&id), 4.0, epsilon = 1e-13);
        // cross-check against (2 pi h)^{-1/2} ||1||_L2
        let one = Symbol::sample(&g, |_, _| C64::new(1.0, 0.0)).unwrap();
        let sym_side = one.l2_norm() / (2.0 * std::f64::consts::PI * g.h()).sqrt();
        assert_relative_eq!(sym_side, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn hs_inner_consistency() {
        let g = grid(16, 4.0, 0.5);
        let a = Symbol::sample(&g, |x, xi| C64::new((x * 0.3).cos(), (xi * 0.2).sin())).unwrap();
        let op = quantize(&a);
        let ip = hs_inner(&op, &op).unwrap();
        assert_relative_eq!(ip.re, hs_norm(&op).powi(2), max_relative = 1e-12);
        assert!(ip.im.abs() < 1e-12 * ip.re);
    }

    #[test]
    fn star_product_of_position_symbols_is_pointwise() {
        let g = grid(32, 4.0, 0.25);
        let a = Symbol::sample(&g, |x, _| C64::new((0.4 * x).sin(), 0.0)).unwrap();
        let b = Symbol::sample(&g, |x, _| C64::new((0.3 * x).cos(), 0.0)).unwrap();
        for order in [0usize, 2, 4] {
            let c = moyal_star(&a, &b, order).unwrap();
            let prod = Symbol::from_values(g.clone(), a.values() * b.values()).unwrap();
            assert!(c.sub(&prod).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn canonical_commutator() {
        let g = grid(32, 4.0, 0.25);
        let x = Symbol::sample_split(&g, vec![Monomial::new(1, 0, C64::new(1.0, 0.0))], |_, _| {
            C64::default()
        })
        .unwrap();
        let xi = Symbol::sample_split(&g, vec![Monomial::new(0, 1, C64::new(1.0, 0.0))], |_, _| {
            C64::default()
        })
        .unwrap();
        let fw = moyal_star(&x, &xi, 1).unwrap();
        let bw = moyal_star(&xi, &x, 1).unwrap();
        let comm = fw.sub(&bw).unwrap();
        let expect = Symbol::sample(&g, |_, _| C64::new(0.0, g.h())).unwrap();
        assert!(comm.sub(&expect).unwrap().max_abs() < 1e-12);

        // x * xi at order 1 equals x xi + i h / 2
        let expect_star = Symbol::sample(&g, |x, xi| C64::new(x * xi, g.h() / 2.0)).unwrap();
        assert!(fw.sub(&expect_star).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn coherent_state_normalization_and_projector() {
        let g = grid(64, 5.0, 1.0 / 16.0);
        let cs = coherent_state((0.0, 0.0), &g).unwrap();
        let qnorm: f64 = cs.vector.iter().map(|z| z.norm_sqr()).sum::<f64>() * g.dx();
        assert_relative_eq!(qnorm, 1.0, epsilon = 1e-12);

        let p = projector(&g, &cs.vector);
        assert_relative_eq!(hs_norm(&p), 1.0, epsilon = 1e-10);
        assert_relative_eq!(p.trace().re, 1.0, epsilon = 1e-12);

        // idempotence of the rank-one projector
        let p2 = p.matmul(&p).unwrap();
        assert!(hs_norm(&p2.sub(&p).unwrap()) < 1e-10);

        // peak of the projector symbol is about 2^n = 2 at the center
        let peak = cs.projector_symbol.max_abs();
        assert!((peak - 2.0).abs() < 0.04, "peak {peak}");
    }

    #[test]
    fn coherent_state_near_boundary_rejected() {
        let g = grid(64, 5.0, 1.0 / 16.0);
        assert!(matches!(
            coherent_state((4.9, 0.0), &g),
            Err(Error::CenterNearBoundary { .. })
        ));
    }
}
