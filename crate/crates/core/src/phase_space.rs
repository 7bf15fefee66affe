//! Discretized phase space: the dual grid, sampled symbols, spectral
//! differentiation, Poisson brackets, and semiclassical Sobolev norms.
//!
//! A grid couples a periodic position box of width L = 2*x_halfwidth holding
//! N points to a momentum box of width 2*pi*h/dx, so that dx * dxi * N =
//! 2*pi*h holds exactly. That identity is what makes the discrete Weyl
//! transform in [`crate::weyl`] unitary up to the constant (2*pi*h)^{-1/2}.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::fft;
use crate::C64;

/// Axis of the phase-space grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Xi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceGrid {
    n_points: usize,
    x_center: f64,
    x_halfwidth: f64,
    xi_center: f64,
    h: f64,
    dx: f64,
    dxi: f64,
}

impl PhaseSpaceGrid {
    /// Build a grid. `xi_center` is snapped to the nearest multiple of the
    /// momentum spacing so that momentum-only symbols quantize to exact
    /// Fourier multipliers.
    pub fn new(
        n_points: usize,
        x_center: f64,
        x_halfwidth: f64,
        xi_center: f64,
        h: f64,
    ) -> Result<Self> {
        if n_points == 0 || n_points % 2 != 0 {
            return Err(Error::OddPointCount(n_points));
        }
        if !(x_halfwidth > 0.0) || !x_halfwidth.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "x_halfwidth must be positive, got {x_halfwidth}"
            )));
        }
        if !(h > 0.0 && h <= 1.0) {
            return Err(Error::InvalidGrid(format!("h must lie in (0, 1], got {h}")));
        }
        if !x_center.is_finite() || !xi_center.is_finite() {
            return Err(Error::InvalidGrid("grid centers must be finite".into()));
        }
        let width = 2.0 * x_halfwidth;
        let dx = width / n_points as f64;
        let dxi = 2.0 * std::f64::consts::PI * h / width;
        let xi_center = (xi_center / dxi).round() * dxi;
        Ok(Self {
            n_points,
            x_center,
            x_halfwidth,
            xi_center,
            h,
            dx,
            dxi,
        })
    }

    /// Phase-space dimension count n. Only n = 1 is realized by this grid.
    pub fn dim(&self) -> usize {
        1
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dxi(&self) -> f64 {
        self.dxi
    }

    pub fn x_center(&self) -> f64 {
        self.x_center
    }

    pub fn xi_center(&self) -> f64 {
        self.xi_center
    }

    pub fn x_halfwidth(&self) -> f64 {
        self.x_halfwidth
    }

    pub fn x_width(&self) -> f64 {
        2.0 * self.x_halfwidth
    }

    pub fn xi_width(&self) -> f64 {
        self.n_points as f64 * self.dxi
    }

    pub fn x_start(&self) -> f64 {
        self.x_center - self.x_halfwidth
    }

    pub fn xi_start(&self) -> f64 {
        self.xi_center - 0.5 * self.n_points as f64 * self.dxi
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_start() + i as f64 * self.dx
    }

    pub fn xi(&self, k: usize) -> f64 {
        self.xi_start() + k as f64 * self.dxi
    }

    /// Quadrature weight dx * dxi of one phase-space cell.
    pub fn cell(&self) -> f64 {
        self.dx * self.dxi
    }

    /// Wavenumber dual to x for FFT bin `k` along axis 0.
    pub fn kappa_x(&self, k: usize) -> f64 {
        2.0 * std::f64::consts::PI * fft::bin_freq(k, self.n_points) as f64 / self.x_width()
    }

    /// Wavenumber dual to xi for FFT bin `k` along axis 1.
    pub fn kappa_xi(&self, k: usize) -> f64 {
        2.0 * std::f64::consts::PI * fft::bin_freq(k, self.n_points) as f64 / self.xi_width()
    }

    /// Dual-grid defect |dx*dxi*N - 2*pi*h| / (2*pi*h). Zero in exact
    /// arithmetic by construction.
    pub fn dual_defect(&self) -> f64 {
        let tp = 2.0 * std::f64::consts::PI * self.h;
        ((self.dx * self.dxi * self.n_points as f64) - tp).abs() / tp
    }
}

/// Monomial c * x^a * xi^b of a symbol's polynomial part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monomial {
    pub x_pow: u32,
    pub xi_pow: u32,
    pub coeff: C64,
}

impl Monomial {
    pub fn new(x_pow: u32, xi_pow: u32, coeff: C64) -> Self {
        Self {
            x_pow,
            xi_pow,
            coeff,
        }
    }

    pub fn eval(&self, x: f64, xi: f64) -> C64 {
        self.coeff * x.powi(self.x_pow as i32) * xi.powi(self.xi_pow as i32)
    }

    fn derive(&self, axis: Axis) -> Option<Monomial> {
        match axis {
            Axis::X if self.x_pow > 0 => Some(Monomial::new(
                self.x_pow - 1,
                self.xi_pow,
                self.coeff * self.x_pow as f64,
            )),
            Axis::Xi if self.xi_pow > 0 => Some(Monomial::new(
                self.x_pow,
                self.xi_pow - 1,
                self.coeff * self.xi_pow as f64,
            )),
            _ => None,
        }
    }
}

/// Complex-valued phase-space function sampled on a grid, optionally carrying
/// an explicit polynomial part. When present, spectral derivatives subtract
/// the polynomial (differentiated analytically) and only the periodic
/// remainder goes through the FFT; unbounded symbols stay Gibbs-free that way.
#[derive(Debug, Clone, PartialEq)]
pub struct Symbol {
    grid: PhaseSpaceGrid,
    values: Array2<C64>,
    poly: Vec<Monomial>,
}

impl Symbol {
    pub fn from_values(grid: PhaseSpaceGrid, values: Array2<C64>) -> Result<Self> {
        let n = grid.n_points();
        if values.dim() != (n, n) {
            return Err(Error::ShapeMismatch {
                expected: format!("({n}, {n})"),
                got: format!("{:?}", values.dim()),
            });
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFiniteSample {
                x: f64::NAN,
                xi: f64::NAN,
            });
        }
        Ok(Self {
            grid,
            values,
            poly: Vec::new(),
        })
    }

    /// Pointwise samples of `f` over the grid, x index first.
    pub fn sample<F>(grid: &PhaseSpaceGrid, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> C64,
    {
        let n = grid.n_points();
        let mut values = Array2::<C64>::zeros((n, n));
        for i in 0..n {
            let x = grid.x(i);
            for k in 0..n {
                let xi = grid.xi(k);
                let z = f(x, xi);
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(Error::NonFiniteSample { x, xi });
                }
                values[(i, k)] = z;
            }
        }
        Ok(Self {
            grid: grid.clone(),
            values,
            poly: Vec::new(),
        })
    }

    /// Sample a polynomial plus smooth periodic remainder, keeping the split.
    pub fn sample_split<F>(grid: &PhaseSpaceGrid, poly: Vec<Monomial>, remainder: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> C64,
    {
        let mut s = Self::sample(grid, |x, xi| {
            remainder(x, xi) + poly.iter().map(|m| m.eval(x, xi)).sum::<C64>()
        })?;
        s.poly = poly;
        Ok(s)
    }

    pub fn zeros(grid: &PhaseSpaceGrid) -> Self {
        let n = grid.n_points();
        Self {
            grid: grid.clone(),
            values: Array2::zeros((n, n)),
            poly: Vec::new(),
        }
    }

    pub fn grid(&self) -> &PhaseSpaceGrid {
        &self.grid
    }

    pub fn values(&self) -> &Array2<C64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<C64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array2<C64> {
        self.values
    }

    pub fn poly(&self) -> &[Monomial] {
        &self.poly
    }

    pub fn same_grid(&self, other: &Symbol) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    fn poly_values(&self) -> Array2<C64> {
        let n = self.grid.n_points();
        let mut out = Array2::<C64>::zeros((n, n));
        if self.poly.is_empty() {
            return out;
        }
        for i in 0..n {
            let x = self.grid.x(i);
            for k in 0..n {
                let xi = self.grid.xi(k);
                out[(i, k)] = self.poly.iter().map(|m| m.eval(x, xi)).sum();
            }
        }
        out
    }

    /// Grid samples minus the polynomial part.
    pub fn remainder_values(&self) -> Array2<C64> {
        if self.poly.is_empty() {
            self.values.clone()
        } else {
            &self.values - &self.poly_values()
        }
    }

    pub fn conj(&self) -> Symbol {
        Symbol {
            grid: self.grid.clone(),
            values: self.values.mapv(|z| z.conj()),
            poly: self
                .poly
                .iter()
                .map(|m| Monomial::new(m.x_pow, m.xi_pow, m.coeff.conj()))
                .collect(),
        }
    }

    pub fn scaled(&self, c: C64) -> Symbol {
        Symbol {
            grid: self.grid.clone(),
            values: self.values.mapv(|z| z * c),
            poly: self
                .poly
                .iter()
                .map(|m| Monomial::new(m.x_pow, m.xi_pow, m.coeff * c))
                .collect(),
        }
    }

    pub fn add(&self, other: &Symbol) -> Result<Symbol> {
        self.same_grid(other)?;
        let mut poly = self.poly.clone();
        poly.extend_from_slice(&other.poly);
        Ok(Symbol {
            grid: self.grid.clone(),
            values: &self.values + &other.values,
            poly,
        })
    }

    pub fn sub(&self, other: &Symbol) -> Result<Symbol> {
        self.add(&other.scaled(C64::new(-1.0, 0.0)))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// L2 norm in grid quadrature: sqrt(sum |a|^2 dx dxi).
    pub fn l2_norm(&self) -> f64 {
        let cell = self.grid.cell();
        (self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * cell).sqrt()
    }

    /// Mass integral sum a dx dxi.
    pub fn mass(&self) -> C64 {
        self.values.iter().sum::<C64>() * self.grid.cell()
    }

    /// Largest |a| over the outermost ring of the box, relative to max |a|.
    /// This is the box-floor audit quantity.
    pub fn boundary_ratio(&self) -> f64 {
        let n = self.grid.n_points();
        let peak = self.max_abs().max(f64::MIN_POSITIVE);
        let mut edge: f64 = 0.0;
        for i in 0..n {
            edge = edge
                .max(self.values[(i, 0)].norm())
                .max(self.values[(i, n - 1)].norm())
                .max(self.values[(0, i)].norm())
                .max(self.values[(n - 1, i)].norm());
        }
        edge / peak
    }
}

/// Fourier-multiplier derivative of order `order` along `axis`. Linear, and
/// exact on grid-resolved trigonometric polynomials.
pub fn spectral_derivative(a: &Symbol, axis: Axis, order: u32) -> Symbol {
    if order == 0 {
        return a.clone();
    }
    let grid = a.grid().clone();
    let n = grid.n_points();
    let width = match axis {
        Axis::X => grid.x_width(),
        Axis::Xi => grid.xi_width(),
    };
    let mult = fft::derivative_multiplier(n, width, order);

    let mut rem = a.remainder_values();
    match axis {
        Axis::X => {
            fft::fft_cols(&mut rem, false);
            for i in 0..n {
                let m = mult[i] / n as f64;
                for k in 0..n {
                    rem[(i, k)] *= m;
                }
            }
            // unnormalized inverse; 1/n folded into the multiplier above
            let p = fft::plan(n, true);
            let mut t = rem.t().as_standard_layout().into_owned();
            let mut scratch = vec![C64::default(); p.get_inplace_scratch_len()];
            for row in t.as_slice_mut().unwrap().chunks_mut(n) {
                p.process_with_scratch(row, &mut scratch);
            }
            rem.assign(&t.t());
        }
        Axis::Xi => {
            fft::fft_rows(&mut rem, false);
            for i in 0..n {
                for k in 0..n {
                    rem[(i, k)] *= mult[k] / n as f64;
                }
            }
            let p = fft::plan(n, true);
            let mut scratch = vec![C64::default(); p.get_inplace_scratch_len()];
            for row in rem.as_slice_mut().unwrap().chunks_mut(n) {
                p.process_with_scratch(row, &mut scratch);
            }
        }
    }

    // analytic derivative of the polynomial part
    let mut poly: Vec<Monomial> = a.poly().to_vec();
    for _ in 0..order {
        poly = poly.iter().filter_map(|m| m.derive(axis)).collect();
    }
    let mut out = Symbol {
        grid,
        values: rem,
        poly,
    };
    if !out.poly.is_empty() {
        let pv = out.poly_values();
        out.values += &pv;
    }
    out
}

/// Poisson bracket {f, g} = H_f g with H_f = d_xi f d_x - d_x f d_xi.
pub fn poisson_bracket(f: &Symbol, g: &Symbol) -> Result<Symbol> {
    f.same_grid(g)?;
    let fx = spectral_derivative(f, Axis::X, 1);
    let fxi = spectral_derivative(f, Axis::Xi, 1);
    let gx = spectral_derivative(g, Axis::X, 1);
    let gxi = spectral_derivative(g, Axis::Xi, 1);
    let values = &fxi.values * &gx.values - &fx.values * &gxi.values;
    Symbol::from_values(f.grid().clone(), values)
}

/// Semiclassical Sobolev norm: the L2 norm with Fourier weight
/// (1 + |eps zeta|^2)^{s/2}, normalized so s = 0 reproduces the plain
/// quadrature L2 norm.
pub fn sobolev_norm(a: &Symbol, s: f64, epsilon: f64) -> f64 {
    if s == 0.0 {
        return a.l2_norm();
    }
    let grid = a.grid();
    let n = grid.n_points();
    let mut spec = a.values().clone();
    fft::fft_cols(&mut spec, false);
    fft::fft_rows(&mut spec, false);
    let norm2: f64 = (0..n)
        .map(|i| {
            let zx = grid.kappa_x(i);
            (0..n)
                .map(|k| {
                    let zxi = grid.kappa_xi(k);
                    let w = (1.0 + epsilon * epsilon * (zx * zx + zxi * zxi)).powf(s);
                    w * spec[(i, k)].norm_sqr()
                })
                .sum::<f64>()
        })
        .sum();
    // spec carries an extra factor n^2 from the unnormalized transforms
    let scale = grid.cell() / (n as f64).powi(2);
    (norm2 * scale).sqrt()
}

/// Real part of the L2 inner product <f, g> = sum f conj(g) dx dxi.
pub fn l2_inner(f: &Symbol, g: &Symbol) -> Result<C64> {
    f.same_grid(g)?;
    let s: C64 = f
        .values()
        .iter()
        .zip(g.values().iter())
        .map(|(a, b)| a * b.conj())
        .sum();
    Ok(s * f.grid().cell())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid_n8() -> PhaseSpaceGrid {
        PhaseSpaceGrid::new(8, 0.0, 4.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn dual_grid_constraint() {
        let g = grid_n8();
        assert_relative_eq!(g.dx(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(g.dxi(), 2.0 * std::f64::consts::PI / 8.0, max_relative = 1e-15);
        assert!(g.dual_defect() < 1e-14);

        let g2 = PhaseSpaceGrid::new(64, 0.0, 8.0, 0.0, 1.0 / 16.0).unwrap();
        assert_relative_eq!(g2.dx(), 0.25, max_relative = 1e-15);
        assert_relative_eq!(
            g2.dxi(),
            2.0 * std::f64::consts::PI / 16.0 / 16.0,
            max_relative = 1e-14
        );
        assert!(g2.dual_defect() < 1e-14);
    }

    #[test]
    fn odd_point_count_rejected() {
        let err = PhaseSpaceGrid::new(7, 0.0, 4.0, 0.0, 1.0).unwrap_err();
        assert!(err.to_string().contains("even point count required"));
        assert!(PhaseSpaceGrid::new(8, 0.0, -1.0, 0.0, 1.0).is_err());
        assert!(PhaseSpaceGrid::new(8, 0.0, 4.0, 0.0, 1.5).is_err());
        assert!(PhaseSpaceGrid::new(8, 0.0, 4.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn sample_constant_and_coordinate() {
        let g = grid_n8();
        let one = Symbol::sample(&g, |_, _| C64::new(1.0, 0.0)).unwrap();
        assert!(one.values().iter().all(|z| (z - 1.0).norm() == 0.0));

        let x = Symbol::sample(&g, |x, _| C64::new(x, 0.0)).unwrap();
        for i in 0..8 {
            assert_relative_eq!(x.values()[(i, 3)].re, -4.0 + i as f64, max_relative = 1e-15);
        }

        let gauss = Symbol::sample(&g, |x, xi| C64::new((-(x * x + xi * xi)).exp(), 0.0)).unwrap();
        assert!(gauss.values().iter().all(|z| z.re > 0.0));
        let peak = gauss.max_abs();
        assert_relative_eq!(peak, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn sample_rejects_non_finite() {
        let g = grid_n8();
        let err = Symbol::sample(&g, |x, _| C64::new(1.0 / (x + 4.0), 0.0)).unwrap_err();
        match err {
            Error::NonFiniteSample { x, .. } => assert_relative_eq!(x, -4.0),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let g = grid_n8();
        let one = Symbol::sample(&g, |_, _| C64::new(1.0, 0.0)).unwrap();
        let d = spectral_derivative(&one, Axis::X, 1);
        assert!(d.max_abs() < 1e-14);
    }

    #[test]
    fn derivative_exact_on_resolved_modes() {
        let g = PhaseSpaceGrid::new(64, 0.0, 8.0, 0.0, 1.0).unwrap();
        let l = g.x_width();
        let k = 2.0 * std::f64::consts::PI / l;
        let s = Symbol::sample(&g, |x, _| C64::new((k * x).sin(), 0.0)).unwrap();
        let d = spectral_derivative(&s, Axis::X, 1);
        let expect = Symbol::sample(&g, |x, _| C64::new(k * (k * x).cos(), 0.0)).unwrap();
        let err = d.sub(&expect).unwrap().max_abs();
        assert!(err < 1e-12, "max abs error {err}");
    }

    #[test]
    fn second_derivative_multiplier_identity() {
        let g = PhaseSpaceGrid::new(64, 0.0, 8.0, 0.0, 0.25).unwrap();
        // grid-resonant xi mode: kappa = 2*pi*m / xi_width
        let kappa = 2.0 * std::f64::consts::PI * 3.0 / g.xi_width();
        let s = Symbol::sample(&g, |_, xi| C64::new(0.0, kappa * xi).exp()).unwrap();
        let d2 = spectral_derivative(&s, Axis::Xi, 2);
        let expect = s.scaled(C64::new(-kappa * kappa, 0.0));
        assert!(d2.sub(&expect).unwrap().max_abs() < 1e-10 * kappa * kappa);
    }

    #[test]
    fn derivative_uses_polynomial_split() {
        // x^2/2 sampled on the box has a derivative-jump at the edge; with the
        // split the spectral derivative is exact everywhere.
        let g = PhaseSpaceGrid::new(64, 0.0, 4.0, 0.0, 0.25).unwrap();
        let p = Symbol::sample_split(
            &g,
            vec![Monomial::new(2, 0, C64::new(0.5, 0.0))],
            |_, _| C64::new(0.0, 0.0),
        )
        .unwrap();
        let d = spectral_derivative(&p, Axis::X, 1);
        let expect = Symbol::sample(&g, |x, _| C64::new(x, 0.0)).unwrap();
        assert!(d.sub(&expect).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn poisson_bracket_conventions() {
        let g = PhaseSpaceGrid::new(32, 0.0, 4.0, 0.0, 0.5).unwrap();
        let x = Symbol::sample_split(&g, vec![Monomial::new(1, 0, C64::new(1.0, 0.0))], |_, _| {
            C64::new(0.0, 0.0)
        })
        .unwrap();
        let xi = Symbol::sample_split(&g, vec![Monomial::new(0, 1, C64::new(1.0, 0.0))], |_, _| {
            C64::new(0.0, 0.0)
        })
        .unwrap();
        // {x, xi} = -1 with H_f = d_xi f d_x - d_x f d_xi
        let b = poisson_bracket(&x, &xi).unwrap();
        assert!(b.sub(&Symbol::sample(&g, |_, _| C64::new(-1.0, 0.0)).unwrap())
            .unwrap()
            .max_abs()
            < 1e-12);

        // {x + i xi, x - i xi} = 2i, so mu = (1/2i) * 2i = 1 for l = x + i xi
        let ell = x.add(&xi.scaled(C64::i())).unwrap();
        let bb = poisson_bracket(&ell, &ell.conj()).unwrap();
        assert!(bb
            .sub(&Symbol::sample(&g, |_, _| C64::new(0.0, 2.0)).unwrap())
            .unwrap()
            .max_abs()
            < 1e-12);

        // antisymmetry on a generic smooth symbol
        let f = Symbol::sample(&g, |x, xi| C64::new((x * 0.7).sin() * (xi * 0.9).cos(), 0.3))
            .unwrap();
        let ff = poisson_bracket(&f, &f).unwrap();
        assert!(ff.max_abs() < 1e-12);
    }

    #[test]
    fn sobolev_norm_matches_l2_at_s0() {
        let g = grid_n8();
        let one = Symbol::sample(&g, |_, _| C64::new(1.0, 0.0)).unwrap();
        let n0 = sobolev_norm(&one, 0.0, 0.3);
        let n0b = sobolev_norm(&one, 0.0, 2.7);
        assert_eq!(n0, n0b);
        // box volume is 8 * 2*pi at h = 1: norm = sqrt(16 pi)
        assert_relative_eq!(n0, (8.0 * 2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(n0, one.l2_norm(), epsilon = 1e-14);
    }

    #[test]
    fn sobolev_gaussian_matches_continuum() {
        // |e^{-|z|^2/2}|_{H^1, eps=1}^2 = pi + pi = 2 pi in the normalized
        // convention; the box must hold the Gaussian and its spectrum.
        let g = PhaseSpaceGrid::new(192, 0.0, 8.0, 0.0, 1.0).unwrap();
        let a = Symbol::sample(&g, |x, xi| C64::new((-(x * x + xi * xi) / 2.0).exp(), 0.0)).unwrap();
        let n1 = sobolev_norm(&a, 1.0, 1.0);
        assert_relative_eq!(n1, (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-6);
    }
}
