//! The classical side: the Fokker-Planck generator
//! Q = H_p + gamma (2 mu + B) + (h gamma / 4) sum_j (H_lbar H_l + H_l H_lbar)
//! assembled by spectral differentiation of the Hamiltonian and jump symbols,
//! together with the ellipticity check, symbol evolution, per-step energy
//! accounting, and the Hamiltonian flow Jacobian.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::fft;
use crate::phase_space::{
    l2_inner, poisson_bracket, sobolev_norm, spectral_derivative, Axis, PhaseSpaceGrid, Symbol,
};
use crate::C64;

/// Friction symbol mu = (1/2i) sum_j {l_j, conj l_j}; real for any jump set.
pub fn friction_symbol(ells: &[Symbol], grid: &PhaseSpaceGrid) -> Result<Symbol> {
    let mut mu = Symbol::zeros(grid);
    for ell in ells {
        let pb = poisson_bracket(ell, &ell.conj())?;
        mu = mu.add(&pb.scaled(C64::new(0.0, -0.5)))?;
    }
    Ok(mu)
}

/// Smallest eigenvalue over the grid of H H* with
/// H = [H_{l_1}, ..., H_{l_J}, H_{conj l_1}, ..., H_{conj l_J}].
/// A positive value certifies ellipticity of the diffusion.
pub fn nondegeneracy_constant(ells: &[Symbol]) -> Result<f64> {
    if ells.is_empty() {
        return Err(Error::Config(
            "non-degeneracy check needs at least one jump symbol".into(),
        ));
    }
    let grid = ells[0].grid().clone();
    let n = grid.n_points();
    let fields: Vec<(Array2<C64>, Array2<C64>)> = ells
        .iter()
        .map(|l| {
            let hx = spectral_derivative(l, Axis::Xi, 1).into_values();
            let hxi = spectral_derivative(l, Axis::X, 1)
                .scaled(C64::new(-1.0, 0.0))
                .into_values();
            (hx, hxi)
        })
        .collect();
    let mut c = f64::INFINITY;
    for i in 0..n {
        for k in 0..n {
            let mut a11 = 0.0;
            let mut a22 = 0.0;
            let mut a12 = 0.0;
            for (hx, hxi) in &fields {
                let vx = hx[(i, k)];
                let vxi = hxi[(i, k)];
                a11 += 2.0 * vx.norm_sqr();
                a22 += 2.0 * vxi.norm_sqr();
                a12 += 2.0 * (vx * vxi.conj()).re;
            }
            let mean = 0.5 * (a11 + a22);
            let disc = (0.5 * (a11 - a22)).hypot(a12);
            c = c.min(mean - disc);
        }
    }
    Ok(c.max(0.0))
}

/// Grid supremum of |∂^alpha p| over |alpha| = 2, refined beyond the lattice:
/// second-derivative fields that depend on x alone get their trigonometric
/// interpolant maximized by golden-section polish, so the value is stable
/// under grid refinement.
pub fn lyapunov_gamma(p: &Symbol) -> f64 {
    let dxx = spectral_derivative(&spectral_derivative(p, Axis::X, 1), Axis::X, 1);
    let dxxi = spectral_derivative(&spectral_derivative(p, Axis::X, 1), Axis::Xi, 1);
    let dxixi = spectral_derivative(&spectral_derivative(p, Axis::Xi, 1), Axis::Xi, 1);
    [dxx, dxxi, dxixi]
        .iter()
        .map(sup_abs_refined)
        .fold(0.0, f64::max)
}

/// Supremum of |s| over the box. Fields whose remainder depends on x alone
/// (after the polynomial split) are polished off-lattice; anything else gets
/// the plain grid maximum.
pub fn sup_abs_refined(s: &Symbol) -> f64 {
    let grid_max = s.max_abs();
    let grid = s.grid();
    let n = grid.n_points();

    if s.poly().iter().any(|m| m.xi_pow > 0) {
        return grid_max;
    }
    let rem = s.remainder_values();
    let scale = grid_max.max(1.0);
    let mut col_var: f64 = 0.0;
    for i in 0..n {
        for k in 0..n {
            col_var = col_var.max((rem[(i, k)] - rem[(i, 0)]).norm());
        }
    }
    if col_var > 1e-12 * scale {
        return grid_max;
    }

    // 1-d trigonometric interpolant of the remainder plus the polynomial
    let mut spec: Vec<C64> = (0..n).map(|i| rem[(i, 0)]).collect();
    fft::fft_vec(&mut spec);
    let l = grid.x_width();
    let x0 = grid.x_start();
    let eval = |x: f64| -> f64 {
        let mut v = C64::default();
        for (b, cb) in spec.iter().enumerate() {
            let kappa = 2.0 * std::f64::consts::PI * fft::bin_freq(b, n) as f64 / l;
            v += cb / n as f64 * C64::from_polar(1.0, kappa * (x - x0));
        }
        for m in s.poly() {
            v += m.coeff * x.powi(m.x_pow as i32);
        }
        v.norm()
    };

    // coarse scan then golden-section around the best cell
    let fine = 8 * n;
    let mut best_x = x0;
    let mut best_v = f64::NEG_INFINITY;
    for q in 0..fine {
        let x = x0 + q as f64 * l / fine as f64;
        let v = eval(x);
        if v > best_v {
            best_v = v;
            best_x = x;
        }
    }
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut lo = best_x - l / fine as f64;
    let mut hi = best_x + l / fine as f64;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = eval(x1);
    let mut f2 = eval(x2);
    for _ in 0..90 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = eval(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = eval(x1);
        }
    }
    grid_max.max(f1.max(f2))
}

/// Audit of the size of |∂^a Im l| |l| + |Im l| |∂^a l| over the box for
/// |a| = 2 and |a| = 3, maximized over jumps and multi-indices.
#[derive(Debug, Clone, Copy, Default)]
pub struct TechAudit {
    pub order2: f64,
    pub order3: f64,
}

fn tech_audit(ells: &[Symbol]) -> Result<TechAudit> {
    let mut audit = TechAudit::default();
    for ell in ells {
        let im = ell.sub(&ell.conj())?.scaled(C64::new(0.0, -0.5));
        for (order, slot) in [(2u32, 0usize), (3u32, 1usize)] {
            for px in 0..=order {
                let qxi = order - px;
                let d_im = spectral_derivative(&spectral_derivative(&im, Axis::X, px), Axis::Xi, qxi);
                let d_l = spectral_derivative(&spectral_derivative(ell, Axis::X, px), Axis::Xi, qxi);
                let mut sup: f64 = 0.0;
                for ((di, dl), (l, i0)) in d_im
                    .values()
                    .iter()
                    .zip(d_l.values().iter())
                    .zip(ell.values().iter().zip(im.values().iter()))
                {
                    sup = sup.max(di.norm() * l.norm() + i0.norm() * dl.norm());
                }
                if slot == 0 {
                    audit.order2 = audit.order2.max(sup);
                } else {
                    audit.order3 = audit.order3.max(sup);
                }
            }
        }
    }
    Ok(audit)
}

struct JumpField {
    ell: Array2<C64>,
    /// H_l components (d_xi l, -d_x l)
    hx: Array2<C64>,
    hxi: Array2<C64>,
    /// constant-coefficient shortcut when the fields are uniform
    constant: Option<(C64, C64)>,
}

/// Assembled classical generator with its coefficient fields and the
/// constants entering the estimates.
pub struct FokkerPlanckGenerator {
    grid: PhaseSpaceGrid,
    gamma: f64,
    h: f64,
    /// diffusion length sqrt(gamma h)
    pub epsilon: f64,
    /// transport field components of H_p
    vx: Array2<f64>,
    vxi: Array2<f64>,
    mu: Array2<f64>,
    pub m0: f64,
    jumps: Vec<JumpField>,
    /// Fourier multiplier of the diffusion term when every jump is affine
    diffusion_multiplier: Option<Array2<f64>>,
    pub ellipticity_c: f64,
    pub lyapunov_gamma: f64,
    pub friction_free: bool,
    pub tech: TechAudit,
}

pub fn build_fp(
    p: &Symbol,
    ells: &[Symbol],
    gamma: f64,
    h: f64,
) -> Result<FokkerPlanckGenerator> {
    if gamma < 0.0 {
        return Err(Error::NegativeGamma(gamma));
    }
    let grid = p.grid().clone();
    if (grid.h() - h).abs() > 1e-14 * h {
        return Err(Error::InvalidGrid(format!(
            "h = {h} does not match the grid's h = {}",
            grid.h()
        )));
    }
    for ell in ells {
        p.same_grid(ell)?;
    }
    let n = grid.n_points();

    let vx = spectral_derivative(p, Axis::Xi, 1).into_values().mapv(|z| z.re);
    let vxi = spectral_derivative(p, Axis::X, 1)
        .into_values()
        .mapv(|z| -z.re);

    let mu_sym = friction_symbol(ells, &grid)?;
    let mu_im = mu_sym.values().iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    debug_assert!(mu_im < 1e-10, "friction symbol should be real");
    let mu = mu_sym.values().mapv(|z| z.re);
    let friction_free = mu.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-10;
    let m0 = if friction_free || ells.is_empty() {
        0.0
    } else {
        mu.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    };

    let mut jumps = Vec::new();
    for ell in ells {
        let hx = spectral_derivative(ell, Axis::Xi, 1).into_values();
        let hxi = spectral_derivative(ell, Axis::X, 1)
            .scaled(C64::new(-1.0, 0.0))
            .into_values();
        let scale = hx
            .iter()
            .chain(hxi.iter())
            .map(|z| z.norm())
            .fold(
                0.0, f64::max,
            )
            .max(1.0);
        let mut var: f64 = 0.0;
        for i in 0..n {
            for k in 0..n {
                var = var
                    .max((hx[(i, k)] - hx[(0, 0)]).norm())
                    .max((hxi[(i, k)] - hxi[(0, 0)]).norm());
            }
        }
        let constant = if var < 1e-12 * scale {
            Some((hx[(0, 0)], hxi[(0, 0)]))
        } else {
            None
        };
        jumps.push(JumpField {
            ell: ell.values().clone(),
            hx,
            hxi,
            constant,
        });
    }

    // constant-coefficient diffusion collapses to one Fourier multiplier:
    // (h gamma / 4) sum (H_lbar H_l + H_l H_lbar) -> -(h gamma / 2) sum |phi_j(k)|^2
    let diffusion_multiplier = if gamma > 0.0 && !jumps.is_empty() && jumps.iter().all(|j| j.constant.is_some())
    {
        let nyq = |b: usize, kappa: f64| -> f64 {
            if fft::bin_freq(b, n) == -(n as i64) / 2 {
                0.0
            } else {
                kappa
            }
        };
        let mut mult = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            let kx = nyq(i, grid.kappa_x(i));
            for k in 0..n {
                let kxi = nyq(k, grid.kappa_xi(k));
                let mut s = 0.0;
                for j in &jumps {
                    let (cx, cxi) = j.constant.unwrap();
                    s += (cx * kx + cxi * kxi).norm_sqr();
                }
                mult[(i, k)] = -0.5 * h * gamma * s;
            }
        }
        Some(mult)
    } else {
        None
    };

    let ellipticity_c = if ells.is_empty() {
        0.0
    } else {
        nondegeneracy_constant(ells)?
    };
    let lyap = lyapunov_gamma(p);
    let tech = tech_audit(ells)?;

    Ok(FokkerPlanckGenerator {
        grid,
        gamma,
        h,
        epsilon: (gamma * h).sqrt(),
        vx,
        vxi,
        mu,
        m0,
        jumps,
        diffusion_multiplier,
        ellipticity_c,
        lyapunov_gamma: lyap,
        friction_free,
        tech,
    })
}

impl FokkerPlanckGenerator {
    pub fn grid(&self) -> &PhaseSpaceGrid {
        &self.grid
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// mu as a grid field.
    pub fn friction(&self) -> &Array2<f64> {
        &self.mu
    }

    /// first-derivative wavenumber with the Nyquist bin zeroed, matching the
    /// odd-order convention of `spectral_derivative`
    fn d1_kappa_x(&self, bin: usize) -> f64 {
        let n = self.grid.n_points();
        if fft::bin_freq(bin, n) == -(n as i64) / 2 {
            0.0
        } else {
            self.grid.kappa_x(bin)
        }
    }

    fn d1_kappa_xi(&self, bin: usize) -> f64 {
        let n = self.grid.n_points();
        if fft::bin_freq(bin, n) == -(n as i64) / 2 {
            0.0
        } else {
            self.grid.kappa_xi(bin)
        }
    }

    /// gradient of `a` via one shared forward transform
    fn gradient(&self, values: &Array2<C64>) -> (Array2<C64>, Array2<C64>) {
        let n = self.grid.n_points();
        let mut spec = values.clone();
        fft::fft_cols(&mut spec, false);
        fft::fft_rows(&mut spec, false);
        let mut sx = spec.clone();
        let mut sxi = spec;
        for i in 0..n {
            let kx = C64::new(0.0, self.d1_kappa_x(i));
            for k in 0..n {
                let kxi = C64::new(0.0, self.d1_kappa_xi(k));
                sx[(i, k)] *= kx;
                sxi[(i, k)] *= kxi;
            }
        }
        fft::fft_rows(&mut sx, true);
        fft::fft_cols(&mut sx, true);
        fft::fft_rows(&mut sxi, true);
        fft::fft_cols(&mut sxi, true);
        (sx, sxi)
    }

    fn apply_values(&self, values: &Array2<C64>) -> Array2<C64> {
        let n = self.grid.n_points();
        // one shared forward transform feeds the gradient and, for affine
        // jumps, the diffusion multiplier
        let mut spec = values.clone();
        fft::fft_cols(&mut spec, false);
        fft::fft_rows(&mut spec, false);
        let mut sx = spec.clone();
        let mut sxi = spec.clone();
        for i in 0..n {
            let kx = C64::new(0.0, self.d1_kappa_x(i));
            for k in 0..n {
                let kxi = C64::new(0.0, self.d1_kappa_xi(k));
                sx[(i, k)] *= kx;
                sxi[(i, k)] *= kxi;
            }
        }
        fft::fft_rows(&mut sx, true);
        fft::fft_cols(&mut sx, true);
        fft::fft_rows(&mut sxi, true);
        fft::fft_cols(&mut sxi, true);
        let (dax, daxi) = (sx, sxi);

        let mut out = Array2::<C64>::zeros((n, n));
        for i in 0..n {
            for k in 0..n {
                out[(i, k)] = self.vx[(i, k)] * dax[(i, k)] + self.vxi[(i, k)] * daxi[(i, k)];
            }
        }
        if self.gamma > 0.0 && !self.jumps.is_empty() {
            // zeroth order 2 gamma mu plus antisymmetric drift
            let half_i = C64::new(0.0, -0.5); // 1/(2i)
            for i in 0..n {
                for k in 0..n {
                    let mut drift = C64::default();
                    for j in &self.jumps {
                        let hla = j.hx[(i, k)] * dax[(i, k)] + j.hxi[(i, k)] * daxi[(i, k)];
                        let hlbar_a = j.hx[(i, k)].conj() * dax[(i, k)]
                            + j.hxi[(i, k)].conj() * daxi[(i, k)];
                        drift += j.ell[(i, k)].conj() * hla - j.ell[(i, k)] * hlbar_a;
                    }
                    out[(i, k)] += self.gamma
                        * (2.0 * self.mu[(i, k)] * values[(i, k)] + half_i * drift);
                }
            }
            // diffusion
            if let Some(mult) = &self.diffusion_multiplier {
                for i in 0..n {
                    for k in 0..n {
                        spec[(i, k)] *= mult[(i, k)];
                    }
                }
                fft::fft_rows(&mut spec, true);
                fft::fft_cols(&mut spec, true);
                out += &spec;
            } else {
                let hg4 = 0.25 * self.h * self.gamma;
                for j in &self.jumps {
                    let mut hla = Array2::<C64>::zeros((n, n));
                    let mut hlbar_a = Array2::<C64>::zeros((n, n));
                    for i in 0..n {
                        for k in 0..n {
                            hla[(i, k)] =
                                j.hx[(i, k)] * dax[(i, k)] + j.hxi[(i, k)] * daxi[(i, k)];
                            hlbar_a[(i, k)] = j.hx[(i, k)].conj() * dax[(i, k)]
                                + j.hxi[(i, k)].conj() * daxi[(i, k)];
                        }
                    }
                    let (ux, uxi) = self.gradient(&hla);
                    let (wx, wxi) = self.gradient(&hlbar_a);
                    for i in 0..n {
                        for k in 0..n {
                            let hlbar_u =
                                j.hx[(i, k)].conj() * ux[(i, k)] + j.hxi[(i, k)].conj() * uxi[(i, k)];
                            let hl_w = j.hx[(i, k)] * wx[(i, k)] + j.hxi[(i, k)] * wxi[(i, k)];
                            out[(i, k)] += hg4 * (hlbar_u + hl_w);
                        }
                    }
                }
            }
        }
        out
    }

    /// Q a.
    pub fn apply_q(&self, a: &Symbol) -> Result<Symbol> {
        if a.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        Symbol::from_values(self.grid.clone(), self.apply_values(a.values()))
    }

    /// Transport part H_p a alone.
    pub fn apply_transport(&self, a: &Symbol) -> Result<Symbol> {
        if a.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let n = self.grid.n_points();
        let (dax, daxi) = self.gradient(a.values());
        let mut out = Array2::<C64>::zeros((n, n));
        for i in 0..n {
            for k in 0..n {
                out[(i, k)] = self.vx[(i, k)] * dax[(i, k)] + self.vxi[(i, k)] * daxi[(i, k)];
            }
        }
        Symbol::from_values(self.grid.clone(), out)
    }

    /// Antisymmetric drift gamma * B a. The first-order part
    /// (1/2i)(lbar H_l - l H_lbar) alone has antisymmetric defect -2 mu;
    /// adding mu completes it to the genuinely skew-adjoint B of the
    /// splitting Q = H_p + gamma (mu + B) + diffusion.
    pub fn apply_drift(&self, a: &Symbol) -> Result<Symbol> {
        if a.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let n = self.grid.n_points();
        let (dax, daxi) = self.gradient(a.values());
        let mut out = Array2::<C64>::zeros((n, n));
        let half_i = C64::new(0.0, -0.5);
        for i in 0..n {
            for k in 0..n {
                let mut drift = C64::default();
                for j in &self.jumps {
                    let hla = j.hx[(i, k)] * dax[(i, k)] + j.hxi[(i, k)] * daxi[(i, k)];
                    let hlbar_a =
                        j.hx[(i, k)].conj() * dax[(i, k)] + j.hxi[(i, k)].conj() * daxi[(i, k)];
                    drift += j.ell[(i, k)].conj() * hla - j.ell[(i, k)] * hlbar_a;
                }
                out[(i, k)] = self.gamma
                    * (half_i * drift + self.mu[(i, k)] * a.values()[(i, k)]);
            }
        }
        Symbol::from_values(self.grid.clone(), out)
    }

    /// Diffusion part (h gamma / 4) sum (H_lbar H_l + H_l H_lbar) a alone.
    pub fn apply_diffusion(&self, a: &Symbol) -> Result<Symbol> {
        if a.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        // Q = transport + gamma mu + (antisymmetric drift) + diffusion
        let transport = self.apply_transport(a)?;
        let drift = self.apply_drift(a)?;
        let full = self.apply_q(a)?;
        let n = self.grid.n_points();
        let mut out = full.into_values();
        let tv = transport.values();
        let dv = drift.values();
        for i in 0..n {
            for k in 0..n {
                out[(i, k)] -= tv[(i, k)]
                    + dv[(i, k)]
                    + self.gamma * self.mu[(i, k)] * a.values()[(i, k)];
            }
        }
        Symbol::from_values(self.grid.clone(), out)
    }

    /// Conservative step-size bound: advective plus diffusive spectral radius.
    pub fn stability_dt(&self) -> f64 {
        let kx_max = std::f64::consts::PI / self.grid.dx();
        let kxi_max = std::f64::consts::PI / self.grid.dxi();
        let vmax_x = self.vx.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let vmax_xi = self.vxi.iter().map(|v| v.abs()).fold(0.0, f64::max);
        // transport and drift are anti-selfadjoint (imaginary spectrum);
        // diffusion and friction sit on the real axis
        let mut lambda_imag = vmax_x * kx_max + vmax_xi * kxi_max;
        let mut lambda_real = 2.0 * self.gamma * self.mu.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for j in &self.jumps {
            // drift coefficient Im(conj(l) H_l); zero for real jump symbols
            let mut wx: f64 = 0.0;
            let mut wxi: f64 = 0.0;
            for ((l, hx), hxi) in j.ell.iter().zip(j.hx.iter()).zip(j.hxi.iter()) {
                wx = wx.max((l.conj() * hx).im.abs());
                wxi = wxi.max((l.conj() * hxi).im.abs());
            }
            lambda_imag += self.gamma * (wx * kx_max + wxi * kxi_max);
            let hxm = j.hx.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let hxim = j.hxi.iter().map(|z| z.norm()).fold(0.0, f64::max);
            lambda_real += 0.5 * self.h * self.gamma * (hxm * kx_max + hxim * kxi_max).powi(2);
        }
        0.8 * (2.8 / lambda_imag.max(1e-12)).min(2.7 / lambda_real.max(1e-12))
    }
}

/// Per-step diagnostics of a classical trajectory.
#[derive(Debug, Clone, Copy)]
pub struct FpStepDiag {
    pub t: f64,
    pub l2: f64,
    pub mass: C64,
    /// semiclassical Sobolev norms at s = 1, 2 with the generator's epsilon
    pub h1_eps: f64,
    pub h2_eps: f64,
    /// || eps grad(e^{-M0 gamma t} a) ||^2, the dissipation-budget integrand
    pub diss_integrand: f64,
}

pub struct ClassicalTrajectory {
    pub times: Vec<f64>,
    pub symbols: Vec<Symbol>,
    pub steps: Vec<FpStepDiag>,
}

/// RK4 stepper on da/dt = Q a.
pub struct FpStepper<'a> {
    gen: &'a FokkerPlanckGenerator,
    pub state: Array2<C64>,
    pub t: f64,
    norm0: f64,
}

impl<'a> FpStepper<'a> {
    pub fn new(gen: &'a FokkerPlanckGenerator, a0: &Symbol) -> Result<Self> {
        if a0.grid() != &gen.grid {
            return Err(Error::GridMismatch);
        }
        let norm0 = a0.l2_norm();
        Ok(Self {
            gen,
            state: a0.values().clone(),
            t: 0.0,
            norm0,
        })
    }

    pub fn step(&mut self, dt: f64) -> Result<()> {
        let a = &self.state;
        let k1 = self.gen.apply_values(a);
        let k2 = self.gen.apply_values(&(a + &k1.mapv(|z| z * (0.5 * dt))));
        let k3 = self.gen.apply_values(&(a + &k2.mapv(|z| z * (0.5 * dt))));
        let k4 = self.gen.apply_values(&(a + &k3.mapv(|z| z * dt)));
        let mut new = self.state.clone();
        new.zip_mut_with(&k1, |acc, v| *acc += (dt / 6.0) * v);
        new.zip_mut_with(&k2, |acc, v| *acc += (dt / 3.0) * v);
        new.zip_mut_with(&k3, |acc, v| *acc += (dt / 3.0) * v);
        new.zip_mut_with(&k4, |acc, v| *acc += (dt / 6.0) * v);
        self.state = new;
        self.t += dt;

        let cell = self.gen.grid.cell();
        let norm = (self.state.iter().map(|z| z.norm_sqr()).sum::<f64>() * cell).sqrt();
        let growth = (self.gen.gamma * self.gen.m0).max(0.0);
        let limit = 10.0 * (growth * self.t).exp() * self.norm0.max(f64::MIN_POSITIVE);
        if !norm.is_finite() || norm > limit {
            return Err(Error::Unstable {
                t: self.t,
                norm,
                limit,
            });
        }
        Ok(())
    }

    pub fn diag(&self) -> FpStepDiag {
        let gen = self.gen;
        let cell = gen.grid.cell();
        let l2 = (self.state.iter().map(|z| z.norm_sqr()).sum::<f64>() * cell).sqrt();
        let mass: C64 = self.state.iter().sum::<C64>() * cell;
        let sym = Symbol::from_values(gen.grid.clone(), self.state.clone()).expect("finite");
        let h1 = sobolev_norm(&sym, 1.0, gen.epsilon);
        let h2 = sobolev_norm(&sym, 2.0, gen.epsilon);
        let (gx, gxi) = gen.gradient(&self.state);
        let grad_sq =
            (gx.iter().map(|z| z.norm_sqr()).sum::<f64>() + gxi.iter().map(|z| z.norm_sqr()).sum::<f64>())
                * cell;
        let damp = (-2.0 * gen.m0 * gen.gamma * self.t).exp();
        FpStepDiag {
            t: self.t,
            l2,
            mass,
            h1_eps: h1,
            h2_eps: h2,
            diss_integrand: gen.epsilon * gen.epsilon * damp * grad_sq,
        }
    }

    pub fn symbol(&self) -> Symbol {
        Symbol::from_values(self.gen.grid.clone(), self.state.clone()).expect("finite state")
    }
}

/// Integrate da/dt = Q a over [0, T] with step `dt` (last step shortened),
/// recording roughly 64 evenly strided symbols and per-step diagnostics.
pub fn evolve_fp(
    gen: &FokkerPlanckGenerator,
    a0: &Symbol,
    t_final: f64,
    dt: f64,
) -> Result<ClassicalTrajectory> {
    if !(dt > 0.0) {
        return Err(Error::NonPositiveStep(dt));
    }
    if t_final < dt {
        return Err(Error::BadTimeSpan { t: t_final, dt });
    }
    let n_steps = (t_final / dt).ceil() as usize;
    let stride = n_steps.div_ceil(64).max(1);

    let mut stepper = FpStepper::new(gen, a0)?;
    let mut traj = ClassicalTrajectory {
        times: vec![0.0],
        symbols: vec![a0.clone()],
        steps: vec![stepper.diag()],
    };
    for s in 0..n_steps {
        let step_dt = if (s + 1) as f64 * dt > t_final {
            t_final - s as f64 * dt
        } else {
            dt
        };
        if step_dt <= 0.0 {
            break;
        }
        stepper.step(step_dt)?;
        traj.steps.push(stepper.diag());
        if (s + 1) % stride == 0 || s + 1 == n_steps {
            traj.times.push(stepper.t);
            traj.symbols.push(stepper.symbol());
        }
    }
    Ok(traj)
}

/// Energy accounting for a classical trajectory.
#[derive(Debug, Clone)]
pub struct EnergyLedger {
    /// max_t e^{-M0 gamma t} ||a(t)|| / ||a(0)||
    pub conjugated_decay_max: f64,
    /// (||u(T)||^2 + (c/2) int ||eps grad u||^2 dt) / ||u(0)||^2 - 1
    /// with u = e^{-M0 gamma t} a; at most ~0 when ellipticity holds
    pub budget_slack: f64,
    /// max_t ||a(t)||_{H^s_eps} / ||a(0)||_{H^s_eps} for s = 0, 1, 2
    pub sobolev_growth: [f64; 3],
    pub conjugated_decay_ok: bool,
    pub budget_ok: bool,
}

/// Checks the conjugated decay, the dissipation budget with c/2 from the
/// ellipticity constant, and reports Sobolev growth factors.
pub fn energy_ledger(
    traj: &ClassicalTrajectory,
    gen: &FokkerPlanckGenerator,
    tol: f64,
) -> EnergyLedger {
    let l2_0 = traj.steps[0].l2.max(f64::MIN_POSITIVE);
    let mg = gen.m0 * gen.gamma;
    let mut decay_max: f64 = 0.0;
    for s in &traj.steps {
        decay_max = decay_max.max((-mg * s.t).exp() * s.l2 / l2_0);
    }

    // trapezoid over all integrator steps
    let mut integral = 0.0;
    for w in traj.steps.windows(2) {
        integral += 0.5 * (w[1].t - w[0].t) * (w[0].diss_integrand + w[1].diss_integrand);
    }
    let last = traj.steps.last().unwrap();
    let u_t_sq = ((-mg * last.t).exp() * last.l2).powi(2);
    let budget_slack = (u_t_sq + 0.5 * gen.ellipticity_c * integral) / l2_0.powi(2) - 1.0;

    let h0_0 = traj.steps[0].l2.max(f64::MIN_POSITIVE);
    let h1_0 = traj.steps[0].h1_eps.max(f64::MIN_POSITIVE);
    let h2_0 = traj.steps[0].h2_eps.max(f64::MIN_POSITIVE);
    let mut growth = [0.0f64; 3];
    for s in &traj.steps {
        growth[0] = growth[0].max(s.l2 / h0_0);
        growth[1] = growth[1].max(s.h1_eps / h1_0);
        growth[2] = growth[2].max(s.h2_eps / h2_0);
    }

    EnergyLedger {
        conjugated_decay_max: decay_max,
        budget_slack,
        sobolev_growth: growth,
        conjugated_decay_ok: decay_max <= 1.0 + tol,
        budget_ok: budget_slack <= tol,
    }
}

/// Antisymmetry/negativity checks of the Q splitting on a test symbol:
/// returns (Re<H_p a, a>, Re<B a, a>, Re<Q3-term a, a>) normalized by ||a||^2.
pub fn splitting_signs(gen: &FokkerPlanckGenerator, a: &Symbol) -> Result<(f64, f64, f64)> {
    let n2 = a.l2_norm().powi(2).max(f64::MIN_POSITIVE);
    let tr = l2_inner(&gen.apply_transport(a)?, a)?.re / n2;
    let dr = l2_inner(&gen.apply_drift(a)?, a)?.re / n2;
    let df = l2_inner(&gen.apply_diffusion(a)?, a)?.re / n2;
    Ok((tr, dr, df))
}

/// Analytic Hamiltonian data for the flow map integration.
pub trait HamiltonianFlow {
    /// (d_x p, d_xi p)
    fn grad(&self, x: f64, xi: f64) -> (f64, f64);
    /// [[d_xx p, d_xxi p], [d_xxi p, d_xixi p]]
    fn hess(&self, x: f64, xi: f64) -> [[f64; 2]; 2];
}

#[derive(Debug, Clone)]
pub struct FlowJacobian {
    /// d phi_t at the requested time
    pub jacobian: [[f64; 2]; 2],
    /// max |entry| over the trajectory
    pub max_entry: f64,
    /// smallest C with max-entry(t) <= C e^{Gamma t} along the trajectory
    pub bound_constant: f64,
    /// final flow point
    pub endpoint: (f64, f64),
}

/// Integrate the flow of H_p and its variational system from `z0` to time
/// `t`, checking max-entry growth against e^{Gamma t}.
pub fn flow_jacobian(
    p: &dyn HamiltonianFlow,
    z0: (f64, f64),
    t: f64,
    dt: f64,
    box_halfwidth: (f64, f64),
    gamma_lyap: f64,
) -> Result<FlowJacobian> {
    if !(dt > 0.0) {
        return Err(Error::NonPositiveStep(dt));
    }
    // state: (x, xi, j11, j12, j21, j22)
    let rhs = |s: &[f64; 6]| -> [f64; 6] {
        let (px, pxi) = p.grad(s[0], s[1]);
        let hs = p.hess(s[0], s[1]);
        // d/dt (dphi) = dH_p(phi) dphi with dH_p = [[p_xxi, p_xixi], [-p_xx, -p_xxi]]
        let m11 = hs[0][1];
        let m12 = hs[1][1];
        let m21 = -hs[0][0];
        let m22 = -hs[0][1];
        [
            pxi,
            -px,
            m11 * s[2] + m12 * s[4],
            m11 * s[3] + m12 * s[5],
            m21 * s[2] + m22 * s[4],
            m21 * s[3] + m22 * s[5],
        ]
    };
    let mut s = [z0.0, z0.1, 1.0, 0.0, 0.0, 1.0];
    let mut time = 0.0;
    let mut max_entry = 1.0f64;
    let mut bound_c = 1.0f64;
    let n_steps = (t / dt).ceil().max(0.0) as usize;
    for k in 0..n_steps {
        let step = if (k + 1) as f64 * dt > t {
            t - k as f64 * dt
        } else {
            dt
        };
        if step <= 0.0 {
            break;
        }
        let k1 = rhs(&s);
        let mut s2 = s;
        for i in 0..6 {
            s2[i] += 0.5 * step * k1[i];
        }
        let k2 = rhs(&s2);
        let mut s3 = s;
        for i in 0..6 {
            s3[i] += 0.5 * step * k2[i];
        }
        let k3 = rhs(&s3);
        let mut s4 = s;
        for i in 0..6 {
            s4[i] += step * k3[i];
        }
        let k4 = rhs(&s4);
        for i in 0..6 {
            s[i] += step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        time += step;
        if s[0].abs() > box_halfwidth.0 || s[1].abs() > box_halfwidth.1 {
            return Err(Error::FlowLeftBox(time));
        }
        let entry = s[2].abs().max(s[3].abs()).max(s[4].abs()).max(s[5].abs());
        max_entry = max_entry.max(entry);
        bound_c = bound_c.max(entry / (gamma_lyap * time).exp());
    }
    Ok(FlowJacobian {
        jacobian: [[s[2], s[3]], [s[4], s[5]]],
        max_entry,
        bound_constant: bound_c,
        endpoint: (s[0], s[1]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::Monomial;
    use approx::assert_relative_eq;

    fn grid(n: usize, half: f64, h: f64) -> PhaseSpaceGrid {
        PhaseSpaceGrid::new(n, 0.0, half, 0.0, h).unwrap()
    }

    fn mono(g: &PhaseSpaceGrid, terms: &[(u32, u32, C64)]) -> Symbol {
        Symbol::sample_split(
            g,
            terms
                .iter()
                .map(|&(a, b, c)| Monomial::new(a, b, c))
                .collect(),
            |_, _| C64::default(),
        )
        .unwrap()
    }

    fn harmonic(g: &PhaseSpaceGrid) -> Symbol {
        mono(
            g,
            &[
                (2, 0, C64::new(0.5, 0.0)),
                (0, 2, C64::new(0.5, 0.0)),
            ],
        )
    }

    fn jump_x(g: &PhaseSpaceGrid) -> Symbol {
        mono(g, &[(1, 0, C64::new(1.0, 0.0))])
    }

    fn jump_xi(g: &PhaseSpaceGrid) -> Symbol {
        mono(g, &[(0, 1, C64::new(1.0, 0.0))])
    }

    fn jump_annihilation(g: &PhaseSpaceGrid) -> Symbol {
        mono(g, &[(1, 0, C64::new(1.0, 0.0)), (0, 1, C64::new(0.0, 1.0))])
    }

    #[test]
    fn nondegeneracy_examples() {
        let g = grid(24, 4.0, 0.25);
        let c = nondegeneracy_constant(&[jump_x(&g), jump_xi(&g)]).unwrap();
        assert_relative_eq!(c, 2.0, epsilon = 1e-10);
        let c2 = nondegeneracy_constant(&[jump_annihilation(&g)]).unwrap();
        assert_relative_eq!(c2, 2.0, epsilon = 1e-10);
        let c3 = nondegeneracy_constant(&[jump_x(&g)]).unwrap();
        assert!(c3.abs() < 1e-10);
    }

    #[test]
    fn build_fp_constants() {
        let g = grid(32, 4.0, 1.0 / 16.0);
        let p = harmonic(&g);
        let gen = build_fp(&p, &[jump_x(&g), jump_xi(&g)], 1.0, g.h()).unwrap();
        assert!(gen.friction_free);
        assert_eq!(gen.m0, 0.0);
        assert_relative_eq!(gen.lyapunov_gamma, 1.0, epsilon = 1e-8);
        assert_relative_eq!(gen.epsilon, (1.0f64 / 16.0).sqrt(), epsilon = 1e-14);
        assert!(gen.tech.order2 < 1e-9);

        let gen2 = build_fp(&p, &[jump_annihilation(&g)], 1.0, g.h()).unwrap();
        assert!(!gen2.friction_free);
        assert_relative_eq!(gen2.m0, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn zeroth_order_on_constants() {
        let g = grid(32, 4.0, 1.0 / 16.0);
        let p = harmonic(&g);
        let one = Symbol::sample(&g, |_, _| C64::new(1.0, 0.0)).unwrap();

        let ff = build_fp(&p, &[jump_x(&g), jump_xi(&g)], 1.0, g.h()).unwrap();
        assert!(ff.apply_q(&one).unwrap().max_abs() < 1e-10);

        let damped = build_fp(&p, &[jump_annihilation(&g)], 1.0, g.h()).unwrap();
        let out = damped.apply_q(&one).unwrap();
        let expect = Symbol::sample(&g, |_, _| C64::new(2.0, 0.0)).unwrap();
        assert!(out.sub(&expect).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn position_momentum_jumps_give_pure_laplacian() {
        let g = grid(48, 4.0, 0.25);
        let p = harmonic(&g);
        let gen = build_fp(&p, &[jump_x(&g), jump_xi(&g)], 0.7, g.h()).unwrap();
        let a = Symbol::sample(&g, |x, xi| {
            C64::new((-(x * x + xi * xi) / 0.5).exp() * (1.0 + 0.2 * x), 0.0)
        })
        .unwrap();
        let out = gen.apply_q(&a).unwrap();

        // oracle: H_p a + (gamma h / 2) (d_xx + d_xixi) a assembled
        // independently from first-derivative passes
        let ax = spectral_derivative(&a, Axis::X, 1);
        let axi = spectral_derivative(&a, Axis::Xi, 1);
        let axx = spectral_derivative(&ax, Axis::X, 1);
        let axixi = spectral_derivative(&axi, Axis::Xi, 1);
        let mut expect = Array2::<C64>::zeros(a.values().raw_dim());
        let n = g.n_points();
        for i in 0..n {
            let x = g.x(i);
            for k in 0..n {
                let xi = g.xi(k);
                expect[(i, k)] = xi * ax.values()[(i, k)] - x * axi.values()[(i, k)]
                    + 0.5 * 0.7 * g.h() * (axx.values()[(i, k)] + axixi.values()[(i, k)]);
            }
        }
        let diff = out
            .values()
            .iter()
            .zip(expect.iter())
            .map(|(u, v)| (u - v).norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-10, "max diff {diff}");
    }

    #[test]
    fn splitting_sign_structure() {
        let g = grid(48, 4.0, 1.0 / 8.0);
        let p = harmonic(&g);
        let gen = build_fp(&p, &[jump_annihilation(&g)], 0.9, g.h()).unwrap();
        let a = Symbol::sample(&g, |x, xi| {
            C64::new(
                (-(x * x + xi * xi) / 0.5).exp(),
                0.3 * (-(x * x + xi * xi) / 0.4).exp() * x,
            )
        })
        .unwrap();
        let (tr, dr, df) = splitting_signs(&gen, &a).unwrap();
        assert!(tr.abs() < 1e-9, "transport not antisymmetric: {tr}");
        assert!(dr.abs() < 1e-9, "drift not antisymmetric: {dr}");
        assert!(df <= 1e-9, "diffusion not dissipative: {df}");
    }

    #[test]
    fn heat_kernel_oracle() {
        // p = 0, jumps {x, xi}: da/dt = (gamma h / 2) Laplacian a;
        // a Gaussian of variance s0^2 spreads to s0^2 + gamma h t with
        // amplitude s0^2 / s^2.
        let g = grid(64, 4.0, 1.0 / 8.0);
        let p = Symbol::zeros(&g);
        let gamma = 1.0;
        let gen = build_fp(&p, &[jump_x(&g), jump_xi(&g)], gamma, g.h()).unwrap();
        let s0sq = 0.3f64;
        let a0 = Symbol::sample(&g, |x, xi| {
            C64::new((-(x * x + xi * xi) / (2.0 * s0sq)).exp(), 0.0)
        })
        .unwrap();
        let t_final = 0.5;
        let traj = evolve_fp(&gen, &a0, t_final, 2e-3).unwrap();
        let last = traj.symbols.last().unwrap();
        let ssq = s0sq + gamma * g.h() * t_final;
        let amp = s0sq / ssq;
        for (x, xi) in [(0.0, 0.0), (0.5, 0.0), (0.0, -0.75), (0.5, 0.5), (-1.0, 0.25)] {
            let i = ((x - g.x_start()) / g.dx()).round() as usize;
            let k = ((xi - g.xi_start()) / g.dxi()).round() as usize;
            let xg = g.x(i);
            let xig = g.xi(k);
            let expect = amp * (-(xg * xg + xig * xig) / (2.0 * ssq)).exp();
            let got = last.values()[(i, k)].re;
            assert!(
                (got - expect).abs() < 1e-6,
                "heat kernel mismatch at ({xg}, {xig}): {got} vs {expect}"
            );
        }
    }

    #[test]
    fn pure_transport_rotates_harmonic_orbits() {
        let g = grid(96, 4.0, 1.0 / 8.0);
        let p = harmonic(&g);
        let gen = build_fp(&p, &[], 0.0, g.h()).unwrap();
        let a0 = Symbol::sample(&g, |x, xi| {
            C64::new((-((x - 1.0).powi(2) + xi * xi) / 0.25).exp(), 0.0)
        })
        .unwrap();
        let t_final = 0.8;
        let traj = evolve_fp(&gen, &a0, t_final, 1e-3).unwrap();
        let last = traj.symbols.last().unwrap();
        // a(t, z) = a0(phi_t(z)), phi_t(x, xi) = (x cos t + xi sin t, -x sin t + xi cos t)
        let expect = Symbol::sample(&g, |x, xi| {
            let (c, s) = (t_final.cos(), t_final.sin());
            let xr = x * c + xi * s;
            let xir = -x * s + xi * c;
            C64::new((-((xr - 1.0).powi(2) + xir * xir) / 0.25).exp(), 0.0)
        })
        .unwrap();
        let err = last.sub(&expect).unwrap().max_abs();
        assert!(err < 1e-6, "transport error {err}");
        // mass conserved
        let m0 = traj.steps[0].mass.re;
        let mt = traj.steps.last().unwrap().mass.re;
        assert!((mt - m0).abs() < 1e-8 * m0.abs().max(1.0));
    }

    #[test]
    fn mass_conserved_without_friction() {
        let g = grid(48, 4.0, 1.0 / 8.0);
        let p = harmonic(&g);
        let gen = build_fp(&p, &[jump_x(&g), jump_xi(&g)], 1.0, g.h()).unwrap();
        let a0 = Symbol::sample(&g, |x, xi| {
            C64::new((-((x - 0.8).powi(2) + xi * xi) / 0.2).exp(), 0.0)
        })
        .unwrap();
        let traj = evolve_fp(&gen, &a0, 0.5, 1e-3).unwrap();
        let m0 = traj.steps[0].mass;
        for s in &traj.steps {
            assert!((s.mass - m0).norm() < 1e-8 * m0.norm().max(1.0));
        }
    }

    #[test]
    fn energy_ledger_friction_free_and_damped() {
        let g = grid(48, 4.0, 1.0 / 8.0);
        let p = harmonic(&g);
        let a0 = Symbol::sample(&g, |x, xi| {
            C64::new((-((x - 0.8).powi(2) + xi * xi) / (2.0 * g.h())).exp(), 0.0)
        })
        .unwrap();

        let ff = build_fp(&p, &[jump_x(&g), jump_xi(&g)], 1.0, g.h()).unwrap();
        let traj = evolve_fp(&ff, &a0, 0.5, 5e-4).unwrap();
        // decay is sharp; the budget carries trapezoid quadrature error
        let ledger = energy_ledger(&traj, &ff, 1e-6);
        assert!(ledger.conjugated_decay_max <= 1.0 + 1e-8, "decay {}", ledger.conjugated_decay_max);
        assert!(ledger.budget_ok, "slack {}", ledger.budget_slack);

        let damped = build_fp(&p, &[jump_annihilation(&g)], 1.0, g.h()).unwrap();
        let traj2 = evolve_fp(&damped, &a0, 0.5, 5e-4).unwrap();
        let ledger2 = energy_ledger(&traj2, &damped, 1e-6);
        assert!(
            ledger2.conjugated_decay_ok,
            "decay {}",
            ledger2.conjugated_decay_max
        );
        assert!(ledger2.budget_ok, "slack {}", ledger2.budget_slack);
    }

    struct Quadratic {
        // p = (a x^2 + b xi^2)/2 + c x xi
        a: f64,
        b: f64,
        c: f64,
    }

    impl HamiltonianFlow for Quadratic {
        fn grad(&self, x: f64, xi: f64) -> (f64, f64) {
            (self.a * x + self.c * xi, self.b * xi + self.c * x)
        }
        fn hess(&self, _x: f64, _xi: f64) -> [[f64; 2]; 2] {
            [[self.a, self.c], [self.c, self.b]]
        }
    }

    #[test]
    fn flow_jacobian_harmonic_rotation() {
        let p = Quadratic {
            a: 1.0,
            b: 1.0,
            c: 0.0,
        };
        let t = 1.3;
        let out = flow_jacobian(&p, (0.5, 0.0), t, 1e-4, (10.0, 10.0), 1.0).unwrap();
        let j = out.jacobian;
        assert!((j[0][0] - t.cos()).abs() < 1e-9);
        assert!((j[0][1] - t.sin()).abs() < 1e-9);
        assert!((j[1][0] + t.sin()).abs() < 1e-9);
        assert!((j[1][1] - t.cos()).abs() < 1e-9);
        assert!(out.max_entry <= 1.0 + 1e-8);

        // t = 0 gives the identity
        let id = flow_jacobian(&p, (0.5, 0.0), 0.0, 1e-3, (10.0, 10.0), 1.0).unwrap();
        assert_eq!(id.jacobian[0][0], 1.0);
        assert_eq!(id.jacobian[0][1], 0.0);
    }

    #[test]
    fn flow_jacobian_hyperbolic_growth() {
        // p = x xi: dx/dt = x, dxi/dt = -xi, so dphi = diag(e^t, e^{-t})
        let p = Quadratic {
            a: 0.0,
            b: 0.0,
            c: 1.0,
        };
        let t = 2.0;
        let out = flow_jacobian(&p, (0.1, 0.1), t, 1e-4, (10.0, 10.0), 1.0).unwrap();
        let j = out.jacobian;
        assert!((j[0][0] - t.exp()).abs() < 1e-6 * t.exp());
        assert!((j[1][1] - (-t).exp()).abs() < 1e-6);
        assert!(j[0][1].abs() < 1e-9 && j[1][0].abs() < 1e-9);
        // growth rate equals Gamma = 1
        let rate = out.jacobian[0][0].ln() / t;
        assert!((rate - 1.0).abs() < 1e-6);
        assert!(out.bound_constant <= 1.0 + 1e-6);
    }

    #[test]
    fn flow_leaves_box_detected() {
        let p = Quadratic {
            a: 0.0,
            b: 0.0,
            c: 1.0,
        };
        assert!(matches!(
            flow_jacobian(&p, (1.0, 0.0), 5.0, 1e-3, (2.0, 2.0), 1.0),
            Err(Error::FlowLeftBox(_))
        ));
    }

    #[test]
    fn evolve_fp_validates_input() {
        let g = grid(16, 4.0, 0.25);
        let p = harmonic(&g);
        let gen = build_fp(&p, &[], 0.0, g.h()).unwrap();
        let a0 = Symbol::sample(&g, |_, _| C64::new(1.0, 0.0)).unwrap();
        assert!(matches!(
            evolve_fp(&gen, &a0, 1.0, -0.1),
            Err(Error::NonPositiveStep(_))
        ));
    }
}
