//! Curated Hamiltonians, jump sets, and initial states with analytically
//! certified constants, so every experiment runs on a configuration whose
//! friction supremum, Lyapunov constant, and ellipticity constant are known
//! independently of the grid machinery.

use crate::error::{Error, Result};
use crate::fokker_planck::{
    friction_symbol, lyapunov_gamma, nondegeneracy_constant, HamiltonianFlow,
};
use crate::phase_space::{Monomial, PhaseSpaceGrid, Symbol};
use crate::C64;

/// Smooth compactly-concentrated cutoff s(u) = sech^2(u) with u = (x/c)^4,
/// returning the cubic remainder r = lambda x^3 s and its first two
/// derivatives. The composition keeps every derivative bounded while the
/// value drops below 1e-9 past |x| ~ 1.9 c.
pub fn cubic_bump(x: f64, lambda: f64, cut: f64) -> (f64, f64, f64) {
    let u = (x / cut).powi(4);
    let du = 4.0 * x.powi(3) / cut.powi(4);
    let ddu = 12.0 * x.powi(2) / cut.powi(4);
    let t = u.tanh();
    let sech2 = 1.0 - t * t;
    let s = sech2;
    let s_u = -2.0 * s * t;
    let s_uu = 2.0 * s * (3.0 * t * t - 1.0);
    let r = lambda * x.powi(3) * s;
    let r1 = lambda * (3.0 * x * x * s + x.powi(3) * s_u * du);
    let r2 = lambda
        * (6.0 * x * s
            + 6.0 * x * x * s_u * du
            + x.powi(3) * (s_uu * du * du + s_u * ddu));
    (r, r1, r2)
}

/// Hamiltonian shape shared by the catalog: a real quadratic form plus an
/// optional cubic-bump remainder in x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianSpec {
    /// coefficient of x^2/2
    pub xx: f64,
    /// coefficient of xi^2/2
    pub xixi: f64,
    /// coefficient of x*xi
    pub cross: f64,
    /// cubic remainder lambda x^3 sech^2((x/cut)^4)
    pub cubic: Option<(f64, f64)>,
}

impl HamiltonianSpec {
    fn poly(&self) -> Vec<Monomial> {
        let mut p = Vec::new();
        if self.xx != 0.0 {
            p.push(Monomial::new(2, 0, C64::new(0.5 * self.xx, 0.0)));
        }
        if self.xixi != 0.0 {
            p.push(Monomial::new(0, 2, C64::new(0.5 * self.xixi, 0.0)));
        }
        if self.cross != 0.0 {
            p.push(Monomial::new(1, 1, C64::new(self.cross, 0.0)));
        }
        p
    }

    pub fn sample(&self, grid: &PhaseSpaceGrid) -> Result<Symbol> {
        let cubic = self.cubic;
        Symbol::sample_split(grid, self.poly(), move |x, _| match cubic {
            Some((lambda, cut)) => C64::new(cubic_bump(x, lambda, cut).0, 0.0),
            None => C64::default(),
        })
    }

    /// sup over |alpha| = 2 of |d^alpha p|, from the analytic derivatives on
    /// a dense line scan with golden-section polish. Grid-free, so stable
    /// under any resolution change.
    pub fn lyapunov_gamma(&self, halfwidth: f64) -> f64 {
        let base = self
            .xx
            .abs()
            .max(self.xixi.abs())
            .max(self.cross.abs());
        let Some((lambda, cut)) = self.cubic else {
            return base;
        };
        let dxx = |x: f64| (self.xx + cubic_bump(x, lambda, cut).2).abs();
        let n = 1 << 14;
        let mut best_x = 0.0;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=n {
            let x = -halfwidth + 2.0 * halfwidth * i as f64 / n as f64;
            let v = dxx(x);
            if v > best {
                best = v;
                best_x = x;
            }
        }
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let cell = 2.0 * halfwidth / n as f64;
        let (mut lo, mut hi) = (best_x - cell, best_x + cell);
        let mut x1 = hi - phi * (hi - lo);
        let mut x2 = lo + phi * (hi - lo);
        let (mut f1, mut f2) = (dxx(x1), dxx(x2));
        for _ in 0..80 {
            if f1 < f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + phi * (hi - lo);
                f2 = dxx(x2);
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - phi * (hi - lo);
                f1 = dxx(x1);
            }
        }
        base.max(f1.max(f2))
    }
}

impl HamiltonianFlow for HamiltonianSpec {
    fn grad(&self, x: f64, xi: f64) -> (f64, f64) {
        let mut px = self.xx * x + self.cross * xi;
        let pxi = self.xixi * xi + self.cross * x;
        if let Some((lambda, cut)) = self.cubic {
            px += cubic_bump(x, lambda, cut).1;
        }
        (px, pxi)
    }

    fn hess(&self, x: f64, _xi: f64) -> [[f64; 2]; 2] {
        let mut pxx = self.xx;
        if let Some((lambda, cut)) = self.cubic {
            pxx += cubic_bump(x, lambda, cut).2;
        }
        [[pxx, self.cross], [self.cross, self.xixi]]
    }
}

/// Affine jump symbol c_x x + c_xi xi.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpSpec {
    pub cx: C64,
    pub cxi: C64,
}

impl JumpSpec {
    pub fn sample(&self, grid: &PhaseSpaceGrid) -> Result<Symbol> {
        Symbol::sample_split(
            grid,
            vec![Monomial::new(1, 0, self.cx), Monomial::new(0, 1, self.cxi)],
            |_, _| C64::default(),
        )
    }
}

/// Constants certified analytically for a preset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifiedConstants {
    /// sup of the friction symbol
    pub m0: f64,
    /// sup over |alpha| = 2 of |d^alpha p|
    pub lyapunov_gamma: f64,
    /// ellipticity constant of the jump set
    pub ellipticity_c: f64,
    /// quadratic Hamiltonian and affine jumps: both evolutions agree exactly
    pub exact: bool,
    /// friction symbol vanishes identically
    pub friction_free: bool,
}

#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub hamiltonian: HamiltonianSpec,
    pub jumps: Vec<JumpSpec>,
    pub certified: CertifiedConstants,
    /// default coherent-state center for experiments
    pub init_center: (f64, f64),
    /// bound on the orbit radius from the default center, for box sizing
    pub orbit_radius: f64,
}

fn next_even_smooth(mut n: usize) -> usize {
    if n % 2 == 1 {
        n += 1;
    }
    loop {
        let mut m = n;
        for p in [2usize, 3, 5, 7] {
            while m % p == 0 {
                m /= p;
            }
        }
        if m == 1 {
            return n;
        }
        n += 2;
    }
}

impl Preset {
    /// Box half-width holding the orbit, the Gaussian tails, and the
    /// diffusion spread below the box floor.
    pub fn box_halfwidth(&self, h: f64) -> f64 {
        self.orbit_radius + 5.0 * h.sqrt() + 0.4
    }

    /// Grid sized so both the position and momentum boxes cover the
    /// half-width; `resolution_boost` scales the point count (pure transport
    /// runs filament and want finer grids).
    pub fn recommended_grid(&self, h: f64, resolution_boost: f64) -> Result<PhaseSpaceGrid> {
        let half = self.box_halfwidth(h);
        let width = 2.0 * half;
        let n_raw =
            (width * width / (2.0 * std::f64::consts::PI * h) * resolution_boost).ceil() as usize;
        let n = next_even_smooth(n_raw.max(16));
        PhaseSpaceGrid::new(n, 0.0, half, 0.0, h)
    }

    /// Sample the preset on a grid and re-derive its constants, failing on
    /// any disagreement with the certification.
    pub fn instantiate(
        &self,
        grid: &PhaseSpaceGrid,
    ) -> Result<(Symbol, Vec<Symbol>, CertifiedConstants)> {
        let need = self.orbit_radius + 4.5 * grid.h().sqrt();
        let have = grid.x_halfwidth().min(0.5 * grid.xi_width());
        if have < need {
            return Err(Error::UndersizedBox { have, need });
        }
        let p = self.hamiltonian.sample(grid)?;
        let ells: Vec<Symbol> = self
            .jumps
            .iter()
            .map(|j| j.sample(grid))
            .collect::<Result<_>>()?;

        let mu = friction_symbol(&ells, grid)?;
        let m0 = if self.jumps.is_empty() || mu.max_abs() < 1e-10 {
            0.0
        } else {
            mu.values()
                .iter()
                .map(|z| z.re)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        if (m0 - self.certified.m0).abs() > 1e-8 {
            return Err(Error::CertificationMismatch {
                constant: "m0",
                certified: self.certified.m0,
                recomputed: m0,
            });
        }
        // the analytic line-scan sup is grid-free and must reproduce exactly;
        // the spectral builder sup carries the sampling alias of the bump and
        // only has to agree at the resolution the grid can certify
        let gamma_exact = self
            .hamiltonian
            .lyapunov_gamma(grid.x_halfwidth().max(4.0));
        if (gamma_exact - self.certified.lyapunov_gamma).abs() > 1e-8 {
            return Err(Error::CertificationMismatch {
                constant: "lyapunov_gamma",
                certified: self.certified.lyapunov_gamma,
                recomputed: gamma_exact,
            });
        }
        // sanity check on the spectral path; second derivatives of the bump
        // alias at the percent level on the coarsest grids
        let gamma_grid = lyapunov_gamma(&p);
        if (gamma_grid - self.certified.lyapunov_gamma).abs()
            > 0.02 * self.certified.lyapunov_gamma.max(1.0)
        {
            return Err(Error::CertificationMismatch {
                constant: "lyapunov_gamma (grid builder)",
                certified: self.certified.lyapunov_gamma,
                recomputed: gamma_grid,
            });
        }
        let c = if self.jumps.is_empty() {
            0.0
        } else {
            nondegeneracy_constant(&ells)?
        };
        if (c - self.certified.ellipticity_c).abs() > 1e-8 {
            return Err(Error::CertificationMismatch {
                constant: "ellipticity_c",
                certified: self.certified.ellipticity_c,
                recomputed: c,
            });
        }
        Ok((p, ells, self.certified))
    }
}

const HARMONIC: HamiltonianSpec = HamiltonianSpec {
    xx: 1.0,
    xixi: 1.0,
    cross: 0.0,
    cubic: None,
};

/// Cubic perturbation strength and cutoff scale of the anharmonic preset.
pub const ANHARMONIC_LAMBDA: f64 = 0.25;
pub const ANHARMONIC_CUT: f64 = 1.2;

fn jump_x() -> JumpSpec {
    JumpSpec {
        cx: C64::new(1.0, 0.0),
        cxi: C64::new(0.0, 0.0),
    }
}

fn jump_xi() -> JumpSpec {
    JumpSpec {
        cx: C64::new(0.0, 0.0),
        cxi: C64::new(1.0, 0.0),
    }
}

fn jump_annihilation(scale: f64) -> JumpSpec {
    JumpSpec {
        cx: C64::new(scale, 0.0),
        cxi: C64::new(0.0, scale),
    }
}

/// Anharmonic oscillator with adjustable cubic strength; lambda = 0
/// degenerates to the harmonic Hamiltonian.
pub fn anharmonic(lambda: f64) -> Preset {
    let ham = HamiltonianSpec {
        cubic: if lambda == 0.0 {
            None
        } else {
            Some((lambda, ANHARMONIC_CUT))
        },
        ..HARMONIC
    };
    let gamma_l = ham.lyapunov_gamma(4.0);
    Preset {
        name: "anharmonic",
        description: "harmonic well with a smoothly cut-off cubic term; position/momentum jumps",
        hamiltonian: ham,
        jumps: vec![jump_x(), jump_xi()],
        certified: CertifiedConstants {
            m0: 0.0,
            lyapunov_gamma: gamma_l,
            ellipticity_c: 2.0,
            exact: lambda == 0.0,
            friction_free: true,
        },
        init_center: (1.0, 0.0),
        orbit_radius: 1.32,
    }
}

/// The five stock configurations.
pub fn catalog() -> Vec<Preset> {
    vec![
        Preset {
            name: "harmonic_exact",
            description: "harmonic oscillator with the scaled annihilation jump; both evolutions exact",
            hamiltonian: HARMONIC,
            jumps: vec![jump_annihilation(std::f64::consts::FRAC_1_SQRT_2)],
            certified: CertifiedConstants {
                m0: 0.5,
                lyapunov_gamma: 1.0,
                ellipticity_c: 1.0,
                exact: true,
                friction_free: false,
            },
            init_center: (1.0, 0.0),
            orbit_radius: 1.05,
        },
        Preset {
            name: "position_momentum",
            description: "harmonic oscillator with position and momentum jumps; friction-free",
            hamiltonian: HARMONIC,
            jumps: vec![jump_x(), jump_xi()],
            certified: CertifiedConstants {
                m0: 0.0,
                lyapunov_gamma: 1.0,
                ellipticity_c: 2.0,
                exact: true,
                friction_free: true,
            },
            init_center: (1.0, 0.0),
            orbit_radius: 1.05,
        },
        Preset {
            name: "damped_oscillator",
            description: "harmonic oscillator with the unit annihilation jump; friction sup 1",
            hamiltonian: HARMONIC,
            jumps: vec![jump_annihilation(1.0)],
            certified: CertifiedConstants {
                m0: 1.0,
                lyapunov_gamma: 1.0,
                ellipticity_c: 2.0,
                exact: true,
                friction_free: false,
            },
            init_center: (1.0, 0.0),
            orbit_radius: 1.05,
        },
        anharmonic(ANHARMONIC_LAMBDA),
        Preset {
            name: "free_hyperbolic",
            description: "hyperbolic flow p = x xi for Jacobian growth tests",
            hamiltonian: HamiltonianSpec {
                xx: 0.0,
                xixi: 0.0,
                cross: 1.0,
                cubic: None,
            },
            jumps: vec![jump_annihilation(std::f64::consts::FRAC_1_SQRT_2)],
            certified: CertifiedConstants {
                m0: 0.5,
                lyapunov_gamma: 1.0,
                ellipticity_c: 1.0,
                exact: true,
                friction_free: false,
            },
            init_center: (0.2, 0.2),
            orbit_radius: 1.5,
        },
    ]
}

pub fn find(name: &str) -> Result<Preset> {
    let all = catalog();
    let available: Vec<&str> = all.iter().map(|p| p.name).collect();
    all.into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::UnknownPreset {
            name: name.to_string(),
            available: available.join(", "),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bump_derivatives_match_finite_differences() {
        let (lambda, cut) = (0.3, 1.1);
        let eps = 1e-5;
        for x in [-1.7, -0.9, 0.0, 0.4, 1.3, 1.9] {
            let (_, r1, r2) = cubic_bump(x, lambda, cut);
            let rp = cubic_bump(x + eps, lambda, cut).0;
            let rm = cubic_bump(x - eps, lambda, cut).0;
            let fd1 = (rp - rm) / (2.0 * eps);
            assert!((r1 - fd1).abs() < 1e-7, "r' mismatch at {x}: {r1} vs {fd1}");
            let r0 = cubic_bump(x, lambda, cut).0;
            let fd2 = (rp - 2.0 * r0 + rm) / (eps * eps);
            assert!((r2 - fd2).abs() < 1e-4, "r'' mismatch at {x}: {r2} vs {fd2}");
        }
        // rapid decay past the cutoff
        assert!(cubic_bump(2.3, lambda, cut).0.abs() < 1e-9);
    }

    #[test]
    fn catalog_names_and_flags() {
        let names: Vec<&str> = catalog().iter().map(|p| p.name).collect();
        assert_eq!(
            names,
            vec![
                "harmonic_exact",
                "position_momentum",
                "damped_oscillator",
                "anharmonic",
                "free_hyperbolic"
            ]
        );
        let pm = find("position_momentum").unwrap();
        assert!(pm.certified.friction_free);
        assert_eq!(pm.certified.ellipticity_c, 2.0);
        let he = find("harmonic_exact").unwrap();
        assert!(he.certified.exact);
        assert!(find("unknown")
            .unwrap_err()
            .to_string()
            .contains("position_momentum"));
    }

    #[test]
    fn certification_recomputes_on_recommended_grids() {
        for preset in catalog() {
            let grid = preset.recommended_grid(1.0 / 16.0, 1.0).unwrap();
            let (_, _, c) = preset.instantiate(&grid).unwrap();
            assert_eq!(c, preset.certified);

            // stable under 2x refinement
            let fine = preset.recommended_grid(1.0 / 16.0, 2.0).unwrap();
            preset.instantiate(&fine).unwrap();
        }
    }

    #[test]
    fn damped_oscillator_m0_is_one_on_any_valid_grid() {
        let preset = find("damped_oscillator").unwrap();
        for h in [1.0 / 8.0, 1.0 / 32.0] {
            let grid = preset.recommended_grid(h, 1.0).unwrap();
            let (_, ells, _) = preset.instantiate(&grid).unwrap();
            let mu = friction_symbol(&ells, &grid).unwrap();
            let m0 = mu.values().iter().map(|z| z.re).fold(f64::MIN, f64::max);
            assert_relative_eq!(m0, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn anharmonic_lambda_zero_is_harmonic() {
        let a0 = anharmonic(0.0);
        let he = find("harmonic_exact").unwrap();
        let grid = he.recommended_grid(1.0 / 16.0, 1.0).unwrap();
        let pa = a0.hamiltonian.sample(&grid).unwrap();
        let ph = he.hamiltonian.sample(&grid).unwrap();
        assert!(pa.sub(&ph).unwrap().max_abs() < 1e-14);
        assert!(a0.certified.exact);
        assert!(!anharmonic(0.25).certified.exact);
    }

    #[test]
    fn undersized_box_rejected() {
        let preset = find("anharmonic").unwrap();
        let small = PhaseSpaceGrid::new(32, 0.0, 1.0, 0.0, 1.0 / 16.0).unwrap();
        assert!(matches!(
            preset.instantiate(&small),
            Err(Error::UndersizedBox { .. })
        ));
    }

    #[test]
    fn anharmonic_gamma_exceeds_one_and_is_stable() {
        let preset = find("anharmonic").unwrap();
        let g1 = preset.certified.lyapunov_gamma;
        assert!(g1 > 1.0 && g1 < 6.0, "gamma {g1}");
        // independent of the scan half-width as long as it covers the bump
        let g2 = preset.hamiltonian.lyapunov_gamma(6.0);
        assert!((g1 - g2).abs() < 1e-10);
    }
}
