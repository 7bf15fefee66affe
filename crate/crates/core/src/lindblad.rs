//! The quantum side: assembly of the Lindblad generator
//! L A = (i/h)[P, A] + (gamma/h) sum_j (L_j A L_j* - (L_j* L_j A + A L_j* L_j)/2),
//! its adjoint, density-matrix evolution, and the semigroup diagnostics.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::fastop::FastOp;
use crate::fokker_planck::friction_symbol;
use crate::phase_space::{PhaseSpaceGrid, Symbol};
use crate::weyl::{hs_inner, hs_norm, quantize, OperatorMatrix};
use crate::C64;

/// Assembled quantum generator with matrix-free application of its pieces.
pub struct LindbladGenerator {
    grid: PhaseSpaceGrid,
    h: f64,
    gamma: f64,
    /// Dense quantization of the Hamiltonian symbol, Hermitian.
    pub p_matrix: OperatorMatrix,
    /// Dense quantizations of the jump symbols.
    pub jump_matrices: Vec<OperatorMatrix>,
    p_fast: FastOp,
    jumps_fast: Vec<(FastOp, FastOp)>,
    /// Supremum of the friction symbol mu = (1/2i) sum_j {l_j, conj l_j}.
    pub m0: f64,
    /// True when mu vanishes identically.
    pub friction_free: bool,
    /// Garding constant entering the semigroup bound; configurable policy.
    pub c0: f64,
    /// Semigroup growth exponent M: gamma*M0 + C0*h*gamma, or C0*h^2*gamma
    /// in the friction-free case.
    pub contraction_m: f64,
    /// Whether gamma < 1/h holds; recorded, not enforced.
    pub gamma_regime_ok: bool,
}

pub fn build_lindbladian(
    p: &Symbol,
    ells: &[Symbol],
    gamma: f64,
    h: f64,
) -> Result<LindbladGenerator> {
    build_lindbladian_c0(p, ells, gamma, h, 1.0)
}

pub fn build_lindbladian_c0(
    p: &Symbol,
    ells: &[Symbol],
    gamma: f64,
    h: f64,
    c0: f64,
) -> Result<LindbladGenerator> {
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

    let p_matrix = quantize(p);
    let defect = p_matrix.herm_defect();
    if defect > 1e-10 {
        return Err(Error::NonRealHamiltonian(defect));
    }
    let jump_matrices: Vec<OperatorMatrix> = ells.iter().map(quantize).collect();

    let p_fast = FastOp::from_symbol(p);
    let jumps_fast: Vec<(FastOp, FastOp)> = ells
        .iter()
        .map(|l| {
            let f = FastOp::from_symbol(l);
            let a = f.adjoint();
            (f, a)
        })
        .collect();

    let mu = friction_symbol(ells, &grid)?;
    let mu_max_abs = mu.max_abs();
    let friction_free = mu_max_abs < 1e-10;
    let m0 = if ells.is_empty() {
        0.0
    } else {
        mu.values()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let contraction_m = if friction_free {
        c0 * h * h * gamma
    } else {
        gamma * m0 + c0 * h * gamma
    };

    Ok(LindbladGenerator {
        gamma_regime_ok: gamma < 1.0 / h,
        grid,
        h,
        gamma,
        p_matrix,
        jump_matrices,
        p_fast,
        jumps_fast,
        m0: if friction_free { 0.0 } else { m0 },
        friction_free,
        c0,
        contraction_m,
    })
}

impl LindbladGenerator {
    pub fn grid(&self) -> &PhaseSpaceGrid {
        &self.grid
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn jump_count(&self) -> usize {
        self.jumps_fast.len()
    }

    fn apply_inner(&self, a: &Array2<C64>, adjoint: bool) -> Array2<C64> {
        let ih = C64::new(0.0, if adjoint { -1.0 } else { 1.0 } / self.h);
        let pa = self.p_fast.apply_left(a);
        let ap = self.p_fast.apply_right(a);
        let mut out = (&pa - &ap).mapv(|z| z * ih);

        if self.gamma > 0.0 {
            let gh = self.gamma / self.h;
            for (l, ladj) in &self.jumps_fast {
                let (sandwich, lla, all) = if adjoint {
                    // L* A L
                    let la = ladj.apply_left(a);
                    let sandwich = l.apply_right(&la);
                    let lla = {
                        let t = l.apply_left(a);
                        ladj.apply_left(&t)
                    };
                    let all = {
                        let t = ladj.apply_right(a);
                        l.apply_right(&t)
                    };
                    (sandwich, lla, all)
                } else {
                    // L A L*
                    let la = l.apply_left(a);
                    let sandwich = ladj.apply_right(&la);
                    let lla = ladj.apply_left(&la);
                    let all = {
                        let t = ladj.apply_right(a);
                        l.apply_right(&t)
                    };
                    (sandwich, lla, all)
                };
                out.zip_mut_with(&sandwich, |acc, v| *acc += gh * v);
                out.zip_mut_with(&lla, |acc, v| *acc -= 0.5 * gh * v);
                out.zip_mut_with(&all, |acc, v| *acc -= 0.5 * gh * v);
            }
        }
        out
    }

    /// L A.
    pub fn apply(&self, a: &OperatorMatrix) -> Result<OperatorMatrix> {
        a.same_grid(&self.p_matrix)?;
        OperatorMatrix::new(self.grid.clone(), self.apply_inner(a.entries(), false))
    }

    /// Adjoint action L* A (commutator sign swapped, jump sandwich conjugated).
    pub fn apply_adjoint(&self, a: &OperatorMatrix) -> Result<OperatorMatrix> {
        a.same_grid(&self.p_matrix)?;
        OperatorMatrix::new(self.grid.clone(), self.apply_inner(a.entries(), true))
    }

    /// Residual of the dissipation identity
    /// 2 Re<L A, A> = -(gamma/h) sum ||[L_j, A]||^2 + (gamma/h) <sum [L_j, L_j*] A*, A*>,
    /// normalized by ||A||^2. With `adjoint` the companion identity for L* is
    /// evaluated (commutators of L_j* with A, pairing against A itself).
    pub fn dissipation_residual(&self, a: &OperatorMatrix, adjoint: bool) -> Result<f64> {
        a.same_grid(&self.p_matrix)?;
        let la = if adjoint {
            self.apply_adjoint(a)?
        } else {
            self.apply(a)?
        };
        let lhs = 2.0 * hs_inner(&la, a)?.re;

        let gh = self.gamma / self.h;
        let mut comm_sq = 0.0;
        for (l, ladj) in &self.jumps_fast {
            let op = if adjoint { ladj } else { l };
            let comm = &op.apply_left(a.entries()) - &op.apply_right(a.entries());
            comm_sq += comm.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }

        let probe = if adjoint {
            a.entries().clone()
        } else {
            a.adjoint().entries().clone()
        };
        let mut paired = C64::default();
        for (l, ladj) in &self.jumps_fast {
            let llp = l.apply_left(&ladj.apply_left(&probe));
            let lls = ladj.apply_left(&l.apply_left(&probe));
            let comm = &llp - &lls;
            paired += comm
                .iter()
                .zip(probe.iter())
                .map(|(x, y)| x * y.conj())
                .sum::<C64>();
        }

        let norm_sq = hs_norm(a).powi(2).max(f64::MIN_POSITIVE);
        Ok((lhs + gh * comm_sq - gh * paired.re).abs() / norm_sq)
    }
}

/// Per-step conservation diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct QuantumStepDiag {
    pub t: f64,
    pub trace: C64,
    pub herm_defect: f64,
    pub hs_norm: f64,
}

/// Evolution record: states at sample times, diagnostics at every step.
pub struct QuantumTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<OperatorMatrix>,
    pub steps: Vec<QuantumStepDiag>,
}

/// Explicit RK4 stepper on the matrix equation dA/dt = L A.
pub struct QuantumStepper<'a> {
    gen: &'a LindbladGenerator,
    pub state: Array2<C64>,
    pub t: f64,
    norm0: f64,
}

impl<'a> QuantumStepper<'a> {
    pub fn new(gen: &'a LindbladGenerator, a0: &OperatorMatrix) -> Result<Self> {
        a0.same_grid(&gen.p_matrix)?;
        Ok(Self {
            gen,
            state: a0.entries().clone(),
            t: 0.0,
            norm0: hs_norm(a0),
        })
    }

    pub fn step(&mut self, dt: f64) -> Result<()> {
        let a = &self.state;
        let k1 = self.gen.apply_inner(a, false);
        let k2 = self
            .gen
            .apply_inner(&(a + &k1.mapv(|z| z * (0.5 * dt))), false);
        let k3 = self
            .gen
            .apply_inner(&(a + &k2.mapv(|z| z * (0.5 * dt))), false);
        let k4 = self.gen.apply_inner(&(a + &k3.mapv(|z| z * dt)), false);
        let mut new = self.state.clone();
        new.zip_mut_with(&k1, |acc, v| *acc += (dt / 6.0) * v);
        new.zip_mut_with(&k2, |acc, v| *acc += (dt / 3.0) * v);
        new.zip_mut_with(&k3, |acc, v| *acc += (dt / 3.0) * v);
        new.zip_mut_with(&k4, |acc, v| *acc += (dt / 6.0) * v);
        self.state = new;
        self.t += dt;

        let norm = self.state.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let limit = 10.0 * (self.gen.contraction_m.max(0.0) * self.t).exp() * self.norm0;
        if !norm.is_finite() || norm > limit {
            return Err(Error::Unstable {
                t: self.t,
                norm,
                limit,
            });
        }
        Ok(())
    }

    pub fn diag(&self) -> QuantumStepDiag {
        let n = self.state.nrows();
        let trace: C64 = (0..n).map(|i| self.state[(i, i)]).sum();
        let hs: f64 = self.state.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let mut herm: f64 = 0.0;
        for i in 0..n {
            for j in 0..=i {
                let d = (self.state[(i, j)] - self.state[(j, i)].conj()).norm_sqr();
                herm += if i == j { d } else { 2.0 * d };
            }
        }
        QuantumStepDiag {
            t: self.t,
            trace,
            herm_defect: herm.sqrt() / hs.max(f64::MIN_POSITIVE),
            hs_norm: hs,
        }
    }

    pub fn matrix(&self, grid: &PhaseSpaceGrid) -> OperatorMatrix {
        OperatorMatrix::new(grid.clone(), self.state.clone()).expect("finite state")
    }
}

/// Integrate dA/dt = L A over [0, T] with step `dt` (last step shortened to
/// land on T), recording roughly 64 evenly strided states.
pub fn evolve(
    gen: &LindbladGenerator,
    a0: &OperatorMatrix,
    t_final: f64,
    dt: f64,
) -> Result<QuantumTrajectory> {
    if !(dt > 0.0) {
        return Err(Error::NonPositiveStep(dt));
    }
    if t_final < dt {
        return Err(Error::BadTimeSpan { t: t_final, dt });
    }
    let n_steps = (t_final / dt).ceil() as usize;
    let stride = n_steps.div_ceil(64).max(1);

    let mut stepper = QuantumStepper::new(gen, a0)?;
    let mut traj = QuantumTrajectory {
        times: vec![0.0],
        states: vec![a0.clone()],
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
            traj.states.push(stepper.matrix(gen.grid()));
        }
    }
    Ok(traj)
}

/// Semigroup envelope audit: per recorded step,
/// ||A(t)|| <= e^{M t} ||A(0)|| (1 + tol).
#[derive(Debug, Clone)]
pub struct ContractionReport {
    /// max over steps of ||A(t)|| / (e^{M t} ||A(0)||)
    pub max_ratio: f64,
    /// first (t, ratio) exceeding 1 + tol, if any
    pub first_violation: Option<(f64, f64)>,
    /// max over consecutive steps of ||A(t_{k+1})|| / ||A(t_k)|| - 1
    pub max_consecutive_growth: f64,
    pub tol: f64,
}

pub fn contraction_report(
    traj: &QuantumTrajectory,
    gen: &LindbladGenerator,
    tol: f64,
) -> ContractionReport {
    let norm0 = traj.steps[0].hs_norm.max(f64::MIN_POSITIVE);
    let m = gen.contraction_m;
    let mut max_ratio: f64 = 0.0;
    let mut first_violation = None;
    let mut max_growth: f64 = f64::NEG_INFINITY;
    let mut prev = norm0;
    for s in &traj.steps {
        let ratio = s.hs_norm / ((m * s.t).exp() * norm0);
        if ratio > max_ratio {
            max_ratio = ratio;
        }
        if first_violation.is_none() && ratio > 1.0 + tol {
            first_violation = Some((s.t, ratio));
        }
        if s.t > 0.0 {
            max_growth = max_growth.max(s.hs_norm / prev - 1.0);
        }
        prev = s.hs_norm;
    }
    ContractionReport {
        max_ratio,
        first_violation,
        max_consecutive_growth: max_growth,
        tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::Monomial;
    use crate::weyl::{coherent_state, projector};
    use approx::assert_relative_eq;

    fn grid(n: usize, half: f64, h: f64) -> PhaseSpaceGrid {
        PhaseSpaceGrid::new(n, 0.0, half, 0.0, h).unwrap()
    }

    fn harmonic(g: &PhaseSpaceGrid) -> Symbol {
        Symbol::sample_split(
            g,
            vec![
                Monomial::new(2, 0, C64::new(0.5, 0.0)),
                Monomial::new(0, 2, C64::new(0.5, 0.0)),
            ],
            |_, _| C64::default(),
        )
        .unwrap()
    }

    fn affine(g: &PhaseSpaceGrid, cx: C64, cxi: C64) -> Symbol {
        Symbol::sample_split(
            g,
            vec![Monomial::new(1, 0, cx), Monomial::new(0, 1, cxi)],
            |_, _| C64::default(),
        )
        .unwrap()
    }

    #[test]
    fn build_computes_friction_sup() {
        let g = grid(32, 4.0, 1.0 / 16.0);
        let p = harmonic(&g);
        // real jumps: mu = 0
        let ells = vec![
            affine(&g, C64::new(1.0, 0.0), C64::default()),
            affine(&g, C64::default(), C64::new(1.0, 0.0)),
        ];
        let gen = build_lindbladian(&p, &ells, 1.0, g.h()).unwrap();
        assert!(gen.friction_free);
        assert_eq!(gen.m0, 0.0);

        // l = x + i xi: mu = 1
        let ell = vec![affine(&g, C64::new(1.0, 0.0), C64::new(0.0, 1.0))];
        let gen2 = build_lindbladian(&p, &ell, 1.0, g.h()).unwrap();
        assert!(!gen2.friction_free);
        assert_relative_eq!(gen2.m0, 1.0, epsilon = 1e-10);

        assert!(matches!(
            build_lindbladian(&p, &ell, -1.0, g.h()),
            Err(Error::NegativeGamma(_))
        ));
    }

    #[test]
    fn generator_annihilates_identity_for_selfadjoint_jumps() {
        let g = grid(32, 4.0, 1.0 / 16.0);
        let p = harmonic(&g);
        let ells = vec![
            affine(&g, C64::new(1.0, 0.0), C64::default()),
            affine(&g, C64::default(), C64::new(1.0, 0.0)),
        ];
        let gen = build_lindbladian(&p, &ells, 1.0, g.h()).unwrap();
        let id = OperatorMatrix::identity(&g);
        let out = gen.apply(&id).unwrap();
        assert!(hs_norm(&out) < 1e-9, "norm {}", hs_norm(&out));
    }

    #[test]
    fn gamma_zero_annihilates_hamiltonian() {
        let g = grid(32, 4.0, 1.0 / 16.0);
        let p = harmonic(&g);
        let gen = build_lindbladian(&p, &[], 0.0, g.h()).unwrap();
        let out = gen.apply(&gen.p_matrix.clone()).unwrap();
        assert!(hs_norm(&out) / hs_norm(&gen.p_matrix) < 1e-12);
    }

    #[test]
    fn trace_free_on_random_hermitian() {
        let g = grid(24, 4.0, 1.0 / 8.0);
        let p = harmonic(&g);
        let ell = vec![affine(&g, C64::new(1.0, 0.0), C64::new(0.0, 1.0))];
        let gen = build_lindbladian(&p, &ell, 1.0, g.h()).unwrap();

        let mut state = 0xabcdefu64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(7);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        for _ in 0..20 {
            let n = 24;
            let mut m = Array2::<C64>::zeros((n, n));
            for i in 0..n {
                for j in 0..=i {
                    let z = C64::new(next(), if i == j { 0.0 } else { next() });
                    m[(i, j)] = z;
                    m[(j, i)] = z.conj();
                }
            }
            let a = OperatorMatrix::new(g.clone(), m).unwrap();
            let scale = 1.0 / hs_norm(&a);
            let a = a.scaled(C64::from(scale));
            let la = gen.apply(&a).unwrap();
            assert!(la.trace().norm() < 1e-10, "trace {}", la.trace().norm());
        }
    }

    #[test]
    fn dissipation_identity_residuals() {
        let g = grid(32, 3.0, 1.0 / 8.0);
        let p = harmonic(&g);
        let ell = vec![affine(&g, C64::new(1.0, 0.0), C64::new(0.0, 1.0))];
        let gen = build_lindbladian(&p, &ell, 1.0, g.h()).unwrap();

        // gamma = 0 reduces to the trace-free antisymmetric commutator
        let gen0 = build_lindbladian(&p, &ell, 0.0, g.h()).unwrap();

        let cs = coherent_state((1.0, 0.0), &g).unwrap();
        let proj = projector(&g, &cs.vector);
        assert!(gen.dissipation_residual(&proj, false).unwrap() < 1e-9);
        assert!(gen.dissipation_residual(&proj, true).unwrap() < 1e-9);
        assert!(gen0.dissipation_residual(&proj, false).unwrap() < 1e-10);

        let mut state = 0x5555u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(3);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        let mut m = Array2::<C64>::zeros((32, 32));
        for z in m.iter_mut() {
            *z = C64::new(next(), next());
        }
        let a = OperatorMatrix::new(g.clone(), m).unwrap();
        assert!(gen.dissipation_residual(&a, false).unwrap() < 1e-9);
        assert!(gen.dissipation_residual(&a, true).unwrap() < 1e-9);
    }

    #[test]
    fn hermiticity_propagates_through_generator() {
        let g = grid(32, 3.0, 1.0 / 8.0);
        let p = harmonic(&g);
        let ell = vec![affine(&g, C64::new(1.0, 0.0), C64::new(0.0, 1.0))];
        let gen = build_lindbladian(&p, &ell, 0.7, g.h()).unwrap();
        let cs = coherent_state((0.5, 0.5), &g).unwrap();
        let a = projector(&g, &cs.vector);
        // (L A)* = L (A*): for Hermitian A the image stays Hermitian
        let la = gen.apply(&a).unwrap();
        let la_adj = la.adjoint();
        let diff = hs_norm(&la.sub(&la_adj).unwrap()) / hs_norm(&la).max(1e-300);
        assert!(diff < 1e-12, "defect {diff}");
    }

    #[test]
    fn evolve_validates_steps() {
        let g = grid(16, 4.0, 1.0 / 4.0);
        let p = harmonic(&g);
        let gen = build_lindbladian(&p, &[], 0.0, g.h()).unwrap();
        let id = OperatorMatrix::identity(&g);
        assert!(matches!(
            evolve(&gen, &id, 1.0, 0.0),
            Err(Error::NonPositiveStep(_))
        ));
        assert!(matches!(
            evolve(&gen, &id, 0.001, 0.01),
            Err(Error::BadTimeSpan { .. })
        ));
    }

    #[test]
    fn trace_and_hermiticity_conserved_along_trajectory() {
        let g = grid(48, 4.0, 1.0 / 8.0);
        let p = harmonic(&g);
        let ells = vec![
            affine(&g, C64::new(1.0, 0.0), C64::default()),
            affine(&g, C64::default(), C64::new(1.0, 0.0)),
        ];
        let gen = build_lindbladian(&p, &ells, 1.0, g.h()).unwrap();
        let cs = coherent_state((1.0, 0.0), &g).unwrap();
        let a0 = projector(&g, &cs.vector);
        let traj = evolve(&gen, &a0, 0.5, 1.0 / 8.0 / 40.0).unwrap();
        for s in &traj.steps {
            assert!((s.trace.re - 1.0).abs() < 1e-8, "trace {}", s.trace.re);
            assert!(s.trace.im.abs() < 1e-10);
            assert!(s.herm_defect < 1e-8);
        }
        // friction-free: HS norm non-increasing within 1e-8
        let rep = contraction_report(&traj, &gen, 1e-8);
        assert!(rep.max_consecutive_growth < 1e-8);
        assert!(rep.first_violation.is_none());
    }
}
