//! Named invariant checks across every module, runnable as one suite. Each
//! check returns its measured value next to the tolerance it must meet, so
//! the table printed by the command line tells the whole story.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::fokker_planck::{
    build_fp, energy_ledger, evolve_fp, flow_jacobian, nondegeneracy_constant, splitting_signs,
};
use crate::lindblad::{build_lindbladian, contraction_report, evolve};
use crate::linalg::hermitian_eigenvalues;
use crate::phase_space::{
    poisson_bracket, sobolev_norm, spectral_derivative, Axis, PhaseSpaceGrid, Symbol,
};
use crate::presets;
use crate::weyl::{
    coherent_state, hs_norm, moyal_star, projector, quantize, weyl_symbol, OperatorMatrix,
};
use crate::{fft, C64};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    /// measured worst-case value
    pub measured: f64,
    /// threshold it must stay below (or above, when `lower_bound`)
    pub threshold: f64,
    pub lower_bound: bool,
    pub detail: String,
}

impl CheckResult {
    fn upper(name: &'static str, measured: f64, threshold: f64, detail: impl Into<String>) -> Self {
        CheckResult {
            name,
            pass: measured <= threshold,
            measured,
            threshold,
            lower_bound: false,
            detail: detail.into(),
        }
    }

    fn lower(name: &'static str, measured: f64, threshold: f64, detail: impl Into<String>) -> Self {
        CheckResult {
            name,
            pass: measured >= threshold,
            measured,
            threshold,
            lower_bound: true,
            detail: detail.into(),
        }
    }
}

/// Random symbol with spectrum confined to |freq| <= band_fraction * N/2.
pub fn random_band_limited(
    grid: &PhaseSpaceGrid,
    rng: &mut impl Rng,
    band_fraction: f64,
    real: bool,
) -> Symbol {
    let n = grid.n_points();
    let cut = ((band_fraction * n as f64 / 2.0) as i64).max(1);
    let mut spec = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        let fx = fft::bin_freq(i, n);
        if fx.abs() > cut {
            continue;
        }
        for k in 0..n {
            let fxi = fft::bin_freq(k, n);
            if fxi.abs() > cut {
                continue;
            }
            spec[(i, k)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    fft::fft_cols(&mut spec, true);
    fft::fft_rows(&mut spec, true);
    let values = if real {
        spec.mapv(|z| C64::new(z.re, 0.0))
    } else {
        spec
    };
    Symbol::from_values(grid.clone(), values).expect("finite random symbol")
}

/// Random matrix with unit Hilbert-Schmidt norm.
pub fn random_matrix(grid: &PhaseSpaceGrid, rng: &mut impl Rng, hermitian: bool) -> OperatorMatrix {
    let n = grid.n_points();
    let mut m = Array2::<C64>::zeros((n, n));
    if hermitian {
        for i in 0..n {
            for j in 0..=i {
                let z = C64::new(
                    rng.gen_range(-1.0..1.0),
                    if i == j { 0.0 } else { rng.gen_range(-1.0..1.0) },
                );
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
    } else {
        for z in m.iter_mut() {
            *z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    let a = OperatorMatrix::new(grid.clone(), m).expect("finite random matrix");
    let s = 1.0 / hs_norm(&a);
    a.scaled(C64::new(s, 0.0))
}

/// Weyl isometry defect over `count` random band-limited symbols.
pub fn isometry_defect(h: f64, n_points: usize, count: usize, rng: &mut impl Rng) -> f64 {
    let half = 0.5 * (2.0 * std::f64::consts::PI * h * n_points as f64).sqrt();
    let grid = PhaseSpaceGrid::new(n_points, 0.0, half, 0.0, h).expect("grid");
    let scale = (2.0 * std::f64::consts::PI * h).sqrt();
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let a = random_band_limited(&grid, rng, 0.5, false);
        let op = quantize(&a);
        let defect = (hs_norm(&op) - a.l2_norm() / scale).abs() / hs_norm(&op);
        worst = worst.max(defect);
    }
    worst
}

/// Round-trip defects (symbol side, matrix side) on random data.
pub fn round_trip_defect(
    h: f64,
    n_points: usize,
    symbols: usize,
    matrices: usize,
    rng: &mut impl Rng,
) -> (f64, f64) {
    let half = 0.5 * (2.0 * std::f64::consts::PI * h * n_points as f64).sqrt();
    let grid = PhaseSpaceGrid::new(n_points, 0.0, half, 0.0, h).expect("grid");
    let mut worst_sym: f64 = 0.0;
    for _ in 0..symbols {
        let a = random_band_limited(&grid, rng, 0.5, false);
        let back = weyl_symbol(&quantize(&a));
        worst_sym = worst_sym.max(back.sub(&a).unwrap().max_abs() / a.max_abs());
    }
    let mut worst_mat: f64 = 0.0;
    for _ in 0..matrices {
        let m = random_matrix(&grid, rng, false);
        let back = quantize(&weyl_symbol(&m));
        worst_mat = worst_mat.max(hs_norm(&back.sub(&m).unwrap()) / hs_norm(&m));
    }
    (worst_sym, worst_mat)
}

/// Measured star-product convergence orders for truncation orders 1..=3,
/// comparing residuals at h against h/2 on a fixed box.
pub fn star_orders(h_coarse: f64, n_coarse: usize) -> Result<[f64; 3]> {
    let residuals = |h: f64, n: usize| -> Result<[f64; 3]> {
        let half = 0.5 * (2.0 * std::f64::consts::PI * h * n as f64).sqrt();
        let grid = PhaseSpaceGrid::new(n, 0.0, half, 0.0, h)?;
        let a = Symbol::sample(&grid, |x, xi| {
            C64::new((-(x * x + xi * xi) / (2.0 * 0.55 * 0.55)).exp(), 0.0)
        })?;
        let b = Symbol::sample(&grid, |x, xi| {
            let g = (-((x - 0.4).powi(2) + (xi + 0.3).powi(2)) / (2.0 * 0.6 * 0.6)).exp();
            C64::new(g * (1.0 + 0.4 * x), 0.2 * g * xi)
        })?;
        let product = quantize(&a).matmul(&quantize(&b))?;
        // relative residual: the absolute Hilbert-Schmidt norm of a fixed
        // symbol family carries the isometry prefactor (2 pi h)^{-1/2},
        // which would shave 1/2 off every measured order
        let scale = hs_norm(&product);
        let mut out = [0.0; 3];
        for (slot, order) in [(0usize, 1usize), (1, 2), (2, 3)] {
            let star = moyal_star(&a, &b, order)?;
            out[slot] = hs_norm(&product.sub(&quantize(&star))?) / scale;
        }
        Ok(out)
    };
    let coarse = residuals(h_coarse, n_coarse)?;
    let fine = residuals(h_coarse / 2.0, 2 * n_coarse)?;
    Ok([
        (coarse[0] / fine[0]).log2(),
        (coarse[1] / fine[1]).log2(),
        (coarse[2] / fine[2]).log2(),
    ])
}

fn grid_for_checks(h: f64, n: usize) -> PhaseSpaceGrid {
    let half = 0.5 * (2.0 * std::f64::consts::PI * h * n as f64).sqrt();
    PhaseSpaceGrid::new(n, 0.0, half, 0.0, h).expect("check grid")
}

/// Run the whole invariant suite with a fixed seed.
pub fn run_all(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    // phase space
    {
        let mut worst: f64 = 0.0;
        for (n, half, h) in [(8usize, 4.0, 1.0), (64, 8.0, 1.0 / 16.0), (120, 2.4, 1.0 / 32.0)] {
            let g = PhaseSpaceGrid::new(n, 0.0, half, 0.0, h).unwrap();
            worst = worst.max(g.dual_defect());
        }
        out.push(CheckResult::upper(
            "dual_grid_identity",
            worst,
            1e-14,
            "dx*dxi*N = 2 pi h, relative",
        ));
    }
    {
        let g = grid_for_checks(0.25, 48);
        let f = random_band_limited(&g, &mut rng, 0.4, false);
        let gsym = random_band_limited(&g, &mut rng, 0.4, false);
        let lin = {
            let lhs = spectral_derivative(&f.add(&gsym.scaled(C64::new(0.7, 0.3))).unwrap(), Axis::X, 1);
            let rhs = spectral_derivative(&f, Axis::X, 1)
                .add(&spectral_derivative(&gsym, Axis::X, 1).scaled(C64::new(0.7, 0.3)))
                .unwrap();
            lhs.sub(&rhs).unwrap().max_abs() / f.max_abs().max(1.0)
        };
        out.push(CheckResult::upper(
            "derivative_linearity",
            lin,
            1e-12,
            "d(f + c g) = df + c dg on band-limited symbols",
        ));

        // product rule on resolved trigonometric polynomials
        let tau = 2.0 * std::f64::consts::PI;
        let l = g.x_width();
        let fa = Symbol::sample(&g, |x, _| C64::new((tau * x / l).sin(), 0.0)).unwrap();
        let fb = Symbol::sample(&g, |x, _| C64::new((2.0 * tau * x / l).cos(), 0.0)).unwrap();
        let prod = Symbol::from_values(g.clone(), fa.values() * fb.values()).unwrap();
        let lhs = spectral_derivative(&prod, Axis::X, 1);
        let rhs = Symbol::from_values(
            g.clone(),
            spectral_derivative(&fa, Axis::X, 1).values() * fb.values()
                + fa.values() * spectral_derivative(&fb, Axis::X, 1).values(),
        )
        .unwrap();
        out.push(CheckResult::upper(
            "derivative_product_rule",
            lhs.sub(&rhs).unwrap().max_abs(),
            1e-10,
            "d(fg) = f dg + g df on resolved trig polynomials",
        ));

        let pb = poisson_bracket(&f, &gsym).unwrap();
        let pb_rev = poisson_bracket(&gsym, &f).unwrap();
        out.push(CheckResult::upper(
            "poisson_antisymmetry",
            pb.add(&pb_rev).unwrap().max_abs() / pb.max_abs().max(1e-300),
            1e-12,
            "{f, g} = -{g, f} pointwise, relative",
        ));

        let s0a = sobolev_norm(&f, 0.0, 0.37);
        let s0b = sobolev_norm(&f, 0.0, 1.93);
        out.push(CheckResult::upper(
            "sobolev_s0_eps_independent",
            (s0a - s0b).abs(),
            0.0,
            "s = 0 norm identical for any epsilon",
        ));
    }

    // weyl dictionary
    {
        let mut worst: f64 = 0.0;
        for (h, n) in [(1.0 / 16.0, 64usize), (1.0 / 64.0, 256)] {
            worst = worst.max(isometry_defect(h, n, 50, &mut rng));
        }
        out.push(CheckResult::upper(
            "weyl_isometry",
            worst,
            1e-10,
            "|hs(Op a) - (2 pi h)^{-1/2} |a|_2| relative, random band-limited",
        ));

        let (ds, dm) = round_trip_defect(1.0 / 16.0, 64, 25, 25, &mut rng);
        out.push(CheckResult::upper(
            "weyl_round_trip",
            ds.max(dm),
            1e-10,
            "symbol->op->symbol and op->symbol->op, relative",
        ));

        let g = grid_for_checks(1.0 / 16.0, 64);
        let mut worst_h: f64 = 0.0;
        for _ in 0..10 {
            let a = random_band_limited(&g, &mut rng, 0.5, true);
            worst_h = worst_h.max(quantize(&a).herm_defect());
        }
        out.push(CheckResult::upper(
            "reality_selfadjointness",
            worst_h,
            1e-12,
            "real symbols quantize to Hermitian matrices",
        ));

        let orders = star_orders(1.0 / 16.0, 96).expect("star order measurement");
        for (i, (o, target)) in orders.iter().zip([1.7f64, 2.7, 3.7]).enumerate() {
            let name = match i {
                0 => "star_order_1",
                1 => "star_order_2",
                _ => "star_order_3",
            };
            out.push(CheckResult::lower(
                name,
                *o,
                target,
                format!("log2 residual ratio, target {}", i + 2),
            ));
        }

        let cs = coherent_state((0.4, -0.3), &g).unwrap();
        let p = projector(&g, &cs.vector);
        let p2 = p.matmul(&p).unwrap();
        out.push(CheckResult::upper(
            "coherent_projector_idempotent",
            hs_norm(&p2.sub(&p).unwrap()),
            1e-10,
            "P^2 = P for the coherent projector",
        ));
        out.push(CheckResult::upper(
            "coherent_projector_peak",
            (cs.projector_symbol.max_abs() - 2.0).abs(),
            0.04,
            "projector symbol peaks near 2^n = 2",
        ));
    }

    // lindblad generator across presets
    {
        let h = 1.0 / 32.0;
        let mut worst_diss: f64 = 0.0;
        let mut worst_trace: f64 = 0.0;
        let mut worst_herm: f64 = 0.0;
        for preset in presets::catalog() {
            let grid = preset.recommended_grid(h, 1.0).unwrap();
            let (p, ells, _) = preset.instantiate(&grid).unwrap();
            let gen = build_lindbladian(&p, &ells, 1.0, h).unwrap();
            for _ in 0..4 {
                let a = random_matrix(&grid, &mut rng, false);
                worst_diss = worst_diss.max(gen.dissipation_residual(&a, false).unwrap());
                worst_diss = worst_diss.max(gen.dissipation_residual(&a, true).unwrap());
                let la = gen.apply(&a).unwrap();
                worst_trace = worst_trace.max(la.trace().norm());
            }
            let ah = random_matrix(&grid, &mut rng, true);
            let lah = gen.apply(&ah).unwrap();
            worst_herm = worst_herm.max(lah.herm_defect());
        }
        out.push(CheckResult::upper(
            "dissipation_identity",
            worst_diss,
            1e-9,
            "both identities, random matrices, all presets",
        ));
        out.push(CheckResult::upper(
            "generator_trace_free",
            worst_trace,
            1e-10,
            "|tr L A| on unit-norm random matrices",
        ));
        out.push(CheckResult::upper(
            "hermiticity_propagation",
            worst_herm,
            1e-12,
            "L maps Hermitian to Hermitian",
        ));
    }

    // fokker-planck structure across presets
    {
        let h = 1.0 / 32.0;
        let mut worst_zero: f64 = 0.0;
        let mut worst_tr: f64 = 0.0;
        let mut worst_dr: f64 = 0.0;
        let mut worst_df: f64 = 0.0;
        for preset in presets::catalog() {
            let grid = preset.recommended_grid(h, 1.0).unwrap();
            let (p, ells, _) = preset.instantiate(&grid).unwrap();
            let gen = build_fp(&p, &ells, 1.0, h).unwrap();
            let one = Symbol::sample(&grid, |_, _| C64::new(1.0, 0.0)).unwrap();
            let q1 = gen.apply_q(&one).unwrap();
            let mu2: Array2<C64> = gen.friction().mapv(|v| C64::new(2.0 * v, 0.0));
            let expect = Symbol::from_values(grid.clone(), mu2).unwrap();
            worst_zero = worst_zero.max(q1.sub(&expect).unwrap().max_abs());

            // the anti-selfadjointness identities integrate by parts; the
            // test field must sit below the box floor at the seam
            let raw = random_band_limited(&grid, &mut rng, 0.35, false);
            let sx = 0.5 * grid.x_halfwidth();
            let sxi = 0.25 * grid.xi_width();
            let window = Symbol::sample(&grid, |x, xi| {
                C64::new((-(x / sx).powi(4) - (xi / sxi).powi(4)).exp(), 0.0)
            })
            .unwrap();
            let a = Symbol::from_values(grid.clone(), raw.values() * window.values()).unwrap();
            let (tr, dr, df) = splitting_signs(&gen, &a).unwrap();
            worst_tr = worst_tr.max(tr.abs());
            worst_dr = worst_dr.max(dr.abs());
            worst_df = worst_df.max(df);
        }
        out.push(CheckResult::upper(
            "fp_zeroth_order",
            worst_zero,
            1e-10,
            "Q(1) = 2 gamma mu pointwise",
        ));
        out.push(CheckResult::upper(
            "fp_transport_antisymmetry",
            worst_tr,
            1e-9,
            "Re<H_p a, a> relative",
        ));
        out.push(CheckResult::upper(
            "fp_drift_antisymmetry",
            worst_dr,
            1e-9,
            "Re<B a, a> relative",
        ));
        out.push(CheckResult::upper(
            "fp_diffusion_nonpositive",
            worst_df,
            1e-9,
            "Re<diffusion a, a> relative",
        ));
    }

    // ellipticity certification
    {
        let g = grid_for_checks(1.0 / 16.0, 64);
        let pm = presets::find("position_momentum").unwrap();
        let (_, ells_pm, _) = pm.instantiate(&g).unwrap();
        let c_pm = nondegeneracy_constant(&ells_pm).unwrap();
        let da = presets::find("damped_oscillator").unwrap();
        let (_, ells_da, _) = da.instantiate(&g).unwrap();
        let c_da = nondegeneracy_constant(&ells_da).unwrap();
        let worst = (c_pm - 2.0).abs().max((c_da - 2.0).abs());
        out.push(CheckResult::upper(
            "ellipticity_constants",
            worst,
            1e-10,
            "c = 2 for position_momentum and damped_oscillator",
        ));
        let degenerate = presets::JumpSpec {
            cx: C64::new(1.0, 0.0),
            cxi: C64::new(0.0, 0.0),
        }
        .sample(&g)
        .unwrap();
        let c_deg = nondegeneracy_constant(std::slice::from_ref(&degenerate)).unwrap();
        out.push(CheckResult::upper(
            "ellipticity_degenerate",
            c_deg,
            1e-10,
            "c = 0 for the single position jump",
        ));
    }

    // preset certification on recommended grids
    {
        let mut ok = true;
        let mut detail = String::new();
        for preset in presets::catalog() {
            let grid = preset.recommended_grid(1.0 / 16.0, 1.0).unwrap();
            if let Err(e) = preset.instantiate(&grid) {
                ok = false;
                detail = e.to_string();
                break;
            }
        }
        out.push(CheckResult {
            name: "preset_certification",
            pass: ok,
            measured: if ok { 0.0 } else { 1.0 },
            threshold: 0.5,
            lower_bound: false,
            detail: if ok {
                "all certified constants reproduce".into()
            } else {
                detail
            },
        });
    }

    // flow jacobians
    {
        let harmonic = presets::find("harmonic_exact").unwrap();
        let rot = flow_jacobian(&harmonic.hamiltonian, (0.7, 0.0), 2.5, 5e-4, (10.0, 10.0), 1.0)
            .unwrap();
        out.push(CheckResult::upper(
            "flow_rotation_bounded",
            rot.max_entry - 1.0,
            1e-8,
            "harmonic jacobian entries stay below 1",
        ));
        let hyp = presets::find("free_hyperbolic").unwrap();
        let fj = flow_jacobian(&hyp.hamiltonian, (0.05, 0.05), 3.0, 2e-4, (10.0, 10.0), 1.0)
            .unwrap();
        let rate = fj.jacobian[0][0].ln() / 3.0;
        out.push(CheckResult::upper(
            "flow_hyperbolic_rate",
            (rate - 1.0).abs(),
            1e-3,
            "jacobian growth rate equals Gamma = 1",
        ));
    }

    // short evolutions: conservation, contraction, energy, positivity
    {
        let h = 1.0 / 8.0;
        let t_final = 0.4;
        let mut worst_trace: f64 = 0.0;
        let mut worst_herm: f64 = 0.0;
        let mut worst_eig: f64 = 0.0;
        let mut worst_decay: f64 = 0.0;
        for preset in presets::catalog() {
            let grid = preset.recommended_grid(h, 1.0).unwrap();
            let (p, ells, _) = preset.instantiate(&grid).unwrap();
            let gen = build_lindbladian(&p, &ells, 1.0, h).unwrap();
            let cs = coherent_state(preset.init_center, &grid).unwrap();
            let a0 = projector(&grid, &cs.vector);
            let traj = evolve(&gen, &a0, t_final, h / 40.0).unwrap();
            for s in &traj.steps {
                worst_trace = worst_trace.max((s.trace - C64::new(1.0, 0.0)).norm());
                worst_herm = worst_herm.max(s.herm_defect);
            }
            let last = traj.states.last().unwrap();
            let eigs = hermitian_eigenvalues(last.entries());
            worst_eig = worst_eig.max(-eigs[0]);
            let rep = contraction_report(&traj, &gen, 1e-6);
            worst_decay = worst_decay.max(rep.max_ratio - 1.0);

            let fp = build_fp(&p, &ells, 1.0, h).unwrap();
            let ctraj = evolve_fp(&fp, &cs.projector_symbol, t_final, 1e-3).unwrap();
            let ledger = energy_ledger(&ctraj, &fp, 1e-6);
            worst_decay = worst_decay.max(ledger.conjugated_decay_max - 1.0);
            worst_decay = worst_decay.max(ledger.budget_slack);
        }
        out.push(CheckResult::upper(
            "trace_conservation",
            worst_trace,
            1e-8,
            "|tr A(t) - 1| along all preset trajectories",
        ));
        out.push(CheckResult::upper(
            "hermiticity_conservation",
            worst_herm,
            1e-8,
            "hermiticity defect along trajectories",
        ));
        out.push(CheckResult::upper(
            "positivity_spot_check",
            worst_eig,
            1e-6,
            "smallest eigenvalue of A(t), sign flipped",
        ));
        out.push(CheckResult::upper(
            "semigroup_envelopes",
            worst_decay,
            1e-6,
            "contraction ratio and classical energy ledger slack",
        ));
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_orders_match_truncation() {
        let orders = star_orders(1.0 / 16.0, 96).unwrap();
        assert!(orders[0] >= 1.7, "order1 {}", orders[0]);
        assert!(orders[1] >= 2.7, "order2 {}", orders[1]);
        assert!(orders[2] >= 3.7, "order3 {}", orders[2]);
    }

    #[test]
    fn gamma_zero_matches_conjugation_oracle() {
        // evolve at gamma = 0 against e^{i t P / h} A0 e^{-i t P / h}
        let preset = presets::find("harmonic_exact").unwrap();
        let h = 1.0 / 8.0;
        let grid = preset.recommended_grid(h, 1.0).unwrap();
        let (p, _, _) = preset.instantiate(&grid).unwrap();
        let gen = build_lindbladian(&p, &[], 0.0, h).unwrap();
        let cs = coherent_state((1.0, 0.0), &grid).unwrap();
        let a0 = projector(&grid, &cs.vector);
        let t_final = 0.6;
        let traj = evolve(&gen, &a0, t_final, h / 120.0).unwrap();
        let last = traj.states.last().unwrap();

        let itau = C64::new(0.0, t_final / h);
        let u = crate::linalg::expm(&gen.p_matrix.entries().mapv(|z| z * itau));
        let udag = crate::linalg::expm(&gen.p_matrix.entries().mapv(|z| z * -itau));
        let oracle = u.dot(a0.entries()).dot(&udag);
        let oracle = OperatorMatrix::new(grid.clone(), oracle).unwrap();
        let err = hs_norm(&last.sub(&oracle).unwrap());
        assert!(err < 1e-7, "conjugation mismatch {err}");
    }

    #[test]
    fn full_suite_passes() {
        let results = run_all(7);
        let failed: Vec<String> = results
            .iter()
            .filter(|r| !r.pass)
            .map(|r| format!("{}: measured {:.3e} vs {:.3e}", r.name, r.measured, r.threshold))
            .collect();
        assert!(failed.is_empty(), "failing checks: {failed:?}");
    }
}
