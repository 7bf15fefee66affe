//! The headline experiments: evolve a density matrix under the Lindblad
//! generator and its Weyl symbol under the Fokker-Planck generator from
//! matched initial data, measure the Hilbert-Schmidt distance d(t), compare
//! it with the theoretical envelopes, extract scaling exponents, and build
//! the first Duhamel corrector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fokker_planck::{build_fp, FokkerPlanckGenerator, FpStepper};
use crate::lindblad::{build_lindbladian_c0, LindbladGenerator, QuantumStepper};
use crate::phase_space::{PhaseSpaceGrid, Symbol};
use crate::presets::{self, Preset};
use crate::weyl::{coherent_state, hs_norm, projector, quantize, weyl_symbol, OperatorMatrix};
use crate::C64;

pub use crate::fokker_planck::lyapunov_gamma;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ExactCase,
    LindbladVsFp,
    Egorov,
    Corrector,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mode::ExactCase => "exact_case",
            Mode::LindbladVsFp => "lindblad_vs_fp",
            Mode::Egorov => "egorov",
            Mode::Corrector => "corrector",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridParams {
    pub n_points: usize,
    pub x_halfwidth: f64,
    #[serde(default)]
    pub x_center: f64,
    #[serde(default)]
    pub xi_center: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub preset: String,
    pub h: f64,
    pub gamma: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub grid: Option<GridParams>,
    #[serde(default)]
    pub h_list: Option<Vec<f64>>,
    #[serde(default)]
    pub gamma_list: Option<Vec<f64>>,
    #[serde(default)]
    pub c0: Option<f64>,
    #[serde(default)]
    pub fit_fraction: Option<f64>,
    #[serde(default)]
    pub init_center: Option<(f64, f64)>,
}

impl ExperimentConfig {
    pub fn samples(&self) -> usize {
        self.samples.unwrap_or(40).max(2)
    }

    pub fn c0(&self) -> f64 {
        self.c0.unwrap_or(1.0)
    }

    pub fn fit_fraction(&self) -> f64 {
        self.fit_fraction.unwrap_or(0.5)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma < 0.0 {
            return Err(Error::Config("gamma must be >= 0".into()));
        }
        if !(self.h > 0.0 && self.h <= 1.0) {
            return Err(Error::Config(format!(
                "h must lie in (0, 1], got {}",
                self.h
            )));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::Config("T must be positive".into()));
        }
        presets::find(&self.preset)?;
        if self.mode == Mode::Egorov && self.gamma != 0.0 {
            return Err(Error::Config(
                "egorov mode studies gamma = 0; set gamma to 0".into(),
            ));
        }
        if self.mode != Mode::Egorov && self.gamma == 0.0 {
            return Err(Error::Config(
                "gamma = 0 outside egorov mode leaves the envelope undefined".into(),
            ));
        }
        if let Some(hs) = &self.h_list {
            if hs.windows(2).any(|w| w[0] <= w[1]) {
                return Err(Error::Config("h_list must be sorted descending".into()));
            }
            if hs.iter().any(|&h| !(h > 0.0 && h <= 1.0)) {
                return Err(Error::Config("h_list entries must lie in (0, 1]".into()));
            }
        }
        if let Some(gs) = &self.gamma_list {
            if gs.iter().any(|&g| g <= 0.0) {
                return Err(Error::Config("gamma_list entries must be positive".into()));
            }
        }
        let f = self.fit_fraction();
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config("fit_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Envelope family selected by the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    /// e^{(M0 + C0 h) gamma t} t (gamma + gamma^{-3/2}) h^{1/2} (1 + t gamma^{3/2} h^{1/2})
    General,
    /// e^{C0 h^2 gamma t} t (gamma + gamma^{-3/2}) h^{1/2}
    NoFriction,
    /// e^{3 Gamma t} h^{1/2}
    Egorov,
}

pub fn theoretical_envelope(
    kind: EnvelopeKind,
    m0: f64,
    gamma_lyap: f64,
    h: f64,
    gamma: f64,
    c0: f64,
    cfit: f64,
    t: f64,
) -> Result<f64> {
    let sh = h.sqrt();
    match kind {
        EnvelopeKind::General => {
            if gamma <= 0.0 {
                return Err(Error::EnvelopeUndefined(
                    "gamma^{-3/2} requires gamma > 0".into(),
                ));
            }
            let rate = (m0 + c0 * h) * gamma;
            Ok(cfit
                * (rate * t).exp()
                * t
                * (gamma + gamma.powf(-1.5))
                * sh
                * (1.0 + t * gamma.powf(1.5) * sh))
        }
        EnvelopeKind::NoFriction => {
            if gamma <= 0.0 {
                return Err(Error::EnvelopeUndefined(
                    "gamma^{-3/2} requires gamma > 0".into(),
                ));
            }
            Ok(cfit * (c0 * h * h * gamma * t).exp() * t * (gamma + gamma.powf(-1.5)) * sh)
        }
        EnvelopeKind::Egorov => Ok(cfit * (3.0 * gamma_lyap * t).exp() * sh),
    }
}

/// Hilbert-Schmidt distance between an operator and a symbol, with the
/// mandatory isometry cross-check between the matrix-side and symbol-side
/// computations. Returns (distance, cross-check deviation).
pub fn hs_distance_checked(a: &OperatorMatrix, sym: &Symbol) -> Result<(f64, f64)> {
    if a.grid() != sym.grid() {
        return Err(Error::GridMismatch);
    }
    let d_matrix = hs_norm(&a.sub(&quantize(sym))?);
    let diff = weyl_symbol(a).sub(sym)?;
    let d_symbol = diff.l2_norm() / (2.0 * std::f64::consts::PI * a.grid().h()).sqrt();
    let dev = (d_matrix - d_symbol).abs() / d_matrix.max(1.0);
    if dev > 1e-9 {
        return Err(Error::IsometryCrossCheck {
            matrix: d_matrix,
            symbol: d_symbol,
        });
    }
    Ok((d_matrix, dev))
}

pub fn hs_distance(a: &OperatorMatrix, sym: &Symbol) -> Result<f64> {
    hs_distance_checked(a, sym).map(|(d, _)| d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConstants {
    pub m0: f64,
    pub lyapunov_gamma: f64,
    pub ellipticity_c: f64,
    pub epsilon: f64,
    pub contraction_m: f64,
    pub c0: f64,
    pub friction_free: bool,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisAudit {
    /// gamma < 1/h
    pub gamma_regime_ok: bool,
    /// grid supremum of |d^2 p| (the spectral-builder value)
    pub lyapunov_gamma_grid: f64,
    pub tech_order2: f64,
    pub tech_order3: f64,
    /// boundary amplitude ratios of the final symbols
    pub box_floor_quantum: f64,
    pub box_floor_classical: f64,
    pub box_floor_ok: bool,
    /// worst isometry cross-check deviation seen in hs_distance
    pub crosscheck_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumSummary {
    pub trace_defect: Vec<f64>,
    pub herm_defect: Vec<f64>,
    pub hs_norm: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalSummary {
    pub l2: Vec<f64>,
    pub mass_drift: f64,
    pub sobolev_growth: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub distance: f64,
    pub envelope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: String,
    pub points: Vec<SweepPoint>,
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    pub floor_dominated: bool,
    /// max over consecutive points (ordered by increasing value) of
    /// d_{i+1}/d_i - 1; negative means monotone decreasing
    pub monotone_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceReport {
    pub config: ExperimentConfig,
    pub envelope_kind: EnvelopeKind,
    pub times: Vec<f64>,
    pub hs_distance: Vec<f64>,
    pub envelope: Vec<f64>,
    pub cfit: f64,
    /// max over the validation window (after the fit window) of d / envelope
    pub envelope_inflation: f64,
    pub corrected_distance: Option<Vec<f64>>,
    pub constants: GeneratorConstants,
    pub audit: HypothesisAudit,
    pub quantum: QuantumSummary,
    pub classical: ClassicalSummary,
    pub sweep: Option<SweepReport>,
    /// integrator steps actually used
    pub dt_quantum: f64,
    pub dt_classical: f64,
}

/// Everything assembled for one experiment.
pub struct ExperimentSetup {
    pub preset: Preset,
    pub grid: PhaseSpaceGrid,
    pub lindblad: LindbladGenerator,
    pub fokker_planck: FokkerPlanckGenerator,
    pub initial_matrix: OperatorMatrix,
    pub initial_symbol: Symbol,
    pub dt_quantum: f64,
    pub dt_classical: f64,
}

pub fn setup(cfg: &ExperimentConfig) -> Result<ExperimentSetup> {
    cfg.validate()?;
    let preset = presets::find(&cfg.preset)?;
    let boost = if cfg.mode == Mode::Egorov { 1.3 } else { 1.0 };
    let grid = match &cfg.grid {
        Some(gp) => PhaseSpaceGrid::new(gp.n_points, gp.x_center, gp.x_halfwidth, gp.xi_center, cfg.h)?,
        None => preset.recommended_grid(cfg.h, boost)?,
    };
    let (p, ells, _) = preset.instantiate(&grid)?;
    let lindblad = build_lindbladian_c0(&p, &ells, cfg.gamma, cfg.h, cfg.c0())?;
    let fokker_planck = build_fp(&p, &ells, cfg.gamma, cfg.h)?;

    let center = cfg.init_center.unwrap_or(preset.init_center);
    let cs = coherent_state(center, &grid)?;
    let initial_matrix = projector(&grid, &cs.vector);
    // matched initialization: a(0) is the exact symbol of A(0)
    let initial_symbol = cs.projector_symbol.clone();

    // step-size policy: accuracy-driven fraction of h, capped by stability.
    // The commutator spectrum is imaginary with radius ~ 2 p_box / h and the
    // dissipator spectrum is real with radius ~ 2 gamma sum(l^2) / h; the
    // explicit stepper handles the two axes separately, and the instability
    // detector backstops the estimate.
    let acc_factor = if cfg.mode == Mode::ExactCase { 32.0 } else { 16.0 };
    let p_box = p.max_abs();
    let l2_box: f64 = ells.iter().map(|l| l.max_abs().powi(2)).sum();
    let stab_q =
        0.8 * 2.7 * cfg.h / (2.0 * p_box + 2.0 * cfg.gamma * l2_box).max(1e-12);
    let mut dt_quantum = (cfg.h / acc_factor).min(stab_q);
    let mut dt_classical = (2.0 * dt_quantum).min(fokker_planck.stability_dt());
    if let Some(dt) = cfg.dt {
        if !(dt > 0.0) {
            return Err(Error::NonPositiveStep(dt));
        }
        dt_quantum = dt.min(stab_q);
        dt_classical = dt.min(fokker_planck.stability_dt());
    }

    Ok(ExperimentSetup {
        preset,
        grid,
        lindblad,
        fokker_planck,
        initial_matrix,
        initial_symbol,
        dt_quantum,
        dt_classical,
    })
}

fn substeps(interval: f64, dt: f64) -> (usize, f64) {
    let n = (interval / dt).ceil().max(1.0) as usize;
    (n, interval / n as f64)
}

fn envelope_kind(cfg: &ExperimentConfig, friction_free: bool) -> EnvelopeKind {
    if cfg.mode == Mode::Egorov {
        EnvelopeKind::Egorov
    } else if friction_free {
        EnvelopeKind::NoFriction
    } else {
        EnvelopeKind::General
    }
}

struct RunRecord {
    times: Vec<f64>,
    distances: Vec<f64>,
    crosscheck_max: f64,
    quantum: QuantumSummary,
    classical: ClassicalSummary,
    final_q_symbol: Symbol,
    final_c_symbol: Symbol,
    /// per-sample classical symbols and quantum states, kept only on request
    samples: Option<(Vec<Symbol>, Vec<OperatorMatrix>)>,
}

fn run_pair(cfg: &ExperimentConfig, set: &ExperimentSetup, keep_samples: bool) -> Result<RunRecord> {
    let samples = cfg.samples();
    let interval = cfg.t_final / samples as f64;
    let (nq, dtq) = substeps(interval, set.dt_quantum);
    let (nc, dtc) = substeps(interval, set.dt_classical);

    let mut q = QuantumStepper::new(&set.lindblad, &set.initial_matrix)?;
    let mut c = FpStepper::new(&set.fokker_planck, &set.initial_symbol)?;

    let mut times = Vec::with_capacity(samples + 1);
    let mut distances = Vec::with_capacity(samples + 1);
    let mut crosscheck_max: f64 = 0.0;
    let mut quantum = QuantumSummary {
        trace_defect: Vec::new(),
        herm_defect: Vec::new(),
        hs_norm: Vec::new(),
    };
    let mut classical = ClassicalSummary {
        l2: Vec::new(),
        mass_drift: 0.0,
        sobolev_growth: [0.0; 3],
    };
    let mut kept: Option<(Vec<Symbol>, Vec<OperatorMatrix>)> =
        keep_samples.then(|| (Vec::new(), Vec::new()));

    let mass0 = set.initial_symbol.mass();
    let diag0 = c.diag();
    let sob0 = [
        diag0.l2.max(f64::MIN_POSITIVE),
        diag0.h1_eps.max(f64::MIN_POSITIVE),
        diag0.h2_eps.max(f64::MIN_POSITIVE),
    ];

    for m in 0..=samples {
        if m > 0 {
            for _ in 0..nq {
                q.step(dtq)?;
            }
            for _ in 0..nc {
                c.step(dtc)?;
            }
        }
        let t = m as f64 * interval;
        let a_matrix = q.matrix(&set.grid);
        let a_symbol = c.symbol();
        let (d, dev) = hs_distance_checked(&a_matrix, &a_symbol)?;
        times.push(t);
        distances.push(d);
        crosscheck_max = crosscheck_max.max(dev);

        let qd = q.diag();
        quantum.trace_defect.push((qd.trace - C64::new(1.0, 0.0)).norm());
        quantum.herm_defect.push(qd.herm_defect);
        quantum.hs_norm.push(qd.hs_norm);

        let cd = c.diag();
        classical.l2.push(cd.l2);
        classical.mass_drift = classical
            .mass_drift
            .max((cd.mass - mass0).norm() / mass0.norm().max(1e-300));
        classical.sobolev_growth[0] = classical.sobolev_growth[0].max(cd.l2 / sob0[0]);
        classical.sobolev_growth[1] = classical.sobolev_growth[1].max(cd.h1_eps / sob0[1]);
        classical.sobolev_growth[2] = classical.sobolev_growth[2].max(cd.h2_eps / sob0[2]);

        if let Some((syms, mats)) = kept.as_mut() {
            syms.push(a_symbol.clone());
            mats.push(a_matrix.clone());
        }
    }

    Ok(RunRecord {
        times,
        distances,
        crosscheck_max,
        quantum,
        classical,
        final_q_symbol: weyl_symbol(&q.matrix(&set.grid)),
        final_c_symbol: c.symbol(),
        samples: kept,
    })
}

fn fit_envelope(
    cfg: &ExperimentConfig,
    kind: EnvelopeKind,
    constants: &GeneratorConstants,
    times: &[f64],
    distances: &[f64],
) -> Result<(f64, Vec<f64>, f64)> {
    let shape: Vec<f64> = times
        .iter()
        .map(|&t| {
            theoretical_envelope(
                kind,
                constants.m0,
                constants.lyapunov_gamma,
                cfg.h,
                cfg.gamma,
                constants.c0,
                1.0,
                t,
            )
        })
        .collect::<Result<_>>()?;
    let t_fit = cfg.fit_fraction() * cfg.t_final;
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&t, &d), &e) in times.iter().zip(distances).zip(&shape) {
        if t <= t_fit + 1e-12 {
            num += d * e;
            den += e * e;
        }
    }
    let cfit = if den > 0.0 { num / den } else { 0.0 };
    let envelope: Vec<f64> = shape.iter().map(|e| cfit * e).collect();
    let mut inflation: f64 = 0.0;
    for ((&t, &d), &e) in times.iter().zip(distances).zip(&envelope) {
        if t > t_fit && e > 0.0 {
            inflation = inflation.max(d / e);
        }
    }
    Ok((cfit, envelope, inflation))
}

fn assemble_report(
    cfg: &ExperimentConfig,
    set: &ExperimentSetup,
    rec: &RunRecord,
    corrected: Option<Vec<f64>>,
) -> Result<CorrespondenceReport> {
    let constants = GeneratorConstants {
        m0: set.lindblad.m0,
        lyapunov_gamma: set.preset.certified.lyapunov_gamma,
        ellipticity_c: set.fokker_planck.ellipticity_c,
        epsilon: set.fokker_planck.epsilon,
        contraction_m: set.lindblad.contraction_m,
        c0: set.lindblad.c0,
        friction_free: set.lindblad.friction_free,
        exact: set.preset.certified.exact,
    };
    let kind = envelope_kind(cfg, constants.friction_free);
    let (cfit, envelope, inflation) =
        fit_envelope(cfg, kind, &constants, &rec.times, &rec.distances)?;

    let bf_q = rec.final_q_symbol.boundary_ratio();
    let bf_c = rec.final_c_symbol.boundary_ratio();
    let audit = HypothesisAudit {
        gamma_regime_ok: set.lindblad.gamma_regime_ok,
        lyapunov_gamma_grid: set.fokker_planck.lyapunov_gamma,
        tech_order2: set.fokker_planck.tech.order2,
        tech_order3: set.fokker_planck.tech.order3,
        box_floor_quantum: bf_q,
        box_floor_classical: bf_c,
        box_floor_ok: bf_q < 1e-8 && bf_c < 1e-8,
        crosscheck_max: rec.crosscheck_max,
    };

    Ok(CorrespondenceReport {
        config: cfg.clone(),
        envelope_kind: kind,
        times: rec.times.clone(),
        hs_distance: rec.distances.clone(),
        envelope,
        cfit,
        envelope_inflation: inflation,
        corrected_distance: corrected,
        constants,
        audit,
        quantum: rec.quantum.clone(),
        classical: rec.classical.clone(),
        sweep: None,
        dt_quantum: set.dt_quantum,
        dt_classical: set.dt_classical,
    })
}

/// Run one experiment: both evolutions from matched data on a shared time
/// grid, distances, envelope fit, and the hypothesis audit.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<CorrespondenceReport> {
    let set = setup(cfg)?;
    let rec = run_pair(cfg, &set, false)?;
    assemble_report(cfg, &set, &rec, None)
}

/// Least-squares fit of log y against log x: (slope, intercept, rms residual).
pub fn fit_powerlaw(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.max(1e-300).ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx.max(1e-300);
    let intercept = my - slope * mx;
    let res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum::<f64>()
        / n;
    (slope, intercept, res.sqrt())
}

/// Run the configured h- or gamma-sweep, fitting the log-log slope of the
/// final-time distance. Points run in parallel when `threads > 1`; results
/// are keyed by parameter and ordered deterministically.
pub fn scaling_sweep(cfg: &ExperimentConfig, threads: usize) -> Result<CorrespondenceReport> {
    cfg.validate()?;
    let (axis, values): (&str, Vec<f64>) = match (&cfg.h_list, &cfg.gamma_list) {
        (Some(hs), None) => ("h", hs.clone()),
        (None, Some(gs)) => ("gamma", gs.clone()),
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "provide exactly one of h_list, gamma_list".into(),
            ))
        }
        (None, None) => {
            return Err(Error::Config(
                "sweep needs h_list or gamma_list".into(),
            ))
        }
    };
    if values.len() < 3 {
        return Err(Error::SweepTooSmall(values.len()));
    }

    let configs: Vec<ExperimentConfig> = values
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            c.h_list = None;
            c.gamma_list = None;
            if axis == "h" {
                c.h = v;
                c.grid = None; // re-derive the grid per h
            } else {
                c.gamma = v;
            }
            c
        })
        .collect();

    let mut results: Vec<Option<Result<CorrespondenceReport>>> =
        (0..configs.len()).map(|_| None).collect();
    if threads <= 1 {
        for (slot, c) in results.iter_mut().zip(&configs) {
            *slot = Some(run_experiment(c));
        }
    } else {
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for (idx, c) in configs.iter().enumerate() {
                handles.push((idx, scope.spawn(move || run_experiment(c))));
                if handles.len() == threads {
                    for (i, hdl) in handles.drain(..) {
                        results[i] = Some(hdl.join().expect("sweep worker panicked"));
                    }
                }
            }
            for (i, hdl) in handles.drain(..) {
                results[i] = Some(hdl.join().expect("sweep worker panicked"));
            }
        });
    }

    let mut reports = Vec::with_capacity(configs.len());
    for r in results {
        reports.push(r.expect("sweep slot filled")?);
    }

    let points: Vec<SweepPoint> = values
        .iter()
        .zip(&reports)
        .map(|(&v, r)| SweepPoint {
            value: v,
            distance: *r.hs_distance.last().unwrap(),
            envelope: *r.envelope.last().unwrap(),
        })
        .collect();
    let ds: Vec<f64> = points.iter().map(|p| p.distance).collect();
    let (slope, intercept, residual) = fit_powerlaw(&values, &ds);
    let floor_dominated = ds.iter().all(|&d| d < 1e-4);

    // monotonicity in increasing parameter order
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let mut monotone_slack = f64::NEG_INFINITY;
    for w in order.windows(2) {
        let lo = ds[w[0]].max(1e-300);
        monotone_slack = monotone_slack.max(ds[w[1]] / lo - 1.0);
    }

    // carry the mid-point report as the representative detail record
    let mid = reports.len() / 2;
    let mut report = reports.swap_remove(mid);
    report.config = cfg.clone();
    report.sweep = Some(SweepReport {
        axis: axis.to_string(),
        points,
        slope,
        intercept,
        residual,
        floor_dominated,
        monotone_slack,
    });
    Ok(report)
}

/// First Duhamel corrector: the defect symbol
/// e1(s) = symbol(L Op(a0(s))) - Q a0(s) along the classical trajectory is
/// integrated against the Fokker-Planck propagator,
/// a1(t) = -int_0^t U(t-s) e1(s) ds, and the corrected distance
/// d1(t) = ||A(t) - Op(a0(t) + a1(t))|| is reported next to d(t).
pub fn duhamel_corrector(cfg: &ExperimentConfig) -> Result<(Vec<Symbol>, CorrespondenceReport)> {
    let set = setup(cfg)?;
    let rec = run_pair(cfg, &set, true)?;
    let (symbols, matrices) = rec.samples.as_ref().expect("samples kept");
    let samples = cfg.samples();
    let interval = cfg.t_final / samples as f64;
    let (nc, dtc) = substeps(interval, set.dt_classical);

    // defect symbol at every sample time
    let mut defects: Vec<Symbol> = Vec::with_capacity(samples + 1);
    for a0 in symbols {
        let quantum_side = weyl_symbol(&set.lindblad.apply(&quantize(a0))?);
        let classical_side = set.fokker_planck.apply_q(a0)?;
        defects.push(quantum_side.sub(&classical_side)?);
    }

    // trapezoid Duhamel recursion:
    // a1_{m+1} = U(dt)[a1_m - (dt/2) e1_m] - (dt/2) e1_{m+1}
    let mut a1: Vec<Symbol> = Vec::with_capacity(samples + 1);
    a1.push(Symbol::zeros(&set.grid));
    for m in 0..samples {
        let carried = a1[m].sub(&defects[m].scaled(C64::new(0.5 * interval, 0.0)))?;
        let mut stepper = FpStepper::new(&set.fokker_planck, &carried)?;
        for _ in 0..nc {
            stepper.step(dtc)?;
        }
        let propagated = stepper.symbol();
        a1.push(propagated.sub(&defects[m + 1].scaled(C64::new(0.5 * interval, 0.0)))?);
    }

    let mut corrected = Vec::with_capacity(samples + 1);
    for m in 0..=samples {
        let total = symbols[m].add(&a1[m])?;
        corrected.push(hs_distance(&matrices[m], &total)?);
    }

    let report = assemble_report(cfg, &set, &rec, Some(corrected))?;
    Ok((a1, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn base_cfg() -> ExperimentConfig {
        ExperimentConfig {
            mode: Mode::ExactCase,
            preset: "harmonic_exact".into(),
            h: 1.0 / 16.0,
            gamma: 1.0,
            t_final: 0.5,
            dt: None,
            samples: Some(8),
            grid: None,
            h_list: None,
            gamma_list: None,
            c0: None,
            fit_fraction: None,
            init_center: None,
        }
    }

    #[test]
    fn envelope_arithmetic() {
        // no-friction example: gamma = 1, h = 1/64, t = 1, C0 = 0, Cfit = 1
        let v = theoretical_envelope(
            EnvelopeKind::NoFriction,
            0.0,
            1.0,
            1.0 / 64.0,
            1.0,
            0.0,
            1.0,
            1.0,
        )
        .unwrap();
        assert_relative_eq!(v, 0.25, epsilon = 1e-15);

        // egorov shape at t = 0 is h^{1/2}
        let e = theoretical_envelope(
            EnvelopeKind::Egorov,
            0.0,
            1.0,
            1.0 / 64.0,
            0.0,
            1.0,
            1.0,
            0.0,
        )
        .unwrap();
        assert_relative_eq!(e, 0.125, epsilon = 1e-15);

        assert!(theoretical_envelope(
            EnvelopeKind::General,
            1.0,
            1.0,
            1.0 / 64.0,
            0.0,
            1.0,
            1.0,
            1.0
        )
        .is_err());
    }

    #[test]
    fn hs_distance_examples() {
        let preset = presets::find("harmonic_exact").unwrap();
        let g = preset.recommended_grid(1.0 / 16.0, 1.0).unwrap();
        let a = Symbol::sample(&g, |x, xi| {
            C64::new((-(x * x + xi * xi) / 0.4).exp(), 0.0)
        })
        .unwrap();
        let op = quantize(&a);
        let (d, _) = hs_distance_checked(&op, &a).unwrap();
        assert!(d < 1e-11);

        // two far-apart coherent projectors are nearly orthogonal
        let h = g.h();
        let sep = 6.5 * h.sqrt();
        let c1 = coherent_state((-sep / 2.0, 0.0), &g).unwrap();
        let c2 = coherent_state((sep / 2.0, 0.0), &g).unwrap();
        let p1 = projector(&g, &c1.vector);
        let d12 = hs_distance(&p1, &c2.projector_symbol).unwrap();
        assert!((d12 - 2f64.sqrt()).abs() < 1e-4, "d12 = {d12}");

        // grid mismatch
        let g2 = PhaseSpaceGrid::new(g.n_points(), 0.0, g.x_halfwidth() * 2.0, 0.0, h).unwrap();
        let b = Symbol::sample(&g2, |_, _| C64::default()).unwrap();
        assert!(matches!(hs_distance(&p1, &b), Err(Error::GridMismatch)));
    }

    #[test]
    fn config_validation() {
        let mut cfg = base_cfg();
        cfg.gamma = -1.0;
        assert!(cfg.validate().unwrap_err().to_string().contains("gamma must be >= 0"));

        let mut cfg = base_cfg();
        cfg.preset = "unknown".into();
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("harmonic_exact") && msg.contains("anharmonic"));

        let mut cfg = base_cfg();
        cfg.mode = Mode::Egorov;
        assert!(cfg.validate().is_err());
        cfg.gamma = 0.0;
        assert!(cfg.validate().is_ok());

        let mut cfg = base_cfg();
        cfg.h_list = Some(vec![1.0 / 64.0, 1.0 / 32.0]);
        assert!(cfg.validate().unwrap_err().to_string().contains("descending"));
    }

    #[test]
    fn matched_initialization_has_zero_distance() {
        let cfg = base_cfg();
        let set = setup(&cfg).unwrap();
        let d = hs_distance(&set.initial_matrix, &set.initial_symbol).unwrap();
        assert!(d < 1e-9, "d(0) = {d}");
    }

    #[test]
    fn sweep_requires_three_points() {
        let mut cfg = base_cfg();
        cfg.h_list = Some(vec![1.0 / 16.0]);
        assert!(matches!(
            scaling_sweep(&cfg, 1),
            Err(Error::SweepTooSmall(1))
        ));
    }

    #[test]
    fn powerlaw_fit_recovers_slope() {
        let xs = [1.0, 0.5, 0.25, 0.125];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(0.5)).collect();
        let (slope, intercept, residual) = fit_powerlaw(&xs, &ys);
        assert_relative_eq!(slope, 0.5, epsilon = 1e-12);
        assert_relative_eq!(intercept.exp(), 3.0, epsilon = 1e-12);
        assert!(residual < 1e-12);
    }
}
