// scratch timing probe
use std::time::Instant;
use lindblad_egorov::correspondence::{setup, ExperimentConfig, Mode};
use lindblad_egorov::lindblad::QuantumStepper;
use lindblad_egorov::fokker_planck::FpStepper;

fn main() {
    let cfg = ExperimentConfig {
        mode: Mode::LindbladVsFp,
        preset: "anharmonic".into(),
        h: 1.0 / 128.0,
        gamma: 1.0,
        t_final: 1.0,
        dt: None,
        samples: Some(20),
        grid: None,
        h_list: None,
        gamma_list: None,
        c0: None,
        fit_fraction: None,
        init_center: None,
    };
    let set = setup(&cfg).unwrap();
    println!(
        "N = {}, dt_q = {:.3e} ({} steps), dt_c = {:.3e} ({} steps)",
        set.grid.n_points(),
        set.dt_quantum,
        (1.0 / set.dt_quantum).ceil(),
        set.dt_classical,
        (1.0 / set.dt_classical).ceil()
    );
    let mut q = QuantumStepper::new(&set.lindblad, &set.initial_matrix).unwrap();
    let t0 = Instant::now();
    for _ in 0..10 {
        q.step(set.dt_quantum).unwrap();
    }
    println!("quantum step: {:.1} ms", t0.elapsed().as_secs_f64() * 100.0);
    let mut c = FpStepper::new(&set.fokker_planck, &set.initial_symbol).unwrap();
    let t1 = Instant::now();
    for _ in 0..10 {
        c.step(set.dt_classical).unwrap();
    }
    println!("classical step: {:.1} ms", t1.elapsed().as_secs_f64() * 100.0);
}
