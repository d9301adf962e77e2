use qobstacle::exec::Exec;
use qobstacle::linalg::Mat3;
use qobstacle::potentials::PotentialSpec;
use qobstacle::qtensor::QTensor;
use qobstacle::sampling;
use qobstacle::solver::{self, *};

fn random_field(n: usize, seed: u64) -> QField {
    let grid = Grid::new(n).unwrap();
    let mut rng = sampling::rng(seed);
    let values = (0..grid.node_count()).map(|_| sampling::random_interior(&mut rng)).collect();
    QField { grid, values }
}

fn random_direction(grid: Grid, seed: u64) -> Vec<QTensor> {
    let mut rng = sampling::rng(seed);
    (0..grid.interior_count()).map(|_| QTensor::new(std::array::from_fn(|_| sampling::normal(&mut rng)))).collect()
}

fn shifted(field: &QField, dir: &[QTensor], t: f64) -> QField {
    let x: Vec<QTensor> = field.interior().iter().zip(dir).map(|(q, d)| *q + *d * t).collect();
    let mut f = field.clone();
    f.set_interior(&x);
    f
}

fn directional_check(cfg: &SolverConfig, eps: Option<f64>, seed: u64) -> f64 {
    let functional = Functional::new(cfg, eps, Exec::Parallel).unwrap();
    let field = random_field(8, seed);
    let dir = random_direction(field.grid, seed + 1000);
    let (_, grad) = functional.energy_gradient(&field).unwrap();
    let analytic: f64 = grad.iter().zip(&dir).map(|(g, d)| g.dot(d)).sum();
    let t = 1e-5;
    let ep = functional.energy(&shifted(&field, &dir, t)).unwrap().total;
    let em = functional.energy(&shifted(&field, &dir, -t)).unwrap().total;
    let fd = (ep - em) / (2.0 * t);
    (fd - analytic).abs() / analytic.abs()
}

#[test]
fn gradient_matches_finite_differences() {
    for a in [0.0, 0.5] {
        let mut cfg = SolverConfig::new(a);
        assert!(directional_check(&cfg, None, 1) < 1e-6);
        cfg.potential = Some(PotentialSpec::inverse_power(1.0, 0.1));
        assert!(directional_check(&cfg, Some(0.05), 2) < 1e-6);
        cfg.potential = Some(PotentialSpec::ball_majumdar());
        assert!(directional_check(&cfg, Some(0.1), 3) < 1e-6);
    }
    let mut cfg = SolverConfig::new(0.0);
    cfg.elastic = Some(ElasticConstants { l1: 1.0, l2: 0.3, l3: 0.4 });
    assert!(directional_check(&cfg, None, 4) < 1e-6);
}

#[test]
fn constant_field_energy() {
    let grid = Grid::new(6).unwrap();
    let qc = QTensor::uniaxial(0.3, &[0.0, 0.6, 0.8]);
    let field = make_boundary(&BoundaryData::ConstantTensor { q: qc }, grid).unwrap();
    let mut cfg = SolverConfig::new(0.4);
    cfg.potential = Some(PotentialSpec::logarithmic(0.5, 0.1));
    let parts = Functional::new(&cfg, None, Exec::Parallel).unwrap().energy(&field).unwrap();
    let f = PotentialSpec::logarithmic(0.5, 0.1).compile().unwrap().value(&qc).unwrap();
    assert_eq!(parts.elastic, 0.0);
    let volume = (6.0 * grid.h()).powi(3);
    assert!((parts.bulk - f * volume).abs() < 1e-13);
}

#[test]
fn linear_field_energy_is_exact() {
    let grid = Grid::new(7).unwrap();
    let qa = QTensor::uniaxial(0.2, &[1.0, 0.0, 0.0]);
    let qb = QTensor::uniaxial(0.5, &[0.0, 1.0, 1.0]);
    let g = qb - qa;
    let field = QField::from_fn(grid, |x| qa + g * x[2]);
    let a = 0.7;
    let cfg = SolverConfig::new(a);
    let e = Functional::new(&cfg, None, Exec::Parallel).unwrap().energy(&field).unwrap();
    let m = g.to_matrix();
    let div2: f64 = (0..3).map(|i| m[i][2] * m[i][2]).sum();
    let exact = 0.5 * g.norm_sq() + 0.5 * a * div2;
    assert!((e.elastic - exact).abs() < 1e-13, "{} vs {exact}", e.elastic);
}

#[test]
fn anisotropy_vanishes_on_divergence_free_fields() {
    // Varies only in x3 and has a zero third column, so every discrete
    // divergence vanishes, boundary layer included.
    let grid = Grid::new(6).unwrap();
    let field = QField::from_fn(grid, |x| {
        let t = 3.0 * x[2];
        QTensor::new([0.1 * t.sin(), 0.0, 0.08 * t.cos(), 0.0, 0.0])
    });
    let f0 = Functional::new(&SolverConfig::new(0.0), None, Exec::Parallel).unwrap();
    let f1 = Functional::new(&SolverConfig::new(0.5), None, Exec::Parallel).unwrap();
    let (e0, g0) = f0.energy_gradient(&field).unwrap();
    let (e1, g1) = f1.energy_gradient(&field).unwrap();
    assert!(e0.elastic > 0.0);
    assert!((e0.total - e1.total).abs() <= 1e-15 * e0.total);
    let scale = g0.iter().map(QTensor::max_abs).fold(0.0, f64::max);
    let diff = g0.iter().zip(&g1).map(|(a, b)| (*a - *b).max_abs()).fold(0.0, f64::max);
    assert!(diff <= 1e-12 * scale, "{diff} vs {scale}");
}

/// `Σ_cells div_h(base) · div_h(dir)`, the only place anisotropy enters a
/// directional derivative of the pure elastic energy.
fn field_div_coupling(base: &QField, dir: &[QTensor]) -> f64 {
    let mut d = base.clone();
    for v in &mut d.values {
        *v = QTensor::ZERO;
    }
    d.set_interior(dir);
    let grid = base.grid;
    let h = grid.h();
    let div = |f: &QField, b: usize| -> [f64; 3] {
        let m0 = f.values[b].to_matrix();
        let mut out = [0.0; 3];
        for k in 0..3 {
            let m1 = f.values[b + grid.stride(k)].to_matrix();
            for i in 0..3 {
                out[i] += (m1[i][k] - m0[i][k]) / h;
            }
        }
        out
    };
    (0..grid.cell_count())
        .map(|m| {
            let b = grid.cell_node(m);
            let (x, y) = (div(base, b), div(&d, b));
            x[0] * y[0] + x[1] * y[1] + x[2] * y[2]
        })
        .sum()
}

#[test]
fn anisotropic_part_of_directional_derivative() {
    let base = random_field(6, 21);
    let grid = base.grid;
    let dir = random_direction(grid, 22);
    let along = |a: f64| -> f64 {
        let f = Functional::new(&SolverConfig::new(a), None, Exec::Parallel).unwrap();
        f.energy_gradient(&base).unwrap().1.iter().zip(&dir).map(|(g, d)| g.dot(d)).sum::<f64>()
    };
    let expected = 0.5 * grid.h().powi(3) * field_div_coupling(&base, &dir);
    let measured = along(0.5) - along(0.0);
    assert!((measured - expected).abs() < 1e-10 * (1.0 + expected.abs()), "{measured} vs {expected}");
}

#[test]
fn raw_barrier_reports_infinity() {
    let mut field = random_field(5, 3);
    let idx = field.grid.interior_node(7);
    field.values[idx] = QTensor::diag(-0.4, 0.2, 0.2);
    let mut cfg = SolverConfig::new(0.0);
    cfg.potential = Some(PotentialSpec::inverse_power(1.0, 1.0));
    let e = Functional::new(&cfg, None, Exec::Parallel).unwrap().energy(&field).unwrap();
    assert!(e.total.is_infinite() && e.elastic.is_finite());
}

#[test]
fn constant_minimizer_needs_no_iterations() {
    let grid = Grid::new(6).unwrap();
    let field = make_boundary(&BoundaryData::ConstantTensor { q: QTensor::ZERO }, grid).unwrap();
    let mut cfg = SolverConfig::new(0.3);
    cfg.potential = Some(PotentialSpec::ball_majumdar());
    cfg.epsilon_schedule = vec![0.1];
    let f = Functional::new(&cfg, Some(0.1), Exec::Parallel).unwrap();
    let r = minimize(&field, &f, &cfg).unwrap();
    assert!(r.converged && r.iterations <= 1);
}

fn twist_config(a: f64) -> SolverConfig {
    let mut cfg = SolverConfig::new(a);
    cfg.potential = Some(PotentialSpec::ball_majumdar());
    cfg.epsilon_schedule = vec![0.1];
    cfg.grad_tol = 1e-6;
    cfg
}

fn twist() -> BoundaryData {
    BoundaryData::Uniaxial { s: 0.4, director: Director::Twist { axis: Axis::Z, pitch: 0.25 } }
}

#[test]
fn trace_is_monotone_and_minimum_is_unique() {
    let grid = Grid::new(6).unwrap();
    let cfg = twist_config(0.5);
    let f = Functional::new(&cfg, Some(0.1), Exec::Parallel).unwrap();
    let start = make_boundary(&twist(), grid).unwrap();
    let r1 = minimize(&start, &f, &cfg).unwrap();
    assert!(r1.converged && r1.retractions == 0);
    assert!(r1.trace.windows(2).all(|w| w[1].total <= w[0].total));

    let mut rng = sampling::rng(77);
    let mut other = start.clone();
    let vals: Vec<QTensor> =
        other.interior().iter().map(|q| *q * 0.2 + sampling::random_interior(&mut rng) * 0.3).collect();
    other.set_interior(&vals);
    let r2 = minimize(&other, &f, &cfg).unwrap();
    assert!(r2.converged);
    assert!((r1.energy.total - r2.energy.total).abs() < 1e-8, "{} vs {}", r1.energy.total, r2.energy.total);
}

#[test]
fn rotating_boundary_data_rotates_the_minimizer() {
    let grid = Grid::new(5).unwrap();
    let cfg = twist_config(0.0);
    let f = Functional::new(&cfg, Some(0.1), Exec::Parallel).unwrap();
    let start = make_boundary(&twist(), grid).unwrap();
    let mut rng = sampling::rng(4);
    let rot: Mat3 = sampling::random_rotation(&mut rng);
    let rotated_start = QField { grid, values: start.values.iter().map(|q| q.rotate(&rot)).collect() };
    let r1 = minimize(&start, &f, &cfg).unwrap();
    let r2 = minimize(&rotated_start, &f, &cfg).unwrap();
    let worst =
        r1.field.values.iter().zip(&r2.field.values).map(|(a, b)| (a.rotate(&rot) - *b).max_abs()).fold(0.0, f64::max);
    assert!(worst < 1e-7, "worst {worst}");
}

#[test]
fn lattice_rotation_preserves_anisotropic_energy() {
    // The cyclic axis permutation maps the grid to itself and forward
    // differences to forward differences.
    let field = random_field(6, 12);
    let grid = field.grid;
    let perm: Mat3 = [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
    let mut rotated = field.clone();
    for idx in 0..grid.node_count() {
        let [i, j, k] = grid.coords(idx);
        // x' = P x with P e1 = e2, P e2 = e3, P e3 = e1.
        rotated.values[grid.index(k, i, j)] = field.values[idx].rotate(&perm);
    }
    let mut cfg = SolverConfig::new(0.6);
    cfg.potential = Some(PotentialSpec::ball_majumdar());
    let f = Functional::new(&cfg, Some(0.1), Exec::Parallel).unwrap();
    let (e1, e2) = (f.energy(&field).unwrap(), f.energy(&rotated).unwrap());
    assert!((e1.elastic - e2.elastic).abs() < 1e-11 * e1.elastic);
    assert!((e1.bulk - e2.bulk).abs() < 1e-9 * e1.bulk.abs().max(1.0));
}

#[test]
fn continuation_increments_shrink() {
    let grid = Grid::new(6).unwrap();
    let mut cfg = twist_config(0.0);
    cfg.epsilon_schedule = vec![1e-1, 1e-2, 1e-3, 1e-4];
    cfg.grad_tol = 1e-6;
    let rep = epsilon_continuation(&make_boundary(&twist(), grid).unwrap(), &cfg, Exec::Parallel).unwrap();
    assert!(rep.converged());
    assert_eq!(rep.increments.len(), 3);
    assert!(rep.increments.windows(2).all(|w| w[1].l2 < w[0].l2));

    let mut single = cfg.clone();
    single.epsilon_schedule = vec![1e-1];
    let one = epsilon_continuation(&make_boundary(&twist(), grid).unwrap(), &single, Exec::Parallel).unwrap();
    let f = Functional::new(&single, Some(1e-1), Exec::Parallel).unwrap();
    let direct = minimize(&make_boundary(&twist(), grid).unwrap(), &f, &single).unwrap();
    assert_eq!(one.last().field, direct.field);
}

#[test]
fn sequential_and_parallel_agree_bitwise() {
    let grid = Grid::new(6).unwrap();
    let cfg = twist_config(0.3);
    let start = make_boundary(&twist(), grid).unwrap();
    let a = minimize(&start, &Functional::new(&cfg, Some(0.1), Exec::Parallel).unwrap(), &cfg).unwrap();
    let b = minimize(&start, &Functional::new(&cfg, Some(0.1), Exec::Sequential).unwrap(), &cfg).unwrap();
    assert_eq!(solver::checkpoint::to_bytes(&a.field), solver::checkpoint::to_bytes(&b.field));
    assert_eq!(a.trace, b.trace);
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(SolverConfig::new(-0.7).validate().is_err());
    let mut cfg = SolverConfig::new(0.0);
    cfg.epsilon_schedule = vec![1e-2, 1e-1];
    assert!(cfg.validate().is_err());
    cfg.epsilon_schedule = vec![];
    cfg.elastic = Some(ElasticConstants { l1: 1.0, l2: 0.0, l3: 3.0 });
    assert!(cfg.validate().is_err());
}
