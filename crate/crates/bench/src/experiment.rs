//! Builds a configured problem, runs the solver and writes the run artefacts.

use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use linbreg::inner::PdhgConfig;
use linbreg::io::{read_pgm, write_idx_images, write_idx_labels, write_pgm, Depth, Quantisation};
use linbreg::problems::{
    load_idx_pair, make_synthetic_deconv, make_synthetic_mri, motion_kernel, synthetic_digits, ClassifierProblem,
    DigitSet, SyntheticDeconv, SyntheticMri, MNIST_TRAIN_IMAGES, MNIST_TRAIN_LABELS,
};
use linbreg::regularizers::{
    compose_separable, total_variation, SimplexIndicator, TotalVariation, WeightedDctL1, Zero,
};
use linbreg::solver::{
    run_observed, write_monitor_csv, BacktrackingPolicy, Method, MonitorRecord, RunOptions, SolverState, StopReason,
    StoppingRule,
};
use linbreg::verify::{finite_difference_gradient_check, FdCheckReport};
use linbreg::{BregmanFunction, SmoothObjective, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{ConfigError, DeconvConfig, Discrepancy, ExperimentConfig, InnerSettings, ProblemConfig};
use crate::metrics::{prediction_rate, rank_of};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// Input data that the configuration points at could not be used.
    #[error("{context}: {source}")]
    Input { context: String, source: linbreg::Error },
    #[error("{context}: {source}")]
    Solver { context: String, source: linbreg::Error },
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
}

impl BenchError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) | BenchError::Input { .. } => 2,
            BenchError::Solver { .. } => 3,
            BenchError::Io { .. } => 1,
        }
    }
}

type Result<T> = std::result::Result<T, BenchError>;

fn solver_err(context: impl Into<String>) -> impl FnOnce(linbreg::Error) -> BenchError {
    let context = context.into();
    move |source| BenchError::Solver { context, source }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> BenchError {
    let context = context.into();
    move |source| BenchError::Io { context, source }
}

/// The problem instance behind a configuration.
pub enum Instance {
    Deconv(SyntheticDeconv),
    Mri(SyntheticMri),
    Classifier { problem: ClassifierProblem, rank_tol: f64 },
}

impl Instance {
    pub fn energy(&self) -> &dyn SmoothObjective {
        match self {
            Instance::Deconv(s) => &s.problem,
            Instance::Mri(s) => &s.problem,
            Instance::Classifier { problem, .. } => problem,
        }
    }

    /// Named contiguous blocks of the stacked variable with their 2-D shapes.
    pub fn blocks(&self) -> Vec<(String, Range<usize>, (usize, usize))> {
        match self {
            Instance::Deconv(s) => {
                let p = &s.problem;
                vec![
                    ("image".into(), p.image_range(), p.image_shape()),
                    ("kernel".into(), p.kernel_range(), p.kernel_shape()),
                ]
            }
            Instance::Mri(s) => {
                let p = &s.problem;
                let n = p.size();
                let mut out = vec![("image_re".into(), p.block(0), (n, n)), ("image_im".into(), p.block(1), (n, n))];
                for j in 0..p.coils() {
                    out.push((format!("coil{}_re", j + 1), p.block(2 + 2 * j), (n, n)));
                    out.push((format!("coil{}_im", j + 1), p.block(3 + 2 * j), (n, n)));
                }
                out
            }
            Instance::Classifier { problem, .. } => problem
                .shapes()
                .iter()
                .enumerate()
                .map(|(j, &shape)| (format!("A{}", j + 1), problem.layer_range(j), shape))
                .collect(),
        }
    }

    /// Columns appended to every log row.
    pub fn extra_names(&self) -> Vec<String> {
        match self {
            Instance::Deconv(_) | Instance::Mri(_) => vec!["tv_value".into()],
            Instance::Classifier { problem, .. } => {
                let mut names: Vec<String> = (1..=problem.shapes().len()).map(|j| format!("rank_A{j}")).collect();
                names.push("prediction_rate".into());
                names
            }
        }
    }

    pub fn extras(&self, x: &Tensor) -> linbreg::Result<Vec<f64>> {
        let block = |r: Range<usize>, (a, b): (usize, usize)| x.flatten().slice(r).into_shape(&[a, b]);
        match self {
            Instance::Deconv(s) => {
                let (u, _) = s.problem.split(x)?;
                Ok(vec![total_variation(&u)?])
            }
            Instance::Mri(s) => {
                let n = s.problem.size();
                let re = block(s.problem.block(0), (n, n))?;
                let im = block(s.problem.block(1), (n, n))?;
                Ok(vec![total_variation(&re)? + total_variation(&im)?])
            }
            Instance::Classifier { problem, rank_tol } => {
                let layers = problem.split(x)?;
                let mut out = layers.iter().map(|a| rank_of(a, *rank_tol).map(|r| r as f64)).collect::<linbreg::Result<Vec<_>>>()?;
                out.push(prediction_rate(&layers, problem.inputs(), problem.labels(), problem.activations())?);
                Ok(out)
            }
        }
    }

    /// Final metrics reported in the summary beyond the logged extras.
    fn final_metrics(&self, x: &Tensor) -> linbreg::Result<Vec<(String, f64)>> {
        match self {
            Instance::Deconv(s) => {
                let (u, h) = s.problem.split(x)?;
                Ok(vec![
                    ("kernel_error".into(), h.sub(&s.h_true).norm()),
                    ("image_error".into(), u.sub(&s.u_true).norm()),
                ])
            }
            Instance::Mri(s) => {
                let e = s.problem.value(x)?;
                Ok(vec![("data_fit".into(), e - s.problem.eps_terms(x))])
            }
            Instance::Classifier { .. } => Ok(Vec::new()),
        }
    }
}

fn pdhg(inner: &InnerSettings) -> PdhgConfig {
    PdhgConfig { tol: inner.tol, maxit: inner.maxit, accelerate: inner.accelerate, ..PdhgConfig::default() }
}

fn tv(alpha: f64, rows: usize, cols: usize, inner: &InnerSettings) -> linbreg::Result<Box<dyn BregmanFunction>> {
    if alpha == 0.0 {
        return Ok(Box::new(Zero));
    }
    Ok(Box::new(TotalVariation::new(alpha, rows, cols)?.with_inner(pdhg(inner))?.lenient()))
}

fn deconv_instance(cfg: &DeconvConfig, seed: u64) -> linbreg::Result<SyntheticDeconv> {
    let kernel = motion_kernel(cfg.kernel_rows, cfg.kernel_cols)?;
    make_synthetic_deconv(seed, cfg.rows, cfg.cols, &kernel, cfg.sigma, cfg.contrast)
}

fn load_digits(cfg: &ExperimentConfig, mnist_dir: Option<&Path>, count: usize) -> Result<DigitSet> {
    let input = |context: String| move |source| BenchError::Input { context, source };
    let dir = match mnist_dir {
        Some(d) => d.to_path_buf(),
        None => {
            // synthetic digits go through the same IDX reader as real data
            let dir = cfg.out.join("data");
            fs::create_dir_all(&dir).map_err(io_err(format!("creating {}", dir.display())))?;
            let (images, labels) = synthetic_digits(count, cfg.seed);
            write_idx_images(&dir.join(MNIST_TRAIN_IMAGES), &images).map_err(solver_err("writing digits"))?;
            write_idx_labels(&dir.join(MNIST_TRAIN_LABELS), &labels).map_err(solver_err("writing digits"))?;
            dir
        }
    };
    let (images, labels) = load_idx_pair(&dir.join(MNIST_TRAIN_IMAGES), &dir.join(MNIST_TRAIN_LABELS))
        .map_err(input(format!("reading digits from {}", dir.display())))?;
    DigitSet::from_idx(&images, &labels, 0..count).map_err(input(format!("selecting {count} digits")))
}

/// Problem, regularizer and starting point for a configuration.
pub struct Setup {
    pub instance: Instance,
    pub regularizer: Box<dyn BregmanFunction>,
    pub x0: Tensor,
    pub eta: Option<f64>,
}

pub fn build(cfg: &ExperimentConfig) -> Result<Setup> {
    let build_err = solver_err("building the problem");
    let projected = cfg.solver == Method::ProjectedGradient;
    let (instance, regularizer, x0): (Instance, Box<dyn BregmanFunction>, Tensor) = match &cfg.problem {
        ProblemConfig::Deconv(d) => {
            let s = deconv_instance(d, cfg.seed).map_err(build_err)?;
            let p = &s.problem;
            let image = match d.alpha {
                Some(a) if !projected => tv(a, d.rows, d.cols, &d.inner),
                _ => Ok(Box::new(Zero) as Box<dyn BregmanFunction>),
            }
            .map_err(solver_err("building the regularizer"))?;
            let r = compose_separable(vec![(image, p.image_range()), (Box::new(SimplexIndicator), p.kernel_range())])
                .map_err(solver_err("building the regularizer"))?;
            let kernel_len = d.kernel_rows * d.kernel_cols;
            let h0 = Tensor::full(&[d.kernel_rows, d.kernel_cols], 1.0 / kernel_len as f64);
            let x0 = p.stack(&Tensor::zeros(&[d.rows, d.cols]), &h0).map_err(solver_err("building the start"))?;
            (Instance::Deconv(s), Box::new(r), x0)
        }
        ProblemConfig::Mri(m) => {
            let mut s = make_synthetic_mri(cfg.seed, m.size, m.coils, m.mask).map_err(build_err)?;
            s.problem.eps = m.eps;
            let p = &s.problem;
            let n = m.size;
            let r: Box<dyn BregmanFunction> = match m.weights {
                Some((alpha_tv, beta_dct)) if !projected => {
                    let weights = WeightedDctL1::low_frequency_weights(n, n, m.dct_low, m.dct_high);
                    let mut parts: Vec<(Box<dyn BregmanFunction>, Range<usize>)> = Vec::new();
                    for i in 0..2 {
                        parts.push((tv(alpha_tv, n, n, &m.inner).map_err(solver_err("building the regularizer"))?, p.block(i)));
                    }
                    for i in 2..2 * (1 + p.coils()) {
                        let dct = WeightedDctL1::new(beta_dct, weights.clone()).map_err(solver_err("building the regularizer"))?;
                        parts.push((Box::new(dct), p.block(i)));
                    }
                    Box::new(compose_separable(parts).map_err(solver_err("building the regularizer"))?)
                }
                _ => Box::new(Zero),
            };
            // real-valued start: u = 2, every coil map 1
            let mut x0 = vec![0.0; p.dim()];
            for (i, v) in x0.iter_mut().enumerate() {
                let block = i / (n * n);
                *v = match block {
                    0 => 2.0,
                    b if b >= 2 && b % 2 == 0 => 1.0,
                    _ => 0.0,
                };
            }
            let x0 = Tensor::new(&[p.dim()], x0).map_err(solver_err("building the start"))?;
            (Instance::Mri(s), r, x0)
        }
        ProblemConfig::Classifier(c) => {
            let digits = load_digits(cfg, c.mnist_dir.as_deref(), c.train)?;
            let act = c.activation.activation();
            let problem =
                ClassifierProblem::new(digits.inputs.clone(), digits.one_hot(), &[c.hidden], vec![act, act], c.loss(), c.eps)
                    .map_err(build_err)?;
            let r: Box<dyn BregmanFunction> = match &c.alphas {
                Some(a) if !projected => Box::new(problem.regularizer(a).map_err(solver_err("building the regularizer"))?),
                _ => Box::new(Zero),
            };
            let x0 = problem.initial_point(cfg.seed, c.init());
            (Instance::Classifier { problem, rank_tol: c.rank_tol }, r, x0)
        }
    };
    let eta = match (cfg.discrepancy, &cfg.problem) {
        (Discrepancy::Off, _) => None,
        (Discrepancy::Value(v), _) => Some(v),
        (Discrepancy::Auto, ProblemConfig::Deconv(d)) => {
            Some(linbreg::problems::discrepancy_eta(d.sigma, d.rows, d.cols))
        }
        (Discrepancy::Auto, _) => return Err(ConfigError::Invalid("`discrepancy = auto` needs a deconv problem".into()).into()),
    };
    Ok(Setup { instance, regularizer, x0, eta })
}

/// What a finished run reports.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub final_energy: f64,
    pub final_tau: f64,
    /// Last row of the logged extras followed by the final-only metrics.
    pub metrics: Vec<(String, f64)>,
}

impl RunSummary {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "stop_reason = {}", self.stop_reason.name());
        let _ = writeln!(s, "iterations = {}", self.iterations);
        let _ = writeln!(s, "wall_time_s = {:.3}", self.wall_time_s);
        let _ = writeln!(s, "final_energy = {:e}", self.final_energy);
        let _ = writeln!(s, "final_tau = {:e}", self.final_tau);
        for (k, v) in &self.metrics {
            let _ = writeln!(s, "{k} = {v:e}");
        }
        s
    }
}

/// Monitor rows plus the extras and summary of one run.
#[derive(Clone, Debug)]
pub struct RunLog {
    pub records: Vec<MonitorRecord>,
    pub extra_names: Vec<String>,
    pub extras: Vec<Vec<f64>>,
    pub summary: RunSummary,
    pub final_iterate: Tensor,
}

impl RunLog {
    /// Values of one extra column over the run.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.extra_names.iter().position(|n| n == name)?;
        Some(self.extras.iter().map(|row| row[i]).collect())
    }
}

pub fn snapshot_path(out: &Path, k: usize, block: &str, ext: &str) -> PathBuf {
    out.join("snapshots").join(format!("iter_{k}_{block}.{ext}"))
}

/// Sidecar holding the affine map of a PGM snapshot.
pub fn sidecar_path(pgm: &Path) -> PathBuf {
    pgm.with_extension("quant")
}

/// Restores a PGM snapshot through its sidecar map.
pub fn read_snapshot(pgm: &Path) -> linbreg::Result<Tensor> {
    let side = sidecar_path(pgm);
    let text = fs::read_to_string(&side)
        .map_err(|e| linbreg::Error::Io { context: format!("reading {}", side.display()), source: e })?;
    let q = Quantisation::from_sidecar(&text)?;
    Ok(read_pgm(pgm)?.restore(&q))
}

fn write_matrix_csv(path: &Path, a: &Tensor) -> linbreg::Result<()> {
    let (rows, cols) = a.dims2()?;
    let mut s = String::new();
    for i in 0..rows {
        let row: Vec<String> = (0..cols).map(|j| format!("{:?}", a.at2(i, j))).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    fs::write(path, s).map_err(|e| linbreg::Error::Io { context: format!("writing {}", path.display()), source: e })
}

fn write_snapshots(instance: &Instance, out: &Path, k: usize, x: &Tensor) -> linbreg::Result<()> {
    let flat = x.flatten();
    for (name, range, (a, b)) in instance.blocks() {
        let t = flat.slice(range).into_shape(&[a, b])?;
        if matches!(instance, Instance::Classifier { .. }) {
            write_matrix_csv(&snapshot_path(out, k, &name, "csv"), &t)?;
        } else {
            let path = snapshot_path(out, k, &name, "pgm");
            let q = Quantisation::spanning(&t, Depth::Sixteen);
            write_pgm(&path, &t, &q)?;
            fs::write(sidecar_path(&path), q.to_sidecar())
                .map_err(|e| linbreg::Error::Io { context: format!("writing sidecar for {}", path.display()), source: e })?;
        }
    }
    Ok(())
}

/// Runs a configuration and writes `log.csv`, `config.resolved`,
/// `summary.txt` and the scheduled snapshots into `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunLog> {
    fs::create_dir_all(&cfg.out).map_err(io_err(format!("creating {}", cfg.out.display())))?;
    fs::write(cfg.out.join("config.resolved"), cfg.resolved()).map_err(io_err("writing config.resolved"))?;
    let setup = build(cfg)?;
    let Setup { instance, regularizer, x0, eta } = setup;
    if !cfg.snapshots.is_empty() {
        let dir = cfg.out.join("snapshots");
        fs::create_dir_all(&dir).map_err(io_err(format!("creating {}", dir.display())))?;
    }
    if cfg.snapshots.first() == Some(&0) {
        write_snapshots(&instance, &cfg.out, 0, &x0).map_err(solver_err("writing snapshot 0"))?;
    }

    let e = instance.energy();
    let r = regularizer.as_ref();
    let policy = BacktrackingPolicy { eps_decrease: cfg.eps_decrease, ..BacktrackingPolicy::new(cfg.tau0) };
    let stop = StoppingRule { max_iter: cfg.max_iter, discrepancy_eta: eta, iterate_gap_tol: cfg.gap_tol };
    let opts = RunOptions { method: cfg.solver, ..RunOptions::default() };

    let start = Instant::now();
    let st0 = SolverState::new(e, r, x0, cfg.tau0).map_err(solver_err("initialising the solver"))?;
    let mut extras = Vec::new();
    let mut observer = |st: &SolverState, _: &MonitorRecord| -> linbreg::Result<()> {
        extras.push(instance.extras(&st.u)?);
        if cfg.snapshots.binary_search(&st.k).is_ok() {
            write_snapshots(&instance, &cfg.out, st.k, &st.u)?;
        }
        Ok(())
    };
    let outcome = run_observed(e, r, st0, &policy, &stop, opts, &mut observer)
        .map_err(solver_err(format!("running {} on {}", cfg.solver.name(), cfg.problem.name())))?;
    let wall_time_s = start.elapsed().as_secs_f64();

    let extra_names = instance.extra_names();
    let file = fs::File::create(cfg.out.join("log.csv")).map_err(io_err("creating log.csv"))?;
    write_monitor_csv(std::io::BufWriter::new(file), &outcome.records, &extra_names, &extras)
        .map_err(solver_err("writing log.csv"))?;

    let x = &outcome.state.u;
    let last = match extras.last() {
        Some(row) => row.clone(),
        None => instance.extras(x).map_err(solver_err("evaluating metrics"))?,
    };
    let mut metrics: Vec<(String, f64)> = extra_names.iter().cloned().zip(last).collect();
    metrics.extend(instance.final_metrics(x).map_err(solver_err("evaluating metrics"))?);
    let summary = RunSummary {
        stop_reason: outcome.reason,
        iterations: outcome.state.k,
        wall_time_s,
        final_energy: outcome.state.energy,
        final_tau: outcome.state.tau,
        metrics,
    };
    fs::write(cfg.out.join("summary.txt"), summary.to_text()).map_err(io_err("writing summary.txt"))?;
    log::info!(
        "{} on {}: {} after {} iterations, E = {:e}",
        cfg.solver.name(),
        cfg.problem.name(),
        summary.stop_reason.name(),
        summary.iterations,
        summary.final_energy
    );
    Ok(RunLog { records: outcome.records, extra_names, extras, summary, final_iterate: outcome.state.u })
}

/// Finite-difference checks of the configured energy at the start point and
/// at two seeded perturbations of it.
pub fn grad_check(cfg: &ExperimentConfig, n_coords: usize) -> Result<Vec<FdCheckReport>> {
    let setup = build(cfg)?;
    let e = setup.instance.energy();
    let x0 = &setup.x0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scale = 0.05 * (1.0 + x0.norm() / (x0.len() as f64).sqrt());
    let mut points = vec![x0.clone()];
    for _ in 0..2 {
        let noise: Vec<f64> = (0..x0.len()).map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
        let mut p = x0.clone();
        p.axpy(1.0, &Tensor::new(x0.shape(), noise).map_err(solver_err("perturbing the start"))?);
        points.push(p);
    }
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            finite_difference_gradient_check(e, p, None, n_coords.min(p.len()), cfg.seed.wrapping_add(i as u64))
                .map_err(solver_err(format!("gradient check at point {i}")))
        })
        .collect()
}
