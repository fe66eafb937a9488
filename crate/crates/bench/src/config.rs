//! Plain-text experiment configuration.
//!
//! One `key = value` pair per line; `#` starts a comment. Keys that are unknown
//! or that do not apply to the chosen problem and solver are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use linbreg::problems::{Activation, Init, Loss, MaskKind};
use linbreg::solver::Method;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

type Result<T> = std::result::Result<T, ConfigError>;

const COMMON_KEYS: &[&str] = &[
    "problem",
    "solver",
    "tau0",
    "eps_decrease",
    "max_iter",
    "discrepancy",
    "gap_tol",
    "seed",
    "out",
    "snapshots",
];
const INNER_KEYS: &[&str] = &["inner_tol", "inner_maxit", "inner_accelerate"];
const DECONV_KEYS: &[&str] = &["rows", "cols", "kernel_rows", "kernel_cols", "sigma", "contrast", "alpha"];
const MRI_KEYS: &[&str] = &["size", "coils", "mask", "alpha_tv", "beta_dct", "dct_low", "dct_high", "eps"];
const CLASSIFIER_KEYS: &[&str] = &[
    "train",
    "hidden",
    "activation",
    "loss",
    "kl_shift",
    "alphas",
    "init",
    "init_scale",
    "eps",
    "mnist_dir",
    "rank_tol",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Discrepancy {
    Off,
    /// `1.2σ² / (2√(H·W))` from the configured noise level.
    Auto,
    Value(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerSettings {
    pub tol: f64,
    pub maxit: usize,
    pub accelerate: bool,
}

impl Default for InnerSettings {
    fn default() -> Self {
        Self { tol: 1e-7, maxit: 5000, accelerate: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeconvConfig {
    pub rows: usize,
    pub cols: usize,
    pub kernel_rows: usize,
    pub kernel_cols: usize,
    pub sigma: f64,
    pub contrast: f64,
    /// TV weight on the image; `None` under projected gradient.
    pub alpha: Option<f64>,
    pub inner: InnerSettings,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MriConfig {
    pub size: usize,
    pub coils: usize,
    pub mask: MaskKind,
    /// `(α_tv, β_dct)`; `None` under projected gradient.
    pub weights: Option<(f64, f64)>,
    pub dct_low: f64,
    pub dct_high: f64,
    pub eps: f64,
    pub inner: InnerSettings,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActivationKind {
    Rectifier,
    SmoothMax,
}

impl ActivationKind {
    pub fn activation(self) -> Activation {
        match self {
            ActivationKind::Rectifier => Activation::Rectifier,
            ActivationKind::SmoothMax => Activation::DEFAULT_SMOOTH_MAX,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Frobenius,
    Kl,
    SymmetricKl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitKind {
    RankOne,
    Uniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub train: usize,
    pub hidden: usize,
    pub activation: ActivationKind,
    pub loss: LossKind,
    pub kl_shift: f64,
    /// One nuclear-norm weight per layer, output layer first; `None` under
    /// projected gradient.
    pub alphas: Option<Vec<f64>>,
    pub init: InitKind,
    pub init_scale: f64,
    pub eps: f64,
    pub mnist_dir: Option<PathBuf>,
    pub rank_tol: f64,
}

impl ClassifierConfig {
    pub fn loss(&self) -> Loss {
        match self.loss {
            LossKind::Frobenius => Loss::SquaredFrobenius,
            LossKind::Kl => Loss::ShiftedKl { shift: self.kl_shift },
            LossKind::SymmetricKl => Loss::SymmetrisedKl { shift: self.kl_shift },
        }
    }

    pub fn init(&self) -> Init {
        match self.init {
            InitKind::RankOne => Init::RankOne { scale: self.init_scale },
            InitKind::Uniform => Init::Uniform { scale: self.init_scale },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemConfig {
    Deconv(DeconvConfig),
    Mri(MriConfig),
    Classifier(ClassifierConfig),
}

impl ProblemConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemConfig::Deconv(_) => "deconv",
            ProblemConfig::Mri(_) => "mri",
            ProblemConfig::Classifier(_) => "classifier",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub solver: Method,
    pub tau0: f64,
    pub eps_decrease: Option<f64>,
    pub max_iter: usize,
    pub discrepancy: Discrepancy,
    pub gap_tol: Option<f64>,
    pub seed: u64,
    pub out: PathBuf,
    /// Iterations whose iterate is written to disk, sorted and deduplicated.
    pub snapshots: Vec<usize>,
}

struct Entry {
    line: usize,
    value: String,
}

/// Key-value pairs still waiting to be consumed.
struct Pending(BTreeMap<String, Entry>);

impl Pending {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Line { line, msg: format!("expected `key = value`, got `{content}`") });
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Line { line, msg: "empty key or value".into() });
            }
            if let Some(prev) = map.insert(key.to_string(), Entry { line, value: value.to_string() }) {
                return Err(ConfigError::Line { line, msg: format!("duplicate key `{key}` (first on line {})", prev.line) });
            }
        }
        Ok(Self(map))
    }

    fn raw(&mut self, key: &str) -> Option<Entry> {
        self.0.remove(key)
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.take_with(key, |v| v.parse::<T>().map_err(|e| e.to_string()))
    }

    fn take_with<T>(&mut self, key: &str, f: impl FnOnce(&str) -> std::result::Result<T, String>) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => f(&e.value)
                .map(Some)
                .map_err(|msg| ConfigError::Line { line: e.line, msg: format!("bad value for `{key}`: {msg}") }),
        }
    }

    /// Errors on a key that is set but not allowed in this configuration.
    fn forbid(&self, key: &str, why: &str) -> Result<()> {
        match self.0.get(key) {
            Some(e) => Err(ConfigError::Line { line: e.line, msg: format!("key `{key}` {why}") }),
            None => Ok(()),
        }
    }

    fn finish(self, problem: &str) -> Result<()> {
        let all = [COMMON_KEYS, INNER_KEYS, DECONV_KEYS, MRI_KEYS, CLASSIFIER_KEYS];
        match self.0.into_iter().min_by_key(|(_, e)| e.line) {
            None => Ok(()),
            Some((key, e)) if all.iter().any(|ks| ks.contains(&key.as_str())) => {
                Err(ConfigError::Line { line: e.line, msg: format!("key `{key}` does not apply to problem `{problem}`") })
            }
            Some((key, e)) => Err(ConfigError::Line { line: e.line, msg: format!("unknown key `{key}`") }),
        }
    }
}

fn positive(v: f64) -> std::result::Result<f64, String> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive and finite, got {v}"))
    }
}

fn nonnegative(v: f64) -> std::result::Result<f64, String> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be nonnegative and finite, got {v}"))
    }
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    s.parse::<f64>().map_err(|e| e.to_string())
}

fn parse_list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',').map(|p| p.trim().parse::<T>().map_err(|e| format!("`{}`: {e}", p.trim()))).collect()
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    match s {
        "linbreg" => Ok(Method::Linbreg),
        "projected-gd" => Ok(Method::ProjectedGradient),
        "proximal-gd" => Ok(Method::ProximalGradient),
        _ => Err(format!("unknown solver `{s}` (linbreg | projected-gd | proximal-gd)")),
    }
}

fn parse_discrepancy(s: &str) -> std::result::Result<Discrepancy, String> {
    match s {
        "off" => Ok(Discrepancy::Off),
        "auto" => Ok(Discrepancy::Auto),
        _ => parse_f64(s).and_then(nonnegative).map(Discrepancy::Value),
    }
}

fn parse_mask(s: &str) -> std::result::Result<MaskKind, String> {
    match s {
        "full" => Ok(MaskKind::Full),
        "spiral" => Ok(MaskKind::Spiral),
        _ => match s.strip_prefix("random:") {
            Some(p) => {
                let p = parse_f64(p)?;
                if p > 0.0 && p <= 1.0 {
                    Ok(MaskKind::Random(p))
                } else {
                    Err(format!("sampling fraction {p} outside (0, 1]"))
                }
            }
            None => Err(format!("unknown mask `{s}` (full | spiral | random:<fraction>)")),
        },
    }
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected true or false, got `{s}`")),
    }
}

fn take_inner(p: &mut Pending) -> Result<InnerSettings> {
    let d = InnerSettings::default();
    let tol = p.take_with("inner_tol", |s| parse_f64(s).and_then(positive))?.unwrap_or(d.tol);
    let maxit = p.take::<usize>("inner_maxit")?.unwrap_or(d.maxit);
    if maxit == 0 {
        return Err(ConfigError::Invalid("inner_maxit must be positive".into()));
    }
    let accelerate = p.take_with("inner_accelerate", parse_bool)?.unwrap_or(d.accelerate);
    Ok(InnerSettings { tol, maxit, accelerate })
}

fn take_weight(p: &mut Pending, key: &str, default: f64, solver: Method) -> Result<Option<f64>> {
    if solver == Method::ProjectedGradient {
        p.forbid(key, "has no effect under projected-gd")?;
        return Ok(None);
    }
    Ok(Some(p.take_with(key, |s| parse_f64(s).and_then(nonnegative))?.unwrap_or(default)))
}

fn take_size(p: &mut Pending, key: &str, default: usize) -> Result<usize> {
    let v = p.take::<usize>(key)?.unwrap_or(default);
    if v == 0 {
        return Err(ConfigError::Invalid(format!("`{key}` must be positive")));
    }
    Ok(v)
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        text.parse()
    }

    fn parse_text(text: &str) -> Result<Self> {
        let mut p = Pending::parse(text)?;
        let problem_name = p
            .raw("problem")
            .ok_or_else(|| ConfigError::Invalid("missing required key `problem`".into()))?;
        let solver = p.take_with("solver", parse_method)?.unwrap_or(Method::Linbreg);

        let problem = match problem_name.value.as_str() {
            "deconv" => {
                let inner = take_inner(&mut p)?;
                let rows = take_size(&mut p, "rows", 32)?;
                let cols = take_size(&mut p, "cols", 32)?;
                let kernel_rows = take_size(&mut p, "kernel_rows", 3)?;
                let kernel_cols = take_size(&mut p, "kernel_cols", 5)?;
                if kernel_rows > rows || kernel_cols > cols {
                    return Err(ConfigError::Invalid("kernel larger than the image".into()));
                }
                let sigma = p.take_with("sigma", |s| parse_f64(s).and_then(nonnegative))?.unwrap_or(0.0);
                let contrast = p.take_with("contrast", |s| parse_f64(s).and_then(positive))?.unwrap_or(1.0);
                let alpha = take_weight(&mut p, "alpha", 0.05, solver)?;
                ProblemConfig::Deconv(DeconvConfig { rows, cols, kernel_rows, kernel_cols, sigma, contrast, alpha, inner })
            }
            "mri" => {
                let inner = take_inner(&mut p)?;
                let size = take_size(&mut p, "size", 64)?;
                let coils = take_size(&mut p, "coils", 4)?;
                let mask = p.take_with("mask", parse_mask)?.unwrap_or(MaskKind::Spiral);
                let alpha_tv = take_weight(&mut p, "alpha_tv", 1.0, solver)?;
                let beta_dct = take_weight(&mut p, "beta_dct", 1.0, solver)?;
                let dct_low = p.take_with("dct_low", |s| parse_f64(s).and_then(nonnegative))?.unwrap_or(1e-6);
                let dct_high = p.take_with("dct_high", |s| parse_f64(s).and_then(nonnegative))?.unwrap_or(5.0);
                let eps = p.take_with("eps", |s| parse_f64(s).and_then(nonnegative))?.unwrap_or(f64::EPSILON);
                let weights = alpha_tv.zip(beta_dct);
                ProblemConfig::Mri(MriConfig { size, coils, mask, weights, dct_low, dct_high, eps, inner })
            }
            "classifier" => {
                for k in INNER_KEYS {
                    p.forbid(k, "does not apply to problem `classifier`")?;
                }
                let train = take_size(&mut p, "train", 500)?;
                let hidden = take_size(&mut p, "hidden", 16)?;
                let activation = p
                    .take_with("activation", |s| match s {
                        "rectifier" => Ok(ActivationKind::Rectifier),
                        "smooth-max" => Ok(ActivationKind::SmoothMax),
                        _ => Err(format!("unknown activation `{s}` (rectifier | smooth-max)")),
                    })?
                    .unwrap_or(ActivationKind::Rectifier);
                let loss = p
                    .take_with("loss", |s| match s {
                        "frobenius" => Ok(LossKind::Frobenius),
                        "kl" => Ok(LossKind::Kl),
                        "symmetric-kl" => Ok(LossKind::SymmetricKl),
                        _ => Err(format!("unknown loss `{s}` (frobenius | kl | symmetric-kl)")),
                    })?
                    .unwrap_or(LossKind::Frobenius);
                let kl_shift = if loss == LossKind::Frobenius {
                    p.forbid("kl_shift", "only applies to the kl losses")?;
                    0.5
                } else {
                    p.take_with("kl_shift", |s| parse_f64(s).and_then(positive))?.unwrap_or(0.5)
                };
                let alphas = if solver == Method::ProjectedGradient {
                    p.forbid("alphas", "has no effect under projected-gd")?;
                    None
                } else {
                    let a = p.take_with("alphas", parse_list::<f64>)?.unwrap_or_else(|| vec![0.2, 0.2]);
                    if a.len() != 2 || a.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                        return Err(ConfigError::Invalid("`alphas` needs two nonnegative weights".into()));
                    }
                    Some(a)
                };
                let init = p
                    .take_with("init", |s| match s {
                        "rank-one" => Ok(InitKind::RankOne),
                        "uniform" => Ok(InitKind::Uniform),
                        _ => Err(format!("unknown init `{s}` (rank-one | uniform)")),
                    })?
                    .unwrap_or(InitKind::RankOne);
                let init_scale = p.take_with("init_scale", |s| parse_f64(s).and_then(positive))?.unwrap_or(0.1);
                let eps = p.take_with("eps", |s| parse_f64(s).and_then(nonnegative))?.unwrap_or(f64::EPSILON);
                let mnist_dir = p.take::<PathBuf>("mnist_dir")?;
                let rank_tol = p
                    .take_with("rank_tol", |s| parse_f64(s).and_then(positive))?
                    .unwrap_or(crate::metrics::DEFAULT_RANK_TOL);
                ProblemConfig::Classifier(ClassifierConfig {
                    train,
                    hidden,
                    activation,
                    loss,
                    kl_shift,
                    alphas,
                    init,
                    init_scale,
                    eps,
                    mnist_dir,
                    rank_tol,
                })
            }
            other => {
                return Err(ConfigError::Line {
                    line: problem_name.line,
                    msg: format!("unknown problem `{other}` (deconv | mri | classifier)"),
                })
            }
        };

        let default_tau0 = match problem {
            ProblemConfig::Deconv(_) => 1.0,
            ProblemConfig::Mri(_) => 0.5,
            ProblemConfig::Classifier(_) => 1e-3,
        };
        let tau0 = p.take_with("tau0", |s| parse_f64(s).and_then(positive))?.unwrap_or(default_tau0);
        let eps_decrease = p.take_with("eps_decrease", |s| parse_f64(s).and_then(nonnegative))?;
        let max_iter = p.take::<usize>("max_iter")?.unwrap_or(1000);
        let disc_line = p.0.get("discrepancy").map(|e| e.line);
        let discrepancy = p.take_with("discrepancy", parse_discrepancy)?.unwrap_or(Discrepancy::Off);
        if discrepancy == Discrepancy::Auto && !matches!(problem, ProblemConfig::Deconv(ref d) if d.sigma > 0.0) {
            return Err(ConfigError::Line {
                line: disc_line.unwrap_or(0),
                msg: "`discrepancy = auto` needs a deconv problem with sigma > 0".into(),
            });
        }
        let gap_tol = p.take_with("gap_tol", |s| parse_f64(s).and_then(positive))?;
        let seed = p.take::<u64>("seed")?.unwrap_or(1);
        let out = p.take::<PathBuf>("out")?.unwrap_or_else(|| PathBuf::from("out"));
        let mut snapshots = p.take_with("snapshots", |s| if s == "none" { Ok(Vec::new()) } else { parse_list::<usize>(s) })?.unwrap_or_default();
        snapshots.sort_unstable();
        snapshots.dedup();

        p.finish(problem.name())?;
        Ok(Self { problem, solver, tau0, eps_decrease, max_iter, discrepancy, gap_tol, seed, out, snapshots })
    }

    /// Applies the command-line overrides.
    pub fn override_with(&mut self, seed: Option<u64>, out: Option<PathBuf>, max_iter: Option<usize>) {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            self.out = o;
        }
        if let Some(m) = max_iter {
            self.max_iter = m;
        }
    }

    /// Every effective setting in canonical order; parses back to `self`.
    pub fn resolved(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("problem", self.problem.name().into());
        kv("solver", self.solver.name().into());
        kv("tau0", format!("{:?}", self.tau0));
        if let Some(e) = self.eps_decrease {
            kv("eps_decrease", format!("{e:?}"));
        }
        kv("max_iter", self.max_iter.to_string());
        kv(
            "discrepancy",
            match self.discrepancy {
                Discrepancy::Off => "off".into(),
                Discrepancy::Auto => "auto".into(),
                Discrepancy::Value(v) => format!("{v:?}"),
            },
        );
        if let Some(g) = self.gap_tol {
            kv("gap_tol", format!("{g:?}"));
        }
        kv("seed", self.seed.to_string());
        kv("out", self.out.display().to_string());
        let snaps: Vec<String> = self.snapshots.iter().map(|k| k.to_string()).collect();
        kv("snapshots", if snaps.is_empty() { "none".into() } else { snaps.join(",") });
        let inner = |kv: &mut dyn FnMut(&str, String), i: &InnerSettings| {
            kv("inner_tol", format!("{:?}", i.tol));
            kv("inner_maxit", i.maxit.to_string());
            kv("inner_accelerate", i.accelerate.to_string());
        };
        match &self.problem {
            ProblemConfig::Deconv(d) => {
                kv("rows", d.rows.to_string());
                kv("cols", d.cols.to_string());
                kv("kernel_rows", d.kernel_rows.to_string());
                kv("kernel_cols", d.kernel_cols.to_string());
                kv("sigma", format!("{:?}", d.sigma));
                kv("contrast", format!("{:?}", d.contrast));
                if let Some(a) = d.alpha {
                    kv("alpha", format!("{a:?}"));
                }
                inner(&mut kv, &d.inner);
            }
            ProblemConfig::Mri(m) => {
                kv("size", m.size.to_string());
                kv("coils", m.coils.to_string());
                kv(
                    "mask",
                    match m.mask {
                        MaskKind::Full => "full".into(),
                        MaskKind::Spiral => "spiral".into(),
                        MaskKind::Random(p) => format!("random:{p:?}"),
                    },
                );
                if let Some((a, b)) = m.weights {
                    kv("alpha_tv", format!("{a:?}"));
                    kv("beta_dct", format!("{b:?}"));
                }
                kv("dct_low", format!("{:?}", m.dct_low));
                kv("dct_high", format!("{:?}", m.dct_high));
                kv("eps", format!("{:?}", m.eps));
                inner(&mut kv, &m.inner);
            }
            ProblemConfig::Classifier(c) => {
                kv("train", c.train.to_string());
                kv("hidden", c.hidden.to_string());
                kv(
                    "activation",
                    match c.activation {
                        ActivationKind::Rectifier => "rectifier",
                        ActivationKind::SmoothMax => "smooth-max",
                    }
                    .into(),
                );
                let loss = match c.loss {
                    LossKind::Frobenius => "frobenius",
                    LossKind::Kl => "kl",
                    LossKind::SymmetricKl => "symmetric-kl",
                };
                kv("loss", loss.into());
                if c.loss != LossKind::Frobenius {
                    kv("kl_shift", format!("{:?}", c.kl_shift));
                }
                if let Some(a) = &c.alphas {
                    kv("alphas", a.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(","));
                }
                kv(
                    "init",
                    match c.init {
                        InitKind::RankOne => "rank-one",
                        InitKind::Uniform => "uniform",
                    }
                    .into(),
                );
                kv("init_scale", format!("{:?}", c.init_scale));
                kv("eps", format!("{:?}", c.eps));
                if let Some(d) = &c.mnist_dir {
                    kv("mnist_dir", d.display().to_string());
                }
                kv("rank_tol", format!("{:?}", c.rank_tol));
            }
        }
        s
    }
}

impl FromStr for ExperimentConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self> {
        Self::parse_text(text)
    }
}
