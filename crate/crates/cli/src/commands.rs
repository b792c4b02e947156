use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use nuq::io::{
    read_dataset, read_embeddings, write_atomic, write_embeddings, EmbeddingFile, LabelColumn,
};
use nuq::metrics::{agreement as agreement_rate, ood_prefix_curve, rcc_auc, roc_auc};
use nuq::reject::{decide, evaluate_chow_risk, Action, RejectDecision};
use nuq::toys::{gen_gauss3_1d, gen_ring_ood, gen_step_reject, gen_two_moons, ToyName};
use nuq::{
    load_model, save_model, tune_bandwidth, Backend, BandwidthGrid, DensityMode, FitOptions,
    GaussianFit, IndexConfig, KernelKind, KernelSpec, NuqError, NuqModel, PointMatrix,
    RejectConfig, Result, Ridge, TuneConfig, UncertaintyReport,
};

use crate::settings::Settings;
use crate::IndexArgs;

fn label_col(s: &Settings, flag: Option<String>, default: LabelColumn) -> Result<LabelColumn> {
    s.parsed(flag, "label_col", default)
}

fn write_csv(path: &Path, text: String) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

fn query_points(model: &NuqModel, path: &Path, labels: LabelColumn) -> Result<EmbeddingFile> {
    let file = read_embeddings(path, labels)?;
    if file.points.dim() != model.dim() {
        return Err(NuqError::Input(format!(
            "{} has dimension {}, model expects {}",
            path.display(),
            file.points.dim(),
            model.dim()
        )));
    }
    Ok(file)
}

pub struct TuneArgs {
    pub train: Option<PathBuf>,
    pub label_col: Option<String>,
    pub kernel: Option<String>,
    pub neighbors: Option<usize>,
    pub folds: Option<usize>,
    pub grid: Option<String>,
    pub grid_size: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| NuqError::Config(format!("invalid bandwidth {v:?} in grid")))
        })
        .collect()
}

pub fn tune(s: &Settings, a: TuneArgs) -> Result<()> {
    let train = s.path(a.train, "train")?;
    let ds = read_dataset(&train, label_col(s, a.label_col, LabelColumn::Last)?)?;
    let defaults = TuneConfig::default();
    let grid = match s.pick(a.grid, "grid")? {
        Some(text) => BandwidthGrid::Explicit(parse_grid(&text)?),
        None => BandwidthGrid::MedianScaled {
            size: s.pick_or(a.grid_size, "grid_size", 20)?,
        },
    };
    let cfg = TuneConfig {
        grid,
        folds: s.pick_or(a.folds, "folds", defaults.folds)?,
        neighbors: s.pick_or(a.neighbors, "neighbors", defaults.neighbors)?,
        kernel: s.parsed(a.kernel, "kernel", KernelKind::Gaussian)?,
        seed: s.pick_or(a.seed, "seed", 0)?,
    };
    let result = tune_bandwidth(&ds, &cfg)?;
    println!("bandwidth {}", result.best_bandwidth);
    println!("cv_accuracy {}", result.best_accuracy);
    if let Some(out) = s.pick(a.out, "out")? {
        let mut text = String::from("bandwidth,accuracy\n");
        for (h, acc) in &result.table {
            let _ = writeln!(text, "{h},{acc}");
        }
        write_csv(&out, text)?;
    }
    Ok(())
}

pub struct FitArgs {
    pub train: Option<PathBuf>,
    pub label_col: Option<String>,
    pub bandwidth: Option<f64>,
    pub kernel: Option<String>,
    pub density: Option<String>,
    pub ridge: Option<String>,
    pub diagonal: bool,
    pub index: IndexArgs,
    pub out: Option<PathBuf>,
}

fn index_config(s: &Settings, a: IndexArgs) -> Result<IndexConfig> {
    let defaults = IndexConfig::default();
    let neighbors = s.pick_or(a.neighbors, "neighbors", defaults.neighbors)?;
    let ef_search = s
        .pick(a.ef_search, "ef_search")?
        .unwrap_or(defaults.hnsw_ef_search.max(neighbors));
    let cfg = IndexConfig {
        neighbors,
        backend: s.parsed(a.knn_backend, "knn_backend", Backend::Exact)?,
        hnsw_m: s.pick_or(a.hnsw_m, "hnsw_m", defaults.hnsw_m)?,
        hnsw_ef_construction: s.pick_or(
            a.ef_construction,
            "ef_construction",
            defaults.hnsw_ef_construction,
        )?,
        hnsw_ef_search: ef_search,
        seed: s.pick_or(a.index_seed, "index_seed", defaults.seed)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn fit(s: &Settings, a: FitArgs) -> Result<()> {
    let train = s.path(a.train, "train")?;
    let out = s.path(a.out, "out")?;
    let ds = read_dataset(&train, label_col(s, a.label_col, LabelColumn::Last)?)?;
    let kernel = KernelSpec::new(
        s.parsed(a.kernel, "kernel", KernelKind::Gaussian)?,
        s.require(a.bandwidth, "bandwidth")?,
        ds.dim(),
    )?;
    let opts = FitOptions {
        index: index_config(s, a.index)?,
        density: s.parsed(a.density, "density", DensityMode::Kde)?,
        gaussian: GaussianFit {
            ridge: s.parsed(a.ridge, "ridge", Ridge::Auto)?,
            diagonal: s.switch(a.diagonal, "diagonal")?,
        },
    };
    info!("fitting on {} points of dimension {}", ds.len(), ds.dim());
    let model = NuqModel::fit(ds, kernel, opts)?;
    save_model(&model, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}

/// `scores.csv` body; `+inf` prints as `inf`.
pub fn scores_csv(reports: &[UncertaintyReport]) -> String {
    let mut text = String::from("index,pred,p_max,U_a,U_e,U_t,tau,density,out_of_support\n");
    for (i, r) in reports.iter().enumerate() {
        let _ = writeln!(
            text,
            "{i},{},{},{},{},{},{},{},{}",
            r.predicted_class,
            r.p_max(),
            r.aleatoric,
            r.epistemic,
            r.total,
            r.tau,
            r.density,
            u8::from(r.out_of_support)
        );
    }
    text
}

pub fn score(
    s: &Settings,
    model: Option<PathBuf>,
    input: Option<PathBuf>,
    labels: Option<String>,
    out: Option<PathBuf>,
) -> Result<()> {
    let model = load_model(&s.path(model, "model")?)?;
    let input = s.path(input, "input")?;
    let out = s.path(out, "out")?;
    let file = query_points(&model, &input, label_col(s, labels, LabelColumn::None)?)?;
    let reports = model.score_batch(&file.points)?;
    write_csv(&out, scores_csv(&reports))?;
    println!("scored {} points into {}", reports.len(), out.display());
    Ok(())
}

#[derive(Debug, Clone, Copy)]
enum Measure {
    Epistemic,
    Aleatoric,
    Total,
}

impl std::str::FromStr for Measure {
    type Err = NuqError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epistemic" => Ok(Measure::Epistemic),
            "aleatoric" => Ok(Measure::Aleatoric),
            "total" => Ok(Measure::Total),
            other => Err(NuqError::Config(format!(
                "unknown measure {other:?} (expected epistemic, aleatoric or total)"
            ))),
        }
    }
}

impl Measure {
    fn of(self, r: &UncertaintyReport) -> f64 {
        match self {
            Measure::Epistemic => r.epistemic,
            Measure::Aleatoric => r.aleatoric,
            Measure::Total => r.total,
        }
    }
}

pub fn ood_eval(
    s: &Settings,
    model: Option<PathBuf>,
    in_dist: Option<PathBuf>,
    ood: Option<PathBuf>,
    labels: Option<String>,
    measure: Option<String>,
    curve_out: Option<PathBuf>,
) -> Result<()> {
    let model = load_model(&s.path(model, "model")?)?;
    let labels = label_col(s, labels, LabelColumn::None)?;
    let measure: Measure = s.parsed(measure, "measure", Measure::Epistemic)?;
    let score = |path: &Path| -> Result<Vec<f64>> {
        let file = query_points(&model, path, labels)?;
        Ok(model
            .score_batch(&file.points)?
            .iter()
            .map(|r| measure.of(r))
            .collect())
    };
    let a = score(&s.path(in_dist, "in_dist")?)?;
    let b = score(&s.path(ood, "ood")?)?;
    println!("roc_auc {}", roc_auc(&a, &b)?);
    if let Some(path) = s.pick(curve_out, "curve_out")? {
        let mut text = String::from("k,ood_count\n");
        for (k, c) in ood_prefix_curve(&a, &b)?.iter().enumerate() {
            let _ = writeln!(text, "{},{c}", k + 1);
        }
        write_csv(&path, text)?;
    }
    Ok(())
}

pub struct RejectArgs {
    pub model: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub label_col: Option<String>,
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub no_class_correction: bool,
    pub plugin_baseline: bool,
    pub out: Option<PathBuf>,
}

fn print_risk(
    prefix: &str,
    decisions: &[RejectDecision],
    labels: &[u32],
    lambda: f64,
) -> Result<()> {
    let risk = evaluate_chow_risk(decisions, labels, lambda)?;
    println!("{prefix}chow_risk {}", risk.risk);
    println!("{prefix}abstain_rate {}", risk.abstain_rate);
    match risk.accepted_error_rate {
        Some(e) => println!("{prefix}accepted_error_rate {e}"),
        None => println!("{prefix}accepted_error_rate nan"),
    }
    Ok(())
}

pub fn reject_eval(s: &Settings, a: RejectArgs) -> Result<()> {
    let model = load_model(&s.path(a.model, "model")?)?;
    let file = query_points(
        &model,
        &s.path(a.test, "test")?,
        label_col(s, a.label_col, LabelColumn::Last)?,
    )?;
    let labels = file
        .labels
        .ok_or_else(|| NuqError::Input("reject-eval needs a labeled test set".into()))?;
    let classes = model.num_classes();
    let lambda = s.require(a.lambda, "lambda")?;
    let mut cfg = RejectConfig::new(lambda, s.require(a.beta, "beta")?, classes)?;
    if s.switch(a.no_class_correction, "no_class_correction")? {
        cfg.per_class_correction = false;
    }
    let z = cfg.z_value(classes)?;
    let reports = model.score_batch(&file.points)?;
    let decisions: Vec<RejectDecision> = reports.iter().map(|r| decide(r, z, lambda)).collect();
    print_risk("", &decisions, &labels, lambda)?;
    let totals: Vec<f64> = reports.iter().map(|r| r.total).collect();
    let errors: Vec<bool> = reports
        .iter()
        .zip(&labels)
        .map(|(r, &y)| r.predicted_class != y as usize)
        .collect();
    println!("rcc_auc {}", rcc_auc(&totals, &errors)?);
    if s.switch(a.plugin_baseline, "plugin_baseline")? {
        let plug: Vec<RejectDecision> = reports.iter().map(|r| decide(r, 0.0, lambda)).collect();
        print_risk("plugin_", &plug, &labels, lambda)?;
    }
    if let Some(out) = s.pick(a.out, "out")? {
        let mut text = String::from("index,action,u_beta,predicted_class\n");
        for (i, (d, r)) in decisions.iter().zip(&reports).enumerate() {
            let action = match d.action {
                Action::Predict(_) => "predict",
                Action::Reject => "reject",
            };
            let _ = writeln!(text, "{i},{action},{},{}", d.u_beta, r.predicted_class);
        }
        write_csv(&out, text)?;
    }
    Ok(())
}

/// Integers one per line; with a header row, the column named `pred`.
fn read_predictions(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();
    let mut column = 0;
    if let Some((_, first)) = lines.peek() {
        if first
            .split(',')
            .next()
            .is_some_and(|f| f.trim().parse::<usize>().is_err())
        {
            column = first
                .split(',')
                .position(|f| f.trim() == "pred")
                .ok_or_else(|| {
                    NuqError::Input(format!("{}: header has no `pred` column", path.display()))
                })?;
            lines.next();
        }
    }
    lines
        .map(|(no, line)| {
            line.split(',')
                .nth(column)
                .and_then(|f| f.trim().parse::<usize>().ok())
                .ok_or_else(|| {
                    NuqError::Input(format!(
                        "{}: line {}: expected a class index",
                        path.display(),
                        no + 1
                    ))
                })
        })
        .collect()
}

pub fn agreement(
    s: &Settings,
    model: Option<PathBuf>,
    test: Option<PathBuf>,
    labels: Option<String>,
    external: Option<PathBuf>,
) -> Result<()> {
    let model = load_model(&s.path(model, "model")?)?;
    let file = query_points(
        &model,
        &s.path(test, "test")?,
        label_col(s, labels, LabelColumn::None)?,
    )?;
    let external = read_predictions(&s.path(external, "external_preds")?)?;
    let ours: Vec<usize> = model
        .score_batch(&file.points)?
        .iter()
        .map(|r| r.predicted_class)
        .collect();
    println!("agreement {}", agreement_rate(&ours, &external)?);
    Ok(())
}

pub struct ToyArgs {
    pub name: Option<String>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub noise: Option<f64>,
    pub smoothing: Option<f64>,
    pub lambda: Option<f64>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub center: Option<String>,
    pub out: Option<PathBuf>,
    pub oracle_out: Option<PathBuf>,
}

fn parse_center(text: &str) -> Result<[f64; 2]> {
    let parts =
        parse_grid(text).map_err(|_| NuqError::Config(format!("invalid center {text:?}")))?;
    match parts.as_slice() {
        [x, y] => Ok([*x, *y]),
        _ => Err(NuqError::Config(format!(
            "center needs two coordinates, got {text:?}"
        ))),
    }
}

pub fn toy(s: &Settings, a: ToyArgs) -> Result<()> {
    let name: ToyName = s.require::<String>(a.name, "name")?.parse()?;
    let n: usize = s.require(a.n, "n")?;
    let seed = s.pick_or(a.seed, "seed", 0)?;
    let out = s.path(a.out, "out")?;
    let oracle_out: Option<PathBuf> = s.pick(a.oracle_out, "oracle_out")?;
    if n == 0 {
        return Err(NuqError::Config("n must be at least 1".into()));
    }
    let mut oracle = None;
    let file = match name {
        ToyName::TwoMoons => {
            EmbeddingFile::from_dataset(&gen_two_moons(n, s.pick_or(a.noise, "noise", 0.1)?, seed)?)
        }
        ToyName::Gauss3 => {
            let (ds, toy) = gen_gauss3_1d(n, seed)?;
            let mut text = String::from("index,x,eta,density,bayes_risk\n");
            for (i, x) in ds.points().as_slice().iter().enumerate() {
                let x = f64::from(*x);
                let e = toy.eta_at(x);
                let _ = writeln!(text, "{i},{x},{e},{},{}", toy.density(x), e.min(1.0 - e));
            }
            oracle = Some(text);
            EmbeddingFile::from_dataset(&ds)
        }
        ToyName::StepReject => {
            let lambda = s.pick_or(a.lambda, "lambda", 0.2)?;
            let (ds, toy) = gen_step_reject(n, s.pick_or(a.smoothing, "smoothing", 0.05)?, seed)?;
            let mut text = String::from("index,x,eta,density,bayes_risk,chow_risk\n");
            for (i, x) in ds.points().as_slice().iter().enumerate() {
                let x = f64::from(*x);
                let _ = writeln!(
                    text,
                    "{i},{x},{},{},{},{}",
                    toy.eta_at(x),
                    toy.density(x),
                    toy.bayes_risk(x),
                    toy.chow_risk(x, lambda)
                );
            }
            oracle = Some(text);
            EmbeddingFile::from_dataset(&ds)
        }
        ToyName::RingOod => {
            // default center: centroid of the noiseless two-moons arcs
            let center = match s.pick::<String>(a.center, "center")? {
                Some(text) => parse_center(&text)?,
                None => [0.5, 0.25],
            };
            let points: PointMatrix = gen_ring_ood(
                n,
                s.pick_or(a.r_min, "r_min", 2.0)?,
                s.pick_or(a.r_max, "r_max", 3.0)?,
                center,
                seed,
            )?;
            EmbeddingFile::unlabeled(points)
        }
    };
    if oracle_out.is_some() && oracle.is_none() {
        return Err(NuqError::Config(format!(
            "toy {name} has no analytic oracle"
        )));
    }
    write_embeddings(&file, &out)?;
    println!("wrote {} points to {}", file.points.rows(), out.display());
    if let (Some(path), Some(text)) = (oracle_out, oracle) {
        write_csv(&path, text)?;
    }
    Ok(())
}
