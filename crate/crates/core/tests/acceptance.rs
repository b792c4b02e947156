//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestCaseError, TestRunner};

use nuq::density::kde_density;
use nuq::knn::Index;
use nuq::metrics::{agreement, roc_auc, spearman};
use nuq::reject::{
    chow_plugin_abstain, decide, excess_risk_curve, ExcessRiskAtN, ExcessRiskConfig,
};
use nuq::rng::CounterRng;
use nuq::toys::{centroid, gen_ring_ood, gen_two_moons, Gauss3, StepToy};
use nuq::tuning::median_pairwise_distance;
use nuq::{
    abstain, tune_bandwidth, EmbeddingDataset, FitOptions, IndexConfig, KernelKind, KernelSpec,
    NuqModel, PointMatrix, RejectConfig, TuneConfig,
};

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// Kernel profiles written out independently of the library.
fn profile(kind: KernelKind, z: f64) -> f64 {
    match kind {
        KernelKind::Gaussian => (-0.5 * z * z).exp() / (2.0 * PI).sqrt(),
        KernelKind::Sigmoid => 2.0 / PI / (z.exp() + (-z).exp()),
        KernelKind::Logistic => 1.0 / (z.exp() + 2.0 + (-z).exp()),
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let step = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += f(a + i as f64 * step) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * step / 3.0
}

fn kernel_constants() -> Outcome {
    let closed = [
        (KernelKind::Gaussian, 1.0 / (2.0 * PI.sqrt())),
        (KernelKind::Sigmoid, 2.0 / (PI * PI)),
        (KernelKind::Logistic, 1.0 / 6.0),
    ];
    let mut detail = Vec::new();
    for (kind, want) in closed {
        for z in [-7.5, -1.0, 0.0, 0.3, 4.0] {
            let (a, b) = (kind.eval(z), profile(kind, z));
            ensure((a - b).abs() <= 1e-15 * b.max(1e-300), || {
                format!("{kind} profile at {z}: {a} vs {b}")
            })?;
        }
        let quad = simpson(|z| profile(kind, z).powi(2), -40.0, 40.0, 400_000);
        let lib = kind.square_integral();
        ensure((quad - want).abs() < 1e-6, || {
            format!("{kind}: quadrature {quad} vs {want}")
        })?;
        ensure((lib - want).abs() < 1e-6, || {
            format!("{kind}: library {lib} vs {want}")
        })?;
        detail.push(format!("{kind} |q-c|={:.1e}", (quad - want).abs()));
    }
    Ok(detail.join(", "))
}

fn oracle_equivalence() -> Outcome {
    let mut rng = CounterRng::new(2024);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let n = 1 + rng.below(500) as usize;
        let d = 1 + rng.below(8) as usize;
        let c = 1 + rng.below(4) as usize;
        let kind = KernelKind::ALL[rng.below(3) as usize];
        let h = rng.uniform_range(0.3, 1.5) * (d as f64).sqrt();
        let data: Vec<f32> = (0..n * d)
            .map(|_| rng.uniform_range(-2.0, 2.0) as f32)
            .collect();
        let labels: Vec<u32> = (0..n).map(|_| rng.below(c as u64) as u32).collect();
        let ds = ok(EmbeddingDataset::new(
            ok(PointMatrix::new(d, data))?,
            labels,
            c,
        ))?;
        let kernel = ok(KernelSpec::new(kind, h, d))?;
        let opts = FitOptions {
            index: IndexConfig::exact(n),
            ..FitOptions::default()
        };
        let model = ok(NuqModel::fit(ds.clone(), kernel, opts))?;
        let index = ok(Index::build(ds.points(), &IndexConfig::exact(n)))?;
        for _ in 0..3 {
            let x: Vec<f32> = (0..d)
                .map(|_| rng.uniform_range(-2.5, 2.5) as f32)
                .collect();
            let mut per_class = vec![0.0; c];
            for (row, &y) in ds.points().iter_rows().zip(ds.labels()) {
                let w: f64 = row
                    .iter()
                    .zip(&x)
                    .map(|(&a, &b)| profile(kind, (f64::from(a) - f64::from(b)) / h))
                    .product();
                per_class[y as usize] += w;
            }
            let total: f64 = per_class.iter().sum();
            ensure(total > 0.0, || {
                format!("case {case}: oracle weights vanished")
            })?;
            let probs = ok(model.conditional_probs(&x))?;
            for (k, (&got, &w)) in probs.probs.iter().zip(&per_class).enumerate() {
                let want = w / total;
                let rel = (got - want).abs() / want.abs().max(1e-300);
                let rel = if want == 0.0 { got.abs() } else { rel };
                worst = worst.max(rel);
                ensure(rel <= 1e-12, || {
                    format!("case {case} class {k}: {got} vs {want}")
                })?;
            }
            let kde_want = total / (n as f64 * h.powi(d as i32));
            let nb = ok(index.query(&x, n))?;
            let kde_got = ok(kde_density(&kernel, ds.points(), &nb, n, &x))?;
            let model_density = ok(model.density(&x))?;
            for got in [kde_got, model_density] {
                let rel = (got - kde_want).abs() / kde_want;
                worst = worst.max(rel);
                ensure(rel <= 1e-12, || {
                    format!("case {case}: kde {got} vs {kde_want}")
                })?;
            }
        }
    }
    Ok(format!("200 instances, worst relative error {worst:.2e}"))
}

fn roc_auc_correctness() -> Outcome {
    let mut rng = CounterRng::new(7);
    for case in 0..100 {
        let n_in = 1 + rng.below(100) as usize;
        let n_out = 1 + rng.below(100) as usize;
        let levels = 1 + rng.below(12);
        let draw = |r: &mut CounterRng| {
            if r.bernoulli(0.05) {
                f64::INFINITY
            } else {
                r.below(levels) as f64 * 0.25
            }
        };
        let a: Vec<f64> = (0..n_in).map(|_| draw(&mut rng)).collect();
        let b: Vec<f64> = (0..n_out).map(|_| draw(&mut rng)).collect();
        let mut twice_u: u64 = 0;
        for &o in &b {
            for &i in &a {
                twice_u += if o > i {
                    2
                } else if o == i {
                    1
                } else {
                    0
                };
            }
        }
        let brute = (twice_u as f64 / 2.0) / (n_in as f64 * n_out as f64);
        let fast = ok(roc_auc(&a, &b))?;
        ensure(fast == brute, || {
            format!("case {case}: {fast} vs pair count {brute}")
        })?;
    }
    Ok("100 tied instances identical to pair counting".into())
}

fn gauss3_toy() -> Outcome {
    let toy = Gauss3::default();
    let grid: Vec<f32> = (0..200)
        .map(|i| (-2.2 + 5.5 * i as f64 / 199.0) as f32)
        .collect();
    let h = 0.1;
    let n = 5000;
    let reps = 20;
    let mut err = vec![0.0; grid.len()];
    let mut ue = vec![0.0; grid.len()];
    let mut ua = vec![0.0; grid.len()];
    for seed in 0..reps {
        let ds = ok(toy.generate(n, seed))?;
        let opts = FitOptions {
            index: IndexConfig::exact(n),
            ..FitOptions::default()
        };
        let model = ok(NuqModel::fit(
            ds,
            ok(KernelSpec::new(KernelKind::Gaussian, h, 1))?,
            opts,
        ))?;
        let queries = ok(PointMatrix::new(1, grid.clone()))?;
        for (i, r) in ok(model.score_batch(&queries))?.iter().enumerate() {
            let eta = toy.eta_at(f64::from(grid[i]));
            err[i] += (r.probs.probs[1] - eta).abs() / reps as f64;
            ue[i] += r.epistemic / reps as f64;
            ua[i] += r.aleatoric / reps as f64;
        }
    }
    let rho = ok(spearman(&ue, &err))?;
    let density: Vec<f64> = grid.iter().map(|&x| toy.density(f64::from(x))).collect();
    let mut sorted = density.clone();
    sorted.sort_by(f64::total_cmp);
    let cut = sorted[sorted.len() / 5];
    let mut worst: f64 = 0.0;
    for i in (0..grid.len()).filter(|&i| density[i] > cut) {
        let eta = toy.eta_at(f64::from(grid[i]));
        worst = worst.max((ua[i] - eta.min(1.0 - eta)).abs());
    }
    ensure(rho >= 0.8, || {
        format!("spearman(U_e, |eta_hat - eta|) = {rho:.4} < 0.8")
    })?;
    ensure(worst <= 0.05, || {
        format!("max |U_a - min(eta, 1-eta)| = {worst:.4} > 0.05")
    })?;
    Ok(format!(
        "spearman {rho:.4}, worst aleatoric gap {worst:.4} (h = {h})"
    ))
}

/// Distance from `p` to the noiseless upper (`class 0`) or lower arc.
fn arc_distance(p: &[f32], class: u32) -> f64 {
    let (cx, cy, upper) = if class == 0 {
        (0.0, 0.0, true)
    } else {
        (1.0, 0.5, false)
    };
    let (qx, qy) = (f64::from(p[0]) - cx, f64::from(p[1]) - cy);
    let on_side = if upper { qy >= 0.0 } else { qy <= 0.0 };
    if on_side {
        ((qx * qx + qy * qy).sqrt() - 1.0).abs()
    } else {
        let d1 = ((qx - 1.0).powi(2) + qy * qy).sqrt();
        let d2 = ((qx + 1.0).powi(2) + qy * qy).sqrt();
        d1.min(d2)
    }
}

fn two_moons_ood() -> Outcome {
    let train = ok(gen_two_moons(2000, 0.1, 0))?;
    let tuned = ok(tune_bandwidth(&train, &TuneConfig::default()))?;
    let h = tuned.best_bandwidth;
    let c = centroid(train.points());
    let model = ok(NuqModel::fit(
        train,
        ok(KernelSpec::new(KernelKind::Gaussian, h, 2))?,
        FitOptions::default(),
    ))?;
    let held = ok(gen_two_moons(2000, 0.1, 1))?;
    let ind = ok(model.score_batch(held.points()))?;
    let ring = ok(gen_ring_ood(1000, 6.0, 9.0, [c[0], c[1]], 2))?;
    let ood = ok(model.score_batch(&ring))?;
    let ue_in: Vec<f64> = ind.iter().map(|r| r.epistemic).collect();
    let ue_out: Vec<f64> = ood.iter().map(|r| r.epistemic).collect();
    let auc = ok(roc_auc(&ue_in, &ue_out))?;

    let near = ok(gen_ring_ood(1000, 2.0, 3.0, [c[0], c[1]], 3))?;
    let near_out: Vec<f64> = ok(model.score_batch(&near))?
        .iter()
        .map(|r| r.epistemic)
        .collect();
    let near_auc = ok(roc_auc(&ue_in, &near_out))?;

    let (mut band, mut rest) = (Vec::new(), Vec::new());
    for (p, r) in held.points().iter_rows().zip(&ind) {
        if (arc_distance(p, 0) - arc_distance(p, 1)).abs() < 0.2 {
            band.push(r.aleatoric);
        } else {
            rest.push(r.aleatoric);
        }
    }
    ensure(!band.is_empty() && !rest.is_empty(), || {
        "empty boundary band".into()
    })?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mb, mr) = (mean(&band), mean(&rest));
    ensure(auc >= 0.99, || format!("epistemic ROC-AUC {auc:.4} < 0.99"))?;
    ensure(mb >= 2.0 * mr, || {
        format!("boundary aleatoric {mb:.4} < 2 x {mr:.4}")
    })?;
    Ok(format!(
        "h {h:.4}, epistemic AUC {auc:.4} (ring r in [6, 9]; r in [2, 3] gives {near_auc:.4}), \
         band/rest aleatoric {mb:.4}/{mr:.5} over {} band points",
        band.len()
    ))
}

fn excess_config(grid: &PointMatrix, beta: f64) -> Result<ExcessRiskConfig, String> {
    Ok(ExcessRiskConfig {
        sizes: vec![500, 2000, 8000],
        seeds: (0..40).collect(),
        grid: grid.clone(),
        kernel: KernelKind::Gaussian,
        // Silverman's constant for sd 0.2
        bandwidth_scale: 1.06 * StepToy::SD,
        index: IndexConfig::exact(usize::MAX),
        reject: ok(RejectConfig::new(0.2, beta, 2))?,
    })
}

fn check_monotone(label: &str, curve: &[ExcessRiskAtN]) -> Result<String, String> {
    for w in curve.windows(2) {
        let slack = w[0].nuq.se.max(w[1].nuq.se);
        ensure(w[1].nuq.mean <= w[0].nuq.mean + slack, || {
            format!(
                "{label}: excess risk rises from {:.5} (N={}) to {:.5} (N={}) beyond one se {slack:.5}",
                w[0].nuq.mean, w[0].n, w[1].nuq.mean, w[1].n
            )
        })?;
    }
    Ok(curve
        .iter()
        .map(|r| format!("{:.5}", r.nuq.mean))
        .collect::<Vec<_>>()
        .join(" -> "))
}

fn reject_consistency() -> Outcome {
    let toy = StepToy::default();
    let grid = ok(PointMatrix::new(1, vec![0.1, 0.3, 0.5, 0.95]))?;
    let dense = ok(PointMatrix::new(
        1,
        (0..37).map(|i| 0.05 + 0.025 * i as f32).collect(),
    ))?;

    let curve = ok(excess_risk_curve(&toy, &excess_config(&grid, 0.05)?))?;
    let coarse = check_monotone("evaluation grid", &curve)?;
    let dense_curve = ok(excess_risk_curve(&toy, &excess_config(&dense, 0.05)?))?;
    let fine = check_monotone("dense grid", &dense_curve)?;
    for r in &curve {
        let (a, b) = (r.nuq.per_point_mean[3], r.plugin.per_point_mean[3]);
        ensure(a <= b, || {
            format!("x=0.95, N={}: NUQ excess {a} > plug-in {b}", r.n)
        })?;
    }

    // beta = 0.5 must reproduce the plug-in rule decision by decision
    let half = ok(RejectConfig::new(0.2, 0.5, 2))?;
    let mut compared = 0;
    for &n in &[500usize, 2000, 8000] {
        for seed in 0..5 {
            let data = ok(toy.generate(n, seed))?;
            let h = 1.06 * StepToy::SD * (n as f64).powf(-0.2);
            let opts = FitOptions {
                index: IndexConfig::exact(n),
                ..FitOptions::default()
            };
            let model = ok(NuqModel::fit(
                data,
                ok(KernelSpec::new(KernelKind::Gaussian, h, 1))?,
                opts,
            ))?;
            for x in grid.iter_rows().chain(dense.iter_rows()) {
                let a = ok(abstain(&model, x, &half))?;
                let b = ok(chow_plugin_abstain(&model, x, 0.2))?;
                ensure(a == b, || {
                    format!("beta=0.5 differs from plug-in at x={}, N={n}", x[0])
                })?;
                compared += 1;
            }
        }
    }
    let dense_half = ok(excess_risk_curve(&toy, &excess_config(&dense, 0.5)?))?;
    for r in &dense_half {
        ensure(r.nuq.per_point_mean == r.plugin.per_point_mean, || {
            format!("beta=0.5 excess differs from plug-in at N={}", r.n)
        })?;
    }
    Ok(format!(
        "mean excess {coarse} (grid), {fine} (dense grid); x=0.95 NUQ <= plug-in; beta=0.5 identical on {compared} decisions"
    ))
}

fn gaussian_points(n: usize, d: usize, seed: u64) -> (PointMatrix, Vec<u32>) {
    let mut rng = CounterRng::new(seed);
    let data: Vec<f32> = (0..n * d).map(|_| rng.standard_normal() as f32).collect();
    let labels = data
        .chunks(d)
        .map(|r| {
            u32::from(f64::from(r[0]) + 0.5 * f64::from(r[1]) + 0.3 * rng.standard_normal() > 0.0)
        })
        .collect();
    (PointMatrix::new(d, data).expect("finite"), labels)
}

fn hnsw_fidelity() -> Outcome {
    let (points, labels) = gaussian_points(10_000, 16, 0);
    let ds = ok(EmbeddingDataset::new(points, labels, 2))?;
    let (queries, _) = gaussian_points(1000, 16, 1);
    let h = 0.2 * median_pairwise_distance(&ds, 0);
    let kernel = ok(KernelSpec::new(KernelKind::Gaussian, h, 16))?;
    let exact = ok(NuqModel::fit(
        ds.clone(),
        kernel,
        FitOptions {
            index: IndexConfig::exact(32),
            ..FitOptions::default()
        },
    ))?;
    let approx = ok(NuqModel::fit(
        ds,
        kernel,
        FitOptions {
            index: IndexConfig::hnsw(32),
            ..FitOptions::default()
        },
    ))?;
    let mut hits = 0;
    for x in queries.iter_rows() {
        let a = ok(exact.index().query(x, 32))?;
        let b = ok(approx.index().query(x, 32))?;
        hits += b.ids.iter().filter(|i| a.ids.contains(i)).count();
    }
    let recall = hits as f64 / (32.0 * queries.rows() as f64);
    let ut = |m: &NuqModel| -> Result<Vec<f64>, String> {
        Ok(ok(m.score_batch(&queries))?
            .iter()
            .map(|r| r.total)
            .collect())
    };
    let rho = ok(spearman(&ut(&exact)?, &ut(&approx)?))?;
    ensure(recall >= 0.95, || format!("recall@32 {recall:.4} < 0.95"))?;
    ensure(rho >= 0.99, || format!("U_t spearman {rho:.5} < 0.99"))?;
    Ok(format!("recall@32 {recall:.4}, U_t spearman {rho:.5}"))
}

#[derive(Debug, Clone)]
struct Instance {
    dim: usize,
    classes: usize,
    points: Vec<f32>,
    labels: Vec<u32>,
    h: f64,
    kind: KernelKind,
    query: Vec<f32>,
}

fn instance(max_classes: usize) -> impl Strategy<Value = Instance> {
    (1usize..4, 1usize..=max_classes, 2usize..40)
        .prop_flat_map(|(dim, classes, n)| {
            (
                Just(dim),
                Just(classes),
                proptest::collection::vec(-3.0f32..3.0, n * dim),
                proptest::collection::vec(0..classes as u32, n),
                0.1f64..3.0,
                0usize..3,
                proptest::collection::vec(-4.0f32..4.0, dim),
            )
        })
        .prop_map(|(dim, classes, points, labels, h, k, query)| Instance {
            dim,
            classes,
            points,
            labels,
            h,
            kind: KernelKind::ALL[k],
            query,
        })
}

impl Instance {
    fn dataset(&self) -> EmbeddingDataset {
        let pts = PointMatrix::new(self.dim, self.points.clone()).expect("finite");
        EmbeddingDataset::new(pts, self.labels.clone(), self.classes).expect("valid labels")
    }

    fn model(&self, ds: EmbeddingDataset, neighbors: usize) -> NuqModel {
        let kernel = KernelSpec::new(self.kind, self.h, self.dim).expect("valid kernel");
        let opts = FitOptions {
            index: IndexConfig::exact(neighbors),
            ..FitOptions::default()
        };
        NuqModel::fit(ds, kernel, opts).expect("fit")
    }
}

fn run_property(
    name: &str,
    strategy: impl Strategy<Value = Instance>,
    test: impl Fn(Instance) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(ProptestConfig {
        cases: 1000,
        failure_persistence: None,
        ..ProptestConfig::default()
    });
    runner
        .run(&strategy, test)
        .map_err(|e| format!("{name}: {e}"))
}

fn invariant_suite() -> Outcome {
    run_property("U_t = U_a + U_e", instance(4), |inst| {
        let m = inst.model(inst.dataset(), 16);
        let r = m.uncertainties(&inst.query).unwrap();
        prop_assert_eq!(r.total, r.aleatoric + r.epistemic);
        let scaled = 2.0 * (2.0 / PI).sqrt() * r.tau;
        prop_assert!(r.epistemic == scaled || (r.epistemic - scaled).abs() <= 1e-15 * scaled);
        Ok(())
    })?;
    run_property(
        "binary formula identity",
        instance(2).prop_map(|mut i| {
            i.classes = 2;
            i
        }),
        |inst| {
            let m = inst.model(inst.dataset(), 16);
            let r = m.uncertainties(&inst.query).unwrap();
            let eta = r.probs.probs[1];
            prop_assert_eq!(r.aleatoric, 1.0 - r.probs.probs[0].max(eta));
            prop_assert!((r.aleatoric - eta.min(1.0 - eta)).abs() <= 1e-15);
            Ok(())
        },
    )?;
    run_property("training-order permutation", instance(4), |inst| {
        let ds = inst.dataset();
        let n = ds.len();
        let mut order: Vec<usize> = (0..n).collect();
        CounterRng::new(inst.points.len() as u64).shuffle(&mut order);
        let shuffled = ds.select(&order).unwrap();
        for k in [5, n] {
            let a = inst
                .model(ds.clone(), k)
                .uncertainties(&inst.query)
                .unwrap();
            let b = inst
                .model(shuffled.clone(), k)
                .uncertainties(&inst.query)
                .unwrap();
            prop_assert_eq!(a, b);
        }
        Ok(())
    })?;
    run_property("beta/lambda monotonicity", instance(4), |inst| {
        let m = inst.model(inst.dataset(), 16);
        let r = m.uncertainties(&inst.query).unwrap();
        let betas = [0.01, 0.05, 0.1, 0.3, 0.5];
        let lambdas = [0.05, 0.1, 0.3, 0.6, 0.9];
        let classes = inst.classes;
        let accepted = |beta: f64, lambda: f64| {
            let cfg = RejectConfig::new(lambda, beta, classes).unwrap();
            let z = cfg.z_value(classes).unwrap();
            !decide(&r, z, lambda).is_reject()
        };
        for (i, &b) in betas.iter().enumerate() {
            for (j, &l) in lambdas.iter().enumerate() {
                if accepted(b, l) {
                    for &b2 in &betas[i..] {
                        prop_assert!(accepted(b2, l), "accept at beta {} but not {}", b, b2);
                    }
                    for &l2 in &lambdas[j..] {
                        prop_assert!(accepted(b, l2), "accept at lambda {} but not {}", l, l2);
                    }
                }
            }
        }
        Ok(())
    })?;
    run_property(
        "density gate",
        instance(4).prop_map(|mut i| {
            // push the query far enough that every kernel weight underflows
            i.query.iter_mut().for_each(|q| *q += 1e4);
            i.h = i.h.min(0.5);
            i
        }),
        |inst| {
            let m = inst.model(inst.dataset(), 16);
            for beta in [0.01, 0.2, 0.5] {
                let cfg = RejectConfig::new(0.99, beta, inst.classes).unwrap();
                let d = abstain(&m, &inst.query, &cfg).unwrap();
                prop_assert!(d.is_reject() && d.density_gate_failed);
            }
            let r = m.uncertainties(&inst.query).unwrap();
            prop_assert!(r.out_of_support && r.density == 0.0);
            Ok(())
        },
    )?;
    Ok("5 properties x 1000 cases".into())
}

fn blobs(n: usize, seed: u64) -> EmbeddingDataset {
    let mut rng = CounterRng::new(seed);
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = (i % 3) as u32;
        let angle = 2.0 * PI * f64::from(c) / 3.0;
        data.push((2.0 * angle.cos() + 0.7 * rng.standard_normal()) as f32);
        data.push((2.0 * angle.sin() + 0.7 * rng.standard_normal()) as f32);
        labels.push(c);
    }
    EmbeddingDataset::new(PointMatrix::new(2, data).expect("finite"), labels, 3).expect("valid")
}

struct Softmax {
    w: [[f64; 3]; 3],
}

impl Softmax {
    fn logits(&self, x: &[f32]) -> [f64; 3] {
        let f = [f64::from(x[0]), f64::from(x[1]), 1.0];
        let mut out = [0.0; 3];
        for (o, row) in out.iter_mut().zip(&self.w) {
            *o = row.iter().zip(&f).map(|(a, b)| a * b).sum();
        }
        out
    }

    fn predict(&self, x: &[f32]) -> usize {
        let l = self.logits(x);
        (0..3).fold(0, |best, c| if l[c] > l[best] { c } else { best })
    }

    fn train(ds: &EmbeddingDataset, epochs: usize, lr: f64) -> Self {
        let mut model = Softmax { w: [[0.0; 3]; 3] };
        for _ in 0..epochs {
            let mut grad = [[0.0; 3]; 3];
            for (x, &y) in ds.points().iter_rows().zip(ds.labels()) {
                let l = model.logits(x);
                let top = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e = l.map(|v| (v - top).exp());
                let z: f64 = e.iter().sum();
                let f = [f64::from(x[0]), f64::from(x[1]), 1.0];
                for (c, row) in grad.iter_mut().enumerate() {
                    let g = e[c] / z - if c as u32 == y { 1.0 } else { 0.0 };
                    for (acc, fj) in row.iter_mut().zip(&f) {
                        *acc += g * fj;
                    }
                }
            }
            for (row, g) in model.w.iter_mut().zip(&grad) {
                for (w, gj) in row.iter_mut().zip(g) {
                    *w -= lr * gj / ds.len() as f64;
                }
            }
        }
        model
    }
}

fn agreement_sanity() -> Outcome {
    let train = blobs(3000, 0);
    let test = blobs(3000, 1);
    let clf = Softmax::train(&train, 500, 0.5);
    let external: Vec<usize> = test.points().iter_rows().map(|x| clf.predict(x)).collect();
    let h = ok(tune_bandwidth(&train, &TuneConfig::default()))?.best_bandwidth;
    let model = ok(NuqModel::fit(
        train,
        ok(KernelSpec::new(KernelKind::Gaussian, h, 2))?,
        FitOptions::default(),
    ))?;
    let reports = ok(model.score_batch(test.points()))?;
    let ours: Vec<usize> = reports.iter().map(|r| r.predicted_class).collect();
    let agree = ok(agreement(&ours, &external))?;
    let ua: Vec<f64> = reports.iter().map(|r| r.aleatoric).collect();
    let mut sorted = ua.clone();
    sorted.sort_by(f64::total_cmp);
    let p80 = sorted[(0.8 * (sorted.len() - 1) as f64).round() as usize];
    let disagree: Vec<f64> = (0..ours.len())
        .filter(|&i| ours[i] != external[i])
        .map(|i| ua[i])
        .collect();
    ensure(agree >= 0.95, || format!("agreement {agree:.4} < 0.95"))?;
    let mean_dis = if disagree.is_empty() {
        f64::NAN
    } else {
        disagree.iter().sum::<f64>() / disagree.len() as f64
    };
    ensure(disagree.is_empty() || mean_dis > p80, || {
        format!("disagreeing mean U_a {mean_dis:.4} <= 80th percentile {p80:.4}")
    })?;
    Ok(format!(
        "agreement {agree:.4}, {} disagreements with mean U_a {mean_dis:.4} vs 80th percentile {p80:.4}",
        disagree.len()
    ))
}

fn main() {
    let criteria = [
        Criterion {
            name: "kernel constants",
            budget: Duration::from_secs(1),
            run: kernel_constants,
        },
        Criterion {
            name: "oracle equivalence",
            budget: Duration::from_secs(10),
            run: oracle_equivalence,
        },
        Criterion {
            name: "roc-auc correctness",
            budget: Duration::from_secs(5),
            run: roc_auc_correctness,
        },
        Criterion {
            name: "gauss3 toy",
            budget: Duration::from_secs(120),
            run: gauss3_toy,
        },
        Criterion {
            name: "two moons ood",
            budget: Duration::from_secs(60),
            run: two_moons_ood,
        },
        Criterion {
            name: "reject-option consistency",
            budget: Duration::from_secs(300),
            run: reject_consistency,
        },
        Criterion {
            name: "hnsw fidelity",
            budget: Duration::from_secs(60),
            run: hnsw_fidelity,
        },
        Criterion {
            name: "invariant suite",
            budget: Duration::from_secs(120),
            run: invariant_suite,
        },
        Criterion {
            name: "agreement sanity",
            budget: Duration::from_secs(60),
            run: agreement_sanity,
        },
    ];

    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.budget => {
                Err(format!("{detail}; over budget {:?}", c.budget))
            }
            other => other,
        };
        match outcome {
            Ok(detail) => println!(
                "PASS {} [{:.2?} / {:?}]: {detail}",
                c.name, elapsed, c.budget
            ),
            Err(why) => {
                failures += 1;
                println!("FAIL {} [{:.2?} / {:?}]: {why}", c.name, elapsed, c.budget);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        criteria.len() - failures
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
