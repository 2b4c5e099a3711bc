//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Pass criterion numbers as arguments to run a subset.

use std::time::Instant;

use dcm_core::diffusion::{ddim_decode, ddim_encode, DiffusionConfig, NoiseSchedule, ParentAffine, ZeroPredictor};
use dcm_core::engine::regress::RegressorKind;
use dcm_core::engine::{AnmConfig, AnmModel, DcmModel};
use dcm_core::eval::{
    auto_intervention_nodes, eval_counterfactual, mean_std, run_benchmark, BenchmarkConfig, BenchmarkReport,
    EvalSettings, Metric, ModelKind,
};
use dcm_core::graph::{CausalGraph, GraphKind};
use dcm_core::metrics::{median_bandwidth, mmd_rbf, KernelSpec};
use dcm_core::nn::Mlp;
use dcm_core::scm::{gather_columns, select_columns, GroundTruthScm, Mechanism, SemKind, StructuralEquation};
use dcm_core::seed;
use dcm_core::theory::{
    additive_scenario, counterfactual_bound_check, default_u_grid, encoding_independence_report, lemma_families,
    EncodingSource,
};
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn summary(report: &BenchmarkReport, model: ModelKind, metric: Metric) -> (f64, f64) {
    let s = report.summary_for(model, metric).expect("summary present");
    (s.mean.unwrap_or(f64::NAN), s.std.unwrap_or(f64::NAN))
}

fn failed_cells(report: &BenchmarkReport) -> Vec<String> {
    report.cells.iter().filter_map(|c| c.note.clone()).collect()
}

/// Chain NLIN, five seeds, DCM only. Shared by the first two criteria.
fn chain_benchmark() -> (BenchmarkReport, f64) {
    let config = BenchmarkConfig { models: vec![ModelKind::Dcm], ..BenchmarkConfig::default() };
    assert_eq!(config.n_train, 2000);
    assert_eq!(config.dcm.epochs, 200);
    assert_eq!(config.dcm.steps, 100);
    let started = Instant::now();
    let report = run_benchmark(&config).expect("benchmark runs");
    (report, started.elapsed().as_secs_f64())
}

fn criterion_1(report: &BenchmarkReport, seconds: f64) -> Outcome {
    let (mean, std) = summary(report, ModelKind::Dcm, Metric::CfMse);
    let failures = failed_cells(report);
    outcome(
        mean < 0.05 && seconds < 900.0 && failures.is_empty(),
        format!(
            "chain NLIN DCM CF MSE {mean:.5} ± {std:.5} (< 0.05; reference 0.0033 ± 0.0016), runtime {seconds:.0} s (< 900 s){}",
            if failures.is_empty() { String::new() } else { format!(", failed cells: {failures:?}") }
        ),
    )
}

fn criterion_2(report: &BenchmarkReport) -> Outcome {
    let (obs, obs_std) = summary(report, ModelKind::Dcm, Metric::ObsMmd);
    let (int, int_std) = summary(report, ModelKind::Dcm, Metric::IntMmd);
    outcome(
        obs < 0.02 && int < 0.06,
        format!(
            "chain NLIN DCM obs MMD {obs:.5} ± {obs_std:.5} (< 0.02; reference 0.0027), int MMD {int:.5} ± {int_std:.5} (< 0.06; reference 0.0171)"
        ),
    )
}

fn criterion_3() -> Outcome {
    let config = BenchmarkConfig {
        graph_kind: GraphKind::Triangle,
        sem_kind: SemKind::Nadd,
        models: vec![ModelKind::Dcm, ModelKind::Anm],
        ..BenchmarkConfig::default()
    };
    let report = run_benchmark(&config).expect("benchmark runs");
    let dcm = report.values(ModelKind::Dcm, Metric::CfMse);
    let anm = report.values(ModelKind::Anm, Metric::CfMse);
    let (dm, ds) = mean_std(&dcm).unwrap_or((f64::NAN, f64::NAN));
    let (am, as_) = mean_std(&anm).unwrap_or((f64::NAN, f64::NAN));
    // standard error of the difference of the two cross-seed means
    let se = (ds * ds / dcm.len() as f64 + as_ * as_ / anm.len() as f64).sqrt();
    outcome(
        dcm.len() == 5 && anm.len() == 5 && dm < am && am - dm > se,
        format!(
            "triangle NADD CF MSE DCM {dm:.4} ± {ds:.4} vs ANM {am:.4} ± {as_:.4}; gap {:.4} vs standard error {se:.4} (reference x100: 26.28 vs 97.25)",
            am - dm
        ),
    )
}

/// `X1 = U1`, `X2 = 1.5 X1 - 0.3 + U2`, `X3 = 0.7 X1 - 0.9 X2 + 0.2 + U3`.
fn linear_triangle() -> GroundTruthScm {
    let graph = CausalGraph::triangle(1);
    let eq = |mechanism| StructuralEquation { mechanism, scale: vec![1.0] };
    let mut scm = GroundTruthScm::new(
        graph,
        vec![
            eq(Mechanism::Root),
            eq(Mechanism::Linear { weights: vec![1.5], bias: vec![-0.3], noise_scale: 1.0 }),
            eq(Mechanism::Linear { weights: vec![0.7, -0.9], bias: vec![0.2], noise_scale: 1.0 }),
        ],
    )
    .expect("valid linear SCM");
    // same unit-variance scaling as the benchmark SCMs
    scm.normalize(&mut seed::stream(0, "normalize", 0));
    scm
}

fn criterion_4() -> Outcome {
    let scm = linear_triangle();
    let config = AnmConfig { menu: vec![RegressorKind::Ridge], ..AnmConfig::default() };
    let settings = EvalSettings::default();
    let mut scores = vec![];
    let mut selected = true;
    for s in 0..5u64 {
        let train = scm.sample_observational(2000, &mut seed::stream(s, "train-data", 0)).values;
        let model = AnmModel::fit(scm.graph(), train.view(), &config, seed::child_seed(s, "anm", 0)).expect("fit");
        selected &= scm.graph().non_roots().iter().all(|&n| model.regressor(n).and_then(|r| r.kind()) == Some(RegressorKind::Ridge));
        let nodes = auto_intervention_nodes(Some(GraphKind::Triangle), scm.graph(), s);
        let score = eval_counterfactual(&model, &scm, train.view(), &nodes, &settings, s).expect("eval");
        scores.push(score.value.unwrap_or(f64::INFINITY));
    }
    let worst = scores.iter().copied().fold(0.0, f64::max);
    // the remaining error is coefficient estimation variance, which shrinks like 1/n
    let large = {
        let train = scm.sample_observational(20_000, &mut seed::stream(0, "train-data", 0)).values;
        let model = AnmModel::fit(scm.graph(), train.view(), &config, seed::child_seed(0, "anm", 0)).expect("fit");
        let nodes = auto_intervention_nodes(Some(GraphKind::Triangle), scm.graph(), 0);
        eval_counterfactual(&model, &scm, train.view(), &nodes, &settings, 0).expect("eval").value.unwrap_or(f64::INFINITY)
    };
    outcome(
        selected && worst < 1e-3,
        format!(
            "linear-additive triangle, ridge ANM CF MSE per seed [{}]; max {worst:.2e} (< 1e-3); n=20000 seed 0: {large:.2e}",
            scores.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn max_abs_diff(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn criterion_5() -> Outcome {
    let schedule = NoiseSchedule::linear(100, 1e-4, 0.1).expect("schedule");
    let mut rng = seed::stream(5, "ddim-check", 0);
    let (n, dim, parent_dim) = (1000, 2, 3);
    let x = Array2::from_shape_fn((n, dim), |_| 2.0 * rng.sample::<f64, _>(StandardNormal));
    let pa = Array2::from_shape_fn((n, parent_dim), |_| rng.sample::<f64, _>(StandardNormal));
    let zero = {
        let z = ddim_encode(&schedule, &ZeroPredictor, x.view(), pa.view());
        max_abs_diff(ddim_decode(&schedule, &ZeroPredictor, z.view(), pa.view()).view(), x.view())
    };
    let mut affine = 0.0f64;
    for k in 0..10 {
        let eps = ParentAffine::random(dim, parent_dim, 1.0, &mut rng);
        let rows = ndarray::s![k * 100..(k + 1) * 100, ..];
        let z = ddim_encode(&schedule, &eps, x.slice(rows), pa.slice(rows));
        affine = affine.max(max_abs_diff(ddim_decode(&schedule, &eps, z.view(), pa.slice(rows)).view(), x.slice(rows)));
    }

    // trained chain models, held-out reconstruction
    let scm = GroundTruthScm::fixed(GraphKind::Chain, SemKind::Nlin).expect("chain SCM");
    let train = scm.sample_observational(2000, &mut seed::stream(0, "train-data", 0)).values;
    let test = scm.sample_observational(1000, &mut seed::stream(0, "held-out", 0)).values;
    let config = DiffusionConfig { epochs: 200, ..DiffusionConfig::default() };
    let model = DcmModel::fit(scm.graph(), train.view(), &config, 0).expect("fit");
    let graph = scm.graph();
    let (mut sq, mut count) = (0.0, 0usize);
    for node in graph.non_roots() {
        let m = model.node_models[node].as_ref().expect("non-root model");
        let cols: Vec<usize> = graph.columns(node).collect();
        let xv = select_columns(test.view(), &cols);
        let pv = gather_columns(graph, node, test.view());
        let back = m.decode(m.encode(xv.view(), pv.view()).expect("encode").view(), pv.view()).expect("decode");
        sq += back.iter().zip(xv.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        count += xv.len();
    }
    let rmse = (sq / count as f64).sqrt();
    outcome(
        zero <= 1e-9 && affine <= 1e-6 && rmse < 0.05,
        format!(
            "decode(encode(x)) max error: eps=0 {zero:.2e} (<= 1e-9), random parent-affine eps {affine:.2e} (<= 1e-6); trained chain held-out RMSE {rmse:.4} (< 0.05)"
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut ok = true;
    let mut parts = vec![];
    for delta in [0.0, 0.01, 0.1] {
        let r = counterfactual_bound_check(&additive_scenario(delta), 500, 41, 6).expect("bound check");
        let err = (r.max_counterfactual_error - delta).abs().max((r.max_reconstruction_error - delta).abs());
        ok &= err <= 1e-9 && !r.violation;
        if delta == 0.0 {
            // the unperturbed decoder reproduces the oracle counterfactual up to rounding
            ok &= r.max_counterfactual_error <= 1e-12;
        }
        parts.push(format!(
            "delta {delta}: cf {:.3e}, recon {:.3e}",
            r.max_counterfactual_error, r.max_reconstruction_error
        ));
    }
    outcome(ok, format!("{} (equal to |delta| within 1e-9)", parts.join("; ")))
}

fn criterion_7() -> Outcome {
    let grid = default_u_grid();
    let mut ok = grid.len() == 401;
    let mut parts = vec![];
    for (family, xs, expect) in lemma_families() {
        let r = dcm_core::theory::translation_lemma_check(&family, &grid, &xs).expect("lemma check");
        ok &= r.passes == expect && r.tolerance == 1e-6;
        parts.push(format!("{} {} (spread {:.1e})", family.label, if r.passes { "passes" } else { "fails" }, r.max_derivative_spread));
    }
    outcome(ok, parts.join("; "))
}

fn criterion_8() -> Outcome {
    let mut rng = seed::stream(8, "gradient-check", 0);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for _ in 0..100 {
        let depth = rng.random_range(1..=3);
        let mut sizes = vec![rng.random_range(1..=5)];
        for _ in 0..depth {
            sizes.push(rng.random_range(2..=12));
        }
        sizes.push(rng.random_range(1..=3));
        let net = Mlp::new(&sizes, &mut rng).expect("layout");
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.sample(StandardNormal)).collect();
        let up: Vec<f64> = (0..*sizes.last().unwrap()).map(|_| rng.sample(StandardNormal)).collect();
        let objective = |n: &Mlp, input: &[f64]| -> f64 {
            n.apply(input).expect("forward").iter().zip(&up).map(|(o, u)| o * u).sum()
        };
        let g = net.grad(&x, &up).expect("grad");
        let mut compare = |fd: f64, analytic: f64| {
            let scale = fd.abs().max(analytic.abs());
            // below 1e-6 the central difference itself is only good to ~1e-10
            let err = if scale > 1e-6 { (fd - analytic).abs() / scale } else { (fd - analytic).abs() / 1e-6 };
            worst = worst.max(err);
            checked += 1;
        };
        for i in 0..net.num_params() {
            let mut plus = net.clone();
            plus.params_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[i] -= h;
            compare((objective(&plus, &x) - objective(&minus, &x)) / (2.0 * h), g.params[i]);
        }
        for j in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += h;
            xm[j] -= h;
            compare((objective(&net, &xp) - objective(&net, &xm)) / (2.0 * h), g.input[[0, j]]);
        }
    }
    outcome(worst < 1e-4, format!("100 random nets, {checked} partials, max relative error {worst:.2e} (< 1e-4)"))
}

/// Textbook double sums, each kernel mean over its own index set.
fn brute_force_mmd(x: &[Vec<f64>], y: &[Vec<f64>], sigma: f64) -> f64 {
    let k = |a: &Vec<f64>, b: &Vec<f64>| {
        let d: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
        (-d / (2.0 * sigma * sigma)).exp()
    };
    let mean_over = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        let (mut s, mut c) = (0.0, 0.0);
        for (i, p) in a.iter().enumerate() {
            for (j, q) in b.iter().enumerate() {
                if i != j {
                    s += k(p, q);
                    c += 1.0;
                }
            }
        }
        s / c
    };
    mean_over(x, x) + mean_over(y, y) - 2.0 * mean_over(x, y)
}

fn criterion_9() -> Outcome {
    let mut rng = seed::stream(9, "mmd-oracle", 0);
    let mut worst = 0.0f64;
    let mut self_zero = true;
    for trial in 0..50 {
        let (m, n) = if trial % 2 == 0 { (10, 10) } else { (10, 7 + trial % 5) };
        let d = 1 + trial % 3;
        let shift = trial as f64 * 0.05;
        let x: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let y: Vec<Vec<f64>> =
            (0..n).map(|_| (0..d).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect()).collect();
        let to_arr = |v: &[Vec<f64>]| Array2::from_shape_fn((v.len(), d), |(i, j)| v[i][j]);
        let (xa, ya) = (to_arr(&x), to_arr(&y));
        let pooled: Vec<Vec<f64>> = x.iter().chain(&y).cloned().collect();
        let sigma = median_bandwidth(&pooled);
        let got = mmd_rbf(xa.view(), ya.view(), KernelSpec::MedianHeuristic).expect("mmd");
        worst = worst.max((got - brute_force_mmd(&x, &y, sigma)).abs());
        let fixed = mmd_rbf(xa.view(), ya.view(), KernelSpec::Fixed(0.8)).expect("mmd");
        worst = worst.max((fixed - brute_force_mmd(&x, &y, 0.8)).abs());
        self_zero &= mmd_rbf(xa.view(), xa.view(), KernelSpec::MedianHeuristic).expect("mmd") == 0.0;
    }
    outcome(
        worst <= 1e-12 && self_zero,
        format!("max |estimator - brute force| {worst:.2e} (<= 1e-12) over 100 comparisons; MMD(X, X) == 0 exactly: {self_zero}"),
    )
}

fn criterion_10() -> Outcome {
    let truth = encoding_independence_report(&EncodingSource::TrueNoise, 100, 0, 1000, 10).expect("true noise");
    let dependent = encoding_independence_report(&EncodingSource::Parent, 100, 0, 1000, 10).expect("parent");
    let dcm_trials = 5;
    let dcm = encoding_independence_report(
        &EncodingSource::Dcm(DiffusionConfig { epochs: 200, ..DiffusionConfig::default() }),
        dcm_trials,
        2000,
        1000,
        10,
    )
    .expect("dcm");
    outcome(
        truth.rejection_rate <= 0.15 && dependent.mean < 0.01,
        format!(
            "100 trials: true-noise rejection rate {:.2} (in [0, 0.15]), parent-encoding mean p {:.2e} (< 0.01); DCM mean p {:.3} over {dcm_trials} trials (informational; reference 0.196)",
            truth.rejection_rate, dependent.mean, dcm.mean
        ),
    )
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |k: u32| selected.is_empty() || selected.contains(&k);
    let mut results: Vec<(u32, Outcome)> = vec![];
    let mut report = |k: u32, o: Outcome| {
        println!("acceptance {k:>2} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        results.push((k, o));
    };
    if wanted(1) || wanted(2) {
        let (bench, seconds) = chain_benchmark();
        if wanted(1) {
            report(1, criterion_1(&bench, seconds));
        }
        if wanted(2) {
            report(2, criterion_2(&bench));
        }
    }
    let rest: [(u32, fn() -> Outcome); 8] = [
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    for (k, f) in rest {
        if wanted(k) {
            report(k, f());
        }
    }
    let failed: Vec<u32> = results.iter().filter(|(_, o)| !o.passed).map(|(k, _)| *k).collect();
    println!("acceptance: {} passed, {} failed", results.len() - failed.len(), failed.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
