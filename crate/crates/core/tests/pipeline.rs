use dcm_core::diffusion::DiffusionConfig;
use dcm_core::engine::{CausalQueryModel, DcmModel, Factual};
use dcm_core::eval::{run_benchmark, BenchmarkConfig, BenchmarkReport, EvalSettings, Metric, ModelKind};
use dcm_core::graph::GraphKind;
use dcm_core::intervention::Interventions;
use dcm_core::scm::{GroundTruthScm, SemKind};
use dcm_core::seed;

fn small_config(models: Vec<ModelKind>) -> BenchmarkConfig {
    BenchmarkConfig {
        graph_kind: GraphKind::Triangle,
        sem_kind: SemKind::Nlin,
        n_train: 400,
        seeds: vec![0, 1],
        models,
        eval: EvalSettings { num_gammas: 3, samples_per_gamma: 50, observational_samples: 200, kernel: EvalSettings::default().kernel },
        dcm: DiffusionConfig { epochs: 20, ..DiffusionConfig::default() },
        ..BenchmarkConfig::default()
    }
}

#[test]
fn oracle_scores_zero_counterfactual_error() {
    let report = run_benchmark(&small_config(vec![ModelKind::Oracle])).unwrap();
    let cf = report.values(ModelKind::Oracle, Metric::CfMse);
    assert_eq!(cf.len(), 2);
    assert!(cf.iter().all(|&v| v == 0.0), "{cf:?}");
    assert!(report.values(ModelKind::Oracle, Metric::ObsMmd).iter().all(|&v| v < 0.05));
}

#[test]
fn benchmark_is_reproducible_and_serializable() {
    let config = small_config(vec![ModelKind::Dcm, ModelKind::Anm]);
    let a = run_benchmark(&config).unwrap();
    let b = run_benchmark(&config).unwrap();
    assert_eq!(a, b);
    let text = serde_json::to_string(&a).unwrap();
    let back: BenchmarkReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, a);
    for model in [ModelKind::Dcm, ModelKind::Anm] {
        for metric in Metric::ALL {
            let s = a.summary_for(model, metric).unwrap();
            assert_eq!(s.count, 2, "{model:?} {metric:?}");
            assert!(s.mean.unwrap().is_finite());
        }
    }
}

#[test]
fn trained_dcm_answers_every_query_type() {
    let scm = GroundTruthScm::fixed(GraphKind::Chain, SemKind::Nlin).unwrap();
    let train = scm.sample_observational(500, &mut seed::stream(0, "train-data", 0)).values;
    let config = DiffusionConfig { epochs: 30, ..DiffusionConfig::default() };
    let model = DcmModel::fit(scm.graph(), train.view(), &config, 0).unwrap();

    let iv = Interventions::from([(1, vec![0.75])]);
    let sample = model.sample(&iv, 100, &mut seed::stream(0, "query", 0)).unwrap();
    assert_eq!(sample.dim(), (100, 3));
    assert!(sample.column(1).iter().all(|&v| v == 0.75));
    assert!(sample.iter().all(|v| v.is_finite()));

    let factual = train.slice(ndarray::s![..50, ..]);
    let cf = model.counterfactual(Factual::values(factual), &iv).unwrap();
    // the root is not a descendant of the intervened node
    assert_eq!(cf.column(0), factual.column(0));
    assert!(cf.column(1).iter().all(|&v| v == 0.75));
    let echo = model.counterfactual(Factual::values(factual), &Interventions::new()).unwrap();
    assert_eq!(echo, factual);
}
