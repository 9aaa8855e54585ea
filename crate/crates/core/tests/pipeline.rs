use std::sync::Arc;

use ising_scan::classes::{apply_signal, build_contiguous_blocks, ScanClass};
use ising_scan::detectors::{high_temp_scan_test, lattice_scan_test};
use ising_scan::model::{build_complete, build_lattice, read_graph, write_graph};
use ising_scan::oracle::exact_expectation;
use ising_scan::risk::{build_class, build_graph, run_risk, ExperimentPlan};
use ising_scan::samplers::{read_samples_csv, sample_model, write_samples_csv, ChainConfig, SamplerKind};
use ising_scan::{Boundary, ModelSpec, SpinConfiguration};

fn exact_rejection(model: &ModelSpec, reject: impl Fn(&SpinConfiguration) -> bool) -> f64 {
    exact_expectation(model, |x| reject(&SpinConfiguration::new(x.to_vec()).unwrap()) as u8 as f64).unwrap()
}

fn within(mc: f64, exact: f64, reps: usize) -> bool {
    let sd = (exact * (1.0 - exact) / reps as f64).sqrt().max(1e-3);
    (mc - exact).abs() < 4.0 * sd
}

#[test]
fn monte_carlo_rates_match_exact_rates_on_a_small_curie_weiss() {
    let plan = ExperimentPlan::from_toml(
        r#"
[model]
family = "curie_weiss"
n = 12

[class]
kind = "contiguous_blocks"
s = 3
count = 4

[test]
name = "high_temp_scan"
delta = 0.05

[sweep]
betas = [0.6]
constants = [0.7]
type1_replications = 4000
type2_replications = 4000
"#,
    )
    .unwrap();
    let report = run_risk(&plan, 21).unwrap();
    let row = &report.rows[0];

    let graph = Arc::new(build_graph(&plan.model, 21).unwrap());
    let class = build_class(&plan.class, &graph).unwrap();
    let reject = |x: &SpinConfiguration| high_temp_scan_test(x, &class, 0.05).unwrap().reject;
    let null = ModelSpec::null(graph.clone(), 0.6).unwrap();
    let alt = null.with_field(apply_signal(12, class.candidate(0), row.a.unwrap()).unwrap()).unwrap();
    let type1 = exact_rejection(&null, reject);
    let type2 = 1.0 - exact_rejection(&alt, reject);

    assert!(within(row.type1.unwrap().rate, type1, 4000), "{:?} vs {type1}", row.type1);
    assert!(within(row.worst().unwrap().type2.rate, type2, 4000), "{:?} vs {type2}", row.placements);
}

#[test]
fn lattice_rates_match_exact_rates() {
    let plan = ExperimentPlan::from_toml(
        r#"
[model]
family = "lattice"
side = 4
dim = 2
boundary = "free"

[class]
kind = "rectangle"
s = 4

[test]
name = "lattice_scan"
delta = 0.1
chi = 0.9

[sweep]
betas = [0.3]
constants = [0.0]
type1_replications = 3000
type2_replications = 1
placements = [[0, 1, 4, 5]]
"#,
    )
    .unwrap();
    let report = run_risk(&plan, 5).unwrap();
    let graph = Arc::new(build_lattice(4, 2, Boundary::Free).unwrap());
    let class = build_class(&plan.class, &graph).unwrap();
    let exact = exact_rejection(&ModelSpec::null(graph, 0.3).unwrap(), |x| lattice_scan_test(x, &class, 0.9, 0.1, None).unwrap().reject);
    assert!(within(report.rows[0].type1.unwrap().rate, exact, 3000), "{:?} vs {exact}", report.rows[0].type1);
}

#[test]
fn samples_and_graphs_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let graph = build_lattice(5, 2, Boundary::Plus).unwrap();
    let path = dir.path().join("g.txt");
    write_graph(&graph, std::fs::File::create(&path).unwrap()).unwrap();
    let back = read_graph(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    assert_eq!(back.edges(), graph.edges());

    let model = ModelSpec::null(Arc::new(graph), 0.3).unwrap();
    let mut r = ising_scan::rng::from_seed(2);
    let draws = sample_model(&model, SamplerKind::Auto, &ChainConfig::swendsen_wang_default(), 7, &mut r).unwrap();
    let mut buf = Vec::new();
    write_samples_csv(&draws, &mut buf).unwrap();
    assert_eq!(read_samples_csv(&buf[..]).unwrap(), draws);
}

#[test]
fn class_files_round_trip() {
    let class = build_contiguous_blocks(30, 5, 6).unwrap();
    let mut buf = Vec::new();
    class.write(&mut buf).unwrap();
    let back = ScanClass::read(30, &buf[..]).unwrap();
    assert_eq!(back.candidates(), class.candidates());
}

#[test]
fn chain_sampler_agrees_with_exact_sampler_on_the_complete_graph() {
    let model = ModelSpec::null(Arc::new(build_complete(10).unwrap()), 1.5).unwrap();
    let mut r = ising_scan::rng::from_seed(8);
    let glauber = sample_model(&model, SamplerKind::Glauber, &ChainConfig::glauber_default(), 20_000, &mut r).unwrap();
    let exact = ising_scan::oracle::plus_count_pmf(&model).unwrap();
    let empirical = ising_scan::samplers::empirical_plus_count_pmf(&glauber, 10);
    assert!(ising_scan::samplers::total_variation(&empirical, &exact) < 0.03);
}
