use glime::harness::{
    distribution_table, run_convergence, run_explain, run_fidelity, run_stability, Cell, Experiment, ExperimentConfig,
    OutputFormat, RunOptions, Table,
};
use glime::Error;
use serde_json::{json, Value};

fn config(extra: Value) -> Value {
    let mut base = json!({
        "model": {"kind": "linear", "coefficients": [1.0, -2.0, 0.5, 3.0], "bias": 0.1},
        "inputs": [{"values": [0.2, 0.4, -0.1, 1.0]}, {"values": [1.0, 2.0, 3.0, 4.0]}],
        "methods": ["lime", "glime_binomial"],
        "sigmas": [1.0],
        "sample_sizes": [64],
        "seeds": [0, 1, 2]
    });
    for (k, v) in extra.as_object().unwrap() {
        base[k] = v.clone();
    }
    base
}

fn prepare(v: Value) -> glime::Result<Experiment> {
    ExperimentConfig::from_json(&v.to_string())?.prepare(None)
}

fn text(table: &Table, row: usize, col: &str) -> String {
    match table.get(row, col).unwrap() {
        Cell::Text(s) => s.clone(),
        Cell::Empty => String::new(),
        other => panic!("{col} is {other:?}"),
    }
}

fn num(table: &Table, row: usize, col: &str) -> f64 {
    table.get(row, col).unwrap().as_f64().unwrap()
}

const SERIAL: RunOptions = RunOptions {
    jobs: Some(1),
    master_seed: None,
};

#[test]
fn repeated_seeds_are_a_config_error() {
    let err = prepare(config(json!({"seeds": [3, 3]}))).unwrap_err();
    assert!(matches!(err, Error::InvalidConfig(_)), "{err}");
}

#[test]
fn zero_samples_is_a_config_error() {
    let err = prepare(config(json!({"sample_sizes": [100, 0]}))).unwrap_err();
    assert!(matches!(err, Error::InvalidConfig(_)), "{err}");
}

#[test]
fn unknown_method_and_field_are_config_errors() {
    assert!(matches!(prepare(config(json!({"methods": ["dlime"]}))), Err(Error::InvalidConfig(_))));
    assert!(matches!(prepare(config(json!({"colour": 1}))), Err(Error::InvalidConfig(_))));
    assert!(matches!(
        prepare(config(json!({"inputs": [{"values": [1.0, 2.0]}]}))),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn stability_grid_has_one_row_per_cell() {
    let exp = prepare(config(json!({
        "methods": ["lime", "glime_gauss", "kernel_shap"],
        "sigmas": [0.5, 1.0],
        "sample_sizes": [32, 64],
        "lambdas": [0.0, 1.0]
    })))
    .unwrap();
    let table = run_stability(&exp, &SERIAL).unwrap();
    // 2 methods x 2 sigmas x 2 lambdas x 2 sizes, plus one exact KernelSHAP cell
    assert_eq!(table.rows.len(), 17);
    assert_eq!(text(&table, 16, "method"), "kernel_shap");
    assert!(table.get(16, "sigma").unwrap() == &Cell::Empty);
    assert!(table.get(16, "lambda").unwrap() == &Cell::Empty);
    for row in 0..table.rows.len() {
        assert_eq!(text(&table, row, "error"), "");
        let ji = num(&table, row, "mean_jaccard");
        assert!((0.0..=1.0).contains(&ji));
    }
}

#[test]
fn failed_cells_keep_their_rows() {
    // one feature: KernelSHAP has no valid coalition
    let exp = prepare(config(json!({
        "model": {"kind": "linear", "coefficients": [2.0], "bias": 0.0},
        "inputs": [{"values": [1.0]}],
        "methods": ["kernel_shap", "glime_gauss"],
        "metrics": {"k": 1}
    })))
    .unwrap();
    let table = run_stability(&exp, &SERIAL).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert!(!text(&table, 0, "error").is_empty());
    assert_eq!(table.get(0, "mean_jaccard").unwrap(), &Cell::Empty);
    assert_eq!(text(&table, 1, "error"), "");
}

#[test]
fn oracle_has_unit_fidelity_everywhere() {
    let exp = prepare(config(json!({
        "methods": ["oracle", "glime_gauss"],
        "metrics": {"epsilons": [0.1, 1.0, 5.0], "norms": ["l1", "l2", "linf"], "m": 200}
    })))
    .unwrap();
    let table = run_fidelity(&exp, &SERIAL).unwrap();
    assert_eq!(table.rows.len(), 2 * 9);
    for row in 0..9 {
        assert_eq!(text(&table, row, "method"), "oracle");
        assert!((num(&table, row, "fidelity_mean") - 1.0).abs() < 1e-12);
    }
}

#[test]
fn oracle_needs_a_linear_model() {
    let exp = prepare(config(json!({
        "model": {"kind": "quadratic", "matrix": [[1.0, 0.0], [0.0, 1.0]], "coefficients": [0.0, 0.0], "bias": 0.0},
        "inputs": [{"values": [1.0, 1.0]}],
        "methods": ["oracle"]
    })))
    .unwrap();
    let table = run_fidelity(&exp, &SERIAL).unwrap();
    assert!(text(&table, 0, "error").contains("linear"));
}

#[test]
fn single_epsilon_gives_one_row_per_method() {
    let exp = prepare(config(json!({"methods": ["lime", "glime_gauss"], "metrics": {"epsilons": [0.5]}}))).unwrap();
    let table = run_fidelity(&exp, &SERIAL).unwrap();
    assert_eq!(table.rows.len(), 2);
}

#[test]
fn output_does_not_depend_on_worker_count() {
    let exp = prepare(config(json!({
        "methods": ["lime", "glime_binomial", "glime_gauss"],
        "sigmas": [0.5, 1.0, 2.0],
        "sample_sizes": [16, 64, 256]
    })))
    .unwrap();
    let serial = run_stability(&exp, &SERIAL).unwrap().to_csv().unwrap();
    let parallel = run_stability(&exp, &RunOptions { jobs: Some(4), master_seed: None }).unwrap().to_csv().unwrap();
    assert_eq!(serial, parallel);
    let again = run_fidelity(&exp, &RunOptions::default()).unwrap().to_json().unwrap();
    assert_eq!(run_fidelity(&exp, &SERIAL).unwrap().to_json().unwrap(), again);
}

#[test]
fn master_seed_override_changes_draws() {
    let exp = prepare(config(json!({}))).unwrap();
    let a = run_explain(&exp, &SERIAL).unwrap();
    let b = run_explain(&exp, &RunOptions { jobs: None, master_seed: Some(99) }).unwrap();
    assert_ne!(a.seed, b.seed);
    assert_ne!(a.w, b.w);
}

#[test]
fn convergence_shrinks_with_n_at_wide_kernels() {
    // linear models are fitted exactly by both methods; interactions are needed
    let exp = prepare(config(json!({
        "model": {
            "kind": "quadratic",
            "matrix": [[0.5, 1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, -0.5, 0.0], [0.0, 0.0, -1.0, 0.0, 0.7],
                       [0.0, -0.5, 0.0, 0.0, 0.0], [0.0, 0.0, 0.7, 0.0, 0.3]],
            "coefficients": [1.0, -2.0, 0.5, 3.0, -1.0],
            "bias": 0.1
        },
        "inputs": [{"values": [0.2, 0.4, -0.1, 1.0, 0.7]}],
        "reference": {"kind": "constant", "value": 0.0},
        "sigmas": [5.0, 1.0],
        "lambdas": [0.0],
        "sample_sizes": [1000, 10000, 100000],
        "seeds": [0, 1]
    })))
    .unwrap();
    let table = run_convergence(&exp, &RunOptions::default()).unwrap();
    assert_eq!(table.rows.len(), 6);
    for row in 0..3 {
        assert_eq!(text(&table, row, "mse_trend"), "decreasing");
    }
    assert!(num(&table, 5, "pearson") >= 0.99);
}

#[test]
fn distribution_table_is_normalized() {
    let table = distribution_table(6, &[0.25, 1.0]).unwrap();
    assert_eq!(table.rows.len(), 14);
    for block in [0..7, 7..14] {
        let b: f64 = block.clone().map(|r| num(&table, r, "binomial_pmf")).sum();
        let u: f64 = block.map(|r| num(&table, r, "uniform_pmf")).sum();
        assert!((b - 1.0).abs() < 1e-12 && (u - 1.0).abs() < 1e-15);
    }
    assert!(matches!(distribution_table(0, &[1.0]), Err(Error::InvalidConfig(_))));
}

#[test]
fn relative_paths_resolve_against_the_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("model.json"),
        r#"{"kind": "linear", "coefficients": [1.0, 2.0], "bias": 0.0}"#,
    )
    .unwrap();
    std::fs::create_dir(dir.path().join("data")).unwrap();
    std::fs::write(dir.path().join("data/x.json"), r#"{"values": [1.0, 1.0]}"#).unwrap();
    let cfg = json!({
        "model": "model.json",
        "inputs": ["data/x.json", {"values": [0.0, 2.0]}],
        "methods": ["glime_gauss"],
        "sigmas": [1.0],
        "sample_sizes": [10]
    });
    let path = dir.path().join("exp.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let exp = ExperimentConfig::load(&path).unwrap();
    assert_eq!(exp.inputs.len(), 2);
    assert_eq!(exp.inputs[0].x, vec![1.0, 1.0]);
    assert_eq!(exp.config.output.format, OutputFormat::Csv);
}
