mod common;

use common::*;
use seaird::data_io::{window_registry, CountryWindow};
use seaird::synthetic::reference_parameters;
use std::path::Path;

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|row| row.unwrap().iter().map(String::from).collect()).collect()
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn simulate_writes_one_row_per_day() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("p.json");
    write(
        &params,
        r#"{"alpha":0.5,"beta":0.7567,"delta":42.3,"gamma1":0.998,"gamma2":0.0682,"mu":0.0006,"theta":0.0698,"population":211049527}"#,
    );
    let out = dir.path().join("sim");
    let o = run(&[
        "simulate", "--params", params.to_str().unwrap(), "--x0", "211021477,20000,1000,5000,2000,50",
        "--horizon", "42", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let text = std::fs::read_to_string(out.join("simulation.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "day,S,E,I,A,R,D,cum_infected");
    let rows = csv_rows(&out.join("simulation.csv"));
    assert_eq!(rows.len(), 43);
    let col = |k: usize| rows.iter().map(|r| r[k].parse::<f64>().unwrap()).collect::<Vec<_>>();
    for k in [6, 7] {
        assert!(col(k).windows(2).all(|w| w[1] >= w[0]));
    }
    assert_schema("manifest.schema.json", &read_json(&out.join("manifest.json")));
}

#[test]
fn simulate_without_infectives_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("p.json");
    write(
        &params,
        r#"{"alpha":0.5,"beta":0.0,"delta":1,"gamma1":0.1,"gamma2":0.1,"mu":0.2,"theta":0.05,"x0":{"s":1000,"e":0,"i":0,"a":0,"r":0,"d":0}}"#,
    );
    let out = dir.path().join("sim");
    let o = run(&["simulate", "--params", params.to_str().unwrap(), "--horizon", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(&out.join("simulation.csv"));
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert_eq!(&r[1..], &["1000", "0", "0", "0", "0", "0", "0"]);
    }
}

#[test]
fn simulate_names_the_invalid_field() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("p.json");
    write(
        &params,
        r#"{"alpha":1.5,"beta":0.5,"delta":1,"gamma1":0.1,"gamma2":0.1,"mu":0.2,"theta":0.05}"#,
    );
    let o = run(&["simulate", "--params", params.to_str().unwrap(), "--x0", "900,0,100,0,0,0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("alpha"), "{}", stderr(&o));
}

fn synthetic_brazil(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("synthetic.csv");
    let w = window_registry().into_iter().find(|w| w.country_id == "Brazil").unwrap();
    write_synthetic_csv(&path, &[w], BRAZIL_POPULATION);
    path
}

#[test]
fn fit_on_synthetic_data_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_brazil(dir.path());
    let out = dir.path().join("fit");
    let o = run(&["fit", "--data", data.to_str().unwrap(), "--country", "Brazil", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let result = read_json(&out.join("fit_result.json"));
    assert_schema("fit_result.schema.json", &result);
    assert_schema("manifest.schema.json", &read_json(&out.join("manifest.json")));
    assert!(result["r2_test"]["min"].as_f64().unwrap() >= 0.999, "{}", result["r2_test"]);
    assert_eq!(result["accepted"], true);

    let rows = csv_rows(&out.join("predicted.csv"));
    assert_eq!(rows.len(), 43);
    assert_eq!(rows.iter().filter(|r| r[2] == "train").count(), 22);
    let per_1000: f64 = rows[0][7].parse().unwrap();
    let raw: f64 = rows[0][3].parse().unwrap();
    assert!((per_1000 - raw * 1000.0 / BRAZIL_POPULATION).abs() < 1e-12);
}

#[test]
fn truncated_data_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(brazil_fixture()).unwrap();
    let kept: Vec<&str> = text.lines().filter(|l| !l.starts_with("10/05/2020")).collect();
    let data = dir.path().join("short.csv");
    write(&data, &kept.join("\n"));
    let o = run(&["fit", "--data", data.to_str().unwrap(), "--country", "Brazil", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("2020-05-10"), "{}", stderr(&o));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_brazil(dir.path());
    let config = dir.path().join("config.json");
    write(
        &config,
        &format!(
            r#"{{"data": {:?}, "country": "Brazil", "seed": 1, "starts": 3, "tau": 0.5, "max_retries": 0}}"#,
            data.to_str().unwrap()
        ),
    );
    let out = dir.path().join("fit");
    let o = run(&["fit", "--config", config.to_str().unwrap(), "--seed", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["seed"], 7);
    assert_eq!(m["config"]["starts"], 3);
    assert_eq!(m["config"]["tau"], 0.5);
    assert_eq!(m["config"]["weights"], "reciprocal");

    write(&config, r#"{"sed": 1}"#);
    let o = run(&["fit", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn data_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    synthetic_brazil(dir.path());
    let out = dir.path().join("fit");
    let o = bin()
        .args(["fit", "--data", "synthetic.csv", "--country", "Brazil", "--starts", "2", "--tau", "0.5"])
        .args(["--out", out.to_str().unwrap()])
        .env("SEAIRD_DATA_DIR", dir.path())
        .current_dir(std::env::temp_dir())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let o = bin()
        .args(["fit", "--country", "Brazil", "--out", out.to_str().unwrap()])
        .env_remove("SEAIRD_DATA_DIR")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("SEAIRD_DATA_DIR"));
}

fn deviation_cells_are_consistent(rows: &[Vec<String>]) {
    for r in rows {
        let raw: f64 = r[1].parse().unwrap();
        for pair in r[2..].chunks(2) {
            let value: f64 = pair[0].parse().unwrap();
            let dev: f64 = pair[1].parse().unwrap();
            assert!((dev - 100.0 * (value - raw) / raw).abs() < 0.1, "{r:?}");
        }
    }
}

#[test]
fn sensitivity_with_zero_factor_has_zero_deviations() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_brazil(dir.path());
    let out = dir.path().join("sens");
    let o = run(&[
        "sensitivity", "--data", data.to_str().unwrap(), "--country", "Brazil", "--factors", "0",
        "--starts", "4", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(&out.join("sensitivity.csv"));
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert_eq!(r[3], "0", "{r:?}");
    }
    assert_schema("sensitivity.schema.json", &read_json(&out.join("sensitivity.json")));
}

#[test]
fn sensitivity_table_has_three_factor_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_brazil(dir.path());
    let out = dir.path().join("sens");
    let o = run(&["sensitivity", "--data", data.to_str().unwrap(), "--country", "Brazil", "--starts", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("sensitivity.csv")).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "parameter,raw_estimate,value_0.05,deviation_pct_0.05,value_0.1,deviation_pct_0.1,value_0.2,deviation_pct_0.2"
    );
    let rows = csv_rows(&out.join("sensitivity.csv"));
    let names: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["mu", "beta", "delta", "gamma1", "gamma2", "theta"]);
    deviation_cells_are_consistent(&rows);
}

#[test]
fn countries_recover_each_generator() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("multi.csv");
    let population = 50e6;
    write_synthetic_csv(&data, &window_registry(), population);
    let out = dir.path().join("countries");
    let o = run(&["countries", "--data", data.to_str().unwrap(), "--starts", "8", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let text = std::fs::read_to_string(out.join("countries.csv")).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 7);
    let rows = csv_rows(&out.join("countries.csv"));
    assert_eq!(rows[0][0], "period");
    assert_eq!(rows[0][1], "04/04/2020 to 25/04/2020");
    let theta = rows.iter().find(|r| r[0] == "theta").unwrap();
    for (k, country) in header.iter().enumerate().skip(1) {
        let truth = reference_parameters(country).unwrap().theta;
        let got: f64 = theta[k].parse().unwrap();
        assert!((got - truth).abs() <= 0.05 * truth, "{country}: theta {got} vs {truth}");
    }
    assert_schema("countries.schema.json", &read_json(&out.join("countries.json")));
    assert_schema("manifest.schema.json", &read_json(&out.join("manifest.json")));
}

#[test]
fn empty_registry_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let registry = dir.path().join("registry.json");
    write(&registry, "[]");
    let o = run(&[
        "countries", "--data", brazil_fixture().to_str().unwrap(), "--registry", registry.to_str().unwrap(),
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn countries_report_failures_per_column() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_brazil(dir.path());
    let registry = dir.path().join("registry.json");
    let windows = vec![
        window_registry().remove(0),
        CountryWindow::new("Atlantis", day(4, 4), day(4, 25), day(5, 16)),
    ];
    write(&registry, &serde_json::to_string(&windows).unwrap());
    let out = dir.path().join("c");
    let o = run(&[
        "countries", "--data", data.to_str().unwrap(), "--registry", registry.to_str().unwrap(), "--starts", "2",
        "--tau", "0.5", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(&out.join("countries.csv"));
    let status = rows.iter().find(|r| r[0] == "status").unwrap();
    assert_eq!(status[1], "accepted");
    assert!(status[2].starts_with("error:"), "{status:?}");
}

#[test]
fn rerun_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic_brazil(dir.path());
    let first = dir.path().join("first");
    let o = run(&["fit", "--data", data.to_str().unwrap(), "--country", "Brazil", "--starts", "4", "--out", first.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let again = dir.path().join("again");
    let o = run(&["rerun", first.join("manifest.json").to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["fit_result.json", "predicted.csv"] {
        assert_eq!(std::fs::read(first.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }

    // A changed input is refused.
    std::fs::write(&data, "dateRep,cases,deaths,countriesAndTerritories,popData2019\n").unwrap();
    let o = run(&["rerun", first.join("manifest.json").to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("changed"));
}
