use bandit_ab::dgp::{generate, DgpConfig, FKind, GKind};
use bandit_ab::harness::config::parse_settings;
use bandit_ab::harness::{
    emit_power_curves, ingest_csv, read_dataset, run_study, study_csv, write_csv, Axis,
    ExperimentGrid, Method,
};
use bandit_ab::learners::LearnerSpec;
use bandit_ab::meta_perm::{pwtab_test, PwtabConfig};
use bandit_ab::dr_engine::NuisanceSource;
use bandit_ab::Error;
use std::io::Write;

fn small_grid() -> ExperimentGrid {
    ExperimentGrid {
        n: vec![300],
        replications: 6,
        learner: LearnerSpec::linear(),
        b: 5,
        root_seed: 12,
        ..ExperimentGrid::default()
    }
}

#[test]
fn csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let data = generate(&DgpConfig::new(FKind::IV, GKind::IV, 0.6, 250, 5)).unwrap();
    write_csv(&data, &path).unwrap();
    assert_eq!(ingest_csv(&path).unwrap(), data);
}

#[test]
fn bad_treatment_names_its_row() {
    let mut text = String::from("x1,x2,y,a\n");
    for i in 1..=20 {
        let a = if i == 17 { 2 } else { i % 2 };
        text.push_str(&format!("{i},0.5,1.25,{a}\n"));
    }
    match read_dataset(text.as_bytes()).unwrap_err() {
        Error::Parse { row, column, .. } => assert_eq!((row, column.as_str()), (17, "a")),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn ten_covariates_are_inferred() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wide.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    let header: Vec<String> = (1..=10).map(|j| format!("x{j}")).collect();
    writeln!(f, "{},y,a", header.join(",")).unwrap();
    for i in 0..5 {
        let row: Vec<String> = (0..10).map(|j| (i * 10 + j).to_string()).collect();
        writeln!(f, "{},{},{}", row.join(","), i, i % 2).unwrap();
    }
    drop(f);
    let data = ingest_csv(&path).unwrap();
    assert_eq!(data.n_covariates(), 10);
    assert_eq!(data.x().get(3, 9), 39.0);
}

#[test]
fn study_is_deterministic() {
    let a = run_study(&small_grid()).unwrap();
    let b = run_study(&small_grid()).unwrap();
    assert_eq!(a.cells, b.cells);
    assert_eq!(study_csv(&a).unwrap(), study_csv(&b).unwrap());
    for m in &a.cells[0].methods {
        assert_eq!(m.n_ok + m.n_failed, 6);
        assert_eq!(m.n_failed, 0);
        assert!((0.0..=1.0).contains(&m.rejection_rate));
    }
}

#[test]
fn study_pwtab_agrees_with_the_single_test() {
    let grid = ExperimentGrid {
        replications: 2,
        methods: vec![Method::Pwtab],
        ..small_grid()
    };
    let study = run_study(&grid).unwrap();
    let cell = &study.cells[0];
    let dgp_cell = DgpConfig::new(cell.f, cell.g, cell.sigma_eps, cell.n, 0);
    let config = PwtabConfig {
        nuisance: NuisanceSource {
            learner: grid.learner.clone(),
            k: grid.k,
            propensity: grid.propensity,
        },
        b: grid.b,
        ..PwtabConfig::default()
    };
    for rep in 0..2 {
        let seed = bandit_ab::harness::study::replication_seed(grid.root_seed, &dgp_cell, rep);
        let data = generate(&DgpConfig { seed, ..dgp_cell.clone() }).unwrap();
        let report = pwtab_test(&data, &config, seed).unwrap();
        assert_eq!(cell.methods[0].p_values[rep], report.p_aggregated);
    }
}

#[test]
fn single_replication_gives_zero_or_one() {
    let study = run_study(&ExperimentGrid { replications: 1, ..small_grid() }).unwrap();
    for m in &study.cells[0].methods {
        assert!(m.rejection_rate == 0.0 || m.rejection_rate == 1.0);
    }
}

#[test]
fn dim_only_study_never_fits_nuisances() {
    let grid = ExperimentGrid {
        methods: vec![Method::Dim],
        ..small_grid()
    };
    let study = run_study(&grid).unwrap();
    assert_eq!(study.cross_fits, 0);
    assert_eq!(run_study(&small_grid()).unwrap().cross_fits, 6);
}

#[test]
fn power_curves() {
    let grid = ExperimentGrid {
        sigma_eps: vec![0.6, 0.5],
        methods: vec![Method::Dim, Method::ZDml],
        replications: 3,
        ..small_grid()
    };
    let study = run_study(&grid).unwrap();
    let csv = emit_power_curves(&study, Axis::SigmaEps).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let keys: Vec<(&str, &str)> = rows.iter().map(|r| (r[0], r[1])).collect();
    assert_eq!(keys, vec![("zDML", "0.5"), ("zDML", "0.6"), ("DIM", "0.5"), ("DIM", "0.6")]);

    let single = run_study(&ExperimentGrid { replications: 2, ..small_grid() }).unwrap();
    assert_eq!(emit_power_curves(&single, Axis::N).unwrap().lines().count(), 6);

    let none = run_study(&ExperimentGrid { methods: vec![], ..small_grid() }).unwrap();
    assert_eq!(
        emit_power_curves(&none, Axis::N).unwrap(),
        "method,axis_value,rejection_rate,stderr\n"
    );
}

#[test]
fn failed_replications_are_counted() {
    // Three subjects never give two per arm, and K = 2 folds need four rows.
    let grid = ExperimentGrid {
        n: vec![3],
        replications: 4,
        ..small_grid()
    };
    let study = run_study(&grid).unwrap();
    for m in &study.cells[0].methods {
        assert_eq!((m.n_ok, m.n_failed), (0, 4), "{}", m.method);
        assert!(m.first_error.is_some());
        assert!(m.p_values.is_empty());
    }
}

#[test]
fn manifest_builds_grids() {
    let s = parse_settings("n = 300\nreps = 2\nlearner = linear\nmethods = DIM, CUPED\n").unwrap();
    let grid = ExperimentGrid::from_settings(&s).unwrap();
    let study = run_study(&grid).unwrap();
    assert_eq!(study.cells[0].methods.len(), 2);
    assert!(ExperimentGrid::from_settings(&parse_settings("n = 1").unwrap()).is_err());
}
