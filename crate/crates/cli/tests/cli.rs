//! Integration tests for the subcommand surfaces: file formats, report
//! schema conformance, determinism, and the cross-arm split contract.

use std::path::{Path, PathBuf};

use transmol_cli::commands::{self, write_report};
use transmol_cli::config::ExperimentConfig;
use transmol_cli::report::{schema, ModelKind, RunReport};

fn schema_doc() -> serde_json::Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/report.schema.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn validate_report_file(path: &Path) {
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    schema::validate(&doc, &schema_doc()).expect("report conforms to schema");
}

fn tiny_config(dir: &Path) -> ExperimentConfig {
    let toml = format!(
        r#"
out_dir = "{out}"
master_seed = 5

[donor.generate]
n = 120
formula = "donor_default"
seed = 31

[acceptor.generate]
n = 80
formula = "acceptor_related"
seed = 32

[experiment]
train_sizes = [10]
split_properties = ["endpoint"]
seeds = [1, 2]
transfer_mode = "feature_extraction"

[model]
conv_dims = [8, 8]
dense_dims = [6]

[training]
epochs = 15
batch_size = 8

[donor_training]
epochs = 15
holdout_fraction = 0.2

[forest]
n_trees = 20
"#,
        out = dir.display()
    );
    ExperimentConfig::from_toml(&toml).unwrap()
}

#[test]
fn generate_writes_loadable_csv_and_valid_report() {
    let dir = tempfile::tempdir().unwrap();
    let out_csv = dir.path().join("data.csv");
    let args = commands::generate::GenerateArgs {
        n: 40,
        formula: "donor_default".into(),
        seed: 9,
        max_heavy_atoms: 10,
        noise_sd: 0.0,
        out: out_csv.clone(),
    };
    let report = commands::generate::run(&args, dir.path()).unwrap();
    let (_, report_path) = write_report(report, dir.path()).unwrap();
    validate_report_file(&report_path);

    let ds = transmol::sampling::Dataset::from_csv_path(
        &out_csv,
        transmol::Task::Regression,
        "check",
    )
    .unwrap();
    assert_eq!(ds.len(), 40);

    // Same flags, same bytes.
    let csv2 = dir.path().join("data2.csv");
    let args2 = commands::generate::GenerateArgs {
        out: csv2.clone(),
        ..args
    };
    commands::generate::run(&args2, dir.path()).unwrap();
    assert_eq!(
        std::fs::read(&out_csv).unwrap(),
        std::fs::read(&csv2).unwrap()
    );
}

#[test]
fn featurize_descriptor_and_fingerprint_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data_csv = dir.path().join("mols.csv");
    std::fs::write(
        &data_csv,
        "id,smiles,target\nm1,CCO,0.1\nm2,c1ccccc1,1.2\n",
    )
    .unwrap();

    let desc_csv = dir.path().join("desc.csv");
    let args = commands::featurize::FeaturizeArgs {
        input: data_csv.clone(),
        what: "descriptors".into(),
        radius: 2,
        bits: 2048,
        out: desc_csv.clone(),
    };
    commands::featurize::run(&args, dir.path()).unwrap();
    let text = std::fs::read_to_string(&desc_csv).unwrap();
    assert!(text.starts_with(
        "id,molecular_weight,aromatic_rings,rotatable_bonds,hba,hbd,heterocycles,tpsa"
    ));
    assert_eq!(text.lines().count(), 3);

    let fp_csv = dir.path().join("fp.csv");
    let args = commands::featurize::FeaturizeArgs {
        input: data_csv,
        what: "fingerprints".into(),
        radius: 2,
        bits: 256,
        out: fp_csv.clone(),
    };
    commands::featurize::run(&args, dir.path()).unwrap();
    let text = std::fs::read_to_string(&fp_csv).unwrap();
    assert!(text.starts_with("id,n_set,bits"));
}

#[test]
fn train_donor_then_compare_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny_config(dir.path());

    let outcome = commands::train_donor::run(&config).unwrap();
    let (_, donor_report_path) = write_report(outcome.report, &config.out_dir()).unwrap();
    validate_report_file(&donor_report_path);
    assert!(outcome.archive_path.exists());

    // The archive must restore into a working model.
    let archive = transmol::transfer::WeightArchive::load(&outcome.archive_path).unwrap();
    assert_eq!(archive.layers.len(), 4); // 2 conv + 1 dense + head
    transmol::transfer::restore_model(&archive).unwrap();

    config.donor_archive = Some(outcome.archive_path.clone());
    let report = commands::compare::run(&config).unwrap();
    let (report, report_path) = write_report(report, &config.out_dir()).unwrap();
    validate_report_file(&report_path);

    // Completeness: |sizes| × |props| × |seeds| × 3 records.
    assert_eq!(report.metric_cells.len(), 1 * 1 * 2 * 3);
    assert_eq!(report.failed_cells, 0);

    // Shared-split contract: all three model kinds saw identical id lists.
    for chunk in report.metric_cells.chunks(3) {
        assert_eq!(chunk.len(), 3);
        let digest = &chunk[0].train_ids_digest;
        assert!(chunk.iter().all(|c| &c.train_ids_digest == digest));
        let kinds: Vec<ModelKind> = chunk.iter().map(|c| c.model_kind).collect();
        assert_eq!(
            kinds,
            vec![ModelKind::PureGcnn, ModelKind::Transfer, ModelKind::RandomForest]
        );
    }

    // Donor dataset was configured, so AD records carry the union rule.
    assert_eq!(report.ad_records.len(), 2);
    for ad in &report.ad_records {
        assert!(ad.union_coverage.is_some());
        let delta = ad.delta_coverage.unwrap();
        assert!(delta >= 0.0, "union coverage can never shrink");
    }
}

#[test]
fn compare_records_partial_failures_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny_config(dir.path());
    // Train size larger than the acceptor set: the split fails per cell.
    config.experiment.train_sizes = vec![10, 500];

    let outcome = commands::train_donor::run(&config).unwrap();
    config.donor_archive = Some(outcome.archive_path.clone());
    let mut report = commands::compare::run(&config).unwrap();
    report.finalize();

    assert_eq!(report.metric_cells.len(), 2 * 2 * 3);
    assert_eq!(report.failed_cells, 2 * 3);
    let ok_cells = report
        .metric_cells
        .iter()
        .filter(|c| c.status == transmol_cli::report::CellStatus::Ok)
        .count();
    assert_eq!(ok_cells, 2 * 3);
    for cell in &report.metric_cells {
        if cell.train_size == 500 {
            assert!(cell.error.as_deref().unwrap_or("").contains("split"));
        }
    }
}

#[test]
fn rank_splitters_emits_bounded_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny_config(dir.path());
    config.experiment.split_properties =
        vec!["endpoint".into(), "molecular_weight".into(), "tpsa".into()];
    config.experiment.seeds = vec![1, 2];

    let outcome = commands::train_donor::run(&config).unwrap();
    config.donor_archive = Some(outcome.archive_path.clone());
    let report = commands::rank_splitters::run(&config).unwrap();
    let (report, path) = write_report(report, &config.out_dir()).unwrap();
    validate_report_file(&path);

    assert_eq!(report.rank_tables.len(), 1);
    let table = &report.rank_tables[0];
    assert_eq!(table.properties.len(), 3);
    let n_seeds = 2.0;
    let p = 3.0;
    for &sum in &table.rank_sums {
        assert!(sum >= n_seeds * 1.0 - 1e-9);
        assert!(sum <= n_seeds * p + 1e-9);
    }
    let total: f64 = table.rank_sums.iter().sum();
    assert!((total - n_seeds * p * (p + 1.0) / 2.0).abs() < 1e-9);
}

#[test]
fn ad_report_flags_and_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let report = commands::ad_report::run(&config).unwrap();
    let (report, path) = write_report(report, &config.out_dir()).unwrap();
    validate_report_file(&path);

    assert_eq!(report.ad_records.len(), 2);
    for ad in &report.ad_records {
        assert!((0.0..=1.0).contains(&ad.acceptor_coverage));
        assert!(ad.delta_coverage.unwrap() >= 0.0);
    }
    let flags = config.out_dir().join("ad_flags.csv");
    let text = std::fs::read_to_string(flags).unwrap();
    assert!(text.starts_with("cell_id,id,in_acceptor_ad,in_donor_ad,in_union_ad"));
    // Two cells × 70 test molecules each, plus header.
    assert_eq!(text.lines().count(), 1 + 2 * 70);
}

#[test]
fn pca_projection_covers_both_datasets_and_recovers_planted_clusters() {
    let dir = tempfile::tempdir().unwrap();

    // Two structurally distinct families: aromatic-ring molecules vs plain
    // chains. Their fingerprints separate along the leading component.
    let ring_family: Vec<String> = [
        "c1ccccc1", "Cc1ccccc1", "CCc1ccccc1", "c1ccncc1", "Cc1ccncc1", "Oc1ccccc1",
        "Nc1ccccc1", "CCc1ccncc1", "COc1ccccc1", "Clc1ccccc1",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let chain_family: Vec<String> = [
        "CCO", "CCC", "CCCC", "CCN", "CCOC", "CC(C)C", "CCCO", "CCCN", "CC(C)O", "CCCCC",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();

    let write_family = |name: &str, smiles: &[String]| -> PathBuf {
        let records: Vec<transmol::sampling::Record> = smiles
            .iter()
            .enumerate()
            .map(|(i, s)| transmol::sampling::Record {
                id: format!("{name}{i:02}"),
                smiles: s.clone(),
                target: 0.0,
            })
            .collect();
        let ds =
            transmol::sampling::Dataset::new(records, transmol::Task::Regression, name).unwrap();
        let path = dir.path().join(format!("{name}.csv"));
        ds.to_csv_path(&path).unwrap();
        path
    };
    let a_path = write_family("ring", &ring_family);
    let b_path = write_family("chain", &chain_family);

    let args = commands::pca::PcaArgs {
        a: a_path,
        b: b_path,
        bounds: None,
        box_max_n: 100,
        seed: 0,
    };
    let report = commands::pca::run(&args, dir.path()).unwrap();
    let (report, path) = write_report(report, dir.path()).unwrap();
    validate_report_file(&path);
    assert_eq!(report.pca.as_ref().unwrap().n_points, 20);

    let text = std::fs::read_to_string(dir.path().join("pca_projection.csv")).unwrap();
    assert!(text.starts_with("id,x,y,dataset"));
    assert_eq!(text.lines().count(), 21);

    // Parse projections and find the ring family's bounding box.
    let mut ring_points = Vec::new();
    let mut chain_points = Vec::new();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let (x, y): (f64, f64) = (cols[1].parse().unwrap(), cols[2].parse().unwrap());
        if cols[3] == "ring" {
            ring_points.push((x, y));
        } else {
            chain_points.push((x, y));
        }
    }
    let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &ring_points {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    // The planted-cluster box recovers its members and excludes ≥95% of the
    // other family.
    let inside_chain = chain_points
        .iter()
        .filter(|&&(x, y)| x >= xmin && x <= xmax && y >= ymin && y <= ymax)
        .count();
    assert!(
        inside_chain as f64 <= 0.05 * chain_points.len() as f64,
        "{inside_chain} chain points leaked into the ring box"
    );

    // Identical datasets produce identical point clouds.
    let args_same = commands::pca::PcaArgs {
        a: dir.path().join("ring.csv"),
        b: dir.path().join("ring.csv"),
        bounds: None,
        box_max_n: 100,
        seed: 0,
    };
    let dir2 = tempfile::tempdir().unwrap();
    commands::pca::run(&args_same, dir2.path()).unwrap();
    let text = std::fs::read_to_string(dir2.path().join("pca_projection.csv")).unwrap();
    let mut first: Vec<(&str, &str, &str)> = Vec::new();
    let mut second: Vec<(&str, &str, &str)> = Vec::new();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols[3] == "ring" {
            first.push((cols[0], cols[1], cols[2]));
        } else {
            second.push((cols[0], cols[1], cols[2]));
        }
    }
    assert_eq!(first, second);
}

#[test]
fn donor_size_sweep_nested_subsets() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny_config(dir.path());
    config.experiment.donor_sizes = vec![30, 60];
    config.experiment.seeds = vec![1];

    let report = commands::donor_size_sweep::run(&config).unwrap();
    let (report, path) = write_report(report, &config.out_dir()).unwrap();
    validate_report_file(&path);

    // One transfer series per donor size.
    assert_eq!(report.metric_cells.len(), 2);
    assert!(report
        .metric_cells
        .iter()
        .all(|c| c.model_kind == ModelKind::Transfer && c.donor_size.is_some()));

    // Nested-subsample property: the smaller donor CSV is a subset of the
    // larger one.
    let load_ids = |n: usize| -> std::collections::BTreeSet<String> {
        let ds = transmol::sampling::Dataset::from_csv_path(
            &config.out_dir().join(format!("donor_{n}.csv")),
            transmol::Task::Regression,
            "check",
        )
        .unwrap();
        ds.records.into_iter().map(|r| r.id).collect()
    };
    let small = load_ids(30);
    let large = load_ids(60);
    assert!(small.is_subset(&large));

    // The identical split is used for every donor size (paired comparison).
    let digests: std::collections::BTreeSet<&String> = report
        .metric_cells
        .iter()
        .map(|c| &c.train_ids_digest)
        .collect();
    assert_eq!(digests.len(), 1);
}

#[test]
fn reports_are_byte_identical_modulo_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny_config(dir.path());
    let outcome = commands::train_donor::run(&config).unwrap();
    config.donor_archive = Some(outcome.archive_path.clone());

    let strip_timestamp = |mut report: RunReport| -> String {
        report.created_unix = None;
        report.to_json().unwrap()
    };
    let mut a = commands::compare::run(&config).unwrap();
    a.finalize();
    let mut b = commands::compare::run(&config).unwrap();
    b.finalize();
    assert_eq!(strip_timestamp(a), strip_timestamp(b));
}
