//! Scratch harness for picking acceptance-experiment hyperparameters.

use std::time::Instant;

use transmol_cli::commands::{self};
use transmol_cli::config::ExperimentConfig;
use transmol_cli::report::ModelKind;

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let readout = args.get(1).map(String::as_str).unwrap_or("sum").to_string();
    let acc_epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(300);
    let donor_epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(150);
    let acceptor_formula = args
        .get(4)
        .map(String::as_str)
        .unwrap_or("acceptor_related")
        .to_string();
    let conv: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(32);
    let lr: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(0.005);
    let acceptor_noise: f64 = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let max_heavy: usize = args.get(8).and_then(|s| s.parse().ok()).unwrap_or(12);

    let dir = tempfile::tempdir().unwrap();
    let toml = format!(
        r#"
out_dir = "{out}"
master_seed = 2024

[donor.generate]
n = 2000
formula = "donor_default"
seed = 101
max_heavy_atoms = {max_heavy}

[acceptor.generate]
n = 1000
formula = "{acceptor_formula}"
seed = 202
max_heavy_atoms = {max_heavy}
noise_sd = {acceptor_noise}

[experiment]
train_sizes = [10, 20]
split_properties = ["endpoint"]
seeds = [1, 2, 3, 4, 5]
transfer_mode = "feature_extraction"

[model]
conv_dims = [{conv}, {conv}]
dense_dims = [16, 8]
readout = "{readout}"

[training]
epochs = {acc_epochs}
batch_size = 32
learning_rate = {lr}

[donor_training]
epochs = {donor_epochs}
holdout_fraction = 0.2

[forest]
n_trees = 100
"#,
        out = dir.path().display(),
    );
    let mut config = ExperimentConfig::from_toml(&toml).unwrap();

    let t0 = Instant::now();
    let outcome = commands::train_donor::run(&config).unwrap();
    let donor_secs = t0.elapsed().as_secs_f64();
    let donor_rec = &outcome.report.donor_training[0];
    println!(
        "donor: n={} epochs={} final_loss={:.5} holdout_r2={:?} ({donor_secs:.1}s)",
        donor_rec.donor_size, donor_rec.epochs, donor_rec.final_train_loss, donor_rec.holdout_r2
    );

    config.donor_archive = Some(outcome.archive_path.clone());
    let t1 = Instant::now();
    let mut report = commands::compare::run(&config).unwrap();
    report.finalize();
    let compare_secs = t1.elapsed().as_secs_f64();
    println!("compare: {} cells, {} failed ({compare_secs:.1}s)", report.metric_cells.len(), report.failed_cells);

    for size in [10usize, 20] {
        let grab = |kind: ModelKind| -> Vec<f64> {
            report
                .metric_cells
                .iter()
                .filter(|c| c.train_size == size && c.model_kind == kind)
                .filter_map(|c| c.value)
                .collect()
        };
        let pure = grab(ModelKind::PureGcnn);
        let transfer = grab(ModelKind::Transfer);
        let forest = grab(ModelKind::RandomForest);
        println!(
            "size {size}: pure med {:.3} {:?}",
            median(pure.clone()),
            pure.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        );
        println!(
            "         transfer med {:.3} {:?}",
            median(transfer.clone()),
            transfer.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        );
        println!(
            "         forest med {:.3}, gap(transfer-pure) {:.3}",
            median(forest),
            median(transfer) - median(pure)
        );
    }
    for ad in &report.ad_records {
        println!(
            "ad {}: acc {:.3} union {:.3} delta {:.3}",
            ad.cell_id,
            ad.acceptor_coverage,
            ad.union_coverage.unwrap_or(f64::NAN),
            ad.delta_coverage.unwrap_or(f64::NAN)
        );
    }
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
}
