// Scratch: empirical margins and timing for the comparative criteria.
use selecmix_core::synthdata::{self, DatasetConfig};
use selecmix_core::trainer::{train, Strategy, TrainConfig, TrainData};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let n_train: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(8000);
    let alpha: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.01);

    let dcfg = DatasetConfig {
        n_train,
        n_test: 4000,
        alpha,
        seed: 1,
        ..DatasetConfig::default()
    };
    let train_ds = synthdata::generate(&dcfg).unwrap();
    let (unbiased, conflict) = synthdata::generate_eval(&dcfg).unwrap();
    let data = TrainData {
        train: &train_ds,
        unbiased: &unbiased,
        conflict: &conflict,
    };

    for strategy in [Strategy::Vanilla, Strategy::Mixup, Strategy::SelecMixAb] {
        for seed in [1u64, 2, 3] {
            let (lb, lo) = if strategy == Strategy::Vanilla {
                (1.0, 0.0)
            } else {
                (0.0, 1.0)
            };
            let cfg = TrainConfig {
                epochs,
                seed,
                strategy,
                lambda_base: lb,
                lambda_ours: lo,
                sim_stat_sample: 1000,
                sim_stat_pairs: 1000,
                ..TrainConfig::default()
            };
            let t0 = std::time::Instant::now();
            let h = train(&cfg, &data).unwrap();
            let per_epoch: Vec<String> = h
                .records
                .iter()
                .map(|r| format!("{:.3}", r.unbiased_acc))
                .collect();
            println!(
                "{:12} seed {} best {:.4} @ep{:2} final {:.4} conflict {:.4} [{:.1}s] traj: {}",
                strategy.as_str(),
                seed,
                h.best_unbiased_acc,
                h.best_epoch,
                h.final_unbiased_acc,
                h.records.last().map(|r| r.conflict_acc).unwrap_or(0.0),
                t0.elapsed().as_secs_f64(),
                per_epoch.join(" ")
            );
        }
    }
}
