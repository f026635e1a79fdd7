// Scratch: per-branch contribution at n=8000, simultaneous aux.
use selecmix_core::synthdata::{self, DatasetConfig};
use selecmix_core::trainer::{train, Strategy, TrainConfig, TrainData};

fn main() {
    let dcfg = DatasetConfig { n_train: 8000, n_test: 4000, alpha: 0.01, seed: 1, ..DatasetConfig::default() };
    let train_ds = synthdata::generate(&dcfg).unwrap();
    let (unbiased, conflict) = synthdata::generate_eval(&dcfg).unwrap();
    let data = TrainData { train: &train_ds, unbiased: &unbiased, conflict: &conflict };
    for strategy in [Strategy::SelecMixA, Strategy::SelecMixB, Strategy::SelecMixAb, Strategy::Vanilla] {
        let mut line = Vec::new();
        for seed in [1u64, 2, 3] {
            let (lb, lo) = if strategy == Strategy::Vanilla { (1.0, 0.0) } else { (0.0, 1.0) };
            let cfg = TrainConfig {
                epochs: 12, seed, strategy, lambda_base: lb, lambda_ours: lo,
                sim_stat_sample: 400, sim_stat_pairs: 400,
                ..TrainConfig::default()
            };
            let h = train(&cfg, &data).unwrap();
            line.push(format!("{:.3}@{}", h.best_unbiased_acc, h.best_epoch));
        }
        println!("{:12} [{}]", strategy.as_str(), line.join(", "));
    }
}
