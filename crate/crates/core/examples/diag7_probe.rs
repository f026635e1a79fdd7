// Scratch: larger batch (more conflicting examples per batch) at n=20000.
use selecmix_core::synthdata::{self, DatasetConfig};
use selecmix_core::trainer::{train, Strategy, TrainConfig, TrainData};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n_train: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20000);
    let bsz: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(512);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(10);

    let dcfg = DatasetConfig { n_train, n_test: 4000, alpha: 0.01, seed: 1, ..DatasetConfig::default() };
    let train_ds = synthdata::generate(&dcfg).unwrap();
    let (unbiased, conflict) = synthdata::generate_eval(&dcfg).unwrap();
    let data = TrainData { train: &train_ds, unbiased: &unbiased, conflict: &conflict };
    for strategy in [Strategy::Vanilla, Strategy::SelecMixAb, Strategy::GtSelecMixAb, Strategy::Mixup] {
        let mut line = Vec::new();
        let t0 = std::time::Instant::now();
        for seed in [1u64, 2, 3] {
            let (lb, lo) = if strategy == Strategy::Vanilla { (1.0, 0.0) } else { (0.0, 1.0) };
            let cfg = TrainConfig {
                epochs, seed, strategy, batch_size: bsz,
                lambda_base: lb, lambda_ours: lo,
                sim_stat_sample: 400, sim_stat_pairs: 400,
                ..TrainConfig::default()
            };
            let h = train(&cfg, &data).unwrap();
            line.push(format!("{:.3}@{}", h.best_unbiased_acc, h.best_epoch));
        }
        println!("n {n_train} B {bsz} ep {epochs} {:14} [{}] {:.0}s", strategy.as_str(), line.join(", "), t0.elapsed().as_secs_f64());
    }
}
