// Scratch: larger datasets, matched total iterations.
use selecmix_core::synthdata::{self, DatasetConfig};
use selecmix_core::trainer::{train, Strategy, TrainConfig, TrainData};

fn main() {
    for &(n, ep) in &[(16000usize, 8usize), (24000, 6)] {
        let dcfg = DatasetConfig {
            n_train: n,
            n_test: 4000,
            alpha: 0.01,
            seed: 1,
            ..DatasetConfig::default()
        };
        let train_ds = synthdata::generate(&dcfg).unwrap();
        let (unbiased, conflict) = synthdata::generate_eval(&dcfg).unwrap();
        let data = TrainData { train: &train_ds, unbiased: &unbiased, conflict: &conflict };
        for strategy in [Strategy::Vanilla, Strategy::SelecMixAb, Strategy::GtSelecMixAb] {
            let mut bests = Vec::new();
            for seed in [1u64, 2] {
                let (lb, lo) = if strategy == Strategy::Vanilla { (1.0, 0.0) } else { (0.0, 1.0) };
                let cfg = TrainConfig {
                    epochs: ep, seed, strategy,
                    lambda_base: lb, lambda_ours: lo,
                    sim_stat_sample: 400, sim_stat_pairs: 400,
                    ..TrainConfig::default()
                };
                let t0 = std::time::Instant::now();
                let h = train(&cfg, &data).unwrap();
                bests.push(format!(
                    "{:.3}@{}({:.0}s)", h.best_unbiased_acc, h.best_epoch,
                    t0.elapsed().as_secs_f64()
                ));
            }
            println!("n {n:6} ep {ep} {:14} [{}]", strategy.as_str(), bests.join(", "));
        }
    }
}
