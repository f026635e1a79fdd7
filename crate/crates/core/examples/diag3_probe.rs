// Scratch: epoch granularity vs captured peak.
use selecmix_core::synthdata::{self, DatasetConfig};
use selecmix_core::trainer::{train, Strategy, TrainConfig, TrainData};

fn run(strategy: Strategy, n_train: usize, epochs: usize, alpha: f64, seed: u64) -> (f64, usize, f64) {
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
        sim_stat_sample: 400,
        sim_stat_pairs: 400,
        ..TrainConfig::default()
    };
    let h = train(&cfg, &data).unwrap();
    (h.best_unbiased_acc, h.best_epoch, h.final_unbiased_acc)
}

fn main() {
    for &(n, ep) in &[(2000usize, 50usize), (4000, 25), (8000, 12)] {
        for strategy in [Strategy::Vanilla, Strategy::SelecMixAb, Strategy::GtSelecMixAb] {
            let mut bests = Vec::new();
            for seed in [1u64, 2, 3] {
                let (b, be, f) = run(strategy, n, ep, 0.01, seed);
                bests.push((b, be, f));
            }
            let mean: f64 = bests.iter().map(|x| x.0).sum::<f64>() / 3.0;
            let detail: Vec<String> = bests
                .iter()
                .map(|(b, be, f)| format!("{b:.3}@{be}/{f:.3}"))
                .collect();
            println!(
                "n {n:5} ep {ep:3} {:14} mean-best {mean:.4}  [{}]",
                strategy.as_str(),
                detail.join(", ")
            );
        }
    }
}
