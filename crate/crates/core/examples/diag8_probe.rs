// Scratch: oracle-score backend vs gsc backend; availability scaling.
use selecmix_core::synthdata::{self, DatasetConfig};
use selecmix_core::trainer::{train, BackendKind, Strategy, TrainConfig, TrainData};

fn mean(v: &[f64]) -> f64 { v.iter().sum::<f64>() / v.len() as f64 }

fn main() {
    for &(n, bsz, ep) in &[(20000usize, 512usize, 10usize), (24000, 768, 8)] {
        let dcfg = DatasetConfig { n_train: n, n_test: 4000, alpha: 0.01, seed: 1, ..DatasetConfig::default() };
        let train_ds = synthdata::generate(&dcfg).unwrap();
        let (unbiased, conflict) = synthdata::generate_eval(&dcfg).unwrap();
        let data = TrainData { train: &train_ds, unbiased: &unbiased, conflict: &conflict };
        for (label, strategy, backend) in [
            ("vanilla", Strategy::Vanilla, BackendKind::GscCosine),
            ("selecmix/gsc", Strategy::SelecMixAb, BackendKind::GscCosine),
            ("selecmix/gt-scores", Strategy::SelecMixAb, BackendKind::GroundTruth),
        ] {
            let mut bests = Vec::new();
            let t0 = std::time::Instant::now();
            for seed in [1u64, 2, 3] {
                let (lb, lo) = if strategy == Strategy::Vanilla { (1.0, 0.0) } else { (0.0, 1.0) };
                let cfg = TrainConfig {
                    epochs: ep, seed, strategy, backend, batch_size: bsz,
                    lambda_base: lb, lambda_ours: lo,
                    sim_stat_sample: 400, sim_stat_pairs: 400,
                    ..TrainConfig::default()
                };
                let h = train(&cfg, &data).unwrap();
                bests.push(h.best_unbiased_acc);
            }
            println!(
                "n {n} B {bsz} ep {ep} {label:18} mean {:.4} [{}] {:.0}s",
                mean(&bests),
                bests.iter().map(|b| format!("{b:.3}")).collect::<Vec<_>>().join(", "),
                t0.elapsed().as_secs_f64()
            );
        }
    }
}
