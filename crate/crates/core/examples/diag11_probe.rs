// Scratch: bias-noise scan for the backend-ordering regime.
use selecmix_core::synthdata::{self, DatasetConfig};
use selecmix_core::trainer::{train, AuxLossKind, BackendKind, Strategy, TrainConfig, TrainData};

fn mean(v: &[f64]) -> f64 { v.iter().sum::<f64>() / v.len() as f64 }

fn main() {
    let (n, bsz, ep) = (24000usize, 768usize, 8usize);
    for &sigma_b in &[0.3f64, 0.45, 0.6] {
        let dcfg = DatasetConfig {
            n_train: n, n_test: 4000, alpha: 0.01, bias_noise: sigma_b, seed: 1,
            ..DatasetConfig::default()
        };
        let train_ds = synthdata::generate(&dcfg).unwrap();
        let (unbiased, conflict) = synthdata::generate_eval(&dcfg).unwrap();
        let data = TrainData { train: &train_ds, unbiased: &unbiased, conflict: &conflict };
        let arms = [
            ("vanilla", BackendKind::GscCosine, AuxLossKind::Gsc),
            ("gsc-cosine", BackendKind::GscCosine, AuxLossKind::Gsc),
            ("gce-cosine", BackendKind::GceCosine, AuxLossKind::Gce),
            ("gce-l2", BackendKind::GceL2, AuxLossKind::Gce),
            ("gce-kl", BackendKind::GceKl, AuxLossKind::Gce),
            ("ground-truth", BackendKind::GroundTruth, AuxLossKind::Gsc),
        ];
        for (label, backend, aux_loss) in arms {
            let mut bests = Vec::new();
            for seed in [1u64, 2] {
                let strategy = if label == "vanilla" { Strategy::Vanilla } else { Strategy::SelecMixAb };
                let (lb, lo) = if label == "vanilla" { (1.0, 0.0) } else { (0.0, 1.0) };
                let cfg = TrainConfig {
                    epochs: ep, seed, strategy, backend, aux_loss, batch_size: bsz,
                    lambda_base: lb, lambda_ours: lo,
                    sim_stat_sample: 400, sim_stat_pairs: 400,
                    ..TrainConfig::default()
                };
                let h = train(&cfg, &data).unwrap();
                bests.push(h.best_unbiased_acc);
            }
            println!("sigma_b {sigma_b} {label:14} mean {:.4} [{}]",
                mean(&bests),
                bests.iter().map(|b| format!("{b:.3}")).collect::<Vec<_>>().join(", "));
        }
        println!();
    }
}
