// Scratch: backend comparison, simultaneous co-training (Table 2 protocol).
use selecmix_core::synthdata::{self, DatasetConfig};
use selecmix_core::trainer::{train, AuxLossKind, BackendKind, Strategy, TrainConfig, TrainData};

fn mean(v: &[f64]) -> f64 { v.iter().sum::<f64>() / v.len() as f64 }

fn main() {
    let (n, bsz, ep) = (24000usize, 768usize, 8usize);
    let dcfg = DatasetConfig { n_train: n, n_test: 4000, alpha: 0.01, seed: 1, ..DatasetConfig::default() };
    let train_ds = synthdata::generate(&dcfg).unwrap();
    let (unbiased, conflict) = synthdata::generate_eval(&dcfg).unwrap();
    let data = TrainData { train: &train_ds, unbiased: &unbiased, conflict: &conflict };
    let arms = [
        ("gsc-cosine", BackendKind::GscCosine, AuxLossKind::Gsc),
        ("sc-cosine", BackendKind::GscCosine, AuxLossKind::Sc),
        ("gce-cosine", BackendKind::GceCosine, AuxLossKind::Gce),
        ("gce-l2", BackendKind::GceL2, AuxLossKind::Gce),
        ("gce-kl", BackendKind::GceKl, AuxLossKind::Gce),
        ("ground-truth", BackendKind::GroundTruth, AuxLossKind::Gsc),
    ];
    for (label, backend, aux_loss) in arms {
        let mut bests = Vec::new();
        let t0 = std::time::Instant::now();
        for seed in [1u64, 2, 3] {
            let cfg = TrainConfig {
                epochs: ep, seed, strategy: Strategy::SelecMixAb, backend, aux_loss,
                batch_size: bsz,
                lambda_base: 0.0, lambda_ours: 1.0,
                sim_stat_sample: 400, sim_stat_pairs: 400,
                ..TrainConfig::default()
            };
            let h = train(&cfg, &data).unwrap();
            bests.push(h.best_unbiased_acc);
        }
        println!(
            "simultaneous backend {label:14} mean {:.4} [{}] {:.0}s",
            mean(&bests),
            bests.iter().map(|b| format!("{b:.3}")).collect::<Vec<_>>().join(", "),
            t0.elapsed().as_secs_f64()
        );
    }
}
