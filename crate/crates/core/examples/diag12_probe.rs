// Scratch: harder bias + pretrained auxiliaries (paper's robustness regime).
use selecmix_core::synthdata::{self, DatasetConfig};
use selecmix_core::trainer::{train, AuxLossKind, AuxSchedule, BackendKind, Strategy, TrainConfig, TrainData};

fn mean(v: &[f64]) -> f64 { v.iter().sum::<f64>() / v.len() as f64 }

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let sigma_b: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.3);
    let pre: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2);
    let (n, bsz, ep) = (24000usize, 768usize, 6usize);
    let dcfg = DatasetConfig {
        n_train: n, n_test: 2500, alpha: 0.01, bias_noise: sigma_b, seed: 1,
        ..DatasetConfig::default()
    };
    let train_ds = synthdata::generate(&dcfg).unwrap();
    let (unbiased, conflict) = synthdata::generate_eval(&dcfg).unwrap();
    let data = TrainData { train: &train_ds, unbiased: &unbiased, conflict: &conflict };
    let arms = [
        ("gsc-cosine", BackendKind::GscCosine, AuxLossKind::Gsc),
        ("gce-cosine", BackendKind::GceCosine, AuxLossKind::Gce),
        ("gce-l2", BackendKind::GceL2, AuxLossKind::Gce),
        ("gce-kl", BackendKind::GceKl, AuxLossKind::Gce),
        ("ground-truth", BackendKind::GroundTruth, AuxLossKind::Gsc),
    ];
    for (label, backend, aux_loss) in arms {
        let mut bests = Vec::new();
        for seed in [1u64, 2] {
            let cfg = TrainConfig {
                epochs: ep, seed, strategy: Strategy::SelecMixAb, backend, aux_loss,
                aux_schedule: AuxSchedule::Pretrain(pre), batch_size: bsz,
                lambda_base: 0.0, lambda_ours: 1.0,
                sim_stat_sample: 400, sim_stat_pairs: 400,
                ..TrainConfig::default()
            };
            let h = train(&cfg, &data).unwrap();
            bests.push(h.best_unbiased_acc);
        }
        println!("sigma_b {sigma_b} pre({pre}) {label:14} mean {:.4} [{}]",
            mean(&bests),
            bests.iter().map(|b| format!("{b:.3}")).collect::<Vec<_>>().join(", "));
    }
}
