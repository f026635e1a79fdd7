// Scratch: per-epoch dynamics of selection quality vs debiased accuracy.
use selecmix_core::synthdata::{self, DatasetConfig};
use selecmix_core::trainer::{train, Strategy, TrainConfig, TrainData};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let strategy: Strategy = args
        .get(1)
        .map(|s| s.parse().unwrap())
        .unwrap_or(Strategy::SelecMixAb);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(15);
    let alpha: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let lr_aux: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1e-2);
    let lr_deb: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(5e-3);

    let dcfg = DatasetConfig {
        n_train: 8000,
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
        seed: 1,
        strategy,
        lambda_base: lb,
        lambda_ours: lo,
        lr_aux,
        lr_debiased: lr_deb,
        sim_stat_sample: 1000,
        sim_stat_pairs: 1000,
        ..TrainConfig::default()
    };
    let h = train(&cfg, &data).unwrap();
    println!("strategy {} alpha {alpha} lr_aux {lr_aux} lr_deb {lr_deb}", strategy.as_str());
    println!("ep  unb    conf   loss   aux    cp_sim cn_sim rec+  rec-");
    if let Some(s) = h.initial_sim {
        println!(
            " 0  -      -      -      -      {:+.3} {:+.3}",
            s.contradicting_positives.mean, s.contradicting_negatives.mean
        );
    }
    for r in &h.records {
        println!(
            "{:2}  {:.3}  {:.3}  {:.3}  {:.3}  {:+.3} {:+.3} {} {}",
            r.epoch,
            r.unbiased_acc,
            r.conflict_acc,
            r.train_loss,
            r.aux_loss,
            r.sim.map(|s| s.contradicting_positives.mean).unwrap_or(f64::NAN),
            r.sim.map(|s| s.contradicting_negatives.mean).unwrap_or(f64::NAN),
            r.recall_positive.map(|v| format!("{v:.2}")).unwrap_or("-".into()),
            r.recall_negative.map(|v| format!("{v:.2}")).unwrap_or("-".into()),
        );
    }
}
