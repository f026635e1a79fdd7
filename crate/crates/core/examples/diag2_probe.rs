// Scratch: isolate the selecmix vs gt-selecmix gap.
use selecmix_core::synthdata::{self, DatasetConfig};
use selecmix_core::trainer::{
    train, AuxSchedule, Strategy, TrainConfig, TrainData,
};

fn run(label: &str, cfg: TrainConfig, alpha: f64) {
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
    let h = train(&cfg, &data).unwrap();
    let traj: Vec<String> = h.records.iter().map(|r| format!("{:.3}", r.unbiased_acc)).collect();
    println!(
        "{label:28} alpha {alpha:5} best {:.4} @ep{:2} conflict@best? final {:.4} | {}",
        h.best_unbiased_acc,
        h.best_epoch,
        h.final_unbiased_acc,
        traj.join(" ")
    );
}

fn main() {
    let base = TrainConfig {
        epochs: 12,
        seed: 1,
        lambda_base: 0.0,
        lambda_ours: 1.0,
        sim_stat_sample: 500,
        sim_stat_pairs: 500,
        ..TrainConfig::default()
    };

    // Frozen, pre-clustered encoder: does perfect-from-start selection match GT?
    run(
        "selecmix-AB pretrain(15)",
        TrainConfig {
            strategy: Strategy::SelecMixAb,
            aux_schedule: AuxSchedule::Pretrain(15),
            ..base.clone()
        },
        0.01,
    );
    run(
        "gt-selecmix-AB",
        TrainConfig {
            strategy: Strategy::GtSelecMixAb,
            ..base.clone()
        },
        0.01,
    );
    // Supply-equivalent references.
    run(
        "vanilla alpha=0.25",
        TrainConfig {
            strategy: Strategy::Vanilla,
            lambda_base: 1.0,
            lambda_ours: 0.0,
            ..base.clone()
        },
        0.25,
    );
    run(
        "vanilla alpha=0.10",
        TrainConfig {
            strategy: Strategy::Vanilla,
            lambda_base: 1.0,
            lambda_ours: 0.0,
            ..base.clone()
        },
        0.10,
    );
}
