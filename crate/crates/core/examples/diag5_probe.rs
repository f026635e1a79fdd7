// Scratch: within-epoch peak shapes, eval every K iterations.
use selecmix_core::evalmetrics::{accuracy, Subset};
use selecmix_core::losses;
use selecmix_core::model::{adam_step, backward, forward_classifier, forward_encoder, MlpParams, OptimizerState};
use selecmix_core::numerics::Rng;
use selecmix_core::selecmix::{selecmix_batch, MixMode, SimilarityBackend};
use selecmix_core::synthdata::{self, DatasetConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n_train: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(16000);
    let mode: String = args.get(2).cloned().unwrap_or("selecmix".into());
    let iters: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(250);

    let dcfg = DatasetConfig { n_train, n_test: 4000, alpha: 0.01, seed: 1, ..DatasetConfig::default() };
    let train_ds = synthdata::generate(&dcfg).unwrap();
    let (unbiased, _) = synthdata::generate_eval(&dcfg).unwrap();
    let dim = dcfg.feature_dim();
    let c = dcfg.num_classes;

    let mut init_d = Rng::with_stream(1, "trainer/init-debiased");
    let mut theta = MlpParams::new_classifier(&[dim, 100, 100, c], &mut init_d);
    let mut opt_t = OptimizerState::new(&theta, 5e-3);
    let mut init_a = Rng::with_stream(1, "trainer/init-aux");
    let mut phi = MlpParams::new_encoder(&[dim, 100, 100, 32], &mut init_a);
    let mut opt_p = OptimizerState::new(&phi, 1e-2);
    let mut shuffle = Rng::with_stream(1, "trainer/shuffle");
    let mut mix = Rng::with_stream(1, "trainer/mix");

    let mut indices: Vec<usize> = (0..train_ds.len()).collect();
    shuffle.shuffle(&mut indices);
    let mut cursor = 0usize;
    let mut best = (0.0f64, 0usize);
    print!("iters:");
    for it in 1..=iters {
        if cursor + 256 > indices.len() {
            shuffle.shuffle(&mut indices);
            cursor = 0;
        }
        let chunk = &indices[cursor..cursor + 256];
        cursor += 256;
        let batch = train_ds.minibatch(chunk);
        // theta step
        match mode.as_str() {
            "vanilla" => {
                let (logits, cache) = forward_classifier(&theta, &batch.x).unwrap();
                let lr = losses::ce_hard(&logits, &batch.y).unwrap();
                let g = backward(&theta, &cache, &lr.grad_input).unwrap();
                adam_step(&mut opt_t, &mut theta, &g);
            }
            _ => {
                let backend = SimilarityBackend::GscCosine { encoder: &phi };
                let m = selecmix_batch(&batch, &backend, MixMode::Both, &mut mix).unwrap();
                let (logits, cache) = forward_classifier(&theta, &m.inputs).unwrap();
                let lr = losses::ce(&logits, &m.labels).unwrap();
                let g = backward(&theta, &cache, &lr.grad_input).unwrap();
                adam_step(&mut opt_t, &mut theta, &g);
            }
        }
        // phi step
        let (z, cache) = forward_encoder(&phi, &batch.x).unwrap();
        let lr = losses::gsc(&z, &batch.y, 0.2, 0.7, losses::PositiveMode::SkipEmpty).unwrap();
        let g = backward(&phi, &cache, &lr.grad_input).unwrap();
        adam_step(&mut opt_p, &mut phi, &g);

        if it % 5 == 0 {
            let acc = accuracy(&theta, &unbiased, Subset::All).unwrap();
            if acc > best.0 { best = (acc, it); }
            print!(" {it}:{acc:.3}");
        }
    }
    println!();
    println!("mode {mode} n {n_train} peak {:.4} at iter {}", best.0, best.1);
}
