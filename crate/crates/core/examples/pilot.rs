//! Scale pilot for the directional experiments: trains the attention and
//! segmentation models on toy LS/RS data and prints the gap structure.

use vocablab_core::autodiff::AdamHyper;
use vocablab_core::corpus::{bundled_reserve_vocabulary, bundled_train_vocabulary, Vocabulary};
use vocablab_core::harness::{eval_model, run_synth, Dataset, SynthKind};
use vocablab_core::metrics::in_vocab_rate;
use vocablab_core::models::{CntxKind, Model, ModelConfig, PredKind};
use vocablab_core::render::StyleParams;
use vocablab_core::rng::derive_seed;

fn toy_vocab(n: usize, reserve: bool) -> Vocabulary {
    let base = if reserve {
        bundled_reserve_vocabulary()
    } else {
        bundled_train_vocabulary()
    };
    let words: Vec<&str> = base
        .iter()
        .filter(|w| w.len() >= 3 && w.len() <= 6)
        .take(n)
        .collect();
    Vocabulary::from_words(words, if reserve { "toy-reserve" } else { "toy" }).unwrap()
}

fn main() {
    let t0 = std::time::Instant::now();
    let args: Vec<String> = std::env::args().collect();
    let steps: u64 = args.get(1).map_or(500, |s| s.parse().unwrap());
    let batch: usize = args.get(2).map_or(16, |s| s.parse().unwrap());
    let n_train: u64 = args.get(3).map_or(1800, |s| s.parse().unwrap());

    let dir = std::env::temp_dir().join("vocablab-pilot");
    let _ = std::fs::remove_dir_all(&dir);
    let vocab = toy_vocab(60, false);
    let held = toy_vocab(40, true);
    let style = StyleParams::default();
    let seed = 1u64;

    let d_ls = dir.join("ls");
    let d_rs = dir.join("rs");
    let t_in = dir.join("tin");
    let t_out = dir.join("tout");
    run_synth(SynthKind::Ls, 0.0, n_train, derive_seed(seed, "ls", 0), &d_ls, &vocab, &style).unwrap();
    run_synth(SynthKind::Rs, 0.0, n_train, derive_seed(seed, "rs", 0), &d_rs, &vocab, &style).unwrap();
    run_synth(SynthKind::Ls, 0.0, 240, derive_seed(seed, "tin", 0), &t_in, &vocab, &style).unwrap();
    run_synth(SynthKind::Ls, 0.0, 240, derive_seed(seed, "tout", 0), &t_out, &held, &style).unwrap();
    println!("[{:6.1}s] synth done", t0.elapsed().as_secs_f64());

    let test_in = Dataset::load(&t_in).unwrap();
    let test_out = Dataset::load(&t_out).unwrap();

    for (pred, data_dir, tag) in [
        (PredKind::Attn, &d_ls, "attn-LS"),
        (PredKind::Seg, &d_ls, "seg-LS"),
        (PredKind::Attn, &d_rs, "attn-RS"),
    ] {
        let data = Dataset::load(data_dir).unwrap();
        let mut model = Model::<f32>::new(ModelConfig::new(pred, CntxKind::None, seed)).unwrap();
        let mut log = Vec::new();
        vocablab_core::harness::train_model_steps(
            &mut model,
            &data,
            0..steps,
            batch,
            &AdamHyper::default(),
            seed,
            &mut log,
        )
        .unwrap();
        let pin = dir.join(format!("{tag}-pin.jsonl"));
        let pout = dir.join(format!("{tag}-pout.jsonl"));
        let ein = eval_model(&model, &test_in, &pin).unwrap();
        let eout = eval_model(&model, &test_out, &pout).unwrap();
        let mut preds = Vec::new();
        for p in [&pin, &pout] {
            preds.extend(
                vocablab_core::harness::read_predictions(p)
                    .unwrap()
                    .into_iter()
                    .map(|x| x.pred),
            );
        }
        let rate = in_vocab_rate(&preds, &vocab).unwrap();
        println!(
            "[{:6.1}s] {tag}: loss {:.3} in {:.1} out {:.1} gap {:+.1} ivr {:.2}",
            t0.elapsed().as_secs_f64(),
            log.last().unwrap().loss,
            ein.accuracy,
            eout.accuracy,
            ein.accuracy - eout.accuracy,
            rate,
        );
    }
}
