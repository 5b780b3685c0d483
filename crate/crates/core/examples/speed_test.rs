use std::time::Instant;
use vocablab_core::autodiff::AdamHyper;
use vocablab_core::corpus::{sample_ls_corpus, Vocabulary};
use vocablab_core::models::{Batch, CntxKind, Model, ModelConfig, PredKind};
use vocablab_core::render::{rasterize, StyleParams};
use vocablab_core::rng::derive_seed;
use vocablab_core::Graph;

fn main() {
    let words: Vec<&str> = vec!["salad","orbit","tiger","mixer","candle","forest","bridge","planet","copper","violet","magnet","august","barrel","cactus","dental","ement","falcon","garlic","hazard","icicle"];
    let vocab = Vocabulary::from_words(words, "speed").unwrap();
    let samples = sample_ls_corpus(&vocab, 96, 7).unwrap();
    let style = StyleParams::default();
    let imgs: Vec<_> = samples.iter().enumerate()
        .filter_map(|(i, s)| rasterize(s, &style, derive_seed(1, "r", i as u64)).ok())
        .collect();
    println!("rendered {} images", imgs.len());
    for (pred, cntx) in [(PredKind::Attn, CntxKind::None), (PredKind::Seg, CntxKind::None),
                          (PredKind::Ctc, CntxKind::Blstm), (PredKind::Attn, CntxKind::Ppm)] {
        let mut model = Model::<f32>::new(ModelConfig::new(pred, cntx, 3)).unwrap();
        let hyper = AdamHyper::default();
        let refs: Vec<&_> = imgs.iter().take(12).collect();
        let batch = Batch::from_images(&refs).unwrap();
        let t0 = Instant::now();
        let steps = 10;
        for _ in 0..steps {
            let mut g = Graph::new();
            let lease = model.store.lease(&mut g);
            let fwd = model.training_forward(&mut g, &lease, &batch).unwrap();
            g.backward(fwd.loss()).unwrap();
            model.store.adam_step(&g, &lease, &hyper);
        }
        let dt = t0.elapsed().as_secs_f64();
        println!("{:?}-{:?}: {:.3} s/step (batch 12)", pred, cntx, dt / steps as f64);
        // inference speed
        let t0 = Instant::now();
        for img in imgs.iter().take(24) { let _ = model.infer(&img.pixels).unwrap(); }
        println!("   infer: {:.1} ms/image", t0.elapsed().as_secs_f64() / 24.0 * 1000.0);
    }
}
