use vocablab_core::corpus::{CaseKind, CorpusKind, WordSample};
use vocablab_core::models::ClassSet;
use vocablab_core::render::*;

fn main() {
    let s = WordSample { text: "cab".into(), normalized: "cab".into(), corpus_kind: CorpusKind::Ls, case_kind: CaseKind::Lower };
    let img = rasterize(&s, &StyleParams { noise_sigma: 0.0, ..Default::default() }, 20).unwrap();
    println!("boxes: {:?}", img.char_boxes);
    for b in &img.char_boxes {
        let sb = shrink_box(b, DEFAULT_SHRINK).unwrap();
        println!("shrunk: {:?} -> cells x {:.2}..{:.2} y {:.2}..{:.2}", sb,
            sb.x0 as f64/4.0, sb.x1 as f64/4.0, sb.y0 as f64/4.0, sb.y1 as f64/4.0);
    }
    let classes = ClassSet::standard();
    let t = make_seg_target(&img, &classes, DEFAULT_SHRINK).unwrap();
    for (i, r) in t.regions.iter().enumerate() { println!("region {i}: {} cells {:?}", r.len(), r); }
    for y in 0..FEAT_H {
        let row: String = (0..FEAT_W).map(|x| {
            let c = t.map[y*FEAT_W+x];
            if c == classes.background_index() { '.' } else { classes.char_at(c).unwrap() }
        }).collect();
        println!("{row}");
    }
}
