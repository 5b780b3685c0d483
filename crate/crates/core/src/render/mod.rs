//! Deterministic rasterizer: WordSamples in, labeled grayscale images with
//! per-character boxes out.
//!
//! Glyphs come from the built-in bitmap font, scaled and laid out left to
//! right with jittered spacing, then composited over a flat background
//! with optional box blur and additive Gaussian noise. Everything is a
//! pure function of `(sample, style, seed)`.

mod font;

pub use font::{glyph, Glyph, GLYPH_SIZE};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusKind, WordSample};
use crate::models::{ClassSet, PredKind};
use crate::rng::stream_rng;

/// Canvas height in pixels.
pub const IMAGE_H: usize = 32;
/// Canvas width in pixels.
pub const IMAGE_W: usize = 128;
/// Feature-map downsampling factor of the trunk.
pub const FEATURE_STRIDE: usize = 4;
/// Segmentation target resolution.
pub const FEAT_H: usize = IMAGE_H / FEATURE_STRIDE;
pub const FEAT_W: usize = IMAGE_W / FEATURE_STRIDE;
/// Default character-box shrink factor for segmentation supervision.
pub const DEFAULT_SHRINK: f64 = 0.5;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("glyph {0:?} is not in the built-in font")]
    UnsupportedGlyph(char),
    #[error("word {label:?} needs {width}px but the canvas is {max}px wide")]
    DoesNotFit {
        label: String,
        width: usize,
        max: usize,
    },
    #[error("degenerate box with zero area")]
    DegenerateBox,
    #[error("invalid style: {0}")]
    BadStyle(String),
    #[error("character {0:?} is outside the class set")]
    OutOfCharset(char),
    #[error("not a valid 8-bit P5 PGM file: {0}")]
    BadPgm(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Axis-aligned box in pixel units, end-exclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl CharBox {
    pub fn width(&self) -> usize {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> usize {
        self.y1.saturating_sub(self.y0)
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, other: &CharBox) -> bool {
        self.x0 <= other.x0 && self.y0 <= other.y0 && other.x1 <= self.x1 && other.y1 <= self.y1
    }
}

/// Rendered word image with tight per-character boxes.
#[derive(Clone, Debug)]
pub struct TextImage {
    /// Row-major intensities in [0,1], `IMAGE_H x IMAGE_W`.
    pub pixels: Vec<f32>,
    pub label: String,
    pub char_boxes: Vec<CharBox>,
    pub corpus_kind: CorpusKind,
}

/// Appearance parameters shared by every corpus so the datasets differ
/// only in their text.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StyleParams {
    pub glyph_scale: usize,
    pub spacing_px: usize,
    pub fg_intensity: f64,
    pub bg_intensity: f64,
    pub noise_sigma: f64,
    pub blur_enabled: bool,
}

impl Default for StyleParams {
    fn default() -> Self {
        // 5px spacing keeps neighboring shrunken boxes at least two
        // feature cells apart, so segmentation regions never merge
        StyleParams {
            glyph_scale: 2,
            spacing_px: 5,
            fg_intensity: 0.85,
            bg_intensity: 0.15,
            noise_sigma: 0.03,
            blur_enabled: false,
        }
    }
}

impl StyleParams {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.glyph_scale < 1 {
            return Err(RenderError::BadStyle("glyph_scale must be >= 1".into()));
        }
        for v in [self.fg_intensity, self.bg_intensity] {
            if !(0.0..=1.0).contains(&v) {
                return Err(RenderError::BadStyle(format!("intensity {v} outside [0,1]")));
            }
        }
        if (self.fg_intensity - self.bg_intensity).abs() < 0.3 {
            return Err(RenderError::BadStyle(
                "fg and bg means must differ by at least 0.3".into(),
            ));
        }
        if self.noise_sigma < 0.0 {
            return Err(RenderError::BadStyle("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Draw a sample onto the 32x128 canvas. Fails on characters missing from
/// the font and on words too wide for the canvas.
pub fn rasterize(
    sample: &WordSample,
    style: &StyleParams,
    seed: u64,
) -> Result<TextImage, RenderError> {
    style.validate()?;
    let s = style.glyph_scale;
    let chars: Vec<char> = sample.text.chars().collect();
    let glyphs: Vec<&Glyph> = chars
        .iter()
        .map(|&c| font::glyph(c).ok_or(RenderError::UnsupportedGlyph(c)))
        .collect::<Result<_, _>>()?;

    let mut rng = stream_rng(seed, "raster", 0);
    // Deterministic draw order: gap jitters, vertical offset, left margin.
    let gaps: Vec<usize> = (0..glyphs.len().saturating_sub(1))
        .map(|_| style.spacing_px + rng.gen_range(0..=1usize))
        .collect();
    let total: usize =
        glyphs.iter().map(|g| g.ink_width() * s).sum::<usize>() + gaps.iter().sum::<usize>();
    if total > IMAGE_W {
        return Err(RenderError::DoesNotFit {
            label: sample.text.clone(),
            width: total,
            max: IMAGE_W,
        });
    }
    let cell = GLYPH_SIZE * s;
    let y_base = (IMAGE_H - cell) / 2;
    let y_slack = (IMAGE_H - cell).min(4);
    let y_off = if y_slack > 0 {
        let j = rng.gen_range(0..=y_slack) as isize - (y_slack / 2) as isize;
        (y_base as isize + j).clamp(0, (IMAGE_H - cell) as isize) as usize
    } else {
        y_base
    };
    let x_slack = (IMAGE_W - total).min(6);
    let x0 = rng.gen_range(0..=x_slack);

    let bg = style.bg_intensity as f32;
    let fg = style.fg_intensity as f32;
    let mut pixels = vec![bg; IMAGE_H * IMAGE_W];
    let mut boxes = Vec::with_capacity(glyphs.len());
    let mut pen = x0;
    for (i, g) in glyphs.iter().enumerate() {
        for r in g.row_min..=g.row_max {
            for c in g.col_min..=g.col_max {
                if !g.pixel(r, c) {
                    continue;
                }
                let py = y_off + r * s;
                let px = pen + (c - g.col_min) * s;
                for dy in 0..s {
                    for dx in 0..s {
                        pixels[(py + dy) * IMAGE_W + px + dx] = fg;
                    }
                }
            }
        }
        boxes.push(CharBox {
            x0: pen,
            y0: y_off + g.row_min * s,
            x1: pen + g.ink_width() * s,
            y1: y_off + (g.row_max + 1) * s,
        });
        pen += g.ink_width() * s;
        if i + 1 < glyphs.len() {
            pen += gaps[i];
        }
    }

    if style.blur_enabled {
        pixels = box_blur(&pixels, IMAGE_H, IMAGE_W);
    }
    if style.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, style.noise_sigma).expect("validated sigma");
        for p in pixels.iter_mut() {
            *p = (*p + normal.sample(&mut rng) as f32).clamp(0.0, 1.0);
        }
    }

    Ok(TextImage {
        pixels,
        label: sample.text.clone(),
        char_boxes: boxes,
        corpus_kind: sample.corpus_kind,
    })
}

fn box_blur(src: &[f32], h: usize, w: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f32;
            let mut n = 0.0f32;
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (sy, sx) = (y as isize + dy, x as isize + dx);
                    if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                        continue;
                    }
                    acc += src[sy as usize * w + sx as usize];
                    n += 1.0;
                }
            }
            out[y * w + x] = acc / n;
        }
    }
    out
}

/// Same center, width and height multiplied by `factor`, clamped so the
/// result stays at least one pixel and inside the source box.
pub fn shrink_box(b: &CharBox, factor: f64) -> Result<CharBox, RenderError> {
    assert!(factor > 0.0 && factor <= 1.0, "factor {factor} outside (0,1]");
    if b.area() == 0 {
        return Err(RenderError::DegenerateBox);
    }
    let (cx, cy) = (
        (b.x0 + b.x1) as f64 / 2.0,
        (b.y0 + b.y1) as f64 / 2.0,
    );
    let (w, h) = (b.width() as f64 * factor, b.height() as f64 * factor);
    let mut x0 = (cx - w / 2.0).round() as usize;
    let mut x1 = (cx + w / 2.0).round() as usize;
    let mut y0 = (cy - h / 2.0).round() as usize;
    let mut y1 = (cy + h / 2.0).round() as usize;
    if x1 <= x0 {
        x0 = x0.min(b.x1 - 1).max(b.x0);
        x1 = x0 + 1;
    }
    if y1 <= y0 {
        y0 = y0.min(b.y1 - 1).max(b.y0);
        y1 = y0 + 1;
    }
    Ok(CharBox { x0, y0, x1, y1 })
}

/// Per-pixel class map at feature resolution plus the per-character cell
/// lists it was painted from (later characters overwrite earlier ones).
#[derive(Clone, Debug)]
pub struct SegTarget {
    /// `FEAT_H x FEAT_W` class indices; background is
    /// `ClassSet::background_index()`.
    pub map: Vec<usize>,
    /// For each character of the label, the feature cells it owns. Empty
    /// when the region was entirely overwritten or out of bounds.
    pub regions: Vec<Vec<(usize, usize)>>,
}

/// Build the segmentation supervision map: each character paints its
/// shrunken, downscaled box with its class index, in label order.
pub fn make_seg_target(
    img: &TextImage,
    classes: &ClassSet,
    factor: f64,
) -> Result<SegTarget, RenderError> {
    let chars: Vec<char> = img.label.chars().collect();
    debug_assert_eq!(chars.len(), img.char_boxes.len());
    // ownership map: usize::MAX = background
    let mut owner = vec![usize::MAX; FEAT_H * FEAT_W];
    for (i, (c, b)) in chars.iter().zip(&img.char_boxes).enumerate() {
        classes
            .index_of(*c)
            .ok_or(RenderError::OutOfCharset(*c))?;
        let sb = shrink_box(b, factor)?;
        // nearest-cell rounding keeps neighboring shrunken regions from
        // touching at feature resolution
        let stride = FEATURE_STRIDE as f64;
        let fx0 = ((sb.x0 as f64 / stride).round() as usize).min(FEAT_W - 1);
        let fy0 = ((sb.y0 as f64 / stride).round() as usize).min(FEAT_H - 1);
        let fx1 = ((sb.x1 as f64 / stride).round() as usize).clamp(fx0 + 1, FEAT_W);
        let mut fy1 = ((sb.y1 as f64 / stride).round() as usize).clamp(fy0 + 1, FEAT_H);
        let mut fy0 = fy0;
        // regions stay at least two cells; growing vertically can never
        // reach another character on a single line of text
        if (fx1 - fx0) * (fy1 - fy0) < 2 {
            if fy1 < FEAT_H {
                fy1 += 1;
            } else {
                fy0 -= 1;
            }
        }
        for y in fy0..fy1 {
            for x in fx0..fx1 {
                owner[y * FEAT_W + x] = i;
            }
        }
    }
    let mut regions = vec![Vec::new(); chars.len()];
    let mut map = vec![classes.background_index(); FEAT_H * FEAT_W];
    for y in 0..FEAT_H {
        for x in 0..FEAT_W {
            let o = owner[y * FEAT_W + x];
            if o != usize::MAX {
                regions[o].push((y, x));
                map[y * FEAT_W + x] = classes.index_of(chars[o]).expect("checked above");
            }
        }
    }
    Ok(SegTarget { map, regions })
}

/// Case-folded class indices of a label; attention labels get a trailing
/// EOS.
pub fn encode_label(
    label: &str,
    classes: &ClassSet,
    head: PredKind,
) -> Result<Vec<usize>, RenderError> {
    let mut out = Vec::with_capacity(label.chars().count() + 1);
    for c in label.chars() {
        out.push(classes.index_of(c).ok_or(RenderError::OutOfCharset(c))?);
    }
    if head == PredKind::Attn {
        out.push(classes.eos_index());
    }
    Ok(out)
}

// ---- PGM I/O ---------------------------------------------------------------

/// Write an 8-bit binary PGM (P5).
pub fn write_pgm(img: &TextImage, path: &std::path::Path) -> Result<(), RenderError> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "P5\n{} {}\n255\n", IMAGE_W, IMAGE_H)?;
    let bytes: Vec<u8> = img
        .pixels
        .iter()
        .map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    f.write_all(&bytes)?;
    Ok(())
}

/// Read an 8-bit binary PGM back into [0,1] intensities.
pub fn read_pgm(path: &std::path::Path) -> Result<Vec<f32>, RenderError> {
    let bytes = std::fs::read(path)?;
    let header_err = |m: &str| RenderError::BadPgm(format!("{m} ({})", path.display()));
    // P5 <w> <h> <max> separated by whitespace, then raw bytes
    let mut fields = Vec::new();
    let mut pos = 0usize;
    while fields.len() < 4 && pos < bytes.len() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(
            std::str::from_utf8(&bytes[start..pos])
                .map_err(|_| header_err("non-ascii header"))?
                .to_string(),
        );
    }
    if fields.len() < 4 || fields[0] != "P5" {
        return Err(header_err("missing P5 header"));
    }
    let w: usize = fields[1].parse().map_err(|_| header_err("bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| header_err("bad height"))?;
    if fields[3] != "255" {
        return Err(header_err("expected 8-bit maxval 255"));
    }
    pos += 1; // single whitespace byte after maxval
    if bytes.len() < pos + w * h {
        return Err(header_err("truncated pixel data"));
    }
    Ok(bytes[pos..pos + w * h]
        .iter()
        .map(|&b| f32::from(b) / 255.0)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{expand_case_variants, CaseKind};
    use proptest::prelude::*;

    fn sample(text: &str) -> WordSample {
        WordSample {
            text: text.to_string(),
            normalized: crate::corpus::normalize_lossy(text),
            corpus_kind: CorpusKind::Ls,
            case_kind: CaseKind::Lower,
        }
    }

    fn quiet_style() -> StyleParams {
        StyleParams {
            noise_sigma: 0.0,
            ..StyleParams::default()
        }
    }

    #[test]
    fn single_glyph_box_and_background() {
        let img = rasterize(&sample("A"), &quiet_style(), 7).unwrap();
        assert_eq!(img.char_boxes.len(), 1);
        let b = img.char_boxes[0];
        let bg = 0.15f32;
        for y in 0..IMAGE_H {
            for x in 0..IMAGE_W {
                let inside = y >= b.y0 && y < b.y1 && x >= b.x0 && x < b.x1;
                if !inside {
                    assert_eq!(img.pixels[y * IMAGE_W + x], bg, "pixel ({y},{x})");
                }
            }
        }
    }

    #[test]
    fn rasterize_is_deterministic() {
        let st = StyleParams::default();
        let a = rasterize(&sample("Mixer7"), &st, 99).unwrap();
        let b = rasterize(&sample("Mixer7"), &st, 99).unwrap();
        assert_eq!(a.pixels, b.pixels);
        assert_eq!(a.char_boxes, b.char_boxes);
    }

    #[test]
    fn swapped_pair_renders_identical_glyph_crops() {
        let st = quiet_style();
        let ab = rasterize(&sample("ab"), &st, 5).unwrap();
        let ba = rasterize(&sample("ba"), &st, 5).unwrap();
        let crop = |img: &TextImage, i: usize| -> Vec<f32> {
            let b = img.char_boxes[i];
            let mut out = Vec::new();
            for y in b.y0..b.y1 {
                for x in b.x0..b.x1 {
                    out.push(img.pixels[y * IMAGE_W + x]);
                }
            }
            out
        };
        // 'a' is glyph 0 of "ab" and glyph 1 of "ba"
        assert_eq!(crop(&ab, 0), crop(&ba, 1));
        assert_eq!(crop(&ab, 1), crop(&ba, 0));
    }

    #[test]
    fn too_long_word_is_rejected() {
        let err = rasterize(&sample("mmmmmmmmmmmm"), &StyleParams::default(), 1).unwrap_err();
        assert!(matches!(err, RenderError::DoesNotFit { .. }));
    }

    #[test]
    fn unsupported_glyph_is_an_error() {
        let err = rasterize(&sample("naïve"), &StyleParams::default(), 1).unwrap_err();
        assert!(matches!(err, RenderError::UnsupportedGlyph('ï')));
    }

    #[test]
    fn foreground_pixels_stay_inside_boxes() {
        let st = quiet_style();
        for (i, text) in ["Word", "TESTER", "aptly9", "x"].iter().enumerate() {
            let img = rasterize(&sample(text), &st, i as u64).unwrap();
            for y in 0..IMAGE_H {
                for x in 0..IMAGE_W {
                    if (img.pixels[y * IMAGE_W + x] - 0.15).abs() > 0.15 {
                        let inside = img.char_boxes.iter().any(|b| {
                            y >= b.y0 && y < b.y1 && x >= b.x0 && x < b.x1
                        });
                        assert!(inside, "ink outside boxes at ({y},{x}) in {text}");
                    }
                }
            }
        }
    }

    #[test]
    fn shrink_box_examples() {
        let b = CharBox { x0: 0, y0: 0, x1: 8, y1: 8 };
        assert_eq!(shrink_box(&b, 1.0).unwrap(), b);
        assert_eq!(
            shrink_box(&b, 0.5).unwrap(),
            CharBox { x0: 2, y0: 2, x1: 6, y1: 6 }
        );
        let degenerate = CharBox { x0: 3, y0: 3, x1: 3, y1: 8 };
        assert!(shrink_box(&degenerate, 0.5).is_err());
    }

    #[test]
    fn seg_target_single_char_one_region() {
        let classes = ClassSet::standard();
        let img = rasterize(&sample("k"), &quiet_style(), 3).unwrap();
        let t = make_seg_target(&img, &classes, DEFAULT_SHRINK).unwrap();
        assert_eq!(t.regions.len(), 1);
        assert!(t.regions[0].len() >= 2, "region too small to vote on");
        let fg: usize = t
            .map
            .iter()
            .filter(|&&c| c != classes.background_index())
            .count();
        assert_eq!(fg, t.regions[0].len());
        assert!(t.map.iter().any(|&c| c == classes.index_of('k').unwrap()));
    }

    #[test]
    fn seg_target_background_dominates() {
        let classes = ClassSet::standard();
        let img = rasterize(&sample("pact"), &quiet_style(), 11).unwrap();
        let t = make_seg_target(&img, &classes, DEFAULT_SHRINK).unwrap();
        let bg = t
            .map
            .iter()
            .filter(|&&c| c == classes.background_index())
            .count();
        // shrunken boxes cover less area than the boxes themselves
        let box_cells: usize = img
            .char_boxes
            .iter()
            .map(|b| {
                (b.width().div_ceil(FEATURE_STRIDE) + 1) * (b.height().div_ceil(FEATURE_STRIDE) + 1)
            })
            .sum();
        assert!(bg >= FEAT_H * FEAT_W - box_cells);
    }

    #[test]
    fn empty_label_gives_all_background() {
        let classes = ClassSet::standard();
        let img = TextImage {
            pixels: vec![0.15; IMAGE_H * IMAGE_W],
            label: String::new(),
            char_boxes: Vec::new(),
            corpus_kind: CorpusKind::Ls,
        };
        let t = make_seg_target(&img, &classes, DEFAULT_SHRINK).unwrap();
        assert!(t.map.iter().all(|&c| c == classes.background_index()));
        assert!(t.regions.is_empty());
    }

    #[test]
    fn encode_label_examples() {
        let classes = ClassSet::standard();
        let a = classes.index_of('a').unwrap();
        let b = classes.index_of('b').unwrap();
        assert_eq!(
            encode_label("ab", &classes, PredKind::Attn).unwrap(),
            vec![a, b, classes.eos_index()]
        );
        assert_eq!(
            encode_label("", &classes, PredKind::Attn).unwrap(),
            vec![classes.eos_index()]
        );
        assert_eq!(
            encode_label("ab", &classes, PredKind::Ctc).unwrap(),
            vec![a, b]
        );
        assert!(matches!(
            encode_label("a€", &classes, PredKind::Ctc),
            Err(RenderError::OutOfCharset('€'))
        ));
    }

    #[test]
    fn appearance_matches_across_corpora() {
        use crate::corpus::{
            bundled_train_vocabulary, sample_ls_corpus, sample_rs_corpus, LengthHistogram,
        };
        let st = StyleParams::default();
        let vocab = bundled_train_vocabulary();
        let ls = sample_ls_corpus(&vocab, 1000, 21).unwrap();
        let hist = LengthHistogram::from_samples(&ls);
        let rs = sample_rs_corpus(&hist, 1000, 22).unwrap();
        let mean_of = |samples: &[WordSample], tag: u64| -> f64 {
            let mut acc = 0.0;
            let mut n = 0u32;
            for (i, s) in samples.iter().enumerate() {
                if let Ok(img) = rasterize(s, &st, crate::rng::derive_seed(tag, "img", i as u64)) {
                    acc += img.pixels.iter().map(|&p| p as f64).sum::<f64>()
                        / img.pixels.len() as f64;
                    n += 1;
                }
            }
            acc / f64::from(n)
        };
        let (m_ls, m_rs) = (mean_of(&ls, 1), mean_of(&rs, 2));
        assert!(
            (m_ls - m_rs).abs() < 0.02,
            "mean intensities diverge: {m_ls} vs {m_rs}"
        );
    }

    #[test]
    fn pgm_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let img = rasterize(&sample("Round5!"), &StyleParams::default(), 17).unwrap();
        write_pgm(&img, &path).unwrap();
        let back = read_pgm(&path).unwrap();
        assert_eq!(back.len(), IMAGE_H * IMAGE_W);
        for (a, b) in img.pixels.iter().zip(&back) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn bundled_words_with_punctuation_always_fit() {
        // worst case: longest bundled word, widest variant, appended mark
        let vocab = crate::corpus::bundled_train_vocabulary();
        let st = StyleParams::default();
        for w in vocab.iter() {
            let upper = &expand_case_variants(w, CorpusKind::Ls)[0];
            let text = format!("{}?", upper.text);
            let s = WordSample {
                text,
                normalized: upper.normalized.clone(),
                corpus_kind: CorpusKind::Ls,
                case_kind: CaseKind::Upper,
            };
            assert!(
                rasterize(&s, &st, 0).is_ok(),
                "vocabulary word {w:?} does not fit the canvas"
            );
        }
    }

    proptest! {
        #[test]
        fn shrunken_box_contained_in_original(
            x0 in 0usize..100, y0 in 0usize..24,
            w in 1usize..28, h in 1usize..8,
            factor in 0.05f64..=1.0,
        ) {
            let b = CharBox { x0, y0, x1: x0 + w, y1: y0 + h };
            let s = shrink_box(&b, factor).unwrap();
            prop_assert!(b.contains(&s), "{s:?} not inside {b:?}");
            prop_assert!(s.area() >= 1);
        }
    }
}
