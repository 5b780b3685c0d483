//! Built-in 8x8 bitmap font covering the synthesizer charset: upper and
//! lower case letters, digits, and the six punctuation marks.
//!
//! Glyphs are stored as string art and parsed once; the renderer uses the
//! trimmed ink extent of each glyph for proportional advance and tight
//! character boxes.

use once_cell::sync::Lazy;
use std::collections::HashMap;

pub const GLYPH_SIZE: usize = 8;

#[derive(Clone, Debug)]
pub struct Glyph {
    /// Row-major ink mask, 8x8.
    pub rows: [u8; GLYPH_SIZE],
    /// Inclusive ink column range within the cell.
    pub col_min: usize,
    pub col_max: usize,
    /// Inclusive ink row range within the cell.
    pub row_min: usize,
    pub row_max: usize,
}

impl Glyph {
    pub fn ink_width(&self) -> usize {
        self.col_max - self.col_min + 1
    }

    pub fn ink_height(&self) -> usize {
        self.row_max - self.row_min + 1
    }

    pub fn pixel(&self, row: usize, col: usize) -> bool {
        self.rows[row] & (0x80 >> col) != 0
    }
}

fn parse(rows: [&str; GLYPH_SIZE]) -> Glyph {
    let mut mask = [0u8; GLYPH_SIZE];
    let (mut cmin, mut cmax, mut rmin, mut rmax) = (GLYPH_SIZE, 0, GLYPH_SIZE, 0);
    for (r, line) in rows.iter().enumerate() {
        for (c, ch) in line.chars().enumerate() {
            assert!(c < GLYPH_SIZE, "glyph row too wide: {line:?}");
            if ch == '#' {
                mask[r] |= 0x80 >> c;
                cmin = cmin.min(c);
                cmax = cmax.max(c);
                rmin = rmin.min(r);
                rmax = rmax.max(r);
            }
        }
    }
    assert!(cmin <= cmax, "glyph has no ink");
    Glyph {
        rows: mask,
        col_min: cmin,
        col_max: cmax,
        row_min: rmin,
        row_max: rmax,
    }
}

macro_rules! glyphs {
    ($($ch:literal => [$($row:literal),* $(,)?]),* $(,)?) => {
        {
            let mut m = HashMap::new();
            $( m.insert($ch, parse([$($row),*])); )*
            m
        }
    };
}

static TABLE: Lazy<HashMap<char, Glyph>> = Lazy::new(|| {
    glyphs! {
        'A' => [" ### ", "#   #", "#   #", "#####", "#   #", "#   #", "#   #", "     "],
        'B' => ["#### ", "#   #", "#   #", "#### ", "#   #", "#   #", "#### ", "     "],
        'C' => [" ### ", "#   #", "#    ", "#    ", "#    ", "#   #", " ### ", "     "],
        'D' => ["#### ", "#   #", "#   #", "#   #", "#   #", "#   #", "#### ", "     "],
        'E' => ["#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#####", "     "],
        'F' => ["#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#    ", "     "],
        'G' => [" ### ", "#   #", "#    ", "# ###", "#   #", "#   #", " ### ", "     "],
        'H' => ["#   #", "#   #", "#   #", "#####", "#   #", "#   #", "#   #", "     "],
        'I' => ["#####", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", "#####", "     "],
        'J' => ["  ###", "   # ", "   # ", "   # ", "   # ", "#  # ", " ##  ", "     "],
        'K' => ["#   #", "#  # ", "# #  ", "##   ", "# #  ", "#  # ", "#   #", "     "],
        'L' => ["#    ", "#    ", "#    ", "#    ", "#    ", "#    ", "#####", "     "],
        'M' => ["#   #", "## ##", "# # #", "# # #", "#   #", "#   #", "#   #", "     "],
        'N' => ["#   #", "##  #", "# # #", "#  ##", "#   #", "#   #", "#   #", "     "],
        'O' => [" ### ", "#   #", "#   #", "#   #", "#   #", "#   #", " ### ", "     "],
        'P' => ["#### ", "#   #", "#   #", "#### ", "#    ", "#    ", "#    ", "     "],
        'Q' => [" ### ", "#   #", "#   #", "#   #", "# # #", "#  # ", " ## #", "     "],
        'R' => ["#### ", "#   #", "#   #", "#### ", "# #  ", "#  # ", "#   #", "     "],
        'S' => [" ####", "#    ", "#    ", " ### ", "    #", "    #", "#### ", "     "],
        'T' => ["#####", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", "     "],
        'U' => ["#   #", "#   #", "#   #", "#   #", "#   #", "#   #", " ### ", "     "],
        'V' => ["#   #", "#   #", "#   #", "#   #", "#   #", " # # ", "  #  ", "     "],
        'W' => ["#   #", "#   #", "#   #", "# # #", "# # #", "## ##", "#   #", "     "],
        'X' => ["#   #", "#   #", " # # ", "  #  ", " # # ", "#   #", "#   #", "     "],
        'Y' => ["#   #", "#   #", " # # ", "  #  ", "  #  ", "  #  ", "  #  ", "     "],
        'Z' => ["#####", "    #", "   # ", "  #  ", " #   ", "#    ", "#####", "     "],
        'a' => ["     ", "     ", " ### ", "    #", " ####", "#   #", " ####", "     "],
        'b' => ["#    ", "#    ", "#### ", "#   #", "#   #", "#   #", "#### ", "     "],
        'c' => ["     ", "     ", " ####", "#    ", "#    ", "#    ", " ####", "     "],
        'd' => ["    #", "    #", " ####", "#   #", "#   #", "#   #", " ####", "     "],
        'e' => ["     ", "     ", " ### ", "#   #", "#####", "#    ", " ### ", "     "],
        'f' => ["  ## ", " #   ", "#### ", " #   ", " #   ", " #   ", " #   ", "     "],
        'g' => ["     ", "     ", " ####", "#   #", "#   #", " ####", "    #", " ### "],
        'h' => ["#    ", "#    ", "#### ", "#   #", "#   #", "#   #", "#   #", "     "],
        'i' => ["  #  ", "     ", " ##  ", "  #  ", "  #  ", "  #  ", " ### ", "     "],
        'j' => ["   # ", "     ", "  ## ", "   # ", "   # ", "   # ", "#  # ", " ##  "],
        'k' => ["#    ", "#    ", "#  # ", "# #  ", "##   ", "# #  ", "#  # ", "     "],
        'l' => [" ##  ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### ", "     "],
        'm' => ["     ", "     ", "## ##", "# # #", "# # #", "# # #", "# # #", "     "],
        'n' => ["     ", "     ", "#### ", "#   #", "#   #", "#   #", "#   #", "     "],
        'o' => ["     ", "     ", " ### ", "#   #", "#   #", "#   #", " ### ", "     "],
        'p' => ["     ", "     ", "#### ", "#   #", "#   #", "#### ", "#    ", "#    "],
        'q' => ["     ", "     ", " ####", "#   #", "#   #", " ####", "    #", "    #"],
        'r' => ["     ", "     ", "# ## ", "##   ", "#    ", "#    ", "#    ", "     "],
        's' => ["     ", "     ", " ####", "#    ", " ### ", "    #", "#### ", "     "],
        't' => [" #   ", " #   ", "#### ", " #   ", " #   ", " #   ", "  ## ", "     "],
        'u' => ["     ", "     ", "#   #", "#   #", "#   #", "#   #", " ####", "     "],
        'v' => ["     ", "     ", "#   #", "#   #", "#   #", " # # ", "  #  ", "     "],
        'w' => ["     ", "     ", "#   #", "#   #", "# # #", "# # #", " # # ", "     "],
        'x' => ["     ", "     ", "#   #", " # # ", "  #  ", " # # ", "#   #", "     "],
        'y' => ["     ", "     ", "#   #", "#   #", "#   #", " ####", "    #", " ### "],
        'z' => ["     ", "     ", "#####", "   # ", "  #  ", " #   ", "#####", "     "],
        '0' => [" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### ", "     "],
        '1' => ["  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### ", "     "],
        '2' => [" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####", "     "],
        '3' => [" ### ", "#   #", "    #", "  ## ", "    #", "#   #", " ### ", "     "],
        '4' => ["   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # ", "     "],
        '5' => ["#####", "#    ", "#### ", "    #", "    #", "#   #", " ### ", "     "],
        '6' => [" ### ", "#    ", "#    ", "#### ", "#   #", "#   #", " ### ", "     "],
        '7' => ["#####", "    #", "   # ", "  #  ", " #   ", " #   ", " #   ", "     "],
        '8' => [" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### ", "     "],
        '9' => [" ### ", "#   #", "#   #", " ####", "    #", "    #", " ### ", "     "],
        '.' => ["     ", "     ", "     ", "     ", "     ", " ##  ", " ##  ", "     "],
        ',' => ["     ", "     ", "     ", "     ", " ##  ", " ##  ", "  #  ", " #   "],
        '\'' => [" ##  ", " ##  ", "  #  ", "     ", "     ", "     ", "     ", "     "],
        '-' => ["     ", "     ", "     ", "#### ", "     ", "     ", "     ", "     "],
        '!' => [" #   ", " #   ", " #   ", " #   ", " #   ", "     ", " #   ", "     "],
        '?' => [" ### ", "#   #", "    #", "   # ", "  #  ", "     ", "  #  ", "     "],
    }
});

pub fn glyph(c: char) -> Option<&'static Glyph> {
    TABLE.get(&c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PUNCTUATION;

    #[test]
    fn covers_the_full_charset() {
        for c in ('a'..='z').chain('A'..='Z').chain('0'..='9') {
            assert!(glyph(c).is_some(), "missing glyph {c:?}");
        }
        for c in PUNCTUATION {
            assert!(glyph(c).is_some(), "missing glyph {c:?}");
        }
        assert!(glyph('€').is_none());
    }

    #[test]
    fn ink_extents_are_trimmed_and_bounded() {
        for (c, g) in TABLE.iter() {
            assert!(g.ink_width() <= 6, "glyph {c:?} too wide");
            assert!(g.ink_height() >= 1 && g.ink_height() <= 8);
            // the trimmed extent actually contains ink on its borders
            assert!((g.row_min..=g.row_max).any(|r| g.pixel(r, g.col_min)));
            assert!((g.row_min..=g.row_max).any(|r| g.pixel(r, g.col_max)));
        }
    }

    #[test]
    fn letters_are_tall_enough_for_region_voting() {
        // lowercase x-height glyphs keep >= 5 ink rows so shrunken feature
        // regions stay above the 2-pixel decode threshold at scale 2
        for c in 'a'..='z' {
            let g = glyph(c).unwrap();
            assert!(g.ink_height() >= 5, "glyph {c:?} only {} rows", g.ink_height());
        }
        for c in ('A'..='Z').chain('0'..='9') {
            let g = glyph(c).unwrap();
            assert!(g.ink_height() >= 7, "glyph {c:?} only {} rows", g.ink_height());
        }
    }
}
