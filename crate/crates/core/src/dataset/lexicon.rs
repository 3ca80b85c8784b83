//! Attribute word lists and description statistics.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::EruSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Spatial,
    Color,
    Shape,
    Size,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Spatial, Category::Color, Category::Shape, Category::Size];

    pub fn file_name(self) -> &'static str {
        match self {
            Category::Spatial => "spatial.txt",
            Category::Color => "color.txt",
            Category::Shape => "shape.txt",
            Category::Size => "size.txt",
        }
    }

    fn builtin(self) -> &'static str {
        match self {
            Category::Spatial => include_str!("../../lexicons/spatial.txt"),
            Category::Color => include_str!("../../lexicons/color.txt"),
            Category::Shape => include_str!("../../lexicons/shape.txt"),
            Category::Size => include_str!("../../lexicons/size.txt"),
        }
    }
}

/// One lowercase word set per category.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicons {
    pub spatial: BTreeSet<String>,
    pub color: BTreeSet<String>,
    pub shape: BTreeSet<String>,
    pub size: BTreeSet<String>,
}

fn parse_words(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_lowercase())
        .collect()
}

impl Default for Lexicons {
    fn default() -> Self {
        Lexicons {
            spatial: parse_words(Category::Spatial.builtin()),
            color: parse_words(Category::Color.builtin()),
            shape: parse_words(Category::Shape.builtin()),
            size: parse_words(Category::Size.builtin()),
        }
    }
}

impl Lexicons {
    /// Reads `spatial.txt`, `color.txt`, `shape.txt` and `size.txt` (one
    /// word per line, `#` comments) from `dir`.
    pub fn load(dir: &Path) -> Result<Lexicons> {
        let read = |c: Category| -> Result<BTreeSet<String>> {
            let path = dir.join(c.file_name());
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            Ok(parse_words(&text))
        };
        Ok(Lexicons {
            spatial: read(Category::Spatial)?,
            color: read(Category::Color)?,
            shape: read(Category::Shape)?,
            size: read(Category::Size)?,
        })
    }

    pub fn words(&self, c: Category) -> &BTreeSet<String> {
        match c {
            Category::Spatial => &self.spatial,
            Category::Color => &self.color,
            Category::Shape => &self.shape,
            Category::Size => &self.size,
        }
    }

    /// True if `word` is a color, shape or size term.
    pub fn is_attribute(&self, word: &str) -> bool {
        self.color.contains(word) || self.shape.contains(word) || self.size.contains(word)
    }

    pub fn mentions(&self, c: Category, tokens: &[String]) -> bool {
        let set = self.words(c);
        tokens.iter().any(|t| set.contains(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DescriptionStats {
    pub pct_spatial: f64,
    pub pct_color: f64,
    pub pct_shape: f64,
    pub pct_size: f64,
    pub n_descriptions: usize,
}

/// Percentage of descriptions with at least one token from each category.
pub fn describe_stats(samples: &[EruSample], lexicons: &Lexicons) -> DescriptionStats {
    let n = samples.len();
    if n == 0 {
        return DescriptionStats::default();
    }
    let pct = |c: Category| {
        let hits = samples.iter().filter(|s| lexicons.mentions(c, &s.tokens)).count();
        100.0 * hits as f64 / n as f64
    };
    DescriptionStats {
        pct_spatial: pct(Category::Spatial),
        pct_color: pct(Category::Color),
        pct_shape: pct(Category::Shape),
        pct_size: pct(Category::Size),
        n_descriptions: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tokenize;

    #[test]
    fn example_description() {
        let lex = Lexicons::default();
        let t = tokenize("the red round chair on the left");
        assert!(lex.mentions(Category::Spatial, &t));
        assert!(lex.mentions(Category::Color, &t));
        assert!(lex.mentions(Category::Shape, &t));
        assert!(!lex.mentions(Category::Size, &t));
    }

    #[test]
    fn builtin_lists_are_disjoint_and_lowercase() {
        let lex = Lexicons::default();
        let all: Vec<&BTreeSet<String>> = Category::ALL.iter().map(|c| lex.words(*c)).collect();
        for (i, a) in all.iter().enumerate() {
            assert!(a.len() >= 10);
            assert!(a.iter().all(|w| *w == w.to_lowercase()));
            for b in &all[i + 1..] {
                assert!(a.is_disjoint(b));
            }
        }
    }

    #[test]
    fn load_matches_builtin() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("lexicons");
        assert_eq!(Lexicons::load(&dir).unwrap(), Lexicons::default());
        assert!(Lexicons::load(Path::new("/nonexistent")).unwrap_err().is_io());
    }
}
