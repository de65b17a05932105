use std::collections::HashMap;
use std::fmt::Write as _;

use super::CoreError;

/// Dense color identifier, assigned in order of first appearance.
pub type ColorId = usize;

/// An RBM instance: a buffer capacity `k` and an ordered sequence of colored
/// items. Items are indexed 1..=n throughout; colors are opaque tokens mapped
/// to dense ids at construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    k: usize,
    items: Vec<ColorId>,
    color_names: Vec<String>,
    /// Per color: item indices (1-based, ascending) of its occurrences.
    occurrences: Vec<Vec<usize>>,
}

impl Instance {
    /// Builds an instance from color tokens, interning them in order of
    /// first appearance.
    pub fn new<S: AsRef<str>>(k: usize, tokens: &[S]) -> Self {
        assert!(k >= 1, "buffer capacity must be positive");
        let mut ids: HashMap<String, ColorId> = HashMap::new();
        let mut color_names = Vec::new();
        let mut items = Vec::with_capacity(tokens.len());
        for tok in tokens {
            let tok = tok.as_ref();
            let next = color_names.len();
            let id = *ids.entry(tok.to_string()).or_insert_with(|| {
                color_names.push(tok.to_string());
                next
            });
            items.push(id);
        }
        let mut occurrences = vec![Vec::new(); color_names.len()];
        for (pos, &c) in items.iter().enumerate() {
            occurrences[c].push(pos + 1);
        }
        Instance {
            k,
            items,
            color_names,
            occurrences,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.items.len()
    }

    pub fn num_colors(&self) -> usize {
        self.color_names.len()
    }

    /// Color of item `i` (1-based).
    pub fn color(&self, i: usize) -> ColorId {
        self.items[i - 1]
    }

    pub fn color_name(&self, c: ColorId) -> &str {
        &self.color_names[c]
    }

    /// Item indices (ascending) at which color `c` occurs.
    pub fn occurrences(&self, c: ColorId) -> &[usize] {
        &self.occurrences[c]
    }

    pub fn colors(&self) -> impl Iterator<Item = ColorId> {
        0..self.color_names.len()
    }

    /// Same item sequence, different buffer capacity.
    pub fn with_k(&self, k: usize) -> Instance {
        assert!(k >= 1);
        Instance {
            k,
            items: self.items.clone(),
            color_names: self.color_names.clone(),
            occurrences: self.occurrences.clone(),
        }
    }

    /// Parses the text format: line 1 is `k <int>`, every following
    /// non-empty line is one color token.
    pub fn parse(text: &str) -> Result<Instance, CoreError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(CoreError::Parse {
            line: 1,
            msg: "empty file".into(),
        })?;
        let mut parts = header.split_whitespace();
        let k = match (parts.next(), parts.next(), parts.next()) {
            (Some("k"), Some(v), None) => v.parse::<usize>().map_err(|e| CoreError::Parse {
                line: 1,
                msg: format!("bad k value {v:?}: {e}"),
            })?,
            _ => {
                return Err(CoreError::Parse {
                    line: 1,
                    msg: format!("expected `k <int>`, got {header:?}"),
                })
            }
        };
        if k == 0 {
            return Err(CoreError::Parse {
                line: 1,
                msg: "k must be >= 1".into(),
            });
        }
        let mut tokens = Vec::new();
        for (idx, line) in lines {
            let tok = line.trim();
            if tok.is_empty() {
                continue;
            }
            if tok.split_whitespace().count() != 1 {
                return Err(CoreError::Parse {
                    line: idx + 1,
                    msg: format!("expected a single color token, got {line:?}"),
                });
            }
            tokens.push(tok.to_string());
        }
        Ok(Instance::new(k, &tokens))
    }

    /// Renders the text format parsed by [`Instance::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "k {}", self.k);
        for &c in &self.items {
            let _ = writeln!(out, "{}", self.color_names[c]);
        }
        out
    }
}

/// Earliest legal output slot of item `i` on the slot axis of a size-`kappa`
/// buffer: the item enters the buffer once `i - kappa` outputs have occurred,
/// so it can first be emitted at slot `max(kappa + 1, i + 1)`.
pub fn availability(i: usize, kappa: usize) -> usize {
    (kappa + 1).max(i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn availability_formula() {
        assert_eq!(availability(1, 3), 4);
        assert_eq!(availability(5, 3), 6);
        assert_eq!(availability(3, 8), 9);
    }

    #[test]
    fn parse_roundtrip() {
        let text = "k 4\na\nb\na\nc\n";
        let inst = Instance::parse(text).unwrap();
        assert_eq!(inst.k(), 4);
        assert_eq!(inst.n(), 4);
        assert_eq!(inst.num_colors(), 3);
        assert_eq!(inst.color(1), inst.color(3));
        assert_eq!(inst.occurrences(inst.color(1)), &[1, 3]);
        assert_eq!(inst.to_text(), text);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(Instance::parse("").is_err());
        assert!(Instance::parse("k x\na\n").is_err());
        assert!(Instance::parse("4\na\n").is_err());
        assert!(Instance::parse("k 0\n").is_err());
        assert!(Instance::parse("k 2\na b\n").is_err());
    }
}
