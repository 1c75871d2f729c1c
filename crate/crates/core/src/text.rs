//! Tokenisation and stopword handling shared by the corpus statistics.

use std::collections::HashSet;

const STOPWORDS_EN: &str = include_str!("../data/stopwords_en.txt");

/// Lowercases and splits on runs of non-alphanumeric characters. A
/// negation tail is kept as its own `n't` token ("don't" -> "do", "n't").
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase().replace('\u{2019}', "'");
    let mut out = Vec::new();
    for chunk in lower.split(|c: char| !(c.is_alphanumeric() || c == '\'')) {
        let (stem, negated) = match chunk.strip_suffix("n't") {
            Some(stem) => (stem, true),
            None => (chunk, false),
        };
        out.extend(
            stem.split('\'')
                .filter(|p| !p.is_empty())
                .map(str::to_owned),
        );
        if negated {
            out.push("n't".to_owned());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    /// Parses one word per line; `#` starts a comment line.
    pub fn parse(text: &str) -> Self {
        Stopwords(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    /// The bundled English list.
    pub fn english() -> Self {
        Self::parse(STOPWORDS_EN)
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Stopwords(words.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn content<'a>(&'a self, tokens: &'a [String]) -> impl Iterator<Item = &'a String> + 'a {
        tokens.iter().filter(move |t| !self.contains(t))
    }
}
