//! Text normalization shared by indexing, querying and entity labeling.
//!
//! Words are maximal runs of alphanumeric characters, lowercased. Tokens
//! without a single alphabetic character (numbers, dates) and one-letter
//! tokens are discarded before any further processing.

use std::collections::HashSet;
use std::io;
use std::path::Path;

const DEFAULT_STOP_WORDS: &str = include_str!("../data/stopwords.txt");

/// Splits raw text into lowercased word tokens, in source order.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().count() > 1 && w.chars().any(char::is_alphabetic))
        .map(str::to_lowercase)
}

/// Splits raw text into lowercased tokens without dropping short or numeric
/// ones. Used for surface-form matching of names.
pub fn surface_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// A set of words culled before counting and indexing.
#[derive(Debug, Clone)]
pub struct StopWords {
    words: HashSet<String>,
}

impl StopWords {
    /// The shipped list of articles, demonstratives, pronouns, prepositions
    /// and conjunctions.
    pub fn english() -> Self {
        Self::parse(DEFAULT_STOP_WORDS)
    }

    /// Parses one word per line; `#` starts a comment line.
    pub fn parse(list: &str) -> Self {
        let words = list
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        StopWords { words }
    }

    pub fn from_file(path: &Path) -> io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn empty() -> Self {
        StopWords { words: HashSet::new() }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// One word per line, sorted; readable by [`StopWords::parse`].
    pub fn to_text(&self) -> String {
        let mut words: Vec<&str> = self.words.iter().map(String::as_str).collect();
        words.sort_unstable();
        words.iter().map(|w| format!("{w}\n")).collect()
    }
}

impl Default for StopWords {
    fn default() -> Self {
        Self::english()
    }
}

/// Irregular plurals and common words whose trailing `s` is not inflection.
const EXCEPTIONS: &[(&str, &str)] = &[
    ("children", "child"),
    ("men", "man"),
    ("women", "woman"),
    ("people", "people"),
    ("mice", "mouse"),
    ("geese", "goose"),
    ("feet", "foot"),
    ("teeth", "tooth"),
    ("oxen", "ox"),
    ("data", "data"),
    ("criteria", "criterion"),
    ("phenomena", "phenomenon"),
    ("wolves", "wolf"),
    ("knives", "knife"),
    ("lives", "life"),
    ("wives", "wife"),
    ("halves", "half"),
    ("leaves", "leaf"),
    ("shelves", "shelf"),
    ("thieves", "thief"),
    ("loaves", "loaf"),
    ("shoes", "shoe"),
    ("toes", "toe"),
    ("canoes", "canoe"),
    ("movies", "movie"),
    ("cookies", "cookie"),
    ("species", "species"),
    ("series", "series"),
    ("news", "news"),
    ("buses", "bus"),
    ("gases", "gas"),
    ("gas", "gas"),
    ("yes", "yes"),
    ("always", "always"),
    ("perhaps", "perhaps"),
    ("sometimes", "sometimes"),
    ("whereas", "whereas"),
    ("afterwards", "afterwards"),
    ("lens", "lens"),
    ("atlas", "atlas"),
    ("chaos", "chaos"),
    ("christmas", "christmas"),
    ("texas", "texas"),
    ("kansas", "kansas"),
    ("arkansas", "arkansas"),
    ("paris", "paris"),
    ("athens", "athens"),
    ("wales", "wales"),
    ("politics", "politics"),
    ("economics", "economics"),
    ("physics", "physics"),
    ("mathematics", "mathematics"),
    ("statistics", "statistics"),
    ("athletics", "athletics"),
    ("olympics", "olympics"),
    ("aids", "aids"),
    ("ethics", "ethics"),
];

fn exception(word: &str) -> Option<&'static str> {
    EXCEPTIONS.iter().find(|(from, _)| *from == word).map(|(_, to)| *to)
}

fn strip_once(word: &str) -> Option<String> {
    if let Some(to) = exception(word) {
        return (to != word).then(|| to.to_string());
    }
    let n = word.len();
    if n <= 3 || !word.is_ascii() || !word.ends_with('s') {
        return None;
    }
    if word.ends_with("ss") || word.ends_with("us") || word.ends_with("is") {
        return None;
    }
    if n > 4 && word.ends_with("ies") {
        return Some(format!("{}y", &word[..n - 3]));
    }
    for suffix in ["sses", "shes", "ches", "xes", "zzes"] {
        if word.ends_with(suffix) {
            return Some(word[..n - 2].to_string());
        }
    }
    if n > 4 && word.ends_with("oes") {
        return Some(word[..n - 2].to_string());
    }
    Some(word[..n - 1].to_string())
}

/// Reduces an inflected word to its lemma by suffix stripping.
///
/// Plurals (and the identical third-person `-s` verb form) are reduced to
/// the singular; other inflections such as `-ed` and `-ing` are kept, so
/// "closed" and "dealing" are already lemmas. Rules are applied until a
/// fixed point, which makes the function idempotent.
pub fn lemmatize(word: &str) -> String {
    let mut current = word.to_string();
    // Each rule shortens the word, so this terminates.
    while let Some(next) = strip_once(&current) {
        if next == current || next.is_empty() {
            break;
        }
        current = next;
    }
    current
}

/// Lemmatizes and stop-word filters raw text, yielding surviving lemmas in
/// source order. A word is culled if either its surface form or its lemma is
/// a stop word.
pub fn normalize<'a>(text: &'a str, stop_words: &'a StopWords) -> impl Iterator<Item = String> + 'a {
    words(text).filter_map(move |w| {
        if stop_words.contains(&w) {
            return None;
        }
        let lemma = lemmatize(&w);
        (!stop_words.contains(&lemma)).then_some(lemma)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lemmatize_plurals() {
        assert_eq!(lemmatize("dealings"), "dealing");
        assert_eq!(lemmatize("futures"), "future");
        assert_eq!(lemmatize("players"), "player");
        assert_eq!(lemmatize("companies"), "company");
        assert_eq!(lemmatize("classes"), "class");
        assert_eq!(lemmatize("churches"), "church");
        assert_eq!(lemmatize("potatoes"), "potato");
        assert_eq!(lemmatize("children"), "child");
        assert_eq!(lemmatize("states"), "state");
    }

    #[test]
    fn lemmatize_keeps_lemmas_and_other_inflections() {
        assert_eq!(lemmatize("gulf"), "gulf");
        assert_eq!(lemmatize("closed"), "closed");
        assert_eq!(lemmatize("dismissed"), "dismissed");
        assert_eq!(lemmatize("business"), "business");
        assert_eq!(lemmatize("virus"), "virus");
        assert_eq!(lemmatize("crisis"), "crisis");
        assert_eq!(lemmatize("news"), "news");
        assert_eq!(lemmatize("gas"), "gas");
    }

    #[test]
    fn exception_targets_are_fixed_points() {
        for (_, to) in EXCEPTIONS {
            assert_eq!(lemmatize(to), *to, "{to}");
        }
    }

    #[test]
    fn words_drop_numbers_and_single_letters() {
        let got: Vec<_> = words("Quakes in Iran, Pakistan kill 150. U.S. a-b 3rd").collect();
        assert_eq!(got, ["quakes", "in", "iran", "pakistan", "kill", "3rd"]);
    }

    #[test]
    fn normalize_culls_surface_and_lemma_stop_words() {
        let stop = StopWords::english();
        let got: Vec<_> = normalize("This was in the news as an event", &stop).collect();
        assert_eq!(got, ["news", "event"]);
    }

    #[test]
    fn shipped_list_size() {
        let n = StopWords::english().len();
        assert!((140..=200).contains(&n), "{n}");
    }

    proptest! {
        #[test]
        fn lemmatize_is_idempotent(w in "[a-z]{1,12}") {
            let once = lemmatize(&w);
            prop_assert_eq!(lemmatize(&once), once);
        }
    }
}
