//! Syllable counting from text.
//!
//! Chinese counts one syllable per CJK ideograph. The other supported
//! languages approximate syllables as maximal contiguous runs of vowel
//! letters within each whitespace-separated word, after stripping
//! non-alphabetic characters; comparison is case-insensitive and each
//! language brings its own accented vowel set ("y" is a vowel only in
//! English).

use super::Language;

const VOWELS_EN: &[char] = &['a', 'e', 'i', 'o', 'u', 'y'];
const VOWELS_ES: &[char] = &['a', 'e', 'i', 'o', 'u', 'á', 'é', 'í', 'ó', 'ú', 'ü'];
const VOWELS_FR: &[char] = &[
    'a', 'e', 'i', 'o', 'u', 'à', 'â', 'æ', 'é', 'è', 'ê', 'ë', 'î', 'ï', 'ô', 'œ', 'ù', 'û', 'ü',
];
const VOWELS_DE: &[char] = &['a', 'e', 'i', 'o', 'u', 'ä', 'ö', 'ü'];

fn vowel_set(language: Language) -> &'static [char] {
    match language {
        Language::En => VOWELS_EN,
        Language::Es => VOWELS_ES,
        Language::Fr => VOWELS_FR,
        Language::De => VOWELS_DE,
        Language::Zh => &[],
    }
}

fn is_cjk(c: char) -> bool {
    matches!(c,
        '\u{4E00}'..='\u{9FFF}' | '\u{3400}'..='\u{4DBF}' | '\u{F900}'..='\u{FAFF}')
}

fn vowel_groups(word: &str, vowels: &[char]) -> usize {
    let mut groups = 0;
    let mut in_group = false;
    for c in word.chars().filter(|c| c.is_alphabetic()) {
        let lower = c.to_lowercase().next().unwrap_or(c);
        if vowels.contains(&lower) {
            if !in_group {
                groups += 1;
                in_group = true;
            }
        } else {
            in_group = false;
        }
    }
    groups
}

/// Syllable count for a sentence in the given language.
pub fn count_syllables(text: &str, language: Language) -> usize {
    match language {
        Language::Zh => text.chars().filter(|&c| is_cjk(c)).count(),
        _ => {
            let vowels = vowel_set(language);
            text.split_whitespace()
                .map(|word| vowel_groups(word, vowels))
                .sum()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn english_examples() {
        assert_eq!(count_syllables("hello world", Language::En), 3);
        assert_eq!(count_syllables("strength", Language::En), 1);
        assert_eq!(count_syllables("happy", Language::En), 2);
        assert_eq!(count_syllables("queue", Language::En), 1);
        assert_eq!(count_syllables("rhythm", Language::En), 1);
        assert_eq!(count_syllables("", Language::En), 0);
    }

    #[test]
    fn punctuation_is_stripped() {
        assert_eq!(count_syllables("hello, world!", Language::En), 3);
        assert_eq!(count_syllables("don't", Language::En), 1);
    }

    #[test]
    fn chinese_counts_ideographs() {
        assert_eq!(count_syllables("你好", Language::Zh), 2);
        assert_eq!(count_syllables("你好 世界", Language::Zh), 4);
        // Non-ideograph characters are not syllables.
        assert_eq!(count_syllables("你好!", Language::Zh), 2);
    }

    #[test]
    fn accented_vowels() {
        assert_eq!(count_syllables("café", Language::Fr), 2);
        assert_eq!(count_syllables("über", Language::De), 2);
        assert_eq!(count_syllables("día", Language::Es), 1); // í and a are contiguous
        assert_eq!(count_syllables("años", Language::Es), 2);
    }

    #[test]
    fn y_only_english() {
        assert_eq!(count_syllables("myth", Language::En), 1);
        // "y" is a consonant letter for the other sets.
        assert_eq!(count_syllables("myth", Language::De), 0);
    }

    proptest! {
        #[test]
        fn concatenation_is_additive(
            words in proptest::collection::vec("[a-zA-Z']{1,12}", 1..8)
        ) {
            for language in [Language::En, Language::Fr, Language::De, Language::Es] {
                let sentence = words.join(" ");
                let total: usize = words
                    .iter()
                    .map(|w| count_syllables(w, language))
                    .sum();
                prop_assert_eq!(count_syllables(&sentence, language), total);
            }
        }
    }
}
