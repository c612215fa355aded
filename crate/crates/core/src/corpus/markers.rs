//! Emoji, hashtag and mention extraction on raw tweet text.
//!
//! An emoji is an extended grapheme cluster that either starts with a
//! non-ASCII `Emoji=Yes` code point, contains a regional indicator, or is a
//! keycap sequence. ZWJ sequences, skin-tone modifiers and flags are one
//! grapheme and therefore one emoji.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_properties::emoji::{is_regional_indicator, UnicodeEmoji};
use unicode_segmentation::UnicodeSegmentation;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerCounts {
    pub emoji_occurrences: usize,
    pub hashtag_occurrences: usize,
    pub mention_occurrences: usize,
    pub has_emoji: bool,
    pub has_hashtag: bool,
    pub has_mention: bool,
}

/// Marker tokens in order of occurrence (duplicates kept).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerTokens {
    pub emojis: Vec<String>,
    pub hashtags: Vec<String>,
    pub mentions: Vec<String>,
}

impl MarkerTokens {
    pub fn counts(&self) -> MarkerCounts {
        MarkerCounts {
            emoji_occurrences: self.emojis.len(),
            hashtag_occurrences: self.hashtags.len(),
            mention_occurrences: self.mentions.len(),
            has_emoji: !self.emojis.is_empty(),
            has_hashtag: !self.hashtags.is_empty(),
            has_mention: !self.mentions.is_empty(),
        }
    }
}

pub fn is_emoji_grapheme(g: &str) -> bool {
    let Some(first) = g.chars().next() else {
        return false;
    };
    if g.contains('\u{20E3}') {
        return true;
    }
    if g.chars().any(is_regional_indicator) {
        return true;
    }
    // '#', '*' and digits carry Emoji=Yes but only count inside keycaps
    !first.is_ascii() && first.is_emoji_char()
}

fn hashtag_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?:^|[^\p{L}\p{M}\p{N}_&/#＃])([#＃][\p{L}\p{M}\p{N}_]*[\p{L}\p{M}_][\p{L}\p{M}\p{N}_]*)")
            .expect("static regex")
    })
}

fn mention_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?:^|[^\p{L}\p{N}_@.])(@[A-Za-z0-9_]{1,15})").expect("static regex")
    })
}

pub fn marker_tokens(text: &str) -> MarkerTokens {
    let emojis = text
        .graphemes(true)
        .filter(|g| is_emoji_grapheme(g))
        .map(str::to_string)
        .collect();
    let hashtags = hashtag_pattern()
        .captures_iter(text)
        .map(|c| c[1].to_string())
        .collect();
    let mentions = mention_pattern()
        .captures_iter(text)
        .map(|c| c[1].to_string())
        .collect();
    MarkerTokens {
        emojis,
        hashtags,
        mentions,
    }
}

pub fn extract_markers(text: &str) -> MarkerCounts {
    marker_tokens(text).counts()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_markers() {
        assert_eq!(extract_markers("no markers here"), MarkerCounts::default());
    }

    #[test]
    fn mixed_markers() {
        let c = extract_markers("#MAGA @x 🌈🌈");
        assert_eq!(c.hashtag_occurrences, 1);
        assert_eq!(c.mention_occurrences, 1);
        assert_eq!(c.emoji_occurrences, 2);
        assert!(c.has_emoji && c.has_hashtag && c.has_mention);
    }

    #[test]
    fn zwj_sequences_and_modifiers_are_single_emoji() {
        // rainbow flag, family, thumbs-up with skin tone, US flag
        let t = marker_tokens("🏳️‍🌈 👨‍👩‍👧 👍🏽 🇺🇸");
        assert_eq!(t.emojis.len(), 4);
    }

    #[test]
    fn keycaps_count_but_bare_ascii_does_not() {
        assert_eq!(marker_tokens("1️⃣ #1 * 2024").emojis, vec!["1️⃣"]);
    }

    #[test]
    fn urls_and_emails_are_not_markers() {
        let t = marker_tokens("see https://x.com/a#frag or mail bob@example.com");
        assert!(t.hashtags.is_empty());
        assert!(t.mentions.is_empty());
    }

    #[test]
    fn numeric_only_hashtag_ignored() {
        assert!(marker_tokens("#2024").hashtags.is_empty());
        assert_eq!(marker_tokens("#MAGA2024 #vote").hashtags, vec!["#MAGA2024", "#vote"]);
    }

    #[test]
    fn adjacent_hashtags_without_space() {
        assert_eq!(marker_tokens("#a#b").hashtags, vec!["#a"]);
    }
}
