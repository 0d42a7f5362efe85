//! Tokenization shared by keyword search and wordclouds.

use unicode_segmentation::UnicodeSegmentation;

fn is_url(chunk: &str) -> bool {
    let lower = chunk.to_ascii_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

/// Splits text into lowercase word tokens. URLs and `@mentions` are dropped;
/// hashtags keep their word and lose the `#`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        if chunk.starts_with('@') || chunk.starts_with('＠') || is_url(chunk) {
            continue;
        }
        out.extend(chunk.unicode_words().map(str::to_lowercase));
    }
    out
}

const EN: &[&str] = &[
    "a", "about", "after", "again", "all", "am", "an", "and", "any", "are", "as", "at", "be",
    "because", "been", "before", "being", "but", "by", "can", "could", "did", "do", "does",
    "doing", "don't", "for", "from", "had", "has", "have", "having", "he", "her", "here", "hers",
    "him", "his", "how", "i", "i'm", "if", "in", "into", "is", "it", "it's", "its", "just", "me",
    "more", "most", "my", "no", "not", "now", "of", "on", "once", "only", "or", "other", "our",
    "out", "over", "rt", "she", "should", "so", "some", "such", "than", "that", "the", "their",
    "them", "then", "there", "these", "they", "this", "those", "through", "to", "too", "under",
    "up", "very", "was", "we", "were", "what", "when", "where", "which", "while", "who", "why",
    "will", "with", "would", "you", "your",
];
const FR: &[&str] = &[
    "au", "aux", "avec", "ce", "ces", "dans", "de", "des", "du", "elle", "en", "est", "et", "eux",
    "il", "je", "la", "le", "les", "leur", "lui", "ma", "mais", "me", "mes", "moi", "mon", "ne",
    "nos", "notre", "nous", "on", "ou", "par", "pas", "pour", "qu", "que", "qui", "sa", "se",
    "ses", "son", "sur", "ta", "te", "tes", "toi", "ton", "tu", "un", "une", "vos", "votre",
    "vous", "c'est", "l", "d", "j",
];
const ES: &[&str] = &[
    "a", "al", "algo", "como", "con", "de", "del", "el", "ella", "en", "es", "esta", "este",
    "la", "las", "lo", "los", "me", "mi", "muy", "no", "nos", "para", "pero", "por", "que",
    "se", "si", "sin", "su", "sus", "te", "tu", "un", "una", "uno", "y", "ya", "yo",
];
const DE: &[&str] = &[
    "aber", "als", "am", "an", "auch", "auf", "aus", "bei", "bin", "bis", "das", "dass", "dem",
    "den", "der", "des", "die", "du", "ein", "eine", "einen", "er", "es", "für", "hat", "ich",
    "ihr", "im", "in", "ist", "ja", "mit", "nicht", "noch", "nur", "oder", "sie", "sind", "so",
    "und", "von", "war", "was", "wie", "wir", "zu", "zum", "zur",
];
const IT: &[&str] = &[
    "a", "al", "alla", "che", "chi", "con", "da", "dei", "del", "della", "di", "e", "è", "gli",
    "il", "in", "io", "la", "le", "lo", "ma", "mi", "non", "per", "più", "si", "su", "ti", "tu",
    "un", "una", "uno",
];
const PT: &[&str] = &[
    "a", "ao", "as", "com", "como", "da", "das", "de", "do", "dos", "e", "é", "ela", "ele", "em",
    "eu", "mais", "mas", "na", "nas", "no", "nos", "não", "o", "os", "para", "por", "que", "se",
    "sem", "seu", "sua", "um", "uma", "você",
];

/// Stoplist for an ISO-639-1 code. Undetermined language uses English.
pub fn stopwords(language: &str) -> &'static [&'static str] {
    match language {
        "en" | "und" => EN,
        "fr" => FR,
        "es" => ES,
        "de" => DE,
        "it" => IT,
        "pt" => PT,
        _ => &[],
    }
}

pub fn is_stopword(language: &str, token: &str) -> bool {
    stopwords(language).contains(&token)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_urls_mentions_and_hash_symbols() {
        let toks = tokenize("Big MATCH @fifa #WorldCup https://t.co/x today!");
        assert_eq!(toks, vec!["big", "match", "worldcup", "today"]);
    }

    #[test]
    fn unicode_aware() {
        let toks = tokenize("Économie ÉTÉ");
        assert_eq!(toks, vec!["économie", "été"]);
    }

    #[test]
    fn stoplists() {
        assert!(is_stopword("en", "the"));
        assert!(is_stopword("und", "the"));
        assert!(is_stopword("fr", "les"));
        assert!(!is_stopword("en", "match"));
    }
}
