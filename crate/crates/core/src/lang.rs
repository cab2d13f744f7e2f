//! Language codes and the built-in script-based language identifier.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use unicode_script::{Script, UnicodeScript};

use crate::error::{Error, Result};

/// Two-letter lowercase language identifier, or `und` when unknown.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LanguageCode([u8; 3]);

impl LanguageCode {
    pub const UND: LanguageCode = LanguageCode(*b"und");
    pub const EN: LanguageCode = LanguageCode(*b"en\0");
    pub const KO: LanguageCode = LanguageCode(*b"ko\0");
    pub const JA: LanguageCode = LanguageCode(*b"ja\0");
    pub const BN: LanguageCode = LanguageCode(*b"bn\0");
    pub const FI: LanguageCode = LanguageCode(*b"fi\0");
    pub const AR: LanguageCode = LanguageCode(*b"ar\0");
    pub const TE: LanguageCode = LanguageCode(*b"te\0");
    pub const RU: LanguageCode = LanguageCode(*b"ru\0");

    pub fn new(code: &str) -> Result<Self> {
        code.parse()
    }

    pub fn as_str(&self) -> &str {
        let len = if self.0[2] == 0 { 2 } else { 3 };
        // Only ASCII bytes are ever stored.
        std::str::from_utf8(&self.0[..len]).expect("ascii language code")
    }

    pub fn is_und(&self) -> bool {
        *self == Self::UND
    }

    /// English display name used when prompting a generator, e.g. `Korean` for `ko`.
    /// Codes without a known name fall back to the code itself.
    pub fn english_name(&self) -> &str {
        match self.as_str() {
            "ar" => "Arabic",
            "bn" => "Bengali",
            "de" => "German",
            "en" => "English",
            "es" => "Spanish",
            "fi" => "Finnish",
            "fr" => "French",
            "hi" => "Hindi",
            "it" => "Italian",
            "ja" => "Japanese",
            "ko" => "Korean",
            "nl" => "Dutch",
            "pt" => "Portuguese",
            "ru" => "Russian",
            "sv" => "Swedish",
            "sw" => "Swahili",
            "ta" => "Tamil",
            "te" => "Telugu",
            "th" => "Thai",
            "tl" => "Tagalog",
            "tr" => "Turkish",
            "vi" => "Vietnamese",
            "zh" => "Chinese",
            "und" => "an unknown language",
            other => other,
        }
    }
}

impl FromStr for LanguageCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "und" {
            return Ok(Self::UND);
        }
        let bytes = s.as_bytes();
        if bytes.len() == 2 && bytes.iter().all(u8::is_ascii_lowercase) {
            Ok(LanguageCode([bytes[0], bytes[1], 0]))
        } else {
            Err(Error::Validation(format!(
                "invalid language code {s:?}: expected two lowercase ASCII letters or \"und\""
            )))
        }
    }
}

impl fmt::Display for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LanguageCode({})", self.as_str())
    }
}

impl Serialize for LanguageCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for LanguageCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Script buckets in tie-break order.
const BUCKETS: [LanguageCode; 7] = [
    LanguageCode::KO,
    LanguageCode::JA,
    LanguageCode::BN,
    LanguageCode::AR,
    LanguageCode::TE,
    LanguageCode::RU,
    LanguageCode::EN,
];

fn bucket_of(c: char) -> Option<usize> {
    match c.script() {
        Script::Hangul => Some(0),
        Script::Hiragana | Script::Katakana | Script::Han => Some(1),
        Script::Bengali => Some(2),
        Script::Arabic => Some(3),
        Script::Telugu => Some(4),
        Script::Cyrillic => Some(5),
        // Latin-script languages are not told apart.
        Script::Latin => Some(6),
        _ => None,
    }
}

/// Guess the language of `text` from the Unicode scripts of its characters.
///
/// The bucket covering the most non-space characters wins, provided it covers
/// at least 30% of them; otherwise the result is [`LanguageCode::UND`].
pub fn detect_language(text: &str) -> Result<LanguageCode> {
    if text.is_empty() {
        return Err(Error::Precondition(
            "cannot detect the language of empty text".into(),
        ));
    }
    let mut counts = [0usize; BUCKETS.len()];
    let mut total = 0usize;
    for c in text.chars().filter(|c| !c.is_whitespace()) {
        total += 1;
        if let Some(b) = bucket_of(c) {
            counts[b] += 1;
        }
    }
    let mut best = 0;
    for (i, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = i;
        }
    }
    let best_count = counts[best];
    if best_count == 0 || best_count * 10 < total * 3 {
        Ok(LanguageCode::UND)
    } else {
        Ok(BUCKETS[best])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_displays() {
        let ko: LanguageCode = "ko".parse().unwrap();
        assert_eq!(ko, LanguageCode::KO);
        assert_eq!(ko.to_string(), "ko");
        assert_eq!(LanguageCode::new("und").unwrap(), LanguageCode::UND);
        assert!(LanguageCode::new("KO").is_err());
        assert!(LanguageCode::new("kor").is_err());
        assert!(LanguageCode::new("k").is_err());
        assert!(LanguageCode::new("").is_err());
    }

    #[test]
    fn serde_as_plain_string() {
        let json = serde_json::to_string(&LanguageCode::JA).unwrap();
        assert_eq!(json, "\"ja\"");
        let back: LanguageCode = serde_json::from_str(&json).unwrap();
        assert_eq!(back, LanguageCode::JA);
        assert!(serde_json::from_str::<LanguageCode>("\"xyz\"").is_err());
    }

    #[test]
    fn detects_scripts() {
        assert_eq!(detect_language("안녕하세요").unwrap(), LanguageCode::KO);
        assert_eq!(detect_language("これはテストです").unwrap(), LanguageCode::JA);
        assert_eq!(detect_language("東京は日本の首都です").unwrap(), LanguageCode::JA);
        assert_eq!(detect_language("আমার সোনার বাংলা").unwrap(), LanguageCode::BN);
        assert_eq!(detect_language("مرحبا بالعالم").unwrap(), LanguageCode::AR);
        assert_eq!(detect_language("తెలుగు భాష").unwrap(), LanguageCode::TE);
        assert_eq!(detect_language("Привет мир").unwrap(), LanguageCode::RU);
        assert_eq!(detect_language("Hyvää huomenta").unwrap(), LanguageCode::EN);
    }

    #[test]
    fn digits_and_punctuation_are_undetermined() {
        // 7 non-space characters, none in any bucket.
        assert_eq!(detect_language("12345 !!").unwrap(), LanguageCode::UND);
    }

    #[test]
    fn threshold_is_thirty_percent() {
        // 3 Latin letters out of 10 non-space characters: exactly 30%.
        assert_eq!(detect_language("abc1234567").unwrap(), LanguageCode::EN);
        // 2 of 10: below threshold.
        assert_eq!(detect_language("ab12345678").unwrap(), LanguageCode::UND);
    }

    #[test]
    fn plurality_wins_with_mixed_scripts() {
        assert_eq!(detect_language("서울 Seoul 서울특별시").unwrap(), LanguageCode::KO);
        assert_eq!(detect_language("BTS는 band").unwrap(), LanguageCode::EN);
    }

    #[test]
    fn empty_text_is_rejected() {
        assert!(matches!(detect_language(""), Err(Error::Precondition(_))));
        assert_eq!(detect_language("   ").unwrap(), LanguageCode::UND);
    }

    #[test]
    fn detection_is_deterministic_across_threads() {
        let texts = ["안녕하세요", "これはテストです", "hello world", "12345 !!"];
        let expected: Vec<_> = texts.iter().map(|t| detect_language(t).unwrap()).collect();
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..4)
                .map(|_| {
                    s.spawn(|| {
                        texts
                            .iter()
                            .map(|t| detect_language(t).unwrap())
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                assert_eq!(h.join().unwrap(), expected);
            }
        });
    }
}
