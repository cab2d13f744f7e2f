//! Translator contract and the built-in translators.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result, ServiceError};
use crate::lang::LanguageCode;

/// Machine translation of one text. Implementations must be safe to call from
/// several threads at once.
pub trait Translator: Send + Sync {
    fn translate(&self, text: &str, src: LanguageCode, tgt: LanguageCode) -> Result<String, ServiceError>;
}

impl<F> Translator for F
where
    F: Fn(&str, LanguageCode, LanguageCode) -> Result<String, ServiceError> + Send + Sync,
{
    fn translate(&self, text: &str, src: LanguageCode, tgt: LanguageCode) -> Result<String, ServiceError> {
        self(text, src, tgt)
    }
}

/// Returns its input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn translate(&self, text: &str, _src: LanguageCode, _tgt: LanguageCode) -> Result<String, ServiceError> {
        Ok(text.to_owned())
    }
}

/// Looks texts up in a fixed table; texts without an entry pass through unchanged.
#[derive(Debug, Clone, Default)]
pub struct MappingTranslator {
    table: HashMap<String, String>,
}

impl MappingTranslator {
    pub fn new(table: HashMap<String, String>) -> Self {
        MappingTranslator { table }
    }

    /// Load a JSON object of `{"source text": "translation"}` pairs.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: HashMap<String, String> = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            message: format!("{}: {e}", path.display()),
        })?;
        Ok(Self::new(table))
    }
}

impl Translator for MappingTranslator {
    fn translate(&self, text: &str, _src: LanguageCode, _tgt: LanguageCode) -> Result<String, ServiceError> {
        Ok(self.table.get(text).cloned().unwrap_or_else(|| text.to_owned()))
    }
}
