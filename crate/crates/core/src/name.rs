//! Case-insensitive identifiers.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A PDDL identifier. Equality, hashing and ordering use the lowercase form;
/// the original spelling is kept for display.
#[derive(Clone)]
pub struct Name {
    canon: Arc<str>,
    display: Arc<str>,
}

impl Name {
    pub fn new(s: &str) -> Self {
        let canon = s.to_ascii_lowercase();
        let display: Arc<str> = Arc::from(s);
        let canon = if canon == s { display.clone() } else { Arc::from(canon) };
        Name { canon, display }
    }

    /// Lowercase canonical form.
    pub fn as_str(&self) -> &str {
        &self.canon
    }

    /// Spelling as written in the source.
    pub fn display(&self) -> &str {
        &self.display
    }

    /// True if the text is a legal identifier: alphabetic first character,
    /// then alphanumerics, `-` or `_`.
    pub fn is_valid_ident(s: &str) -> bool {
        let mut chars = s.chars();
        match chars.next() {
            Some(c) if c.is_ascii_alphabetic() => {}
            _ => return false,
        }
        chars.all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
    }

    pub fn is_valid(&self) -> bool {
        Self::is_valid_ident(&self.canon)
    }
}

impl PartialEq for Name {
    fn eq(&self, other: &Self) -> bool {
        self.canon == other.canon
    }
}

impl Eq for Name {}

impl Hash for Name {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.canon.hash(state)
    }
}

impl PartialOrd for Name {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Name {
    fn cmp(&self, other: &Self) -> Ordering {
        self.canon.cmp(&other.canon)
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display)
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.display)
    }
}

impl From<&str> for Name {
    fn from(s: &str) -> Self {
        Name::new(s)
    }
}

impl From<String> for Name {
    fn from(s: String) -> Self {
        Name::new(&s)
    }
}

impl Serialize for Name {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.display)
    }
}

impl<'de> Deserialize<'de> for Name {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Name::new(&s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_insensitive_equality() {
        assert_eq!(Name::new("Jerry"), Name::new("jerry"));
        assert_eq!(Name::new("Jerry").display(), "Jerry");
        assert_eq!(Name::new("Jerry").as_str(), "jerry");
    }

    #[test]
    fn ident_rules() {
        assert!(Name::is_valid_ident("goto_waypoint"));
        assert!(Name::is_valid_ident("total-time"));
        assert!(!Name::is_valid_ident("1abc"));
        assert!(!Name::is_valid_ident(""));
        assert!(!Name::is_valid_ident("a b"));
    }
}
