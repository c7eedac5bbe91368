//! Marker grammar understood by the mock backend.
//!
//! ```text
//! PROPOSE(item)      PROPOSE(item, s)
//! SUPPORT(item, s)   OPPOSE(item, s)      s in 1..=3
//! RELAY(item)        emitted by surrogates only
//! ```
//!
//! Item text may not contain `(`, `)` or `,`. Identity is the trimmed,
//! lower-cased text. Malformed markers are ignored.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verb {
    Propose,
    Support,
    Oppose,
    Relay,
}

impl Verb {
    const ALL: [Verb; 4] = [Verb::Propose, Verb::Support, Verb::Oppose, Verb::Relay];

    pub fn keyword(self) -> &'static str {
        match self {
            Verb::Propose => "PROPOSE",
            Verb::Support => "SUPPORT",
            Verb::Oppose => "OPPOSE",
            Verb::Relay => "RELAY",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Marker {
    pub verb: Verb,
    /// Normalized item text.
    pub item: String,
    /// Explicit strength, 1..=3. Always `None` for RELAY.
    pub strength: Option<u8>,
}

impl Marker {
    /// Signed strength this marker expresses. RELAY carries none.
    pub fn signed_strength(&self) -> Option<i8> {
        let s = self.strength.unwrap_or(1) as i8;
        match self.verb {
            Verb::Propose | Verb::Support => Some(s),
            Verb::Oppose => Some(-s),
            Verb::Relay => None,
        }
    }
}

impl fmt::Display for Marker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.strength {
            Some(s) => write!(f, "{}({}, {})", self.verb.keyword(), self.item, s),
            None => write!(f, "{}({})", self.verb.keyword(), self.item),
        }
    }
}

pub fn normalize_item(text: &str) -> String {
    text.trim().to_lowercase()
}

/// Every well-formed marker in `body`, in order of appearance.
pub fn parse_markers(body: &str) -> Vec<Marker> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < body.len() {
        let rest = &body[i..];
        let boundary = body[..i].chars().next_back().is_none_or(|c| !c.is_alphanumeric());
        let hit = boundary
            .then(|| Verb::ALL.into_iter().find(|v| rest.starts_with(v.keyword()) && rest[v.keyword().len()..].starts_with('(')))
            .flatten();
        match hit {
            Some(verb) => {
                let args_start = i + verb.keyword().len() + 1;
                match parse_args(verb, &body[args_start..]) {
                    Some((marker, consumed)) => {
                        out.push(marker);
                        i = args_start + consumed;
                    }
                    None => i = args_start,
                }
            }
            None => i += rest.chars().next().map_or(1, char::len_utf8),
        }
    }
    out
}

/// Parse `item[, s])` following the opening paren. Returns the marker and
/// the number of bytes consumed including the closing paren.
fn parse_args(verb: Verb, s: &str) -> Option<(Marker, usize)> {
    let close = s.find(')')?;
    let inner = &s[..close];
    if inner.contains('(') {
        return None;
    }
    let (item_raw, strength_raw) = match inner.split_once(',') {
        Some((a, b)) => (a, Some(b)),
        None => (inner, None),
    };
    let item = normalize_item(item_raw);
    if item.is_empty() {
        return None;
    }
    let strength = match strength_raw {
        Some(raw) => {
            let v: u8 = raw.trim().parse().ok()?;
            if !(1..=3).contains(&v) {
                return None;
            }
            Some(v)
        }
        None => None,
    };
    let strength_ok = match verb {
        Verb::Propose => true,
        Verb::Support | Verb::Oppose => strength.is_some(),
        Verb::Relay => strength.is_none(),
    };
    strength_ok.then_some((Marker { verb, item, strength }, close + 1))
}
