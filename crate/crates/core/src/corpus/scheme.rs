//! Tagging schemes and IOB/IOBES chunk handling.

use serde::{Deserialize, Serialize};

/// How a task's tags encode spans.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// `B-/I-/E-/S-` prefixed chunk tags plus `O`; converted to IOBES on load.
    SpanPrefixed,
    /// One tag per token; every non-`O` token is its own span.
    TokenLevel,
}

impl Scheme {
    pub fn parse(s: &str) -> Option<Scheme> {
        match s.to_ascii_lowercase().as_str() {
            "span" | "span-prefixed" | "iob" | "iob1" | "iob2" | "iobes" | "bio" => Some(Scheme::SpanPrefixed),
            "token" | "token-level" => Some(Scheme::TokenLevel),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::SpanPrefixed => "span",
            Scheme::TokenLevel => "token",
        }
    }
}

pub const OUTSIDE: &str = "O";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Prefix {
    B,
    I,
    E,
    S,
}

/// Split `B-NP` into `(B, "NP")`. A bare prefix (`B`, as in untyped MWE
/// tags) has an empty type. Returns `None` for `O` and unprefixed tags.
pub(crate) fn split_tag(tag: &str) -> Option<(Prefix, &str)> {
    let (p, rest) = match tag.split_once('-') {
        Some((p, t)) => (p, t),
        None => (tag, ""),
    };
    let prefix = match p {
        "B" => Prefix::B,
        "I" => Prefix::I,
        "E" => Prefix::E,
        "S" => Prefix::S,
        _ => return None,
    };
    Some((prefix, rest))
}

/// A chunk `(start, end_inclusive, type)`.
pub(crate) type Chunk = (usize, usize, String);

/// Read maximal chunks from IOB1, IOB2 or IOBES tags.
///
/// An `I-X` or `E-X` with no open chunk of type `X` starts a new chunk
/// (treated as `B-X` / `S-X`). Unprefixed non-`O` tags become singletons
/// labeled with the whole tag.
pub(crate) fn read_chunks(tags: &[impl AsRef<str>]) -> Vec<Chunk> {
    let mut chunks = Vec::new();
    let mut open: Option<(usize, String)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        if tag == OUTSIDE {
            if let Some((s, t)) = open.take() {
                chunks.push((s, i - 1, t));
            }
            continue;
        }
        let Some((prefix, ty)) = split_tag(tag) else {
            if let Some((s, t)) = open.take() {
                chunks.push((s, i - 1, t));
            }
            chunks.push((i, i, tag.to_string()));
            continue;
        };
        let continues = matches!(&open, Some((_, t)) if t == ty);
        match prefix {
            Prefix::B | Prefix::S => {
                if let Some((s, t)) = open.take() {
                    chunks.push((s, i - 1, t));
                }
                if prefix == Prefix::S {
                    chunks.push((i, i, ty.to_string()));
                } else {
                    open = Some((i, ty.to_string()));
                }
            }
            Prefix::I => {
                if !continues {
                    if let Some((s, t)) = open.take() {
                        chunks.push((s, i - 1, t));
                    }
                    open = Some((i, ty.to_string()));
                }
            }
            Prefix::E => {
                if continues {
                    let (s, t) = open.take().expect("open chunk");
                    chunks.push((s, i, t));
                } else {
                    if let Some((s, t)) = open.take() {
                        chunks.push((s, i - 1, t));
                    }
                    chunks.push((i, i, ty.to_string()));
                }
            }
        }
    }
    if let Some((s, t)) = open {
        chunks.push((s, tags.len() - 1, t));
    }
    chunks
}

fn join(prefix: &str, ty: &str) -> String {
    if ty.is_empty() {
        prefix.to_string()
    } else {
        format!("{prefix}-{ty}")
    }
}

/// Rewrite IOB1/IOB2 (or already IOBES) tags as IOBES. Length is preserved;
/// single-token chunks become `S-`, longer ones `B- I-* E-`.
pub fn to_iobes(tags: &[impl AsRef<str>]) -> Vec<String> {
    let mut out: Vec<String> = tags
        .iter()
        .map(|t| {
            let t = t.as_ref();
            if t == OUTSIDE || split_tag(t).is_some() {
                OUTSIDE.to_string()
            } else {
                t.to_string()
            }
        })
        .collect();
    for (s, e, ty) in read_chunks(tags) {
        // unprefixed singletons keep their original tag
        if s == e && split_tag(tags[s].as_ref()).is_none() {
            continue;
        }
        if s == e {
            out[s] = join("S", &ty);
        } else {
            out[s] = join("B", &ty);
            for slot in &mut out[s + 1..e] {
                *slot = join("I", &ty);
            }
            out[e] = join("E", &ty);
        }
    }
    out
}
