//! Deterministic fallback embedder and cosine helpers.
//!
//! Text without a supplied embedding is mapped into a fixed 256-dimension
//! signed bag-of-words space: each lowercase alphanumeric token is hashed to a
//! bucket and a sign, then the vector is L2-normalized.

use crate::error::SignalError;
use crate::model::{CommunityReport, DomainProfile, Query, UnitVector};

pub const FALLBACK_DIM: usize = 256;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Hashed bag-of-words embedding. Never returns the zero vector.
pub fn embed_text(text: &str) -> UnitVector {
    let mut v = vec![0.0; FALLBACK_DIM];
    let mut add = |token: &str| {
        let h = fnv1a(token.as_bytes());
        let bucket = (h % FALLBACK_DIM as u64) as usize;
        let sign = if (h >> 63) & 1 == 1 { -1.0 } else { 1.0 };
        v[bucket] += sign;
    };
    let mut any = false;
    for token in tokenize(text) {
        add(&token);
        any = true;
    }
    if !any {
        let trimmed = text.trim();
        if !trimmed.is_empty() {
            add(trimmed);
        }
    }
    // Colliding opposite signs can cancel out; fall back to a fixed axis.
    UnitVector::normalized(v).unwrap_or_else(|| {
        let mut axis = vec![0.0; FALLBACK_DIM];
        axis[0] = 1.0;
        UnitVector::normalized(axis).expect("axis vector is nonzero")
    })
}

pub fn cosine(a: &UnitVector, b: &UnitVector) -> Result<f64, SignalError> {
    if a.dim() != b.dim() {
        return Err(SignalError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let dot: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

/// Cosine mapped affinely from [-1, 1] onto [0, 1].
pub fn affine_similarity(a: &UnitVector, b: &UnitVector) -> Result<f64, SignalError> {
    Ok(((cosine(a, b)? + 1.0) / 2.0).clamp(0.0, 1.0))
}

/// Text used when a domain has no supplied embedding.
pub fn domain_text(domain: &DomainProfile) -> String {
    format!("{} {}", domain.name, domain.summary_text)
}

pub fn report_text(report: &CommunityReport) -> String {
    format!("{} {}", report.title, report.text)
}

/// Picks the pair of vectors to compare: supplied embeddings when both sides
/// have one, otherwise the fallback embedding of both texts.
pub(crate) fn pair(
    query: &Query,
    other: Option<&UnitVector>,
    other_text: impl FnOnce() -> String,
) -> (UnitVector, UnitVector) {
    match (&query.embedding, other) {
        (Some(q), Some(o)) => (q.clone(), o.clone()),
        _ => (embed_text(&query.text), embed_text(&other_text())),
    }
}
