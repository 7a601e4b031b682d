use std::path::Path;

pub const OCTET_STREAM: &str = "application/octet-stream";

/// Root of the MIME-derived set hierarchy.
pub const SET_ROOT: &str = "mime";

const FALLBACK_SET_SPEC: &str = "mime:application:octet-stream";

/// Maps a file path to a MIME type by extension (case-insensitive).
pub fn media_type_of(rel_path: impl AsRef<Path>) -> String {
    mime_guess::from_path(rel_path.as_ref())
        .first()
        .map(|m| m.essence_str().to_ascii_lowercase())
        .unwrap_or_else(|| OCTET_STREAM.to_string())
}

/// `type/subtype` becomes `mime:type:subtype`.
///
/// Characters outside the setSpec alphabet (for example the `+` in
/// `image/svg+xml`) are replaced by `_`.
pub fn set_spec_of(media_type: &str) -> String {
    let essence = media_type.split(';').next().unwrap_or("").trim();
    let mut parts = essence.split('/');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(ty), Some(sub), None) if !ty.is_empty() && !sub.is_empty() => {
            format!("{SET_ROOT}:{}:{}", sanitize(ty), sanitize(sub))
        }
        _ => FALLBACK_SET_SPEC.to_string(),
    }
}

fn sanitize(token: &str) -> String {
    token
        .chars()
        .map(|c| {
            let c = c.to_ascii_lowercase();
            if is_set_spec_char(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn is_set_spec_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.' | '!' | '~' | '*' | '\'' | '(' | ')')
}

/// Checks setSpec syntax: one or more non-empty tokens joined by `:`.
pub fn is_valid_set_spec(spec: &str) -> bool {
    !spec.is_empty()
        && spec
            .split(':')
            .all(|tok| !tok.is_empty() && tok.chars().all(is_set_spec_char))
}

/// Every prefix of a setSpec, shortest first: `a:b:c` yields `a`, `a:b`, `a:b:c`.
pub fn set_ancestry(spec: &str) -> impl Iterator<Item = &str> {
    spec.match_indices(':')
        .map(move |(i, _)| &spec[..i])
        .chain(std::iter::once(spec))
}
