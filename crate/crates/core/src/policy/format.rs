//! Line-oriented text form of a policy or pool:
//!
//! ```text
//! tta-gps-policy v1
//! subpolicies 2
//! 17 cifar Rotate:12.500000 Color:3.000000
//! 4 imagenet ScaleCropFlip:0.000000 Invert:0.000000
//! ```
//!
//! Each sub-policy line is `<id> <style> <Kind>:<magnitude> ...`. Blank lines
//! and lines starting with `#` are ignored.

use std::fmt::Write as _;

use super::{Policy, Style, SubPolicy};
use crate::error::{Error, Result};
use crate::imageops::{TransformInstance, TransformKind};

pub const FORMAT_HEADER: &str = "tta-gps-policy v1";

pub fn serialize_policy(p: &Policy) -> String {
    let mut out = String::new();
    writeln!(out, "{FORMAT_HEADER}").unwrap();
    writeln!(out, "subpolicies {}", p.len()).unwrap();
    for s in p.subpolicies() {
        write!(out, "{} {}", s.id(), s.style()).unwrap();
        for t in s.transforms() {
            write!(out, " {}:{:.6}", t.kind(), t.magnitude()).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_policy(text: &str) -> Result<Policy> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    match lines.next() {
        Some((_, FORMAT_HEADER)) => {}
        Some((n, other)) => {
            return Err(Error::parse(
                n,
                "header",
                format!("expected `{FORMAT_HEADER}`, found `{other}`"),
            ))
        }
        None => return Err(Error::parse(1, "header", "empty document")),
    }
    let (count_line, count_text) = lines
        .next()
        .ok_or_else(|| Error::parse(2, "subpolicies", "missing sub-policy count"))?;
    let count: usize = count_text
        .strip_prefix("subpolicies ")
        .and_then(|c| c.trim().parse().ok())
        .ok_or_else(|| {
            Error::parse(
                count_line,
                "subpolicies",
                format!("expected `subpolicies <n>`, found `{count_text}`"),
            )
        })?;
    if count == 0 {
        return Err(Error::parse(
            count_line,
            "subpolicies",
            "a policy needs at least one sub-policy",
        ));
    }

    let mut subpolicies = Vec::with_capacity(count);
    let mut last_line = count_line;
    for (n, line) in lines {
        last_line = n;
        subpolicies.push(parse_subpolicy(n, line)?);
    }
    if subpolicies.len() != count {
        return Err(Error::parse(
            last_line,
            "subpolicies",
            format!("header announces {count} sub-policies, found {}", subpolicies.len()),
        ));
    }
    Policy::new(subpolicies)
}

fn parse_subpolicy(n: usize, line: &str) -> Result<SubPolicy> {
    let mut fields = line.split_whitespace();
    let id_text = fields.next().unwrap_or_default();
    let id: usize = id_text
        .parse()
        .map_err(|_| Error::parse(n, "id", format!("`{id_text}` is not a non-negative integer")))?;
    let style_text = fields.next().ok_or_else(|| Error::parse(n, "style", "missing"))?;
    let style: Style = style_text
        .parse()
        .map_err(|e: Error| Error::parse(n, "style", e.to_string()))?;
    let transforms = fields
        .enumerate()
        .map(|(i, f)| {
            let (kind, mag) = f
                .split_once(':')
                .ok_or_else(|| Error::parse(n, format!("transform[{i}]"), format!("`{f}` is not Kind:magnitude")))?;
            let kind: TransformKind = kind
                .parse()
                .map_err(|e: Error| Error::parse(n, format!("transform[{i}]"), e.to_string()))?;
            let mag: f64 = mag
                .parse()
                .map_err(|_| Error::parse(n, format!("magnitude[{i}]"), format!("`{mag}` is not a number")))?;
            TransformInstance::new(kind, mag).map_err(|e| Error::parse(n, format!("magnitude[{i}]"), e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    SubPolicy::new(id, style, transforms).map_err(|e| Error::parse(n, "transforms", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{generate_pool, PoolRecipe};
    use crate::rng::stream;

    #[test]
    fn pool_round_trip() {
        let pool = generate_pool(&PoolRecipe::cifar_default(), &mut stream(11, &[])).unwrap();
        let p = Policy::new(pool).unwrap();
        let text = serialize_policy(&p);
        assert_eq!(parse_policy(&text).unwrap(), p);
        assert_eq!(serialize_policy(&parse_policy(&text).unwrap()), text);
    }

    #[test]
    fn magnitudes_keep_six_decimals() {
        let t = TransformInstance::new(TransformKind::Color, 7.123_456_4).unwrap();
        let p = Policy::new(vec![SubPolicy::new(3, Style::Bare, vec![t]).unwrap()]).unwrap();
        let back = parse_policy(&serialize_policy(&p)).unwrap();
        let m = back.subpolicies()[0].transforms()[0].magnitude();
        assert!((m - 7.123_456_4).abs() < 1e-6);
    }

    #[test]
    fn empty_policy_is_an_error() {
        let err = parse_policy("tta-gps-policy v1\nsubpolicies 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn errors_name_line_and_field() {
        let text = "tta-gps-policy v1\nsubpolicies 2\n0 cifar Rotate:1.0\n1 cifar Rotate:abc\n";
        match parse_policy(text).unwrap_err() {
            Error::Parse { line, field, .. } => {
                assert_eq!(line, 4);
                assert_eq!(field, "magnitude[0]");
            }
            e => panic!("{e}"),
        }
        let text = "tta-gps-policy v1\nsubpolicies 1\n0 cifar Warp:1.0\n";
        assert!(matches!(parse_policy(text).unwrap_err(), Error::Parse { line: 3, .. }));
        assert!(matches!(
            parse_policy("garbage").unwrap_err(),
            Error::Parse { line: 1, .. }
        ));
        let text = "tta-gps-policy v1\nsubpolicies 3\n0 cifar Rotate:1.0\n";
        assert!(parse_policy(text).is_err());
    }
}
