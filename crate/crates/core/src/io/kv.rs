//! `key=value` lines with `#` comments and dotted keys.

use std::collections::BTreeMap;

pub type KvMap = BTreeMap<String, String>;

/// Parses `key=value` lines. Blank lines and `#` comments are skipped; keys
/// and values are trimmed; a repeated key is an error.
pub fn parse_kv(text: &str) -> Result<KvMap, String> {
    let mut out = KvMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value, found {:?}", n + 1, line))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(format!("line {}: empty key", n + 1));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(format!("line {}: duplicate key {k:?}", n + 1));
        }
    }
    Ok(out)
}

pub fn format_kv(map: &KvMap) -> String {
    map.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_roundtrips() {
        let m = parse_kv("# c\nscene.num_frames = 20\n\nseed=3\n").unwrap();
        assert_eq!(m["scene.num_frames"], "20");
        assert_eq!(parse_kv(&format_kv(&m)).unwrap(), m);
        assert!(parse_kv("novalue\n").is_err());
        assert!(parse_kv("a=1\na=2\n").is_err());
        assert!(parse_kv("=1\n").is_err());
    }
}
