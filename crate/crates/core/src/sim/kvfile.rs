//! Shared layout of the versioned `key = value` text files: a header line,
//! base keys, then optional `[variant NAME]` sections.

pub(crate) type Entry = (usize, String, String);

#[derive(Debug, Default)]
pub(crate) struct KvFile {
    pub base: Vec<Entry>,
    pub variants: Vec<(usize, String, Vec<Entry>)>,
    /// Malformed lines.
    pub errors: Vec<String>,
}

/// Splits `text` into entries. Only a missing header fails outright;
/// malformed lines are collected in `errors`.
pub(crate) fn parse(text: &str, header: &str) -> std::result::Result<KvFile, Vec<String>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.find(|(_, l)| !l.trim().is_empty()) {
        Some((_, l)) if l.trim() == header => {}
        Some((n, l)) => return Err(vec![format!("line {n}: expected header `{header}`, got `{l}`")]),
        None => return Err(vec!["empty file".into()]),
    }
    let mut out = KvFile::default();
    for (n, raw) in lines {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("[variant").and_then(|r| r.strip_suffix(']')) {
            let name = rest.trim();
            if name.is_empty() {
                out.errors.push(format!("line {n}: variant needs a name"));
            }
            out.variants.push((n, name.to_string(), Vec::new()));
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            out.errors.push(format!("line {n}: expected `key = value`, got `{line}`"));
            continue;
        };
        let e = (n, k.trim().to_string(), v.trim().to_string());
        match out.variants.last_mut() {
            Some((_, _, entries)) => entries.push(e),
            None => out.base.push(e),
        }
    }
    Ok(out)
}
