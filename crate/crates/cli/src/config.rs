//! Key-value config files: each `key = value` line supplies `--key value`
//! (or `-k value` for one-letter keys) unless the flag is already on the
//! command line.

use std::path::Path;

use crate::CliError;

/// Parses `key = value` lines; blank lines and `#` comments are ignored.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", no + 1)))?;
        let key = k.trim();
        if key.is_empty() || key.starts_with('-') {
            return Err(CliError::Usage(format!("config line {}: bad key `{key}`", no + 1)));
        }
        out.push((key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Removes `--config PATH` from `argv` and appends the file's defaults for
/// flags not given explicitly.
pub fn merge_config(mut argv: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut path = None;
    let mut i = 1;
    while i < argv.len() {
        if argv[i] == "--config" {
            let p = argv
                .get(i + 1)
                .cloned()
                .ok_or_else(|| CliError::Usage("--config needs a path".into()))?;
            argv.drain(i..i + 2);
            path = Some(p);
        } else if let Some(p) = argv[i].strip_prefix("--config=") {
            path = Some(p.to_string());
            argv.remove(i);
        } else {
            i += 1;
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| CliError::Usage(format!("cannot read config {path}: {e}")))?;
    for (key, value) in parse_config(&text)? {
        let flag = if key.chars().count() == 1 { format!("-{key}") } else { format!("--{key}") };
        let given = argv.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if !given {
            argv.push(flag);
            argv.push(value);
        }
    }
    Ok(argv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_comments_and_blanks() {
        let kv = parse_config("# defaults\n\ngrid = 16\ndelta=h,0  # trailing\n").unwrap();
        assert_eq!(kv, vec![("grid".into(), "16".into()), ("delta".into(), "h,0".into())]);
        assert!(parse_config("grid 16").is_err());
        assert!(parse_config("--grid = 16").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "grid = 16\nm = 3\n").unwrap();
        let p = path.to_str().unwrap();
        let merged = merge_config(args(&["spinzero", "spectrum", "--config", p, "--grid", "8"])).unwrap();
        assert_eq!(merged, args(&["spinzero", "spectrum", "--grid", "8", "-m", "3"]));
        let merged = merge_config(args(&["spinzero", "spectrum", &format!("--config={p}")])).unwrap();
        assert_eq!(merged, args(&["spinzero", "spectrum", "--grid", "16", "-m", "3"]));
    }

    #[test]
    fn missing_file_is_usage_error() {
        let r = merge_config(args(&["spinzero", "ahat", "--config", "/nonexistent/x.cfg"]));
        assert!(matches!(r, Err(CliError::Usage(_))));
    }
}
