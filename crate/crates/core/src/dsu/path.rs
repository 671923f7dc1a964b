//! DSU paths: `/`-separated, absolute, no empty, `.` or `..` segments.

use super::DsuError;

/// Normalizes `path` to its canonical form. A missing leading `/` is
/// added; anything else non-canonical is rejected.
pub fn normalize(path: &str) -> Result<String, DsuError> {
    let body = path.strip_prefix('/').unwrap_or(path);
    if body.is_empty() {
        return Ok("/".to_owned());
    }
    for segment in body.split('/') {
        if segment.is_empty() || segment == "." || segment == ".." || segment.contains('\0') {
            return Err(DsuError::InvalidPath(path.to_owned()));
        }
    }
    Ok(format!("/{body}"))
}

/// Like [`normalize`] but rejects the root, which cannot hold a file.
pub fn normalize_file(path: &str) -> Result<String, DsuError> {
    let p = normalize(path)?;
    if p == "/" {
        return Err(DsuError::InvalidPath(path.to_owned()));
    }
    Ok(p)
}

/// True when `path` equals `dir` or lies beneath it.
pub fn is_within(path: &str, dir: &str) -> bool {
    dir == "/"
        || path == dir
        || (path.len() > dir.len() && path.starts_with(dir) && path.as_bytes()[dir.len()] == b'/')
}

/// Proper ancestors of `path`, nearest first, excluding the root.
pub fn ancestors(path: &str) -> impl Iterator<Item = &str> {
    std::iter::successors(Some(path), |p| p.rfind('/').map(|i| &p[..i]))
        .skip(1)
        .filter(|p| !p.is_empty())
}

/// `path` relative to `dir`, as an absolute path inside `dir`.
pub fn strip(path: &str, dir: &str) -> String {
    if dir == "/" {
        return path.to_owned();
    }
    match &path[dir.len()..] {
        "" => "/".to_owned(),
        rest => rest.to_owned(),
    }
}
