//! Location of shipped scenario files.

use std::path::{Path, PathBuf};

/// Overrides the directory searched for scenario names.
pub const CONFIG_DIR_ENV: &str = "CFNAV_CONFIG_DIR";

/// `$CFNAV_CONFIG_DIR` when set, otherwise `./scenarios`.
pub fn config_dir() -> PathBuf {
    std::env::var_os(CONFIG_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("scenarios"))
}

/// An existing path is used as is. Otherwise the name is looked up in the
/// config directory, with `.json` appended when it has no extension.
pub fn resolve_scenario(arg: &Path) -> PathBuf {
    resolve_in(arg, &config_dir())
}

pub fn resolve_in(arg: &Path, dir: &Path) -> PathBuf {
    if arg.exists() {
        return arg.to_path_buf();
    }
    let mut p = dir.join(arg);
    if p.extension().is_none() {
        p.set_extension("json");
    }
    p
}

/// Directory of the scenarios shipped with this crate.
pub fn shipped_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_resolve_inside_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.json"), "{}").unwrap();
        assert_eq!(resolve_in(Path::new("a"), dir.path()), dir.path().join("a.json"));
        assert_eq!(resolve_in(Path::new("b.cbor"), dir.path()), dir.path().join("b.cbor"));
    }
}
