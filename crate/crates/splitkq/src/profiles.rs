//! Hardware profile lookup: built-ins, explicit files, and a profile
//! directory named by `SPLITKQ_PROFILE_DIR`.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use splitkq_core::execmodel::{HardwareProfile, BUILTIN_PROFILES};

use crate::error::{Error, Result};

pub const PROFILE_DIR_VAR: &str = "SPLITKQ_PROFILE_DIR";
pub const PROFILE_EXT: &str = "profile";

pub fn load_file(path: &Path) -> Result<HardwareProfile> {
    let text = fs::read_to_string(path)?;
    HardwareProfile::parse(&text).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
}

/// Resolves `name` using the profile directory from the environment.
pub fn resolve(name: &str) -> Result<HardwareProfile> {
    let dir = env::var_os(PROFILE_DIR_VAR).map(PathBuf::from);
    resolve_in(name, dir.as_deref())
}

/// Lookup order: built-in name, an existing file path, then
/// `<dir>/<name>` and `<dir>/<name>.profile`.
pub fn resolve_in(name: &str, dir: Option<&Path>) -> Result<HardwareProfile> {
    if let Some(p) = HardwareProfile::builtin(name) {
        return Ok(p);
    }
    let direct = Path::new(name);
    if direct.is_file() {
        return load_file(direct);
    }
    if let Some(dir) = dir {
        for candidate in [dir.join(name), dir.join(format!("{name}.{PROFILE_EXT}"))] {
            if candidate.is_file() {
                return load_file(&candidate);
            }
        }
    }
    Err(Error::Usage(format!(
        "unknown profile {name:?} (built-ins: {})",
        BUILTIN_PROFILES.join(", ")
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_and_directory() {
        assert_eq!(resolve_in("h100", None).unwrap().sm_count, 132);
        let dir = tempfile::tempdir().unwrap();
        let custom = HardwareProfile {
            name: "l4".into(),
            sm_count: 58,
            ..HardwareProfile::a100_40gb()
        };
        fs::write(dir.path().join("l4.profile"), custom.to_text()).unwrap();
        assert_eq!(resolve_in("l4", Some(dir.path())).unwrap(), custom);
        let direct = dir.path().join("l4.profile");
        assert_eq!(resolve_in(direct.to_str().unwrap(), None).unwrap(), custom);
        assert!(matches!(resolve_in("l4", None), Err(Error::Usage(_))));
        fs::write(dir.path().join("broken"), "name=x\n").unwrap();
        assert!(resolve_in("broken", Some(dir.path())).is_err());
    }
}
