//! File-per-domain state store.
//!
//! Layout under the store root:
//!
//! ```text
//! boa-store.toml          marker: format = 1, created_at
//! domains/<name>.json     canonical JSON document
//! domains/<name>.json.bak previous generation
//! domains/<name>.lock     advisory lock: holder pid and timestamp
//! ```
//!
//! Saves write a temporary file and rename it over the document, so a reader
//! only ever sees a complete old or new document.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use chrono::{SubsecRound, Utc};
use serde::Deserialize;

use crate::canonical::to_canonical_json;
use crate::model::{Domain, InstallStatus, InstallationRecord, ModelError, PlatformId};

pub const MARKER_FILE: &str = "boa-store.toml";
pub const DOMAINS_DIR: &str = "domains";
pub const FORMAT_VERSION: i64 = 1;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{0} is not a store (missing {MARKER_FILE})")]
    NotAStore(PathBuf),
    #[error("store format {found} is not supported (expected {FORMAT_VERSION})")]
    IncompatibleStoreVersion { found: String },
    #[error("domain {domain:?} is locked by pid {holder}")]
    StoreLocked { domain: String, holder: String },
    #[error("store is read-only")]
    ReadOnlyStore,
    #[error("unknown domain {0:?}")]
    UnknownDomain(String),
    #[error("domain {0:?} already exists")]
    DomainExists(String),
    #[error("corrupt record {path}: {reason}")]
    CorruptRecord { path: PathBuf, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

trait IoContext<T> {
    fn ctx(self, context: impl FnOnce() -> String) -> Result<T, StoreError>;
}

impl<T> IoContext<T> for io::Result<T> {
    fn ctx(self, context: impl FnOnce() -> String) -> Result<T, StoreError> {
        self.map_err(|source| StoreError::Io {
            context: context(),
            source,
        })
    }
}

#[derive(Debug, Deserialize)]
struct Marker {
    format: toml::Value,
}

/// An open store instance. Distinct handles on distinct roots are independent.
#[derive(Debug, Clone)]
pub struct StoreHandle {
    root: PathBuf,
    read_only: bool,
    lock_wait: Duration,
    break_stale_locks: bool,
}

impl StoreHandle {
    /// Opens (and optionally creates) the store at `root`.
    pub fn open(root: impl AsRef<Path>, create_if_missing: bool) -> Result<Self, StoreError> {
        let root = root.as_ref();
        let marker = root.join(MARKER_FILE);
        if !marker.exists() {
            if !create_if_missing {
                return Err(StoreError::NotAStore(root.to_path_buf()));
            }
            fs::create_dir_all(root.join(DOMAINS_DIR))
                .ctx(|| format!("creating store at {}", root.display()))?;
            let body = format!(
                "format = {FORMAT_VERSION}\ncreated_at = \"{}\"\n",
                Utc::now().trunc_subsecs(0).to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
            );
            write_atomically(&marker, body.as_bytes())
                .ctx(|| format!("writing {}", marker.display()))?;
        }
        let text = fs::read_to_string(&marker).ctx(|| format!("reading {}", marker.display()))?;
        let parsed: Marker = toml::from_str(&text).map_err(|e| StoreError::CorruptRecord {
            path: marker.clone(),
            reason: e.to_string(),
        })?;
        if parsed.format.as_integer() != Some(FORMAT_VERSION) {
            return Err(StoreError::IncompatibleStoreVersion {
                found: parsed.format.to_string(),
            });
        }
        fs::create_dir_all(root.join(DOMAINS_DIR))
            .ctx(|| format!("creating {}", root.join(DOMAINS_DIR).display()))?;
        let root = fs::canonicalize(root).ctx(|| format!("resolving {}", root.display()))?;
        Ok(Self {
            root,
            read_only: false,
            lock_wait: Duration::from_secs(2),
            break_stale_locks: false,
        })
    }

    pub fn read_only(mut self, read_only: bool) -> Self {
        self.read_only = read_only;
        self
    }

    /// How long writers wait for a held lock before reporting `StoreLocked`.
    pub fn with_lock_wait(mut self, wait: Duration) -> Self {
        self.lock_wait = wait;
        self
    }

    /// Allow removing lock files whose holder process no longer exists.
    pub fn break_stale_locks(mut self, enabled: bool) -> Self {
        self.break_stale_locks = enabled;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn is_read_only(&self) -> bool {
        self.read_only
    }

    pub fn domain_path(&self, name: &str) -> PathBuf {
        self.root.join(DOMAINS_DIR).join(format!("{name}.json"))
    }

    pub fn backup_path(&self, name: &str) -> PathBuf {
        self.root.join(DOMAINS_DIR).join(format!("{name}.json.bak"))
    }

    pub fn lock_path(&self, name: &str) -> PathBuf {
        self.root.join(DOMAINS_DIR).join(format!("{name}.lock"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.domain_path(name).is_file()
    }

    /// Acquires the advisory lock for `name`, waiting up to the handle's lock wait.
    pub fn lock(&self, name: &str) -> Result<DomainLock, StoreError> {
        if self.read_only {
            return Err(StoreError::ReadOnlyStore);
        }
        let path = self.lock_path(name);
        let deadline = Instant::now() + self.lock_wait;
        loop {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut file) => {
                    let body = format!(
                        "pid = {}\nacquired_at = \"{}\"\n",
                        std::process::id(),
                        Utc::now().trunc_subsecs(0).to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
                    );
                    file.write_all(body.as_bytes())
                        .ctx(|| format!("writing {}", path.display()))?;
                    return Ok(DomainLock { path });
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    let holder = lock_holder(&path);
                    if self.break_stale_locks && holder.is_some_and(|pid| !process_alive(pid)) {
                        log::warn!("breaking stale lock {} held by dead pid", path.display());
                        let _ = fs::remove_file(&path);
                        continue;
                    }
                    if Instant::now() >= deadline {
                        return Err(StoreError::StoreLocked {
                            domain: name.to_string(),
                            holder: holder.map_or_else(|| "?".to_string(), |p| p.to_string()),
                        });
                    }
                    thread::sleep(Duration::from_millis(10));
                }
                Err(e) => return Err(e).ctx(|| format!("creating {}", path.display())),
            }
        }
    }

    /// Writes the new document to a temporary file under the domain lock
    /// without publishing it. Dropping the result abandons the save.
    pub fn prepare_save(&self, domain: &Domain) -> Result<PendingSave, StoreError> {
        let lock = self.lock(&domain.name)?;
        self.prepare_save_locked(domain, lock)
    }

    fn prepare_save_locked(&self, domain: &Domain, lock: DomainLock) -> Result<PendingSave, StoreError> {
        domain.validate()?;
        let body = to_canonical_json(domain).map_err(|e| StoreError::CorruptRecord {
            path: self.domain_path(&domain.name),
            reason: e.to_string(),
        })?;
        let target = self.domain_path(&domain.name);
        let temp = self.root.join(DOMAINS_DIR).join(format!(
            ".{}.json.tmp-{}",
            domain.name,
            std::process::id()
        ));
        write_synced(&temp, body.as_bytes()).ctx(|| format!("writing {}", temp.display()))?;
        Ok(PendingSave {
            temp,
            target,
            backup: self.backup_path(&domain.name),
            lock: Some(lock),
            committed: false,
        })
    }

    pub fn save_domain(&self, domain: &Domain) -> Result<(), StoreError> {
        self.prepare_save(domain)?.commit()
    }

    /// Saves a domain that must not already exist.
    pub fn create_domain(&self, domain: &Domain) -> Result<(), StoreError> {
        let lock = self.lock(&domain.name)?;
        if self.contains(&domain.name) {
            return Err(StoreError::DomainExists(domain.name.clone()));
        }
        self.prepare_save_locked(domain, lock)?.commit()
    }

    pub fn load_domain(&self, name: &str) -> Result<Domain, StoreError> {
        let path = self.domain_path(name);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::UnknownDomain(name.to_string()))
            }
            Err(e) => return Err(e).ctx(|| format!("reading {}", path.display())),
        };
        let corrupt = |reason: String| StoreError::CorruptRecord {
            path: path.clone(),
            reason,
        };
        let domain: Domain = serde_json::from_slice(&bytes).map_err(|e| corrupt(e.to_string()))?;
        domain
            .validate()
            .map_err(|e| corrupt(format!("invariant violated: {e}")))?;
        if domain.name != name {
            return Err(corrupt(format!(
                "invariant violated: file holds domain {:?}",
                domain.name
            )));
        }
        Ok(domain)
    }

    pub fn list_domains(&self) -> Result<Vec<String>, StoreError> {
        let dir = self.root.join(DOMAINS_DIR);
        let mut names = Vec::new();
        for entry in fs::read_dir(&dir).ctx(|| format!("listing {}", dir.display()))? {
            let entry = entry.ctx(|| format!("listing {}", dir.display()))?;
            let file_name = entry.file_name();
            let Some(file_name) = file_name.to_str() else { continue };
            if let Some(stem) = file_name.strip_suffix(".json") {
                if !stem.starts_with('.') && entry.path().is_file() {
                    names.push(stem.to_string());
                }
            }
        }
        names.sort();
        Ok(names)
    }

    /// Locked read-modify-write of a whole domain.
    pub fn modify_domain<T>(
        &self,
        name: &str,
        edit: impl FnOnce(&mut Domain) -> Result<T, StoreError>,
    ) -> Result<T, StoreError> {
        let lock = self.lock(name)?;
        let mut domain = self.load_domain(name)?;
        let out = edit(&mut domain)?;
        self.prepare_save_locked(&domain, lock)?.commit()?;
        Ok(out)
    }

    /// Moves one installation record through the state machine and persists
    /// it. A missing record is treated as `NotInstalled`.
    pub fn update_installation(
        &self,
        domain_name: &str,
        address: &InstallAddress,
        new_status: InstallStatus,
        detail: Option<&str>,
    ) -> Result<InstallationRecord, StoreError> {
        self.update_installation_with(domain_name, address, new_status, detail, None)
    }

    pub fn update_installation_with(
        &self,
        domain_name: &str,
        address: &InstallAddress,
        new_status: InstallStatus,
        detail: Option<&str>,
        session_log_ref: Option<&str>,
    ) -> Result<InstallationRecord, StoreError> {
        self.modify_domain(domain_name, |domain| {
            let project = domain
                .project_mut(&address.project)
                .ok_or_else(|| ModelError::UnknownProject(address.project.clone()))?;
            let project_name = project.name.clone();
            let version = project.version_mut(&address.version).ok_or_else(|| {
                ModelError::UnknownVersion {
                    project: project_name,
                    version: address.version.clone(),
                }
            })?;
            let current = version
                .installations
                .get(&address.platform)
                .cloned()
                .unwrap_or_else(|| InstallationRecord::new(address.platform.clone()));
            let mut next = current.transition(new_status, detail)?;
            if let Some(r) = session_log_ref {
                next.session_log_ref = Some(r.to_string());
            }
            version
                .installations
                .insert(address.platform.clone(), next.clone());
            Ok(next)
        })
    }
}

/// Free-function form of [`StoreHandle::open`].
pub fn open_store(root: impl AsRef<Path>, create_if_missing: bool) -> Result<StoreHandle, StoreError> {
    StoreHandle::open(root, create_if_missing)
}

/// Identifies one installation record inside a domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstallAddress {
    pub project: String,
    pub version: String,
    pub platform: PlatformId,
}

impl InstallAddress {
    pub fn new(project: &str, version: &str, platform: PlatformId) -> Self {
        Self {
            project: project.to_string(),
            version: version.to_string(),
            platform,
        }
    }
}

/// Held advisory lock; released on drop.
#[derive(Debug)]
pub struct DomainLock {
    path: PathBuf,
}

impl Drop for DomainLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// A save whose new document is on disk but not yet published.
#[derive(Debug)]
pub struct PendingSave {
    temp: PathBuf,
    target: PathBuf,
    backup: PathBuf,
    lock: Option<DomainLock>,
    committed: bool,
}

impl PendingSave {
    pub fn temp_path(&self) -> &Path {
        &self.temp
    }

    /// Rotates the current document to `.bak` and renames the new one into place.
    pub fn commit(mut self) -> Result<(), StoreError> {
        if self.target.exists() {
            let staged = self.backup.with_extension("bak.tmp");
            fs::copy(&self.target, &staged).ctx(|| format!("backing up {}", self.target.display()))?;
            fs::rename(&staged, &self.backup).ctx(|| format!("writing {}", self.backup.display()))?;
        }
        fs::rename(&self.temp, &self.target).ctx(|| format!("publishing {}", self.target.display()))?;
        sync_parent(&self.target);
        self.committed = true;
        self.lock.take();
        Ok(())
    }
}

impl Drop for PendingSave {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_file(&self.temp);
        }
    }
}

fn write_synced(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut f = File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()
}

fn write_atomically(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let temp = path.with_extension("tmp");
    write_synced(&temp, bytes)?;
    fs::rename(&temp, path)
}

fn sync_parent(path: &Path) {
    if let Some(dir) = path.parent() {
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
    }
}

fn lock_holder(path: &Path) -> Option<i32> {
    let text = fs::read_to_string(path).ok()?;
    text.lines()
        .find_map(|l| l.strip_prefix("pid = "))
        .and_then(|p| p.trim().parse().ok())
}

fn process_alive(pid: i32) -> bool {
    if pid <= 0 {
        return false;
    }
    // SAFETY: signal 0 performs only the existence and permission check.
    let rc = unsafe { libc::kill(pid, 0) };
    rc == 0 || io::Error::last_os_error().raw_os_error() != Some(libc::ESRCH)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Project, ProjectKind};

    fn platform() -> PlatformId {
        "linux-2.4/gcc-3.2".parse().unwrap()
    }

    fn sample(name: &str) -> Domain {
        let mut d = Domain::new(name, "/opt/sw", [platform()]).unwrap();
        d.add_project(
            Project::new("toolbox", ProjectKind::SourceBuilt, "cvs://toolbox")
                .unwrap()
                .with_version("T_1")
                .unwrap(),
        )
        .unwrap();
        d
    }

    fn addr() -> InstallAddress {
        InstallAddress::new("toolbox", "T_1", platform())
    }

    #[test]
    fn create_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(open_store(dir.path(), false), Err(StoreError::NotAStore(_))));
        let s = open_store(dir.path(), true).unwrap();
        assert!(dir.path().join(MARKER_FILE).is_file());
        assert!(dir.path().join(DOMAINS_DIR).is_dir());
        assert!(s.list_domains().unwrap().is_empty());
        open_store(dir.path(), false).unwrap();
    }

    #[test]
    fn unknown_format_refused() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MARKER_FILE), "format = 2\n").unwrap();
        assert!(matches!(
            open_store(dir.path(), true),
            Err(StoreError::IncompatibleStoreVersion { .. })
        ));
    }

    #[test]
    fn save_load_and_backup() {
        let dir = tempfile::tempdir().unwrap();
        let s = open_store(dir.path(), true).unwrap();
        let d1 = sample("cms");
        s.save_domain(&d1).unwrap();
        let first = fs::read(s.domain_path("cms")).unwrap();
        assert!(first.ends_with(b"}\n"));
        assert_eq!(s.load_domain("cms").unwrap(), d1);

        let mut d2 = d1.clone();
        d2.site_settings.insert("cache".into(), "/var/cache".into());
        s.save_domain(&d2).unwrap();
        assert_eq!(fs::read(s.backup_path("cms")).unwrap(), first);
        assert_eq!(s.load_domain("cms").unwrap(), d2);
        assert!(!s.lock_path("cms").exists());
    }

    #[test]
    fn missing_and_corrupt_domains() {
        let dir = tempfile::tempdir().unwrap();
        let s = open_store(dir.path(), true).unwrap();
        assert!(matches!(s.load_domain("nope"), Err(StoreError::UnknownDomain(_))));

        s.save_domain(&sample("cms")).unwrap();
        let text = fs::read_to_string(s.domain_path("cms")).unwrap();
        fs::write(s.domain_path("cms"), &text[..text.len() / 2]).unwrap();
        assert!(matches!(s.load_domain("cms"), Err(StoreError::CorruptRecord { .. })));

        let bad = text.replace("/opt/sw", "opt/sw");
        fs::write(s.domain_path("cms"), bad).unwrap();
        match s.load_domain("cms") {
            Err(StoreError::CorruptRecord { reason, .. }) => assert!(reason.contains("install root"), "{reason}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn list_is_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let s = open_store(dir.path(), true).unwrap();
        s.save_domain(&sample("b")).unwrap();
        s.save_domain(&sample("a")).unwrap();
        assert_eq!(s.list_domains().unwrap(), ["a", "b"]);
    }

    #[test]
    fn held_lock_blocks_writers() {
        let dir = tempfile::tempdir().unwrap();
        let s = open_store(dir.path(), true).unwrap().with_lock_wait(Duration::ZERO);
        s.save_domain(&sample("cms")).unwrap();
        let mut holder = std::process::Command::new("sleep").arg("30").spawn().unwrap();
        fs::write(s.lock_path("cms"), format!("pid = {}\n", holder.id())).unwrap();
        match s.save_domain(&sample("cms")) {
            Err(StoreError::StoreLocked { holder: h, .. }) => assert_eq!(h, holder.id().to_string()),
            other => panic!("{other:?}"),
        }
        // Live holder: breaking is refused even when enabled.
        let breaker = s.clone().break_stale_locks(true);
        assert!(matches!(breaker.save_domain(&sample("cms")), Err(StoreError::StoreLocked { .. })));
        holder.kill().unwrap();
        holder.wait().unwrap();
        assert!(matches!(s.save_domain(&sample("cms")), Err(StoreError::StoreLocked { .. })));
        breaker.save_domain(&sample("cms")).unwrap();
    }

    #[test]
    fn read_only_store_refuses_writes() {
        let dir = tempfile::tempdir().unwrap();
        let s = open_store(dir.path(), true).unwrap().read_only(true);
        assert!(matches!(s.save_domain(&sample("cms")), Err(StoreError::ReadOnlyStore)));
    }

    #[test]
    fn abandoned_save_keeps_old_document() {
        let dir = tempfile::tempdir().unwrap();
        let s = open_store(dir.path(), true).unwrap();
        let old = sample("cms");
        s.save_domain(&old).unwrap();
        let mut new = old.clone();
        new.site_settings.insert("k".into(), "v".into());
        let pending = s.prepare_save(&new).unwrap();
        assert!(pending.temp_path().exists());
        assert_eq!(s.load_domain("cms").unwrap(), old);
        drop(pending);
        assert_eq!(s.load_domain("cms").unwrap(), old);
        assert_eq!(s.list_domains().unwrap(), ["cms"]);
    }

    #[test]
    fn update_installation_examples() {
        let dir = tempfile::tempdir().unwrap();
        let s = open_store(dir.path(), true).unwrap();
        s.save_domain(&sample("cms")).unwrap();
        let r = s
            .update_installation("cms", &addr(), InstallStatus::Fetching, None)
            .unwrap();
        assert_eq!(r.status, InstallStatus::Fetching);
        s.update_installation("cms", &addr(), InstallStatus::Configured, None).unwrap();
        s.update_installation("cms", &addr(), InstallStatus::Installed, None).unwrap();

        let before = fs::read(s.domain_path("cms")).unwrap();
        assert!(matches!(
            s.update_installation("cms", &addr(), InstallStatus::Building, None),
            Err(StoreError::Model(ModelError::IllegalTransition { .. }))
        ));
        assert_eq!(fs::read(s.domain_path("cms")).unwrap(), before);

        assert!(matches!(
            s.update_installation("cms", &InstallAddress::new("x", "T_1", platform()), InstallStatus::Fetching, None),
            Err(StoreError::Model(ModelError::UnknownProject(_)))
        ));
        assert!(matches!(
            s.update_installation("nope", &addr(), InstallStatus::Fetching, None),
            Err(StoreError::UnknownDomain(_))
        ));
    }

    #[test]
    fn fresh_record_must_start_with_fetching() {
        let dir = tempfile::tempdir().unwrap();
        let s = open_store(dir.path(), true).unwrap();
        s.save_domain(&sample("cms")).unwrap();
        assert!(s
            .update_installation("cms", &addr(), InstallStatus::Installed, None)
            .is_err());
    }
}
