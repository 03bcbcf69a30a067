mod common;

use std::fs;
use std::process::Command;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use boa_core::canonical::to_canonical_json;
use boa_core::{Domain, InstallAddress, InstallStatus, Project, ProjectKind, StoreError, StoreHandle};
use common::{random_domain, Rng};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn save_then_load_is_identity(seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let store = StoreHandle::open(dir.path(), true).unwrap();
        let d = random_domain(seed, 8);
        store.save_domain(&d).unwrap();
        let back = store.load_domain(&d.name).unwrap();
        prop_assert_eq!(&back, &d);
        // canonical form is a fixed point
        let first = fs::read(store.domain_path(&d.name)).unwrap();
        store.save_domain(&back).unwrap();
        prop_assert_eq!(fs::read(store.domain_path(&d.name)).unwrap(), first.clone());
        prop_assert_eq!(String::from_utf8(first).unwrap(), to_canonical_json(&d).unwrap());
    }

    #[test]
    fn abandoned_saves_leave_previous_document(a in any::<u64>(), b in any::<u64>(), cut in 0usize..4096) {
        let dir = tempfile::tempdir().unwrap();
        let store = StoreHandle::open(dir.path(), true).unwrap();
        let old = random_domain(a, 6);
        let mut new = random_domain(b, 6);
        new.name = old.name.clone();
        store.save_domain(&old).unwrap();

        let pending = store.prepare_save(&new).unwrap();
        // a partial write of the temporary file must not matter
        let temp = pending.temp_path().to_path_buf();
        let bytes = fs::read(&temp).unwrap();
        fs::write(&temp, &bytes[..cut.min(bytes.len())]).unwrap();
        drop(pending);
        prop_assert!(!temp.exists());
        prop_assert_eq!(store.load_domain(&old.name).unwrap(), old.clone());

        store.prepare_save(&new).unwrap().commit().unwrap();
        prop_assert_eq!(store.load_domain(&old.name).unwrap(), new);
        let backup: Domain = serde_json::from_str(&fs::read_to_string(store.backup_path(&old.name)).unwrap()).unwrap();
        prop_assert_eq!(backup, old);
    }
}

const CHILD_ENV: &str = "BOA_TEST_SAVE_LOOP";

/// Child side of `killed_writer_leaves_old_or_new`: saves two alternating
/// documents until killed.
#[test]
fn save_loop_child() {
    let Ok(root) = std::env::var(CHILD_ENV) else { return };
    let store = StoreHandle::open(&root, false).unwrap().break_stale_locks(true);
    let (a, b) = pair();
    loop {
        for d in [&a, &b] {
            store.save_domain(d).unwrap();
        }
    }
}

fn pair() -> (Domain, Domain) {
    let a = random_domain(7, 8);
    let mut b = random_domain(8, 8);
    b.name = a.name.clone();
    assert_ne!(a, b);
    (a, b)
}

#[test]
fn killed_writer_leaves_old_or_new() {
    let dir = tempfile::tempdir().unwrap();
    let store = StoreHandle::open(dir.path(), true).unwrap();
    let (a, b) = pair();
    store.save_domain(&a).unwrap();
    let exe = std::env::current_exe().unwrap();
    let mut rng = Rng::new(99);
    for _ in 0..15 {
        let mut child = Command::new(&exe)
            .args(["--exact", "save_loop_child", "--nocapture", "--test-threads=1"])
            .env(CHILD_ENV, dir.path())
            .stdout(std::process::Stdio::null())
            .stderr(std::process::Stdio::null())
            .spawn()
            .unwrap();
        thread::sleep(Duration::from_millis(20 + rng.below(60) as u64));
        child.kill().unwrap();
        child.wait().unwrap();
        let got = store.load_domain(&a.name).unwrap();
        assert!(got == a || got == b, "store holds neither document");
    }
    // the children did write: backups only appear from the second save on
    assert!(store.backup_path(&a.name).exists());
}

#[test]
fn concurrent_updates_are_serialized() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let platform: boa_core::PlatformId = "linux-2.4/gcc-3.2".parse().unwrap();
    let mut d = Domain::new("cms", "/opt/sw", [platform.clone()]).unwrap();
    for i in 0..8 {
        d.add_project(Project::new(&format!("p{i}"), ProjectKind::SourceBuilt, "x").unwrap().with_version("1").unwrap())
            .unwrap();
    }
    StoreHandle::open(&root, true).unwrap().create_domain(&d).unwrap();

    let root = Arc::new(root);
    let handles: Vec<_> = (0..8)
        .map(|i| {
            let root = Arc::clone(&root);
            let platform = platform.clone();
            thread::spawn(move || {
                let store = StoreHandle::open(&*root, false).unwrap().with_lock_wait(Duration::from_secs(30));
                let addr = InstallAddress::new(&format!("p{i}"), "1", platform);
                for s in [InstallStatus::Fetching, InstallStatus::Configured, InstallStatus::Building, InstallStatus::Installed] {
                    store.update_installation("cms", &addr, s, None).unwrap();
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    let d = StoreHandle::open(&*root, false).unwrap().load_domain("cms").unwrap();
    for p in &d.projects {
        assert_eq!(p.versions[0].status_on(&platform), InstallStatus::Installed, "{}", p.name);
    }
}

#[test]
fn illegal_update_leaves_store_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let store = StoreHandle::open(dir.path(), true).unwrap();
    let d = random_domain(3, 4);
    let d = if d.projects.is_empty() { random_domain(4, 4) } else { d };
    store.save_domain(&d).unwrap();
    let before = fs::read(store.domain_path(&d.name)).unwrap();
    let p = &d.projects[0];
    let platform = d.platforms.iter().next().unwrap().clone();
    let addr = InstallAddress::new(&p.name, &p.versions[0].label, platform.clone());
    let current = p.versions[0].status_on(&platform);
    let illegal = InstallStatus::ALL.into_iter().find(|s| !current.can_transition_to(*s)).unwrap();
    let err = store.update_installation(&d.name, &addr, illegal, None).unwrap_err();
    assert!(matches!(err, StoreError::Model(_)), "{err:?}");
    assert_eq!(fs::read(store.domain_path(&d.name)).unwrap(), before);
}
