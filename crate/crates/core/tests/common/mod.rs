#![allow(dead_code)]

use boa_core::model::{InstallationRecord, VersionConstraint};
use boa_core::{Domain, InstallStatus, PlatformId, Project, ProjectKind, Requirement, Version};

/// xorshift64*, enough to drive generators from a proptest seed.
pub struct Rng(u64);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1)
    }

    pub fn next(&mut self) -> u64 {
        self.0 ^= self.0 >> 12;
        self.0 ^= self.0 << 25;
        self.0 ^= self.0 >> 27;
        self.0.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next() % n as u64) as usize
    }

    pub fn chance(&mut self, percent: u64) -> bool {
        self.next() % 100 < percent
    }

    pub fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.below(items.len())]
    }
}

const TEXT: [&str; 8] = ["", "plain", "with space", "quote \" and \\", "ünïcødé", "tab\there", "line\nbreak", "{}[]:,"];

pub fn random_platform(rng: &mut Rng) -> PlatformId {
    let os = rng.pick(&["linux", "sunos", "irix", "darwin"]);
    let ver = rng.pick(&["2.4", "5.8", "6.5", "7.3"]);
    let cc = rng.pick(&["gcc-3.2", "gcc-2.95.2", "cc-5.3", "icc-7"]);
    PlatformId::new(os, ver, cc).unwrap()
}

fn record(rng: &mut Rng, platform: PlatformId) -> InstallationRecord {
    use InstallStatus::*;
    let paths: [&[InstallStatus]; 7] = [
        &[],
        &[Fetching],
        &[Fetching, Configured],
        &[Fetching, Configured, Building],
        &[Fetching, Configured, Building, Installed],
        &[Fetching, Failed],
        &[Fetching, Configured, Installed, Removed],
    ];
    let mut rec = InstallationRecord::new(platform);
    // seeded clock so a domain rebuilt from the same seed is equal
    let mut at = chrono::DateTime::from_timestamp(1_000_000_000 + rng.below(1 << 30) as i64, 0).unwrap();
    for &s in *rng.pick(&paths) {
        let reason = (s == Failed).then(|| *rng.pick(&TEXT)).filter(|r| !r.is_empty());
        rec = rec.transition_at(s, reason, at).unwrap();
        at += chrono::Duration::seconds(rng.below(3600) as i64);
    }
    if rng.chance(50) {
        rec.session_log_ref = Some(format!("/logs/{}.log", rng.next()));
    }
    rec
}

/// A valid domain with up to `max_projects` projects. Dependencies only
/// point at earlier projects, so the graph is acyclic.
pub fn random_domain(seed: u64, max_projects: usize) -> Domain {
    let mut rng = Rng::new(seed);
    let platforms: Vec<PlatformId> = (0..1 + rng.below(3)).map(|_| random_platform(&mut rng)).collect();
    let mut d = Domain::new(&format!("d{}", rng.below(1000)), "/opt/sw", platforms.clone()).unwrap();
    for _ in 0..rng.below(3) {
        d.site_settings.insert(format!("k{}", rng.below(100)), rng.pick(&TEXT).to_string());
    }
    let n = rng.below(max_projects + 1);
    for i in 0..n {
        let kind = if rng.chance(50) { ProjectKind::SourceBuilt } else { ProjectKind::PackageCache };
        let origin = rng.pick(&["cvs://x/y", "http://cache/pkgs", "", "/local path"]).to_string();
        let mut p = Project::new(&format!("p{i}"), kind, &origin).unwrap();
        for v in 0..1 + rng.below(3) {
            let mut version = Version::new(&format!("v{v}_{}", rng.below(10))).unwrap_or_else(|_| unreachable!());
            if p.version(&version.label).is_some() {
                continue;
            }
            if rng.chance(30) {
                version = version.with_setting("flags", rng.pick(&TEXT));
            }
            for pl in &platforms {
                if rng.chance(60) {
                    version.installations.insert(pl.clone(), record(&mut rng, pl.clone()));
                }
            }
            p.add_version(version).unwrap();
        }
        for j in 0..i {
            if rng.chance(25) {
                let dep = &d.projects[j];
                let label = rng.pick(&dep.labels()).to_string();
                let c = match rng.below(3) {
                    0 => VersionConstraint::any(),
                    1 => VersionConstraint::exact(&label),
                    _ => VersionConstraint::at_least(&label),
                };
                p.add_dependency(Requirement::new(&dep.name, c)).unwrap();
            }
        }
        if rng.chance(20) {
            p.required_tools.push("gmake>=3.79".parse().unwrap());
        }
        d.add_project(p).unwrap();
    }
    if rng.chance(50) {
        d.bootstrap_tools.push("gcc".parse().unwrap());
    }
    d.validate().unwrap();
    d
}
