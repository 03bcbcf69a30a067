mod common;

use std::collections::{BTreeMap, BTreeSet};

use boa_core::model::{ConstraintOp, VersionConstraint};
use boa_core::{Domain, ModelError, Project, ProjectKind, Requirement};
use common::Rng;
use proptest::prelude::*;

/// Random domain whose dependency graph follows a hidden rank order, so it
/// is acyclic, while the project list itself is shuffled.
fn random_dag(seed: u64, n: usize) -> Domain {
    let mut rng = Rng::new(seed);
    let mut rank: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        rank.swap(i, rng.below(i + 1));
    }
    let mut d = Domain::new("dag", "/opt/sw", ["linux-2.4/gcc-3.2".parse().unwrap()]).unwrap();
    let versions: Vec<usize> = (0..n).map(|_| 1 + rng.below(3)).collect();
    for i in 0..n {
        let mut p = Project::new(&format!("p{i}"), ProjectKind::SourceBuilt, "x").unwrap();
        for v in 0..versions[i] {
            p = p.with_version(&format!("{v}.0")).unwrap();
        }
        for j in 0..n {
            if rank[j] < rank[i] && rng.chance(35) {
                let label = format!("{}.0", rng.below(versions[j]));
                let c = match rng.below(4) {
                    0 => VersionConstraint::exact(&label),
                    1 => VersionConstraint::at_least(&label),
                    _ => VersionConstraint::any(),
                };
                p.add_dependency(Requirement::new(&format!("p{j}"), c)).unwrap();
            }
        }
        d.add_project(p).unwrap();
    }
    d
}

fn project<'a>(d: &'a Domain, name: &str) -> &'a Project {
    d.projects.iter().find(|p| p.name == name).unwrap()
}

fn satisfies(p: &Project, c: &VersionConstraint, label: &str) -> bool {
    let pos = |l: &str| p.versions.iter().position(|v| v.label == l);
    match c.op {
        ConstraintOp::Any => true,
        ConstraintOp::Exact => c.label == label,
        ConstraintOp::AtLeast => match (pos(label), pos(&c.label)) {
            (Some(a), Some(b)) => a >= b,
            _ => false,
        },
    }
}

enum Expected {
    Order(BTreeSet<String>, BTreeMap<String, String>),
    Unsatisfiable,
}

/// Closure by breadth-first search, then per-project newest satisfying label.
fn expected(d: &Domain, target: &str, label: &str) -> Expected {
    let mut closure = BTreeSet::new();
    let mut queue = vec![target.to_string()];
    while let Some(name) = queue.pop() {
        if closure.insert(name.clone()) {
            queue.extend(project(d, &name).dependencies.iter().map(|r| r.name.clone()));
        }
    }
    let mut picks = BTreeMap::new();
    for name in &closure {
        let p = project(d, name);
        let mut constraints: Vec<VersionConstraint> = closure
            .iter()
            .flat_map(|by| project(d, by).dependencies.iter())
            .filter(|r| &r.name == name)
            .map(|r| r.constraint.clone())
            .collect();
        if name == target {
            constraints.push(VersionConstraint::exact(label));
        }
        let best = p
            .versions
            .iter()
            .rev()
            .find(|v| constraints.iter().all(|c| satisfies(p, c, &v.label)));
        match best {
            Some(v) => {
                picks.insert(name.clone(), v.label.clone());
            }
            None => return Expected::Unsatisfiable,
        }
    }
    Expected::Order(closure, picks)
}

fn check_dag(seed: u64, n: usize) -> Result<(), TestCaseError> {
    let d = random_dag(seed, n);
    let mut rng = Rng::new(seed ^ 0xABCD);
    let t = &d.projects[rng.below(n)];
    let label = rng.pick(&t.labels()).to_string();
    let result = d.resolve_install_order(&[(t.name.clone(), label.clone())]);
    match expected(&d, &t.name, &label) {
        Expected::Unsatisfiable => {
            prop_assert!(matches!(result, Err(ModelError::UnsatisfiableConstraint { .. })), "{result:?}");
        }
        Expected::Order(closure, picks) => {
            let order = result.unwrap();
            let names: BTreeSet<String> = order.iter().map(|(n, _)| n.clone()).collect();
            prop_assert_eq!(names.len(), order.len(), "duplicates in {:?}", order);
            prop_assert_eq!(&names, &closure);
            let pos: BTreeMap<&str, usize> = order.iter().enumerate().map(|(i, (n, _))| (n.as_str(), i)).collect();
            // brute-force edge check
            for a in &closure {
                for b in &closure {
                    if project(&d, a).dependencies.iter().any(|r| &r.name == b) {
                        prop_assert!(pos[b.as_str()] < pos[a.as_str()], "{} must precede {}", b, a);
                    }
                }
            }
            for (n, l) in &order {
                prop_assert_eq!(l, &picks[n]);
            }
            prop_assert_eq!(d.resolve_install_order(&[(t.name.clone(), label)]).unwrap(), order);
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn random_dags_resolve(seed in any::<u64>(), n in 1usize..=10) {
        check_dag(seed, n)?;
    }

    #[test]
    fn seeded_cycles_are_reported(seed in any::<u64>(), n in 2usize..=10, len in 2usize..=10) {
        let mut d = random_dag(seed, n);
        let mut rng = Rng::new(seed);
        let len = len.min(n);
        // a chain p_a -> ... -> p_z plus a back edge closes the cycle
        let mut members: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            members.swap(i, rng.below(i + 1));
        }
        members.truncate(len);
        for w in 0..len {
            let from = members[w];
            let to = members[(w + 1) % len];
            let dep = format!("p{to}");
            let p = &mut d.projects[from];
            p.dependencies.retain(|r| r.name != dep);
            p.dependencies.push(Requirement::new(&dep, VersionConstraint::any()));
        }
        let start = &d.projects[members[0]];
        let target = (start.name.clone(), start.versions[0].label.clone());
        match d.resolve_install_order(&[target]) {
            Err(ModelError::DependencyCycle(cycle)) => {
                prop_assert!(cycle.len() >= 2);
                // the reported cycle is a real one
                for w in 0..cycle.len() {
                    let next = &cycle[(w + 1) % cycle.len()];
                    prop_assert!(project(&d, &cycle[w]).dependencies.iter().any(|r| &r.name == next));
                }
            }
            other => prop_assert!(false, "expected a cycle, got {:?}", other),
        }
    }
}

#[test]
fn ties_follow_project_list_order() {
    let d = random_dag(1, 1);
    let mut d = Domain { projects: vec![], ..d };
    for name in ["zeta", "alpha", "mid"] {
        d.add_project(Project::new(name, ProjectKind::PackageCache, "c").unwrap().with_version("1").unwrap())
            .unwrap();
    }
    let top = Project::new("top", ProjectKind::SourceBuilt, "s")
        .unwrap()
        .with_version("1")
        .unwrap()
        .with_dependency("mid", VersionConstraint::any())
        .unwrap()
        .with_dependency("alpha", VersionConstraint::any())
        .unwrap()
        .with_dependency("zeta", VersionConstraint::any())
        .unwrap();
    d.add_project(top).unwrap();
    let order: Vec<String> = d
        .resolve_install_order(&[("top".into(), "1".into())])
        .unwrap()
        .into_iter()
        .map(|(n, _)| n)
        .collect();
    assert_eq!(order, ["zeta", "alpha", "mid", "top"]);
}
