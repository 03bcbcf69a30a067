//! Build automation framework: a persistent domain model of projects,
//! versions and installations; a shell session executor that keeps one
//! environment alive across commands; build-output analysis; golden-output
//! validation; and a branching scenario engine tying them together.

pub mod adapters;
pub mod analyzer;
pub mod canonical;
pub mod model;
pub mod session;
pub mod store;
pub mod validator;
pub mod workflow;

pub use model::{
    Domain, InstallStatus, InstallationRecord, ModelError, PlatformId, Project, ProjectKind,
    Requirement, Version, VersionConstraint,
};
pub use session::{ActionRecord, Outcome, Session, SessionConfig, SessionError, SessionState};
pub use store::{InstallAddress, StoreError, StoreHandle};
