//! Versioned store of user topics and roles.
//!
//! Every successful write bumps the version. Writers may pass the version
//! they last read; a mismatch means someone else wrote in between and the
//! write is rejected.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::format::write_atomic;
use crate::role::Role;
use crate::topics::UserTopic;

#[derive(Debug, Error, PartialEq)]
pub enum RegistryError {
    #[error("registry changed: expected version {expected}, current is {actual}")]
    StaleVersion { expected: u64, actual: u64 },
    #[error("unknown topic {0:?}")]
    UnknownTopic(String),
    #[error("unknown role {0:?}")]
    UnknownRole(String),
    #[error("a role named {0:?} already exists")]
    DuplicateRoleName(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    version: u64,
    topics: BTreeMap<String, UserTopic>,
    roles: BTreeMap<String, Role>,
}

impl Registry {
    /// Reads the registry, or starts an empty one when the file is absent.
    pub fn load(path: &Path) -> Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| Error::format(path, e.line(), e.to_string())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Registry::default()),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("registry serializes");
        write_atomic(path, json.as_bytes())
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn topics(&self) -> impl Iterator<Item = &UserTopic> {
        self.topics.values()
    }

    pub fn topic(&self, id: &str) -> Result<&UserTopic, RegistryError> {
        self.topics.get(id).ok_or_else(|| RegistryError::UnknownTopic(id.to_string()))
    }

    pub fn roles(&self) -> impl Iterator<Item = &Role> {
        self.roles.values()
    }

    pub fn role(&self, id: &str) -> Result<&Role, RegistryError> {
        self.roles.get(id).ok_or_else(|| RegistryError::UnknownRole(id.to_string()))
    }

    pub fn next_topic_id(&self) -> String {
        next_id("t", self.topics.keys())
    }

    pub fn next_role_id(&self) -> String {
        next_id("r", self.roles.keys())
    }

    fn check(&self, expected: Option<u64>) -> Result<(), RegistryError> {
        match expected {
            Some(v) if v != self.version => Err(RegistryError::StaleVersion {
                expected: v,
                actual: self.version,
            }),
            _ => Ok(()),
        }
    }

    /// Inserts or replaces a topic. Returns the new version.
    pub fn put_topic(&mut self, topic: UserTopic, expected: Option<u64>) -> Result<u64, RegistryError> {
        self.check(expected)?;
        self.topics.insert(topic.topic_id.clone(), topic);
        self.version += 1;
        Ok(self.version)
    }

    /// Inserts or replaces a role whose topic, if any, must exist. Role
    /// names are unique.
    pub fn put_role(&mut self, role: Role, expected: Option<u64>) -> Result<u64, RegistryError> {
        self.check(expected)?;
        if let Some(t) = &role.user_topic {
            self.topic(t)?;
        }
        if self.roles.values().any(|r| r.name == role.name && r.role_id != role.role_id) {
            return Err(RegistryError::DuplicateRoleName(role.name));
        }
        self.roles.insert(role.role_id.clone(), role);
        self.version += 1;
        Ok(self.version)
    }
}

fn next_id<'a>(prefix: &str, existing: impl Iterator<Item = &'a String>) -> String {
    let max = existing
        .filter_map(|id| id.strip_prefix(prefix)?.parse::<u64>().ok())
        .max()
        .unwrap_or(0);
    format!("{prefix}{}", max + 1)
}
