//! Discrete hyper-parameter domains and the configurations drawn from them.
//!
//! A [`SearchSpace`] is an ordered product of integer domains. Configurations
//! are encoded as per-domain ordinal indices, which is the representation the
//! samplers and surrogate models work with.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Space definition shipped with the crate: the three HO-FVSR dimensions.
pub const HOFVSR_SPACE_JSON: &str = include_str!("../spaces/hofvsr.json");

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("search space must declare at least one domain")]
    NoDomains,
    #[error("duplicate domain name `{0}`")]
    DuplicateName(String),
    #[error("domain name must not be empty (domain #{0})")]
    EmptyName(usize),
    #[error("domain `{0}` has no values")]
    EmptyDomain(String),
    #[error("values of domain `{0}` must be strictly increasing")]
    Unsorted(String),
    #[error("search space size overflows u64")]
    TooLarge,
    #[error("configuration has no assignment for `{0}`")]
    MissingAssignment(String),
    #[error("configuration assigns unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("value {value} is not in domain `{name}`")]
    ValueNotInDomain { name: String, value: i64 },
    #[error("encoded vector has {got} entries, space has {expected} domains")]
    ArityMismatch { expected: usize, got: usize },
    #[error("index {index} out of range for domain `{name}`")]
    IndexOutOfRange { name: String, index: usize },
    #[error("invalid space document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read space file: {0}")]
    Io(#[from] std::io::Error),
}

/// One named, ordered integer domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamDomain {
    pub name: String,
    pub values: Vec<i64>,
}

impl ParamDomain {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, value: i64) -> Option<usize> {
        self.values.binary_search(&value).ok()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceDocument {
    domains: Vec<ParamDomain>,
}

#[derive(Serialize)]
struct SpaceDocumentRef<'a> {
    domains: &'a [ParamDomain],
}

/// Immutable product of [`ParamDomain`]s.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchSpace {
    domains: Vec<ParamDomain>,
    size: u64,
}

/// A point in a search space: one value per domain, kept in domain order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(IndexMap<String, i64>);

impl Configuration {
    pub fn new() -> Self {
        Self(IndexMap::new())
    }

    pub fn get(&self, name: &str) -> Option<i64> {
        self.0.get(name).copied()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: i64) {
        self.0.insert(name.into(), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, i64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for Configuration {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Into<String>> FromIterator<(S, i64)> for Configuration {
    fn from_iter<T: IntoIterator<Item = (S, i64)>>(iter: T) -> Self {
        Self(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}: {v}")?;
        }
        f.write_str("}")
    }
}

/// Builds a space from `(name, values)` pairs, first pair slowest in enumeration order.
pub fn build_space<S, I>(domain_specs: I) -> Result<SearchSpace, SpaceError>
where
    S: Into<String>,
    I: IntoIterator<Item = (S, Vec<i64>)>,
{
    let domains = domain_specs
        .into_iter()
        .map(|(name, values)| ParamDomain {
            name: name.into(),
            values,
        })
        .collect();
    SearchSpace::new(domains)
}

impl SearchSpace {
    pub fn new(domains: Vec<ParamDomain>) -> Result<Self, SpaceError> {
        if domains.is_empty() {
            return Err(SpaceError::NoDomains);
        }
        let mut seen = HashSet::new();
        let mut size: u64 = 1;
        for (i, d) in domains.iter().enumerate() {
            if d.name.is_empty() {
                return Err(SpaceError::EmptyName(i));
            }
            if !seen.insert(d.name.as_str()) {
                return Err(SpaceError::DuplicateName(d.name.clone()));
            }
            if d.values.is_empty() {
                return Err(SpaceError::EmptyDomain(d.name.clone()));
            }
            if d.values.windows(2).any(|w| w[0] >= w[1]) {
                return Err(SpaceError::Unsorted(d.name.clone()));
            }
            size = size
                .checked_mul(d.values.len() as u64)
                .ok_or(SpaceError::TooLarge)?;
        }
        Ok(Self { domains, size })
    }

    /// The 10 x 8 x 10 residual/up-sampling space.
    pub fn hofvsr() -> Self {
        Self::from_json_str(HOFVSR_SPACE_JSON).expect("bundled space file is valid")
    }

    pub fn from_json_str(s: &str) -> Result<Self, SpaceError> {
        let doc: SpaceDocument = serde_json::from_str(s)?;
        Self::new(doc.domains)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, SpaceError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&SpaceDocumentRef {
            domains: &self.domains,
        })
        .expect("space serializes")
    }

    /// Hex SHA-256 of the canonical JSON form. Used to pin logs to a space.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn domains(&self) -> &[ParamDomain] {
        &self.domains
    }

    pub fn domain(&self, name: &str) -> Option<&ParamDomain> {
        self.domains.iter().find(|d| d.name == name)
    }

    pub fn dims(&self) -> usize {
        self.domains.len()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.domains.iter().map(ParamDomain::len).collect()
    }

    /// Product of the domain cardinalities.
    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn validate(&self, config: &Configuration) -> Result<(), SpaceError> {
        self.encode(config).map(|_| ())
    }

    /// Per-domain ordinal index of each assigned value.
    pub fn encode(&self, config: &Configuration) -> Result<Vec<usize>, SpaceError> {
        for (name, _) in config.iter() {
            if self.domain(name).is_none() {
                return Err(SpaceError::UnknownParam(name.to_string()));
            }
        }
        self.domains
            .iter()
            .map(|d| {
                let value = config
                    .get(&d.name)
                    .ok_or_else(|| SpaceError::MissingAssignment(d.name.clone()))?;
                d.index_of(value).ok_or_else(|| SpaceError::ValueNotInDomain {
                    name: d.name.clone(),
                    value,
                })
            })
            .collect()
    }

    pub fn decode(&self, encoded: &[usize]) -> Result<Configuration, SpaceError> {
        if encoded.len() != self.domains.len() {
            return Err(SpaceError::ArityMismatch {
                expected: self.domains.len(),
                got: encoded.len(),
            });
        }
        self.domains
            .iter()
            .zip(encoded)
            .map(|(d, &i)| {
                d.values
                    .get(i)
                    .map(|&v| (d.name.clone(), v))
                    .ok_or_else(|| SpaceError::IndexOutOfRange {
                        name: d.name.clone(),
                        index: i,
                    })
            })
            .collect()
    }

    /// Lexicographic rank of an encoded vector (first domain most significant).
    pub fn rank(&self, encoded: &[usize]) -> u64 {
        encoded
            .iter()
            .zip(&self.domains)
            .fold(0u64, |acc, (&i, d)| acc * d.len() as u64 + i as u64)
    }

    pub fn unrank(&self, mut rank: u64) -> Vec<usize> {
        let mut out = vec![0; self.domains.len()];
        for (slot, d) in out.iter_mut().zip(&self.domains).rev() {
            let n = d.len() as u64;
            *slot = (rank % n) as usize;
            rank /= n;
        }
        out
    }

    /// Every configuration, in lexicographic encoded order.
    pub fn enumerate(&self) -> Enumerate<'_> {
        Enumerate {
            space: self,
            next: Some(vec![0; self.domains.len()]),
        }
    }
}

pub fn enumerate_space(space: &SearchSpace) -> Enumerate<'_> {
    space.enumerate()
}

pub struct Enumerate<'a> {
    space: &'a SearchSpace,
    next: Option<Vec<usize>>,
}

impl Iterator for Enumerate<'_> {
    type Item = Configuration;

    fn next(&mut self) -> Option<Configuration> {
        let current = self.next.take()?;
        let config = self.space.decode(&current).expect("odometer stays in range");
        let mut succ = current;
        for (slot, d) in succ.iter_mut().zip(&self.space.domains).rev() {
            *slot += 1;
            if *slot < d.len() {
                self.next = Some(succ);
                return Some(config);
            }
            *slot = 0;
        }
        Some(config)
    }
}
