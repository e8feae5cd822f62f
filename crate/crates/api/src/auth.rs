use std::collections::BTreeMap;

use axum::http::{header, HeaderMap};
use rand::Rng;
use serde::{Deserialize, Serialize};
use setpoint_core::OccupantId;
use sha2::{Digest, Sha256};

use crate::ApiError;

const TOKEN_BYTES: usize = 32;

/// Who is calling.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Viewer {
    Public,
    Occupant(OccupantId),
    Admin,
}

impl Viewer {
    /// Whether this caller may see data private to `occupant`.
    pub fn sees(&self, occupant: &OccupantId) -> bool {
        match self {
            Viewer::Public => false,
            Viewer::Occupant(me) => me == occupant,
            Viewer::Admin => true,
        }
    }

    pub fn occupant(&self) -> Option<&OccupantId> {
        match self {
            Viewer::Occupant(o) => Some(o),
            _ => None,
        }
    }
}

/// Tokens handed out once at session creation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IssuedTokens {
    pub occupant_tokens: BTreeMap<OccupantId, String>,
    pub admin_token: String,
}

/// Digests of a session's tokens; the tokens themselves are never stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Credentials {
    occupants: BTreeMap<String, OccupantId>,
    admin: String,
}

impl Credentials {
    pub fn issue(occupancy: &[OccupantId]) -> (Self, IssuedTokens) {
        let occupant_tokens: BTreeMap<OccupantId, String> =
            occupancy.iter().map(|o| (o.clone(), new_token())).collect();
        let admin_token = new_token();
        let credentials = Self {
            occupants: occupant_tokens
                .iter()
                .map(|(o, t)| (digest(t), o.clone()))
                .collect(),
            admin: digest(&admin_token),
        };
        (
            credentials,
            IssuedTokens {
                occupant_tokens,
                admin_token,
            },
        )
    }

    pub fn resolve(&self, token: &str) -> Option<Viewer> {
        let d = digest(token);
        if d == self.admin {
            return Some(Viewer::Admin);
        }
        self.occupants.get(&d).cloned().map(Viewer::Occupant)
    }

    /// `Public` without a token; an unknown token is an error rather than a
    /// silent downgrade, so clients notice stale credentials.
    pub fn viewer(&self, token: Option<&str>) -> Result<Viewer, ApiError> {
        match token {
            None => Ok(Viewer::Public),
            Some(t) => self
                .resolve(t)
                .ok_or_else(|| ApiError::unauthorized("token is not valid for this session")),
        }
    }

    pub fn require_occupant(&self, token: Option<&str>) -> Result<OccupantId, ApiError> {
        match self.viewer(token)? {
            Viewer::Occupant(o) => Ok(o),
            Viewer::Public => Err(ApiError::unauthorized("occupant token required")),
            Viewer::Admin => Err(ApiError::forbidden("this endpoint takes an occupant token")),
        }
    }

    pub fn require_admin(&self, token: Option<&str>) -> Result<(), ApiError> {
        match self.viewer(token)? {
            Viewer::Admin => Ok(()),
            Viewer::Public => Err(ApiError::unauthorized("admin token required")),
            Viewer::Occupant(_) => Err(ApiError::forbidden("admin token required")),
        }
    }
}

fn new_token() -> String {
    let mut bytes = [0u8; TOKEN_BYTES];
    rand::rng().fill(&mut bytes);
    hex::encode(bytes)
}

fn digest(token: &str) -> String {
    hex::encode(Sha256::digest(token.as_bytes()))
}

/// Token from `Authorization: Bearer`, falling back to a `token` query
/// parameter for clients such as `EventSource` that cannot set headers.
pub fn bearer<'a>(headers: &'a HeaderMap, query: Option<&'a str>) -> Option<&'a str> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
        .or(query)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_are_distinct_and_resolve_to_their_holder() {
        let occupancy: Vec<OccupantId> = ["a", "b", "c"].map(OccupantId::from).to_vec();
        let (creds, issued) = Credentials::issue(&occupancy);
        let mut all: Vec<&String> = issued.occupant_tokens.values().collect();
        all.push(&issued.admin_token);
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 4);
        for (o, t) in &issued.occupant_tokens {
            assert_eq!(t.len(), 2 * TOKEN_BYTES);
            assert_eq!(creds.resolve(t), Some(Viewer::Occupant(o.clone())));
        }
        assert_eq!(creds.resolve(&issued.admin_token), Some(Viewer::Admin));
        assert_eq!(creds.resolve("00"), None);
        let stored = serde_json::to_string(&creds).unwrap();
        assert!(!stored.contains(&issued.admin_token));
    }
}
