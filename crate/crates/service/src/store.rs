//! Single-file embedded storage for profiles, sessions and map assets.

use std::path::Path;

use redb::backends::InMemoryBackend;
use redb::{Database, ReadableTable, TableDefinition};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::api::{Session, UserProfile};
use crate::ServiceError;

const PROFILES: TableDefinition<&str, &[u8]> = TableDefinition::new("profiles");
const SESSIONS: TableDefinition<&str, &[u8]> = TableDefinition::new("sessions");
const ASSET_BYTES: TableDefinition<&str, &[u8]> = TableDefinition::new("asset_bytes");
const ASSET_META: TableDefinition<&str, &[u8]> = TableDefinition::new("asset_meta");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Asset {
    pub content_type: String,
    pub bytes: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct AssetMeta {
    content_type: String,
}

fn storage<E: std::fmt::Display>(e: E) -> ServiceError {
    ServiceError::Storage(e.to_string())
}

pub struct Store {
    db: Database,
}

impl Store {
    pub fn open(path: &Path) -> Result<Self, ServiceError> {
        Self::init(Database::create(path).map_err(storage)?)
    }

    pub fn in_memory() -> Result<Self, ServiceError> {
        Self::init(Database::builder().create_with_backend(InMemoryBackend::new()).map_err(storage)?)
    }

    fn init(db: Database) -> Result<Self, ServiceError> {
        let tx = db.begin_write().map_err(storage)?;
        for table in [PROFILES, SESSIONS, ASSET_BYTES, ASSET_META] {
            tx.open_table(table).map_err(storage)?;
        }
        tx.commit().map_err(storage)?;
        Ok(Self { db })
    }

    fn get<T: DeserializeOwned>(&self, table: TableDefinition<&str, &[u8]>, key: &str) -> Result<Option<T>, ServiceError> {
        let tx = self.db.begin_read().map_err(storage)?;
        let t = tx.open_table(table).map_err(storage)?;
        match t.get(key).map_err(storage)? {
            Some(v) => serde_json::from_slice(v.value()).map(Some).map_err(storage),
            None => Ok(None),
        }
    }

    fn put<T: Serialize>(&self, table: TableDefinition<&str, &[u8]>, key: &str, value: &T) -> Result<(), ServiceError> {
        let bytes = serde_json::to_vec(value).map_err(storage)?;
        let tx = self.db.begin_write().map_err(storage)?;
        tx.open_table(table).map_err(storage)?.insert(key, bytes.as_slice()).map_err(storage)?;
        tx.commit().map_err(storage)
    }

    pub fn profile(&self, user_id: &str) -> Result<Option<UserProfile>, ServiceError> {
        self.get(PROFILES, user_id)
    }

    pub fn put_profile(&self, profile: &UserProfile) -> Result<(), ServiceError> {
        self.put(PROFILES, &profile.user_id, profile)
    }

    pub fn session(&self, id: &str) -> Result<Option<Session>, ServiceError> {
        self.get(SESSIONS, id)
    }

    pub fn put_session(&self, session: &Session) -> Result<(), ServiceError> {
        self.put(SESSIONS, &session.session_id, session)
    }

    pub fn session_exists(&self, id: &str) -> Result<bool, ServiceError> {
        let tx = self.db.begin_read().map_err(storage)?;
        let t = tx.open_table(SESSIONS).map_err(storage)?;
        Ok(t.get(id).map_err(storage)?.is_some())
    }

    /// Stores an asset once; later writes under the same id are ignored.
    pub fn put_asset(&self, id: &str, asset: &Asset) -> Result<(), ServiceError> {
        let meta = serde_json::to_vec(&AssetMeta { content_type: asset.content_type.clone() }).map_err(storage)?;
        let tx = self.db.begin_write().map_err(storage)?;
        {
            let mut bytes = tx.open_table(ASSET_BYTES).map_err(storage)?;
            if bytes.get(id).map_err(storage)?.is_none() {
                bytes.insert(id, asset.bytes.as_slice()).map_err(storage)?;
                tx.open_table(ASSET_META).map_err(storage)?.insert(id, meta.as_slice()).map_err(storage)?;
            }
        }
        tx.commit().map_err(storage)
    }

    pub fn asset(&self, id: &str) -> Result<Option<Asset>, ServiceError> {
        let tx = self.db.begin_read().map_err(storage)?;
        let bytes = tx.open_table(ASSET_BYTES).map_err(storage)?;
        let Some(b) = bytes.get(id).map_err(storage)? else {
            return Ok(None);
        };
        let meta = tx.open_table(ASSET_META).map_err(storage)?;
        let m: AssetMeta = match meta.get(id).map_err(storage)? {
            Some(v) => serde_json::from_slice(v.value()).map_err(storage)?,
            None => return Err(ServiceError::Storage(format!("asset {id} has no metadata"))),
        };
        Ok(Some(Asset { content_type: m.content_type, bytes: b.value().to_vec() }))
    }

    pub fn session_ids(&self) -> Result<Vec<String>, ServiceError> {
        let tx = self.db.begin_read().map_err(storage)?;
        let t = tx.open_table(SESSIONS).map_err(storage)?;
        let mut out = Vec::new();
        for row in t.iter().map_err(storage)? {
            out.push(row.map_err(storage)?.0.value().to_owned());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assets_are_immutable_and_persist() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.redb");
        {
            let s = Store::open(&path).unwrap();
            let a = Asset { content_type: "image/svg+xml".into(), bytes: b"<svg/>".to_vec() };
            s.put_asset("m1", &a).unwrap();
            s.put_asset("m1", &Asset { content_type: "x".into(), bytes: vec![1] }).unwrap();
            assert_eq!(s.asset("m1").unwrap(), Some(a));
        }
        let s = Store::open(&path).unwrap();
        assert_eq!(s.asset("m1").unwrap().unwrap().bytes, b"<svg/>");
        assert_eq!(s.asset("nope").unwrap(), None);
    }

    #[test]
    fn profiles_round_trip() {
        let s = Store::in_memory().unwrap();
        let p = UserProfile {
            user_id: "u".into(),
            display_name: "Ana".into(),
            linked_user_id: None,
            preferences: "jazz".into(),
        };
        s.put_profile(&p).unwrap();
        assert_eq!(s.profile("u").unwrap(), Some(p));
        assert!(s.session_ids().unwrap().is_empty());
    }
}
