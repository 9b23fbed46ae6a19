//! Sessions and their line-delimited event log.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use teaser_core::recommend::{apply_feedback, UserState};

use crate::error::ApiError;
use crate::Models;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "+", alias = "up")]
    Up,
    #[serde(rename = "-", alias = "down")]
    Down,
}

impl Direction {
    pub fn delta(self) -> i32 {
        match self {
            Direction::Up => 1,
            Direction::Down => -1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Change {
    Create,
    AddItem { item_id: String },
    RemoveItem { item_id: String },
    Feedback { tag_id: usize, direction: Direction },
}

/// One line of the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub session: String,
    pub at_ms: u64,
    #[serde(flatten)]
    pub change: Change,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub state: UserState,
    pub created_ms: u64,
    pub updated_ms: u64,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn item_index(models: &Models, item_id: &str) -> Result<usize, ApiError> {
    models
        .dataset
        .items
        .get(item_id)
        .ok_or_else(|| ApiError::not_found(format!("item `{item_id}`")))
}

/// State after `change`, or `None` when it has no effect.
pub fn transition(
    models: &Models,
    state: &UserState,
    change: &Change,
) -> Result<Option<UserState>, ApiError> {
    let mut next = state.clone();
    let changed = match change {
        Change::Create => return Err(ApiError::bad_request("session already exists")),
        Change::AddItem { item_id } => next.add_item(item_index(models, item_id)?),
        Change::RemoveItem { item_id } => {
            let item = item_index(models, item_id)?;
            if !next.remove_item(item) {
                return Err(ApiError::not_found(format!("item `{item_id}` in history")));
            }
            true
        }
        Change::Feedback { tag_id, direction } => {
            if *tag_id >= state.num_tags() {
                return Err(ApiError::not_found(format!("tag {tag_id}")));
            }
            next = apply_feedback(state, *tag_id, direction.delta())?;
            next != *state
        }
    };
    Ok(changed.then_some(next))
}

pub fn cold_start(models: &Models) -> UserState {
    let tags = &models.dataset.tags;
    UserState::cold_start(tags.num_tags(), tags.popularity_tag())
}

#[derive(Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    log: Option<Mutex<File>>,
}

impl SessionStore {
    /// Opens (or creates) the log at `path` and replays every event in it.
    pub fn open(models: &Models, path: &Path) -> Result<Self, ApiError> {
        let mut store = SessionStore::default();
        if path.exists() {
            let file = File::open(path)
                .map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;
            for (n, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| ApiError::internal(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let event: Event = serde_json::from_str(&line).map_err(|e| {
                    ApiError::internal(format!("{}:{}: {e}", path.display(), n + 1))
                })?;
                store.replay(models, &event).map_err(|e| {
                    ApiError::internal(format!("{}:{}: {}", path.display(), n + 1, e.message))
                })?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;
        store.log = Some(Mutex::new(file));
        Ok(store)
    }

    fn replay(&self, models: &Models, event: &Event) -> Result<(), ApiError> {
        if event.change == Change::Create {
            self.insert(Session {
                id: event.session.clone(),
                state: cold_start(models),
                created_ms: event.at_ms,
                updated_ms: event.at_ms,
            });
            return Ok(());
        }
        let handle = self.get(&event.session)?;
        let mut session = handle.lock().expect("session lock");
        if let Some(next) = transition(models, &session.state, &event.change)? {
            session.state = next;
        }
        session.updated_ms = event.at_ms;
        Ok(())
    }

    fn insert(&self, session: Session) {
        self.sessions
            .write()
            .expect("session map lock")
            .insert(session.id.clone(), Arc::new(Mutex::new(session)));
    }

    pub fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("session `{id}`")))
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("session map lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn append(&self, event: &Event) -> Result<(), ApiError> {
        let Some(log) = &self.log else {
            return Ok(());
        };
        let mut line = serde_json::to_vec(event).map_err(|e| ApiError::internal(e.to_string()))?;
        line.push(b'\n');
        let mut file = log.lock().expect("log lock");
        file.write_all(&line)
            .and_then(|_| file.flush())
            .map_err(|e| ApiError::internal(format!("event log: {e}")))
    }

    pub fn create(&self, models: &Models) -> Result<Session, ApiError> {
        let at_ms = now_ms();
        let session = Session {
            id: uuid::Uuid::new_v4().simple().to_string(),
            state: cold_start(models),
            created_ms: at_ms,
            updated_ms: at_ms,
        };
        self.append(&Event {
            session: session.id.clone(),
            at_ms,
            change: Change::Create,
        })?;
        self.insert(session.clone());
        Ok(session)
    }

    /// Applies `change` under the session lock, logging it first so the
    /// log order matches the order in which changes took effect.
    pub fn update(&self, models: &Models, id: &str, change: Change) -> Result<UserState, ApiError> {
        let handle = self.get(id)?;
        let mut session = handle.lock().expect("session lock");
        if let Some(next) = transition(models, &session.state, &change)? {
            let at_ms = now_ms();
            self.append(&Event {
                session: id.to_owned(),
                at_ms,
                change,
            })?;
            session.state = next;
            session.updated_ms = at_ms;
        }
        Ok(session.state.clone())
    }

    pub fn state(&self, id: &str) -> Result<UserState, ApiError> {
        Ok(self.get(id)?.lock().expect("session lock").state.clone())
    }
}
