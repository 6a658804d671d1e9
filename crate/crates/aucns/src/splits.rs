//! `user,item,split` CSV files so a split can be reused across runs.
//!
//! Users and items are written with their raw ids from the rating file.

use std::collections::HashMap;
use std::path::Path;

use aucns_core::dataset::{IdMap, InteractionDataset};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Train,
    Test,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    user: u64,
    item: u64,
    split: Part,
}

pub fn write_split(path: &Path, dataset: &InteractionDataset, ids: &IdMap) -> Result<()> {
    let io = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for u in 0..dataset.num_users() {
        for (part, items) in [(Part::Train, dataset.train_items(u)), (Part::Test, dataset.test_items(u))] {
            for &i in items {
                w.serialize(Row { user: ids.users[u], item: ids.items[i as usize], split: part }).map_err(io)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Rebuilds a dataset over the users and items of `ids`.
pub fn read_split(path: &Path, ids: &IdMap) -> Result<InteractionDataset> {
    let users: HashMap<u64, usize> = ids.users.iter().enumerate().map(|(k, &v)| (v, k)).collect();
    let items: HashMap<u64, u32> = ids.items.iter().enumerate().map(|(k, &v)| (v, k as u32)).collect();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let mut train = vec![Vec::new(); ids.num_users()];
    let mut test = vec![Vec::new(); ids.num_users()];
    for (n, row) in r.deserialize::<Row>().enumerate() {
        // Line 1 is the header.
        let line = n + 2;
        let bad = |reason: String| Error::Parse { path: path.to_path_buf(), line, reason };
        let row = row.map_err(|e| bad(e.to_string()))?;
        let u = *users.get(&row.user).ok_or_else(|| bad(format!("unknown user {}", row.user)))?;
        let i = *items.get(&row.item).ok_or_else(|| bad(format!("unknown item {}", row.item)))?;
        match row.split {
            Part::Train => train[u].push(i),
            Part::Test => test[u].push(i),
        }
    }
    Ok(InteractionDataset::from_parts(ids.num_users(), ids.num_items(), train, test)?)
}
