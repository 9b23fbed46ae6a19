use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SparseBinaryMatrix;

/// Bidirectional mapping between external string ids and dense indices,
/// assigned in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct IdIndex {
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl IdIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Index of `id`, inserting it at the end when unseen.
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.lookup.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_owned());
        self.lookup.insert(id.to_owned(), i);
        i
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

impl From<Vec<String>> for IdIndex {
    fn from(ids: Vec<String>) -> Self {
        let lookup = ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        IdIndex { ids, lookup }
    }
}

impl From<IdIndex> for Vec<String> {
    fn from(index: IdIndex) -> Self {
        index.ids
    }
}

/// Deduplicated binary user × item interactions.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    pub users: IdIndex,
    pub items: IdIndex,
    pub matrix: SparseBinaryMatrix,
}

impl InteractionDataset {
    /// Builds from `(user, item)` pairs; duplicates collapse to one entry.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut users = IdIndex::new();
        let mut items = IdIndex::new();
        let mut rows: Vec<Vec<usize>> = Vec::new();
        for (u, i) in pairs {
            let ui = users.intern(u);
            let ii = items.intern(i);
            if ui == rows.len() {
                rows.push(Vec::new());
            }
            rows[ui].push(ii);
        }
        if rows.is_empty() {
            return Err(Error::validation("interaction input contains no rows"));
        }
        let matrix = SparseBinaryMatrix::from_rows(items.len(), rows)?;
        Ok(InteractionDataset {
            users,
            items,
            matrix,
        })
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    /// Drops the named items; users left without interactions are dropped
    /// too. Remaining ids keep their relative order.
    pub fn without_items(&self, drop: &[String]) -> Result<Self> {
        let dropped: std::collections::HashSet<&str> = drop.iter().map(String::as_str).collect();
        let mut pairs = Vec::with_capacity(self.matrix.nnz());
        for u in 0..self.num_users() {
            for &i in self.matrix.row(u) {
                let item = self.items.id(i as usize);
                if !dropped.contains(item) {
                    pairs.push((self.users.id(u), item));
                }
            }
        }
        // Keep the original item order rather than the order of first
        // appearance in the filtered pairs.
        let mut items = IdIndex::new();
        for id in self.items.ids() {
            if !dropped.contains(id.as_str()) {
                items.intern(id);
            }
        }
        let mut users = IdIndex::new();
        let mut rows: Vec<Vec<usize>> = Vec::new();
        for (u, i) in pairs {
            let ui = users.intern(u);
            if ui == rows.len() {
                rows.push(Vec::new());
            }
            rows[ui].push(items.get(i).expect("kept item"));
        }
        if rows.is_empty() {
            return Err(Error::validation(
                "no interactions left after dropping items",
            ));
        }
        let matrix = SparseBinaryMatrix::from_rows(items.len(), rows)?;
        Ok(InteractionDataset {
            users,
            items,
            matrix,
        })
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, source: &str, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers().map_err(|e| Error::Parse {
        path: source.to_owned(),
        line: 1,
        message: e.to_string(),
    })?;
    let got: Vec<&str> = headers.iter().collect();
    if got.is_empty() || (got.len() == 1 && got[0].is_empty()) {
        return Err(Error::validation(format!("{source}: input is empty")));
    }
    if got != expected {
        return Err(Error::Parse {
            path: source.to_owned(),
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                got.join(",")
            ),
        });
    }
    Ok(())
}

fn read_records<R: Read>(
    reader: R,
    source: &str,
    header: &[&str],
) -> Result<Vec<(u64, Vec<String>)>> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, source, header)?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            path: source.to_owned(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != header.len() {
            return Err(Error::Parse {
                path: source.to_owned(),
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        out.push((line, record.iter().map(str::to_owned).collect()));
    }
    Ok(out)
}

/// Reads a `user_id,item_id` table.
pub fn read_interactions<R: Read>(reader: R, source: &str) -> Result<InteractionDataset> {
    let rows = read_records(reader, source, &["user_id", "item_id"])?;
    for (line, fields) in &rows {
        if fields.iter().any(String::is_empty) {
            return Err(Error::Parse {
                path: source.to_owned(),
                line: *line,
                message: "empty user or item id".into(),
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::validation(format!("{source}: no interactions")));
    }
    InteractionDataset::from_pairs(rows.iter().map(|(_, f)| (f[0].as_str(), f[1].as_str())))
}

pub fn load_interactions(path: &Path) -> Result<InteractionDataset> {
    read_interactions(open(path)?, &path.display().to_string())
}

/// Per-item `(category, value)` records in file order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ItemMetadata {
    records: BTreeMap<String, Vec<(String, String)>>,
}

impl ItemMetadata {
    pub fn insert(&mut self, item: &str, category: &str, value: &str) {
        self.records
            .entry(item.to_owned())
            .or_default()
            .push((category.to_owned(), value.to_owned()));
    }

    pub fn get(&self, item: &str) -> Option<&[(String, String)]> {
        self.records.get(item).map(Vec::as_slice)
    }

    /// First value of `category` for `item`.
    pub fn field(&self, item: &str, category: &str) -> Option<&str> {
        self.get(item)?
            .iter()
            .find(|(c, _)| c == category)
            .map(|(_, v)| v.as_str())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Items in id order with their records.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[(String, String)])> {
        self.records.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

/// Reads an `item_id,category,value` table; multi-valued categories repeat rows.
pub fn read_metadata<R: Read>(reader: R, source: &str) -> Result<ItemMetadata> {
    let rows = read_records(reader, source, &["item_id", "category", "value"])?;
    let mut meta = ItemMetadata::default();
    for (line, f) in rows {
        if f[0].is_empty() || f[1].is_empty() {
            return Err(Error::Parse {
                path: source.to_owned(),
                line,
                message: "empty item id or category".into(),
            });
        }
        meta.insert(&f[0], &f[1], &f[2]);
    }
    if meta.is_empty() {
        return Err(Error::validation(format!("{source}: no metadata records")));
    }
    Ok(meta)
}

pub fn load_metadata(path: &Path) -> Result<ItemMetadata> {
    read_metadata(open(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedup_and_first_seen_order() {
        let csv = "user_id,item_id\nu1,i1\nu1,i1\nu2,i1\n";
        let ds = read_interactions(csv.as_bytes(), "t").unwrap();
        assert_eq!(ds.num_users(), 2);
        assert_eq!(ds.num_items(), 1);
        assert_eq!(ds.matrix.nnz(), 2);
        assert!(ds.matrix.contains(0, 0) && ds.matrix.contains(1, 0));

        let csv = "user_id,item_id\nb,y\na,x\nb,x\n";
        let ds = read_interactions(csv.as_bytes(), "t").unwrap();
        assert_eq!(ds.users.ids(), ["b", "a"]);
        assert_eq!(ds.items.ids(), ["y", "x"]);
    }

    #[test]
    fn empty_input_is_validation_error() {
        assert!(matches!(
            read_interactions("".as_bytes(), "t"),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            read_interactions("user_id,item_id\n".as_bytes(), "t"),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "user_id,item_id\nu1,i1\nu2\n";
        match read_interactions(csv.as_bytes(), "t") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let csv = "user_id,item_id\nu1,i1\n,i2\n";
        match read_interactions(csv.as_bytes(), "t") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(matches!(
            read_interactions("user,item\nu,i\n".as_bytes(), "t"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn metadata_multi_valued() {
        let csv = "item_id,category,value\ni1,genre,A\ni1,genre,B\ni2,title,Foo\n";
        let meta = read_metadata(csv.as_bytes(), "m").unwrap();
        assert_eq!(meta.get("i1").unwrap().len(), 2);
        assert_eq!(meta.field("i2", "title"), Some("Foo"));
        assert_eq!(meta.field("i2", "description"), None);
    }

    #[test]
    fn dropping_items_keeps_order_and_prunes_users() {
        let ds =
            InteractionDataset::from_pairs([("u1", "a"), ("u1", "b"), ("u2", "b"), ("u3", "c")])
                .unwrap();
        let kept = ds.without_items(&["b".to_owned()]).unwrap();
        assert_eq!(kept.items.ids(), ["a", "c"]);
        assert_eq!(kept.users.ids(), ["u1", "u3"]);
        assert_eq!(kept.matrix.nnz(), 2);
    }
}
