//! Relation ingestion and catalog persistence.
//!
//! A catalog holds named relations that all share one grid height `h` and one
//! global attribute order (attribute names sorted lexicographically, frozen
//! at build time) so that child mappings built by different relations agree
//! on shared attributes. Values are either raw non-negative integers or,
//! with dictionary encoding on, arbitrary tokens remapped to dense
//! identifiers so the tree height tracks the number of distinct values
//! rather than the raw domain.
//!
//! On disk a catalog is a directory: a `catalog.txt` manifest, one
//! `<relation>.qdx` index per relation, and `dict.txt` when dictionary
//! encoded.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::grid::{GridParams, MAX_DIMS};
use crate::quadtree::{build, CompactQuadtree};

const MANIFEST_NAME: &str = "catalog.txt";
const DICT_NAME: &str = "dict.txt";

/// Catalog-wide value-to-identifier remapping: distinct original values
/// sorted (numeric tokens first, in numeric order, then the rest in byte
/// order), identifiers dense from zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueDictionary {
    values: Vec<String>,
    index: BTreeMap<String, u64>,
}

fn token_sort_key(token: &str) -> (u8, u64, String) {
    match token.parse::<u64>() {
        Ok(n) => (0, n, String::new()),
        Err(_) => (1, 0, token.to_string()),
    }
}

impl ValueDictionary {
    fn from_tokens<'a>(tokens: impl Iterator<Item = &'a str>) -> Self {
        let mut distinct: Vec<&str> = tokens.collect::<BTreeSet<_>>().into_iter().collect();
        distinct.sort_by_key(|t| token_sort_key(t));
        let values: Vec<String> = distinct.into_iter().map(str::to_string).collect();
        let index = values
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), i as u64))
            .collect();
        ValueDictionary { values, index }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn encode(&self, token: &str) -> Option<u64> {
        self.index.get(token).copied()
    }

    pub fn decode(&self, id: u64) -> Option<&str> {
        self.values.get(id as usize).map(String::as_str)
    }
}

/// One stored relation: schema, tuple count, and its index tree.
#[derive(Debug, Clone)]
pub struct Relation {
    name: String,
    /// Attribute ids in global order; coordinate `k` of a stored point is
    /// the value of `attrs[k]`.
    attrs: Vec<usize>,
    /// Attribute names in the order the input columns were declared.
    declared: Vec<String>,
    tree: Rc<CompactQuadtree>,
    dict_encoded: bool,
    index_file: String,
}

impl Relation {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn attrs(&self) -> &[usize] {
        &self.attrs
    }

    pub fn declared_attr_names(&self) -> &[String] {
        &self.declared
    }

    pub fn tree(&self) -> &Rc<CompactQuadtree> {
        &self.tree
    }

    pub fn tuple_count(&self) -> u128 {
        self.tree.count()
    }

    pub fn dict_encoded(&self) -> bool {
        self.dict_encoded
    }

    pub fn index_file(&self) -> &str {
        &self.index_file
    }
}

#[derive(Debug, Clone)]
pub struct Catalog {
    height: usize,
    /// Global attribute order: sorted names, id = position.
    attr_names: Vec<String>,
    relations: BTreeMap<String, Relation>,
    dict: Option<ValueDictionary>,
}

impl Catalog {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn attr_names(&self) -> &[String] {
        &self.attr_names
    }

    pub fn attr_id(&self, name: &str) -> Option<usize> {
        self.attr_names
            .binary_search_by(|n| n.as_str().cmp(name))
            .ok()
    }

    pub fn attr_name(&self, id: usize) -> &str {
        &self.attr_names[id]
    }

    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.relations.get(name)
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        self.relations.values()
    }

    pub fn dictionary(&self) -> Option<&ValueDictionary> {
        self.dict.as_ref()
    }

    /// Tuples of a stored relation in declared column order, decoded back to
    /// the original tokens.
    pub fn relation_tuples(&self, name: &str) -> Result<Vec<Vec<String>>> {
        let rel = self
            .relation(name)
            .ok_or_else(|| Error::Schema(format!("unknown relation {name}")))?;
        // Position of each declared column inside the sorted attribute list.
        let col_pos: Vec<usize> = rel
            .declared
            .iter()
            .map(|n| {
                let id = self.attr_id(n).expect("declared attribute is global");
                rel.attrs
                    .binary_search(&id)
                    .expect("attr belongs to relation")
            })
            .collect();
        let mut out = Vec::new();
        for point in rel.tree.points() {
            let row = col_pos
                .iter()
                .map(|&k| self.decode_value(point[k]))
                .collect::<Result<Vec<String>>>()?;
            out.push(row);
        }
        Ok(out)
    }

    /// Decode one coordinate back to its surface form.
    pub fn decode_value(&self, value: u64) -> Result<String> {
        match &self.dict {
            None => Ok(value.to_string()),
            Some(dict) => dict
                .decode(value)
                .map(str::to_string)
                .ok_or_else(|| Error::Data(format!("identifier {value} not in dictionary"))),
        }
    }

    /// Write the manifest, per-relation indexes, and dictionary.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut manifest = String::new();
        manifest.push_str("qdx-catalog 1\n");
        manifest.push_str(&format!("h {}\n", self.height));
        manifest.push_str(&format!(
            "mode {}\n",
            if self.dict.is_some() { "dict" } else { "raw" }
        ));
        manifest.push_str(&format!("attrs {}\n", self.attr_names.join(",")));
        if let Some(dict) = &self.dict {
            manifest.push_str(&format!("dict {DICT_NAME}\n"));
            let mut text = String::new();
            for v in &dict.values {
                text.push_str(v);
                text.push('\n');
            }
            fs::write(dir.join(DICT_NAME), text)?;
        }
        for rel in self.relations.values() {
            manifest.push_str(&format!(
                "relation {} {} {} {} {}\n",
                rel.name,
                rel.declared.join(","),
                rel.tuple_count(),
                rel.index_file,
                if rel.dict_encoded { "dict" } else { "raw" }
            ));
            let mut bytes = Vec::new();
            rel.tree.save(&mut bytes)?;
            fs::write(dir.join(&rel.index_file), bytes)?;
        }
        fs::write(dir.join(MANIFEST_NAME), manifest)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Catalog> {
        let manifest = fs::read_to_string(dir.join(MANIFEST_NAME))
            .map_err(|e| Error::Format(format!("cannot read catalog manifest: {e}")))?;
        let mut lines = manifest.lines();
        match lines.next() {
            Some("qdx-catalog 1") => {}
            Some(other) => {
                return Err(Error::Format(format!(
                    "unrecognized catalog header {other:?}"
                )))
            }
            None => return Err(Error::Format("empty catalog manifest".into())),
        }
        let mut height = None;
        let mut attr_names: Option<Vec<String>> = None;
        let mut mode = None;
        let mut dict_file = None;
        let mut relations = BTreeMap::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap();
            match key {
                "h" => {
                    let v = parts
                        .next()
                        .and_then(|s| s.parse::<usize>().ok())
                        .ok_or_else(|| Error::Format("bad h line".into()))?;
                    height = Some(v);
                }
                "mode" => {
                    mode = Some(match parts.next() {
                        Some("raw") => false,
                        Some("dict") => true,
                        _ => return Err(Error::Format("bad mode line".into())),
                    });
                }
                "attrs" => {
                    let names = parts
                        .next()
                        .ok_or_else(|| Error::Format("bad attrs line".into()))?;
                    attr_names = Some(names.split(',').map(str::to_string).collect());
                }
                "dict" => {
                    dict_file = Some(
                        parts
                            .next()
                            .ok_or_else(|| Error::Format("bad dict line".into()))?
                            .to_string(),
                    );
                }
                "relation" => {
                    let fields: Vec<&str> = parts.collect();
                    if fields.len() != 5 {
                        return Err(Error::Format(format!("bad relation line {line:?}")));
                    }
                    relations.insert(
                        fields[0].to_string(),
                        (
                            fields[1].to_string(),
                            fields[2]
                                .parse::<u128>()
                                .map_err(|_| Error::Format("bad tuple count".into()))?,
                            fields[3].to_string(),
                            fields[4] == "dict",
                        ),
                    );
                }
                other => {
                    return Err(Error::Format(format!("unknown manifest key {other:?}")));
                }
            }
        }
        let height = height.ok_or_else(|| Error::Format("manifest missing h".into()))?;
        let attr_names =
            attr_names.ok_or_else(|| Error::Format("manifest missing attrs".into()))?;
        let dict_mode = mode.ok_or_else(|| Error::Format("manifest missing mode".into()))?;
        if attr_names.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format(
                "manifest attribute order is not sorted".into(),
            ));
        }
        let dict = match (dict_mode, dict_file) {
            (false, None) => None,
            (true, Some(file)) => {
                let text = fs::read_to_string(dir.join(&file))
                    .map_err(|e| Error::Format(format!("cannot read dictionary: {e}")))?;
                let values: Vec<String> = text.lines().map(str::to_string).collect();
                let index = values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (v.clone(), i as u64))
                    .collect();
                Some(ValueDictionary { values, index })
            }
            _ => return Err(Error::Format("mode and dict lines disagree".into())),
        };

        let mut loaded = BTreeMap::new();
        for (name, (cols, count, file, rel_dict)) in relations {
            if rel_dict != dict_mode {
                return Err(Error::Format(format!(
                    "relation {name} encoding disagrees with catalog mode"
                )));
            }
            let bytes = fs::read(dir.join(&file))
                .map_err(|e| Error::Format(format!("cannot read index {file}: {e}")))?;
            let tree = CompactQuadtree::from_bytes(&bytes)?;
            if tree.params().height() != height {
                return Err(Error::Format(format!(
                    "index {file} height {} does not match catalog h {height}",
                    tree.params().height()
                )));
            }
            if tree.count() != count {
                return Err(Error::Format(format!(
                    "index {file} stores {} tuples, manifest declares {count}",
                    tree.count()
                )));
            }
            let declared: Vec<String> = cols.split(',').map(str::to_string).collect();
            let mut attrs = Vec::with_capacity(declared.len());
            for n in &declared {
                let id = attr_names
                    .binary_search_by(|a| a.as_str().cmp(n))
                    .map_err(|_| {
                        Error::Format(format!("relation {name} uses unknown attribute {n}"))
                    })?;
                attrs.push(id);
            }
            attrs.sort_unstable();
            if attrs.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Format(format!(
                    "relation {name} repeats an attribute in the manifest"
                )));
            }
            if tree.params().dims() != attrs.len() {
                return Err(Error::Format(format!(
                    "index {file} dimension {} does not match {} attributes",
                    tree.params().dims(),
                    attrs.len()
                )));
            }
            loaded.insert(
                name.clone(),
                Relation {
                    name,
                    attrs,
                    declared,
                    tree: Rc::new(tree),
                    dict_encoded: rel_dict,
                    index_file: file,
                },
            );
        }
        Ok(Catalog {
            height,
            attr_names,
            relations: loaded,
            dict,
        })
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Smallest height whose grid side `2^h` exceeds `max`.
fn needed_height(max: u64) -> usize {
    if max == 0 {
        1
    } else {
        64 - max.leading_zeros() as usize
    }
}

struct PendingRelation {
    name: String,
    declared: Vec<String>,
    rows: Vec<Vec<String>>,
}

/// Staged ingestion: relations are collected first so the dictionary, the
/// global attribute order, and the shared height can be fixed across the
/// whole catalog before any tree is built. Raising `h` for one relation
/// never changes another's decoded tuples, since padding only prepends zero
/// bits.
pub struct CatalogBuilder {
    delimiter: u8,
    dictionary: bool,
    skip_header: bool,
    min_height: usize,
    pending: Vec<PendingRelation>,
}

impl Default for CatalogBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl CatalogBuilder {
    pub fn new() -> Self {
        CatalogBuilder {
            delimiter: b',',
            dictionary: false,
            skip_header: false,
            min_height: 1,
            pending: Vec::new(),
        }
    }

    pub fn delimiter(mut self, delimiter: u8) -> Self {
        self.delimiter = delimiter;
        self
    }

    pub fn dictionary(mut self, on: bool) -> Self {
        self.dictionary = on;
        self
    }

    pub fn skip_header(mut self, on: bool) -> Self {
        self.skip_header = on;
        self
    }

    /// Lower bound on the shared height. Raising `h` pads coordinates with
    /// leading zero bits and never changes a decoded tuple set; it widens
    /// the universe complements are taken over.
    pub fn min_height(mut self, height: usize) -> Self {
        self.min_height = height.max(1);
        self
    }

    /// Stage a relation from already-split rows.
    pub fn add_relation_rows(
        &mut self,
        name: &str,
        attr_names: &[&str],
        rows: Vec<Vec<String>>,
    ) -> Result<()> {
        if !is_identifier(name) {
            return Err(Error::Schema(format!(
                "relation name {name:?} is not an identifier"
            )));
        }
        if self.pending.iter().any(|p| p.name == name) {
            return Err(Error::Schema(format!("duplicate relation {name}")));
        }
        if attr_names.is_empty() || attr_names.len() > MAX_DIMS {
            return Err(Error::Schema(format!(
                "relation {name} must have between 1 and {MAX_DIMS} attributes"
            )));
        }
        let mut seen = BTreeSet::new();
        for a in attr_names {
            if !is_identifier(a) {
                return Err(Error::Schema(format!(
                    "attribute name {a:?} is not an identifier"
                )));
            }
            if !seen.insert(*a) {
                return Err(Error::Schema(format!(
                    "attribute {a} repeats within relation {name}"
                )));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != attr_names.len() {
                return Err(Error::Data(format!(
                    "relation {name}: row {} has {} fields, expected {}",
                    i + 1,
                    row.len(),
                    attr_names.len()
                )));
            }
        }
        self.pending.push(PendingRelation {
            name: name.to_string(),
            declared: attr_names.iter().map(|s| s.to_string()).collect(),
            rows,
        });
        Ok(())
    }

    /// Stage a relation from a delimited text file, one tuple per row.
    pub fn add_relation_file(
        &mut self,
        name: &str,
        attr_names: &[&str],
        path: &Path,
    ) -> Result<()> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        let delim = self.delimiter as char;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 && self.skip_header {
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            rows.push(line.split(delim).map(|f| f.trim().to_string()).collect());
        }
        self.add_relation_rows(name, attr_names, rows)
    }

    /// Fix the global order, pick the shared height, build and freeze every
    /// index.
    pub fn build(self) -> Result<Catalog> {
        let mut names = BTreeSet::new();
        for p in &self.pending {
            for a in &p.declared {
                names.insert(a.clone());
            }
        }
        let attr_names: Vec<String> = names.into_iter().collect();

        let dict = if self.dictionary {
            Some(ValueDictionary::from_tokens(
                self.pending
                    .iter()
                    .flat_map(|p| p.rows.iter().flatten())
                    .map(String::as_str),
            ))
        } else {
            None
        };

        // Encode every field up front so the catalog-wide height can be
        // chosen before any tree exists.
        let mut encoded: Vec<(usize, Vec<Vec<u64>>)> = Vec::new();
        let mut height = self.min_height;
        for p in &self.pending {
            let mut rows = Vec::with_capacity(p.rows.len());
            let mut max_value = 0u64;
            for (i, row) in p.rows.iter().enumerate() {
                let mut coords = Vec::with_capacity(row.len());
                for field in row {
                    let v = match &dict {
                        Some(d) => d.encode(field).expect("token was collected"),
                        None => field.parse::<u64>().map_err(|_| {
                            Error::Data(format!(
                                "relation {}: row {}: {field:?} is not a non-negative integer",
                                p.name,
                                i + 1
                            ))
                        })?,
                    };
                    max_value = max_value.max(v);
                    coords.push(v);
                }
                rows.push(coords);
            }
            if !rows.is_empty() {
                height = height.max(needed_height(max_value));
            }
            encoded.push((encoded.len(), rows));
        }

        let mut relations = BTreeMap::new();
        for (idx, rows) in encoded {
            let p = &self.pending[idx];
            let mut attrs: Vec<usize> = p
                .declared
                .iter()
                .map(|n| {
                    attr_names
                        .binary_search_by(|a| a.as_str().cmp(n))
                        .expect("declared attribute is in the global set")
                })
                .collect();
            // Permute each row from declared column order to global order.
            let mut order: Vec<usize> = (0..attrs.len()).collect();
            order.sort_by_key(|&k| attrs[k]);
            attrs.sort_unstable();
            let params = GridParams::new(attrs.len(), height)?;
            let points: Vec<Vec<u64>> = rows
                .iter()
                .map(|row| order.iter().map(|&k| row[k]).collect())
                .collect();
            let tree = build(&points, params)?;
            relations.insert(
                p.name.clone(),
                Relation {
                    name: p.name.clone(),
                    attrs,
                    declared: p.declared.clone(),
                    tree: Rc::new(tree),
                    dict_encoded: self.dictionary,
                    index_file: format!("{}.qdx", p.name),
                },
            );
        }
        Ok(Catalog {
            height,
            attr_names,
            relations,
            dict,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn fig1_rows() -> Vec<Vec<String>> {
        [
            (4, 3),
            (7, 2),
            (5, 6),
            (6, 4),
            (3, 12),
            (6, 12),
            (6, 13),
            (7, 12),
            (7, 13),
            (8, 5),
            (14, 1),
            (15, 0),
        ]
        .iter()
        .map(|&(a, b)| vec![a.to_string(), b.to_string()])
        .collect()
    }

    #[test]
    fn ingest_picks_covering_height() {
        let mut b = CatalogBuilder::new();
        b.add_relation_rows("R", &["A", "B"], fig1_rows()).unwrap();
        let cat = b.build().unwrap();
        assert_eq!(cat.height(), 4);
        assert_eq!(cat.relation("R").unwrap().tuple_count(), 12);
    }

    #[test]
    fn empty_relation_builds_empty_index() {
        let mut b = CatalogBuilder::new();
        b.add_relation_rows("E", &["A"], Vec::new()).unwrap();
        let cat = b.build().unwrap();
        let rel = cat.relation("E").unwrap();
        assert!(rel.tree().is_empty());
        assert_eq!(rel.tuple_count(), 0);
    }

    #[test]
    fn dictionary_ids_follow_sorted_order() {
        let mut b = CatalogBuilder::new().dictionary(true);
        b.add_relation_rows(
            "R",
            &["A"],
            vec![vec!["10".into()], vec!["1000000".into()], vec!["7".into()]],
        )
        .unwrap();
        let cat = b.build().unwrap();
        let dict = cat.dictionary().unwrap();
        assert_eq!(dict.encode("7"), Some(0));
        assert_eq!(dict.encode("10"), Some(1));
        assert_eq!(dict.encode("1000000"), Some(2));
        assert_eq!(cat.height(), 2);
    }

    #[test]
    fn catalog_height_is_shared_and_padding_is_harmless() {
        let mut b = CatalogBuilder::new();
        b.add_relation_rows("Small", &["A"], vec![vec!["1".into()]])
            .unwrap();
        b.add_relation_rows("Big", &["B"], vec![vec!["200".into()]])
            .unwrap();
        let cat = b.build().unwrap();
        assert_eq!(cat.height(), 8);
        // The small relation decodes unchanged on the padded grid.
        assert_eq!(
            cat.relation_tuples("Small").unwrap(),
            vec![vec!["1".to_string()]]
        );
    }

    #[test]
    fn ingest_then_enumerate_reproduces_input() {
        let mut b = CatalogBuilder::new();
        let rows = fig1_rows();
        // Columns declared in non-global order on purpose.
        let swapped: Vec<Vec<String>> = rows
            .iter()
            .map(|r| vec![r[1].clone(), r[0].clone()])
            .collect();
        b.add_relation_rows("R", &["B", "A"], swapped.clone())
            .unwrap();
        let cat = b.build().unwrap();
        let got: BTreeSet<Vec<String>> = cat.relation_tuples("R").unwrap().into_iter().collect();
        let want: BTreeSet<Vec<String>> = swapped.into_iter().collect();
        assert_eq!(got, want);
    }

    #[test]
    fn duplicates_are_dropped() {
        let mut b = CatalogBuilder::new();
        b.add_relation_rows(
            "R",
            &["A"],
            vec![vec!["3".into()], vec!["3".into()], vec!["5".into()]],
        )
        .unwrap();
        let cat = b.build().unwrap();
        assert_eq!(cat.relation("R").unwrap().tuple_count(), 2);
    }

    #[test]
    fn bad_rows_are_rejected() {
        let mut b = CatalogBuilder::new();
        assert!(b
            .add_relation_rows("R", &["A", "B"], vec![vec!["1".into()]])
            .is_err());
        let mut b = CatalogBuilder::new();
        b.add_relation_rows("R", &["A"], vec![vec!["-3".into()]])
            .unwrap();
        assert!(b.build().is_err());
        let mut b = CatalogBuilder::new();
        assert!(b.add_relation_rows("R", &["A", "A"], vec![]).is_err());
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = CatalogBuilder::new();
        b.add_relation_rows("R", &["A", "B"], fig1_rows()).unwrap();
        b.add_relation_rows("S", &["B", "C"], vec![vec!["3".into(), "4".into()]])
            .unwrap();
        let cat = b.build().unwrap();
        cat.save(dir.path()).unwrap();

        let reloaded = Catalog::load(dir.path()).unwrap();
        let second = tempfile::tempdir().unwrap();
        reloaded.save(second.path()).unwrap();

        for file in [MANIFEST_NAME, "R.qdx", "S.qdx"] {
            let a = fs::read(dir.path().join(file)).unwrap();
            let b = fs::read(second.path().join(file)).unwrap();
            assert_eq!(a, b, "file {file} differs after reload");
        }
    }

    #[test]
    fn manifest_lists_every_relation() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = CatalogBuilder::new();
        b.add_relation_rows("R", &["A"], vec![vec!["0".into()]])
            .unwrap();
        b.add_relation_rows("S", &["B"], vec![vec!["1".into()]])
            .unwrap();
        b.add_relation_rows("T", &["C"], vec![vec!["2".into()]])
            .unwrap();
        b.build().unwrap().save(dir.path()).unwrap();
        let cat = Catalog::load(dir.path()).unwrap();
        let names: Vec<&str> = cat.relations().map(Relation::name).collect();
        assert_eq!(names, vec!["R", "S", "T"]);
    }

    #[test]
    fn loading_foreign_files_fails_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST_NAME), "something else\n").unwrap();
        assert!(matches!(Catalog::load(dir.path()), Err(Error::Format(_))));

        let dir = tempfile::tempdir().unwrap();
        let mut b = CatalogBuilder::new();
        b.add_relation_rows("R", &["A"], vec![vec!["0".into()]])
            .unwrap();
        b.build().unwrap().save(dir.path()).unwrap();
        fs::write(dir.path().join("R.qdx"), b"JUNKJUNKJUNK").unwrap();
        assert!(Catalog::load(dir.path()).is_err());
    }
}
