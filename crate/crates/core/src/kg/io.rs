use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{is_inverse, Dataset, ElementKind, GoldLinks, KgBuilder, KnowledgeGraph};

/// Relation names treated as class membership.
pub const DEFAULT_TYPE_ALIASES: &[&str] = &[
    "type",
    "rdf:type",
    "http://www.w3.org/1999/02/22-rdf-syntax-ns#type",
];

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{file}:{line}: expected {expected} tab-separated fields, found {found}")]
    Malformed {
        file: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{file}:{line}: `{id}` does not exist in the {side} graph")]
    DanglingId {
        file: PathBuf,
        line: usize,
        id: String,
        side: &'static str,
    },
    #[error("reading {file}: {source}")]
    Io {
        file: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, LoadError> {
    load_dataset_with_aliases(dir, DEFAULT_TYPE_ALIASES)
}

pub fn load_dataset_with_aliases(dir: &Path, type_aliases: &[&str]) -> Result<Dataset, LoadError> {
    let kg1 = load_kg(&dir.join("rel_triples_1"), type_aliases)?;
    let kg2 = load_kg(&dir.join("rel_triples_2"), type_aliases)?;
    let mut links = GoldLinks::default();
    links.entities = load_links(&dir.join("ent_links"), &kg1, &kg2, ElementKind::Entity, true)?;
    links.relations = load_links(&dir.join("rel_links"), &kg1, &kg2, ElementKind::Relation, false)?;
    links.classes = load_links(&dir.join("cls_links"), &kg1, &kg2, ElementKind::Class, false)?;
    Ok(Dataset { kg1, kg2, links })
}

fn read(path: &Path) -> Result<String, LoadError> {
    if !path.exists() {
        return Err(LoadError::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|source| LoadError::Io {
        file: path.to_path_buf(),
        source,
    })
}

fn lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim_end_matches('\r');
        if l.trim().is_empty() {
            None
        } else {
            Some((i + 1, l.split('\t').collect()))
        }
    })
}

fn load_kg(path: &Path, type_aliases: &[&str]) -> Result<KnowledgeGraph, LoadError> {
    let text = read(path)?;
    let mut b = KgBuilder::new();
    for (line, fields) in lines(&text) {
        if fields.len() != 3 {
            return Err(LoadError::Malformed {
                file: path.to_path_buf(),
                line,
                expected: 3,
                found: fields.len(),
            });
        }
        if type_aliases.contains(&fields[1]) {
            b.type_of(fields[0], fields[2]);
        } else {
            b.triple(fields[0], fields[1], fields[2]);
        }
    }
    Ok(b.build())
}

fn load_links(
    path: &Path,
    kg1: &KnowledgeGraph,
    kg2: &KnowledgeGraph,
    kind: ElementKind,
    required: bool,
) -> Result<Vec<(usize, usize)>, LoadError> {
    if !required && !path.exists() {
        return Ok(Vec::new());
    }
    let text = read(path)?;
    let lookup = |kg: &KnowledgeGraph, name: &str| match kind {
        ElementKind::Entity => kg.entity_id(name),
        ElementKind::Relation => kg.relation_id(name),
        ElementKind::Class => kg.class_id(name),
    };
    let mut out = Vec::new();
    for (line, fields) in lines(&text) {
        if fields.len() != 2 {
            return Err(LoadError::Malformed {
                file: path.to_path_buf(),
                line,
                expected: 2,
                found: fields.len(),
            });
        }
        let dangling = |id: &str, side| LoadError::DanglingId {
            file: path.to_path_buf(),
            line,
            id: id.to_string(),
            side,
        };
        let l = lookup(kg1, fields[0]).ok_or_else(|| dangling(fields[0], "first"))?;
        let r = lookup(kg2, fields[1]).ok_or_else(|| dangling(fields[1], "second"))?;
        out.push((l, r));
    }
    Ok(out)
}

/// Writes the dataset in the directory layout read by [`load_dataset`].
/// Output is a deterministic function of the in-memory dataset.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    write_kg(&dir.join("rel_triples_1"), &ds.kg1)?;
    write_kg(&dir.join("rel_triples_2"), &ds.kg2)?;
    for (file, kind) in [
        ("ent_links", ElementKind::Entity),
        ("rel_links", ElementKind::Relation),
        ("cls_links", ElementKind::Class),
    ] {
        let mut f = std::io::BufWriter::new(fs::File::create(dir.join(file))?);
        for &(l, r) in ds.links.of_kind(kind) {
            let (ln, rn) = match kind {
                ElementKind::Relation => (
                    ds.kg1.base_relation_name(l).to_string(),
                    ds.kg2.base_relation_name(r).to_string(),
                ),
                _ => (ds.kg1.element_name(kind, l), ds.kg2.element_name(kind, r)),
            };
            writeln!(f, "{ln}\t{rn}")?;
        }
        f.flush()?;
    }
    Ok(())
}

fn write_kg(path: &Path, kg: &KnowledgeGraph) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for t in kg.triples().iter().filter(|t| !is_inverse(t.rel)) {
        writeln!(
            f,
            "{}\t{}\t{}",
            kg.entity_name(t.head),
            kg.base_relation_name(t.rel),
            kg.entity_name(t.tail)
        )?;
    }
    for &(e, c) in kg.type_triples() {
        writeln!(f, "{}\ttype\t{}", kg.entity_name(e), kg.class_name(c))?;
    }
    f.flush()
}
