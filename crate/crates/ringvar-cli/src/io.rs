use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use ringvar::{FiltrationTree, LeafFunction};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Lib(#[from] ringvar::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Input { path: PathBuf, msg: String },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(e) if e.is_capacity() => 3,
            _ => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })
}

pub fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })
}

pub fn load_tree(path: &Path) -> CliResult<FiltrationTree> {
    Ok(FiltrationTree::from_json(&read(path)?)?)
}

/// Reads `leaf,value` rows keyed by external leaf id. Every leaf must
/// appear exactly once.
pub fn load_f(path: &Path, tree: &FiltrationTree) -> CliResult<LeafFunction> {
    let bad = |msg: String| CliError::Input {
        path: path.into(),
        msg,
    };
    let text = read(path)?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.len() != 2 || &headers[0] != "leaf" || &headers[1] != "value" {
        return Err(bad("expected header 'leaf,value'".into()));
    }
    let index: HashMap<u64, usize> = tree.leaf_ids().iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut values = vec![None; tree.leaf_count()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let id: u64 = rec[0].parse().map_err(|_| bad(format!("bad leaf id '{}'", &rec[0])))?;
        let v: f64 = rec[1].parse().map_err(|_| bad(format!("bad value '{}'", &rec[1])))?;
        if !v.is_finite() {
            return Err(bad(format!("non-finite value on leaf {id}")));
        }
        let &i = index.get(&id).ok_or_else(|| bad(format!("unknown leaf {id}")))?;
        if values[i].replace(v).is_some() {
            return Err(bad(format!("leaf {id} listed twice")));
        }
    }
    values
        .iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| bad(format!("missing leaf {}", tree.leaf_ids()[i]))))
        .collect::<CliResult<Vec<f64>>>()
        .map(LeafFunction::new)
}

pub fn f_to_csv(tree: &FiltrationTree, f: &LeafFunction) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["leaf", "value"]).expect("in-memory write");
    for (id, v) in tree.leaf_ids().iter().zip(f.values()) {
        w.write_record([id.to_string(), v.to_string()]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ringvar::filtration::build_random_tree;

    #[test]
    fn f_csv_round_trip() {
        let t = build_random_tree(6, 3, 2).unwrap();
        let f = LeafFunction::new((0..t.leaf_count()).map(|i| i as f64 / 3.0 - 0.7).collect());
        let dir = std::env::temp_dir().join(format!("ringvar-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("f.csv");
        write(&p, &f_to_csv(&t, &f)).unwrap();
        assert_eq!(load_f(&p, &t).unwrap(), f);

        let text = f_to_csv(&t, &f);
        let dropped: Vec<&str> = text.lines().take(2).collect();
        write(&p, &dropped.join("\n")).unwrap();
        assert!(matches!(load_f(&p, &t), Err(CliError::Input { .. })));
        fs::remove_dir_all(&dir).unwrap();
    }
}
