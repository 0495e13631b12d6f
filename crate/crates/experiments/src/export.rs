//! Task-embedding export for external visualization tools.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use tagmtl_core::model::Model;
use tagmtl_core::trainer::Checkpoint;

use crate::error::{Error, Result};

/// One line per task: the name followed by the embedding values, tab
/// separated. Values use the shortest representation that parses back to
/// the same `f64`, so the output is a pure function of the parameters.
pub fn task_embeddings_tsv(model: &Model) -> Result<String> {
    let mut out = String::new();
    for (name, row) in model.task_embeddings()? {
        out.push_str(&name);
        for v in row {
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn export_task_embeddings(checkpoint: &Path, out: &Path) -> Result<usize> {
    let model = Checkpoint::load(checkpoint)?.into_model()?;
    let text = task_embeddings_tsv(&model)?;
    fs::write(out, &text).map_err(|e| Error::io(out, e))?;
    Ok(model.tasks.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use tagmtl_core::corpus::synthetic::{generate, SyntheticSizes};
    use tagmtl_core::init::embedding_bound;
    use tagmtl_core::model::{Mode, ModelConfig};

    fn model(mode: Mode) -> Model {
        let data = generate(
            0,
            SyntheticSizes {
                train: 4,
                dev: 1,
                test: 1,
            },
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Model::for_tasks(mode, ModelConfig::default(), &data, None, &mut rng)
            .unwrap()
            .0
    }

    #[test]
    fn untrained_rows_lie_within_the_init_bound() {
        let m = model(Mode::TeDec);
        let text = task_embeddings_tsv(&m).unwrap();
        let bound = embedding_bound(25);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        for line in lines {
            let cols: Vec<&str> = line.split('\t').collect();
            assert_eq!(cols.len(), 26);
            for v in &cols[1..] {
                assert!(v.parse::<f64>().unwrap().abs() <= bound);
            }
        }
    }

    #[test]
    fn exports_are_byte_identical_and_need_te_dec() {
        let dir = tempfile::tempdir().unwrap();
        let ck = dir.path().join("m.json");
        Checkpoint::new(&model(Mode::TeDec), None, None, None)
            .save(&ck)
            .unwrap();
        let (a, b) = (dir.path().join("a.tsv"), dir.path().join("b.tsv"));
        export_task_embeddings(&ck, &a).unwrap();
        export_task_embeddings(&ck, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

        Checkpoint::new(&model(Mode::MultiDec), None, None, None)
            .save(&ck)
            .unwrap();
        assert!(export_task_embeddings(&ck, &a).is_err());
    }
}
