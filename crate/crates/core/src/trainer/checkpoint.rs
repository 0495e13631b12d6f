//! JSON checkpoints: model snapshot, optimizer moments, rng position and
//! the run record so far.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Adam, RunRecord};
use crate::error::{Error, Result};
use crate::model::{Model, ModelSnapshot};

/// Format tag written into every checkpoint; loading rejects other tags.
pub const CHECKPOINT_FORMAT: &str = "tagmtl-checkpoint/1";

/// Exact position of a ChaCha8 stream. The 128-bit word position is kept
/// as a decimal string because JSON numbers cannot hold it losslessly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> RngState {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| Error::Format(format!("bad rng word position {:?}", self.word_pos)))?;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub model: ModelSnapshot,
    pub optimizer: Option<Adam>,
    pub rng: Option<RngState>,
    pub record: Option<RunRecord>,
}

impl Checkpoint {
    pub fn new(model: &Model, optimizer: Option<&Adam>, rng: Option<&ChaCha8Rng>, record: Option<&RunRecord>) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            model: model.snapshot(),
            optimizer: optimizer.cloned(),
            rng: rng.map(RngState::capture),
            record: record.cloned(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Checkpoint> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!(
                "unsupported checkpoint format {:?} (expected {CHECKPOINT_FORMAT:?})",
                ck.format
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text)
    }

    pub fn into_model(self) -> Result<Model> {
        Model::from_snapshot(self.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn rng_state_resumes_the_same_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        rng.set_stream(1);
        for _ in 0..13 {
            rng.next_u32();
        }
        let state = RngState::capture(&rng);
        let json = serde_json::to_string(&state).unwrap();
        let mut resumed = serde_json::from_str::<RngState>(&json).unwrap().restore().unwrap();
        for _ in 0..20 {
            assert_eq!(rng.next_u64(), resumed.next_u64());
        }
    }

    #[test]
    fn rejects_unknown_format() {
        let text = r#"{"format":"other/9","model":null,"optimizer":null,"rng":null,"record":null}"#;
        assert!(Checkpoint::from_json(text).is_err());
    }
}
