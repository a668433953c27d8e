//! Text checkpoint format: a JSON header line with hyperparameters,
//! vocabulary hash, step counter and mode, followed by named tensors in
//! row-major order. Floats use shortest round-trip formatting, so loading
//! reproduces parameters bit-exactly.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::seq2seq::ModelParams;
use super::train::TrainMode;
use super::Hyperparams;
use crate::error::{Error, Result};

const MAGIC: &str = "biogen-checkpoint v1";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    hp: Hyperparams,
    vocab_hash: String,
    step: u64,
    mode: TrainMode,
}

/// A loaded checkpoint.
pub struct Checkpoint {
    pub params: ModelParams,
    pub hp: Hyperparams,
    pub vocab_hash: String,
    pub step: u64,
    pub mode: TrainMode,
}

pub fn save_checkpoint(
    path: &Path,
    params: &ModelParams,
    hp: &Hyperparams,
    vocab_hash: &str,
    step: u64,
    mode: TrainMode,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    let header = Header {
        hp: hp.clone(),
        vocab_hash: vocab_hash.to_string(),
        step,
        mode,
    };
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');
    for (name, tensor) in params.tensors() {
        out.push_str(&format!("tensor {name} {}\n", tensor.len()));
        let mut first = true;
        for v in tensor {
            if !first {
                out.push(' ');
            }
            out.push_str(&format!("{v}"));
            first = false;
        }
        out.push('\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| Error::io(path.to_path_buf(), e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
    let mut lines = BufReader::new(file).lines();
    let mut next_line = |what: &str| -> Result<String> {
        lines
            .next()
            .transpose()
            .map_err(|e| Error::io(path.to_path_buf(), e))?
            .ok_or_else(|| Error::data(path, 0, format!("missing {what}")))
    };
    if next_line("magic")? != MAGIC {
        return Err(Error::data(path, 1, "not a biogen checkpoint"));
    }
    let header: Header = serde_json::from_str(&next_line("header")?)
        .map_err(|e| Error::data(path, 2, format!("bad header: {e}")))?;
    let mut params = ModelParams::zeros(&header.hp);

    let mut lineno = 2usize;
    for (name, tensor) in params.tensors_mut() {
        lineno += 1;
        let decl = next_line("tensor declaration")?;
        let expected = format!("tensor {name} {}", tensor.len());
        if decl != expected {
            return Err(Error::data(
                path,
                lineno,
                format!("expected {expected:?}, found {decl:?}"),
            ));
        }
        lineno += 1;
        let values = next_line("tensor values")?;
        let mut count = 0usize;
        for (slot, v) in tensor.iter_mut().zip(values.split(' ')) {
            *slot = v
                .parse()
                .map_err(|_| Error::data(path, lineno, format!("bad float {v:?}")))?;
            count += 1;
        }
        if count != tensor.len() {
            return Err(Error::data(
                path,
                lineno,
                format!("expected {} values, found {count}", tensor.len()),
            ));
        }
    }
    Ok(Checkpoint {
        params,
        hp: header.hp,
        vocab_hash: header.vocab_hash,
        step: header.step,
        mode: header.mode,
    })
}
