//! Checkpoint serialization: a small text header describing shapes and
//! run hyperparameters, a `---` separator, then the flat parameter
//! vector as little-endian 64-bit floats. Loading validates the header
//! against the declared shapes before touching the payload.

use std::io::{BufRead, Write};

use super::{QNet, QNetError};

/// Run facts carried alongside the weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointMeta {
    pub frames: u64,
    pub gamma: f64,
    pub lr: f64,
    pub tau: f64,
}

const MAGIC_LINE: &str = "dqfd-checkpoint v1";

pub fn save_checkpoint(
    mut out: impl Write,
    net: &QNet,
    meta: &CheckpointMeta,
) -> Result<(), QNetError> {
    writeln!(out, "{MAGIC_LINE}")?;
    writeln!(out, "input {}", net.input)?;
    writeln!(out, "hidden {}", net.hidden)?;
    writeln!(out, "actions {}", net.actions)?;
    writeln!(out, "frames {}", meta.frames)?;
    writeln!(out, "gamma {}", meta.gamma)?;
    writeln!(out, "lr {}", meta.lr)?;
    writeln!(out, "tau {}", meta.tau)?;
    writeln!(out, "params {}", net.param_count())?;
    writeln!(out, "---")?;
    for w in net.params_vec() {
        out.write_all(&w.to_le_bytes())?;
    }
    Ok(())
}

pub fn load_checkpoint(mut input: impl BufRead) -> Result<(QNet, CheckpointMeta), QNetError> {
    let mut line = String::new();
    input.read_line(&mut line)?;
    if line.trim_end() != MAGIC_LINE {
        return Err(QNetError::Parse(format!("bad magic line `{}`", line.trim_end())));
    }

    let mut fields = std::collections::BTreeMap::new();
    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Err(QNetError::Parse("header ended before `---`".into()));
        }
        let trimmed = line.trim_end();
        if trimmed == "---" {
            break;
        }
        let (key, value) = trimmed
            .split_once(' ')
            .ok_or_else(|| QNetError::Parse(format!("malformed header line `{trimmed}`")))?;
        fields.insert(key.to_owned(), value.to_owned());
    }

    let get = |key: &str| {
        fields
            .get(key)
            .ok_or_else(|| QNetError::Parse(format!("header misses `{key}`")))
    };
    let usize_field = |key: &str| -> Result<usize, QNetError> {
        get(key)?.parse().map_err(|e| QNetError::Parse(format!("{key}: {e}")))
    };
    let f64_field = |key: &str| -> Result<f64, QNetError> {
        get(key)?.parse().map_err(|e| QNetError::Parse(format!("{key}: {e}")))
    };

    let input_len = usize_field("input")?;
    let hidden = usize_field("hidden")?;
    let actions = usize_field("actions")?;
    let params = usize_field("params")?;
    let meta = CheckpointMeta {
        frames: get("frames")?.parse().map_err(|e| QNetError::Parse(format!("frames: {e}")))?,
        gamma: f64_field("gamma")?,
        lr: f64_field("lr")?,
        tau: f64_field("tau")?,
    };

    let mut net = QNet::zeros(input_len, hidden, actions);
    if params != net.param_count() {
        return Err(QNetError::ShapeMismatch(format!(
            "header claims {params} parameters, shapes {input_len}/{hidden}/{actions} imply {}",
            net.param_count()
        )));
    }
    let mut flat = vec![0.0; params];
    let mut buf = [0u8; 8];
    for w in &mut flat {
        input.read_exact(&mut buf)?;
        *w = f64::from_le_bytes(buf);
    }
    net.load_params(&flat)?;
    Ok((net, meta))
}
