//! Zero-shot task definitions: one encoding per class.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{read_matrix, write_matrix};
use crate::Mat64;

/// A `C x d_out` matrix of class encodings (text-encoding stand-ins or
/// prototypes) plus the class names.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub class_names: Vec<String>,
    pub encodings: Mat64,
}

#[derive(Serialize, Deserialize)]
struct TaskIndex {
    class_names: Vec<String>,
    encodings_path: String,
}

impl TaskSpec {
    pub fn new(class_names: Vec<String>, encodings: Mat64) -> Result<Self> {
        if class_names.len() < 2 {
            return Err(Error::InvalidArgument(
                "a task needs at least 2 classes".into(),
            ));
        }
        if class_names.len() != encodings.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} class names for {} encoding rows",
                class_names.len(),
                encodings.nrows()
            )));
        }
        for r in 0..encodings.nrows() {
            let mut norm_sq = 0.0;
            for c in 0..encodings.ncols() {
                let v = encodings[(r, c)];
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: r, col: c });
                }
                norm_sq += v * v;
            }
            if norm_sq == 0.0 {
                return Err(Error::ZeroNormRow { row: r });
            }
        }
        Ok(TaskSpec {
            class_names,
            encodings,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn dim(&self) -> usize {
        self.encodings.ncols()
    }

    /// Writes `task.json` plus `task_encodings.rdt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let index = TaskIndex {
            class_names: self.class_names.clone(),
            encodings_path: "task_encodings.rdt".into(),
        };
        write_matrix(&dir.join("task_encodings.rdt"), &self.encodings)?;
        let text = serde_json::to_string_pretty(&index)?;
        let p = dir.join("task.json");
        fs::write(&p, text).map_err(|e| Error::io(p, e))
    }

    pub fn load(json_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
        let index: TaskIndex = serde_json::from_str(&text)?;
        let root = json_path.parent().unwrap_or_else(|| Path::new("."));
        let encodings = read_matrix(&root.join(&index.encodings_path))?;
        TaskSpec::new(index.class_names, encodings)
    }
}
