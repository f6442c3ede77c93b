use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{AddedToken, AdaptationResult, GridCell};
use crate::fixed::{format6, Fixed6};
use crate::tokenizer::vocab::write_file;
use crate::{Error, Result};

/// `A,K,V_TGT,P,V,fragment_score`, one row per cell in grid order.
pub fn grid_csv(grid: &[GridCell]) -> String {
    let mut out = String::from("A,K,V_TGT,P,V,fragment_score\n");
    for c in grid {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            format6(c.a),
            c.k,
            c.v_tgt_size,
            c.p,
            c.candidate_vocab_size,
            format6(c.fragment_score)
        );
    }
    out
}

#[derive(Serialize)]
struct Provenance<'a> {
    chosen: &'a GridCell,
    min_fragment_score: Fixed6,
    base_fragment_score: Fixed6,
    margin: Fixed6,
    base_size: usize,
    vocab_size: usize,
    added: &'a [AddedToken],
}

/// Write `vocab.txt` (with its sidecar files), `added_tokens.txt`,
/// `provenance.json` and `grid.csv` into `out_dir`.
pub fn emit_vocabulary(result: &AdaptationResult, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = result.adapted_vocab.save(&out_dir.join("vocab.txt"))?;

    let mut added = String::new();
    for t in &result.added_tokens {
        added.push_str(&t.token);
        added.push('\n');
    }
    let path = out_dir.join("added_tokens.txt");
    write_file(&path, added.as_bytes())?;
    written.push(path);

    let provenance = Provenance {
        chosen: &result.chosen,
        min_fragment_score: Fixed6(result.min_fragment_score),
        base_fragment_score: Fixed6(result.base_fragment_score),
        margin: Fixed6(result.margin),
        base_size: result.adapted_vocab.base_len(),
        vocab_size: result.adapted_vocab.len(),
        added: &result.added_tokens,
    };
    let mut json = serde_json::to_string_pretty(&provenance)?;
    json.push('\n');
    let path = out_dir.join("provenance.json");
    write_file(&path, json.as_bytes())?;
    written.push(path);

    let path = out_dir.join("grid.csv");
    write_file(&path, grid_csv(&result.grid).as_bytes())?;
    written.push(path);
    Ok(written)
}
