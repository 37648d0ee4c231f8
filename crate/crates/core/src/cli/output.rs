//! Run artifacts: CSV streams, PGM grids, JSON reports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::error::{CdganError, Result};
use crate::eval::ClusterReport;
use crate::train::StepRecord;

pub const HISTORY_HEADER: &str = "step,d_loss,g_gan,l_c,l_z,total,acc,nmi,ari";

/// Final report written as `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub steps: usize,
    #[serde(flatten)]
    pub scores: ClusterReport,
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CdganError::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| CdganError::io(path, e))
}

/// Appends one row per step, flushing so partial runs leave a usable file.
pub struct HistoryWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl HistoryWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = create(path)?;
        writeln!(out, "{HISTORY_HEADER}").map_err(|e| CdganError::io(path, e))?;
        Ok(HistoryWriter {
            path: path.to_path_buf(),
            out,
        })
    }

    pub fn record(&mut self, r: &StepRecord, snapshot: Option<&ClusterReport>) -> Result<()> {
        let scores = snapshot.map_or_else(|| ",,".to_string(), |s| format!("{},{},{}", s.acc, s.nmi, s.ari));
        writeln!(
            self.out,
            "{},{},{},{},{},{},{}",
            r.step, r.d_loss, r.g_gan, r.l_c, r.l_z, r.total, scores
        )
        .and_then(|_| self.out.flush())
        .map_err(|e| CdganError::io(&self.path, e))
    }
}

/// `label,f_0,...,f_{d-1}` per row.
pub fn write_features(path: &Path, f: &Matrix<f32>, labels: &[usize]) -> Result<()> {
    let mut out = create(path)?;
    let header: Vec<String> = (0..f.cols()).map(|j| format!("f_{j}")).collect();
    let mut body = format!("label,{}\n", header.join(","));
    for (i, &label) in labels.iter().enumerate() {
        body.push_str(&label.to_string());
        for v in f.row(i) {
            body.push(',');
            body.push_str(&v.to_string());
        }
        body.push('\n');
    }
    out.write_all(body.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CdganError::io(path, e))
}

fn to_byte(v: f32) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

/// Tiles `images` (row-major, `rows × cols` tiles of `h × w`) into a binary PGM
/// with one-pixel black gutters.
pub fn grid_pgm(images: &Matrix<f32>, rows: usize, cols: usize, h: usize, w: usize) -> Result<Vec<u8>> {
    if images.rows() != rows * cols || images.cols() != h * w {
        return Err(CdganError::Shape {
            op: "grid_pgm",
            lhs: images.shape(),
            rhs: [rows * cols, h * w],
        });
    }
    let (gh, gw) = (rows * (h + 1) - 1, cols * (w + 1) - 1);
    let mut pixels = vec![0u8; gh * gw];
    for r in 0..rows {
        for c in 0..cols {
            let img = images.row(r * cols + c);
            for y in 0..h {
                for x in 0..w {
                    pixels[(r * (h + 1) + y) * gw + c * (w + 1) + x] = to_byte(img[y * w + x]);
                }
            }
        }
    }
    let mut out = format!("P5\n{gw} {gh}\n255\n").into_bytes();
    out.extend_from_slice(&pixels);
    Ok(out)
}

/// Parses a binary PGM into `(width, height, pixels)`.
pub fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(CdganError::Format {
                offset: pos as u64,
                msg: "truncated PGM header".into(),
            });
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    let bad = |msg: &str| CdganError::Format {
        offset: 0,
        msg: msg.into(),
    };
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad("not an 8-bit binary PGM"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let data = &bytes[pos + 1..];
    if data.len() != w * h {
        return Err(CdganError::Format {
            offset: (pos + 1) as u64,
            msg: format!("expected {} pixels, found {}", w * h, data.len()),
        });
    }
    Ok((w, h, data.to_vec()))
}

/// One parsed `report.json`, reduced to what the comparison table needs.
#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub name: String,
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

pub fn read_compare_row(path: &Path) -> Result<CompareRow> {
    let text = std::fs::read_to_string(path).map_err(|e| CdganError::io(path, e))?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    let field = |k: &str| {
        v.get(k)
            .and_then(serde_json::Value::as_f64)
            .ok_or_else(|| CdganError::validation(format!("missing numeric field `{k}`")))
    };
    let name = v
        .get("name")
        .and_then(serde_json::Value::as_str)
        .ok_or_else(|| CdganError::validation("missing string field `name`"))?;
    Ok(CompareRow {
        name: name.to_string(),
        acc: field("acc")?,
        nmi: field("nmi")?,
        ari: field("ari")?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum TableFormat {
    Markdown,
    Csv,
}

/// Rows sorted by name (stable for ties).
pub fn render_table(rows: &[CompareRow], format: TableFormat) -> String {
    let mut rows: Vec<&CompareRow> = rows.iter().collect();
    rows.sort_by(|a, b| a.name.cmp(&b.name));
    let mut s = String::new();
    match format {
        TableFormat::Markdown => {
            s.push_str("| name | acc | nmi | ari |\n|---|---|---|---|\n");
            for r in rows {
                s.push_str(&format!("| {} | {} | {} | {} |\n", r.name, r.acc, r.nmi, r.ari));
            }
        }
        TableFormat::Csv => {
            s.push_str("name,acc,nmi,ari\n");
            for r in rows {
                s.push_str(&format!("{},{},{},{}\n", r.name, r.acc, r.nmi, r.ari));
            }
        }
    }
    s
}
