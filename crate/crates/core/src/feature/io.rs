//! Text formats for feature models and shape datasets.
//!
//! Both files open with a TOML header terminated by an `end_header` line,
//! followed by whitespace-separated records in which every float is written
//! with 17 significant digits, and close with an `end` line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{FeatureModel, ShapeDataset};
use crate::error::{Error, Result};
use crate::world::{Centerline, EffectorPose, WorldConfig};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const DATASET_FORMAT_VERSION: u32 = 1;

const END_HEADER: &str = "end_header";
const END: &str = "end";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelHeader {
    format_version: u32,
    p: usize,
    n_points: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetHeader {
    format_version: u32,
    seed: u64,
    samples: usize,
    n_points: usize,
    world: WorldConfig,
}

pub(crate) fn push_floats<'a>(out: &mut String, values: impl IntoIterator<Item = &'a f64>) {
    for v in values {
        write!(out, " {v:.16e}").unwrap();
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn save_model(model: &FeatureModel, path: impl AsRef<Path>) -> Result<()> {
    let header = ModelHeader {
        format_version: MODEL_FORMAT_VERSION,
        p: model.p(),
        n_points: model.n_points(),
    };
    let mut out = String::from("# rodservo feature model\n");
    out.push_str(&toml::to_string(&header).expect("header serializes"));
    out.push_str(END_HEADER);
    out.push_str("\nmean");
    push_floats(&mut out, model.mean().iter());
    for row in model.projection().row_iter() {
        out.push_str("\nrow");
        push_floats(&mut out, row.iter());
    }
    out.push('\n');
    out.push_str(END);
    out.push('\n');
    write_file(path.as_ref(), &out)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FeatureModel> {
    let path = path.as_ref();
    let text = read_file(path)?;
    let (header, mut body): (ModelHeader, _) = split_header(path, &text)?;
    if header.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::malformed(
            path,
            format!("unsupported format_version {}", header.format_version),
        ));
    }
    let dim = 2 * header.n_points;
    if header.n_points < 2 || header.p == 0 || header.p > dim {
        return Err(Error::DimensionInconsistency(format!(
            "{}: p = {} and n_points = {} violate 1 <= p <= 2 * n_points",
            path.display(),
            header.p,
            header.n_points
        )));
    }
    let mean = parse_record(path, body.next(), "mean", dim)?;
    let mut rows = Vec::with_capacity(header.p);
    for _ in 0..header.p {
        rows.push(parse_record(path, body.next(), "row", dim)?);
    }
    expect_end(path, body.next())?;
    let projection = DMatrix::from_row_iterator(header.p, dim, rows.into_iter().flatten());
    FeatureModel::new(DVector::from_vec(mean), projection)
}

pub fn save_dataset(dataset: &ShapeDataset, path: impl AsRef<Path>) -> Result<()> {
    let header = DatasetHeader {
        format_version: DATASET_FORMAT_VERSION,
        seed: dataset.seed,
        samples: dataset.len(),
        n_points: dataset.n_points(),
        world: dataset.world.clone(),
    };
    let mut out = String::from("# rodservo shape dataset: sample x y theta u_1 v_1 ... u_N v_N\n");
    out.push_str(&toml::to_string(&header).expect("header serializes"));
    out.push_str(END_HEADER);
    out.push('\n');
    for (pose, line) in &dataset.samples {
        out.push_str("sample");
        push_floats(&mut out, [pose.x, pose.y, pose.theta].iter());
        push_floats(&mut out, line.to_vector().iter());
        out.push('\n');
    }
    out.push_str(END);
    out.push('\n');
    write_file(path.as_ref(), &out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<ShapeDataset> {
    let path = path.as_ref();
    let text = read_file(path)?;
    let (header, mut body): (DatasetHeader, _) = split_header(path, &text)?;
    if header.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::malformed(
            path,
            format!("unsupported format_version {}", header.format_version),
        ));
    }
    if header.n_points != header.world.n_points {
        return Err(Error::DimensionInconsistency(format!(
            "{}: header n_points {} differs from world.n_points {}",
            path.display(),
            header.n_points,
            header.world.n_points
        )));
    }
    let width = 3 + 2 * header.n_points;
    let mut samples = Vec::with_capacity(header.samples);
    for _ in 0..header.samples {
        let rec = parse_record(path, body.next(), "sample", width)?;
        let pose = EffectorPose::new(rec[0], rec[1], rec[2]);
        let line = Centerline::from_vector(&DVector::from_column_slice(&rec[3..]))?;
        samples.push((pose, line));
    }
    expect_end(path, body.next())?;
    Ok(ShapeDataset {
        samples,
        world: header.world,
        seed: header.seed,
    })
}

fn split_header<'a, H: serde::de::DeserializeOwned>(
    path: &Path,
    text: &'a str,
) -> Result<(H, impl Iterator<Item = &'a str>)> {
    let mut lines = text.lines();
    let mut header = String::new();
    loop {
        match lines.next() {
            Some(END_HEADER) => break,
            Some(line) => {
                header.push_str(line);
                header.push('\n');
            }
            None => return Err(Error::malformed(path, "missing end_header line")),
        }
    }
    let parsed = toml::from_str(&header).map_err(|e| Error::malformed(path, format!("bad header: {e}")))?;
    Ok((parsed, lines.filter(|l| !l.trim().is_empty())))
}

fn parse_record(path: &Path, line: Option<&str>, tag: &str, width: usize) -> Result<Vec<f64>> {
    let line = line.ok_or_else(|| Error::malformed(path, format!("file ends before `{tag}` record")))?;
    let mut fields = line.split_whitespace();
    if fields.next() != Some(tag) {
        return Err(Error::malformed(path, format!("expected `{tag}` record")));
    }
    let values = fields
        .map(|f| f.parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Error::malformed(path, format!("bad number in `{tag}` record: {e}")))?;
    if values.len() != width {
        return Err(Error::malformed(
            path,
            format!("`{tag}` record has {} values, expected {width}", values.len()),
        ));
    }
    Ok(values)
}

fn expect_end(path: &Path, line: Option<&str>) -> Result<()> {
    match line {
        Some(END) => Ok(()),
        Some(_) => Err(Error::malformed(path, "unexpected trailing record")),
        None => Err(Error::malformed(path, "missing end line")),
    }
}
