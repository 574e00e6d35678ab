//! Dataset directories: `dataset.txt` (task, classes, count), `samples.csv`
//! (`file,label`, label `-` for per-point labels) and one point-cloud text
//! file per sample.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use i2p_core::train::Dataset;
use i2p_core::voxel::PointCloud;

use crate::cloud::{format_pointcloud, parse_pointcloud};
use crate::error::{format_err, usage, Error, Result};
use crate::fsutil::{read_text, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Cls,
    Seg,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Cls => "cls",
            Task::Seg => "seg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cls" => Some(Task::Cls),
            "seg" => Some(Task::Seg),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetIndex {
    pub dir: PathBuf,
    pub task: Task,
    pub classes: usize,
    pub samples: Vec<(String, Option<u32>)>,
}

pub const META: &str = "dataset.txt";
pub const INDEX: &str = "samples.csv";

fn sample_name(i: usize) -> String {
    format!("{i:05}.pts")
}

/// Writes `clouds` (with `labels` for classification) as a dataset directory.
pub fn write_dataset(dir: &Path, task: Task, classes: usize, clouds: &[PointCloud], labels: Option<&[u32]>) -> Result<Vec<PathBuf>> {
    let mut index = String::from("file,label\n");
    let mut written = Vec::with_capacity(clouds.len() + 2);
    let files: Vec<(PathBuf, String)> = clouds.iter().enumerate().map(|(i, pc)| (dir.join(sample_name(i)), format_pointcloud(pc))).collect();
    for (i, (path, text)) in files.iter().enumerate() {
        write_atomic(path, text.as_bytes())?;
        match labels {
            Some(l) => writeln!(index, "{},{}", sample_name(i), l[i]),
            None => writeln!(index, "{},-", sample_name(i)),
        }
        .expect("string write");
        written.push(path.clone());
    }
    let meta = format!("task = {}\nclasses = {classes}\ncount = {}\n", task.name(), clouds.len());
    write_atomic(&dir.join(INDEX), index.as_bytes())?;
    write_atomic(&dir.join(META), meta.as_bytes())?;
    written.push(dir.join(INDEX));
    written.push(dir.join(META));
    Ok(written)
}

/// Reads and checks the directory metadata without loading samples.
pub fn read_index(dir: &Path) -> Result<DatasetIndex> {
    if !dir.is_dir() {
        usage!("data directory {} does not exist", dir.display());
    }
    let meta_path = dir.join(META);
    let meta = read_text(&meta_path)?;
    let src = meta_path.display().to_string();
    let (mut task, mut classes, mut count) = (None, None, None);
    for (i, line) in meta.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::parse(&src, i + 1, 1, "expected `key = value`"));
        };
        let (k, v) = (k.trim(), v.trim());
        let bad = || Error::parse(&src, i + 1, 1, format!("bad value for `{k}`"));
        match k {
            "task" => task = Some(Task::parse(v).ok_or_else(bad)?),
            "classes" => classes = Some(v.parse::<usize>().ok().filter(|&c| c > 0).ok_or_else(bad)?),
            "count" => count = Some(v.parse::<usize>().map_err(|_| bad())?),
            _ => return Err(Error::parse(&src, i + 1, 1, format!("unknown key `{k}`"))),
        }
    }
    let (Some(task), Some(classes), Some(count)) = (task, classes, count) else {
        return Err(Error::parse(&src, 1, 1, "needs task, classes and count"));
    };
    let index_path = dir.join(INDEX);
    let text = read_text(&index_path)?;
    let src = index_path.display().to_string();
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, l)| l.trim()) != Some("file,label") {
        return Err(Error::parse(&src, 1, 1, "expected header `file,label`"));
    }
    let mut samples = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let Some((file, label)) = line.split_once(',') else {
            return Err(Error::parse(&src, i + 1, 1, "expected `file,label`"));
        };
        let col = file.len() + 2;
        let label = match (task, label.trim()) {
            (Task::Seg, "-") => None,
            (Task::Cls, l) => match l.parse::<u32>() {
                Ok(v) if (v as usize) < classes => Some(v),
                _ => return Err(Error::parse(&src, i + 1, col, format!("label `{l}` is not a class below {classes}"))),
            },
            (Task::Seg, l) => return Err(Error::parse(&src, i + 1, col, format!("segmentation rows take `-`, found `{l}`"))),
        };
        if file.contains(['/', '\\']) || file.starts_with('.') {
            return Err(Error::parse(&src, i + 1, 1, format!("sample file `{file}` must be a plain name")));
        }
        samples.push((file.to_string(), label));
    }
    if samples.len() != count {
        return Err(format_err!("{} lists {} samples, {} declares {count}", INDEX, samples.len(), META));
    }
    if samples.is_empty() {
        usage!("dataset {} is empty", dir.display());
    }
    Ok(DatasetIndex { dir: dir.to_path_buf(), task, classes, samples })
}

impl DatasetIndex {
    pub fn files(&self) -> Vec<PathBuf> {
        let mut v: Vec<PathBuf> = self.samples.iter().map(|(f, _)| self.dir.join(f)).collect();
        v.push(self.dir.join(META));
        v.push(self.dir.join(INDEX));
        v
    }

    /// Loads every sample. Clouds share one feature layout.
    pub fn load(&self, voxel_size: f64) -> Result<(Dataset, usize)> {
        let mut clouds = Vec::with_capacity(self.samples.len());
        for (f, _) in &self.samples {
            let path = self.dir.join(f);
            clouds.push(parse_pointcloud(&path.display().to_string(), &read_text(&path)?)?);
        }
        let width = clouds[0].effective_feature_width();
        if let Some((i, _)) = clouds.iter().enumerate().find(|(_, c)| c.effective_feature_width() != width || c.feature_width() != clouds[0].feature_width()) {
            return Err(format_err!("sample {} has a different feature layout", self.samples[i].0));
        }
        let data = match self.task {
            Task::Cls => {
                let labels = self.samples.iter().map(|s| s.1.expect("classification label")).collect();
                Dataset::classification(clouds, labels, self.classes, voxel_size)?
            }
            Task::Seg => Dataset::segmentation(clouds, self.classes, voxel_size)?,
        };
        Ok((data, width))
    }
}
