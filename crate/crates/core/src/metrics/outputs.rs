use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{MetricsError, MetricsRow};
use crate::reward::RewardBreakdown;
use crate::sim::{Observation, TutorAction};

pub const METRICS_HEADER: [&str; 11] = [
    "generation",
    "fitness_mean",
    "fitness_max",
    "sv",
    "gate_rate",
    "depth_mean",
    "directness_mean",
    "ki_rate",
    "kt_rate",
    "ct_rate",
    "cr_rate",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub generation: usize,
    pub individual: usize,
    pub episode: usize,
    pub t: usize,
    pub action: TutorAction,
    pub reward: RewardBreakdown,
    pub observation: Observation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElitePoint {
    pub generation: usize,
    pub id: u64,
    /// `None` when the individual failed evaluation.
    pub fitness: Option<f64>,
    pub novelty: f64,
    pub ea_params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub generation: usize,
    pub id: u64,
    pub fitness: Option<f64>,
    pub pc1: f64,
    pub pc2: f64,
}

fn csv_writer(path: &Path, header: &[&str], append: bool) -> Result<csv::Writer<File>, MetricsError> {
    let exists = append && path.exists();
    let file = OpenOptions::new()
        .create(true)
        .append(exists)
        .write(true)
        .truncate(!exists)
        .open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if !exists {
        w.write_record(header)?;
        w.flush()?;
    }
    Ok(w)
}

fn line_writer(path: &Path, append: bool) -> Result<BufWriter<File>, MetricsError> {
    let file = OpenOptions::new()
        .create(true)
        .append(append)
        .write(true)
        .truncate(!append)
        .open(path)?;
    Ok(BufWriter::new(file))
}

/// Append-only writers for every per-generation output of a run.
pub struct MetricsWriter {
    dir: PathBuf,
    metrics: csv::Writer<File>,
    report: csv::Writer<File>,
    timing: csv::Writer<File>,
    elites: BufWriter<File>,
    trajectories: Option<BufWriter<File>>,
}

impl MetricsWriter {
    /// Opens the writers in `dir`; `append` continues existing files (resume).
    pub fn open(dir: &Path, report_header: &[&str], trajectories: bool, append: bool) -> Result<Self, MetricsError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            metrics: csv_writer(&dir.join("metrics.csv"), &METRICS_HEADER, append)?,
            report: csv_writer(&dir.join("report.csv"), report_header, append)?,
            timing: csv_writer(&dir.join("timing.csv"), &["generation", "wall_seconds"], append)?,
            elites: line_writer(&dir.join("elites.jsonl"), append)?,
            trajectories: if trajectories {
                Some(line_writer(&dir.join("trajectories.jsonl"), append)?)
            } else {
                None
            },
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn metrics(&mut self, row: &MetricsRow) -> Result<(), MetricsError> {
        self.metrics.serialize(row)?;
        self.metrics.flush()?;
        Ok(())
    }

    pub fn report<T: Serialize>(&mut self, rows: &[T]) -> Result<(), MetricsError> {
        for r in rows {
            self.report.serialize(r)?;
        }
        self.report.flush()?;
        Ok(())
    }

    pub fn timing(&mut self, generation: usize, seconds: f64) -> Result<(), MetricsError> {
        self.timing.serialize((generation, seconds))?;
        self.timing.flush()?;
        Ok(())
    }

    pub fn elites(&mut self, points: &[ElitePoint]) -> Result<(), MetricsError> {
        for p in points {
            serde_json::to_writer(&mut self.elites, p)?;
            self.elites.write_all(b"\n")?;
        }
        self.elites.flush()?;
        Ok(())
    }

    pub fn wants_trajectories(&self) -> bool {
        self.trajectories.is_some()
    }

    pub fn trajectories(&mut self, records: &[TrajectoryRecord]) -> Result<(), MetricsError> {
        if let Some(w) = &mut self.trajectories {
            for r in records {
                serde_json::to_writer(&mut *w, r)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, MetricsError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<MetricsRow>, _>>()?)
}

pub fn read_elites(path: &Path) -> Result<Vec<ElitePoint>, MetricsError> {
    let file = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in file.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn write_projection(path: &Path, rows: &[ProjectionRow]) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::HopeEvents;

    #[test]
    fn files_have_golden_headers_and_reparse() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = MetricsWriter::open(dir.path(), &["generation", "individual"], true, false).unwrap();
        let row = MetricsRow {
            generation: 0,
            fitness_mean: -1.5,
            fitness_max: 0.25,
            sv: 0.1,
            ..Default::default()
        };
        w.metrics(&row).unwrap();
        w.report(&[(0usize, 1usize)]).unwrap();
        let rec = TrajectoryRecord {
            generation: 0,
            individual: 1,
            episode: 0,
            t: 3,
            action: TutorAction {
                target: 0,
                difficulty: 0.5,
                ambiguity: 0.1,
                directness: 0.0,
                socratic_depth: 0.7,
                link_target: Some(2),
                tone: 0.3,
            },
            reward: RewardBreakdown::default(),
            observation: Observation {
                correctness: 0.4,
                asked_question: true,
                confusion: false,
                hope: HopeEvents::default(),
            },
        };
        w.trajectories(&[rec.clone(), rec]).unwrap();
        w.elites(&[ElitePoint {
            generation: 0,
            id: 4,
            fitness: None,
            novelty: 0.5,
            ea_params: vec![0.1, -0.2],
        }])
        .unwrap();
        drop(w);

        let text = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(text.lines().next().unwrap(), METRICS_HEADER.join(","));
        assert_eq!(read_metrics(&dir.path().join("metrics.csv")).unwrap(), vec![row]);
        let traj = std::fs::read_to_string(dir.path().join("trajectories.jsonl")).unwrap();
        for line in traj.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v.is_object());
        }
        assert_eq!(read_elites(&dir.path().join("elites.jsonl")).unwrap()[0].id, 4);

        // appending keeps a single header
        let mut w = MetricsWriter::open(dir.path(), &["generation", "individual"], false, true).unwrap();
        w.metrics(&MetricsRow { generation: 1, ..row }).unwrap();
        drop(w);
        assert_eq!(read_metrics(&dir.path().join("metrics.csv")).unwrap().len(), 2);
    }
}
