//! Per-evaluation training records and their CSV form.
//!
//! Columns, in order:
//!
//! `env_steps, eval_mean_return, eval_std, train_episode_return,
//! teacher_threshold, alpha, disc_loss, critic_loss, promotions_count`
//!
//! Quantities that do not exist for a variant (e.g. the threshold without a
//! teacher buffer) or have not been measured yet are written as `NaN`.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RUNLOG_COLUMNS: [&str; 9] = [
    "env_steps",
    "eval_mean_return",
    "eval_std",
    "train_episode_return",
    "teacher_threshold",
    "alpha",
    "disc_loss",
    "critic_loss",
    "promotions_count",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub env_steps: u64,
    pub eval_mean_return: f64,
    pub eval_std: f64,
    pub train_episode_return: f64,
    pub teacher_threshold: f64,
    pub alpha: f64,
    pub disc_loss: f64,
    pub critic_loss: f64,
    pub promotions_count: u64,
}

impl Record {
    /// Field-wise equality that treats two NaNs as equal.
    pub fn same_as(&self, other: &Record) -> bool {
        let eq = |a: f64, b: f64| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan());
        self.env_steps == other.env_steps
            && self.promotions_count == other.promotions_count
            && eq(self.eval_mean_return, other.eval_mean_return)
            && eq(self.eval_std, other.eval_std)
            && eq(self.train_episode_return, other.train_episode_return)
            && eq(self.teacher_threshold, other.teacher_threshold)
            && eq(self.alpha, other.alpha)
            && eq(self.disc_loss, other.disc_loss)
            && eq(self.critic_loss, other.critic_loss)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub records: Vec<Record>,
}

impl RunLog {
    pub fn last(&self) -> Option<&Record> {
        self.records.last()
    }

    pub fn final_return(&self) -> Option<f64> {
        self.last().map(|r| r.eval_mean_return)
    }

    /// First evaluation step whose mean return reaches `level`.
    pub fn steps_to_reach(&self, level: f64) -> Option<u64> {
        self.records.iter().find(|r| r.eval_mean_return >= level).map(|r| r.env_steps)
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r).expect("writing to memory");
        }
        w.into_inner().expect("writing to memory")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R, location: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers().map_err(|e| Error::parse(location, e.to_string()))?.clone();
        if !headers.iter().eq(RUNLOG_COLUMNS.iter().copied()) {
            return Err(Error::parse(location, "unexpected run log columns"));
        }
        let mut records = Vec::new();
        for rec in r.deserialize() {
            records.push(rec.map_err(|e| Error::parse(location, e.to_string()))?);
        }
        Ok(RunLog { records })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        RunLog::from_csv_reader(file, &path.display().to_string())
    }
}

/// Appends records to a CSV file, flushing after each one so an interrupted
/// run leaves a readable prefix.
pub struct RunLogWriter {
    writer: csv::Writer<File>,
    path: std::path::PathBuf,
}

impl RunLogWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        writer.write_record(RUNLOG_COLUMNS).map_err(|e| Error::io(path, e.into()))?;
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(RunLogWriter {
            writer,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, record: &Record) -> Result<()> {
        self.writer.serialize(record).map_err(|e| Error::io(&self.path, e.into()))?;
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}
