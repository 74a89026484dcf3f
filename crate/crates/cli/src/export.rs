//! Gallery export as CSV or JSON.

use std::io::{Read, Write};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use pausepoint_client::Client;
use pausepoint_core::gallery::{GalleryCard, GalleryQuery};
use pausepoint_core::ExerciseId;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// One exported gallery row. Multi-valued fields are `;`-joined so both
/// formats carry identical values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub response_id: u64,
    pub student_name: String,
    pub submitted_at: DateTime<Utc>,
    pub duration_ms: u64,
    pub confidence: u8,
    pub helpfulness: u8,
    pub modes: String,
    pub labels: String,
    pub like_count: usize,
    pub comment_count: usize,
}

impl From<&GalleryCard> for ExportRecord {
    fn from(card: &GalleryCard) -> Self {
        ExportRecord {
            response_id: card.response_id.0,
            student_name: card.student_name.clone(),
            submitted_at: card.submitted_at,
            duration_ms: card.duration_ms,
            confidence: card.confidence,
            helpfulness: card.helpfulness,
            modes: card.captured_modes.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(";"),
            labels: card.labels.iter().map(|l| l.as_str()).collect::<Vec<_>>().join(";"),
            like_count: card.like_count,
            comment_count: card.comment_count,
        }
    }
}

impl ExportRecord {
    pub fn modes(&self) -> impl Iterator<Item = &str> {
        self.modes.split(';').filter(|s| !s.is_empty())
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.labels.split(';').filter(|s| !s.is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

fn io_error(e: impl std::fmt::Display) -> CliError {
    CliError::new("io-error", e.to_string())
}

pub fn write_records(records: &[ExportRecord], format: Format, out: impl Write) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in records {
                w.serialize(r).map_err(io_error)?;
            }
            w.flush().map_err(io_error)
        }
        Format::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, records).map_err(io_error)?;
            out.write_all(b"\n").map_err(io_error)
        }
    }
}

pub fn read_records(format: Format, input: impl Read) -> Result<Vec<ExportRecord>> {
    match format {
        Format::Csv => csv::Reader::from_reader(input)
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(io_error),
        Format::Json => serde_json::from_reader(input).map_err(io_error),
    }
}

/// Poll until every response to `exercise` has been post-processed.
pub async fn wait_processed(client: &Client, exercise: ExerciseId, timeout: Duration) -> Result<()> {
    let start = Instant::now();
    loop {
        let status = client.status(exercise).await?;
        if status.processed == status.total {
            return Ok(());
        }
        if start.elapsed() >= timeout {
            return Err(CliError::new(
                "timeout",
                format!("{} of {} responses processed after {timeout:?}", status.processed, status.total),
            ));
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
}

/// Gallery rows in `query` order, once processing has caught up.
pub async fn export(client: &Client, exercise: ExerciseId, query: &GalleryQuery, wait: Duration) -> Result<Vec<ExportRecord>> {
    wait_processed(client, exercise, wait).await?;
    let cards = client.gallery(exercise, query).await?;
    Ok(cards.iter().map(ExportRecord::from).collect())
}
