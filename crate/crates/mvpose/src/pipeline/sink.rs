//! Destinations for pipeline output records.

use crate::io::JsonlWriter;
use crate::Result;

use super::config::Outputs;
use super::stages::OutRecord;

pub trait RecordSink {
    fn write(&mut self, record: &OutRecord) -> Result<()>;
    fn finish(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Writes each stream to its JSON Lines file, creating files on first use.
pub struct FileSink {
    outputs: Outputs,
    poses: Option<JsonlWriter>,
    engine: Option<JsonlWriter>,
    ik: Option<JsonlWriter>,
    muscles: Option<JsonlWriter>,
    tracks: Option<JsonlWriter>,
}

impl FileSink {
    /// The pose file is always created, even if no pose is emitted.
    pub fn new(outputs: &Outputs) -> Result<Self> {
        for p in [&outputs.poses, &outputs.engine, &outputs.ik, &outputs.muscles, &outputs.tracks] {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
            }
        }
        Ok(Self {
            poses: Some(JsonlWriter::create(&outputs.poses)?),
            outputs: outputs.clone(),
            engine: None,
            ik: None,
            muscles: None,
            tracks: None,
        })
    }
}

fn lazy<'a>(slot: &'a mut Option<JsonlWriter>, path: &std::path::Path) -> Result<&'a mut JsonlWriter> {
    if slot.is_none() {
        *slot = Some(JsonlWriter::create(path)?);
    }
    Ok(slot.as_mut().expect("just created"))
}

impl RecordSink for FileSink {
    fn write(&mut self, record: &OutRecord) -> Result<()> {
        let o = &self.outputs;
        match record {
            OutRecord::Pose(r) => lazy(&mut self.poses, &o.poses)?.write(r),
            OutRecord::Engine(r) => lazy(&mut self.engine, &o.engine)?.write(r),
            OutRecord::Ik(r) => lazy(&mut self.ik, &o.ik)?.write(r),
            OutRecord::Muscle(r) => lazy(&mut self.muscles, &o.muscles)?.write(r),
            OutRecord::Track(r) => lazy(&mut self.tracks, &o.tracks)?.write(r),
        }
    }

    fn finish(&mut self) -> Result<()> {
        for w in [&mut self.poses, &mut self.engine, &mut self.ik, &mut self.muscles, &mut self.tracks] {
            if let Some(w) = w.take() {
                w.finish()?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct MemorySink {
    pub records: Vec<OutRecord>,
}

impl RecordSink for MemorySink {
    fn write(&mut self, record: &OutRecord) -> Result<()> {
        self.records.push(record.clone());
        Ok(())
    }
}

/// Discards records; used for benchmarking.
#[derive(Debug, Default)]
pub struct NullSink {
    pub count: usize,
}

impl RecordSink for NullSink {
    fn write(&mut self, _: &OutRecord) -> Result<()> {
        self.count += 1;
        Ok(())
    }
}
