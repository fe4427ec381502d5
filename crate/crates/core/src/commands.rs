//! File-level operations shared by the CLI and the C bindings.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, gt_tracklets, pred_tracklets, EvalReport, TrackSeq};
use crate::io::{read_rows, read_stream, write_rows, write_stream, StreamHeader};
use crate::pipeline::{run, Mode};
use crate::simulator::generate;

/// Loads a config file, or the defaults when `path` is `None`. A missing or
/// unreadable file is a config error.
pub fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p).map_err(|e| match e {
            Error::Io(io) => Error::InvalidConfig(format!("{}: {io}", p.display())),
            other => other,
        }),
        None => Ok(Config::default()),
    }
}

/// Writes through a temporary file in the target directory so a failed
/// run leaves no partial output. `-` writes to stdout.
pub fn write_output(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    if path == Path::new("-") {
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        f(&mut lock)?;
        lock.flush()?;
        return Ok(());
    }
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        f(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn simulate(config: &Config, output: &Path) -> Result<usize> {
    let seq = generate(&config.scene)?;
    write_output(output, |w| {
        write_stream(w, &StreamHeader::for_sequence(&seq), &seq.frames)
    })?;
    Ok(seq.frames.len())
}

/// Runs the tracker over a stream file and writes track rows; returns the
/// number of rows written.
pub fn track(
    config: &Config,
    input: &Path,
    mode: Mode,
    propagate: bool,
    rescore: bool,
    output: &Path,
) -> Result<usize> {
    // Flag combinations are checked before touching the input.
    config
        .pipeline
        .to_pipeline(mode, propagate, rescore, config.scene.num_classes)?;
    let stream = read_stream(BufReader::new(File::open(input)?))?;
    let p = config
        .pipeline
        .to_pipeline(mode, propagate, rescore, stream.header.num_classes)?;
    let rows = run(&stream.frames, &p)?.rows(&p);
    write_output(output, |w| write_rows(w, &rows))?;
    Ok(rows.len())
}

/// Ground truth from an annotated stream (`.jsonl`/`.json`) or from track
/// rows (any other extension).
pub fn read_gt(path: &Path) -> Result<Vec<TrackSeq>> {
    let file = BufReader::new(File::open(path)?);
    if path
        .extension()
        .is_some_and(|e| e == "jsonl" || e == "json")
    {
        gt_tracklets(&read_stream(file)?.frames)
    } else {
        pred_tracklets(&read_rows(file)?)
    }
}

pub fn eval(config: &Config, pred: &Path, gt: &Path) -> Result<EvalReport> {
    let rows = read_rows(BufReader::new(File::open(pred)?))?;
    let gt = read_gt(gt)?;
    evaluate(&rows, &gt, &config.eval)
}
