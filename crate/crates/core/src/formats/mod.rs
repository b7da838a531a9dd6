//! On-disk formats: scenarios, detection streams, gallery snapshots.

pub mod snapshot;
pub mod stream;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matcher::PooledTable;
use crate::simulator::Scenario;

pub use stream::{format_frame_line, parse_frame_line, write_stream, StreamReader};

/// `.jsonl` and `.ndjson` files are detection streams; anything else is read
/// as a scenario.
pub fn is_stream_path(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("jsonl" | "ndjson"))
}

/// `.bin` snapshots are binary; anything else is text.
pub fn is_binary_snapshot(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()) == Some("bin")
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let scenario: Scenario = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::parse(e.line(), e.to_string()))?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn write_scenario(path: &Path, scenario: &Scenario) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer(&mut out, scenario).map_err(|e| Error::io(path, e.into()))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

pub fn open_stream(path: &Path) -> Result<StreamReader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(StreamReader::new(BufReader::new(file)))
}

pub fn read_snapshot(path: &Path) -> Result<PooledTable> {
    if is_binary_snapshot(path) {
        snapshot::from_binary(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    } else {
        snapshot::from_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

pub fn write_snapshot(path: &Path, table: &PooledTable) -> Result<()> {
    let bytes = if is_binary_snapshot(path) { snapshot::to_binary(table) } else { snapshot::to_text(table).into_bytes() };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{generate_scenario, ScenarioConfig};

    #[test]
    fn scenario_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.json");
        let s = generate_scenario(&ScenarioConfig { n_identities: 12, n_frames: 80, dim: 8, ..Default::default() }, 4)
            .unwrap();
        write_scenario(&path, &s).unwrap();
        let first = std::fs::read(&path).unwrap();
        assert_eq!(read_scenario(&path).unwrap(), s);
        write_scenario(&path, &s).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn snapshot_files_pick_format_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = PooledTable::new(2, None);
        t.init_identity(&[0.6, 0.8], crate::types::Orientation::Back).unwrap();
        for name in ["g.txt", "g.bin"] {
            let path = dir.path().join(name);
            write_snapshot(&path, &t).unwrap();
            assert_eq!(read_snapshot(&path).unwrap(), t);
        }
        assert!(std::fs::read(dir.path().join("g.bin")).unwrap().starts_with(b"PSTB"));
    }

    #[test]
    fn extension_routing() {
        assert!(is_stream_path(Path::new("a/b.jsonl")));
        assert!(is_stream_path(Path::new("b.ndjson")));
        assert!(!is_stream_path(Path::new("b.json")));
    }
}
