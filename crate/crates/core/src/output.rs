//! CSV writers for simulator output. Every file opens with a `#` line
//! stating its units, followed by a header row.

use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::micro::OrderEvent;
use crate::model::{DiscreteBook, PriceEvent, Volume};

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish<W: Write>(mut w: W, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn put<W: Write>(w: &mut W, path: &Path, line: std::fmt::Arguments<'_>) -> Result<()> {
    w.write_fmt(line).map_err(|e| Error::io(path, e))
}

/// `time,side,level,kind`, one row per order event.
pub fn write_event_log(path: &Path, events: &[OrderEvent], time_unit: &str) -> Result<()> {
    let mut w = create(path)?;
    put(&mut w, path, format_args!("# time in {time_unit}; level 1 is the best quote\n"))?;
    put(&mut w, path, format_args!("time,side,level,kind\n"))?;
    for e in events {
        put(
            &mut w,
            path,
            format_args!("{},{},{},{}\n", e.time, e.side.as_str(), e.level, e.kind.as_str()),
        )?;
    }
    finish(w, path)
}

/// `time,direction,mid`, one row per price change.
pub fn write_price_events<V>(path: &Path, events: &[PriceEvent<V>], time_unit: &str) -> Result<()> {
    let mut w = create(path)?;
    put(&mut w, path, format_args!("# time in {time_unit}; mid in currency\n"))?;
    put(&mut w, path, format_args!("time,direction,mid\n"))?;
    for e in events {
        put(
            &mut w,
            path,
            format_args!("{},{},{}\n", e.time, e.direction.as_str(), e.new_mid),
        )?;
    }
    finish(w, path)
}

/// `time,price`.
pub fn write_price_series(path: &Path, series: &[(f64, f64)], time_unit: &str) -> Result<()> {
    let mut w = create(path)?;
    put(&mut w, path, format_args!("# time in {time_unit}; price in currency\n"))?;
    put(&mut w, path, format_args!("time,price\n"))?;
    for (t, p) in series {
        put(&mut w, path, format_args!("{t},{p}\n"))?;
    }
    finish(w, path)
}

/// One row per snapshot: `time,mid,bid_1..bid_L,ask_1..ask_L`.
pub fn write_snapshots<V: Volume + Display>(
    path: &Path,
    snapshots: &[(f64, DiscreteBook<V>)],
    units: &str,
) -> Result<()> {
    let mut w = create(path)?;
    put(&mut w, path, format_args!("# {units}\n"))?;
    let levels = snapshots.first().map_or(0, |(_, b)| b.levels());
    let mut header = String::from("time,mid");
    for side in ["bid", "ask"] {
        for i in 1..=levels {
            header.push_str(&format!(",{side}_{i}"));
        }
    }
    put(&mut w, path, format_args!("{header}\n"))?;
    for (t, book) in snapshots {
        let mut row = format!("{t},{}", book.mid);
        for v in book.bid.iter().chain(&book.ask) {
            row.push_str(&format!(",{v}"));
        }
        put(&mut w, path, format_args!("{row}\n"))?;
    }
    finish(w, path)
}

/// `level,position,bid,ask` for a pair of per-level profiles.
pub fn write_profile(
    path: &Path,
    positions: &[f64],
    bid: &[f64],
    ask: &[f64],
    units: &str,
) -> Result<()> {
    let mut w = create(path)?;
    put(&mut w, path, format_args!("# {units}\n"))?;
    put(&mut w, path, format_args!("level,position,bid,ask\n"))?;
    for (i, ((x, b), a)) in positions.iter().zip(bid).zip(ask).enumerate() {
        put(&mut w, path, format_args!("{},{x},{b},{a}\n", i + 1))?;
    }
    finish(w, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::micro::OrderKind;
    use crate::model::{MesoBook, Side};

    #[test]
    fn files_have_unit_lines_and_headers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("events.csv");
        let events = [OrderEvent {
            time: 0.5,
            side: Side::Ask,
            level: 2,
            kind: OrderKind::MoveLeft,
        }];
        write_event_log(&p, &events, "micro time units").unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(
            text,
            "# time in micro time units; level 1 is the best quote\ntime,side,level,kind\n0.5,ask,2,move-left\n"
        );

        let p = dir.path().join("snap.csv");
        let book = MesoBook::new(vec![1.0, 0.5], vec![0.0, 2.0], 100.0).unwrap();
        write_snapshots(&p, &[(0.0, book)], "volumes in model units").unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "time,mid,bid_1,bid_2,ask_1,ask_2");
        assert_eq!(lines[2], "0,100,1,0.5,0,2");
    }
}
