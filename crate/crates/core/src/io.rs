//! CSV readers and writers for bars, trades, jump lists and generic tables.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::jumps::JumpEvent;
use crate::taildep::Trade;
use crate::timebase::{BarPanel, BarRecord, TradingCalendar};

pub const BAR_HEADER: &str = "date,time,ticker,close,volume";
pub const TRADE_HEADER: &str = "timestamp,ticker,price,size";
pub const JUMP_HEADER: &str = "ticker,date,time,score,sign";

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| Error::Parse(format!("date `{s}`: {e}")))
}

fn parse_minute(s: &str) -> Result<NaiveTime> {
    NaiveTime::parse_from_str(s, "%H:%M").map_err(|e| Error::Parse(format!("time `{s}`: {e}")))
}

/// ISO-8601 local timestamp to the minute or second (`T` or space separator).
pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    const FORMATS: [&str; 4] = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"];
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s.trim(), f).ok())
        .ok_or_else(|| Error::Parse(format!("timestamp `{s}`")))
}

fn check_header(found: &csv::ByteRecord, expected: &str) -> Result<()> {
    let got: Vec<&[u8]> = found.iter().collect();
    let want: Vec<&[u8]> = expected.split(',').map(str::as_bytes).collect();
    if got == want {
        Ok(())
    } else {
        Err(Error::Parse(format!(
            "expected header `{expected}`, found `{}`",
            String::from_utf8_lossy(found.as_slice())
        )))
    }
}

fn field(rec: &csv::ByteRecord, i: usize, line: u64) -> Result<&str> {
    let raw = rec
        .get(i)
        .ok_or_else(|| Error::Parse(format!("line {line}: missing column {i}")))?;
    std::str::from_utf8(raw).map_err(|_| Error::Parse(format!("line {line}: invalid utf-8")))
}

fn reader<R: std::io::Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).from_reader(r)
}

pub fn read_bars<R: std::io::Read>(r: R) -> Result<Vec<BarRecord>> {
    let mut rdr = reader(r);
    check_header(rdr.byte_headers()?, BAR_HEADER)?;
    let mut rec = csv::ByteRecord::new();
    let mut out = Vec::new();
    while rdr.read_byte_record(&mut rec)? {
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i| -> Result<&str> { field(&rec, i, line) };
        out.push(BarRecord {
            date: parse_date(num(0)?)?,
            time: parse_minute(num(1)?)?,
            ticker: num(2)?.to_string(),
            close: num(3)?
                .parse()
                .map_err(|e| Error::Parse(format!("line {line}: close: {e}")))?,
            volume: num(4)?
                .parse()
                .map_err(|e| Error::Parse(format!("line {line}: volume: {e}")))?,
        });
    }
    Ok(out)
}

pub fn read_bars_file(path: &Path) -> Result<Vec<BarRecord>> {
    read_bars(open(path)?)
}

/// Write every present bar of `panel` in (date, time, ticker) order.
pub fn write_bars<W: Write>(panel: &BarPanel, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{BAR_HEADER}")?;
    let cal = panel.calendar();
    for i in 0..panel.n_bins() {
        let stamp = cal.stamp(i);
        let date = cal.date(stamp.day as usize).format("%Y-%m-%d");
        let time = cal.time_of(stamp.bin).format("%H:%M");
        for (s, t) in panel.tickers().iter().enumerate() {
            let c = panel.closes(s)[i];
            if c.is_finite() {
                writeln!(w, "{date},{time},{t},{c},{}", panel.volumes(s)[i])?;
            }
        }
    }
    w.flush()
}

pub fn write_bars_file(panel: &BarPanel, path: &Path) -> Result<()> {
    write_bars(panel, create(path)?).map_err(|e| Error::io(path, e))
}

pub fn read_trades<R: std::io::Read>(r: R) -> Result<Vec<Trade>> {
    let mut rdr = reader(r);
    check_header(rdr.byte_headers()?, TRADE_HEADER)?;
    let mut rec = csv::ByteRecord::new();
    let mut out = Vec::new();
    while rdr.read_byte_record(&mut rec)? {
        let line = rec.position().map_or(0, |p| p.line());
        out.push(Trade {
            at: parse_timestamp(field(&rec, 0, line)?)?,
            ticker: field(&rec, 1, line)?.to_string(),
            price: field(&rec, 2, line)?
                .parse()
                .map_err(|e| Error::Parse(format!("line {line}: price: {e}")))?,
            size: field(&rec, 3, line)?
                .parse()
                .map_err(|e| Error::Parse(format!("line {line}: size: {e}")))?,
        });
    }
    Ok(out)
}

pub fn read_trades_file(path: &Path) -> Result<Vec<Trade>> {
    read_trades(open(path)?)
}

pub fn write_trades<W: Write>(trades: &[Trade], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{TRADE_HEADER}")?;
    for t in trades {
        writeln!(w, "{},{},{},{}", t.at.format("%Y-%m-%dT%H:%M:%S"), t.ticker, t.price, t.size)?;
    }
    w.flush()
}

pub fn write_trades_file(trades: &[Trade], path: &Path) -> Result<()> {
    write_trades(trades, create(path)?).map_err(|e| Error::io(path, e))
}

pub fn write_jumps<W: Write>(jumps: &[JumpEvent], panel: &BarPanel, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{JUMP_HEADER}")?;
    let cal = panel.calendar();
    for j in jumps {
        writeln!(
            w,
            "{},{},{},{},{}",
            panel.tickers()[j.stock],
            cal.date(j.stamp.day as usize).format("%Y-%m-%d"),
            cal.time_of(j.stamp.bin).format("%H:%M"),
            j.score,
            if j.positive { '+' } else { '-' }
        )?;
    }
    w.flush()
}

pub fn write_jumps_file(jumps: &[JumpEvent], panel: &BarPanel, path: &Path) -> Result<()> {
    write_jumps(jumps, panel, create(path)?).map_err(|e| Error::io(path, e))
}

/// Read a jump list back against a panel's tickers and calendar; rows naming
/// unknown tickers or dates are an error.
pub fn read_jumps<R: std::io::Read>(r: R, panel: &BarPanel) -> Result<Vec<JumpEvent>> {
    let mut rdr = reader(r);
    check_header(rdr.byte_headers()?, JUMP_HEADER)?;
    let cal: &TradingCalendar = panel.calendar();
    let mut rec = csv::ByteRecord::new();
    let mut out = Vec::new();
    while rdr.read_byte_record(&mut rec)? {
        let line = rec.position().map_or(0, |p| p.line());
        let ticker = field(&rec, 0, line)?;
        let stock = panel
            .stock_index(ticker)
            .ok_or_else(|| Error::Parse(format!("line {line}: unknown ticker {ticker}")))?;
        let at = parse_date(field(&rec, 1, line)?)?.and_time(parse_minute(field(&rec, 2, line)?)?);
        let stamp = cal
            .stamp_of(at)
            .ok_or_else(|| Error::Parse(format!("line {line}: {at} outside calendar")))?;
        let score = field(&rec, 3, line)?
            .parse()
            .map_err(|e| Error::Parse(format!("line {line}: score: {e}")))?;
        let positive = match field(&rec, 4, line)? {
            "+" => true,
            "-" => false,
            other => return Err(Error::Parse(format!("line {line}: sign `{other}`"))),
        };
        out.push(JumpEvent {
            stock,
            stamp,
            score,
            positive,
        });
    }
    Ok(out)
}

pub fn read_jumps_file(path: &Path, panel: &BarPanel) -> Result<Vec<JumpEvent>> {
    read_jumps(open(path)?, panel)
}

/// Serialize rows through serde with a header derived from field names.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(open(path)?)?)
}

/// Non-empty, non-comment lines of a text file.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in open(path)?.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            out.push(t.to_string());
        }
    }
    Ok(out)
}
