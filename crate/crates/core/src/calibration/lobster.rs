//! LOBSTER message and order book files.
//!
//! A message row is `time,type,order_id,size,price,direction` with time in
//! seconds after midnight and prices in units of 1e-4 currency. The order
//! book row aligned with it lists `ask_px_1,ask_sz_1,bid_px_1,bid_sz_1,...`
//! for `L` levels and shows the book after the message.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Side;

/// Price LOBSTER writes into empty ask slots.
pub const DUMMY_ASK_PRICE: i64 = 9_999_999_999;
/// Price LOBSTER writes into empty bid slots.
pub const DUMMY_BID_PRICE: i64 = -9_999_999_999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventType {
    Submission = 1,
    Cancellation = 2,
    Deletion = 3,
    Execution = 4,
    HiddenExecution = 5,
    CrossTrade = 6,
    Halt = 7,
}

impl EventType {
    pub fn from_code(code: i64) -> Option<Self> {
        Some(match code {
            1 => EventType::Submission,
            2 => EventType::Cancellation,
            3 => EventType::Deletion,
            4 => EventType::Execution,
            5 => EventType::HiddenExecution,
            6 => EventType::CrossTrade,
            7 => EventType::Halt,
            _ => return None,
        })
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Effect on the visible queue at the order's price, per share.
    pub fn visible_sign(self) -> i64 {
        match self {
            EventType::Submission => 1,
            EventType::Cancellation | EventType::Deletion | EventType::Execution => -1,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LobsterEvent {
    /// Seconds after midnight.
    pub time: f64,
    pub kind: EventType,
    pub order_id: u64,
    /// Shares.
    pub size: u64,
    /// Price in 1e-4 currency units.
    pub price: i64,
    /// +1 buy, -1 sell.
    pub direction: i8,
}

impl LobsterEvent {
    pub fn side(&self) -> Side {
        if self.direction > 0 {
            Side::Bid
        } else {
            Side::Ask
        }
    }
}

/// One order book row. Empty slots carry the LOBSTER dummy prices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BookSnapshot {
    pub ask_price: Vec<i64>,
    pub ask_size: Vec<u64>,
    pub bid_price: Vec<i64>,
    pub bid_size: Vec<u64>,
}

impl BookSnapshot {
    pub fn with_levels(levels: usize) -> Self {
        BookSnapshot {
            ask_price: vec![DUMMY_ASK_PRICE; levels],
            ask_size: vec![0; levels],
            bid_price: vec![DUMMY_BID_PRICE; levels],
            bid_size: vec![0; levels],
        }
    }

    pub fn levels(&self) -> usize {
        self.ask_price.len()
    }

    fn prices(&self, side: Side) -> (&[i64], &[u64]) {
        match side {
            Side::Bid => (&self.bid_price, &self.bid_size),
            Side::Ask => (&self.ask_price, &self.ask_size),
        }
    }

    /// Best price on `side`, ignoring dummy slots.
    pub fn best(&self, side: Side) -> Option<i64> {
        let (px, _) = self.prices(side);
        px.first().copied().filter(|&p| !is_dummy(p))
    }

    /// Visible size at `price` on `side`; zero if the price is not listed.
    pub fn size_at(&self, side: Side, price: i64) -> u64 {
        let (px, sz) = self.prices(side);
        px.iter()
            .position(|&p| p == price)
            .map_or(0, |k| sz[k])
    }

    /// Sizes by relative level `1..=levels` measured from the best price in
    /// steps of `tick`, zero where nothing is listed.
    pub fn relative_sizes(&self, side: Side, tick: i64, levels: usize) -> Option<Vec<u64>> {
        let best = self.best(side)?;
        let (px, sz) = self.prices(side);
        let mut out = vec![0; levels];
        for (&p, &s) in px.iter().zip(sz) {
            if is_dummy(p) {
                continue;
            }
            if let Some(level) = relative_level(side, best, p, tick) {
                if level <= levels {
                    out[level - 1] = s;
                }
            }
        }
        Some(out)
    }

    fn check(&self) -> std::result::Result<(), String> {
        let strictly = |px: &[i64], up: bool| {
            let live: Vec<i64> = px.iter().copied().filter(|&p| !is_dummy(p)).collect();
            live.windows(2)
                .all(|w| if up { w[0] < w[1] } else { w[0] > w[1] })
        };
        if !strictly(&self.ask_price, true) {
            return Err("ask prices are not strictly increasing".into());
        }
        if !strictly(&self.bid_price, false) {
            return Err("bid prices are not strictly decreasing".into());
        }
        Ok(())
    }
}

fn is_dummy(price: i64) -> bool {
    price >= DUMMY_ASK_PRICE || price <= DUMMY_BID_PRICE
}

/// 1-based distance in ticks from `best` on `side`, if `price` lies on the
/// grid behind the best quote.
pub fn relative_level(side: Side, best: i64, price: i64, tick: i64) -> Option<usize> {
    let gap = match side {
        Side::Bid => best - price,
        Side::Ask => price - best,
    };
    (gap >= 0 && gap % tick == 0).then(|| (gap / tick) as usize + 1)
}

/// How an event enters the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    /// Limit order into an occupied queue.
    Limit,
    /// Limit order into an empty queue; excluded.
    Unoccupied,
    /// Cancellation, deletion or execution.
    Removal,
    /// Cross trade or trading halt.
    Skipped,
    /// Price outside the tracked levels.
    OutOfWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribution {
    pub side: Side,
    pub level: Option<usize>,
    pub role: Role,
}

/// Attributes the events sharing one timestamp against the book after the
/// last of them. A queue counts as occupied when the size before the group,
/// i.e. the final size minus the group's own visible changes at that price,
/// is positive. Both rules ignore the order of rows within the timestamp.
pub fn attribute_group(
    events: &[LobsterEvent],
    post: &BookSnapshot,
    tick: i64,
    levels: usize,
) -> Vec<Attribution> {
    let mut change: BTreeMap<(bool, i64), i64> = BTreeMap::new();
    for e in events {
        *change.entry((e.direction > 0, e.price)).or_default() +=
            e.kind.visible_sign() * e.size as i64;
    }
    events
        .iter()
        .map(|e| {
            let side = e.side();
            let skipped = matches!(e.kind, EventType::CrossTrade | EventType::Halt);
            let level = post
                .best(side)
                .and_then(|best| relative_level(side, best, e.price, tick))
                .filter(|&l| l <= levels);
            let role = if skipped {
                Role::Skipped
            } else if level.is_none() {
                Role::OutOfWindow
            } else if e.kind == EventType::Submission {
                let before =
                    post.size_at(side, e.price) as i64 - change[&(e.direction > 0, e.price)];
                if before > 0 {
                    Role::Limit
                } else {
                    Role::Unoccupied
                }
            } else {
                Role::Removal
            };
            Attribution { side, level, role }
        })
        .collect()
}

/// Attribution of a whole parsed stream, grouping rows by timestamp.
pub fn attribute_events(
    events: &[LobsterEvent],
    snapshots: &[BookSnapshot],
    tick: i64,
    levels: usize,
) -> Result<Vec<Attribution>> {
    if events.len() != snapshots.len() {
        return Err(Error::Alignment {
            messages: events.len(),
            snapshots: snapshots.len(),
        });
    }
    let mut out = Vec::with_capacity(events.len());
    let mut start = 0;
    while start < events.len() {
        let t = events[start].time;
        let end = start + events[start..].iter().take_while(|e| e.time == t).count();
        out.extend(attribute_group(&events[start..end], &snapshots[end - 1], tick, levels));
        start = end;
    }
    Ok(out)
}

/// Consumer of aligned `(message, snapshot)` rows.
pub trait LobsterSink {
    fn push(&mut self, event: &LobsterEvent, snapshot: &BookSnapshot) -> Result<()>;
}

impl LobsterSink for (Vec<LobsterEvent>, Vec<BookSnapshot>) {
    fn push(&mut self, event: &LobsterEvent, snapshot: &BookSnapshot) -> Result<()> {
        self.0.push(*event);
        self.1.push(snapshot.clone());
        Ok(())
    }
}

/// Streaming reader over a pair of aligned files.
pub struct LobsterReader<M: Read, B: Read> {
    messages: csv::Reader<M>,
    books: csv::Reader<B>,
    message_name: String,
    book_name: String,
    levels: usize,
    rows: usize,
    last_time: f64,
    message_record: StringRecord,
    book_record: StringRecord,
}

impl LobsterReader<BufReader<File>, BufReader<File>> {
    pub fn open(message_path: &Path, book_path: &Path, levels: usize) -> Result<Self> {
        let open = |p: &Path| {
            File::open(p)
                .map(BufReader::new)
                .map_err(|e| Error::io(p, e))
        };
        let mut reader = LobsterReader::new(open(message_path)?, open(book_path)?, levels);
        reader.message_name = message_path.display().to_string();
        reader.book_name = book_path.display().to_string();
        Ok(reader)
    }
}

impl<M: Read, B: Read> LobsterReader<M, B> {
    pub fn new(messages: M, books: B, levels: usize) -> Self {
        let builder = || {
            let mut b = ReaderBuilder::new();
            b.has_headers(false).flexible(true).trim(csv::Trim::All);
            b
        };
        LobsterReader {
            messages: builder().from_reader(messages),
            books: builder().from_reader(books),
            message_name: "message file".into(),
            book_name: "order book file".into(),
            levels,
            rows: 0,
            last_time: f64::NEG_INFINITY,
            message_record: StringRecord::new(),
            book_record: StringRecord::new(),
        }
    }

    /// Reads the next aligned row, or `None` at the end of both files.
    pub fn next_row(&mut self) -> Result<Option<(LobsterEvent, BookSnapshot)>> {
        let has_message = self.messages.read_record(&mut self.message_record)?;
        let has_book = self.books.read_record(&mut self.book_record)?;
        match (has_message, has_book) {
            (false, false) => return Ok(None),
            (true, true) => {}
            (m, _) => {
                // count the rest of the longer file for the report
                let mut extra = 1;
                let mut rec = StringRecord::new();
                if m {
                    while self.messages.read_record(&mut rec)? {
                        extra += 1;
                    }
                    return Err(Error::Alignment {
                        messages: self.rows + extra,
                        snapshots: self.rows,
                    });
                }
                while self.books.read_record(&mut rec)? {
                    extra += 1;
                }
                return Err(Error::Alignment {
                    messages: self.rows,
                    snapshots: self.rows + extra,
                });
            }
        }
        self.rows += 1;
        let event = self.parse_message()?;
        if event.time < self.last_time {
            return Err(self.message_error("time goes backwards"));
        }
        self.last_time = event.time;
        let snapshot = self.parse_book()?;
        Ok(Some((event, snapshot)))
    }

    /// Rows read so far.
    pub fn rows(&self) -> usize {
        self.rows
    }

    fn line(record: &StringRecord, fallback: usize) -> usize {
        record.position().map_or(fallback, |p| p.line() as usize)
    }

    fn message_error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            file: self.message_name.clone(),
            line: Self::line(&self.message_record, self.rows),
            message: message.into(),
        }
    }

    fn book_error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            file: self.book_name.clone(),
            line: Self::line(&self.book_record, self.rows),
            message: message.into(),
        }
    }

    fn parse_message(&self) -> Result<LobsterEvent> {
        let r = &self.message_record;
        if r.len() != 6 {
            return Err(self.message_error(format!("expected 6 columns, found {}", r.len())));
        }
        let int = |k: usize, what: &str| -> Result<i64> {
            r[k].parse::<i64>()
                .map_err(|_| self.message_error(format!("bad {what} {:?}", &r[k])))
        };
        let time: f64 = r[0]
            .parse()
            .ok()
            .filter(|t: &f64| t.is_finite() && *t >= 0.0)
            .ok_or_else(|| self.message_error(format!("bad time {:?}", &r[0])))?;
        let code = int(1, "type")?;
        let kind = EventType::from_code(code)
            .ok_or_else(|| self.message_error(format!("unknown event type {code}")))?;
        let order_id = int(2, "order id")?;
        let size = int(3, "size")?;
        if size <= 0 && !matches!(kind, EventType::Halt) {
            return Err(self.message_error(format!("size must be positive, found {size}")));
        }
        let price = int(4, "price")?;
        let direction = int(5, "direction")?;
        if direction != 1 && direction != -1 {
            return Err(self.message_error(format!("direction must be 1 or -1, found {direction}")));
        }
        Ok(LobsterEvent {
            time,
            kind,
            order_id: order_id.max(0) as u64,
            size: size.max(0) as u64,
            price,
            direction: direction as i8,
        })
    }

    fn parse_book(&self) -> Result<BookSnapshot> {
        let r = &self.book_record;
        if r.len() != 4 * self.levels {
            return Err(self.book_error(format!(
                "expected {} columns for {} levels, found {}",
                4 * self.levels,
                self.levels,
                r.len()
            )));
        }
        let mut snap = BookSnapshot::with_levels(self.levels);
        for level in 0..self.levels {
            let field = |k: usize| -> Result<i64> {
                let text = &r[4 * level + k];
                text.parse::<i64>()
                    .map_err(|_| self.book_error(format!("bad number {text:?}")))
            };
            let size = |k: usize| -> Result<u64> {
                let v = field(k)?;
                u64::try_from(v).map_err(|_| self.book_error(format!("negative size {v}")))
            };
            snap.ask_price[level] = field(0)?;
            snap.ask_size[level] = size(1)?;
            snap.bid_price[level] = field(2)?;
            snap.bid_size[level] = size(3)?;
        }
        snap.check().map_err(|m| self.book_error(m))?;
        Ok(snap)
    }

    /// Feeds every row to `sink`; returns the row count.
    pub fn drain_into<S: LobsterSink + ?Sized>(&mut self, sink: &mut S) -> Result<usize> {
        while let Some((event, snapshot)) = self.next_row()? {
            sink.push(&event, &snapshot)?;
        }
        Ok(self.rows)
    }
}

/// Reads both files into memory.
pub fn parse_lobster(
    message_path: &Path,
    book_path: &Path,
    levels: usize,
) -> Result<(Vec<LobsterEvent>, Vec<BookSnapshot>)> {
    let mut out = (Vec::new(), Vec::new());
    LobsterReader::open(message_path, book_path, levels)?.drain_into(&mut out)?;
    Ok(out)
}

/// Writes rows in the LOBSTER layout.
pub struct LobsterWriter<M: Write, B: Write> {
    messages: M,
    books: B,
    rows: u64,
}

impl LobsterWriter<BufWriter<File>, BufWriter<File>> {
    pub fn create(message_path: &Path, book_path: &Path) -> Result<Self> {
        let create = |p: &Path| {
            File::create(p)
                .map(BufWriter::new)
                .map_err(|e| Error::io(p, e))
        };
        Ok(LobsterWriter::new(create(message_path)?, create(book_path)?))
    }
}

impl<M: Write, B: Write> LobsterWriter<M, B> {
    pub fn new(messages: M, books: B) -> Self {
        LobsterWriter {
            messages,
            books,
            rows: 0,
        }
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn finish(mut self) -> Result<(M, B)> {
        self.messages.flush().map_err(|e| Error::io("message file", e))?;
        self.books.flush().map_err(|e| Error::io("order book file", e))?;
        Ok((self.messages, self.books))
    }
}

impl<M: Write, B: Write> LobsterSink for LobsterWriter<M, B> {
    fn push(&mut self, e: &LobsterEvent, s: &BookSnapshot) -> Result<()> {
        let io = |err| Error::io("lobster output", err);
        writeln!(
            self.messages,
            "{},{},{},{},{},{}",
            e.time,
            e.kind.code(),
            e.order_id,
            e.size,
            e.price,
            e.direction
        )
        .map_err(io)?;
        for level in 0..s.levels() {
            let sep = if level + 1 == s.levels() { "\n" } else { "," };
            write!(
                self.books,
                "{},{},{},{}{sep}",
                s.ask_price[level], s.ask_size[level], s.bid_price[level], s.bid_size[level]
            )
            .map_err(io)?;
        }
        self.rows += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MESSAGES: &str = "34200.01,1,11,100,1000100,-1\n\
                            34200.02,3,7,50,999900,1\n\
                            34200.03,4,8,20,1000000,1\n";
    const BOOKS: &str = "1000100,300,1000000,200,1000200,10,999900,50\n\
                         1000100,300,1000000,200,1000200,10,999900,0\n\
                         1000100,300,1000000,180,1000200,10,999900,0\n";

    fn read(m: &str, b: &str, levels: usize) -> Result<(Vec<LobsterEvent>, Vec<BookSnapshot>)> {
        let mut out = (Vec::new(), Vec::new());
        LobsterReader::new(m.as_bytes(), b.as_bytes(), levels).drain_into(&mut out)?;
        Ok(out)
    }

    #[test]
    fn three_row_fixture() {
        let (events, snaps) = read(MESSAGES, BOOKS, 2).unwrap();
        assert_eq!(events.len(), 3);
        assert_eq!(events[0].kind, EventType::Submission);
        assert_eq!(events[1].kind, EventType::Deletion);
        assert_eq!(events[2].kind, EventType::Execution);
        assert_eq!(snaps[2].bid_size, vec![180, 0]);
        let attr = attribute_events(&events, &snaps, 100, 2).unwrap();
        assert_eq!(attr[0], Attribution { side: Side::Ask, level: Some(1), role: Role::Limit });
        assert_eq!(attr[1], Attribution { side: Side::Bid, level: Some(2), role: Role::Removal });
        assert_eq!(attr[2], Attribution { side: Side::Bid, level: Some(1), role: Role::Removal });
        // one level deep, the deletion falls outside the window
        let narrow = attribute_events(&events, &snaps, 100, 1).unwrap();
        assert_eq!(narrow[1].role, Role::OutOfWindow);
    }

    #[test]
    fn empty_files() {
        let (events, snaps) = read("", "", 50).unwrap();
        assert!(events.is_empty() && snaps.is_empty());
    }

    #[test]
    fn bad_rows_report_lines() {
        let bad = MESSAGES.replace("34200.02,3", "34200.02,9");
        match read(&bad, BOOKS, 2).unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("event type"));
            }
            e => panic!("{e}"),
        }
        match read(MESSAGES, &BOOKS.replace(",10,", ",x,"), 2).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            e => panic!("{e}"),
        }
        assert!(matches!(read(MESSAGES, BOOKS, 3), Err(Error::Parse { .. })));
    }

    #[test]
    fn misaligned_files() {
        let short: String = BOOKS.lines().take(2).map(|l| format!("{l}\n")).collect();
        match read(MESSAGES, &short, 2).unwrap_err() {
            Error::Alignment { messages, snapshots } => assert_eq!((messages, snapshots), (3, 2)),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn write_is_byte_identical() {
        let (events, snaps) = read(MESSAGES, BOOKS, 2).unwrap();
        let mut w = LobsterWriter::new(Vec::new(), Vec::new());
        for (e, s) in events.iter().zip(&snaps) {
            w.push(e, s).unwrap();
        }
        let (m, b) = w.finish().unwrap();
        assert_eq!(String::from_utf8(m).unwrap(), MESSAGES);
        assert_eq!(String::from_utf8(b).unwrap(), BOOKS);
    }

    #[test]
    fn dummy_slots_are_ignored() {
        let snap = BookSnapshot {
            ask_price: vec![1000100, DUMMY_ASK_PRICE],
            ask_size: vec![5, 0],
            bid_price: vec![999800, DUMMY_BID_PRICE],
            bid_size: vec![7, 0],
        };
        snap.check().unwrap();
        assert_eq!(snap.relative_sizes(Side::Bid, 100, 3), Some(vec![7, 0, 0]));
        assert_eq!(snap.relative_sizes(Side::Ask, 100, 1), Some(vec![5]));
        assert_eq!(BookSnapshot::with_levels(2).best(Side::Ask), None);
    }

    #[test]
    fn group_attribution_ignores_row_order() {
        let post = BookSnapshot {
            ask_price: vec![1000100, 1000200],
            ask_size: vec![30, 10],
            bid_price: vec![1000000, 999900],
            bid_size: vec![20, 5],
        };
        let add = |size, price, dir| LobsterEvent {
            time: 1.0,
            kind: EventType::Submission,
            order_id: 1,
            size,
            price,
            direction: dir,
        };
        // a queue filled from empty by two orders in one timestamp
        let group = vec![add(3, 999900, 1), add(2, 999900, 1), add(10, 1000100, -1)];
        let forward = attribute_group(&group, &post, 100, 2);
        let mut rev = group.clone();
        rev.reverse();
        let mut backward = attribute_group(&rev, &post, 100, 2);
        backward.reverse();
        assert_eq!(forward, backward);
        assert_eq!(forward[0].role, Role::Unoccupied);
        assert_eq!(forward[2].role, Role::Limit);
    }
}
