//! Contact-log parsing and time binning.
//!
//! Raw logs are UTF-8 text with one whitespace-separated `t i j` record per
//! line (`t` in seconds, `i`/`j` raw person ids). Blank lines and lines
//! starting with `#` are skipped. A four-column line `i j bin count` is read
//! as an already-binned record. Raw ids are mapped to dense indices in order
//! of first appearance.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{build_tensor, EventRecord, InteractionTensor, Mode};

/// One contact record, with ids already mapped to dense indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactEvent {
    pub timestamp: i64,
    pub person_a: usize,
    pub person_b: usize,
}

/// Raw id to dense index map, in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeMap {
    raw: Vec<u64>,
    dense: HashMap<u64, usize>,
}

impl NodeMap {
    pub fn intern(&mut self, raw: u64) -> usize {
        let next = self.raw.len();
        *self.dense.entry(raw).or_insert_with(|| {
            self.raw.push(raw);
            next
        })
    }

    pub fn dense_id(&self, raw: u64) -> Option<usize> {
        self.dense.get(&raw).copied()
    }

    pub fn raw_id(&self, dense: usize) -> u64 {
        self.raw[dense]
    }

    pub fn raw_ids(&self) -> &[u64] {
        &self.raw
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// `raw_id,dense_id` CSV.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["raw_id", "dense_id"])?;
        for (dense, raw) in self.raw.iter().enumerate() {
            out.write_record([raw.to_string(), dense.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Parsed contents of a contact log.
#[derive(Debug, Clone, Default)]
pub struct ContactLog {
    pub events: Vec<ContactEvent>,
    /// Four-column pre-binned lines.
    pub records: Vec<EventRecord>,
    pub node_map: NodeMap,
}

impl ContactLog {
    pub fn num_nodes(&self) -> usize {
        self.node_map.len()
    }

    /// Bins the raw events and adds any pre-binned records into one
    /// undirected tensor over all mapped nodes.
    pub fn to_tensor(&self, spec: &BinningSpec) -> Result<InteractionTensor> {
        let mut records = bin_records(&self.events, spec)?;
        records.extend_from_slice(&self.records);
        build_tensor(&records, self.num_nodes().max(1), spec.num_bins, Mode::Undirected)
    }
}

fn field<T: std::str::FromStr>(tok: &str, what: &str, line: usize) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid {what} `{tok}`"),
    })
}

pub fn parse_contact_log<R: BufRead>(reader: R) -> Result<ContactLog> {
    let mut log = ContactLog::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        match toks.len() {
            3 => {
                let timestamp: i64 = field(toks[0], "timestamp", line_no)?;
                let a: u64 = field(toks[1], "person id", line_no)?;
                let b: u64 = field(toks[2], "person id", line_no)?;
                if a == b {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("self-contact of person {a}"),
                    });
                }
                let person_a = log.node_map.intern(a);
                let person_b = log.node_map.intern(b);
                log.events.push(ContactEvent {
                    timestamp,
                    person_a,
                    person_b,
                });
            }
            4 => {
                let a: u64 = field(toks[0], "person id", line_no)?;
                let b: u64 = field(toks[1], "person id", line_no)?;
                let bin: usize = field(toks[2], "bin", line_no)?;
                let count: u64 = field(toks[3], "count", line_no)?;
                if a == b {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("self-contact of person {a}"),
                    });
                }
                let source = log.node_map.intern(a);
                let target = log.node_map.intern(b);
                log.records.push(EventRecord::new(source, target, bin, count));
            }
            n => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected 3 (`t i j`) or 4 (`i j bin count`) fields, found {n}"),
                })
            }
        }
    }
    Ok(log)
}

/// Writes events back out as `t i j` lines using raw ids.
pub fn write_contact_log<W: Write>(mut w: W, events: &[ContactEvent], map: &NodeMap) -> Result<()> {
    for e in events {
        writeln!(
            w,
            "{} {} {}",
            e.timestamp,
            map.raw_id(e.person_a),
            map.raw_id(e.person_b)
        )?;
    }
    Ok(())
}

/// Fixed-width half-open bins `[origin + u w, origin + (u + 1) w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinningSpec {
    pub origin: i64,
    /// Seconds.
    pub bin_width: i64,
    pub num_bins: usize,
    pub drop_out_of_range: bool,
}

impl Default for BinningSpec {
    fn default() -> Self {
        Self {
            origin: 0,
            bin_width: 900,
            num_bins: 96,
            drop_out_of_range: true,
        }
    }
}

impl BinningSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bin_width <= 0 || self.num_bins == 0 {
            return Err(Error::Contract(format!(
                "bin_width must be > 0 and num_bins >= 1 (got {}, {})",
                self.bin_width, self.num_bins
            )));
        }
        Ok(())
    }

    /// Bin of `timestamp`, or `None` outside the window.
    pub fn bin_of(&self, timestamp: i64) -> Option<usize> {
        let offset = timestamp.checked_sub(self.origin)?;
        if offset < 0 {
            return None;
        }
        let bin = (offset / self.bin_width) as usize;
        (bin < self.num_bins).then_some(bin)
    }
}

fn bin_records(events: &[ContactEvent], spec: &BinningSpec) -> Result<Vec<EventRecord>> {
    spec.validate()?;
    let mut records = Vec::with_capacity(events.len());
    for e in events {
        match spec.bin_of(e.timestamp) {
            Some(bin) => records.push(EventRecord::new(e.person_a, e.person_b, bin, 1)),
            None if spec.drop_out_of_range => {}
            None => return Err(Error::OutOfRange { timestamp: e.timestamp }),
        }
    }
    Ok(records)
}

/// Each event adds one interaction to its (unordered pair, bin) cell.
pub fn aggregate_bins(events: &[ContactEvent], num_nodes: usize, spec: &BinningSpec) -> Result<InteractionTensor> {
    let records = bin_records(events, spec)?;
    build_tensor(&records, num_nodes.max(1), spec.num_bins, Mode::Undirected)
}

#[derive(Debug, Serialize, Deserialize)]
struct PrebinnedRow {
    person_a: usize,
    person_b: usize,
    bin: usize,
    count: u64,
}

/// Reads the `person_a,person_b,bin,count` CSV. Ids are dense indices.
pub fn read_prebinned_csv<R: Read>(r: R) -> Result<Vec<EventRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers()?.clone();
    let expected = ["person_a", "person_b", "bin", "count"];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            msg: format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<PrebinnedRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            line: i + 2,
            msg: e.to_string(),
        })?;
        out.push(EventRecord::new(row.person_a, row.person_b, row.bin, row.count));
    }
    Ok(out)
}

/// Writes the tensor's stored cells as `person_a,person_b,bin,count`.
pub fn write_prebinned_csv<W: Write>(w: W, tensor: &InteractionTensor) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if tensor.nnz() == 0 {
        out.write_record(["person_a", "person_b", "bin", "count"])?;
    }
    // serialize() emits the header before the first row
    for e in tensor.entries() {
        out.serialize(PrebinnedRow {
            person_a: e.source,
            person_b: e.target,
            bin: e.bin,
            count: e.count,
        })?;
    }
    out.flush()?;
    Ok(())
}
