//! Exact maximum-inner-product search over precomputed passage embeddings.
//!
//! Scores are inner products accumulated in `f64`, left to right over the
//! dimensions, so a score never depends on how rows are split across workers.
//! Results are ordered by score descending, then passage id ascending.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"XLEM";
const VERSION: u32 = 1;

/// Row-major `f32` matrix with one passage id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("embedding dimension must be positive".into()));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::Validation(format!(
                "{} values do not fill {} rows of dimension {dim}",
                data.len(),
                ids.len()
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Validation(format!("duplicate embedding id {id:?}")));
            }
        }
        Ok(EmbeddingMatrix { ids, dim, data })
    }

    pub fn from_rows(dim: usize, rows: Vec<(String, Vec<f32>)>) -> Result<Self> {
        let mut ids = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (id, row) in rows {
            if row.len() != dim {
                return Err(Error::Validation(format!(
                    "row {id:?} has {} values, expected {dim}",
                    row.len()
                )));
            }
            ids.push(id);
            data.extend_from_slice(&row);
        }
        Self::new(ids, dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.data.chunks_exact(self.dim))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.data.len() * 4 + self.ids.len() * 16);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for (id, row) in self.rows() {
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for v in row {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(id) = self.ids.iter().find(|id| id.len() > u16::MAX as usize) {
            return Err(Error::Validation(format!("id too long for matrix format: {id:.32}...")));
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Text form: `dim=<d>` then `id<TAB>v1,v2,...` per row.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "dim={}", self.dim)?;
        for (id, row) in self.rows() {
            let values: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{id}\t{}", values.join(","))?;
        }
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.starts_with(MAGIC) {
            parse_binary(bytes)
        } else {
            let text = std::str::from_utf8(bytes).map_err(|e| Error::Format {
                offset: e.valid_up_to() as u64,
                message: "neither binary (XLEM) nor UTF-8 text".into(),
            })?;
            parse_text(text)
        }
    }
}

/// Load a matrix in either the binary or the text format.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingMatrix::from_bytes(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!("truncated while reading {what}"),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }
}

fn parse_binary(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let mut cur = Cursor { bytes, pos: 4 };
    let version = u32::from_le_bytes(cur.array("version")?);
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            message: format!("unsupported version {version}"),
        });
    }
    let rows = u64::from_le_bytes(cur.array("row count")?);
    let dim = u32::from_le_bytes(cur.array("dimension")?) as usize;
    if dim == 0 {
        return Err(Error::Format {
            offset: 16,
            message: "dimension must be positive".into(),
        });
    }
    // Every row needs at least 2 + 4*dim bytes; reject absurd counts before allocating.
    let min_row = 2 + 4 * dim as u64;
    let remaining = (bytes.len() - cur.pos) as u64;
    if rows.saturating_mul(min_row) > remaining {
        return Err(Error::Format {
            offset: 8,
            message: format!(
                "header declares {rows} rows of dimension {dim} but only {remaining} bytes follow"
            ),
        });
    }
    let rows = rows as usize;
    let mut ids = Vec::with_capacity(rows);
    let mut data = Vec::with_capacity(rows * dim);
    let mut seen = HashSet::with_capacity(rows);
    for _ in 0..rows {
        let id_offset = cur.pos as u64;
        let len = u16::from_le_bytes(cur.array("id length")?) as usize;
        let id = std::str::from_utf8(cur.take(len, "id")?).map_err(|_| Error::Format {
            offset: id_offset + 2,
            message: "id is not valid UTF-8".into(),
        })?;
        if !seen.insert(id) {
            return Err(Error::Validation(format!("duplicate embedding id {id:?}")));
        }
        ids.push(id.to_owned());
        let values_offset = cur.pos as u64;
        let raw = cur.take(4 * dim, "row values")?;
        for (j, chunk) in raw.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            if !v.is_finite() {
                return Err(Error::Format {
                    offset: values_offset + 4 * j as u64,
                    message: format!("non-finite value in row {id:?}"),
                });
            }
            data.push(v);
        }
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format {
            offset: cur.pos as u64,
            message: format!("{} trailing bytes after the last row", bytes.len() - cur.pos),
        });
    }
    Ok(EmbeddingMatrix { ids, dim, data })
}

fn parse_text(text: &str) -> Result<EmbeddingMatrix> {
    let mut offset = 0u64;
    let mut lines = text.split_inclusive('\n');
    let header = lines.next().ok_or(Error::Format {
        offset: 0,
        message: "empty file: missing \"dim=<d>\" header".into(),
    })?;
    let dim: usize = header
        .trim()
        .strip_prefix("dim=")
        .and_then(|d| d.parse().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::Format {
            offset: 0,
            message: format!("expected \"dim=<d>\" header, found {:?}", header.trim()),
        })?;
    offset += header.len() as u64;

    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_offset = offset;
        offset += line.len() as u64;
        let line = line.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Format {
            offset: line_offset,
            message: format!("line {}: {message}", i + 2),
        };
        let (id, values) = line
            .split_once('\t')
            .ok_or_else(|| err("expected id<TAB>values".into()))?;
        let before = data.len();
        for v in values.split(',') {
            let v: f32 = v
                .trim()
                .parse()
                .map_err(|_| err(format!("invalid value {v:?}")))?;
            if !v.is_finite() {
                return Err(err(format!("non-finite value {v}")));
            }
            data.push(v);
        }
        let got = data.len() - before;
        if got != dim {
            return Err(err(format!("row {id:?} has {got} values, header declares dim={dim}")));
        }
        ids.push(id.to_owned());
    }
    EmbeddingMatrix::new(ids, dim, data)
}

/// Ranked `(passage id, score)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub entries: Vec<(String, f64)>,
}

impl SearchResult {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }
}

#[inline]
fn dot(query: &[f32], row: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (&a, &b) in query.iter().zip(row) {
        acc += f64::from(a) * f64::from(b);
    }
    acc
}

fn check_query(query: &[f32], matrix: &EmbeddingMatrix, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Precondition("k must be at least 1".into()));
    }
    if query.len() != matrix.dim {
        return Err(Error::Precondition(format!(
            "query has dimension {}, matrix has {}",
            query.len(),
            matrix.dim
        )));
    }
    if query.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("query contains a non-finite value".into()));
    }
    Ok(())
}

/// A scored row. `Ord` puts better hits first: higher score, then smaller id.
#[derive(Clone, Copy)]
struct Hit<'a> {
    score: f64,
    id: &'a str,
}

impl Ord for Hit<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.id.cmp(other.id))
    }
}

impl PartialOrd for Hit<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Hit<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Hit<'_> {}

fn select<'a>(query: &[f32], matrix: &'a EmbeddingMatrix, rows: std::ops::Range<usize>, k: usize) -> Vec<Hit<'a>> {
    // Max-heap under "better first" ordering keeps the worst retained hit on top.
    let mut heap: BinaryHeap<Hit<'a>> = BinaryHeap::with_capacity(k + 1);
    for i in rows {
        let hit = Hit {
            score: dot(query, matrix.row(i)),
            id: &matrix.ids[i],
        };
        if heap.len() < k {
            heap.push(hit);
        } else if let Some(worst) = heap.peek() {
            if hit < *worst {
                heap.pop();
                heap.push(hit);
            }
        }
    }
    heap.into_vec()
}

/// Exact top-k by inner product on a single thread.
pub fn top_k(query: &[f32], matrix: &EmbeddingMatrix, k: usize) -> Result<SearchResult> {
    top_k_with_workers(query, matrix, k, 1)
}

/// Exact top-k with rows split across `workers` scoped threads. The output does
/// not depend on `workers`.
pub fn top_k_with_workers(
    query: &[f32],
    matrix: &EmbeddingMatrix,
    k: usize,
    workers: usize,
) -> Result<SearchResult> {
    check_query(query, matrix, k)?;
    let n = matrix.len();
    let workers = workers.clamp(1, n.max(1));
    let mut hits: Vec<Hit<'_>> = if workers == 1 {
        select(query, matrix, 0..n, k)
    } else {
        let chunk = n.div_ceil(workers);
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let rows = (w * chunk).min(n)..((w + 1) * chunk).min(n);
                    s.spawn(move || select(query, matrix, rows, k))
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("search worker panicked"))
                .collect()
        })
    };
    hits.sort_unstable();
    hits.truncate(k);
    Ok(SearchResult {
        entries: hits.into_iter().map(|h| (h.id.to_owned(), h.score)).collect(),
    })
}

/// Reference search: score every row, stable sort by (score desc, id asc), truncate.
pub fn full_sort_search(query: &[f32], matrix: &EmbeddingMatrix, k: usize) -> Result<SearchResult> {
    check_query(query, matrix, k)?;
    let mut scored: Vec<(String, f64)> = Vec::with_capacity(matrix.len());
    for i in 0..matrix.len() {
        let row = matrix.row(i);
        let mut s = 0.0f64;
        for d in 0..matrix.dim {
            s += query[d] as f64 * row[d] as f64;
        }
        scored.push((matrix.ids[i].clone(), s));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(SearchResult { entries: scored })
}
