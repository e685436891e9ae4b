//! CSV ingestion and the `.pprq` encrypted-table format.
//!
//! ```text
//! "PPRQ"  version u16 = 1  K u32  m u32  n u64  w u32
//! N       ceil(K/8) bytes
//! cells   n * w ciphertexts, row-major, ceil(2K/8) bytes each
//! ```
//!
//! All integers are big endian. The file is exactly
//! `26 + ceil(K/8) + n * w * ceil(2K/8)` bytes long.

use std::fs;
use std::io;
use std::path::Path;

use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use rug::integer::Order;
use rug::Integer;

use crate::paillier::{byte_len, to_fixed_bytes, Ciphertext, PaillierError, PublicKey, SecretKey};

pub const TABLE_MAGIC: &[u8; 4] = b"PPRQ";
pub const TABLE_VERSION: u16 = 1;
/// Magic, version, K, m, n and w.
pub const FIXED_HEADER_LEN: usize = 4 + 2 + 4 + 4 + 8 + 4;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("no records")]
    NoRecords,
    #[error("row {row} has {found} fields, expected {expected}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("row {row}, column {col}: {value:?} is not a non-negative integer")]
    NotInteger { row: usize, col: usize, value: String },
    #[error("row {row}, column {col}: {value} is outside [0, 2^{bits})")]
    OutOfRange { row: usize, col: usize, value: Integer, bits: u32 },
    #[error("domain bit length must be between 1 and {max}, got {bits}")]
    DomainBits { bits: u32, max: u32 },
    #[error("not a table file (bad magic)")]
    BadMagic,
    #[error("unsupported table version {0}")]
    Version(u16),
    #[error("table file is {actual} bytes, header implies {expected}")]
    Size { expected: u64, actual: u64 },
    #[error("table header: {0}")]
    Header(String),
    #[error(transparent)]
    Paillier(#[from] PaillierError),
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

/// Rectangular table of values in `[0, 2^m)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlainTable {
    domain_bits: u32,
    cols: usize,
    rows: Vec<Vec<Integer>>,
}

impl PlainTable {
    /// Validates shape and range. Positions in errors are 1-based.
    pub fn new(domain_bits: u32, rows: Vec<Vec<Integer>>) -> Result<Self> {
        if domain_bits == 0 {
            return Err(StoreError::DomainBits { bits: domain_bits, max: u32::MAX });
        }
        let cols = rows.first().ok_or(StoreError::NoRecords)?.len();
        if cols == 0 {
            return Err(StoreError::NoRecords);
        }
        let bound = Integer::from(1) << domain_bits;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(StoreError::Ragged { row: i + 1, expected: cols, found: row.len() });
            }
            for (j, v) in row.iter().enumerate() {
                if *v < 0 || *v >= bound {
                    return Err(StoreError::OutOfRange { row: i + 1, col: j + 1, value: v.clone(), bits: domain_bits });
                }
            }
        }
        Ok(PlainTable { domain_bits, cols, rows })
    }

    pub fn from_u64(domain_bits: u32, rows: &[Vec<u64>]) -> Result<Self> {
        Self::new(domain_bits, rows.iter().map(|r| r.iter().map(|&v| Integer::from(v)).collect()).collect())
    }

    pub fn domain_bits(&self) -> u32 {
        self.domain_bits
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> &[Vec<Integer>] {
        &self.rows
    }
}

/// Parses a headerless CSV of base-10 non-negative integers.
pub fn parse_csv<R: io::Read>(input: R, domain_bits: u32) -> Result<PlainTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(input);
    let mut rows = Vec::new();
    let mut cols = None;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let expected = *cols.get_or_insert(record.len());
        if record.len() != expected {
            return Err(StoreError::Ragged { row: i + 1, expected, found: record.len() });
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(j, field)| parse_value(field).ok_or_else(|| not_integer(i, j, field)))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    PlainTable::new(domain_bits, rows)
}

fn not_integer(i: usize, j: usize, field: &str) -> StoreError {
    StoreError::NotInteger { row: i + 1, col: j + 1, value: field.to_owned() }
}

fn parse_value(field: &str) -> Option<Integer> {
    if field.is_empty() || !field.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Integer::from_str_radix(field, 10).ok()
}

pub fn ingest_csv(path: &Path, domain_bits: u32) -> Result<PlainTable> {
    parse_csv(fs::File::open(path)?, domain_bits)
}

/// Cell-wise encrypted table with its header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncryptedTable {
    pk: PublicKey,
    domain_bits: u32,
    rows: usize,
    cols: usize,
    cells: Vec<Ciphertext>,
}

impl EncryptedTable {
    pub fn new(pk: PublicKey, domain_bits: u32, rows: usize, cols: usize, cells: Vec<Ciphertext>) -> Result<Self> {
        if cells.len() != rows * cols {
            return Err(StoreError::Header(format!("{} cells for a {rows}x{cols} table", cells.len())));
        }
        if domain_bits == 0 || domain_bits + 2 >= pk.bits() {
            return Err(StoreError::DomainBits { bits: domain_bits, max: pk.bits() - 3 });
        }
        Ok(EncryptedTable { pk, domain_bits, rows, cols, cells })
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.pk
    }

    pub fn domain_bits(&self) -> u32 {
        self.domain_bits
    }

    pub fn num_rows(&self) -> usize {
        self.rows
    }

    pub fn num_cols(&self) -> usize {
        self.cols
    }

    pub fn cell(&self, row: usize, col: usize) -> &Ciphertext {
        &self.cells[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[Ciphertext] {
        &self.cells[row * self.cols..(row + 1) * self.cols]
    }

    pub fn cells(&self) -> &[Ciphertext] {
        &self.cells
    }

    /// `26 + ceil(K/8) + n * w * ceil(2K/8)`.
    pub fn file_size(&self) -> u64 {
        expected_size(self.pk.bits(), self.rows as u64, self.cols as u64)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.file_size() as usize);
        out.extend_from_slice(TABLE_MAGIC);
        out.extend_from_slice(&TABLE_VERSION.to_be_bytes());
        out.extend_from_slice(&self.pk.bits().to_be_bytes());
        out.extend_from_slice(&self.domain_bits.to_be_bytes());
        out.extend_from_slice(&(self.rows as u64).to_be_bytes());
        out.extend_from_slice(&(self.cols as u32).to_be_bytes());
        out.extend_from_slice(&to_fixed_bytes(self.pk.modulus(), self.pk.residue_len()));
        for c in &self.cells {
            out.extend_from_slice(&self.pk.ciphertext_to_bytes(c));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let actual = bytes.len() as u64;
        if bytes.len() < FIXED_HEADER_LEN {
            if bytes.len() >= 4 && &bytes[..4] != TABLE_MAGIC {
                return Err(StoreError::BadMagic);
            }
            return Err(StoreError::Size { expected: FIXED_HEADER_LEN as u64, actual });
        }
        if &bytes[..4] != TABLE_MAGIC {
            return Err(StoreError::BadMagic);
        }
        let version = u16::from_be_bytes([bytes[4], bytes[5]]);
        if version != TABLE_VERSION {
            return Err(StoreError::Version(version));
        }
        let bits = u32::from_be_bytes(bytes[6..10].try_into().unwrap());
        let domain_bits = u32::from_be_bytes(bytes[10..14].try_into().unwrap());
        let rows = u64::from_be_bytes(bytes[14..22].try_into().unwrap());
        let cols = u32::from_be_bytes(bytes[22..26].try_into().unwrap());
        if !crate::paillier::SUPPORTED_BITS.contains(&bits) {
            return Err(PaillierError::UnsupportedBits(bits).into());
        }
        let expected = expected_size(bits, rows, cols as u64);
        if expected != actual {
            return Err(StoreError::Size { expected, actual });
        }
        let n_len = byte_len(bits);
        let modulus = Integer::from_digits(&bytes[FIXED_HEADER_LEN..FIXED_HEADER_LEN + n_len], Order::Msf);
        let pk = PublicKey::from_modulus(modulus)?;
        let ct_len = pk.ciphertext_len();
        let cells = bytes[FIXED_HEADER_LEN + n_len..]
            .chunks_exact(ct_len)
            .map(|chunk| pk.ciphertext_from_bytes(chunk))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(pk, domain_bits, rows as usize, cols as usize, cells)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn expected_size(bits: u32, rows: u64, cols: u64) -> u64 {
    let ct = 2 * byte_len(bits) as u64;
    (FIXED_HEADER_LEN + byte_len(bits)) as u64 + rows.saturating_mul(cols).saturating_mul(ct)
}

/// Fresh encryption of every cell. Rows are encrypted in parallel, each
/// with its own generator seeded from `rng`.
pub fn encrypt_table<R: RngCore + CryptoRng + ?Sized>(
    pk: &PublicKey,
    table: &PlainTable,
    rng: &mut R,
) -> Result<EncryptedTable> {
    let seeds: Vec<[u8; 32]> = (0..table.num_rows())
        .map(|_| {
            let mut s = [0u8; 32];
            rng.fill_bytes(&mut s);
            s
        })
        .collect();
    let rows = table
        .rows()
        .par_iter()
        .zip(seeds)
        .map(|(row, seed)| {
            let mut rng = ChaCha20Rng::from_seed(seed);
            row.iter().map(|v| pk.encrypt(v, &mut rng)).collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    EncryptedTable::new(pk.clone(), table.domain_bits(), table.num_rows(), table.num_cols(), rows.concat())
}

/// Decrypts every cell; for the owner and for tests.
pub fn decrypt_table(sk: &SecretKey, table: &EncryptedTable) -> Result<PlainTable> {
    let rows = (0..table.num_rows())
        .map(|i| table.row(i).iter().map(|c| sk.decrypt(c)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    PlainTable::new(table.domain_bits(), rows)
}
