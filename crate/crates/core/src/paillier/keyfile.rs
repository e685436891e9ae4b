//! Binary key files.
//!
//! ```text
//! "PPQK" | version: u16 BE | role: u8 | fields...
//! field := len: u32 BE | big-endian magnitude (len bytes)
//! ```
//!
//! Field order per role: public `N`; secret `N, p, q, lambda, mu`;
//! share `N, d_i`.

use std::fs;
use std::path::Path;

use rug::integer::Order;
use rug::Integer;

use super::{KeyShare, PaillierError, PublicKey, Result, SecretKey, ShareIndex};

pub const KEY_MAGIC: [u8; 4] = *b"PPQK";
pub const KEY_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeyRole {
    Public = 0,
    Secret = 1,
    Share1 = 2,
    Share2 = 3,
}

impl KeyRole {
    fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => KeyRole::Public,
            1 => KeyRole::Secret,
            2 => KeyRole::Share1,
            3 => KeyRole::Share2,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KeyFile {
    Public(PublicKey),
    Secret(SecretKey),
    Share(KeyShare),
}

fn bad(msg: impl Into<String>) -> PaillierError {
    PaillierError::InvalidKey(msg.into())
}

impl KeyFile {
    pub fn role(&self) -> KeyRole {
        match self {
            KeyFile::Public(_) => KeyRole::Public,
            KeyFile::Secret(_) => KeyRole::Secret,
            KeyFile::Share(s) => match s.index() {
                ShareIndex::First => KeyRole::Share1,
                ShareIndex::Second => KeyRole::Share2,
            },
        }
    }

    pub fn public_key(&self) -> &PublicKey {
        match self {
            KeyFile::Public(pk) => pk,
            KeyFile::Secret(sk) => sk.public_key(),
            KeyFile::Share(s) => s.public_key(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&KEY_MAGIC);
        out.extend_from_slice(&KEY_VERSION.to_be_bytes());
        out.push(self.role() as u8);
        let fields: Vec<&Integer> = match self {
            KeyFile::Public(pk) => vec![pk.modulus()],
            KeyFile::Secret(sk) => {
                let (p, q) = sk.primes();
                vec![sk.public_key().modulus(), p, q, sk.lambda(), sk.mu()]
            }
            KeyFile::Share(s) => vec![s.public_key().modulus(), s.exponent()],
        };
        for f in fields {
            let digits = f.to_digits::<u8>(Order::Msf);
            out.extend_from_slice(&(digits.len() as u32).to_be_bytes());
            out.extend_from_slice(&digits);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 7 || bytes[..4] != KEY_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u16::from_be_bytes([bytes[4], bytes[5]]);
        if version != KEY_VERSION {
            return Err(bad(format!("unsupported key file version {version}")));
        }
        let role = KeyRole::from_u8(bytes[6]).ok_or_else(|| bad(format!("unknown role byte {}", bytes[6])))?;
        let mut rest = &bytes[7..];
        let mut fields = Vec::new();
        while !rest.is_empty() {
            if rest.len() < 4 {
                return Err(bad("truncated field length"));
            }
            let len = u32::from_be_bytes(rest[..4].try_into().unwrap()) as usize;
            rest = &rest[4..];
            if rest.len() < len {
                return Err(bad("truncated field"));
            }
            fields.push(Integer::from_digits(&rest[..len], Order::Msf));
            rest = &rest[len..];
        }
        let expect = |n: usize| {
            if fields.len() == n {
                Ok(())
            } else {
                Err(bad(format!("expected {n} fields for {role:?}, found {}", fields.len())))
            }
        };
        match role {
            KeyRole::Public => {
                expect(1)?;
                Ok(KeyFile::Public(PublicKey::from_modulus(fields.swap_remove(0))?))
            }
            KeyRole::Secret => {
                expect(5)?;
                let mut it = fields.into_iter();
                let (n, p, q, lambda, mu) =
                    (it.next().unwrap(), it.next().unwrap(), it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
                let sk = SecretKey::from_primes(p, q)?;
                if *sk.public_key().modulus() != n || *sk.lambda() != lambda || *sk.mu() != mu {
                    return Err(bad("secret key fields are inconsistent"));
                }
                Ok(KeyFile::Secret(sk))
            }
            KeyRole::Share1 | KeyRole::Share2 => {
                expect(2)?;
                let exponent = fields.pop().unwrap();
                let pk = PublicKey::from_modulus(fields.pop().unwrap())?;
                let index = if role == KeyRole::Share1 { ShareIndex::First } else { ShareIndex::Second };
                Ok(KeyFile::Share(KeyShare::new(index, exponent, pk)?))
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        fs::write(path, self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let bytes = fs::read(path)?;
        KeyFile::from_bytes(&bytes).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}
