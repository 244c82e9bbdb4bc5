//! ASCII header tokenizer shared by the PFM and PNM readers.

use std::str::FromStr;

use crate::error::{Error, Result};

pub(crate) struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    /// Next whitespace-delimited token.
    pub fn token(&mut self) -> Result<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format {
                offset: self.pos,
                message: "truncated header".into(),
            });
        }
        Ok(&self.bytes[start..self.pos])
    }

    pub fn parse_field<T: FromStr>(&mut self, name: &str) -> Result<T> {
        let tok = self.token()?;
        let at = self.pos - tok.len();
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format {
                offset: at,
                message: format!(
                    "could not parse {name} from {:?}",
                    String::from_utf8_lossy(tok)
                ),
            })
    }

    pub fn usize_field(&mut self, name: &str) -> Result<usize> {
        self.parse_field(name)
    }

    /// Consume the single whitespace byte that separates header and payload.
    pub fn single_whitespace(&mut self) -> Result<()> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(())
            }
            Some(_) => Err(Error::Format {
                offset: self.pos,
                message: "expected whitespace after header".into(),
            }),
            None => Err(Error::Format {
                offset: self.pos,
                message: "truncated header".into(),
            }),
        }
    }
}
