//! Tolerant JSON decoder for shell-style query fragments.
//!
//! Accepts unquoted and `$`-prefixed keys, single- or double-quoted strings,
//! trailing commas, `//` and `/* */` comments, and a missing colon between a
//! key and an immediately following object (`{$project {_id:0}}`).

use crate::value::{DocValue, Document, MAX_SAFE_INT};

use super::QueryError;

/// Decode a single tolerant JSON fragment; the whole input must be consumed.
pub fn loose_json_decode(text: &str) -> Result<DocValue, QueryError> {
    let mut reader = LooseReader::new(text);
    reader.skip_ws()?;
    if reader.at_end() {
        return Err(reader.malformed("empty input"));
    }
    let value = reader.value()?;
    reader.skip_ws()?;
    if !reader.at_end() {
        return Err(reader.malformed("unexpected trailing characters"));
    }
    Ok(value)
}

pub(crate) struct LooseReader<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> LooseReader<'a> {
    pub(crate) fn new(text: &'a str) -> Self {
        Self {
            src: text.as_bytes(),
            pos: 0,
        }
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    pub(crate) fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    pub(crate) fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    pub(crate) fn malformed(&self, message: impl Into<String>) -> QueryError {
        self.malformed_at(self.pos, message)
    }

    fn malformed_at(&self, position: usize, message: impl Into<String>) -> QueryError {
        QueryError::MalformedFragment {
            position,
            message: message.into(),
        }
    }

    pub(crate) fn skip_ws(&mut self) -> Result<(), QueryError> {
        loop {
            match self.peek() {
                Some(b' ' | b'\t' | b'\n' | b'\r') => self.pos += 1,
                Some(b'/') if self.src.get(self.pos + 1) == Some(&b'/') => {
                    while let Some(c) = self.peek() {
                        self.pos += 1;
                        if c == b'\n' {
                            break;
                        }
                    }
                }
                Some(b'/') if self.src.get(self.pos + 1) == Some(&b'*') => {
                    let start = self.pos;
                    self.pos += 2;
                    loop {
                        match self.peek() {
                            None => return Err(self.malformed_at(start, "unterminated comment")),
                            Some(b'*') if self.src.get(self.pos + 1) == Some(&b'/') => {
                                self.pos += 2;
                                break;
                            }
                            Some(_) => self.pos += 1,
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    /// Consume `byte` if it is next (after whitespace).
    pub(crate) fn eat(&mut self, byte: u8) -> Result<bool, QueryError> {
        self.skip_ws()?;
        if self.peek() == Some(byte) {
            self.pos += 1;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    pub(crate) fn identifier(&mut self) -> Option<String> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        (self.pos > start).then(|| String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    pub(crate) fn value(&mut self) -> Result<DocValue, QueryError> {
        self.skip_ws()?;
        match self.peek() {
            None => Err(self.malformed("unexpected end of input, expected a value")),
            Some(b'{') => self.object(),
            Some(b'[') => self.array(),
            Some(q @ (b'"' | b'\'')) => self.string(q).map(DocValue::Str),
            Some(c) if c == b'-' || c == b'+' || c == b'.' || c.is_ascii_digit() => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                let word = self.bare_word();
                match word.as_str() {
                    "true" => Ok(DocValue::Bool(true)),
                    "false" => Ok(DocValue::Bool(false)),
                    "null" | "undefined" => Ok(DocValue::Null),
                    _ => Err(self.malformed_at(start, format!("unexpected bare word `{word}`"))),
                }
            }
            Some(c) => Err(self.malformed(format!("unexpected character `{}`", c as char))),
        }
    }

    fn bare_word(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || matches!(c, b'_' | b'$' | b'.') || c >= 0x80 {
                self.pos += 1;
            } else {
                break;
            }
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn object(&mut self) -> Result<DocValue, QueryError> {
        let open = self.pos;
        self.pos += 1;
        let mut map = Document::new();
        loop {
            self.skip_ws()?;
            match self.peek() {
                None => return Err(self.malformed_at(open, "unterminated object")),
                Some(b'}') => {
                    self.pos += 1;
                    return Ok(DocValue::Obj(map));
                }
                _ => {}
            }
            let key = self.key()?;
            self.skip_ws()?;
            match self.peek() {
                Some(b':') => self.pos += 1,
                // tolerated: `{$project {_id: 0}}`
                Some(b'{') => {}
                _ => return Err(self.malformed(format!("expected `:` after key `{key}`"))),
            }
            let value = self.value()?;
            map.insert(key, value);
            self.skip_ws()?;
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b'}') => {}
                None => return Err(self.malformed_at(open, "unterminated object")),
                Some(c) => return Err(self.malformed(format!("expected `,` or `}}`, found `{}`", c as char))),
            }
        }
    }

    fn key(&mut self) -> Result<String, QueryError> {
        match self.peek() {
            Some(q @ (b'"' | b'\'')) => self.string(q),
            Some(c) if c.is_ascii_alphanumeric() || matches!(c, b'_' | b'$' | b'.') || c >= 0x80 => {
                Ok(self.bare_word())
            }
            Some(c) => Err(self.malformed(format!("expected an object key, found `{}`", c as char))),
            None => Err(self.malformed("expected an object key")),
        }
    }

    fn array(&mut self) -> Result<DocValue, QueryError> {
        let open = self.pos;
        self.pos += 1;
        let mut items = Vec::new();
        loop {
            self.skip_ws()?;
            match self.peek() {
                None => return Err(self.malformed_at(open, "unterminated array")),
                Some(b']') => {
                    self.pos += 1;
                    return Ok(DocValue::Array(items));
                }
                _ => {}
            }
            items.push(self.value()?);
            self.skip_ws()?;
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b']') => {}
                None => return Err(self.malformed_at(open, "unterminated array")),
                Some(c) => return Err(self.malformed(format!("expected `,` or `]`, found `{}`", c as char))),
            }
        }
    }

    fn string(&mut self, quote: u8) -> Result<String, QueryError> {
        let open = self.pos;
        self.pos += 1;
        let mut buf: Vec<u8> = Vec::new();
        loop {
            let Some(c) = self.peek() else {
                return Err(self.malformed_at(open, "unterminated string"));
            };
            self.pos += 1;
            if c == quote {
                break;
            }
            if c != b'\\' {
                buf.push(c);
                continue;
            }
            let Some(esc) = self.peek() else {
                return Err(self.malformed_at(open, "unterminated string"));
            };
            self.pos += 1;
            match esc {
                b'n' => buf.push(b'\n'),
                b't' => buf.push(b'\t'),
                b'r' => buf.push(b'\r'),
                b'b' => buf.push(0x08),
                b'f' => buf.push(0x0c),
                b'u' => {
                    let ch = self.unicode_escape()?;
                    let mut tmp = [0u8; 4];
                    buf.extend_from_slice(ch.encode_utf8(&mut tmp).as_bytes());
                }
                other => buf.push(other),
            }
        }
        String::from_utf8(buf).map_err(|_| self.malformed_at(open, "invalid UTF-8 in string"))
    }

    fn hex4(&mut self) -> Result<u32, QueryError> {
        let start = self.pos;
        let digits = self
            .src
            .get(start..start + 4)
            .and_then(|d| std::str::from_utf8(d).ok())
            .and_then(|d| u32::from_str_radix(d, 16).ok())
            .ok_or_else(|| self.malformed_at(start, "invalid \\u escape"))?;
        self.pos += 4;
        Ok(digits)
    }

    fn unicode_escape(&mut self) -> Result<char, QueryError> {
        let start = self.pos;
        let hi = self.hex4()?;
        if (0xD800..0xDC00).contains(&hi) && self.src.get(self.pos..self.pos + 2) == Some(b"\\u") {
            self.pos += 2;
            let lo = self.hex4()?;
            let code = 0x10000 + ((hi - 0xD800) << 10) + (lo.wrapping_sub(0xDC00) & 0x3FF);
            return char::from_u32(code).ok_or_else(|| self.malformed_at(start, "invalid surrogate pair"));
        }
        char::from_u32(hi).ok_or_else(|| self.malformed_at(start, "invalid \\u escape"))
    }

    fn number(&mut self) -> Result<DocValue, QueryError> {
        let start = self.pos;
        if matches!(self.peek(), Some(b'-' | b'+')) {
            self.pos += 1;
        }
        let mut integral = true;
        let mut digits = 0;
        while let Some(c) = self.peek() {
            match c {
                b'0'..=b'9' => {
                    digits += 1;
                    self.pos += 1;
                }
                b'.' => {
                    integral = false;
                    self.pos += 1;
                }
                b'e' | b'E' => {
                    integral = false;
                    self.pos += 1;
                    if matches!(self.peek(), Some(b'-' | b'+')) {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        if digits == 0 {
            return Err(self.malformed_at(start, format!("invalid number `{text}`")));
        }
        let text = text.strip_prefix('+').unwrap_or(text);
        if integral {
            if let Ok(i) = text.parse::<i64>() {
                if i.abs() <= MAX_SAFE_INT {
                    return Ok(DocValue::Int(i));
                }
            }
        }
        text.parse::<f64>()
            .map(DocValue::Float)
            .map_err(|_| self.malformed_at(start, format!("invalid number `{text}`")))
    }
}
