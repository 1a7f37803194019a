//! Line-oriented `[section arg]` / `key = value` text shared by tag definitions
//! and scenario files. `#` starts a comment. Lines without `=` are kept whole
//! as keys with an empty value.

use crate::error::DefError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
    /// 1-based column where the value starts.
    pub column: usize,
}

impl Entry {
    pub fn err(&self, message: impl Into<String>) -> DefError {
        DefError::at(self.line, self.column, message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub kind: String,
    pub arg: Option<String>,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn err(&self, message: impl Into<String>) -> DefError {
        DefError::at(self.line, 1, message)
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.entries.iter().filter(move |e| e.key == key)
    }

    pub fn require(&self, key: &str) -> Result<&Entry, DefError> {
        self.get(key)
            .ok_or_else(|| self.err(format!("[{}] is missing key `{key}`", self.kind)))
    }

    /// Rejects keys outside `known`; keys are matched on their first word.
    pub fn check_keys(&self, known: &[&str]) -> Result<(), DefError> {
        for e in &self.entries {
            let word = e.key.split_whitespace().next().unwrap_or("");
            if !known.contains(&word) {
                return Err(DefError::at(e.line, 1, format!("unknown key `{}`", e.key)));
            }
        }
        Ok(())
    }
}

pub fn parse_sections(text: &str) -> Result<Vec<Section>, DefError> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = line.len() - line.trim_start().len();
        if let Some(rest) = trimmed.strip_prefix('[') {
            let inner = rest.strip_suffix(']').ok_or_else(|| {
                DefError::at(line_no, indent + trimmed.len(), "expected `]`")
            })?;
            let mut words = inner.trim().splitn(2, char::is_whitespace);
            let kind = words.next().unwrap_or("").to_string();
            if kind.is_empty() {
                return Err(DefError::at(line_no, indent + 2, "empty section name"));
            }
            let arg = words.next().map(|a| a.trim().to_string()).filter(|a| !a.is_empty());
            sections.push(Section {
                kind,
                arg,
                line: line_no,
                entries: Vec::new(),
            });
            continue;
        }
        let section = sections
            .last_mut()
            .ok_or_else(|| DefError::at(line_no, indent + 1, "entry before any [section]"))?;
        let entry = match line.find('=') {
            Some(eq) => {
                let key = line[..eq].trim();
                let value_raw = &line[eq + 1..];
                let value = value_raw.trim();
                if key.is_empty() {
                    return Err(DefError::at(line_no, indent + 1, "missing key before `=`"));
                }
                let column = eq + 2 + (value_raw.len() - value_raw.trim_start().len());
                Entry {
                    key: key.split_whitespace().collect::<Vec<_>>().join(" "),
                    value: value.to_string(),
                    line: line_no,
                    column,
                }
            }
            None => Entry {
                key: trimmed.split_whitespace().collect::<Vec<_>>().join(" "),
                value: String::new(),
                line: line_no,
                column: indent + 1,
            },
        };
        section.entries.push(entry);
    }
    Ok(sections)
}

pub fn parse_u64(e: &Entry, s: &str) -> Result<u64, DefError> {
    let s = s.trim();
    let parsed = if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u64::from_str_radix(&hex.replace('_', ""), 16)
    } else {
        s.replace('_', "").parse()
    };
    parsed.map_err(|_| e.err(format!("expected an unsigned integer, found `{s}`")))
}

pub fn parse_f64(e: &Entry, s: &str) -> Result<f64, DefError> {
    s.trim()
        .parse()
        .map_err(|_| e.err(format!("expected a number, found `{}`", s.trim())))
}

pub fn parse_bool(e: &Entry) -> Result<bool, DefError> {
    match e.value.as_str() {
        "true" | "yes" | "on" => Ok(true),
        "false" | "no" | "off" => Ok(false),
        v => Err(e.err(format!("expected true or false, found `{v}`"))),
    }
}

pub fn parse_hex_bytes(e: &Entry) -> Result<Vec<u8>, DefError> {
    let s: String = e.value.chars().filter(|c| !c.is_whitespace()).collect();
    let s = s.strip_prefix("0x").unwrap_or(&s);
    if s.len() % 2 != 0 {
        return Err(e.err("hex string has an odd number of digits"));
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).map_err(|_| e.err("invalid hex digit")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_entries() {
        let text = "# comment\n[tag]\nid = 0x2A\n\n[config 1]\n  slot A = every 4 from 0, tx # trailing\non wakeup 1 -> config 1\n";
        let s = parse_sections(text).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].kind, "tag");
        assert_eq!(s[1].arg.as_deref(), Some("1"));
        let slot = &s[1].entries[0];
        assert_eq!(slot.key, "slot A");
        assert_eq!(slot.value, "every 4 from 0, tx");
        assert_eq!((slot.line, slot.column), (6, 12));
        assert_eq!(s[1].entries[1].key, "on wakeup 1 -> config 1");
        assert_eq!(parse_u64(&s[0].entries[0], &s[0].entries[0].value).unwrap(), 42);
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse_sections("x = 1").unwrap_err();
        assert_eq!((e.line, e.column), (1, 1));
        let e = parse_sections("[tag\n").unwrap_err();
        assert_eq!(e.line, 1);
    }
}
