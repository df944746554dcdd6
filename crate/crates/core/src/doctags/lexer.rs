use super::vocab::{parse_loc_digits, ControlTag, LayoutTag, MAX_LOC};
use super::DocTagsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Markup {
    Layout(LayoutTag),
    Control(ControlTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Lexeme<'a> {
    Open(Markup),
    Close(Markup),
    Loc(u16),
    Text(&'a str),
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Spanned<'a> {
    pub lexeme: Lexeme<'a>,
    pub start: usize,
    pub end: usize,
}

pub(crate) struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    pub(crate) fn new(src: &'a str) -> Self {
        Lexer { src, pos: 0 }
    }

    fn markup(&self, start: usize, end: usize) -> Result<Lexeme<'a>, DocTagsError> {
        let inner = &self.src[start + 1..end - 1];
        if let Some(digits) = inner.strip_prefix("loc_") {
            let text = &self.src[start..end];
            let value = parse_loc_digits(digits).ok_or_else(|| DocTagsError::MalformedLoc {
                text: text.to_string(),
                offset: start,
            })?;
            if value > u64::from(MAX_LOC) {
                return Err(DocTagsError::LocOutOfRange {
                    value,
                    offset: start,
                });
            }
            return Ok(Lexeme::Loc(value as u16));
        }
        let (closing, name) = match inner.strip_prefix('/') {
            Some(n) => (true, n),
            None => (false, inner),
        };
        if name.starts_with("loc_") {
            return Err(DocTagsError::MalformedLoc {
                text: self.src[start..end].to_string(),
                offset: start,
            });
        }
        let markup = if let Some(t) = LayoutTag::from_name(name) {
            Markup::Layout(t)
        } else if let Some(c) = ControlTag::from_name(name) {
            if closing && c.is_cell_token() {
                return Err(DocTagsError::UnknownTag {
                    name: inner.to_string(),
                    offset: start,
                });
            }
            Markup::Control(c)
        } else {
            return Err(DocTagsError::UnknownTag {
                name: name.to_string(),
                offset: start,
            });
        };
        Ok(if closing {
            Lexeme::Close(markup)
        } else {
            Lexeme::Open(markup)
        })
    }
}

impl<'a> Iterator for Lexer<'a> {
    type Item = Result<Spanned<'a>, DocTagsError>;

    fn next(&mut self) -> Option<Self::Item> {
        let rest = &self.src[self.pos..];
        if rest.is_empty() {
            return None;
        }
        let start = self.pos;
        if rest.starts_with('<') {
            let Some(close) = rest.find('>') else {
                self.pos = self.src.len();
                return Some(Err(DocTagsError::UnterminatedTag { offset: start }));
            };
            let end = start + close + 1;
            self.pos = end;
            return Some(self.markup(start, end).map(|lexeme| Spanned { lexeme, start, end }));
        }
        let len = rest.find('<').unwrap_or(rest.len());
        self.pos += len;
        Some(Ok(Spanned {
            lexeme: Lexeme::Text(&rest[..len]),
            start,
            end: self.pos,
        }))
    }
}

/// Splits markup into vocabulary tokens; text runs become whitespace words.
pub fn tokenize(src: &str) -> Result<Vec<String>, DocTagsError> {
    let mut out = Vec::new();
    for item in Lexer::new(src) {
        let item = item?;
        match item.lexeme {
            Lexeme::Text(t) => out.extend(t.split_whitespace().map(str::to_string)),
            _ => out.push(src[item.start..item.end].to_string()),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_element() {
        let toks: Vec<_> = Lexer::new("<text><loc_1>hi</text>")
            .map(|r| r.unwrap().lexeme)
            .collect();
        assert_eq!(
            toks,
            [
                Lexeme::Open(Markup::Layout(LayoutTag::Text)),
                Lexeme::Loc(1),
                Lexeme::Text("hi"),
                Lexeme::Close(Markup::Layout(LayoutTag::Text)),
            ]
        );
    }

    #[test]
    fn lexer_errors() {
        let first_err = |s: &str| Lexer::new(s).find_map(|r| r.err()).unwrap();
        assert!(matches!(
            first_err("<text><loc_501>"),
            DocTagsError::LocOutOfRange { value: 501, .. }
        ));
        assert!(matches!(
            first_err("<loc_x>"),
            DocTagsError::MalformedLoc { .. }
        ));
        assert!(matches!(
            first_err("ab<bogus>"),
            DocTagsError::UnknownTag { offset: 2, .. }
        ));
        assert!(matches!(
            first_err("<text"),
            DocTagsError::UnterminatedTag { offset: 0 }
        ));
        assert!(matches!(
            first_err("</fcel>"),
            DocTagsError::UnknownTag { .. }
        ));
    }

    #[test]
    fn tokenize_splits_words() {
        let toks = tokenize("<text><loc_100><loc_200><loc_300><loc_400>hello world</text>").unwrap();
        assert_eq!(toks.len(), 8);
        assert_eq!(toks[5], "hello");
        assert_eq!(toks[7], "</text>");
    }
}
