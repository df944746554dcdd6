//! DocTags markup: vocabulary, lossless parsing and serialization.
//!
//! A document is a sequence of layout elements of the form
//! `<tag>[<loc_x0><loc_y0><loc_x1><loc_y1>]content</tag>`. Elements may nest
//! (lists, pictures with captions); `<otsl>` bodies hold the table cell
//! grammar (`<fcel>`, `<ecel>`, `<lcel>`, `<ucel>`, `<nl>`) verbatim.
//!
//! Whitespace between sibling elements is kept so that
//! `parse(s)?.to_string() == s` for every accepted `s`.

mod lexer;
mod vocab;

use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

pub use lexer::tokenize;
pub use vocab::{classify_token, ControlTag, LayoutTag, LocToken, Locs, TokenClass, MAX_LOC};

use lexer::{Lexeme, Lexer, Markup, Spanned};

/// Nesting deeper than this is rejected rather than recursed into.
pub const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DocTagsError {
    #[error("unknown tag `{name}` at byte {offset}")]
    UnknownTag { name: String, offset: usize },
    #[error("malformed location token `{text}` at byte {offset}")]
    MalformedLoc { text: String, offset: usize },
    #[error("unbalanced tag `{name}` at byte {offset}")]
    UnbalancedTag { name: String, offset: usize },
    #[error("location value {value} out of range 0..=500 at byte {offset}")]
    LocOutOfRange { value: u64, offset: usize },
    #[error("unterminated tag at byte {offset}")]
    UnterminatedTag { offset: usize },
    #[error("unexpected `{token}` at byte {offset}")]
    UnexpectedToken { token: String, offset: usize },
    #[error("text outside of an element at byte {offset}")]
    UnexpectedText { offset: usize },
    #[error("element mixes text and child elements at byte {offset}")]
    MixedContent { offset: usize },
    #[error("location box has min greater than max at byte {offset}")]
    InvalidBox { offset: usize },
    #[error("nesting deeper than {MAX_DEPTH} at byte {offset}")]
    TooDeep { offset: usize },
}

/// One layout element.
///
/// An element carries either text `content` or `children`, never both.
/// For `<otsl>` the content is the raw cell-token body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocElement {
    pub tag: LayoutTag,
    pub locs: Option<Locs>,
    pub content: String,
    pub children: Vec<DocElement>,
    gaps: Vec<String>,
}

impl DocElement {
    pub fn new(tag: LayoutTag) -> Self {
        DocElement {
            tag,
            locs: None,
            content: String::new(),
            children: Vec::new(),
            gaps: Vec::new(),
        }
    }

    pub fn with_locs(mut self, locs: Locs) -> Self {
        self.locs = Some(locs);
        self
    }

    pub fn with_content(mut self, content: impl Into<String>) -> Self {
        self.content = content.into();
        self
    }

    pub fn with_children(mut self, children: Vec<DocElement>) -> Self {
        self.children = children;
        self.gaps.clear();
        self
    }

    /// Number of vocabulary tokens this element serializes to.
    pub fn token_count(&self) -> usize {
        let own = 2 + if self.locs.is_some() { 4 } else { 0 };
        let content = if self.tag == LayoutTag::Otsl {
            count_lexemes(&self.content)
        } else {
            self.content.split_whitespace().count()
        };
        own + content + self.children.iter().map(DocElement::token_count).sum::<usize>()
    }

    /// Checks the structural invariants that `parse` would enforce.
    pub fn validate(&self) -> Result<(), DocTagsError> {
        if !self.children.is_empty() && !self.content.is_empty() {
            return Err(DocTagsError::MixedContent { offset: 0 });
        }
        if let Some(l) = self.locs {
            if l.x_min > l.x_max || l.y_min > l.y_max {
                return Err(DocTagsError::InvalidBox { offset: 0 });
            }
        }
        if self.tag == LayoutTag::Otsl {
            for item in Lexer::new(&self.content) {
                match item?.lexeme {
                    Lexeme::Text(_) => {}
                    Lexeme::Open(Markup::Control(c)) if c.is_cell_token() => {}
                    _ => {
                        return Err(DocTagsError::UnexpectedToken {
                            token: self.content.clone(),
                            offset: 0,
                        })
                    }
                }
            }
        } else if self.content.contains('<') {
            return Err(DocTagsError::UnexpectedText { offset: 0 });
        }
        self.children.iter().try_for_each(DocElement::validate)
    }

    /// Depth-first iterator over this element and its descendants.
    pub fn walk(&self) -> impl Iterator<Item = &DocElement> {
        let mut stack = vec![self];
        std::iter::from_fn(move || {
            let next = stack.pop()?;
            stack.extend(next.children.iter().rev());
            Some(next)
        })
    }

    fn write_to(&self, out: &mut String) {
        let _ = write!(out, "<{}>", self.tag);
        if let Some(l) = self.locs {
            let _ = write!(out, "{l}");
        }
        out.push_str(&self.content);
        write_sequence(out, &self.children, &self.gaps, "");
        let _ = write!(out, "</{}>", self.tag);
    }
}

/// A parsed DocTags document.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DocTagsDoc {
    pub elements: Vec<DocElement>,
    gaps: Vec<String>,
}

/// Separator used between top-level elements when none was parsed.
pub const ELEMENT_SEPARATOR: &str = "\n";

impl DocTagsDoc {
    pub fn new(elements: Vec<DocElement>) -> Self {
        DocTagsDoc {
            elements,
            gaps: Vec::new(),
        }
    }

    pub fn parse(input: &str) -> Result<Self, DocTagsError> {
        let lexemes = Lexer::new(input).collect::<Result<Vec<_>, _>>()?;
        let mut parser = Parser {
            src: input,
            lexemes: &lexemes,
            pos: 0,
        };
        let (elements, gaps) = parser.sequence(None, 0)?;
        let gaps = canonical_or(gaps, elements.len(), ELEMENT_SEPARATOR);
        Ok(DocTagsDoc { elements, gaps })
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        write_sequence(&mut out, &self.elements, &self.gaps, ELEMENT_SEPARATOR);
        out
    }

    /// Vocabulary token count of the serialized form (see [`count_tokens`]).
    pub fn token_count(&self) -> usize {
        self.elements.iter().map(DocElement::token_count).sum()
    }

    pub fn validate(&self) -> Result<(), DocTagsError> {
        self.elements.iter().try_for_each(DocElement::validate)
    }

    /// All elements in document order, descending into children.
    pub fn walk(&self) -> impl Iterator<Item = &DocElement> {
        self.elements.iter().flat_map(DocElement::walk)
    }
}

impl fmt::Display for DocTagsDoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

impl FromStr for DocTagsDoc {
    type Err = DocTagsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DocTagsDoc::parse(s)
    }
}

pub fn parse(input: &str) -> Result<DocTagsDoc, DocTagsError> {
    DocTagsDoc::parse(input)
}

pub fn serialize(doc: &DocTagsDoc) -> String {
    doc.serialize()
}

/// Counts vocabulary tokens in a fragment.
///
/// Every layout open/close tag, location token and control token counts as
/// one; text counts one per whitespace-delimited word. A fragment may be
/// wrapped in a single `<layout>` ... `</layout>` block, which adds two.
pub fn count_tokens(fragment: &str) -> Result<usize, DocTagsError> {
    let lexemes = Lexer::new(fragment).collect::<Result<Vec<_>, _>>()?;
    let significant = |s: &&Spanned| !matches!(s.lexeme, Lexeme::Text(t) if t.trim().is_empty());
    let first = lexemes.iter().find(significant);
    let last = lexemes.iter().rev().find(significant);
    if let (Some(first), Some(last)) = (first, last) {
        let layout = Markup::Control(ControlTag::Layout);
        if first.lexeme == Lexeme::Open(layout) && last.lexeme == Lexeme::Close(layout) && first.start != last.start
        {
            let inner = &fragment[first.end..last.start];
            return DocTagsDoc::parse(inner)
                .map(|d| d.token_count() + 2)
                .map_err(|e| shift_offset(e, first.end));
        }
    }
    DocTagsDoc::parse(fragment).map(|d| d.token_count())
}

fn shift_offset(err: DocTagsError, by: usize) -> DocTagsError {
    use DocTagsError::*;
    match err {
        UnknownTag { name, offset } => UnknownTag { name, offset: offset + by },
        MalformedLoc { text, offset } => MalformedLoc { text, offset: offset + by },
        UnbalancedTag { name, offset } => UnbalancedTag { name, offset: offset + by },
        LocOutOfRange { value, offset } => LocOutOfRange { value, offset: offset + by },
        UnterminatedTag { offset } => UnterminatedTag { offset: offset + by },
        UnexpectedToken { token, offset } => UnexpectedToken { token, offset: offset + by },
        UnexpectedText { offset } => UnexpectedText { offset: offset + by },
        MixedContent { offset } => MixedContent { offset: offset + by },
        InvalidBox { offset } => InvalidBox { offset: offset + by },
        TooDeep { offset } => TooDeep { offset: offset + by },
    }
}

fn count_lexemes(body: &str) -> usize {
    Lexer::new(body)
        .map(|item| match item {
            Ok(Spanned {
                lexeme: Lexeme::Text(t),
                ..
            }) => t.split_whitespace().count(),
            _ => 1,
        })
        .sum()
}

fn canonical_gap(i: usize, n: usize, sep: &str) -> &str {
    if i == 0 || i == n {
        ""
    } else {
        sep
    }
}

/// Drops the gap list when it equals the canonical spacing.
fn canonical_or(gaps: Vec<String>, n: usize, sep: &str) -> Vec<String> {
    let canonical = gaps
        .iter()
        .enumerate()
        .all(|(i, g)| g == canonical_gap(i, n, sep));
    if canonical {
        Vec::new()
    } else {
        gaps
    }
}

fn write_sequence(out: &mut String, items: &[DocElement], gaps: &[String], sep: &str) {
    let n = items.len();
    let gap = |i: usize| gaps.get(i).map_or(canonical_gap(i, n, sep), String::as_str);
    for (i, item) in items.iter().enumerate() {
        out.push_str(gap(i));
        item.write_to(out);
    }
    out.push_str(gap(n));
}

struct Parser<'s, 'l> {
    src: &'s str,
    lexemes: &'l [Spanned<'s>],
    pos: usize,
}

impl<'s> Parser<'s, '_> {
    fn peek(&self) -> Option<Spanned<'s>> {
        self.lexemes.get(self.pos).copied()
    }

    fn unexpected(&self, s: Spanned<'s>) -> DocTagsError {
        DocTagsError::UnexpectedToken {
            token: self.src[s.start..s.end].to_string(),
            offset: s.start,
        }
    }

    /// Parses sibling elements until `closing` (or end of input at top level).
    /// Returns the elements and the whitespace gaps around them, or, if there
    /// are no elements, the single text run as the only gap.
    fn sequence(
        &mut self,
        closing: Option<(LayoutTag, usize)>,
        depth: usize,
    ) -> Result<(Vec<DocElement>, Vec<String>), DocTagsError> {
        let mut elements = Vec::new();
        let mut gaps = vec![String::new()];
        let mut first_text: Option<usize> = None;
        loop {
            let Some(tok) = self.peek() else {
                return match closing {
                    None => Ok((elements, gaps)),
                    Some((tag, offset)) => Err(DocTagsError::UnbalancedTag {
                        name: tag.name().to_string(),
                        offset,
                    }),
                };
            };
            match tok.lexeme {
                Lexeme::Text(t) => {
                    if closing.is_none() && !t.trim().is_empty() {
                        return Err(DocTagsError::UnexpectedText { offset: tok.start });
                    }
                    first_text.get_or_insert(tok.start);
                    gaps.last_mut().expect("gap slot").push_str(t);
                    self.pos += 1;
                }
                Lexeme::Open(Markup::Layout(tag)) => {
                    if depth >= MAX_DEPTH {
                        return Err(DocTagsError::TooDeep { offset: tok.start });
                    }
                    self.pos += 1;
                    elements.push(self.element(tag, tok.start, depth + 1)?);
                    gaps.push(String::new());
                }
                Lexeme::Close(Markup::Layout(tag)) => match closing {
                    Some((open, _)) if open == tag => {
                        self.pos += 1;
                        if !elements.is_empty() && gaps.iter().any(|g| !g.trim().is_empty()) {
                            return Err(DocTagsError::MixedContent {
                                offset: first_text.unwrap_or(tok.start),
                            });
                        }
                        return Ok((elements, gaps));
                    }
                    _ => {
                        return Err(DocTagsError::UnbalancedTag {
                            name: tag.name().to_string(),
                            offset: tok.start,
                        })
                    }
                },
                _ => return Err(self.unexpected(tok)),
            }
        }
    }

    fn element(&mut self, tag: LayoutTag, open: usize, depth: usize) -> Result<DocElement, DocTagsError> {
        let mut values = Vec::with_capacity(4);
        let mut loc_start = None;
        while let Some(Spanned {
            lexeme: Lexeme::Loc(v),
            start,
            ..
        }) = self.peek()
        {
            loc_start.get_or_insert(start);
            values.push(v);
            self.pos += 1;
            if values.len() == 4 {
                break;
            }
        }
        let locs = match values.len() {
            0 => None,
            4 => {
                let offset = loc_start.unwrap_or(open);
                if values[0] > values[2] || values[1] > values[3] {
                    return Err(DocTagsError::InvalidBox { offset });
                }
                Some(Locs::new(values[0], values[1], values[2], values[3])?)
            }
            _ => {
                let start = loc_start.unwrap_or(open);
                let end = self.lexemes[self.pos - 1].end;
                return Err(DocTagsError::MalformedLoc {
                    text: self.src[start..end].to_string(),
                    offset: start,
                });
            }
        };

        let mut element = DocElement::new(tag);
        element.locs = locs;
        if tag == LayoutTag::Otsl {
            element.content = self.otsl_body(open)?;
            return Ok(element);
        }
        let (children, mut gaps) = self.sequence(Some((tag, open)), depth)?;
        if children.is_empty() {
            element.content = gaps.pop().unwrap_or_default();
        } else {
            element.gaps = canonical_or(gaps, children.len(), "");
            element.children = children;
        }
        Ok(element)
    }

    fn otsl_body(&mut self, open: usize) -> Result<String, DocTagsError> {
        let body_start = self.peek().map_or(self.src.len(), |s| s.start);
        loop {
            let Some(tok) = self.peek() else {
                return Err(DocTagsError::UnbalancedTag {
                    name: LayoutTag::Otsl.name().to_string(),
                    offset: open,
                });
            };
            self.pos += 1;
            match tok.lexeme {
                Lexeme::Text(_) => {}
                Lexeme::Open(Markup::Control(c)) if c.is_cell_token() => {}
                Lexeme::Close(Markup::Layout(LayoutTag::Otsl)) => {
                    return Ok(self.src[body_start..tok.start].to_string());
                }
                Lexeme::Close(Markup::Layout(t)) => {
                    return Err(DocTagsError::UnbalancedTag {
                        name: t.name().to_string(),
                        offset: tok.start,
                    })
                }
                _ => return Err(self.unexpected(tok)),
            }
        }
    }
}
