use std::fmt;

use serde::{Deserialize, Serialize};

use super::DocTagsError;

/// Highest location bin. The grid has `MAX_LOC + 1` distinct tokens.
pub const MAX_LOC: u16 = 500;

/// Layout tags understood by the parser.
///
/// The first twelve variants are the core DocTags layout vocabulary; the rest
/// extend it so every detector class has a same-named tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutTag {
    PageHeader,
    SectionHeader,
    UnorderedList,
    OrderedList,
    ListItem,
    Text,
    Otsl,
    Picture,
    PageBreak,
    Formula,
    Code,
    PageFooter,
    Caption,
    Footnote,
    Title,
    DocumentIndex,
    CheckboxSelected,
    CheckboxUnselected,
    Form,
    KeyValueRegion,
}

impl LayoutTag {
    pub const ALL: [LayoutTag; 20] = [
        LayoutTag::PageHeader,
        LayoutTag::SectionHeader,
        LayoutTag::UnorderedList,
        LayoutTag::OrderedList,
        LayoutTag::ListItem,
        LayoutTag::Text,
        LayoutTag::Otsl,
        LayoutTag::Picture,
        LayoutTag::PageBreak,
        LayoutTag::Formula,
        LayoutTag::Code,
        LayoutTag::PageFooter,
        LayoutTag::Caption,
        LayoutTag::Footnote,
        LayoutTag::Title,
        LayoutTag::DocumentIndex,
        LayoutTag::CheckboxSelected,
        LayoutTag::CheckboxUnselected,
        LayoutTag::Form,
        LayoutTag::KeyValueRegion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayoutTag::PageHeader => "page_header",
            LayoutTag::SectionHeader => "section_header",
            LayoutTag::UnorderedList => "unordered_list",
            LayoutTag::OrderedList => "ordered_list",
            LayoutTag::ListItem => "list_item",
            LayoutTag::Text => "text",
            LayoutTag::Otsl => "otsl",
            LayoutTag::Picture => "picture",
            LayoutTag::PageBreak => "page_break",
            LayoutTag::Formula => "formula",
            LayoutTag::Code => "code",
            LayoutTag::PageFooter => "page_footer",
            LayoutTag::Caption => "caption",
            LayoutTag::Footnote => "footnote",
            LayoutTag::Title => "title",
            LayoutTag::DocumentIndex => "document_index",
            LayoutTag::CheckboxSelected => "checkbox_selected",
            LayoutTag::CheckboxUnselected => "checkbox_unselected",
            LayoutTag::Form => "form",
            LayoutTag::KeyValueRegion => "key_value_region",
        }
    }

    pub fn from_name(name: &str) -> Option<LayoutTag> {
        LayoutTag::ALL.iter().copied().find(|t| t.name() == name)
    }
}

impl fmt::Display for LayoutTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Non-layout markup: the prior wrapper and the table cell grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControlTag {
    Layout,
    /// Filled cell, followed by its text.
    Fcel,
    /// Empty cell.
    Ecel,
    /// Merged into the cell on the left.
    Lcel,
    /// Merged into the cell above.
    Ucel,
    /// Row break.
    Nl,
}

impl ControlTag {
    pub const ALL: [ControlTag; 6] = [
        ControlTag::Layout,
        ControlTag::Fcel,
        ControlTag::Ecel,
        ControlTag::Lcel,
        ControlTag::Ucel,
        ControlTag::Nl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControlTag::Layout => "layout",
            ControlTag::Fcel => "fcel",
            ControlTag::Ecel => "ecel",
            ControlTag::Lcel => "lcel",
            ControlTag::Ucel => "ucel",
            ControlTag::Nl => "nl",
        }
    }

    pub fn from_name(name: &str) -> Option<ControlTag> {
        ControlTag::ALL.iter().copied().find(|t| t.name() == name)
    }

    /// Cell tokens only appear inside `<otsl>` and have no closing form.
    pub fn is_cell_token(self) -> bool {
        !matches!(self, ControlTag::Layout)
    }
}

/// A quantized coordinate bin in `0..=500`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub struct LocToken(u16);

impl LocToken {
    pub fn new(value: u16) -> Result<Self, DocTagsError> {
        if value > MAX_LOC {
            return Err(DocTagsError::LocOutOfRange {
                value: u64::from(value),
                offset: 0,
            });
        }
        Ok(LocToken(value))
    }

    /// Clamps into range instead of failing.
    pub fn saturating(value: i64) -> Self {
        LocToken(value.clamp(0, i64::from(MAX_LOC)) as u16)
    }

    pub fn value(self) -> u16 {
        self.0
    }
}

impl TryFrom<u16> for LocToken {
    type Error = DocTagsError;
    fn try_from(value: u16) -> Result<Self, Self::Error> {
        LocToken::new(value)
    }
}

impl From<LocToken> for u16 {
    fn from(l: LocToken) -> u16 {
        l.0
    }
}

impl fmt::Display for LocToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<loc_{}>", self.0)
    }
}

/// Box on the location grid, `(x_min, y_min, x_max, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Locs {
    pub x_min: LocToken,
    pub y_min: LocToken,
    pub x_max: LocToken,
    pub y_max: LocToken,
}

impl Locs {
    pub fn new(x_min: u16, y_min: u16, x_max: u16, y_max: u16) -> Result<Self, DocTagsError> {
        let locs = Locs {
            x_min: LocToken::new(x_min)?,
            y_min: LocToken::new(y_min)?,
            x_max: LocToken::new(x_max)?,
            y_max: LocToken::new(y_max)?,
        };
        if x_min > x_max || y_min > y_max {
            return Err(DocTagsError::InvalidBox { offset: 0 });
        }
        Ok(locs)
    }

    pub fn to_array(self) -> [u16; 4] {
        [
            self.x_min.value(),
            self.y_min.value(),
            self.x_max.value(),
            self.y_max.value(),
        ]
    }

    /// Intersection over union treating the bins as continuous coordinates.
    /// Identical boxes score 1 even when degenerate.
    pub fn iou(&self, other: &Locs) -> f64 {
        if self == other {
            return 1.0;
        }
        let [ax0, ay0, ax1, ay1] = self.to_array().map(f64::from);
        let [bx0, by0, bx1, by1] = other.to_array().map(f64::from);
        let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
        let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
        let inter = iw * ih;
        let union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

impl fmt::Display for Locs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}{}", self.x_min, self.y_min, self.x_max, self.y_max)
    }
}

/// Coarse token category used by the loss mask and attention analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenClass {
    LayoutTag,
    Loc,
    Content,
    Control,
}

/// Parses the digits of `<loc_N>` in canonical form (no sign, no leading zeros).
pub(crate) fn parse_loc_digits(digits: &str) -> Option<u64> {
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if digits.len() > 1 && digits.starts_with('0') {
        return None;
    }
    digits.parse().ok()
}

/// Total over strings; `Loc` exactly for `<loc_0>` .. `<loc_500>`.
pub fn classify_token(token: &str) -> TokenClass {
    let Some(inner) = token.strip_prefix('<').and_then(|t| t.strip_suffix('>')) else {
        return TokenClass::Content;
    };
    if let Some(digits) = inner.strip_prefix("loc_") {
        return match parse_loc_digits(digits) {
            Some(v) if v <= u64::from(MAX_LOC) => TokenClass::Loc,
            _ => TokenClass::Content,
        };
    }
    let (closing, name) = match inner.strip_prefix('/') {
        Some(n) => (true, n),
        None => (false, inner),
    };
    if LayoutTag::from_name(name).is_some() {
        return TokenClass::LayoutTag;
    }
    match ControlTag::from_name(name) {
        Some(c) if !closing || !c.is_cell_token() => TokenClass::Control,
        _ => TokenClass::Content,
    }
}
