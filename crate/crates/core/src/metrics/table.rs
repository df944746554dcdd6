//! OTSL table bodies as trees, and TEDS.
//!
//! Cell grammar, row-major: `<fcel>` text (filled), `<ecel>` (empty),
//! `<lcel>` (merged into the cell to the left), `<ucel>` (merged into the
//! cell above), `<nl>` (end of row). Merged cells extend the span of the
//! anchor cell they belong to and do not appear in the tree.

use serde::{Deserialize, Serialize};

use super::tree::{tree_edit_distance_by, Tree};
use super::MetricsError;
use crate::doctags::{tokenize, ControlTag, DocElement, LayoutTag};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TableNode {
    Table,
    Row,
    Cell {
        content: String,
        colspan: usize,
        rowspan: usize,
    },
    EmptyCell {
        colspan: usize,
        rowspan: usize,
    },
}

impl TableNode {
    fn spans(&self) -> Option<(usize, usize)> {
        match self {
            TableNode::Cell { colspan, rowspan, .. } | TableNode::EmptyCell { colspan, rowspan } => {
                Some((*colspan, *rowspan))
            }
            _ => None,
        }
    }

    /// Label equality ignoring cell text: cells compare by span only.
    pub fn same_structure(&self, other: &TableNode) -> bool {
        match (self.spans(), other.spans()) {
            (Some(a), Some(b)) => a == b,
            (None, None) => self == other,
            _ => false,
        }
    }
}

pub type TableTree = Tree<TableNode>;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Anchor(usize),
    Left,
    Up,
}

struct Anchor {
    row: usize,
    col: usize,
    content: Option<String>,
    last_row: usize,
    last_col: usize,
}

/// Builds the `table -> row -> cell` tree from an OTSL body.
pub fn otsl_body_to_tree(body: &str) -> Result<TableTree, MetricsError> {
    let malformed = |reason: String| MetricsError::MalformedOtsl(reason);
    let tokens = tokenize(body).map_err(|e| malformed(e.to_string()))?;

    let mut grid: Vec<Vec<Slot>> = vec![Vec::new()];
    let mut anchors: Vec<Anchor> = Vec::new();
    for tok in &tokens {
        let control = tok
            .strip_prefix('<')
            .and_then(|t| t.strip_suffix('>'))
            .and_then(ControlTag::from_name)
            .filter(|c| c.is_cell_token());
        let row = grid.len() - 1;
        let col = grid[row].len();
        match control {
            Some(ControlTag::Nl) => grid.push(Vec::new()),
            Some(ControlTag::Fcel) | Some(ControlTag::Ecel) => {
                let filled = control == Some(ControlTag::Fcel);
                anchors.push(Anchor {
                    row,
                    col,
                    content: filled.then(String::new),
                    last_row: row,
                    last_col: col,
                });
                grid[row].push(Slot::Anchor(anchors.len() - 1));
            }
            Some(ControlTag::Lcel) | Some(ControlTag::Ucel) => {
                let is_left = control == Some(ControlTag::Lcel);
                let neighbour = if is_left {
                    col.checked_sub(1).map(|c| grid[row][c])
                } else {
                    row.checked_sub(1).and_then(|r| grid[r].get(col).copied())
                };
                let anchor = neighbour
                    .map(|s| resolve(&grid, s, row, col, is_left))
                    .ok_or_else(|| {
                        malformed(format!(
                            "`{tok}` at row {row}, column {col} has no cell to merge into"
                        ))
                    })??;
                let a = &mut anchors[anchor];
                a.last_row = a.last_row.max(row);
                a.last_col = a.last_col.max(col);
                grid[row].push(if is_left { Slot::Left } else { Slot::Up });
            }
            Some(_) => unreachable!("layout is not a cell token"),
            None => {
                // text: belongs to the most recent filled cell in this row
                match grid[row].last() {
                    Some(Slot::Anchor(i)) if anchors[*i].content.is_some() => {
                        let c = anchors[*i].content.as_mut().expect("filled");
                        if !c.is_empty() {
                            c.push(' ');
                        }
                        c.push_str(tok);
                    }
                    _ => {
                        return Err(malformed(format!(
                            "text `{tok}` at row {row}, column {col} does not follow <fcel>"
                        )))
                    }
                }
            }
        }
    }
    if grid.last().is_some_and(Vec::is_empty) {
        grid.pop();
    }

    let mut rows: Vec<TableTree> = (0..grid.len()).map(|_| Tree::leaf(TableNode::Row)).collect();
    for a in anchors {
        let colspan = a.last_col - a.col + 1;
        let rowspan = a.last_row - a.row + 1;
        let node = match a.content {
            Some(content) => TableNode::Cell {
                content,
                colspan,
                rowspan,
            },
            None => TableNode::EmptyCell { colspan, rowspan },
        };
        rows[a.row].children.push(Tree::leaf(node));
    }
    Ok(Tree::new(TableNode::Table, rows))
}

/// Follows merge slots back to the anchor cell index.
fn resolve(grid: &[Vec<Slot>], slot: Slot, row: usize, col: usize, from_left: bool) -> Result<usize, MetricsError> {
    let (mut r, mut c, mut s) = if from_left { (row, col - 1, slot) } else { (row - 1, col, slot) };
    loop {
        match s {
            Slot::Anchor(i) => return Ok(i),
            Slot::Left if c > 0 => c -= 1,
            Slot::Up if r > 0 => r -= 1,
            _ => return Err(MetricsError::MalformedOtsl(format!("dangling merge at row {r}, column {c}"))),
        }
        s = *grid[r]
            .get(c)
            .ok_or_else(|| MetricsError::MalformedOtsl(format!("ragged rows at row {r}, column {c}")))?;
    }
}

/// Tree for an `<otsl>` element.
pub fn otsl_to_tree(table: &DocElement) -> Result<TableTree, MetricsError> {
    if table.tag != LayoutTag::Otsl {
        return Err(MetricsError::MalformedOtsl(format!("expected <otsl>, got <{}>", table.tag)));
    }
    otsl_body_to_tree(&table.content)
}

/// `1 - TED / max(|pred|, |ref|)` with unit costs.
pub fn teds(pred: &TableTree, reference: &TableTree, structure_only: bool) -> f64 {
    let dist = if structure_only {
        tree_edit_distance_by(pred, reference, TableNode::same_structure)
    } else {
        tree_edit_distance_by(pred, reference, |a, b| a == b)
    };
    let largest = pred.size().max(reference.size());
    (1.0 - dist as f64 / largest as f64).clamp(0.0, 1.0)
}

/// Cell texts of a table, row by row, for text flattening.
pub(crate) fn table_rows(tree: &TableTree) -> Vec<Vec<&str>> {
    tree.children
        .iter()
        .map(|row| {
            row.children
                .iter()
                .map(|c| match &c.label {
                    TableNode::Cell { content, .. } => content.as_str(),
                    _ => "",
                })
                .collect()
        })
        .collect()
}
