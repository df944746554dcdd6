//! Ordered labeled trees and the Zhang–Shasha tree edit distance.

/// A rooted, ordered, labeled tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Tree<L> {
    pub label: L,
    pub children: Vec<Tree<L>>,
}

impl<L> Tree<L> {
    pub fn leaf(label: L) -> Self {
        Tree {
            label,
            children: Vec::new(),
        }
    }

    pub fn new(label: L, children: Vec<Tree<L>>) -> Self {
        Tree { label, children }
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(Tree::size).sum::<usize>()
    }
}

/// Post-order labels and leftmost-leaf indices.
struct Indexed<'a, L> {
    labels: Vec<&'a L>,
    leftmost: Vec<usize>,
}

impl<'a, L> Indexed<'a, L> {
    fn new(tree: &'a Tree<L>) -> Self {
        let mut ix = Indexed {
            labels: Vec::with_capacity(tree.size()),
            leftmost: Vec::new(),
        };
        ix.visit(tree);
        ix
    }

    fn visit(&mut self, node: &'a Tree<L>) -> usize {
        let mut first_leaf = None;
        for child in &node.children {
            let l = self.visit(child);
            first_leaf.get_or_insert(l);
        }
        let idx = self.labels.len();
        self.labels.push(&node.label);
        let l = first_leaf.unwrap_or(idx);
        self.leftmost.push(l);
        l
    }

    /// Highest post-order index for each distinct leftmost leaf.
    fn keyroots(&self) -> Vec<usize> {
        let n = self.labels.len();
        let mut seen = vec![false; n];
        let mut roots = Vec::new();
        for i in (0..n).rev() {
            let l = self.leftmost[i];
            if !seen[l] {
                seen[l] = true;
                roots.push(i);
            }
        }
        roots.sort_unstable();
        roots
    }
}

/// Unit-cost ordered tree edit distance: insert and delete cost 1, relabel
/// costs 1 unless `same(a, b)`.
pub fn tree_edit_distance_by<L>(a: &Tree<L>, b: &Tree<L>, same: impl Fn(&L, &L) -> bool) -> usize {
    let t1 = Indexed::new(a);
    let t2 = Indexed::new(b);
    let (n1, n2) = (t1.labels.len(), t2.labels.len());
    let mut td = vec![vec![0usize; n2]; n1];
    let mut fd = vec![vec![0usize; n2 + 1]; n1 + 1];
    let k2 = t2.keyroots();
    for &i in &t1.keyroots() {
        for &j in &k2 {
            let (li, lj) = (t1.leftmost[i], t2.leftmost[j]);
            fd[0][0] = 0;
            for x in li..=i {
                fd[x - li + 1][0] = fd[x - li][0] + 1;
            }
            for y in lj..=j {
                fd[0][y - lj + 1] = fd[0][y - lj] + 1;
            }
            for x in li..=i {
                for y in lj..=j {
                    let (fx, fy) = (x - li + 1, y - lj + 1);
                    let del = fd[fx - 1][fy] + 1;
                    let ins = fd[fx][fy - 1] + 1;
                    if t1.leftmost[x] == li && t2.leftmost[y] == lj {
                        let rel = fd[fx - 1][fy - 1] + usize::from(!same(t1.labels[x], t2.labels[y]));
                        fd[fx][fy] = del.min(ins).min(rel);
                        td[x][y] = fd[fx][fy];
                    } else {
                        let sub = fd[t1.leftmost[x] - li][t2.leftmost[y] - lj] + td[x][y];
                        fd[fx][fy] = del.min(ins).min(sub);
                    }
                }
            }
        }
    }
    td[n1 - 1][n2 - 1]
}

pub fn tree_edit_distance<L: PartialEq>(a: &Tree<L>, b: &Tree<L>) -> usize {
    tree_edit_distance_by(a, b, |x, y| x == y)
}
