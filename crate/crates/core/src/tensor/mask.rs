/// Boolean attention mask; `true` marks an attendable (query, key) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    rows: usize,
    cols: usize,
    allowed: Vec<bool>,
}

impl AttentionMask {
    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            allowed: vec![true; rows * cols],
        }
    }

    /// Lower triangular including the diagonal.
    pub fn causal(n: usize) -> Self {
        Self::from_kind(MaskKind::Causal, n, n, 0)
    }

    /// Block lower triangular over consecutive groups of `k` positions:
    /// every position sees all positions of its own and earlier groups.
    pub fn group_causal(n: usize, k: usize) -> Self {
        Self::from_kind(MaskKind::GroupCausal(k), n, n, 0)
    }

    pub fn from_kind(kind: MaskKind, rows: usize, cols: usize, q_offset: usize) -> Self {
        let kind = &kind;
        let allowed = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| kind.allows(q_offset + i, j)))
            .collect();
        Self { rows, cols, allowed }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let allowed = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| f(i, j))
            .collect();
        Self { rows, cols, allowed }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn allows(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.cols + j]
    }

    pub fn is_lower_triangular(&self) -> bool {
        (0..self.rows).all(|i| (0..self.cols).all(|j| self.allows(i, j) == (j <= i)))
    }
}

/// Structured mask used inside fused attention, evaluated on absolute
/// query position `i` (segment offset plus row) and key position `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MaskKind {
    Full,
    Causal,
    GroupCausal(usize),
    Explicit(AttentionMask),
}

impl MaskKind {
    pub fn allows(&self, i: usize, j: usize) -> bool {
        match self {
            MaskKind::Full => true,
            MaskKind::Causal => j <= i,
            MaskKind::GroupCausal(k) => j / k <= i / k,
            MaskKind::Explicit(m) => m.allows(i, j),
        }
    }

    pub fn is_full(&self) -> bool {
        matches!(self, MaskKind::Full)
    }
}
