//! Index algebra for labeled multi-subsystem registers.
//!
//! Registers are big-endian: the first label is the most significant tensor
//! factor, so basis index `i` of a layout with dims `(d0, d1, .., dn)` has
//! digits `i = ((i0 * d1 + i1) * d2 + i2) ...`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{CMatrix, CVector, Complex64};

/// Largest supported register (four parties plus two channel environments).
pub const MAX_SUBSYSTEMS: usize = 6;

/// Ordered subsystem labels with their local dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawLayout")]
pub struct SubsystemLayout {
    labels: Vec<String>,
    dims: Vec<usize>,
}

#[derive(Deserialize)]
struct RawLayout {
    labels: Vec<String>,
    dims: Vec<usize>,
}

impl TryFrom<RawLayout> for SubsystemLayout {
    type Error = Error;

    fn try_from(raw: RawLayout) -> Result<Self> {
        SubsystemLayout::new(raw.labels, raw.dims)
    }
}

impl SubsystemLayout {
    /// Builds a layout. Local dimensions may be 1 (a trivial factor, used for
    /// rank-one purifications), but the register as a whole must have
    /// dimension at least 2.
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>, dims: Vec<usize>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::InvalidLayout("no subsystems".into()));
        }
        if labels.len() != dims.len() {
            return Err(Error::InvalidLayout(format!(
                "{} labels but {} dimensions",
                labels.len(),
                dims.len()
            )));
        }
        if labels.len() > MAX_SUBSYSTEMS {
            return Err(Error::TooManySubsystems(labels.len()));
        }
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() {
                return Err(Error::InvalidLayout("empty label".into()));
            }
            if labels[..i].contains(l) {
                return Err(Error::DuplicateLabel(l.clone()));
            }
        }
        if dims.contains(&0) {
            return Err(Error::InvalidLayout("zero local dimension".into()));
        }
        if dims.iter().product::<usize>() < 2 {
            return Err(Error::InvalidLayout("total dimension must be at least 2".into()));
        }
        Ok(Self { labels, dims })
    }

    /// Qubit register with the given labels.
    pub fn qubits(labels: &[&str]) -> Result<Self> {
        Self::new(labels.iter().copied(), vec![2; labels.len()])
    }

    /// The `A, B, C, D` register of the transmission protocol.
    pub fn abcd() -> Self {
        Self::qubits(&["A", "B", "C", "D"]).expect("static layout")
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn dim_of(&self, label: &str) -> Result<usize> {
        Ok(self.dims[self.position(label)?])
    }

    /// Product of the local dimensions of `labels`.
    pub fn dim_of_all<S: AsRef<str>>(&self, labels: &[S]) -> Result<usize> {
        labels.iter().map(|l| self.dim_of(l.as_ref())).product()
    }

    /// Sub-layout with exactly `labels`, in the order given.
    pub fn select<S: AsRef<str>>(&self, labels: &[S]) -> Result<Self> {
        let dims = labels
            .iter()
            .map(|l| self.dim_of(l.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(labels.iter().map(|l| l.as_ref().to_string()), dims)
    }

    /// Labels not in `labels`, in layout order.
    pub fn complement<S: AsRef<str>>(&self, labels: &[S]) -> Vec<String> {
        self.labels
            .iter()
            .filter(|l| !labels.iter().any(|k| k.as_ref() == l.as_str()))
            .cloned()
            .collect()
    }

    /// Sorts `labels` into layout order, rejecting unknown or repeated labels.
    pub fn canonical_order<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<String>> {
        let mut pos = labels
            .iter()
            .map(|l| self.position(l.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        pos.sort_unstable();
        if pos.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::DuplicateLabel(self.labels[pos[0]].clone()));
        }
        Ok(pos.into_iter().map(|p| self.labels[p].clone()).collect())
    }

    /// Appends a subsystem as the least significant factor.
    pub fn extend(&self, label: impl Into<String>, dim: usize) -> Result<Self> {
        let mut labels = self.labels.clone();
        let mut dims = self.dims.clone();
        labels.push(label.into());
        dims.push(dim);
        Self::new(labels, dims)
    }

    /// A label not yet used in this layout, derived from `base`.
    pub fn fresh_label(&self, base: &str) -> String {
        if !self.contains(base) {
            return base.to_string();
        }
        (1..)
            .map(|i| format!("{base}{i}"))
            .find(|l| !self.contains(l))
            .expect("unbounded search")
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims.len()];
        for k in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.dims[k + 1];
        }
        strides
    }

    /// For a reordering `order` of all labels, maps each basis index of the
    /// reordered register to the matching basis index of this register.
    pub(crate) fn index_map<S: AsRef<str>>(&self, order: &[S]) -> Result<Vec<usize>> {
        if order.len() != self.len() {
            return Err(Error::InvalidPermutation(format!(
                "expected {} labels, got {}",
                self.len(),
                order.len()
            )));
        }
        let mut seen = vec![false; self.len()];
        let mut pos = Vec::with_capacity(order.len());
        for l in order {
            let p = self
                .position(l.as_ref())
                .map_err(|_| Error::InvalidPermutation(format!("unknown label `{}`", l.as_ref())))?;
            if seen[p] {
                return Err(Error::InvalidPermutation(format!("label `{}` repeated", l.as_ref())));
            }
            seen[p] = true;
            pos.push(p);
        }
        let strides = self.strides();
        let new_dims: Vec<usize> = pos.iter().map(|&p| self.dims[p]).collect();
        let new_strides: Vec<usize> = pos.iter().map(|&p| strides[p]).collect();
        let n = self.total_dim();
        let mut map = Vec::with_capacity(n);
        let mut digits = vec![0usize; new_dims.len()];
        let mut old = 0usize;
        for _ in 0..n {
            map.push(old);
            // odometer increment over the new ordering
            for k in (0..digits.len()).rev() {
                digits[k] += 1;
                old += new_strides[k];
                if digits[k] < new_dims[k] {
                    break;
                }
                old -= new_strides[k] * new_dims[k];
                digits[k] = 0;
            }
        }
        Ok(map)
    }
}

/// A split of a register's labels into two nonempty complementary groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bipartition {
    left: Vec<String>,
    right: Vec<String>,
}

impl Bipartition {
    /// Cut with `left` on one side and every other label of `layout` on the
    /// other. Both sides are stored in layout order.
    pub fn new<S: AsRef<str>>(layout: &SubsystemLayout, left: &[S]) -> Result<Self> {
        let left = layout.canonical_order(left).map_err(|e| match e {
            Error::UnknownLabel(l) => Error::InvalidBipartition(format!("unknown label `{l}`")),
            Error::DuplicateLabel(l) => Error::InvalidBipartition(format!("label `{l}` repeated")),
            other => other,
        })?;
        let right = layout.complement(&left);
        if left.is_empty() || right.is_empty() {
            return Err(Error::InvalidBipartition("both sides must be nonempty".into()));
        }
        Ok(Self { left, right })
    }

    /// Parses `"ABC|D"`-style or comma separated (`"A,B|C"`) cut strings;
    /// the right side is optional and, when given, must be the complement.
    pub fn parse(layout: &SubsystemLayout, spec: &str) -> Result<Self> {
        let (l, r) = match spec.split_once(['|', '~']) {
            Some((l, r)) => (l, Some(r)),
            None => (spec, None),
        };
        let split = |s: &str| -> Vec<String> {
            if s.contains(',') {
                s.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect()
            } else if layout.contains(s.trim()) {
                vec![s.trim().to_string()]
            } else {
                s.trim().chars().map(|c| c.to_string()).collect()
            }
        };
        let cut = Self::new(layout, &split(l))?;
        if let Some(r) = r {
            let right = layout
                .canonical_order(&split(r))
                .map_err(|e| Error::InvalidBipartition(e.to_string()))?;
            if right != cut.right {
                return Err(Error::InvalidBipartition(format!(
                    "`{spec}` is not a complementary split"
                )));
            }
        }
        Ok(cut)
    }

    pub fn left(&self) -> &[String] {
        &self.left
    }

    pub fn right(&self) -> &[String] {
        &self.right
    }

    /// Both sides concatenated: the subsystem order that makes the cut a
    /// matrix reshape.
    pub fn order(&self) -> Vec<String> {
        self.left.iter().chain(&self.right).cloned().collect()
    }

    /// Checks that this cut covers exactly the labels of `layout`.
    pub fn check(&self, layout: &SubsystemLayout) -> Result<()> {
        let ok = self.left.len() + self.right.len() == layout.len()
            && self.left.iter().chain(&self.right).all(|l| layout.contains(l));
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidBipartition(format!(
                "cut {self} does not match layout {:?}",
                layout.labels()
            )))
        }
    }

    /// Local dimensions `(left, right)` under `layout`.
    pub fn dims(&self, layout: &SubsystemLayout) -> Result<(usize, usize)> {
        self.check(layout)?;
        Ok((layout.dim_of_all(&self.left)?, layout.dim_of_all(&self.right)?))
    }
}

impl std::fmt::Display for Bipartition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}~{}", self.left.concat(), self.right.concat())
    }
}

/// Kronecker product, big-endian block layout.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Re-indexes amplitudes so that `new_order` becomes the layout order.
pub fn permute_vector<S: AsRef<str>>(
    amps: &CVector,
    layout: &SubsystemLayout,
    new_order: &[S],
) -> Result<(CVector, SubsystemLayout)> {
    check_len(layout, amps.len())?;
    let map = layout.index_map(new_order)?;
    let out = CVector::from_iterator(map.len(), map.iter().map(|&old| amps[old]));
    Ok((out, layout.select(new_order)?))
}

/// Re-indexes rows and columns of an operator on `layout` to `new_order`.
pub fn permute_matrix<S: AsRef<str>>(
    mat: &CMatrix,
    layout: &SubsystemLayout,
    new_order: &[S],
) -> Result<(CMatrix, SubsystemLayout)> {
    check_square(layout, mat)?;
    let map = layout.index_map(new_order)?;
    let n = map.len();
    let out = CMatrix::from_fn(n, n, |i, j| mat[(map[i], map[j])]);
    Ok((out, layout.select(new_order)?))
}

/// Traces out every subsystem not in `keep`. The result is ordered as in
/// `layout`, regardless of the order of `keep`.
pub fn partial_trace<S: AsRef<str>>(
    mat: &CMatrix,
    layout: &SubsystemLayout,
    keep: &[S],
) -> Result<(CMatrix, SubsystemLayout)> {
    check_square(layout, mat)?;
    let keep = layout.canonical_order(keep)?;
    if keep.is_empty() {
        return Err(Error::InvalidLayout("cannot trace out every subsystem".into()));
    }
    let traced = layout.complement(&keep);
    let kept_layout = layout.select(&keep)?;
    if traced.is_empty() {
        return Ok((mat.clone(), kept_layout));
    }
    let dk = kept_layout.total_dim();
    let dt = layout.dim_of_all(&traced)?;
    let order: Vec<&String> = keep.iter().chain(&traced).collect();
    let map = layout.index_map(&order)?;
    let out = CMatrix::from_fn(dk, dk, |i, j| {
        (0..dt).fold(Complex64::new(0.0, 0.0), |acc, t| acc + mat[(map[i * dt + t], map[j * dt + t])])
    });
    Ok((out, kept_layout))
}

/// Embeds `op`, which acts on `targets` in the order given, into the full
/// register: `op ⊗ I` on the complement, re-indexed to layout order.
pub fn embed_operator<S: AsRef<str>>(op: &CMatrix, targets: &[S], layout: &SubsystemLayout) -> Result<CMatrix> {
    if targets.is_empty() {
        return Err(Error::InvalidLayout("operator has no targets".into()));
    }
    let dt = layout.dim_of_all(targets)?;
    if op.nrows() != dt || op.ncols() != dt {
        return Err(Error::DimensionMismatch { expected: dt, found: op.nrows() });
    }
    let rest = layout.complement(targets);
    let order: Vec<&str> = targets.iter().map(AsRef::as_ref).chain(rest.iter().map(String::as_str)).collect();
    let map = layout.index_map(&order)?;
    let dr = layout.total_dim() / dt;
    let n = layout.total_dim();
    let mut out = CMatrix::zeros(n, n);
    for a in 0..dt {
        for b in 0..dt {
            let v = op[(a, b)];
            if v == Complex64::new(0.0, 0.0) {
                continue;
            }
            for r in 0..dr {
                out[(map[a * dr + r], map[b * dr + r])] = v;
            }
        }
    }
    Ok(out)
}

fn check_len(layout: &SubsystemLayout, len: usize) -> Result<()> {
    if len == layout.total_dim() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: layout.total_dim(), found: len })
    }
}

fn check_square(layout: &SubsystemLayout, mat: &CMatrix) -> Result<()> {
    check_len(layout, mat.nrows())?;
    check_len(layout, mat.ncols())
}
