//! Integer-lattice geometry on `Z^d`: dyadic cubes, the shells
//! `S_k = V_k \ V_{k-1}` with `V_k = [-2^k, 2^k)^d`, the tree metric between
//! points of a common shell, and the forest order used to enumerate points.
//!
//! Every point of `S_k` is the leaf of a chain of `k + 1` dyadic cubes of
//! levels `k, k-1, ..., 0`; the box `V_k` itself acts as an implicit root
//! shared by the `2^d` level-`k` cubes that tile it.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::de::{self, SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 4;

/// Largest supported shell index. Coordinates stay below `2^62` in magnitude.
pub const MAX_SHELL: u32 = 60;

const COORD_LIMIT: i64 = 1 << 62;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("dimension {0} is outside the supported range 1..={MAX_DIM}")]
    BadDimension(usize),
    #[error("coordinate {0} exceeds the supported magnitude 2^62")]
    CoordinateOverflow(i64),
    #[error("points have dimensions {0} and {1}")]
    DimensionMismatch(usize, usize),
    #[error("points lie in different shells ({0} and {1})")]
    DifferentShells(u32, u32),
    #[error("a level-0 cube has no children")]
    LeafCube,
}

/// A point of `Z^d`, stored inline for `d <= MAX_DIM`. Unused slots are zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct LatticePoint {
    coords: [i64; MAX_DIM],
    dim: u8,
}

impl LatticePoint {
    pub fn new(coords: &[i64]) -> Result<Self, LatticeError> {
        let d = coords.len();
        if d == 0 || d > MAX_DIM {
            return Err(LatticeError::BadDimension(d));
        }
        let mut c = [0i64; MAX_DIM];
        for (slot, &v) in c.iter_mut().zip(coords) {
            if v >= COORD_LIMIT || v < -COORD_LIMIT {
                return Err(LatticeError::CoordinateOverflow(v));
            }
            *slot = v;
        }
        Ok(Self { coords: c, dim: d as u8 })
    }

    /// Builds a point without range checks. Callers guarantee `1 <= d <= MAX_DIM`.
    #[inline]
    pub(crate) fn from_array(coords: [i64; MAX_DIM], d: usize) -> Self {
        debug_assert!((1..=MAX_DIM).contains(&d));
        let mut c = coords;
        for slot in c.iter_mut().skip(d) {
            *slot = 0;
        }
        Self { coords: c, dim: d as u8 }
    }

    pub fn origin(d: usize) -> Result<Self, LatticeError> {
        Self::new(&vec![0; d])
    }

    /// The `i`-th standard basis vector of `Z^d`.
    pub fn unit(d: usize, i: usize) -> Result<Self, LatticeError> {
        let mut c = vec![0; d];
        if i < d {
            c[i] = 1;
        }
        Self::new(&c)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn coords(&self) -> &[i64] {
        &self.coords[..self.dim as usize]
    }

    #[inline]
    pub(crate) fn raw(&self) -> &[i64; MAX_DIM] {
        &self.coords
    }

    /// Arithmetic right shift of every coordinate, i.e. floor division by `2^n`.
    #[inline]
    pub fn shr(&self, n: u32) -> Self {
        let mut c = self.coords;
        for v in c.iter_mut() {
            *v >>= n;
        }
        Self { coords: c, dim: self.dim }
    }

    pub fn norm2(&self) -> f64 {
        self.coords().iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }

    pub fn norm_inf(&self) -> i64 {
        self.coords().iter().map(|v| v.abs()).max().unwrap_or(0)
    }

    /// Shell index `k` with `self ∈ S_k`.
    #[inline]
    pub fn shell(&self) -> u32 {
        shell_of(self)
    }
}

impl fmt::Debug for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coords())
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

impl Add for LatticePoint {
    type Output = LatticePoint;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut c = self.coords;
        for (a, b) in c.iter_mut().zip(rhs.coords.iter()) {
            *a += *b;
        }
        Self { coords: c, dim: self.dim }
    }
}

impl Sub for LatticePoint {
    type Output = LatticePoint;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut c = self.coords;
        for (a, b) in c.iter_mut().zip(rhs.coords.iter()) {
            *a -= *b;
        }
        Self { coords: c, dim: self.dim }
    }
}

impl Neg for LatticePoint {
    type Output = LatticePoint;
    fn neg(self) -> Self {
        let mut c = self.coords;
        for a in c.iter_mut() {
            *a = -*a;
        }
        Self { coords: c, dim: self.dim }
    }
}

impl Serialize for LatticePoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.dim()))?;
        for v in self.coords() {
            seq.serialize_element(v)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for LatticePoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PointVisitor;
        impl<'de> Visitor<'de> for PointVisitor {
            type Value = LatticePoint;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "an array of 1 to {MAX_DIM} integers")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<LatticePoint, A::Error> {
                let mut v = Vec::with_capacity(MAX_DIM);
                while let Some(x) = seq.next_element::<i64>()? {
                    v.push(x);
                }
                LatticePoint::new(&v).map_err(de::Error::custom)
            }
        }
        deserializer.deserialize_seq(PointVisitor)
    }
}

/// Smallest `k >= 0` with every coordinate in `[-2^k, 2^k)`.
#[inline]
pub fn shell_of(x: &LatticePoint) -> u32 {
    let mut m: u64 = 0;
    for &c in x.coords() {
        // c >= 0 needs c < 2^k; c < 0 needs -c - 1 < 2^k.
        m |= (c ^ (c >> 63)) as u64;
    }
    64 - m.leading_zeros()
}

/// Number of dyadic selections a point of `S_k` has to survive: `k + 1`.
#[inline]
pub fn delta(x: &LatticePoint) -> u32 {
    shell_of(x) + 1
}

/// Whether `x ∈ V_n = [-2^n, 2^n)^d`.
#[inline]
pub fn in_box(x: &LatticePoint, n: u32) -> bool {
    shell_of(x) <= n
}

/// Number of lattice points in `V_n`, `2^{(n+1)d}`.
pub fn box_cardinality(d: usize, n: u32) -> u128 {
    1u128 << ((n as usize + 1) * d)
}

/// Number of lattice points in `S_k`.
pub fn shell_cardinality(d: usize, k: u32) -> u128 {
    if k == 0 {
        box_cardinality(d, 0)
    } else {
        box_cardinality(d, k) - box_cardinality(d, k - 1)
    }
}

/// Rounds a real point to the nearest lattice point, breaking ties toward `-∞`.
pub fn round_to_lattice(x: &[f64]) -> Result<LatticePoint, LatticeError> {
    let c: Vec<i64> = x.iter().map(|&v| (v - 0.5).ceil() as i64).collect();
    LatticePoint::new(&c)
}

/// A half-open dyadic cube `[j_1 2^n, (j_1+1) 2^n) × … × [j_d 2^n, (j_d+1) 2^n)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct DyadicCube {
    pub level: u32,
    /// South-west corner index `j`; the corner itself sits at `j · 2^level`.
    pub corner: LatticePoint,
}

impl DyadicCube {
    /// The unique level-`level` cube containing `x`.
    #[inline]
    pub fn containing(x: &LatticePoint, level: u32) -> Self {
        Self { level, corner: x.shr(level) }
    }

    pub fn dim(&self) -> usize {
        self.corner.dim()
    }

    pub fn side(&self) -> i64 {
        1i64 << self.level
    }

    #[inline]
    pub fn contains(&self, x: &LatticePoint) -> bool {
        x.dim() == self.dim() && x.shr(self.level) == self.corner
    }

    /// Whether `self ⊆ other`.
    pub fn is_within(&self, other: &DyadicCube) -> bool {
        other.level >= self.level && self.corner.shr(other.level - self.level) == other.corner
    }

    pub fn parent(&self) -> Self {
        Self { level: self.level + 1, corner: self.corner.shr(1) }
    }

    /// The `2^d` level-`(n-1)` cubes partitioning `self`, in lexicographic
    /// order of their corners (first coordinate most significant).
    pub fn children(&self) -> Result<Vec<DyadicCube>, LatticeError> {
        if self.level == 0 {
            return Err(LatticeError::LeafCube);
        }
        let d = self.dim();
        let mut out = Vec::with_capacity(1 << d);
        for bits in 0..(1usize << d) {
            let mut c = *self.corner.raw();
            for (i, v) in c.iter_mut().enumerate().take(d) {
                *v = 2 * *v + ((bits >> (d - 1 - i)) & 1) as i64;
            }
            out.push(DyadicCube { level: self.level - 1, corner: LatticePoint::from_array(c, d) });
        }
        Ok(out)
    }

    /// Whether the cube lies inside `V_n`.
    pub fn within_box(&self, n: u32) -> bool {
        cube_within_box(self.level, self.corner.coords(), n)
    }
}

/// Whether the cube of the given level and corner lies inside `V_n`.
#[inline]
pub(crate) fn cube_within_box(level: u32, corner: &[i64], n: u32) -> bool {
    if level > n {
        return false;
    }
    let span = 1i64 << (n - level);
    corner.iter().all(|&j| j >= -span && j < span)
}

/// Whether a cube inside `V_k` meets the shell `S_k`, i.e. is not swallowed by `V_{k-1}`.
#[inline]
pub(crate) fn cube_meets_shell(level: u32, corner: &[i64], k: u32) -> bool {
    k == 0 || !cube_within_box(level, corner, k - 1)
}

/// Corner of the `bits`-th level-`k` cube tiling `V_k`; bit `d-1-i` picks
/// the upper half along axis `i`.
#[inline]
pub(crate) fn root_corner(d: usize, bits: usize) -> [i64; MAX_DIM] {
    let mut c = [0i64; MAX_DIM];
    for (i, v) in c.iter_mut().enumerate().take(d) {
        *v = ((bits >> (d - 1 - i)) & 1) as i64 - 1;
    }
    c
}

/// Corner of the `bits`-th child, in the order of [`DyadicCube::children`].
#[inline]
pub(crate) fn child_corner(d: usize, parent: &[i64; MAX_DIM], bits: usize) -> [i64; MAX_DIM] {
    let mut c = [0i64; MAX_DIM];
    for (i, v) in c.iter_mut().enumerate().take(d) {
        *v = 2 * parent[i] + ((bits >> (d - 1 - i)) & 1) as i64;
    }
    c
}

/// The `k + 1` dyadic cubes of levels `k, …, 0` containing a point of `S_k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubeChain {
    pub shell: u32,
    pub links: Vec<DyadicCube>,
}

pub fn cube_chain(x: &LatticePoint) -> CubeChain {
    let k = shell_of(x);
    let links = (0..=k).rev().map(|level| DyadicCube::containing(x, level)).collect();
    CubeChain { shell: k, links }
}

/// Tree distance `d(x, y)` between two points of a common shell `S_k`:
/// `(k + 1) - n*`, where `n*` is the lowest level of a dyadic cube holding
/// both points, and `0` when only the implicit root `V_k` holds both.
pub fn tree_dist(x: &LatticePoint, y: &LatticePoint) -> Result<u32, LatticeError> {
    if x.dim() != y.dim() {
        return Err(LatticeError::DimensionMismatch(x.dim(), y.dim()));
    }
    let (kx, ky) = (shell_of(x), shell_of(y));
    if kx != ky {
        return Err(LatticeError::DifferentShells(kx, ky));
    }
    Ok(tree_dist_in_shell(x, y, kx))
}

#[inline]
pub(crate) fn tree_dist_in_shell(x: &LatticePoint, y: &LatticePoint, k: u32) -> u32 {
    // Smallest n with x >> n == y >> n; the bit length of the widest xor.
    let mut diff: u64 = 0;
    for (a, b) in x.coords().iter().zip(y.coords()) {
        diff |= (a ^ b) as u64;
    }
    let n = 64 - diff.leading_zeros();
    if n > k {
        0
    } else {
        k + 1 - n
    }
}

/// The forest order on `Z^d`: inner shells first, then depth-first through
/// the dyadic tree with children in lexicographic corner order.
pub fn order_cmp(x: &LatticePoint, y: &LatticePoint) -> Ordering {
    let (kx, ky) = (shell_of(x), shell_of(y));
    if kx != ky {
        return kx.cmp(&ky);
    }
    for level in (0..=kx).rev() {
        let (cx, cy) = (x.shr(level), y.shr(level));
        if cx != cy {
            return cx.coords().cmp(cy.coords());
        }
    }
    x.dim().cmp(&y.dim())
}

/// Interleaved bit key of a point of `S_k`, consistent with [`order_cmp`]
/// inside the shell. `None` when `d (k + 1) > 128`.
pub fn morton_key(x: &LatticePoint, k: u32) -> Option<u128> {
    let d = x.dim();
    let bits = (k as usize + 1) * d;
    if bits > 128 {
        return None;
    }
    let offset = 1i64 << k;
    let shifted: Vec<u64> = x.coords().iter().map(|&c| (c + offset) as u64).collect();
    let mut key: u128 = 0;
    for level in (0..=k).rev() {
        for s in &shifted {
            key = (key << 1) | ((s >> level) & 1) as u128;
        }
    }
    Some(key)
}

/// Iterator over the lattice points of `V_n`, in row-major order.
pub struct BoxPoints {
    d: usize,
    lo: i64,
    hi: i64,
    cur: [i64; MAX_DIM],
    done: bool,
}

impl Iterator for BoxPoints {
    type Item = LatticePoint;
    fn next(&mut self) -> Option<LatticePoint> {
        if self.done {
            return None;
        }
        let out = LatticePoint::from_array(self.cur, self.d);
        let mut i = self.d;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            self.cur[i] += 1;
            if self.cur[i] < self.hi {
                break;
            }
            self.cur[i] = self.lo;
        }
        Some(out)
    }
}

/// All lattice points of `V_n`.
pub fn box_points(d: usize, n: u32) -> BoxPoints {
    cube_range(d, -(1i64 << n), 1i64 << n)
}

/// All lattice points of `[lo, hi)^d`.
pub fn cube_range(d: usize, lo: i64, hi: i64) -> BoxPoints {
    BoxPoints { d, lo, hi, cur: [lo; MAX_DIM], done: hi <= lo }
}

/// All lattice points of `S_k`.
pub fn shell_points(d: usize, k: u32) -> impl Iterator<Item = LatticePoint> {
    box_points(d, k).filter(move |x| shell_of(x) == k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[i64]) -> LatticePoint {
        LatticePoint::new(c).unwrap()
    }

    #[test]
    fn shell_examples() {
        assert_eq!(shell_of(&p(&[0, 0, 0])), 0);
        assert_eq!(shell_of(&p(&[1, 0, 0])), 1);
        assert_eq!(shell_of(&p(&[0, 0, 27])), 5);
        assert_eq!(shell_of(&p(&[-1, -1])), 0);
        assert_eq!(shell_of(&p(&[-2, 0])), 1);
        assert_eq!(shell_of(&p(&[-3, 0])), 2);
        assert_eq!(delta(&p(&[0, 0, 27])), 6);
    }

    #[test]
    fn shell_matches_scan() {
        for c in -70i64..70 {
            let x = p(&[c, 3]);
            let scanned = (0..10u32)
                .find(|&k| x.coords().iter().all(|&v| v >= -(1 << k) && v < (1 << k)))
                .unwrap();
            assert_eq!(shell_of(&x), scanned, "{x}");
        }
    }

    #[test]
    fn chain_examples() {
        let ch = cube_chain(&p(&[0, 0]));
        assert_eq!(ch.shell, 0);
        assert_eq!(ch.links, vec![DyadicCube { level: 0, corner: p(&[0, 0]) }]);

        let ch = cube_chain(&p(&[1, 0]));
        assert_eq!(ch.links.len(), 2);
        assert_eq!(ch.links[0], DyadicCube { level: 1, corner: p(&[0, 0]) });
        assert_eq!(ch.links[1], DyadicCube { level: 0, corner: p(&[1, 0]) });
        assert!(ch.links[1].is_within(&ch.links[0]));

        let ch = cube_chain(&p(&[-1, -1]));
        assert_eq!(ch.links, vec![DyadicCube { level: 0, corner: p(&[-1, -1]) }]);
    }

    #[test]
    fn tree_dist_examples() {
        let x = p(&[5, -3]);
        assert_eq!(tree_dist(&x, &x).unwrap(), shell_of(&x) + 1);
        assert_eq!(tree_dist(&p(&[-1]), &p(&[0])).unwrap(), 0);
        assert_eq!(tree_dist(&p(&[2, 2]), &p(&[3, 3])).unwrap(), 2);
        assert_eq!(
            tree_dist(&p(&[0, 0]), &p(&[5, 0])),
            Err(LatticeError::DifferentShells(0, 3))
        );
    }

    #[test]
    fn tree_dist_matches_cube_enumeration() {
        let pts: Vec<_> = shell_points(2, 2).collect();
        for x in &pts {
            for y in &pts {
                let n_star = (0..=2u32).find(|&n| DyadicCube::containing(x, n).contains(y));
                let expected = n_star.map_or(0, |n| 3 - n);
                assert_eq!(tree_dist(x, y).unwrap(), expected);
            }
        }
    }

    #[test]
    fn children_partition_parent() {
        let q = DyadicCube { level: 1, corner: p(&[0, 0]) };
        let kids = q.children().unwrap();
        let corners: Vec<_> = kids.iter().map(|c| c.corner).collect();
        assert_eq!(corners, vec![p(&[0, 0]), p(&[0, 1]), p(&[1, 0]), p(&[1, 1])]);

        let q3 = DyadicCube { level: 5, corner: p(&[1, -2, 0]) };
        let kids = q3.children().unwrap();
        assert_eq!(kids.len(), 8);
        assert!(kids.iter().all(|c| c.level == 4 && c.is_within(&q3)));

        assert_eq!(
            DyadicCube { level: 0, corner: p(&[0]) }.children(),
            Err(LatticeError::LeafCube)
        );
    }

    #[test]
    fn children_cover_exactly() {
        let q = DyadicCube { level: 3, corner: p(&[-1, 2]) };
        let kids = q.children().unwrap();
        let base = q.corner.coords().iter().map(|c| c * 8).collect::<Vec<_>>();
        for dx in 0..8 {
            for dy in 0..8 {
                let x = p(&[base[0] + dx, base[1] + dy]);
                assert!(q.contains(&x));
                assert_eq!(kids.iter().filter(|c| c.contains(&x)).count(), 1);
            }
        }
    }

    #[test]
    fn order_is_strict_total_on_v2() {
        let pts: Vec<_> = box_points(2, 2).collect();
        assert_eq!(pts.len(), 64);
        for a in &pts {
            for b in &pts {
                let ab = order_cmp(a, b);
                assert_eq!(ab, order_cmp(b, a).reverse());
                assert_eq!(ab == Ordering::Equal, a == b);
                for c in &pts {
                    if ab == Ordering::Less && order_cmp(b, c) == Ordering::Less {
                        assert_eq!(order_cmp(a, c), Ordering::Less);
                    }
                }
            }
        }
        assert_eq!(order_cmp(&p(&[0, 0]), &p(&[5, 5])), Ordering::Less);
    }

    #[test]
    fn morton_agrees_with_order() {
        let pts: Vec<_> = shell_points(2, 3).collect();
        for a in &pts {
            for b in &pts {
                let ka = morton_key(a, 3).unwrap();
                let kb = morton_key(b, 3).unwrap();
                assert_eq!(ka.cmp(&kb), order_cmp(a, b));
            }
        }
    }

    #[test]
    fn cardinalities() {
        assert_eq!(box_points(2, 3).count() as u128, box_cardinality(2, 3));
        assert_eq!(shell_points(3, 2).count() as u128, shell_cardinality(3, 2));
        assert_eq!(box_cardinality(3, 1), 64);
    }

    #[test]
    fn rounding_breaks_ties_down() {
        assert_eq!(round_to_lattice(&[0.5, -0.5, 1.49]).unwrap(), p(&[0, -1, 1]));
        assert_eq!(round_to_lattice(&[2.51]).unwrap(), p(&[3]));
    }

    #[test]
    fn serde_shapes() {
        let q = DyadicCube { level: 2, corner: p(&[1, -1]) };
        let s = serde_json::to_string(&q).unwrap();
        assert_eq!(s, r#"{"level":2,"corner":[1,-1]}"#);
        let back: DyadicCube = serde_json::from_str(&s).unwrap();
        assert_eq!(back, q);
        assert!(serde_json::from_str::<LatticePoint>("[]").is_err());
    }

    #[test]
    fn rejects_bad_points() {
        assert_eq!(LatticePoint::new(&[]), Err(LatticeError::BadDimension(0)));
        assert!(LatticePoint::new(&[1 << 62]).is_err());
        assert!(LatticePoint::new(&[0; 5]).is_err());
    }
}
