//! Flash-index matrices for matrix spellers.
//!
//! A [`FlashPattern`] is a pair of `N×N` matrices of flash indices. The row
//! matrix `r_hat` says which of the `N` row-block flashes intensifies a cell,
//! the column matrix `c_hat` does the same for the `N` column-block flashes.
//! As long as the pair map `(a, b) ↦ (r_hat(a,b), c_hat(a,b))` is a bijection
//! onto `{1..N}²`, one flash from each block identifies a single cell.
//!
//! Three constructions are provided:
//!
//! - [`make_rc_pattern`]: the classical row/column layout;
//! - [`make_permuted_pattern`]: the classical layout pulled back through a
//!   permutation of the `N²` cell ranks;
//! - [`make_constrained_pattern`]: cyclic-shift matrices in which no two
//!   edge-adjacent cells ever flash together.
//!
//! Cells and flash indices are 1-based everywhere in this crate.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Flash index, in `1..=n`.
pub type FlashId = u32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PatternError {
    #[error("invalid dimension {0}: need n >= 2")]
    InvalidDimension(usize),
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("constraint infeasible for n = {0}: the constrained construction needs n >= 3")]
    ConstraintInfeasible(usize),
    #[error("malformed pattern: {0}")]
    Malformed(String),
    #[error("flash index {flash} out of range 1..={n}")]
    InvalidFlash { flash: FlashId, n: usize },
    #[error("pattern is not bijective: flash pair ({0}, {1}) does not identify a unique cell")]
    Ambiguous(FlashId, FlashId),
    #[error("invalid speller matrix: {0}")]
    InvalidMatrix(String),
}

/// A 1-based `(row, col)` position on the speller grid.
///
/// Serialized as a two-element array `[row, col]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl From<[usize; 2]> for Cell {
    fn from([row, col]: [usize; 2]) -> Self {
        Self { row, col }
    }
}

impl From<Cell> for [usize; 2] {
    fn from(c: Cell) -> Self {
        [c.row, c.col]
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// Which of the two flash matrices a flash belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Row,
    Col,
    /// Not tied to a single block (pause events).
    Mixed,
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Block::Row => "row",
            Block::Col => "col",
            Block::Mixed => "mixed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    #[serde(alias = "rc")]
    Classical,
    Permuted,
    Constrained,
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatternKind::Classical => "classical",
            PatternKind::Permuted => "permuted",
            PatternKind::Constrained => "constrained",
        })
    }
}

/// The symbols shown on the speller grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpellerMatrix {
    n: usize,
    symbols: Vec<Vec<char>>,
}

impl SpellerMatrix {
    pub fn new(symbols: Vec<Vec<char>>) -> Result<Self, PatternError> {
        let n = symbols.len();
        if n < 3 {
            return Err(PatternError::InvalidMatrix(format!("grid dimension {n} < 3")));
        }
        if symbols.iter().any(|row| row.len() != n) {
            return Err(PatternError::InvalidMatrix("grid is not square".into()));
        }
        let mut seen: Vec<char> = symbols.iter().flatten().copied().collect();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(PatternError::InvalidMatrix("symbols are not distinct".into()));
        }
        Ok(Self { n, symbols })
    }

    /// Fills an `n×n` grid row-major from `alphabet`.
    pub fn from_alphabet(n: usize, alphabet: &str) -> Result<Self, PatternError> {
        let chars: Vec<char> = alphabet.chars().collect();
        if chars.len() != n * n {
            return Err(PatternError::InvalidMatrix(format!(
                "alphabet has {} symbols, need {}",
                chars.len(),
                n * n
            )));
        }
        Self::new(chars.chunks(n).map(<[char]>::to_vec).collect())
    }

    /// The usual 6×6 grid: `A`–`Z`, `1`–`9` and `_`.
    pub fn standard() -> Self {
        Self::from_alphabet(6, "ABCDEFGHIJKLMNOPQRSTUVWXYZ123456789_").expect("static alphabet")
    }

    /// [`standard`](Self::standard) for `n = 6`; otherwise `A`–`Z`, `0`–`9`,
    /// `a`–`z`, then Latin-1 letters, filled row-major.
    pub fn default_for(n: usize) -> Result<Self, PatternError> {
        if n == 6 {
            return Ok(Self::standard());
        }
        let alphabet: String = ('A'..='Z')
            .chain('0'..='9')
            .chain('a'..='z')
            .chain(('\u{c0}'..='\u{24f}').filter(|c| c.is_alphabetic()))
            .take(n * n)
            .collect();
        Self::from_alphabet(n, &alphabet)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn symbol(&self, cell: Cell) -> char {
        self.symbols[cell.row - 1][cell.col - 1]
    }

    /// Finds the cell that displays `symbol`.
    pub fn find(&self, symbol: char) -> Option<Cell> {
        self.symbols.iter().enumerate().find_map(|(i, row)| {
            row.iter().position(|&s| s == symbol).map(|j| Cell::new(i + 1, j + 1))
        })
    }
}

/// A pair of flash-index matrices.
///
/// JSON form: `{"n": 6, "kind": "constrained", "r_hat": [[..]], "c_hat": [[..]]}`,
/// row-major with 1-based flash indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlashPattern {
    pub n: usize,
    pub kind: PatternKind,
    pub r_hat: Vec<Vec<FlashId>>,
    pub c_hat: Vec<Vec<FlashId>>,
}

/// Result of [`validate_pattern`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternReport {
    pub pair_bijective: bool,
    pub balanced: bool,
    pub r_contiguity_violations: usize,
    pub c_contiguity_violations: usize,
}

impl PatternReport {
    /// Bijective, balanced and free of adjacent co-flashing cells.
    pub fn is_clean(&self) -> bool {
        self.pair_bijective
            && self.balanced
            && self.r_contiguity_violations == 0
            && self.c_contiguity_violations == 0
    }
}

impl FlashPattern {
    /// Flash index of `cell` in the given block.
    pub fn flash_of(&self, block: Block, cell: Cell) -> Option<FlashId> {
        let m = match block {
            Block::Row => &self.r_hat,
            Block::Col => &self.c_hat,
            Block::Mixed => return None,
        };
        Some(m[cell.row - 1][cell.col - 1])
    }

    /// Checks shape and value ranges.
    pub fn check_well_formed(&self) -> Result<(), PatternError> {
        let n = self.n;
        if n < 2 {
            return Err(PatternError::InvalidDimension(n));
        }
        for (name, m) in [("r_hat", &self.r_hat), ("c_hat", &self.c_hat)] {
            if m.len() != n || m.iter().any(|row| row.len() != n) {
                return Err(PatternError::Malformed(format!("{name} is not {n}x{n}")));
            }
            if let Some(v) = m.iter().flatten().find(|&&v| v < 1 || v as usize > n) {
                return Err(PatternError::Malformed(format!(
                    "{name} contains {v}, outside 1..={n}"
                )));
            }
        }
        Ok(())
    }

    fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let n = self.n;
        (1..=n).flat_map(move |row| (1..=n).map(move |col| Cell::new(row, col)))
    }
}

fn check_dimension(n: usize) -> Result<(), PatternError> {
    if n < 2 {
        Err(PatternError::InvalidDimension(n))
    } else {
        Ok(())
    }
}

/// Checks that `perm` holds every value of `1..=len` exactly once.
fn check_permutation(perm: &[usize], len: usize, what: &str) -> Result<(), PatternError> {
    if perm.len() != len {
        return Err(PatternError::InvalidPermutation(format!(
            "{what} has length {}, expected {len}",
            perm.len()
        )));
    }
    let mut seen = vec![false; len];
    for &v in perm {
        if v < 1 || v > len || std::mem::replace(&mut seen[v - 1], true) {
            return Err(PatternError::InvalidPermutation(format!(
                "{what} is not a permutation of 1..={len}"
            )));
        }
    }
    Ok(())
}

/// Classical row/column layout: `r_hat(i,j) = i`, `c_hat(i,j) = j`.
pub fn make_rc_pattern(n: usize) -> Result<FlashPattern, PatternError> {
    check_dimension(n)?;
    let r_hat = (1..=n).map(|i| vec![i as FlashId; n]).collect();
    let c_hat = (1..=n).map(|_| (1..=n as FlashId).collect()).collect();
    Ok(FlashPattern { n, kind: PatternKind::Classical, r_hat, c_hat })
}

/// Classical layout relabelled through a permutation `v` of the `N²` cell ranks.
///
/// With `rank(a,b) = (a-1)·N + b`, cell `(a,b)` takes the row and column flash
/// of the classical cell `unrank(v[rank(a,b)])`. Uniqueness of the pair map is
/// inherited from the classical layout.
pub fn make_permuted_pattern(n: usize, v: &[usize]) -> Result<FlashPattern, PatternError> {
    check_dimension(n)?;
    check_permutation(v, n * n, "v")?;
    let mut r_hat = vec![vec![0; n]; n];
    let mut c_hat = vec![vec![0; n]; n];
    for a in 0..n {
        for b in 0..n {
            let source = v[a * n + b] - 1;
            r_hat[a][b] = (source / n + 1) as FlashId;
            c_hat[a][b] = (source % n + 1) as FlashId;
        }
    }
    Ok(FlashPattern { n, kind: PatternKind::Permuted, r_hat, c_hat })
}

/// Cyclic-shift layout without adjacent co-flashing cells.
///
/// Each row of `r_hat` is the previous one shifted right by one, each row of
/// `c_hat` the previous one shifted right by two:
///
/// ```text
/// r_hat(i,j) = pi_r[((j - i) mod N) + 1]
/// c_hat(i,j) = pi_c[((j - 1 - 2(i - 1)) mod N) + 1]
/// ```
///
/// The index map `(i,j) ↦ (j-i, j-2i) mod N` has determinant 1, so the pair
/// map is a bijection for every `N`. Horizontal neighbours differ by one
/// position in both matrices, vertical neighbours by 1 and 2, so no
/// 4-neighbours share a flash once `N >= 3`. `pi_r` and `pi_c` relabel the
/// first rows.
pub fn make_constrained_pattern(
    n: usize,
    pi_r: &[usize],
    pi_c: &[usize],
) -> Result<FlashPattern, PatternError> {
    if n < 3 {
        return Err(PatternError::ConstraintInfeasible(n));
    }
    check_permutation(pi_r, n, "pi_r")?;
    check_permutation(pi_c, n, "pi_c")?;
    let n_i = n as isize;
    let mut r_hat = vec![vec![0; n]; n];
    let mut c_hat = vec![vec![0; n]; n];
    for i in 0..n_i {
        for j in 0..n_i {
            let r = (j - i).rem_euclid(n_i) as usize;
            let c = (j - 2 * i).rem_euclid(n_i) as usize;
            r_hat[i as usize][j as usize] = pi_r[r] as FlashId;
            c_hat[i as usize][j as usize] = pi_c[c] as FlashId;
        }
    }
    Ok(FlashPattern { n, kind: PatternKind::Constrained, r_hat, c_hat })
}

/// Builds a pattern of `kind`, drawing its free permutations from `seed`.
///
/// Without a seed the permutations are identities: the classical layout for
/// `permuted`, the plain cyclic shifts for `constrained`.
pub fn seeded_pattern(kind: PatternKind, n: usize, seed: Option<u64>) -> Result<FlashPattern, PatternError> {
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let mut perm = |len: usize| {
        let mut v: Vec<usize> = (1..=len).collect();
        if let Some(rng) = rng.as_mut() {
            v.shuffle(rng);
        }
        v
    };
    match kind {
        PatternKind::Classical => make_rc_pattern(n),
        PatternKind::Permuted => make_permuted_pattern(n, &perm(n * n)),
        PatternKind::Constrained => {
            if n < 3 {
                return Err(PatternError::ConstraintInfeasible(n));
            }
            let pi_r = perm(n);
            let pi_c = perm(n);
            make_constrained_pattern(n, &pi_r, &pi_c)
        }
    }
}

fn contiguity_violations(m: &[Vec<FlashId>]) -> usize {
    let n = m.len();
    let mut count = 0;
    for i in 0..n {
        for j in 0..n {
            if j + 1 < n && m[i][j] == m[i][j + 1] {
                count += 1;
            }
            if i + 1 < n && m[i][j] == m[i + 1][j] {
                count += 1;
            }
        }
    }
    count
}

fn is_balanced(m: &[Vec<FlashId>], n: usize) -> bool {
    let mut counts = vec![0usize; n];
    for &v in m.iter().flatten() {
        counts[v as usize - 1] += 1;
    }
    counts.iter().all(|&c| c == n)
}

/// Exhaustively checks the pair map, flash balance and 4-neighbour contiguity.
pub fn validate_pattern(p: &FlashPattern) -> Result<PatternReport, PatternError> {
    p.check_well_formed()?;
    let n = p.n;
    let mut seen = vec![false; n * n];
    let mut pair_bijective = true;
    for cell in p.cells() {
        let r = p.r_hat[cell.row - 1][cell.col - 1] as usize - 1;
        let c = p.c_hat[cell.row - 1][cell.col - 1] as usize - 1;
        if std::mem::replace(&mut seen[r * n + c], true) {
            pair_bijective = false;
        }
    }
    Ok(PatternReport {
        pair_bijective,
        balanced: is_balanced(&p.r_hat, n) && is_balanced(&p.c_hat, n),
        r_contiguity_violations: contiguity_violations(&p.r_hat),
        c_contiguity_violations: contiguity_violations(&p.c_hat),
    })
}

/// The cells intensified by flash `f` of `block`, in row-major order.
pub fn cells_for_flash(p: &FlashPattern, block: Block, f: FlashId) -> Result<Vec<Cell>, PatternError> {
    if f < 1 || f as usize > p.n || block == Block::Mixed {
        return Err(PatternError::InvalidFlash { flash: f, n: p.n });
    }
    Ok(p.cells().filter(|&cell| p.flash_of(block, cell) == Some(f)).collect())
}

/// The unique cell flashed by row flash `f_r` and column flash `f_c`.
pub fn pair_to_cell(p: &FlashPattern, f_r: FlashId, f_c: FlashId) -> Result<Cell, PatternError> {
    for f in [f_r, f_c] {
        if f < 1 || f as usize > p.n {
            return Err(PatternError::InvalidFlash { flash: f, n: p.n });
        }
    }
    let mut hits = p
        .cells()
        .filter(|&cell| p.flash_of(Block::Row, cell) == Some(f_r) && p.flash_of(Block::Col, cell) == Some(f_c));
    match (hits.next(), hits.next()) {
        (Some(cell), None) => Ok(cell),
        _ => Err(PatternError::Ambiguous(f_r, f_c)),
    }
}

/// Precomputed inverse of the pair map, for repeated lookups.
#[derive(Debug, Clone)]
pub struct PairIndex {
    n: usize,
    cells: Vec<Cell>,
}

impl PairIndex {
    /// Fails with [`PatternError::Ambiguous`] unless the pattern is bijective.
    pub fn new(p: &FlashPattern) -> Result<Self, PatternError> {
        p.check_well_formed()?;
        let n = p.n;
        let mut slots: Vec<Option<Cell>> = vec![None; n * n];
        for cell in p.cells() {
            let r = p.r_hat[cell.row - 1][cell.col - 1];
            let c = p.c_hat[cell.row - 1][cell.col - 1];
            let slot = &mut slots[(r as usize - 1) * n + c as usize - 1];
            if slot.is_some() {
                return Err(PatternError::Ambiguous(r, c));
            }
            *slot = Some(cell);
        }
        let cells = slots.into_iter().map(|c| c.expect("bijective over n² pairs")).collect();
        Ok(Self { n, cells })
    }

    pub fn cell(&self, f_r: FlashId, f_c: FlashId) -> Cell {
        self.cells[(f_r as usize - 1) * self.n + f_c as usize - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(n: usize) -> Vec<usize> {
        (1..=n).collect()
    }

    #[test]
    fn rc_pattern_n2() {
        let p = make_rc_pattern(2).unwrap();
        assert_eq!(p.r_hat, vec![vec![1, 1], vec![2, 2]]);
        assert_eq!(p.c_hat, vec![vec![1, 2], vec![1, 2]]);
    }

    #[test]
    fn rc_pattern_rejects_small_dimension() {
        assert_eq!(make_rc_pattern(1), Err(PatternError::InvalidDimension(1)));
    }

    #[test]
    fn classical_n6_report() {
        let report = validate_pattern(&make_rc_pattern(6).unwrap()).unwrap();
        assert_eq!(
            report,
            PatternReport {
                pair_bijective: true,
                balanced: true,
                r_contiguity_violations: 30,
                c_contiguity_violations: 30,
            }
        );
    }

    #[test]
    fn permuted_identity_is_classical() {
        let p = make_permuted_pattern(5, &identity(25)).unwrap();
        let rc = make_rc_pattern(5).unwrap();
        assert_eq!(p.r_hat, rc.r_hat);
        assert_eq!(p.c_hat, rc.c_hat);
    }

    #[test]
    fn permuted_swap_first_two_ranks() {
        let p = make_permuted_pattern(2, &[2, 1, 3, 4]).unwrap();
        assert_eq!(p.r_hat, vec![vec![1, 1], vec![2, 2]]);
        assert_eq!(p.c_hat, vec![vec![2, 1], vec![1, 2]]);
        assert!(validate_pattern(&p).unwrap().pair_bijective);
    }

    #[test]
    fn permuted_rejects_bad_vectors() {
        assert!(matches!(
            make_permuted_pattern(2, &[1, 1, 3, 4]),
            Err(PatternError::InvalidPermutation(_))
        ));
        assert!(matches!(
            make_permuted_pattern(2, &[1, 2, 3]),
            Err(PatternError::InvalidPermutation(_))
        ));
        assert!(matches!(
            make_permuted_pattern(2, &[0, 2, 3, 4]),
            Err(PatternError::InvalidPermutation(_))
        ));
    }

    #[test]
    fn constrained_n3_identity() {
        let p = make_constrained_pattern(3, &identity(3), &identity(3)).unwrap();
        assert_eq!(p.r_hat, vec![vec![1, 2, 3], vec![3, 1, 2], vec![2, 3, 1]]);
        assert_eq!(p.c_hat, vec![vec![1, 2, 3], vec![2, 3, 1], vec![3, 1, 2]]);
        assert!(validate_pattern(&p).unwrap().is_clean());
    }

    #[test]
    fn constrained_rejects_n2() {
        assert_eq!(
            make_constrained_pattern(2, &[1, 2], &[1, 2]),
            Err(PatternError::ConstraintInfeasible(2))
        );
    }

    #[test]
    fn unbalanced_pattern_detected() {
        let mut p = make_rc_pattern(4).unwrap();
        p.r_hat = vec![vec![1; 4]; 4];
        let report = validate_pattern(&p).unwrap();
        assert!(!report.balanced);
        assert!(!report.pair_bijective);
    }

    #[test]
    fn out_of_range_entries_are_malformed() {
        let mut p = make_rc_pattern(3).unwrap();
        p.c_hat[1][1] = 7;
        assert!(matches!(validate_pattern(&p), Err(PatternError::Malformed(_))));
    }

    #[test]
    fn cells_for_classical_row() {
        let p = make_rc_pattern(6).unwrap();
        let cells = cells_for_flash(&p, Block::Row, 2).unwrap();
        assert_eq!(cells, (1..=6).map(|c| Cell::new(2, c)).collect::<Vec<_>>());
        assert!(matches!(
            cells_for_flash(&p, Block::Col, 7),
            Err(PatternError::InvalidFlash { .. })
        ));
    }

    #[test]
    fn pair_to_cell_classical_and_ambiguous() {
        let p = make_rc_pattern(6).unwrap();
        assert_eq!(pair_to_cell(&p, 2, 5).unwrap(), Cell::new(2, 5));
        let mut bad = p.clone();
        bad.c_hat = vec![vec![1; 6]; 6];
        assert_eq!(pair_to_cell(&bad, 1, 1), Err(PatternError::Ambiguous(1, 1)));
        assert!(PairIndex::new(&bad).is_err());
    }

    #[test]
    fn pattern_json_shape() {
        let p = make_rc_pattern(2).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"n":2,"kind":"classical","r_hat":[[1,1],[2,2]],"c_hat":[[1,2],[1,2]]}"#);
        let back: FlashPattern = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn seeded_patterns_are_deterministic_and_clean() {
        let a = seeded_pattern(PatternKind::Constrained, 6, Some(1)).unwrap();
        assert_eq!(a, seeded_pattern(PatternKind::Constrained, 6, Some(1)).unwrap());
        assert!(validate_pattern(&a).unwrap().is_clean());
        let plain = seeded_pattern(PatternKind::Constrained, 6, None).unwrap();
        assert_eq!(plain, make_constrained_pattern(6, &identity(6), &identity(6)).unwrap());
        let perm = seeded_pattern(PatternKind::Permuted, 5, Some(3)).unwrap();
        assert!(validate_pattern(&perm).unwrap().pair_bijective);
        assert_eq!(
            seeded_pattern(PatternKind::Constrained, 2, Some(1)),
            Err(PatternError::ConstraintInfeasible(2))
        );
    }

    #[test]
    fn default_matrices_for_other_sizes() {
        for n in 3..=12 {
            let m = SpellerMatrix::default_for(n).unwrap();
            assert_eq!(m.n(), n);
        }
        assert_eq!(SpellerMatrix::default_for(6).unwrap(), SpellerMatrix::standard());
    }

    #[test]
    fn speller_matrix_lookup() {
        let m = SpellerMatrix::standard();
        assert_eq!(m.symbol(Cell::new(1, 4)), 'D');
        assert_eq!(m.find('_'), Some(Cell::new(6, 6)));
        assert!(SpellerMatrix::from_alphabet(3, "AABCDEFGH").is_err());
    }
}
