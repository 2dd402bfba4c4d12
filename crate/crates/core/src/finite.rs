//! Finite magmas as Cayley tables: Latin-square and identity classification,
//! transversal loops of a subgroup, and semidirect loops by automorphisms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `order x order` multiplication table on elements `0..order`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CayleyTable {
    pub order: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<usize>,
    pub table: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbols: Option<Vec<String>>,
}

impl CayleyTable {
    pub fn new(table: Vec<Vec<usize>>, unit: Option<usize>) -> Result<Self> {
        let t = CayleyTable {
            order: table.len(),
            unit,
            table,
            symbols: None,
        };
        t.check()?;
        Ok(t)
    }

    pub fn from_fn<F: Fn(usize, usize) -> usize>(order: usize, f: F) -> Result<Self> {
        let table = (0..order)
            .map(|a| (0..order).map(|b| f(a, b)).collect())
            .collect();
        let mut t = CayleyTable::new(table, None)?;
        t.unit = t.find_unit();
        Ok(t)
    }

    /// Additive group of integers modulo `n`.
    pub fn cyclic(n: usize) -> Self {
        CayleyTable::from_fn(n, |a, b| (a + b) % n).expect("cyclic table is well formed")
    }

    /// Shape, range and claimed-unit checks.
    pub fn check(&self) -> Result<()> {
        let n = self.order;
        if n == 0 {
            return Err(Error::MalformedTable("order must be positive".into()));
        }
        if self.table.len() != n {
            return Err(Error::MalformedTable(format!(
                "expected {n} rows, got {}",
                self.table.len()
            )));
        }
        for (r, row) in self.table.iter().enumerate() {
            if row.len() != n {
                return Err(Error::MalformedTable(format!(
                    "row {r} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if let Some(&v) = row.iter().find(|&&v| v >= n) {
                return Err(Error::MalformedTable(format!(
                    "row {r} contains {v}, outside 0..{n}"
                )));
            }
        }
        if let Some(u) = self.unit {
            if u >= n {
                return Err(Error::MalformedTable(format!("unit {u} outside 0..{n}")));
            }
            if (0..n).any(|x| self.table[u][x] != x || self.table[x][u] != x) {
                return Err(Error::MalformedTable(format!(
                    "claimed unit {u} is not a two-sided identity"
                )));
            }
        }
        if let Some(s) = &self.symbols {
            if s.len() != n {
                return Err(Error::MalformedTable(format!(
                    "{} symbols for order {n}",
                    s.len()
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.table[a][b]
    }

    pub fn find_unit(&self) -> Option<usize> {
        let n = self.order;
        (0..n).find(|&u| (0..n).all(|x| self.table[u][x] == x && self.table[x][u] == x))
    }

    pub fn is_latin(&self) -> bool {
        let n = self.order;
        let mut seen = vec![false; n];
        for r in 0..n {
            seen.iter_mut().for_each(|s| *s = false);
            for c in 0..n {
                let v = self.table[r][c];
                if seen[v] {
                    return false;
                }
                seen[v] = true;
            }
        }
        for c in 0..n {
            seen.iter_mut().for_each(|s| *s = false);
            for r in 0..n {
                let v = self.table[r][c];
                if seen[v] {
                    return false;
                }
                seen[v] = true;
            }
        }
        true
    }

    /// Unique `x` with `a x = b`, if the table is Latin in row `a`.
    pub fn left_divide(&self, a: usize, b: usize) -> Option<usize> {
        (0..self.order).find(|&x| self.table[a][x] == b)
    }

    /// Unique `y` with `y a = b`.
    pub fn right_divide(&self, a: usize, b: usize) -> Option<usize> {
        (0..self.order).find(|&y| self.table[y][a] == b)
    }

    pub fn name(&self, x: usize) -> String {
        match &self.symbols {
            Some(s) => s[x].clone(),
            None => x.to_string(),
        }
    }
}

/// Classification flags of a finite magma.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub is_latin_square: bool,
    pub unit: Option<usize>,
    pub has_two_sided_inverses: bool,
    pub inverse_property: bool,
    pub left_inverse_property: bool,
    pub right_inverse_property: bool,
    pub moufang: bool,
    pub left_bol: bool,
    pub right_bol: bool,
    pub associative: bool,
    /// The three Moufang forms `((ax)a)y = a(x(ay))`, `((xa)y)a = x(a(ya))`,
    /// `(ax)(ya) = (a(xy))a`, each checked separately.
    pub moufang_forms: [bool; 3],
    /// Set when the forms disagree; they are only equivalent for loops.
    pub moufang_inconsistent: bool,
    /// False when the table exceeded the exhaustive cap and was sampled.
    pub exhaustive: bool,
}

impl IdentityReport {
    /// `associative => moufang => left_bol && right_bol` and
    /// `inverse_property => left && right inverse property`.
    pub fn implication_chain_holds(&self) -> bool {
        (!self.associative || self.moufang)
            && (!self.moufang || (self.left_bol && self.right_bol))
            && (!self.inverse_property
                || (self.left_inverse_property && self.right_inverse_property))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifyConfig {
    /// Orders above this are sampled instead of enumerated.
    pub exhaustive_cap: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            exhaustive_cap: 64,
            samples: 200_000,
            seed: 0,
        }
    }
}

enum Triples {
    All { n: usize, next: usize },
    Sampled { n: usize, left: usize, rng: ChaCha8Rng },
}

impl Iterator for Triples {
    type Item = (usize, usize, usize);
    fn next(&mut self) -> Option<Self::Item> {
        match self {
            Triples::All { n, next } => {
                let n = *n;
                if *next >= n * n * n {
                    return None;
                }
                let k = *next;
                *next += 1;
                Some((k / (n * n), (k / n) % n, k % n))
            }
            Triples::Sampled { n, left, rng } => {
                if *left == 0 {
                    return None;
                }
                *left -= 1;
                let n = *n;
                Some((
                    rng.random_range(0..n),
                    rng.random_range(0..n),
                    rng.random_range(0..n),
                ))
            }
        }
    }
}

fn triples(n: usize, cfg: &ClassifyConfig, salt: u64) -> Triples {
    if n <= cfg.exhaustive_cap {
        Triples::All { n, next: 0 }
    } else {
        Triples::Sampled {
            n,
            left: cfg.samples,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        }
    }
}

/// Classify a table: Latin-square status, unit, inverses and the standard
/// loop identities, by exhaustive enumeration up to the configured cap.
pub fn validate_latin_square(t: &CayleyTable) -> Result<IdentityReport> {
    classify(t, &ClassifyConfig::default())
}

pub fn classify(t: &CayleyTable, cfg: &ClassifyConfig) -> Result<IdentityReport> {
    t.check()?;
    let n = t.order;
    let m = |a: usize, b: usize| t.table[a][b];
    let is_latin = t.is_latin();
    let unit = t.find_unit();
    let exhaustive = n <= cfg.exhaustive_cap;

    let associative = triples(n, cfg, 1).all(|(x, y, z)| m(m(x, y), z) == m(x, m(y, z)));
    let form1 = triples(n, cfg, 2).all(|(a, x, y)| m(m(m(a, x), a), y) == m(a, m(x, m(a, y))));
    let form2 = triples(n, cfg, 3).all(|(a, x, y)| m(m(m(x, a), y), a) == m(x, m(a, m(y, a))));
    let form3 = triples(n, cfg, 4).all(|(a, x, y)| m(m(a, x), m(y, a)) == m(m(a, m(x, y)), a));
    let left_bol = triples(n, cfg, 5).all(|(a, b, c)| m(a, m(b, m(a, c))) == m(m(a, m(b, a)), c));
    let right_bol =
        triples(n, cfg, 6).all(|(a, b, c)| m(m(m(c, a), b), a) == m(c, m(m(a, b), a)));
    let forms = [form1, form2, form3];
    let all_forms = forms.iter().all(|&f| f);
    let any_form = forms.iter().any(|&f| f);
    let is_loop = is_latin && unit.is_some();
    // For loops the three forms are equivalent and imply both Bol identities;
    // outside loops the flag is the conjunction so the implication chain is total.
    let moufang = all_forms && left_bol && right_bol;
    let moufang_inconsistent = !is_loop && all_forms != any_form;

    let has_two_sided_inverses = match unit {
        Some(e) => (0..n).all(|a| (0..n).any(|b| m(a, b) == e && m(b, a) == e)),
        None => false,
    };

    // candidate one-sided inverses per element, tested on every x (or a
    // seeded sample of x beyond the cap)
    let xs: Vec<usize> = if exhaustive {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xA5A5);
        (0..cfg.samples.min(4 * n).max(1))
            .map(|_| rng.random_range(0..n))
            .collect()
    };
    let left_inv: Vec<Vec<usize>> = (0..n)
        .map(|a| {
            (0..n)
                .filter(|&a1| xs.iter().all(|&x| m(a1, m(a, x)) == x))
                .collect()
        })
        .collect();
    let right_inv: Vec<Vec<usize>> = (0..n)
        .map(|a| {
            (0..n)
                .filter(|&a2| xs.iter().all(|&x| m(m(x, a), a2) == x))
                .collect()
        })
        .collect();
    let left_inverse_property = left_inv.iter().all(|v| !v.is_empty());
    let right_inverse_property = right_inv.iter().all(|v| !v.is_empty());
    let inverse_property = left_inverse_property
        && right_inverse_property
        && (0..n).all(|a| left_inv[a].iter().any(|b| right_inv[a].contains(b)));

    Ok(IdentityReport {
        is_latin_square: is_latin,
        unit,
        has_two_sided_inverses,
        inverse_property,
        left_inverse_property,
        right_inverse_property,
        moufang,
        left_bol,
        right_bol,
        associative,
        moufang_forms: forms,
        moufang_inconsistent,
        exhaustive,
    })
}

fn require_group(g: &CayleyTable) -> Result<usize> {
    g.check()?;
    let e = g
        .find_unit()
        .ok_or_else(|| Error::MalformedTable("group table has no unit".into()))?;
    if !g.is_latin() {
        return Err(Error::MalformedTable("group table is not a Latin square".into()));
    }
    let n = g.order;
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                if g.mul(g.mul(x, y), z) != g.mul(x, g.mul(y, z)) {
                    return Err(Error::MalformedTable(format!(
                        "group table is not associative at ({x},{y},{z})"
                    )));
                }
            }
        }
    }
    Ok(e)
}

/// Left inverse loop on a left transversal `S` of a subgroup `H`, with
/// `s o s' = p_S(s s')`. Element `i` of the result is `transversal[i]`.
pub fn transversal_loop(
    group: &CayleyTable,
    subgroup: &[usize],
    transversal: &[usize],
) -> Result<CayleyTable> {
    let e = require_group(group)?;
    let n = group.order;
    let mut in_h = vec![false; n];
    for &h in subgroup {
        if h >= n {
            return Err(Error::NotSubgroup(format!("element {h} outside group")));
        }
        in_h[h] = true;
    }
    if !in_h[e] {
        return Err(Error::NotSubgroup("subgroup does not contain the unit".into()));
    }
    for &a in subgroup {
        for &b in subgroup {
            if !in_h[group.mul(a, b)] {
                return Err(Error::NotSubgroup(format!(
                    "{a}*{b} = {} leaves the subgroup",
                    group.mul(a, b)
                )));
            }
        }
    }
    let mut s_index = vec![None; n];
    for (i, &s) in transversal.iter().enumerate() {
        if s >= n {
            return Err(Error::NotTransversal(format!("element {s} outside group")));
        }
        if s_index[s].is_some() {
            return Err(Error::NotTransversal(format!("element {s} listed twice")));
        }
        s_index[s] = Some(i);
    }
    let unit = s_index[e].ok_or_else(|| Error::NotTransversal("unit is not in S".into()))?;
    // p_S(g) = the s in S with g in sH
    let hs: Vec<usize> = (0..n).filter(|&h| in_h[h]).collect();
    let mut proj = vec![None; n];
    for (i, &s) in transversal.iter().enumerate() {
        for &h in &hs {
            let g = group.mul(s, h);
            if let Some(prev) = proj[g] {
                return Err(Error::NotTransversal(format!(
                    "coset of {g} is met by both {} and {s}",
                    transversal[prev]
                )));
            }
            proj[g] = Some(i);
        }
    }
    if let Some(g) = (0..n).find(|&g| proj[g].is_none()) {
        return Err(Error::NotTransversal(format!("coset {g}H is missed")));
    }
    let k = transversal.len();
    let table = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| proj[group.mul(transversal[i], transversal[j])].unwrap())
                .collect()
        })
        .collect();
    let mut out = CayleyTable::new(table, Some(unit))?;
    if let Some(sym) = &group.symbols {
        out.symbols = Some(transversal.iter().map(|&s| sym[s].clone()).collect());
    }
    Ok(out)
}

/// Semidirect loop `(g, A)(h, B) = (g A(h), A o B)` over a set of loop
/// automorphisms given as permutations. Pair `(g, a)` has index
/// `g * autos.len() + a`.
pub fn semidirect_loop(lp: &CayleyTable, autos: &[Vec<usize>]) -> Result<CayleyTable> {
    lp.check()?;
    let n = lp.order;
    let e = lp
        .find_unit()
        .ok_or_else(|| Error::MalformedTable("loop table has no unit".into()))?;
    if autos.is_empty() {
        return Err(Error::NotAutomorphism("automorphism list is empty".into()));
    }
    for (i, a) in autos.iter().enumerate() {
        if a.len() != n {
            return Err(Error::NotAutomorphism(format!(
                "automorphism {i} has length {}, expected {n}",
                a.len()
            )));
        }
        let mut seen = vec![false; n];
        for &v in a {
            if v >= n || seen[v] {
                return Err(Error::NotAutomorphism(format!("automorphism {i} is not a permutation")));
            }
            seen[v] = true;
        }
        for x in 0..n {
            for y in 0..n {
                if a[lp.mul(x, y)] != lp.mul(a[x], a[y]) {
                    return Err(Error::NotAutomorphism(format!(
                        "automorphism {i} fails A({x}*{y}) = A({x})*A({y})"
                    )));
                }
            }
        }
        if a[e] != e {
            return Err(Error::NotAutomorphism(format!("automorphism {i} moves the unit")));
        }
    }
    let identity: Vec<usize> = (0..n).collect();
    let id_idx = autos
        .iter()
        .position(|a| *a == identity)
        .ok_or_else(|| Error::NotAutomorphism("identity automorphism missing".into()))?;
    let k = autos.len();
    let mut compose = vec![vec![0usize; k]; k];
    for (i, a) in autos.iter().enumerate() {
        for (j, b) in autos.iter().enumerate() {
            let ab: Vec<usize> = (0..n).map(|x| a[b[x]]).collect();
            compose[i][j] = autos.iter().position(|c| *c == ab).ok_or_else(|| {
                Error::NotAutomorphism(format!("automorphisms {i} o {j} not in the list"))
            })?;
        }
    }
    let order = n * k;
    let table = (0..order)
        .map(|p| {
            let (g, a) = (p / k, p % k);
            (0..order)
                .map(|q| {
                    let (h, b) = (q / k, q % k);
                    lp.mul(g, autos[a][h]) * k + compose[a][b]
                })
                .collect()
        })
        .collect();
    let mut out = CayleyTable::new(table, Some(e * k + id_idx))?;
    out.symbols = Some(
        (0..order)
            .map(|p| format!("({},A{})", lp.name(p / k), p % k))
            .collect(),
    );
    Ok(out)
}
