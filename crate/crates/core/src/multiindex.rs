//! Sparse multiindices over 1-based variable indices.

use std::cmp::Ordering;
use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest total degree whose factorial is finite in `f64`.
pub const FACTORIAL_LIMIT: u32 = 170;

/// Finitely supported exponent vector, stored as `(k, α_k)` pairs with
/// strictly increasing `k ≥ 1` and `α_k ≥ 1`.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Multiindex {
    entries: Vec<(u32, u32)>,
}

impl Multiindex {
    pub fn zero() -> Self {
        Self::default()
    }

    /// The unit multiindex ε_k.
    pub fn unit(k: u32) -> Self {
        assert!(k >= 1, "variable indices are 1-based");
        Self { entries: vec![(k, 1)] }
    }

    /// Build from `(k, exponent)` pairs. Zero exponents are dropped; indices
    /// must be strictly increasing and at least 1.
    pub fn from_pairs<I: IntoIterator<Item = (u32, u32)>>(pairs: I) -> Result<Self> {
        let mut entries = Vec::new();
        let mut last = 0u32;
        for (k, a) in pairs {
            if k == 0 {
                return Err(Error::InvalidMultiindex("variable index 0".into()));
            }
            if k <= last {
                return Err(Error::InvalidMultiindex(format!(
                    "indices must be strictly increasing, got {k} after {last}"
                )));
            }
            last = k;
            if a > 0 {
                entries.push((k, a));
            }
        }
        Ok(Self { entries })
    }

    /// Build from a dense exponent vector; position 0 is variable 1.
    pub fn from_dense(exponents: &[u32]) -> Self {
        let entries = exponents
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > 0)
            .map(|(i, &a)| (i as u32 + 1, a))
            .collect();
        Self { entries }
    }

    /// Dense exponent vector of length `vars`.
    pub fn to_dense(&self, vars: usize) -> Vec<u32> {
        let mut out = vec![0; vars];
        for &(k, a) in &self.entries {
            if (k as usize) <= vars {
                out[k as usize - 1] = a;
            }
        }
        out
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total degree |α|.
    pub fn degree(&self) -> u32 {
        self.entries.iter().map(|&(_, a)| a).sum()
    }

    /// Exponent α_k.
    pub fn get(&self, k: u32) -> u32 {
        match self.entries.binary_search_by_key(&k, |&(j, _)| j) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0,
        }
    }

    /// Largest variable index present, 0 for the zero multiindex.
    pub fn max_var(&self) -> u32 {
        self.entries.last().map_or(0, |&(k, _)| k)
    }

    /// α! = Π_k α_k!.
    pub fn factorial(&self) -> Result<f64> {
        let deg = self.degree();
        if deg > FACTORIAL_LIMIT {
            return Err(Error::FactorialOverflow(deg));
        }
        Ok(self
            .entries
            .iter()
            .map(|&(_, a)| factorial(a))
            .product())
    }

    /// ln(α!).
    pub fn ln_factorial(&self) -> f64 {
        self.entries.iter().map(|&(_, a)| ln_factorial(a)).sum()
    }

    /// α − ε_k.
    pub fn decrement(&self, k: u32) -> Result<Self> {
        let i = self
            .entries
            .binary_search_by_key(&k, |&(j, _)| j)
            .map_err(|_| Error::NotDecrementable(k))?;
        let mut entries = self.entries.clone();
        if entries[i].1 == 1 {
            entries.remove(i);
        } else {
            entries[i].1 -= 1;
        }
        Ok(Self { entries })
    }

    /// α + ε_k.
    pub fn increment(&self, k: u32) -> Self {
        assert!(k >= 1, "variable indices are 1-based");
        let mut entries = self.entries.clone();
        match entries.binary_search_by_key(&k, |&(j, _)| j) {
            Ok(i) => entries[i].1 += 1,
            Err(i) => entries.insert(i, (k, 1)),
        }
        Self { entries }
    }

    /// Componentwise sum.
    pub fn add(&self, other: &Self) -> Self {
        let (a, b) = (&self.entries, &other.entries);
        let mut entries = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => {
                    entries.push(a[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    entries.push(b[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    entries.push((a[i].0, a[i].1 + b[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        entries.extend_from_slice(&a[i..]);
        entries.extend_from_slice(&b[j..]);
        Self { entries }
    }

    /// Componentwise partial order: `self ≤ other`.
    pub fn leq(&self, other: &Self) -> bool {
        self.entries.iter().all(|&(k, a)| other.get(k) >= a)
    }

    /// Componentwise difference `self − other`; requires `other ≤ self`.
    pub fn subtract(&self, other: &Self) -> Result<Self> {
        if !other.leq(self) {
            return Err(Error::NotDominated);
        }
        let entries = self
            .entries
            .iter()
            .filter_map(|&(k, a)| {
                let d = a - other.get(k);
                (d > 0).then_some((k, d))
            })
            .collect();
        Ok(Self { entries })
    }

    /// Multiset K_α with k repeated α_k times, sorted.
    pub fn characteristic_set(&self) -> Vec<u32> {
        self.entries
            .iter()
            .flat_map(|&(k, a)| std::iter::repeat_n(k, a as usize))
            .collect()
    }

    /// Inverse of [`characteristic_set`](Self::characteristic_set).
    pub fn from_characteristic_set(set: &[u32]) -> Self {
        let mut sorted = set.to_vec();
        sorted.sort_unstable();
        let mut entries: Vec<(u32, u32)> = Vec::new();
        for k in sorted {
            match entries.last_mut() {
                Some(last) if last.0 == k => last.1 += 1,
                _ => entries.push((k, 1)),
            }
        }
        Self { entries }
    }

    /// All β ≤ α, in no particular order.
    pub fn divisors(&self) -> Vec<Multiindex> {
        let mut out = vec![Multiindex::zero()];
        for &(k, a) in &self.entries {
            let mut next = Vec::with_capacity(out.len() * (a as usize + 1));
            for base in &out {
                for e in 0..=a {
                    let mut entries = base.entries.clone();
                    if e > 0 {
                        entries.push((k, e));
                    }
                    next.push(Multiindex { entries });
                }
            }
            out = next;
        }
        out
    }

    /// Rename variables through `map` (1-based to 1-based); `map` must be
    /// strictly increasing on the support.
    pub(crate) fn relabel(&self, map: &[u32]) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|&(k, a)| (map[k as usize - 1], a))
                .collect(),
        }
    }
}

impl Ord for Multiindex {
    /// Degree first, then lexicographic in the dense exponent vector with
    /// larger leading exponents first.
    fn cmp(&self, other: &Self) -> Ordering {
        let d = self.degree().cmp(&other.degree());
        if d != Ordering::Equal {
            return d;
        }
        for (&(ka, ea), &(kb, eb)) in self.entries.iter().zip(&other.entries) {
            if ka != kb {
                return ka.cmp(&kb);
            }
            if ea != eb {
                return eb.cmp(&ea);
            }
        }
        self.entries.len().cmp(&other.entries.len())
    }
}

impl PartialOrd for Multiindex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Multiindex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, (k, a)) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "[{k},{a}]")?;
        }
        f.write_str("]")
    }
}

impl fmt::Debug for Multiindex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for Multiindex {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.entries.len()))?;
        for &(k, a) in &self.entries {
            seq.serialize_element(&[k, a])?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for Multiindex {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let pairs: Vec<[u32; 2]> = Vec::deserialize(deserializer)?;
        Multiindex::from_pairs(pairs.into_iter().map(|[k, a]| (k, a))).map_err(de::Error::custom)
    }
}

impl std::str::FromStr for Multiindex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidMultiindex(e.to_string()))
    }
}

/// n! in double precision; infinite above 170.
pub fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// ln(n!) by direct summation (exact enough for n in the thousands).
pub fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Binomial coefficient C(n, k) as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// All multiindices over variables `1..=vars` with degree at most
/// `max_degree`, in the canonical order of [`Multiindex::cmp`].
pub fn enumerate(vars: usize, max_degree: usize) -> Vec<Multiindex> {
    let mut out = Vec::new();
    if vars == 0 {
        out.push(Multiindex::zero());
        return out;
    }
    let mut set = Vec::with_capacity(max_degree);
    for n in 0..=max_degree {
        combos(vars as u32, n, 1, &mut set, &mut out);
    }
    out
}

fn combos(vars: u32, remaining: usize, start: u32, set: &mut Vec<u32>, out: &mut Vec<Multiindex>) {
    if remaining == 0 {
        out.push(Multiindex::from_characteristic_set(set));
        return;
    }
    for k in start..=vars {
        set.push(k);
        combos(vars, remaining - 1, k, set, out);
        set.pop();
    }
}

/// Multiindices of degree exactly `n` over `1..=vars`.
pub fn enumerate_degree(vars: usize, n: usize) -> Vec<Multiindex> {
    let mut out = Vec::new();
    let mut set = Vec::with_capacity(n);
    if vars == 0 {
        if n == 0 {
            out.push(Multiindex::zero());
        }
        return out;
    }
    combos(vars as u32, n, 1, &mut set, &mut out);
    out
}
