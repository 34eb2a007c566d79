use std::collections::BTreeMap;

use ndarray::Array2;

use super::interactions::InteractionRecord;
use crate::error::{Error, Result};
use crate::numerics::Real;

/// Dense token ↔ index maps. Indices follow lexicographic token order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Catalog {
    users: Vec<String>,
    items: Vec<String>,
    user_index: BTreeMap<String, usize>,
    item_index: BTreeMap<String, usize>,
}

impl Catalog {
    pub fn from_records(records: &[InteractionRecord]) -> Self {
        let users = records.iter().map(|r| r.user.clone());
        let items = records.iter().map(|r| r.item.clone());
        Self::from_tokens(users, items)
    }

    pub fn from_tokens(
        users: impl IntoIterator<Item = String>,
        items: impl IntoIterator<Item = String>,
    ) -> Self {
        let index = |tokens: Vec<String>| -> BTreeMap<String, usize> {
            tokens.into_iter().enumerate().map(|(i, t)| (t, i)).collect()
        };
        let mut u: Vec<String> = users.into_iter().collect();
        let mut i: Vec<String> = items.into_iter().collect();
        u.sort();
        u.dedup();
        i.sort();
        i.dedup();
        Self {
            user_index: index(u.clone()),
            item_index: index(i.clone()),
            users: u,
            items: i,
        }
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn user(&self, token: &str) -> Option<usize> {
        self.user_index.get(token).copied()
    }

    pub fn item(&self, token: &str) -> Option<usize> {
        self.item_index.get(token).copied()
    }

    pub fn user_token(&self, idx: usize) -> &str {
        &self.users[idx]
    }

    pub fn item_token(&self, idx: usize) -> &str {
        &self.items[idx]
    }

    pub fn user_tokens(&self) -> &[String] {
        &self.users
    }

    pub fn item_tokens(&self) -> &[String] {
        &self.items
    }
}

/// Binarized items × users interaction matrix. An entry is 1 exactly when it
/// is observed, so the value matrix and the observation mask coincide.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingMatrix {
    entries: Array2<u8>,
}

impl RatingMatrix {
    pub fn zeros(items: usize, users: usize) -> Self {
        Self {
            entries: Array2::zeros((items, users)),
        }
    }

    pub fn from_entries(entries: Array2<u8>) -> Self {
        Self {
            entries: entries.mapv(|v| u8::from(v != 0)),
        }
    }

    pub fn items(&self) -> usize {
        self.entries.nrows()
    }

    pub fn users(&self) -> usize {
        self.entries.ncols()
    }

    pub fn get(&self, item: usize, user: usize) -> bool {
        self.entries[[item, user]] != 0
    }

    pub fn set(&mut self, item: usize, user: usize, observed: bool) {
        self.entries[[item, user]] = u8::from(observed);
    }

    pub fn entries(&self) -> &Array2<u8> {
        &self.entries
    }

    pub fn mask(&self) -> &Array2<u8> {
        &self.entries
    }

    pub fn values<T: Real>(&self) -> Array2<T> {
        self.entries
            .mapv(|v| if v != 0 { T::one() } else { T::zero() })
    }

    pub fn nnz(&self) -> usize {
        self.entries.iter().filter(|v| **v != 0).count()
    }

    /// Observed item indices of `user`, ascending.
    pub fn user_items(&self, user: usize) -> Vec<usize> {
        self.entries
            .column(user)
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn user_degree(&self, user: usize) -> usize {
        self.entries.column(user).iter().filter(|v| **v != 0).count()
    }

    pub fn item_degree(&self, item: usize) -> usize {
        self.entries.row(item).iter().filter(|v| **v != 0).count()
    }
}

pub fn build_rating_matrix(records: &[InteractionRecord], catalog: &Catalog) -> Result<RatingMatrix> {
    let mut m = RatingMatrix::zeros(catalog.num_items(), catalog.num_users());
    for r in records {
        let u = catalog.user(&r.user).ok_or_else(|| Error::UnknownToken {
            kind: "user",
            token: r.user.clone(),
        })?;
        let i = catalog.item(&r.item).ok_or_else(|| Error::UnknownToken {
            kind: "item",
            token: r.item.clone(),
        })?;
        m.set(i, u, true);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_entry() {
        let recs = vec![InteractionRecord::new("u", "i")];
        let cat = Catalog::from_records(&recs);
        let m = build_rating_matrix(&recs, &cat).unwrap();
        assert_eq!(m.entries(), &array![[1u8]]);
    }

    #[test]
    fn duplicates_collapse() {
        let one = vec![InteractionRecord::new("u", "i"), InteractionRecord::new("v", "j")];
        let mut dup = one.clone();
        dup.push(InteractionRecord::new("u", "i"));
        let cat = Catalog::from_records(&one);
        assert_eq!(
            build_rating_matrix(&one, &cat).unwrap(),
            build_rating_matrix(&dup, &cat).unwrap()
        );
    }

    #[test]
    fn identity_pattern_and_lexicographic_catalog() {
        let recs = vec![InteractionRecord::new("u1", "i1"), InteractionRecord::new("u0", "i0")];
        let cat = Catalog::from_records(&recs);
        assert_eq!(cat.user("u0"), Some(0));
        assert_eq!(cat.item_token(1), "i1");
        let m = build_rating_matrix(&recs, &cat).unwrap();
        assert_eq!(m.entries(), &array![[1u8, 0], [0, 1]]);
        assert_eq!(m.values::<f64>(), array![[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn unknown_token() {
        let cat = Catalog::from_records(&[InteractionRecord::new("u", "i")]);
        let err = build_rating_matrix(&[InteractionRecord::new("u", "zz")], &cat).unwrap_err();
        assert!(matches!(err, Error::UnknownToken { kind: "item", .. }));
    }
}
