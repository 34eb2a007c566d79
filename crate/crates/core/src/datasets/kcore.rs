use std::collections::{HashMap, HashSet};

use super::interactions::InteractionRecord;

/// Iteratively drops users and items with fewer than `k` distinct partners
/// until every survivor has at least `k`. Record order is preserved.
pub fn k_core_filter(records: &[InteractionRecord], k: usize) -> Vec<InteractionRecord> {
    if k <= 1 {
        return records.to_vec();
    }
    let mut alive = vec![true; records.len()];
    loop {
        let mut user_items: HashMap<&str, HashSet<&str>> = HashMap::new();
        let mut item_users: HashMap<&str, HashSet<&str>> = HashMap::new();
        for (r, _) in records.iter().zip(&alive).filter(|(_, a)| **a) {
            user_items.entry(&r.user).or_default().insert(&r.item);
            item_users.entry(&r.item).or_default().insert(&r.user);
        }
        let mut changed = false;
        for (r, a) in records.iter().zip(alive.iter_mut()) {
            if *a && (user_items[r.user.as_str()].len() < k || item_users[r.item.as_str()].len() < k) {
                *a = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    records
        .iter()
        .zip(&alive)
        .filter(|(_, a)| **a)
        .map(|(r, _)| r.clone())
        .collect()
}
