use std::cmp::Ordering;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Scores (items × users) with each user's train items (masked from
/// ranking) and test items (ground truth).
#[derive(Debug, Clone)]
pub struct RankingContext {
    scores: Array2<f64>,
    train: Vec<Vec<usize>>,
    test: Vec<Vec<usize>>,
    excluded: Vec<bool>,
}

impl RankingContext {
    pub fn new(scores: Array2<f64>, train: Vec<Vec<usize>>, test: Vec<Vec<usize>>) -> Result<Self> {
        let (items, users) = scores.dim();
        if train.len() != users || test.len() != users {
            return Err(Error::shape("ranking context users", users, format!("{}/{}", train.len(), test.len())));
        }
        if let Some(v) = scores.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("ranking scores ({v})"),
            });
        }
        let mut seen = vec![0u32; items];
        for u in 0..users {
            for &i in train[u].iter().chain(&test[u]) {
                if i >= items {
                    return Err(Error::Eval(format!("user {u}: item {i} out of range ({items} items)")));
                }
            }
            let stamp = u as u32 + 1;
            for &i in &train[u] {
                seen[i] = stamp;
            }
            if let Some(&i) = test[u].iter().find(|&&i| seen[i] == stamp) {
                return Err(Error::Eval(format!("user {u}: item {i} is in both train and test")));
            }
        }
        Ok(Self {
            scores,
            train,
            test,
            excluded: vec![false; users],
        })
    }

    /// Marks users to leave out of metric means (e.g. no train items left).
    pub fn exclude(&mut self, users: &[usize]) {
        for &u in users {
            if u < self.excluded.len() {
                self.excluded[u] = true;
            }
        }
    }

    pub fn items(&self) -> usize {
        self.scores.nrows()
    }

    pub fn users(&self) -> usize {
        self.scores.ncols()
    }

    pub fn test(&self, user: usize) -> &[usize] {
        &self.test[user]
    }

    pub fn train(&self, user: usize) -> &[usize] {
        &self.train[user]
    }

    /// Users counted in metric means: nonempty test set and not excluded.
    pub fn evaluable_users(&self) -> Vec<usize> {
        (0..self.users())
            .filter(|&u| !self.excluded[u] && !self.test[u].is_empty())
            .collect()
    }

    fn candidates(&self, user: usize) -> Vec<usize> {
        let mut masked = vec![false; self.items()];
        for &i in &self.train[user] {
            masked[i] = true;
        }
        (0..self.items()).filter(|&i| !masked[i]).collect()
    }
}

/// Top-`k` items for `user` by descending score, train items excluded, ties
/// broken by ascending item index.
pub fn rank_topk(ctx: &RankingContext, user: usize, k: usize) -> Result<Vec<usize>> {
    if user >= ctx.users() {
        return Err(Error::Eval(format!("user {user} out of range")));
    }
    let mut cands = ctx.candidates(user);
    if k == 0 || k > cands.len() {
        return Err(Error::Eval(format!(
            "K = {k} invalid for user {user} with {} unmasked items",
            cands.len()
        )));
    }
    let col = ctx.scores.column(user);
    let order = |a: &usize, b: &usize| col[*b].partial_cmp(&col[*a]).unwrap_or(Ordering::Equal).then(a.cmp(b));
    if k < cands.len() {
        cands.select_nth_unstable_by(k - 1, order);
        cands.truncate(k);
    }
    cands.sort_unstable_by(order);
    Ok(cands)
}

/// Per-user recall and NDCG at `k`. When a user has fewer than `k`
/// unmasked items, all of them are ranked.
pub fn user_metrics(ctx: &RankingContext, user: usize, k: usize) -> Result<(f64, f64)> {
    let test = ctx.test(user);
    if test.is_empty() {
        return Err(Error::Eval(format!("user {user} has no test items")));
    }
    let available = ctx.items() - ctx.train(user).len();
    let top = rank_topk(ctx, user, k.min(available))?;
    let mut relevant = vec![false; ctx.items()];
    for &i in test {
        relevant[i] = true;
    }
    let mut hits = 0usize;
    let mut dcg = 0.0;
    for (pos, &i) in top.iter().enumerate() {
        if relevant[i] {
            hits += 1;
            dcg += 1.0 / ((pos + 2) as f64).log2();
        }
    }
    let ideal: f64 = (0..test.len().min(k)).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
    Ok((hits as f64 / test.len() as f64, dcg / ideal))
}

fn mean_over_users(ctx: &RankingContext, k: usize, pick: fn((f64, f64)) -> f64) -> Result<f64> {
    let users = ctx.evaluable_users();
    if users.is_empty() {
        return Err(Error::Eval("no evaluable users (all test sets empty)".into()));
    }
    let mut sum = 0.0;
    for &u in &users {
        sum += pick(user_metrics(ctx, u, k)?);
    }
    Ok(sum / users.len() as f64)
}

pub fn recall_at_k(ctx: &RankingContext, k: usize) -> Result<f64> {
    mean_over_users(ctx, k, |m| m.0)
}

pub fn ndcg_at_k(ctx: &RankingContext, k: usize) -> Result<f64> {
    mean_over_users(ctx, k, |m| m.1)
}

/// Recall and NDCG for every `k` in one pass over users.
pub fn metrics_at(ctx: &RankingContext, ks: &[usize]) -> Result<Vec<(usize, f64, f64)>> {
    let users = ctx.evaluable_users();
    if users.is_empty() {
        return Err(Error::Eval("no evaluable users (all test sets empty)".into()));
    }
    let mut out = Vec::with_capacity(ks.len());
    for &k in ks {
        let (mut r, mut n) = (0.0, 0.0);
        for &u in &users {
            let (a, b) = user_metrics(ctx, u, k)?;
            r += a;
            n += b;
        }
        let c = users.len() as f64;
        out.push((k, r / c, n / c));
    }
    Ok(out)
}
