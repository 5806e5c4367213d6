use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::linop::{normalize_nonexpansive, SymOperator};
use crate::network::{Batch, Samples};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub user: u32,
    pub item: u32,
    pub rating: u8,
    pub timestamp: u64,
}

/// Ratings with dense user and item indices (sorted by id).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RatingsTable {
    records: Vec<Rating>,
    users: Vec<u32>,
    items: Vec<u32>,
    user_index: HashMap<u32, usize>,
    item_index: HashMap<u32, usize>,
}

impl RatingsTable {
    /// Rejects ratings outside `1..=5` and repeated `(user, item)` pairs.
    pub fn new(records: Vec<Rating>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(records.len());
        for r in &records {
            if !(1..=5).contains(&r.rating) {
                return Err(Error::Data(format!("rating {} for user {} item {} outside 1..5", r.rating, r.user, r.item)));
            }
            if !seen.insert((r.user, r.item)) {
                return Err(Error::Data(format!("duplicate rating for user {} item {}", r.user, r.item)));
            }
        }
        let mut users: Vec<u32> = records.iter().map(|r| r.user).collect();
        users.sort_unstable();
        users.dedup();
        let mut items: Vec<u32> = records.iter().map(|r| r.item).collect();
        items.sort_unstable();
        items.dedup();
        let user_index = users.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        let item_index = items.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        Ok(RatingsTable {
            records,
            users,
            items,
            user_index,
            item_index,
        })
    }

    pub fn records(&self) -> &[Rating] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn users(&self) -> &[u32] {
        &self.users
    }

    pub fn items(&self) -> &[u32] {
        &self.items
    }

    pub fn user_index(&self, id: u32) -> Option<usize> {
        self.user_index.get(&id).copied()
    }

    pub fn item_index(&self, id: u32) -> Option<usize> {
        self.item_index.get(&id).copied()
    }

    /// Dense `users x items` ratings and a 0/1 observation mask.
    pub fn dense(&self) -> (Array2<f64>, Array2<f64>) {
        let mut r = Array2::zeros((self.users.len(), self.items.len()));
        let mut m = Array2::zeros(r.dim());
        for rec in &self.records {
            let (u, i) = (self.user_index[&rec.user], self.item_index[&rec.item]);
            r[[u, i]] = rec.rating as f64;
            m[[u, i]] = 1.0;
        }
        (r, m)
    }
}

/// Reads the tab-separated `user item rating timestamp` layout.
pub fn load_movielens(path: &Path) -> Result<RatingsTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut records = Vec::new();
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.display().to_string(),
        line: line as usize,
        message,
    };
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 4 {
            return Err(parse_err(line, format!("expected 4 tab-separated fields, found {}", row.len())));
        }
        let field = |i: usize, name: &str| -> Result<u64> {
            row[i]
                .trim()
                .parse::<u64>()
                .map_err(|e| parse_err(line, format!("{name} {:?}: {e}", &row[i])))
        };
        let user = field(0, "user")?;
        let item = field(1, "item")?;
        let rating = field(2, "rating")?;
        let timestamp = field(3, "timestamp")?;
        let small = |v: u64, name: &str| u32::try_from(v).map_err(|_| parse_err(line, format!("{name} id {v} too large")));
        if !(1..=5).contains(&rating) {
            return Err(parse_err(line, format!("rating {rating} outside 1..5")));
        }
        records.push(Rating {
            user: small(user, "user")?,
            item: small(item, "item")?,
            rating: rating as u8,
            timestamp,
        });
    }
    RatingsTable::new(records)
}

/// Writes a table in the layout read by [`load_movielens`].
pub fn write_u_data(table: &RatingsTable, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in table.records() {
        writeln!(w, "{}\t{}\t{}\t{}", r.user, r.item, r.rating, r.timestamp).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Ratings minus each user's mean, on the dense `users x items` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Deviations {
    /// Zero where unobserved.
    pub values: Array2<f64>,
    pub observed: Array2<f64>,
    pub user_means: Vec<f64>,
}

impl Deviations {
    /// `deviation + mean` on observed entries, zero elsewhere.
    pub fn reconstruct(&self) -> Array2<f64> {
        let mut r = self.values.clone();
        for ((u, i), v) in r.indexed_iter_mut() {
            if self.observed[[u, i]] != 0.0 {
                *v += self.user_means[u];
            }
        }
        r
    }
}

pub fn center_ratings(t: &RatingsTable) -> Deviations {
    let (mut r, m) = t.dense();
    let means: Vec<f64> = r
        .rows()
        .into_iter()
        .zip(m.rows())
        .map(|(row, mask)| row.sum() / mask.sum())
        .collect();
    for ((u, i), v) in r.indexed_iter_mut() {
        if m[[u, i]] != 0.0 {
            *v -= means[u];
        }
    }
    Deviations {
        values: r,
        observed: m,
        user_means: means,
    }
}

/// Pearson correlation between users over co-rated items; zero when the
/// overlap is below `min_overlap` or either side is constant there.
pub fn pearson_matrix(t: &RatingsTable, min_overlap: usize) -> Array2<f64> {
    let (r, m) = t.dense();
    let per_user: Vec<Vec<(usize, f64)>> = (0..r.nrows())
        .map(|u| (0..r.ncols()).filter(|&i| m[[u, i]] != 0.0).map(|i| (i, r[[u, i]])).collect())
        .collect();
    let n = per_user.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|u| {
            let mut row = vec![0.0; n];
            for (v, slot) in row.iter_mut().enumerate().skip(u + 1) {
                let (a, b) = (&per_user[u], &per_user[v]);
                let (mut i, mut j) = (0, 0);
                let mut pairs = Vec::new();
                while i < a.len() && j < b.len() {
                    match a[i].0.cmp(&b[j].0) {
                        std::cmp::Ordering::Less => i += 1,
                        std::cmp::Ordering::Greater => j += 1,
                        std::cmp::Ordering::Equal => {
                            pairs.push((a[i].1, b[j].1));
                            i += 1;
                            j += 1;
                        }
                    }
                }
                if pairs.len() < min_overlap.max(2) {
                    continue;
                }
                let k = pairs.len() as f64;
                let ma = pairs.iter().map(|p| p.0).sum::<f64>() / k;
                let mb = pairs.iter().map(|p| p.1).sum::<f64>() / k;
                let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
                for (x, y) in &pairs {
                    sab += (x - ma) * (y - mb);
                    saa += (x - ma) * (x - ma);
                    sbb += (y - mb) * (y - mb);
                }
                if saa > 0.0 && sbb > 0.0 {
                    *slot = (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0);
                }
            }
            row
        })
        .collect();
    let mut c = Array2::zeros((n, n));
    for u in 0..n {
        for v in (u + 1)..n {
            c[[u, v]] = rows[u][v];
            c[[v, u]] = rows[u][v];
        }
    }
    c
}

#[derive(Clone, Debug)]
pub struct CorrelationGraph {
    pub shift: SymOperator,
    /// Users left without any edge.
    pub isolated: Vec<usize>,
}

/// Mutual-kNN graph on positive Pearson correlations, normalized to be
/// nonexpansive. Ties at the `knn`-th rank go to the lower user index.
pub fn correlation_graph(t: &RatingsTable, knn: usize, min_overlap: usize) -> Result<CorrelationGraph> {
    if knn == 0 {
        return Err(Error::InvalidArgument("knn must be >= 1".into()));
    }
    if t.users().is_empty() {
        return Err(Error::Data("no users".into()));
    }
    let c = pearson_matrix(t, min_overlap).mapv(|v| v.max(0.0));
    let n = c.nrows();
    let top: Vec<Vec<bool>> = (0..n)
        .into_par_iter()
        .map(|u| {
            let mut cand: Vec<usize> = (0..n).filter(|&v| v != u && c[[u, v]] > 0.0).collect();
            cand.sort_by(|&a, &b| c[[u, b]].total_cmp(&c[[u, a]]).then(a.cmp(&b)));
            let mut keep = vec![false; n];
            for &v in cand.iter().take(knn) {
                keep[v] = true;
            }
            keep
        })
        .collect();
    let mut s = Array2::zeros((n, n));
    for u in 0..n {
        for v in (u + 1)..n {
            if top[u][v] && top[v][u] {
                s[[u, v]] = c[[u, v]];
                s[[v, u]] = c[[u, v]];
            }
        }
    }
    let isolated = (0..n).filter(|&u| s.row(u).iter().all(|&x| x == 0.0)).collect();
    Ok(CorrelationGraph {
        shift: normalize_nonexpansive(&SymOperator::new(s)?)?,
        isolated,
    })
}

/// Movie-level split and bookkeeping for [`movie_samples`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MovieSplit {
    pub train_items: Vec<usize>,
    pub test_items: Vec<usize>,
    /// Items with fewer than two ratings.
    pub dropped_items: Vec<usize>,
}

/// One sample per movie: the input keeps a random `q` fraction of the
/// observed deviations, the target holds all of them, and the mask marks
/// the held-out observed entries.
pub fn movie_samples(dev: &Deviations, q: f64, train_frac: f64, seed: u64) -> Result<(Dataset, MovieSplit)> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Config(format!("observed fraction must lie in (0, 1), got {q}")));
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Config(format!("train fraction must lie in (0, 1), got {train_frac}")));
    }
    let (n_users, n_items) = dev.values.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut per_item = Vec::new();
    for i in 0..n_items {
        let obs: Vec<usize> = (0..n_users).filter(|&u| dev.observed[[u, i]] != 0.0).collect();
        if obs.len() < 2 {
            dropped.push(i);
            continue;
        }
        let k = ((q * obs.len() as f64).round() as usize).clamp(1, obs.len());
        let shown: Vec<usize> = obs.choose_multiple(&mut rng, k).copied().collect();
        kept.push(i);
        per_item.push((obs, shown));
    }
    let mut order: Vec<usize> = (0..kept.len()).collect();
    order.shuffle(&mut rng);
    let n_train = ((train_frac * kept.len() as f64).round() as usize).clamp(1, kept.len().saturating_sub(1).max(1));
    if kept.len() < 2 {
        return Err(Error::Data("fewer than two movies with at least two ratings".into()));
    }
    let build = |idx: &[usize]| -> Samples {
        let mut x = Array2::zeros((n_users, idx.len()));
        let mut y = Array2::zeros((n_users, idx.len()));
        let mut m = Array2::zeros((n_users, idx.len()));
        for (s, &k) in idx.iter().enumerate() {
            let item = kept[k];
            let (obs, shown) = &per_item[k];
            for &u in obs {
                y[[u, s]] = dev.values[[u, item]];
                m[[u, s]] = 1.0;
            }
            for &u in shown {
                x[[u, s]] = dev.values[[u, item]];
                m[[u, s]] = 0.0;
            }
        }
        Samples {
            inputs: Batch {
                features: vec![x],
                measure_weight: 1.0,
            },
            targets: Batch {
                features: vec![y],
                measure_weight: 1.0,
            },
            mask: Some(vec![m]),
        }
    };
    let mut train_idx = order[..n_train].to_vec();
    let mut test_idx = order[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let split = MovieSplit {
        train_items: train_idx.iter().map(|&k| kept[k]).collect(),
        test_items: test_idx.iter().map(|&k| kept[k]).collect(),
        dropped_items: dropped,
    };
    Ok((
        Dataset {
            train: build(&train_idx),
            test: build(&test_idx),
        },
        split,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticRatingsParams {
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    pub rank: usize,
    pub min_per_user: usize,
    pub seed: u64,
}

impl Default for SyntheticRatingsParams {
    fn default() -> Self {
        SyntheticRatingsParams {
            users: 943,
            items: 1682,
            ratings: 100_000,
            rank: 4,
            min_per_user: 20,
            seed: 0,
        }
    }
}

/// A ratings table with the shape of a 100k-rating collection, drawn from
/// a low-rank taste model with user and item biases and popularity-skewed
/// item choice.
pub fn synthetic_ratings(params: &SyntheticRatingsParams) -> Result<RatingsTable> {
    let SyntheticRatingsParams {
        users,
        items,
        ratings,
        rank,
        min_per_user,
        seed,
    } = *params;
    if users == 0 || items == 0 || ratings < users * min_per_user || ratings > users * items {
        return Err(Error::Config("inconsistent synthetic ratings sizes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let lognormal = LogNormal::new(0.0, 1.0).expect("valid lognormal");
    let uf = Array2::from_shape_simple_fn((users, rank), || normal.sample(&mut rng));
    let vf = Array2::from_shape_simple_fn((items, rank), || normal.sample(&mut rng));
    let ub: Vec<f64> = (0..users).map(|_| 0.4 * normal.sample(&mut rng)).collect();
    let ib: Vec<f64> = (0..items).map(|_| 0.5 * normal.sample(&mut rng)).collect();
    let popularity: Vec<f64> = (0..items).map(|_| lognormal.sample(&mut rng)).collect();
    let activity: Vec<f64> = (0..users).map(|_| lognormal.sample(&mut rng)).collect();

    let extra = (ratings - users * min_per_user) as f64;
    let total_act: f64 = activity.iter().sum();
    let mut counts: Vec<usize> = activity
        .iter()
        .map(|a| (min_per_user + (extra * a / total_act).floor() as usize).min(items))
        .collect();
    let mut missing = ratings - counts.iter().sum::<usize>();
    let mut u = 0;
    while missing > 0 {
        if counts[u] < items {
            counts[u] += 1;
            missing -= 1;
        }
        u = (u + 1) % users;
    }
    let scale = 0.6 / (rank as f64).sqrt();
    let item_ids: Vec<usize> = (0..items).collect();
    let mut records = Vec::with_capacity(ratings);
    let mut ts: u64 = 874_724_710;
    for (u, &c) in counts.iter().enumerate() {
        let chosen = item_ids
            .choose_multiple_weighted(&mut rng, c, |&i| popularity[i])
            .map_err(|e| Error::Config(format!("item sampling failed: {e}")))?;
        for &i in chosen {
            let taste = uf.row(u).dot(&vf.row(i)) * scale;
            let raw = 3.5 + ub[u] + ib[i] + taste + 0.5 * normal.sample(&mut rng);
            ts += rng.random_range(1..400);
            records.push(Rating {
                user: u as u32 + 1,
                item: i as u32 + 1,
                rating: raw.round().clamp(1.0, 5.0) as u8,
                timestamp: ts,
            });
        }
    }
    RatingsTable::new(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn table(rows: &[(u32, u32, u8)]) -> RatingsTable {
        RatingsTable::new(
            rows.iter()
                .map(|&(user, item, rating)| Rating {
                    user,
                    item,
                    rating,
                    timestamp: 0,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn parse_fixture_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.data");
        std::fs::write(&p, "1\t10\t4\t881250949\n2\t10\t3\t891717742\n1\t20\t5\t878887116\n").unwrap();
        let t = load_movielens(&p).unwrap();
        assert_eq!((t.len(), t.users().len(), t.items().len()), (3, 2, 2));

        std::fs::write(&p, "").unwrap();
        assert!(load_movielens(&p).unwrap().is_empty());

        let mut f = std::fs::File::create(&p).unwrap();
        writeln!(f, "1\t10\t4\t1\n1\tx\t4\t1").unwrap();
        drop(f);
        match load_movielens(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::write(&p, "1\t10\t4\t1\n1\t10\t3\t2\n").unwrap();
        assert!(matches!(load_movielens(&p), Err(Error::Data(_))));
    }

    #[test]
    fn centering() {
        let t = table(&[(1, 1, 3), (1, 2, 3), (2, 1, 4), (3, 1, 1), (3, 2, 5)]);
        let d = center_ratings(&t);
        assert_eq!(d.user_means, vec![3.0, 4.0, 3.0]);
        assert_eq!(d.values.row(0).to_vec(), vec![0.0, 0.0]);
        assert_eq!(d.values.row(1).to_vec(), vec![0.0, 0.0]);
        assert_eq!(d.reconstruct(), t.dense().0);
    }

    #[test]
    fn identical_users_correlate_fully() {
        let mut rows = Vec::new();
        for i in 1..=6u32 {
            let r = (i % 5 + 1) as u8;
            rows.push((1, i, r));
            rows.push((2, i, r));
            rows.push((3, i, 6 - r));
        }
        let t = table(&rows);
        let c = pearson_matrix(&t, 5);
        assert!((c[[0, 1]] - 1.0).abs() < 1e-12);
        assert!(c[[0, 2]] < 0.0);
        let g = correlation_graph(&t, 1, 5).unwrap();
        assert!(g.shift.matrix()[[0, 1]] > 0.0);
        assert_eq!(g.isolated, vec![2]);
    }

    #[test]
    fn movie_samples_are_disjoint_and_deterministic() {
        let t = synthetic_ratings(&SyntheticRatingsParams {
            users: 30,
            items: 40,
            ratings: 600,
            min_per_user: 5,
            ..SyntheticRatingsParams::default()
        })
        .unwrap();
        let d = center_ratings(&t);
        let (a, sa) = movie_samples(&d, 0.5, 0.8, 3).unwrap();
        let (b, sb) = movie_samples(&d, 0.5, 0.8, 3).unwrap();
        assert_eq!(sa, sb);
        assert_eq!(a.train.mask, b.train.mask);
        let x = &a.train.inputs.features[0];
        let m = &a.train.mask.as_ref().unwrap()[0];
        assert!(x.iter().zip(m.iter()).all(|(&x, &m)| x == 0.0 || m == 0.0));
    }

    #[test]
    fn synthetic_table_has_requested_size() {
        let t = synthetic_ratings(&SyntheticRatingsParams::default()).unwrap();
        assert_eq!(t.len(), 100_000);
        assert_eq!(t.users().len(), 943);
    }
}
