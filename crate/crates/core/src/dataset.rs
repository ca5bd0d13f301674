//! Multi-behavior interaction store: TSV ingestion, deduplication, ID
//! remapping and leave-one-out splitting.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub type UserId = u32;
pub type ItemId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Interaction {
    pub user: UserId,
    pub item: ItemId,
    pub behavior: usize,
    pub order: u64,
}

/// Ordered behavior names; the last one is the target behavior.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BehaviorRegistry {
    names: Vec<String>,
}

impl BehaviorRegistry {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Config("at least one behavior is required".into()));
        }
        let mut out: Vec<String> = Vec::with_capacity(names.len());
        for n in names {
            let n = n.as_ref().trim();
            if n.is_empty() || n.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("invalid behavior name {n:?}")));
            }
            if out.iter().any(|o| o == n) {
                return Err(Error::Config(format!("duplicate behavior name {n:?}")));
            }
            out.push(n.to_string());
        }
        Ok(Self { names: out })
    }

    /// Parses a comma-separated list such as `click,cart,purchase`.
    pub fn parse(list: &str) -> Result<Self> {
        let names: Vec<&str> = list.split(',').collect();
        Self::new(&names)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn target(&self) -> usize {
        self.names.len() - 1
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, behavior: usize) -> &str {
        &self.names[behavior]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Raw-ID ↔ dense-index dictionary.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    index: HashMap<String, u32>,
    raw: Vec<String>,
}

impl IdMap {
    pub fn get_or_insert(&mut self, raw: &str) -> u32 {
        if let Some(&i) = self.index.get(raw) {
            return i;
        }
        let i = self.raw.len() as u32;
        self.index.insert(raw.to_string(), i);
        self.raw.push(raw.to_string());
        i
    }

    pub fn index_of(&self, raw: &str) -> Option<u32> {
        self.index.get(raw).copied()
    }

    pub fn raw(&self, index: u32) -> &str {
        &self.raw[index as usize]
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Builds a map whose `i`-th entry is `raws[i]`.
    pub fn from_raw(raws: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(raws.len());
        for (i, r) in raws.iter().enumerate() {
            if index.insert(r.clone(), i as u32).is_some() {
                return Err(Error::Shape(format!("duplicate raw id {r:?}")));
            }
        }
        Ok(Self { index, raw: raws })
    }
}

/// Per-behavior, per-user sorted item lists in compressed form.
#[derive(Debug, Clone, PartialEq, Eq)]
struct UserItemIndex {
    offsets: Vec<usize>,
    items: Vec<ItemId>,
}

impl UserItemIndex {
    fn build(num_users: usize, interactions: &[Interaction]) -> Self {
        let mut counts = vec![0usize; num_users + 1];
        for it in interactions {
            counts[it.user as usize + 1] += 1;
        }
        for u in 0..num_users {
            counts[u + 1] += counts[u];
        }
        let mut items = vec![0; interactions.len()];
        let mut cursor = counts.clone();
        for it in interactions {
            let c = &mut cursor[it.user as usize];
            items[*c] = it.item;
            *c += 1;
        }
        for u in 0..num_users {
            items[counts[u]..counts[u + 1]].sort_unstable();
        }
        Self {
            offsets: counts,
            items,
        }
    }

    fn items_of(&self, user: UserId) -> &[ItemId] {
        let u = user as usize;
        &self.items[self.offsets[u]..self.offsets[u + 1]]
    }
}

/// Deduplicated, index-remapped interaction store.
///
/// Interactions of each behavior are kept sorted by `order`; among equal
/// orders the earlier file position comes first.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    registry: BehaviorRegistry,
    users: IdMap,
    items: IdMap,
    interactions: Vec<Vec<Interaction>>,
    by_user: Vec<UserItemIndex>,
    user_target_count: Vec<usize>,
}

impl Dataset {
    /// Assembles a dataset from per-behavior interaction lists, which must
    /// already be in `(order, file position)` order.
    pub fn new(
        registry: BehaviorRegistry,
        users: IdMap,
        items: IdMap,
        interactions: Vec<Vec<Interaction>>,
    ) -> Result<Self> {
        if interactions.len() != registry.len() {
            return Err(Error::Shape(format!(
                "{} interaction lists for {} behaviors",
                interactions.len(),
                registry.len()
            )));
        }
        let (m, n) = (users.len(), items.len());
        let mut seen = std::collections::HashSet::new();
        for (b, list) in interactions.iter().enumerate() {
            for it in list {
                if it.behavior != b || it.user as usize >= m || it.item as usize >= n {
                    return Err(Error::Shape(format!("interaction out of bounds: {it:?}")));
                }
                if !seen.insert((it.user, it.item, b)) {
                    return Err(Error::Shape(format!("duplicate interaction: {it:?}")));
                }
            }
        }
        let by_user: Vec<UserItemIndex> = interactions
            .iter()
            .map(|list| UserItemIndex::build(m, list))
            .collect();
        let target = registry.target();
        let user_target_count = (0..m)
            .map(|u| by_user[target].items_of(u as UserId).len())
            .collect();
        Ok(Self {
            registry,
            users,
            items,
            interactions,
            by_user,
            user_target_count,
        })
    }

    /// Reads `user<TAB>item<TAB>behavior[<TAB>timestamp]` lines.
    pub fn load(path: impl AsRef<Path>, registry: &BehaviorRegistry) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text, registry, path)
    }

    pub fn parse_tsv(text: &str, registry: &BehaviorRegistry, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };

        let mut users = IdMap::default();
        let mut items = IdMap::default();
        // (user, item, behavior) -> (order, position)
        let mut earliest: HashMap<(UserId, ItemId, usize), (u64, u64)> = HashMap::new();
        let mut position = 0u64;

        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 && cols.len() != 4 {
                return Err(parse_err(
                    lineno,
                    format!(
                        "expected 3 or 4 tab-separated columns, found {}",
                        cols.len()
                    ),
                ));
            }
            if cols[0].is_empty() || cols[1].is_empty() {
                return Err(parse_err(lineno, "empty user or item id".into()));
            }
            let behavior = registry
                .index_of(cols[2].trim())
                .ok_or_else(|| parse_err(lineno, format!("unknown behavior {:?}", cols[2])))?;
            let order = match cols.get(3) {
                Some(ts) => ts
                    .trim()
                    .parse::<u64>()
                    .map_err(|_| parse_err(lineno, format!("invalid timestamp {ts:?}")))?,
                None => position,
            };
            let u = users.get_or_insert(cols[0]);
            let i = items.get_or_insert(cols[1]);
            earliest
                .entry((u, i, behavior))
                .and_modify(|cur| {
                    if (order, position) < *cur {
                        *cur = (order, position);
                    }
                })
                .or_insert((order, position));
            position += 1;
        }
        if position == 0 {
            return Err(Error::EmptyInput(origin.to_path_buf()));
        }

        let mut lists: Vec<Vec<(u64, Interaction)>> = vec![Vec::new(); registry.len()];
        for ((user, item, behavior), (order, pos)) in earliest {
            lists[behavior].push((
                pos,
                Interaction {
                    user,
                    item,
                    behavior,
                    order,
                },
            ));
        }
        let interactions = lists
            .into_iter()
            .map(|mut l| {
                l.sort_unstable_by_key(|(pos, it)| (it.order, *pos));
                l.into_iter().map(|(_, it)| it).collect()
            })
            .collect();
        Self::new(registry.clone(), users, items, interactions)
    }

    pub fn registry(&self) -> &BehaviorRegistry {
        &self.registry
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn num_behaviors(&self) -> usize {
        self.registry.len()
    }

    pub fn target_behavior(&self) -> usize {
        self.registry.target()
    }

    pub fn users(&self) -> &IdMap {
        &self.users
    }

    pub fn items(&self) -> &IdMap {
        &self.items
    }

    /// Interactions of one behavior in `(order, file position)` order.
    pub fn interactions(&self, behavior: usize) -> &[Interaction] {
        &self.interactions[behavior]
    }

    pub fn all_interactions(&self) -> impl Iterator<Item = &Interaction> {
        self.interactions.iter().flatten()
    }

    pub fn total_interactions(&self) -> usize {
        self.interactions.iter().map(Vec::len).sum()
    }

    /// Sorted items `user` interacted with under `behavior`.
    pub fn items_of(&self, user: UserId, behavior: usize) -> &[ItemId] {
        self.by_user[behavior].items_of(user)
    }

    pub fn target_items_of(&self, user: UserId) -> &[ItemId] {
        self.items_of(user, self.target_behavior())
    }

    pub fn has_interaction(&self, user: UserId, item: ItemId, behavior: usize) -> bool {
        self.items_of(user, behavior).binary_search(&item).is_ok()
    }

    pub fn user_target_count(&self) -> &[usize] {
        &self.user_target_count
    }

    pub fn stats(&self) -> DatasetStats {
        let per_behavior = (0..self.num_behaviors())
            .map(|b| {
                (
                    self.registry.name(b).to_string(),
                    self.interactions[b].len(),
                )
            })
            .collect();
        let m = self.num_users().max(1) as f64;
        DatasetStats {
            users: self.num_users(),
            items: self.num_items(),
            interactions: self.total_interactions(),
            per_behavior,
            mean_target_per_user: self.user_target_count.iter().sum::<usize>() as f64 / m,
        }
    }
}

/// The quantities reported per dataset: sizes, per-behavior counts and the
/// mean number of target interactions per user.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub per_behavior: Vec<(String, usize)>,
    pub mean_target_per_user: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeldOut {
    pub user: UserId,
    pub item: ItemId,
    pub order: u64,
}

/// Leave-one-out split: training store plus at most one held-out target
/// item per user, sorted by user.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub test: Vec<HeldOut>,
}

/// Moves each user's latest target interaction to the test set, for every
/// user with at least two target interactions.
pub fn leave_one_out_split(data: &Dataset) -> Split {
    let target = data.target_behavior();
    let mut latest: Vec<Option<usize>> = vec![None; data.num_users()];
    // list is sorted by (order, position), so the last index per user wins ties
    for (idx, it) in data.interactions(target).iter().enumerate() {
        latest[it.user as usize] = Some(idx);
    }
    let mut held = vec![false; data.interactions(target).len()];
    let mut test = Vec::new();
    for (u, idx) in latest.iter().enumerate() {
        if let Some(idx) = *idx {
            if data.user_target_count()[u] >= 2 {
                held[idx] = true;
                let it = data.interactions(target)[idx];
                test.push(HeldOut {
                    user: it.user,
                    item: it.item,
                    order: it.order,
                });
            }
        }
    }
    let mut lists = data.interactions.clone();
    lists[target] = data
        .interactions(target)
        .iter()
        .zip(&held)
        .filter(|(_, &h)| !h)
        .map(|(it, _)| *it)
        .collect();
    let train = Dataset::new(
        data.registry.clone(),
        data.users.clone(),
        data.items.clone(),
        lists,
    )
    .expect("subset of a valid dataset is valid");
    Split { train, test }
}

const SNAPSHOT_MAGIC: &str = "#bcipm-split v1";

impl Split {
    pub fn test_item(&self, user: UserId) -> Option<ItemId> {
        self.test
            .binary_search_by_key(&user, |h| h.user)
            .ok()
            .map(|i| self.test[i].item)
    }

    /// Text snapshot: `M N K` header, behavior and raw-ID tables, then
    /// `u i b order` rows and `TEST u i order` rows.
    pub fn to_snapshot(&self) -> String {
        let d = &self.train;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} {} {}",
            d.num_users(),
            d.num_items(),
            d.num_behaviors()
        );
        let _ = writeln!(s, "{SNAPSHOT_MAGIC}");
        for name in d.registry.names() {
            let _ = writeln!(s, "B\t{name}");
        }
        for raw in &d.users.raw {
            let _ = writeln!(s, "U\t{raw}");
        }
        for raw in &d.items.raw {
            let _ = writeln!(s, "I\t{raw}");
        }
        for it in d.all_interactions() {
            let _ = writeln!(s, "{}\t{}\t{}\t{}", it.user, it.item, it.behavior, it.order);
        }
        for h in &self.test {
            let _ = writeln!(s, "TEST\t{}\t{}\t{}", h.user, h.item, h.order);
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_snapshot()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_snapshot(&text, path)
    }

    pub fn from_snapshot(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, message: &str| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message: message.to_string(),
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines
            .next()
            .ok_or(Error::EmptyInput(origin.to_path_buf()))?;
        let dims: Vec<usize> = header
            .split(' ')
            .map(|t| t.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| err(1, "bad `M N K` header"))?;
        let [m, n, k] = dims[..] else {
            return Err(err(1, "bad `M N K` header"));
        };
        match lines.next() {
            Some((_, SNAPSHOT_MAGIC)) => {}
            _ => return Err(err(2, "missing snapshot marker")),
        }

        let mut names = Vec::new();
        let mut users = Vec::new();
        let mut items = Vec::new();
        let mut lists: Vec<Vec<Interaction>> = vec![Vec::new(); k];
        let mut test = Vec::new();
        let num = |s: &str, line: usize| -> Result<u64> {
            s.parse().map_err(|_| err(line, "expected an integer"))
        };
        for (lineno, line) in lines {
            let cols: Vec<&str> = line.split('\t').collect();
            match cols[..] {
                ["B", name] => names.push(name),
                ["U", raw] => users.push(raw.to_string()),
                ["I", raw] => items.push(raw.to_string()),
                ["TEST", u, i, o] => test.push(HeldOut {
                    user: num(u, lineno)? as UserId,
                    item: num(i, lineno)? as ItemId,
                    order: num(o, lineno)?,
                }),
                [u, i, b, o] => {
                    let b = num(b, lineno)? as usize;
                    if b >= k {
                        return Err(err(lineno, "behavior index out of range"));
                    }
                    lists[b].push(Interaction {
                        user: num(u, lineno)? as UserId,
                        item: num(i, lineno)? as ItemId,
                        behavior: b,
                        order: num(o, lineno)?,
                    });
                }
                _ => return Err(err(lineno, "unrecognized snapshot row")),
            }
        }
        if names.len() != k || users.len() != m || items.len() != n {
            return Err(err(1, "header counts disagree with tables"));
        }
        let train = Dataset::new(
            BehaviorRegistry::new(&names)?,
            IdMap::from_raw(users)?,
            IdMap::from_raw(items)?,
            lists,
        )?;
        for h in &test {
            if h.user as usize >= m || h.item as usize >= n {
                return Err(Error::Shape(format!("test entry out of bounds: {h:?}")));
            }
        }
        if test.windows(2).any(|w| w[0].user >= w[1].user) {
            return Err(Error::Shape(
                "test entries must be sorted by unique user".into(),
            ));
        }
        Ok(Split { train, test })
    }
}
