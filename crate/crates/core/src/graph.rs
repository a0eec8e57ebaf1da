//! Region-annotated social graph: synthetic generation, trace loading and
//! structural measures.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, SimRng};
use crate::{RegionId, UserId};

/// Planar position in kilometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: RegionId,
    pub center: Point,
    /// Edge-server storage, in video size units.
    pub storage_slots: u64,
    /// Requests the edge server can serve per slot.
    pub bandwidth_units: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: UserId,
    pub home_region: RegionId,
    /// Probability of logging in during a slot.
    pub login_prob: f64,
}

/// Undirected friendship graph over users with home regions.
///
/// User and region ids are dense: user `i` lives at index `i`, same for
/// regions. Adjacency lists are sorted and deduplicated.
#[derive(Debug, Clone, PartialEq)]
pub struct SocialGraph {
    users: Vec<User>,
    regions: Vec<Region>,
    adj: Vec<Vec<UserId>>,
    n_edges: usize,
}

impl SocialGraph {
    /// Builds a graph and enforces every structural invariant. Self-loops and
    /// dangling endpoints are errors; repeated pairs (in either orientation)
    /// collapse to one undirected edge.
    pub fn new(
        regions: Vec<Region>,
        users: Vec<User>,
        edges: impl IntoIterator<Item = (UserId, UserId)>,
    ) -> Result<Self> {
        for (i, r) in regions.iter().enumerate() {
            if r.id as usize != i {
                return Err(Error::Integrity(format!(
                    "region ids must be contiguous from 0; found {} at position {i}",
                    r.id
                )));
            }
            if !r.center.x.is_finite() || !r.center.y.is_finite() {
                return Err(Error::Integrity(format!(
                    "region {} has non-finite coordinates",
                    r.id
                )));
            }
        }
        for (i, u) in users.iter().enumerate() {
            if u.id as usize != i {
                return Err(Error::Integrity(format!(
                    "user ids must be contiguous from 0; found {} at position {i}",
                    u.id
                )));
            }
            if !(0.0..=1.0).contains(&u.login_prob) {
                return Err(Error::Integrity(format!(
                    "user {} login_prob {} outside [0,1]",
                    u.id, u.login_prob
                )));
            }
            if u.home_region as usize >= regions.len() {
                return Err(Error::Integrity(format!(
                    "user {} references unknown region {}",
                    u.id, u.home_region
                )));
            }
        }

        let mut adj = vec![Vec::new(); users.len()];
        for (a, b) in edges {
            if a == b {
                return Err(Error::Integrity(format!("self-loop on user {a}")));
            }
            for endpoint in [a, b] {
                if endpoint as usize >= users.len() {
                    return Err(Error::Integrity(format!(
                        "edge ({a}, {b}) references unknown user {endpoint}"
                    )));
                }
            }
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        let mut degree_sum = 0;
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            degree_sum += list.len();
        }

        Ok(Self {
            users,
            regions,
            adj,
            n_edges: degree_sum / 2,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn users(&self) -> &[User] {
        &self.users
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn user(&self, id: UserId) -> Result<&User> {
        self.users.get(id as usize).ok_or_else(|| Error::user(id))
    }

    pub fn region(&self, id: RegionId) -> Result<&Region> {
        self.regions.get(id as usize).ok_or_else(|| Error::region(id))
    }

    pub fn contains_user(&self, id: UserId) -> bool {
        (id as usize) < self.users.len()
    }

    /// Sorted friends of `id`. Panics on an unknown id; use
    /// [`SocialGraph::user`] first when the id is untrusted.
    pub fn neighbors(&self, id: UserId) -> &[UserId] {
        &self.adj[id as usize]
    }

    pub fn degree(&self, id: UserId) -> usize {
        self.adj[id as usize].len()
    }

    pub fn has_edge(&self, a: UserId, b: UserId) -> bool {
        self.adj
            .get(a as usize)
            .is_some_and(|list| list.binary_search(&b).is_ok())
    }

    pub fn home_region(&self, id: UserId) -> RegionId {
        self.users[id as usize].home_region
    }

    /// Undirected edges as `(low, high)` pairs in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (UserId, UserId)> + '_ {
        self.adj.iter().enumerate().flat_map(|(u, list)| {
            let u = u as UserId;
            list.iter().filter(move |&&v| v > u).map(move |&v| (u, v))
        })
    }

    /// Distance between the home regions of two users (0 within a region).
    pub fn user_distance(&self, a: UserId, b: UserId) -> f64 {
        let ra = &self.regions[self.home_region(a) as usize];
        let rb = &self.regions[self.home_region(b) as usize];
        region_distance(ra, rb)
    }

    /// Mean user-to-user distance over all edges; 0 for an edgeless graph.
    pub fn mean_edge_distance(&self) -> f64 {
        let (sum, n) = self
            .edges()
            .fold((0.0, 0usize), |(s, n), (a, b)| (s + self.user_distance(a, b), n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Overwrites every region's edge-server capacities.
    pub fn set_region_capacities(&mut self, storage_slots: u64, bandwidth_units: u64) {
        for r in &mut self.regions {
            r.storage_slots = storage_slots;
            r.bandwidth_units = bandwidth_units;
        }
    }
}

pub fn region_distance(a: &Region, b: &Region) -> f64 {
    a.center.distance(&b.center)
}

/// Parameters of the geographic scale-free generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphGenConfig {
    /// Edges each arriving user tries to create.
    pub edges_per_node: usize,
    /// Probability that a follow-up edge closes a triangle with the previous
    /// target instead of doing another preferential pick.
    pub triad_prob: f64,
    /// Side of the square the region centres are scattered over.
    pub area_km: f64,
    /// Candidate draws allowed per edge before giving up on it.
    pub max_attempts: usize,
    pub login_prob: f64,
}

impl Default for GraphGenConfig {
    fn default() -> Self {
        Self {
            edges_per_node: 3,
            triad_prob: 0.6,
            area_km: 100.0,
            max_attempts: 64,
            login_prob: 0.5,
        }
    }
}

impl GraphGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.edges_per_node == 0 {
            return Err(Error::config("graph.edges_per_node must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.triad_prob) {
            return Err(Error::config("graph.triad_prob must be in [0,1]"));
        }
        if !(self.area_km.is_finite() && self.area_km >= 0.0) {
            return Err(Error::config("graph.area_km must be finite and >= 0"));
        }
        if self.max_attempts == 0 {
            return Err(Error::config("graph.max_attempts must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.login_prob) {
            return Err(Error::config("graph.login_prob must be in [0,1]"));
        }
        Ok(())
    }
}

/// Generates a scale-free friendship graph with geographic homophily.
///
/// Users arrive one at a time and attach to `edges_per_node` existing users.
/// The first target of each arrival is drawn preferentially (weight
/// `degree + 1`); follow-up targets close a triangle through a neighbour of
/// the previous target with probability `triad_prob`, and are otherwise drawn
/// preferentially as well. Every candidate is then kept only with probability
/// `exp(-d / homophily_scale_km)`, `d` being the distance between the two home
/// regions. Regions come with zero edge-server capacity; see
/// [`SocialGraph::set_region_capacities`].
pub fn generate_graph(
    n_users: usize,
    n_regions: usize,
    params: &GraphGenConfig,
    homophily_scale_km: f64,
    seed: u64,
) -> Result<SocialGraph> {
    if n_users == 0 || n_regions == 0 {
        return Err(Error::config("n_users and n_regions must be >= 1"));
    }
    if !(homophily_scale_km.is_finite() && homophily_scale_km > 0.0) {
        return Err(Error::config("homophily_scale_km must be > 0"));
    }
    params.validate()?;
    let mut rng = seed::rng_for(seed, seed::tag::GRAPH, 0);

    let regions: Vec<Region> = (0..n_regions)
        .map(|i| {
            let center = if n_regions == 1 {
                Point::new(params.area_km / 2.0, params.area_km / 2.0)
            } else {
                Point::new(
                    rng.gen::<f64>() * params.area_km,
                    rng.gen::<f64>() * params.area_km,
                )
            };
            Region {
                id: i as RegionId,
                center,
                storage_slots: 0,
                bandwidth_units: 0,
            }
        })
        .collect();
    let users: Vec<User> = (0..n_users)
        .map(|i| User {
            id: i as UserId,
            home_region: rng.gen_range(0..n_regions) as RegionId,
            login_prob: params.login_prob,
        })
        .collect();

    let accept = |rng: &mut SimRng, a: usize, b: usize| -> bool {
        let ra = &regions[users[a].home_region as usize];
        let rb = &regions[users[b].home_region as usize];
        let p = (-region_distance(ra, rb) / homophily_scale_km).exp();
        rng.gen::<f64>() < p
    };

    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_users];
    // Every edge endpoint, so a uniform pick from it is degree-proportional.
    let mut stubs: Vec<usize> = Vec::new();
    let m = params.edges_per_node;

    for new in 1..n_users {
        let mut last_target: Option<usize> = None;
        for _ in 0..m.min(new) {
            let mut linked = false;
            for _ in 0..params.max_attempts {
                let triad = last_target
                    .filter(|t| !adj[*t].is_empty() && rng.gen::<f64>() < params.triad_prob);
                let candidate = match triad {
                    Some(t) => {
                        let k = rng.gen_range(0..adj[t].len());
                        *adj[t].iter().nth(k).expect("index within degree")
                    }
                    None => {
                        let r = rng.gen_range(0..stubs.len() + new);
                        if r < stubs.len() {
                            stubs[r]
                        } else {
                            r - stubs.len()
                        }
                    }
                };
                if candidate == new || adj[new].contains(&candidate) {
                    continue;
                }
                if !accept(&mut rng, new, candidate) {
                    continue;
                }
                adj[new].insert(candidate);
                adj[candidate].insert(new);
                stubs.push(new);
                stubs.push(candidate);
                if triad.is_none() {
                    last_target = Some(candidate);
                }
                linked = true;
                break;
            }
            if !linked {
                break;
            }
        }
    }

    let edges = adj.iter().enumerate().flat_map(|(u, set)| {
        set.iter()
            .filter(move |&&v| v > u)
            .map(move |&v| (u as UserId, v as UserId))
    });
    SocialGraph::new(regions.clone(), users.clone(), edges.collect::<Vec<_>>())
}

pub(crate) fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

pub(crate) fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Reads the whitespace-separated `u v` edge list. Blank lines and text after
/// `#` are ignored.
pub fn read_edge_file(path: &Path) -> Result<Vec<(UserId, UserId)>> {
    let reader = BufReader::new(open(path)?);
    let mut edges = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 2 fields, found {}", fields.len()),
            ));
        }
        let parse = |s: &str| {
            s.parse::<UserId>()
                .map_err(|e| parse_err(path, line_no, format!("bad user id {s:?}: {e}")))
        };
        let (a, b) = (parse(fields[0])?, parse(fields[1])?);
        if a == b {
            return Err(parse_err(path, line_no, format!("self-loop on user {a}")));
        }
        edges.push((a, b));
    }
    Ok(edges)
}

pub(crate) fn csv_records<T: serde::de::DeserializeOwned>(
    path: &Path,
    header: &[&str],
) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let found: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if found != header {
        return Err(parse_err(
            path,
            1,
            format!("expected header {:?}, found {:?}", header.join(","), found.join(",")),
        ));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row: T = record
            .deserialize(None)
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        out.push(row);
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct UserRow {
    user_id: UserId,
    region_id: RegionId,
    login_prob: f64,
}

#[derive(Debug, Deserialize)]
struct RegionRow {
    region_id: RegionId,
    x_km: f64,
    y_km: f64,
    storage_slots: u64,
    bandwidth_units: u64,
}

pub const USER_HEADER: [&str; 3] = ["user_id", "region_id", "login_prob"];
pub const REGION_HEADER: [&str; 5] =
    ["region_id", "x_km", "y_km", "storage_slots", "bandwidth_units"];

/// Loads a graph from an edge list, a user CSV and a region CSV.
pub fn load_graph(edge_file: &Path, user_file: &Path, region_file: &Path) -> Result<SocialGraph> {
    let mut region_rows: Vec<RegionRow> = csv_records(region_file, &REGION_HEADER)?;
    region_rows.sort_by_key(|r| r.region_id);
    let regions = region_rows
        .into_iter()
        .map(|r| Region {
            id: r.region_id,
            center: Point::new(r.x_km, r.y_km),
            storage_slots: r.storage_slots,
            bandwidth_units: r.bandwidth_units,
        })
        .collect();

    let mut user_rows: Vec<UserRow> = csv_records(user_file, &USER_HEADER)?;
    user_rows.sort_by_key(|u| u.user_id);
    let users = user_rows
        .into_iter()
        .map(|u| User {
            id: u.user_id,
            home_region: u.region_id,
            login_prob: u.login_prob,
        })
        .collect();

    let edges = read_edge_file(edge_file)?;
    SocialGraph::new(regions, users, edges)
}

/// Writes the three graph files in the formats [`load_graph`] reads.
pub fn write_graph(g: &SocialGraph, edge_file: &Path, user_file: &Path, region_file: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(edge_file)?);
    writeln!(out, "# u v")?;
    for (a, b) in g.edges() {
        writeln!(out, "{a} {b}")?;
    }
    out.flush()?;

    let mut w = csv::Writer::from_path(user_file)?;
    w.write_record(USER_HEADER)?;
    for u in g.users() {
        w.write_record([
            u.id.to_string(),
            u.home_region.to_string(),
            u.login_prob.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(region_file)?;
    w.write_record(REGION_HEADER)?;
    for r in g.regions() {
        w.write_record([
            r.id.to_string(),
            r.center.x.to_string(),
            r.center.y.to_string(),
            r.storage_slots.to_string(),
            r.bandwidth_units.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean local clustering coefficient of the subgraph induced by `subset`.
///
/// Members whose induced degree is below 2 contribute 0. Duplicate ids in
/// `subset` are ignored.
pub fn clustering_coefficient(g: &SocialGraph, subset: &[UserId]) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::domain("clustering coefficient of an empty user set"));
    }
    let mut ordered = subset.to_vec();
    ordered.sort_unstable();
    ordered.dedup();
    for &u in &ordered {
        g.user(u)?;
    }
    let members: HashSet<UserId> = ordered.iter().copied().collect();

    let mut total = 0.0;
    let mut induced = Vec::new();
    for &u in &ordered {
        induced.clear();
        induced.extend(g.neighbors(u).iter().copied().filter(|v| members.contains(v)));
        let k = induced.len();
        if k < 2 {
            continue;
        }
        let mut links = 0usize;
        for (i, &a) in induced.iter().enumerate() {
            for &b in &induced[i + 1..] {
                if g.has_edge(a, b) {
                    links += 1;
                }
            }
        }
        total += links as f64 / (k * (k - 1) / 2) as f64;
    }
    Ok(total / ordered.len() as f64)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub fn region(id: RegionId, x: f64, y: f64) -> Region {
        Region {
            id,
            center: Point::new(x, y),
            storage_slots: 10,
            bandwidth_units: 10,
        }
    }

    /// Graph whose users all live in region 0 unless `homes` says otherwise.
    pub fn graph_from_edges(n: usize, edges: &[(UserId, UserId)]) -> SocialGraph {
        let users = (0..n)
            .map(|i| User {
                id: i as UserId,
                home_region: 0,
                login_prob: 1.0,
            })
            .collect();
        SocialGraph::new(vec![region(0, 0.0, 0.0)], users, edges.to_vec()).unwrap()
    }

    /// O(n³) oracle: for each member, test every ordered pair of other
    /// members for a closed triangle.
    pub fn brute_force_cc(g: &SocialGraph, subset: &[UserId]) -> f64 {
        let members: Vec<UserId> = {
            let mut m = subset.to_vec();
            m.sort_unstable();
            m.dedup();
            m
        };
        let mut total = 0.0;
        for &v in &members {
            let deg = members.iter().filter(|&&u| u != v && g.has_edge(v, u)).count();
            if deg < 2 {
                continue;
            }
            let mut closed = 0;
            for &a in &members {
                for &b in &members {
                    if a < b && a != v && b != v && g.has_edge(v, a) && g.has_edge(v, b) && g.has_edge(a, b) {
                        closed += 1;
                    }
                }
            }
            total += closed as f64 / (deg * (deg - 1) / 2) as f64;
        }
        total / members.len() as f64
    }

    #[test]
    fn single_user_graph_has_no_edges() {
        let g = generate_graph(1, 1, &GraphGenConfig::default(), 10.0, 7).unwrap();
        assert_eq!(g.n_users(), 1);
        assert_eq!(g.n_edges(), 0);
    }

    #[test]
    fn generation_is_reproducible() {
        let cfg = GraphGenConfig::default();
        let a = generate_graph(100, 4, &cfg, 10.0, 1).unwrap();
        let b = generate_graph(100, 4, &cfg, 10.0, 1).unwrap();
        assert_eq!(a.edges().collect::<Vec<_>>(), b.edges().collect::<Vec<_>>());
        assert_eq!(a, b);
        let c = generate_graph(100, 4, &cfg, 10.0, 2).unwrap();
        assert_ne!(a.edges().collect::<Vec<_>>(), c.edges().collect::<Vec<_>>());
    }

    #[test]
    fn stronger_homophily_shortens_edges() {
        let cfg = GraphGenConfig::default();
        let local = generate_graph(2000, 10, &cfg, 5.0, 3).unwrap();
        let global = generate_graph(2000, 10, &cfg, 500.0, 3).unwrap();
        let (dl, dg) = (local.mean_edge_distance(), global.mean_edge_distance());
        assert!(dl < dg, "local {dl} vs global {dg}");
    }

    #[test]
    fn generated_degrees_are_heavy_tailed() {
        let g = generate_graph(3000, 1, &GraphGenConfig::default(), 10.0, 11).unwrap();
        let max = (0..g.n_users() as UserId).map(|u| g.degree(u)).max().unwrap();
        let mean = 2.0 * g.n_edges() as f64 / g.n_users() as f64;
        assert!(max as f64 > 8.0 * mean, "max degree {max}, mean {mean}");
    }

    #[test]
    fn invalid_generator_inputs() {
        let cfg = GraphGenConfig::default();
        assert!(matches!(generate_graph(0, 1, &cfg, 1.0, 0), Err(Error::Config(_))));
        assert!(matches!(generate_graph(1, 0, &cfg, 1.0, 0), Err(Error::Config(_))));
        assert!(matches!(generate_graph(5, 1, &cfg, 0.0, 0), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_self_loops_and_dangling_ids() {
        let users = vec![User { id: 0, home_region: 0, login_prob: 0.5 }];
        let regions = vec![region(0, 0.0, 0.0)];
        assert!(matches!(
            SocialGraph::new(regions.clone(), users.clone(), vec![(0, 0)]),
            Err(Error::Integrity(_))
        ));
        assert!(matches!(
            SocialGraph::new(regions, users, vec![(0, 3)]),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn triangle_is_fully_clustered() {
        let g = graph_from_edges(3, &[(0, 1), (1, 2), (0, 2)]);
        assert_eq!(clustering_coefficient(&g, &[0, 1, 2]).unwrap(), 1.0);
    }

    #[test]
    fn path_has_zero_clustering() {
        let g = graph_from_edges(3, &[(0, 1), (1, 2)]);
        assert_eq!(clustering_coefficient(&g, &[0, 1, 2]).unwrap(), 0.0);
    }

    #[test]
    fn five_node_graph_matches_enumeration() {
        // a=0 b=1 c=2 d=3 e=4; edges ab ac bc cd de
        let g = graph_from_edges(5, &[(0, 1), (0, 2), (1, 2), (2, 3), (3, 4)]);
        let all = [0, 1, 2, 3, 4];
        let oracle = brute_force_cc(&g, &all);
        // per node: 1, 1, 1/3, 0, 0
        assert!((oracle - 7.0 / 15.0).abs() < 1e-15);
        assert_eq!(clustering_coefficient(&g, &all).unwrap(), oracle);
    }

    #[test]
    fn induced_subgraph_only() {
        // Triangle 0-1-2 but subset {0,1}: each member has induced degree 1.
        let g = graph_from_edges(3, &[(0, 1), (1, 2), (0, 2)]);
        assert_eq!(clustering_coefficient(&g, &[0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn clustering_errors() {
        let g = graph_from_edges(3, &[(0, 1)]);
        assert!(matches!(clustering_coefficient(&g, &[]), Err(Error::Domain(_))));
        assert!(matches!(clustering_coefficient(&g, &[0, 9]), Err(Error::Lookup { .. })));
    }

    #[test]
    fn region_distance_examples() {
        let a = region(0, 0.0, 0.0);
        let b = region(1, 3.0, 4.0);
        assert_eq!(region_distance(&a, &a), 0.0);
        assert_eq!(region_distance(&a, &b), 5.0);
        let c = region(2, 1.5, 2.0);
        let d = region(3, -2.5, 5.0);
        // sqrt(4^2 + 3^2)
        assert!((region_distance(&c, &d) - 5.0).abs() < 1e-12);
    }

    fn arb_graph(max_n: usize) -> impl Strategy<Value = SocialGraph> {
        (1..=max_n).prop_flat_map(|n| {
            let pairs = proptest::collection::vec((0..n as UserId, 0..n as UserId), 0..n * 3);
            pairs.prop_map(move |p| {
                let edges: Vec<_> = p.into_iter().filter(|(a, b)| a != b).collect();
                graph_from_edges(n, &edges)
            })
        })
    }

    proptest! {
        #[test]
        fn adjacency_is_symmetric(g in arb_graph(40)) {
            for u in 0..g.n_users() as UserId {
                for &v in g.neighbors(u) {
                    prop_assert!(g.has_edge(v, u));
                    prop_assert_ne!(u, v);
                }
            }
        }

        #[test]
        fn clustering_matches_brute_force(g in arb_graph(30), mask in any::<u64>()) {
            let subset: Vec<UserId> = (0..g.n_users() as UserId)
                .filter(|u| mask >> (u % 64) & 1 == 1)
                .collect();
            prop_assume!(!subset.is_empty());
            let cc = clustering_coefficient(&g, &subset).unwrap();
            prop_assert!((0.0..=1.0).contains(&cc));
            prop_assert!((cc - brute_force_cc(&g, &subset)).abs() < 1e-12);
        }

        #[test]
        fn region_distance_is_a_metric(
            pts in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3)
        ) {
            let r: Vec<Region> = pts.iter().enumerate()
                .map(|(i, &(x, y))| region(i as RegionId, x, y)).collect();
            let d = |i: usize, j: usize| region_distance(&r[i], &r[j]);
            prop_assert_eq!(d(0, 1), d(1, 0));
            prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-9);
        }
    }
}
