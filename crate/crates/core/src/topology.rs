//! 3D heterogeneous NoC designs: tile placement, planar link adjacency,
//! mesh construction, neighborhood moves, validation, and deterministic routing.
//!
//! A design lives on an X x Y x Z tile grid. Tile index `t` maps to the
//! coordinate `(t % X, (t / X) % Y, t / (X*Y))`; layer `z = 0` is nearest the
//! heat sink. Vertical links are fixed full TSV pillars between vertically
//! adjacent tiles and are never moved by the search; only planar (same-layer)
//! links are repositioned.

use std::collections::HashSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kind of core occupying a tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CoreKind {
    #[serde(rename = "CPU")]
    Cpu,
    #[serde(rename = "LLC")]
    Llc,
    #[serde(rename = "GPU")]
    Gpu,
}

impl fmt::Display for CoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreKind::Cpu => write!(f, "CPU"),
            CoreKind::Llc => write!(f, "LLC"),
            CoreKind::Gpu => write!(f, "GPU"),
        }
    }
}

/// Static system parameters shared by every design of one problem instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Grid extents in tiles: (X, Y, Z).
    pub dims: (usize, usize, usize),
    pub n_cpu: usize,
    pub n_llc: usize,
    pub n_gpu: usize,
    /// Router pipeline stages `r`.
    #[serde(default = "default_router_stages")]
    pub router_stages: u32,
}

fn default_router_stages() -> u32 {
    3
}

impl SystemConfig {
    pub fn new(dims: (usize, usize, usize), n_cpu: usize, n_llc: usize, n_gpu: usize) -> Self {
        SystemConfig { dims, n_cpu, n_llc, n_gpu, router_stages: 3 }
    }

    pub fn tiles(&self) -> usize {
        self.dims.0 * self.dims.1 * self.dims.2
    }

    pub fn layer_tiles(&self) -> usize {
        self.dims.0 * self.dims.1
    }

    /// Planar link count of the X x Y x Z mesh; every design carries exactly
    /// this many planar links.
    pub fn link_budget_planar(&self) -> usize {
        let (x, y, z) = self.dims;
        z * (x * (y - 1) + y * (x - 1))
    }

    /// Fixed TSV pillar count.
    pub fn vertical_links(&self) -> usize {
        let (x, y, z) = self.dims;
        x * y * (z - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let (x, y, z) = self.dims;
        if x == 0 || y == 0 || z == 0 {
            return Err(Error::Config(format!("dims: all extents must be positive, got {:?}", self.dims)));
        }
        if self.n_cpu + self.n_llc + self.n_gpu != self.tiles() {
            return Err(Error::Config(format!(
                "core counts: n_cpu + n_llc + n_gpu = {} must equal X*Y*Z = {}",
                self.n_cpu + self.n_llc + self.n_gpu,
                self.tiles()
            )));
        }
        Ok(())
    }

    /// Canonical role-ordered placement: CPUs first, then LLCs, then GPUs,
    /// in tile-index order.
    pub fn canonical_placement(&self) -> Vec<CoreKind> {
        let mut placement = Vec::with_capacity(self.tiles());
        placement.extend(std::iter::repeat(CoreKind::Cpu).take(self.n_cpu));
        placement.extend(std::iter::repeat(CoreKind::Llc).take(self.n_llc));
        placement.extend(std::iter::repeat(CoreKind::Gpu).take(self.n_gpu));
        placement
    }

    /// Kind of the core with global id `id`. Ids 0..n_cpu are CPUs (id 0 is
    /// the master CPU), the next n_llc are LLCs, the rest GPUs.
    pub fn kind_of_core(&self, id: usize) -> CoreKind {
        if id < self.n_cpu {
            CoreKind::Cpu
        } else if id < self.n_cpu + self.n_llc {
            CoreKind::Llc
        } else {
            CoreKind::Gpu
        }
    }
}

/// A neighborhood move: swap the cores on two tiles, or reposition one
/// planar link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Move {
    SwapTiles { tile_a: usize, tile_b: usize },
    MoveLink { remove: (usize, usize), add: (usize, usize) },
}

/// Which move kinds a neighborhood draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKinds {
    Both,
    LinksOnly,
    SwapsOnly,
}

impl Default for MoveKinds {
    fn default() -> Self {
        MoveKinds::Both
    }
}

/// One end-to-end route through the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub src: usize,
    pub dst: usize,
    /// Tiles traversed, starting at `src` and ending at `dst`.
    pub routers: Vec<usize>,
    /// Link indices into [`Design::links`] in traversal order.
    pub links: Vec<usize>,
    pub hop_count: usize,
    /// Sum of per-link delays along the route.
    pub link_delay: f64,
}

/// A physical link of a concrete design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub a: usize,
    pub b: usize,
    pub vertical: bool,
    /// Planar: Manhattan distance in tile pitches. Vertical: 1.
    pub delay: f64,
}

/// A candidate 3D NoC design: which core sits on which tile, plus the planar
/// link set. Vertical links are implied full pillars derived from the dims.
///
/// Core ids are derived from the placement: the k-th CPU tile in tile-scan
/// order holds CPU id k, and likewise per kind, with global ids assigned in
/// CPU, LLC, GPU order. This makes the JSON form (role strings plus link
/// pairs) a lossless representation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Design {
    pub dims: (usize, usize, usize),
    pub placement: Vec<CoreKind>,
    /// Unordered same-layer tile pairs, stored as (lo, hi), sorted
    /// lexicographically for stable serialization.
    pub planar_links: Vec<(usize, usize)>,
}

impl Design {
    pub fn tiles(&self) -> usize {
        self.dims.0 * self.dims.1 * self.dims.2
    }

    pub fn layer_tiles(&self) -> usize {
        self.dims.0 * self.dims.1
    }

    pub fn layers(&self) -> usize {
        self.dims.2
    }

    pub fn layer_of(&self, tile: usize) -> usize {
        tile / self.layer_tiles()
    }

    pub fn coord(&self, tile: usize) -> (usize, usize, usize) {
        let (x, y, _) = self.dims;
        (tile % x, (tile / x) % y, tile / (x * y))
    }

    pub fn tile_at(&self, cx: usize, cy: usize, cz: usize) -> usize {
        let (x, y, _) = self.dims;
        cz * x * y + cy * x + cx
    }

    /// Manhattan distance in tile pitches between two same-layer tiles.
    pub fn planar_distance(&self, a: usize, b: usize) -> usize {
        let (ax, ay, _) = self.coord(a);
        let (bx, by, _) = self.coord(b);
        ax.abs_diff(bx) + ay.abs_diff(by)
    }

    /// All links of the design: planar links first (in stored order), then
    /// vertical pillars ordered by lower tile index. Link indices into this
    /// list identify links everywhere else.
    pub fn links(&self) -> Vec<Link> {
        let mut out = Vec::with_capacity(self.planar_links.len() + self.vertical_link_count());
        for &(a, b) in &self.planar_links {
            out.push(Link { a, b, vertical: false, delay: self.planar_distance(a, b) as f64 });
        }
        let lt = self.layer_tiles();
        for z in 0..self.layers().saturating_sub(1) {
            for p in 0..lt {
                let a = z * lt + p;
                out.push(Link { a, b: a + lt, vertical: true, delay: 1.0 });
            }
        }
        out
    }

    pub fn vertical_link_count(&self) -> usize {
        self.layer_tiles() * self.layers().saturating_sub(1)
    }

    pub fn contains_planar(&self, a: usize, b: usize) -> bool {
        let key = ordered(a, b);
        self.planar_links.binary_search(&key).is_ok()
    }

    /// Adjacency list over all links; neighbor lists sorted by tile index.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let links = self.links();
        let mut adj = vec![Vec::new(); self.tiles()];
        for (idx, link) in links.iter().enumerate() {
            adj[link.a].push((link.b, idx));
            adj[link.b].push((link.a, idx));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Router port counts: graph degree plus one local injection port.
    pub fn port_counts(&self) -> Vec<usize> {
        let mut deg = vec![1usize; self.tiles()];
        for &(a, b) in &self.planar_links {
            deg[a] += 1;
            deg[b] += 1;
        }
        let lt = self.layer_tiles();
        for z in 0..self.layers().saturating_sub(1) {
            for p in 0..lt {
                deg[z * lt + p] += 1;
                deg[z * lt + p + lt] += 1;
            }
        }
        deg
    }

    pub fn is_connected(&self) -> bool {
        let n = self.tiles();
        if n <= 1 {
            return true;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(t) = stack.pop() {
            for &(nbr, _) in &adj[t] {
                if !seen[nbr] {
                    seen[nbr] = true;
                    count += 1;
                    stack.push(nbr);
                }
            }
        }
        count == n
    }

    /// Tile of the core with global id `id` under the derived id scheme.
    pub fn core_tiles(&self, config: &SystemConfig) -> Vec<usize> {
        let mut cpu = Vec::with_capacity(config.n_cpu);
        let mut llc = Vec::with_capacity(config.n_llc);
        let mut gpu = Vec::with_capacity(config.n_gpu);
        for (t, kind) in self.placement.iter().enumerate() {
            match kind {
                CoreKind::Cpu => cpu.push(t),
                CoreKind::Llc => llc.push(t),
                CoreKind::Gpu => gpu.push(t),
            }
        }
        cpu.extend(llc);
        cpu.extend(gpu);
        cpu
    }

    /// Tiles holding a given core kind, in tile-scan order.
    pub fn tiles_of_kind(&self, kind: CoreKind) -> Vec<usize> {
        self.placement
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == kind)
            .map(|(t, _)| t)
            .collect()
    }

    /// Per-layer planar link counts (a link belongs to the layer of its
    /// endpoints).
    pub fn planar_links_per_layer(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.layers()];
        for &(a, _) in &self.planar_links {
            counts[self.layer_of(a)] += 1;
        }
        counts
    }

    /// Per-layer count of tiles holding `kind`.
    pub fn kind_per_layer(&self, kind: CoreKind) -> Vec<usize> {
        let mut counts = vec![0usize; self.layers()];
        for (t, k) in self.placement.iter().enumerate() {
            if *k == kind {
                counts[self.layer_of(t)] += 1;
            }
        }
        counts
    }
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Builds the 3D mesh baseline: nearest-neighbor planar links plus full
/// vertical pillars. With a seed, the placement is a seeded random
/// permutation of the core multiset; otherwise it is the canonical
/// role-ordered placement.
pub fn build_mesh(config: &SystemConfig, placement_seed: Option<u64>) -> Result<Design> {
    config.validate()?;
    let (x, y, z) = config.dims;
    let mut placement = config.canonical_placement();
    if let Some(seed) = placement_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        placement.shuffle(&mut rng);
    }
    let mut planar_links = Vec::with_capacity(config.link_budget_planar());
    for cz in 0..z {
        for cy in 0..y {
            for cx in 0..x {
                let t = cz * x * y + cy * x + cx;
                if cx + 1 < x {
                    planar_links.push((t, t + 1));
                }
                if cy + 1 < y {
                    planar_links.push((t, t + x));
                }
            }
        }
    }
    planar_links.sort_unstable();
    Ok(Design { dims: config.dims, placement, planar_links })
}

/// Applies a move, returning the resulting design. The link budget and the
/// placement multiset are preserved; moves that would disconnect the network
/// are rejected.
pub fn apply_move(design: &Design, mv: &Move) -> Result<Design> {
    let n = design.tiles();
    match *mv {
        Move::SwapTiles { tile_a, tile_b } => {
            if tile_a >= n || tile_b >= n {
                return Err(Error::InvalidMove(format!(
                    "swap references out-of-range tile ({tile_a}, {tile_b}); design has {n} tiles"
                )));
            }
            if tile_a == tile_b {
                return Err(Error::InvalidMove("swap operands must be distinct".into()));
            }
            let mut next = design.clone();
            next.placement.swap(tile_a, tile_b);
            Ok(next)
        }
        Move::MoveLink { remove, add } => {
            let remove = ordered(remove.0, remove.1);
            let add = ordered(add.0, add.1);
            if remove.1 >= n || add.1 >= n {
                return Err(Error::InvalidMove("link move references out-of-range tile".into()));
            }
            if add.0 == add.1 {
                return Err(Error::InvalidMove("link endpoints must be distinct".into()));
            }
            if remove == add {
                return Err(Error::InvalidMove("link move removes and re-adds the same link".into()));
            }
            if design.layer_of(add.0) != design.layer_of(add.1) {
                return Err(Error::InvalidMove(format!(
                    "added link ({}, {}) must connect tiles in the same layer",
                    add.0, add.1
                )));
            }
            if !design.contains_planar(remove.0, remove.1) {
                return Err(Error::InvalidMove(format!(
                    "removed link ({}, {}) is not present",
                    remove.0, remove.1
                )));
            }
            if design.contains_planar(add.0, add.1) {
                return Err(Error::InvalidMove(format!(
                    "added link ({}, {}) is already present",
                    add.0, add.1
                )));
            }
            let mut next = design.clone();
            let pos = next.planar_links.binary_search(&remove).unwrap();
            next.planar_links.remove(pos);
            let ins = next.planar_links.binary_search(&add).unwrap_err();
            next.planar_links.insert(ins, add);
            if !next.is_connected() {
                return Err(Error::InfeasibleMove(format!(
                    "removing link ({}, {}) disconnects the network",
                    remove.0, remove.1
                )));
            }
            Ok(next)
        }
    }
}

/// Samples up to `count` distinct feasible moves: a 50/50 split over the two
/// move kinds, uniform within each kind. Same-role tile swaps are pruned as
/// zero-effect moves. Deterministic for a fixed seed; returns fewer moves
/// only when the feasible neighborhood is exhausted.
pub fn sample_neighbors(design: &Design, count: usize, seed: u64, kinds: MoveKinds) -> Vec<Move> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = design.tiles();
    let mut picked: HashSet<Move> = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);

    let swaps_possible = n >= 2
        && kinds != MoveKinds::LinksOnly
        && design.placement.iter().any(|k| *k != design.placement[0]);
    let links_possible = kinds != MoveKinds::SwapsOnly && !design.planar_links.is_empty();
    if !swaps_possible && !links_possible {
        return out;
    }

    let lt = design.layer_tiles();
    let max_attempts = 200 * count.max(1);
    let mut attempts = 0;
    while out.len() < count && attempts < max_attempts {
        attempts += 1;
        let want_swap = match (swaps_possible, links_possible) {
            (true, true) => rng.gen_bool(0.5),
            (true, false) => true,
            _ => false,
        };
        let mv = if want_swap {
            let tile_a = rng.gen_range(0..n);
            let tile_b = rng.gen_range(0..n);
            if tile_a == tile_b || design.placement[tile_a] == design.placement[tile_b] {
                continue;
            }
            Move::SwapTiles { tile_a: tile_a.min(tile_b), tile_b: tile_a.max(tile_b) }
        } else {
            let remove = design.planar_links[rng.gen_range(0..design.planar_links.len())];
            let layer = rng.gen_range(0..design.layers());
            let a = layer * lt + rng.gen_range(0..lt);
            let b = layer * lt + rng.gen_range(0..lt);
            if a == b {
                continue;
            }
            let add = ordered(a, b);
            if add == remove || design.contains_planar(add.0, add.1) {
                continue;
            }
            Move::MoveLink { remove, add }
        };
        if picked.contains(&mv) {
            continue;
        }
        if apply_move(design, &mv).is_err() {
            continue;
        }
        picked.insert(mv);
        out.push(mv);
    }

    if out.len() < count {
        // Sampling stalled; fill from the full neighborhood.
        for mv in enumerate_neighbors(design, kinds) {
            if out.len() >= count {
                break;
            }
            if picked.insert(mv) {
                out.push(mv);
            }
        }
    }
    out
}

/// Enumerates the full feasible neighborhood. Intended for tiny instances;
/// the neighborhood grows roughly quadratically in tiles and links.
pub fn enumerate_neighbors(design: &Design, kinds: MoveKinds) -> Vec<Move> {
    let n = design.tiles();
    let lt = design.layer_tiles();
    let mut out = Vec::new();
    if kinds != MoveKinds::LinksOnly {
        for a in 0..n {
            for b in (a + 1)..n {
                if design.placement[a] != design.placement[b] {
                    out.push(Move::SwapTiles { tile_a: a, tile_b: b });
                }
            }
        }
    }
    if kinds != MoveKinds::SwapsOnly {
        for &remove in &design.planar_links {
            for z in 0..design.layers() {
                for pa in 0..lt {
                    for pb in (pa + 1)..lt {
                        let add = (z * lt + pa, z * lt + pb);
                        if add == remove || design.contains_planar(add.0, add.1) {
                            continue;
                        }
                        let mv = Move::MoveLink { remove, add };
                        if apply_move(design, &mv).is_ok() {
                            out.push(mv);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Shortest-path distances and deterministic route extraction for one design.
///
/// Routes are minimal-hop; ties are broken by taking the lexicographically
/// smallest next-tile index at each step toward the destination.
pub struct RoutingTable {
    adj: Vec<Vec<(usize, usize)>>,
    links: Vec<Link>,
    /// dist[dst][t] = hop distance from t to dst; usize::MAX when unreachable.
    dist: Vec<Vec<usize>>,
}

impl RoutingTable {
    pub fn build(design: &Design) -> Self {
        let n = design.tiles();
        let adj = design.adjacency();
        let links = design.links();
        let mut dist = Vec::with_capacity(n);
        for dst in 0..n {
            dist.push(bfs_distances(&adj, dst));
        }
        RoutingTable { adj, links, dist }
    }

    pub fn hop_count(&self, src: usize, dst: usize) -> Option<usize> {
        let d = self.dist[dst][src];
        (d != usize::MAX).then_some(d)
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    /// Walks the deterministic route, calling `visit(next_tile, link_idx)`
    /// for each hop from src to dst.
    pub fn walk<F: FnMut(usize, usize)>(&self, src: usize, dst: usize, mut visit: F) -> Result<()> {
        if self.dist[dst][src] == usize::MAX {
            return Err(Error::Unreachable { src, dst });
        }
        let mut cur = src;
        while cur != dst {
            let d = self.dist[dst][cur];
            // Adjacency lists are sorted, so the first qualifying neighbor is
            // the lexicographically smallest.
            let (next, link_idx) = self.adj[cur]
                .iter()
                .copied()
                .find(|&(nbr, _)| self.dist[dst][nbr] + 1 == d)
                .expect("BFS distance field admits a descending neighbor");
            visit(next, link_idx);
            cur = next;
        }
        Ok(())
    }

    pub fn path(&self, src: usize, dst: usize) -> Result<Path> {
        let mut routers = vec![src];
        let mut links = Vec::new();
        let mut delay = 0.0;
        self.walk(src, dst, |next, link_idx| {
            routers.push(next);
            links.push(link_idx);
            delay += self.links[link_idx].delay;
        })?;
        Ok(Path { src, dst, hop_count: links.len(), routers, links, link_delay: delay })
    }
}

fn bfs_distances(adj: &[Vec<(usize, usize)>], start: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[start] = 0;
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(start);
    while let Some(t) = queue.pop_front() {
        for &(nbr, _) in &adj[t] {
            if dist[nbr] == usize::MAX {
                dist[nbr] = dist[t] + 1;
                queue.push_back(nbr);
            }
        }
    }
    dist
}

/// Deterministic minimal-hop route between two tiles. `route(d, s, s)` is the
/// empty path.
pub fn route(design: &Design, src: usize, dst: usize) -> Result<Path> {
    RoutingTable::build(design).path(src, dst)
}

/// A single constraint violation reported by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    LinkBudget { expected: usize, actual: usize },
    CrossLayerLink { link: (usize, usize) },
    DegenerateLink { link: (usize, usize) },
    DuplicateLink { link: (usize, usize) },
    PlacementMultiset { kind: CoreKind, expected: usize, actual: usize },
    PlacementLength { expected: usize, actual: usize },
    Disconnected,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LinkBudget { expected, actual } => {
                write!(f, "planar link budget violated: expected {expected}, found {actual}")
            }
            Violation::CrossLayerLink { link } => {
                write!(f, "planar link ({}, {}) crosses layers", link.0, link.1)
            }
            Violation::DegenerateLink { link } => {
                write!(f, "link ({}, {}) connects a tile to itself", link.0, link.1)
            }
            Violation::DuplicateLink { link } => {
                write!(f, "link ({}, {}) appears more than once", link.0, link.1)
            }
            Violation::PlacementMultiset { kind, expected, actual } => {
                write!(f, "placement holds {actual} {kind} cores, expected {expected}")
            }
            Violation::PlacementLength { expected, actual } => {
                write!(f, "placement length {actual} does not match {expected} tiles")
            }
            Violation::Disconnected => write!(f, "network is not connected"),
        }
    }
}

/// Checks every structural constraint and returns all violations found.
pub fn validate(design: &Design, config: &SystemConfig) -> Vec<Violation> {
    let mut violations = Vec::new();
    if design.placement.len() != config.tiles() {
        violations.push(Violation::PlacementLength {
            expected: config.tiles(),
            actual: design.placement.len(),
        });
    }
    let expected = config.link_budget_planar();
    if design.planar_links.len() != expected {
        violations.push(Violation::LinkBudget { expected, actual: design.planar_links.len() });
    }
    let mut seen = HashSet::new();
    for &(a, b) in &design.planar_links {
        if a == b {
            violations.push(Violation::DegenerateLink { link: (a, b) });
            continue;
        }
        if !seen.insert(ordered(a, b)) {
            violations.push(Violation::DuplicateLink { link: (a, b) });
        }
        if b < design.placement.len().max(config.tiles())
            && design.layer_of(a) != design.layer_of(b)
        {
            violations.push(Violation::CrossLayerLink { link: (a, b) });
        }
    }
    for (kind, expected) in [
        (CoreKind::Cpu, config.n_cpu),
        (CoreKind::Llc, config.n_llc),
        (CoreKind::Gpu, config.n_gpu),
    ] {
        let actual = design.placement.iter().filter(|k| **k == kind).count();
        if actual != expected {
            violations.push(Violation::PlacementMultiset { kind, expected, actual });
        }
    }
    if !design.is_connected() {
        violations.push(Violation::Disconnected);
    }
    violations
}

/// Random feasible design for search restarts: a seeded random placement on
/// the mesh link skeleton, then `link_budget / 4` random link moves to
/// randomize the topology while staying feasible by construction.
pub fn random_design(config: &SystemConfig, seed: u64) -> Result<Design> {
    let mut design = build_mesh(config, Some(seed))?;
    let k = config.link_budget_planar() / 4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1));
    for _ in 0..k {
        let moves = sample_neighbors(&design, 1, rng.gen(), MoveKinds::LinksOnly);
        if let Some(mv) = moves.first() {
            design = apply_move(&design, mv)?;
        }
    }
    Ok(design)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_4x4x4() -> SystemConfig {
        SystemConfig::new((4, 4, 4), 8, 16, 40)
    }

    fn cfg_2x2x1() -> SystemConfig {
        SystemConfig::new((2, 2, 1), 1, 1, 2)
    }

    #[test]
    fn mesh_4x4x4_link_counts() {
        let design = build_mesh(&cfg_4x4x4(), None).unwrap();
        assert_eq!(design.planar_links.len(), 96);
        assert_eq!(design.vertical_link_count(), 48);
        assert_eq!(design.links().len(), 144);
    }

    #[test]
    fn mesh_single_tile() {
        let config = SystemConfig::new((1, 1, 1), 1, 0, 0);
        let design = build_mesh(&config, None).unwrap();
        assert_eq!(design.planar_links.len(), 0);
        assert_eq!(design.vertical_link_count(), 0);
    }

    #[test]
    fn mesh_3x3x4_link_counts() {
        let config = SystemConfig::new((3, 3, 4), 4, 8, 24);
        let design = build_mesh(&config, None).unwrap();
        assert_eq!(design.planar_links.len(), 48);
        assert_eq!(design.vertical_link_count(), 27);
    }

    #[test]
    fn mesh_link_counts_match_formulas_for_small_dims() {
        for x in 1..=5 {
            for y in 1..=5 {
                for z in 1..=5 {
                    let tiles = x * y * z;
                    let config = SystemConfig::new((x, y, z), tiles, 0, 0);
                    let design = build_mesh(&config, None).unwrap();
                    assert_eq!(design.planar_links.len(), z * (x * (y - 1) + y * (x - 1)));
                    assert_eq!(design.vertical_link_count(), x * y * (z - 1));
                    assert!(design.is_connected());
                }
            }
        }
    }

    #[test]
    fn mesh_rejects_bad_core_counts() {
        let config = SystemConfig::new((2, 2, 1), 1, 1, 1);
        assert!(matches!(build_mesh(&config, None), Err(Error::Config(_))));
    }

    #[test]
    fn swap_is_an_involution() {
        let design = build_mesh(&cfg_4x4x4(), Some(3)).unwrap();
        let mv = Move::SwapTiles { tile_a: 0, tile_b: 17 };
        let once = apply_move(&design, &mv).unwrap();
        let twice = apply_move(&once, &mv).unwrap();
        assert_eq!(design, twice);
    }

    #[test]
    fn degenerate_link_move_rejected() {
        let design = build_mesh(&cfg_2x2x1(), None).unwrap();
        let e = (0, 1);
        let mv = Move::MoveLink { remove: e, add: e };
        assert!(matches!(apply_move(&design, &mv), Err(Error::InvalidMove(_))));
    }

    #[test]
    fn disconnecting_move_rejected() {
        // 4x1x1 mesh is a line 0-1-2-3. Moving the (2,3) link to (0,2)
        // isolates tile 3.
        let config = SystemConfig::new((4, 1, 1), 2, 1, 1);
        let design = build_mesh(&config, None).unwrap();
        let mv = Move::MoveLink { remove: (2, 3), add: (0, 2) };
        assert!(matches!(apply_move(&design, &mv), Err(Error::InfeasibleMove(_))));
        // Adding an already-present link is invalid, not infeasible.
        let mv = Move::MoveLink { remove: (2, 3), add: (0, 1) };
        assert!(matches!(apply_move(&design, &mv), Err(Error::InvalidMove(_))));
    }

    #[test]
    fn move_preserves_budget_and_multiset() {
        let config = cfg_4x4x4();
        let design = build_mesh(&config, Some(11)).unwrap();
        for mv in sample_neighbors(&design, 64, 5, MoveKinds::Both) {
            let next = apply_move(&design, &mv).unwrap();
            assert!(validate(&next, &config).is_empty(), "move {mv:?} broke validity");
        }
    }

    #[test]
    fn sample_neighbors_deterministic() {
        let design = build_mesh(&cfg_4x4x4(), Some(7)).unwrap();
        let a = sample_neighbors(&design, 64, 99, MoveKinds::Both);
        let b = sample_neighbors(&design, 64, 99, MoveKinds::Both);
        assert_eq!(a, b);
    }

    #[test]
    fn sample_neighbors_large_count_distinct() {
        let design = build_mesh(&cfg_4x4x4(), Some(1)).unwrap();
        let moves = sample_neighbors(&design, 256, 42, MoveKinds::Both);
        assert_eq!(moves.len(), 256);
        let set: HashSet<_> = moves.iter().collect();
        assert_eq!(set.len(), 256);
    }

    #[test]
    fn sample_neighbors_prunes_same_role_swaps() {
        let design = build_mesh(&cfg_4x4x4(), Some(2)).unwrap();
        for mv in sample_neighbors(&design, 128, 3, MoveKinds::SwapsOnly) {
            if let Move::SwapTiles { tile_a, tile_b } = mv {
                assert_ne!(design.placement[tile_a], design.placement[tile_b]);
            }
        }
    }

    #[test]
    fn route_self_is_empty() {
        let design = build_mesh(&cfg_4x4x4(), None).unwrap();
        let path = route(&design, 5, 5).unwrap();
        assert_eq!(path.hop_count, 0);
        assert!(path.links.is_empty());
        assert_eq!(path.routers, vec![5]);
    }

    #[test]
    fn route_2x2x1_lexicographic_tie_break() {
        let design = build_mesh(&cfg_2x2x1(), None).unwrap();
        let path = route(&design, 0, 3).unwrap();
        assert_eq!(path.hop_count, 2);
        assert_eq!(path.routers, vec![0, 1, 3]);
    }

    #[test]
    fn route_adjacent_is_one_hop() {
        let design = build_mesh(&cfg_4x4x4(), None).unwrap();
        let path = route(&design, 0, 1).unwrap();
        assert_eq!(path.hop_count, 1);
        assert_eq!(path.link_delay, 1.0);
    }

    #[test]
    fn route_minimality_against_floyd_warshall() {
        // Independent all-pairs oracle on a randomized 2x2x2 + mesh 3x3x1.
        for design in [
            build_mesh(&SystemConfig::new((2, 2, 2), 2, 2, 4), Some(5)).unwrap(),
            build_mesh(&SystemConfig::new((3, 3, 1), 3, 3, 3), None).unwrap(),
        ] {
            let n = design.tiles();
            let mut dist = vec![vec![usize::MAX / 2; n]; n];
            for t in 0..n {
                dist[t][t] = 0;
            }
            for link in design.links() {
                dist[link.a][link.b] = 1;
                dist[link.b][link.a] = 1;
            }
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        dist[i][j] = dist[i][j].min(dist[i][k] + dist[k][j]);
                    }
                }
            }
            let table = RoutingTable::build(&design);
            for s in 0..n {
                for d in 0..n {
                    assert_eq!(table.path(s, d).unwrap().hop_count, dist[s][d]);
                }
            }
        }
    }

    #[test]
    fn validate_flags_missing_link() {
        let config = cfg_4x4x4();
        let mut design = build_mesh(&config, None).unwrap();
        design.planar_links.pop();
        let violations = validate(&design, &config);
        assert!(violations.iter().any(|v| matches!(v, Violation::LinkBudget { .. })));
    }

    #[test]
    fn validate_flags_partition() {
        // Remove every planar link crossing the {0,1} x {2,3} column bisection
        // of a 2x2x2. The implied pillars keep the halves internally connected
        // but nothing bridges them, so both a budget and a connectivity
        // violation are reported.
        let config = SystemConfig::new((2, 2, 2), 2, 2, 4);
        let mut design = build_mesh(&config, None).unwrap();
        design.planar_links = vec![(0, 1), (2, 3), (4, 5), (6, 7)];
        let violations = validate(&design, &config);
        assert!(violations.contains(&Violation::Disconnected));
        assert!(violations.iter().any(|v| matches!(v, Violation::LinkBudget { .. })));
    }

    #[test]
    fn fresh_mesh_validates_clean() {
        let config = cfg_4x4x4();
        let design = build_mesh(&config, Some(9)).unwrap();
        assert!(validate(&design, &config).is_empty());
    }

    #[test]
    fn design_json_round_trip_is_stable() {
        let design = build_mesh(&cfg_4x4x4(), Some(13)).unwrap();
        let json = serde_json::to_string(&design).unwrap();
        let back: Design = serde_json::from_str(&json).unwrap();
        assert_eq!(design, back);
        assert_eq!(json, serde_json::to_string(&back).unwrap());
    }

    #[test]
    fn random_design_is_feasible() {
        let config = cfg_4x4x4();
        for seed in 0..5 {
            let design = random_design(&config, seed).unwrap();
            assert!(validate(&design, &config).is_empty());
        }
    }

    #[test]
    fn core_tiles_partition_by_kind() {
        let config = cfg_4x4x4();
        let design = build_mesh(&config, Some(21)).unwrap();
        let tiles = design.core_tiles(&config);
        assert_eq!(tiles.len(), 64);
        for (id, &tile) in tiles.iter().enumerate() {
            assert_eq!(design.placement[tile], config.kind_of_core(id));
        }
    }
}
