//! Warehouse geometry, the cross-aisle shortest-path metric, problem
//! instances, random instance generation, and the aisle-sequence form
//! consumed by the tour environment and the policy network.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// All distances are exact integers in length units (LU). Geometry defaults
/// keep every edge cost integral, which lets the exact solver be compared to
/// the brute-force oracle with `==`.
pub type Length = i64;

/// Version tag written into instance files; the reader rejects anything else.
pub const INSTANCE_FORMAT_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// Physical layout of a rectangular single-block warehouse.
///
/// Aisle `i` (1-based) sits at `x = (i - 1) * aisle_pitch`. Slots are at
/// `y = slot * slot_pitch` for `slot` in `1..=slots_per_aisle`; the front
/// cross-aisle is at `y = 0` and the back one at `y = aisle_len()`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarehouseGeometry {
    pub n_aisles: usize,
    pub slots_per_aisle: usize,
    pub slot_pitch: Length,
    pub cross_aisle_offset: Length,
    pub aisle_pitch: Length,
}

impl WarehouseGeometry {
    /// Geometry with the standard slot layout: 90 slots at 1 LU pitch,
    /// 1 LU cross-aisle offset, 5 LU between adjacent aisles.
    pub fn new(n_aisles: usize) -> Result<Self> {
        Self::custom(n_aisles, 90, 1, 1, 5)
    }

    pub fn custom(
        n_aisles: usize,
        slots_per_aisle: usize,
        slot_pitch: Length,
        cross_aisle_offset: Length,
        aisle_pitch: Length,
    ) -> Result<Self> {
        let geom = WarehouseGeometry {
            n_aisles,
            slots_per_aisle,
            slot_pitch,
            cross_aisle_offset,
            aisle_pitch,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_aisles == 0 || self.slots_per_aisle == 0 {
            return Err(Error::Domain(
                "aisle and slot counts must be positive".into(),
            ));
        }
        if self.slot_pitch <= 0 || self.cross_aisle_offset <= 0 || self.aisle_pitch <= 0 {
            return Err(Error::Domain(
                "all geometry lengths must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Aisle length `h`: distance between the two cross-aisles.
    pub fn aisle_len(&self) -> Length {
        self.slots_per_aisle as Length * self.slot_pitch + self.cross_aisle_offset
    }

    /// Horizontal coordinate of a 1-based aisle index.
    pub fn x_of(&self, aisle: usize) -> Length {
        (aisle as Length - 1) * self.aisle_pitch
    }

    /// Vertical coordinate of a 1-based slot index.
    pub fn slot_y(&self, slot: usize) -> Length {
        slot as Length * self.slot_pitch
    }

    pub fn contains(&self, loc: &Location) -> bool {
        loc.aisle >= 1 && loc.aisle <= self.n_aisles && loc.y >= 0 && loc.y <= self.aisle_len()
    }

    pub fn total_slots(&self) -> usize {
        self.n_aisles * self.slots_per_aisle
    }
}

/// Slot layout shared by every aisle; combined with an aisle count this
/// yields a full [`WarehouseGeometry`]. Used wherever the aisle count comes
/// from a problem class while the rack layout stays configurable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub slots_per_aisle: usize,
    pub slot_pitch: Length,
    pub cross_aisle_offset: Length,
    pub aisle_pitch: Length,
}

impl Default for GeometrySpec {
    fn default() -> Self {
        GeometrySpec {
            slots_per_aisle: 90,
            slot_pitch: 1,
            cross_aisle_offset: 1,
            aisle_pitch: 5,
        }
    }
}

impl GeometrySpec {
    pub fn build(&self, n_aisles: usize) -> Result<WarehouseGeometry> {
        WarehouseGeometry::custom(
            n_aisles,
            self.slots_per_aisle,
            self.slot_pitch,
            self.cross_aisle_offset,
            self.aisle_pitch,
        )
    }
}

// ---------------------------------------------------------------------------
// Locations and distance
// ---------------------------------------------------------------------------

/// A point in the warehouse: 1-based aisle index plus vertical coordinate.
/// Items sit at slot coordinates; the depot is `(aisle 1, y = 0)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Location {
    pub aisle: usize,
    pub y: Length,
}

impl Location {
    pub fn new(aisle: usize, y: Length) -> Self {
        Location { aisle, y }
    }
}

/// Shortest walking distance between two locations.
///
/// Same aisle: straight vertical travel. Different aisles: horizontal travel
/// plus the cheaper of going around via the front (`y_a + y_b`) or the back
/// (`2h - y_a - y_b`) cross-aisle.
pub fn shortest_path_distance(
    a: &Location,
    b: &Location,
    geom: &WarehouseGeometry,
) -> Result<Length> {
    if !geom.contains(a) || !geom.contains(b) {
        return Err(Error::Domain(format!(
            "location outside geometry: {a:?} / {b:?}"
        )));
    }
    Ok(metric(a, b, geom))
}

/// Distance without the geometry check; callers validate locations up front.
pub(crate) fn metric(a: &Location, b: &Location, geom: &WarehouseGeometry) -> Length {
    if a.aisle == b.aisle {
        (a.y - b.y).abs()
    } else {
        let dx = (geom.x_of(a.aisle) - geom.x_of(b.aisle)).abs();
        let via_front = a.y + b.y;
        let via_back = 2 * geom.aisle_len() - via_front;
        dx + via_front.min(via_back)
    }
}

// ---------------------------------------------------------------------------
// Instances
// ---------------------------------------------------------------------------

/// A pick list: depot plus `m >= 1` distinct item locations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub geometry: WarehouseGeometry,
    pub depot: Location,
    pub items: Vec<Location>,
    pub seed: u64,
}

impl Instance {
    pub fn new(geometry: WarehouseGeometry, items: Vec<Location>, seed: u64) -> Result<Self> {
        geometry.validate()?;
        let depot = Location::new(1, 0);
        if items.is_empty() {
            return Err(Error::Domain("an instance needs at least one item".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for item in &items {
            if !geometry.contains(item) {
                return Err(Error::Domain(format!("item outside geometry: {item:?}")));
            }
            if item.y <= 0
                || item.y % geometry.slot_pitch != 0
                || item.y > geometry.slot_y(geometry.slots_per_aisle)
            {
                return Err(Error::Domain(format!(
                    "item not on a slot coordinate: {item:?}"
                )));
            }
            if !seen.insert(*item) {
                return Err(Error::Domain(format!("duplicate item location: {item:?}")));
            }
        }
        Ok(Instance {
            geometry,
            depot,
            items,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Tour length of visiting the items in the given order, depot to depot.
    /// `order` must be a permutation of `0..items.len()`.
    pub fn route_length(&self, order: &[usize]) -> Result<Length> {
        let m = self.items.len();
        if order.len() != m {
            return Err(Error::Contract(format!(
                "order visits {} items, instance has {m}",
                order.len()
            )));
        }
        let mut seen = vec![false; m];
        for &idx in order {
            if idx >= m || seen[idx] {
                return Err(Error::Contract(format!(
                    "order is not a permutation (index {idx})"
                )));
            }
            seen[idx] = true;
        }
        let mut total = 0;
        let mut at = self.depot;
        for &idx in order {
            total += metric(&at, &self.items[idx], &self.geometry);
            at = self.items[idx];
        }
        total += metric(&at, &self.depot, &self.geometry);
        Ok(total)
    }

    /// Compacts the instance into the per-aisle form used by the tour
    /// environment: non-empty aisles in increasing order, each with its
    /// sorted pick coordinates and binary slot vector. The depot is injected
    /// as a mandatory pick at `(aisle 1, y = 0)`, so aisle 1 is always
    /// present; the depot does not appear in the slot vector because `y = 0`
    /// is not a slot.
    pub fn aisle_sequence(&self) -> AisleSequence {
        let mut by_aisle: BTreeMap<usize, Vec<Length>> = BTreeMap::new();
        by_aisle.insert(self.depot.aisle, vec![self.depot.y]);
        for item in &self.items {
            by_aisle.entry(item.aisle).or_default().push(item.y);
        }
        let entries = by_aisle
            .into_iter()
            .map(|(aisle, mut ys)| {
                ys.sort_unstable();
                let mut slots = vec![false; self.geometry.slots_per_aisle];
                for &y in &ys {
                    if y > 0 {
                        slots[(y / self.geometry.slot_pitch) as usize - 1] = true;
                    }
                }
                AisleEntry {
                    aisle,
                    x: self.geometry.x_of(aisle),
                    ys,
                    slots,
                }
            })
            .collect();
        AisleSequence {
            geometry: self.geometry.clone(),
            entries,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = InstanceFile {
            format_version: INSTANCE_FORMAT_VERSION,
            geometry: self.geometry.clone(),
            depot: self.depot,
            items: self
                .items
                .iter()
                .map(|loc| ItemRecord {
                    aisle: loc.aisle,
                    slot: (loc.y / self.geometry.slot_pitch) as usize,
                })
                .collect(),
            seed: self.seed,
        };
        let text = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::Format(format!("encoding instance: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: InstanceFile = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("decoding instance: {e}")))?;
        if file.format_version != INSTANCE_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unknown instance format_version {} (expected {INSTANCE_FORMAT_VERSION})",
                file.format_version
            )));
        }
        if file.depot != (Location { aisle: 1, y: 0 }) {
            return Err(Error::Format(format!(
                "depot must be at aisle 1, y 0, found {:?}",
                file.depot
            )));
        }
        let items = file
            .items
            .iter()
            .map(|rec| Location::new(rec.aisle, file.geometry.slot_y(rec.slot)))
            .collect();
        Instance::new(file.geometry, items, file.seed)
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    format_version: u32,
    geometry: WarehouseGeometry,
    depot: Location,
    items: Vec<ItemRecord>,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct ItemRecord {
    aisle: usize,
    slot: usize,
}

// ---------------------------------------------------------------------------
// Problem classes and random generation
// ---------------------------------------------------------------------------

/// How item cells are drawn when generating an instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DistributionMode {
    /// Aisle and slot indices drawn from independent discretized normals,
    /// centered on the range midpoint with sigma = range * sigma_ratio,
    /// truncated to the valid range by rejection.
    Normal { sigma_ratio: f64 },
    /// Cells drawn uniformly without replacement.
    Uniform,
}

impl DistributionMode {
    pub fn normal() -> Self {
        DistributionMode::Normal {
            sigma_ratio: 1.0 / 3.0,
        }
    }
}

/// A benchmark cell: warehouse width, pick-list size, and item distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemClass {
    pub n_aisles: usize,
    pub items: usize,
    pub mode: DistributionMode,
}

impl ProblemClass {
    pub fn new(n_aisles: usize, items: usize, mode: DistributionMode) -> Self {
        ProblemClass {
            n_aisles,
            items,
            mode,
        }
    }

    /// The 30 benchmark classes: aisles in {5,10,15,20,25,30} crossed with
    /// pick-list sizes in {30,45,60,75,90}.
    pub fn standard_grid(mode: DistributionMode) -> Vec<ProblemClass> {
        let mut classes = Vec::new();
        for &n_aisles in &[5, 10, 15, 20, 25, 30] {
            for &items in &[30, 45, 60, 75, 90] {
                classes.push(ProblemClass::new(n_aisles, items, mode));
            }
        }
        classes
    }

    pub fn label(&self) -> String {
        format!("{}x{}", self.n_aisles, self.items)
    }
}

/// Draws a discretized truncated normal over `1..=n`: round a
/// `N(midpoint, n * sigma_ratio)` sample and reject values out of range.
fn sample_index<R: Rng>(rng: &mut R, n: usize, sigma_ratio: f64) -> usize {
    let mean = (1.0 + n as f64) / 2.0;
    let sigma = (n as f64 * sigma_ratio).max(f64::MIN_POSITIVE);
    let normal = Normal::new(mean, sigma).expect("valid normal parameters");
    loop {
        let value = normal.sample(rng).round();
        if value >= 1.0 && value <= n as f64 {
            return value as usize;
        }
    }
}

/// Generates a random instance for the class: `items` distinct cells,
/// deterministic for a given seed. Duplicate cells are resampled.
pub fn generate_instance(class: &ProblemClass, spec: &GeometrySpec, seed: u64) -> Result<Instance> {
    let geometry = spec.build(class.n_aisles)?;
    if class.items == 0 {
        return Err(Error::Domain("pick list must not be empty".into()));
    }
    if class.items > geometry.total_slots() {
        return Err(Error::Domain(format!(
            "cannot place {} items in {} slots",
            class.items,
            geometry.total_slots()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells = std::collections::HashSet::with_capacity(class.items);
    let mut items = Vec::with_capacity(class.items);
    while items.len() < class.items {
        let (aisle, slot) = match class.mode {
            DistributionMode::Normal { sigma_ratio } => (
                sample_index(&mut rng, geometry.n_aisles, sigma_ratio),
                sample_index(&mut rng, geometry.slots_per_aisle, sigma_ratio),
            ),
            DistributionMode::Uniform => (
                rng.random_range(1..=geometry.n_aisles),
                rng.random_range(1..=geometry.slots_per_aisle),
            ),
        };
        if cells.insert((aisle, slot)) {
            items.push(Location::new(aisle, geometry.slot_y(slot)));
        }
    }
    Instance::new(geometry, items, seed)
}

// ---------------------------------------------------------------------------
// Aisle sequences
// ---------------------------------------------------------------------------

/// One non-empty aisle: original index, x-coordinate, sorted pick
/// coordinates (the depot's `y = 0` included for aisle 1), and the binary
/// slot vector fed to the policy network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AisleEntry {
    pub aisle: usize,
    pub x: Length,
    pub ys: Vec<Length>,
    pub slots: Vec<bool>,
}

impl AisleEntry {
    pub fn min_y(&self) -> Length {
        self.ys[0]
    }

    pub fn max_y(&self) -> Length {
        *self.ys.last().unwrap()
    }

    /// True when the entry holds nothing but the injected depot.
    pub fn depot_only(&self) -> bool {
        self.ys == [0]
    }
}

/// The compacted aisle view of an instance: non-empty aisles in strictly
/// increasing order. Always has at least one entry (aisle 1 carries the
/// depot).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AisleSequence {
    pub geometry: WarehouseGeometry,
    entries: Vec<AisleEntry>,
}

impl AisleSequence {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[AisleEntry] {
        &self.entries
    }

    pub fn entry(&self, position: usize) -> &AisleEntry {
        &self.entries[position]
    }

    pub fn aisle_len(&self) -> Length {
        self.geometry.aisle_len()
    }
}
