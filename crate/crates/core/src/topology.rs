//! Cell topology for the AWGR and server based PON data-centre architecture.
//!
//! A cell is a set of racks. Each rack holds groups, each group holds
//! subgroups, and each subgroup is a TDM PON serving a few servers. Every
//! group has one special server acting as its gateway: it terminates the
//! upstream TDM coupler of each subgroup, drives a downstream splitter per
//! subgroup, and owns a send/receive AWGR port pair.
//!
//! Two variants are built:
//!
//! * [`Variant::Original`]: the TDM coupler feeds the special server through a
//!   fibre Bragg grating which reflects intra-subgroup traffic back to the
//!   subgroup's servers. AWGR ports of all groups form a full mesh.
//! * [`Variant::Modified`]: every rack has a backplane hub linked to each of
//!   its servers, the coupler feeds the special server directly, and the
//!   AWGR mesh only joins groups in different racks.
//!
//! Links are directed except [`LinkClass::BackplaneToServer`], which can be
//! traversed both ways.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Longest device sequence a candidate path may have.
///
/// The longest recovery route in the original design (relay through a third
/// PON group, or reflection after a downstream relay) spans 12 devices.
pub const DEFAULT_HOP_LIMIT: usize = 12;

/// Default physical link capacity, 10 Gbps.
pub const DEFAULT_LINK_CAPACITY_BPS: f64 = 10e9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("invalid cell parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },
    #[error("unknown device `{0}`")]
    UnknownDevice(String),
    #[error("unknown link `{0}`")]
    UnknownLink(String),
    #[error("device `{0}` is not a server")]
    NotAServer(String),
    #[error("source and destination are the same device `{0}`")]
    SameEndpoints(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Original,
    Modified,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Original => f.write_str("original"),
            Variant::Modified => f.write_str("modified"),
        }
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "original" => Ok(Variant::Original),
            "modified" => Ok(Variant::Modified),
            other => Err(format!("unknown variant `{other}` (expected original|modified)")),
        }
    }
}

/// Whether OLT ports sit idle or act as the upstream head of their group's
/// TDM PONs.
///
/// With [`OltRole::Upstream`], subgroup `q` of a group is served by OLT port
/// `q % olt_ports_per_group`, and every demand entering the special server
/// from that subgroup's coupler passes through (and is billed to) that port.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OltRole {
    #[default]
    Idle,
    Upstream,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CellParams {
    pub racks: usize,
    pub groups_per_rack: usize,
    pub subgroups_per_group: usize,
    pub servers_per_subgroup: usize,
    pub variant: Variant,
    pub olt_ports_per_group: usize,
    pub olt_role: OltRole,
    pub link_capacity_bps: f64,
}

impl Default for CellParams {
    fn default() -> Self {
        CellParams {
            racks: 2,
            groups_per_rack: 2,
            subgroups_per_group: 2,
            servers_per_subgroup: 2,
            variant: Variant::Modified,
            olt_ports_per_group: 1,
            olt_role: OltRole::Idle,
            link_capacity_bps: DEFAULT_LINK_CAPACITY_BPS,
        }
    }
}

impl CellParams {
    pub fn with_variant(variant: Variant) -> Self {
        CellParams { variant, ..Default::default() }
    }

    pub fn server_count(&self) -> usize {
        self.racks * self.groups_per_rack * self.subgroups_per_group * self.servers_per_subgroup
    }

    pub fn check(&self) -> Result<(), TopologyError> {
        let counts = [
            ("racks", self.racks),
            ("groups_per_rack", self.groups_per_rack),
            ("subgroups_per_group", self.subgroups_per_group),
            ("servers_per_subgroup", self.servers_per_subgroup),
            ("olt_ports_per_group", self.olt_ports_per_group),
        ];
        for (field, value) in counts {
            if value == 0 {
                return Err(TopologyError::InvalidParam { field, reason: "must be at least 1".into() });
            }
        }
        if !(self.link_capacity_bps.is_finite() && self.link_capacity_bps > 0.0) {
            return Err(TopologyError::InvalidParam {
                field: "link_capacity_bps",
                reason: format!("must be positive, got {}", self.link_capacity_bps),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DeviceId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkId(pub usize);

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{:03}", self.0)
    }
}

impl FromStr for LinkId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix('l').and_then(|n| n.parse().ok()).map(LinkId).ok_or_else(|| format!("malformed link id `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DeviceKind {
    Server,
    SpecialServer,
    TdmCoupler,
    Splitter,
    Fbg,
    AwgrTx,
    AwgrRx,
    OltPort,
    Backplane,
}

impl DeviceKind {
    /// Devices that forward traffic actively and draw power.
    pub fn is_active_element(self) -> bool {
        matches!(self, DeviceKind::Server | DeviceKind::SpecialServer)
    }
}

/// Position of a device inside the cell. Group and subgroup indices are
/// local to their parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Locus {
    pub rack: usize,
    pub group: Option<usize>,
    pub subgroup: Option<usize>,
    pub slot: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub id: DeviceId,
    pub kind: DeviceKind,
    pub locus: Locus,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LinkClass {
    BackplaneToServer,
    ServerToTdm,
    TdmToSpecial,
    SpecialToSplitter,
    SplitterToServer,
    SpecialToAwgr,
    AwgrToSpecial,
    AwgrToAwgr,
    TdmToFbg,
}

impl LinkClass {
    pub const ALL: [LinkClass; 9] = [
        LinkClass::BackplaneToServer,
        LinkClass::ServerToTdm,
        LinkClass::TdmToSpecial,
        LinkClass::SpecialToSplitter,
        LinkClass::SplitterToServer,
        LinkClass::SpecialToAwgr,
        LinkClass::AwgrToSpecial,
        LinkClass::AwgrToAwgr,
        LinkClass::TdmToFbg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LinkClass::BackplaneToServer => "BackplaneToServer",
            LinkClass::ServerToTdm => "ServerToTdm",
            LinkClass::TdmToSpecial => "TdmToSpecial",
            LinkClass::SpecialToSplitter => "SpecialToSplitter",
            LinkClass::SplitterToServer => "SplitterToServer",
            LinkClass::SpecialToAwgr => "SpecialToAwgr",
            LinkClass::AwgrToSpecial => "AwgrToSpecial",
            LinkClass::AwgrToAwgr => "AwgrToAwgr",
            LinkClass::TdmToFbg => "TdmToFbg",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            LinkClass::BackplaneToServer => "backplane to a server link",
            LinkClass::ServerToTdm => "server to TDM PON link",
            LinkClass::TdmToSpecial => "link between TDM PON and special server",
            LinkClass::SpecialToSplitter => "link from special server to splitter",
            LinkClass::SplitterToServer => "splitter link to server",
            LinkClass::SpecialToAwgr => "link from special server to AWGR",
            LinkClass::AwgrToSpecial => "link from AWGR to special server",
            LinkClass::AwgrToAwgr => "link between AWGRs",
            LinkClass::TdmToFbg => "link between TDM PON and FBG",
        }
    }

    pub fn is_bidirectional(self) -> bool {
        self == LinkClass::BackplaneToServer
    }

    /// Whether `(tail, head)` kinds are legal endpoints for this class.
    ///
    /// The FBG class covers the whole fibre on which the grating sits: the
    /// coupler side, the special-server side, and the reflected return to
    /// each server of the subgroup.
    pub fn accepts(self, tail: DeviceKind, head: DeviceKind) -> bool {
        use DeviceKind::*;
        match self {
            LinkClass::BackplaneToServer => tail == Backplane && head == Server,
            LinkClass::ServerToTdm => tail == Server && head == TdmCoupler,
            LinkClass::TdmToSpecial => tail == TdmCoupler && head == SpecialServer,
            LinkClass::SpecialToSplitter => tail == SpecialServer && head == Splitter,
            LinkClass::SplitterToServer => tail == Splitter && head == Server,
            LinkClass::SpecialToAwgr => tail == SpecialServer && head == AwgrTx,
            LinkClass::AwgrToSpecial => tail == AwgrRx && head == SpecialServer,
            LinkClass::AwgrToAwgr => tail == AwgrTx && head == AwgrRx,
            LinkClass::TdmToFbg => {
                (tail == TdmCoupler && head == Fbg) || (tail == Fbg && matches!(head, SpecialServer | Server))
            }
        }
    }
}

impl fmt::Display for LinkClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LinkClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LinkClass::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| format!("unknown link class `{s}`"))
    }
}

/// A physical link. For directed classes traffic flows `a -> b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub cls: LinkClass,
    pub a: DeviceId,
    pub b: DeviceId,
    pub capacity_bps: f64,
}

/// One traversal of a link, in the direction of travel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Hop {
    pub link: LinkId,
    pub from: DeviceId,
    pub to: DeviceId,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Path {
    pub src: DeviceId,
    pub dst: DeviceId,
    pub devices: Vec<DeviceId>,
    pub hops: Vec<Hop>,
    /// Servers and special servers that forward the demand.
    pub relays: Vec<DeviceId>,
}

impl Path {
    pub fn device_count(&self) -> usize {
        self.devices.len()
    }

    pub fn uses_link(&self, link: LinkId) -> bool {
        self.hops.iter().any(|h| h.link == link)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub invariant: &'static str,
    pub element: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", self.invariant, self.element, self.message)
    }
}

/// Immutable device/link graph of one cell.
#[derive(Debug, Clone)]
pub struct Topology {
    params: CellParams,
    devices: Vec<Device>,
    links: Vec<Link>,
    by_name: HashMap<String, DeviceId>,
    dev_pos: HashMap<DeviceId, usize>,
    link_pos: HashMap<LinkId, usize>,
    out: Vec<Vec<Hop>>,
    olt_feeds: HashMap<LinkId, DeviceId>,
}

impl PartialEq for Topology {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params && self.devices == other.devices && self.links == other.links
    }
}

struct Builder {
    devices: Vec<Device>,
    links: Vec<Link>,
    capacity: f64,
}

impl Builder {
    fn device(&mut self, kind: DeviceKind, locus: Locus, name: String) -> DeviceId {
        let id = DeviceId(self.devices.len());
        self.devices.push(Device { id, kind, locus, name });
        id
    }

    fn link(&mut self, cls: LinkClass, a: DeviceId, b: DeviceId) -> LinkId {
        let id = LinkId(self.links.len());
        self.links.push(Link { id, cls, a, b, capacity_bps: self.capacity });
        id
    }
}

struct GroupIds {
    rack: usize,
    special: DeviceId,
    tx: DeviceId,
    rx: DeviceId,
    olt_ports: Vec<DeviceId>,
    subgroups: Vec<SubgroupIds>,
}

struct SubgroupIds {
    coupler: DeviceId,
    splitter: DeviceId,
    fbg: Option<DeviceId>,
    servers: Vec<DeviceId>,
}

/// Builds the cell for `params`. Ids are assigned in a fixed traversal
/// order, so equal parameters give identical topologies.
pub fn build_cell(params: &CellParams) -> Result<Topology, TopologyError> {
    params.check()?;
    let modified = params.variant == Variant::Modified;
    let mut b = Builder { devices: Vec::new(), links: Vec::new(), capacity: params.link_capacity_bps };

    let mut backplanes = Vec::new();
    let mut groups = Vec::new();
    for r in 0..params.racks {
        let at = |group, subgroup, slot| Locus { rack: r, group, subgroup, slot };
        if modified {
            backplanes.push(b.device(DeviceKind::Backplane, at(None, None, None), format!("bp-r{r}")));
        }
        for g in 0..params.groups_per_rack {
            let special = b.device(DeviceKind::SpecialServer, at(Some(g), None, None), format!("ss-r{r}-g{g}"));
            let tx = b.device(DeviceKind::AwgrTx, at(Some(g), None, None), format!("awtx-r{r}-g{g}"));
            let rx = b.device(DeviceKind::AwgrRx, at(Some(g), None, None), format!("awrx-r{r}-g{g}"));
            let olt_ports = (0..params.olt_ports_per_group)
                .map(|p| b.device(DeviceKind::OltPort, at(Some(g), None, Some(p)), format!("olt-r{r}-g{g}-p{p}")))
                .collect();
            let mut subgroups = Vec::new();
            for q in 0..params.subgroups_per_group {
                let coupler =
                    b.device(DeviceKind::TdmCoupler, at(Some(g), Some(q), None), format!("tdm-r{r}-g{g}-q{q}"));
                let splitter =
                    b.device(DeviceKind::Splitter, at(Some(g), Some(q), None), format!("spl-r{r}-g{g}-q{q}"));
                let fbg = (!modified)
                    .then(|| b.device(DeviceKind::Fbg, at(Some(g), Some(q), None), format!("fbg-r{r}-g{g}-q{q}")));
                let servers = (0..params.servers_per_subgroup)
                    .map(|n| {
                        b.device(DeviceKind::Server, at(Some(g), Some(q), Some(n)), format!("srv-r{r}-g{g}-q{q}-n{n}"))
                    })
                    .collect();
                subgroups.push(SubgroupIds { coupler, splitter, fbg, servers });
            }
            groups.push(GroupIds { rack: r, special, tx, rx, olt_ports, subgroups });
        }
    }

    // Links are numbered class by class so each failure class has a stable,
    // locality-ordered list of instances.
    let servers_of = |grp: &GroupIds| -> Vec<(DeviceId, usize)> {
        grp.subgroups.iter().flat_map(|sg| sg.servers.iter().map(|&s| (s, grp.rack))).collect()
    };
    if modified {
        for grp in &groups {
            for (s, rack) in servers_of(grp) {
                b.link(LinkClass::BackplaneToServer, backplanes[rack], s);
            }
        }
    }
    for grp in &groups {
        for sg in &grp.subgroups {
            for &s in &sg.servers {
                b.link(LinkClass::ServerToTdm, s, sg.coupler);
            }
        }
    }
    let mut head_links: Vec<(LinkId, DeviceId)> = Vec::new();
    if modified {
        for grp in &groups {
            for (q, sg) in grp.subgroups.iter().enumerate() {
                let l = b.link(LinkClass::TdmToSpecial, sg.coupler, grp.special);
                head_links.push((l, grp.olt_ports[q % grp.olt_ports.len()]));
            }
        }
    }
    for grp in &groups {
        for sg in &grp.subgroups {
            b.link(LinkClass::SpecialToSplitter, grp.special, sg.splitter);
        }
    }
    for grp in &groups {
        for sg in &grp.subgroups {
            for &s in &sg.servers {
                b.link(LinkClass::SplitterToServer, sg.splitter, s);
            }
        }
    }
    for grp in &groups {
        b.link(LinkClass::SpecialToAwgr, grp.special, grp.tx);
    }
    for grp in &groups {
        b.link(LinkClass::AwgrToSpecial, grp.rx, grp.special);
    }
    for from in &groups {
        for to in &groups {
            let wired = if modified { from.rack != to.rack } else { !std::ptr::eq(from, to) };
            if wired {
                b.link(LinkClass::AwgrToAwgr, from.tx, to.rx);
            }
        }
    }
    if !modified {
        for grp in &groups {
            for (q, sg) in grp.subgroups.iter().enumerate() {
                let fbg = sg.fbg.expect("original variant has a grating per subgroup");
                b.link(LinkClass::TdmToFbg, sg.coupler, fbg);
                let l = b.link(LinkClass::TdmToFbg, fbg, grp.special);
                head_links.push((l, grp.olt_ports[q % grp.olt_ports.len()]));
                for &s in &sg.servers {
                    b.link(LinkClass::TdmToFbg, fbg, s);
                }
            }
        }
    }

    let olt_feeds = match params.olt_role {
        OltRole::Idle => HashMap::new(),
        OltRole::Upstream => head_links.into_iter().collect(),
    };
    let mut t = Topology::from_parts(params.clone(), b.devices, b.links);
    t.olt_feeds = olt_feeds;
    Ok(t)
}

impl Topology {
    /// Assembles a topology from raw parts without checking invariants; use
    /// [`validate`] to inspect the result.
    pub fn from_parts(params: CellParams, devices: Vec<Device>, mut links: Vec<Link>) -> Topology {
        links.sort_by_key(|l| l.id);
        let by_name = devices.iter().map(|d| (d.name.clone(), d.id)).collect();
        let dev_pos: HashMap<DeviceId, usize> = devices.iter().enumerate().map(|(i, d)| (d.id, i)).collect();
        let link_pos = links.iter().enumerate().map(|(i, l)| (l.id, i)).collect();
        let slots = devices.iter().map(|d| d.id.0 + 1).max().unwrap_or(0);
        let mut out = vec![Vec::new(); slots];
        for l in &links {
            if dev_pos.contains_key(&l.a) && dev_pos.contains_key(&l.b) {
                out[l.a.0].push(Hop { link: l.id, from: l.a, to: l.b });
                if l.cls.is_bidirectional() {
                    out[l.b.0].push(Hop { link: l.id, from: l.b, to: l.a });
                }
            }
        }
        for hops in &mut out {
            hops.sort_by_key(|h| (h.to, h.link));
        }
        Topology { params, devices, links, by_name, dev_pos, link_pos, out, olt_feeds: HashMap::new() }
    }

    pub fn params(&self) -> &CellParams {
        &self.params
    }

    pub fn variant(&self) -> Variant {
        self.params.variant
    }

    pub fn devices(&self) -> &[Device] {
        &self.devices
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn device(&self, id: DeviceId) -> &Device {
        &self.devices[self.dev_pos[&id]]
    }

    pub fn link(&self, id: LinkId) -> Option<&Link> {
        self.link_pos.get(&id).map(|&i| &self.links[i])
    }

    pub fn device_by_name(&self, name: &str) -> Result<DeviceId, TopologyError> {
        self.by_name.get(name).copied().ok_or_else(|| TopologyError::UnknownDevice(name.to_string()))
    }

    pub fn name(&self, id: DeviceId) -> &str {
        &self.device(id).name
    }

    pub fn kind(&self, id: DeviceId) -> DeviceKind {
        self.device(id).kind
    }

    pub fn devices_of(&self, kind: DeviceKind) -> impl Iterator<Item = &Device> + '_ {
        self.devices.iter().filter(move |d| d.kind == kind)
    }

    pub fn servers(&self) -> Vec<DeviceId> {
        self.devices_of(DeviceKind::Server).map(|d| d.id).collect()
    }

    pub fn links_of(&self, cls: LinkClass) -> impl Iterator<Item = &Link> + '_ {
        self.links.iter().filter(move |l| l.cls == cls)
    }

    /// Outgoing traversals from `id`, respecting link direction.
    pub fn hops_from(&self, id: DeviceId) -> &[Hop] {
        &self.out[id.0]
    }

    /// OLT port billed for upstream traffic crossing `link`, if any.
    pub fn olt_for(&self, link: LinkId) -> Option<DeviceId> {
        self.olt_feeds.get(&link).copied()
    }

    pub fn same_rack(&self, a: DeviceId, b: DeviceId) -> bool {
        self.device(a).locus.rack == self.device(b).locus.rack
    }

    /// Copy of the topology without `link`.
    pub fn without_link(&self, link: LinkId) -> Result<Topology, TopologyError> {
        if self.link(link).is_none() {
            return Err(TopologyError::UnknownLink(link.to_string()));
        }
        let links = self.links.iter().filter(|l| l.id != link).cloned().collect();
        let mut t = Topology::from_parts(self.params.clone(), self.devices.clone(), links);
        t.olt_feeds = self.olt_feeds.clone();
        t.olt_feeds.remove(&link);
        Ok(t)
    }

    /// Copy of the topology without the listed devices and every link
    /// touching them. Remaining device ids are preserved.
    pub fn without_devices(&self, removed: &[DeviceId]) -> Topology {
        let gone: HashSet<DeviceId> = removed.iter().copied().collect();
        let devices = self.devices.iter().filter(|d| !gone.contains(&d.id)).cloned().collect();
        let links = self.links.iter().filter(|l| !gone.contains(&l.a) && !gone.contains(&l.b)).cloned().collect();
        let mut t = Topology::from_parts(self.params.clone(), devices, links);
        t.olt_feeds = self.olt_feeds.iter().filter(|(_, o)| !gone.contains(o)).map(|(l, o)| (*l, *o)).collect();
        t
    }

    pub fn contains_device(&self, id: DeviceId) -> bool {
        self.dev_pos.contains_key(&id)
    }

    fn check_pair(&self, src: DeviceId, dst: DeviceId) -> Result<(), TopologyError> {
        for id in [src, dst] {
            match self.dev_pos.get(&id).map(|&i| &self.devices[i]) {
                None => return Err(TopologyError::UnknownDevice(format!("#{}", id.0))),
                Some(d) if d.kind != DeviceKind::Server => return Err(TopologyError::NotAServer(d.name.clone())),
                Some(_) => {}
            }
        }
        if src == dst {
            return Err(TopologyError::SameEndpoints(self.name(src).to_string()));
        }
        Ok(())
    }

    fn make_path(&self, hops: Vec<Hop>) -> Path {
        let src = hops[0].from;
        let dst = hops[hops.len() - 1].to;
        let mut devices = vec![src];
        devices.extend(hops.iter().map(|h| h.to));
        let relays =
            devices[1..devices.len() - 1].iter().copied().filter(|&d| self.kind(d).is_active_element()).collect();
        Path { src, dst, devices, hops, relays }
    }

    /// All simple, direction-respecting paths from `src` to `dst` with at
    /// most `hop_limit` devices, sorted by length then by device ids.
    pub fn candidate_paths(&self, src: DeviceId, dst: DeviceId, hop_limit: usize) -> Result<Vec<Path>, TopologyError> {
        self.check_pair(src, dst)?;
        let mut found = Vec::new();
        if hop_limit < 2 {
            return Ok(found);
        }
        let mut on_path = vec![false; self.out.len()];
        let mut stack: Vec<Hop> = Vec::new();
        on_path[src.0] = true;
        self.extend_paths(src, dst, hop_limit, &mut on_path, &mut stack, &mut found);
        found.sort_by(|a, b| a.devices.len().cmp(&b.devices.len()).then_with(|| a.devices.cmp(&b.devices)));
        Ok(found)
    }

    fn extend_paths(
        &self,
        at: DeviceId,
        dst: DeviceId,
        hop_limit: usize,
        on_path: &mut [bool],
        stack: &mut Vec<Hop>,
        found: &mut Vec<Path>,
    ) {
        // devices on the path so far = stack.len() + 1
        if stack.len() + 1 >= hop_limit {
            return;
        }
        for hop in &self.out[at.0] {
            if on_path[hop.to.0] {
                continue;
            }
            stack.push(*hop);
            if hop.to == dst {
                found.push(self.make_path(stack.clone()));
            } else {
                on_path[hop.to.0] = true;
                self.extend_paths(hop.to, dst, hop_limit, on_path, stack, found);
                on_path[hop.to.0] = false;
            }
            stack.pop();
        }
    }

    /// Length in devices of the shortest direction-respecting path, if any.
    pub fn shortest_path_len(&self, src: DeviceId, dst: DeviceId) -> Option<usize> {
        if !self.contains_device(src) || !self.contains_device(dst) {
            return None;
        }
        let mut dist = vec![usize::MAX; self.out.len()];
        let mut queue = VecDeque::new();
        dist[src.0] = 1;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            if u == dst {
                return Some(dist[u.0]);
            }
            for hop in &self.out[u.0] {
                if dist[hop.to.0] == usize::MAX {
                    dist[hop.to.0] = dist[u.0] + 1;
                    queue.push_back(hop.to);
                }
            }
        }
        None
    }

    /// Whether some candidate path exists within `hop_limit` devices.
    pub fn reachable_within(&self, src: DeviceId, dst: DeviceId, hop_limit: usize) -> bool {
        src != dst && self.shortest_path_len(src, dst).is_some_and(|n| n <= hop_limit)
    }

    /// Re-checks a path against this topology: links exist, hops chain,
    /// directions are legal, no device repeats, relays are correct.
    pub fn check_path(&self, path: &Path, hop_limit: usize) -> Result<(), String> {
        if path.hops.is_empty() {
            return Err("path has no hops".into());
        }
        if path.devices.len() > hop_limit {
            return Err(format!("{} devices exceeds hop limit {hop_limit}", path.devices.len()));
        }
        if path.devices.first() != Some(&path.src) || path.devices.last() != Some(&path.dst) {
            return Err("device list does not start at src and end at dst".into());
        }
        let mut seen = HashSet::new();
        for d in &path.devices {
            if !seen.insert(*d) {
                return Err(format!("device {} repeats", self.name(*d)));
            }
        }
        for (i, hop) in path.hops.iter().enumerate() {
            let link = self.link(hop.link).ok_or_else(|| format!("link {} does not exist", hop.link))?;
            let forward = link.a == hop.from && link.b == hop.to;
            let backward = link.cls.is_bidirectional() && link.b == hop.from && link.a == hop.to;
            if !(forward || backward) {
                return Err(format!("hop {i} traverses {} against its direction", hop.link));
            }
            if path.devices[i] != hop.from || path.devices[i + 1] != hop.to {
                return Err(format!("hop {i} does not chain"));
            }
        }
        let expected: Vec<DeviceId> = self.make_path(path.hops.clone()).relays;
        if expected != path.relays {
            return Err("relay set mismatch".into());
        }
        Ok(())
    }

    /// Edge list with one line per link:
    /// `link_id,cls,endpoint_a,endpoint_b,capacity_bps`.
    pub fn export_edge_list<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for l in &self.links {
            writeln!(w, "{},{},{},{},{}", l.id, l.cls, self.name(l.a), self.name(l.b), l.capacity_bps)?;
        }
        Ok(())
    }

    pub fn edge_list(&self) -> String {
        let mut buf = Vec::new();
        self.export_edge_list(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("names are ASCII")
    }
}

fn diag(invariant: &'static str, element: impl Into<String>, message: impl Into<String>) -> Diagnostic {
    Diagnostic { invariant, element: element.into(), message: message.into() }
}

/// Checks every topology invariant, returning one diagnostic per violation.
pub fn validate(t: &Topology) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let p = t.params();
    if let Err(e) = p.check() {
        out.push(diag("cell-params", "params", e.to_string()));
    }
    let modified = p.variant == Variant::Modified;

    let mut names = HashSet::new();
    for d in t.devices() {
        if !names.insert(d.name.as_str()) {
            out.push(diag("unique-ids", &d.name, "duplicate device name"));
        }
    }
    let mut link_ids = HashSet::new();
    for l in t.links() {
        if !link_ids.insert(l.id) {
            out.push(diag("unique-ids", l.id.to_string(), "duplicate link id"));
        }
    }

    let exists = |id: DeviceId| t.contains_device(id);
    for l in t.links() {
        if !exists(l.a) || !exists(l.b) {
            out.push(diag("link-endpoints", l.id.to_string(), "endpoint device does not exist"));
            continue;
        }
        if !l.cls.accepts(t.kind(l.a), t.kind(l.b)) {
            out.push(diag(
                "link-class",
                l.id.to_string(),
                format!("{} cannot join {:?} to {:?}", l.cls, t.kind(l.a), t.kind(l.b)),
            ));
        }
        if !(l.capacity_bps > 0.0) {
            out.push(diag("link-capacity", l.id.to_string(), "capacity must be positive"));
        }
        if l.cls == LinkClass::TdmToFbg && modified {
            out.push(diag("fbg-original-only", l.id.to_string(), "FBG links exist only in the original design"));
        }
    }

    // One special server per (rack, group).
    let mut specials: HashMap<(usize, usize), usize> = HashMap::new();
    for d in t.devices_of(DeviceKind::SpecialServer) {
        *specials.entry((d.locus.rack, d.locus.group.unwrap_or(usize::MAX))).or_default() += 1;
    }
    for r in 0..p.racks {
        for g in 0..p.groups_per_rack {
            let n = specials.get(&(r, g)).copied().unwrap_or(0);
            if n != 1 {
                out.push(diag(
                    "one-special-server-per-group",
                    format!("rack {r} group {g}"),
                    format!("expected exactly one special server, found {n}"),
                ));
            }
        }
    }

    let count_links =
        |dev: DeviceId, cls: LinkClass, other: DeviceKind, dev_is_tail: bool| {
            t.links()
                .iter()
                .filter(|l| l.cls == cls && exists(l.a) && exists(l.b))
                .filter(|l| {
                    if dev_is_tail {
                        l.a == dev && t.kind(l.b) == other
                    } else {
                        l.b == dev && t.kind(l.a) == other
                    }
                })
                .count()
        };

    for ss in t.devices_of(DeviceKind::SpecialServer) {
        let tx = count_links(ss.id, LinkClass::SpecialToAwgr, DeviceKind::AwgrTx, true);
        if tx != 1 {
            out.push(diag("special-server-awgr-tx", &ss.name, format!("expected one AWGR send link, found {tx}")));
        }
        let rx = count_links(ss.id, LinkClass::AwgrToSpecial, DeviceKind::AwgrRx, false);
        if rx != 1 {
            out.push(diag("special-server-awgr-rx", &ss.name, format!("expected one AWGR receive link, found {rx}")));
        }
    }

    for f in t.devices_of(DeviceKind::Fbg) {
        if modified {
            out.push(diag("fbg-original-only", &f.name, "gratings exist only in the original design"));
        }
    }

    let backplanes: Vec<&Device> = t.devices_of(DeviceKind::Backplane).collect();
    if modified {
        for r in 0..p.racks {
            let n = backplanes.iter().filter(|b| b.locus.rack == r).count();
            if n != 1 {
                out.push(diag(
                    "rack-backplane",
                    format!("rack {r}"),
                    format!("modified design connects each rack's servers through one backplane, found {n}"),
                ));
            }
        }
    } else {
        for b in &backplanes {
            out.push(diag("rack-backplane", &b.name, "original design has no rack backplane"));
        }
    }

    for s in t.devices_of(DeviceKind::Server) {
        if modified {
            let n = count_links(s.id, LinkClass::BackplaneToServer, DeviceKind::Backplane, false);
            if n != 1 {
                out.push(diag("server-backplane-link", &s.name, format!("expected one backplane link, found {n}")));
            }
        }
        if count_links(s.id, LinkClass::ServerToTdm, DeviceKind::TdmCoupler, true) == 0 {
            out.push(diag("server-upstream-link", &s.name, "missing server to TDM PON link"));
        }
        if count_links(s.id, LinkClass::SplitterToServer, DeviceKind::Splitter, false) == 0 {
            out.push(diag("server-downstream-link", &s.name, "missing splitter to server link"));
        }
    }

    if let Some(first) = t.devices().first() {
        // OLT ports are attached to their special server, not linked.
        let linked: Vec<&Device> = t.devices().iter().filter(|d| d.kind != DeviceKind::OltPort).collect();
        let mut adj: HashMap<DeviceId, Vec<DeviceId>> = HashMap::new();
        for l in t.links() {
            adj.entry(l.a).or_default().push(l.b);
            adj.entry(l.b).or_default().push(l.a);
        }
        let start = linked.first().map(|d| d.id).unwrap_or(first.id);
        let mut seen = HashSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
                if seen.insert(v) {
                    queue.push_back(v);
                }
            }
        }
        for d in linked {
            if !seen.contains(&d.id) {
                out.push(diag("connected", &d.name, "device is disconnected from the rest of the cell"));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(t: &Topology, kind: DeviceKind) -> usize {
        t.devices_of(kind).count()
    }

    #[test]
    fn default_modified_cell_counts() {
        let t = build_cell(&CellParams::default()).unwrap();
        assert_eq!(count(&t, DeviceKind::Server), 16);
        assert_eq!(count(&t, DeviceKind::SpecialServer), 4);
        assert_eq!(count(&t, DeviceKind::Backplane), 2);
        assert_eq!(count(&t, DeviceKind::Fbg), 0);
        assert!(validate(&t).is_empty(), "{:?}", validate(&t));
    }

    #[test]
    fn minimal_cell_is_connected() {
        let p = CellParams {
            racks: 1,
            groups_per_rack: 1,
            subgroups_per_group: 1,
            servers_per_subgroup: 1,
            ..Default::default()
        };
        let t = build_cell(&p).unwrap();
        assert_eq!(count(&t, DeviceKind::Server), 1);
        assert_eq!(count(&t, DeviceKind::SpecialServer), 1);
        assert_eq!(count(&t, DeviceKind::Backplane), 1);
        assert!(validate(&t).is_empty(), "{:?}", validate(&t));
    }

    #[test]
    fn original_cell_has_gratings_and_no_backplane() {
        let t = build_cell(&CellParams::with_variant(Variant::Original)).unwrap();
        assert!(t.links_of(LinkClass::TdmToFbg).count() > 0);
        assert_eq!(t.links_of(LinkClass::BackplaneToServer).count(), 0);
        assert_eq!(t.links_of(LinkClass::TdmToSpecial).count(), 0);
        assert!(validate(&t).is_empty(), "{:?}", validate(&t));
    }

    #[test]
    fn zero_count_names_the_field() {
        let p = CellParams { subgroups_per_group: 0, ..Default::default() };
        match build_cell(&p) {
            Err(TopologyError::InvalidParam { field, .. }) => assert_eq!(field, "subgroups_per_group"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn same_rack_pair_has_two_hop_backplane_path() {
        let t = build_cell(&CellParams::default()).unwrap();
        let a = t.device_by_name("srv-r0-g0-q0-n0").unwrap();
        let b = t.device_by_name("srv-r0-g1-q1-n1").unwrap();
        let paths = t.candidate_paths(a, b, DEFAULT_HOP_LIMIT).unwrap();
        let first = &paths[0];
        assert_eq!(first.hops.len(), 2);
        assert_eq!(t.kind(first.devices[1]), DeviceKind::Backplane);
        assert!(first.relays.is_empty());
    }

    #[test]
    fn inter_rack_pair_includes_gateway_chain() {
        let t = build_cell(&CellParams::default()).unwrap();
        let a = t.device_by_name("srv-r0-g0-q0-n0").unwrap();
        let b = t.device_by_name("srv-r1-g1-q0-n1").unwrap();
        let names: Vec<Vec<&str>> = t
            .candidate_paths(a, b, DEFAULT_HOP_LIMIT)
            .unwrap()
            .iter()
            .map(|p| p.devices.iter().map(|&d| t.name(d)).collect())
            .collect();
        let chain = vec![
            "srv-r0-g0-q0-n0",
            "tdm-r0-g0-q0",
            "ss-r0-g0",
            "awtx-r0-g0",
            "awrx-r1-g1",
            "ss-r1-g1",
            "spl-r1-g1-q0",
            "srv-r1-g1-q0-n1",
        ];
        assert!(names.contains(&chain));
    }

    #[test]
    fn upstream_cut_recovers_through_backplane_relay() {
        let t = build_cell(&CellParams::default()).unwrap();
        let a = t.device_by_name("srv-r0-g0-q0-n0").unwrap();
        let b = t.device_by_name("srv-r1-g0-q0-n0").unwrap();
        let up = t.links_of(LinkClass::ServerToTdm).find(|l| l.a == a).unwrap().id;
        let cut = t.without_link(up).unwrap();
        let paths = cut.candidate_paths(a, b, DEFAULT_HOP_LIMIT).unwrap();
        assert!(!paths.is_empty());
        assert!(paths.iter().all(|p| !p.uses_link(up)));
        assert!(paths
            .iter()
            .any(|p| cut.kind(p.devices[1]) == DeviceKind::Backplane && cut.kind(p.devices[2]) == DeviceKind::Server));
    }

    #[test]
    fn intra_subgroup_reflection_in_original() {
        let t = build_cell(&CellParams::with_variant(Variant::Original)).unwrap();
        let a = t.device_by_name("srv-r0-g0-q0-n0").unwrap();
        let b = t.device_by_name("srv-r0-g0-q0-n1").unwrap();
        let first = &t.candidate_paths(a, b, DEFAULT_HOP_LIMIT).unwrap()[0];
        let kinds: Vec<DeviceKind> = first.devices.iter().map(|&d| t.kind(d)).collect();
        assert_eq!(kinds, vec![DeviceKind::Server, DeviceKind::TdmCoupler, DeviceKind::Fbg, DeviceKind::Server]);
    }

    #[test]
    fn hop_limit_zero_and_bad_ids() {
        let t = build_cell(&CellParams::default()).unwrap();
        let s = t.servers();
        assert!(t.candidate_paths(s[0], s[1], 0).unwrap().is_empty());
        assert!(matches!(t.candidate_paths(s[0], s[0], 5), Err(TopologyError::SameEndpoints(_))));
        assert!(matches!(t.candidate_paths(s[0], DeviceId(9999), 5), Err(TopologyError::UnknownDevice(_))));
        let ss = t.devices_of(DeviceKind::SpecialServer).next().unwrap().id;
        assert!(matches!(t.candidate_paths(s[0], ss, 5), Err(TopologyError::NotAServer(_))));
    }

    #[test]
    fn missing_awgr_tx_link_is_reported_once() {
        let t = build_cell(&CellParams::default()).unwrap();
        let l = t.links_of(LinkClass::SpecialToAwgr).next().unwrap().id;
        let diags = validate(&t.without_link(l).unwrap());
        assert_eq!(diags.len(), 1, "{diags:?}");
        assert_eq!(diags[0].invariant, "special-server-awgr-tx");
    }

    #[test]
    fn modified_without_backplanes_is_reported() {
        let t = build_cell(&CellParams::default()).unwrap();
        let bps: Vec<DeviceId> = t.devices_of(DeviceKind::Backplane).map(|d| d.id).collect();
        let diags = validate(&t.without_devices(&bps));
        assert!(diags.iter().any(|d| d.invariant == "rack-backplane"), "{diags:?}");
    }

    #[test]
    fn edge_list_format() {
        let t = build_cell(&CellParams::default()).unwrap();
        let text = t.edge_list();
        assert_eq!(text.lines().count(), t.links().len());
        assert_eq!(text.lines().next().unwrap(), "l000,BackplaneToServer,bp-r0,srv-r0-g0-q0-n0,10000000000");
    }

    #[test]
    fn link_ids_round_trip() {
        assert_eq!("l042".parse::<LinkId>().unwrap(), LinkId(42));
        assert_eq!(LinkId(7).to_string(), "l007");
        assert!("x1".parse::<LinkId>().is_err());
    }
}
