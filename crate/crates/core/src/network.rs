//! Origin-destination aggregation into a directed weighted station graph.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::ingest::TripRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct Station {
    pub id: i64,
    pub name: String,
    /// (latitude, longitude) in degrees.
    pub coord: Option<(f64, f64)>,
}

impl Station {
    pub fn new(id: i64, name: impl Into<String>) -> Self {
        Station {
            id,
            name: name.into(),
            coord: None,
        }
    }

    pub fn with_coord(mut self, lat: f64, lon: f64) -> Self {
        self.coord = Some((lat, lon));
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub weight: u64,
}

impl Edge {
    pub fn is_self_loop(&self) -> bool {
        self.source == self.target
    }
}

/// Directed weighted station graph. Edges are sorted by (source, target) and
/// every ordered pair appears at most once with positive weight.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowNetwork {
    nodes: Vec<Station>,
    edges: Vec<Edge>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
    index_of: HashMap<i64, usize>,
}

impl FlowNetwork {
    /// Builds a network from node metadata and `(source, target, weight)`
    /// triples. Parallel edges are summed and zero weights dropped.
    pub fn from_edges(
        nodes: Vec<Station>,
        edges: impl IntoIterator<Item = (usize, usize, u64)>,
    ) -> Result<Self> {
        let index_of = station_index(&nodes)?;
        let n = nodes.len();
        let mut agg: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for (s, t, w) in edges {
            if s >= n || t >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({s}, {t}) references a node outside 0..{n}"
                )));
            }
            if w > 0 {
                *agg.entry((s, t)).or_default() += w;
            }
        }
        let edges: Vec<Edge> = agg
            .into_iter()
            .map(|((source, target), weight)| Edge {
                source,
                target,
                weight,
            })
            .collect();
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        for (i, e) in edges.iter().enumerate() {
            out_edges[e.source].push(i);
            in_edges[e.target].push(i);
        }
        Ok(FlowNetwork {
            nodes,
            edges,
            out_edges,
            in_edges,
            index_of,
        })
    }

    /// Network with anonymous stations `0..n` and no coordinates.
    pub fn from_index_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize, u64)>,
    ) -> Result<Self> {
        let nodes = (0..n as i64).map(|i| Station::new(i, i.to_string())).collect();
        Self::from_edges(nodes, edges)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Station] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edge indices leaving `node`.
    pub fn out_edges(&self, node: usize) -> &[usize] {
        &self.out_edges[node]
    }

    /// Edge indices entering `node`.
    pub fn in_edges(&self, node: usize) -> &[usize] {
        &self.in_edges[node]
    }

    pub fn index_of(&self, station_id: i64) -> Option<usize> {
        self.index_of.get(&station_id).copied()
    }

    pub fn total_weight(&self) -> u64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    fn check_node(&self, node: usize) -> Result<()> {
        if node >= self.nodes.len() {
            return Err(Error::InvalidArgument(format!(
                "node index {node} out of range (n = {})",
                self.nodes.len()
            )));
        }
        Ok(())
    }

    /// Sum of out-edge weights, self-loops included.
    pub fn out_strength(&self, node: usize) -> Result<u64> {
        self.check_node(node)?;
        Ok(self.out_edges[node].iter().map(|&e| self.edges[e].weight).sum())
    }

    pub fn in_strength(&self, node: usize) -> Result<u64> {
        self.check_node(node)?;
        Ok(self.in_edges[node].iter().map(|&e| self.edges[e].weight).sum())
    }

    /// Out-strengths of every node.
    pub fn out_strengths(&self) -> Vec<u64> {
        let mut s = vec![0; self.nodes.len()];
        for e in &self.edges {
            s[e.source] += e.weight;
        }
        s
    }

    pub fn in_strengths(&self) -> Vec<u64> {
        let mut s = vec![0; self.nodes.len()];
        for e in &self.edges {
            s[e.target] += e.weight;
        }
        s
    }

    /// Number of nodes touched by at least one edge.
    pub fn active_node_count(&self) -> usize {
        let mut active = vec![false; self.nodes.len()];
        for e in &self.edges {
            active[e.source] = true;
            active[e.target] = true;
        }
        active.into_iter().filter(|&a| a).count()
    }

    /// Writes the `origin_id,destination_id,weight` edge list.
    pub fn write_edge_list<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["origin_id", "destination_id", "weight"])?;
        for e in &self.edges {
            w.write_record([
                self.nodes[e.source].id.to_string(),
                self.nodes[e.target].id.to_string(),
                e.weight.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<edge list>", e))?;
        Ok(())
    }

    /// Reads an edge list. When `stations` is given it defines the node
    /// universe (isolated stations included); otherwise nodes are the ids
    /// seen in the edge list, in ascending order.
    pub fn read_edge_list<R: Read>(source: R, stations: Option<Vec<Station>>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            origin_id: i64,
            destination_id: i64,
            weight: u64,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
        let headers = rdr.headers()?.clone();
        for col in ["origin_id", "destination_id", "weight"] {
            if !headers.iter().any(|h| h == col) {
                return Err(Error::MissingColumn {
                    context: "edge list".into(),
                    column: col.into(),
                });
            }
        }
        let mut rows = Vec::new();
        for rec in rdr.deserialize::<Row>() {
            let r = rec?;
            rows.push((r.origin_id, r.destination_id, r.weight));
        }
        let nodes = match stations {
            Some(s) => s,
            None => rows
                .iter()
                .flat_map(|&(a, b, _)| [a, b])
                .collect::<BTreeSet<_>>()
                .into_iter()
                .map(|id| Station::new(id, id.to_string()))
                .collect(),
        };
        let index = station_index(&nodes)?;
        let mut unknown = BTreeSet::new();
        let mut edges = Vec::with_capacity(rows.len());
        for (a, b, w) in rows {
            match (index.get(&a), index.get(&b)) {
                (Some(&s), Some(&t)) => edges.push((s, t, w)),
                (sa, sb) => {
                    if sa.is_none() {
                        unknown.insert(a);
                    }
                    if sb.is_none() {
                        unknown.insert(b);
                    }
                }
            }
        }
        if !unknown.is_empty() {
            return Err(Error::UnknownStations(unknown.into_iter().collect()));
        }
        Self::from_edges(nodes, edges)
    }
}

fn station_index(nodes: &[Station]) -> Result<HashMap<i64, usize>> {
    let mut index = HashMap::with_capacity(nodes.len());
    for (i, s) in nodes.iter().enumerate() {
        if index.insert(s.id, i).is_some() {
            return Err(Error::Schema {
                context: "stations".into(),
                message: format!("duplicate station id {}", s.id),
            });
        }
        if let Some((lat, lon)) = s.coord {
            if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
                return Err(Error::Schema {
                    context: "stations".into(),
                    message: format!("station {} has out-of-range coordinate ({lat}, {lon})", s.id),
                });
            }
        }
    }
    Ok(index)
}

/// Aggregates trips into the OD matrix over the given station universe.
/// Stations without trips stay in the network as isolated nodes.
pub fn build_network<'a, I>(trips: I, stations: &[Station]) -> Result<FlowNetwork>
where
    I: IntoIterator<Item = &'a TripRecord>,
{
    let index = station_index(stations)?;
    let mut unknown = BTreeSet::new();
    let mut pairs = Vec::new();
    for t in trips {
        let s = index.get(&t.start_station_id);
        let d = index.get(&t.end_station_id);
        match (s, d) {
            (Some(&s), Some(&d)) => pairs.push((s, d, 1)),
            _ => {
                if s.is_none() {
                    unknown.insert(t.start_station_id);
                }
                if d.is_none() {
                    unknown.insert(t.end_station_id);
                }
            }
        }
    }
    if !unknown.is_empty() {
        return Err(Error::UnknownStations(unknown.into_iter().collect()));
    }
    FlowNetwork::from_edges(stations.to_vec(), pairs)
}

/// Reads station metadata with columns `id,name,lat,lon`. Empty coordinates
/// are allowed.
pub fn read_stations<R: Read>(source: R) -> Result<Vec<Station>> {
    #[derive(Deserialize)]
    struct Row {
        id: i64,
        #[serde(default)]
        name: String,
        lat: Option<f64>,
        lon: Option<f64>,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = rdr.headers()?.clone();
    for col in ["id", "name", "lat", "lon"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::MissingColumn {
                context: "stations".into(),
                column: col.into(),
            });
        }
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize::<Row>() {
        let r = rec?;
        let coord = match (r.lat, r.lon) {
            (Some(lat), Some(lon)) => Some((lat, lon)),
            _ => None,
        };
        out.push(Station {
            id: r.id,
            name: r.name,
            coord,
        });
    }
    station_index(&out)?;
    Ok(out)
}

pub fn write_stations<W: Write>(out: W, stations: &[Station]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "name", "lat", "lon"])?;
    for s in stations {
        let (lat, lon) = match s.coord {
            Some((lat, lon)) => (lat.to_string(), lon.to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([s.id.to_string(), s.name.clone(), lat, lon])?;
    }
    w.flush().map_err(|e| Error::io("<stations>", e))?;
    Ok(())
}
