//! Community interaction accounting and the centroid community network.
//!
//! All counts are raw trip counts from the network's edge weights. Trips that
//! touch an unassigned station are booked against a separate residual row so
//! the table still reconciles with the network total.

use std::io::Write;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::mapeq::Partition;
use crate::network::FlowNetwork;
use crate::output::fmt_sig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ModuleInteraction {
    pub stations: u64,
    /// Trips starting and ending in the module, self-loops included.
    pub within: u64,
    pub out: u64,
    pub r#in: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionTable {
    /// Indexed by compacted module id `0..m`.
    pub modules: Vec<ModuleInteraction>,
    /// Unassigned stations, if any.
    pub residual: Option<ModuleInteraction>,
    /// `(m + 1) x (m + 1)` origin-module by destination-module trip counts;
    /// the last row and column belong to the residual.
    pub matrix: Vec<Vec<u64>>,
    pub total_trips: u64,
}

impl InteractionTable {
    pub fn module_count(&self) -> usize {
        self.modules.len()
    }

    /// Checks the accounting identities exactly.
    pub fn reconcile(&self) -> Result<()> {
        let rows = self.modules.iter().chain(self.residual.iter());
        let (mut within, mut out, mut inn) = (0u64, 0u64, 0u64);
        for r in rows {
            within += r.within;
            out += r.out;
            inn += r.r#in;
        }
        if within + out != self.total_trips {
            return Err(Error::Reconciliation(format!(
                "within {within} + out {out} != total {}",
                self.total_trips
            )));
        }
        if out != inn {
            return Err(Error::Reconciliation(format!("out {out} != in {inn}")));
        }
        let m = self.modules.len();
        for i in 0..m {
            let row: u64 = self.matrix[i].iter().sum();
            if self.matrix[i][i] != self.modules[i].within || row - self.matrix[i][i] != self.modules[i].out {
                return Err(Error::Reconciliation(format!("matrix row {i} disagrees with table")));
            }
        }
        Ok(())
    }

    /// Table-1 layout: `Cluster,Stations,within,out,in`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["Cluster", "Stations", "within", "out", "in"])?;
        let row = |label: String, r: &ModuleInteraction| {
            [label, r.stations.to_string(), r.within.to_string(), r.out.to_string(), r.r#in.to_string()]
        };
        for (i, r) in self.modules.iter().enumerate() {
            w.write_record(row(i.to_string(), r))?;
        }
        if let Some(r) = &self.residual {
            w.write_record(row("unassigned".into(), r))?;
        }
        w.flush().map_err(|e| Error::io("<interaction table>", e))?;
        Ok(())
    }

    /// Module-to-module trip matrix with a header row of destination labels.
    pub fn write_matrix_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let m = self.modules.len();
        let label = |i: usize| if i < m { i.to_string() } else { "unassigned".into() };
        let size = if self.residual.is_some() { m + 1 } else { m };
        let mut header = vec!["origin".to_string()];
        header.extend((0..size).map(label));
        w.write_record(&header)?;
        for i in 0..size {
            let mut rec = vec![label(i)];
            rec.extend(self.matrix[i][..size].iter().map(|c| c.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<interaction matrix>", e))?;
        Ok(())
    }
}

/// Within/out/in trip counts per module. Module ids are compacted to `0..m`,
/// preserving their order.
pub fn interaction_table(net: &FlowNetwork, part: &Partition) -> Result<InteractionTable> {
    if part.len() != net.node_count() {
        return Err(Error::UniverseMismatch(net.node_count(), part.len()));
    }
    let part = part.compacted();
    let m = part.module_count();
    let slot = |node: usize| part.module_of(node).map_or(m, |x| x as usize);
    let mut matrix = vec![vec![0u64; m + 1]; m + 1];
    let mut stations = vec![0u64; m + 1];
    for node in 0..net.node_count() {
        stations[slot(node)] += 1;
    }
    for e in net.edges() {
        matrix[slot(e.source)][slot(e.target)] += e.weight;
    }
    let summarize = |i: usize| {
        let within = matrix[i][i];
        let out = matrix[i].iter().sum::<u64>() - within;
        let inn = matrix.iter().map(|row| row[i]).sum::<u64>() - within;
        ModuleInteraction {
            stations: stations[i],
            within,
            out,
            r#in: inn,
        }
    };
    let modules = (0..m).map(summarize).collect();
    let residual = (stations[m] > 0).then(|| summarize(m));
    let table = InteractionTable {
        modules,
        residual,
        matrix,
        total_trips: net.total_weight(),
    };
    table.reconcile()?;
    Ok(table)
}

/// Share of trips that start and end in the same module. Residual trips
/// count toward the total but never as contained.
pub fn self_containment(table: &InteractionTable) -> Result<f64> {
    if table.total_trips == 0 {
        return Err(Error::EmptyNetwork);
    }
    let within: u64 = table.modules.iter().map(|r| r.within).sum();
    Ok(within as f64 / table.total_trips as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommunityNode {
    pub module: u32,
    /// Unweighted mean (lat, lon) of located members; `None` if no member
    /// has coordinates.
    pub centroid: Option<(f64, f64)>,
    pub stations: u64,
    pub within: u64,
    pub out: u64,
    pub r#in: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommunityEdge {
    pub source: u32,
    pub target: u32,
    pub trips: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommunityGraph {
    pub nodes: Vec<CommunityNode>,
    pub edges: Vec<CommunityEdge>,
}

impl CommunityGraph {
    /// Modules without a located member.
    pub fn missing_centroids(&self) -> Vec<u32> {
        self.nodes.iter().filter(|n| n.centroid.is_none()).map(|n| n.module).collect()
    }

    /// GeoJSON FeatureCollection: a Point per located module and a LineString
    /// per inter-module edge whose endpoints are both located.
    pub fn to_geojson(&self) -> Value {
        let mut features = Vec::new();
        for n in &self.nodes {
            let Some((lat, lon)) = n.centroid else { continue };
            features.push(json!({
                "type": "Feature",
                "geometry": { "type": "Point", "coordinates": [lon, lat] },
                "properties": {
                    "kind": "community",
                    "module": n.module,
                    "stations": n.stations,
                    "within": n.within,
                    "out": n.out,
                    "in": n.r#in,
                }
            }));
        }
        let centroid = |m: u32| self.nodes.get(m as usize).and_then(|n| n.centroid);
        for e in &self.edges {
            let (Some((lat_a, lon_a)), Some((lat_b, lon_b))) = (centroid(e.source), centroid(e.target)) else {
                continue;
            };
            features.push(json!({
                "type": "Feature",
                "geometry": { "type": "LineString", "coordinates": [[lon_a, lat_a], [lon_b, lat_b]] },
                "properties": {
                    "kind": "flow",
                    "source": e.source,
                    "target": e.target,
                    "trips": e.trips,
                }
            }));
        }
        json!({ "type": "FeatureCollection", "features": features })
    }

    pub fn write_geojson<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, &self.to_geojson())
            .map_err(|e| Error::Serialize(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| Error::io("<geojson>", e))?;
        Ok(())
    }

    pub fn write_nodes_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["module", "lat", "lon", "stations", "within", "out", "in"])?;
        for n in &self.nodes {
            let (lat, lon) = n
                .centroid
                .map_or((String::new(), String::new()), |(a, b)| (fmt_sig(a), fmt_sig(b)));
            w.write_record([
                n.module.to_string(),
                lat,
                lon,
                n.stations.to_string(),
                n.within.to_string(),
                n.out.to_string(),
                n.r#in.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<community nodes>", e))?;
        Ok(())
    }

    pub fn write_edges_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["source_module", "target_module", "trips"])?;
        for e in &self.edges {
            w.write_record([e.source.to_string(), e.target.to_string(), e.trips.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<community edges>", e))?;
        Ok(())
    }
}

/// Collapses each module to its coordinate centroid, with inter-module edges
/// weighted by trip counts. Coordinates come from the network's stations.
pub fn community_graph(net: &FlowNetwork, part: &Partition) -> Result<CommunityGraph> {
    let table = interaction_table(net, part)?;
    let part = part.compacted();
    let m = table.module_count();
    let mut sums = vec![(0.0f64, 0.0f64, 0usize); m];
    for (node, station) in net.nodes().iter().enumerate() {
        if let (Some(k), Some((lat, lon))) = (part.module_of(node), station.coord) {
            let s = &mut sums[k as usize];
            s.0 += lat;
            s.1 += lon;
            s.2 += 1;
        }
    }
    let nodes = (0..m)
        .map(|i| {
            let (lat, lon, count) = sums[i];
            let r = table.modules[i];
            CommunityNode {
                module: i as u32,
                centroid: (count > 0).then(|| (lat / count as f64, lon / count as f64)),
                stations: r.stations,
                within: r.within,
                out: r.out,
                r#in: r.r#in,
            }
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..m {
        for j in 0..m {
            if i != j && table.matrix[i][j] > 0 {
                edges.push(CommunityEdge {
                    source: i as u32,
                    target: j as u32,
                    trips: table.matrix[i][j],
                });
            }
        }
    }
    Ok(CommunityGraph { nodes, edges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Station;

    #[test]
    fn within_and_cross_counts() {
        // 3 trips A->B (same module), 2 trips A->C (other module).
        let net = FlowNetwork::from_index_edges(3, [(0, 1, 3), (0, 2, 2)]).unwrap();
        let t = interaction_table(&net, &Partition::from_labels(&[0, 0, 1])).unwrap();
        assert_eq!(t.modules[0], ModuleInteraction { stations: 2, within: 3, out: 2, r#in: 0 });
        assert_eq!(t.modules[1], ModuleInteraction { stations: 1, within: 0, out: 0, r#in: 2 });
        assert!(t.residual.is_none());
    }

    #[test]
    fn single_module_bounds() {
        let net = FlowNetwork::from_index_edges(3, [(0, 1, 3), (1, 2, 2), (2, 2, 1)]).unwrap();
        let t = interaction_table(&net, &Partition::single_module(3)).unwrap();
        assert_eq!(t.modules[0].within, 6);
        assert_eq!((t.modules[0].out, t.modules[0].r#in), (0, 0));
        assert_eq!(self_containment(&t).unwrap(), 1.0);
        let s = interaction_table(&net, &Partition::from_labels(&[0, 1, 2])).unwrap();
        // the self-loop at node 2 stays contained
        assert!((self_containment(&s).unwrap() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn residual_row_reconciles() {
        let net = FlowNetwork::from_index_edges(3, [(0, 1, 3), (1, 2, 2), (2, 0, 4)]).unwrap();
        let t = interaction_table(&net, &Partition::new(vec![Some(0), Some(0), None])).unwrap();
        let r = t.residual.unwrap();
        assert_eq!((r.stations, r.within, r.out, r.r#in), (1, 0, 4, 2));
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "Cluster,Stations,within,out,in\n0,2,3,2,4\nunassigned,1,0,4,2\n"
        );
    }

    #[test]
    fn empty_table_has_no_containment() {
        let net = FlowNetwork::from_index_edges(2, []).unwrap();
        let t = interaction_table(&net, &Partition::singletons(2)).unwrap();
        assert!(self_containment(&t).is_err());
    }

    #[test]
    fn centroids_and_edges() {
        let stations = vec![
            Station::new(1, "a").with_coord(51.0, -0.2),
            Station::new(2, "b").with_coord(51.2, -0.1),
            Station::new(3, "c").with_coord(52.0, 0.0),
            Station::new(4, "d"),
        ];
        let net = FlowNetwork::from_edges(stations, [(0, 1, 5), (1, 2, 2), (3, 3, 1)]).unwrap();
        let g = community_graph(&net, &Partition::from_labels(&[0, 0, 1, 2])).unwrap();
        let (lat, lon) = g.nodes[0].centroid.unwrap();
        assert!((lat - 51.1).abs() < 1e-12 && (lon + 0.15).abs() < 1e-12);
        assert_eq!(g.missing_centroids(), vec![2]);
        assert_eq!(g.edges, vec![CommunityEdge { source: 0, target: 1, trips: 2 }]);
        let gj = g.to_geojson();
        let features = gj["features"].as_array().unwrap();
        assert_eq!(features.iter().filter(|f| f["geometry"]["type"] == "Point").count(), 2);
        assert_eq!(features.iter().filter(|f| f["geometry"]["type"] == "LineString").count(), 1);
    }
}
