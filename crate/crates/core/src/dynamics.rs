//! Hour-of-day community detection and the station by hour assignment matrix.

use std::io::Write;

use rayon::prelude::*;

use crate::compare::compare_partitions;
use crate::error::{Error, Result};
use crate::flow::FlowOptions;
use crate::infomap::{infomap, OptimizerConfig};
use crate::ingest::{bucket_by_hour, TripRecord};
use crate::mapeq::{module_flows, Partition};
use crate::network::{build_network, FlowNetwork, Station};
use crate::output::fmt_sig;

pub const HOURS: usize = 24;

/// One hour's detection result over the full station universe.
#[derive(Debug, Clone, PartialEq)]
pub struct HourColumn {
    pub hour: u32,
    pub trips: usize,
    pub partition: Partition,
    pub codelength: f64,
    /// Visit mass per module id, in label order.
    pub module_visit: Vec<f64>,
}

impl HourColumn {
    pub fn module_count(&self) -> usize {
        self.module_visit.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HourlyAssignment {
    pub stations: Vec<Station>,
    pub columns: Vec<HourColumn>,
}

impl HourlyAssignment {
    pub fn column(&self, hour: usize) -> &Partition {
        &self.columns[hour].partition
    }

    pub fn module_counts(&self) -> Vec<usize> {
        self.columns.iter().map(HourColumn::module_count).collect()
    }

    pub fn trip_counts(&self) -> Vec<usize> {
        self.columns.iter().map(|c| c.trips).collect()
    }

    /// `station_id,h00,...,h23`; an empty cell marks no assignment.
    pub fn write_matrix_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["station_id".to_string()];
        header.extend((0..HOURS).map(|h| format!("h{h:02}")));
        w.write_record(&header)?;
        for (i, s) in self.stations.iter().enumerate() {
            let mut row = vec![s.id.to_string()];
            row.extend(
                self.columns
                    .iter()
                    .map(|c| c.partition.module_of(i).map(|m| m.to_string()).unwrap_or_default()),
            );
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::Serialize(e.to_string()))
    }

    /// `hour,trips,modules,codelength`.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["hour", "trips", "modules", "codelength"])?;
        for c in &self.columns {
            w.write_record([
                c.hour.to_string(),
                c.trips.to_string(),
                c.module_count().to_string(),
                fmt_sig(c.codelength),
            ])?;
        }
        w.flush().map_err(|e| Error::Serialize(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnSimilarity {
    pub nmi: f64,
    /// Stations assigned in both columns.
    pub overlap: usize,
    /// Set when fewer than two stations are co-assigned; `nmi` is then 0.
    pub insufficient_overlap: bool,
}

/// NMI between two hour columns over their co-assigned stations.
pub fn column_similarity(a: &Partition, b: &Partition) -> Result<ColumnSimilarity> {
    if a.len() != b.len() {
        return Err(Error::UniverseMismatch(a.len(), b.len()));
    }
    let overlap = a
        .assignment()
        .iter()
        .zip(b.assignment())
        .filter(|(x, y)| x.is_some() && y.is_some())
        .count();
    if overlap < 2 {
        return Ok(ColumnSimilarity {
            nmi: 0.0,
            overlap,
            insufficient_overlap: true,
        });
    }
    let s = compare_partitions(a, b)?;
    Ok(ColumnSimilarity {
        nmi: s.nmi,
        overlap,
        insufficient_overlap: false,
    })
}

/// Seed for one hour's detection.
pub fn hour_seed(seed: u64, hour: u32) -> u64 {
    seed ^ hour as u64
}

fn detect_hour(
    hour: u32,
    trips: &[&TripRecord],
    stations: &[Station],
    cfg: &OptimizerConfig,
    flow: &FlowOptions,
    min_flow: u64,
) -> Result<HourColumn> {
    let n = stations.len();
    let full = build_network(trips.iter().copied(), stations)?;
    let outs = full.out_strengths();
    let ins = full.in_strengths();
    let keep: Vec<usize> = (0..n).filter(|&i| outs[i] + ins[i] >= min_flow).collect();
    let mut local = vec![usize::MAX; n];
    for (k, &i) in keep.iter().enumerate() {
        local[i] = k;
    }
    let sub_edges = full.edges().iter().filter_map(|e| {
        let (s, t) = (local[e.source], local[e.target]);
        (s != usize::MAX && t != usize::MAX).then_some((s, t, e.weight))
    });
    let sub = FlowNetwork::from_edges(keep.iter().map(|&i| stations[i].clone()).collect(), sub_edges)?;

    let mut column = HourColumn {
        hour,
        trips: trips.len(),
        partition: Partition::unassigned(n),
        codelength: 0.0,
        module_visit: Vec::new(),
    };
    if sub.total_weight() == 0 {
        return Ok(column);
    }
    let state = flow.solve(&sub)?;
    let hour_cfg = OptimizerConfig {
        seed: hour_seed(cfg.seed, hour),
        ..*cfg
    };
    let result = infomap(&state, &sub, &hour_cfg)?;
    let mut assignment = vec![None; n];
    for (k, &i) in keep.iter().enumerate() {
        assignment[i] = result.partition.module_of(k);
    }
    let mf = module_flows(&state, &result.partition)?;
    column.partition = Partition::new(assignment);
    column.codelength = result.score;
    column.module_visit = mf.modules.iter().map(|m| m.visit).collect();
    Ok(column)
}

/// Runs detection independently for each hour of the day. Stations with
/// fewer than `min_flow` trip ends in an hour are left unassigned there.
pub fn hourly_communities(
    trips: &[TripRecord],
    stations: &[Station],
    cfg: &OptimizerConfig,
    flow: &FlowOptions,
    min_flow: u64,
) -> Result<HourlyAssignment> {
    cfg.validate()?;
    let buckets = bucket_by_hour(trips);
    let columns = buckets
        .as_slice()
        .par_iter()
        .enumerate()
        .map(|(h, bucket)| detect_hour(h as u32, bucket, stations, cfg, flow, min_flow))
        .collect::<Result<Vec<_>>>()?;
    Ok(HourlyAssignment {
        stations: stations.to_vec(),
        columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::TripScenario;

    fn cfg() -> OptimizerConfig {
        OptimizerConfig {
            seed: 3,
            trials: 4,
            ..Default::default()
        }
    }

    #[test]
    fn single_hour_corpus() {
        let mut s = TripScenario::uniform(2, 5, 0, 0.9);
        s.hours[8].trips = 200;
        let trips = s.generate(1);
        let h = hourly_communities(&trips, &s.stations(), &cfg(), &FlowOptions::default(), 1).unwrap();
        for (hour, c) in h.columns.iter().enumerate() {
            if hour == 8 {
                assert!(c.partition.assigned_count() > 0);
            } else {
                assert_eq!(c.partition.assigned_count(), 0);
                assert_eq!(c.trips, 0);
            }
        }
    }

    #[test]
    fn min_flow_drops_quiet_stations() {
        let stations = vec![Station::new(1, "a"), Station::new(2, "b"), Station::new(3, "c")];
        let t = |o, d| {
            let start = chrono::NaiveDate::from_ymd_opt(2014, 6, 2)
                .unwrap()
                .and_hms_opt(10, 0, 0)
                .unwrap();
            TripRecord {
                rental_id: o * 10 + d,
                duration: 60,
                bike_id: 1,
                start_time: start,
                end_time: start,
                start_station_id: o,
                end_station_id: d,
                start_station_name: String::new(),
                end_station_name: String::new(),
            }
        };
        let trips = vec![t(1, 2), t(2, 1), t(1, 2), t(2, 1), t(2, 3)];
        let h = hourly_communities(&trips, &stations, &cfg(), &FlowOptions::default(), 2).unwrap();
        let col = h.column(10);
        assert!(col.module_of(0).is_some());
        assert!(col.module_of(1).is_some());
        assert_eq!(col.module_of(2), None);
    }

    #[test]
    fn similarity_degenerate() {
        let a = Partition::from_labels(&[0, 0, 1]);
        let s = column_similarity(&a, &Partition::unassigned(3)).unwrap();
        assert!(s.insufficient_overlap);
        assert_eq!(s.nmi, 0.0);
        assert_eq!(column_similarity(&a, &a).unwrap().nmi, 1.0);
    }

    #[test]
    fn matrix_csv_shape() {
        let s = TripScenario::uniform(2, 3, 30, 1.0);
        let trips = s.generate(2);
        let h = hourly_communities(&trips, &s.stations(), &cfg(), &FlowOptions::default(), 1).unwrap();
        let mut buf = Vec::new();
        h.write_matrix_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.starts_with("station_id,h00,h01"));
        assert!(first.ends_with(",h23"));
        assert_eq!(text.lines().count(), 7);
    }
}
