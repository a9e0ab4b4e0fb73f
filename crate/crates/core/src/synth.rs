//! Seeded synthetic networks and trip corpora with planted communities.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::ingest::TripRecord;
use crate::mapeq::Partition;
use crate::network::{FlowNetwork, Station};

/// Directed planted-partition network: every ordered pair of distinct nodes
/// gets a Poisson weight with mean `mean_within` inside a group and
/// `mean_cross` across groups. Returns the network and the planted groups.
pub fn planted_partition(
    groups: usize,
    group_size: usize,
    mean_within: f64,
    mean_cross: f64,
    seed: u64,
) -> Result<(FlowNetwork, Partition)> {
    let within = Poisson::new(mean_within)
        .map_err(|e| Error::InvalidArgument(format!("mean_within: {e}")))?;
    let cross =
        Poisson::new(mean_cross).map_err(|e| Error::InvalidArgument(format!("mean_cross: {e}")))?;
    let n = groups * group_size;
    let group = |v: usize| v / group_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let w = if group(a) == group(b) {
                within.sample(&mut rng)
            } else {
                cross.sample(&mut rng)
            } as u64;
            if w > 0 {
                edges.push((a, b, w));
            }
        }
    }
    let truth = Partition::new((0..n).map(|v| Some(group(v) as u32)).collect());
    Ok((FlowNetwork::from_index_edges(n, edges)?, truth))
}

/// Trip volume and structure for one hour of the day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourProfile {
    pub trips: usize,
    /// Probability that a trip stays inside its origin's group; the rest go
    /// to a uniformly random other station.
    pub within_share: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripScenario {
    pub groups: usize,
    pub group_size: usize,
    pub hours: [HourProfile; 24],
    /// Number of consecutive weekdays the trips are spread over.
    pub days: u32,
}

impl TripScenario {
    /// The same planted structure at every hour.
    pub fn uniform(groups: usize, group_size: usize, trips_per_hour: usize, within_share: f64) -> Self {
        TripScenario {
            groups,
            group_size,
            hours: [HourProfile {
                trips: trips_per_hour,
                within_share,
            }; 24],
            days: 5,
        }
    }

    /// A commuter day: quiet nights, a 7-9am peak where trips mix across
    /// the whole city, and clear planted groups from late morning on.
    pub fn peak_merge(groups: usize, group_size: usize) -> Self {
        let mut hours = [HourProfile {
            trips: 0,
            within_share: 0.9,
        }; 24];
        for (h, p) in hours.iter_mut().enumerate() {
            *p = match h {
                0..=5 => HourProfile { trips: 8, within_share: 0.5 },
                6 => HourProfile { trips: 400, within_share: 0.5 },
                7..=9 => HourProfile { trips: 3000, within_share: 0.0 },
                10..=16 => HourProfile { trips: 1500, within_share: 0.92 },
                17..=19 => HourProfile { trips: 2000, within_share: 0.7 },
                _ => HourProfile { trips: 300, within_share: 0.8 },
            };
        }
        TripScenario {
            groups,
            group_size,
            hours,
            days: 5,
        }
    }

    pub fn station_count(&self) -> usize {
        self.groups * self.group_size
    }

    pub fn truth(&self) -> Partition {
        Partition::new(
            (0..self.station_count())
                .map(|v| Some((v / self.group_size) as u32))
                .collect(),
        )
    }

    /// Stations with ids `1001..`, grouped around points on a ring.
    pub fn stations(&self) -> Vec<Station> {
        let (lat0, lon0) = (51.507, -0.128);
        (0..self.station_count())
            .map(|v| {
                let g = v / self.group_size;
                let k = v % self.group_size;
                let angle = g as f64 / self.groups.max(1) as f64 * std::f64::consts::TAU;
                let jitter = (k as f64 * 0.618_033_988_75).fract() * 0.01;
                let lat = lat0 + 0.05 * angle.sin() + jitter;
                let lon = lon0 + 0.08 * angle.cos() - jitter;
                Station::new(1001 + v as i64, format!("Station {g}-{k}")).with_coord(lat, lon)
            })
            .collect()
    }

    /// Generates the trip corpus. Rental ids are sequential from 1.
    pub fn generate(&self, seed: u64) -> Vec<TripRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stations = self.stations();
        let n = stations.len();
        let start_day = NaiveDate::from_ymd_opt(2014, 6, 2).expect("valid date"); // a Monday
        let days = self.days.clamp(1, 5);
        let mut trips = Vec::new();
        let mut rental_id = 1;
        for (hour, profile) in self.hours.iter().enumerate() {
            for _ in 0..profile.trips {
                let origin = rng.random_range(0..n);
                let g = origin / self.group_size;
                let dest = if rng.random_bool(profile.within_share.clamp(0.0, 1.0)) {
                    loop {
                        let d = g * self.group_size + rng.random_range(0..self.group_size);
                        if d != origin || self.group_size == 1 {
                            break d;
                        }
                    }
                } else {
                    loop {
                        let d = rng.random_range(0..n);
                        if d != origin || n == 1 {
                            break d;
                        }
                    }
                };
                let day = start_day + Duration::days(rng.random_range(0..days) as i64);
                let start: NaiveDateTime = day
                    .and_hms_opt(hour as u32, rng.random_range(0..60), 0)
                    .expect("valid time");
                let duration = rng.random_range(3..40) * 60;
                trips.push(TripRecord {
                    rental_id,
                    duration,
                    bike_id: rng.random_range(1..20_000),
                    start_time: start,
                    end_time: start + Duration::seconds(duration),
                    start_station_id: stations[origin].id,
                    end_station_id: stations[dest].id,
                    start_station_name: stations[origin].name.clone(),
                    end_station_name: stations[dest].name.clone(),
                });
                rental_id += 1;
            }
        }
        trips
    }
}
