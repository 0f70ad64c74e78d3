//! Raw RSS scans and their scan-averaged form.
//!
//! CSV layout: `rp_id,x,y,z,ap_id,rss_dbm,scan_index`, with `ND` in the
//! `rss_dbm` column for a scan in which the AP was not detected.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floorplan::Point3;
use crate::propagation::AccessPoint;

pub const NOT_DETECTED: &str = "ND";
pub const MIN_RSS_DBM: f64 = -120.0;
pub const MAX_RSS_DBM: f64 = 0.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub rp_id: String,
    pub location: Point3,
    pub ap_id: String,
    /// `None` when the AP was not detected in this scan.
    pub rss: Option<f64>,
    pub scan_index: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasurementSet {
    pub records: Vec<MeasurementRecord>,
}

/// Scan-averaged RSS at one surveyed location.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedSite {
    pub id: String,
    pub location: Point3,
    /// AP id to mean detected RSS; `None` if every scan missed the AP.
    pub rss: BTreeMap<String, Option<f64>>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    rp_id: String,
    x: f64,
    y: f64,
    z: f64,
    ap_id: String,
    rss_dbm: String,
    scan_index: u32,
}

impl MeasurementSet {
    pub fn new(records: Vec<MeasurementRecord>) -> Self {
        MeasurementSet { records }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Largest number of scans recorded for any (location, AP) pair.
    pub fn q(&self) -> usize {
        let mut per_pair: HashMap<(&str, &str), usize> = HashMap::new();
        for r in &self.records {
            *per_pair.entry((&r.rp_id, &r.ap_id)).or_default() += 1;
        }
        per_pair.into_values().max().unwrap_or(0)
    }

    /// Every `ap_id` must name one of `aps`.
    pub fn check_aps(&self, aps: &[AccessPoint]) -> Result<()> {
        for r in &self.records {
            if !aps.iter().any(|a| a.id == r.ap_id) {
                return Err(Error::UnknownAp(r.ap_id.clone()));
            }
        }
        Ok(())
    }

    /// Averages detected scans per (location, AP). Sites keep the order in
    /// which their ids first appear.
    pub fn averaged(&self) -> Vec<AveragedSite> {
        let mut order: Vec<&str> = Vec::new();
        let mut sites: HashMap<&str, (Point3, BTreeMap<&str, (f64, usize)>)> = HashMap::new();
        for r in &self.records {
            let site = sites.entry(&r.rp_id).or_insert_with(|| {
                order.push(&r.rp_id);
                (r.location, BTreeMap::new())
            });
            let acc = site.1.entry(&r.ap_id).or_insert((0.0, 0));
            if let Some(v) = r.rss {
                acc.0 += v;
                acc.1 += 1;
            }
        }
        order
            .into_iter()
            .map(|id| {
                let (location, per_ap) = &sites[id];
                AveragedSite {
                    id: id.to_string(),
                    location: *location,
                    rss: per_ap
                        .iter()
                        .map(|(ap, &(sum, n))| (ap.to_string(), (n > 0).then(|| sum / n as f64)))
                        .collect(),
                }
            })
            .collect()
    }

    pub fn read_csv<R: Read>(reader: R, origin: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut records = Vec::new();
        for (line, row) in rdr.deserialize::<CsvRow>().enumerate() {
            let row = row.map_err(|e| Error::parse(origin, e))?;
            let rss = if row.rss_dbm.eq_ignore_ascii_case(NOT_DETECTED) {
                None
            } else {
                let v: f64 = row
                    .rss_dbm
                    .parse()
                    .map_err(|_| Error::parse(origin, format!("row {}: bad rss_dbm {:?}", line + 1, row.rss_dbm)))?;
                if !(MIN_RSS_DBM..=MAX_RSS_DBM).contains(&v) {
                    return Err(Error::parse(
                        origin,
                        format!("row {}: rss {v} dBm outside [{MIN_RSS_DBM}, {MAX_RSS_DBM}]", line + 1),
                    ));
                }
                Some(v)
            };
            let location = Point3::new(row.x, row.y, row.z);
            if !location.is_finite() {
                return Err(Error::parse(origin, format!("row {}: non-finite coordinates", line + 1)));
            }
            records.push(MeasurementRecord {
                rp_id: row.rp_id,
                location,
                ap_id: row.ap_id,
                rss,
                scan_index: row.scan_index,
            });
        }
        Ok(MeasurementSet { records })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        if self.records.is_empty() {
            w.write_record(["rp_id", "x", "y", "z", "ap_id", "rss_dbm", "scan_index"])?;
        }
        for r in &self.records {
            w.serialize(CsvRow {
                rp_id: r.rp_id.clone(),
                x: r.location.x,
                y: r.location.y,
                z: r.location.z,
                ap_id: r.ap_id.clone(),
                rss_dbm: r.rss.map_or_else(|| NOT_DETECTED.to_string(), |v| v.to_string()),
                scan_index: r.scan_index,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        MeasurementSet::read_csv(file, path)
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing CSV to memory cannot fail");
        buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(rp: &str, ap: &str, rss: Option<f64>, scan: u32) -> MeasurementRecord {
        MeasurementRecord {
            rp_id: rp.into(),
            location: Point3::new(1.0, 2.0, 0.0),
            ap_id: ap.into(),
            rss,
            scan_index: scan,
        }
    }

    #[test]
    fn averaging_ignores_missed_scans() {
        let m = MeasurementSet::new(vec![
            rec("rp1", "a", Some(-50.0), 0),
            rec("rp1", "a", Some(-52.0), 1),
            rec("rp1", "b", None, 0),
            rec("rp1", "b", None, 1),
            rec("rp1", "c", Some(-90.0), 0),
            rec("rp1", "c", None, 1),
        ]);
        let avg = m.averaged();
        assert_eq!(avg.len(), 1);
        assert_eq!(avg[0].rss["a"], Some(-51.0));
        assert_eq!(avg[0].rss["b"], None);
        assert_eq!(avg[0].rss["c"], Some(-90.0));
        assert_eq!(m.q(), 2);
    }

    #[test]
    fn csv_round_trip_with_nd() {
        let m = MeasurementSet::new(vec![rec("rp1", "a", Some(-61.25), 0), rec("rp1", "b", None, 0)]);
        let bytes = m.to_csv_bytes();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("rp_id,x,y,z,ap_id,rss_dbm,scan_index\n"));
        assert!(text.contains(",ND,"));
        let back = MeasurementSet::read_csv(&bytes[..], Path::new("mem")).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn csv_rejects_out_of_range_rss() {
        let text = "rp_id,x,y,z,ap_id,rss_dbm,scan_index\nr,0,0,0,a,-130,0\n";
        assert!(MeasurementSet::read_csv(text.as_bytes(), Path::new("mem")).is_err());
        let text = "rp_id,x,y,z,ap_id,rss_dbm,scan_index\nr,0,0,0,a,abc,0\n";
        assert!(MeasurementSet::read_csv(text.as_bytes(), Path::new("mem")).is_err());
    }

    #[test]
    fn unknown_ap_detected() {
        let m = MeasurementSet::new(vec![rec("rp1", "zz", Some(-50.0), 0)]);
        let aps = vec![AccessPoint::new("a", Point3::default(), 20.0)];
        assert!(matches!(m.check_aps(&aps), Err(Error::UnknownAp(_))));
    }
}
