use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::kinematics::{IkOptions, Joints, KinematicChain};
use super::pose::Pose7;
use crate::error::{Error, Result};

/// Table plane and the transit clearance above it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableGeom {
    pub table_z: f64,
    pub transit_threshold: f64,
}

impl Default for TableGeom {
    fn default() -> Self {
        TableGeom {
            table_z: 0.0,
            transit_threshold: 0.20,
        }
    }
}

impl TableGeom {
    pub fn new(table_z: f64, transit_threshold: f64) -> Result<Self> {
        if !(transit_threshold > 0.0) || !table_z.is_finite() {
            return Err(Error::Domain(format!(
                "table geometry needs finite table_z and a positive threshold, got {table_z}, {transit_threshold}"
            )));
        }
        Ok(TableGeom {
            table_z,
            transit_threshold,
        })
    }

    pub fn transit_z(&self) -> f64 {
        self.table_z + self.transit_threshold
    }
}

/// Object measurements at the grasp patch center.
///
/// `depth_gpc` is the vertical distance from the transit plane down to the
/// grasp point as measured by the camera; `height_gpc` is the object height
/// above the table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectGeom {
    pub depth_gpc: f64,
    pub height_gpc: f64,
}

impl ObjectGeom {
    pub fn safe_distance(&self) -> f64 {
        0.20 * self.height_gpc
    }

    /// Length of the vertical descent from the transit plane.
    pub fn descend_distance(&self, table: &TableGeom) -> f64 {
        (table.transit_threshold - (self.depth_gpc + self.safe_distance())).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GripperEvent {
    Open,
    Close,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub label: String,
    pub pose: Pose7,
    pub event: Option<GripperEvent>,
}

impl Waypoint {
    pub fn new(label: &str, pose: Pose7, event: Option<GripperEvent>) -> Self {
        Waypoint {
            label: label.into(),
            pose,
            event,
        }
    }
}

/// Home, transit above the target, vertical descent with a close event, and
/// the final pose on the table plane with an open event.
pub fn plan_trajectory(grasp: &Pose7, object: &ObjectGeom, table: &TableGeom, home: &Pose7) -> Result<Vec<Waypoint>> {
    let table = TableGeom::new(table.table_z, table.transit_threshold)?;
    if !(object.depth_gpc >= 0.0) || !(object.height_gpc >= 0.0) {
        return Err(Error::Domain(format!(
            "object depth and height must be non-negative, got {}, {}",
            object.depth_gpc, object.height_gpc
        )));
    }
    if grasp.z < table.table_z {
        return Err(Error::Safety(format!(
            "grasp z {:.4} m is below the table plane at {:.4} m",
            grasp.z, table.table_z
        )));
    }
    if home.z < table.transit_z() {
        return Err(Error::Safety(format!(
            "home z {:.4} m is below the transit plane at {:.4} m",
            home.z,
            table.transit_z()
        )));
    }
    let transit_z = table.transit_z();
    let grasp_z = transit_z - object.descend_distance(&table);
    if grasp_z < table.table_z {
        return Err(Error::Safety(format!(
            "descend target z {grasp_z:.4} m is below the table plane at {:.4} m",
            table.table_z
        )));
    }
    Ok(vec![
        Waypoint::new("home", *home, None),
        Waypoint::new("transit", grasp.with_position([grasp.x, grasp.y, transit_z]), None),
        Waypoint::new(
            "descend",
            grasp.with_position([grasp.x, grasp.y, grasp_z]),
            Some(GripperEvent::Close),
        ),
        Waypoint::new(
            "release",
            grasp.with_position([grasp.x, grasp.y, table.table_z]),
            Some(GripperEvent::Open),
        ),
    ])
}

pub const STEPS_PER_SEGMENT: usize = 50;
pub const FLAG_BELOW_TABLE: &str = "below_table";
pub const FLAG_TRANSIT_LOW: &str = "transit_below_threshold";
const FLAG_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub segment: usize,
    pub joints: Joints,
    pub pose7: [f64; 7],
    pub flags: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event: Option<GripperEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionLog {
    pub steps: Vec<StepRecord>,
    pub success: bool,
    pub aborted: Option<String>,
}

impl ExecutionLog {
    pub fn flag_count(&self) -> usize {
        self.steps.iter().map(|s| s.flags.len()).sum()
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.steps.iter().any(|s| s.flags.iter().any(|f| f == flag))
    }

    /// One JSON object per step.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        for s in &self.steps {
            serde_json::to_writer(&mut buf, s)?;
            buf.push(b'\n');
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }
}

/// Seed configuration with the elbow bent and the tool pointing down.
pub const NEUTRAL_JOINTS: Joints = [0.0, 0.5, 0.0, -1.4, 0.0, 1.2, 0.0];

/// Walks the plan in Cartesian space, `STEPS_PER_SEGMENT` poses per segment,
/// solving inverse kinematics at each pose from the previous solution.
pub fn simulate_execution(chain: &KinematicChain, waypoints: &[Waypoint], table: &TableGeom) -> ExecutionLog {
    let opts = IkOptions {
        position_tolerance: 1e-6,
        orientation_tolerance: 1e-5,
        ..IkOptions::default()
    };
    let descend_segment = waypoints.iter().position(|w| w.label == "descend");
    let mut log = ExecutionLog {
        steps: Vec::new(),
        success: false,
        aborted: None,
    };
    let Some(first) = waypoints.first() else {
        log.aborted = Some("empty plan".into());
        return log;
    };
    let mut q = match chain.ik(&first.pose, &NEUTRAL_JOINTS, &opts) {
        Ok(q) => q,
        Err(e) => {
            log.aborted = Some(format!("waypoint 0 ({}): {e}", first.label));
            return log;
        }
    };
    let mut t = 0;
    let record = |log: &mut ExecutionLog, q: Joints, segment: usize, event: Option<GripperEvent>, t: &mut usize| {
        let pose = chain.fk(&q).expect("ik output stays within limits");
        let mut flags = Vec::new();
        if pose.z < table.table_z - FLAG_TOLERANCE {
            flags.push(FLAG_BELOW_TABLE.to_string());
        }
        let before_descent = descend_segment.is_none_or(|d| segment < d);
        if before_descent && pose.z < table.transit_z() - FLAG_TOLERANCE {
            flags.push(FLAG_TRANSIT_LOW.to_string());
        }
        log.steps.push(StepRecord {
            t: *t,
            segment,
            joints: q,
            pose7: pose.to_vec7(),
            flags,
            event,
        });
        *t += 1;
    };
    record(&mut log, q, 0, first.event, &mut t);
    for (seg, pair) in waypoints.windows(2).enumerate() {
        let (a, b) = (&pair[0].pose, &pair[1].pose);
        let (pa, pb) = (Vector3::from(a.position()), Vector3::from(b.position()));
        let (ra, rb) = (a.rotation(), b.rotation());
        for k in 1..=STEPS_PER_SEGMENT {
            let s = k as f64 / STEPS_PER_SEGMENT as f64;
            let p = pa.lerp(&pb, s);
            let r = ra.slerp(&rb, s);
            let target = Pose7::from_isometry(&nalgebra::Isometry3::from_parts(p.into(), r));
            match chain.ik(&target, &q, &opts) {
                Ok(next) => q = next,
                Err(e) => {
                    log.aborted = Some(format!("segment {} step {k} ({}): {e}", seg + 1, pair[1].label));
                    return log;
                }
            }
            let event = if k == STEPS_PER_SEGMENT { pair[1].event } else { None };
            record(&mut log, q, seg + 1, event, &mut t);
        }
    }
    log.success = log.flag_count() == 0;
    log
}
