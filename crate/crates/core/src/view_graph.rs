//! Graph of captured desired views.
//!
//! Each capture becomes a vertex linked to the vertex that was current at
//! capture time, so the graph is a tree rooted at the first capture. Edges
//! cost 1; navigation follows the minimal-hop path and breaks ties towards
//! the smallest next-vertex id.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashSet};

use nalgebra::{Matrix3, Rotation3, Translation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::homography_task::{CameraIntrinsics, Homography};
use crate::kinematics::Pose;
use crate::vision::{
    estimate_homography_ransac_matches, match_views, mean_pairwise_distance, Corruption, FeatureObservation, MatchSet,
    RansacParams, RansacResult, VisionError,
};

pub const GRAPH_FORMAT_VERSION: u32 = 1;
const MIN_FEATURES: usize = 4;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("snapshot has {got} features; at least {MIN_FEATURES} are required")]
    InsufficientFeatures { got: usize },
    #[error("unknown vertex {0}")]
    UnknownVertex(usize),
    #[error("no path from vertex {from} to vertex {to}")]
    NoPath { from: usize, to: usize },
    #[error(transparent)]
    Vision(#[from] VisionError),
    #[error("graph file: {0}")]
    Format(String),
    #[error("graph file syntax: {0}")]
    Syntax(#[from] serde_json::Error),
}

/// Capture-time metadata. The pose is ground truth kept for evaluation and
/// never enters the control path.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureMeta {
    pub time_s: f64,
    pub eval_camera_pose: Option<Pose>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewVertex {
    pub id: usize,
    pub features: Vec<FeatureObservation>,
    /// Working-image intrinsics at capture.
    pub intrinsics: CameraIntrinsics,
    pub capture: CaptureMeta,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ViewGraph {
    vertices: Vec<ViewVertex>,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<BTreeSet<usize>>,
    current: Option<usize>,
}

impl ViewGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[ViewVertex] {
        &self.vertices
    }

    pub fn vertex(&self, id: usize) -> Result<&ViewVertex, GraphError> {
        self.vertices.get(id).ok_or(GraphError::UnknownVertex(id))
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn current(&self) -> Option<usize> {
        self.current
    }

    pub fn set_current(&mut self, id: usize) -> Result<(), GraphError> {
        self.vertex(id)?;
        self.current = Some(id);
        Ok(())
    }

    pub fn neighbors(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency.get(id).into_iter().flat_map(|s| s.iter().copied())
    }

    /// Adds a vertex, links it to the current vertex and makes it current.
    pub fn capture_view(
        &mut self,
        snapshot: Vec<FeatureObservation>,
        intrinsics: CameraIntrinsics,
        capture: CaptureMeta,
    ) -> Result<usize, GraphError> {
        let snapshot: Vec<_> = snapshot.into_iter().filter(|o| o.inside_fov).collect();
        if snapshot.len() < MIN_FEATURES {
            return Err(GraphError::InsufficientFeatures { got: snapshot.len() });
        }
        let id = self.vertices.len();
        self.vertices.push(ViewVertex { id, features: snapshot, intrinsics, capture });
        self.adjacency.push(BTreeSet::new());
        if let Some(parent) = self.current {
            self.add_edge(parent, id);
        }
        self.current = Some(id);
        Ok(id)
    }

    fn add_edge(&mut self, a: usize, b: usize) {
        self.edges.push((a.min(b), a.max(b)));
        self.adjacency[a].insert(b);
        self.adjacency[b].insert(a);
    }

    /// Hop distances to `to` from every vertex (`usize::MAX` when unreachable).
    fn distances_to(&self, to: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.vertices.len()];
        let mut heap = BinaryHeap::new();
        dist[to] = 0;
        heap.push(Reverse((0usize, to)));
        while let Some(Reverse((d, v))) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for w in self.neighbors(v) {
                let nd = d + 1;
                if nd < dist[w] {
                    dist[w] = nd;
                    heap.push(Reverse((nd, w)));
                }
            }
        }
        dist
    }

    /// Minimal-hop path from `from` to `to`, endpoints included.
    pub fn shortest_path(&self, from: usize, to: usize) -> Result<Vec<usize>, GraphError> {
        self.vertex(from)?;
        self.vertex(to)?;
        let dist = self.distances_to(to);
        if dist[from] == usize::MAX {
            return Err(GraphError::NoPath { from, to });
        }
        let mut path = vec![from];
        let mut v = from;
        while v != to {
            // adjacency is ordered, so the first qualifying neighbor has the smallest id
            v = self.neighbors(v).find(|w| dist[*w] + 1 == dist[v]).expect("distance field is consistent");
            path.push(v);
        }
        Ok(path)
    }

    pub fn is_connected(&self) -> bool {
        if self.vertices.is_empty() {
            return true;
        }
        self.distances_to(0).iter().all(|d| *d != usize::MAX)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&GraphFile::from(self)).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let file: GraphFile = serde_json::from_str(text)?;
        file.into_graph()
    }
}

/// Result of registering the current view against a graph vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    /// Maps vertex pixels to current-view pixels.
    pub homography: Homography,
    pub ransac: RansacResult,
    pub matches: MatchSet,
    /// Mean pixel distance between current and vertex features over RANSAC inliers.
    pub mpd_px: f64,
}

impl Registration {
    pub fn inlier_count(&self) -> usize {
        self.ransac.inlier_count()
    }
}

/// Matches the current snapshot against `vertex` and estimates `G`.
pub fn target_homography(
    current: &[FeatureObservation],
    vertex: &ViewVertex,
    corruption: &Corruption,
    frame_size: [f64; 2],
    ransac: &RansacParams,
    seed: u64,
) -> Result<Registration, GraphError> {
    let matches = match_views(current, &vertex.features, corruption, frame_size, seed)?;
    let result = estimate_homography_ransac_matches(&matches, ransac, seed.wrapping_add(0x5eed))?;
    let (cur, tgt): (Vec<_>, Vec<_>) = matches
        .matches
        .iter()
        .zip(&result.inliers)
        .filter(|(_, inl)| **inl)
        .map(|(m, _)| (m.current, m.target))
        .unzip();
    let mpd_px = mean_pairwise_distance(&cur, &tgt, None)?;
    Ok(Registration { homography: result.homography, ransac: result, matches, mpd_px })
}

// ---------------------------------------------------------------------------
// File format

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    /// Row-major rotation matrix.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl From<&Pose> for PoseRecord {
    fn from(p: &Pose) -> Self {
        let m = p.rotation.matrix();
        let t = p.translation.vector;
        Self {
            rotation: [[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]], [m[(2, 0)], m[(2, 1)], m[(2, 2)]]],
            translation: [t.x, t.y, t.z],
        }
    }
}

impl PoseRecord {
    pub fn to_pose(&self) -> Result<Pose, GraphError> {
        let r = &self.rotation;
        let m = Matrix3::new(r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2]);
        if !m.iter().chain(self.translation.iter()).all(|v| v.is_finite()) {
            return Err(GraphError::Format("non-finite pose".into()));
        }
        if (m.transpose() * m - Matrix3::identity()).abs().max() > 1e-6 || (m.determinant() - 1.0).abs() > 1e-6 {
            return Err(GraphError::Format("pose rotation is not orthonormal".into()));
        }
        Ok(Pose::from_parts(Translation3::from(Vector3::from(self.translation)), Rotation3::from_matrix_unchecked(m)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureRecord {
    pub id: u32,
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexRecord {
    pub id: usize,
    pub intrinsics: CameraIntrinsics,
    pub time_s: f64,
    /// Evaluation-only ground truth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_camera_pose: Option<PoseRecord>,
    pub features: Vec<FeatureRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub version: u32,
    pub current: Option<usize>,
    pub vertices: Vec<VertexRecord>,
    pub edges: Vec<[usize; 2]>,
}

impl From<&ViewGraph> for GraphFile {
    fn from(g: &ViewGraph) -> Self {
        Self {
            version: GRAPH_FORMAT_VERSION,
            current: g.current,
            vertices: g
                .vertices
                .iter()
                .map(|v| VertexRecord {
                    id: v.id,
                    intrinsics: v.intrinsics,
                    time_s: v.capture.time_s,
                    eval_camera_pose: v.capture.eval_camera_pose.as_ref().map(PoseRecord::from),
                    features: v.features.iter().map(|f| FeatureRecord { id: f.id, u: f.pixel[0], v: f.pixel[1] }).collect(),
                })
                .collect(),
            edges: g.edges.iter().map(|&(a, b)| [a, b]).collect(),
        }
    }
}

impl GraphFile {
    pub fn into_graph(self) -> Result<ViewGraph, GraphError> {
        let fmt = |s: String| GraphError::Format(s);
        if self.version != GRAPH_FORMAT_VERSION {
            return Err(fmt(format!("unsupported version {}", self.version)));
        }
        let n = self.vertices.len();
        let mut graph = ViewGraph::new();
        for (index, rec) in self.vertices.into_iter().enumerate() {
            if rec.id != index {
                return Err(fmt(format!("vertex at position {index} has id {}", rec.id)));
            }
            if !rec.intrinsics.is_valid() {
                return Err(fmt(format!("vertex {index} has invalid intrinsics")));
            }
            if !rec.time_s.is_finite() {
                return Err(fmt(format!("vertex {index} has a non-finite timestamp")));
            }
            if rec.features.len() < MIN_FEATURES {
                return Err(GraphError::InsufficientFeatures { got: rec.features.len() });
            }
            let mut seen = HashSet::new();
            let mut features = Vec::with_capacity(rec.features.len());
            for f in rec.features {
                if !seen.insert(f.id) {
                    return Err(fmt(format!("vertex {index} repeats feature id {}", f.id)));
                }
                if !f.u.is_finite() || !f.v.is_finite() {
                    return Err(fmt(format!("vertex {index} feature {} is not finite", f.id)));
                }
                features.push(FeatureObservation { id: f.id, pixel: [f.u, f.v], inside_fov: true });
            }
            let eval_camera_pose = rec.eval_camera_pose.map(|p| p.to_pose()).transpose()?;
            graph.vertices.push(ViewVertex {
                id: index,
                features,
                intrinsics: rec.intrinsics,
                capture: CaptureMeta { time_s: rec.time_s, eval_camera_pose },
            });
            graph.adjacency.push(BTreeSet::new());
        }
        let mut seen = HashSet::new();
        for [a, b] in self.edges {
            if a >= n || b >= n || a == b {
                return Err(fmt(format!("invalid edge ({a}, {b})")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(fmt(format!("duplicate edge ({a}, {b})")));
            }
            graph.add_edge(a, b);
        }
        if !graph.is_connected() {
            return Err(fmt("graph is not connected".into()));
        }
        match self.current {
            Some(c) if c >= n => return Err(GraphError::UnknownVertex(c)),
            None if n > 0 => return Err(fmt("non-empty graph without a current vertex".into())),
            c => graph.current = c,
        }
        Ok(graph)
    }
}
