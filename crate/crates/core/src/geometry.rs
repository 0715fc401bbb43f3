//! Icosphere meshes and synthetic parcellations.
//!
//! Meshes are built by recursive 4-to-1 subdivision of a golden-ratio
//! icosahedron. Midpoint vertices are appended after their parents, so the
//! vertex list of order `o` is a prefix of the vertex list of order `o + 1`.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScsrError};

pub const MAX_ORDER: u32 = 7;

/// Number of vertices of an icosphere of the given order.
pub fn vertex_count(order: u32) -> usize {
    10 * 4usize.pow(order) + 2
}

/// Inverse of [`vertex_count`], if `p` is a valid icosphere size.
pub fn order_for_vertex_count(p: usize) -> Option<u32> {
    (0..=MAX_ORDER).find(|&o| vertex_count(o) == p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcosphereMesh {
    pub order: u32,
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
    pub adjacency: Vec<Vec<usize>>,
}

const BASE_FACES: [[usize; 3]; 20] = [
    [0, 11, 5],
    [0, 5, 1],
    [0, 1, 7],
    [0, 7, 10],
    [0, 10, 11],
    [1, 5, 9],
    [5, 11, 4],
    [11, 10, 2],
    [10, 7, 6],
    [7, 1, 8],
    [3, 9, 4],
    [3, 4, 2],
    [3, 2, 6],
    [3, 6, 8],
    [3, 8, 9],
    [4, 9, 5],
    [2, 4, 11],
    [6, 2, 10],
    [8, 6, 7],
    [9, 8, 1],
];

fn base_vertices() -> Vec<[f64; 3]> {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    raw.iter().map(|v| normalize(*v)).collect()
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn subdivide(vertices: &mut Vec<[f64; 3]>, faces: &[[usize; 3]]) -> Vec<[usize; 3]> {
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 3 / 2);
    let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<[f64; 3]>| -> usize {
        let key = (a.min(b), a.max(b));
        *midpoints.entry(key).or_insert_with(|| {
            let (va, vb) = (vertices[a], vertices[b]);
            vertices.push(normalize([
                (va[0] + vb[0]) * 0.5,
                (va[1] + vb[1]) * 0.5,
                (va[2] + vb[2]) * 0.5,
            ]));
            vertices.len() - 1
        })
    };

    let mut out = Vec::with_capacity(faces.len() * 4);
    for &[a, b, c] in faces {
        let ab = midpoint(a, b, vertices);
        let bc = midpoint(b, c, vertices);
        let ca = midpoint(c, a, vertices);
        out.push([a, ab, ca]);
        out.push([b, bc, ab]);
        out.push([c, ca, bc]);
        out.push([ab, bc, ca]);
    }
    out
}

/// Sorted, deduplicated neighbor lists derived from triangle faces.
pub fn adjacency_from_faces(n_vertices: usize, faces: &[[usize; 3]]) -> Vec<Vec<usize>> {
    let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_vertices];
    for &[a, b, c] in faces {
        for (u, v) in [(a, b), (b, c), (c, a)] {
            sets[u].insert(v);
            sets[v].insert(u);
        }
    }
    sets.into_iter().map(|s| s.into_iter().collect()).collect()
}

/// Builds the icosphere of the given subdivision order. Deterministic.
pub fn build_icosphere(order: u32) -> Result<IcosphereMesh> {
    if order > MAX_ORDER {
        return Err(ScsrError::Bounds {
            what: "icosphere order",
            detail: format!("{order} not in [0, {MAX_ORDER}]"),
        });
    }
    let mut vertices = base_vertices();
    let mut faces = BASE_FACES.to_vec();
    for _ in 0..order {
        faces = subdivide(&mut vertices, &faces);
    }
    let adjacency = adjacency_from_faces(vertices.len(), &faces);
    Ok(IcosphereMesh {
        order,
        vertices,
        faces,
        adjacency,
    })
}

impl IcosphereMesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices() as i64 - self.n_edges() as i64 + self.faces.len() as i64
    }

    /// Hop distances from a set of source vertices (multi-source BFS).
    pub fn hop_distances(&self, sources: &[usize]) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.n_vertices()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s] != 0 {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            let d = dist[u] + 1;
            for &v in &self.adjacency[u] {
                if dist[v] == u32::MAX {
                    dist[v] = d;
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parcellation {
    pub labels: Vec<usize>,
    pub k: usize,
    /// Named sets of parcel indices, e.g. `"ad_roi"`.
    pub roi_sets: BTreeMap<String, BTreeSet<usize>>,
}

impl Parcellation {
    /// Wraps precomputed labels. Every parcel in `0..k` must be non-empty.
    pub fn from_labels(labels: Vec<usize>, k: usize) -> Result<Self> {
        let mut sizes = vec![0usize; k];
        for (v, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(ScsrError::Bounds {
                    what: "parcel label",
                    detail: format!("vertex {v} has label {l} >= k={k}"),
                });
            }
            sizes[l] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(ScsrError::Config(format!("parcel {empty} is empty")));
        }
        Ok(Self {
            labels,
            k,
            roi_sets: BTreeMap::new(),
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.labels.len()
    }

    pub fn parcel_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn parcel_vertices(&self, parcel: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(v, &l)| (l == parcel).then_some(v))
            .collect()
    }

    /// Adds or replaces the named ROI.
    pub fn define_roi(mut self, name: &str, parcel_ids: &BTreeSet<usize>) -> Result<Self> {
        if let Some(&bad) = parcel_ids.iter().find(|&&id| id >= self.k) {
            return Err(ScsrError::Bounds {
                what: "ROI parcel id",
                detail: format!("{bad} >= k={}", self.k),
            });
        }
        self.roi_sets.insert(name.to_string(), parcel_ids.clone());
        Ok(self)
    }

    /// Vertex membership of a named ROI (union of its parcels), ascending.
    pub fn roi_vertices(&self, name: &str) -> Result<Vec<usize>> {
        let parcels = self
            .roi_sets
            .get(name)
            .ok_or_else(|| ScsrError::Config(format!("unknown ROI {name:?}")))?;
        Ok(self
            .labels
            .iter()
            .enumerate()
            .filter_map(|(v, l)| parcels.contains(l).then_some(v))
            .collect())
    }

    pub fn roi_mask(&self, name: &str) -> Result<Vec<bool>> {
        let mut mask = vec![false; self.n_vertices()];
        for v in self.roi_vertices(name)? {
            mask[v] = true;
        }
        Ok(mask)
    }

    /// Unweighted per-parcel averages of a vertex map.
    pub fn parcel_means<T: Copy + Into<f64>>(&self, values: &[T]) -> Result<Vec<f64>> {
        if values.len() != self.n_vertices() {
            return Err(ScsrError::Shape {
                context: "parcel_means",
                expected: self.n_vertices(),
                actual: values.len(),
            });
        }
        let mut sums = vec![0.0; self.k];
        let mut counts = vec![0usize; self.k];
        for (&l, &x) in self.labels.iter().zip(values) {
            sums[l] += x.into();
            counts[l] += 1;
        }
        Ok(sums
            .into_iter()
            .zip(counts)
            .map(|(s, c)| s / c as f64)
            .collect())
    }
}

/// Farthest-point seeding followed by hop-distance Voronoi assignment.
///
/// The first seed is drawn from `seed`; each further seed is the vertex
/// farthest (in hops) from all previous seeds, lowest index on ties. Vertices
/// join the nearest seed, lower seed index on ties, which keeps every parcel
/// connected.
pub fn generate_parcellation(mesh: &IcosphereMesh, k: usize, seed: u64) -> Result<Parcellation> {
    let n = mesh.n_vertices();
    if k == 0 || k > n {
        return Err(ScsrError::Bounds {
            what: "parcel count",
            detail: format!("k={k} not in [1, {n}]"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seeds = Vec::with_capacity(k);
    let mut per_seed: Vec<Vec<u32>> = Vec::with_capacity(k);
    let mut nearest = vec![u32::MAX; n];

    let mut next = rng.random_range(0..n);
    loop {
        let dist = mesh.hop_distances(&[next]);
        for (m, &d) in nearest.iter_mut().zip(&dist) {
            *m = (*m).min(d);
        }
        seeds.push(next);
        per_seed.push(dist);
        if seeds.len() == k {
            break;
        }
        // max_by_key returns the last maximum; iterate in reverse for lowest index.
        next = (0..n)
            .rev()
            .max_by_key(|&v| nearest[v])
            .expect("non-empty mesh");
    }

    let labels = (0..n)
        .map(|v| (0..k).min_by_key(|&s| (per_seed[s][v], s)).expect("k >= 1"))
        .collect();
    Parcellation::from_labels(labels, k)
}

/// Whether the vertices of each parcel form a connected subgraph.
pub fn parcels_connected(mesh: &IcosphereMesh, parc: &Parcellation) -> bool {
    (0..parc.k).all(|p| {
        let members = parc.parcel_vertices(p);
        let Some(&start) = members.first() else {
            return false;
        };
        let mut seen = vec![false; mesh.n_vertices()];
        let mut stack = vec![start];
        seen[start] = true;
        let mut count = 0;
        while let Some(u) = stack.pop() {
            count += 1;
            for &v in &mesh.adjacency[u] {
                if !seen[v] && parc.labels[v] == p {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        count == members.len()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_closed_forms() {
        for o in 0..=5 {
            let mesh = build_icosphere(o).unwrap();
            let f = 4usize.pow(o);
            assert_eq!(mesh.n_vertices(), 10 * f + 2);
            assert_eq!(mesh.faces.len(), 20 * f);
            assert_eq!(mesh.n_edges(), 30 * f);
            assert_eq!(mesh.euler_characteristic(), 2);
        }
        assert_eq!(build_icosphere(5).unwrap().n_vertices(), 10_242);
        assert_eq!(build_icosphere(3).unwrap().n_vertices(), 642);
    }

    #[test]
    fn order_out_of_range() {
        assert!(matches!(build_icosphere(8), Err(ScsrError::Bounds { .. })));
    }

    #[test]
    fn unit_norm_and_symmetric_adjacency() {
        let mesh = build_icosphere(3).unwrap();
        for v in &mesh.vertices {
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            assert!((n - 1.0).abs() < 1e-9);
        }
        for (u, nb) in mesh.adjacency.iter().enumerate() {
            for &v in nb {
                assert!(mesh.adjacency[v].contains(&u));
            }
        }
    }

    #[test]
    fn coarse_vertices_are_prefix() {
        let coarse = build_icosphere(2).unwrap();
        let fine = build_icosphere(3).unwrap();
        assert_eq!(&fine.vertices[..coarse.n_vertices()], &coarse.vertices[..]);
    }

    #[test]
    fn single_parcel() {
        let mesh = build_icosphere(1).unwrap();
        let parc = generate_parcellation(&mesh, 1, 3).unwrap();
        assert!(parc.labels.iter().all(|&l| l == 0));
        assert!(generate_parcellation(&mesh, mesh.n_vertices() + 1, 3).is_err());
    }

    #[test]
    fn parcellation_order3_k34() {
        let mesh = build_icosphere(3).unwrap();
        let parc = generate_parcellation(&mesh, 34, 7).unwrap();
        assert_eq!(parc.labels.len(), 642);
        assert!(parcels_connected(&mesh, &parc));
        let sizes = parc.parcel_sizes();
        let (lo, hi) = (*sizes.iter().min().unwrap(), *sizes.iter().max().unwrap());
        assert!(hi <= 4 * lo, "sizes {sizes:?}");
        assert_eq!(parc, generate_parcellation(&mesh, 34, 7).unwrap());
    }

    #[test]
    fn roi_union_counts() {
        let mesh = build_icosphere(3).unwrap();
        let parc = generate_parcellation(&mesh, 34, 7).unwrap();
        let ids: BTreeSet<usize> = [2, 5, 9, 11, 17].into();
        let sizes = parc.parcel_sizes();
        let parc = parc.define_roi("ad_roi", &ids).unwrap();
        let expected: usize = ids.iter().map(|&i| sizes[i]).sum();
        assert_eq!(parc.roi_vertices("ad_roi").unwrap().len(), expected);

        let parc = parc.define_roi("empty", &BTreeSet::new()).unwrap();
        assert!(parc.roi_vertices("empty").unwrap().is_empty());
        assert!(parc.clone().define_roi("bad", &[34].into()).is_err());
        assert!(parc.roi_vertices("missing").is_err());
    }

    #[test]
    fn roi_on_single_parcel_covers_all() {
        let mesh = build_icosphere(0).unwrap();
        let parc = generate_parcellation(&mesh, 1, 0)
            .unwrap()
            .define_roi("all", &[0].into())
            .unwrap();
        assert_eq!(parc.roi_vertices("all").unwrap().len(), 12);
    }
}
