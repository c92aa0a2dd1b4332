//! Merging of near-coincident vertices.

use alloc::vec;
use alloc::vec::Vec;

use super::{Mesh, Vertex};
use crate::math::{floor, Vec3};
use crate::FxHashMap;

/// Triangles below this area (m²) are dropped as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

fn find(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        let p = parent[i as usize];
        parent[i as usize] = parent[p as usize];
        i = p;
    }
    i
}

/// Drops repeated faces over the same vertex triple. A pair with opposite
/// winding is a zero-volume fold and both faces go; same-winding repeats
/// keep their first copy.
fn cancel_duplicates(tris: Vec<[u32; 3]>) -> Vec<[u32; 3]> {
    // canonical rotation with the smallest index first; parity of the rest
    let key = |t: [u32; 3]| {
        let r = (0..3).min_by_key(|&k| t[k]).unwrap_or(0);
        let (a, b, c) = (t[r], t[(r + 1) % 3], t[(r + 2) % 3]);
        if b < c {
            ([a, b, c], true)
        } else {
            ([a, c, b], false)
        }
    };
    let mut seen: FxHashMap<[u32; 3], (i32, i32)> = FxHashMap::default();
    for &t in &tris {
        let (k, even) = key(t);
        let e = seen.entry(k).or_insert((0, 0));
        if even {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    if seen.len() == tris.len() {
        return tris;
    }
    // remaining faces per triple and orientation after cancelling folds
    let mut keep: FxHashMap<[u32; 3], (i32, i32)> = seen
        .into_iter()
        .map(|(k, (p, n))| {
            let m = p.min(n);
            (k, ((p - m).min(1), (n - m).min(1)))
        })
        .collect();
    tris.into_iter()
        .filter(|&t| {
            let (k, even) = key(t);
            let e = keep.get_mut(&k).expect("counted above");
            let slot = if even { &mut e.0 } else { &mut e.1 };
            if *slot > 0 {
                *slot -= 1;
                true
            } else {
                false
            }
        })
        .collect()
}

/// Merges vertices whose clusters lie within `eps` of each other into the
/// cluster centroid, repeating until no two cluster centroids are within
/// `eps`. Triangles are re-indexed, degenerate ones dropped, and unreferenced
/// vertices removed. Applying it twice with the same `eps` changes nothing.
pub fn collapse_vertices(mesh: &Mesh, eps: f64) -> Mesh {
    let eps = eps.max(0.0);
    let n = mesh.vertices.len();
    let mut parent: Vec<u32> = (0..n as u32).collect();
    loop {
        // centroids of the current clusters, keyed by root
        let mut sum = vec![Vec3::ZERO; n];
        let mut count = vec![0u32; n];
        for i in 0..n as u32 {
            let r = find(&mut parent, i) as usize;
            sum[r] += mesh.vertices[i as usize].position;
            count[r] += 1;
        }
        let roots: Vec<u32> = (0..n as u32).filter(|&i| count[i as usize] > 0).collect();
        let centroid = |r: u32| sum[r as usize] * (1.0 / count[r as usize] as f64);
        let cell = |p: Vec3| -> [i64; 3] {
            if eps > 0.0 {
                [floor(p.x / eps) as i64, floor(p.y / eps) as i64, floor(p.z / eps) as i64]
            } else {
                [p.x.to_bits() as i64, p.y.to_bits() as i64, p.z.to_bits() as i64]
            }
        };
        let mut grid: FxHashMap<[i64; 3], Vec<u32>> = FxHashMap::default();
        for &r in &roots {
            grid.entry(cell(centroid(r))).or_default().push(r);
        }
        let mut pairs = Vec::new();
        for &r in &roots {
            let p = centroid(r);
            let c = cell(p);
            let reach = if eps > 0.0 { 1 } else { 0 };
            for dz in -reach..=reach {
                for dy in -reach..=reach {
                    for dx in -reach..=reach {
                        let Some(list) = grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) else {
                            continue;
                        };
                        for &s in list {
                            if s > r && centroid(s).distance(p) <= eps {
                                pairs.push((r, s));
                            }
                        }
                    }
                }
            }
        }
        if pairs.is_empty() {
            break;
        }
        for (a, b) in pairs {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
                parent[hi as usize] = lo;
            }
        }
    }

    // one output vertex per cluster, ordered by smallest member index
    let mut cluster_of = vec![u32::MAX; n];
    let mut members: Vec<(Vec3, Vec3, [f64; 3], u32, usize)> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i as u32) as usize;
        if cluster_of[r] == u32::MAX {
            cluster_of[r] = members.len() as u32;
            members.push((Vec3::ZERO, Vec3::ZERO, [0.0; 3], 0, i));
        }
        let v = &mesh.vertices[i];
        let m = &mut members[cluster_of[r] as usize];
        m.0 += v.position;
        m.1 += v.normal;
        for k in 0..3 {
            m.2[k] += v.color[k] as f64;
        }
        m.3 += 1;
    }
    let remap: Vec<u32> = (0..n)
        .map(|i| cluster_of[find(&mut parent, i as u32) as usize])
        .collect();
    let merged: Vec<Vertex> = members
        .iter()
        .map(|&(p, nrm, c, k, first)| {
            if k == 1 {
                return mesh.vertices[first];
            }
            let k = k as f64;
            Vertex {
                position: p * (1.0 / k),
                normal: nrm.normalized().unwrap_or(mesh.vertices[first].normal),
                color: [(c[0] / k) as f32, (c[1] / k) as f32, (c[2] / k) as f32],
            }
        })
        .collect();

    let mut tris = Vec::with_capacity(mesh.triangles.len());
    for t in &mesh.triangles {
        let t = t.map(|i| remap[i as usize]);
        if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
            continue;
        }
        let [a, b, c] = t.map(|i| merged[i as usize].position);
        if 0.5 * (b - a).cross(c - a).norm() < DEGENERATE_AREA {
            continue;
        }
        tris.push(t);
    }
    let mut tris = cancel_duplicates(tris);

    // drop vertices no triangle references
    let mut used = vec![u32::MAX; merged.len()];
    let mut vertices = Vec::new();
    for t in tris.iter_mut() {
        for i in t.iter_mut() {
            if used[*i as usize] == u32::MAX {
                used[*i as usize] = vertices.len() as u32;
                vertices.push(merged[*i as usize]);
            }
            *i = used[*i as usize];
        }
    }
    Mesh {
        vertices,
        triangles: tris,
    }
}
