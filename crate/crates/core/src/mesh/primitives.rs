//! Reference shapes used by tests, oracles and drop tests.

use std::collections::HashMap;

use super::TriMesh;
use crate::Vec3;

/// Axis-aligned cube `[0,1]³`, 12 outward triangles.
pub fn unit_cube() -> TriMesh {
    let v: Vec<Vec3> = (0..8)
        .map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
        .collect();
    let faces = vec![
        [0, 2, 1],
        [1, 2, 3],
        [4, 5, 6],
        [5, 7, 6],
        [0, 1, 4],
        [1, 5, 4],
        [2, 6, 3],
        [3, 6, 7],
        [0, 4, 2],
        [2, 4, 6],
        [1, 3, 5],
        [3, 7, 5],
    ];
    TriMesh::new(v, faces).expect("cube is valid")
}

/// Subdivided icosahedron projected onto the sphere of `radius`.
pub fn icosphere(radius: f64, subdivisions: usize) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
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
    for _ in 0..subdivisions {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, v: &mut Vec<Vec3>| {
            let key = if a < b { (a, b) } else { (b, a) };
            *mid.entry(key).or_insert_with(|| {
                v.push(((v[a] + v[b]) * 0.5).normalize());
                v.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut v);
            let bc = midpoint(b, c, &mut v);
            let ca = midpoint(c, a, &mut v);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriMesh::new(v.into_iter().map(|p| p * radius).collect(), faces).expect("icosphere is valid")
}

/// Open tube of `radius` along +y from 0 to `height`, `segments` around, `rings` ≥ 2 rows.
pub fn open_cylinder(radius: f64, height: f64, segments: usize, rings: usize) -> TriMesh {
    let mut v = Vec::with_capacity(segments * rings);
    for r in 0..rings {
        let y = height * r as f64 / (rings - 1) as f64;
        for s in 0..segments {
            let a = std::f64::consts::TAU * s as f64 / segments as f64;
            v.push(Vec3::new(radius * a.cos(), y, -radius * a.sin()));
        }
    }
    let mut faces = Vec::new();
    for r in 0..rings - 1 {
        for s in 0..segments {
            let i = r * segments + s;
            let j = r * segments + (s + 1) % segments;
            faces.push([i, j, j + segments]);
            faces.push([i, j + segments, i + segments]);
        }
    }
    TriMesh::new(v, faces).expect("cylinder is valid")
}

/// Flat `n × n` vertex grid in the x–z plane at height `y`, centred on the origin.
pub fn grid(n: usize, spacing: f64, y: f64) -> TriMesh {
    let half = spacing * (n - 1) as f64 / 2.0;
    let mut v = Vec::with_capacity(n * n);
    for i in 0..n {
        for k in 0..n {
            v.push(Vec3::new(i as f64 * spacing - half, y, k as f64 * spacing - half));
        }
    }
    let mut faces = Vec::new();
    for i in 0..n - 1 {
        for k in 0..n - 1 {
            let a = i * n + k;
            let b = a + n;
            faces.push([a, a + 1, b]);
            faces.push([b, a + 1, b + 1]);
        }
    }
    TriMesh::new(v, faces).expect("grid is valid")
}
