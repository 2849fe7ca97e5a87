use std::collections::BTreeMap;

use super::{signed_area, Mesh2D};
use crate::error::{Error, Result};

pub(super) fn unit_square(n: usize) -> Result<Mesh2D> {
    if n == 0 {
        return Err(Error::InvalidArgument("unit_square needs n >= 1".into()));
    }
    let h = 1.0 / n as f64;
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            nodes.push([i as f64 * h, j as f64 * h]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    Mesh2D::from_triangles(nodes, triangles, |[x, y]| {
        if x < 1e-12 {
            1
        } else if x > 1.0 - 1e-12 {
            2
        } else if y < 1e-12 {
            3
        } else {
            4
        }
    })
}

/// Outlet stubs as `[start, end)` column ranges in units of 0.1.
const STUBS: [(usize, usize); 3] = [(5, 9), (13, 17), (21, 25)];

pub(super) fn three_outlet_channel(resolution: usize) -> Result<Mesh2D> {
    if resolution == 0 {
        return Err(Error::InvalidArgument(
            "three_outlet_channel needs resolution >= 1".into(),
        ));
    }
    let r = resolution;
    let inside = |i: usize, j: usize| {
        if j < 10 * r {
            i < 30 * r
        } else if j < 16 * r {
            STUBS.iter().any(|&(s, e)| i >= s * r && i < e * r)
        } else {
            false
        }
    };
    let scale = 1.0 / (10 * r) as f64;

    // Integer lattice keys make duplicate detection exact.
    let mut index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut nodes = Vec::new();
    let mut node = |i: usize, j: usize, nodes: &mut Vec<[f64; 2]>| {
        *index.entry((i, j)).or_insert_with(|| {
            nodes.push([i as f64 * scale, j as f64 * scale]);
            nodes.len() - 1
        })
    };
    let mut triangles = Vec::new();
    for j in 0..16 * r {
        for i in 0..30 * r {
            if !inside(i, j) {
                continue;
            }
            let a = node(i, j, &mut nodes);
            let b = node(i + 1, j, &mut nodes);
            let c = node(i + 1, j + 1, &mut nodes);
            let d = node(i, j + 1, &mut nodes);
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    Mesh2D::from_triangles(nodes, triangles, |[x, y]| {
        if x < 1e-9 {
            return 1;
        }
        if (y - 1.6).abs() < 1e-9 {
            for (k, &(s, e)) in STUBS.iter().enumerate() {
                if x > s as f64 * 0.1 && x < e as f64 * 0.1 {
                    return 2 + k as u32;
                }
            }
        }
        5
    })
}

pub(super) fn unit_disk(rings: usize) -> Result<Mesh2D> {
    if rings == 0 {
        return Err(Error::InvalidArgument("unit_disk needs rings >= 1".into()));
    }
    let mut nodes = vec![[0.0, 0.0]];
    let mut ring_start = vec![0usize];
    for k in 1..=rings {
        ring_start.push(nodes.len());
        let m = 6 * k;
        let r = k as f64 / rings as f64;
        for j in 0..m {
            let t = std::f64::consts::TAU * j as f64 / m as f64;
            nodes.push([r * t.cos(), r * t.sin()]);
        }
    }
    let mut triangles = Vec::new();
    let mut push = |mut tri: [usize; 3], nodes: &[[f64; 2]]| {
        if signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]) < 0.0 {
            tri.swap(1, 2);
        }
        triangles.push(tri);
    };
    for j in 0..6 {
        let s = ring_start[1];
        push([0, s + j, s + (j + 1) % 6], &nodes);
    }
    for k in 2..=rings {
        let (m0, m1) = (6 * (k - 1), 6 * k);
        let (s0, s1) = (ring_start[k - 1], ring_start[k]);
        let (mut i, mut j) = (0usize, 0usize);
        while i < m0 || j < m1 {
            // advance whichever ring has the smaller next angle
            let outer_first = i == m0 || (j < m1 && (j + 1) * m0 < (i + 1) * m1);
            if outer_first {
                push([s0 + i % m0, s1 + j, s1 + (j + 1) % m1], &nodes);
                j += 1;
            } else {
                push([s0 + i, s0 + (i + 1) % m0, s1 + j % m1], &nodes);
                i += 1;
            }
        }
    }
    Mesh2D::from_triangles(nodes, triangles, |_| 1)
}
