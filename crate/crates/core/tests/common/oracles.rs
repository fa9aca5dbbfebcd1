//! Frozen reference values and brute-force oracles for the graph statistics.

use ccsd::complex::Graph;

use super::{permutations, subsets};

// Exact transport costs from a linear-program solver (unit ground distance).
pub const EMD_LP: [(&[f64], &[f64], f64); 8] = [
    (
        &[0.15, 0.15, 0.2, 0.125, 0.175, 0.2],
        &[0.08333333333333333, 0.0, 0.125, 0.08333333333333333, 0.3333333333333333, 0.375],
        1.0833333333333333,
    ),
    (&[0.3333333333333333, 0.6666666666666666], &[0.125, 0.875], 0.20833333333333331),
    (&[0.3333333333333333, 0.6666666666666666], &[0.5, 0.5], 0.16666666666666669),
    (
        &[0.3888888888888889, 0.1111111111111111, 0.5],
        &[0.3076923076923077, 0.3076923076923077, 0.38461538461538464],
        0.1965811965811966,
    ),
    (
        &[0.18518518518518517, 0.18518518518518517, 0.3333333333333333, 0.2962962962962963],
        &[0.30434782608695654, 0.30434782608695654, 0.2608695652173913, 0.13043478260869565],
        0.5233494363929148,
    ),
    (
        &[0.13793103448275862, 0.06896551724137931, 0.27586206896551724, 0.034482758620689655, 0.27586206896551724, 0.20689655172413793],
        &[0.09090909090909091, 0.0, 0.36363636363636365, 0.0, 0.09090909090909091, 0.45454545454545453],
        0.5015673981191222,
    ),
    (
        &[0.10256410256410256, 0.20512820512820512, 0.23076923076923078, 0.20512820512820512, 0.15384615384615385, 0.10256410256410256],
        &[0.2, 0.08, 0.16, 0.12, 0.08, 0.36],
        0.6646153846153845,
    ),
    (&[0.0, 1.0], &[0.6, 0.4], 0.6),
];

/// Orbit labels of each template node; any isomorphism onto the template
/// gives the same labels since orbits are automorphism classes.
pub const TEMPLATES: [(&[(usize, usize)], [usize; 4]); 6] = [
    (&[(0, 1), (1, 2), (2, 3)], [4, 5, 5, 4]),
    (&[(0, 1), (0, 2), (0, 3)], [7, 6, 6, 6]),
    (&[(0, 1), (1, 2), (2, 3), (3, 0)], [8, 8, 8, 8]),
    (&[(0, 1), (1, 2), (0, 2), (2, 3)], [10, 10, 11, 9]),
    (&[(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)], [12, 13, 13, 12]),
    (&[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)], [14, 14, 14, 14]),
];

pub fn orbit_oracle(g: &Graph) -> Vec<[f64; 11]> {
    let mut out = vec![[0.0; 11]; g.n()];
    for s in subsets(g.n(), 4) {
        'templates: for (edges, labels) in TEMPLATES {
            let t = Graph::from_edges(4, edges.iter().copied()).unwrap();
            let mut hit = None;
            permutations(&[0, 1, 2, 3], &mut |p| {
                if hit.is_none() && (0..4).all(|a| (0..4).all(|b| a == b || g.has_edge(s[a], s[b]) == t.has_edge(p[a], p[b]))) {
                    hit = Some(p.to_vec());
                }
            });
            if let Some(p) = hit {
                for a in 0..4 {
                    out[s[a]][labels[p[a]] - 4] += 1.0;
                }
                break 'templates;
            }
        }
    }
    out
}

