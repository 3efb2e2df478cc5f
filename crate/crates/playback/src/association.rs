//! Global-nearest-neighbor assignment of detections to predicted tracks:
//! a shortest-augmenting-path Hungarian solver on negative BEV IoU with a
//! sentinel-cost gate.

use nalgebra::DMatrix;

use crate::geometry::{bev_iou, BevBox};

/// Cost placed on gated-out pairs. Large enough that the solver only assigns
/// through it when no gate-respecting completion exists; small enough that
/// potential arithmetic keeps real costs well above rounding noise.
const GATE_SENTINEL: f64 = 1e6;

/// Outcome of one frame's assignment. Index sets partition the inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentResult {
    /// (track index, detection index, BEV IoU), sorted by track index.
    pub matches: Vec<(usize, usize, f64)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Minimum-cost one-to-one assignment of size `min(rows, cols)`.
///
/// Shortest augmenting path formulation with row/column potentials; rows are
/// inserted in order and column scans prefer the lowest index, so equal-cost
/// optima resolve deterministically in lexicographic (row, column) order.
/// Costs must be finite. Returns (row, column) pairs sorted by row.
pub fn hungarian(cost: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let (rows, cols) = cost.shape();
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    if rows > cols {
        let flipped = cost.transpose();
        let mut pairs: Vec<(usize, usize)> = solve_rectangular(&flipped)
            .into_iter()
            .map(|(r, c)| (c, r))
            .collect();
        pairs.sort_unstable();
        return pairs;
    }
    solve_rectangular(cost)
}

/// Core solver; requires rows <= cols.
fn solve_rectangular(cost: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let (n, m) = cost.shape();
    debug_assert!(n <= m);
    // 1-indexed working arrays; index 0 is the virtual start column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut assigned_row = vec![0usize; m + 1];
    let mut path = vec![0usize; m + 1];

    for row in 1..=n {
        assigned_row[0] = row;
        let mut j0 = 0usize;
        let mut min_reduced = vec![f64::INFINITY; m + 1];
        let mut visited = vec![false; m + 1];
        loop {
            visited[j0] = true;
            let i0 = assigned_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if visited[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if reduced < min_reduced[j] {
                    min_reduced[j] = reduced;
                    path[j] = j0;
                }
                if min_reduced[j] < delta {
                    delta = min_reduced[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if visited[j] {
                    u[assigned_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_reduced[j] -= delta;
                }
            }
            j0 = j1;
            if assigned_row[j0] == 0 {
                break;
            }
        }
        // Augment along the alternating path back to the start.
        loop {
            let j1 = path[j0];
            assigned_row[j0] = assigned_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| assigned_row[j] != 0)
        .map(|j| (assigned_row[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Assign detections to predicted track boxes by maximal total BEV IoU.
///
/// Pairs below the gate are forbidden via a sentinel cost; sentinel pairs
/// returned by the solver are demoted to unmatched, so every reported match
/// satisfies `iou >= gate`.
pub fn associate(
    predicted_boxes: &[BevBox],
    detections: &[BevBox],
    gate: f64,
) -> AssignmentResult {
    let n = predicted_boxes.len();
    let m = detections.len();
    if n == 0 || m == 0 {
        return AssignmentResult {
            matches: Vec::new(),
            unmatched_tracks: (0..n).collect(),
            unmatched_detections: (0..m).collect(),
        };
    }

    let mut iou = DMatrix::<f64>::zeros(n, m);
    let mut cost = DMatrix::<f64>::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            let v = bev_iou(&predicted_boxes[i], &detections[j]);
            iou[(i, j)] = v;
            cost[(i, j)] = if v >= gate { -v } else { GATE_SENTINEL };
        }
    }

    let mut matches = Vec::new();
    let mut track_used = vec![false; n];
    let mut det_used = vec![false; m];
    for (i, j) in hungarian(&cost) {
        if cost[(i, j)] < GATE_SENTINEL {
            matches.push((i, j, iou[(i, j)]));
            track_used[i] = true;
            det_used[j] = true;
        }
    }

    AssignmentResult {
        matches,
        unmatched_tracks: (0..n).filter(|&i| !track_used[i]).collect(),
        unmatched_detections: (0..m).filter(|&j| !det_used[j]).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive minimum over all injections of rows into columns.
    fn brute_force_min_cost(cost: &DMatrix<f64>) -> f64 {
        let (n, m) = cost.shape();
        if n > m {
            return brute_force_min_cost(&cost.transpose());
        }
        fn recurse(cost: &DMatrix<f64>, row: usize, used: &mut Vec<bool>) -> f64 {
            let (n, m) = cost.shape();
            if row == n {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..m {
                if !used[j] {
                    used[j] = true;
                    let total = cost[(row, j)] + recurse(cost, row + 1, used);
                    used[j] = false;
                    best = best.min(total);
                }
            }
            best
        }
        recurse(cost, 0, &mut vec![false; m])
    }

    fn total_cost(cost: &DMatrix<f64>, pairs: &[(usize, usize)]) -> f64 {
        pairs.iter().map(|&(i, j)| cost[(i, j)]).sum()
    }

    #[test]
    fn single_cell() {
        let cost = DMatrix::from_row_slice(1, 1, &[3.0]);
        assert_eq!(hungarian(&cost), vec![(0, 0)]);
    }

    #[test]
    fn diagonal_favoring_matrix() {
        let cost = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 1.0 });
        let pairs = hungarian(&cost);
        assert_eq!(pairs, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        assert_eq!(total_cost(&cost, &pairs), 0.0);
    }

    #[test]
    fn rectangular_shapes_assign_min_side() {
        let cost = DMatrix::from_row_slice(2, 4, &[5.0, 1.0, 9.0, 9.0, 9.0, 9.0, 2.0, 7.0]);
        let pairs = hungarian(&cost);
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs, vec![(0, 1), (1, 2)]);

        let tall = cost.transpose();
        let pairs = hungarian(&tall);
        assert_eq!(pairs, vec![(1, 0), (2, 1)]);
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for trial in 0..200 {
            let n = rng.gen_range(1..=7);
            let m = rng.gen_range(1..=7);
            let cost = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-10.0..10.0));
            let pairs = hungarian(&cost);
            assert_eq!(pairs.len(), n.min(m));
            let got = total_cost(&cost, &pairs);
            let want = brute_force_min_cost(&cost);
            assert!(
                (got - want).abs() < 1e-9,
                "trial {trial}: {got} vs brute force {want}"
            );
        }
    }

    #[test]
    fn scaling_costs_preserves_assignment() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(2..=6);
            let m = rng.gen_range(2..=6);
            let cost = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-4.0..4.0));
            let base = hungarian(&cost);
            for scale in [0.5, 2.0, 1024.0] {
                let scaled = cost.map(|c| c * scale);
                assert_eq!(hungarian(&scaled), base, "scale {scale}");
            }
        }
    }

    fn boxes(specs: &[(f64, f64)]) -> Vec<BevBox> {
        specs
            .iter()
            .map(|&(cx, cy)| BevBox::new(cx, cy, 0.0, 4.0, 2.0).unwrap())
            .collect()
    }

    #[test]
    fn associate_empty_sides() {
        let dets = boxes(&[(0.0, 0.0), (10.0, 0.0)]);
        let res = associate(&[], &dets, 0.3);
        assert!(res.matches.is_empty());
        assert_eq!(res.unmatched_detections, vec![0, 1]);

        let res = associate(&dets, &[], 0.3);
        assert!(res.matches.is_empty());
        assert_eq!(res.unmatched_tracks, vec![0, 1]);
    }

    #[test]
    fn associate_single_pair_over_gate() {
        let pred = boxes(&[(0.0, 0.0)]);
        let det = boxes(&[(1.0, 0.0)]); // IoU 0.6
        let res = associate(&pred, &det, 0.3);
        assert_eq!(res.matches.len(), 1);
        let (t, d, iou) = res.matches[0];
        assert_eq!((t, d), (0, 0));
        assert!((iou - 0.6).abs() < 1e-12);
    }

    #[test]
    fn associate_respects_gate() {
        let pred = boxes(&[(0.0, 0.0)]);
        let det = boxes(&[(3.5, 0.0)]); // IoU = 0.5/7.5 ≈ 0.067
        let res = associate(&pred, &det, 0.3);
        assert!(res.matches.is_empty());
        assert_eq!(res.unmatched_tracks, vec![0]);
        assert_eq!(res.unmatched_detections, vec![0]);
    }

    #[test]
    fn associate_beats_greedy() {
        // Greedy grabs (0,0) first and strands track 1; the optimal total
        // assigns (0,1) and (1,0).
        let pred = boxes(&[(0.0, 0.0), (2.0, 0.0)]);
        let det = boxes(&[(1.0, 0.0), (0.2, 0.0)]);
        // iou(0,0)=0.6, iou(0,1)≈0.905, iou(1,0)=0.6, iou(1,1)≈0.286<gate
        let res = associate(&pred, &det, 0.3);
        let pairs: Vec<(usize, usize)> = res.matches.iter().map(|&(t, d, _)| (t, d)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 0)]);
    }

    /// Sentinel-gated brute force mirroring `associate`'s objective.
    fn brute_force_associate(iou: &DMatrix<f64>, gate: f64) -> (usize, f64) {
        let (n, m) = iou.shape();
        let swap = n > m;
        let a = if swap { iou.transpose() } else { iou.clone() };
        let (n, m) = a.shape();
        fn recurse(
            a: &DMatrix<f64>,
            gate: f64,
            row: usize,
            used: &mut Vec<bool>,
            best: &mut f64,
            cur: f64,
        ) {
            let (n, m) = a.shape();
            if row == n {
                *best = best.min(cur);
                return;
            }
            for j in 0..m {
                if !used[j] {
                    used[j] = true;
                    let c = if a[(row, j)] >= gate {
                        -a[(row, j)]
                    } else {
                        GATE_SENTINEL
                    };
                    recurse(a, gate, row + 1, used, best, cur + c);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        recurse(&a, gate, 0, &mut vec![false; m], &mut best, 0.0);
        let sentinels = (best / GATE_SENTINEL).round() as usize;
        let matched = n - sentinels;
        let iou_sum = sentinels as f64 * GATE_SENTINEL - best;
        (matched, iou_sum)
    }

    proptest! {
        #[test]
        fn associate_partitions_and_is_optimal(seed in 0u64..300) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..=5);
            let m = rng.gen_range(1..=5);
            let mk = |rng: &mut rand_chacha::ChaCha8Rng, count: usize| -> Vec<BevBox> {
                (0..count)
                    .map(|_| {
                        BevBox::new(
                            rng.gen_range(-5.0..5.0),
                            rng.gen_range(-3.0..3.0),
                            rng.gen_range(-0.5..0.5),
                            4.0,
                            2.0,
                        )
                        .unwrap()
                    })
                    .collect()
            };
            let pred = mk(&mut rng, n);
            let det = mk(&mut rng, m);
            let res = associate(&pred, &det, 0.3);

            // Index sets partition the inputs.
            let mut tracks: Vec<usize> = res.matches.iter().map(|&(t, _, _)| t).collect();
            tracks.extend(&res.unmatched_tracks);
            tracks.sort_unstable();
            prop_assert_eq!(tracks, (0..n).collect::<Vec<_>>());
            let mut dets: Vec<usize> = res.matches.iter().map(|&(_, d, _)| d).collect();
            dets.extend(&res.unmatched_detections);
            dets.sort_unstable();
            prop_assert_eq!(dets, (0..m).collect::<Vec<_>>());
            prop_assert!(res.matches.iter().all(|&(_, _, v)| v >= 0.3));

            // Same gated objective as exhaustive search.
            let mut iou = DMatrix::<f64>::zeros(n, m);
            for i in 0..n {
                for j in 0..m {
                    iou[(i, j)] = bev_iou(&pred[i], &det[j]);
                }
            }
            let (bf_count, bf_sum) = brute_force_associate(&iou, 0.3);
            let got_sum: f64 = res.matches.iter().map(|&(_, _, v)| v).sum();
            prop_assert_eq!(res.matches.len(), bf_count);
            prop_assert!((got_sum - bf_sum).abs() < 1e-9);
        }
    }
}
