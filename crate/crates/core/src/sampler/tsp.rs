//! Open-path travelling salesman heuristics: nearest-neighbour construction,
//! 2-opt and Or-opt local search.

use super::SamplerError;

/// Minimum improvement for a local move to be accepted.
pub const IMPROVE_EPS: f64 = 1e-9;
/// Number of best nearest-neighbour tours refined by local search.
pub const REFINED_STARTS: usize = 8;

pub fn path_cost(order: &[usize], d: &[Vec<f64>]) -> f64 {
    order.windows(2).map(|w| d[w[0]][w[1]]).sum()
}

fn nearest_neighbour(start: usize, d: &[Vec<f64>]) -> Vec<usize> {
    let n = d.len();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut cur = start;
    seen[cur] = true;
    order.push(cur);
    for _ in 1..n {
        let next = (0..n)
            .filter(|&j| !seen[j])
            .min_by(|&a, &b| d[cur][a].total_cmp(&d[cur][b]).then(a.cmp(&b)))
            .unwrap();
        seen[next] = true;
        order.push(next);
        cur = next;
    }
    order
}

fn edge(d: &[Vec<f64>], a: Option<usize>, b: Option<usize>) -> f64 {
    match (a, b) {
        (Some(a), Some(b)) => d[a][b],
        _ => 0.0,
    }
}

/// Best improving segment reversal, applied in place.
pub fn two_opt_pass(order: &mut [usize], d: &[Vec<f64>]) -> bool {
    let n = order.len();
    let mut best = (-IMPROVE_EPS, 0, 0);
    for i in 0..n {
        let prev = i.checked_sub(1).map(|p| order[p]);
        for j in i + 1..n {
            let next = order.get(j + 1).copied();
            let delta = edge(d, prev, Some(order[j])) + edge(d, Some(order[i]), next)
                - edge(d, prev, Some(order[i]))
                - edge(d, Some(order[j]), next);
            if delta < best.0 {
                best = (delta, i, j);
            }
        }
    }
    if best.1 == best.2 {
        return false;
    }
    order[best.1..=best.2].reverse();
    true
}

/// First improving relocation of a 1 to 3 node segment, possibly reversed.
fn or_opt_pass(order: &mut Vec<usize>, d: &[Vec<f64>]) -> bool {
    let n = order.len();
    for len in 1..=3.min(n.saturating_sub(1)) {
        for i in 0..=n - len {
            let seg: Vec<usize> = order[i..i + len].to_vec();
            let prev = i.checked_sub(1).map(|p| order[p]);
            let next = order.get(i + len).copied();
            let gain = edge(d, prev, Some(seg[0])) + edge(d, Some(seg[len - 1]), next) - edge(d, prev, next);
            let rest: Vec<usize> = order[..i].iter().chain(&order[i + len..]).copied().collect();
            for q in 0..=rest.len() {
                let before = q.checked_sub(1).map(|p| rest[p]);
                let after = rest.get(q).copied();
                for reversed in [false, true] {
                    if q == i && !reversed {
                        continue;
                    }
                    let (a, b) = if reversed { (seg[len - 1], seg[0]) } else { (seg[0], seg[len - 1]) };
                    let add = edge(d, before, Some(a)) + edge(d, Some(b), after) - edge(d, before, after);
                    if add - gain < -IMPROVE_EPS {
                        let mut s = seg.clone();
                        if reversed {
                            s.reverse();
                        }
                        let mut out = rest[..q].to_vec();
                        out.extend(s);
                        out.extend_from_slice(&rest[q..]);
                        *order = out;
                        return true;
                    }
                }
            }
        }
    }
    false
}

fn local_search(order: &mut Vec<usize>, d: &[Vec<f64>]) {
    loop {
        while two_opt_pass(order, d) {}
        if !or_opt_pass(order, d) {
            break;
        }
    }
}

/// Visiting order of an open path through all nodes of the symmetric matrix `d`.
///
/// The result is 2-opt stable. Ties are broken towards smaller indices, so
/// the output is a pure function of `d`.
pub fn solve_tsp(d: &[Vec<f64>]) -> Result<Vec<usize>, SamplerError> {
    let n = d.len();
    if n == 0 {
        return Err(SamplerError::EmptyNodes);
    }
    if d.iter().any(|r| r.len() != n || r.iter().any(|v| !v.is_finite())) {
        return Err(SamplerError::InvalidConfig("distance matrix must be square and finite".into()));
    }
    let mut starts: Vec<(f64, Vec<usize>)> = (0..n)
        .map(|s| {
            let o = nearest_neighbour(s, d);
            (path_cost(&o, d), o)
        })
        .collect();
    starts.sort_by(|a, b| a.0.total_cmp(&b.0));
    starts.truncate(REFINED_STARTS);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for (_, mut o) in starts {
        local_search(&mut o, d);
        let c = path_cost(&o, d);
        if best.as_ref().is_none_or(|b| c < b.0 - IMPROVE_EPS) {
            best = Some((c, o));
        }
    }
    Ok(best.unwrap().1)
}
