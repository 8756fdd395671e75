//! Starting points: green first up to the green server caps, the remainder
//! on brown weighted toward cheaper grids, then mixed with a spread over all
//! queues so every free allocation is strictly positive.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use super::problem::ProblemInstance;
use crate::allocation::QueueKind;

/// Weight of the uniform (or random) spread mixed into the heuristic.
const SPREAD: f64 = 0.1;

pub(crate) fn initial_point(p: &ProblemInstance, rng: Option<&mut ChaCha8Rng>, allow_unserved: bool) -> Vec<f64> {
    let (n_dc, n_class) = (p.n_dc(), p.n_class());
    let mut x: Vec<f64> = p.fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    let idx = |i: usize, j: usize, k: QueueKind| 4 * (i * n_class + j) + if k == QueueKind::Green { 0 } else { 2 };
    let free = |k: usize| p.fixed[k].is_none();
    let total_demand: f64 = (0..n_class).map(|j| p.env.class_mean(j)).sum::<f64>().max(1e-300);

    // brown weights: cheaper grids first
    let mut order: Vec<usize> = (0..n_dc).collect();
    order.sort_by(|&a, &b| p.env.brown_price[a].total_cmp(&p.env.brown_price[b]));
    let mut brown_w = vec![0.0; n_dc];
    for (rank, &i) in order.iter().enumerate() {
        brown_w[i] = 1.0 / (rank as f64 + 1.0);
    }

    let mut rng = rng;
    for j in 0..n_class {
        if p.degenerate_classes.contains(&j) {
            continue;
        }
        let demand = p.env.class_mean(j);
        let k_j = p.classes[j].per_server_capacity;
        let share = demand / total_demand;
        let green_room = |i: usize| {
            if p.green_enabled[i] {
                0.8 * p.green_caps[i] as f64 * k_j * share
            } else {
                0.0
            }
        };

        let mut heur = vec![0.0; 4 * n_dc];
        let slot = |i: usize, k: QueueKind| 4 * i + if k == QueueKind::Green { 0 } else { 2 };
        if let Some(totals) = &p.dc_totals {
            for i in 0..n_dc {
                let tot = totals[i * n_class + j];
                let g = if free(idx(i, j, QueueKind::Green)) { green_room(i).min(0.9 * tot) } else { 0.0 };
                heur[slot(i, QueueKind::Green)] = g;
                heur[slot(i, QueueKind::Brown)] = tot - g;
            }
        } else {
            let mut left = demand;
            let mut by_cap: Vec<usize> = (0..n_dc).collect();
            by_cap.sort_by(|&a, &b| p.green_caps[b].cmp(&p.green_caps[a]));
            for &i in &by_cap {
                if free(idx(i, j, QueueKind::Green)) {
                    let g = green_room(i).min(left);
                    heur[slot(i, QueueKind::Green)] = g;
                    left -= g;
                }
            }
            let wsum: f64 = (0..n_dc).filter(|&i| free(idx(i, j, QueueKind::Brown))).map(|i| brown_w[i]).sum();
            for i in 0..n_dc {
                if free(idx(i, j, QueueKind::Brown)) {
                    heur[slot(i, QueueKind::Brown)] = left * brown_w[i] / wsum;
                }
            }
        }

        // spread weights within each equality group
        let groups: Vec<Vec<(usize, QueueKind)>> = match &p.dc_totals {
            Some(_) => (0..n_dc)
                .map(|i| QueueKind::ALL.iter().map(|&k| (i, k)).filter(|&(i, k)| free(idx(i, j, k))).collect())
                .collect(),
            None => vec![(0..n_dc)
                .flat_map(|i| QueueKind::ALL.map(|k| (i, k)))
                .filter(|&(i, k)| free(idx(i, j, k)))
                .collect()],
        };
        for group in groups {
            if group.is_empty() {
                continue;
            }
            let weights: Vec<f64> = match rng.as_deref_mut() {
                Some(r) => group.iter().map(|_| r.sample::<f64, _>(Exp1) + 1e-3).collect(),
                None => vec![1.0; group.len()],
            };
            let wsum: f64 = weights.iter().sum();
            let mass: f64 = group.iter().map(|&(i, k)| heur[slot(i, k)]).sum();
            let mix = if rng.is_some() { 0.5 } else { SPREAD };
            for (&(i, k), w) in group.iter().zip(&weights) {
                let h = heur[slot(i, k)];
                x[idx(i, j, k)] = (1.0 - mix) * h + mix * mass * w / wsum;
            }
        }
        if allow_unserved {
            for i in 0..n_dc {
                for k in QueueKind::ALL {
                    x[idx(i, j, k)] *= 0.5;
                }
            }
        }
    }
    for q in &p.queues {
        let lam = x[q.lam];
        x[q.mu] = (1.2 * lam).max(lam + 0.5).max(1.5);
    }
    x
}
