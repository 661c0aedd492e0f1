use std::cmp::Reverse;
use std::collections::BinaryHeap;

use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};

use crate::allocator::downlink::{downlink_reward, DownlinkEval};
use crate::allocator::quantize::ActionGroupSet;
use crate::allocator::uplink::{uplink_power_closed_form, uplink_reward, UplinkEval};
use crate::error::Result;
use crate::net_model::{ApConfig, Association, ChannelRealization, RadioParams, UserState};
use crate::sdp::build_instance;

/// Order-preserving quantisation: the rounded vector, then one vector per
/// coordinate ranked by closeness to 0.5, thresholded at that coordinate.
pub fn baseline_order_preserving(relaxed: &[f64], count: usize) -> ActionGroupSet {
    let d = relaxed.len();
    let mut groups = Vec::with_capacity(count.min(d + 1));
    if count == 0 {
        return ActionGroupSet {
            groups,
            thresholds: Vec::new(),
        };
    }
    groups.push(relaxed.iter().map(|&a| a > 0.5).collect());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| (relaxed[a] - 0.5).abs().total_cmp(&(relaxed[b] - 0.5).abs()));
    for &r in order.iter().take(count - 1) {
        let thr = relaxed[r];
        let g = if thr <= 0.5 {
            relaxed.iter().map(|&a| a >= thr).collect()
        } else {
            relaxed.iter().map(|&a| a > thr).collect()
        };
        groups.push(g);
    }
    ActionGroupSet {
        groups,
        thresholds: Vec::new(),
    }
}

/// The `count` binary vectors closest to `relaxed` in Euclidean distance.
/// Flipping coordinate `i` away from its rounding costs `|2ā_i − 1|` in
/// squared distance, so these are the `count` smallest subset sums of the
/// flip costs, enumerated with a heap.
pub fn baseline_knn(relaxed: &[f64], count: usize) -> ActionGroupSet {
    let base: Vec<bool> = relaxed.iter().map(|&a| a > 0.5).collect();
    let mut order: Vec<usize> = (0..relaxed.len()).collect();
    let cost = |i: usize| (2.0 * relaxed[i] - 1.0).abs();
    order.sort_by(|&a, &b| cost(a).total_cmp(&cost(b)));
    let costs: Vec<f64> = order.iter().map(|&i| cost(i)).collect();

    let mut groups = Vec::with_capacity(count);
    if count == 0 {
        return ActionGroupSet {
            groups,
            thresholds: Vec::new(),
        };
    }
    groups.push(base.clone());
    // Heap entries: (sum, last sorted index, flipped sorted indices).
    let mut heap: BinaryHeap<Reverse<(OrderedFloat<f64>, usize, Vec<usize>)>> = BinaryHeap::new();
    if !costs.is_empty() {
        heap.push(Reverse((OrderedFloat(costs[0]), 0, vec![0])));
    }
    while groups.len() < count {
        let Some(Reverse((OrderedFloat(sum), last, set))) = heap.pop() else {
            break;
        };
        let mut g = base.clone();
        for &s in &set {
            g[order[s]] = !g[order[s]];
        }
        groups.push(g);
        if last + 1 < costs.len() {
            let mut extend = set.clone();
            extend.push(last + 1);
            heap.push(Reverse((OrderedFloat(sum + costs[last + 1]), last + 1, extend)));
            let mut swap = set;
            *swap.last_mut().expect("non-empty") = last + 1;
            heap.push(Reverse((
                OrderedFloat(sum - costs[last] + costs[last + 1]),
                last + 1,
                swap,
            )));
        }
    }
    ActionGroupSet {
        groups,
        thresholds: Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyUplink {
    pub association: Association,
    pub eval: UplinkEval,
}

/// Users in ascending order of their cheapest required power, each placed
/// on the cheapest AP with spare decoding capacity whose power fits the HMD
/// budget.
pub fn baseline_greedy_uplink(
    channels: &ChannelRealization,
    users: &[UserState],
    radio: &RadioParams,
    capacity: usize,
) -> Result<GreedyUplink> {
    let n = channels.num_users();
    let aps = channels.num_aps();
    let need = |i: usize, j: usize| radio.ul_required_power(channels.ul_pathloss[i][j], n);
    let mut prefs: Vec<(usize, Vec<usize>)> = (0..n)
        .map(|i| {
            let mut js: Vec<usize> = (0..aps).collect();
            js.sort_by(|&a, &b| need(i, a).total_cmp(&need(i, b)));
            (i, js)
        })
        .collect();
    prefs.sort_by(|a, b| {
        let pa = a.1.first().map_or(f64::INFINITY, |&j| need(a.0, j));
        let pb = b.1.first().map_or(f64::INFINITY, |&j| need(b.0, j));
        pa.total_cmp(&pb).then(a.0.cmp(&b.0))
    });
    let mut assoc = Association::empty(n, aps);
    for (i, js) in prefs {
        for j in js {
            if need(i, j) > users[i].tx_budget() {
                break;
            }
            if assoc.ap_load(j) < capacity {
                assoc.set(i, j, true);
                break;
            }
        }
    }
    let powers = uplink_power_closed_form(&assoc, channels, users, radio);
    let eval = uplink_reward(&assoc, &powers, channels, users, radio)?;
    Ok(GreedyUplink {
        association: assoc,
        eval,
    })
}

/// Users admitted in ascending order of their stand-alone beamforming
/// power, re-solving with each addition; admission stops at the first user
/// that makes the set unservable.
pub fn baseline_greedy_downlink(
    channels: &ChannelRealization,
    radio: &RadioParams,
    aps: &[ApConfig],
    candidates: usize,
    seed: u64,
) -> Result<DownlinkEval> {
    let n = channels.num_users();
    let all = vec![true; n];
    let inst = build_instance(&all, channels, radio, aps)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        inst.single_user_power(a)
            .total_cmp(&inst.single_user_power(b))
            .then(a.cmp(&b))
    });
    let mut serve = vec![false; n];
    let mut best = downlink_reward(&serve, channels, radio, aps, candidates, seed)?;
    for (step, i) in order.into_iter().enumerate() {
        serve[i] = true;
        let e = downlink_reward(
            &serve,
            channels,
            radio,
            aps,
            candidates,
            seed ^ ((step as u64 + 1) << 32),
        )?;
        if !e.feasible() {
            break;
        }
        best = e;
    }
    Ok(best)
}
