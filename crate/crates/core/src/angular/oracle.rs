//! Clebsch–Gordan coefficients checked against coupled states built by
//! repeated lowering from the stretched state, with Gram–Schmidt for the top
//! state of each smaller j (Condon–Shortley: ⟨j1 j1; j2 j−j1|j j⟩ > 0).

use std::collections::HashMap;

use crate::angular::{clebsch_gordan, HalfInt};

/// Amplitudes over the product basis, indexed by (twice m1, twice m2).
type State = HashMap<(i32, i32), f64>;

fn lowering_factor(tj: i32, tm: i32) -> f64 {
    // J−|j m⟩ = sqrt((j+m)(j−m+1)) |j m−1⟩, in twice units.
    (((tj + tm) as f64 / 2.0) * ((tj - tm) as f64 / 2.0 + 1.0)).sqrt()
}

fn lower(state: &State, tj1: i32, tj2: i32) -> State {
    let mut out = State::new();
    for (&(a, b), &c) in state {
        if a > -tj1 {
            *out.entry((a - 2, b)).or_default() += c * lowering_factor(tj1, a);
        }
        if b > -tj2 {
            *out.entry((a, b - 2)).or_default() += c * lowering_factor(tj2, b);
        }
    }
    out
}

fn dot(x: &State, y: &State) -> f64 {
    x.iter().map(|(k, a)| a * y.get(k).copied().unwrap_or(0.0)).sum()
}

fn scale(x: &mut State, f: f64) {
    x.values_mut().for_each(|a| *a *= f);
}

/// All coupled states |j m⟩ of j1 ⊗ j2, keyed by (twice j, twice m).
fn coupled_states(tj1: i32, tj2: i32) -> HashMap<(i32, i32), State> {
    let mut states: HashMap<(i32, i32), State> = HashMap::new();
    let mut tj = tj1 + tj2;
    while tj >= (tj1 - tj2).abs() {
        // Top state: the part of the M = j subspace orthogonal to larger j.
        let mut top = State::new();
        for ta in (-tj1..=tj1).step_by(2) {
            let tb = tj - ta;
            if tb.abs() <= tj2 {
                let mut v = State::from([((ta, tb), 1.0)]);
                for (&(tk, tm), s) in &states {
                    if tm == tj && tk > tj {
                        let c = dot(&v, s);
                        for (k, a) in s {
                            *v.entry(*k).or_default() -= c * a;
                        }
                    }
                }
                if dot(&v, &v) > 1e-20 {
                    top = v;
                    break;
                }
            }
        }
        let norm = dot(&top, &top).sqrt();
        scale(&mut top, 1.0 / norm);
        let lead = (-tj1..=tj1)
            .rev()
            .step_by(2)
            .find_map(|ta| top.get(&(ta, tj - ta)).copied().filter(|a| a.abs() > 1e-12))
            .unwrap();
        if lead < 0.0 {
            scale(&mut top, -1.0);
        }
        let mut tm = tj;
        let mut current = top;
        loop {
            states.insert((tj, tm), current.clone());
            if tm == -tj {
                break;
            }
            current = lower(&current, tj1, tj2);
            scale(&mut current, 1.0 / lowering_factor(tj, tm));
            tm -= 2;
        }
        tj -= 2;
    }
    states
}

#[test]
fn coefficients_match_lowering_construction() {
    let mut checked = 0;
    for tj1 in 0..=6 {
        for tj2 in 0..=4 {
            let states = coupled_states(tj1, tj2);
            for (&(tj, tm), state) in &states {
                for ta in (-tj1..=tj1).step_by(2) {
                    for tb in (-tj2..=tj2).step_by(2) {
                        let expected = state.get(&(ta, tb)).copied().unwrap_or(0.0);
                        let h = HalfInt::from_twice;
                        let got = clebsch_gordan(h(tj1), h(ta), h(tj2), h(tb), h(tj), h(tm)).unwrap();
                        assert!(
                            (got - expected).abs() < 1e-12,
                            "<{tj1}/2 {ta}/2; {tj2}/2 {tb}/2 | {tj}/2 {tm}/2>: {got} vs {expected}"
                        );
                        checked += 1;
                    }
                }
            }
        }
    }
    assert!(checked > 1000);
}

#[test]
fn oracle_is_orthonormal() {
    let states = coupled_states(3, 2);
    let keys: Vec<_> = states.keys().copied().collect();
    for a in &keys {
        for b in &keys {
            let expected = if a == b { 1.0 } else { 0.0 };
            assert!((dot(&states[a], &states[b]) - expected).abs() < 1e-12);
        }
    }
}
