//! The Tiger problem with uncertain tiger-position, hearing-accuracy and
//! tiger-penalty parameters.
//!
//! Opening a door re-draws the tiger's position, so a demonstration is one
//! continuous (non-episodic) sequence. The observation after opening a door
//! carries no information.

use super::expr::ParamExpr;
use super::prior::Prior;
use super::template::{ParamSpec, ParametricTemplate};
use crate::pomdp::Labels;

pub const TIGER_LEFT: usize = 0;
pub const TIGER_RIGHT: usize = 1;
pub const LISTEN: usize = 0;
pub const OPEN_LEFT: usize = 1;
pub const OPEN_RIGHT: usize = 2;
pub const HEAR_LEFT: usize = 0;
pub const HEAR_RIGHT: usize = 1;

/// `(p_i, p_l, p_r, r_t)` of the simulated environment.
pub const TIGER_TRUE_THETA: [f64; 4] = [0.6, 0.85, 0.85, -100.0];

pub fn tiger_template() -> ParametricTemplate {
    let (p_i, p_l, p_r, r_t) = (0, 1, 2, 3);
    let c = ParamExpr::constant;
    let p = ParamExpr::param;
    let not = ParamExpr::complement;

    let labels = Labels {
        states: vec!["tiger-left".into(), "tiger-right".into()],
        actions: vec!["listen".into(), "open-left".into(), "open-right".into()],
        observations: vec!["hear-left".into(), "hear-right".into()],
    };
    let params = vec![
        ParamSpec { name: "p_i".into(), prior: Prior::beta(3.0, 3.0) },
        ParamSpec { name: "p_l".into(), prior: Prior::beta(5.0, 3.0) },
        ParamSpec { name: "p_r".into(), prior: Prior::beta(5.0, 3.0) },
        ParamSpec { name: "r_t".into(), prior: Prior::normal(-50.0, 50.0) },
    ];

    let mut transition = Vec::with_capacity(12);
    for s in [TIGER_LEFT, TIGER_RIGHT] {
        // listen
        transition.extend([c(if s == TIGER_LEFT { 1.0 } else { 0.0 }), c(if s == TIGER_LEFT { 0.0 } else { 1.0 })]);
        // open-left, open-right
        for _ in 0..2 {
            transition.extend([p(p_i), not(p_i)]);
        }
    }

    let mut observation = vec![p(p_l), not(p_l), not(p_r), p(p_r)];
    observation.extend(std::iter::repeat_n(c(0.5), 8));

    let initial = vec![p(p_i), not(p_i)];

    let reward = vec![
        // tiger-left: listen, open-left, open-right
        c(-1.0),
        p(r_t),
        c(10.0),
        // tiger-right
        c(-1.0),
        c(10.0),
        p(r_t),
    ];

    ParametricTemplate::new(labels, 0.9, params, transition, observation, initial, reward)
        .expect("tiger template is well-formed")
}
