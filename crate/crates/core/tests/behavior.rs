use humanoid_core::behavior::{
    soccer_hierarchy, ActuatorOutputs, Behavior, Contribution, Layer, SensorView, SoccerParams, State, StateController,
    Transition,
};
use humanoid_core::geometry::Pose2;
use humanoid_core::messages::{FallState, GaitCommand, GameInfo, GamePhase, MotionStatus, ObstacleObs, PoseBelief};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::{Arc, RwLock};

struct Fixed {
    name: String,
    raw: f64,
}

impl Behavior for Fixed {
    fn name(&self) -> &str {
        &self.name
    }
    fn activation(&mut self, _: &SensorView) -> f64 {
        self.raw
    }
    fn execute(&mut self, _: &SensorView, _: f64) -> Contribution {
        Contribution::default()
    }
}

fn layer(raws: &[f64], edges: &[(usize, usize)]) -> Layer {
    let names: Vec<String> = (0..raws.len()).map(|i| format!("b{i}")).collect();
    let behaviors: Vec<Box<dyn Behavior>> = raws
        .iter()
        .zip(&names)
        .map(|(&raw, name)| {
            Box::new(Fixed {
                name: name.clone(),
                raw,
            }) as Box<dyn Behavior>
        })
        .collect();
    let pairs: Vec<(&str, &str)> = edges
        .iter()
        .map(|&(a, b)| (names[a].as_str(), names[b].as_str()))
        .collect();
    Layer::new("t", behaviors, &pairs).unwrap()
}

/// Random DAG: edges only from lower to higher rank in a shuffled order.
fn dag() -> impl Strategy<Value = (Vec<f64>, Vec<(usize, usize)>)> {
    (1usize..8).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0f64..=1.0, n),
            Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
            prop::collection::vec(any::<bool>(), n * n),
        )
            .prop_map(move |(raws, rank, bits)| {
                let mut edges = Vec::new();
                for a in 0..n {
                    for b in a + 1..n {
                        if bits[a * n + b] {
                            edges.push((rank[a], rank[b]));
                        }
                    }
                }
                (raws, edges)
            })
    })
}

proptest! {
    #[test]
    fn effective_never_exceeds_raw((raws, edges) in dag()) {
        let eff = layer(&raws, &edges).resolve(&raws);
        for (e, r) in eff.iter().zip(&raws) {
            prop_assert!(*e >= 0.0 && e <= r);
        }
        // behaviors nobody inhibits keep their raw activation
        for (i, r) in raws.iter().enumerate() {
            if !edges.iter().any(|&(_, b)| b == i) {
                prop_assert_eq!(eff[i], *r);
            }
        }
    }
}

#[test]
fn inhibition_chains_exhaustive() {
    for n in 1..=8 {
        let edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
        for bits in 0u32..(1 << n) {
            let raws: Vec<f64> = (0..n).map(|i| (bits >> i & 1) as f64).collect();
            let eff = layer(&raws, &edges).resolve(&raws);
            let mut expect = Vec::with_capacity(n);
            for i in 0..n {
                let above: f64 = if i == 0 { 0.0 } else { expect[i - 1] };
                expect.push(raws[i] * (1.0 - above));
            }
            assert_eq!(eff, expect, "chain of {n}, raws {raws:?}");
        }
        // all fully active: 1, 0, 1, 0, ...
        let eff = layer(&vec![1.0; n], &edges).resolve(&vec![1.0; n]);
        let alternating: Vec<f64> = (0..n).map(|i| ((i + 1) % 2) as f64).collect();
        assert_eq!(eff, alternating);
    }
}

fn random_view(rng: &mut ChaCha8Rng, time: f64) -> SensorView {
    let phase = match rng.random_range(0..5) {
        0 => GamePhase::Initial,
        1 => GamePhase::Ready,
        2 => GamePhase::Set,
        3 => GamePhase::Playing,
        _ => GamePhase::Finished,
    };
    let fall = if rng.random_bool(0.1) {
        FallState::Relaxed
    } else {
        FallState::Ok
    };
    SensorView {
        time,
        ball: rng
            .random_bool(0.8)
            .then(|| [rng.random_range(-0.5..3.0), rng.random_range(-1.0..1.0)]),
        ball_age: rng.random_range(0.0..0.5),
        pose: rng.random_bool(0.7).then(|| PoseBelief {
            pose: Pose2::new(
                rng.random_range(-4.0..4.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            ),
            confidence: rng.random(),
            covariance: [0.0; 9],
        }),
        game: GameInfo {
            phase,
            penalized: rng.random_bool(0.2),
            ..GameInfo::default()
        },
        obstacles: (0..rng.random_range(0..3))
            .map(|_| ObstacleObs {
                position: [rng.random_range(0.2..2.0), rng.random_range(-1.0..1.0)],
                width: 0.2,
            })
            .collect(),
        motion: MotionStatus {
            fall,
            playing: rng.random_bool(0.1).then(|| "kick".to_string()),
            ..MotionStatus::default()
        },
        goal: [4.5, 0.0],
        ..SensorView::default()
    }
}

fn hierarchy() -> humanoid_core::behavior::Hierarchy {
    soccer_hierarchy(Arc::new(RwLock::new(SoccerParams::default()))).unwrap()
}

#[test]
fn identical_views_give_identical_outputs() {
    let run = || {
        let mut h = hierarchy();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        (0..2000)
            .map(|k| h.step(&random_view(&mut rng, k as f64 * 0.04)))
            .collect::<Vec<(ActuatorOutputs, _)>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn outside_play_the_robot_halts_and_requests_nothing() {
    let mut h = hierarchy();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut checked = 0;
    for k in 0..5000 {
        let view = random_view(&mut rng, k as f64 * 0.04);
        let (out, _) = h.step(&view);
        if view.game.phase != GamePhase::Playing || view.game.penalized {
            checked += 1;
            let gait = out.gait.unwrap_or_default();
            assert_eq!(gait, GaitCommand::default(), "view {view:?}");
            assert_eq!(out.motion, None, "view {view:?}");
        }
    }
    assert!(checked > 3000);
}

type Trace = Vec<(char, usize)>;

/// Picks transitions from a seeded generator and logs enter/exit.
struct Scripted {
    id: usize,
    n: usize,
    rng: ChaCha8Rng,
}

impl State<Trace> for Scripted {
    fn enter(&mut self, log: &mut Trace) {
        log.push(('+', self.id));
    }
    fn step(&mut self, _: &mut Trace) -> Transition {
        match self.rng.random_range(0..20) {
            0..=11 => Transition::Stay,
            12..=15 => Transition::Advance,
            16..=18 => Transition::Jump(format!("s{}", self.rng.random_range(0..self.n))),
            _ => Transition::Terminate,
        }
    }
    fn exit(&mut self, log: &mut Trace) {
        log.push(('-', self.id));
    }
    fn period(&self) -> u32 {
        1 + (self.id as u32 % 3)
    }
}

#[test]
fn every_entered_state_exits_exactly_once() {
    for seed in 0..300u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..6);
        let states = (0..n)
            .map(|id| {
                let s: Box<dyn State<Trace>> = Box::new(Scripted {
                    id,
                    n,
                    rng: ChaCha8Rng::seed_from_u64(seed * 31 + id as u64),
                });
                (format!("s{id}"), s)
            })
            .collect();
        let plan: Vec<String> = (0..rng.random_range(1..8))
            .map(|_| format!("s{}", rng.random_range(0..n)))
            .collect();
        let plan: Vec<&str> = plan.iter().map(String::as_str).collect();
        let mut sc = StateController::new(states, &plan).unwrap();
        let mut log = Trace::new();
        for _ in 0..200 {
            sc.step(&mut log).unwrap();
        }
        // entries and exits strictly alternate, each exit matching the entry before it
        let mut open: Option<usize> = None;
        for &(kind, id) in &log {
            match kind {
                '+' => {
                    assert!(
                        open.is_none(),
                        "seed {seed}: entered {id} while another state was active"
                    );
                    open = Some(id);
                }
                _ => {
                    assert_eq!(open, Some(id), "seed {seed}: exit without matching entry");
                    open = None;
                }
            }
        }
        assert_eq!(
            open.is_some(),
            sc.active().is_some() && !sc.is_finished(),
            "seed {seed}"
        );
    }
}
