//! Workers finish their share of the rollout, the coordinator promotes idle
//! ones into a training session, and the drafter trains until preempted.

use tailspec::drafter::{AdaptiveDrafter, DrafterConfig};
use tailspec::rng::RngStream;
use tailspec::spot::{
    spot_train_loop, AsyncCheckpointer, Coordinator, DataBuffer, IterationBudget, SpotTrainConfig, WorkerState,
};
use tailspec::target::{generate_autoregressive, MarkovTargetModel};

fn main() {
    let mut coordinator = Coordinator::new((0..4).map(|w| (w, w / 2)), 2).unwrap();
    for w in [1, 0, 3] {
        let actions = coordinator.transition(w, WorkerState::Idle).unwrap();
        println!("worker {w} idle -> {actions:?}");
    }
    let session = coordinator.session().unwrap().clone();
    for &m in &session.members {
        coordinator.transition(m, WorkerState::Training).unwrap();
    }

    let target = MarkovTargetModel::uniform(8, 1).unwrap();
    let root = RngStream::new(6, 0);
    let mut buffer = DataBuffer::new(1);
    buffer.insert(0, (0..64).map(|i| generate_autoregressive(&target, &[], 300, &mut root.substream(i))));
    let mut drafter = AdaptiveDrafter::new(DrafterConfig {
        vocab: 8,
        order: 1,
        smoothing_alpha: 0.1,
        count_cap: None,
    })
    .unwrap();
    let config = SpotTrainConfig {
        token_budget: 1200,
        pack_capacity: 600,
        checkpoint_every: 4,
        ..SpotTrainConfig::default()
    };
    let out = spot_train_loop(
        &session,
        &mut drafter,
        &buffer,
        &config,
        &IterationBudget::new(10),
        &mut AsyncCheckpointer::in_memory(),
    )
    .unwrap();
    println!("{}", serde_json::to_string(&out.log).unwrap());

    let actions = coordinator.rollout_complete();
    println!("rollout done -> {actions:?}");
    print!("{}", coordinator.log_json_lines());
}
