//! Goal selection for simulated agents.

use cfnav_core::{AgentState, GoalId, GoalSet};
use rand::Rng;

use crate::scenario::{Behavior, ScriptStep};

#[derive(Clone, Debug)]
pub enum Controller {
    Scripted { sequence: Vec<ScriptStep> },
    Planner { goals: Vec<GoalId>, index: usize, cycle: bool },
    RandomSwitcher { goals: Vec<GoalId>, current: Option<GoalId>, next_switch: f64, min: f64, max: f64 },
}

impl Controller {
    pub fn new(behavior: &Behavior, all_goals: &GoalSet) -> Self {
        match behavior {
            Behavior::Scripted { sequence } => Controller::Scripted { sequence: sequence.clone() },
            Behavior::Planner { goals, cycle } => Controller::Planner { goals: goals.iter().map(|g| GoalId(*g)).collect(), index: 0, cycle: *cycle },
            Behavior::RandomSwitcher { goals, min_interval, max_interval } => Controller::RandomSwitcher {
                goals: match goals {
                    Some(gs) => gs.iter().map(|g| GoalId(*g)).collect(),
                    None => all_goals.ids().collect(),
                },
                current: None,
                next_switch: 0.0,
                min: *min_interval,
                max: *max_interval,
            },
        }
    }

    /// The goal the agent is heading for at `time`, advancing internal state
    /// on arrival or when a switch is due.
    pub fn goal<R: Rng + ?Sized>(&mut self, agent: &AgentState, goals: &GoalSet, time: f64, arrival: f64, rng: &mut R) -> GoalId {
        let reached = |g: GoalId| goals.get(g).is_some_and(|goal| goal.position.distance(agent.position) <= arrival);
        match self {
            Controller::Scripted { sequence } => {
                let k = sequence.iter().rposition(|s| s.at <= time + 1e-9).unwrap_or(0);
                GoalId(sequence[k].goal)
            }
            Controller::Planner { goals: list, index, cycle } => {
                if reached(list[*index]) {
                    if *index + 1 < list.len() {
                        *index += 1;
                    } else if *cycle {
                        *index = 0;
                    }
                }
                list[*index]
            }
            Controller::RandomSwitcher { goals: list, current, next_switch, min, max } => {
                let due = match current {
                    None => true,
                    Some(g) => time >= *next_switch - 1e-9 || reached(*g),
                };
                if due {
                    let options: Vec<GoalId> = list.iter().copied().filter(|g| Some(*g) != *current && !reached(*g)).collect();
                    let pick = if options.is_empty() { list[rng.random_range(0..list.len())] } else { options[rng.random_range(0..options.len())] };
                    *current = Some(pick);
                    *next_switch = time + rng.random_range(*min..=*max);
                }
                current.expect("set above")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cfnav_core::{AgentId, DVec2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn goals() -> GoalSet {
        GoalSet::from_points(&[DVec2::new(0.0, 0.0), DVec2::new(4.0, 0.0), DVec2::new(4.0, 4.0)]).unwrap()
    }

    fn at(x: f64, y: f64) -> AgentState {
        AgentState::new(AgentId(0), DVec2::new(x, y), 0.3, 1.0, 1.5, 2.0)
    }

    #[test]
    fn planner_cycles_on_arrival() {
        let g = goals();
        let mut c = Controller::new(&Behavior::Planner { goals: vec![1, 2], cycle: true }, &g);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(c.goal(&at(2.0, 0.0), &g, 0.0, 0.3, &mut rng), GoalId(1));
        assert_eq!(c.goal(&at(4.0, 0.1), &g, 0.1, 0.3, &mut rng), GoalId(2));
        assert_eq!(c.goal(&at(4.0, 4.0), &g, 0.2, 0.3, &mut rng), GoalId(1));
    }

    #[test]
    fn scripted_follows_times() {
        let g = goals();
        let seq = vec![ScriptStep { goal: 2, at: 0.0 }, ScriptStep { goal: 0, at: 3.0 }];
        let mut c = Controller::new(&Behavior::Scripted { sequence: seq }, &g);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(c.goal(&at(1.0, 1.0), &g, 2.9, 0.3, &mut rng), GoalId(2));
        assert_eq!(c.goal(&at(1.0, 1.0), &g, 3.0, 0.3, &mut rng), GoalId(0));
    }

    #[test]
    fn switcher_changes_goal() {
        let g = goals();
        let mut c = Controller::new(&Behavior::RandomSwitcher { goals: None, min_interval: 1.0, max_interval: 1.0 }, &g);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let first = c.goal(&at(2.0, 2.0), &g, 0.0, 0.3, &mut rng);
        assert_eq!(c.goal(&at(2.0, 2.0), &g, 0.5, 0.3, &mut rng), first);
        assert_ne!(c.goal(&at(2.0, 2.0), &g, 1.0, 0.3, &mut rng), first);
    }
}
