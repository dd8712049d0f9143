//! Two-team combat microworld with sparse rewards: +200 for wiping the
//! enemy team, +10 per enemy death, -5 per ally death. Enemies follow a
//! fixed focus-fire heuristic; allies are the learning agents.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{Environment, Event, StepResult};
use crate::error::{Error, Result};

pub const WIN_REWARD: f64 = 200.0;
pub const ENEMY_DEATH_REWARD: f64 = 10.0;
pub const ALLY_DEATH_PENALTY: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct SkirmishParams {
    pub rows: usize,
    pub cols: usize,
    pub n_allies: usize,
    pub n_enemies: usize,
    pub horizon: usize,
    pub max_health: f64,
    pub ally_damage: f64,
    pub enemy_damage: f64,
    pub ally_range: i64,
    pub enemy_range: i64,
    pub sight_range: i64,
    /// Adds +/- health-delta terms each step (the dense schedule); the
    /// default sparse schedule leaves this off.
    pub dense_reward: bool,
}

impl Default for SkirmishParams {
    fn default() -> Self {
        SkirmishParams {
            rows: 12,
            cols: 12,
            n_allies: 3,
            n_enemies: 3,
            horizon: 60,
            max_health: 45.0,
            ally_damage: 6.0,
            enemy_damage: 4.0,
            ally_range: 3,
            enemy_range: 3,
            sight_range: 5,
            dense_reward: false,
        }
    }
}

#[derive(Debug, Clone)]
struct Unit {
    row: i64,
    col: i64,
    health: f64,
}

impl Unit {
    fn alive(&self) -> bool {
        self.health > 0.0
    }
}

fn chebyshev(a: &Unit, b: &Unit) -> i64 {
    (a.row - b.row).abs().max((a.col - b.col).abs())
}

pub struct SkirmishEnv {
    params: SkirmishParams,
    allies: Vec<Unit>,
    enemies: Vec<Unit>,
    step: usize,
    done: bool,
    won: bool,
    action_names: Vec<String>,
    feature_names: Vec<String>,
}

impl SkirmishEnv {
    pub fn new(params: SkirmishParams) -> Result<Self> {
        if params.n_allies < 1 || params.n_enemies < 1 {
            return Err(Error::Config("each team needs at least one unit".into()));
        }
        if params.rows < 4 || params.cols < 8 {
            return Err(Error::Config(format!(
                "arena {}x{} is too small for two spawn bands",
                params.rows, params.cols
            )));
        }
        if params.rows * 2 < params.n_allies.max(params.n_enemies) {
            return Err(Error::Config("arena too small to place all units".into()));
        }
        let mut action_names: Vec<String> =
            ["noop", "north", "south", "east", "west"].iter().map(|s| s.to_string()).collect();
        for j in 0..params.n_enemies {
            action_names.push(format!("attack_{j}"));
        }
        let feature_names = [
            "health",
            "attack_available",
            "nearest_enemy_dr",
            "nearest_enemy_dc",
            "nearest_enemy_dist",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let mut env = SkirmishEnv {
            allies: Vec::new(),
            enemies: Vec::new(),
            step: 0,
            done: false,
            won: false,
            action_names,
            feature_names,
            params,
        };
        env.reset(0);
        Ok(env)
    }

    fn in_arena(&self, row: i64, col: i64) -> bool {
        row >= 0 && col >= 0 && row < self.params.rows as i64 && col < self.params.cols as i64
    }

    fn nearest_living_ally(&self, from: &Unit) -> Option<usize> {
        (0..self.allies.len())
            .filter(|&i| self.allies[i].alive())
            .min_by_key(|&i| (chebyshev(from, &self.allies[i]), i))
    }

    fn nearest_living_enemy(&self, from: &Unit) -> Option<usize> {
        (0..self.enemies.len())
            .filter(|&j| self.enemies[j].alive())
            .min_by_key(|&j| (chebyshev(from, &self.enemies[j]), j))
    }

    fn total_health(units: &[Unit]) -> f64 {
        units.iter().map(|u| u.health).sum()
    }
}

impl Environment for SkirmishEnv {
    fn n_agents(&self) -> usize {
        self.params.n_allies
    }

    fn n_actions(&self) -> usize {
        5 + self.params.n_enemies
    }

    fn obs_dim(&self) -> usize {
        // own health + own position + 4 features per other unit + id one-hot
        3 + 4 * (self.params.n_allies - 1 + self.params.n_enemies) + self.params.n_allies
    }

    fn state_dim(&self) -> usize {
        4 * (self.params.n_allies + self.params.n_enemies)
    }

    fn action_names(&self) -> &[String] {
        &self.action_names
    }

    fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn reset(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = self.params.rows as i64;
        let cols = self.params.cols as i64;
        let mut taken: Vec<(i64, i64)> = Vec::new();
        let place = |rng: &mut ChaCha8Rng, taken: &mut Vec<(i64, i64)>, c0: i64, c1: i64| {
            loop {
                let cell = (rng.gen_range(0..rows), rng.gen_range(c0..=c1));
                if !taken.contains(&cell) {
                    taken.push(cell);
                    return cell;
                }
            }
        };
        self.allies = (0..self.params.n_allies)
            .map(|_| {
                let (row, col) = place(&mut rng, &mut taken, 1, 2);
                Unit { row, col, health: self.params.max_health }
            })
            .collect();
        self.enemies = (0..self.params.n_enemies)
            .map(|_| {
                let (row, col) = place(&mut rng, &mut taken, cols - 3, cols - 2);
                Unit { row, col, health: self.params.max_health }
            })
            .collect();
        self.step = 0;
        self.done = false;
        self.won = false;
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        if actions.len() != self.params.n_allies {
            return Err(Error::InvalidInput(format!(
                "expected {} actions, got {}",
                self.params.n_allies,
                actions.len()
            )));
        }
        for (i, &a) in actions.iter().enumerate() {
            if a >= self.n_actions() {
                return Err(Error::InvalidInput(format!(
                    "agent {i} action index {a} out of range"
                )));
            }
        }

        let enemy_health_before = Self::total_health(&self.enemies);
        let ally_health_before = Self::total_health(&self.allies);
        let mut events = Vec::new();

        // Ally phase: moves, then attacks against pre-phase enemy state.
        for i in 0..self.allies.len() {
            if !self.allies[i].alive() {
                continue;
            }
            let a = actions[i];
            match a {
                0 => {}
                1..=4 => {
                    let (dr, dc) = match a {
                        1 => (-1, 0),
                        2 => (1, 0),
                        3 => (0, 1),
                        _ => (0, -1),
                    };
                    let nr = self.allies[i].row + dr;
                    let nc = self.allies[i].col + dc;
                    if self.in_arena(nr, nc) {
                        self.allies[i].row = nr;
                        self.allies[i].col = nc;
                    }
                }
                _ => {
                    let j = a - 5;
                    let attacker = self.allies[i].clone();
                    let target = &mut self.enemies[j];
                    if target.alive() && chebyshev(&attacker, target) <= self.params.ally_range {
                        let was_alive = target.alive();
                        target.health = (target.health - self.params.ally_damage).max(0.0);
                        if was_alive && !target.alive() {
                            events.push(Event::EnemyDeath);
                        }
                    } else {
                        events.push(Event::WastedAttack { agent: i });
                    }
                }
            }
        }

        let enemies_wiped = self.enemies.iter().all(|e| !e.alive());
        if enemies_wiped && !self.won {
            self.won = true;
            events.push(Event::Win);
        }

        // Enemy phase: each living enemy holds position until an ally
        // enters its sight, then closes on the nearest living ally and
        // attacks once in range.
        if !enemies_wiped {
            for j in 0..self.enemies.len() {
                if !self.enemies[j].alive() {
                    continue;
                }
                let Some(t) = self.nearest_living_ally(&self.enemies[j]) else {
                    break;
                };
                let dist = chebyshev(&self.enemies[j], &self.allies[t]);
                if dist > self.params.sight_range {
                    continue;
                }
                if dist <= self.params.enemy_range {
                    let target = &mut self.allies[t];
                    let was_alive = target.alive();
                    target.health = (target.health - self.params.enemy_damage).max(0.0);
                    if was_alive && !target.alive() {
                        events.push(Event::AllyDeath);
                    }
                } else {
                    let dr = self.allies[t].row - self.enemies[j].row;
                    let dc = self.allies[t].col - self.enemies[j].col;
                    if dc.abs() >= dr.abs() {
                        self.enemies[j].col += dc.signum();
                    } else {
                        self.enemies[j].row += dr.signum();
                    }
                }
            }
        }

        let enemy_deaths = events.iter().filter(|e| matches!(e, Event::EnemyDeath)).count();
        let ally_deaths = events.iter().filter(|e| matches!(e, Event::AllyDeath)).count();
        let mut reward = WIN_REWARD * (enemies_wiped as u8 as f64)
            + ENEMY_DEATH_REWARD * enemy_deaths as f64
            - ALLY_DEATH_PENALTY * ally_deaths as f64;
        if self.params.dense_reward {
            reward += enemy_health_before - Self::total_health(&self.enemies);
            reward -= ally_health_before - Self::total_health(&self.allies);
        }

        self.step += 1;
        let allies_wiped = self.allies.iter().all(|a| !a.alive());
        self.done = enemies_wiped || allies_wiped || self.step >= self.params.horizon;
        Ok(StepResult { reward, done: self.done, events })
    }

    fn observation(&self, agent: usize) -> Vec<f64> {
        let mut obs = Vec::with_capacity(self.obs_dim());
        let me = &self.allies[agent];
        if me.alive() {
            obs.push(me.health / self.params.max_health);
            obs.push(me.row as f64 / (self.params.rows - 1) as f64);
            obs.push(me.col as f64 / (self.params.cols - 1) as f64);
            let sight = self.params.sight_range;
            let mut push_unit = |u: &Unit, team: f64| {
                if u.alive() && chebyshev(me, u) <= sight {
                    obs.push((u.row - me.row) as f64 / sight as f64);
                    obs.push((u.col - me.col) as f64 / sight as f64);
                    obs.push(u.health / self.params.max_health);
                    obs.push(team);
                } else {
                    obs.extend_from_slice(&[0.0, 0.0, 0.0, 0.0]);
                }
            };
            for (i, u) in self.allies.iter().enumerate() {
                if i != agent {
                    push_unit(u, 1.0);
                }
            }
            for u in &self.enemies {
                push_unit(u, -1.0);
            }
        } else {
            obs.extend(std::iter::repeat(0.0).take(3 + 4 * (self.params.n_allies - 1 + self.params.n_enemies)));
        }
        for i in 0..self.params.n_allies {
            obs.push(if i == agent { 1.0 } else { 0.0 });
        }
        obs
    }

    fn global_state(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.state_dim());
        let rd = (self.params.rows - 1) as f64;
        let cd = (self.params.cols - 1) as f64;
        for u in self.allies.iter().chain(self.enemies.iter()) {
            s.push(u.row as f64 / rd);
            s.push(u.col as f64 / cd);
            s.push(u.health / self.params.max_health);
            s.push(if u.alive() { 1.0 } else { 0.0 });
        }
        s
    }

    fn available_actions(&self, agent: usize) -> Vec<bool> {
        let mut avail = vec![false; self.n_actions()];
        avail[0] = true;
        let me = &self.allies[agent];
        if !me.alive() {
            return avail;
        }
        avail[1] = self.in_arena(me.row - 1, me.col);
        avail[2] = self.in_arena(me.row + 1, me.col);
        avail[3] = self.in_arena(me.row, me.col + 1);
        avail[4] = self.in_arena(me.row, me.col - 1);
        for (j, enemy) in self.enemies.iter().enumerate() {
            avail[5 + j] = enemy.alive() && chebyshev(me, enemy) <= self.params.ally_range;
        }
        avail
    }

    fn features(&self, agent: usize) -> Vec<f64> {
        let me = &self.allies[agent];
        let attack_available = self
            .enemies
            .iter()
            .any(|e| me.alive() && e.alive() && chebyshev(me, e) <= self.params.ally_range);
        let (dr, dc, dist) = match self.nearest_living_enemy(me) {
            Some(j) if me.alive() => {
                let e = &self.enemies[j];
                (
                    (e.row - me.row) as f64,
                    (e.col - me.col) as f64,
                    chebyshev(me, e) as f64,
                )
            }
            _ => (0.0, 0.0, (self.params.sight_range + 1) as f64),
        };
        vec![
            me.health,
            if attack_available { 1.0 } else { 0.0 },
            dr,
            dc,
            dist,
        ]
    }

    fn won(&self) -> bool {
        self.won
    }

    fn step_count(&self) -> usize {
        self.step
    }
}
