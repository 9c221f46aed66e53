//! `chat`: a line-oriented REPL against a trained policy.
//!
//! The user speaks dialog acts, one per line, in the same
//! `intent [domain [slot[=value]]]` grammar the rest of the system
//! uses. The policy replies with the dialog acts of its greedy action.
//! Meta commands inspect the session: `state` prints the tracked dialog
//! state, `q` the top-5 action values, `help` the syntax, and `quit`
//! leaves without ending the dialog. Unparseable lines get a usage hint
//! and change nothing. Saying `bye` ends the session with a summary.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;

use clap::Args;
use dqfd_dialog::acts::{DialogAct, Intent};
use dqfd_dialog::agent::greedy_action;
use dqfd_dialog::qnet::{load_checkpoint, QNet};
use dqfd_dialog::sim::resolve_action;
use dqfd_dialog::state::{track_state, DialogState};
use dqfd_dialog::world::World;

use crate::error::{runtime, usage, CliError};
use crate::worldio::{world_for_checkpoint, WorldSources};

#[derive(Debug, Args)]
pub struct ChatArgs {
    /// Checkpoint whose policy answers the session.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Ontology TOML (default: discovered next to the checkpoint, else built-in).
    #[arg(long, value_name = "FILE")]
    pub ontology: Option<PathBuf>,
    /// Entity database JSONL (default: discovered next to the checkpoint).
    #[arg(long, value_name = "FILE")]
    pub db: Option<PathBuf>,
    /// Seed for the generated entity database fallback.
    #[arg(long, default_value_t = 5)]
    pub db_seed: u64,
}

pub fn cmd_chat(args: &ChatArgs) -> Result<(), CliError> {
    if !args.checkpoint.is_file() {
        return Err(usage(format!(
            "checkpoint `{}` does not exist",
            args.checkpoint.display()
        )));
    }
    let file = File::open(&args.checkpoint).map_err(runtime)?;
    let (net, _) = load_checkpoint(BufReader::new(file)).map_err(runtime)?;
    let loaded = world_for_checkpoint(
        &args.checkpoint,
        &WorldSources {
            ontology: args.ontology.clone(),
            db: args.db.clone(),
            db_seed: args.db_seed,
        },
    )?;
    if net.input != loaded.world.feature_len() || net.actions != loaded.world.action_count() {
        return Err(usage(format!(
            "checkpoint expects {}-dim states over {} actions but the world provides {} over {}",
            net.input,
            net.actions,
            loaded.world.feature_len(),
            loaded.world.action_count()
        )));
    }

    println!("{}", loaded.describe);
    println!("speak one dialog act per line: intent [domain [slot[=value]]]");
    println!("e.g. `inform hotel area=north`, `request hotel phone`, `bye`");
    println!("meta: `state`, `q`, `help`, `quit`");

    let stdin = std::io::stdin();
    let mut session = Session::new(net, &loaded.world);
    prompt()?;
    for line in stdin.lock().lines() {
        let line = line.map_err(runtime)?;
        if !session.handle(line.trim(), &loaded.world) {
            return Ok(());
        }
        prompt()?;
    }
    println!("(end of input)");
    Ok(())
}

fn prompt() -> Result<(), CliError> {
    print!("you> ");
    std::io::stdout().flush().map_err(runtime)
}

fn print_help() {
    println!("one dialog act per line: intent [domain [slot[=value]]]");
    println!("  inform <domain> <slot>=<value>   state a constraint or booking detail");
    println!("  request <domain> <slot>          ask for an attribute");
    println!("  book <domain> / offerbooking / nooffer / greet / reqmore / bye");
    println!("meta commands: `state` (tracked dialog state), `q` (top-5 action values),");
    println!("`help`, `quit` (leave without ending the dialog); `bye` ends it with a summary");
}

struct Session {
    net: QNet,
    state: DialogState,
}

impl Session {
    fn new(net: QNet, world: &World) -> Session {
        Session { net, state: DialogState::initial(&world.ontology, &world.db) }
    }

    /// Processes one input line; returns false when the session ends.
    fn handle(&mut self, line: &str, world: &World) -> bool {
        match line {
            "" => true,
            "quit" => {
                println!("(session left open)");
                false
            }
            "help" => {
                print_help();
                true
            }
            "state" => {
                self.print_state();
                true
            }
            "q" => {
                self.print_q(world);
                true
            }
            _ => match line.parse::<DialogAct>() {
                Err(e) => {
                    println!(
                        "could not read `{line}`: {e}. syntax: intent [domain [slot[=value]]] \
                         (try `help`)"
                    );
                    true
                }
                Ok(act) => self.exchange(act, world),
            },
        }
    }

    /// One user act and the policy's reply; returns false when either
    /// side says bye or the turn cap is reached.
    fn exchange(&mut self, act: DialogAct, world: &World) -> bool {
        let user_said_bye = act.intent == Intent::Bye;
        self.state = track_state(self.state.clone(), &[act], &world.ontology, &world.db);
        if user_said_bye {
            println!("system> bye");
            self.print_summary();
            return false;
        }

        let action = self.greedy_action_index(world);
        let template = world.actions.get(action).expect("greedy index in range");
        let sys_acts =
            resolve_action(template, &mut self.state, &world.ontology, &world.db);
        for sys_act in &sys_acts {
            println!("system> {sys_act}");
        }
        // There is no simulated user to accept a booking here, so a
        // `book` action succeeds exactly when the booking info the
        // session collected is complete.
        if template.intent == Intent::Book {
            self.apply_chat_booking(template.domain.as_deref().unwrap_or(""), world);
        }
        self.state.turn += 1;

        if template.intent == Intent::Bye {
            self.print_summary();
            return false;
        }
        if self.state.turn >= world.env.t_max {
            println!("(turn limit reached)");
            self.print_summary();
            return false;
        }
        true
    }

    fn apply_chat_booking(&mut self, domain: &str, world: &World) {
        let Some(spec) = world.ontology.domain(domain) else {
            return;
        };
        let Some(ds) = self.state.domains.get_mut(domain) else {
            return;
        };
        let complete = spec.booking.iter().all(|b| ds.booking_info.contains_key(&b.slot));
        if complete && ds.offered.is_some() {
            ds.booked = true;
            println!("(booking for {domain} confirmed)");
        } else {
            println!("(booking for {domain} not confirmed: details incomplete)");
        }
    }

    fn greedy_action_index(&self, world: &World) -> usize {
        greedy_action(&self.net.forward(&world.featurizer.featurize(&self.state)))
    }

    fn print_state(&self) {
        println!("turn {}", self.state.turn);
        let mut any = false;
        for (name, ds) in &self.state.domains {
            if !ds.is_active() {
                continue;
            }
            any = true;
            let constraints: Vec<String> =
                ds.constraints.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let booking: Vec<String> =
                ds.booking_info.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let requested: Vec<&str> = ds.requested.iter().map(String::as_str).collect();
            println!(
                "{name}: constraints [{}], booking [{}], open requests [{}]",
                constraints.join(", "),
                booking.join(", "),
                requested.join(", ")
            );
            let count = ds
                .db_count
                .map(|c| c.to_string())
                .unwrap_or_else(|| "-".to_string());
            println!(
                "  matches {count}, offered {}, booked {}",
                ds.offered.as_deref().unwrap_or("none"),
                if ds.booked { "yes" } else { "no" }
            );
        }
        if !any {
            println!("(no domain touched yet)");
        }
    }

    fn print_q(&self, world: &World) {
        let q = self.net.forward(&world.featurizer.featurize(&self.state));
        let mut order: Vec<usize> = (0..q.len()).collect();
        order.sort_by(|&a, &b| q[b].partial_cmp(&q[a]).unwrap().then(a.cmp(&b)));
        println!("top actions:");
        for &i in order.iter().take(5) {
            println!("  {:>8.3}  {}", q[i], world.actions.get(i).expect("index in range"));
        }
    }

    fn print_summary(&self) {
        println!("session summary after {} turns:", self.state.turn);
        let mut any = false;
        for (name, ds) in &self.state.domains {
            if !ds.is_active() {
                continue;
            }
            any = true;
            let constraints: Vec<String> =
                ds.constraints.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let mut line = format!("  {name}: constraints [{}]", constraints.join(", "));
            match &ds.offered {
                Some(entity) => line.push_str(&format!(", offered {entity}")),
                None => line.push_str(", nothing offered"),
            }
            if ds.booking_requested || ds.booked {
                line.push_str(if ds.booked { ", booked" } else { ", booking not completed" });
            }
            if !ds.requested.is_empty() {
                let open: Vec<&str> = ds.requested.iter().map(String::as_str).collect();
                line.push_str(&format!(", unanswered requests [{}]", open.join(", ")));
            }
            println!("{line}");
        }
        if !any {
            println!("  (no domain touched)");
        }
    }
}
