//! Gradient provider backed by a seeded linear softmax model.
//!
//! Used to exercise the wire protocol end to end. `--fault` makes it
//! misbehave in one specific way.

use std::io::{self, BufRead, Write};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use qig::harness::{encode_f32, handle_request, serve, Message};
use qig::model::LinearScorer;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Fault {
    None,
    /// Gradient one value short.
    WrongLength,
    /// Loss that disagrees with the logits.
    BadLoss,
    /// Exit with a message on stderr at the first request.
    Crash,
    /// Never answer requests.
    Hang,
    /// Skip the hello.
    NoHello,
    /// Reply with a line that isn't JSON.
    Garbage,
}

#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    height: usize,
    #[arg(long, default_value_t = 8)]
    width: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, value_enum, default_value_t = Fault::None)]
    fault: Fault,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let model =
        match LinearScorer::<f64>::random([args.height, args.width, 3], args.classes, args.seed) {
            Ok(m) => m,
            Err(e) => {
                eprintln!("mock provider: {e}");
                return ExitCode::from(2);
            }
        };
    let names: Vec<String> = (0..args.classes).map(|c| format!("class{c}")).collect();
    let stdin = io::stdin().lock();
    let stdout = io::stdout().lock();
    let result = if args.fault == Fault::None {
        serve(&model, &names, stdin, stdout).map_err(|e| e.to_string())
    } else {
        faulty(&model, &names, args.fault, stdin, stdout).map_err(|e| e.to_string())
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mock provider: {e}");
            ExitCode::FAILURE
        }
    }
}

fn faulty(
    model: &LinearScorer,
    names: &[String],
    fault: Fault,
    input: impl BufRead,
    mut out: impl Write,
) -> io::Result<()> {
    let emit = |m: &Message, out: &mut dyn Write| -> io::Result<()> {
        writeln!(out, "{}", serde_json::to_string(m).expect("serializable"))?;
        out.flush()
    };
    if fault != Fault::NoHello {
        let hello = Message::Hello {
            classes: names.to_vec(),
            input_shape: qig::model::GradFn::<f64>::input_dims(model),
        };
        emit(&hello, &mut out)?;
    }
    for line in input.lines() {
        let line = line?;
        let Ok(req) = serde_json::from_str::<Message>(&line) else {
            continue;
        };
        let reply = match (fault, handle_request(model, &req)) {
            (Fault::Crash, _) => {
                eprintln!("mock provider: simulated crash");
                std::process::exit(3);
            }
            (Fault::Hang, _) => loop {
                std::thread::sleep(std::time::Duration::from_secs(60));
            },
            (Fault::Garbage, _) => {
                writeln!(out, "this is not json")?;
                out.flush()?;
                continue;
            }
            (
                Fault::WrongLength,
                Message::GradResult {
                    id,
                    loss,
                    logits,
                    grad,
                },
            ) => {
                let mut g: Vec<f64> = qig::harness::decode_f32(&grad).expect("own encoding");
                g.pop();
                Message::GradResult {
                    id,
                    loss,
                    logits,
                    grad: encode_f32(&g),
                }
            }
            (
                Fault::BadLoss,
                Message::GradResult {
                    id,
                    loss,
                    logits,
                    grad,
                },
            ) => Message::GradResult {
                id,
                loss: loss + 0.5,
                logits,
                grad,
            },
            (_, other) => other,
        };
        emit(&reply, &mut out)?;
    }
    Ok(())
}
