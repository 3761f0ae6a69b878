mod common;

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::thread;

use serde_json::Value;

use skillgraph::fixture;
use skillgraph::service::{self, Engine};

fn engine() -> (tempfile::TempDir, Arc<Engine>) {
    let (dir, store, graph) = common::demo();
    let engine = Engine::new(
        graph,
        store,
        fixture::gazetteer().unwrap(),
        fixture::templates().unwrap(),
        fixture::relation_rules().unwrap(),
    );
    (dir, Arc::new(engine))
}

struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    fn connect(addr: SocketAddr) -> Client {
        let stream = TcpStream::connect(addr).unwrap();
        Client {
            reader: BufReader::new(stream.try_clone().unwrap()),
            writer: stream,
        }
    }

    fn send(&mut self, line: &str) {
        self.writer.write_all(format!("{line}\n").as_bytes()).unwrap();
    }

    fn recv(&mut self) -> Value {
        let mut line = String::new();
        self.reader.read_line(&mut line).unwrap();
        serde_json::from_str(&line).unwrap()
    }
}

#[test]
fn show_query_over_the_wire() {
    let (_dir, engine) = engine();
    let server = service::serve("127.0.0.1:0", engine).unwrap();
    let mut c = Client::connect(server.local_addr());
    c.send(r#"{"id":"1","op":"ask","payload":"Can you show ant walking down in the plane?"}"#);
    let v = c.recv();
    assert_eq!(v["id"], "1");
    assert_eq!(v["ok"], true);
    assert_eq!(v["answer"]["skill"], "ant/walk_down@plane");
    server.shutdown();
}

#[test]
fn malformed_line_then_valid_line() {
    let (_dir, engine) = engine();
    let server = service::serve("127.0.0.1:0", engine).unwrap();
    let mut c = Client::connect(server.local_addr());
    c.send("{{{");
    c.send(r#"{"id":"2","op":"recommend","payload":{"agent":"humanoid","environment":"plane","task":"walk_30deg"}}"#);
    let first = c.recv();
    assert_eq!((first["id"].as_str(), first["ok"].as_bool()), (Some("?"), Some(false)));
    let second = c.recv();
    assert_eq!(second["id"], "2");
    assert_eq!(second["answer"]["candidates"][0]["skill"], "humanoid/walk_right@plane");
    server.shutdown();
}

#[test]
fn pipelined_requests_answer_in_order() {
    let (_dir, engine) = engine();
    let server = service::serve("127.0.0.1:0", engine).unwrap();
    let mut c = Client::connect(server.local_addr());
    for i in 0..50 {
        c.send(&format!(
            r#"{{"id":"p{i}","op":"fetch_meta","payload":{{"agent":"ant","skill":"walk_up","environment":"plane"}}}}"#
        ));
    }
    for i in 0..50 {
        let v = c.recv();
        assert_eq!(v["id"], format!("p{i}"));
        assert_eq!(v["answer"]["artifacts"].as_array().unwrap().len(), 2);
    }
    server.shutdown();
}

#[test]
fn concurrent_clients_each_get_their_own_answers() {
    let (_dir, engine) = engine();
    let server = service::serve("127.0.0.1:0", engine).unwrap();
    let addr = server.local_addr();
    let handles: Vec<_> = ["humanoid", "ant", "half cheetah"]
        .into_iter()
        .map(|agent| {
            thread::spawn(move || {
                let mut c = Client::connect(addr);
                for i in 0..30 {
                    c.send(&format!(
                        r#"{{"id":"{agent}-{i}","op":"ask","payload":"What skills does {agent} have?"}}"#
                    ));
                    let v = c.recv();
                    assert_eq!(v["id"], format!("{agent}-{i}"));
                    let subject = v["answer"][0]["s"].as_str().unwrap().to_string();
                    assert_eq!(subject, agent.replace(' ', "_"));
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    server.shutdown();
}

#[test]
fn binary_serves_until_killed() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_skillgraph");
    let common_args = ["--graph", "g.ksg", "--store", "store"];
    let status = Command::new(bin)
        .current_dir(dir.path())
        .args(common_args)
        .arg("load-demo")
        .output()
        .unwrap();
    assert!(status.status.success());

    let mut child = Command::new(bin)
        .current_dir(dir.path())
        .args(common_args)
        .args(["serve", "--socket", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut banner = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut banner)
        .unwrap();
    let addr: SocketAddr = banner.trim().strip_prefix("listening on ").unwrap().parse().unwrap();

    let mut c = Client::connect(addr);
    c.send(r#"{"id":"x","op":"ask","payload":"Do you know what skills humanoid have?"}"#);
    let v = c.recv();
    assert_eq!(v["answer"].as_array().unwrap().len(), 8);
    child.kill().unwrap();
    child.wait().unwrap();
}
