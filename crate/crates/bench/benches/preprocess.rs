use std::hint::black_box;
use std::io::Cursor;

use criterion::{criterion_group, criterion_main, Criterion};

use webprof_bench::bench_log;
use webprof_core::log_ingest::{clean_log, parse_log_line, CleanPolicy};
use webprof_core::sessionize::{identify_users, sessionize_all, Heuristic};

const SAMPLE_LINE: &str = "1212265085.247 741 192.168.23.62 TCP_MISS/200 10858 GET \
     http://www.example.edu/index.php - DIRECT/10.0.0.1 Mozilla/5.0";

fn bench_parse(c: &mut Criterion) {
    c.bench_function("parse_log_line", |b| {
        b.iter(|| parse_log_line(black_box(SAMPLE_LINE), 1).unwrap())
    });
}

fn bench_clean(c: &mut Criterion) {
    let log = bench_log();
    let policy = CleanPolicy::default();
    c.bench_function("clean_log 10k lines", |b| {
        b.iter(|| clean_log(Cursor::new(black_box(log.as_str())), &policy).unwrap())
    });
}

fn bench_sessionize(c: &mut Criterion) {
    let log = bench_log();
    let cleaned = clean_log(Cursor::new(log), &CleanPolicy::default()).unwrap();
    let users = identify_users(&cleaned.records);
    c.bench_function("sessionize toh1", |b| {
        b.iter(|| sessionize_all(black_box(&users), Heuristic::Toh1, 1800.0))
    });
}

criterion_group!(benches, bench_parse, bench_clean, bench_sessionize);
criterion_main!(benches);
