//! Synthetic corpora: a hand-authored cleaning fixture, randomized access
//! logs, planted Gaussian blobs, and grouped session corpora with injected
//! small-session noise. Everything is seeded and deterministic.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::log_ingest::UserKey;
use crate::sessionize::{Session, SessionId};

/// A 20-line access log with known composition: 10 clean requests from
/// three users, 6 embedded-object requests, 2 robot-agent requests, 1
/// `robots.txt` probe, and 1 corrupted line. Timestamps are deliberately
/// not fully ordered.
pub fn clean_fixture() -> String {
    let lines = [
        "1212250000.123 320 192.168.1.10 TCP_MISS/200 10858 GET http://www.example.edu/index.php - DIRECT/10.0.0.1 Mozilla/5.0",
        "1212250003.450 45 192.168.1.10 TCP_HIT/200 4021 GET http://www.example.edu/img/logo.gif - NONE/- Mozilla/5.0",
        "1212250004.100 52 192.168.1.10 TCP_HIT/200 1822 GET http://www.example.edu/css/style.css - NONE/- Mozilla/5.0",
        "1212250010.777 610 192.168.1.11 TCP_MISS/200 8430 GET http://www.example.edu/courses.php?dept=cs - DIRECT/10.0.0.1 Mozilla/4.0",
        "1212250011.300 38 192.168.1.11 TCP_HIT/200 2210 GET http://www.example.edu/img/photo.jpeg - NONE/- Mozilla/4.0",
        "1212250015.000 105 192.168.1.50 TCP_MISS/200 512 GET http://www.example.edu/index.php - DIRECT/10.0.0.1 Googlebot/2.1",
        "1212250016.200 98 192.168.1.50 TCP_MISS/200 644 GET http://www.example.edu/about.php - DIRECT/10.0.0.1 Googlebot/2.1",
        "1212250018.500 77 192.168.1.60 TCP_MISS/200 230 GET http://www.example.edu/robots.txt - DIRECT/10.0.0.1 SiteCheck/1.0",
        "corrupted entry",
        "1212250020.900 450 192.168.1.10 TCP_MISS/200 9120 GET http://www.example.edu/about.php - DIRECT/10.0.0.1 Mozilla/5.0",
        "1212250021.440 61 192.168.1.10 TCP_HIT/200 3015 GET http://www.example.edu/img/banner.JPG - NONE/- Mozilla/5.0",
        "1212250024.600 390 192.168.1.12 TCP_MISS/200 7254 GET http://www.example.edu/research.php - DIRECT/10.0.0.1 Mozilla/5.0",
        "1212250026.150 44 192.168.1.12 TCP_HIT/200 980 GET http://www.example.edu/favicon.ico - NONE/- Mozilla/5.0",
        "1212250030.000 275 192.168.1.11 TCP_MISS/304 0 GET http://www.example.edu/index.php - DIRECT/10.0.0.1 Mozilla/4.0",
        "1212250033.320 66 192.168.1.11 TCP_HIT/200 1430 GET http://www.example.edu/js/script.js - NONE/- Mozilla/4.0",
        "1212250040.210 502 192.168.1.10 TCP_MISS/200 11230 GET http://www.example.edu/faculty.php - DIRECT/10.0.0.1 Mozilla/5.0",
        "1212250042.800 330 192.168.1.12 TCP_MISS/200 6120 GET http://www.example.edu/courses.php - DIRECT/10.0.0.1 Mozilla/5.0",
        "1212250019.400 410 192.168.1.11 TCP_MISS/200 5320 GET http://www.example.edu/library.php - DIRECT/10.0.0.1 Mozilla/4.0",
        "1212250050.500 290 192.168.1.10 TCP_MISS/200 4480 GET http://www.example.edu/index.php - DIRECT/10.0.0.1 Mozilla/5.0",
        "1212250055.250 360 192.168.1.12 TCP_MISS/200 8890 GET http://www.example.edu/admissions.php?id=7 - DIRECT/10.0.0.1 Mozilla/5.0",
    ];
    let mut out = lines.join("\n");
    out.push('\n');
    out
}

/// Shape of a randomized synthetic access log.
#[derive(Debug, Clone)]
pub struct LogSpec {
    pub users: usize,
    pub urls: usize,
    pub sessions_per_user: usize,
    /// Upper bound on requests per session (at least 1 is always issued).
    pub max_requests: usize,
    pub start_ts: f64,
    /// Also emit embedded objects, robot traffic, and corrupted lines.
    pub include_noise: bool,
    pub seed: u64,
}

impl Default for LogSpec {
    fn default() -> Self {
        LogSpec {
            users: 24,
            urls: 40,
            sessions_per_user: 12,
            max_requests: 12,
            start_ts: 1.3e9,
            include_noise: true,
            seed: 7,
        }
    }
}

const BROWSER_AGENTS: &[&str] = &[
    "Mozilla/5.0_(X11;_Linux_x86_64)",
    "Mozilla/5.0_(Windows_NT_10.0)",
    "Mozilla/5.0_(Macintosh)",
    "Opera/9.80",
];

/// Generates a synthetic access log. Lines are emitted in timestamp order;
/// the same spec always yields the same bytes.
pub fn synthetic_log(spec: &LogSpec) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut entries: Vec<(f64, String)> = Vec::new();

    let push = |entries: &mut Vec<(f64, String)>, ts: f64, ip: String, ua: &str, url: String, status: u16| {
        let elapsed = 20 + (ts as u64 % 700);
        let bytes = 200 + (ts as u64 % 9000);
        entries.push((
            ts,
            format!(
                "{ts:.3} {elapsed} {ip} TCP_MISS/{status} {bytes} GET {url} - DIRECT/10.0.0.1 {ua}"
            ),
        ));
    };

    // Users belong to interest groups so the resulting sessions carry real
    // cluster structure; a block of URLs is shared by each group, the rest
    // is sampled globally with a popularity skew.
    let groups = 6.min(spec.users.max(1));
    let block = (spec.urls / groups).max(1);
    for u in 0..spec.users {
        let ip = format!("10.0.{}.{}", u / 200, u % 200 + 1);
        let ua = BROWSER_AGENTS[u % BROWSER_AGENTS.len()];
        let group_base = (u % groups) * block;
        let mut ts = spec.start_ts + (u as f64) * 53.0;
        for _ in 0..spec.sessions_per_user {
            // New visit: jump well past the session threshold.
            ts += 3600.0 + rng.random_range(0.0..1800.0);
            // Mostly substantial visits that walk the group's block, plus
            // occasional one- or two-page drop-ins.
            let requests = if rng.random_bool(0.2) {
                1 + rng.random_range(0..2)
            } else {
                spec.max_requests / 2 + rng.random_range(0..=spec.max_requests.div_ceil(2))
            };
            for step in 0..requests {
                ts += rng.random_range(1.0..240.0);
                let k = if rng.random_bool(0.9) {
                    // Walk the block so longer sessions cover most of it.
                    group_base + (step + rng.random_range(0..2)) % block
                } else {
                    let skew: f64 = rng.random::<f64>();
                    ((skew * skew) * spec.urls as f64) as usize % spec.urls
                };
                let mut url = format!("http://www.example.edu/page{k}.php");
                if rng.random_bool(0.15) {
                    url.push_str("?ref=nav");
                }
                push(&mut entries, ts, ip.clone(), ua, url, 200);
                if spec.include_noise && rng.random_bool(0.4) {
                    push(
                        &mut entries,
                        ts + 0.4,
                        ip.clone(),
                        ua,
                        format!("http://www.example.edu/img/asset{}.gif", k % 9),
                        200,
                    );
                }
            }
        }
    }

    if spec.include_noise {
        let mut ts = spec.start_ts + 11.0;
        for k in 0..spec.urls.min(25) {
            ts += 31.0;
            push(
                &mut entries,
                ts,
                "10.0.9.9".to_string(),
                "SearchCrawler/3.2",
                format!("http://www.example.edu/page{k}.php"),
                200,
            );
        }
        push(
            &mut entries,
            spec.start_ts + 5.0,
            "10.0.9.8".to_string(),
            "Mozilla/5.0_(X11;_Linux_x86_64)",
            "http://www.example.edu/robots.txt".to_string(),
            200,
        );
    }

    entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut out = String::new();
    for (i, (_, line)) in entries.iter().enumerate() {
        if spec.include_noise && i % 97 == 96 {
            out.push_str("### truncated line\n");
        }
        out.push_str(line);
        out.push('\n');
    }
    out
}

/// Samples `per_blob` 2-D points around each center with isotropic Gaussian
/// spread `sigma`.
pub fn gaussian_blobs(centers: &[[f64; 2]], per_blob: usize, sigma: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let mut data = Array2::zeros((centers.len() * per_blob, 2));
    let mut row = 0;
    for center in centers {
        for _ in 0..per_blob {
            data[[row, 0]] = center[0] + normal.sample(&mut rng);
            data[[row, 1]] = center[1] + normal.sample(&mut rng);
            row += 1;
        }
    }
    data
}

/// Uniform random rows in `[0, 1)^n`.
pub fn uniform_rows(m: usize, n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((m, n), |_| rng.random::<f64>())
}

fn session_from_urls(ip: u32, ordinal: u32, urls: &[u32]) -> Session {
    let mut url_freqs = BTreeMap::new();
    for &u in urls {
        *url_freqs.entry(u).or_insert(0) += 1;
    }
    Session {
        id: SessionId {
            user: UserKey { ip, ua: 1 },
            ordinal,
        },
        first_ts: 0.0,
        last_ts: 0.0,
        raw_requests: urls.to_vec(),
        url_freqs,
        weight: 1.0,
    }
}

/// A small deterministic session corpus over URL ids 1..=40, used as the
/// target of independent recount oracles in tests.
pub fn demo_sessions() -> Vec<Session> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut sessions = Vec::new();
    for i in 0..12u32 {
        let len = 1 + rng.random_range(0..11);
        let urls: Vec<u32> = (0..len).map(|_| rng.random_range(1..=40)).collect();
        sessions.push(session_from_urls(i + 1, 1, &urls));
    }
    sessions
}

/// Shape of a grouped session corpus with injected small-session noise.
#[derive(Debug, Clone)]
pub struct GroupedCorpusSpec {
    /// Number of planted groups.
    pub groups: usize,
    /// URLs owned by each group.
    pub group_urls: usize,
    /// Total multi-URL sessions, split evenly over the groups.
    pub group_sessions: usize,
    /// Injected noise sessions containing only one or two URLs.
    pub noise_sessions: usize,
    /// Dedicated URLs that single-URL noise sessions concentrate on.
    pub noise_urls: usize,
}

impl Default for GroupedCorpusSpec {
    fn default() -> Self {
        GroupedCorpusSpec {
            groups: 4,
            group_urls: 6,
            group_sessions: 200,
            noise_sessions: 150,
            noise_urls: 6,
        }
    }
}

/// Builds the grouped corpus: each multi-URL session draws nearly all of
/// its group's URLs (occasionally one foreign URL), while noise sessions
/// hold one URL from the dedicated noise pool or a random pair. Weights are
/// left at 1; callers assign them.
pub fn grouped_session_corpus(spec: &GroupedCorpusSpec, seed: u64) -> Vec<Session> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total_group_urls = (spec.groups * spec.group_urls) as u32;
    let total_urls = total_group_urls + spec.noise_urls as u32;
    let mut sessions = Vec::with_capacity(spec.group_sessions + spec.noise_sessions);

    for i in 0..spec.group_sessions {
        let g = (i % spec.groups) as u32;
        let base = g * spec.group_urls as u32;
        let mut urls: Vec<u32> = (1..=spec.group_urls as u32).map(|k| base + k).collect();
        // Drop one of the group's URLs half of the time.
        if rng.random_bool(0.5) {
            let drop = rng.random_range(0..urls.len());
            urls.remove(drop);
        }
        // Rarely touch one URL outside the group.
        if rng.random_bool(0.2) {
            urls.push(rng.random_range(1..=total_urls));
        }
        sessions.push(session_from_urls(i as u32 + 1, 1, &urls));
    }

    for i in 0..spec.noise_sessions {
        let urls: Vec<u32> = if rng.random_bool(0.5) {
            // Single-URL probe on the dedicated noise pool.
            vec![total_group_urls + rng.random_range(1..=spec.noise_urls as u32)]
        } else {
            // A scattered pair anywhere in the URL universe.
            let a = rng.random_range(1..=total_urls);
            let mut b = rng.random_range(1..=total_urls);
            while b == a {
                b = rng.random_range(1..=total_urls);
            }
            vec![a, b]
        };
        sessions.push(session_from_urls((spec.group_sessions + i) as u32 + 1, 1, &urls));
    }

    sessions
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_has_twenty_lines() {
        assert_eq!(clean_fixture().lines().count(), 20);
    }

    #[test]
    fn synthetic_log_is_deterministic() {
        let spec = LogSpec {
            users: 4,
            sessions_per_user: 3,
            ..LogSpec::default()
        };
        assert_eq!(synthetic_log(&spec), synthetic_log(&spec));
        let other = synthetic_log(&LogSpec { seed: 8, ..spec });
        assert_ne!(synthetic_log(&spec), other);
    }

    #[test]
    fn synthetic_log_lines_are_parseable_or_marked() {
        let spec = LogSpec {
            users: 3,
            sessions_per_user: 2,
            ..LogSpec::default()
        };
        for (i, line) in synthetic_log(&spec).lines().enumerate() {
            if line.starts_with('#') {
                continue;
            }
            crate::log_ingest::parse_log_line(line, i + 1)
                .unwrap_or_else(|e| panic!("line {i}: {e}"));
        }
    }

    #[test]
    fn blobs_have_expected_shape_and_spread() {
        let data = gaussian_blobs(&[[0.0, 0.0], [100.0, 0.0]], 25, 0.5, 3);
        assert_eq!(data.dim(), (50, 2));
        for row in 0..25 {
            assert!(data[[row, 0]].abs() < 5.0);
        }
        for row in 25..50 {
            assert!((data[[row, 0]] - 100.0).abs() < 5.0);
        }
    }

    #[test]
    fn grouped_corpus_matches_spec_counts() {
        let spec = GroupedCorpusSpec::default();
        let sessions = grouped_session_corpus(&spec, 5);
        assert_eq!(sessions.len(), 350);
        let (group, noise) = sessions.split_at(spec.group_sessions);
        assert!(group.iter().all(|s| s.unique_count() >= 5));
        assert!(noise.iter().all(|s| (1..=2).contains(&s.unique_count())));
    }
}
