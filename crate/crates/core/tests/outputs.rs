use betaqm::config::parse_spec;
use betaqm::runner::{emit_outputs, run_experiment};

fn lines(path: &std::path::Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(str::to_owned).collect()
}

#[test]
fn one_run_writes_three_files_with_headers() {
    let spec = parse_spec("aqm = \"betared\"\nn_flows = 5\nduration = 2.0\nseeds = [3]\n").unwrap();
    let table = run_experiment(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = emit_outputs(&table, dir.path()).unwrap();
    assert_eq!(written.len(), 3);
    let metrics = lines(&dir.path().join("metrics.csv"));
    assert_eq!(
        metrics[0],
        "scheme,sweep,seed,aql,equilibrium_aql,drop_rate,throughput_bps,utilisation_bps,latency_s,jitter_s,\
         sent,delivered,aqm_drops,forced_drops,in_flight_at_end"
    );
    assert_eq!(metrics.len(), 3);
    let trace = lines(&dir.path().join("queue_trace_betared_default_seed3.csv"));
    assert_eq!(trace[0], "time,q_cur,q_avg,drops_cum,arrivals_cum");
    // samples every 10 ms over [0, 2]
    assert_eq!(trace.len(), 1 + 201);
    let ma = lines(&dir.path().join("moving_average_betared_default_seed3.csv"));
    assert_eq!(ma[0], "time,q_moving_avg");
    assert_eq!(ma.len(), trace.len());
}

#[test]
fn sweep_and_seeds_multiply_trace_files() {
    let spec = parse_spec(
        "aqm = \"red\"\nn_flows = 4\nduration = 1.0\nseeds = [1, 2, 3]\ndeliveries = true\n[sweep]\np_max = [0.05, 0.2]\n",
    )
    .unwrap();
    let table = run_experiment(&spec).unwrap();
    assert_eq!(table.results.len(), 6);
    let order: Vec<(String, u64)> = table.results.iter().map(|r| (r.run.point_string(), r.seed)).collect();
    assert_eq!(order[0], ("p_max=0.05".to_owned(), 1));
    assert_eq!(order[5], ("p_max=0.2".to_owned(), 3));
    let dir = tempfile::tempdir().unwrap();
    emit_outputs(&table, dir.path()).unwrap();
    let names: Vec<String> =
        std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert_eq!(names.iter().filter(|n| n.starts_with("queue_trace_")).count(), 6);
    assert_eq!(names.iter().filter(|n| n.starts_with("deliveries_")).count(), 6);
    assert_eq!(names.iter().filter(|n| *n == "metrics.csv").count(), 1);
    let d = lines(&dir.path().join("deliveries_red_p_max-0.2_seed1.csv"));
    assert_eq!(d[0], "flow,seq,send_time,deliver_time");
    assert!(d.len() > 1);
    let metrics = lines(&dir.path().join("metrics.csv"));
    assert_eq!(metrics.len(), 1 + 6 + 2);
}

#[test]
fn rerun_overwrites_identically() {
    let spec = parse_spec("aqm = \"dbetared\"\nn_flows = 8\nduration = 3.0\nseeds = [1]\n").unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_outputs(&run_experiment(&spec).unwrap(), dir.path()).unwrap();
    let first = std::fs::read(dir.path().join("queue_trace_dbetared_default_seed1.csv")).unwrap();
    emit_outputs(&run_experiment(&spec).unwrap(), dir.path()).unwrap();
    let second = std::fs::read(dir.path().join("queue_trace_dbetared_default_seed1.csv")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn unwritable_directory_is_reported() {
    let spec = parse_spec("aqm = \"droptail\"\nn_flows = 2\nduration = 0.5\nseeds = [1]\n").unwrap();
    let table = run_experiment(&spec).unwrap();
    let file = tempfile::NamedTempFile::new().unwrap();
    // a regular file cannot be used as the output directory
    assert!(emit_outputs(&table, &file.path().join("sub")).is_err());
}
