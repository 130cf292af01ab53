use std::ffi::{c_char, c_int};
use std::path::PathBuf;

use abandonq::harness::{run_and_write, ExperimentConfig, RunOptions};
use abandonq::simulator::{simulate, SimConfig};

use crate::{guard, into_c_string, read_str, write_out, AqStatus, Failure};

/// Simulates one replication. `config_json` is a simulator configuration;
/// on success `*result_json` receives the result as JSON, to be freed with
/// `aq_string_free`.
#[no_mangle]
pub unsafe extern "C" fn aq_simulate_json(config_json: *const c_char, result_json: *mut *mut c_char) -> AqStatus {
    guard(|| {
        if result_json.is_null() {
            return Err(Failure::null("result_json"));
        }
        let cfg: SimConfig = serde_json::from_str(read_str(config_json, "config_json")?)?;
        let res = simulate(&cfg)?;
        let s = into_c_string(serde_json::to_string(&res)?)?;
        write_out(result_json, s, "result_json")
    })
}

/// Runs a whole experiment from its JSON configuration.
///
/// `out_dir` may be null, in which case the configuration's `output_dir` is
/// used (relative to the working directory) when present. `threads = 0`
/// uses the default pool. `*exit_code` receives the CLI exit status (0
/// pass, 1 gate failure, 2 configuration or validation, 3 stability) and is
/// written even when the call fails. On success `*report_json` receives the
/// report; gate failures are not call failures.
#[no_mangle]
pub unsafe extern "C" fn aq_run_experiment(
    config_json: *const c_char,
    out_dir: *const c_char,
    threads: u32,
    waive_a5: bool,
    report_json: *mut *mut c_char,
    exit_code: *mut c_int,
) -> AqStatus {
    guard(|| {
        if report_json.is_null() {
            return Err(Failure::null("report_json"));
        }
        if exit_code.is_null() {
            return Err(Failure::null("exit_code"));
        }
        exit_code.write(2);
        let cfg = ExperimentConfig::from_json(read_str(config_json, "config_json")?)?;
        let out_dir = if out_dir.is_null() { None } else { Some(PathBuf::from(read_str(out_dir, "out_dir")?)) };
        let opts = RunOptions { threads: (threads > 0).then_some(threads as usize), out_dir, waive_a5 };
        let (status, report) = run_and_write(&cfg, &opts);
        exit_code.write(status.code());
        let s = into_c_string(report?.to_json()?)?;
        write_out(report_json, s, "report_json")
    })
}
