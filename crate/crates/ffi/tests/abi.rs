use std::ffi::{CStr, CString};
use std::ptr;

use bikeflow_ffi::*;

fn cliques() -> *mut BfNetwork {
    let mut s = Vec::new();
    let mut t = Vec::new();
    for group in [[0usize, 1, 2], [3, 4, 5]] {
        for a in group {
            for b in group {
                if a != b {
                    s.push(a);
                    t.push(b);
                }
            }
        }
    }
    s.push(2);
    t.push(3);
    let w = vec![5u64; s.len()];
    let mut net = ptr::null_mut();
    let st = unsafe { bf_network_from_edges(6, s.as_ptr(), t.as_ptr(), w.as_ptr(), s.len(), &mut net) };
    assert_eq!(st, BfStatus::Ok);
    net
}

fn assignment(res: *const BfResult) -> Vec<i64> {
    let n = unsafe { bf_result_node_count(res) };
    let mut buf = vec![0i64; n];
    assert_eq!(unsafe { bf_result_assignment(res, buf.as_mut_ptr(), n) }, BfStatus::Ok);
    buf
}

#[test]
fn detect_through_c_api() {
    let net = cliques();
    unsafe {
        assert_eq!(bf_network_node_count(net), 6);
        assert_eq!(bf_network_total_weight(net), 65);
        let opts = bf_detect_options_default();
        for detect in [bf_infomap, bf_louvain, bf_greedy_modularity] {
            let mut res = ptr::null_mut();
            assert_eq!(detect(net, &opts, &mut res), BfStatus::Ok);
            assert_eq!(bf_result_module_count(res), 2);
            let a = assignment(res);
            assert_eq!(a[0], a[2]);
            assert_ne!(a[0], a[3]);
            let mut l = 0.0;
            assert_eq!(bf_codelength(net, &opts, a.as_ptr(), a.len(), &mut l), BfStatus::Ok);
            assert!((l - bf_result_codelength(res)).abs() < 1e-12);
            bf_result_free(res);
        }
        let mut res = ptr::null_mut();
        assert_eq!(bf_infomap(net, ptr::null(), &mut res), BfStatus::Ok);
        assert!((bf_result_score(res) - bf_result_codelength(res)).abs() < 1e-12);
        bf_result_free(res);
        bf_network_free(net);
    }
}

#[test]
fn errors_set_status_and_message() {
    let net = cliques();
    unsafe {
        let mut res = ptr::null_mut();
        assert_eq!(bf_infomap(ptr::null(), ptr::null(), &mut res), BfStatus::NullPointer);
        assert!(!bf_last_error_message().is_null());

        let bad = [0i64, 0, 0, -7, 1, 1];
        let mut l = 0.0;
        assert_eq!(
            bf_codelength(net, ptr::null(), bad.as_ptr(), bad.len(), &mut l),
            BfStatus::InvalidArgument
        );
        let short = [0i64, 0];
        assert_eq!(
            bf_codelength(net, ptr::null(), short.as_ptr(), short.len(), &mut l),
            BfStatus::InvalidArgument
        );
        let msg = CStr::from_ptr(bf_last_error_message()).to_str().unwrap();
        assert!(!msg.is_empty());

        assert_eq!(bf_infomap(net, ptr::null(), &mut res), BfStatus::Ok);
        assert!(bf_last_error_message().is_null());
        let mut small = [0i64; 2];
        assert_eq!(bf_result_assignment(res, small.as_mut_ptr(), 2), BfStatus::InvalidArgument);
        bf_result_free(res);

        let missing = CString::new("/nonexistent/edges.csv").unwrap();
        let mut other = ptr::null_mut();
        assert_eq!(bf_network_from_csv(missing.as_ptr(), ptr::null(), &mut other), BfStatus::Io);
        assert!(other.is_null());
        bf_network_free(net);
        bf_network_free(ptr::null_mut());
    }
}

#[test]
fn network_from_csv_keeps_station_ids() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("edges.csv");
    std::fs::write(&path, "origin_id,destination_id,weight\n10,20,3\n20,10,1\n20,30,2\n").unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        let mut net = ptr::null_mut();
        assert_eq!(bf_network_from_csv(c.as_ptr(), ptr::null(), &mut net), BfStatus::Ok);
        assert_eq!(bf_network_node_count(net), 3);
        assert_eq!(bf_network_total_weight(net), 6);
        let mut ids = Vec::new();
        for i in 0..3 {
            let mut id = 0;
            assert_eq!(bf_network_station_id(net, i, &mut id), BfStatus::Ok);
            ids.push(id);
        }
        assert_eq!(ids, [10, 20, 30]);
        let mut id = 0;
        assert_eq!(bf_network_station_id(net, 3, &mut id), BfStatus::InvalidArgument);
        bf_network_free(net);
    }
}

#[test]
fn version_and_header() {
    let v = unsafe { CStr::from_ptr(bf_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/bikeflow.h")).unwrap();
    for name in [
        "bf_network_from_edges",
        "bf_network_from_csv",
        "bf_infomap",
        "bf_louvain",
        "bf_greedy_modularity",
        "bf_result_assignment",
        "bf_codelength",
        "bf_last_error_message",
        "BF_STATUS_NULL_POINTER",
        "typedef struct BfNetwork BfNetwork",
    ] {
        assert!(header.contains(name), "{name}");
    }
}
