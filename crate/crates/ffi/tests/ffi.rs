use avsim_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn call(sim: *mut AvsimSim, method: &str, params: Option<&str>) -> Result<serde_json::Value, (AvsimStatus, String)> {
    let m = CString::new(method).unwrap();
    let p = params.map(|p| CString::new(p).unwrap());
    let mut out = ptr::null_mut();
    let status = unsafe { avsim_sim_call(sim, m.as_ptr(), p.as_ref().map_or(ptr::null(), |p| p.as_ptr()), &mut out) };
    if status == AvsimStatus::Ok {
        let s = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_string();
        unsafe { avsim_string_free(out) };
        Ok(serde_json::from_str(&s).unwrap())
    } else {
        assert!(out.is_null());
        let code = unsafe { CStr::from_ptr(avsim_last_error_code()) }.to_str().unwrap().to_string();
        Err((status, code))
    }
}

#[test]
fn call_step_and_errors() {
    let sim = avsim_sim_new(3);
    assert!(!sim.is_null());
    let r = call(sim, "sim/step", Some(r#"{"ticks":100}"#)).unwrap();
    assert_eq!(r["tick"], 100);
    assert_eq!(unsafe { avsim_sim_tick(sim) }, 100);
    assert_eq!(call(sim, "nope", None).unwrap_err(), (AvsimStatus::Api, "unknown_method".into()));
    assert_eq!(call(sim, "sim/step", Some("{")).unwrap_err().0, AvsimStatus::InvalidJson);
    let e = call(sim, "agent/spawn", Some(r#"{"kind":"npc_vehicle","pose":{"x":0,"y":0}}"#)).unwrap_err();
    assert_eq!(e.1, "no_lane_near_spawn");
    unsafe { avsim_sim_free(sim) };
}

#[test]
fn snapshot_restore_round_trip() {
    let sim = avsim_sim_new(5);
    call(sim, "agent/spawn", Some(r#"{"kind":"ego","pose":{"x":0,"y":0}}"#)).unwrap();
    assert_eq!(unsafe { avsim_sim_step(sim, 10) }, AvsimStatus::Ok);
    let (mut data, mut len) = (ptr::null_mut(), 0usize);
    assert_eq!(unsafe { avsim_sim_snapshot(sim, &mut data, &mut len) }, AvsimStatus::Ok);
    let saved = unsafe { std::slice::from_raw_parts(data, len) }.to_vec();
    unsafe { avsim_sim_step(sim, 10) };
    assert_eq!(unsafe { avsim_sim_restore(sim, data, len) }, AvsimStatus::Ok);
    assert_eq!(unsafe { avsim_sim_tick(sim) }, 10);
    unsafe { avsim_bytes_free(data, len) };

    let mut bad = saved.clone();
    bad[20] ^= 0xff;
    assert_eq!(unsafe { avsim_sim_restore(sim, bad.as_ptr(), bad.len()) }, AvsimStatus::Snapshot);
    let code = unsafe { CStr::from_ptr(avsim_last_error_code()) }.to_str().unwrap();
    assert_eq!(code, "snapshot_corrupt");
    unsafe { avsim_sim_free(sim) };
}

#[test]
fn null_arguments_are_rejected() {
    let mut out = ptr::null_mut();
    let m = CString::new("sim/step").unwrap();
    assert_eq!(
        unsafe { avsim_sim_call(ptr::null_mut(), m.as_ptr(), ptr::null(), &mut out) },
        AvsimStatus::NullArgument
    );
    assert!(!avsim_last_error().is_null());
    assert_eq!(unsafe { avsim_sim_step(ptr::null_mut(), 1) }, AvsimStatus::NullArgument);
    assert_eq!(unsafe { avsim_sim_tick(ptr::null()) }, 0);
    unsafe {
        avsim_sim_free(ptr::null_mut());
        avsim_string_free(ptr::null_mut());
    }
    let v = unsafe { CStr::from_ptr(avsim_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/avsim.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let mut n = 0;
    for line in src.lines() {
        if let Some(rest) = line.split("extern \"C\" fn ").nth(1) {
            let name = rest.split('(').next().unwrap();
            assert!(header.contains(&format!("{name}(")), "{name} missing from header");
            n += 1;
        }
    }
    assert_eq!(n, 12);
    assert!(header.contains("typedef struct AvsimSim AvsimSim;"));
}
