use std::time::Duration;

use roadcue_core::client::{FrameLink, FrameOutcome, RecvError};
use roadcue_core::geometry::{Pose, RigidTransform, Vec3};
use roadcue_core::server::{Detection, ServerConfig, TrackingServer};
use roadcue_core::{ClientConfig, HeadsetClient};

const WAIT: Duration = Duration::from_secs(5);

fn server() -> TrackingServer {
    TrackingServer::bind(ServerConfig {
        bind_address: "127.0.0.1:0".into(),
        pace: false,
        ..ServerConfig::default()
    })
    .unwrap()
}

fn tick(server: &mut TrackingServer, k: u64) -> f64 {
    let t = k as f64 * 0.05;
    server.ingest(&Detection {
        t,
        id: 1,
        p: [0.0, 1.0, 0.0],
    });
    server.ingest(&Detection {
        t,
        id: 2,
        p: [-20.0 + 2.0 * t, 1.0, 2.0],
    });
    server.broadcast_frame(t).unwrap();
    t
}

#[test]
fn client_sees_frames_in_order_and_survives_reconnect() {
    let mut srv = server();
    let addr = srv.local_addr().to_string();
    let link = FrameLink::connect(&addr, WAIT).unwrap();
    assert!(srv.broadcaster_mut().wait_for_clients(1, WAIT));

    let mut last = None;
    for k in 0..20 {
        tick(&mut srv, k);
        let msg = link.recv_timeout(WAIT).unwrap();
        assert_eq!(msg.frame_seq, k);
        assert!(last.is_none_or(|s| msg.frame_seq > s));
        last = Some(msg.frame_seq);
        assert_eq!(msg.ego().map(|e| e.id), Some(1));
        assert_eq!(msg.targets.len(), 2);
    }
    link.close();

    // Keep ticking with nobody listening until the dead peer is pruned.
    let mut k = 20;
    while srv.broadcaster_mut().connected() > 0 {
        tick(&mut srv, k);
        k += 1;
        assert!(k < 2000, "disconnected client never pruned");
        std::thread::sleep(Duration::from_millis(1));
    }
    let gap_end = k;
    for _ in 0..5 {
        tick(&mut srv, k);
        k += 1;
    }

    let link = FrameLink::connect(&addr, WAIT).unwrap();
    assert!(srv.broadcaster_mut().wait_for_clients(1, WAIT));
    tick(&mut srv, k);
    let msg = link.recv_timeout(WAIT).unwrap();
    assert_eq!(msg.frame_seq, k);
    assert!(msg.frame_seq > gap_end);
    tick(&mut srv, k + 1);
    assert_eq!(link.recv_timeout(WAIT).unwrap().frame_seq, k + 1);

    let summary = srv.summary();
    assert_eq!(summary.frames, k + 2);
    assert_eq!(summary.clients_served, 2);
    assert!(summary.frames_delivered < summary.frames);
    srv.shutdown();
    assert!(matches!(link.recv_timeout(WAIT), Err(RecvError::Closed)));
}

#[test]
fn every_client_gets_identical_frames() {
    let mut srv = server();
    let addr = srv.local_addr().to_string();
    let links: Vec<FrameLink> = (0..3).map(|_| FrameLink::connect(&addr, WAIT).unwrap()).collect();
    assert!(srv.broadcaster_mut().wait_for_clients(3, WAIT));
    for k in 0..10 {
        tick(&mut srv, k);
        let got: Vec<_> = links.iter().map(|l| l.recv_timeout(WAIT).unwrap()).collect();
        assert!(got.windows(2).all(|w| w[0] == w[1]));
    }
}

#[test]
fn headset_client_cues_over_the_wire() {
    let mut srv = server();
    let addr = srv.local_addr().to_string();
    let link = FrameLink::connect(&addr, WAIT).unwrap();
    assert!(srv.broadcaster_mut().wait_for_clients(1, WAIT));

    let mut client = HeadsetClient::new(ClientConfig::default()).unwrap();
    client.set_calibration(RigidTransform::identity());
    // Standing at the origin looking along +z; the target crosses 2 m ahead.
    client.update_pose(Pose::facing(Vec3::new(0.0, 1.6, 0.0), Vec3::z()));
    let mut kinds = Vec::new();
    for k in 0..200 {
        tick(&mut srv, k);
        let msg = link.recv_timeout(WAIT).unwrap();
        if let FrameOutcome::Cues(cues) = client.handle_frame(&msg).unwrap() {
            kinds.push(cues[0].kind.label());
        }
    }
    // Far away on the left: hidden; within 3 m: arrow; passing in front: box.
    assert_eq!(kinds.first(), Some(&"none"));
    assert!(kinds.contains(&"arrow"));
    assert!(kinds.contains(&"box"));
    let first_visible = client
        .cue_log()
        .iter()
        .find(|r| r.is_visible())
        .expect("a visible cue");
    assert!(first_visible.t > 8.0);
}
