import socket
import threading

from ghsim import fieldbus as fb
from ghsim.cli import build_parser, cmd_run


def test_parser_subcommands():
    parser = build_parser()
    args = parser.parse_args(["run", "sc.scenario", "--until", "100", "--out", "x"])
    assert args.command == "run" and args.until == 100.0
    args = parser.parse_args(["serve", "sc.scenario", "--listen", "0.0.0.0:9000", "--speed", "0"])
    assert args.speed == 0.0
    args = parser.parse_args(["export", "-p", "pw", "--from", "0", "--to", "100"])
    assert args.time_from == "0" and args.password == "pw"
    args = parser.parse_args(["verify", "--fast"])
    assert args.fast is True


def test_run_writes_artifacts(tmp_path):
    from pathlib import Path

    import ghsim

    scenario_path = tmp_path / "mini.scenario"
    src = Path(ghsim.__file__).parent / "data" / "default.scenario"
    scenario_path.write_text(src.read_text())

    parser = build_parser()
    args = parser.parse_args(["run", str(scenario_path), "--until", "2000",
                              "--out", str(tmp_path / "out"), "--headless", "--store"])
    assert cmd_run(args) == 0
    out = tmp_path / "out"
    csv = (out / "export.csv").read_text()
    assert csv.startswith("timestamp,node_id,port,sensor,value,unit\n")
    assert len(csv.strip().split("\n")) == 1 + 48  # two sample instants
    assert (out / "events.log").exists()
    assert (out / "outbox.jsonl").exists()
    assert (out / "telemetry.sqlite").stat().st_size > 0


def test_frame_endpoints_over_loopback_socket():
    # one writer, one reader per direction over a real byte stream
    a, b = socket.socketpair()
    msgs = [fb.GwMessage(fb.MSG_TELEMETRY, i, bytes(range(i % 32))) for i in range(50)]
    received = []

    def reader():
        dec = fb.FrameStreamDecoder()
        while len(received) < len(msgs):
            chunk = b.recv(7)  # deliberately misaligned with frame boundaries
            if not chunk:
                break
            received.extend(dec.feed(chunk))

    t = threading.Thread(target=reader)
    t.start()
    for m in msgs:
        a.sendall(fb.encode_frame(m))
    t.join(timeout=10)
    a.close()
    b.close()
    assert received == msgs
