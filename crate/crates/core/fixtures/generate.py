#!/usr/bin/env python3
"""Generates the stream-message and trace corpora with their expected outputs.

The expectations are computed here, independently of the Rust code, and the
generated files are committed. Re-running the script must reproduce them
byte for byte.
"""

import ipaddress
import json
import pathlib
import random

HERE = pathlib.Path(__file__).resolve().parent

# ---------------------------------------------------------------- parsing oracle


class Violation(Exception):
    def __init__(self, field):
        super().__init__(field)
        self.field = field


class Empty(Exception):
    pass


def present(obj, key):
    return key in obj and obj[key] is not None


def asn_of(v, field):
    if isinstance(v, bool):
        raise Violation(field)
    if isinstance(v, int):
        if 0 <= v <= 0xFFFFFFFF:
            return v
        raise Violation(field)
    if isinstance(v, str):
        digits = v[2:] if v[:2] in ("AS", "as") else v
        if digits and all(c in "0123456789" for c in digits) and int(digits) <= 0xFFFFFFFF:
            return int(digits)
        raise Violation(field)
    raise Violation(field)


def prefix_of(v, field):
    """Canonical IPv4 prefix string, None for IPv6."""
    if not isinstance(v, str):
        raise Violation(field)
    if ":" in v:
        return None
    if v.count("/") != 1:
        raise Violation(field)
    addr, length = v.split("/")
    if not length or not length.isdigit() or int(length) > 32:
        raise Violation(field)
    try:
        net = ipaddress.IPv4Network(f"{addr}/{length}", strict=True)
    except ValueError:
        raise Violation(field)
    return str(net)


def oracle_parse(raw, source):
    try:
        msg = json.loads(raw)
    except json.JSONDecodeError:
        raise Violation("$")
    if not isinstance(msg, dict):
        raise Violation("$")
    if not present(msg, "type"):
        raise Violation("type")
    if msg["type"] != "ris_message":
        raise Violation("type")
    if not present(msg, "data"):
        raise Violation("data")
    data = msg["data"]
    if not isinstance(data, dict):
        raise Violation("data")
    if not present(data, "timestamp"):
        raise Violation("data.timestamp")
    ts = data["timestamp"]
    if isinstance(ts, bool) or not isinstance(ts, (int, float)):
        raise Violation("data.timestamp")
    if not present(data, "peer"):
        raise Violation("data.peer")
    peer = data["peer"]
    if not isinstance(peer, str):
        raise Violation("data.peer")
    if not present(data, "peer_asn"):
        raise Violation("data.peer_asn")
    asn_of(data["peer_asn"], "data.peer_asn")
    if not present(data, "type"):
        raise Violation("data.type")
    if data["type"] != "UPDATE":
        raise Violation("data.type")

    announced = []
    groups = data.get("announcements")
    if groups is not None:
        if not isinstance(groups, list):
            raise Violation("data.announcements")
        for i, g in enumerate(groups):
            f = f"data.announcements[{i}]"
            if not isinstance(g, dict):
                raise Violation(f)
            if not present(g, "prefixes"):
                raise Violation(f + ".prefixes")
            if not isinstance(g["prefixes"], list):
                raise Violation(f + ".prefixes")
            for j, p in enumerate(g["prefixes"]):
                announced.append(prefix_of(p, f"{f}.prefixes[{j}]"))
    withdrawn = []
    ws = data.get("withdrawals")
    if ws is not None:
        if not isinstance(ws, list):
            raise Violation("data.withdrawals")
        for i, p in enumerate(ws):
            withdrawn.append(prefix_of(p, f"data.withdrawals[{i}]"))

    path = None
    if announced:
        if not present(data, "path"):
            raise Violation("data.path")
        if not isinstance(data["path"], list):
            raise Violation("data.path")
        path = []
        for i, hop in enumerate(data["path"]):
            f = f"data.path[{i}]"
            if isinstance(hop, list):
                if len(hop) != 1:
                    raise Violation(f)
                hop = hop[0]
            path.append(asn_of(hop, f))
        if not path or path[-1] == 0:
            raise Violation("data.path")

    announced = [p for p in announced if p is not None]
    withdrawn = [p for p in withdrawn if p is not None]
    if not announced and not withdrawn:
        raise Empty()
    out = []
    for p in announced:
        out.append({"source": source, "vantage_point": peer, "prefix": p, "path": path, "timestamp": float(ts)})
    for p in withdrawn:
        out.append({"source": source, "vantage_point": peer, "prefix": p, "path": None, "timestamp": float(ts)})
    return out


def expected_for(raw, source):
    try:
        return {"observations": oracle_parse(raw, source)}
    except Violation as v:
        return {"error": "schema_violation", "field": v.field}
    except Empty:
        return {"error": "empty_update"}


# ---------------------------------------------------------------- stream corpus


def msg(ts, peer, peer_asn, path, ann=(), wd=(), **extra):
    data = {"timestamp": ts, "peer": peer, "peer_asn": peer_asn, "id": f"{ts}-{peer}", "host": "rrc00", "type": "UPDATE"}
    if path is not None:
        data["path"] = path
    if ann:
        data["announcements"] = [{"next_hop": peer, "prefixes": list(g)} for g in ann]
    data["withdrawals"] = list(wd)
    data.update(extra)
    return {"type": "ris_message", "data": data}


def stream_corpus():
    d = lambda m: json.dumps(m, separators=(",", ":"))
    cases = [
        d(msg(1467387000.12, "192.0.2.1", "64500", [64500, 3356, 65001], [["10.0.0.0/23"]])),
        d(msg(1467387001, "192.0.2.2", 64501, [64501, 174, 65002], [["10.0.0.0/23", "10.0.1.0/24"], ["8.8.8.0/24"]])),
        d(msg(1467387002.5, "192.0.2.3", "AS64502", [64502, [65003]], [["172.16.0.0/16"]])),
        d(msg(1467387003, "192.0.2.4", "64503", None, (), ["10.0.0.0/23", "2001:db8::/32"])),
        d(msg(1467387004, "2001:db8::1", "64504", [64504, 65001], [["2001:db8::/32", "10.0.0.0/24"]], ["10.0.1.0/24"])),
        d(msg(1467387005, "192.0.2.5", "64505", [64505, 65001, 65001, 65001], [["10.0.0.0/23"]])),
        d(msg(1467387006, "192.0.2.6", "64506", ["64506", "65009"], [["198.51.100.0/24"]])),
        d(msg(0, "192.0.2.7", "64507", [64507], [["0.0.0.0/0"]])),
        d(msg(1467387008, "192.0.2.8", "64508", [64508, 65001], [["10.0.0.1/32"]], extra_field=True)),
        # empty updates
        d(msg(1467387009, "192.0.2.9", "64509", [64509, 65001])),
        d(msg(1467387010, "192.0.2.10", "64510", None, (), ["2001:db8::/32"])),
        # schema violations
        d({"type": "ris_error", "data": {"message": "boom"}}),
        d({"data": msg(1, "192.0.2.1", "1", [1, 2], [["10.0.0.0/23"]])["data"]}),
        d({"type": "ris_message"}),
        d({"type": "ris_message", "data": []}),
        d(msg("1467387011", "192.0.2.1", "64500", [64500, 65001], [["10.0.0.0/23"]])),
        d(msg(1467387012, None, "64500", [64500, 65001], [["10.0.0.0/23"]])),
        d(msg(1467387013, "192.0.2.1", "sixty-four", [64500, 65001], [["10.0.0.0/23"]])),
        d(msg(1467387014, "192.0.2.1", "64500", [64500, 65001], [["10.0.0.0/23"]], type="OPEN")),
        d(msg(1467387015, "192.0.2.1", "64500", None, [["10.0.0.0/23"]])),
        d(msg(1467387016, "192.0.2.1", "64500", [64500, [65001, 65002]], [["10.0.0.0/23"]])),
        d(msg(1467387017, "192.0.2.1", "64500", [64500, 0], [["10.0.0.0/23"]])),
        d(msg(1467387018, "192.0.2.1", "64500", [64500, 65001], [["10.0.0.1/23"]])),
        d(msg(1467387019, "192.0.2.1", "64500", [64500, 65001], [["10.0.0.0/33"]])),
        d(msg(1467387020, "192.0.2.1", "64500", [64500, 65001], [["not-a-prefix"]])),
        d(msg(1467387021, "192.0.2.1", "64500", [64500, 65001], (), [42])),
        d(msg(1467387022, "192.0.2.1", 4294967296, [64500, 65001], [["10.0.0.0/23"]])),
        d(msg(1467387023, "192.0.2.1", "64500", [], [["10.0.0.0/23"]])),
        d(msg(1467387024, "192.0.2.1", "64500", [64500, -5], [["10.0.0.0/23"]])),
        '{"type": "ris_message", "data": {"timestamp": 1, ',
        "[1, 2, 3]",
        d({"type": "ris_message", "data": {"timestamp": 1, "peer": "192.0.2.1", "peer_asn": "1", "type": "UPDATE",
           "announcements": {"prefixes": ["10.0.0.0/23"]}, "path": [1, 2]}}),
        d({"type": "ris_message", "data": {"timestamp": 1, "peer": "192.0.2.1", "peer_asn": "1", "type": "UPDATE",
           "announcements": [{"next_hop": "192.0.2.1"}], "path": [1, 2]}}),
        d(msg(1467387025, "192.0.2.1", "64500", [64500, True], [["10.0.0.0/23"]])),
    ]
    out_dir = HERE / "stream"
    out_dir.mkdir(exist_ok=True)
    (out_dir / "messages.ndjson").write_text("".join(c + "\n" for c in cases))
    expected = [expected_for(c, "ris") for c in cases]
    (out_dir / "expected.json").write_text(json.dumps(expected, indent=1, sort_keys=True) + "\n")


# ---------------------------------------------------------------- traces

OWNED = [
    ("10.0.0.0/23", {65001}),
    ("172.16.0.0/16", {65010, 65011}),
    ("198.51.100.0/24", {65020}),
]

CONFIG = """\
# Owned space shared by every trace in this directory.
[[owned]]
prefix = "10.0.0.0/23"
origins = [65001]

[[owned]]
prefix = "172.16.0.0/16"
origins = [65010, 65011]

[[owned]]
prefix = "198.51.100.0/24"
origins = [65020]

[detection]
reorder_window = 10.0

[monitoring]
hold_time = 60.0
"""

UNRELATED = ["8.8.8.0/24", "1.1.1.0/24", "93.184.216.0/24", "10.0.0.0/22"]


def classify(prefix, origin):
    net = ipaddress.IPv4Network(prefix)
    covering = [(ipaddress.IPv4Network(p), o) for p, o in OWNED if net.subnet_of(ipaddress.IPv4Network(p))]
    if not covering:
        return None
    owned, origins = max(covering, key=lambda c: c[0].prefixlen)
    if origin in origins:
        return ("legit", str(owned))
    return ("exact-origin" if owned == net else "subprefix-origin", str(owned))


def oracle_alerts(messages):
    """Alert set under quorum 1, for traces whose disorder fits the window."""
    obs = []
    for m in messages:
        try:
            obs.extend(oracle_parse(json.dumps(m), "trace"))
        except (Violation, Empty):
            pass
    # merged order: arrival time (the trace clock), then vantage point, then prefix
    obs.sort(key=lambda o: (o["timestamp"], o["vantage_point"], ipaddress.IPv4Network(o["prefix"])))
    alerts = {}
    for o in obs:
        if o["path"] is None:
            continue
        c = classify(o["prefix"], o["path"][-1])
        if c is None or c[0] == "legit":
            continue
        key = (c[1], o["path"][-1], c[0])
        if key not in alerts:
            alerts[key] = {"prefix": c[1], "offending_origin": o["path"][-1], "kind": c[0],
                           "observed_prefix": o["prefix"], "detected_at": o["timestamp"]}
    return sorted(alerts.values(), key=lambda a: (a["detected_at"], a["prefix"], a["offending_origin"]))


PEERS = [("192.0.2.%d" % i, 64500 + i) for i in range(1, 9)]
TRANSIT = [3356, 174, 1299, 2914, 6939]


def announce(rng, t, peer, prefix, origin, prepend=0):
    ip, asn = peer
    path = [asn] + rng.sample(TRANSIT, rng.randint(0, 2)) + [origin] * (1 + prepend)
    return msg(round(t, 3), ip, str(asn), path, [[prefix]])


def withdraw(t, peer, prefix):
    ip, asn = peer
    return msg(round(t, 3), ip, str(asn), None, (), [prefix])


def churn(rng, start, count, span):
    out = []
    for _ in range(count):
        t = start + rng.uniform(0, span)
        peer = rng.choice(PEERS)
        r = rng.random()
        if r < 0.45:
            prefix, origins = rng.choice(OWNED)
            out.append(announce(rng, t, peer, prefix, min(origins), rng.randint(0, 2)))
        elif r < 0.55:
            # the owner's own more-specifics are legitimate
            out.append(announce(rng, t, peer, "172.16.4.0/22", 65011))
        elif r < 0.85:
            out.append(announce(rng, t, peer, rng.choice(UNRELATED), rng.choice([15169, 13335, 15133, 64999])))
        else:
            out.append(withdraw(t, peer, rng.choice([p for p, _ in OWNED] + UNRELATED)))
    out.sort(key=lambda m: m["data"]["timestamp"])
    return out


def jitter(rng, messages, max_skew):
    """Out-of-order lines: each message may be written up to max_skew seconds late."""
    keyed = [(m["data"]["timestamp"] + rng.uniform(0, max_skew), i, m) for i, m in enumerate(messages)]
    keyed.sort()
    return [m for _, _, m in keyed]


def trace_set():
    traces = {}
    base = 1700000000.0
    for n in range(4):
        rng = random.Random(100 + n)
        traces[f"{len(traces) + 1:02d}-churn"] = churn(rng, base, 40, 600)
    for n in range(4):
        rng = random.Random(200 + n)
        prefix, _ = OWNED[n % 2]
        msgs = churn(rng, base, 25, 300)
        hijacker = 65500 + n
        t0 = base + 120 + n
        msgs += [announce(rng, t0 + k * rng.uniform(1, 40), p, prefix, hijacker) for k, p in enumerate(PEERS[:4])]
        msgs.sort(key=lambda m: m["data"]["timestamp"])
        traces[f"{len(traces) + 1:02d}-exact"] = msgs
    subs = ["10.0.1.0/24", "172.16.128.0/17", "172.16.200.0/24", "10.0.0.128/25"]
    for n, sub in enumerate(subs):
        rng = random.Random(300 + n)
        msgs = churn(rng, base, 25, 300)
        t0 = base + 90 + 7 * n
        msgs += [announce(rng, t0 + k * 11.5, p, sub, 65600 + n) for k, p in enumerate(PEERS[2:6])]
        msgs.sort(key=lambda m: m["data"]["timestamp"])
        traces[f"{len(traces) + 1:02d}-subprefix"] = msgs
    for n in range(3):
        rng = random.Random(400 + n)
        msgs = churn(rng, base, 20, 300)
        if n != 1:
            msgs.append(announce(rng, base + 150, PEERS[0], "10.0.0.0/23", 65700 + n))
        # the same lines recorded twice, as when a collector reconnects
        msgs = msgs + [json.loads(json.dumps(m)) for m in msgs[::3]]
        msgs.sort(key=lambda m: m["data"]["timestamp"])
        traces[f"{len(traces) + 1:02d}-duplicates"] = msgs
    for n in range(3):
        rng = random.Random(500 + n)
        msgs = churn(rng, base, 30, 300)
        msgs += [announce(rng, base + 100 + 3 * k, p, "198.51.100.0/24", 65800 + n) for k, p in enumerate(PEERS[:3])]
        if n == 2:
            msgs.append(announce(rng, base + 104, PEERS[5], "172.16.9.0/24", 65810))
        msgs.sort(key=lambda m: m["data"]["timestamp"])
        traces[f"{len(traces) + 1:02d}-out-of-order"] = jitter(rng, msgs, 8.0)
    rng = random.Random(550)
    traces[f"{len(traces) + 1:02d}-churn-out-of-order"] = jitter(rng, churn(rng, base, 40, 300), 9.0)
    # a trace mixing both hijack kinds and some noise that must be skipped
    rng = random.Random(600)
    msgs = churn(rng, base, 20, 300)
    msgs.append(announce(rng, base + 60, PEERS[1], "172.16.0.0/16", 65900))
    msgs.append(announce(rng, base + 61, PEERS[2], "172.16.33.0/24", 65900))
    msgs.append(announce(rng, base + 62, PEERS[3], "10.0.0.0/24", 65901))
    msgs.append({"type": "ris_message", "data": {"timestamp": base + 63, "peer": PEERS[0][0], "peer_asn": "1",
                 "type": "UPDATE", "path": [1, [65902, 65903]], "announcements": [{"prefixes": ["10.0.0.0/23"]}]}})
    msgs.append(msg(base + 64, PEERS[0][0], "1", [1, 65904], [["2001:db8::/32"]]))
    msgs.sort(key=lambda m: m["data"]["timestamp"])
    traces[f"{len(traces) + 1:02d}-mixed"] = msgs
    assert len(traces) == 20, len(traces)
    return traces


def write_traces():
    out_dir = HERE / "traces"
    out_dir.mkdir(exist_ok=True)
    (out_dir / "config.toml").write_text(CONFIG)
    expected = {}
    for name, msgs in trace_set().items():
        text = "".join(json.dumps(m, separators=(",", ":")) + "\n" for m in msgs)
        (out_dir / f"{name}.ndjson").write_text(text)
        expected[name] = oracle_alerts(msgs)
    (out_dir / "expected.json").write_text(json.dumps(expected, indent=1, sort_keys=True) + "\n")


if __name__ == "__main__":
    stream_corpus()
    write_traces()
