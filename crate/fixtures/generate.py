#!/usr/bin/env python3
"""Regenerates the bundled fixtures. Output is deterministic.

    python3 fixtures/generate.py [outdir]
"""

import csv
import io
import random
import sys
from pathlib import Path

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent
T0 = 1714000000

RIRS = ["APNIC", "RIPE NCC", "ARIN", "LACNIC", "AFRINIC"]
LEGACY = {
    3: "General Electric Company",
    9: "Administered by ARIN",
    12: "AT&T Bell Laboratories",
    17: "Apple Computer Inc.",
    19: "Ford Motor Company",
    38: "PSINet, Inc.",
    44: "Amateur Radio Digital Communications",
    48: "Prudential Securities Inc.",
    56: "US Postal Service",
}
RESERVED = {
    0: "IANA - Local Identification",
    10: "IANA - Private Use",
    127: "IANA - Loopback",
}


def csv_line(*fields):
    buf = io.StringIO()
    csv.writer(buf, lineterminator="").writerow(fields)
    return buf.getvalue()


def iana(rng):
    rows = ["Prefix,Designation,Date,WHOIS,RDAP,Status [1],Note"]
    for octet in range(256):
        prefix = f"{octet:03d}/8"
        if octet in RESERVED:
            rows.append(f"{prefix},{RESERVED[octet]},1981-09,,,RESERVED,")
        elif 224 <= octet <= 239:
            rows.append(f"{prefix},Multicast,1981-09,,,RESERVED,")
        elif octet >= 240:
            rows.append(f"{prefix},Future use,1981-09,,,RESERVED,")
        elif octet in LEGACY:
            rows.append(csv_line(prefix, LEGACY[octet], "1991-05", "", "", "LEGACY", ""))
        elif octet in (58, 59):
            rows.append(f"{prefix},APNIC,2004-04,whois.apnic.net,https://rdap.apnic.net/,ALLOCATED,")
        else:
            rir = rng.choice(RIRS)
            year = rng.randrange(1993, 2011)
            host = rir.split()[0].lower()
            rows.append(f"{prefix},{rir},{year}-{rng.randrange(1, 13):02d},whois.{host}.net,,ALLOCATED,")
    return rows


def pfx2as():
    # AS 4538 stand-in: exactly two /8s (58/8 and 59/8) once overlaps are merged.
    lines = [
        "58.0.0.0\t9\t4538",
        "58.128.0.0\t9\t4538",
        "58.200.0.0\t16\t4538",
        "59.0.0.0\t10\t4538",
        "59.64.0.0\t10\t4538",
        "59.128.0.0\t9\t4538",
        "59.66.0.0\t16\t4538_4134",
        # another AS announcing a /24 inside the stand-in's space
        "58.200.1.0\t24\t9808",
        "1.0.0.0\t24\t13335",
        "1.1.1.0\t24\t13335",
        "8.8.8.0\t24\t15169",
        "8.8.4.0\t24\t15169",
        "202.96.0.0\t12\t4134",
        "218.0.0.0\t11\t4134",
        "61.128.0.0\t10\t4134",
        "211.136.0.0\t13\t9808",
        "193.0.0.0\t21\t3333",
        "100.64.10.0\t24\t4200000001",
    ]
    return lines


def links():
    return [
        "# a|b|rel: 0 peer, -1 provider-customer",
        "4134|4538|-1",
        "4134|9808|0",
        "4538|9808|0",
        "3333|4134|0",
        "13335|15169|0",
        "15169|4134|0",
        "4134|4200000001|-1",
    ]


def campus_flows(rng):
    # Records are keyed by the campus host: it is always dst_ip/dst_port, and
    # direction says which way the bytes went.
    rows = ["ts,src_ip,src_port,dst_ip,dst_port,proto,bytes,direction"]
    low = [22, 53, 80, 123, 443, 502, 993]
    middle = [1433, 3306, 3389, 5060, 8080, 8443, 27015, 31337]
    for i in range(4000):
        host = f"10.0.0.{rng.randrange(1, 255)}"
        remote = f"{rng.choice([58, 59, 93, 104, 142, 151, 172, 185])}.{rng.randrange(256)}.{rng.randrange(256)}.{rng.randrange(1, 255)}"
        pick = rng.random()
        if pick < 0.40:
            port = rng.choice(low)
        elif pick < 0.75:
            port = rng.randrange(49001, 65536)
        else:
            port = rng.choice(middle) if rng.random() < 0.6 else rng.randrange(1000, 49001)
        proto = "udp" if port in (53, 123, 5060) else "tcp"
        direction = "down" if rng.random() < 0.7 else "up"
        size = int(rng.lognormvariate(9, 2)) + 40
        rows.append(f"{T0 + i * 3},{remote},{rng.randrange(1024, 65536)},{host},{port},{proto},{size},{direction}")
    # traffic for other blocks, ignored by the campus histogram
    for i in range(500):
        src = f"192.168.{rng.randrange(256)}.{rng.randrange(1, 255)}"
        dst = f"{rng.randrange(1, 224)}.{rng.randrange(256)}.{rng.randrange(256)}.{rng.randrange(1, 255)}"
        rows.append(f"{T0 + i * 7},{src},{rng.randrange(1024, 65536)},{dst},{rng.choice(low)},tcp,{rng.randrange(40, 200000)},up")
    return rows


def ddos_events(rng):
    rows = ["ts,src_ip,dst_ip,kind"]
    botnets = [58, 59, 61, 111, 177, 186, 190, 201, 218, 222]
    times = [T0, T0 + 599] + [T0 + rng.randrange(600) for _ in range(4998)]
    # the attack ramps up then fades
    times += [T0 + 180 + int(rng.triangular(0, 240, 90)) for _ in range(1000)]
    times.sort()
    for t in times:
        a = rng.choice(botnets) if rng.random() < 0.8 else rng.randrange(1, 224)
        src = f"{a}.{rng.randrange(256)}.{rng.randrange(256)}.{rng.randrange(1, 255)}"
        rows.append(f"{t},{src},10.0.0.{rng.choice([10, 20, 80])},ddos")
    return rows


def write(name, lines):
    (OUT / name).write_text("\n".join(lines) + "\n")


def main():
    rng = random.Random(4538)
    write("iana.csv", iana(rng))
    write("pfx2as.txt", pfx2as())
    write("as-links.txt", links())
    write("flows.csv", campus_flows(rng))
    write("events.csv", ddos_events(rng))


if __name__ == "__main__":
    main()
