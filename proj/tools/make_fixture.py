#!/usr/bin/env python3
"""Generate the bundled CICIoT2023-shaped flow fixture.

The real CICIoT2023 shards are large and not redistributable here, so the
fixture is drawn from a seeded generative model that mimics the dataset's
schema (46 feature columns + label, CICIoT header order), its label names,
and the class imbalance of a typical random shard selection.  Six columns
(Drate, ece_flag_number, cwr_flag_number, Telnet, SMTP, IRC) are constant,
as they are in small CICIoT2023 subsamples.  A handful of rows carry
infinite/missing values and exact duplicates so the cleaning stage has work.

Usage: make_fixture.py OUT.csv [--seed N]
"""
import argparse
import csv
import math

import numpy as np

HEADER = [
    "flow_duration", "Header_Length", "Protocol Type", "Duration", "Rate", "Srate", "Drate",
    "fin_flag_number", "syn_flag_number", "rst_flag_number", "psh_flag_number",
    "ack_flag_number", "ece_flag_number", "cwr_flag_number", "ack_count", "syn_count",
    "fin_count", "urg_count", "rst_count", "HTTP", "HTTPS", "DNS", "Telnet", "SMTP", "SSH",
    "IRC", "TCP", "UDP", "DHCP", "ARP", "ICMP", "IPv", "LLC", "Tot sum", "Min", "Max", "AVG",
    "Std", "Tot size", "IAT", "Number", "Magnitue", "Radius", "Covariance", "Variance",
    "Weight", "label",
]

SUBCATEGORIES = {
    "DDoS": ["DDoS-ACK_Fragmentation", "DDoS-HTTP_Flood", "DDoS-ICMP_Flood",
             "DDoS-ICMP_Fragmentation", "DDoS-PSHACK_Flood", "DDoS-RSTFINFlood",
             "DDoS-SYN_Flood", "DDoS-SlowLoris", "DDoS-SynonymousIP_Flood",
             "DDoS-TCP_Flood", "DDoS-UDP_Flood", "DDoS-UDP_Fragmentation"],
    "DoS": ["DoS-HTTP_Flood", "DoS-SYN_Flood", "DoS-TCP_Flood", "DoS-UDP_Flood"],
    "Mirai": ["Mirai-greeth_flood", "Mirai-greip_flood", "Mirai-udpplain"],
    "Spoofing": ["DNS_Spoofing", "MITM-ArpSpoofing"],
    "Recon": ["Recon-HostDiscovery", "Recon-OSScan", "Recon-PingSweep", "Recon-PortScan",
              "VulnerabilityScan"],
    "Web": ["BrowserHijacking", "CommandInjection", "SqlInjection", "Uploading_Attack", "XSS",
            "Backdoor_Malware"],
    "Bruteforce": ["DictionaryBruteForce"],
    "Benign": ["BenignTraffic"],
}

CLASS_COUNTS = {"Benign": 2376, "DDoS": 1200, "DoS": 600, "Mirai": 400, "Spoofing": 250,
                "Recon": 200, "Web": 52, "Bruteforce": 28}

# Per-class location of the latent traffic descriptors.
#   iat      log10 inter-arrival time
#   rst      log1p rst_count
#   urg      log1p urg_count
#   hdr      log10 header length
#   dur      log10 flow duration
#   rate     log10 packet rate
#   size     mean packet length
#   var      packet-length variance ratio
#   https    probability of HTTPS
#   hard     fraction of rows drawn from the benign-like mimic profile
PROFILE = {
    "Benign":     dict(iat=7.92, rst=4.6, urg=3.4, hdr=4.6, dur=1.6, rate=1.2, size=420., var=0.80, https=0.55, hard=0.0),
    "DDoS":       dict(iat=7.55, rst=1.2, urg=0.5, hdr=3.2, dur=0.2, rate=3.0, size=80.,  var=0.10, https=0.05, hard=0.02),
    "DoS":        dict(iat=7.60, rst=1.6, urg=0.7, hdr=3.6, dur=0.4, rate=2.6, size=90.,  var=0.15, https=0.05, hard=0.03),
    "Mirai":      dict(iat=7.45, rst=0.8, urg=0.4, hdr=4.1, dur=0.3, rate=2.8, size=560., var=0.05, https=0.02, hard=0.02),
    "Spoofing":   dict(iat=7.70, rst=3.2, urg=2.2, hdr=4.3, dur=1.2, rate=1.5, size=300., var=0.60, https=0.35, hard=0.22),
    "Recon":      dict(iat=7.64, rst=2.6, urg=1.6, hdr=3.9, dur=0.9, rate=1.8, size=120., var=0.40, https=0.20, hard=0.14),
    "Web":        dict(iat=7.72, rst=3.6, urg=2.6, hdr=4.4, dur=1.4, rate=1.3, size=380., var=0.70, https=0.45, hard=0.28),
    "Bruteforce": dict(iat=7.71, rst=3.4, urg=2.4, hdr=4.4, dur=1.3, rate=1.4, size=350., var=0.65, https=0.40, hard=0.25),
}


FLAG_SHIFT = {"syn": 1.2, "ack": 0.8}
TTL_SHIFT = {"Benign": 0.0, "DDoS": 7.0, "DoS": 5.0, "Mirai": 9.0, "Spoofing": 3.0,
             "Recon": 4.0, "Web": 2.0, "Bruteforce": 2.0}


def split_counts(total, parts):
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def draw_rows(rng, cls, sub_index, n):
    prof = dict(PROFILE[cls])
    # Subcategories share the class profile with a small deterministic offset.
    jitter = np.random.default_rng(1000 * len(cls) + sub_index)
    for key, scale in (("iat", 0.04), ("rst", 0.25), ("urg", 0.2), ("hdr", 0.15),
                       ("dur", 0.15), ("rate", 0.2), ("size", 30.0)):
        prof[key] += jitter.normal(0.0, scale)

    benign = PROFILE["Benign"]
    hard = rng.random(n) < prof["hard"]

    def mix(key, pull=0.85):
        return np.where(hard, benign[key] * pull + prof[key] * (1 - pull), prof[key])

    iat = 10 ** (mix("iat", 0.55) + rng.normal(0, 0.07, n))
    rst = np.expm1(np.clip(mix("rst") + rng.normal(0, 0.9, n), 0, None))
    urg = np.expm1(np.clip(0.4 * mix("urg") + 1.2 + rng.normal(0, 0.9, n), 0, None))
    hdr = 10 ** (mix("hdr") + rng.normal(0, 0.55, n))
    dur = 10 ** (mix("dur") + rng.normal(0, 0.7, n))
    rate = 10 ** (mix("rate") + rng.normal(0, 0.6, n))

    tcp_p = 0.85 if cls not in ("Mirai",) and "UDP" not in SUBCATEGORIES[cls][sub_index] else 0.1
    tcp = (rng.random(n) < tcp_p).astype(float)
    udp = np.where(tcp > 0, 0.0, (rng.random(n) < 0.9).astype(float))
    icmp = np.where((tcp + udp) > 0, 0.0, 1.0)
    proto = np.where(tcp > 0, 6.0, np.where(udp > 0, 17.0, 1.0)) + rng.normal(0, 0.8, n)
    proto = np.clip(proto, 0, None)

    https_p = np.where(hard, benign["https"], prof["https"])
    https = (rng.random(n) < https_p).astype(float)
    http = np.where(https > 0, 0.0, (rng.random(n) < 0.15).astype(float))
    dns = (rng.random(n) < 0.05).astype(float)
    ssh = (rng.random(n) < (0.12 if cls == "Bruteforce" else 0.02)).astype(float)
    arp = (rng.random(n) < (0.25 if cls == "Spoofing" else 0.02)).astype(float)
    dhcp = (rng.random(n) < 0.01).astype(float)
    llc = (rng.random(n) < 0.97).astype(float)
    ipv = (rng.random(n) < 0.97).astype(float)

    # Flood traffic skews the SYN/ACK flag ratios; mimic rows look benign.
    flood = 0.0 if cls in ("Benign", "Spoofing", "Recon", "Web", "Bruteforce") else 1.0
    flags = {}
    for name, p in (("fin", 0.1), ("syn", 0.2), ("rst", 0.08), ("psh", 0.15), ("ack", 0.3)):
        a = 1.0 + 4 * p + np.where(hard, 0.0, flood * FLAG_SHIFT.get(name, 0.0))
        flags[name] = rng.beta(a, 5.0 - 4 * p, n)
    syn_count = rng.gamma(1.5, 0.6, n)
    fin_count = rng.gamma(1.2, 0.4, n)
    ack_count = rng.gamma(1.3, 0.3, n)

    size = np.clip(mix("size") + rng.normal(0, 160, n), 42, None)
    var = np.clip(mix("var") + rng.normal(0, 0.35, n), 0, 1)
    spread = np.abs(rng.normal(0, 60, n)) + 1
    min_len = np.clip(size - 2 * spread, 42, None)
    max_len = size + 2 * spread
    std = spread * (0.5 + var)
    number = np.round(np.clip(rng.normal(9.5, 1.5, n), 1, None))
    tot_sum = size * number * rng.uniform(0.9, 1.1, n)
    tot_size = size * rng.uniform(0.95, 1.05, n)
    magnitude = np.sqrt(2 * size) * rng.uniform(0.97, 1.03, n)
    radius = np.sqrt(2) * std * rng.uniform(0.9, 1.1, n)
    covariance = std ** 2 * rng.uniform(0.2, 1.2, n)
    weight = number * number * rng.uniform(0.8, 1.2, n)
    ttl = np.clip(rng.normal(64 + np.where(hard, 0.0, TTL_SHIFT[cls]), 12, n), 1, 255)

    zeros = np.zeros(n)
    cols = {
        "flow_duration": dur, "Header_Length": hdr, "Protocol Type": proto, "Duration": ttl,
        "Rate": rate, "Srate": rate * rng.uniform(0.98, 1.02, n), "Drate": zeros,
        "fin_flag_number": flags["fin"], "syn_flag_number": flags["syn"],
        "rst_flag_number": flags["rst"], "psh_flag_number": flags["psh"],
        "ack_flag_number": flags["ack"], "ece_flag_number": zeros, "cwr_flag_number": zeros,
        "ack_count": ack_count, "syn_count": syn_count, "fin_count": fin_count,
        "urg_count": urg, "rst_count": rst, "HTTP": http, "HTTPS": https, "DNS": dns,
        "Telnet": zeros, "SMTP": zeros, "SSH": ssh, "IRC": zeros, "TCP": tcp, "UDP": udp,
        "DHCP": dhcp, "ARP": arp, "ICMP": icmp, "IPv": ipv, "LLC": llc, "Tot sum": tot_sum,
        "Min": min_len, "Max": max_len, "AVG": size, "Std": std, "Tot size": tot_size,
        "IAT": iat, "Number": number, "Magnitue": magnitude, "Radius": radius,
        "Covariance": covariance, "Variance": var, "Weight": weight,
    }
    return [[cols[h][i] for h in HEADER[:-1]] for i in range(n)]


def fmt(v):
    if isinstance(v, str):
        return v
    if math.isnan(v):
        return ""
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(round(float(v), 6))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    ap.add_argument("--seed", type=int, default=2023)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    rows = []
    for cls, total in CLASS_COUNTS.items():
        subs = SUBCATEGORIES[cls]
        for idx, (sub, n) in enumerate(zip(subs, split_counts(total, len(subs)))):
            for values in draw_rows(rng, cls, idx, n):
                rows.append([fmt(v) for v in values] + [sub])
    order = rng.permutation(len(rows))
    rows = [rows[i] for i in order]

    # Dirty rows: non-finite rates, missing cells and exact duplicates.
    dirty = []
    for j in range(4):
        bad = list(rows[j])
        bad[HEADER.index("Rate")] = "inf"
        bad[HEADER.index("Srate")] = "inf"
        bad[HEADER.index("flow_duration")] = repr(1000.0 + j)
        dirty.append(bad)
    for j in range(2):
        bad = list(rows[10 + j])
        bad[HEADER.index("IAT")] = ""
        bad[HEADER.index("Header_Length")] = repr(77.0 + j)
        dirty.append(bad)
    for j in range(5):
        dirty.append(list(rows[100 + 37 * j]))
    for j, bad in enumerate(dirty):
        rows.insert(50 + 211 * j, bad)

    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        w.writerows(rows)


if __name__ == "__main__":
    main()
