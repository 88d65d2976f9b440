#!/usr/bin/env python3
"""Re-runs an oracle and checks that the constants frozen in C++ still match.

Usage: check_frozen.py param_count criteria.hpp
       check_frozen.py metrics criteria.cpp
"""
import re
import subprocess
import sys


def oracle_output(script, *args):
    return subprocess.run([sys.executable, script, *args], check=True, capture_output=True, text=True).stdout


def check_param_count(source):
    frozen = {m.group(1): int(m.group(2)) for m in re.finditer(r"kParams(\w+) = (\d+);", source)}
    names = {"emnet_only": "EmnetOnly", "emnet_mub": "EmnetMub", "emnet_mub_pixnet": "EmnetMubPixnet",
             "full": "Full", "full_directions1": "FullDirections1", "full_directions4": "FullDirections4"}
    bad = 0
    out = oracle_output("param_count.py", "--table").strip().splitlines()
    for row in out:
        name, value = row.split()
        want = frozen.get(names[name])
        if want != int(value):
            print(f"{name}: oracle {value}, frozen {want}")
            bad += 1
    return bad


def check_metrics(source):
    # Every non-zero pattern value the oracle prints must appear verbatim.
    bad = 0
    for line in oracle_output("metrics_oracle.py").splitlines():
        if line.startswith("gray"):
            continue
        for text in line.split("= ", 1)[1].split(", "):
            v = float(text)
            if v != 0 and f"{v:.17g}" not in source:
                print(f"oracle value {v:.17g} not frozen in C++")
                bad += 1
    return bad


def main():
    kind, path = sys.argv[1], sys.argv[2]
    source = open(path).read()
    bad = check_param_count(source) if kind == "param_count" else check_metrics(source)
    print("ok" if bad == 0 else f"{bad} mismatches")
    sys.exit(1 if bad else 0)


if __name__ == "__main__":
    main()
