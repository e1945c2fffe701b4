"""Hand-assembled classic pcap captures for tests (no parser code involved)."""

import struct


def ipv4_tcp_frame(payload: bytes, flags: int = 0x18, src=(10, 0, 0, 1), dst=(10, 0, 0, 2)) -> bytes:
    tcp = struct.pack("!HHIIBBHHH", 40000, 80, 1, 1, 5 << 4, flags, 65535, 0, 0)
    total = 20 + len(tcp) + len(payload)
    ip = struct.pack("!BBHHHBBH4B4B", 0x45, 0, total, 1, 0x4000, 64, 6, 0, *src, *dst)
    eth = b"\x00\x11\x22\x33\x44\x55" + b"\x66\x77\x88\x99\xaa\xbb" + b"\x08\x00"
    return eth + ip + tcp + payload


def udp_frame(payload: bytes) -> bytes:
    udp = struct.pack("!HHHH", 5353, 53, 8 + len(payload), 0)
    ip = struct.pack("!BBHHHBBH4B4B", 0x45, 0, 28 + len(payload), 1, 0, 64, 17, 0, 10, 0, 0, 1, 10, 0, 0, 2)
    return b"\x00" * 12 + b"\x08\x00" + ip + udp + payload


def pcap(frames, little_endian: bool = True, linktype: int = 1) -> bytes:
    e = "<" if little_endian else ">"
    out = [struct.pack(e + "IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, linktype)]
    for i, f in enumerate(frames):
        out.append(struct.pack(e + "IIII", 1_600_000_000 + i, 0, len(f), len(f)))
        out.append(f)
    return b"".join(out)


GET_PAYLOAD = (b"GET /favicon.ico HTTP/1.1\r\nConnection: close\r\n"
               b"User-Agent: Mozilla/5.0 (compatible; Nmap Scripting Engine; https://nmap.org/book/nse.html)\r\n"
               b"Host: 192.168.2.1\r\n\r\n")
# TLS application-data record, 21 of 50 bytes printable
TLS_PAYLOAD = b"\x17\x03\x03\x00\x2d" + bytes([0x80 + (i * 37) % 120 for i in range(25)]) + b"Zq7Lm2Xp9Rt4Vw6Ny8Bc"


def three_packet_capture(little_endian: bool = True) -> bytes:
    return pcap([ipv4_tcp_frame(GET_PAYLOAD), ipv4_tcp_frame(TLS_PAYLOAD), ipv4_tcp_frame(b"", flags=0x10)],
                little_endian)
