#!/usr/bin/env python3
"""Independent oracle for the golden vectors under tests/golden/.

SHA-256 comes from hashlib, AES-256-GCM from the `cryptography` package and
ECDSA P-256 from textbook affine arithmetic over Python integers (cross-checked
against `cryptography`'s verifier). None of this shares code with the Rust
implementation. Re-run only to regenerate the frozen files:

    python3 crates/core/tests/oracle/gen_vectors.py
"""

import hashlib
import json
import os

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import encode_dss_signature
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "golden")

# NIST P-256 domain parameters.
P = 0xFFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFF
A = P - 3
B = 0x5AC635D8AA3A93E7B3EBBD55769886BC651D06B0CC53B0F63BCE3C3E27D2604B
N = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551
GX = 0x6B17D1F2E12C4247F8BCE6E563A440F277037D812DEB33A0F4A13945D898C296
GY = 0x4FE342E2FE1A7F9B8EE7EB4A7C0F9E162BCE33576B315ECECBB6406837BF51F5


def point_add(p1, p2):
    if p1 is None:
        return p2
    if p2 is None:
        return p1
    x1, y1 = p1
    x2, y2 = p2
    if x1 == x2 and (y1 + y2) % P == 0:
        return None
    if p1 == p2:
        lam = (3 * x1 * x1 + A) * pow(2 * y1, -1, P) % P
    else:
        lam = (y2 - y1) * pow(x2 - x1, -1, P) % P
    x3 = (lam * lam - x1 - x2) % P
    return x3, (lam * (x1 - x3) - y1) % P


def scalar_mult(k, point):
    acc = None
    addend = point
    while k:
        if k & 1:
            acc = point_add(acc, addend)
        addend = point_add(addend, addend)
        k >>= 1
    return acc


def encode_point(pt):
    return "04" + pt[0].to_bytes(32, "big").hex() + pt[1].to_bytes(32, "big").hex()


def ecdsa_sign(d, k, msg):
    e = int.from_bytes(hashlib.sha256(msg).digest(), "big") % N
    r = scalar_mult(k, (GX, GY))[0] % N
    s = pow(k, -1, N) * (e + r * d) % N
    assert r != 0 and s != 0
    return r, s


def cross_check(d, msg, r, s):
    key = ec.derive_private_key(d, ec.SECP256R1())
    key.public_key().verify(encode_dss_signature(r, s), msg, ec.ECDSA(hashes.SHA256()))


def sha256_vectors():
    inputs = [
        b"",
        b"abc",
        b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq",
        b"The quick brown fox jumps over the lazy dog",
        bytes(64),
        bytes(range(256)) * 4,
    ]
    return [
        {"input_hex": m.hex(), "digest_hex": hashlib.sha256(m).hexdigest()}
        for m in inputs
    ]


def aes_gcm_vectors():
    cases = [
        ("empty", bytes(32), bytes(12), b"", b""),
        ("short", bytes(range(32)), bytes(range(12)), b"hello, grid", b""),
        (
            "block_aligned",
            hashlib.sha256(b"key-aligned").digest(),
            bytes.fromhex("cafebabefacedbaddecaf888"),
            bytes(range(64)),
            b"DESTBLK1\x01",
        ),
        (
            "unaligned",
            hashlib.sha256(b"key-unaligned").digest(),
            bytes.fromhex("000102030405060708090a0b"),
            bytes(range(61)),
            b"header",
        ),
        (
            "multi_kb",
            hashlib.sha256(b"key-multi").digest(),
            hashlib.sha256(b"iv").digest()[:12],
            bytes((i * 7 + 3) & 0xFF for i in range(3000)),
            b"",
        ),
    ]
    out = []
    for name, key, iv, pt, aad in cases:
        sealed = AESGCM(key).encrypt(iv, pt, aad)
        out.append(
            {
                "name": name,
                "key_hex": key.hex(),
                "iv_hex": iv.hex(),
                "aad_hex": aad.hex(),
                "plaintext_hex": pt.hex(),
                "ciphertext_hex": sealed[:-16].hex(),
                "tag_hex": sealed[-16:].hex(),
            }
        )
    return out


def ecdsa_vectors():
    cases = [
        (
            0xC9AFA9D845BA75166B5C215767B1D6934E50C3DB36E89B127B8A622B120F6721,
            0x0123456789ABCDEF0123456789ABCDEF0123456789ABCDEF0123456789ABCDEF,
            hashlib.sha256(b"0|1700000000000||").digest(),
        ),
        (
            0x1D6A4E8F2B3C5D7E9F0A1B2C3D4E5F60718293A4B5C6D7E8F90A1B2C3D4E5F6,
            0x7E2A1C9B8D3F4E5A6B7C8D9E0F1A2B3C4D5E6F708192A3B4C5D6E7F8091A2B3,
            hashlib.sha256(b"block payload").digest(),
        ),
        (1, N - 1, bytes(32)),
    ]
    out = []
    for d, k, msg in cases:
        r, s = ecdsa_sign(d, k, msg)
        cross_check(d, msg, r, s)
        out.append(
            {
                "private_hex": d.to_bytes(32, "big").hex(),
                "public_hex": encode_point(scalar_mult(d, (GX, GY))),
                "nonce_hex": k.to_bytes(32, "big").hex(),
                "message_hex": msg.hex(),
                "signature_hex": r.to_bytes(32, "big").hex() + s.to_bytes(32, "big").hex(),
            }
        )
    return out


def public_key_vectors():
    scalars = [1, 2, 3, N - 1, 0x2A, int.from_bytes(hashlib.sha256(b"admin").digest(), "big") % N]
    return [
        {"private_hex": d.to_bytes(32, "big").hex(), "public_hex": encode_point(scalar_mult(d, (GX, GY)))}
        for d in scalars
    ]


def chain_vectors():
    genesis = b"0|1700000000000||"
    genesis_hash = hashlib.sha256(genesis).hexdigest()
    cid = "sha256:" + hashlib.sha256(b"abc").hexdigest()
    block1 = f"1|1700000000123|{genesis_hash}|{cid}".encode()
    return {
        "genesis_preimage": genesis.decode(),
        "genesis_hash": genesis_hash,
        "block1_preimage": block1.decode(),
        "block1_hash": hashlib.sha256(block1).hexdigest(),
        "abc_cid": cid,
    }


def main():
    os.makedirs(OUT, exist_ok=True)
    files = {
        "sha256.json": sha256_vectors(),
        "aes_gcm.json": aes_gcm_vectors(),
        "ecdsa_p256.json": ecdsa_vectors(),
        "p256_public_keys.json": public_key_vectors(),
        "chain.json": chain_vectors(),
    }
    for name, body in files.items():
        with open(os.path.join(OUT, name), "w") as fh:
            json.dump(body, fh, indent=2)
            fh.write("\n")


if __name__ == "__main__":
    main()
